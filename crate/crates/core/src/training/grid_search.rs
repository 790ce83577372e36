//! Exhaustive hyperparameter search over grid size, learning rate and epochs.

use std::collections::HashMap;
use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::TrainError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GridSearchSpace {
    pub grid_sizes: Vec<usize>,
    pub learning_rates: Vec<f64>,
    pub epoch_values: Vec<usize>,
}

impl Default for GridSearchSpace {
    fn default() -> Self {
        Self {
            grid_sizes: (4..=19).collect(),
            learning_rates: vec![0.001, 0.01, 0.05, 0.1],
            epoch_values: linspace_epochs(500, 1500, 10),
        }
    }
}

/// `count` evenly spaced integers from `lo` to `hi` inclusive, truncated
/// toward zero (500, 611, 722, ... for the default range).
pub fn linspace_epochs(lo: usize, hi: usize, count: usize) -> Vec<usize> {
    if count == 1 {
        return vec![lo];
    }
    (0..count)
        .map(|i| {
            let v = lo as f64 + (hi - lo) as f64 * i as f64 / (count - 1) as f64;
            // Guard against 1499.9999 style representation error.
            (v + 1e-9).floor() as usize
        })
        .collect()
}

impl GridSearchSpace {
    pub fn validate(&self) -> Result<(), TrainError> {
        if self.grid_sizes.is_empty() || self.learning_rates.is_empty() || self.epoch_values.is_empty() {
            return Err(TrainError::InvalidConfig("search space lists must be non-empty".into()));
        }
        if self.grid_sizes.contains(&0) || self.epoch_values.contains(&0) {
            return Err(TrainError::InvalidConfig("grid sizes and epochs must be positive".into()));
        }
        if self.learning_rates.iter().any(|r| !(*r > 0.0)) {
            return Err(TrainError::InvalidConfig("learning rates must be positive".into()));
        }
        Ok(())
    }

    /// Cartesian product, grid size outermost, then learning rate, then epochs.
    pub fn cells(&self) -> Vec<GridCell> {
        let mut out = Vec::with_capacity(self.len());
        for &grid_size in &self.grid_sizes {
            for &learning_rate in &self.learning_rates {
                for &epochs in &self.epoch_values {
                    out.push(GridCell {
                        grid_size,
                        learning_rate,
                        epochs,
                    });
                }
            }
        }
        out
    }

    pub fn len(&self) -> usize {
        self.grid_sizes.len() * self.learning_rates.len() * self.epoch_values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridCell {
    pub grid_size: usize,
    pub learning_rate: f64,
    pub epochs: usize,
}

impl GridCell {
    fn key(&self) -> (usize, u64, usize) {
        (self.grid_size, self.learning_rate.to_bits(), self.epochs)
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Per-cell seed: SplitMix64 folded over the base seed, `G`, the bit pattern
/// of `eta` and the epoch count.
pub fn derive_seed(base_seed: u64, cell: &GridCell) -> u64 {
    let mut h = splitmix64(base_seed);
    for v in [cell.grid_size as u64, cell.learning_rate.to_bits(), cell.epochs as u64] {
        h = splitmix64(h ^ v);
    }
    h
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RowStatus {
    Ok,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridRow {
    pub cell: GridCell,
    pub seed: u64,
    /// NaN for failed rows.
    pub val_error: f64,
    pub status: RowStatus,
}

/// Pearson correlation of validation error with each hyperparameter over the
/// successful rows; `None` when a column has zero variance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Correlations {
    pub grid_size: Option<f64>,
    pub learning_rate: Option<f64>,
    pub epochs: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridSearchReport {
    pub rows: Vec<GridRow>,
    pub best: Option<GridRow>,
    pub correlations: Correlations,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSearchSummary {
    pub version: u32,
    pub best: Option<GridRow>,
    pub correlations: Correlations,
    pub rows: usize,
    pub failed: usize,
}

pub fn pearson(xs: &[f64], ys: &[f64]) -> Option<f64> {
    let n = xs.len();
    if n < 2 || n != ys.len() {
        return None;
    }
    let mx = xs.iter().sum::<f64>() / n as f64;
    let my = ys.iter().sum::<f64>() / n as f64;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (x, y) in xs.iter().zip(ys) {
        sxy += (x - mx) * (y - my);
        sxx += (x - mx) * (x - mx);
        syy += (y - my) * (y - my);
    }
    if sxx == 0.0 || syy == 0.0 {
        return None;
    }
    Some((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

impl GridSearchReport {
    pub fn from_rows(rows: Vec<GridRow>) -> Self {
        let ok: Vec<&GridRow> = rows.iter().filter(|r| r.status == RowStatus::Ok).collect();
        let errs: Vec<f64> = ok.iter().map(|r| r.val_error).collect();
        let col = |f: fn(&GridRow) -> f64| ok.iter().map(|r| f(r)).collect::<Vec<f64>>();
        let correlations = Correlations {
            grid_size: pearson(&col(|r| r.cell.grid_size as f64), &errs),
            learning_rate: pearson(&col(|r| r.cell.learning_rate), &errs),
            epochs: pearson(&col(|r| r.cell.epochs as f64), &errs),
        };
        let best = ok
            .iter()
            .fold(None::<&GridRow>, |b, r| match b {
                Some(b) if b.val_error <= r.val_error => Some(b),
                _ => Some(r),
            })
            .cloned();
        Self {
            rows,
            best,
            correlations,
        }
    }

    pub fn summary(&self) -> GridSearchSummary {
        GridSearchSummary {
            version: 1,
            best: self.best.clone(),
            correlations: self.correlations.clone(),
            rows: self.rows.len(),
            failed: self.rows.iter().filter(|r| r.status == RowStatus::Failed).count(),
        }
    }

    /// CSV `G,eta,epochs,val_error,status`.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("G,eta,epochs,val_error,status\n");
        for r in &self.rows {
            let _ = writeln!(s, "{}", row_line(r));
        }
        s
    }
}

pub(crate) fn row_line(r: &GridRow) -> String {
    let status = match r.status {
        RowStatus::Ok => "ok",
        RowStatus::Failed => "failed",
    };
    format!(
        "{},{:?},{},{:?},{}",
        r.cell.grid_size, r.cell.learning_rate, r.cell.epochs, r.val_error, status
    )
}

/// Parses rows written by [`GridSearchReport::to_csv`]; seeds are re-derived
/// from `base_seed`.
pub fn parse_rows(csv: &str, base_seed: u64) -> Result<Vec<GridRow>, TrainError> {
    let mut rows = Vec::new();
    for (n, line) in csv.lines().enumerate() {
        if n == 0 && line.starts_with('G') || line.trim().is_empty() {
            continue;
        }
        let f: Vec<&str> = line.split(',').collect();
        let bad = || TrainError::InvalidConfig(format!("malformed grid-search row {}: '{line}'", n + 1));
        if f.len() != 5 {
            return Err(bad());
        }
        let cell = GridCell {
            grid_size: f[0].parse().map_err(|_| bad())?,
            learning_rate: f[1].parse().map_err(|_| bad())?,
            epochs: f[2].parse().map_err(|_| bad())?,
        };
        let status = match f[4].trim() {
            "ok" => RowStatus::Ok,
            "failed" => RowStatus::Failed,
            _ => return Err(bad()),
        };
        rows.push(GridRow {
            seed: derive_seed(base_seed, &cell),
            cell,
            val_error: f[3].parse().map_err(|_| bad())?,
            status,
        });
    }
    Ok(rows)
}

/// Runs `evaluate(cell, derived_seed)` for every cell. Divergence and other
/// per-cell errors become failed rows.
pub fn grid_search<F>(space: &GridSearchSpace, base_seed: u64, jobs: usize, evaluate: F) -> Result<GridSearchReport, TrainError>
where
    F: Fn(&GridCell, u64) -> Result<f64, TrainError> + Sync,
{
    grid_search_resume(space, base_seed, jobs, &[], |_| {}, evaluate)
}

/// Like [`grid_search`], reusing rows in `done` whose cell matches, and
/// calling `on_row` as each new row completes (in completion order).
pub fn grid_search_resume<F, C>(
    space: &GridSearchSpace,
    base_seed: u64,
    jobs: usize,
    done: &[GridRow],
    on_row: C,
    evaluate: F,
) -> Result<GridSearchReport, TrainError>
where
    F: Fn(&GridCell, u64) -> Result<f64, TrainError> + Sync,
    C: Fn(&GridRow) + Sync,
{
    space.validate()?;
    let known: HashMap<_, &GridRow> = done.iter().map(|r| (r.cell.key(), r)).collect();
    let run = |cell: &GridCell| -> GridRow {
        if let Some(r) = known.get(&cell.key()) {
            return (*r).clone();
        }
        let seed = derive_seed(base_seed, cell);
        let row = match evaluate(cell, seed) {
            Ok(e) if e.is_finite() => GridRow {
                cell: *cell,
                seed,
                val_error: e,
                status: RowStatus::Ok,
            },
            _ => GridRow {
                cell: *cell,
                seed,
                val_error: f64::NAN,
                status: RowStatus::Failed,
            },
        };
        on_row(&row);
        row
    };
    let cells = space.cells();
    let rows: Vec<GridRow> = if jobs <= 1 {
        cells.iter().map(run).collect()
    } else {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build()
            .map_err(|e| TrainError::InvalidConfig(e.to_string()))?;
        pool.install(|| cells.par_iter().map(run).collect())
    };
    Ok(GridSearchReport::from_rows(rows))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_space_matches_ranges() {
        let s = GridSearchSpace::default();
        assert_eq!(s.len(), 640);
        assert_eq!(
            s.epoch_values,
            vec![500, 611, 722, 833, 944, 1055, 1166, 1277, 1388, 1500]
        );
        assert_eq!(s.cells().len(), 640);
    }

    #[test]
    fn single_cell_report() {
        let s = GridSearchSpace {
            grid_sizes: vec![5],
            learning_rates: vec![0.1],
            epoch_values: vec![10],
        };
        let r = grid_search(&s, 0, 1, |_, _| Ok(0.25)).unwrap();
        assert_eq!(r.rows.len(), 1);
        assert_eq!(r.best.as_ref().unwrap(), &r.rows[0]);
        assert_eq!(r.correlations.learning_rate, None);
    }

    #[test]
    fn failures_are_recorded_and_excluded_from_best() {
        let s = GridSearchSpace {
            grid_sizes: vec![4, 5],
            learning_rates: vec![0.01, 0.1],
            epoch_values: vec![10],
        };
        let r = grid_search(&s, 1, 2, |c, _| {
            if c.learning_rate > 0.05 && c.grid_size == 5 {
                Err(TrainError::Divergence { epoch: 3, history: vec![] })
            } else {
                Ok(c.grid_size as f64 * c.learning_rate)
            }
        })
        .unwrap();
        assert_eq!(r.rows.len(), 4);
        assert_eq!(r.summary().failed, 1);
        let best = r.best.unwrap();
        assert_eq!((best.cell.grid_size, best.cell.learning_rate), (4, 0.01));
    }

    #[test]
    fn seeds_differ_per_cell_and_parallel_matches_serial() {
        let s = GridSearchSpace {
            grid_sizes: vec![4, 8, 12],
            learning_rates: vec![0.01, 0.1],
            epoch_values: vec![5, 9],
        };
        let f = |c: &GridCell, seed: u64| Ok((seed % 1000) as f64 * 1e-6 + c.learning_rate);
        let a = grid_search(&s, 7, 1, f).unwrap();
        let b = grid_search(&s, 7, 4, f).unwrap();
        assert_eq!(a, b);
        let mut seeds: Vec<u64> = a.rows.iter().map(|r| r.seed).collect();
        seeds.sort_unstable();
        seeds.dedup();
        assert_eq!(seeds.len(), a.rows.len());
        assert!(a.correlations.learning_rate.unwrap() > 0.0);
    }

    #[test]
    fn csv_rows_round_trip_for_resume() {
        let s = GridSearchSpace {
            grid_sizes: vec![4, 6],
            learning_rates: vec![0.05],
            epoch_values: vec![3],
        };
        let r = grid_search(&s, 3, 1, |c, _| Ok(1.0 / c.grid_size as f64)).unwrap();
        let parsed = parse_rows(&r.to_csv(), 3).unwrap();
        assert_eq!(parsed, r.rows);
        let resumed = grid_search_resume(&s, 3, 1, &parsed[..1], |_| {}, |c, _| Ok(1.0 / c.grid_size as f64)).unwrap();
        assert_eq!(resumed, r);
    }

    #[test]
    fn pearson_sanity() {
        assert!((pearson(&[1.0, 2.0, 3.0], &[2.0, 4.0, 6.0]).unwrap() - 1.0).abs() < 1e-12);
        assert!((pearson(&[1.0, 2.0, 3.0], &[3.0, 2.0, 1.0]).unwrap() + 1.0).abs() < 1e-12);
        assert_eq!(pearson(&[1.0, 1.0], &[0.0, 1.0]), None);
    }
}
