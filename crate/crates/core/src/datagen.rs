//! Synthetic datasets: the inverted-U arousal law, a sinusoid, the
//! Mackey-Glass delay equation, lag embedding and splitting.
//!
//! Every random draw comes from a `ChaCha8Rng` seeded with
//! `seed_from_u64(seed)`. Uniform reals use the top 53 bits of `next_u64`
//! (`(u >> 11) * 2^-53`, in `[0, 1)`). Gaussian noise uses Box-Muller on two
//! consecutive uniforms `u1, u2`: `sqrt(-2 ln(1 - u1)) * cos(2 pi u2)`. For a
//! noisy sample the input draw comes first, then the two noise uniforms.

use rand::seq::SliceRandom;
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DataError {
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error("integration became non-finite at step {step}")]
    Instability { step: usize },
    #[error("series of length {len} too short for lag {lag}")]
    SeriesTooShort { len: usize, lag: usize },
    #[error("split fractions must be positive and sum to 1, got {0:?}")]
    InvalidFractions([f64; 3]),
    #[error("dataset shape error: {0}")]
    Shape(String),
    #[error("parse error: {0}")]
    Parse(String),
}

/// Where a dataset came from; enough to regenerate it bit-identically.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "generator", rename_all = "snake_case")]
pub enum Provenance {
    Yerkes { n: usize, noise_sd: f64, seed: u64 },
    Sine { n: usize, frequency: f64, seed: u64 },
    MackeyGlass { params: MackeyGlassParams, lag: usize },
    Split {
        parent: Box<Provenance>,
        fractions: [f64; 3],
        shuffle: bool,
        seed: u64,
        part: SplitPart,
    },
    /// Loaded from outside; cannot be regenerated.
    External { name: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitPart {
    Train,
    Val,
    Test,
    /// Train and validation parts concatenated.
    TrainVal,
}

impl Provenance {
    /// Regenerates the described dataset.
    pub fn regenerate(&self) -> Result<Dataset, DataError> {
        match self {
            Provenance::Yerkes { n, noise_sd, seed } => gen_yerkes(*n, *noise_sd, *seed),
            Provenance::Sine { n, frequency, seed } => gen_sine(*n, *frequency, *seed),
            Provenance::MackeyGlass { params, lag } => mackey_glass_dataset(params, *lag),
            Provenance::Split {
                parent,
                fractions,
                shuffle,
                seed,
                part,
            } => {
                let data = parent.regenerate()?;
                let splits = split_dataset(&data, *fractions, *shuffle, *seed)?;
                Ok(splits.part(*part))
            }
            Provenance::External { name } => Err(DataError::InvalidParams(format!(
                "external dataset '{name}' cannot be regenerated"
            ))),
        }
    }

    /// The generator at the root of a split chain.
    pub fn root(&self) -> &Provenance {
        match self {
            Provenance::Split { parent, .. } => parent.root(),
            other => other,
        }
    }

    /// Noise-free target law of the root generator, when it has noise.
    pub fn noiseless_law(&self) -> Option<fn(f64) -> f64> {
        match self.root() {
            Provenance::Yerkes { .. } => Some(yerkes_law),
            _ => None,
        }
    }
}

/// Supervised pairs with their provenance.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub inputs: Vec<Vec<f64>>,
    pub targets: Vec<Vec<f64>>,
    pub provenance: Provenance,
}

impl Dataset {
    pub fn new(inputs: Vec<Vec<f64>>, targets: Vec<Vec<f64>>, provenance: Provenance) -> Result<Self, DataError> {
        if inputs.len() != targets.len() {
            return Err(DataError::Shape(format!(
                "{} inputs vs {} targets",
                inputs.len(),
                targets.len()
            )));
        }
        if let (Some(x0), Some(y0)) = (inputs.first(), targets.first()) {
            let (dx, dy) = (x0.len(), y0.len());
            if inputs.iter().any(|x| x.len() != dx) || targets.iter().any(|y| y.len() != dy) {
                return Err(DataError::Shape("ragged rows".into()));
            }
        }
        Ok(Self {
            inputs,
            targets,
            provenance,
        })
    }

    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }

    pub fn input_dim(&self) -> usize {
        self.inputs.first().map_or(0, Vec::len)
    }

    pub fn target_dim(&self) -> usize {
        self.targets.first().map_or(0, Vec::len)
    }

    /// Targets with generator noise removed where the law is known
    /// (single-input datasets only); otherwise the observed targets.
    pub fn noiseless_targets(&self) -> Vec<Vec<f64>> {
        match self.provenance.noiseless_law() {
            Some(f) if self.input_dim() == 1 => self.inputs.iter().map(|x| vec![f(x[0])]).collect(),
            _ => self.targets.clone(),
        }
    }

    /// CSV with header `x_0,...,x_{k-1},y_0,...`.
    pub fn to_csv(&self) -> String {
        let mut s = String::new();
        let header: Vec<String> = (0..self.input_dim())
            .map(|i| format!("x_{i}"))
            .chain((0..self.target_dim()).map(|i| format!("y_{i}")))
            .collect();
        s.push_str(&header.join(","));
        s.push('\n');
        for (x, y) in self.inputs.iter().zip(&self.targets) {
            let row: Vec<String> = x.iter().chain(y).map(|v| format!("{v:?}")).collect();
            s.push_str(&row.join(","));
            s.push('\n');
        }
        s
    }

    /// Parses [`Dataset::to_csv`] output.
    pub fn from_csv(text: &str, provenance: Provenance) -> Result<Self, DataError> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let header = lines.next().ok_or_else(|| DataError::Parse("empty file".into()))?;
        let cols: Vec<&str> = header.split(',').map(str::trim).collect();
        let n_in = cols.iter().take_while(|c| c.starts_with("x_")).count();
        if cols[n_in..].iter().any(|c| !c.starts_with("y_")) || n_in == cols.len() {
            return Err(DataError::Parse(format!("unexpected header '{header}'")));
        }
        let mut inputs = Vec::new();
        let mut targets = Vec::new();
        for (ln, line) in lines.enumerate() {
            let vals: Result<Vec<f64>, _> = line.split(',').map(|v| v.trim().parse::<f64>()).collect();
            let vals = vals.map_err(|e| DataError::Parse(format!("row {}: {e}", ln + 1)))?;
            if vals.len() != cols.len() {
                return Err(DataError::Parse(format!(
                    "row {} has {} fields, expected {}",
                    ln + 1,
                    vals.len(),
                    cols.len()
                )));
            }
            inputs.push(vals[..n_in].to_vec());
            targets.push(vals[n_in..].to_vec());
        }
        Self::new(inputs, targets, provenance)
    }

    fn subset(&self, idx: &[usize], provenance: Provenance) -> Dataset {
        Dataset {
            inputs: idx.iter().map(|&i| self.inputs[i].clone()).collect(),
            targets: idx.iter().map(|&i| self.targets[i].clone()).collect(),
            provenance,
        }
    }
}

/// Sidecar metadata written next to a dataset CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetMeta {
    pub version: u32,
    pub provenance: Provenance,
    pub rows: usize,
    pub n_inputs: usize,
    pub n_targets: usize,
}

impl DatasetMeta {
    pub fn of(data: &Dataset) -> Self {
        Self {
            version: 1,
            provenance: data.provenance.clone(),
            rows: data.len(),
            n_inputs: data.input_dim(),
            n_targets: data.target_dim(),
        }
    }
}

/// Seeded uniform/normal stream documented in the module header.
pub struct SampleStream {
    rng: ChaCha8Rng,
}

impl SampleStream {
    pub fn new(seed: u64) -> Self {
        Self {
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    /// Uniform in `[0, 1)`.
    pub fn unit(&mut self) -> f64 {
        (self.rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    pub fn uniform(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.unit()
    }

    pub fn standard_normal(&mut self) -> f64 {
        let u1 = self.unit();
        let u2 = self.unit();
        (-2.0 * (1.0 - u1).ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
    }
}

/// `1.6 exp(-4 x^2) - 1`.
pub fn yerkes_law(x: f64) -> f64 {
    1.6 * (-4.0 * x * x).exp() - 1.0
}

/// Inverted-U response with additive Gaussian noise, `x ~ U[-1, 1]`.
pub fn gen_yerkes(n: usize, noise_sd: f64, seed: u64) -> Result<Dataset, DataError> {
    if n == 0 {
        return Err(DataError::InvalidParams("n must be at least 1".into()));
    }
    if !(noise_sd >= 0.0) || !noise_sd.is_finite() {
        return Err(DataError::InvalidParams(format!("noise_sd {noise_sd} must be >= 0")));
    }
    let mut stream = SampleStream::new(seed);
    let mut inputs = Vec::with_capacity(n);
    let mut targets = Vec::with_capacity(n);
    for _ in 0..n {
        let x = stream.uniform(-1.0, 1.0);
        let eps = stream.standard_normal() * noise_sd;
        inputs.push(vec![x]);
        targets.push(vec![yerkes_law(x) + eps]);
    }
    Dataset::new(inputs, targets, Provenance::Yerkes { n, noise_sd, seed })
}

/// `y = sin(frequency * x)`, `x ~ U[-1, 1]`, noiseless.
pub fn gen_sine(n: usize, frequency: f64, seed: u64) -> Result<Dataset, DataError> {
    if n == 0 {
        return Err(DataError::InvalidParams("n must be at least 1".into()));
    }
    let mut stream = SampleStream::new(seed);
    let mut inputs = Vec::with_capacity(n);
    let mut targets = Vec::with_capacity(n);
    for _ in 0..n {
        let x = stream.uniform(-1.0, 1.0);
        inputs.push(vec![x]);
        targets.push(vec![(frequency * x).sin()]);
    }
    Dataset::new(inputs, targets, Provenance::Sine { n, frequency, seed })
}

/// Mackey-Glass integration settings; `total_steps` and `washout` count
/// unit-time samples.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MackeyGlassParams {
    pub beta: f64,
    pub gamma: f64,
    pub exponent: f64,
    pub delay: f64,
    pub dt: f64,
    pub total_steps: usize,
    pub washout: usize,
    pub x0: f64,
}

impl Default for MackeyGlassParams {
    fn default() -> Self {
        Self {
            beta: 0.2,
            gamma: 0.1,
            exponent: 10.0,
            delay: 17.0,
            dt: 0.1,
            total_steps: 2000,
            washout: 500,
            x0: 1.2,
        }
    }
}

fn integer_ratio(num: f64, den: f64) -> Option<usize> {
    let r = num / den;
    let rounded = r.round();
    if rounded >= 1.0 && (r - rounded).abs() < 1e-9 * rounded.max(1.0) {
        Some(rounded as usize)
    } else {
        None
    }
}

impl MackeyGlassParams {
    pub fn validate(&self) -> Result<(), DataError> {
        let bad = |m: String| Err(DataError::InvalidParams(m));
        if !(self.dt > 0.0) || !(self.delay > 0.0) {
            return bad("dt and delay must be positive".into());
        }
        if integer_ratio(self.delay, self.dt).is_none() {
            return bad(format!("dt {} does not divide delay {}", self.dt, self.delay));
        }
        if integer_ratio(1.0, self.dt).is_none() {
            return bad(format!("dt {} does not divide the unit sampling interval", self.dt));
        }
        if self.total_steps <= self.washout {
            return bad(format!(
                "total_steps {} must exceed washout {}",
                self.total_steps, self.washout
            ));
        }
        if !(self.x0 > 0.0) {
            return bad(format!("x0 {} must be positive", self.x0));
        }
        Ok(())
    }

    fn rhs(&self, x: f64, delayed: f64) -> f64 {
        self.beta * delayed / (1.0 + delayed.powf(self.exponent)) - self.gamma * x
    }
}

/// Integrates the delay equation with classical RK4, holding the delayed term
/// fixed across each `dt` step. History before `t = 0` is the constant `x0`.
/// Returns `x(t)` at integer times `washout..total_steps`.
pub fn gen_mackey_glass(params: &MackeyGlassParams) -> Result<Vec<f64>, DataError> {
    params.validate()?;
    let delay_steps = integer_ratio(params.delay, params.dt).unwrap();
    let per_unit = integer_ratio(1.0, params.dt).unwrap();
    let dt = params.dt;
    // history[s % delay_steps] holds x at step s - delay_steps when read at step s.
    let mut history = vec![params.x0; delay_steps];
    let mut x = params.x0;
    let mut out = Vec::with_capacity(params.total_steps - params.washout);
    if params.washout == 0 {
        out.push(x);
    }
    let n_steps = (params.total_steps - 1) * per_unit;
    for s in 0..n_steps {
        let slot = s % delay_steps;
        let xd = history[slot];
        let k1 = params.rhs(x, xd);
        let k2 = params.rhs(x + 0.5 * dt * k1, xd);
        let k3 = params.rhs(x + 0.5 * dt * k2, xd);
        let k4 = params.rhs(x + dt * k3, xd);
        history[slot] = x;
        x += dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        if !x.is_finite() {
            return Err(DataError::Instability { step: s + 1 });
        }
        if (s + 1) % per_unit == 0 && (s + 1) / per_unit >= params.washout {
            out.push(x);
        }
    }
    Ok(out)
}

/// Windows of `lag` consecutive values predicting the next one.
pub fn lag_embed(series: &[f64], lag: usize) -> Result<Dataset, DataError> {
    if lag == 0 || series.len() <= lag {
        return Err(DataError::SeriesTooShort {
            len: series.len(),
            lag,
        });
    }
    let inputs = series.windows(lag).take(series.len() - lag).map(<[f64]>::to_vec).collect();
    let targets = series[lag..].iter().map(|v| vec![*v]).collect();
    Dataset::new(
        inputs,
        targets,
        Provenance::External {
            name: "lag_embed".into(),
        },
    )
}

pub fn mackey_glass_dataset(params: &MackeyGlassParams, lag: usize) -> Result<Dataset, DataError> {
    let series = gen_mackey_glass(params)?;
    let mut d = lag_embed(&series, lag)?;
    d.provenance = Provenance::MackeyGlass {
        params: params.clone(),
        lag,
    };
    Ok(d)
}

/// Train, validation and test parts.
#[derive(Debug, Clone, PartialEq)]
pub struct Splits {
    pub train: Dataset,
    pub val: Dataset,
    pub test: Dataset,
}

impl Splits {
    pub fn part(&self, part: SplitPart) -> Dataset {
        match part {
            SplitPart::Train => self.train.clone(),
            SplitPart::Val => self.val.clone(),
            SplitPart::Test => self.test.clone(),
            SplitPart::TrainVal => {
                let mut d = self.train.clone();
                d.inputs.extend(self.val.inputs.iter().cloned());
                d.targets.extend(self.val.targets.iter().cloned());
                if let Provenance::Split { part, .. } = &mut d.provenance {
                    *part = SplitPart::TrainVal;
                }
                d
            }
        }
    }
}

/// Part sizes: each part gets `floor(f * n)`, then the leftover items go one
/// at a time to the parts with the largest fractional remainders (earlier
/// part wins ties).
pub fn split_sizes(n: usize, fractions: [f64; 3]) -> Result<[usize; 3], DataError> {
    let sum: f64 = fractions.iter().sum();
    if fractions.iter().any(|f| !(*f > 0.0)) || (sum - 1.0).abs() > 1e-9 {
        return Err(DataError::InvalidFractions(fractions));
    }
    let exact: Vec<f64> = fractions.iter().map(|f| f * n as f64).collect();
    let mut sizes = [0usize; 3];
    for (s, e) in sizes.iter_mut().zip(&exact) {
        *s = e.floor() as usize;
    }
    let mut leftover = n - sizes.iter().sum::<usize>();
    let mut order: Vec<usize> = (0..3).collect();
    order.sort_by(|&a, &b| {
        let ra = exact[a] - exact[a].floor();
        let rb = exact[b] - exact[b].floor();
        rb.partial_cmp(&ra).unwrap().then(a.cmp(&b))
    });
    for &i in order.iter().cycle() {
        if leftover == 0 {
            break;
        }
        sizes[i] += 1;
        leftover -= 1;
    }
    Ok(sizes)
}

/// Disjoint, exhaustive three-way split. With `shuffle = false` each part
/// keeps chronological order and parts are consecutive.
pub fn split_dataset(data: &Dataset, fractions: [f64; 3], shuffle: bool, seed: u64) -> Result<Splits, DataError> {
    let sizes = split_sizes(data.len(), fractions)?;
    let mut idx: Vec<usize> = (0..data.len()).collect();
    if shuffle {
        idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    }
    let prov = |part| Provenance::Split {
        parent: Box::new(data.provenance.clone()),
        fractions,
        shuffle,
        seed,
        part,
    };
    let (a, rest) = idx.split_at(sizes[0]);
    let (b, c) = rest.split_at(sizes[1]);
    Ok(Splits {
        train: data.subset(a, prov(SplitPart::Train)),
        val: data.subset(b, prov(SplitPart::Val)),
        test: data.subset(c, prov(SplitPart::Test)),
    })
}
