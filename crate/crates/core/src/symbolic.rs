//! Closed-form recovery of learned edge curves.
//!
//! A sampled edge curve is fitted with four candidate families. Linear
//! families use least squares directly. The gaussian and sinusoid families
//! scan their nonlinear rate `b` over 200 points in `(0, 10]`, solve the
//! remaining coefficients by least squares at each point, and refine `b` by
//! golden-section search around the best scan point. Fits are ranked by
//! `r^2 - 0.001 * coefficient_count`, ties broken by form name.

use std::cmp::Ordering;
use std::fmt::Write as _;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::edge::EdgeFunction;

pub const COMPLEXITY_PENALTY: f64 = 0.001;
pub const MAX_POLY_DEGREE: usize = 5;
const SCAN_POINTS: usize = 200;
const SCAN_MAX: f64 = 10.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SymbolicError {
    #[error("need at least 10 points, got {0}")]
    TooFewPoints(usize),
    #[error("sample abscissae have zero span")]
    ZeroSpan,
    #[error("curve needs at least 2 samples")]
    TooFewSamples,
    #[error("non-finite curve values")]
    NonFinite,
}

/// A learned edge sampled on a uniform abscissa.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EdgeCurve {
    pub xs: Vec<f64>,
    pub ys: Vec<f64>,
    /// `(target, source)` of the sampled edge.
    pub edge: (usize, usize),
}

impl EdgeCurve {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("x,phi\n");
        for (x, y) in self.xs.iter().zip(&self.ys) {
            let _ = writeln!(s, "{x:?},{y:?}");
        }
        s
    }
}

/// `n` uniform samples of the edge over its grid domain.
pub fn sample_edge(edge: &EdgeFunction, n: usize, id: (usize, usize)) -> Result<EdgeCurve, SymbolicError> {
    if n < 2 {
        return Err(SymbolicError::TooFewSamples);
    }
    let lo = edge.grid().domain_lo();
    let hi = edge.grid().domain_hi();
    let xs: Vec<f64> = (0..n)
        .map(|i| if i == n - 1 { hi } else { lo + (hi - lo) * i as f64 / (n - 1) as f64 })
        .collect();
    let ys = xs.iter().map(|&x| edge.eval(x)).collect();
    Ok(EdgeCurve { xs, ys, edge: id })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Form {
    /// `a*x + b`, coefficients `[a, b]`.
    Affine,
    /// `a*exp(-b*x^2) + c`, coefficients `[a, b, c]`.
    Gaussian,
    /// `sum c_k x^k`, coefficients `[c_0, ..., c_d]` with `d <= 5`.
    Polynomial,
    /// `a*sin(b*x + c) + d`, coefficients `[a, b, c, d]`, `a >= 0`, `c in (-pi, pi]`.
    Sinusoid,
}

impl Form {
    pub fn name(self) -> &'static str {
        match self {
            Form::Affine => "affine",
            Form::Gaussian => "gaussian",
            Form::Polynomial => "polynomial",
            Form::Sinusoid => "sinusoid",
        }
    }

    pub fn eval(self, coeffs: &[f64], x: f64) -> f64 {
        match self {
            Form::Affine => coeffs[0] * x + coeffs[1],
            Form::Gaussian => coeffs[0] * (-coeffs[1] * x * x).exp() + coeffs[2],
            Form::Polynomial => coeffs.iter().rev().fold(0.0, |acc, c| acc * x + c),
            Form::Sinusoid => coeffs[0] * (coeffs[1] * x + coeffs[2]).sin() + coeffs[3],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateFit {
    pub form: Form,
    pub coefficients: Vec<f64>,
    pub r_squared: f64,
    pub score: f64,
}

fn least_squares(design: &DMatrix<f64>, ys: &DVector<f64>) -> (DVector<f64>, f64) {
    let svd = design.clone().svd(true, true);
    let coef = svd
        .solve(ys, 1e-13 * svd.singular_values.max())
        .unwrap_or_else(|_| DVector::zeros(design.ncols()));
    let sse = (design * &coef - ys).norm_squared();
    (coef, sse)
}

fn design(xs: &[f64], cols: &[&dyn Fn(f64) -> f64]) -> DMatrix<f64> {
    DMatrix::from_fn(xs.len(), cols.len(), |r, c| cols[c](xs[r]))
}

struct Problem<'a> {
    xs: &'a [f64],
    ys: DVector<f64>,
    sst: f64,
}

impl Problem<'_> {
    fn fit(&self, form: Form, coefficients: Vec<f64>, sse: f64) -> CandidateFit {
        let r_squared = if self.sst == 0.0 {
            if sse == 0.0 {
                1.0
            } else {
                f64::NEG_INFINITY
            }
        } else {
            1.0 - sse / self.sst
        };
        let score = r_squared - COMPLEXITY_PENALTY * coefficients.len() as f64;
        CandidateFit {
            form,
            coefficients,
            r_squared,
            score,
        }
    }

    fn affine(&self) -> CandidateFit {
        let (c, sse) = least_squares(&design(self.xs, &[&|x| x, &|_| 1.0]), &self.ys);
        self.fit(Form::Affine, c.as_slice().to_vec(), sse)
    }

    fn polynomial(&self) -> CandidateFit {
        (0..=MAX_POLY_DEGREE)
            .map(|d| {
                let m = DMatrix::from_fn(self.xs.len(), d + 1, |r, c| self.xs[r].powi(c as i32));
                let (c, sse) = least_squares(&m, &self.ys);
                self.fit(Form::Polynomial, c.as_slice().to_vec(), sse)
            })
            .reduce(|best, f| if f.score > best.score { f } else { best })
            .unwrap()
    }

    fn gaussian_at(&self, b: f64) -> (DVector<f64>, f64) {
        least_squares(&design(self.xs, &[&|x| (-b * x * x).exp(), &|_| 1.0]), &self.ys)
    }

    fn sinusoid_at(&self, b: f64) -> (DVector<f64>, f64) {
        least_squares(
            &design(self.xs, &[&|x| (b * x).sin(), &|x| (b * x).cos(), &|_| 1.0]),
            &self.ys,
        )
    }

    /// Coarse scan then golden-section refinement of the rate.
    fn best_rate(&self, sse_at: impl Fn(f64) -> f64) -> f64 {
        let step = SCAN_MAX / SCAN_POINTS as f64;
        let scan: Vec<f64> = (1..=SCAN_POINTS).map(|i| step * i as f64).collect();
        let sses: Vec<f64> = scan.iter().map(|&b| sse_at(b)).collect();
        let i = sses
            .iter()
            .enumerate()
            .min_by(|a, b| a.1.partial_cmp(b.1).unwrap_or(Ordering::Equal))
            .map(|(i, _)| i)
            .unwrap();
        let lo = if i == 0 { step * 1e-3 } else { scan[i - 1] };
        let hi = if i + 1 == scan.len() { scan[i] } else { scan[i + 1] };
        let refined = golden_section(&sse_at, lo, hi, 1e-12);
        if sse_at(refined) <= sses[i] {
            refined
        } else {
            scan[i]
        }
    }

    fn gaussian(&self) -> CandidateFit {
        let b = self.best_rate(|b| self.gaussian_at(b).1);
        let (c, sse) = self.gaussian_at(b);
        self.fit(Form::Gaussian, vec![c[0], b, c[1]], sse)
    }

    fn sinusoid(&self) -> CandidateFit {
        let b = self.best_rate(|b| self.sinusoid_at(b).1);
        let (c, sse) = self.sinusoid_at(b);
        // A sin(bx) + B cos(bx) = a sin(bx + phase)
        let a = c[0].hypot(c[1]);
        let phase = c[1].atan2(c[0]);
        self.fit(Form::Sinusoid, vec![a, b, phase, c[2]], sse)
    }
}

/// Minimizer of a unimodal function on `[lo, hi]`.
pub fn golden_section(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64, tol: f64) -> f64 {
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = hi - inv_phi * (hi - lo);
    let mut d = lo + inv_phi * (hi - lo);
    let mut fc = f(c);
    let mut fd = f(d);
    for _ in 0..200 {
        if (hi - lo).abs() <= tol * (1.0 + lo.abs()) {
            break;
        }
        if fc < fd {
            hi = d;
            d = c;
            fd = fc;
            c = hi - inv_phi * (hi - lo);
            fc = f(c);
        } else {
            lo = c;
            c = d;
            fc = fd;
            d = lo + inv_phi * (hi - lo);
            fd = f(d);
        }
    }
    0.5 * (lo + hi)
}

/// One fit per form, best first.
pub fn fit_candidates(curve: &EdgeCurve) -> Result<Vec<CandidateFit>, SymbolicError> {
    let n = curve.xs.len();
    if n < 10 || curve.ys.len() != n {
        return Err(SymbolicError::TooFewPoints(n.min(curve.ys.len())));
    }
    if curve.xs.iter().chain(&curve.ys).any(|v| !v.is_finite()) {
        return Err(SymbolicError::NonFinite);
    }
    let (xmin, xmax) = curve
        .xs
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &x| (a.min(x), b.max(x)));
    if !(xmax > xmin) {
        return Err(SymbolicError::ZeroSpan);
    }
    let mean = curve.ys.iter().sum::<f64>() / n as f64;
    let sst: f64 = curve.ys.iter().map(|y| (y - mean).powi(2)).sum();
    let problem = Problem {
        xs: &curve.xs,
        ys: DVector::from_column_slice(&curve.ys),
        sst,
    };
    if curve.ys.iter().all(|y| *y == curve.ys[0]) {
        let flat = Problem { sst: 0.0, ..problem };
        return Ok(vec![flat.fit(Form::Affine, vec![0.0, curve.ys[0]], 0.0)]);
    }
    let mut fits = vec![
        problem.affine(),
        problem.gaussian(),
        problem.polynomial(),
        problem.sinusoid(),
    ];
    fits.sort_by(|a, b| {
        b.score
            .partial_cmp(&a.score)
            .unwrap_or(Ordering::Equal)
            .then(a.form.cmp(&b.form))
    });
    Ok(fits)
}
