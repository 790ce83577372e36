//! Learnable univariate edge functions: a residual base path plus a weighted
//! B-spline.
//!
//! `phi(x) = w_base * b(x) + w_spline * sum_k alpha[k] * B_k(clamp(x))`
//!
//! The base path sees the raw input; only the spline path is clamped to the
//! grid domain.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::spline::KnotGrid;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BaseKind {
    #[default]
    Silu,
    /// `b(x) = x`. With a zero spline this reduces the edge to a scalar weight.
    Identity,
}

impl BaseKind {
    pub fn eval(self, x: f64) -> f64 {
        match self {
            BaseKind::Silu => silu(x),
            BaseKind::Identity => x,
        }
    }

    pub fn derivative(self, x: f64) -> f64 {
        match self {
            BaseKind::Silu => silu_derivative(x),
            BaseKind::Identity => 1.0,
        }
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `x * sigmoid(x)`.
pub fn silu(x: f64) -> f64 {
    x * sigmoid(x)
}

pub fn silu_derivative(x: f64) -> f64 {
    let s = sigmoid(x);
    s * (1.0 + x * (1.0 - s))
}

/// One causal edge.
#[derive(Debug, Clone, PartialEq)]
pub struct EdgeFunction {
    pub w_base: f64,
    pub w_spline: f64,
    pub alpha: Vec<f64>,
    pub base: BaseKind,
    grid: Arc<KnotGrid>,
}

/// Gradient of `upstream * phi(x)` with respect to the edge parameters and
/// the input.
#[derive(Debug, Clone, PartialEq)]
pub struct EdgeGradient {
    pub d_w_base: f64,
    pub d_w_spline: f64,
    pub d_alpha: Vec<f64>,
    pub d_input: f64,
}

impl EdgeGradient {
    pub fn zeros(basis_count: usize) -> Self {
        Self {
            d_w_base: 0.0,
            d_w_spline: 0.0,
            d_alpha: vec![0.0; basis_count],
            d_input: 0.0,
        }
    }

    pub fn is_finite(&self) -> bool {
        self.d_w_base.is_finite()
            && self.d_w_spline.is_finite()
            && self.d_input.is_finite()
            && self.d_alpha.iter().all(|v| v.is_finite())
    }
}

impl EdgeFunction {
    /// # Panics
    ///
    /// If `alpha.len()` differs from the grid's basis count.
    pub fn new(grid: Arc<KnotGrid>, base: BaseKind, w_base: f64, w_spline: f64, alpha: Vec<f64>) -> Self {
        assert_eq!(
            alpha.len(),
            grid.basis_count(),
            "alpha length must equal the grid basis count"
        );
        Self {
            w_base,
            w_spline,
            alpha,
            base,
            grid,
        }
    }

    /// An edge that outputs zero everywhere.
    pub fn zero(grid: Arc<KnotGrid>, base: BaseKind) -> Self {
        let k = grid.basis_count();
        Self::new(grid, base, 0.0, 0.0, vec![0.0; k])
    }

    /// `w_base = w_spline = 1`, `alpha` i.i.d. uniform in `[-0.1, 0.1]`.
    pub fn init(grid: Arc<KnotGrid>, base: BaseKind, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Self::init_with(grid, base, &mut rng)
    }

    pub(crate) fn init_with<R: Rng>(grid: Arc<KnotGrid>, base: BaseKind, rng: &mut R) -> Self {
        let alpha = (0..grid.basis_count())
            .map(|_| rng.gen_range(-0.1..=0.1))
            .collect();
        Self::new(grid, base, 1.0, 1.0, alpha)
    }

    pub fn grid(&self) -> &Arc<KnotGrid> {
        &self.grid
    }

    pub fn is_finite(&self) -> bool {
        self.w_base.is_finite() && self.w_spline.is_finite() && self.alpha.iter().all(|a| a.is_finite())
    }

    /// `sum_k alpha[k] * B_k(clamp(x))`.
    pub fn spline_sum(&self, x: f64) -> f64 {
        let p = self.grid.degree();
        let mut local = [0.0; 16];
        if p + 1 > local.len() {
            return self.grid.basis_vector(x).iter().zip(&self.alpha).map(|(b, a)| b * a).sum();
        }
        let first = self.grid.eval_span(x, &mut local);
        local[..=p]
            .iter()
            .zip(&self.alpha[first..=first + p])
            .map(|(b, a)| b * a)
            .sum()
    }

    pub fn eval(&self, x: f64) -> f64 {
        self.w_base * self.base.eval(x) + self.w_spline * self.spline_sum(x)
    }

    /// Partials of `upstream * phi(x)`.
    pub fn grad(&self, x: f64, upstream: f64) -> EdgeGradient {
        let p = self.grid.degree();
        let mut out = EdgeGradient::zeros(self.alpha.len());
        let mut vals = vec![0.0; p + 1];
        let mut ders = vec![0.0; p + 1];
        let first = self.grid.eval_span_with_derivative(x, &mut vals, &mut ders);
        let coeffs = &self.alpha[first..=first + p];
        let spline: f64 = vals.iter().zip(coeffs).map(|(b, a)| b * a).sum();
        let inside = x >= self.grid.domain_lo() && x <= self.grid.domain_hi();
        let spline_slope: f64 = if inside {
            ders.iter().zip(coeffs).map(|(d, a)| d * a).sum()
        } else {
            0.0
        };
        out.d_w_base = upstream * self.base.eval(x);
        out.d_w_spline = upstream * spline;
        for (r, b) in vals.iter().enumerate() {
            out.d_alpha[first + r] = upstream * self.w_spline * b;
        }
        out.d_input = upstream * (self.w_base * self.base.derivative(x) + self.w_spline * spline_slope);
        out
    }

    /// Parameters in the flat order `w_base, w_spline, alpha...`.
    pub fn param_count(&self) -> usize {
        2 + self.alpha.len()
    }

    pub fn write_params(&self, out: &mut Vec<f64>) {
        out.push(self.w_base);
        out.push(self.w_spline);
        out.extend_from_slice(&self.alpha);
    }

    /// Reads parameters in [`EdgeFunction::write_params`] order, returning the
    /// number consumed.
    pub fn read_params(&mut self, src: &[f64]) -> usize {
        self.w_base = src[0];
        self.w_spline = src[1];
        let k = self.alpha.len();
        self.alpha.copy_from_slice(&src[2..2 + k]);
        2 + k
    }
}
