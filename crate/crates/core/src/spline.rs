//! Uniform knot grids and B-spline basis evaluation.
//!
//! A [`KnotGrid`] partitions `[domain_lo, domain_hi]` into `G` equal intervals
//! and extends the partition by `p` knots of the same spacing past each end,
//! giving `G + 2p + 1` knots and `K = G + p` basis functions whose supports
//! intersect the domain.
//!
//! Basis values come from the Cox-de Boor recursion
//!
//! ```text
//! B_{k,0}(x) = 1 if t_k <= x < t_{k+1}, else 0
//! B_{k,p}(x) = (x - t_k) / (t_{k+p} - t_k) * B_{k,p-1}(x)
//!            + (t_{k+p+1} - x) / (t_{k+p+1} - t_{k+1}) * B_{k+1,p-1}(x)
//! ```
//!
//! with any term whose denominator vanishes taken as zero.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SplineError {
    #[error("invalid domain: lo ({lo}) must be strictly less than hi ({hi})")]
    InvalidDomain { lo: f64, hi: f64 },
    #[error("grid size must be at least 1")]
    ZeroGrid,
    #[error("basis index {index} out of range for degree {degree} (count {count})")]
    IndexOutOfRange {
        index: usize,
        degree: usize,
        count: usize,
    },
    #[error("basis derivative is undefined for degree 0")]
    DegreeZero,
    #[error("knot list inconsistent with grid parameters: {0}")]
    InconsistentKnots(String),
}

/// Extended uniform knot partition of a closed interval.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KnotGrid {
    domain_lo: f64,
    domain_hi: f64,
    grid_size: usize,
    degree: usize,
    knots: Vec<f64>,
}

impl KnotGrid {
    /// Builds the uniform grid with `grid_size` intervals over the domain and
    /// `degree` extra knots on each side.
    pub fn uniform(
        domain_lo: f64,
        domain_hi: f64,
        grid_size: usize,
        degree: usize,
    ) -> Result<Self, SplineError> {
        if !(domain_lo < domain_hi) || !domain_lo.is_finite() || !domain_hi.is_finite() {
            return Err(SplineError::InvalidDomain {
                lo: domain_lo,
                hi: domain_hi,
            });
        }
        if grid_size == 0 {
            return Err(SplineError::ZeroGrid);
        }
        let h = (domain_hi - domain_lo) / grid_size as f64;
        let p = degree as i64;
        let mut knots: Vec<f64> = (0..(grid_size + 2 * degree + 1) as i64)
            .map(|i| domain_lo + (i - p) as f64 * h)
            .collect();
        // Pin the domain ends so the boundary knots are exact.
        knots[degree] = domain_lo;
        knots[degree + grid_size] = domain_hi;
        Ok(Self {
            domain_lo,
            domain_hi,
            grid_size,
            degree,
            knots,
        })
    }

    pub fn domain_lo(&self) -> f64 {
        self.domain_lo
    }

    pub fn domain_hi(&self) -> f64 {
        self.domain_hi
    }

    pub fn grid_size(&self) -> usize {
        self.grid_size
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn knots(&self) -> &[f64] {
        &self.knots
    }

    /// Number of basis functions, `G + p`.
    pub fn basis_count(&self) -> usize {
        self.grid_size + self.degree
    }

    /// Knot spacing.
    pub fn spacing(&self) -> f64 {
        (self.domain_hi - self.domain_lo) / self.grid_size as f64
    }

    /// Checks a deserialized grid against the invariants of [`KnotGrid::uniform`].
    pub fn validate(&self) -> Result<(), SplineError> {
        let rebuilt = Self::uniform(self.domain_lo, self.domain_hi, self.grid_size, self.degree)?;
        if rebuilt.knots.len() != self.knots.len() {
            return Err(SplineError::InconsistentKnots(format!(
                "expected {} knots, found {}",
                rebuilt.knots.len(),
                self.knots.len()
            )));
        }
        let scale = self.domain_hi.abs().max(self.domain_lo.abs()).max(1.0);
        for (i, (a, b)) in rebuilt.knots.iter().zip(&self.knots).enumerate() {
            if (a - b).abs() > 1e-12 * scale {
                return Err(SplineError::InconsistentKnots(format!(
                    "knot {i} is {b}, expected {a}"
                )));
            }
        }
        Ok(())
    }

    pub fn clamp(&self, x: f64) -> f64 {
        x.clamp(self.domain_lo, self.domain_hi)
    }

    /// `B_{k,p}(x)` by direct recursion over the raw knot sequence.
    ///
    /// `degree` may differ from the grid's own degree; the valid index range is
    /// `0..knots.len() - degree - 1`. No clamping and no right-end special case.
    pub fn basis_value(&self, k: usize, degree: usize, x: f64) -> Result<f64, SplineError> {
        cox_de_boor(&self.knots, k, degree, x)
    }

    /// Index `s` of the knot interval `[t_s, t_{s+1})` containing the clamped
    /// input, restricted to the domain intervals. `x == domain_hi` maps to the
    /// last interval so the basis is evaluated as its left limit.
    fn span(&self, x: f64) -> usize {
        let p = self.degree;
        let g = self.grid_size;
        let rel = (x - self.domain_lo) / self.spacing();
        let mut s = if rel.is_nan() { 0 } else { (rel.floor().max(0.0) as usize).min(g - 1) };
        // Correct for rounding in the division near knots.
        while s > 0 && x < self.knots[p + s] {
            s -= 1;
        }
        while s + 1 < g && x >= self.knots[p + s + 1] {
            s += 1;
        }
        p + s
    }

    /// Writes the `p + 1` possibly nonzero basis values at the clamped input
    /// into `out[..=p]` and returns the index of the first of them.
    pub fn eval_span(&self, x: f64, out: &mut [f64]) -> usize {
        let p = self.degree;
        let x = self.clamp(x);
        let s = self.span(x);
        fill_local_basis(&self.knots, s, p, x, out);
        s - p
    }

    /// Like [`KnotGrid::eval_span`] but also writes the basis derivatives into
    /// `d_out[..=p]`. For degree 0 the derivatives are zero.
    pub fn eval_span_with_derivative(&self, x: f64, out: &mut [f64], d_out: &mut [f64]) -> usize {
        let p = self.degree;
        let x = self.clamp(x);
        let s = self.span(x);
        if p == 0 {
            out[0] = 1.0;
            d_out[0] = 0.0;
            return s;
        }
        // Degree p-1 values for bases s-p+1..=s.
        let mut lower = [0.0; MAX_LOCAL];
        let mut scratch;
        let lower = if p < MAX_LOCAL {
            fill_local_basis(&self.knots, s, p - 1, x, &mut lower);
            &lower[..p]
        } else {
            scratch = vec![0.0; p];
            fill_local_basis(&self.knots, s, p - 1, x, &mut scratch);
            &scratch[..]
        };
        let t = &self.knots;
        let pf = p as f64;
        for r in 0..=p {
            let k = s - p + r;
            // lower[r - 1] is B_{k,p-1}, lower[r] is B_{k+1,p-1}.
            let left = if r >= 1 { lower[r - 1] } else { 0.0 };
            let right = if r < p { lower[r] } else { 0.0 };
            d_out[r] = pf * safe_div(left, t[k + p] - t[k]) - pf * safe_div(right, t[k + p + 1] - t[k + 1]);
        }
        fill_local_basis(&self.knots, s, p, x, out);
        s - p
    }

    /// All `K` basis values at `x`, with `x` clamped to the domain first.
    pub fn basis_vector(&self, x: f64) -> Vec<f64> {
        let mut out = vec![0.0; self.basis_count()];
        let mut local = vec![0.0; self.degree + 1];
        let first = self.eval_span(x, &mut local);
        out[first..first + self.degree + 1].copy_from_slice(&local);
        out
    }

    /// All `K` basis derivatives at `x`. Inputs outside the domain give the
    /// one-sided derivative at the nearest domain end.
    pub fn basis_derivative_vector(&self, x: f64) -> Result<Vec<f64>, SplineError> {
        if self.degree == 0 {
            return Err(SplineError::DegreeZero);
        }
        let mut out = vec![0.0; self.basis_count()];
        let mut vals = vec![0.0; self.degree + 1];
        let mut ders = vec![0.0; self.degree + 1];
        let first = self.eval_span_with_derivative(x, &mut vals, &mut ders);
        out[first..first + self.degree + 1].copy_from_slice(&ders);
        Ok(out)
    }
}

const MAX_LOCAL: usize = 16;

fn safe_div(num: f64, den: f64) -> f64 {
    if den == 0.0 {
        0.0
    } else {
        num / den
    }
}

/// Triangular Cox-de Boor evaluation of the `p + 1` bases `B_{s-p..=s, p}`
/// on span `s`, written into `out[..=p]`.
fn fill_local_basis(t: &[f64], s: usize, p: usize, x: f64, out: &mut [f64]) {
    out[0] = 1.0;
    for d in 1..=p {
        // Raise degree d-1 values (bases s-d+1..=s) to degree d (bases s-d..=s).
        let mut carry = 0.0;
        for r in 0..d {
            let k = s + 1 - d + r; // index of the degree d-1 basis at out[r]
            let right_den = t[k + d] - t[k];
            let term = safe_div(out[r], right_den);
            // B_{k-1,d} gets (t_{k+d-1+1} - x)/(t_{k+d} - t_k) * B_{k,d-1}
            // B_{k,d} gets (x - t_k)/(t_{k+d} - t_k) * B_{k,d-1}
            out[r] = carry + (t[k + d] - x) * term;
            carry = (x - t[k]) * term;
        }
        out[d] = carry;
    }
}

/// Plain recursive Cox-de Boor over an arbitrary non-decreasing knot list.
pub fn cox_de_boor(knots: &[f64], k: usize, degree: usize, x: f64) -> Result<f64, SplineError> {
    let count = knots.len().saturating_sub(degree + 1);
    if k >= count {
        return Err(SplineError::IndexOutOfRange {
            index: k,
            degree,
            count,
        });
    }
    Ok(cox_de_boor_unchecked(knots, k, degree, x))
}

fn cox_de_boor_unchecked(t: &[f64], k: usize, p: usize, x: f64) -> f64 {
    if p == 0 {
        return if t[k] <= x && x < t[k + 1] { 1.0 } else { 0.0 };
    }
    let left = safe_div(x - t[k], t[k + p] - t[k]);
    let right = safe_div(t[k + p + 1] - x, t[k + p + 1] - t[k + 1]);
    let a = if left == 0.0 { 0.0 } else { left * cox_de_boor_unchecked(t, k, p - 1, x) };
    let b = if right == 0.0 { 0.0 } else { right * cox_de_boor_unchecked(t, k + 1, p - 1, x) };
    a + b
}
