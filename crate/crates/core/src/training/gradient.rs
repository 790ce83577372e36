//! Reverse-mode gradient of the one-step loss through the bounding operator
//! and every spline edge.

use crate::datagen::Dataset;
use crate::edge::{silu, BaseKind, EdgeGradient};
use crate::graph::{Dynamics, KaFcm};

use super::{loss_total, predict_all, TrainError};

/// Inputs of a dataset with their basis evaluations cached. The inputs of
/// one-step supervision never change across epochs, so the spans, basis
/// values and base activations are computed once.
#[derive(Debug, Clone)]
pub struct PreparedBatch {
    n_samples: usize,
    n_nodes: usize,
    width: usize,
    states: Vec<f64>,
    silu: Vec<f64>,
    first: Vec<usize>,
    basis: Vec<f64>,
    targets: Vec<f64>,
    outputs: Vec<usize>,
}

impl PreparedBatch {
    pub fn new(model: &KaFcm, data: &Dataset) -> Result<Self, TrainError> {
        let layout = model.layout();
        if data.is_empty() {
            return Err(TrainError::Empty);
        }
        if data.input_dim() != layout.inputs.len() || data.target_dim() != layout.outputs.len() {
            return Err(TrainError::Shape(format!(
                "model expects {} inputs / {} outputs, dataset has {} / {}",
                layout.inputs.len(),
                layout.outputs.len(),
                data.input_dim(),
                data.target_dim()
            )));
        }
        let n = model.n_nodes();
        let grid = model.grid();
        let width = grid.degree() + 1;
        let mut states = Vec::with_capacity(data.len() * n);
        let mut silu_vals = Vec::with_capacity(data.len() * n);
        let mut first = Vec::with_capacity(data.len() * n);
        let mut basis = vec![0.0; data.len() * n * width];
        for (s, x) in data.inputs.iter().enumerate() {
            let state = layout.embed(n, x)?;
            for (j, &v) in state.iter().enumerate() {
                let slot = (s * n + j) * width;
                first.push(grid.eval_span(v, &mut basis[slot..slot + width]));
                silu_vals.push(silu(v));
            }
            states.extend(state);
        }
        let targets = data.targets.iter().flatten().copied().collect();
        Ok(Self {
            n_samples: data.len(),
            n_nodes: n,
            width,
            states,
            silu: silu_vals,
            first,
            basis,
            targets,
            outputs: layout.outputs.clone(),
        })
    }

    pub fn len(&self) -> usize {
        self.n_samples
    }

    pub fn is_empty(&self) -> bool {
        self.n_samples == 0
    }
}

/// Writes `d loss_total / d params` into `grad` (in [`KaFcm::params`] order)
/// and returns `loss_total`. `batch` must have been prepared for a model of
/// the same structure.
pub fn loss_and_gradient(model: &KaFcm, batch: &PreparedBatch, lambda: f64, grad: &mut [f64]) -> f64 {
    let n = batch.n_nodes;
    let k = model.grid().basis_count();
    let stride = 2 + k;
    grad.iter_mut().for_each(|g| *g = 0.0);

    let mut offset = vec![usize::MAX; n * n];
    for (pos, (i, j)) in model.present_edges().enumerate() {
        offset[i * n + j] = pos * stride;
    }
    // Per output node: (source, offset) of incoming edges.
    let incoming: Vec<Vec<(usize, usize)>> = batch
        .outputs
        .iter()
        .map(|&o| {
            (0..n)
                .filter(|&j| offset[o * n + j] != usize::MAX)
                .map(|j| (j, offset[o * n + j]))
                .collect()
        })
        .collect();

    let bounding = model.bounding();
    let width = batch.width;
    let n_out = batch.outputs.len();
    let scale = 2.0 / batch.n_samples as f64;
    let mut loss = 0.0;
    let mut parts: Vec<(f64, f64)> = Vec::with_capacity(n);

    for s in 0..batch.n_samples {
        for (r, &o) in batch.outputs.iter().enumerate() {
            parts.clear();
            let mut pre = 0.0;
            for &(j, _) in &incoming[r] {
                let e = model.edge(o, j);
                let cell = s * n + j;
                let base = match e.base {
                    BaseKind::Silu => batch.silu[cell],
                    BaseKind::Identity => batch.states[cell],
                };
                let f = batch.first[cell];
                let b = &batch.basis[cell * width..(cell + 1) * width];
                let spl: f64 = b.iter().zip(&e.alpha[f..f + width]).map(|(b, a)| b * a).sum();
                pre += e.w_base * base + e.w_spline * spl;
                parts.push((base, spl));
            }
            let pred = bounding.apply(pre);
            let diff = pred - batch.targets[s * n_out + r];
            loss += diff * diff;
            let g = scale * diff * bounding.derivative(pre);
            if g == 0.0 {
                continue;
            }
            for (&(j, off), &(base, spl)) in incoming[r].iter().zip(&parts) {
                let e = model.edge(o, j);
                let cell = s * n + j;
                let f = batch.first[cell];
                let b = &batch.basis[cell * width..(cell + 1) * width];
                grad[off] += g * base;
                grad[off + 1] += g * spl;
                let gs = g * e.w_spline;
                for (d, bv) in grad[off + 2 + f..off + 2 + f + width].iter_mut().zip(b) {
                    *d += gs * bv;
                }
            }
        }
    }
    loss /= batch.n_samples as f64;

    if lambda != 0.0 {
        for (pos, (i, j)) in model.present_edges().enumerate() {
            let off = pos * stride + 2;
            for (d, a) in grad[off..off + k].iter_mut().zip(&model.edge(i, j).alpha) {
                // sign(0) := 0
                if *a > 0.0 {
                    *d += lambda;
                } else if *a < 0.0 {
                    *d -= lambda;
                }
                loss += lambda * a.abs();
            }
        }
    }
    loss
}

/// Per-edge parameter gradients of `loss_total`, in row-major edge order.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelGradient {
    pub entries: Vec<((usize, usize), EdgeGradient)>,
}

impl ModelGradient {
    /// Flattened in [`KaFcm::params`] order.
    pub fn flat(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for (_, g) in &self.entries {
            out.push(g.d_w_base);
            out.push(g.d_w_spline);
            out.extend_from_slice(&g.d_alpha);
        }
        out
    }
}

pub fn model_gradient(model: &KaFcm, batch: &Dataset, lambda: f64) -> Result<ModelGradient, TrainError> {
    let prepared = PreparedBatch::new(model, batch)?;
    let mut flat = vec![0.0; model.param_count()];
    loss_and_gradient(model, &prepared, lambda, &mut flat);
    if flat.iter().any(|g| !g.is_finite()) {
        return Err(TrainError::NonFiniteGradient);
    }
    let k = model.grid().basis_count();
    let entries = model
        .present_edges()
        .zip(flat.chunks(2 + k))
        .map(|(ij, c)| {
            (
                ij,
                EdgeGradient {
                    d_w_base: c[0],
                    d_w_spline: c[1],
                    d_alpha: c[2..].to_vec(),
                    d_input: 0.0,
                },
            )
        })
        .collect();
    Ok(ModelGradient { entries })
}

/// `loss_total` of one-step predictions, evaluated through the plain
/// (uncached) forward path.
pub fn model_loss(model: &KaFcm, data: &Dataset, lambda: f64) -> Result<f64, TrainError> {
    let pred = predict_all(model, data)?;
    loss_total(model, &pred, &data.targets, lambda)
}
