//! Cognitive map models: the functional-adjacency map with spline edges and
//! the scalar-weight baseline, plus recurrent simulation.

use std::fmt::Write as _;
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::edge::{sigmoid, BaseKind, EdgeFunction};
use crate::spline::KnotGrid;

/// Steepness of the smooth clip surrogate.
pub const SMOOTH_CLIP_STEEPNESS: f64 = 8.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GraphError {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("non-finite state at step {step}")]
    NonFiniteState { step: usize },
    #[error("simulation horizon must be at least 1")]
    ZeroHorizon,
    #[error("invalid layout: {0}")]
    InvalidLayout(String),
}

/// Node activation applied to the aggregated edge input.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundingOp {
    /// `logistic(8 * (x - 0.5))`, a differentiable stand-in for `min(max(0, x), 1)`.
    #[default]
    SmoothClip,
    Tanh,
    Identity,
}

impl BoundingOp {
    pub fn apply(self, x: f64) -> f64 {
        match self {
            BoundingOp::SmoothClip => sigmoid(SMOOTH_CLIP_STEEPNESS * (x - 0.5)),
            BoundingOp::Tanh => x.tanh(),
            BoundingOp::Identity => x,
        }
    }

    pub fn derivative(self, x: f64) -> f64 {
        match self {
            BoundingOp::SmoothClip => {
                let s = self.apply(x);
                SMOOTH_CLIP_STEEPNESS * s * (1.0 - s)
            }
            BoundingOp::Tanh => {
                let t = x.tanh();
                1.0 - t * t
            }
            BoundingOp::Identity => 1.0,
        }
    }
}

/// Which nodes receive data and which are supervised.
///
/// For supervised fitting, the input vector is written into `inputs`, every
/// other node starts at zero, one update is applied, and `outputs` are read.
/// The autonomous layout uses every node for both.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IoLayout {
    pub inputs: Vec<usize>,
    pub outputs: Vec<usize>,
}

impl IoLayout {
    pub fn autonomous(n: usize) -> Self {
        Self {
            inputs: (0..n).collect(),
            outputs: (0..n).collect(),
        }
    }

    /// Inputs on nodes `0..n_in`, outputs on `n_in..n_in + n_out`.
    pub fn feed_forward(n_in: usize, n_out: usize) -> Self {
        Self {
            inputs: (0..n_in).collect(),
            outputs: (n_in..n_in + n_out).collect(),
        }
    }

    pub fn validate(&self, n: usize) -> Result<(), GraphError> {
        if self.inputs.is_empty() || self.outputs.is_empty() {
            return Err(GraphError::InvalidLayout("empty input or output set".into()));
        }
        for &i in self.inputs.iter().chain(&self.outputs) {
            if i >= n {
                return Err(GraphError::InvalidLayout(format!("node {i} >= {n}")));
            }
        }
        Ok(())
    }

    pub fn embed(&self, n: usize, x: &[f64]) -> Result<Vec<f64>, GraphError> {
        if x.len() != self.inputs.len() {
            return Err(GraphError::DimensionMismatch {
                expected: self.inputs.len(),
                got: x.len(),
            });
        }
        let mut state = vec![0.0; n];
        for (&node, &v) in self.inputs.iter().zip(x) {
            state[node] = v;
        }
        Ok(state)
    }
}

/// Anything that advances a concept-state vector by one step.
pub trait Dynamics {
    fn n_nodes(&self) -> usize;
    fn step(&self, state: &[f64]) -> Result<Vec<f64>, GraphError>;
    fn layout(&self) -> &IoLayout;

    /// One-step supervised prediction through [`Dynamics::layout`].
    fn predict(&self, inputs: &[f64]) -> Result<Vec<f64>, GraphError> {
        let layout = self.layout();
        let state = layout.embed(self.n_nodes(), inputs)?;
        let next = self.step(&state)?;
        Ok(layout.outputs.iter().map(|&o| next[o]).collect())
    }
}

/// Time-ordered concept states `c(0), ..., c(T)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub states: Vec<Vec<f64>>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    /// CSV with header `t,c_0,...,c_{N-1}`.
    pub fn to_csv(&self) -> String {
        let n = self.states.first().map_or(0, Vec::len);
        let mut s = String::from("t");
        for i in 0..n {
            let _ = write!(s, ",c_{i}");
        }
        s.push('\n');
        for (t, st) in self.states.iter().enumerate() {
            let _ = write!(s, "{t}");
            for v in st {
                let _ = write!(s, ",{v:?}");
            }
            s.push('\n');
        }
        s
    }
}

/// Iterates `model.step` `horizon` times from `c0`.
pub fn simulate<M: Dynamics + ?Sized>(model: &M, c0: &[f64], horizon: usize) -> Result<Trajectory, GraphError> {
    if horizon == 0 {
        return Err(GraphError::ZeroHorizon);
    }
    if c0.len() != model.n_nodes() {
        return Err(GraphError::DimensionMismatch {
            expected: model.n_nodes(),
            got: c0.len(),
        });
    }
    let mut states = Vec::with_capacity(horizon + 1);
    states.push(c0.to_vec());
    for t in 0..horizon {
        let next = model.step(&states[t])?;
        if next.iter().any(|v| !v.is_finite()) {
            return Err(GraphError::NonFiniteState { step: t + 1 });
        }
        states.push(next);
    }
    Ok(Trajectory { states })
}

/// Functional-adjacency cognitive map. Edge `(i, j)` carries the influence of
/// source `j` on target `i` and lives at index `i * N + j`.
#[derive(Debug, Clone, PartialEq)]
pub struct KaFcm {
    n: usize,
    grid: Arc<KnotGrid>,
    edges: Vec<EdgeFunction>,
    mask: Vec<bool>,
    bounding: BoundingOp,
    layout: IoLayout,
}

impl KaFcm {
    /// A map with every edge masked off and zero-initialized.
    pub fn empty(n: usize, grid: KnotGrid, base: BaseKind, bounding: BoundingOp) -> Self {
        let grid = Arc::new(grid);
        let edges = (0..n * n).map(|_| EdgeFunction::zero(grid.clone(), base)).collect();
        Self {
            n,
            grid,
            edges,
            mask: vec![false; n * n],
            bounding,
            layout: IoLayout::autonomous(n),
        }
    }

    /// Builds from explicit parts, validating shapes.
    pub fn from_parts(
        n: usize,
        grid: Arc<KnotGrid>,
        edges: Vec<EdgeFunction>,
        mask: Vec<bool>,
        bounding: BoundingOp,
        layout: IoLayout,
    ) -> Result<Self, GraphError> {
        if edges.len() != n * n {
            return Err(GraphError::DimensionMismatch {
                expected: n * n,
                got: edges.len(),
            });
        }
        if mask.len() != n * n {
            return Err(GraphError::DimensionMismatch {
                expected: n * n,
                got: mask.len(),
            });
        }
        layout.validate(n)?;
        for e in &edges {
            if e.alpha.len() != grid.basis_count() || **e.grid() != *grid {
                return Err(GraphError::InvalidLayout("edge grid differs from model grid".into()));
            }
        }
        Ok(Self {
            n,
            grid,
            edges,
            mask,
            bounding,
            layout,
        })
    }

    /// Supervised topology: every output node receives an initialized edge
    /// from every input node; all other edges are masked.
    pub fn feed_forward(
        n_in: usize,
        n_out: usize,
        grid: KnotGrid,
        base: BaseKind,
        bounding: BoundingOp,
        seed: u64,
    ) -> Self {
        let n = n_in + n_out;
        let mut m = Self::empty(n, grid, base, bounding);
        m.layout = IoLayout::feed_forward(n_in, n_out);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for i in n_in..n {
            for j in 0..n_in {
                let e = EdgeFunction::init_with(m.grid.clone(), base, &mut rng);
                m.set_edge(i, j, e);
            }
        }
        m
    }

    /// Fully connected map (self-loops excluded), all edges initialized.
    pub fn dense(n: usize, grid: KnotGrid, base: BaseKind, bounding: BoundingOp, seed: u64) -> Self {
        let mut m = Self::empty(n, grid, base, bounding);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for i in 0..n {
            for j in 0..n {
                if i != j {
                    let e = EdgeFunction::init_with(m.grid.clone(), base, &mut rng);
                    m.set_edge(i, j, e);
                }
            }
        }
        m
    }

    pub fn grid(&self) -> &Arc<KnotGrid> {
        &self.grid
    }

    pub fn bounding(&self) -> BoundingOp {
        self.bounding
    }

    pub fn mask(&self) -> &[bool] {
        &self.mask
    }

    pub fn edges(&self) -> &[EdgeFunction] {
        &self.edges
    }

    pub fn set_layout(&mut self, layout: IoLayout) -> Result<(), GraphError> {
        layout.validate(self.n)?;
        self.layout = layout;
        Ok(())
    }

    pub fn is_present(&self, i: usize, j: usize) -> bool {
        self.mask[i * self.n + j]
    }

    pub fn edge(&self, i: usize, j: usize) -> &EdgeFunction {
        &self.edges[i * self.n + j]
    }

    pub fn edge_mut(&mut self, i: usize, j: usize) -> &mut EdgeFunction {
        &mut self.edges[i * self.n + j]
    }

    /// Installs `edge` at `(i, j)` and unmasks it.
    ///
    /// # Panics
    ///
    /// If the edge uses a different grid.
    pub fn set_edge(&mut self, i: usize, j: usize, edge: EdgeFunction) {
        assert_eq!(**edge.grid(), *self.grid, "edge grid must match the model grid");
        let idx = i * self.n + j;
        self.edges[idx] = edge;
        self.mask[idx] = true;
    }

    pub fn set_present(&mut self, i: usize, j: usize, present: bool) {
        self.mask[i * self.n + j] = present;
    }

    /// Indices `(i, j)` of unmasked edges in row-major order.
    pub fn present_edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        (0..self.n * self.n)
            .filter(|&idx| self.mask[idx])
            .map(|idx| (idx / self.n, idx % self.n))
    }

    pub fn active_edge_count(&self) -> usize {
        self.mask.iter().filter(|m| **m).count()
    }

    /// Aggregated input `S_i = sum_j phi_ij(c_j)` before bounding.
    pub fn preactivation(&self, state: &[f64]) -> Result<Vec<f64>, GraphError> {
        if state.len() != self.n {
            return Err(GraphError::DimensionMismatch {
                expected: self.n,
                got: state.len(),
            });
        }
        let mut out = vec![0.0; self.n];
        for (i, o) in out.iter_mut().enumerate() {
            let row = i * self.n;
            *o = (0..self.n)
                .filter(|&j| self.mask[row + j])
                .map(|j| self.edges[row + j].eval(state[j]))
                .sum();
        }
        Ok(out)
    }

    /// Sum of `|alpha|` over unmasked edges.
    pub fn l1_norm(&self) -> f64 {
        self.present_edges()
            .map(|(i, j)| self.edge(i, j).alpha.iter().map(|a| a.abs()).sum::<f64>())
            .sum()
    }

    pub fn is_finite(&self) -> bool {
        self.present_edges().all(|(i, j)| self.edge(i, j).is_finite())
    }

    /// Flattened parameters of unmasked edges, row-major, each edge as
    /// `w_base, w_spline, alpha...`.
    pub fn params(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.param_count());
        for (i, j) in self.present_edges() {
            self.edge(i, j).write_params(&mut out);
        }
        out
    }

    pub fn param_count(&self) -> usize {
        self.active_edge_count() * (2 + self.grid.basis_count())
    }

    /// # Panics
    ///
    /// If `params.len() != self.param_count()`.
    pub fn set_params(&mut self, params: &[f64]) {
        assert_eq!(params.len(), self.param_count());
        let present: Vec<_> = self.present_edges().collect();
        let mut off = 0;
        for (i, j) in present {
            off += self.edge_mut(i, j).read_params(&params[off..]);
        }
    }
}

impl Dynamics for KaFcm {
    fn n_nodes(&self) -> usize {
        self.n
    }

    fn step(&self, state: &[f64]) -> Result<Vec<f64>, GraphError> {
        let mut s = self.preactivation(state)?;
        for v in &mut s {
            *v = self.bounding.apply(*v);
        }
        Ok(s)
    }

    fn layout(&self) -> &IoLayout {
        &self.layout
    }
}

/// Scalar-weight cognitive map, `c(t+1) = f(W c(t))`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StandardFcm {
    pub n: usize,
    /// Row-major `N x N`; `weights[i * N + j]` is the influence of `j` on `i`.
    pub weights: Vec<f64>,
    pub activation: BoundingOp,
    pub layout: IoLayout,
}

impl StandardFcm {
    pub fn zeros(n: usize, activation: BoundingOp) -> Self {
        Self {
            n,
            weights: vec![0.0; n * n],
            activation,
            layout: IoLayout::autonomous(n),
        }
    }

    pub fn feed_forward(n_in: usize, n_out: usize, activation: BoundingOp) -> Self {
        let n = n_in + n_out;
        Self {
            n,
            weights: vec![0.0; n * n],
            activation,
            layout: IoLayout::feed_forward(n_in, n_out),
        }
    }

    pub fn weight(&self, i: usize, j: usize) -> f64 {
        self.weights[i * self.n + j]
    }

    pub fn set_weight(&mut self, i: usize, j: usize, w: f64) {
        self.weights[i * self.n + j] = w;
    }

    /// Weights that influence supervised predictions: `(output, input)` pairs.
    pub fn free_weights(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for &i in &self.layout.outputs {
            for &j in &self.layout.inputs {
                out.push((i, j));
            }
        }
        out
    }
}

impl Dynamics for StandardFcm {
    fn n_nodes(&self) -> usize {
        self.n
    }

    fn step(&self, state: &[f64]) -> Result<Vec<f64>, GraphError> {
        if state.len() != self.n {
            return Err(GraphError::DimensionMismatch {
                expected: self.n,
                got: state.len(),
            });
        }
        Ok((0..self.n)
            .map(|i| {
                let row = &self.weights[i * self.n..(i + 1) * self.n];
                let s: f64 = row.iter().zip(state).map(|(w, c)| w * c).sum();
                self.activation.apply(s)
            })
            .collect())
    }

    fn layout(&self) -> &IoLayout {
        &self.layout
    }
}
