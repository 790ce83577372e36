//! Kolmogorov-Arnold fuzzy cognitive maps.
//!
//! Each causal edge of the map is a learnable univariate function made of a
//! SiLU residual path and a B-spline, so a single edge can express
//! non-monotonic influence. The crate also carries the scalar-weight map and
//! an MLP as baselines, synthetic data generators, trainers, a grid-search
//! harness and symbolic extraction of learned edges.

pub mod baselines;
pub mod datagen;
pub mod edge;
pub mod experiment;
pub mod graph;
pub mod metrics;
pub mod model_file;
pub mod spline;
pub mod symbolic;
pub mod training;

pub use edge::{BaseKind, EdgeFunction, EdgeGradient};
pub use graph::{simulate, BoundingOp, Dynamics, IoLayout, KaFcm, StandardFcm, Trajectory};
pub use spline::KnotGrid;
