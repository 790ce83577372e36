//! Losses, gradients, optimizers and trainers.

mod gradient;
mod grid_search;
mod optim;
mod pso;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::datagen::Dataset;
use crate::graph::{Dynamics, GraphError, KaFcm, Trajectory};

pub use gradient::{loss_and_gradient, model_gradient, model_loss, ModelGradient, PreparedBatch};
pub use grid_search::{
    derive_seed, grid_search, grid_search_resume, linspace_epochs, parse_rows, pearson, Correlations, GridCell, GridRow, GridSearchReport,
    GridSearchSpace, GridSearchSummary, RowStatus,
};
pub use optim::{Optimizer, OptimizerState};
pub use pso::{pso_train_fcm, PsoConfig, PsoOutcome};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TrainError {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("empty input")]
    Empty,
    #[error("training diverged at epoch {epoch} (loss history kept: {} entries)", history.len())]
    Divergence { epoch: usize, history: Vec<f64> },
    #[error("non-finite gradient")]
    NonFiniteGradient,
    #[error(transparent)]
    Graph(#[from] GraphError),
}

/// Hyperparameters for gradient training.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub lambda: f64,
    pub seed: u64,
    pub optimizer: Optimizer,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.01,
            epochs: 1000,
            lambda: 0.0,
            seed: 0,
            optimizer: Optimizer::Adam,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        if !(self.learning_rate > 0.0) || !self.learning_rate.is_finite() {
            return Err(TrainError::InvalidConfig(format!(
                "learning rate must be positive, got {}",
                self.learning_rate
            )));
        }
        if self.epochs == 0 {
            return Err(TrainError::InvalidConfig("epochs must be at least 1".into()));
        }
        if !(self.lambda >= 0.0) || !self.lambda.is_finite() {
            return Err(TrainError::InvalidConfig(format!("lambda must be >= 0, got {}", self.lambda)));
        }
        Ok(())
    }
}

/// Mean over time of the squared Euclidean distance between predicted and
/// target states.
pub fn loss_rec(pred: &[Vec<f64>], target: &[Vec<f64>]) -> Result<f64, TrainError> {
    if pred.len() != target.len() {
        return Err(TrainError::Shape(format!("{} vs {} time steps", pred.len(), target.len())));
    }
    if pred.is_empty() {
        return Err(TrainError::Empty);
    }
    let mut total = 0.0;
    for (p, t) in pred.iter().zip(target) {
        if p.len() != t.len() {
            return Err(TrainError::Shape(format!("state width {} vs {}", p.len(), t.len())));
        }
        total += p.iter().zip(t).map(|(a, b)| (a - b) * (a - b)).sum::<f64>();
    }
    Ok(total / pred.len() as f64)
}

/// `loss_rec + lambda * sum |alpha|` over unmasked edges.
pub fn loss_total(model: &KaFcm, pred: &[Vec<f64>], target: &[Vec<f64>], lambda: f64) -> Result<f64, TrainError> {
    let rec = loss_rec(pred, target)?;
    if lambda == 0.0 {
        return Ok(rec);
    }
    Ok(rec + lambda * model.l1_norm())
}

/// Consecutive-state pairs `(c(t), c(t+1))` of a trajectory, for one-step
/// supervision of an autonomous map.
pub fn one_step_pairs(traj: &Trajectory) -> Result<Dataset, TrainError> {
    if traj.len() < 2 {
        return Err(TrainError::Empty);
    }
    let inputs = traj.states[..traj.len() - 1].to_vec();
    let targets = traj.states[1..].to_vec();
    Dataset::new(
        inputs,
        targets,
        crate::datagen::Provenance::External {
            name: "trajectory".into(),
        },
    )
    .map_err(|e| TrainError::Shape(e.to_string()))
}

/// A trained model with its per-epoch loss record.
#[derive(Debug, Clone)]
pub struct TrainOutcome<M> {
    pub model: M,
    /// Training loss before each update; `history.len() == epochs`.
    pub history: Vec<f64>,
    /// Training loss after the last update.
    pub final_loss: f64,
}

/// Full-batch training of the spline map on one-step-ahead supervision.
pub fn train_gd(model: &KaFcm, train: &Dataset, config: &TrainConfig) -> Result<TrainOutcome<KaFcm>, TrainError> {
    config.validate()?;
    if train.is_empty() {
        return Err(TrainError::Empty);
    }
    let mut model = model.clone();
    let batch = PreparedBatch::new(&model, train)?;
    let mut params = model.params();
    let mut grad = vec![0.0; params.len()];
    let mut opt = OptimizerState::new(config.optimizer, params.len());
    let mut history = Vec::with_capacity(config.epochs);
    for epoch in 0..config.epochs {
        let loss = loss_and_gradient(&model, &batch, config.lambda, &mut grad);
        if !loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
            return Err(TrainError::Divergence { epoch, history });
        }
        history.push(loss);
        opt.step(&mut params, &grad, config.learning_rate);
        if params.iter().any(|p| !p.is_finite()) {
            return Err(TrainError::Divergence { epoch, history });
        }
        model.set_params(&params);
    }
    let final_loss = loss_and_gradient(&model, &batch, config.lambda, &mut grad);
    if !final_loss.is_finite() {
        return Err(TrainError::Divergence {
            epoch: config.epochs,
            history,
        });
    }
    Ok(TrainOutcome {
        model,
        history,
        final_loss,
    })
}

/// One-step predictions of any map over a dataset's inputs.
pub fn predict_all<M: Dynamics + ?Sized>(model: &M, data: &Dataset) -> Result<Vec<Vec<f64>>, TrainError> {
    data.inputs
        .iter()
        .map(|x| model.predict(x).map_err(TrainError::from))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::edge::BaseKind;
    use crate::graph::{simulate, BoundingOp};
    use crate::spline::KnotGrid;

    fn grid() -> KnotGrid {
        KnotGrid::uniform(-1.0, 1.0, 5, 3).unwrap()
    }

    #[test]
    fn loss_rec_examples() {
        let a = vec![vec![0.3, 0.1], vec![0.2, 0.9]];
        assert_eq!(loss_rec(&a, &a).unwrap(), 0.0);
        assert_eq!(loss_rec(&[vec![0.0]], &[vec![1.0]]).unwrap(), 1.0);
        assert_eq!(loss_rec(&[vec![0.0], vec![1.0]], &[vec![1.0], vec![0.0]]).unwrap(), 1.0);
        assert_eq!(loss_rec(&[], &[]), Err(TrainError::Empty));
        assert!(matches!(loss_rec(&[vec![0.0]], &[]), Err(TrainError::Shape(_))));
    }

    #[test]
    fn loss_total_examples() {
        let mut m = KaFcm::empty(2, KnotGrid::uniform(0.0, 1.0, 1, 1).unwrap(), BaseKind::Silu, BoundingOp::Identity);
        let e = crate::edge::EdgeFunction::new(m.grid().clone(), BaseKind::Silu, 1.0, 1.0, vec![0.5, -0.5]);
        m.set_edge(1, 0, e);
        let p = vec![vec![0.1, 0.2]];
        assert_eq!(loss_total(&m, &p, &p, 2.0).unwrap(), 2.0);
        let q = vec![vec![0.0, 0.0]];
        assert_eq!(loss_total(&m, &p, &q, 0.0).unwrap(), loss_rec(&p, &q).unwrap());
        let mut z = m.clone();
        z.edge_mut(1, 0).alpha = vec![0.0, 0.0];
        assert_eq!(loss_total(&z, &p, &q, 5.0).unwrap(), loss_rec(&p, &q).unwrap());
    }

    #[test]
    fn config_validation() {
        let mut c = TrainConfig::default();
        assert!(c.validate().is_ok());
        c.learning_rate = 0.0;
        assert!(c.validate().is_err());
        c.learning_rate = 0.1;
        c.epochs = 0;
        assert!(c.validate().is_err());
        c.epochs = 1;
        c.lambda = -1.0;
        assert!(c.validate().is_err());
    }

    #[test]
    fn self_generated_trajectory_has_zero_loss() {
        let m = KaFcm::dense(3, grid(), BaseKind::Silu, BoundingOp::SmoothClip, 4);
        let traj = simulate(&m, &[0.2, 0.5, 0.8], 30).unwrap();
        let data = one_step_pairs(&traj).unwrap();
        let cfg = TrainConfig {
            epochs: 3,
            ..Default::default()
        };
        let out = train_gd(&m, &data, &cfg).unwrap();
        assert!(out.history[0] <= 1e-20);
    }

    #[test]
    fn one_epoch_is_one_step() {
        let m = KaFcm::feed_forward(1, 1, grid(), BaseKind::Silu, BoundingOp::Identity, 2);
        let data = crate::datagen::gen_sine(50, 3.0, 1).unwrap();
        let cfg = TrainConfig {
            epochs: 1,
            learning_rate: 0.05,
            optimizer: Optimizer::Gd,
            ..Default::default()
        };
        let out = train_gd(&m, &data, &cfg).unwrap();
        assert_eq!(out.history.len(), 1);
        let g = model_gradient(&m, &data, 0.0).unwrap().flat();
        let expected: Vec<f64> = m.params().iter().zip(&g).map(|(p, g)| p - 0.05 * g).collect();
        assert_eq!(out.model.params(), expected);
    }
}
