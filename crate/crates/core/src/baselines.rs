//! Two-hidden-layer perceptron baseline:
//! `h1 = relu(W1 x + b1)`, `h2 = relu(W2 h1 + b2)`, `y = tanh(W3 h2 + b3)`.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::datagen::Dataset;
use crate::graph::StandardFcm;
use crate::training::{OptimizerState, TrainConfig, TrainError, TrainOutcome};

/// Hidden width of both layers.
pub const D_MODEL: usize = 64;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    pub n_in: usize,
    pub n_out: usize,
    /// Row-major `D_MODEL x n_in`.
    pub w1: Vec<f64>,
    pub b1: Vec<f64>,
    /// Row-major `D_MODEL x D_MODEL`.
    pub w2: Vec<f64>,
    pub b2: Vec<f64>,
    /// Row-major `n_out x D_MODEL`.
    pub w3: Vec<f64>,
    pub b3: Vec<f64>,
}

struct Activations {
    z1: DMatrix<f64>,
    h1: DMatrix<f64>,
    z2: DMatrix<f64>,
    h2: DMatrix<f64>,
    out: DMatrix<f64>,
}

fn relu(m: &DMatrix<f64>) -> DMatrix<f64> {
    m.map(|v| v.max(0.0))
}

impl Mlp {
    pub fn zeros(n_in: usize, n_out: usize) -> Self {
        Self {
            n_in,
            n_out,
            w1: vec![0.0; D_MODEL * n_in],
            b1: vec![0.0; D_MODEL],
            w2: vec![0.0; D_MODEL * D_MODEL],
            b2: vec![0.0; D_MODEL],
            w3: vec![0.0; n_out * D_MODEL],
            b3: vec![0.0; n_out],
        }
    }

    /// Every weight and bias uniform in `[-1/sqrt(fan_in), 1/sqrt(fan_in)]`.
    pub fn init(n_in: usize, n_out: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut draw = |len: usize, fan_in: usize| -> Vec<f64> {
            let b = 1.0 / (fan_in as f64).sqrt();
            (0..len).map(|_| rng.gen_range(-b..=b)).collect()
        };
        let w1 = draw(D_MODEL * n_in, n_in);
        let b1 = draw(D_MODEL, n_in);
        let w2 = draw(D_MODEL * D_MODEL, D_MODEL);
        let b2 = draw(D_MODEL, D_MODEL);
        let w3 = draw(n_out * D_MODEL, D_MODEL);
        let b3 = draw(n_out, D_MODEL);
        Self {
            n_in,
            n_out,
            w1,
            b1,
            w2,
            b2,
            w3,
            b3,
        }
    }

    pub fn validate(&self) -> Result<(), TrainError> {
        let ok = self.w1.len() == D_MODEL * self.n_in
            && self.b1.len() == D_MODEL
            && self.w2.len() == D_MODEL * D_MODEL
            && self.b2.len() == D_MODEL
            && self.w3.len() == self.n_out * D_MODEL
            && self.b3.len() == self.n_out;
        if ok {
            Ok(())
        } else {
            Err(TrainError::Shape("MLP parameter shapes inconsistent".into()))
        }
    }

    pub fn param_count(&self) -> usize {
        self.w1.len() + self.b1.len() + self.w2.len() + self.b2.len() + self.w3.len() + self.b3.len()
    }

    /// Flattened as `w1, b1, w2, b2, w3, b3`.
    pub fn params(&self) -> Vec<f64> {
        [&self.w1, &self.b1, &self.w2, &self.b2, &self.w3, &self.b3]
            .into_iter()
            .flatten()
            .copied()
            .collect()
    }

    pub fn set_params(&mut self, p: &[f64]) {
        assert_eq!(p.len(), self.param_count());
        let mut off = 0;
        for v in [
            &mut self.w1,
            &mut self.b1,
            &mut self.w2,
            &mut self.b2,
            &mut self.w3,
            &mut self.b3,
        ] {
            let n = v.len();
            v.copy_from_slice(&p[off..off + n]);
            off += n;
        }
    }

    pub fn is_finite(&self) -> bool {
        self.params().iter().all(|v| v.is_finite())
    }

    fn mats(&self) -> (DMatrix<f64>, DMatrix<f64>, DMatrix<f64>) {
        (
            DMatrix::from_row_slice(D_MODEL, self.n_in, &self.w1),
            DMatrix::from_row_slice(D_MODEL, D_MODEL, &self.w2),
            DMatrix::from_row_slice(self.n_out, D_MODEL, &self.w3),
        )
    }

    /// Columns are samples.
    fn forward_batch(&self, x: &DMatrix<f64>) -> Activations {
        let (w1, w2, w3) = self.mats();
        let add_bias = |mut m: DMatrix<f64>, b: &[f64]| {
            let b = DVector::from_column_slice(b);
            for mut c in m.column_iter_mut() {
                c += &b;
            }
            m
        };
        let z1 = add_bias(&w1 * x, &self.b1);
        let h1 = relu(&z1);
        let z2 = add_bias(&w2 * &h1, &self.b2);
        let h2 = relu(&z2);
        let out = add_bias(&w3 * &h2, &self.b3).map(f64::tanh);
        Activations { z1, h1, z2, h2, out }
    }

    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>, TrainError> {
        if x.len() != self.n_in {
            return Err(TrainError::Shape(format!("expected {} inputs, got {}", self.n_in, x.len())));
        }
        let xm = DMatrix::from_column_slice(self.n_in, 1, x);
        Ok(self.forward_batch(&xm).out.as_slice().to_vec())
    }

    pub fn predict_all(&self, data: &Dataset) -> Result<Vec<Vec<f64>>, TrainError> {
        self.check_data(data)?;
        let acts = self.forward_batch(&input_matrix(data));
        Ok(acts.out.column_iter().map(|c| c.iter().copied().collect()).collect())
    }

    fn check_data(&self, data: &Dataset) -> Result<(), TrainError> {
        if data.is_empty() {
            return Err(TrainError::Empty);
        }
        if data.input_dim() != self.n_in || data.target_dim() != self.n_out {
            return Err(TrainError::Shape(format!(
                "MLP is {} -> {}, dataset is {} -> {}",
                self.n_in,
                self.n_out,
                data.input_dim(),
                data.target_dim()
            )));
        }
        Ok(())
    }

    /// Mean over samples of the squared error norm, and its gradient in
    /// [`Mlp::params`] order. ReLU has zero derivative at 0.
    pub fn loss_and_gradient(&self, data: &Dataset) -> Result<(f64, Vec<f64>), TrainError> {
        self.check_data(data)?;
        let x = input_matrix(data);
        let y = target_matrix(data);
        Ok(self.loss_grad_mats(&x, &y))
    }

    fn loss_grad_mats(&self, x: &DMatrix<f64>, y: &DMatrix<f64>) -> (f64, Vec<f64>) {
        let t = x.ncols() as f64;
        let a = self.forward_batch(x);
        let diff = &a.out - y;
        let loss = diff.norm_squared() / t;
        let (_, w2, w3) = self.mats();
        // d loss / d pre-tanh
        let d3 = diff.zip_map(&a.out, |d, o| 2.0 * d / t * (1.0 - o * o));
        let gw3 = &d3 * a.h2.transpose();
        let gb3: Vec<f64> = d3.row_iter().map(|r| r.sum()).collect();
        let d2 = (w3.transpose() * &d3).zip_map(&a.z2, |g, z| if z > 0.0 { g } else { 0.0 });
        let gw2 = &d2 * a.h1.transpose();
        let gb2: Vec<f64> = d2.row_iter().map(|r| r.sum()).collect();
        let d1 = (w2.transpose() * &d2).zip_map(&a.z1, |g, z| if z > 0.0 { g } else { 0.0 });
        let gw1 = &d1 * x.transpose();
        let gb1: Vec<f64> = d1.row_iter().map(|r| r.sum()).collect();

        let row_major = |m: &DMatrix<f64>| -> Vec<f64> { m.transpose().as_slice().to_vec() };
        let mut g = Vec::with_capacity(self.param_count());
        g.extend(row_major(&gw1));
        g.extend(gb1);
        g.extend(row_major(&gw2));
        g.extend(gb2);
        g.extend(row_major(&gw3));
        g.extend(gb3);
        (loss, g)
    }
}

/// Scalar-weight map that sees its input concepts min-max scaled into
/// `[0, 1]`, the activation range of a classical cognitive map. With no range
/// the inputs pass through unchanged.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScaledFcm {
    pub fcm: StandardFcm,
    /// `[lo, hi]` mapped onto `[0, 1]`.
    pub input_range: Option<[f64; 2]>,
}

impl ScaledFcm {
    /// Smallest and largest input value over every column. A constant input
    /// gets a unit-width range so the map stays finite.
    pub fn fit_range(data: &Dataset) -> [f64; 2] {
        let (lo, hi) = data
            .inputs
            .iter()
            .flatten()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(*v), hi.max(*v)));
        if !(hi > lo) {
            let lo = if lo.is_finite() { lo } else { 0.0 };
            return [lo, lo + 1.0];
        }
        [lo, hi]
    }

    pub fn encode(&self, data: &Dataset) -> Dataset {
        let Some([lo, hi]) = self.input_range else {
            return data.clone();
        };
        let mut out = data.clone();
        for row in &mut out.inputs {
            for v in row.iter_mut() {
                *v = (*v - lo) / (hi - lo);
            }
        }
        out
    }

    pub fn predict_all(&self, data: &Dataset) -> Result<Vec<Vec<f64>>, TrainError> {
        crate::training::predict_all(&self.fcm, &self.encode(data))
    }
}

fn input_matrix(data: &Dataset) -> DMatrix<f64> {
    let n_in = data.input_dim();
    DMatrix::from_fn(n_in, data.len(), |r, c| data.inputs[c][r])
}

fn target_matrix(data: &Dataset) -> DMatrix<f64> {
    let n_out = data.target_dim();
    DMatrix::from_fn(n_out, data.len(), |r, c| data.targets[c][r])
}

/// Full-batch training with MSE loss.
pub fn mlp_train(params: &Mlp, train: &Dataset, config: &TrainConfig) -> Result<TrainOutcome<Mlp>, TrainError> {
    config.validate()?;
    params.validate()?;
    params.check_data(train)?;
    let x = input_matrix(train);
    let y = target_matrix(train);
    let mut model = params.clone();
    let mut theta = model.params();
    let mut opt = OptimizerState::new(config.optimizer, theta.len());
    let mut history = Vec::with_capacity(config.epochs);
    for epoch in 0..config.epochs {
        let (loss, grad) = model.loss_grad_mats(&x, &y);
        if !loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
            return Err(TrainError::Divergence { epoch, history });
        }
        history.push(loss);
        opt.step(&mut theta, &grad, config.learning_rate);
        if theta.iter().any(|p| !p.is_finite()) {
            return Err(TrainError::Divergence { epoch, history });
        }
        model.set_params(&theta);
    }
    let (final_loss, _) = model.loss_grad_mats(&x, &y);
    Ok(TrainOutcome {
        model,
        history,
        final_loss,
    })
}
