//! Particle swarm training of the scalar-weight map.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::datagen::Dataset;
use crate::graph::{Dynamics, StandardFcm};

use super::TrainError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PsoConfig {
    pub swarm_size: usize,
    pub iterations: usize,
    pub inertia: f64,
    pub cognitive: f64,
    pub social: f64,
    pub weight_bounds: [f64; 2],
    pub seed: u64,
}

impl Default for PsoConfig {
    fn default() -> Self {
        // Clerc-Kennedy constriction setting.
        Self {
            swarm_size: 30,
            iterations: 500,
            inertia: 0.729,
            cognitive: 1.49445,
            social: 1.49445,
            weight_bounds: [-1.0, 1.0],
            seed: 0,
        }
    }
}

impl PsoConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        if self.swarm_size < 2 {
            return Err(TrainError::InvalidConfig(format!(
                "swarm size must be at least 2, got {}",
                self.swarm_size
            )));
        }
        if self.iterations == 0 {
            return Err(TrainError::InvalidConfig("iterations must be at least 1".into()));
        }
        let [lo, hi] = self.weight_bounds;
        if !(lo < hi) {
            return Err(TrainError::InvalidConfig(format!("weight bounds [{lo}, {hi}] are empty")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct PsoOutcome {
    pub model: StandardFcm,
    /// Best fitness after each iteration; non-increasing.
    pub history: Vec<f64>,
}

/// Fitness evaluator with the embedded input states precomputed.
struct Fitness<'a> {
    model: &'a StandardFcm,
    states: Vec<Vec<f64>>,
    targets: &'a [Vec<f64>],
    free: Vec<(usize, usize)>,
}

impl Fitness<'_> {
    /// Mean squared one-step error over the supervised outputs.
    fn eval(&self, weights: &[f64]) -> f64 {
        let n = self.model.n;
        let mut w = self.model.weights.clone();
        for (&(i, j), v) in self.free.iter().zip(weights) {
            w[i * n + j] = *v;
        }
        let outputs = &self.model.layout.outputs;
        let mut total = 0.0;
        for (state, target) in self.states.iter().zip(self.targets) {
            for (&o, t) in outputs.iter().zip(target) {
                let s: f64 = w[o * n..(o + 1) * n].iter().zip(state).map(|(a, b)| a * b).sum();
                let d = self.model.activation.apply(s) - t;
                total += d * d;
            }
        }
        total / self.states.len() as f64
    }
}

/// Searches the weights of `(output, input)` pairs within the bounds; all
/// other weights keep their values from `model`.
pub fn pso_train_fcm(model: &StandardFcm, train: &Dataset, config: &PsoConfig) -> Result<PsoOutcome, TrainError> {
    config.validate()?;
    if train.is_empty() {
        return Err(TrainError::Empty);
    }
    let layout = model.layout();
    if train.input_dim() != layout.inputs.len() || train.target_dim() != layout.outputs.len() {
        return Err(TrainError::Shape(format!(
            "model expects {} inputs / {} outputs, dataset has {} / {}",
            layout.inputs.len(),
            layout.outputs.len(),
            train.input_dim(),
            train.target_dim()
        )));
    }
    let states = train
        .inputs
        .iter()
        .map(|x| layout.embed(model.n, x))
        .collect::<Result<Vec<_>, _>>()?;
    let fitness = Fitness {
        model,
        states,
        targets: &train.targets,
        free: model.free_weights(),
    };
    let dim = fitness.free.len();
    let [lo, hi] = config.weight_bounds;
    let vmax = hi - lo;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);

    let mut pos: Vec<Vec<f64>> = (0..config.swarm_size)
        .map(|_| (0..dim).map(|_| rng.gen_range(lo..=hi)).collect())
        .collect();
    let mut vel: Vec<Vec<f64>> = (0..config.swarm_size)
        .map(|_| (0..dim).map(|_| rng.gen_range(-0.1 * vmax..=0.1 * vmax)).collect())
        .collect();
    let mut best_pos = pos.clone();
    let mut best_fit: Vec<f64> = pos.iter().map(|p| fitness.eval(p)).collect();
    let mut g = 0;
    for (i, f) in best_fit.iter().enumerate() {
        if *f < best_fit[g] {
            g = i;
        }
    }
    let mut global_pos = best_pos[g].clone();
    let mut global_fit = best_fit[g];
    let mut history = Vec::with_capacity(config.iterations);

    for _ in 0..config.iterations {
        for p in 0..config.swarm_size {
            for d in 0..dim {
                let r1: f64 = rng.gen();
                let r2: f64 = rng.gen();
                let v = config.inertia * vel[p][d]
                    + config.cognitive * r1 * (best_pos[p][d] - pos[p][d])
                    + config.social * r2 * (global_pos[d] - pos[p][d]);
                vel[p][d] = v.clamp(-vmax, vmax);
                let x = pos[p][d] + vel[p][d];
                if x < lo || x > hi {
                    pos[p][d] = x.clamp(lo, hi);
                    vel[p][d] = 0.0;
                } else {
                    pos[p][d] = x;
                }
            }
            let f = fitness.eval(&pos[p]);
            if f < best_fit[p] {
                best_fit[p] = f;
                best_pos[p].clone_from(&pos[p]);
                if f < global_fit {
                    global_fit = f;
                    global_pos.clone_from(&pos[p]);
                }
            }
        }
        history.push(global_fit);
    }

    let mut trained = model.clone();
    for (&(i, j), v) in fitness.free.iter().zip(&global_pos) {
        trained.set_weight(i, j, *v);
    }
    Ok(PsoOutcome { model: trained, history })
}
