//! End-to-end experiment pipelines driven by a single JSON config.
//!
//! A config names one of the three benchmark problems. Every field it leaves
//! out falls back to that problem's preset, so `{"experiment": "sine"}` is a
//! complete config. One `seed` drives data generation, the split shuffle,
//! model initialization and the particle swarm.

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::baselines::{mlp_train, Mlp, ScaledFcm};
use crate::datagen::{gen_sine, gen_yerkes, mackey_glass_dataset, split_dataset, DataError, Dataset, MackeyGlassParams, Splits};
use crate::edge::BaseKind;
use crate::graph::{BoundingOp, KaFcm, StandardFcm};
use crate::metrics::{compute_metrics, flatten, MetricsError, MetricsReport, TableRow};
use crate::model_file::{Model, ModelFileError};
use crate::spline::KnotGrid;
use crate::training::{pso_train_fcm, train_gd, GridCell, GridSearchSpace, Optimizer, PsoConfig, TrainConfig, TrainError};

pub const CONFIG_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("config error: {0}")]
    Config(String),
    #[error("training diverged at epoch {epoch}")]
    Divergence { epoch: usize, history: Vec<f64> },
    #[error("I/O error on {path}: {message}")]
    Io { path: String, message: String },
    #[error(transparent)]
    Data(DataError),
    #[error(transparent)]
    Train(TrainError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error(transparent)]
    ModelFile(#[from] ModelFileError),
    #[error("{0}")]
    Usage(String),
}

impl ExperimentError {
    /// Process exit status: 2 for configuration problems, 3 for divergence,
    /// 4 for I/O failures and 1 for anything else.
    pub fn exit_code(&self) -> i32 {
        match self {
            ExperimentError::Config(_)
            | ExperimentError::Data(DataError::InvalidParams(_) | DataError::InvalidFractions(_))
            | ExperimentError::Train(TrainError::InvalidConfig(_)) => 2,
            ExperimentError::Divergence { .. } => 3,
            ExperimentError::Io { .. } => 4,
            _ => 1,
        }
    }
}

impl From<TrainError> for ExperimentError {
    fn from(e: TrainError) -> Self {
        match e {
            TrainError::Divergence { epoch, history } => ExperimentError::Divergence { epoch, history },
            other => ExperimentError::Train(other),
        }
    }
}

impl From<DataError> for ExperimentError {
    fn from(e: DataError) -> Self {
        ExperimentError::Data(e)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    Yerkes,
    Sine,
    Mackey,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Kafcm,
    Fcm,
    Mlp,
}

impl ModelKind {
    pub const ALL: [ModelKind; 3] = [ModelKind::Kafcm, ModelKind::Mlp, ModelKind::Fcm];

    pub fn name(self) -> &'static str {
        match self {
            ModelKind::Kafcm => "kafcm",
            ModelKind::Fcm => "fcm",
            ModelKind::Mlp => "mlp",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FcmInputs {
    /// Min-max scaled into `[0, 1]` using the training inputs.
    Unit,
    /// Passed through unchanged.
    Raw,
}

/// Generator settings; each experiment reads only the fields it needs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DatasetParams {
    pub n: usize,
    pub noise_sd: f64,
    pub frequency: f64,
    pub mackey: MackeyGlassParams,
    pub lag: usize,
}

impl Default for DatasetParams {
    fn default() -> Self {
        Self {
            n: 1000,
            noise_sd: 0.05,
            frequency: 3.0,
            mackey: MackeyGlassParams::default(),
            lag: 4,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub version: u32,
    pub experiment: ExperimentKind,
    /// Model trained by `train` and searched by `gridsearch`.
    pub model: ModelKind,
    /// Bounding operator of the spline map.
    pub bounding: BoundingOp,
    /// Activation of the scalar-weight baseline.
    pub fcm_activation: BoundingOp,
    /// How the scalar-weight baseline receives its inputs.
    pub fcm_inputs: FcmInputs,
    pub grid_size: usize,
    pub degree: usize,
    pub domain: [f64; 2],
    /// Spline-map training.
    pub train: TrainConfig,
    /// Perceptron training.
    pub mlp: TrainConfig,
    pub pso: PsoConfig,
    pub data: DatasetParams,
    /// Train, validation and test fractions.
    pub split: [f64; 3],
    pub search: GridSearchSpace,
    pub output_dir: String,
    pub seed: u64,
}

impl ExperimentConfig {
    /// The tuned configuration for one benchmark.
    pub fn preset(experiment: ExperimentKind) -> Self {
        let (grid_size, learning_rate, epochs) = match experiment {
            ExperimentKind::Yerkes => (4, 0.1, 610),
            ExperimentKind::Sine => (19, 0.1, 1500),
            ExperimentKind::Mackey => (19, 0.05, 1277),
        };
        Self {
            version: CONFIG_VERSION,
            experiment,
            model: ModelKind::Kafcm,
            bounding: BoundingOp::Identity,
            fcm_activation: BoundingOp::Tanh,
            fcm_inputs: FcmInputs::Unit,
            grid_size,
            degree: 3,
            domain: [-1.0, 1.0],
            train: TrainConfig {
                learning_rate,
                epochs,
                lambda: 0.0,
                seed: 0,
                optimizer: Optimizer::Adam,
            },
            mlp: TrainConfig {
                learning_rate: 0.05,
                epochs: 1500,
                lambda: 0.0,
                seed: 0,
                optimizer: Optimizer::Gd,
            },
            pso: PsoConfig::default(),
            data: DatasetParams::default(),
            split: [0.64, 0.16, 0.2],
            search: GridSearchSpace::default(),
            output_dir: format!("out/{}", experiment_name(experiment)),
            seed: 0,
        }
    }

    /// Parses a config, filling omitted keys from the preset of its
    /// `experiment`. Unknown top-level keys are rejected.
    pub fn from_json(text: &str) -> Result<Self, ExperimentError> {
        let user: Value = serde_json::from_str(text).map_err(|e| ExperimentError::Config(e.to_string()))?;
        let kind = user
            .get("experiment")
            .ok_or_else(|| ExperimentError::Config("missing key 'experiment'".into()))?;
        let kind: ExperimentKind =
            serde_json::from_value(kind.clone()).map_err(|e| ExperimentError::Config(format!("experiment: {e}")))?;
        let mut merged = serde_json::to_value(Self::preset(kind)).expect("config serializes");
        merge(&mut merged, user);
        let cfg: Self = serde_json::from_value(merged).map_err(|e| ExperimentError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("config serializes");
        s.push('\n');
        s
    }

    pub fn validate(&self) -> Result<(), ExperimentError> {
        let cfg_err = |m: String| Err(ExperimentError::Config(m));
        if self.version != CONFIG_VERSION {
            return cfg_err(format!("unsupported config version {}", self.version));
        }
        self.knot_grid()?;
        self.train.validate().map_err(|e| ExperimentError::Config(format!("train: {e}")))?;
        self.mlp.validate().map_err(|e| ExperimentError::Config(format!("mlp: {e}")))?;
        self.pso.validate().map_err(|e| ExperimentError::Config(format!("pso: {e}")))?;
        self.search.validate().map_err(|e| ExperimentError::Config(format!("search: {e}")))?;
        crate::datagen::split_sizes(10, self.split).map_err(|e| ExperimentError::Config(e.to_string()))?;
        match self.experiment {
            ExperimentKind::Yerkes | ExperimentKind::Sine => {
                if self.data.n < 3 {
                    return cfg_err(format!("data.n must be at least 3, got {}", self.data.n));
                }
                if !(self.data.noise_sd >= 0.0) {
                    return cfg_err(format!("data.noise_sd must be >= 0, got {}", self.data.noise_sd));
                }
            }
            ExperimentKind::Mackey => {
                self.data
                    .mackey
                    .validate()
                    .map_err(|e| ExperimentError::Config(format!("data.mackey: {e}")))?;
                if self.data.lag == 0 {
                    return cfg_err("data.lag must be at least 1".into());
                }
            }
        }
        Ok(())
    }

    pub fn knot_grid(&self) -> Result<KnotGrid, ExperimentError> {
        self.knot_grid_with(self.grid_size)
    }

    fn knot_grid_with(&self, grid_size: usize) -> Result<KnotGrid, ExperimentError> {
        KnotGrid::uniform(self.domain[0], self.domain[1], grid_size, self.degree)
            .map_err(|e| ExperimentError::Config(format!("grid: {e}")))
    }

    /// Chronological split for the time series, shuffled for regression.
    pub fn shuffles(&self) -> bool {
        self.experiment != ExperimentKind::Mackey
    }

    /// Whether model selection and reporting use MAPE rather than MSE.
    pub fn uses_mape(&self) -> bool {
        self.experiment == ExperimentKind::Mackey
    }
}

pub fn experiment_name(kind: ExperimentKind) -> &'static str {
    match kind {
        ExperimentKind::Yerkes => "yerkes",
        ExperimentKind::Sine => "sine",
        ExperimentKind::Mackey => "mackey",
    }
}

fn merge(base: &mut Value, overlay: Value) {
    match (base, overlay) {
        (Value::Object(b), Value::Object(o)) => {
            for (k, v) in o {
                match b.get_mut(&k) {
                    Some(slot) => merge(slot, v),
                    None => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (slot, v) => *slot = v,
    }
}

/// The full, unsplit dataset of the configured experiment.
pub fn generate_dataset(cfg: &ExperimentConfig) -> Result<Dataset, ExperimentError> {
    let d = &cfg.data;
    Ok(match cfg.experiment {
        ExperimentKind::Yerkes => gen_yerkes(d.n, d.noise_sd, cfg.seed)?,
        ExperimentKind::Sine => gen_sine(d.n, d.frequency, cfg.seed)?,
        ExperimentKind::Mackey => mackey_glass_dataset(&d.mackey, d.lag)?,
    })
}

pub fn split(cfg: &ExperimentConfig, data: &Dataset) -> Result<Splits, ExperimentError> {
    Ok(split_dataset(data, cfg.split, cfg.shuffles(), cfg.seed)?)
}

/// A trained model with its loss record.
#[derive(Debug, Clone)]
pub struct Trained {
    pub model: Model,
    pub history: Vec<f64>,
}

/// Builds and trains one model kind on `train`.
pub fn train_model(cfg: &ExperimentConfig, kind: ModelKind, train: &Dataset) -> Result<Trained, ExperimentError> {
    let (n_in, n_out) = (train.input_dim(), train.target_dim());
    if train.is_empty() {
        return Err(TrainError::Empty.into());
    }
    match kind {
        ModelKind::Kafcm => {
            let grid = cfg.knot_grid()?;
            let init = KaFcm::feed_forward(n_in, n_out, grid, BaseKind::Silu, cfg.bounding, cfg.seed);
            let out = train_gd(&init, train, &cfg.train)?;
            Ok(Trained {
                model: Model::Kafcm(out.model),
                history: out.history,
            })
        }
        ModelKind::Mlp => {
            let init = Mlp::init(n_in, n_out, cfg.seed);
            let out = mlp_train(&init, train, &cfg.mlp)?;
            Ok(Trained {
                model: Model::Mlp(out.model),
                history: out.history,
            })
        }
        ModelKind::Fcm => {
            let mut scaled = ScaledFcm {
                fcm: StandardFcm::feed_forward(n_in, n_out, cfg.fcm_activation),
                input_range: match cfg.fcm_inputs {
                    FcmInputs::Unit => Some(ScaledFcm::fit_range(train)),
                    FcmInputs::Raw => None,
                },
            };
            let pso = PsoConfig {
                seed: cfg.seed,
                ..cfg.pso.clone()
            };
            let out = pso_train_fcm(&scaled.fcm, &scaled.encode(train), &pso)?;
            scaled.fcm = out.model;
            Ok(Trained {
                model: Model::Fcm(scaled),
                history: out.history,
            })
        }
    }
}

/// Metrics of `model` on `data`. Noisy generators are scored against their
/// noise-free law.
pub fn evaluate(model: &Model, data: &Dataset) -> Result<MetricsReport, ExperimentError> {
    let pred = model.predict_all(data)?;
    let truth = data.noiseless_targets();
    Ok(compute_metrics(&flatten(&pred), &flatten(&truth))?)
}

/// Outcome of a full three-model comparison.
#[derive(Debug, Clone)]
pub struct ExperimentOutcome {
    pub rows: Vec<TableRow>,
    pub models: Vec<Trained>,
    pub splits: Splits,
}

impl ExperimentOutcome {
    pub fn report(&self, kind: ModelKind) -> &MetricsReport {
        &self.rows.iter().find(|r| r.model == kind.name()).expect("every kind is run").report
    }

    pub fn model(&self, kind: ModelKind) -> &Model {
        &self.models[ModelKind::ALL.iter().position(|k| *k == kind).unwrap()].model
    }
}

/// Trains every model kind on the train and validation parts and scores it on
/// the held-out test part.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentOutcome, ExperimentError> {
    cfg.validate()?;
    let data = generate_dataset(cfg)?;
    let splits = split(cfg, &data)?;
    let fit = splits.part(crate::datagen::SplitPart::TrainVal);
    let mut rows = Vec::new();
    let mut models = Vec::new();
    for kind in ModelKind::ALL {
        let t = train_model(cfg, kind, &fit)?;
        rows.push(TableRow {
            model: kind.name().into(),
            report: evaluate(&t.model, &splits.test)?,
        });
        models.push(t);
    }
    Ok(ExperimentOutcome { rows, models, splits })
}

/// Validation error of the spline map trained on `splits.train` with one
/// grid-search cell's hyperparameters: MSE against the observed validation
/// targets, or MAPE in percent for the time series.
pub fn grid_cell_error(cfg: &ExperimentConfig, splits: &Splits, cell: &GridCell, seed: u64) -> Result<f64, TrainError> {
    let grid = cfg
        .knot_grid_with(cell.grid_size)
        .map_err(|e| TrainError::InvalidConfig(e.to_string()))?;
    let train = &splits.train;
    let init = KaFcm::feed_forward(
        train.input_dim(),
        train.target_dim(),
        grid,
        BaseKind::Silu,
        cfg.bounding,
        seed,
    );
    let tc = TrainConfig {
        learning_rate: cell.learning_rate,
        epochs: cell.epochs,
        seed,
        ..cfg.train.clone()
    };
    let out = train_gd(&init, train, &tc)?;
    let pred = crate::training::predict_all(&out.model, &splits.val)?;
    let report = compute_metrics(&flatten(&pred), &flatten(&splits.val.targets))
        .map_err(|e| TrainError::Shape(e.to_string()))?;
    if cfg.uses_mape() {
        report
            .mape_percent
            .ok_or_else(|| TrainError::Shape("MAPE undefined on zero targets".into()))
    } else {
        Ok(report.mse)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_config_uses_preset() {
        let cfg = ExperimentConfig::from_json(r#"{"experiment": "sine"}"#).unwrap();
        assert_eq!(cfg, ExperimentConfig::preset(ExperimentKind::Sine));
    }

    #[test]
    fn nested_override_keeps_siblings() {
        let cfg = ExperimentConfig::from_json(r#"{"experiment": "yerkes", "train": {"epochs": 5}}"#).unwrap();
        assert_eq!(cfg.train.epochs, 5);
        assert_eq!(cfg.train.learning_rate, 0.1);
    }

    #[test]
    fn unknown_key_and_bad_dt_are_config_errors() {
        let e = ExperimentConfig::from_json(r#"{"experiment": "sine", "epochz": 3}"#).unwrap_err();
        assert_eq!(e.exit_code(), 2);
        let e = ExperimentConfig::from_json(r#"{"experiment": "mackey", "data": {"mackey": {"dt": 0.3}}}"#).unwrap_err();
        assert_eq!(e.exit_code(), 2);
    }

    #[test]
    fn config_json_round_trip() {
        for k in [ExperimentKind::Yerkes, ExperimentKind::Sine, ExperimentKind::Mackey] {
            let c = ExperimentConfig::preset(k);
            assert_eq!(ExperimentConfig::from_json(&c.to_json()).unwrap(), c);
        }
    }

    #[test]
    fn divergence_maps_to_exit_three() {
        let e: ExperimentError = TrainError::Divergence {
            epoch: 2,
            history: vec![1.0, 2.0],
        }
        .into();
        assert_eq!(e.exit_code(), 3);
    }
}
