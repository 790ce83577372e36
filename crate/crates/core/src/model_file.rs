//! Versioned JSON model files for every trainable map.
//!
//! A file looks like `{"version": 1, "model": {"kind": "kafcm", ...}}`. The
//! spline map stores its knot grid once and each edge as its base kind,
//! weights and coefficients, in row-major order next to the edge mask.

use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::baselines::{Mlp, ScaledFcm};
use crate::datagen::Dataset;
use crate::edge::{BaseKind, EdgeFunction};
use crate::graph::{BoundingOp, Dynamics, IoLayout, KaFcm};
use crate::spline::KnotGrid;
use crate::training::{predict_all, TrainError};

pub const MODEL_FILE_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum ModelFileError {
    #[error("unsupported model file version {0}")]
    Version(u32),
    #[error("malformed model file: {0}")]
    Malformed(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct EdgeRecord {
    base: BaseKind,
    w_base: f64,
    w_spline: f64,
    alpha: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct KaFcmRecord {
    n: usize,
    grid: KnotGrid,
    bounding: BoundingOp,
    layout: IoLayout,
    mask: Vec<bool>,
    edges: Vec<EdgeRecord>,
}

impl KaFcmRecord {
    fn of(m: &KaFcm) -> Self {
        Self {
            n: m.n_nodes(),
            grid: (**m.grid()).clone(),
            bounding: m.bounding(),
            layout: m.layout().clone(),
            mask: m.mask().to_vec(),
            edges: m
                .edges()
                .iter()
                .map(|e| EdgeRecord {
                    base: e.base,
                    w_base: e.w_base,
                    w_spline: e.w_spline,
                    alpha: e.alpha.clone(),
                })
                .collect(),
        }
    }

    fn into_model(self) -> Result<KaFcm, ModelFileError> {
        let bad = |m: String| ModelFileError::Malformed(m);
        self.grid.validate().map_err(|e| bad(e.to_string()))?;
        let k = self.grid.basis_count();
        let grid = Arc::new(self.grid);
        let mut edges = Vec::with_capacity(self.edges.len());
        for (idx, e) in self.edges.into_iter().enumerate() {
            if e.alpha.len() != k {
                return Err(bad(format!("edge {idx} has {} coefficients, grid needs {k}", e.alpha.len())));
            }
            edges.push(EdgeFunction::new(grid.clone(), e.base, e.w_base, e.w_spline, e.alpha));
        }
        KaFcm::from_parts(self.n, grid, edges, self.mask, self.bounding, self.layout).map_err(|e| bad(e.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
enum ModelRecord {
    Kafcm(KaFcmRecord),
    Fcm(ScaledFcm),
    Mlp(Mlp),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct ModelFile {
    version: u32,
    model: ModelRecord,
}

/// A trained model of any supported kind.
#[derive(Debug, Clone, PartialEq)]
pub enum Model {
    Kafcm(KaFcm),
    Fcm(ScaledFcm),
    Mlp(Mlp),
}

impl Model {
    pub fn kind_name(&self) -> &'static str {
        match self {
            Model::Kafcm(_) => "kafcm",
            Model::Fcm(_) => "fcm",
            Model::Mlp(_) => "mlp",
        }
    }

    pub fn input_dim(&self) -> usize {
        match self {
            Model::Kafcm(m) => m.layout().inputs.len(),
            Model::Fcm(m) => m.fcm.layout.inputs.len(),
            Model::Mlp(m) => m.n_in,
        }
    }

    pub fn output_dim(&self) -> usize {
        match self {
            Model::Kafcm(m) => m.layout().outputs.len(),
            Model::Fcm(m) => m.fcm.layout.outputs.len(),
            Model::Mlp(m) => m.n_out,
        }
    }

    /// One-step predictions, after checking the dataset shape.
    pub fn predict_all(&self, data: &Dataset) -> Result<Vec<Vec<f64>>, TrainError> {
        if data.input_dim() != self.input_dim() || (!data.is_empty() && data.target_dim() != self.output_dim()) {
            return Err(TrainError::Shape(format!(
                "{} model takes {} inputs and {} outputs, dataset has {} inputs and {} targets",
                self.kind_name(),
                self.input_dim(),
                self.output_dim(),
                data.input_dim(),
                data.target_dim()
            )));
        }
        match self {
            Model::Kafcm(m) => predict_all(m, data),
            Model::Fcm(m) => m.predict_all(data),
            Model::Mlp(m) => m.predict_all(data),
        }
    }

    /// Pretty-printed JSON with round-trip float precision.
    pub fn to_json(&self) -> String {
        let model = match self {
            Model::Kafcm(m) => ModelRecord::Kafcm(KaFcmRecord::of(m)),
            Model::Fcm(m) => ModelRecord::Fcm(m.clone()),
            Model::Mlp(m) => ModelRecord::Mlp(m.clone()),
        };
        let file = ModelFile {
            version: MODEL_FILE_VERSION,
            model,
        };
        let mut s = serde_json::to_string_pretty(&file).expect("model records always serialize");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> Result<Self, ModelFileError> {
        let file: ModelFile = serde_json::from_str(text).map_err(|e| ModelFileError::Malformed(e.to_string()))?;
        if file.version != MODEL_FILE_VERSION {
            return Err(ModelFileError::Version(file.version));
        }
        match file.model {
            ModelRecord::Kafcm(r) => r.into_model().map(Model::Kafcm),
            ModelRecord::Fcm(s) => {
                let m = &s.fcm;
                if s.input_range.is_some_and(|[lo, hi]| !(hi > lo)) {
                    return Err(ModelFileError::Malformed("empty FCM input range".into()));
                }
                if m.weights.len() != m.n * m.n {
                    return Err(ModelFileError::Malformed(format!(
                        "{} weights for {} nodes",
                        m.weights.len(),
                        m.n
                    )));
                }
                m.layout.validate(m.n).map_err(|e| ModelFileError::Malformed(e.to_string()))?;
                Ok(Model::Fcm(s))
            }
            ModelRecord::Mlp(m) => {
                m.validate().map_err(|e| ModelFileError::Malformed(e.to_string()))?;
                Ok(Model::Mlp(m))
            }
        }
    }
}
