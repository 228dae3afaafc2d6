//! Parameter checkpoints.
//!
//! A checkpoint is one JSON document:
//!
//! ```text
//! {
//!   "format": "glcn-checkpoint/v1",
//!   "model": { ModelConfig },
//!   "inputs": { "normalize_features": bool, "graph": GraphSource },
//!   "params": [ { "name": "W0", "rows": 16, "cols": 70, "values": [row-major f64...] }, ... ]
//! }
//! ```
//!
//! Values are written with shortest round-trip formatting, so reloading
//! reproduces every parameter bit for bit.

use std::fs;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::adjacency::Adjacency;
use crate::data::GraphSource;
use crate::error::{Error, Result};
use crate::gconv::normalize_adjacency;
use crate::matrix::Matrix;
use crate::model::{GcnModel, GlcnModel, Model, ModelConfig, ModelKind};
use crate::train::TrainedModel;

pub const CHECKPOINT_FORMAT: &str = "glcn-checkpoint/v1";

/// How raw dataset features and graph were turned into model inputs.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InputPipeline {
    #[serde(default)]
    pub normalize_features: bool,
    #[serde(default)]
    pub graph: GraphSource,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NamedMatrix {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
    pub values: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Checkpoint {
    pub format: String,
    pub model: ModelConfig,
    pub inputs: InputPipeline,
    pub params: Vec<NamedMatrix>,
}

impl Checkpoint {
    pub fn capture(model: &dyn Model, inputs: InputPipeline) -> Self {
        let params = model
            .param_names()
            .into_iter()
            .zip(model.params())
            .map(|(name, m)| NamedMatrix {
                name,
                rows: m.rows(),
                cols: m.cols(),
                values: m.as_slice().to_vec(),
            })
            .collect();
        Self {
            format: CHECKPOINT_FORMAT.to_string(),
            model: model.config().clone(),
            inputs,
            params,
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string(self)?;
        fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let ckpt: Checkpoint = serde_json::from_str(&text)?;
        if ckpt.format != CHECKPOINT_FORMAT {
            return Err(Error::Checkpoint(format!(
                "unsupported format `{}`, expected `{CHECKPOINT_FORMAT}`",
                ckpt.format
            )));
        }
        Ok(ckpt)
    }

    /// Rebuilds the model. The fixed-graph model needs the graph it was
    /// trained on.
    pub fn into_model(&self, graph: Option<&Adjacency>) -> Result<TrainedModel> {
        // The rng only fills parameters that are overwritten right after.
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut model = match self.model.kind {
            ModelKind::Glcn => TrainedModel::Glcn(GlcnModel::new(self.model.clone(), &mut rng)?),
            ModelKind::Gcn => {
                let adj = graph.ok_or_else(|| Error::Checkpoint("gcn checkpoint needs its graph".into()))?;
                TrainedModel::Gcn(GcnModel::new(self.model.clone(), normalize_adjacency(adj), &mut rng)?)
            }
        };
        let expected = model.as_model().param_names();
        let names: Vec<&str> = self.params.iter().map(|p| p.name.as_str()).collect();
        if names != expected {
            return Err(Error::Checkpoint(format!(
                "parameter names {names:?} do not match the model ({expected:?})"
            )));
        }
        let values = self
            .params
            .iter()
            .map(|p| Matrix::from_vec(p.rows, p.cols, p.values.clone()))
            .collect::<Result<Vec<_>>>()?;
        match &mut model {
            TrainedModel::Glcn(m) => m.restore(&values)?,
            TrainedModel::Gcn(m) => m.restore(&values)?,
        }
        Ok(model)
    }
}
