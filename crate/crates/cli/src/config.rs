//! Run configuration: one JSON document, every field overridable by a flag.

use std::fs;
use std::path::{Path, PathBuf};

use glcn_core::data::{load_dir, make_splits, synth_blobs, LoadOptions, Splits};
use glcn_core::{
    Adjacency, Dataset, Error, GraphLearnConfig, GraphSource, ModelConfig, ModelKind, Monitor, Result, SplitSpec,
    SynthSpec, TrainConfig,
};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum DatasetSource {
    /// A dataset directory (or a LINQS `.content`/`.cites` directory).
    Dir(PathBuf),
    Synth(SynthSpec),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum SplitSource {
    /// The dataset's own `splits.json`.
    Dataset,
    /// Drawn per seed.
    Random(SplitSpec),
}

impl Default for SplitSource {
    fn default() -> Self {
        SplitSource::Random(SplitSpec::default())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainOptions {
    pub max_epochs: usize,
    pub patience: usize,
    pub lr: f64,
    pub monitor: Monitor,
}

impl Default for TrainOptions {
    fn default() -> Self {
        let d = TrainConfig::default();
        Self {
            max_epochs: d.max_epochs,
            patience: d.patience,
            lr: d.lr,
            monitor: d.monitor,
        }
    }
}

impl TrainOptions {
    pub fn with_seed(&self, seed: u64) -> TrainConfig {
        TrainConfig {
            max_epochs: self.max_epochs,
            patience: self.patience,
            lr: self.lr,
            seed,
            monitor: self.monitor,
        }
    }
}

fn default_model() -> ModelKind {
    ModelKind::Glcn
}

fn default_hidden() -> Vec<usize> {
    vec![70, 70]
}

fn default_seeds() -> Vec<u64> {
    vec![0]
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default = "default_model")]
    pub model: ModelKind,
    pub dataset: DatasetSource,
    /// Scale every feature row to unit sum before training.
    #[serde(default)]
    pub normalize_features: bool,
    /// Graph for the fixed-graph model, prior for the GLCN model.
    #[serde(default)]
    pub graph: GraphSource,
    #[serde(default)]
    pub split: SplitSource,
    #[serde(default = "default_hidden")]
    pub hidden: Vec<usize>,
    #[serde(default = "glcn_core::model::default_lambda")]
    pub lambda: f64,
    #[serde(default)]
    pub graph_learning: GraphLearnConfig,
    #[serde(default)]
    pub train: TrainOptions,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
    /// When set, each GLCN run also exports its learned graph, keeping
    /// entries above this threshold.
    #[serde(default)]
    pub export_graph_threshold: Option<f64>,
}

impl RunConfig {
    pub fn new(dataset: DatasetSource) -> Self {
        Self {
            model: default_model(),
            dataset,
            normalize_features: false,
            graph: GraphSource::default(),
            split: SplitSource::default(),
            hidden: default_hidden(),
            lambda: glcn_core::model::default_lambda(),
            graph_learning: GraphLearnConfig::default(),
            train: TrainOptions::default(),
            seeds: default_seeds(),
            output_dir: None,
            export_graph_threshold: None,
        }
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    /// Checks everything that does not need the dataset.
    pub fn validate(&self) -> Result<()> {
        if self.seeds.is_empty() {
            return Err(Error::Config("seeds must not be empty".into()));
        }
        if let Some(k) = self.hidden.iter().position(|&w| w == 0) {
            return Err(Error::Config(format!(
                "hidden layer {k} has zero width (widths {:?})",
                self.hidden
            )));
        }
        if !self.lambda.is_finite() || self.lambda < 0.0 {
            return Err(Error::Config(format!("lambda must be >= 0, got {}", self.lambda)));
        }
        self.train.with_seed(0).validate()?;
        let has_graph = self.graph != GraphSource::None;
        match self.model {
            ModelKind::Glcn => self.graph_learning.validate(has_graph)?,
            ModelKind::Gcn if !has_graph => {
                return Err(Error::Config("the gcn model needs a graph (dataset or knn)".into()))
            }
            ModelKind::Gcn => {}
        }
        if let Some(t) = self.export_graph_threshold {
            if !t.is_finite() || t < 0.0 {
                return Err(Error::Config(format!("export threshold must be >= 0, got {t}")));
            }
        }
        if let GraphSource::Knn { k: 0, .. } = self.graph {
            return Err(Error::Config("knn graph needs k >= 1".into()));
        }
        if let DatasetSource::Synth(s) = &self.dataset {
            if s.n_per_class == 0 || s.classes < 2 || s.dim == 0 || s.noise.is_nan() || s.noise < 0.0 {
                return Err(Error::Config(format!("invalid synthetic dataset {s:?}")));
            }
        }
        Ok(())
    }

    pub fn model_config(&self, ds: &Dataset) -> ModelConfig {
        ModelConfig {
            kind: self.model,
            input_dim: ds.dim(),
            hidden: self.hidden.clone(),
            classes: ds.classes(),
            lambda: self.lambda,
            graph: self.graph_learning.clone(),
        }
    }

    pub fn splits(&self, ds: &Dataset, seed: u64) -> Result<Splits> {
        match &self.split {
            SplitSource::Dataset => ds
                .splits
                .clone()
                .ok_or_else(|| Error::Config("split = dataset but the dataset has no splits.json".into())),
            SplitSource::Random(spec) => make_splits(ds, spec, &mut ChaCha8Rng::seed_from_u64(seed)),
        }
    }
}

/// Loads the dataset and applies feature preprocessing.
pub fn load_dataset(source: &DatasetSource, normalize: bool) -> Result<Dataset> {
    let mut ds = match source {
        DatasetSource::Dir(dir) => load_dir(dir, &LoadOptions { allow_graph_free: true })?.0,
        DatasetSource::Synth(spec) => synth_blobs(spec),
    };
    if normalize {
        ds.normalize_rows();
    }
    Ok(ds)
}

/// Dataset plus the graph the run uses.
pub struct Prepared {
    pub dataset: Dataset,
    pub graph: Option<Adjacency>,
}

pub fn prepare(source: &DatasetSource, normalize: bool, graph: &GraphSource) -> Result<Prepared> {
    let dataset = load_dataset(source, normalize)?;
    let graph = graph.resolve(&dataset)?;
    Ok(Prepared { dataset, graph })
}
