use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use glcn_core::data::Labeled;
use glcn_core::{Error, GraphSource, ModelKind, Monitor, PriorMode, Result, Sigma, SplitSpec};

use crate::config::{DatasetSource, RunConfig, SplitSource};

#[derive(Debug, Parser)]
#[command(
    name = "glcn",
    version,
    about = "Semi-supervised node classification with learned graphs"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train one model per seed and summarize.
    Train(TrainArgs),
    /// Train over a grid of depths, widths or lambdas.
    Sweep(SweepArgs),
    /// Write the learned graph of a GLCN checkpoint as sparse triplets.
    ExportGraph(ExportGraphArgs),
    /// Write one hidden layer's activations as CSV.
    ExportEmbeddings(ExportEmbeddingsArgs),
    /// Generate a synthetic Gaussian-blob dataset directory.
    GenSynth(GenSynthArgs),
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum ModelArg {
    Glcn,
    Gcn,
}

impl From<ModelArg> for ModelKind {
    fn from(m: ModelArg) -> Self {
        match m {
            ModelArg::Glcn => ModelKind::Glcn,
            ModelArg::Gcn => ModelKind::Gcn,
        }
    }
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum PriorArg {
    None,
    Mask,
    Regularize,
    MaskRegularize,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum MonitorArg {
    Total,
    Ce,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Axis {
    Depth,
    Width,
    Lambda,
}

impl std::fmt::Display for Axis {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Axis::Depth => "depth",
            Axis::Width => "width",
            Axis::Lambda => "lambda",
        })
    }
}

/// Parses `none`, `dataset`, `knn:K` or `knn:K:SIGMA`.
pub fn parse_graph(s: &str) -> std::result::Result<GraphSource, String> {
    let parts: Vec<&str> = s.split(':').collect();
    match parts.as_slice() {
        ["none"] => Ok(GraphSource::None),
        ["dataset"] => Ok(GraphSource::Dataset),
        ["knn", k] | ["knn", k, _] => {
            let k = k.parse().map_err(|_| format!("bad k in `{s}`"))?;
            let sigma = match parts.get(2) {
                None | Some(&"auto") => Sigma::Auto,
                Some(v) => Sigma::Fixed(v.parse().map_err(|_| format!("bad sigma in `{s}`"))?),
            };
            Ok(GraphSource::Knn { k, sigma })
        }
        _ => Err(format!("expected none, dataset, knn:K or knn:K:SIGMA, got `{s}`")),
    }
}

/// Parses a test-set size: a count or `rest`.
pub fn parse_test_size(s: &str) -> std::result::Result<TestSize, String> {
    match s {
        "rest" => Ok(TestSize(None)),
        _ => s
            .parse()
            .map(|n| TestSize(Some(n)))
            .map_err(|_| format!("expected a count or `rest`, got `{s}`")),
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct TestSize(pub Option<usize>);

/// Flags shared by `train` and `sweep`. Each one overrides the matching
/// config field.
#[derive(Debug, Default, Args)]
pub struct RunArgs {
    /// JSON run configuration.
    #[arg(long, short)]
    pub config: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub model: Option<ModelArg>,
    /// Dataset directory.
    #[arg(long)]
    pub dataset: Option<PathBuf>,
    #[arg(long)]
    pub normalize_features: Option<bool>,
    /// none, dataset, knn:K or knn:K:SIGMA.
    #[arg(long, value_parser = parse_graph)]
    pub graph: Option<GraphSource>,
    /// Hidden layer widths, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub hidden: Option<Vec<usize>>,
    /// Draw splits with this many labeled nodes per class.
    #[arg(long)]
    pub labels_per_class: Option<usize>,
    /// Validation-set size of drawn splits.
    #[arg(long)]
    pub val_size: Option<usize>,
    /// Test-set size of drawn splits, or `rest`.
    #[arg(long, value_parser = parse_test_size)]
    pub test_size: Option<TestSize>,
    /// Use the dataset's own splits.json.
    #[arg(long, conflicts_with_all = ["labels_per_class", "val_size", "test_size"])]
    pub dataset_split: bool,
    #[arg(long)]
    pub lambda: Option<f64>,
    #[arg(long)]
    pub gamma: Option<f64>,
    #[arg(long)]
    pub beta: Option<f64>,
    #[arg(long)]
    pub embed_dim: Option<usize>,
    /// Learn the graph from raw features instead of a projection.
    #[arg(long)]
    pub no_projection: bool,
    #[arg(long, value_enum)]
    pub prior_mode: Option<PriorArg>,
    #[arg(long)]
    pub max_epochs: Option<usize>,
    #[arg(long)]
    pub patience: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long, value_enum)]
    pub monitor: Option<MonitorArg>,
    /// Seeds, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub seeds: Option<Vec<u64>>,
    /// Output directory.
    #[arg(long, short)]
    pub out: Option<PathBuf>,
}

impl RunArgs {
    /// Config file (if any) with every given flag applied on top.
    pub fn resolve(&self) -> Result<RunConfig> {
        let mut cfg = match (&self.config, &self.dataset) {
            (Some(path), _) => RunConfig::from_file(path)?,
            (None, Some(dir)) => RunConfig::new(DatasetSource::Dir(dir.clone())),
            (None, None) => return Err(Error::Config("pass --config or --dataset".into())),
        };
        if let Some(m) = self.model {
            cfg.model = m.into();
        }
        if let Some(dir) = &self.dataset {
            cfg.dataset = DatasetSource::Dir(dir.clone());
        }
        if let Some(v) = self.normalize_features {
            cfg.normalize_features = v;
        }
        if let Some(g) = self.graph {
            cfg.graph = g;
        }
        if let Some(h) = &self.hidden {
            cfg.hidden = h.clone();
        }
        if self.dataset_split {
            cfg.split = SplitSource::Dataset;
        }
        if self.labels_per_class.is_some() || self.val_size.is_some() || self.test_size.is_some() {
            let mut spec = match cfg.split {
                SplitSource::Random(spec) => spec,
                SplitSource::Dataset => SplitSpec::default(),
            };
            if let Some(k) = self.labels_per_class {
                spec.labeled = Labeled::PerClass(k);
            }
            if let Some(v) = self.val_size {
                spec.val = v;
            }
            if let Some(TestSize(t)) = self.test_size {
                spec.test = t;
            }
            cfg.split = SplitSource::Random(spec);
        }
        if let Some(v) = self.lambda {
            cfg.lambda = v;
        }
        let gl = &mut cfg.graph_learning;
        if let Some(v) = self.gamma {
            gl.gamma = v;
        }
        if let Some(v) = self.beta {
            gl.beta = v;
        }
        if let Some(v) = self.embed_dim {
            gl.embed_dim = v;
        }
        if self.no_projection {
            gl.use_projection = false;
        }
        if let Some(p) = self.prior_mode {
            gl.prior_mode = match p {
                PriorArg::None => PriorMode::None,
                PriorArg::Mask => PriorMode::Mask,
                PriorArg::Regularize => PriorMode::Regularize,
                PriorArg::MaskRegularize => PriorMode::MaskRegularize,
            };
        }
        if let Some(v) = self.max_epochs {
            cfg.train.max_epochs = v;
        }
        if let Some(v) = self.patience {
            cfg.train.patience = v;
        }
        if let Some(v) = self.lr {
            cfg.train.lr = v;
        }
        if let Some(m) = self.monitor {
            cfg.train.monitor = match m {
                MonitorArg::Total => Monitor::Total,
                MonitorArg::Ce => Monitor::Ce,
            };
        }
        if let Some(s) = &self.seeds {
            cfg.seeds = s.clone();
        }
        if let Some(o) = &self.out {
            cfg.output_dir = Some(o.clone());
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub run: RunArgs,
    /// Also export each learned graph, keeping entries above this value.
    #[arg(long)]
    pub export_graph_threshold: Option<f64>,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub run: RunArgs,
    #[arg(long, value_enum)]
    pub axis: Axis,
    /// Values along the axis, comma separated.
    #[arg(long, value_delimiter = ',', required = true)]
    pub values: Vec<String>,
    /// Models to compare (defaults to the configured model).
    #[arg(long, value_enum, value_delimiter = ',')]
    pub models: Option<Vec<ModelArg>>,
}

/// Where an export command finds the dataset the checkpoint was trained on.
#[derive(Debug, Args)]
#[group(required = true, multiple = false)]
pub struct DatasetArgs {
    /// Dataset directory.
    #[arg(long)]
    pub dataset: Option<PathBuf>,
    /// Run configuration whose dataset section to use.
    #[arg(long, short)]
    pub config: Option<PathBuf>,
}

impl DatasetArgs {
    pub fn source(&self) -> Result<DatasetSource> {
        match (&self.dataset, &self.config) {
            (Some(dir), _) => Ok(DatasetSource::Dir(dir.clone())),
            (None, Some(path)) => Ok(RunConfig::from_file(path)?.dataset),
            (None, None) => Err(Error::Config("pass --dataset or --config".into())),
        }
    }
}

#[derive(Debug, Args)]
pub struct ExportGraphArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[command(flatten)]
    pub data: DatasetArgs,
    /// Keep entries strictly above this value.
    #[arg(long, default_value_t = 0.0)]
    pub threshold: f64,
    #[arg(long, short)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ExportEmbeddingsArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[command(flatten)]
    pub data: DatasetArgs,
    /// Hidden layer, counted from 1.
    #[arg(long, default_value_t = 1)]
    pub layer: usize,
    #[arg(long, short)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct GenSynthArgs {
    #[arg(long, default_value_t = 200)]
    pub n_per_class: usize,
    #[arg(long, default_value_t = 3)]
    pub classes: usize,
    #[arg(long, default_value_t = 8)]
    pub dim: usize,
    #[arg(long, default_value_t = 0.2)]
    pub noise: f64,
    #[arg(long, default_value_t = 1.0)]
    pub separation: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Attach a k-NN Gaussian graph with this k.
    #[arg(long)]
    pub knn: Option<usize>,
    #[arg(long, short)]
    pub out: PathBuf,
}
