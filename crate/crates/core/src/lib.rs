//! Graph learning-convolutional networks for semi-supervised node
//! classification.
//!
//! The crate is built bottom-up:
//!
//! * [`tensor`]: a dense reverse-mode autodiff tape.
//! * [`graph_learn`]: learns a row-stochastic graph `S` from node features.
//! * [`gconv`]: graph convolutions over a fixed normalized adjacency or `S`.
//! * [`model`]: the GLCN model, the fixed-graph GCN baseline and their losses.
//! * [`optim`] and [`train`]: ADAM, Glorot init, early-stopped training.
//! * [`data`]: dataset I/O, splits, k-NN prior graphs, synthetic blobs.

pub mod adjacency;
pub mod checkpoint;
pub mod data;
pub mod error;
pub mod gconv;
pub mod gradcheck;
pub mod graph_learn;
pub mod matrix;
pub mod model;
pub mod optim;
pub mod tensor;
pub mod train;

pub use adjacency::{Adjacency, GraphPrior};
pub use checkpoint::{Checkpoint, InputPipeline};
pub use data::{Dataset, GraphSource, Sigma, SplitSpec, Splits, SynthSpec};
pub use error::{Error, Result};
pub use gconv::{normalize_adjacency, Activation, GraphConvLayer, NormalizedAdjacency};
pub use graph_learn::{GraphLearnConfig, GraphLearnParams, PriorMode};
pub use matrix::{Matrix, Support};
pub use model::{GcnModel, GlcnModel, Model, ModelConfig, ModelKind};
pub use tensor::{Tape, Tensor, WeightMask};
pub use train::{fit, train, Monitor, TrainConfig, TrainData, TrainReport, TrainedModel};
