//! Full-batch training with validation-based early stopping.

use std::sync::Arc;
use std::time::Instant;

use log::debug;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::adjacency::{Adjacency, GraphPrior};
use crate::error::{Error, Result};
use crate::gconv::normalize_adjacency;
use crate::matrix::Matrix;
use crate::model::{
    accuracy, cross_entropy, joint_loss, label_mask, GcnModel, GlcnModel, Model, ModelConfig, ModelKind,
};
use crate::optim::{Adam, AdamConfig, EarlyStopping};
use crate::tensor::Tape;

/// Which validation quantity early stopping tracks.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Monitor {
    /// Validation cross-entropy plus the weighted graph loss.
    #[default]
    Total,
    /// Validation cross-entropy only.
    Ce,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub max_epochs: usize,
    pub patience: usize,
    pub lr: f64,
    pub seed: u64,
    pub monitor: Monitor,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            max_epochs: 3000,
            patience: 100,
            lr: 0.005,
            seed: 0,
            monitor: Monitor::Total,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_epochs == 0 {
            return Err(Error::Config("max_epochs must be positive".into()));
        }
        if self.patience > self.max_epochs {
            return Err(Error::Config(format!(
                "patience {} exceeds max_epochs {}",
                self.patience, self.max_epochs
            )));
        }
        if !self.lr.is_finite() || self.lr <= 0.0 {
            return Err(Error::Config(format!("lr must be > 0, got {}", self.lr)));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub train_ce: f64,
    /// Unweighted graph-learning loss; absent for the fixed-graph model.
    pub train_gl: Option<f64>,
    pub val_loss: f64,
    pub val_accuracy: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub model: ModelKind,
    pub seed: u64,
    pub epochs: Vec<EpochRecord>,
    pub stopped_epoch: usize,
    pub best_epoch: usize,
    pub best_val_loss: f64,
    /// Training cross-entropy of the restored (best) parameters.
    pub train_ce_at_best: f64,
    pub val_accuracy: f64,
    pub test_accuracy: f64,
    /// Excluded from the JSON form so reports are reproducible byte for byte.
    #[serde(skip)]
    pub wall_clock_seconds: f64,
}

impl TrainReport {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// Everything a training run reads besides the model.
#[derive(Clone, Debug)]
pub struct TrainData {
    pub features: Arc<Matrix>,
    pub labels: Vec<usize>,
    pub classes: usize,
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
    pub prior: Option<GraphPrior>,
}

impl TrainData {
    pub fn n(&self) -> usize {
        self.features.rows()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.n();
        if self.labels.len() != n {
            return Err(Error::Config(format!("{} labels for {n} nodes", self.labels.len())));
        }
        if let Some(&l) = self.labels.iter().find(|&&l| l >= self.classes) {
            return Err(Error::Config(format!(
                "label {l} out of range for {} classes",
                self.classes
            )));
        }
        for (name, idx) in [("train", &self.train), ("val", &self.val), ("test", &self.test)] {
            if idx.is_empty() {
                return Err(Error::Config(format!("{name} split is empty")));
            }
            if let Some(&i) = idx.iter().find(|&&i| i >= n) {
                return Err(Error::Config(format!("{name} index {i} out of range")));
            }
        }
        let mut seen = vec![false; n];
        for &i in self.train.iter().chain(&self.val).chain(&self.test) {
            if std::mem::replace(&mut seen[i], true) {
                return Err(Error::Config(format!("node {i} appears in more than one split")));
            }
        }
        if let Some(p) = &self.prior {
            if p.n() != n {
                return Err(Error::Config(format!("prior graph has {} nodes, features {n}", p.n())));
            }
        }
        Ok(())
    }
}

/// Trains `model` in place and returns the report. The model ends up holding
/// the parameters of the best validation epoch.
pub fn train<M: Model>(model: &mut M, data: &TrainData, cfg: &TrainConfig) -> Result<TrainReport> {
    cfg.validate()?;
    data.validate()?;
    let start = Instant::now();
    let names = model.param_names();
    let mut adam = Adam::new(
        AdamConfig {
            lr: cfg.lr,
            ..AdamConfig::default()
        },
        &model.params(),
    );
    let mut stopper = EarlyStopping::new(cfg.patience);
    let train_targets = Arc::new(label_mask(&data.labels, data.classes, &data.train));
    let val_targets = Arc::new(label_mask(&data.labels, data.classes, &data.val));
    let weight = model.graph_loss_weight();

    let mut epochs = Vec::new();
    let mut best = model.snapshot();
    let mut stopped_epoch = cfg.max_epochs;
    let mut last_finite = 0;

    for epoch in 1..=cfg.max_epochs {
        let mut tape = Tape::new();
        let x = tape.constant_shared(data.features.clone(), None);
        let fwd = model.forward(&mut tape, x, data.prior.as_ref())?;
        let y_train = tape.constant_shared(train_targets.clone(), None);
        let parts = joint_loss(&*model, &mut tape, &fwd, y_train)?;
        let y_val = tape.constant_shared(val_targets.clone(), None);
        let val_ce_t = cross_entropy(&mut tape, fwd.probs, y_val)?;

        let train_loss = tape.value(parts.total).item()?;
        let train_ce = tape.value(parts.ce).item()?;
        let train_gl = parts.gl.map(|g| tape.value(g).item()).transpose()?;
        let val_ce = tape.value(val_ce_t).item()?;
        let val_loss = match cfg.monitor {
            Monitor::Total => val_ce + weight * train_gl.unwrap_or(0.0),
            Monitor::Ce => val_ce,
        };
        if !train_loss.is_finite() || !val_loss.is_finite() {
            return Err(Error::Diverged {
                epoch,
                last_finite_epoch: last_finite,
            });
        }
        last_finite = epoch;
        let val_accuracy = accuracy(tape.value(fwd.probs), &data.labels, &data.val);
        epochs.push(EpochRecord {
            epoch,
            train_loss,
            train_ce,
            train_gl,
            val_loss,
            val_accuracy,
        });
        if stopper.observe(epoch, val_loss) {
            best = model.snapshot();
        }
        if epoch % 100 == 0 {
            debug!("epoch {epoch}: loss {train_loss:.5} ce {train_ce:.5} val {val_loss:.5} acc {val_accuracy:.4}");
        }
        if stopper.should_stop(epoch) {
            stopped_epoch = epoch;
            break;
        }

        tape.backward(parts.total)?;
        let grads: Vec<Matrix> = fwd
            .params
            .iter()
            .zip(model.params())
            .map(|(&t, p)| {
                tape.grad(t)
                    .cloned()
                    .unwrap_or_else(|| Matrix::zeros(p.rows(), p.cols()))
            })
            .collect();
        let grad_refs: Vec<&Matrix> = grads.iter().collect();
        adam.step(&mut model.params_mut(), &grad_refs, &names)?;
    }

    model.restore(&best)?;
    let eval = evaluate(&*model, data)?;
    let best_epoch = stopper.best_epoch();
    Ok(TrainReport {
        model: model.config().kind,
        seed: cfg.seed,
        train_ce_at_best: epochs[best_epoch - 1].train_ce,
        epochs,
        stopped_epoch,
        best_epoch,
        best_val_loss: stopper.best_loss(),
        val_accuracy: eval.val_accuracy,
        test_accuracy: eval.test_accuracy,
        wall_clock_seconds: start.elapsed().as_secs_f64(),
    })
}

#[derive(Clone, Debug)]
pub struct Evaluation {
    pub probs: Matrix,
    pub train_ce: f64,
    pub val_accuracy: f64,
    pub test_accuracy: f64,
}

/// Forward pass with the current parameters, no gradient step.
pub fn evaluate<M: Model + ?Sized>(model: &M, data: &TrainData) -> Result<Evaluation> {
    let mut tape = Tape::new();
    let x = tape.constant_shared(data.features.clone(), None);
    let fwd = model.forward(&mut tape, x, data.prior.as_ref())?;
    let y = tape.constant(label_mask(&data.labels, data.classes, &data.train));
    let ce = cross_entropy(&mut tape, fwd.probs, y)?;
    let probs = tape.value(fwd.probs).clone();
    Ok(Evaluation {
        train_ce: tape.value(ce).item()?,
        val_accuracy: accuracy(&probs, &data.labels, &data.val),
        test_accuracy: accuracy(&probs, &data.labels, &data.test),
        probs,
    })
}

/// A trained model of either kind.
#[derive(Clone, Debug)]
pub enum TrainedModel {
    Glcn(GlcnModel),
    Gcn(GcnModel),
}

impl TrainedModel {
    pub fn as_model(&self) -> &dyn Model {
        match self {
            TrainedModel::Glcn(m) => m,
            TrainedModel::Gcn(m) => m,
        }
    }
}

/// Builds a model from `model_cfg` (initialized from `train_cfg.seed`) and
/// trains it. The fixed-graph model propagates over `graph`; the GLCN model
/// ignores `graph` and reads its prior from `data.prior`.
pub fn fit(
    model_cfg: &ModelConfig,
    data: &TrainData,
    graph: Option<&Adjacency>,
    train_cfg: &TrainConfig,
) -> Result<(TrainedModel, TrainReport)> {
    let mut rng = ChaCha8Rng::seed_from_u64(train_cfg.seed);
    match model_cfg.kind {
        ModelKind::Glcn => {
            model_cfg.graph.validate(data.prior.is_some())?;
            let mut model = GlcnModel::new(model_cfg.clone(), &mut rng)?;
            let report = train(&mut model, data, train_cfg)?;
            Ok((TrainedModel::Glcn(model), report))
        }
        ModelKind::Gcn => {
            let adj = graph.ok_or_else(|| Error::Config("the gcn model needs a graph".into()))?;
            let mut model = GcnModel::new(model_cfg.clone(), normalize_adjacency(adj), &mut rng)?;
            let report = train(&mut model, data, train_cfg)?;
            Ok((TrainedModel::Gcn(model), report))
        }
    }
}
