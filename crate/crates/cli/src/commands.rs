use std::fs;
use std::path::{Path, PathBuf};

use glcn_core::data::{knn_gaussian_graph, save_dir, synth_blobs};
use glcn_core::{
    fit, Adjacency, Checkpoint, Dataset, Error, GraphPrior, InputPipeline, Model, ModelKind, Result, Sigma, SynthSpec,
    Tape, TrainReport, TrainedModel,
};
use log::info;
use serde::Serialize;

use crate::args::{Axis, ExportEmbeddingsArgs, ExportGraphArgs, GenSynthArgs, SweepArgs, TrainArgs};
use crate::config::{prepare, Prepared, RunConfig};
use crate::summary::Stats;

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn output_dir(cfg: &RunConfig) -> Result<PathBuf> {
    cfg.output_dir
        .clone()
        .ok_or_else(|| Error::Config("no output directory; pass --out or set output_dir".into()))
}

fn node_name(ds: &Dataset, i: usize) -> String {
    ds.names.as_ref().map_or_else(|| i.to_string(), |n| n[i].clone())
}

/// Trains one seed of `cfg` on prepared data.
fn run_seed(cfg: &RunConfig, prep: &Prepared, seed: u64) -> Result<(TrainedModel, TrainReport)> {
    let splits = cfg.splits(&prep.dataset, seed)?;
    let prior = match cfg.model {
        ModelKind::Glcn => prep.graph.as_ref(),
        ModelKind::Gcn => None,
    };
    let data = prep.dataset.train_data(&splits, prior);
    let model_cfg = cfg.model_config(&prep.dataset);
    model_cfg.validate()?;
    fit(&model_cfg, &data, prep.graph.as_ref(), &cfg.train.with_seed(seed))
}

/// Fails before any training if a seed's split cannot be drawn.
fn check_splits(cfg: &RunConfig, prep: &Prepared) -> Result<()> {
    for &seed in &cfg.seeds {
        cfg.splits(&prep.dataset, seed)?.validate(prep.dataset.n())?;
    }
    Ok(())
}

#[derive(Serialize)]
struct RunSummary {
    seed: u64,
    test_accuracy: f64,
    val_accuracy: f64,
    best_epoch: usize,
    stopped_epoch: usize,
}

#[derive(Serialize)]
struct TrainSummary {
    model: ModelKind,
    seeds: Vec<u64>,
    test_accuracy: Stats,
    val_accuracy: Stats,
    /// `mean ± std` of the test accuracy.
    table: String,
    runs: Vec<RunSummary>,
}

#[derive(Serialize)]
struct Timing {
    seed: u64,
    wall_clock_seconds: f64,
}

pub fn train(args: &TrainArgs) -> Result<()> {
    let mut cfg = args.run.resolve()?;
    if args.export_graph_threshold.is_some() {
        cfg.export_graph_threshold = args.export_graph_threshold;
        cfg.validate()?;
    }
    let out = output_dir(&cfg)?;
    let prep = prepare(&cfg.dataset, cfg.normalize_features, &cfg.graph)?;
    check_splits(&cfg, &prep)?;
    create_dir(&out)?;
    write_json(&out.join("config.json"), &cfg)?;

    let pipeline = InputPipeline {
        normalize_features: cfg.normalize_features,
        graph: cfg.graph,
    };
    let mut runs = Vec::new();
    let mut timings = Vec::new();
    for &seed in &cfg.seeds {
        let (model, report) = run_seed(&cfg, &prep, seed)?;
        info!(
            "{} seed {seed}: test accuracy {:.4} (best epoch {}, stopped {})",
            cfg.model, report.test_accuracy, report.best_epoch, report.stopped_epoch
        );
        let dir = out.join(format!("seed-{seed}"));
        create_dir(&dir)?;
        fs::write(dir.join("report.json"), report.to_json()? + "\n").map_err(|e| Error::io(&dir, e))?;
        Checkpoint::capture(model.as_model(), pipeline.clone()).save(&dir.join("checkpoint.json"))?;
        if let (Some(t), TrainedModel::Glcn(_)) = (cfg.export_graph_threshold, &model) {
            write_graph(model.as_model(), &prep, t, &dir)?;
        }
        timings.push(Timing {
            seed,
            wall_clock_seconds: report.wall_clock_seconds,
        });
        runs.push(RunSummary {
            seed,
            test_accuracy: report.test_accuracy,
            val_accuracy: report.val_accuracy,
            best_epoch: report.best_epoch,
            stopped_epoch: report.stopped_epoch,
        });
    }
    let test = Stats::of(runs.iter().map(|r| r.test_accuracy));
    let summary = TrainSummary {
        model: cfg.model,
        seeds: cfg.seeds.clone(),
        table: test.table(),
        test_accuracy: test,
        val_accuracy: Stats::of(runs.iter().map(|r| r.val_accuracy)),
        runs,
    };
    write_json(&out.join("summary.json"), &summary)?;
    write_json(&out.join("timings.json"), &timings)?;
    println!(
        "{} test accuracy over {} seeds: {}",
        cfg.model,
        cfg.seeds.len(),
        summary.table
    );
    Ok(())
}

fn apply_axis(cfg: &mut RunConfig, axis: Axis, value: &str) -> Result<()> {
    let bad = || Error::Config(format!("bad {axis} value `{value}`"));
    match axis {
        Axis::Depth => {
            let depth: usize = value.trim().parse().map_err(|_| bad())?;
            let width = cfg.hidden.first().copied().unwrap_or(70);
            cfg.hidden = vec![width; depth];
        }
        Axis::Width => {
            let width: usize = value.trim().parse().map_err(|_| bad())?;
            let depth = cfg.hidden.len();
            cfg.hidden = vec![width; depth];
        }
        Axis::Lambda => cfg.lambda = value.trim().parse().map_err(|_| bad())?,
    }
    cfg.validate()
}

pub fn sweep(args: &SweepArgs) -> Result<()> {
    let base = args.run.resolve()?;
    if args.values.is_empty() {
        return Err(Error::Config("--values must not be empty".into()));
    }
    let models: Vec<ModelKind> = match &args.models {
        Some(m) if !m.is_empty() => m.iter().map(|&m| m.into()).collect(),
        _ => vec![base.model],
    };
    // Validate every cell before any training.
    let mut cells = Vec::new();
    for value in &args.values {
        for &model in &models {
            let mut cfg = base.clone();
            cfg.model = model;
            apply_axis(&mut cfg, args.axis, value)?;
            cells.push((value.trim().to_string(), cfg));
        }
    }
    let out = output_dir(&base)?;
    let prep = prepare(&base.dataset, base.normalize_features, &base.graph)?;
    check_splits(&base, &prep)?;
    create_dir(&out.join("runs"))?;
    write_json(&out.join("config.json"), &base)?;

    let mut long = csv::Writer::from_path(out.join("sweep.csv"))?;
    long.write_record([
        "axis",
        "value",
        "model",
        "seed",
        "test_accuracy",
        "val_accuracy",
        "best_epoch",
        "stopped_epoch",
    ])?;
    let mut summary = csv::Writer::from_path(out.join("sweep_summary.csv"))?;
    summary.write_record([
        "axis",
        "value",
        "model",
        "runs",
        "mean_test_accuracy",
        "std_test_accuracy",
    ])?;
    for (value, cfg) in &cells {
        let mut accs = Vec::new();
        for &seed in &cfg.seeds {
            let (_, report) = run_seed(cfg, &prep, seed)?;
            let name = format!("{}_{}-{}_seed-{seed}.json", cfg.model, args.axis, value);
            fs::write(out.join("runs").join(&name), report.to_json()? + "\n")
                .map_err(|e| Error::io(out.join("runs").join(&name), e))?;
            long.write_record([
                args.axis.to_string(),
                value.clone(),
                cfg.model.to_string(),
                seed.to_string(),
                format!("{:.4}", report.test_accuracy),
                format!("{:.4}", report.val_accuracy),
                report.best_epoch.to_string(),
                report.stopped_epoch.to_string(),
            ])?;
            accs.push(report.test_accuracy);
        }
        let stats = Stats::of(accs.into_iter());
        info!("{} {}={value}: {}", cfg.model, args.axis, stats.table());
        println!(
            "{:<6} {}={:<8} {}",
            cfg.model.to_string(),
            args.axis,
            value,
            stats.table()
        );
        summary.write_record([
            args.axis.to_string(),
            value.clone(),
            cfg.model.to_string(),
            cfg.seeds.len().to_string(),
            format!("{:.4}", stats.mean),
            format!("{:.4}", stats.std),
        ])?;
    }
    long.flush().map_err(|e| Error::io(out.join("sweep.csv"), e))?;
    summary
        .flush()
        .map_err(|e| Error::io(out.join("sweep_summary.csv"), e))?;
    Ok(())
}

/// Reloads a checkpoint against its dataset, rebuilding the graph with the
/// recorded pipeline.
fn load_for_export(checkpoint: &Path, data: &crate::args::DatasetArgs) -> Result<(TrainedModel, Prepared)> {
    let ckpt = Checkpoint::load(checkpoint)?;
    let prep = prepare(&data.source()?, ckpt.inputs.normalize_features, &ckpt.inputs.graph)?;
    if prep.dataset.dim() != ckpt.model.input_dim {
        return Err(Error::Dimension {
            op: "checkpoint input",
            lhs: (prep.dataset.n(), prep.dataset.dim()),
            rhs: (prep.dataset.n(), ckpt.model.input_dim),
        });
    }
    let model = ckpt.into_model(prep.graph.as_ref())?;
    Ok((model, prep))
}

fn prior_of(graph: &Option<Adjacency>) -> Option<GraphPrior> {
    graph.as_ref().map(GraphPrior::new)
}

fn write_graph(model: &dyn Model, prep: &Prepared, threshold: f64, out: &Path) -> Result<()> {
    let prior = prior_of(&prep.graph);
    let mut tape = Tape::new();
    let x = tape.constant(prep.dataset.features.clone());
    let fwd = model.forward(&mut tape, x, prior.as_ref())?;
    let s = tape.value(fwd.graph.expect("glcn forward yields a graph"));
    let ds = &prep.dataset;

    create_dir(out)?;
    let path = out.join("graph.csv");
    let mut w = csv::Writer::from_path(&path)?;
    w.write_record(["source", "target", "weight"])?;
    let mut kept = 0;
    for i in 0..s.rows() {
        for (j, &v) in s.row(i).iter().enumerate() {
            if v > threshold {
                w.write_record([node_name(ds, i), node_name(ds, j), v.to_string()])?;
                kept += 1;
            }
        }
    }
    w.flush().map_err(|e| Error::io(&path, e))?;

    let path = out.join("row_sums.csv");
    let mut w = csv::Writer::from_path(&path)?;
    w.write_record(["node", "row_sum"])?;
    let mut worst = 0.0f64;
    for i in 0..s.rows() {
        let sum: f64 = s.row(i).iter().sum();
        worst = worst.max((sum - 1.0).abs());
        w.write_record([node_name(ds, i), sum.to_string()])?;
    }
    w.flush().map_err(|e| Error::io(&path, e))?;
    println!(
        "{kept} entries above {threshold}; {} rows, max |row sum - 1| = {worst:.3e}",
        s.rows()
    );
    Ok(())
}

pub fn export_graph(args: &ExportGraphArgs) -> Result<()> {
    if !args.threshold.is_finite() || args.threshold < 0.0 {
        return Err(Error::Config(format!("threshold must be >= 0, got {}", args.threshold)));
    }
    let (model, prep) = load_for_export(&args.checkpoint, &args.data)?;
    if let TrainedModel::Gcn(_) = model {
        return Err(Error::Config("gcn checkpoints have no learned graph".into()));
    }
    write_graph(model.as_model(), &prep, args.threshold, &args.out)
}

pub fn export_embeddings(args: &ExportEmbeddingsArgs) -> Result<()> {
    let (model, prep) = load_for_export(&args.checkpoint, &args.data)?;
    let model = model.as_model();
    let depth = model.config().hidden.len();
    if args.layer == 0 || args.layer > depth {
        return Err(Error::Config(if depth == 0 {
            "the model has no hidden layers".to_string()
        } else {
            format!("layer {} out of range; valid layers are 1..={depth}", args.layer)
        }));
    }
    let prior = prior_of(&prep.graph);
    let mut tape = Tape::new();
    let x = tape.constant(prep.dataset.features.clone());
    let fwd = model.forward(&mut tape, x, prior.as_ref())?;
    let h = tape.value(fwd.hidden[args.layer - 1]);
    let ds = &prep.dataset;

    create_dir(&args.out)?;
    let path = args.out.join("embeddings.csv");
    let mut w = csv::Writer::from_path(&path)?;
    let mut header = vec!["node".to_string()];
    header.extend((0..h.cols()).map(|k| format!("h{k}")));
    header.push("label".into());
    w.write_record(&header)?;
    for i in 0..h.rows() {
        let mut rec = vec![node_name(ds, i)];
        rec.extend(h.row(i).iter().map(|v| v.to_string()));
        rec.push(ds.class_names[ds.labels[i]].clone());
        w.write_record(&rec)?;
    }
    w.flush().map_err(|e| Error::io(&path, e))?;
    println!(
        "wrote {} x {} activations of layer {} to {}",
        h.rows(),
        h.cols(),
        args.layer,
        path.display()
    );
    Ok(())
}

pub fn gen_synth(args: &GenSynthArgs) -> Result<()> {
    if args.n_per_class == 0 || args.classes < 2 || args.dim == 0 {
        return Err(Error::Config("need n_per_class >= 1, classes >= 2 and dim >= 1".into()));
    }
    if !args.noise.is_finite() || args.noise < 0.0 {
        return Err(Error::Config(format!("noise must be >= 0, got {}", args.noise)));
    }
    let spec = SynthSpec {
        n_per_class: args.n_per_class,
        classes: args.classes,
        dim: args.dim,
        noise: args.noise,
        separation: args.separation,
        seed: args.seed,
    };
    let mut ds = synth_blobs(&spec);
    if let Some(k) = args.knn {
        ds.adjacency = Some(knn_gaussian_graph(&ds.features, k, Sigma::Auto)?);
    }
    save_dir(&ds, &args.out)?;
    write_json(&args.out.join("synth.json"), &spec)?;
    println!(
        "wrote {} nodes, {} classes to {}",
        ds.n(),
        ds.classes(),
        args.out.display()
    );
    Ok(())
}
