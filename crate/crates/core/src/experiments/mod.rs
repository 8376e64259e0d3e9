//! Config-driven experiment runners. Every run writes its CSVs plus a
//! `manifest.json` holding the resolved config, which can be fed back in as a
//! config to reproduce the run.
//!
//! Cells (model x seed, or seed x epsilon) run on the rayon pool; results are
//! collected in cell order so output files do not depend on scheduling.

mod config;

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::Serialize;
use serde_json::json;

pub use config::{
    apply_override, BoundaryConfig, DatasetSpec, ExperimentConfig, ExperimentKind, NoiseSweepConfig, MANIFEST_KEY,
};

use crate::checkpoint::Checkpoint;
use crate::datasets::{
    filter_binary, load_idx, make_two_moons, pca_reduce, scale_dataset, Dataset, PcaBasis, Scaler, Split,
};
use crate::error::{QmoeError, Result};
use crate::metrics::{compute_metrics, median};
use crate::models::{argmax, count_parameters, efficiency_ratio, HybridModel, ModelSpec, RouterSpec};
use crate::noise::NoiseOptions;
use crate::rng::{derived_seed, stream_rng_offset, Stream};
use crate::training::{fit, TrainConfig, TrainTrace};

pub const MANIFEST_FILE: &str = "manifest.json";
pub const MANIFEST_VERSION: u32 = 1;

/// Metrics for one (model, seed[, epsilon]) cell.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunRecord {
    pub model: String,
    pub router: String,
    pub seed: u64,
    pub epsilon: Option<f64>,
    pub accuracy: f64,
    pub f1: f64,
    pub params_router: usize,
    pub params_total: usize,
    pub eta_router: f64,
    pub eta_total: f64,
    pub epochs_run: usize,
    pub best_epoch: Option<usize>,
    /// First epoch with validation accuracy >= 0.9.
    pub epochs_to_90: Option<usize>,
    pub wall_ms: f64,
}

/// Median over seeds; eta is recomputed from the median accuracy.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SummaryRecord {
    pub model: String,
    pub router: String,
    pub epsilon: Option<f64>,
    pub n_seeds: usize,
    pub accuracy: f64,
    pub f1: f64,
    pub params_router: usize,
    pub params_total: usize,
    pub eta_router: f64,
    pub eta_total: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricsReport {
    pub kind: ExperimentKind,
    pub runs: Vec<RunRecord>,
    /// Noise sweep only: the noiseless classical reference, one row per seed.
    pub baseline: Vec<RunRecord>,
    pub summary: Vec<SummaryRecord>,
    /// Files written, relative to the output directory.
    pub files: Vec<PathBuf>,
}

/// One seed's dataset after splitting, optional PCA and angle scaling.
#[derive(Debug, Clone)]
pub struct PreparedData {
    pub seed: u64,
    /// Model inputs.
    pub dataset: Dataset,
    /// Features before angle scaling (after PCA, if any).
    pub unscaled: Dataset,
    pub pca: Option<PcaBasis>,
    pub scaler: Scaler,
}

/// Loads whatever the dataset spec needs from disk (nothing for synthetic data).
pub fn load_source(spec: &DatasetSpec) -> Result<Option<Dataset>> {
    match spec {
        DatasetSpec::TwoMoons { .. } => Ok(None),
        DatasetSpec::Idx { images, labels, .. } => load_idx(images, labels).map(Some),
    }
}

/// Builds the seed's splits. Every model trained on this seed sees the same rows.
pub fn prepare_data(spec: &DatasetSpec, source: Option<&Dataset>, seed: u64) -> Result<PreparedData> {
    let (unscaled, pca) = match spec {
        DatasetSpec::TwoMoons {
            n_samples,
            noise_sd,
            test_fraction,
        } => {
            let ds = make_two_moons(*n_samples, *noise_sd, derived_seed(seed, Stream::Data))?;
            (
                ds.with_test_fraction(*test_fraction, derived_seed(seed, Stream::Split))?,
                None,
            )
        }
        DatasetSpec::Idx {
            class_a,
            class_b,
            n_train,
            n_test,
            pca_dims,
            ..
        } => {
            let source = source.ok_or_else(|| QmoeError::Data("IDX source not loaded".into()))?;
            let ds = filter_binary(
                source,
                *class_a,
                *class_b,
                *n_train,
                *n_test,
                derived_seed(seed, Stream::Split),
            )?;
            match pca_dims {
                Some(k) => {
                    let (reduced, basis) = pca_reduce(ds, *k)?;
                    (reduced, Some(basis))
                }
                None => (ds, None),
            }
        }
    };
    let (dataset, scaler) = scale_dataset(unscaled.clone())?;
    Ok(PreparedData {
        seed,
        dataset,
        unscaled,
        pca,
        scaler,
    })
}

fn prepare_seeds(config: &ExperimentConfig, seeds: &[u64]) -> Result<Vec<PreparedData>> {
    let source = load_source(&config.dataset)?;
    seeds
        .par_iter()
        .map(|&s| prepare_data(&config.dataset, source.as_ref(), s))
        .collect()
}

#[derive(Debug, Clone)]
pub struct TrainedCell {
    pub name: String,
    pub model: HybridModel,
    pub trace: TrainTrace,
    pub record: RunRecord,
}

/// A trained or checkpoint-loaded model ready for evaluation.
struct Loaded {
    name: String,
    model: HybridModel,
    trace: Option<TrainTrace>,
    record: RunRecord,
}

impl From<TrainedCell> for Loaded {
    fn from(c: TrainedCell) -> Self {
        Self {
            name: c.name,
            model: c.model,
            trace: Some(c.trace),
            record: c.record,
        }
    }
}

fn load_checkpoint_model(ck: Checkpoint, data: &PreparedData) -> Result<Loaded> {
    let (xs, ys) = test_split(data);
    let preds = xs.iter().map(|x| ck.model.predict(x)).collect::<Result<Vec<_>>>()?;
    let record = make_record(&ck.model_name, &ck.model, data.seed, None, &preds, &ys, None)?;
    Ok(Loaded {
        name: ck.model_name,
        model: ck.model,
        trace: None,
        record,
    })
}

fn test_split(data: &PreparedData) -> (Vec<&[f64]>, Vec<usize>) {
    (data.dataset.rows(Split::Test), data.dataset.split_labels(Split::Test))
}

fn make_record(
    name: &str,
    model: &HybridModel,
    seed: u64,
    epsilon: Option<f64>,
    predictions: &[usize],
    labels: &[usize],
    trace: Option<&TrainTrace>,
) -> Result<RunRecord> {
    let (accuracy, f1) = compute_metrics(predictions, labels)?;
    let counts = count_parameters(model);
    Ok(RunRecord {
        model: name.into(),
        router: model.router().kind().into(),
        seed,
        epsilon,
        accuracy,
        f1,
        params_router: counts.router,
        params_total: counts.total,
        eta_router: efficiency_ratio(accuracy, counts.router)?,
        eta_total: efficiency_ratio(accuracy, counts.total)?,
        epochs_run: trace.map_or(0, |t| t.records.len()),
        best_epoch: trace.and_then(|t| t.best_epoch),
        epochs_to_90: trace.and_then(|t| t.epochs_to_val_accuracy(0.9)),
        wall_ms: 0.0,
    })
}

/// Initializes the model from (seed, position in the config), trains it and
/// scores it on the test split.
pub fn train_cell(
    spec: &ModelSpec,
    model_index: usize,
    data: &PreparedData,
    train: &TrainConfig,
) -> Result<TrainedCell> {
    let started = Instant::now();
    let mut rng = stream_rng_offset(data.seed, Stream::Init, model_index as u64);
    let model = HybridModel::init(spec, data.dataset.dim(), data.dataset.n_classes(), &mut rng)?;
    let cfg = TrainConfig {
        seed: data.seed,
        ..train.clone()
    };
    let (model, trace) = fit(model, &data.dataset, &cfg)?;
    let (xs, ys) = test_split(data);
    let preds = xs.iter().map(|x| model.predict(x)).collect::<Result<Vec<_>>>()?;
    let mut record = make_record(&spec.name, &model, data.seed, None, &preds, &ys, Some(&trace))?;
    record.wall_ms = started.elapsed().as_secs_f64() * 1e3;
    Ok(TrainedCell {
        name: spec.name.clone(),
        model,
        trace,
        record,
    })
}

/// Trains every (model, seed) pair; results are model-major.
fn train_grid(config: &ExperimentConfig, data: &[PreparedData]) -> Result<Vec<TrainedCell>> {
    let cells: Vec<(usize, &PreparedData)> = (0..config.models.len())
        .flat_map(|m| data.iter().map(move |d| (m, d)))
        .collect();
    cells
        .par_iter()
        .map(|&(m, d)| train_cell(&config.models[m], m, d, &config.train))
        .collect()
}

fn summarize(runs: &[RunRecord]) -> Result<Vec<SummaryRecord>> {
    let mut keys: Vec<(String, Option<u64>)> = Vec::new();
    for r in runs {
        let key = (r.model.clone(), r.epsilon.map(f64::to_bits));
        if !keys.contains(&key) {
            keys.push(key);
        }
    }
    keys.into_iter()
        .map(|(model, eps)| {
            let group: Vec<&RunRecord> = runs
                .iter()
                .filter(|r| r.model == model && r.epsilon.map(f64::to_bits) == eps)
                .collect();
            let first = group[0];
            let accuracy = median(&group.iter().map(|r| r.accuracy).collect::<Vec<_>>());
            Ok(SummaryRecord {
                model,
                router: first.router.clone(),
                epsilon: eps.map(f64::from_bits),
                n_seeds: group.len(),
                accuracy,
                f1: median(&group.iter().map(|r| r.f1).collect::<Vec<_>>()),
                params_router: first.params_router,
                params_total: first.params_total,
                eta_router: efficiency_ratio(accuracy, first.params_router)?,
                eta_total: efficiency_ratio(accuracy, first.params_total)?,
            })
        })
        .collect()
}

fn opt<T: ToString>(v: Option<T>) -> String {
    v.map_or_else(String::new, |x| x.to_string())
}

/// Writes one CSV and records its name.
struct Output {
    dir: PathBuf,
    files: Vec<PathBuf>,
}

impl Output {
    fn new(dir: &Path) -> Result<Self> {
        fs::create_dir_all(dir).map_err(|e| QmoeError::io(dir, e))?;
        Ok(Self {
            dir: dir.to_path_buf(),
            files: Vec::new(),
        })
    }

    fn path(&mut self, name: &str) -> Result<PathBuf> {
        let path = self.dir.join(name);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent).map_err(|e| QmoeError::io(parent, e))?;
        }
        self.files.push(PathBuf::from(name));
        Ok(path)
    }

    fn csv(&mut self, name: &str, header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> Result<()> {
        let path = self.path(name)?;
        let mut w = csv::Writer::from_path(&path)?;
        w.write_record(header)?;
        for row in rows {
            w.write_record(&row)?;
        }
        w.flush().map_err(|e| QmoeError::io(&path, e))?;
        Ok(())
    }

    fn trace(&mut self, cell: &TrainedCell) -> Result<()> {
        let name = format!("traces/{}_seed{}.csv", cell.name, cell.record.seed);
        let path = self.path(&name)?;
        cell.trace.write_csv(&path, cell.model.n_experts())
    }

    fn loaded_trace(&mut self, cell: &Loaded) -> Result<()> {
        if let Some(t) = &cell.trace {
            let path = self.path(&format!("traces/{}_seed{}.csv", cell.name, cell.record.seed))?;
            t.write_csv(&path, cell.model.n_experts())?;
        }
        Ok(())
    }

    fn manifest(&mut self, config: &ExperimentConfig, data: &[PreparedData], extra: serde_json::Value) -> Result<()> {
        let path = self.path(MANIFEST_FILE)?;
        let manifest = json!({
            MANIFEST_KEY: MANIFEST_VERSION,
            "tool": "qmoe",
            "version": env!("CARGO_PKG_VERSION"),
            "kind": config.kind,
            "seeds": data.iter().map(|d| d.seed).collect::<Vec<_>>(),
            "config": config.to_value(),
            "dataset_provenance": data
                .iter()
                .map(|d| json!({"seed": d.seed, "steps": d.dataset.provenance()}))
                .collect::<Vec<_>>(),
            "outputs": self.files.iter().filter(|f| f.as_os_str() != MANIFEST_FILE).collect::<Vec<_>>(),
            "extra": extra,
        });
        let text = serde_json::to_string_pretty(&manifest)?;
        fs::write(&path, text).map_err(|e| QmoeError::io(&path, e))
    }
}

const RUN_HEADER: [&str; 13] = [
    "model",
    "router",
    "seed",
    "accuracy",
    "f1",
    "params_router",
    "params_total",
    "eta_router",
    "eta_total",
    "epochs_run",
    "best_epoch",
    "epochs_to_90",
    "wall_ms",
];

fn run_row(r: &RunRecord) -> Vec<String> {
    vec![
        r.model.clone(),
        r.router.clone(),
        r.seed.to_string(),
        r.accuracy.to_string(),
        r.f1.to_string(),
        r.params_router.to_string(),
        r.params_total.to_string(),
        r.eta_router.to_string(),
        r.eta_total.to_string(),
        r.epochs_run.to_string(),
        opt(r.best_epoch),
        opt(r.epochs_to_90),
        format!("{:.3}", r.wall_ms),
    ]
}

const SUMMARY_HEADER: [&str; 9] = [
    "model",
    "router",
    "n_seeds",
    "accuracy",
    "f1",
    "params_router",
    "params_total",
    "eta_router",
    "eta_total",
];

fn summary_row(s: &SummaryRecord) -> Vec<String> {
    vec![
        s.model.clone(),
        s.router.clone(),
        s.n_seeds.to_string(),
        s.accuracy.to_string(),
        s.f1.to_string(),
        s.params_router.to_string(),
        s.params_total.to_string(),
        s.eta_router.to_string(),
        s.eta_total.to_string(),
    ]
}

/// Shared body of ablation and param sweep: train every model on every seed.
fn run_training_table(config: &ExperimentConfig, prefix: &str) -> Result<MetricsReport> {
    let data = prepare_seeds(config, &config.seeds)?;
    let cells = train_grid(config, &data)?;
    let runs: Vec<RunRecord> = cells.iter().map(|c| c.record.clone()).collect();
    let summary = summarize(&runs)?;
    let mut out = Output::new(&config.output_dir)?;
    out.csv(&format!("{prefix}_runs.csv"), &RUN_HEADER, runs.iter().map(run_row))?;
    out.csv(
        &format!("{prefix}_summary.csv"),
        &SUMMARY_HEADER,
        summary.iter().map(summary_row),
    )?;
    for c in &cells {
        out.trace(c)?;
    }
    out.manifest(config, &data, json!(null))?;
    Ok(MetricsReport {
        kind: config.kind,
        runs,
        baseline: Vec::new(),
        summary,
        files: out.files,
    })
}

/// Trains each model on each seed with shared splits; writes per-seed rows,
/// a median summary and per-cell training traces.
pub fn run_ablation(config: &ExperimentConfig) -> Result<MetricsReport> {
    run_training_table(config, "ablation")
}

/// Same protocol as the ablation; each model entry is one point of the
/// accuracy-versus-parameters frontier.
pub fn run_param_sweep(config: &ExperimentConfig) -> Result<MetricsReport> {
    run_training_table(config, "param_sweep")
}

fn find_model<'a>(
    config: &'a ExperimentConfig,
    name: Option<&str>,
    default: impl Fn(&RouterSpec) -> bool,
    what: &str,
) -> Result<Option<(usize, &'a ModelSpec)>> {
    match name {
        Some(n) => config
            .models
            .iter()
            .enumerate()
            .find(|(_, m)| m.name == n)
            .map(Some)
            .ok_or_else(|| QmoeError::Config(format!("noise.{what}: no model named {n:?}"))),
        None => Ok(config.models.iter().enumerate().find(|(_, m)| default(&m.router))),
    }
}

/// Loads the configured checkpoint and checks it against the seed's data.
fn checkpoint_for(config: &ExperimentConfig) -> Result<Option<(Checkpoint, PreparedData)>> {
    let Some(path) = &config.checkpoint else {
        return Ok(None);
    };
    let ck = Checkpoint::load(path)?;
    let data = prepare_seeds(config, &[ck.seed])?.remove(0);
    if data.scaler != ck.scaler || data.pca != ck.pca {
        return Err(QmoeError::Data(format!(
            "{}: checkpoint preprocessing does not match the configured dataset for seed {}",
            path.display(),
            ck.seed
        )));
    }
    Ok(Some((ck, data)))
}

/// Evaluates the quantum-routed model on the test split with depolarizing
/// noise on its routing circuit, for every epsilon and seed, next to a
/// noiseless classical baseline trained on the same splits.
pub fn run_noise_sweep(config: &ExperimentConfig) -> Result<MetricsReport> {
    let is_quantum = |r: &RouterSpec| matches!(r, RouterSpec::Quantum { .. });
    let is_linear = |r: &RouterSpec| matches!(r, RouterSpec::Linear);
    let baseline_spec = find_model(
        config,
        config.noise.baseline_model.as_deref(),
        is_linear,
        "baseline_model",
    )?;
    let options = NoiseOptions {
        noisy_embedding: config.noise.noisy_embedding,
    };

    let (data, quantum): (Vec<PreparedData>, Vec<Loaded>) = match checkpoint_for(config)? {
        Some((ck, d)) => {
            let q = load_checkpoint_model(ck, &d)?;
            (vec![d], vec![q])
        }
        None => {
            let (qi, qspec) = find_model(
                config,
                config.noise.quantum_model.as_deref(),
                is_quantum,
                "quantum_model",
            )?
            .ok_or_else(|| QmoeError::Config("models: the noise sweep needs a quantum-routed model".into()))?;
            let data = prepare_seeds(config, &config.seeds)?;
            let trained = data
                .par_iter()
                .map(|d| train_cell(qspec, qi, d, &config.train))
                .collect::<Result<Vec<_>>>()?;
            let q = trained.into_iter().map(Loaded::from).collect();
            (data, q)
        }
    };
    let baseline: Vec<TrainedCell> = match baseline_spec {
        Some((bi, bspec)) => data
            .par_iter()
            .map(|d| train_cell(bspec, bi, d, &config.train))
            .collect::<Result<Vec<_>>>()?,
        None => Vec::new(),
    };

    let cells: Vec<(usize, f64)> = (0..data.len())
        .flat_map(|s| config.noise.epsilons.iter().map(move |&e| (s, e)))
        .collect();
    let runs = cells
        .par_iter()
        .map(|&(s, eps)| {
            let Loaded {
                name,
                model,
                trace,
                record,
            } = &quantum[s];
            let started = Instant::now();
            let (xs, ys) = test_split(&data[s]);
            let preds = xs
                .iter()
                .map(|x| model.forward_noisy(x, eps, options).map(|f| argmax(&f.logits)))
                .collect::<Result<Vec<_>>>()?;
            let mut rec = make_record(name, model, data[s].seed, Some(eps), &preds, &ys, trace.as_ref())?;
            rec.wall_ms = record.wall_ms + started.elapsed().as_secs_f64() * 1e3;
            Ok(rec)
        })
        .collect::<Result<Vec<_>>>()?;

    let baseline_runs: Vec<RunRecord> = baseline.iter().map(|c| c.record.clone()).collect();
    let mut summary = summarize(&runs)?;
    summary.extend(summarize(&baseline_runs)?);

    let mut out = Output::new(&config.output_dir)?;
    let base_for = |seed: u64| baseline_runs.iter().find(|b| b.seed == seed);
    out.csv(
        "noise_sweep_runs.csv",
        &[
            "seed",
            "epsilon",
            "model",
            "accuracy",
            "f1",
            "baseline_model",
            "baseline_accuracy",
            "baseline_f1",
        ],
        runs.iter().map(|r| {
            let b = base_for(r.seed);
            vec![
                r.seed.to_string(),
                opt(r.epsilon),
                r.model.clone(),
                r.accuracy.to_string(),
                r.f1.to_string(),
                b.map_or_else(String::new, |b| b.model.clone()),
                opt(b.map(|b| b.accuracy)),
                opt(b.map(|b| b.f1)),
            ]
        }),
    )?;
    let base_summary = summary.iter().find(|s| s.epsilon.is_none()).cloned();
    out.csv(
        "noise_sweep_summary.csv",
        &[
            "epsilon",
            "accuracy",
            "f1",
            "baseline_accuracy",
            "baseline_f1",
            "n_seeds",
        ],
        summary.iter().filter(|s| s.epsilon.is_some()).map(|s| {
            vec![
                opt(s.epsilon),
                s.accuracy.to_string(),
                s.f1.to_string(),
                opt(base_summary.as_ref().map(|b| b.accuracy)),
                opt(base_summary.as_ref().map(|b| b.f1)),
                s.n_seeds.to_string(),
            ]
        }),
    )?;
    for q in &quantum {
        out.loaded_trace(q)?;
    }
    for c in &baseline {
        out.trace(c)?;
    }
    let extra = json!({"checkpoint_seed": config.checkpoint.as_ref().map(|_| data[0].seed)});
    out.manifest(config, &data, extra)?;
    Ok(MetricsReport {
        kind: config.kind,
        runs,
        baseline: baseline_runs,
        summary,
        files: out.files,
    })
}

/// Axis coordinates of a G-point grid over [lo, hi]; a single point sits at the center.
pub fn grid_axis(lo: f64, hi: f64, g: usize) -> Vec<f64> {
    if g == 1 {
        return vec![0.5 * (lo + hi)];
    }
    (0..g).map(|i| lo + (hi - lo) * i as f64 / (g - 1) as f64).collect()
}

/// Bounding box of every row, widened by `margin` times each axis' range.
pub fn bounding_box(rows: &[Vec<f64>], margin: f64) -> Vec<(f64, f64)> {
    let d = rows.first().map_or(0, Vec::len);
    (0..d)
        .map(|j| {
            let lo = rows.iter().map(|r| r[j]).fold(f64::INFINITY, f64::min);
            let hi = rows.iter().map(|r| r[j]).fold(f64::NEG_INFINITY, f64::max);
            let pad = margin * (hi - lo);
            (lo - pad, hi + pad)
        })
        .collect()
}

/// One grid point: raw coordinates, predicted class, gate.
#[derive(Debug, Clone, PartialEq)]
pub struct GridPoint {
    pub x: [f64; 2],
    pub class: usize,
    pub gate: Vec<f64>,
}

/// Evaluates `model` on a G x G grid given in raw feature coordinates; rows
/// are x0-major. Points outside the training range are scaled without clipping.
pub fn boundary_grid(
    model: &HybridModel,
    scaler: &Scaler,
    bounds: [(f64, f64); 2],
    g: usize,
) -> Result<Vec<GridPoint>> {
    let xs = grid_axis(bounds[0].0, bounds[0].1, g);
    let ys = grid_axis(bounds[1].0, bounds[1].1, g);
    let mut out = Vec::with_capacity(g * g);
    for &a in &xs {
        for &b in &ys {
            let f = model.forward(&scaler.transform_unclipped(&[a, b]))?;
            out.push(GridPoint {
                x: [a, b],
                class: argmax(&f.logits),
                gate: f.gate,
            });
        }
    }
    Ok(out)
}

/// Trains (or loads) each model and writes its predicted class and gate over
/// a grid covering the 2-d data.
pub fn run_boundary(config: &ExperimentConfig) -> Result<MetricsReport> {
    let (data, cells): (Vec<PreparedData>, Vec<Loaded>) = match checkpoint_for(config)? {
        Some((ck, d)) => {
            check_planar(&d)?;
            let c = load_checkpoint_model(ck, &d)?;
            (vec![d], vec![c])
        }
        None => {
            let data = prepare_seeds(config, &config.seeds)?;
            check_planar(&data[0])?;
            let cells = train_grid(config, &data)?.into_iter().map(Loaded::from).collect();
            (data, cells)
        }
    };
    let g = config.boundary.grid_size;
    let grids = cells
        .par_iter()
        .map(|c| {
            let d = data
                .iter()
                .find(|d| d.seed == c.record.seed)
                .expect("cell seed prepared");
            let b = bounding_box(d.unscaled.features(), config.boundary.margin);
            boundary_grid(&c.model, &d.scaler, [b[0], b[1]], g)
        })
        .collect::<Result<Vec<_>>>()?;

    let mut out = Output::new(&config.output_dir)?;
    for d in &data {
        out.csv(
            &format!("boundary_data_seed{}.csv", d.seed),
            &["x0", "x1", "label", "split"],
            d.unscaled
                .features()
                .iter()
                .zip(d.unscaled.labels())
                .zip(d.unscaled.splits())
                .map(|((r, l), s)| {
                    vec![
                        r[0].to_string(),
                        r[1].to_string(),
                        l.to_string(),
                        format!("{s:?}").to_lowercase(),
                    ]
                }),
        )?;
    }
    for (c, grid) in cells.iter().zip(&grids) {
        let mut header: Vec<String> = vec!["x0".into(), "x1".into(), "predicted_class".into()];
        header.extend((0..c.model.n_experts()).map(|i| format!("gate_{i}")));
        let header: Vec<&str> = header.iter().map(String::as_str).collect();
        out.csv(
            &format!("boundary_{}_seed{}.csv", c.name, c.record.seed),
            &header,
            grid.iter().map(|p| {
                let mut row = vec![p.x[0].to_string(), p.x[1].to_string(), p.class.to_string()];
                row.extend(p.gate.iter().map(|v| v.to_string()));
                row
            }),
        )?;
        out.loaded_trace(c)?;
    }
    let runs: Vec<RunRecord> = cells.iter().map(|c| c.record.clone()).collect();
    out.csv("boundary_runs.csv", &RUN_HEADER, runs.iter().map(run_row))?;
    out.manifest(config, &data, json!({"grid_size": g}))?;
    let summary = summarize(&runs)?;
    Ok(MetricsReport {
        kind: config.kind,
        runs,
        baseline: Vec::new(),
        summary,
        files: out.files,
    })
}

fn check_planar(data: &PreparedData) -> Result<()> {
    if data.unscaled.dim() != 2 {
        return Err(QmoeError::Data(format!(
            "decision-boundary grids need 2-d inputs, dataset has {} features",
            data.unscaled.dim()
        )));
    }
    Ok(())
}

/// Trains each model on each seed and writes its trace, a checkpoint and a
/// one-row-per-run summary.
pub fn run_train_single(config: &ExperimentConfig) -> Result<MetricsReport> {
    let data = prepare_seeds(config, &config.seeds)?;
    let cells = train_grid(config, &data)?;
    let runs: Vec<RunRecord> = cells.iter().map(|c| c.record.clone()).collect();
    let mut out = Output::new(&config.output_dir)?;
    out.csv("train_runs.csv", &RUN_HEADER, runs.iter().map(run_row))?;
    for c in &cells {
        out.trace(c)?;
        let d = data
            .iter()
            .find(|d| d.seed == c.record.seed)
            .expect("cell seed prepared");
        let ck = Checkpoint::new(
            &c.name,
            d.seed,
            c.model.clone(),
            d.pca.clone(),
            d.scaler.clone(),
            d.dataset.provenance().to_vec(),
        );
        let path = out.path(&format!("checkpoints/{}_seed{}.json", c.name, d.seed))?;
        ck.save(&path)?;
    }
    out.manifest(config, &data, json!(null))?;
    let summary = summarize(&runs)?;
    Ok(MetricsReport {
        kind: config.kind,
        runs,
        baseline: Vec::new(),
        summary,
        files: out.files,
    })
}

pub fn run_experiment(config: &ExperimentConfig) -> Result<MetricsReport> {
    match config.kind {
        ExperimentKind::Ablation => run_ablation(config),
        ExperimentKind::NoiseSweep => run_noise_sweep(config),
        ExperimentKind::ParamSweep => run_param_sweep(config),
        ExperimentKind::Boundary => run_boundary(config),
        ExperimentKind::TrainSingle => run_train_single(config),
    }
}
