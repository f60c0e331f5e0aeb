//! Batch front-end: simulate -> process -> featurize/split/train/evaluate
//! -> experiment -> render, all driven by one [`RunConfig`].
//!
//! Every output is written atomically (temp file + rename), and identical
//! config + seed reproduce byte-identical primary outputs.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::beamform::{
    build_energyscape, cfar_cleanup, read_energyscape, read_energyscape_csv, write_energyscape,
    write_energyscape_csv, ArrayGeometry, DirectionList, Energyscape,
};
use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::eval::{
    evaluate_scores, filter_rare_classes, manifest_label_matrix, read_fold_plan, restrict_classes,
    split_dataset, write_fold_plan, youden_thresholds, FoldPlan, MetricsReport,
};
use crate::features::{
    apply_vector_pipeline_streaming, fit_vector_pipeline_streaming, read_features_csv,
    write_features_csv, write_pipeline_model, VectorPipelineParams,
};
use crate::ioutil::{atomic_write, ensure_dir};
use crate::ml::{
    balanced_class_weights, load_ovr_model, predict_scores, save_ovr_model, train_forest_ovr,
    train_logreg_ovr, train_tree_ovr, ForestParams, LabelMatrix, OvrModel,
};
use crate::seed::derive_seed;
use crate::signal::{generate_chirp, matched_filter, pdm_decode, read_pdm, Waveform};
use crate::simulate::{read_manifest, synth_dataset, DatasetManifest, Damage, Material};

// ---------------------------------------------------------------------------
// Tasks and model kinds
// ---------------------------------------------------------------------------

/// Which label space an experiment classifies.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Task {
    Material,
    Damage,
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Task::Material => "material",
            Task::Damage => "damage",
        })
    }
}

impl FromStr for Task {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "material" => Ok(Task::Material),
            "damage" => Ok(Task::Damage),
            other => Err(Error::parameter(format!(
                "unknown task {:?} (expected material or damage)",
                other
            ))),
        }
    }
}

/// Class names belonging to a task.
pub fn task_classes(task: Task) -> Vec<String> {
    match task {
        Task::Material => Material::all().iter().map(|m| m.to_string()).collect(),
        Task::Damage => Damage::all().iter().map(|d| d.to_string()).collect(),
    }
}

/// Trainable model kinds.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelKind {
    Logreg,
    Tree,
    Forest,
}

impl ModelKind {
    pub fn display_name(&self) -> &'static str {
        match self {
            ModelKind::Logreg => "Logistic Regression",
            ModelKind::Tree => "Decision Tree",
            ModelKind::Forest => "Random Forest",
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ModelKind::Logreg => "logreg",
            ModelKind::Tree => "tree",
            ModelKind::Forest => "forest",
        })
    }
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "logreg" => Ok(ModelKind::Logreg),
            "tree" => Ok(ModelKind::Tree),
            "forest" => Ok(ModelKind::Forest),
            other => Err(Error::parameter(format!(
                "unknown model {:?} (expected logreg, tree or forest)",
                other
            ))),
        }
    }
}

// ---------------------------------------------------------------------------
// Shared path conventions
// ---------------------------------------------------------------------------

pub fn manifest_path(cfg: &RunConfig) -> PathBuf {
    cfg.paths.dataset_dir.join("manifest.jsonl")
}

pub fn scapes_dir(cfg: &RunConfig) -> PathBuf {
    cfg.paths.output_dir.join("scapes")
}

/// Energyscape file of one manifest entry.
pub fn scape_path(cfg: &RunConfig, entry_path: &str) -> PathBuf {
    let stem = Path::new(entry_path)
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| entry_path.replace('/', "_"));
    scapes_dir(cfg).join(format!("{}.esc", stem))
}

pub fn folds_path(cfg: &RunConfig, task: Task) -> PathBuf {
    cfg.paths.output_dir.join(format!("folds_{}.json", task))
}

pub fn features_path(cfg: &RunConfig, fold: Option<usize>) -> PathBuf {
    match fold {
        Some(k) => cfg.paths.output_dir.join(format!("features_fold{}.csv", k)),
        None => cfg.paths.output_dir.join("features_all.csv"),
    }
}

pub fn pipeline_path(cfg: &RunConfig, fold: Option<usize>) -> PathBuf {
    match fold {
        Some(k) => cfg.paths.model_dir.join(format!("pipeline_fold{}.vpm", k)),
        None => cfg.paths.model_dir.join("pipeline_all.vpm"),
    }
}

pub fn model_path(cfg: &RunConfig, kind: ModelKind, task: Task, fold: usize) -> PathBuf {
    cfg.paths
        .model_dir
        .join(format!("{}_{}_fold{}.ovr", kind, task, fold))
}

// ---------------------------------------------------------------------------
// simulate
// ---------------------------------------------------------------------------

/// Generate the synthetic dataset and print the class histogram.
pub fn cmd_simulate(cfg: &RunConfig) -> Result<DatasetManifest> {
    let spec = cfg.synth_spec()?;
    let manifest = synth_dataset(&spec, &cfg.paths.dataset_dir)?;
    println!("dataset: {} samples in {}", manifest.len(), cfg.paths.dataset_dir.display());
    println!("class histogram:");
    for (name, count) in manifest.class_counts() {
        let bar: String = std::iter::repeat('#')
            .take((count * 40 / manifest.len().max(1)).max(1))
            .collect();
        println!("  {:<16} {:>6}  {}", name, count, bar);
    }
    Ok(manifest)
}

// ---------------------------------------------------------------------------
// process
// ---------------------------------------------------------------------------

/// Outcome of `process`: produced scape files and per-file failures.
#[derive(Debug, Clone, Serialize)]
pub struct ProcessSummary {
    pub produced: usize,
    pub failed: Vec<(String, String)>,
}

/// Decode, matched-filter, beamform, clean and store one energyscape per
/// manifest entry. Corrupt recordings are skipped with a warning.
pub fn cmd_process(cfg: &RunConfig) -> Result<ProcessSummary> {
    let manifest = read_manifest(&manifest_path(cfg))?;
    if manifest.is_empty() {
        return Err(Error::parameter("manifest has no entries"));
    }
    let chirp = generate_chirp(&cfg.chirp.to_spec())?;
    let geom = cfg.geometry.resolve()?;
    let dirs = DirectionList::standard();
    ensure_dir(&scapes_dir(cfg))?;

    let outcomes: Vec<(String, Result<()>)> = manifest
        .entries
        .par_iter()
        .map(|entry| {
            let out = scape_path(cfg, &entry.path);
            let res = process_one(cfg, &manifest.resolve(entry), &out, &chirp, &geom, &dirs);
            match &res {
                Ok(()) => log::info!("processed {} -> {}", entry.path, out.display()),
                Err(e) => log::warn!("skipping {}: {}", entry.path, e),
            }
            (entry.path.clone(), res)
        })
        .collect();

    let mut summary = ProcessSummary {
        produced: 0,
        failed: Vec::new(),
    };
    for (path, res) in outcomes {
        match res {
            Ok(()) => summary.produced += 1,
            Err(e) => summary.failed.push((path, e.to_string())),
        }
    }
    if summary.produced == 0 {
        return Err(Error::parameter("all recordings failed to process"));
    }
    Ok(summary)
}

fn process_one(
    cfg: &RunConfig,
    pdm_path: &Path,
    out_path: &Path,
    chirp: &Waveform,
    geom: &ArrayGeometry,
    dirs: &DirectionList,
) -> Result<()> {
    let frame = read_pdm(pdm_path)?;
    if frame.channels.len() != geom.len() {
        return Err(Error::parameter(format!(
            "{} channels for {} microphones",
            frame.channels.len(),
            geom.len()
        )));
    }
    let decoded = pdm_decode(&frame)?;
    let filtered: Vec<Waveform> = decoded
        .iter()
        .map(|ch| matched_filter(ch, chirp))
        .collect::<Result<Vec<_>>>()?;
    let scape = build_energyscape(&filtered, geom, dirs)?;
    let clean = cfar_cleanup(&scape, cfg.cfar.guard, cfg.cfar.train, cfg.cfar.min_floor)?;
    write_energyscape(out_path, &clean)
}

// ---------------------------------------------------------------------------
// split / featurize / train / evaluate
// ---------------------------------------------------------------------------

/// Restrict the manifest to the task's label space and drop rare classes.
pub fn task_manifest(cfg: &RunConfig, manifest: &DatasetManifest, task: Task) -> DatasetManifest {
    let restricted = restrict_classes(manifest, &task_classes(task));
    let (filtered, report) = filter_rare_classes(&restricted, cfg.experiment.min_class_count);
    for (name, count) in &report.removed {
        log::warn!("dropping class {:?} with only {} samples", name, count);
    }
    filtered
}

/// Split the dataset for a task and store the fold plan.
pub fn cmd_split(cfg: &RunConfig, task: Task) -> Result<FoldPlan> {
    let manifest = read_manifest(&manifest_path(cfg))?;
    let filtered = task_manifest(cfg, &manifest, task);
    let plan = split_dataset(&filtered, cfg.seed)?;
    ensure_dir(&cfg.paths.output_dir)?;
    write_fold_plan(&folds_path(cfg, task), &plan)?;
    println!(
        "split: {} test, {} folds over {} samples -> {}",
        plan.test.len(),
        plan.folds.len(),
        manifest.len(),
        folds_path(cfg, task).display()
    );
    Ok(plan)
}

fn scape_loader<'a>(
    cfg: &'a RunConfig,
    manifest: &'a DatasetManifest,
) -> impl Fn(usize) -> Result<Energyscape> + Sync + 'a {
    move |i: usize| read_energyscape(&scape_path(cfg, &manifest.entries[i].path))
}

/// Fit the vector pipeline (on one fold's training split, or on the whole
/// dataset) and export features for every sample.
pub fn cmd_featurize(cfg: &RunConfig, task: Task, fold: Option<usize>) -> Result<PathBuf> {
    let manifest = read_manifest(&manifest_path(cfg))?;
    let load = scape_loader(cfg, &manifest);
    let params = VectorPipelineParams {
        pool_kernel: cfg.features.pool_kernel,
        n_components: cfg.features.n_components,
        whiten_eps: crate::features::WHITEN_EPS,
    };
    let train: Vec<usize> = match fold {
        Some(k) => {
            let plan = read_fold_plan(&folds_path(cfg, task))?;
            plan.folds
                .get(k)
                .ok_or_else(|| Error::parameter(format!("fold {} out of range", k)))?
                .train
                .clone()
        }
        None => (0..manifest.len()).collect(),
    };
    let (model, _) = fit_vector_pipeline_streaming(&load, &train, &params)?;
    ensure_dir(&cfg.paths.model_dir)?;
    write_pipeline_model(&pipeline_path(cfg, fold), &model)?;

    let all: Vec<usize> = (0..manifest.len()).collect();
    let features = apply_vector_pipeline_streaming(&model, &load, &all)?;
    let ids: Vec<String> = manifest.entries.iter().map(|e| e.path.clone()).collect();
    let out = features_path(cfg, fold);
    ensure_dir(&cfg.paths.output_dir)?;
    write_features_csv(&out, &ids, &features)?;
    println!(
        "featurize: {} components for {} samples -> {}",
        model.n_components,
        manifest.len(),
        out.display()
    );
    Ok(out)
}

fn train_one(
    cfg: &RunConfig,
    kind: ModelKind,
    x: &crate::ml::FeatureMatrix,
    y: &LabelMatrix,
    weights: &[f64],
    model_seed: u64,
    fold: usize,
) -> Result<OvrModel> {
    match kind {
        ModelKind::Logreg => train_logreg_ovr(x, y, cfg.models.logreg_c, weights),
        ModelKind::Tree => train_tree_ovr(x, y, weights),
        ModelKind::Forest => train_forest_ovr(
            x,
            y,
            weights,
            &ForestParams {
                n_trees: cfg.models.forest_trees,
                ..Default::default()
            },
            derive_seed(model_seed, "forest", fold as u64),
        ),
    }
}

/// Train one model on one fold's training split from exported features.
pub fn cmd_train(cfg: &RunConfig, task: Task, kind: ModelKind, fold: usize) -> Result<PathBuf> {
    let manifest = read_manifest(&manifest_path(cfg))?;
    let filtered = task_manifest(cfg, &manifest, task);
    let labels = manifest_label_matrix(&filtered)?;
    let plan = read_fold_plan(&folds_path(cfg, task))?;
    let fold_split = plan
        .folds
        .get(fold)
        .ok_or_else(|| Error::parameter(format!("fold {} out of range", fold)))?;
    let (_, features) = read_features_csv(&features_path(cfg, Some(fold)))?;
    if features.rows() != manifest.len() {
        return Err(Error::parameter(format!(
            "{} feature rows for {} manifest entries",
            features.rows(),
            manifest.len()
        )));
    }
    let x_train = features.select_rows(&fold_split.train);
    let y_train = labels.select_rows(&fold_split.train);
    let weights = balanced_class_weights(&y_train)?;
    let model_seed = cfg.experiment.model_seeds.first().copied().unwrap_or(0);
    let model = train_one(cfg, kind, &x_train, &y_train, &weights, model_seed, fold)?;
    let out = model_path(cfg, kind, task, fold);
    ensure_dir(&cfg.paths.model_dir)?;
    save_ovr_model(
        &out,
        &model,
        serde_json::json!({
            "task": task.to_string(),
            "fold": fold,
            "seed": model_seed,
            "logreg_c": cfg.models.logreg_c,
            "forest_trees": cfg.models.forest_trees,
        }),
    )?;
    println!("train: {} -> {}", kind.display_name(), out.display());
    Ok(out)
}

/// Train/validation/test reports of one evaluated model.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvaluationBundle {
    pub train: MetricsReport,
    pub validation: MetricsReport,
    pub test: MetricsReport,
}

/// Calibrate Youden thresholds on the fold's validation split and evaluate
/// a stored model on train/validation/test.
pub fn cmd_evaluate(
    cfg: &RunConfig,
    task: Task,
    kind: ModelKind,
    fold: usize,
) -> Result<EvaluationBundle> {
    let manifest = read_manifest(&manifest_path(cfg))?;
    let filtered = task_manifest(cfg, &manifest, task);
    let labels = manifest_label_matrix(&filtered)?;
    let plan = read_fold_plan(&folds_path(cfg, task))?;
    let fold_split = plan
        .folds
        .get(fold)
        .ok_or_else(|| Error::parameter(format!("fold {} out of range", fold)))?;
    let (_, features) = read_features_csv(&features_path(cfg, Some(fold)))?;
    let (model, _) = load_ovr_model(&model_path(cfg, kind, task, fold))?;
    let bundle = evaluate_on_fold(&model, &features, &labels, fold_split, &plan.test)?;
    let out = cfg
        .paths
        .output_dir
        .join(format!("metrics_{}_{}_fold{}.json", kind, task, fold));
    atomic_write(
        &out,
        serde_json::to_string_pretty(&bundle)
            .expect("bundle serializes")
            .as_bytes(),
    )?;
    println!(
        "evaluate: {} fold {} -> {} (val F1 {:.4})",
        kind.display_name(),
        fold,
        out.display(),
        bundle.validation.weighted_f1
    );
    Ok(bundle)
}

fn evaluate_on_fold(
    model: &OvrModel,
    features: &crate::ml::FeatureMatrix,
    labels: &LabelMatrix,
    fold: &crate::eval::Fold,
    test: &[usize],
) -> Result<EvaluationBundle> {
    let x_val = features.select_rows(&fold.validation);
    let y_val = labels.select_rows(&fold.validation);
    let scores_val = predict_scores(model, &x_val)?;
    let thresholds = youden_thresholds(&scores_val, &y_val)?;

    let evaluate = |idx: &[usize]| -> Result<MetricsReport> {
        let x = features.select_rows(idx);
        let y = labels.select_rows(idx);
        evaluate_scores(&predict_scores(model, &x)?, &y, &thresholds)
    };
    Ok(EvaluationBundle {
        train: evaluate(&fold.train)?,
        validation: evaluate_scores(&scores_val, &y_val, &thresholds)?,
        test: evaluate(test)?,
    })
}

// ---------------------------------------------------------------------------
// experiment
// ---------------------------------------------------------------------------

/// One (model, fold, seed) run of the experiment protocol.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunRecord {
    pub model: String,
    pub fold: usize,
    pub seed: u64,
    pub train: MetricsReport,
    pub validation: MetricsReport,
    pub test: MetricsReport,
}

/// Mean and sample standard deviation.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct Stat {
    pub mean: f64,
    pub std: f64,
}

fn stat(values: &[f64]) -> Stat {
    let n = values.len() as f64;
    if values.is_empty() {
        return Stat { mean: 0.0, std: 0.0 };
    }
    let mean = values.iter().sum::<f64>() / n;
    let std = if values.len() > 1 {
        (values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0)).sqrt()
    } else {
        0.0
    };
    Stat { mean, std }
}

/// Aggregate row of the results table (columns in the reported order).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AggregateRow {
    pub model: String,
    pub runs: usize,
    pub test_kappa: Stat,
    pub validation_kappa: Stat,
    pub training_kappa: Stat,
    pub test_f1: Stat,
    pub validation_f1: Stat,
    pub training_f1: Stat,
}

/// Everything `experiment` produces.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub task: String,
    pub class_names: Vec<String>,
    pub skipped_folds: Vec<usize>,
    pub runs: Vec<RunRecord>,
    pub aggregates: Vec<AggregateRow>,
}

impl ExperimentReport {
    pub fn aggregate(&self, kind: ModelKind) -> Option<&AggregateRow> {
        self.aggregates
            .iter()
            .find(|a| a.model == kind.display_name())
    }

    /// Plain-text table: one row per model, mu +/- sigma percentages in the
    /// column order Test k, Validation k, Training k, Test F1,
    /// Validation F1, Training F1.
    pub fn table(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!(
            "{:<22} {:>16} {:>16} {:>16} {:>16} {:>16} {:>16}\n",
            "Model",
            "Test k",
            "Validation k",
            "Training k",
            "Test F1",
            "Validation F1",
            "Training F1"
        ));
        let cell = |s: &Stat| format!("{:.2}%+-{:.2}%", 100.0 * s.mean, 100.0 * s.std);
        for row in &self.aggregates {
            out.push_str(&format!(
                "{:<22} {:>16} {:>16} {:>16} {:>16} {:>16} {:>16}\n",
                row.model,
                cell(&row.test_kappa),
                cell(&row.validation_kappa),
                cell(&row.training_kappa),
                cell(&row.test_f1),
                cell(&row.validation_f1),
                cell(&row.training_f1),
            ));
        }
        out
    }
}

/// The full experiment protocol: split, per-fold pipeline fit, per-seed
/// model training, Youden calibration on validation, metrics on
/// train/validation/test, aggregated over folds and seeds.
///
/// Folds whose training or validation split lacks a class are skipped with
/// a warning.
pub fn cmd_experiment(cfg: &RunConfig, task: Task) -> Result<ExperimentReport> {
    let manifest = read_manifest(&manifest_path(cfg))?;
    let filtered = task_manifest(cfg, &manifest, task);
    if filtered.class_names.len() < 2 {
        return Err(Error::parameter(format!(
            "task {} has {} usable classes, need at least 2",
            task,
            filtered.class_names.len()
        )));
    }
    let labels = manifest_label_matrix(&filtered)?;
    let plan = split_dataset(&filtered, cfg.seed)?;

    let exp_dir = cfg.paths.output_dir.join(format!("experiment_{}", task));
    ensure_dir(&exp_dir)?;
    write_fold_plan(&exp_dir.join("folds.json"), &plan)?;

    let load = scape_loader(cfg, &manifest);
    let params = VectorPipelineParams {
        pool_kernel: cfg.features.pool_kernel,
        n_components: cfg.features.n_components,
        whiten_eps: crate::features::WHITEN_EPS,
    };
    let kinds: Vec<ModelKind> = cfg
        .models
        .enabled
        .iter()
        .map(|s| s.parse())
        .collect::<Result<Vec<_>>>()?;

    let mut runs: Vec<RunRecord> = Vec::new();
    let mut skipped = Vec::new();
    for (k, fold) in plan.folds.iter().enumerate() {
        let y_train = labels.select_rows(&fold.train);
        let y_val = labels.select_rows(&fold.validation);
        if let Err(e) = fold_is_usable(&y_train, &y_val) {
            log::warn!("skipping fold {}: {}", k, e);
            skipped.push(k);
            continue;
        }

        log::info!("fold {}: fitting vector pipeline on {} samples", k, fold.train.len());
        let (pipeline, x_train) = fit_vector_pipeline_streaming(&load, &fold.train, &params)?;
        let x_val = apply_vector_pipeline_streaming(&pipeline, &load, &fold.validation)?;
        let x_test = apply_vector_pipeline_streaming(&pipeline, &load, &plan.test)?;
        let y_test = labels.select_rows(&plan.test);
        let weights = balanced_class_weights(&y_train)?;

        for &model_seed in &cfg.experiment.model_seeds {
            for &kind in &kinds {
                let model = train_one(cfg, kind, &x_train, &y_train, &weights, model_seed, k)?;
                let scores_val = predict_scores(&model, &x_val)?;
                let thresholds = match youden_thresholds(&scores_val, &y_val) {
                    Ok(t) => t,
                    Err(e) => {
                        log::warn!("fold {} {}: {}", k, kind, e);
                        continue;
                    }
                };
                let train = evaluate_scores(
                    &predict_scores(&model, &x_train)?,
                    &y_train,
                    &thresholds,
                )?;
                let validation = evaluate_scores(&scores_val, &y_val, &thresholds)?;
                let test =
                    evaluate_scores(&predict_scores(&model, &x_test)?, &y_test, &thresholds)?;
                log::info!(
                    "fold {} seed {} {}: val F1 {:.4}, test F1 {:.4}",
                    k,
                    model_seed,
                    kind,
                    validation.weighted_f1,
                    test.weighted_f1
                );
                runs.push(RunRecord {
                    model: kind.display_name().to_string(),
                    fold: k,
                    seed: model_seed,
                    train,
                    validation,
                    test,
                });
            }
        }
    }

    if runs.is_empty() {
        return Err(Error::degenerate("every fold was skipped"));
    }

    let aggregates = kinds
        .iter()
        .map(|kind| {
            let mine: Vec<&RunRecord> = runs
                .iter()
                .filter(|r| r.model == kind.display_name())
                .collect();
            let collect = |f: fn(&RunRecord) -> f64| -> Vec<f64> {
                mine.iter().map(|r| f(r)).collect()
            };
            AggregateRow {
                model: kind.display_name().to_string(),
                runs: mine.len(),
                test_kappa: stat(&collect(|r| r.test.weighted_kappa)),
                validation_kappa: stat(&collect(|r| r.validation.weighted_kappa)),
                training_kappa: stat(&collect(|r| r.train.weighted_kappa)),
                test_f1: stat(&collect(|r| r.test.weighted_f1)),
                validation_f1: stat(&collect(|r| r.validation.weighted_f1)),
                training_f1: stat(&collect(|r| r.train.weighted_f1)),
            }
        })
        .collect();

    let report = ExperimentReport {
        task: task.to_string(),
        class_names: filtered.class_names.clone(),
        skipped_folds: skipped,
        runs,
        aggregates,
    };
    atomic_write(
        &exp_dir.join("report.json"),
        serde_json::to_string_pretty(&report)
            .expect("report serializes")
            .as_bytes(),
    )?;
    atomic_write(&exp_dir.join("metrics_table.txt"), report.table().as_bytes())?;
    println!("{}", report.table());
    Ok(report)
}

fn fold_is_usable(y_train: &LabelMatrix, y_val: &LabelMatrix) -> Result<()> {
    for c in 0..y_train.cols() {
        let tr = y_train.column_sum(c);
        if tr == 0 || tr == y_train.rows() {
            return Err(Error::degenerate(format!(
                "class {:?} single-valued in training split",
                y_train.class_names[c]
            )));
        }
        let va = y_val.column_sum(c);
        if va == 0 || va == y_val.rows() {
            return Err(Error::degenerate(format!(
                "class {:?} single-valued in validation split",
                y_val.class_names[c]
            )));
        }
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// render
// ---------------------------------------------------------------------------

/// Five-stop linear colormap from black through blue and orange to white.
const COLOR_STOPS: [[u8; 3]; 5] = [
    [0, 0, 0],
    [32, 16, 96],
    [160, 48, 96],
    [232, 148, 32],
    [255, 255, 224],
];

fn colorize(v: f64) -> [u8; 3] {
    let t = v.clamp(0.0, 1.0) * (COLOR_STOPS.len() - 1) as f64;
    let lo = (t.floor() as usize).min(COLOR_STOPS.len() - 2);
    let frac = t - lo as f64;
    let mut out = [0u8; 3];
    for ch in 0..3 {
        let a = COLOR_STOPS[lo][ch] as f64;
        let b = COLOR_STOPS[lo + 1][ch] as f64;
        out[ch] = (a + (b - a) * frac).round() as u8;
    }
    out
}

/// Render an energyscape (binary `.esc` or `.csv`) to a min-max normalized
/// PPM heatmap, plus a CSV of the matrix next to the image.
pub fn cmd_render(scape_file: &Path, out_image: &Path) -> Result<()> {
    let scape = match scape_file.extension().and_then(|e| e.to_str()) {
        Some("csv") => read_energyscape_csv(scape_file)?,
        _ => read_energyscape(scape_file)?,
    };
    let (min, max) = scape
        .values()
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| {
            (lo.min(*v), hi.max(*v))
        });
    let span = max - min;
    let mut ppm = format!("P6\n{} {}\n255\n", scape.cols(), scape.rows()).into_bytes();
    for r in 0..scape.rows() {
        for c in 0..scape.cols() {
            let v = if span > 0.0 {
                (scape.get(r, c) - min) / span
            } else {
                0.0
            };
            ppm.extend_from_slice(&colorize(v));
        }
    }
    atomic_write(out_image, &ppm)?;
    write_energyscape_csv(&out_image.with_extension("csv"), &scape)?;
    println!(
        "render: {}x{} -> {}",
        scape.cols(),
        scape.rows(),
        out_image.display()
    );
    Ok(())
}
