//! Workflow steps. Each returns a summary that the binary prints.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use voxelnet::autoencoder::{train_autoencoder, SparseAutoencoder};
use voxelnet::classifier::{evaluate, fit, format_percent, EpochRecord, MetricsReport, MlpClassifier};
use voxelnet::convnet::{ConvFeatureBank, ConvMode, FeatureVector};
use voxelnet::dataio::{
    encode_patch_cache, extract_patches_2d, extract_patches_3d, load_volume, normalize_volume, save_volume,
    split_manifest, synth_generate, DatasetManifest, Diagnosis, ManifestEntry, Split, Task,
};
use voxelnet::rng::Rng;
use voxelnet::Tensor3;

use crate::config::RunConfig;

/// Fractions of the pretraining patches held out for validation and test.
pub const PATCH_HOLDOUT: (f64, f64) = (0.1, 0.1);

fn ensure_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

fn load_manifest(cfg: &RunConfig) -> Result<DatasetManifest> {
    let path = cfg.manifest_path();
    DatasetManifest::load(&path).with_context(|| format!("reading manifest {}", path.display()))
}

fn volume_path(cfg: &RunConfig, entry: &ManifestEntry) -> PathBuf {
    let p = Path::new(&entry.path);
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        cfg.data_dir.join(p)
    }
}

fn load_scan(cfg: &RunConfig, entry: &ManifestEntry) -> Result<Tensor3> {
    let path = volume_path(cfg, entry);
    let raw = load_volume(&path).with_context(|| format!("reading volume {}", path.display()))?;
    normalize_volume(&raw).with_context(|| format!("normalizing {}", path.display()))
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthSummary {
    pub per_class: [usize; 3],
    pub split_counts: [usize; 3],
    pub manifest: PathBuf,
}

impl fmt::Display for SynthSummary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for d in Diagnosis::ALL {
            writeln!(f, "{d}: {}", self.per_class[d.index()])?;
        }
        let [tr, va, te] = self.split_counts;
        write!(f, "train/val/test: {tr}/{va}/{te}\nmanifest: {}", self.manifest.display())
    }
}

pub fn cmd_synth(cfg: &RunConfig) -> Result<SynthSummary> {
    let records = synth_generate(&cfg.synth_config())?;
    let splits = split_manifest(records.len(), cfg.split_sizes(), cfg.stage_seed("split"))?;
    let vol_dir = cfg.data_dir.join("volumes");
    ensure_dir(&vol_dir)?;
    let mut manifest = DatasetManifest::default();
    let mut per_class = [0; 3];
    for (rec, split) in records.iter().zip(splits) {
        let rel = format!("volumes/{}.vxv", rec.subject_id);
        save_volume(&rec.volume, cfg.data_dir.join(&rel))?;
        per_class[rec.label.index()] += 1;
        manifest.entries.push(ManifestEntry {
            path: rel,
            label: rec.label,
            subject_id: rec.subject_id.clone(),
            split,
        });
    }
    let path = cfg.manifest_path();
    manifest.save(&path)?;
    Ok(SynthSummary {
        per_class,
        split_counts: [Split::Train, Split::Val, Split::Test].map(|s| manifest.count(s)),
        manifest: path,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct PretrainSummary {
    pub scans: usize,
    pub patches: usize,
    pub input_len: usize,
    pub hidden: usize,
    pub train_cost: f64,
    pub validation_cost: f64,
    pub test_cost: f64,
    pub checkpoint: PathBuf,
}

impl fmt::Display for PretrainSummary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "patches: {} from {} scans (n = {}, p = {})", self.patches, self.scans, self.input_len, self.hidden)?;
        writeln!(f, "reconstruction cost train/val/test: {:.6}/{:.6}/{:.6}", self.train_cost, self.validation_cost, self.test_cost)?;
        write!(f, "checkpoint: {}", self.checkpoint.display())
    }
}

/// Samples patches from a seeded subset of the training scans, trains the
/// autoencoder and writes its checkpoint plus the patch cache.
pub fn cmd_pretrain(cfg: &RunConfig) -> Result<PretrainSummary> {
    let manifest = load_manifest(cfg)?;
    let train: Vec<&ManifestEntry> = manifest.entries.iter().filter(|e| e.split == Split::Train).collect();
    if train.is_empty() {
        bail!("manifest has no training scans");
    }
    let mut order = Rng::new(cfg.stage_seed("ae-scans")).permutation(train.len());
    order.truncate(cfg.ae_scans.min(train.len()));
    let scans = order.iter().map(|&i| load_scan(cfg, train[i])).collect::<Result<Vec<_>>>()?;

    let patch_seed = cfg.stage_seed("patches");
    let set = match cfg.mode {
        ConvMode::ThreeD => extract_patches_3d(&scans, cfg.ae_patches_per_scan, cfg.ae_patch3d, patch_seed)?,
        ConvMode::TwoD => extract_patches_2d(&scans, cfg.ae_patches_per_scan, cfg.ae_patch2d, patch_seed)?,
    };
    let mut patches = set.patches;
    Rng::new(cfg.stage_seed("patch-split")).shuffle(&mut patches);
    let n = patches.len();
    let n_val = (n as f64 * PATCH_HOLDOUT.0).round() as usize;
    let n_test = (n as f64 * PATCH_HOLDOUT.1).round() as usize;
    let (train_p, rest) = patches.split_at(n - n_val - n_test);
    let (val_p, test_p) = rest.split_at(n_val);
    if train_p.is_empty() {
        bail!("no training patches: {} scans x {} patches per scan", scans.len(), cfg.ae_patches_per_scan);
    }

    ensure_dir(&cfg.work_dir)?;
    fs::write(cfg.patch_cache_path(), encode_patch_cache(set.patch_len, &patches)?)
        .with_context(|| format!("writing {}", cfg.patch_cache_path().display()))?;

    let sp = cfg.sparsity();
    let trained = train_autoencoder(train_p, val_p, &cfg.ae_train(), &sp)?;
    let model = trained.model;
    let cost = |set: &[Vec<f64>]| -> Result<f64> {
        if set.is_empty() {
            Ok(f64::NAN)
        } else {
            Ok(model.reconstruction_cost(set)?)
        }
    };
    let summary = PretrainSummary {
        scans: scans.len(),
        patches: n,
        input_len: model.input_len(),
        hidden: model.hidden_len(),
        train_cost: cost(train_p)?,
        validation_cost: cost(val_p)?,
        test_cost: cost(test_p)?,
        checkpoint: cfg.autoencoder_path(),
    };
    model.save(&summary.checkpoint)?;
    Ok(summary)
}

pub fn feature_bank(cfg: &RunConfig, input_shape: voxelnet::Shape3) -> Result<ConvFeatureBank> {
    let path = cfg.autoencoder_path();
    let ae = SparseAutoencoder::load(&path).with_context(|| format!("reading checkpoint {}", path.display()))?;
    let bank = match cfg.mode {
        ConvMode::ThreeD => ConvFeatureBank::from_autoencoder_3d(&ae, cfg.ae_patch3d, cfg.conv_pool3d, input_shape)?,
        ConvMode::TwoD => ConvFeatureBank::from_autoencoder_2d(&ae, cfg.ae_patch2d, cfg.conv_pool2d, input_shape)?,
    };
    Ok(bank)
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeaturizeSummary {
    pub vectors: usize,
    pub feature_len: usize,
    pub filters: usize,
    pub dir: PathBuf,
}

impl fmt::Display for FeaturizeSummary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} feature vectors of length {} ({} filters) in {}",
            self.vectors,
            self.feature_len,
            self.filters,
            self.dir.display()
        )
    }
}

/// Writes one feature vector per manifest entry, in manifest order.
pub fn cmd_featurize(cfg: &RunConfig) -> Result<FeaturizeSummary> {
    let manifest = load_manifest(cfg)?;
    let Some(first) = manifest.entries.first() else {
        bail!("manifest is empty");
    };
    let bank = feature_bank(cfg, load_scan(cfg, first)?.shape())?;
    let dir = cfg.feature_dir();
    ensure_dir(&dir)?;
    manifest.entries.par_iter().enumerate().try_for_each(|(i, entry)| -> Result<()> {
        let scan = load_scan(cfg, entry)?;
        let fv = bank.featurize(&scan).with_context(|| format!("featurizing {}", entry.path))?;
        fv.save(cfg.feature_path(i))?;
        Ok(())
    })?;
    Ok(FeaturizeSummary {
        vectors: manifest.entries.len(),
        feature_len: bank.feature_len(),
        filters: bank.filter_count(),
        dir,
    })
}

type Examples = Vec<(Vec<f64>, usize)>;

/// Cached features of the manifest entries in `split` that belong to the
/// task, relabeled to task class indices.
fn task_examples(cfg: &RunConfig, manifest: &DatasetManifest, split: Split) -> Result<Examples> {
    manifest
        .entries
        .iter()
        .enumerate()
        .filter(|(_, e)| e.split == split)
        .filter_map(|(i, e)| cfg.task.relabel(e.label).map(|y| (i, y)))
        .map(|(i, y)| {
            let path = cfg.feature_path(i);
            let fv = FeatureVector::load(&path).with_context(|| format!("reading features {}", path.display()))?;
            Ok((fv.values, y))
        })
        .collect()
}

/// Training record written next to the classifier checkpoint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainHistory {
    pub task: String,
    pub mode: String,
    pub best_epoch: usize,
    pub best_validation_error: Option<f64>,
    pub history: Vec<EpochRecord>,
}

impl TrainHistory {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainSummary {
    pub classes: usize,
    pub train_examples: usize,
    pub validation_examples: usize,
    pub best_epoch: usize,
    pub best_validation_error: Option<f64>,
    pub checkpoint: PathBuf,
}

impl fmt::Display for TrainSummary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "{} classes, {} training / {} validation examples",
            self.classes, self.train_examples, self.validation_examples
        )?;
        match self.best_validation_error {
            Some(e) => writeln!(f, "best epoch {} (validation error {})", self.best_epoch, format_percent(e))?,
            None => writeln!(f, "no training epochs run; initial network kept")?,
        }
        write!(f, "checkpoint: {}", self.checkpoint.display())
    }
}

pub fn cmd_train(cfg: &RunConfig) -> Result<TrainSummary> {
    let manifest = load_manifest(cfg)?;
    let train = task_examples(cfg, &manifest, Split::Train)?;
    let val = task_examples(cfg, &manifest, Split::Val)?;
    let Some((x0, _)) = train.first() else {
        bail!("no training examples for task {}", cfg.task);
    };
    let init_seed = voxelnet::rng::derive_seed(cfg.seed, "train-init", cfg.task as u64);
    let net = MlpClassifier::init(x0.len(), cfg.mlp_hidden, cfg.task.classes(), init_seed)?;
    let outcome = if cfg.mlp_max_epochs == 0 {
        voxelnet::classifier::FitOutcome { best: net, best_epoch: 0, best_validation_error: None, history: Vec::new() }
    } else {
        if val.is_empty() {
            bail!("no validation examples for task {}", cfg.task);
        }
        fit(net, &train, &val, &cfg.fit())?
    };

    ensure_dir(&cfg.work_dir)?;
    outcome.best.save(cfg.classifier_path())?;
    let record = TrainHistory {
        task: cfg.task.to_string(),
        mode: cfg.mode.to_string(),
        best_epoch: outcome.best_epoch,
        best_validation_error: outcome.best_validation_error,
        history: outcome.history,
    };
    let mut json = serde_json::to_string_pretty(&record)?;
    json.push('\n');
    fs::write(cfg.history_path(), json).with_context(|| format!("writing {}", cfg.history_path().display()))?;
    Ok(TrainSummary {
        classes: cfg.task.classes(),
        train_examples: train.len(),
        validation_examples: val.len(),
        best_epoch: record.best_epoch,
        best_validation_error: record.best_validation_error,
        checkpoint: cfg.classifier_path(),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalSummary {
    pub report: MetricsReport,
    pub path: PathBuf,
}

impl fmt::Display for EvalSummary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{}: test accuracy {}", self.report.task, format_percent(self.report.accuracy))?;
        writeln!(f, "confusion matrix (rows = true class):")?;
        for row in &self.report.confusion_matrix {
            let cells: Vec<String> = row.iter().map(|c| format!("{c:>5}")).collect();
            writeln!(f, "{}", cells.join(""))?;
        }
        write!(f, "metrics: {}", self.path.display())
    }
}

pub fn cmd_eval(cfg: &RunConfig) -> Result<EvalSummary> {
    let manifest = load_manifest(cfg)?;
    let test = task_examples(cfg, &manifest, Split::Test)?;
    if test.is_empty() {
        bail!("no test examples for task {}", cfg.task);
    }
    let path = cfg.classifier_path();
    let net = MlpClassifier::load(&path).with_context(|| format!("reading classifier {}", path.display()))?;
    let ev = evaluate(&net, &test)?;
    let history = TrainHistory::load(&cfg.history_path())?.history;
    let report = MetricsReport {
        task: cfg.task.to_string(),
        accuracy: ev.accuracy,
        confusion_matrix: ev.confusion_matrix,
        history,
    };
    let path = cfg.metrics_path();
    fs::write(&path, report.to_json()?).with_context(|| format!("writing {}", path.display()))?;
    Ok(EvalSummary { report, path })
}

/// Accuracy table over every task with a metrics file in `work_dir`.
/// Missing entries show as `-`.
pub fn accuracy_table(work_dir: &Path) -> Result<String> {
    let tasks = [Task::ThreeWay, Task::AdHc, Task::AdMci, Task::HcMci];
    let modes = [ConvMode::TwoD, ConvMode::ThreeD];
    let mut rows = Vec::new();
    for task in tasks {
        let mut cells = Vec::new();
        for mode in modes {
            let path = RunConfig::metrics_path_for(work_dir, mode, task);
            cells.push(if path.exists() {
                let text = fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
                let report = MetricsReport::from_json(&text).with_context(|| format!("parsing {}", path.display()))?;
                format_percent(report.accuracy)
            } else {
                "-".to_string()
            });
        }
        if cells.iter().any(|c| c != "-") {
            rows.push((task.title(), cells));
        }
    }
    if rows.is_empty() {
        bail!("no metrics files in {}", work_dir.display());
    }
    let mut out = format!("{:<16}{:>14}{:>14}\n", "Classification", "Accuracy (2D)", "Accuracy (3D)");
    for (title, cells) in rows {
        out.push_str(&format!("{:<16}{:>14}{:>14}\n", title, cells[0], cells[1]));
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExportSummary {
    pub width: usize,
    pub height: usize,
    pub path: PathBuf,
}

impl fmt::Display for ExportSummary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "wrote {}x{} slice to {}", self.width, self.height, self.path.display())
    }
}

/// Exports one slice of one filter's feature map for the manifest entry
/// `export_scan`.
pub fn cmd_export_slice(cfg: &RunConfig, out: Option<&Path>) -> Result<ExportSummary> {
    let manifest = load_manifest(cfg)?;
    let Some(entry) = manifest.entries.get(cfg.export_scan) else {
        bail!("export.scan {} out of range: manifest has {} entries", cfg.export_scan, manifest.entries.len());
    };
    let scan = load_scan(cfg, entry)?;
    let bank = feature_bank(cfg, scan.shape())?;
    let path = out.map(Path::to_path_buf).unwrap_or_else(|| cfg.export_path());
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        ensure_dir(parent)?;
    }
    let img = bank.export_feature_slice(&scan, cfg.export_filter, cfg.export_slice, &path)?;
    Ok(ExportSummary { width: img.width, height: img.height, path })
}
