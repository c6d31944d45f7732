//! Run configuration as flat `key = value` text.
//!
//! Blank lines and lines starting with `#` are ignored. Every key has a
//! default; unknown or repeated keys are errors. Shapes are written as
//! `DxHxW` (or `HxW` for planar sizes).

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use voxelnet::autoencoder::{AeTrainConfig, SparsityConfig};
use voxelnet::classifier::FitConfig;
use voxelnet::convnet::ConvMode;
use voxelnet::dataio::{SplitSizes, SynthConfig, Task};
use voxelnet::rng::derive_seed;
use voxelnet::Shape3;

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub mode: ConvMode,
    pub task: Task,
    /// Master seed; every stage seed is derived from it.
    pub seed: u64,
    pub data_dir: PathBuf,
    pub work_dir: PathBuf,

    pub synth_shape: Shape3,
    pub synth_noise_sd: f64,
    pub synth_count_per_class: usize,
    pub split_val_fraction: f64,
    pub split_test_fraction: f64,

    pub ae_hidden: usize,
    pub ae_scans: usize,
    pub ae_patches_per_scan: usize,
    pub ae_patch3d: Shape3,
    pub ae_patch2d: (usize, usize),
    pub ae_sparsity: f64,
    pub ae_beta: f64,
    pub ae_lambda: f64,
    pub ae_batch_size: usize,
    pub ae_learning_rate: f64,
    pub ae_epochs: usize,
    pub ae_init_scale: f64,

    pub conv_pool3d: Shape3,
    pub conv_pool2d: (usize, usize),

    pub mlp_hidden: usize,
    pub mlp_learning_rate: f64,
    pub mlp_momentum: f64,
    pub mlp_batch_size: usize,
    pub mlp_max_epochs: usize,
    pub mlp_eval_every: usize,

    pub export_scan: usize,
    pub export_filter: usize,
    pub export_slice: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        let ae = AeTrainConfig::default();
        let sp = SparsityConfig::default();
        let fit = FitConfig::default();
        let synth = SynthConfig::default();
        RunConfig {
            mode: ConvMode::ThreeD,
            task: Task::ThreeWay,
            seed: 0,
            data_dir: PathBuf::from("data"),
            work_dir: PathBuf::from("work"),
            synth_shape: synth.shape,
            synth_noise_sd: synth.noise_sd,
            synth_count_per_class: synth.count_per_class,
            split_val_fraction: 306.0 / 2265.0,
            split_test_fraction: 228.0 / 2265.0,
            ae_hidden: ae.hidden,
            ae_scans: 100,
            ae_patches_per_scan: 1000,
            ae_patch3d: (5, 5, 5),
            ae_patch2d: (11, 11),
            ae_sparsity: sp.target,
            ae_beta: sp.beta,
            ae_lambda: sp.lambda,
            ae_batch_size: ae.batch_size,
            ae_learning_rate: ae.learning_rate,
            ae_epochs: ae.epochs,
            ae_init_scale: ae.init_scale,
            conv_pool3d: (5, 5, 5),
            conv_pool2d: (10, 10),
            mlp_hidden: 800,
            mlp_learning_rate: fit.learning_rate,
            mlp_momentum: fit.momentum,
            mlp_batch_size: fit.batch_size,
            mlp_max_epochs: fit.max_epochs,
            mlp_eval_every: fit.eval_every,
            export_scan: 0,
            export_filter: 3,
            export_slice: 31,
        }
    }
}

fn parse_shape3(v: &str) -> Result<Shape3> {
    let parts: Vec<usize> = v.split('x').map(|p| p.trim().parse()).collect::<std::result::Result<_, _>>()?;
    match parts[..] {
        [a, b, c] if a > 0 && b > 0 && c > 0 => Ok((a, b, c)),
        _ => bail!("expected a positive DxHxW shape, got {v:?}"),
    }
}

fn parse_shape2(v: &str) -> Result<(usize, usize)> {
    let parts: Vec<usize> = v.split('x').map(|p| p.trim().parse()).collect::<std::result::Result<_, _>>()?;
    match parts[..] {
        [a, b] if a > 0 && b > 0 => Ok((a, b)),
        _ => bail!("expected a positive HxW shape, got {v:?}"),
    }
}

fn show3(s: Shape3) -> String {
    format!("{}x{}x{}", s.0, s.1, s.2)
}

fn show2(s: (usize, usize)) -> String {
    format!("{}x{}", s.0, s.1)
}

impl RunConfig {
    /// Keys in serialization order.
    pub const KEYS: &'static [&'static str] = &[
        "mode",
        "task",
        "seed",
        "data_dir",
        "work_dir",
        "synth.shape",
        "synth.noise_sd",
        "synth.count_per_class",
        "split.val_fraction",
        "split.test_fraction",
        "ae.hidden",
        "ae.scans",
        "ae.patches_per_scan",
        "ae.patch3d",
        "ae.patch2d",
        "ae.sparsity",
        "ae.beta",
        "ae.lambda",
        "ae.batch_size",
        "ae.learning_rate",
        "ae.epochs",
        "ae.init_scale",
        "conv.pool3d",
        "conv.pool2d",
        "mlp.hidden",
        "mlp.learning_rate",
        "mlp.momentum",
        "mlp.batch_size",
        "mlp.max_epochs",
        "mlp.eval_every",
        "export.scan",
        "export.filter",
        "export.slice",
    ];

    pub fn get(&self, key: &str) -> Result<String> {
        Ok(match key {
            "mode" => self.mode.to_string(),
            "task" => self.task.to_string(),
            "seed" => self.seed.to_string(),
            "data_dir" => self.data_dir.display().to_string(),
            "work_dir" => self.work_dir.display().to_string(),
            "synth.shape" => show3(self.synth_shape),
            "synth.noise_sd" => self.synth_noise_sd.to_string(),
            "synth.count_per_class" => self.synth_count_per_class.to_string(),
            "split.val_fraction" => self.split_val_fraction.to_string(),
            "split.test_fraction" => self.split_test_fraction.to_string(),
            "ae.hidden" => self.ae_hidden.to_string(),
            "ae.scans" => self.ae_scans.to_string(),
            "ae.patches_per_scan" => self.ae_patches_per_scan.to_string(),
            "ae.patch3d" => show3(self.ae_patch3d),
            "ae.patch2d" => show2(self.ae_patch2d),
            "ae.sparsity" => self.ae_sparsity.to_string(),
            "ae.beta" => self.ae_beta.to_string(),
            "ae.lambda" => self.ae_lambda.to_string(),
            "ae.batch_size" => self.ae_batch_size.to_string(),
            "ae.learning_rate" => self.ae_learning_rate.to_string(),
            "ae.epochs" => self.ae_epochs.to_string(),
            "ae.init_scale" => self.ae_init_scale.to_string(),
            "conv.pool3d" => show3(self.conv_pool3d),
            "conv.pool2d" => show2(self.conv_pool2d),
            "mlp.hidden" => self.mlp_hidden.to_string(),
            "mlp.learning_rate" => self.mlp_learning_rate.to_string(),
            "mlp.momentum" => self.mlp_momentum.to_string(),
            "mlp.batch_size" => self.mlp_batch_size.to_string(),
            "mlp.max_epochs" => self.mlp_max_epochs.to_string(),
            "mlp.eval_every" => self.mlp_eval_every.to_string(),
            "export.scan" => self.export_scan.to_string(),
            "export.filter" => self.export_filter.to_string(),
            "export.slice" => self.export_slice.to_string(),
            other => bail!("unknown config key {other:?}"),
        })
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let v = value.trim();
        let num = |v: &str| v.parse::<usize>().with_context(|| format!("{key}: expected a non-negative integer, got {v:?}"));
        let real = |v: &str| v.parse::<f64>().with_context(|| format!("{key}: expected a number, got {v:?}"));
        match key {
            "mode" => self.mode = v.parse()?,
            "task" => self.task = v.parse()?,
            "seed" => self.seed = v.parse().with_context(|| format!("seed: expected an unsigned 64-bit integer, got {v:?}"))?,
            "data_dir" => self.data_dir = PathBuf::from(v),
            "work_dir" => self.work_dir = PathBuf::from(v),
            "synth.shape" => self.synth_shape = parse_shape3(v)?,
            "synth.noise_sd" => self.synth_noise_sd = real(v)?,
            "synth.count_per_class" => self.synth_count_per_class = num(v)?,
            "split.val_fraction" => self.split_val_fraction = real(v)?,
            "split.test_fraction" => self.split_test_fraction = real(v)?,
            "ae.hidden" => self.ae_hidden = num(v)?,
            "ae.scans" => self.ae_scans = num(v)?,
            "ae.patches_per_scan" => self.ae_patches_per_scan = num(v)?,
            "ae.patch3d" => self.ae_patch3d = parse_shape3(v)?,
            "ae.patch2d" => self.ae_patch2d = parse_shape2(v)?,
            "ae.sparsity" => self.ae_sparsity = real(v)?,
            "ae.beta" => self.ae_beta = real(v)?,
            "ae.lambda" => self.ae_lambda = real(v)?,
            "ae.batch_size" => self.ae_batch_size = num(v)?,
            "ae.learning_rate" => self.ae_learning_rate = real(v)?,
            "ae.epochs" => self.ae_epochs = num(v)?,
            "ae.init_scale" => self.ae_init_scale = real(v)?,
            "conv.pool3d" => self.conv_pool3d = parse_shape3(v)?,
            "conv.pool2d" => self.conv_pool2d = parse_shape2(v)?,
            "mlp.hidden" => self.mlp_hidden = num(v)?,
            "mlp.learning_rate" => self.mlp_learning_rate = real(v)?,
            "mlp.momentum" => self.mlp_momentum = real(v)?,
            "mlp.batch_size" => self.mlp_batch_size = num(v)?,
            "mlp.max_epochs" => self.mlp_max_epochs = num(v)?,
            "mlp.eval_every" => self.mlp_eval_every = num(v)?,
            "export.scan" => self.export_scan = num(v)?,
            "export.filter" => self.export_filter = num(v)?,
            "export.slice" => self.export_slice = num(v)?,
            other => bail!("unknown config key {other:?}"),
        }
        Ok(())
    }

    /// Applies `key = value` lines on top of `self`.
    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        let mut seen = std::collections::HashSet::new();
        for (no, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| anyhow!("line {}: expected key = value, got {line:?}", no + 1))?;
            let key = key.trim();
            if !seen.insert(key.to_string()) {
                bail!("line {}: key {key:?} given twice", no + 1);
            }
            self.set(key, value).with_context(|| format!("line {}", no + 1))?;
        }
        Ok(())
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = RunConfig::default();
        cfg.apply_text(text)?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        Self::parse(&text).with_context(|| format!("config {}", path.display()))
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for key in Self::KEYS {
            let _ = writeln!(out, "{key} = {}", self.get(key).expect("listed key"));
        }
        out
    }

    pub fn stage_seed(&self, stage: &str) -> u64 {
        derive_seed(self.seed, stage, 0)
    }

    pub fn synth_config(&self) -> SynthConfig {
        SynthConfig {
            shape: self.synth_shape,
            noise_sd: self.synth_noise_sd,
            count_per_class: self.synth_count_per_class,
            seed: self.stage_seed("synth"),
            ..SynthConfig::default()
        }
    }

    pub fn split_sizes(&self) -> SplitSizes {
        SplitSizes::Fractions { val: self.split_val_fraction, test: self.split_test_fraction }
    }

    pub fn sparsity(&self) -> SparsityConfig {
        SparsityConfig { target: self.ae_sparsity, beta: self.ae_beta, lambda: self.ae_lambda }
    }

    pub fn ae_train(&self) -> AeTrainConfig {
        AeTrainConfig {
            hidden: self.ae_hidden,
            batch_size: self.ae_batch_size,
            learning_rate: self.ae_learning_rate,
            epochs: self.ae_epochs,
            seed: self.stage_seed("pretrain"),
            init_scale: self.ae_init_scale,
        }
    }

    pub fn fit(&self) -> FitConfig {
        FitConfig {
            learning_rate: self.mlp_learning_rate,
            momentum: self.mlp_momentum,
            batch_size: self.mlp_batch_size,
            max_epochs: self.mlp_max_epochs,
            seed: derive_seed(self.seed, "train", self.task as u64),
            eval_every: self.mlp_eval_every,
        }
    }

    pub fn patch_len(&self) -> usize {
        match self.mode {
            ConvMode::ThreeD => self.ae_patch3d.0 * self.ae_patch3d.1 * self.ae_patch3d.2,
            ConvMode::TwoD => self.ae_patch2d.0 * self.ae_patch2d.1,
        }
    }

    pub fn manifest_path(&self) -> PathBuf {
        self.data_dir.join("manifest.csv")
    }

    pub fn autoencoder_path(&self) -> PathBuf {
        self.work_dir.join(format!("ae_{}.vxae", self.mode))
    }

    pub fn patch_cache_path(&self) -> PathBuf {
        self.work_dir.join(format!("patches_{}.vxpc", self.mode))
    }

    pub fn feature_dir(&self) -> PathBuf {
        self.work_dir.join(format!("features_{}", self.mode))
    }

    pub fn feature_path(&self, index: usize) -> PathBuf {
        self.feature_dir().join(format!("{index:05}.vxfv"))
    }

    pub fn classifier_path(&self) -> PathBuf {
        self.work_dir.join(format!("mlp_{}_{}.vxmc", self.mode, self.task))
    }

    pub fn history_path(&self) -> PathBuf {
        self.work_dir.join(format!("history_{}_{}.json", self.mode, self.task))
    }

    pub fn metrics_path(&self) -> PathBuf {
        Self::metrics_path_for(&self.work_dir, self.mode, self.task)
    }

    pub fn metrics_path_for(work_dir: &Path, mode: ConvMode, task: Task) -> PathBuf {
        work_dir.join(format!("metrics_{mode}_{task}.json"))
    }

    pub fn export_path(&self) -> PathBuf {
        self.work_dir.join(format!(
            "feature_{}_scan{}_f{}_s{}.pgm",
            self.mode, self.export_scan, self.export_filter, self.export_slice
        ))
    }
}
