//! Browser demo: browse synthetic volumes, train a small sparse autoencoder
//! on planar patches and look at its bases and feature maps, and plot the
//! sparsity penalty.
//!
//! Images cross the boundary as row-major 8-bit luminance buffers.

use voxelnet::autoencoder::{kl_penalty, train_autoencoder, AeTrainConfig, SparseAutoencoder, SparsityConfig};
use voxelnet::convnet::{feature_map_2d, GrayImage};
use voxelnet::dataio::{extract_patches_2d, normalize_volume, synth_generate, SynthConfig};
use voxelnet::{Matrix, Tensor3};
use wasm_bindgen::prelude::*;

/// Side of the square patches and filters.
pub const PATCH: usize = 7;
const VOLUMES_PER_CLASS: usize = 2;
const PATCHES_PER_SCAN: usize = 300;

fn text<E: std::fmt::Display>(e: E) -> String {
    e.to_string()
}

#[wasm_bindgen]
pub fn patch_size() -> usize {
    PATCH
}

/// `KL(target || q)` at `points` evenly spaced `q` in the open interval (0, 1).
#[wasm_bindgen]
pub fn kl_curve(target: f64, points: usize) -> Result<Vec<f64>, String> {
    (1..=points)
        .map(|i| kl_penalty(target, &[i as f64 / (points + 1) as f64]).map_err(text))
        .collect()
}

#[wasm_bindgen]
pub struct Demo {
    /// One normalized volume per class (AD, MCI, HC) for display.
    shown: Vec<Tensor3>,
    patches: Vec<Vec<f64>>,
    model: Option<SparseAutoencoder>,
    activations: Vec<f64>,
    seed: u64,
}

#[wasm_bindgen]
impl Demo {
    #[wasm_bindgen(constructor)]
    pub fn new(seed: u32, noise_sd: f64) -> Result<Demo, String> {
        let cfg = SynthConfig { noise_sd, count_per_class: VOLUMES_PER_CLASS, seed: seed as u64, ..SynthConfig::default() };
        let volumes = synth_generate(&cfg)
            .map_err(text)?
            .iter()
            .map(|r| normalize_volume(&r.volume))
            .collect::<Result<Vec<_>, _>>()
            .map_err(text)?;
        let patches = extract_patches_2d(&volumes, PATCHES_PER_SCAN, (PATCH, PATCH), seed as u64).map_err(text)?.patches;
        let shown = volumes.into_iter().step_by(VOLUMES_PER_CLASS).collect();
        Ok(Demo { shown, patches, model: None, activations: Vec::new(), seed: seed as u64 })
    }

    pub fn depth(&self) -> usize {
        self.shown[0].shape().0
    }

    pub fn height(&self) -> usize {
        self.shown[0].shape().1
    }

    pub fn width(&self) -> usize {
        self.shown[0].shape().2
    }

    fn scan(&self, class: usize, slice: usize) -> Result<Matrix, String> {
        let v = self.shown.get(class).ok_or_else(|| format!("class {class} out of range"))?;
        v.slice(slice).map_err(text)
    }

    /// Depth slice of the example volume for `class` (0 = AD, 1 = MCI, 2 = HC).
    pub fn scan_slice(&self, class: usize, slice: usize) -> Result<Vec<u8>, String> {
        Ok(GrayImage::from_matrix(&self.scan(class, slice)?).pixels)
    }

    /// Trains on the patch set and returns mean |s_hat - target| over hidden units.
    pub fn train(&mut self, hidden: usize, target: f64, beta: f64, epochs: usize) -> Result<f64, String> {
        let sp = SparsityConfig { target, beta, lambda: 3e-3 };
        let cfg = AeTrainConfig { hidden, epochs, batch_size: 50, seed: self.seed, ..AeTrainConfig::default() };
        let model = train_autoencoder(&self.patches, &[] as &[Vec<f64>], &cfg, &sp).map_err(text)?.model;
        self.activations = model.mean_activations(&self.patches).map_err(text)?;
        self.model = Some(model);
        Ok(self.activations.iter().map(|a| (a - target).abs()).sum::<f64>() / self.activations.len() as f64)
    }

    pub fn mean_activations(&self) -> Vec<f64> {
        self.activations.clone()
    }

    pub fn basis_count(&self) -> usize {
        self.model.as_ref().map_or(0, |m| m.hidden_len())
    }

    fn basis(&self, index: usize) -> Result<(Matrix, f64), String> {
        let model = self.model.as_ref().ok_or("no trained model")?;
        let mut bases = model.extract_bases_2d((PATCH, PATCH)).map_err(text)?;
        if index >= bases.len() {
            return Err(format!("basis {index} out of range"));
        }
        Ok(bases.swap_remove(index))
    }

    /// PATCH x PATCH image of one learned filter.
    pub fn basis_image(&self, index: usize) -> Result<Vec<u8>, String> {
        Ok(GrayImage::from_matrix(&self.basis(index)?.0).pixels)
    }

    /// Sigmoid feature map of one filter over one slice; each side shrinks
    /// by PATCH - 1.
    pub fn feature_slice(&self, class: usize, filter: usize, slice: usize) -> Result<Vec<u8>, String> {
        let (w, b) = self.basis(filter)?;
        let fm = feature_map_2d(&self.scan(class, slice)?, &w, b).map_err(text)?;
        Ok(GrayImage::from_matrix(&fm).pixels)
    }
}
