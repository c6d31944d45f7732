//! Volume files, normalization, patch sampling and dataset splits.
//!
//! On-disk volumes use the `VXV1` layout: the four magic bytes, depth,
//! height and width as little-endian u32, then every voxel as a
//! little-endian f32 in canonical (depth-major, width-fastest) order.
//! Values are computed in f64 and narrowed on write.

mod manifest;
mod synth;

use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

pub use manifest::{DatasetManifest, ManifestEntry};
pub use synth::{synth_generate, Blob, SynthConfig};

use crate::binio::{dim_u32, ByteReader, ByteWriter};
use crate::error::{dim_err, param_err, Error, Result};
use crate::rng::{derive_seed, Rng};
use crate::tensor::{Shape3, Tensor3};

pub const VOLUME_MAGIC: &[u8; 4] = b"VXV1";
pub const PATCH_CACHE_MAGIC: &[u8; 4] = b"VXPC";

/// Standard deviations at or below this are treated as constant volumes.
pub const MIN_STD: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Diagnosis {
    Ad,
    Mci,
    Hc,
}

impl Diagnosis {
    pub const ALL: [Diagnosis; 3] = [Diagnosis::Ad, Diagnosis::Mci, Diagnosis::Hc];

    /// Three-way class index: AD=0, MCI=1, HC=2.
    pub fn index(self) -> usize {
        self as usize
    }

    pub fn code(self) -> &'static str {
        match self {
            Diagnosis::Ad => "AD",
            Diagnosis::Mci => "MCI",
            Diagnosis::Hc => "HC",
        }
    }
}

impl fmt::Display for Diagnosis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())
    }
}

impl FromStr for Diagnosis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "AD" => Ok(Diagnosis::Ad),
            "MCI" => Ok(Diagnosis::Mci),
            "HC" => Ok(Diagnosis::Hc),
            other => Err(param_err(format!("unknown label {other:?}, expected AD, MCI or HC"))),
        }
    }
}

/// Classification task. Binary tasks keep only their two classes and map the
/// first-named class to 0 (`ad-hc`: AD=0, HC=1).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Task {
    ThreeWay,
    AdHc,
    AdMci,
    HcMci,
}

impl Task {
    pub const ALL: [Task; 4] = [Task::ThreeWay, Task::AdHc, Task::AdMci, Task::HcMci];

    pub fn members(self) -> &'static [Diagnosis] {
        use Diagnosis::*;
        match self {
            Task::ThreeWay => &[Ad, Mci, Hc],
            Task::AdHc => &[Ad, Hc],
            Task::AdMci => &[Ad, Mci],
            Task::HcMci => &[Hc, Mci],
        }
    }

    pub fn classes(self) -> usize {
        self.members().len()
    }

    pub fn relabel(self, d: Diagnosis) -> Option<usize> {
        self.members().iter().position(|&m| m == d)
    }

    /// Row label in the accuracy table, e.g. `AD vs. HC`.
    pub fn title(self) -> String {
        match self {
            Task::ThreeWay => "3-way".to_string(),
            _ => {
                let m = self.members();
                format!("{} vs. {}", m[0], m[1])
            }
        }
    }
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Task::ThreeWay => "3way",
            Task::AdHc => "ad-hc",
            Task::AdMci => "ad-mci",
            Task::HcMci => "hc-mci",
        })
    }
}

impl FromStr for Task {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Task::ALL
            .into_iter()
            .find(|t| t.to_string() == s)
            .ok_or_else(|| param_err(format!("unknown task {s:?}, expected 3way, ad-hc, ad-mci or hc-mci")))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VolumeRecord {
    pub volume: Tensor3,
    pub label: Diagnosis,
    pub subject_id: String,
}

pub fn encode_volume(t: &Tensor3) -> Vec<u8> {
    let (d, h, w) = t.shape();
    let mut out = ByteWriter::with_magic(VOLUME_MAGIC);
    out.u32(d as u32).u32(h as u32).u32(w as u32).f32s(t.data());
    out.finish()
}

pub fn decode_volume(bytes: &[u8]) -> Result<Tensor3> {
    let mut r = ByteReader::new(bytes);
    r.expect_magic(VOLUME_MAGIC)?;
    let mut dims = [0usize; 3];
    for (axis, d) in ["depth", "height", "width"].iter().zip(dims.iter_mut()) {
        let v = r.u32(axis)?;
        *d = dim_u32(v, axis, &r)?;
    }
    let voxels = r.f32s(dims[0] * dims[1] * dims[2], "voxels")?;
    r.finish()?;
    Tensor3::new((dims[0], dims[1], dims[2]), voxels)
}

/// Reads only the header of a `VXV1` file.
pub fn volume_shape(bytes: &[u8]) -> Result<Shape3> {
    let mut r = ByteReader::new(bytes);
    r.expect_magic(VOLUME_MAGIC)?;
    Ok((r.u32("depth")? as usize, r.u32("height")? as usize, r.u32("width")? as usize))
}

pub fn save_volume(t: &Tensor3, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, encode_volume(t))?;
    Ok(())
}

pub fn load_volume(path: impl AsRef<Path>) -> Result<Tensor3> {
    decode_volume(&fs::read(path)?)
}

/// Zero mean, unit population standard deviation over the whole volume.
pub fn normalize_volume(t: &Tensor3) -> Result<Tensor3> {
    let n = t.len() as f64;
    let mean = t.data().iter().sum::<f64>() / n;
    let var = t.data().iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    let sd = var.sqrt();
    if !(sd > MIN_STD) {
        return Err(Error::Degenerate(format!("volume standard deviation {sd:e} is too small to normalize")));
    }
    Ok(t.map(|v| (v - mean) / sd))
}

/// Where a patch came from: scan index and the block's lowest corner. For
/// planar patches the corner is `(slice, row, col)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PatchOrigin {
    pub scan: usize,
    pub corner: Shape3,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PatchSet {
    pub patch_len: usize,
    pub patches: Vec<Vec<f64>>,
    pub origins: Vec<PatchOrigin>,
}

fn sample_patches(volumes: &[Tensor3], per_scan: usize, size: Shape3, seed: u64, stage: &str) -> Result<PatchSet> {
    let patch_len = size.0 * size.1 * size.2;
    if patch_len == 0 {
        return Err(dim_err(format!("patch size must be positive, got {size:?}")));
    }
    let mut patches = Vec::with_capacity(volumes.len() * per_scan);
    let mut origins = Vec::with_capacity(volumes.len() * per_scan);
    for (scan, v) in volumes.iter().enumerate() {
        let (d, h, w) = v.shape();
        if size.0 > d || size.1 > h || size.2 > w {
            return Err(dim_err(format!("patch {size:?} does not fit in scan {scan} of shape {:?}", v.shape())));
        }
        let mut rng = Rng::new(derive_seed(seed, stage, scan as u64));
        for _ in 0..per_scan {
            let corner = (rng.below(d - size.0 + 1), rng.below(h - size.1 + 1), rng.below(w - size.2 + 1));
            patches.push(v.block(corner, size)?);
            origins.push(PatchOrigin { scan, corner });
        }
    }
    Ok(PatchSet { patch_len, patches, origins })
}

/// `per_scan` cubic-block patches per volume at uniformly random corners,
/// each unrolled in canonical order.
pub fn extract_patches_3d(volumes: &[Tensor3], per_scan: usize, size: Shape3, seed: u64) -> Result<PatchSet> {
    sample_patches(volumes, per_scan, size, seed, "patch3d")
}

/// Planar patches from depth slices: the corner is `(slice, row, col)`.
pub fn extract_patches_2d(volumes: &[Tensor3], per_scan: usize, size: (usize, usize), seed: u64) -> Result<PatchSet> {
    sample_patches(volumes, per_scan, (1, size.0, size.1), seed, "patch2d")
}

/// `VXPC`: magic, patch length u32, count u64, values as little-endian f32.
pub fn encode_patch_cache(patch_len: usize, patches: &[Vec<f64>]) -> Result<Vec<u8>> {
    if let Some(p) = patches.iter().find(|p| p.len() != patch_len) {
        return Err(dim_err(format!("patch of length {} in a cache of length {patch_len}", p.len())));
    }
    let mut w = ByteWriter::with_magic(PATCH_CACHE_MAGIC);
    w.u32(patch_len as u32).u64(patches.len() as u64);
    for p in patches {
        w.f32s(p);
    }
    Ok(w.finish())
}

pub fn decode_patch_cache(bytes: &[u8]) -> Result<(usize, Vec<Vec<f64>>)> {
    let mut r = ByteReader::new(bytes);
    r.expect_magic(PATCH_CACHE_MAGIC)?;
    let v = r.u32("patch length")?;
    let patch_len = dim_u32(v, "patch length", &r)?;
    let count = r.u64("patch count")?;
    let count = usize::try_from(count).map_err(|_| r.fail("patch count exceeds address space"))?;
    let mut patches = Vec::with_capacity(count.min(1 << 24));
    for _ in 0..count {
        patches.push(r.f32s(patch_len, "patch values")?);
    }
    r.finish()?;
    Ok((patch_len, patches))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Split {
    Train,
    Val,
    Test,
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        })
    }
}

impl FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "val" => Ok(Split::Val),
            "test" => Ok(Split::Test),
            other => Err(param_err(format!("unknown split {other:?}"))),
        }
    }
}

/// Requested partition sizes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SplitSizes {
    Counts { train: usize, val: usize, test: usize },
    /// Validation and test fractions, rounded to the nearest count; the
    /// remainder trains.
    Fractions { val: f64, test: f64 },
}

/// Train/validation/test sizes reported for the 2,265-scan cohort.
pub const REFERENCE_SPLIT: SplitSizes = SplitSizes::Counts { train: 1731, val: 306, test: 228 };

impl SplitSizes {
    /// The reference cohort's proportions.
    pub fn reference_fractions() -> SplitSizes {
        SplitSizes::Fractions { val: 306.0 / 2265.0, test: 228.0 / 2265.0 }
    }

    pub fn counts(&self, n: usize) -> Result<(usize, usize, usize)> {
        match *self {
            SplitSizes::Counts { train, val, test } => {
                if train + val + test != n {
                    return Err(param_err(format!("split counts {train}+{val}+{test} do not sum to {n}")));
                }
                Ok((train, val, test))
            }
            SplitSizes::Fractions { val, test } => {
                if !(val >= 0.0 && test >= 0.0 && val + test <= 1.0) {
                    return Err(param_err(format!("invalid split fractions val={val} test={test}")));
                }
                let v = (val * n as f64).round() as usize;
                let t = (test * n as f64).round() as usize;
                if v + t > n {
                    return Err(param_err(format!("split fractions leave no room in {n} entries")));
                }
                Ok((n - v - t, v, t))
            }
        }
    }
}

/// Shuffles `0..n` with `seed` and assigns the first block to train, the next
/// to validation and the rest to test. Returns one split per entry.
pub fn split_manifest(n: usize, sizes: SplitSizes, seed: u64) -> Result<Vec<Split>> {
    let (train, val, _) = sizes.counts(n)?;
    let order = Rng::new(derive_seed(seed, "split", 0)).permutation(n);
    let mut out = vec![Split::Test; n];
    for (rank, &i) in order.iter().enumerate() {
        out[i] = if rank < train {
            Split::Train
        } else if rank < train + val {
            Split::Val
        } else {
            Split::Test
        };
    }
    Ok(out)
}
