//! Frozen convolution + max-pooling feature extraction.
//!
//! A bank holds `p` filters lifted from autoencoder bases. Volumetric banks
//! convolve the whole scan with each 3D filter; planar banks convolve every
//! depth slice with each 2D filter. Each map gets its bias, a sigmoid and
//! non-overlapping max-pooling, and the pooled maps are stacked.
//!
//! Stacking order of a [`FeatureVector`]:
//! - volumetric: filter-major, then the canonical (depth, height, width)
//!   order of the pooled map;
//! - planar: filter-major, then slice, then row-major order of the pooled
//!   slice.

use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

#[cfg(feature = "parallel")]
use rayon::prelude::*;

use crate::autoencoder::SparseAutoencoder;
use crate::binio::{ByteReader, ByteWriter};
use crate::error::{dim_err, param_err, Error, Result};
use crate::kernels::{convolve2d_valid, convolve3d_valid, maxpool2d, maxpool3d, pooled_shape, sigmoid, valid_shape};
use crate::tensor::{Matrix, Shape3, Tensor3};

pub const FEATURE_MAGIC: &[u8; 4] = b"VXFV";
pub const FEATURE_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ConvMode {
    ThreeD,
    TwoD,
}

impl fmt::Display for ConvMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ConvMode::ThreeD => "3d",
            ConvMode::TwoD => "2d",
        })
    }
}

impl FromStr for ConvMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "3d" => Ok(ConvMode::ThreeD),
            "2d" => Ok(ConvMode::TwoD),
            other => Err(param_err(format!("unknown mode {other:?}, expected 3d or 2d"))),
        }
    }
}

/// `sigmoid(W * x + b)` with `b` added to every entry.
pub fn feature_map(x: &Tensor3, w: &Tensor3, b: f64) -> Result<Tensor3> {
    let mut y = convolve3d_valid(x, w)?;
    y.data_mut().iter_mut().for_each(|v| *v = sigmoid(*v + b));
    Ok(y)
}

pub fn feature_map_2d(x: &Matrix, w: &Matrix, b: f64) -> Result<Matrix> {
    let mut y = convolve2d_valid(x, w)?;
    y.data_mut().iter_mut().for_each(|v| *v = sigmoid(*v + b));
    Ok(y)
}

#[derive(Debug, Clone, PartialEq)]
enum FilterSet {
    Volume { filters: Vec<Tensor3>, pool: Shape3 },
    Plane { filters: Vec<Matrix>, pool: (usize, usize) },
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvFeatureBank {
    filters: FilterSet,
    biases: Vec<f64>,
    input_shape: Shape3,
}

fn check_axes(got: Shape3, expected: Shape3) -> Result<()> {
    for (axis, g, e) in [("depth", got.0, expected.0), ("height", got.1, expected.1), ("width", got.2, expected.2)] {
        if g != e {
            return Err(dim_err(format!("scan {axis} is {g}, bank expects {e} (scan {got:?}, expected {expected:?})")));
        }
    }
    Ok(())
}

impl ConvFeatureBank {
    pub fn volumetric(bases: Vec<(Tensor3, f64)>, pool: Shape3, input_shape: Shape3) -> Result<Self> {
        let first = bases.first().ok_or_else(|| param_err("feature bank needs at least one filter"))?.0.shape();
        if let Some((f, _)) = bases.iter().find(|(f, _)| f.shape() != first) {
            return Err(dim_err(format!("mixed filter shapes {first:?} and {:?}", f.shape())));
        }
        pooled_shape(valid_shape(input_shape, first)?, pool)?;
        let (filters, biases) = bases.into_iter().unzip();
        Ok(ConvFeatureBank { filters: FilterSet::Volume { filters, pool }, biases, input_shape })
    }

    pub fn planar(bases: Vec<(Matrix, f64)>, pool: (usize, usize), input_shape: Shape3) -> Result<Self> {
        let (r, c) = bases
            .first()
            .map(|(f, _)| (f.rows(), f.cols()))
            .ok_or_else(|| param_err("feature bank needs at least one filter"))?;
        if let Some((f, _)) = bases.iter().find(|(f, _)| (f.rows(), f.cols()) != (r, c)) {
            return Err(dim_err(format!("mixed filter shapes {:?} and {:?}", (r, c), (f.rows(), f.cols()))));
        }
        let conv = valid_shape((input_shape.1, input_shape.2, 1), (r, c, 1))?;
        pooled_shape(conv, (pool.0, pool.1, 1))?;
        let (filters, biases) = bases.into_iter().unzip();
        Ok(ConvFeatureBank { filters: FilterSet::Plane { filters, pool }, biases, input_shape })
    }

    pub fn from_autoencoder_3d(ae: &SparseAutoencoder, patch: Shape3, pool: Shape3, input_shape: Shape3) -> Result<Self> {
        Self::volumetric(ae.extract_bases_3d(patch)?, pool, input_shape)
    }

    pub fn from_autoencoder_2d(
        ae: &SparseAutoencoder,
        patch: (usize, usize),
        pool: (usize, usize),
        input_shape: Shape3,
    ) -> Result<Self> {
        Self::planar(ae.extract_bases_2d(patch)?, pool, input_shape)
    }

    pub fn mode(&self) -> ConvMode {
        match self.filters {
            FilterSet::Volume { .. } => ConvMode::ThreeD,
            FilterSet::Plane { .. } => ConvMode::TwoD,
        }
    }

    pub fn filter_count(&self) -> usize {
        self.biases.len()
    }

    pub fn biases(&self) -> &[f64] {
        &self.biases
    }

    pub fn input_shape(&self) -> Shape3 {
        self.input_shape
    }

    /// Unpooled map shape. Planar banks report `(slices, rows, cols)`.
    pub fn feature_map_shape(&self) -> Shape3 {
        match &self.filters {
            FilterSet::Volume { filters, .. } => valid_shape(self.input_shape, filters[0].shape()).unwrap(),
            FilterSet::Plane { filters, .. } => {
                let (h, w, _) =
                    valid_shape((self.input_shape.1, self.input_shape.2, 1), (filters[0].rows(), filters[0].cols(), 1))
                        .unwrap();
                (self.input_shape.0, h, w)
            }
        }
    }

    /// Pooled map shape per filter. Planar banks report `(slices, rows, cols)`.
    pub fn pooled_map_shape(&self) -> Shape3 {
        let fm = self.feature_map_shape();
        match &self.filters {
            FilterSet::Volume { pool, .. } => pooled_shape(fm, *pool).unwrap(),
            FilterSet::Plane { pool, .. } => {
                let (h, w, _) = pooled_shape((fm.1, fm.2, 1), (pool.0, pool.1, 1)).unwrap();
                (fm.0, h, w)
            }
        }
    }

    pub fn feature_len(&self) -> usize {
        let (a, b, c) = self.pooled_map_shape();
        self.filter_count() * a * b * c
    }

    pub fn featurize(&self, scan: &Tensor3) -> Result<FeatureVector> {
        check_axes(scan.shape(), self.input_shape)?;
        let blocks: Vec<Vec<f64>> = match &self.filters {
            FilterSet::Volume { filters, pool } => {
                let one = |(w, &b): (&Tensor3, &f64)| -> Result<Vec<f64>> {
                    Ok(maxpool3d(&feature_map(scan, w, b)?, *pool)?.into_data())
                };
                #[cfg(feature = "parallel")]
                let out = filters.par_iter().zip(self.biases.par_iter()).map(one).collect::<Result<_>>()?;
                #[cfg(not(feature = "parallel"))]
                let out = filters.iter().zip(self.biases.iter()).map(one).collect::<Result<_>>()?;
                out
            }
            FilterSet::Plane { filters, pool } => {
                let slices: Vec<Matrix> = (0..scan.shape().0).map(|i| scan.slice(i)).collect::<Result<_>>()?;
                let one = |(w, &b): (&Matrix, &f64)| -> Result<Vec<f64>> {
                    let mut block = Vec::new();
                    for s in &slices {
                        block.extend_from_slice(maxpool2d(&feature_map_2d(s, w, b)?, *pool)?.data());
                    }
                    Ok(block)
                };
                #[cfg(feature = "parallel")]
                let out = filters.par_iter().zip(self.biases.par_iter()).map(one).collect::<Result<_>>()?;
                #[cfg(not(feature = "parallel"))]
                let out = filters.iter().zip(self.biases.iter()).map(one).collect::<Result<_>>()?;
                out
            }
        };
        Ok(FeatureVector { values: blocks.concat() })
    }

    /// Depth slice `slice_index` of the unpooled feature map of filter
    /// `filter_index`. For planar banks this is the map of that slice.
    pub fn feature_map_slice(&self, scan: &Tensor3, filter_index: usize, slice_index: usize) -> Result<Matrix> {
        check_axes(scan.shape(), self.input_shape)?;
        if filter_index >= self.filter_count() {
            return Err(param_err(format!("filter index {filter_index} out of range for {} filters", self.filter_count())));
        }
        let depth = self.feature_map_shape().0;
        if slice_index >= depth {
            return Err(param_err(format!("slice index {slice_index} out of range for {depth} slices")));
        }
        let b = self.biases[filter_index];
        match &self.filters {
            FilterSet::Volume { filters, .. } => feature_map(scan, &filters[filter_index], b)?.slice(slice_index),
            FilterSet::Plane { filters, .. } => feature_map_2d(&scan.slice(slice_index)?, &filters[filter_index], b),
        }
    }

    /// Writes [`feature_map_slice`](Self::feature_map_slice) as a min-max
    /// scaled 8-bit PGM.
    pub fn export_feature_slice(
        &self,
        scan: &Tensor3,
        filter_index: usize,
        slice_index: usize,
        path: impl AsRef<Path>,
    ) -> Result<GrayImage> {
        let img = GrayImage::from_matrix(&self.feature_map_slice(scan, filter_index, slice_index)?);
        img.write_pgm(path)?;
        Ok(img)
    }
}

/// Stacked pooled activations of one scan.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVector {
    pub values: Vec<f64>,
}

impl FeatureVector {
    /// `VXFV`: magic, version u32, length u64, values as little-endian f32.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = ByteWriter::with_magic(FEATURE_MAGIC);
        w.u32(FEATURE_VERSION).u64(self.values.len() as u64).f32s(&self.values);
        w.finish()
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = ByteReader::new(bytes);
        r.expect_magic(FEATURE_MAGIC)?;
        r.version(FEATURE_VERSION)?;
        let len = r.u64("length")?;
        let len = usize::try_from(len).map_err(|_| r.fail("length exceeds address space"))?;
        let values = r.f32s(len, "feature values")?;
        r.finish()?;
        Ok(FeatureVector { values })
    }

    /// Values as stored on disk (rounded through f32).
    pub fn quantized(&self) -> FeatureVector {
        FeatureVector { values: self.values.iter().map(|&v| f64::from(v as f32)).collect() }
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_bytes(&fs::read(path)?)
    }
}

/// 8-bit grayscale raster.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GrayImage {
    pub width: usize,
    pub height: usize,
    pub pixels: Vec<u8>,
}

impl GrayImage {
    /// Rows become image rows. Values are min-max scaled to 0..=255; a
    /// constant matrix maps to uniform 128.
    pub fn from_matrix(m: &Matrix) -> GrayImage {
        let (lo, hi) = m.data().iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
        let pixels = if hi > lo {
            m.data().iter().map(|&v| ((v - lo) / (hi - lo) * 255.0).round() as u8).collect()
        } else {
            vec![128; m.data().len()]
        };
        GrayImage { width: m.cols(), height: m.rows(), pixels }
    }

    /// Binary PGM (P5), maxval 255.
    pub fn to_pgm(&self) -> Vec<u8> {
        let mut out = format!("P5\n{} {}\n255\n", self.width, self.height).into_bytes();
        out.extend_from_slice(&self.pixels);
        out
    }

    pub fn from_pgm(bytes: &[u8]) -> Result<GrayImage> {
        let mut pos = 0usize;
        let mut fields = Vec::with_capacity(4);
        while fields.len() < 4 {
            while pos < bytes.len() && (bytes[pos].is_ascii_whitespace() || bytes[pos] == b'#') {
                if bytes[pos] == b'#' {
                    while pos < bytes.len() && bytes[pos] != b'\n' {
                        pos += 1;
                    }
                } else {
                    pos += 1;
                }
            }
            let start = pos;
            while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
                pos += 1;
            }
            if start == pos {
                return Err(Error::Format { offset: pos as u64, reason: "truncated PGM header".into() });
            }
            fields.push(String::from_utf8_lossy(&bytes[start..pos]).into_owned());
        }
        let bad = |at: usize, reason: &str| Error::Format { offset: at as u64, reason: reason.into() };
        if fields[0] != "P5" {
            return Err(Error::Format { offset: 0, reason: format!("expected P5, found {:?}", fields[0]) });
        }
        let width: usize = fields[1].parse().map_err(|_| bad(pos, "bad width"))?;
        let height: usize = fields[2].parse().map_err(|_| bad(pos, "bad height"))?;
        if fields[3] != "255" {
            return Err(bad(pos, "only maxval 255 is supported"));
        }
        // exactly one whitespace byte separates the header from the raster
        pos += 1;
        let raster = bytes.get(pos..).unwrap_or_default();
        if raster.len() != width * height {
            return Err(bad(pos, &format!("raster has {} bytes, expected {}", raster.len(), width * height)));
        }
        Ok(GrayImage { width, height, pixels: raster.to_vec() })
    }

    pub fn write_pgm(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, self.to_pgm())?;
        Ok(())
    }

    pub fn read_pgm(path: impl AsRef<Path>) -> Result<GrayImage> {
        Self::from_pgm(&fs::read(path)?)
    }
}
