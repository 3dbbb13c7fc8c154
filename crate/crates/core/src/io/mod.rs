//! File formats, dataset access and depth completion.
//!
//! Binary formats are little-endian. `.zpf` holds a raw feature grid with
//! optional mask and saliency; `.zdf` holds a depth map with a validity mask.
//! Manifests, pair lists and reports are JSON.

mod check;
mod dataset;
mod depth_file;
mod feature_file;
mod inpaint;
mod manifest;

pub use check::{check_file, CheckedFile};
pub use dataset::{read_pairs, write_pairs, DataSource, Dataset, FrameRef, PairSpec, TargetRef};
pub use depth_file::{decode_depth, encode_depth, read_depth_file, write_depth_file, DEPTH_MAGIC};
pub use feature_file::{
    decode_features, encode_features, read_feature_file, read_feature_file_raw, write_feature_file, FEATURE_MAGIC,
};
pub use inpaint::{inpaint_depth, INPAINT_MAX_SWEEPS};
pub use manifest::{
    load_sequence, save_manifest, CropRecord, FrameRecord, IntrinsicsRecord, Sequence, SequenceManifest, Sim3Record,
};

use crate::error::{Error, Result};
use crate::features::FeatureGrid;
use crate::geom::{CameraIntrinsics, RigidTransformSE3};

pub const FORMAT_VERSION: u32 = 1;

/// Region of the original image the feature grid was computed from, in pixels.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CropRect {
    pub x: f64,
    pub y: f64,
    pub w: f64,
    pub h: f64,
}

impl CropRect {
    pub fn new(x: f64, y: f64, w: f64, h: f64) -> Result<Self> {
        let crop = Self { x, y, w, h };
        if [x, y, w, h].iter().any(|v| !v.is_finite()) || w <= 0.0 || h <= 0.0 || x < 0.0 || y < 0.0 {
            return Err(Error::InvalidArgument(format!("bad crop {crop:?}")));
        }
        Ok(crop)
    }

    pub fn full(width: u32, height: u32) -> Self {
        Self { x: 0.0, y: 0.0, w: width as f64, h: height as f64 }
    }

    pub fn fits(&self, width: u32, height: u32) -> bool {
        self.x >= 0.0 && self.y >= 0.0 && self.x + self.w <= width as f64 && self.y + self.h <= height as f64
    }
}

/// Depth map with a per-pixel validity mask. Values at invalid pixels are
/// carried through file round-trips but otherwise meaningless.
#[derive(Debug, Clone, PartialEq)]
pub struct DepthImage {
    height: usize,
    width: usize,
    values: Vec<f32>,
    valid: Vec<bool>,
}

impl DepthImage {
    pub fn new(height: usize, width: usize, values: Vec<f32>, valid: Vec<bool>) -> Result<Self> {
        if values.len() != height * width || valid.len() != height * width {
            return Err(Error::InvalidArgument(format!(
                "depth buffers {} / {} do not match {height}x{width}",
                values.len(),
                valid.len()
            )));
        }
        if let Some(i) = (0..values.len()).find(|&i| valid[i] && !(values[i].is_finite() && values[i] > 0.0)) {
            return Err(Error::InvalidDepth(format!(
                "pixel ({}, {}) is marked valid with depth {}",
                i / width.max(1),
                i % width.max(1),
                values[i]
            )));
        }
        Ok(Self { height, width, values, valid })
    }

    /// Every pixel valid at the same depth.
    pub fn constant(height: usize, width: usize, z: f32) -> Result<Self> {
        Self::new(height, width, vec![z; height * width], vec![true; height * width])
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    pub fn valid(&self) -> &[bool] {
        &self.valid
    }

    pub fn valid_count(&self) -> usize {
        self.valid.iter().filter(|v| **v).count()
    }

    /// Depth at integer pixel `(row, col)` if valid.
    pub fn get(&self, row: usize, col: usize) -> Option<f64> {
        let i = row * self.width + col;
        self.valid[i].then(|| self.values[i] as f64)
    }

    /// Depth at the pixel containing continuous coordinate `(x, y)`, clamped
    /// to the image.
    pub fn sample(&self, x: f64, y: f64) -> Option<f64> {
        if !(x.is_finite() && y.is_finite()) || self.width == 0 || self.height == 0 {
            return None;
        }
        let col = (x.floor().max(0.0) as usize).min(self.width - 1);
        let row = (y.floor().max(0.0) as usize).min(self.height - 1);
        self.get(row, col)
    }
}

/// Everything the estimator needs about one view.
#[derive(Debug, Clone)]
pub struct FrameBundle {
    pub frame_id: String,
    pub features: FeatureGrid,
    pub depth: DepthImage,
    pub intrinsics: CameraIntrinsics,
    /// World to view.
    pub extrinsics: RigidTransformSE3,
    pub crop: CropRect,
}

impl FrameBundle {
    /// Checks that depth, intrinsics and crop describe the same image.
    pub fn validate(&self) -> Result<()> {
        let (w, h) = (self.intrinsics.width, self.intrinsics.height);
        if self.depth.width() != w as usize || self.depth.height() != h as usize {
            return Err(Error::InvalidFrame(format!(
                "{}: depth is {}x{} but intrinsics say {w}x{h}",
                self.frame_id,
                self.depth.width(),
                self.depth.height()
            )));
        }
        if !self.crop.fits(w, h) {
            return Err(Error::InvalidFrame(format!("{}: crop {:?} exceeds {w}x{h}", self.frame_id, self.crop)));
        }
        Ok(())
    }
}

pub(crate) fn u32_at(bytes: &[u8], offset: usize) -> u32 {
    u32::from_le_bytes(bytes[offset..offset + 4].try_into().unwrap())
}

pub(crate) fn f32_at(bytes: &[u8], offset: usize) -> f32 {
    f32::from_le_bytes(bytes[offset..offset + 4].try_into().unwrap())
}

pub(crate) fn need(bytes: &[u8], n: usize) -> Result<()> {
    if bytes.len() < n {
        return Err(Error::TruncatedFile { need: n, have: bytes.len() });
    }
    Ok(())
}

pub(crate) fn check_magic(bytes: &[u8], magic: &[u8; 4]) -> Result<()> {
    need(bytes, 4)?;
    if &bytes[..4] != magic {
        return Err(Error::BadMagic { expected: *magic, found: bytes[..4].to_vec() });
    }
    need(bytes, 8)?;
    let version = u32_at(bytes, 4);
    if version != FORMAT_VERSION {
        return Err(Error::VersionUnsupported(version));
    }
    Ok(())
}

pub(crate) fn read_file(path: &std::path::Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => Error::MissingFile(path.to_path_buf()),
        _ => Error::Io(e),
    })
}
