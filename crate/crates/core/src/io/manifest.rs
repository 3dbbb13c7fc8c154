use std::collections::HashSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{read_depth_file, read_feature_file, CropRect, FrameBundle};
use crate::error::{Error, Result};
use crate::geom::{CameraIntrinsics, Mat3, Rotation3, RigidTransformSE3, RigidTransformSim3, Vec3};

/// On-disk description of one sequence. Paths are relative to the manifest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SequenceManifest {
    pub category: String,
    pub sequence_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scene_scale: Option<f64>,
    /// Maps the category reference instance into this sequence's world frame.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub canonical_alignment: Option<Sim3Record>,
    pub frames: Vec<FrameRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sim3Record {
    /// Row-major 3×3.
    pub rotation: [f64; 9],
    pub translation: [f64; 3],
    pub scale: f64,
}

impl Sim3Record {
    pub fn from_sim3(t: &RigidTransformSim3) -> Self {
        Self { rotation: t.rotation.to_row_array(), translation: t.translation.into(), scale: t.scale }
    }

    pub fn to_sim3(&self) -> Result<RigidTransformSim3> {
        let rotation = Rotation3::from_matrix_repaired(Mat3::from_row_slice(&self.rotation))?;
        RigidTransformSim3::new(rotation, Vec3::from(self.translation), self.scale)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameRecord {
    pub frame_id: String,
    pub features: String,
    pub depth: String,
    pub intrinsics: IntrinsicsRecord,
    /// World-to-view, row-major 4×4 homogeneous.
    pub extrinsics: [f64; 16],
    pub crop: CropRecord,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IntrinsicsRecord {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: u32,
    pub height: u32,
}

impl From<&CameraIntrinsics> for IntrinsicsRecord {
    fn from(k: &CameraIntrinsics) -> Self {
        Self { fx: k.fx, fy: k.fy, cx: k.cx, cy: k.cy, width: k.width, height: k.height }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CropRecord {
    pub x: f64,
    pub y: f64,
    pub w: f64,
    pub h: f64,
}

impl From<&CropRect> for CropRecord {
    fn from(c: &CropRect) -> Self {
        Self { x: c.x, y: c.y, w: c.w, h: c.h }
    }
}

/// Validated per-frame metadata with resolved paths.
#[derive(Debug, Clone)]
pub struct FrameMeta {
    pub frame_id: String,
    pub features: PathBuf,
    pub depth: PathBuf,
    pub intrinsics: CameraIntrinsics,
    pub extrinsics: RigidTransformSE3,
    pub crop: CropRect,
}

/// A loaded manifest. Frame payloads are read on demand.
#[derive(Debug, Clone)]
pub struct Sequence {
    pub path: PathBuf,
    pub category: String,
    pub sequence_id: String,
    pub scene_scale: Option<f64>,
    pub canonical_alignment: Option<RigidTransformSim3>,
    pub frames: Vec<FrameMeta>,
}

impl Sequence {
    pub fn frame_ids(&self) -> impl Iterator<Item = &str> {
        self.frames.iter().map(|f| f.frame_id.as_str())
    }

    pub fn meta(&self, frame_id: &str) -> Result<&FrameMeta> {
        self.frames.iter().find(|f| f.frame_id == frame_id).ok_or_else(|| {
            Error::InvalidFrame(format!("sequence {} has no frame {frame_id}", self.sequence_id))
        })
    }

    pub fn frame(&self, frame_id: &str) -> Result<FrameBundle> {
        let meta = self.meta(frame_id)?;
        let bundle = FrameBundle {
            frame_id: meta.frame_id.clone(),
            features: read_feature_file(&meta.features)?,
            depth: read_depth_file(&meta.depth)?,
            intrinsics: meta.intrinsics,
            extrinsics: meta.extrinsics,
            crop: meta.crop,
        };
        bundle.validate()?;
        Ok(bundle)
    }
}

/// Parses and validates a manifest. Referenced files must exist; extrinsic
/// rotations get the usual small-drift repair and are rejected otherwise.
pub fn load_sequence(path: &Path) -> Result<Sequence> {
    let text = std::fs::read_to_string(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => Error::MissingFile(path.to_path_buf()),
        _ => Error::Io(e),
    })?;
    let schema = |message: String| Error::SchemaError { path: path.to_path_buf(), message };
    let manifest: SequenceManifest = serde_json::from_str(&text).map_err(|e| schema(e.to_string()))?;
    let dir = path.parent().unwrap_or(Path::new("."));

    let canonical_alignment = manifest
        .canonical_alignment
        .as_ref()
        .map(|rec| rec.to_sim3().map_err(|e| schema(format!("canonical_alignment: {e}"))))
        .transpose()?;

    let mut ids = HashSet::new();
    let mut frames = Vec::with_capacity(manifest.frames.len());
    for rec in &manifest.frames {
        let id = &rec.frame_id;
        if !ids.insert(id.clone()) {
            return Err(schema(format!("duplicate frame id {id}")));
        }
        let k = rec.intrinsics;
        let intrinsics = CameraIntrinsics::new(k.fx, k.fy, k.cx, k.cy, k.width, k.height)
            .map_err(|e| schema(format!("frame {id}: intrinsics: {e}")))?;
        let extrinsics = RigidTransformSE3::from_homogeneous_rows(&rec.extrinsics)
            .map_err(|e| schema(format!("frame {id}: extrinsics: {e}")))?;
        let c = rec.crop;
        let crop = CropRect::new(c.x, c.y, c.w, c.h)
            .ok()
            .filter(|crop| crop.fits(k.width, k.height))
            .ok_or_else(|| schema(format!("frame {id}: crop {c:?} outside {}x{}", k.width, k.height)))?;
        let features = dir.join(&rec.features);
        let depth = dir.join(&rec.depth);
        for p in [&features, &depth] {
            if !p.is_file() {
                return Err(Error::MissingFile(p.clone()));
            }
        }
        frames.push(FrameMeta { frame_id: id.clone(), features, depth, intrinsics, extrinsics, crop });
    }

    Ok(Sequence {
        path: path.to_path_buf(),
        category: manifest.category,
        sequence_id: manifest.sequence_id,
        scene_scale: manifest.scene_scale,
        canonical_alignment,
        frames,
    })
}

pub fn save_manifest(path: &Path, manifest: &SequenceManifest) -> Result<()> {
    let mut text = serde_json::to_string_pretty(manifest)?;
    text.push('\n');
    std::fs::write(path, text)?;
    Ok(())
}
