use std::fmt;
use std::path::Path;

use super::{decode_depth, decode_features, load_sequence, read_file};
use crate::error::{Error, Result};

/// What `check_file` found in a file that passed validation.
#[derive(Debug, Clone, PartialEq)]
pub enum CheckedFile {
    Features { height: usize, width: usize, dim: usize, foreground: usize },
    Depth { height: usize, width: usize, valid: usize },
    Manifest { category: String, sequence_id: String, frames: usize },
}

impl fmt::Display for CheckedFile {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Features { height, width, dim, foreground } => {
                write!(f, "features {height}x{width}x{dim}, {foreground} foreground cells")
            }
            Self::Depth { height, width, valid } => write!(f, "depth {height}x{width}, {valid} valid pixels"),
            Self::Manifest { category, sequence_id, frames } => {
                write!(f, "manifest {category}/{sequence_id}, {frames} frames")
            }
        }
    }
}

/// Validates a `.zpf`, `.zdf` or manifest `.json` file. Manifests are checked
/// in full: every referenced frame is decoded and cross-checked against its
/// intrinsics and crop.
pub fn check_file(path: &Path) -> Result<CheckedFile> {
    match path.extension().and_then(|e| e.to_str()) {
        Some("zpf") => {
            let g = decode_features(&read_file(path)?)?;
            Ok(CheckedFile::Features {
                height: g.height(),
                width: g.width(),
                dim: g.dim(),
                foreground: g.foreground_count(),
            })
        }
        Some("zdf") => {
            let d = decode_depth(&read_file(path)?)?;
            Ok(CheckedFile::Depth { height: d.height(), width: d.width(), valid: d.valid_count() })
        }
        Some("json") => {
            let seq = load_sequence(path)?;
            for id in seq.frame_ids() {
                seq.frame(id)?;
            }
            Ok(CheckedFile::Manifest {
                category: seq.category.clone(),
                sequence_id: seq.sequence_id.clone(),
                frames: seq.frames.len(),
            })
        }
        _ => Err(Error::InvalidArgument(format!("{}: expected a .zpf, .zdf or .json file", path.display()))),
    }
}
