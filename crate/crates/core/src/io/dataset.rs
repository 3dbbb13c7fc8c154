use std::collections::HashMap;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};

use super::{load_sequence, FrameBundle, Sequence};
use crate::error::{Error, Result};
use crate::geom::RigidTransformSim3;

/// Anything that can serve frames and canonical alignment labels by id.
pub trait DataSource: Sync {
    fn frame(&self, category: &str, sequence: &str, frame_id: &str) -> Result<FrameBundle>;

    /// `Ok(None)` when the sequence exists but carries no label.
    fn canonical_alignment(&self, category: &str, sequence: &str) -> Result<Option<RigidTransformSim3>>;
}

/// Directory tree `<root>/<category>/<sequence>/manifest.json`.
#[derive(Debug)]
pub struct Dataset {
    root: PathBuf,
    cache: Mutex<HashMap<(String, String), Arc<Sequence>>>,
}

impl Dataset {
    pub fn open(root: &Path) -> Result<Self> {
        if !root.is_dir() {
            return Err(Error::MissingFile(root.to_path_buf()));
        }
        Ok(Self { root: root.to_path_buf(), cache: Mutex::new(HashMap::new()) })
    }

    pub fn manifest_path(&self, category: &str, sequence: &str) -> PathBuf {
        self.root.join(category).join(sequence).join("manifest.json")
    }

    pub fn sequence(&self, category: &str, sequence: &str) -> Result<Arc<Sequence>> {
        let key = (category.to_string(), sequence.to_string());
        if let Some(seq) = self.cache.lock().unwrap().get(&key) {
            return Ok(seq.clone());
        }
        let seq = Arc::new(load_sequence(&self.manifest_path(category, sequence))?);
        self.cache.lock().unwrap().insert(key, seq.clone());
        Ok(seq)
    }
}

impl DataSource for Dataset {
    fn frame(&self, category: &str, sequence: &str, frame_id: &str) -> Result<FrameBundle> {
        self.sequence(category, sequence)?.frame(frame_id)
    }

    fn canonical_alignment(&self, category: &str, sequence: &str) -> Result<Option<RigidTransformSim3>> {
        Ok(self.sequence(category, sequence)?.canonical_alignment)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FrameRef {
    pub sequence: String,
    pub frame: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TargetRef {
    pub sequence: String,
    pub frames: Vec<String>,
}

/// One evaluation problem: a reference frame against a list of target views.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PairSpec {
    pub pair_id: String,
    pub category: String,
    pub reference: FrameRef,
    pub target: TargetRef,
}

impl PairSpec {
    pub fn validate(&self) -> Result<()> {
        if self.target.frames.is_empty() {
            return Err(Error::InvalidArgument(format!("pair {} has no target frames", self.pair_id)));
        }
        if self.reference.sequence == self.target.sequence && self.target.frames.contains(&self.reference.frame) {
            return Err(Error::InvalidArgument(format!("pair {}: reference frame is also a target", self.pair_id)));
        }
        Ok(())
    }
}

/// Newline-delimited JSON, one [`PairSpec`] per line; blank lines are ignored.
pub fn read_pairs(path: &Path) -> Result<Vec<PairSpec>> {
    let file = std::fs::File::open(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => Error::MissingFile(path.to_path_buf()),
        _ => Error::Io(e),
    })?;
    let mut pairs = Vec::new();
    for (n, line) in BufReader::new(file).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let schema = |message: String| Error::SchemaError { path: path.to_path_buf(), message };
        let pair: PairSpec = serde_json::from_str(&line).map_err(|e| schema(format!("line {}: {e}", n + 1)))?;
        pair.validate().map_err(|e| schema(format!("line {}: {e}", n + 1)))?;
        pairs.push(pair);
    }
    Ok(pairs)
}

pub fn write_pairs(path: &Path, pairs: &[PairSpec]) -> Result<()> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    for p in pairs {
        serde_json::to_writer(&mut out, p)?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}
