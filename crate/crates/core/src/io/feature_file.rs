use std::path::Path;

use super::{check_magic, f32_at, need, read_file, u32_at, FORMAT_VERSION};
use crate::error::{Error, Result};
use crate::features::{normalize_grid, FeatureGrid};

pub const FEATURE_MAGIC: [u8; 4] = *b"ZPF1";

const HEADER_LEN: usize = 24;
const FLAG_MASK: u8 = 1;
const FLAG_SALIENCY: u8 = 2;

/// Serializes `grid` as-is (no normalization), always with mask and saliency.
pub fn encode_features(grid: &FeatureGrid) -> Vec<u8> {
    let cells = grid.cells();
    let mut out = Vec::with_capacity(HEADER_LEN + grid.data().len() * 4 + cells * 5);
    out.extend_from_slice(&FEATURE_MAGIC);
    for v in [FORMAT_VERSION, grid.height() as u32, grid.width() as u32, grid.dim() as u32] {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out.extend_from_slice(&[FLAG_MASK | FLAG_SALIENCY, 0, 0, 0]);
    for v in grid.data() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out.extend(grid.foreground().iter().map(|f| *f as u8));
    for s in grid.saliency() {
        out.extend_from_slice(&s.to_le_bytes());
    }
    out
}

/// Parses a `.zpf` payload without normalizing. A missing mask means every
/// cell is foreground; missing saliency means 1.0 everywhere.
pub fn decode_features(bytes: &[u8]) -> Result<FeatureGrid> {
    check_magic(bytes, &FEATURE_MAGIC)?;
    need(bytes, HEADER_LEN)?;
    let (h, w, d) = (u32_at(bytes, 8) as usize, u32_at(bytes, 12) as usize, u32_at(bytes, 16) as usize);
    let flags = bytes[20];
    if flags & !(FLAG_MASK | FLAG_SALIENCY) != 0 {
        return Err(Error::CorruptFile(format!("unknown flag bits {flags:#04x}")));
    }
    if h == 0 || w == 0 || d == 0 {
        return Err(Error::CorruptFile(format!("empty grid {h}x{w}x{d}")));
    }
    let cells = h.checked_mul(w).ok_or_else(|| Error::CorruptFile("grid size overflows".into()))?;
    let floats = cells.checked_mul(d).ok_or_else(|| Error::CorruptFile("grid size overflows".into()))?;
    let has_mask = flags & FLAG_MASK != 0;
    let has_sal = flags & FLAG_SALIENCY != 0;
    let sizes = || -> Option<(usize, usize, usize)> {
        let data_end = floats.checked_mul(4)?.checked_add(HEADER_LEN)?;
        let mask_end = data_end.checked_add(if has_mask { cells } else { 0 })?;
        let total = mask_end.checked_add(if has_sal { cells.checked_mul(4)? } else { 0 })?;
        Some((data_end, mask_end, total))
    };
    let (data_end, mask_end, total) = sizes().ok_or_else(|| Error::CorruptFile("grid size overflows".into()))?;
    need(bytes, total)?;
    if bytes.len() > total {
        return Err(Error::CorruptFile(format!("{} trailing bytes", bytes.len() - total)));
    }

    let data: Vec<f32> = (0..floats).map(|i| f32_at(bytes, HEADER_LEN + 4 * i)).collect();
    if data.iter().any(|v| !v.is_finite()) {
        return Err(Error::CorruptFile("non-finite descriptor value".into()));
    }
    let foreground = if has_mask {
        bytes[data_end..mask_end]
            .iter()
            .map(|b| match b {
                0 => Ok(false),
                1 => Ok(true),
                other => Err(Error::CorruptFile(format!("mask byte {other}"))),
            })
            .collect::<Result<Vec<bool>>>()?
    } else {
        vec![true; cells]
    };
    let saliency =
        if has_sal { (0..cells).map(|i| f32_at(bytes, mask_end + 4 * i)).collect() } else { vec![1.0; cells] };
    FeatureGrid::new(h, w, d, data, foreground, saliency).map_err(|e| Error::CorruptFile(e.to_string()))
}

pub fn write_feature_file(path: &Path, grid: &FeatureGrid) -> Result<()> {
    std::fs::write(path, encode_features(grid))?;
    Ok(())
}

/// Loads without normalizing, for bit-exact round-trips.
pub fn read_feature_file_raw(path: &Path) -> Result<FeatureGrid> {
    decode_features(&read_file(path)?)
}

/// Loads and normalizes descriptors to unit length.
pub fn read_feature_file(path: &Path) -> Result<FeatureGrid> {
    Ok(normalize_grid(read_feature_file_raw(path)?))
}
