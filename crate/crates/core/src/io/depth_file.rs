use std::path::Path;

use super::{check_magic, f32_at, need, read_file, u32_at, DepthImage, FORMAT_VERSION};
use crate::error::{Error, Result};

pub const DEPTH_MAGIC: [u8; 4] = *b"ZDF1";

const HEADER_LEN: usize = 16;

pub fn encode_depth(depth: &DepthImage) -> Vec<u8> {
    let n = depth.values().len();
    let mut out = Vec::with_capacity(HEADER_LEN + n * 5);
    out.extend_from_slice(&DEPTH_MAGIC);
    for v in [FORMAT_VERSION, depth.height() as u32, depth.width() as u32] {
        out.extend_from_slice(&v.to_le_bytes());
    }
    for v in depth.values() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out.extend(depth.valid().iter().map(|v| *v as u8));
    out
}

pub fn decode_depth(bytes: &[u8]) -> Result<DepthImage> {
    check_magic(bytes, &DEPTH_MAGIC)?;
    need(bytes, HEADER_LEN)?;
    let (h, w) = (u32_at(bytes, 8) as usize, u32_at(bytes, 12) as usize);
    let n = h.checked_mul(w).ok_or_else(|| Error::CorruptFile("image size overflows".into()))?;
    let values_end = n.checked_mul(4).and_then(|b| b.checked_add(HEADER_LEN));
    let (values_end, total) = values_end
        .and_then(|e| Some((e, e.checked_add(n)?)))
        .ok_or_else(|| Error::CorruptFile("image size overflows".into()))?;
    need(bytes, total)?;
    if bytes.len() > total {
        return Err(Error::CorruptFile(format!("{} trailing bytes", bytes.len() - total)));
    }
    let values = (0..n).map(|i| f32_at(bytes, HEADER_LEN + 4 * i)).collect();
    let valid = bytes[values_end..total]
        .iter()
        .map(|b| match b {
            0 => Ok(false),
            1 => Ok(true),
            other => Err(Error::CorruptFile(format!("validity byte {other}"))),
        })
        .collect::<Result<Vec<bool>>>()?;
    DepthImage::new(h, w, values, valid)
}

pub fn write_depth_file(path: &Path, depth: &DepthImage) -> Result<()> {
    std::fs::write(path, encode_depth(depth))?;
    Ok(())
}

pub fn read_depth_file(path: &Path) -> Result<DepthImage> {
    decode_depth(&read_file(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn all_invalid_loads() {
        let d = DepthImage::new(2, 2, vec![0.0; 4], vec![false; 4]).unwrap();
        let back = decode_depth(&encode_depth(&d)).unwrap();
        assert_eq!(back.valid_count(), 0);
    }

    #[test]
    fn negative_valid_depth_rejected() {
        let d = DepthImage::new(1, 2, vec![1.0, 2.0], vec![true, true]).unwrap();
        let mut bytes = encode_depth(&d);
        bytes[20..24].copy_from_slice(&(-2.0f32).to_le_bytes());
        assert!(matches!(decode_depth(&bytes), Err(Error::InvalidDepth(_))));
        bytes[20..24].copy_from_slice(&f32::NAN.to_le_bytes());
        assert!(matches!(decode_depth(&bytes), Err(Error::InvalidDepth(_))));
    }

    #[test]
    fn invalid_pixels_may_hold_anything() {
        let d = DepthImage::new(1, 2, vec![f32::NAN, -1.0], vec![false, false]).unwrap();
        let bytes = encode_depth(&d);
        assert_eq!(encode_depth(&decode_depth(&bytes).unwrap()), bytes);
    }
}
