use std::collections::VecDeque;

use super::DepthImage;
use crate::error::{Error, Result};

pub const INPAINT_MAX_SWEEPS: usize = 500;
const REL_TOL: f64 = 1e-4;

/// Fills invalid pixels with a discrete harmonic (Laplace) interpolation of
/// the valid ones: Jacobi sweeps over the 4-neighbourhood with valid pixels
/// held fixed. Holes start from their breadth-first nearest valid value.
///
/// Stops once the largest per-pixel update drops below `1e-4 · max valid
/// depth` or after [`INPAINT_MAX_SWEEPS`] sweeps. Every pixel of the result
/// is valid.
pub fn inpaint_depth(depth: &DepthImage) -> Result<DepthImage> {
    let (h, w) = (depth.height(), depth.width());
    let valid = depth.valid();
    if !valid.iter().any(|v| *v) {
        return Err(Error::NoValidDepth);
    }
    if valid.iter().all(|v| *v) {
        return Ok(depth.clone());
    }

    let mut z: Vec<f64> = depth.values().iter().map(|v| *v as f64).collect();
    let mut seen = valid.to_vec();
    let mut queue: VecDeque<usize> = (0..h * w).filter(|&i| valid[i]).collect();
    while let Some(i) = queue.pop_front() {
        for j in neighbours(i, h, w) {
            if !seen[j] {
                seen[j] = true;
                z[j] = z[i];
                queue.push_back(j);
            }
        }
    }

    let max_valid = (0..h * w).filter(|&i| valid[i]).map(|i| z[i]).fold(0.0, f64::max);
    let tol = REL_TOL * max_valid;
    let holes: Vec<usize> = (0..h * w).filter(|&i| !valid[i]).collect();
    let mut next = z.clone();
    for _ in 0..INPAINT_MAX_SWEEPS {
        let mut change: f64 = 0.0;
        for &i in &holes {
            let (mut sum, mut n) = (0.0, 0.0);
            for j in neighbours(i, h, w) {
                sum += z[j];
                n += 1.0;
            }
            next[i] = sum / n;
            change = change.max((next[i] - z[i]).abs());
        }
        std::mem::swap(&mut z, &mut next);
        if change < tol {
            break;
        }
    }

    let values = (0..h * w).map(|i| if valid[i] { depth.values()[i] } else { z[i] as f32 }).collect();
    DepthImage::new(h, w, values, vec![true; h * w])
}

fn neighbours(i: usize, h: usize, w: usize) -> impl Iterator<Item = usize> {
    let (r, c) = (i / w, i % w);
    let up = (r > 0).then(|| i - w);
    let down = (r + 1 < h).then(|| i + w);
    let left = (c > 0).then(|| i - 1);
    let right = (c + 1 < w).then(|| i + 1);
    [up, down, left, right].into_iter().flatten()
}
