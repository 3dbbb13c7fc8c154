use std::collections::HashMap;

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{umeyama_points, PointCloud, PoseEstimate};
use crate::error::{Error, Result};
use crate::geom::{RigidTransformSim3, Vec3};

/// Below this many target points the nearest-neighbour search is a plain scan.
pub const ICP_EXHAUSTIVE_BELOW: usize = 2000;

/// Hash-grid rings searched before giving up and scanning everything.
const MAX_RINGS: i64 = 6;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IcpConfig {
    pub max_iter: usize,
    /// Stop once the association RMS changes by less than this.
    pub tol: f64,
    pub subsample: usize,
    pub seed: u64,
    /// Hash-grid cell size for the nearest-neighbour search.
    pub cell: f64,
}

impl Default for IcpConfig {
    fn default() -> Self {
        Self { max_iter: 50, tol: 1e-6, subsample: 5000, seed: 0, cell: 0.2 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IcpEstimate {
    pub estimate: PoseEstimate,
    /// Number of refits performed.
    pub iterations: usize,
    /// Association RMS before each refit, plus the final one.
    pub rms_history: Vec<f64>,
}

fn subsample(points: &[Vec3], max: usize, rng: &mut ChaCha8Rng) -> Vec<Vec3> {
    if points.len() <= max {
        return points.to_vec();
    }
    let mut idx = index::sample(rng, points.len(), max).into_vec();
    idx.sort_unstable();
    idx.into_iter().map(|i| points[i]).collect()
}

/// Exact nearest neighbour over a fixed point set, via a uniform hash grid.
struct NearestIndex<'a> {
    points: &'a [Vec3],
    cell: f64,
    buckets: Option<HashMap<[i64; 3], Vec<usize>>>,
}

impl<'a> NearestIndex<'a> {
    fn new(points: &'a [Vec3], cell: f64) -> Self {
        let buckets = (points.len() >= ICP_EXHAUSTIVE_BELOW).then(|| {
            let mut map: HashMap<[i64; 3], Vec<usize>> = HashMap::new();
            for (i, p) in points.iter().enumerate() {
                map.entry(Self::key(p, cell)).or_default().push(i);
            }
            map
        });
        Self { points, cell, buckets }
    }

    fn key(p: &Vec3, cell: f64) -> [i64; 3] {
        [(p.x / cell).floor() as i64, (p.y / cell).floor() as i64, (p.z / cell).floor() as i64]
    }

    fn consider(&self, q: &Vec3, i: usize, best: &mut (f64, usize)) {
        let d = (self.points[i] - q).norm_squared();
        if d < best.0 || (d == best.0 && i < best.1) {
            *best = (d, i);
        }
    }

    fn scan(&self, q: &Vec3) -> (f64, usize) {
        let mut best = (f64::INFINITY, usize::MAX);
        for i in 0..self.points.len() {
            self.consider(q, i, &mut best);
        }
        best
    }

    /// Index of the nearest point; ties go to the lower index.
    fn nearest(&self, q: &Vec3) -> usize {
        let Some(buckets) = &self.buckets else { return self.scan(q).1 };
        let c = Self::key(q, self.cell);
        let mut best = (f64::INFINITY, usize::MAX);
        for r in 0..=MAX_RINGS {
            for dx in -r..=r {
                for dy in -r..=r {
                    for dz in -r..=r {
                        if dx.abs().max(dy.abs()).max(dz.abs()) != r {
                            continue;
                        }
                        if let Some(bucket) = buckets.get(&[c[0] + dx, c[1] + dy, c[2] + dz]) {
                            for &i in bucket {
                                self.consider(q, i, &mut best);
                            }
                        }
                    }
                }
            }
            // Anything outside rings 0..=r is at least r cells away.
            let reach = r as f64 * self.cell;
            if best.0 < reach * reach {
                return best.1;
            }
        }
        self.scan(q).1
    }
}

/// Point-to-point ICP with a uniform scale: alternate exact closest-point
/// association and an Umeyama refit, starting from `init`.
///
/// Both clouds are first randomly subsampled to at most `cfg.subsample`
/// points. Iteration stops when the association RMS changes by less than
/// `cfg.tol` or after `cfg.max_iter` refits.
pub fn icp_sim3(
    src: &PointCloud,
    dst: &PointCloud,
    init: &RigidTransformSim3,
    cfg: &IcpConfig,
) -> Result<IcpEstimate> {
    if src.len() < 3 || dst.len() < 3 {
        return Err(Error::DegenerateConfiguration(format!(
            "ICP needs 3 points per cloud, got {} and {}",
            src.len(),
            dst.len()
        )));
    }
    if !(cfg.cell > 0.0) {
        return Err(Error::InvalidArgument(format!("ICP cell size {} must be positive", cfg.cell)));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let src_pts = subsample(&src.points, cfg.subsample.max(3), &mut rng);
    let dst_pts = subsample(&dst.points, cfg.subsample.max(3), &mut rng);
    let nn = NearestIndex::new(&dst_pts, cfg.cell);

    let associate = |t: &RigidTransformSim3| -> (Vec<usize>, f64) {
        let mut sum = 0.0;
        let assoc: Vec<usize> = src_pts
            .iter()
            .map(|p| {
                let q = t.apply(p);
                let j = nn.nearest(&q);
                sum += (dst_pts[j] - q).norm_squared();
                j
            })
            .collect();
        (assoc, (sum / src_pts.len() as f64).sqrt())
    };

    let mut transform = *init;
    let (mut assoc, mut rms) = associate(&transform);
    let mut history = vec![rms];
    let mut iterations = 0;
    while iterations < cfg.max_iter {
        let mut distinct = assoc.clone();
        distinct.sort_unstable();
        distinct.dedup();
        if distinct.len() < 3 {
            return Err(Error::DegenerateConfiguration(format!(
                "associations collapsed onto {} target points",
                distinct.len()
            )));
        }
        let targets: Vec<Vec3> = assoc.iter().map(|&j| dst_pts[j]).collect();
        transform = umeyama_points(&src_pts, &targets)?;
        iterations += 1;
        let (next_assoc, next_rms) = associate(&transform);
        history.push(next_rms);
        let change = (rms - next_rms).abs();
        (assoc, rms) = (next_assoc, next_rms);
        if change < cfg.tol {
            break;
        }
    }

    Ok(IcpEstimate {
        estimate: PoseEstimate {
            transform,
            inlier_count: src_pts.len(),
            inlier_indices: (0..src_pts.len()).collect(),
            rms_residual: rms,
        },
        iterations,
        rms_history: history,
    })
}
