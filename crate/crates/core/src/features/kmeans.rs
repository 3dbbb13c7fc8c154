use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{Correspondence, CorrespondenceSet, FeatureGrid};

pub const KMEANS_MAX_ITERS: usize = 100;

/// Clusters the candidates' reference descriptors into `min(k, n)` groups and
/// keeps the most salient reference cell of each non-empty cluster.
///
/// Initialization is k-means++ from a ChaCha stream seeded with `seed`; Lloyd
/// iterations stop when assignments no longer change. Saliency ties fall back
/// to the smaller cyclical distance, then row-major order of the reference cell.
pub fn kmeans_diversify(
    candidates: &CorrespondenceSet,
    k: usize,
    reference: &FeatureGrid,
    seed: u64,
) -> CorrespondenceSet {
    let items = &candidates.items;
    if items.is_empty() || k == 0 {
        return CorrespondenceSet::new(Vec::new(), Some(k));
    }
    let dim = reference.dim();
    let points: Vec<Vec<f64>> = items
        .iter()
        .map(|c| {
            let cell = reference.index(c.ref_point);
            reference.descriptor(cell).iter().map(|v| *v as f64).collect()
        })
        .collect();

    let centers = kmeans_pp_init(&points, k.min(points.len()), seed);
    let assignment = lloyd(&points, centers, dim);

    let n_clusters = assignment.iter().copied().max().map_or(0, |m| m + 1);
    let mut best: Vec<Option<usize>> = vec![None; n_clusters];
    for (i, &cluster) in assignment.iter().enumerate() {
        let better = match best[cluster] {
            None => true,
            Some(j) => more_salient(&items[i], &items[j], reference),
        };
        if better {
            best[cluster] = Some(i);
        }
    }
    let chosen = best.into_iter().flatten().map(|i| items[i]).collect();
    CorrespondenceSet::new(chosen, Some(k))
}

fn more_salient(a: &Correspondence, b: &Correspondence, reference: &FeatureGrid) -> bool {
    let sa = reference.saliency()[reference.index(a.ref_point)];
    let sb = reference.saliency()[reference.index(b.ref_point)];
    sa.total_cmp(&sb)
        .then(b.cyc_dist.total_cmp(&a.cyc_dist))
        .then(b.ref_point.cmp(&a.ref_point))
        .is_gt()
}

fn sq(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// k-means++ seeding. Stops early when every point coincides with a chosen
/// center, so duplicated data yields fewer clusters than requested.
fn kmeans_pp_init(points: &[Vec<f64>], k: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let first = rng.random_range(0..points.len());
    let mut centers = vec![points[first].clone()];
    let mut d2: Vec<f64> = points.iter().map(|p| sq(p, &centers[0])).collect();
    while centers.len() < k {
        let total: f64 = d2.iter().sum();
        if total <= 0.0 {
            break;
        }
        let mut target = rng.random::<f64>() * total;
        let mut pick = None;
        for (i, w) in d2.iter().enumerate() {
            if *w <= 0.0 {
                continue;
            }
            pick = Some(i);
            if target < *w {
                break;
            }
            target -= w;
        }
        let Some(pick) = pick else { break };
        let c = points[pick].clone();
        for (slot, p) in d2.iter_mut().zip(points) {
            *slot = slot.min(sq(p, &c));
        }
        centers.push(c);
    }
    centers
}

/// Returns cluster labels compacted to `0..n_nonempty`, numbered in order of
/// first appearance.
fn lloyd(points: &[Vec<f64>], mut centers: Vec<Vec<f64>>, dim: usize) -> Vec<usize> {
    let nearest = |p: &[f64], centers: &[Vec<f64>]| {
        let mut best = (f64::INFINITY, 0);
        for (j, c) in centers.iter().enumerate() {
            let d = sq(p, c);
            if d < best.0 {
                best = (d, j);
            }
        }
        best.1
    };
    let mut labels: Vec<usize> = points.iter().map(|p| nearest(p, &centers)).collect();
    for _ in 0..KMEANS_MAX_ITERS {
        let mut sums = vec![vec![0.0; dim]; centers.len()];
        let mut counts = vec![0usize; centers.len()];
        for (p, &l) in points.iter().zip(&labels) {
            counts[l] += 1;
            sums[l].iter_mut().zip(p).for_each(|(s, v)| *s += v);
        }
        for (j, c) in centers.iter_mut().enumerate() {
            // Empty clusters keep their previous center.
            if counts[j] > 0 {
                *c = sums[j].iter().map(|s| s / counts[j] as f64).collect();
            }
        }
        let next: Vec<usize> = points.iter().map(|p| nearest(p, &centers)).collect();
        if next == labels {
            break;
        }
        labels = next;
    }

    let mut remap = vec![usize::MAX; centers.len()];
    let mut n = 0;
    labels
        .into_iter()
        .map(|l| {
            if remap[l] == usize::MAX {
                remap[l] = n;
                n += 1;
            }
            remap[l]
        })
        .collect()
}
