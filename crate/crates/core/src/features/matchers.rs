//! Alternative matchers: hard mutual nearest neighbours, entropic optimal
//! transport and dual-softmax, all over foreground cells only.

use super::{
    check_pair, cycle_trace, kmeans_diversify, sq_dist, Correspondence, CorrespondenceSet, FeatureGrid,
};
use crate::error::{Error, Result};

/// Mutual nearest neighbours: `v = NN(u)` and `u = NN(v)`, both on foreground.
///
/// Uses the same all-cell nearest-neighbour rule as the cyclical map, so
/// every pair returned here has cyclical distance zero.
pub fn select_correspondences_mutual_nn(reference: &FeatureGrid, target: &FeatureGrid) -> Result<CorrespondenceSet> {
    let trace = cycle_trace(reference, target)?;
    let items = (0..reference.cells())
        .filter(|&u| trace.back[u] == u && trace.cyc[u].is_finite())
        .map(|u| Correspondence {
            ref_point: reference.point(u),
            tgt_point: target.point(trace.forward[u]),
            feat_dist: trace.feat[u],
            cyc_dist: 0.0,
        })
        .collect();
    Ok(CorrespondenceSet::new(items, None))
}

/// Cosine similarities between the foreground cells of two grids.
#[derive(Debug, Clone)]
pub struct Similarity {
    pub ref_cells: Vec<usize>,
    pub tgt_cells: Vec<usize>,
    /// Row-major `ref_cells.len() × tgt_cells.len()`.
    pub values: Vec<f64>,
}

impl Similarity {
    pub fn between(reference: &FeatureGrid, target: &FeatureGrid) -> Result<Self> {
        check_pair(reference, target)?;
        let ref_cells: Vec<usize> = reference.foreground_cells().collect();
        let tgt_cells: Vec<usize> = target.foreground_cells().collect();
        let mut values = Vec::with_capacity(ref_cells.len() * tgt_cells.len());
        for &u in &ref_cells {
            let a = reference.descriptor(u);
            for &v in &tgt_cells {
                let b = target.descriptor(v);
                values.push(a.iter().zip(b).map(|(x, y)| *x as f64 * *y as f64).sum());
            }
        }
        Ok(Self { ref_cells, tgt_cells, values })
    }

    pub fn rows(&self) -> usize {
        self.ref_cells.len()
    }

    pub fn cols(&self) -> usize {
        self.tgt_cells.len()
    }
}

fn log_sum_exp(values: impl Iterator<Item = f64> + Clone) -> f64 {
    let max = values.clone().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return max;
    }
    max + values.map(|v| (v - max).exp()).sum::<f64>().ln()
}

/// Entropic OT plan with uniform marginals, computed with log-domain
/// Sinkhorn updates (`iters` row-then-column passes).
///
/// `sim` is row-major `n × m`. Returns the plan in the same layout.
pub fn sinkhorn_plan(sim: &[f64], n: usize, m: usize, epsilon: f64, iters: usize) -> Result<Vec<f64>> {
    if !(epsilon > 0.0) {
        return Err(Error::InvalidArgument(format!("epsilon must be positive, got {epsilon}")));
    }
    if sim.len() != n * m || n == 0 || m == 0 {
        return Err(Error::InvalidArgument(format!("similarity matrix is not {n}x{m}")));
    }
    let log_kernel: Vec<f64> = sim.iter().map(|s| s / epsilon).collect();
    let (log_a, log_b) = (-(n as f64).ln(), -(m as f64).ln());
    let mut f = vec![0.0; n];
    let mut g = vec![0.0; m];
    for _ in 0..iters {
        for i in 0..n {
            let row = &log_kernel[i * m..(i + 1) * m];
            f[i] = log_a - log_sum_exp(row.iter().zip(&g).map(|(k, gj)| k + gj));
        }
        for j in 0..m {
            g[j] = log_b - log_sum_exp((0..n).map(|i| log_kernel[i * m + j] + f[i]));
        }
        if f.iter().chain(&g).any(|v| !v.is_finite()) {
            return Err(Error::NumericalUnderflow);
        }
    }
    let plan: Vec<f64> = (0..n * m).map(|idx| (f[idx / m] + log_kernel[idx] + g[idx % m]).exp()).collect();
    if plan.iter().any(|p| !p.is_finite()) {
        return Err(Error::NumericalUnderflow);
    }
    Ok(plan)
}

/// `softmax_over_columns(sim/T) ⊙ softmax_over_rows(sim/T)`, row-major `n × m`.
pub fn dual_softmax_scores(sim: &[f64], n: usize, m: usize, temperature: f64) -> Result<Vec<f64>> {
    if !(temperature > 0.0) {
        return Err(Error::InvalidArgument(format!("temperature must be positive, got {temperature}")));
    }
    if sim.len() != n * m {
        return Err(Error::InvalidArgument(format!("similarity matrix is not {n}x{m}")));
    }
    let logits: Vec<f64> = sim.iter().map(|s| s / temperature).collect();
    let row_lse: Vec<f64> = (0..n).map(|i| log_sum_exp(logits[i * m..(i + 1) * m].iter().copied())).collect();
    let col_lse: Vec<f64> = (0..m).map(|j| log_sum_exp((0..n).map(|i| logits[i * m + j]))).collect();
    Ok((0..n * m)
        .map(|idx| {
            let (i, j) = (idx / m, idx % m);
            (logits[idx] - row_lse[i]).exp() * (logits[idx] - col_lse[j]).exp()
        })
        .collect())
}

/// Top-`k` entries of a score matrix (descending, ties row-major) turned into
/// correspondences, then diversified.
fn top_k_then_diversify(
    scores: &[f64],
    sim: &Similarity,
    reference: &FeatureGrid,
    target: &FeatureGrid,
    k: usize,
    seed: u64,
) -> CorrespondenceSet {
    let m = sim.cols();
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    order.truncate(k);
    let items: Vec<Correspondence> = order
        .into_iter()
        .map(|idx| {
            let (u, v) = (sim.ref_cells[idx / m], sim.tgt_cells[idx % m]);
            Correspondence {
                ref_point: reference.point(u),
                tgt_point: target.point(v),
                feat_dist: sq_dist(reference.descriptor(u), target.descriptor(v)).sqrt(),
                cyc_dist: return_distance(reference, target, u, v),
            }
        })
        .collect();
    kmeans_diversify(&CorrespondenceSet::new(items, None), k, reference, seed)
}

/// Grid distance between `u` and the reference cell nearest to `v`'s descriptor.
fn return_distance(reference: &FeatureGrid, target: &FeatureGrid, u: usize, v: usize) -> f64 {
    let q = target.descriptor(v);
    let mut best = (f64::INFINITY, 0);
    for w in 0..reference.cells() {
        let d = sq_dist(q, reference.descriptor(w));
        if d < best.0 {
            best = (d, w);
        }
    }
    reference.point(u).distance(&reference.point(best.1))
}

pub fn sinkhorn_match(
    reference: &FeatureGrid,
    target: &FeatureGrid,
    epsilon: f64,
    iters: usize,
    k: usize,
    seed: u64,
) -> Result<CorrespondenceSet> {
    let sim = Similarity::between(reference, target)?;
    let plan = sinkhorn_plan(&sim.values, sim.rows(), sim.cols(), epsilon, iters)?;
    Ok(top_k_then_diversify(&plan, &sim, reference, target, k, seed))
}

pub fn dual_softmax_match(
    reference: &FeatureGrid,
    target: &FeatureGrid,
    temperature: f64,
    k: usize,
    seed: u64,
) -> Result<CorrespondenceSet> {
    let sim = Similarity::between(reference, target)?;
    let scores = dual_softmax_scores(&sim.values, sim.rows(), sim.cols(), temperature)?;
    Ok(top_k_then_diversify(&scores, &sim, reference, target, k, seed))
}
