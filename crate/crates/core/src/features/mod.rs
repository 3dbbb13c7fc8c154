//! Feature grids and correspondence selection.
//!
//! A [`FeatureGrid`] is an `H′×W′×D` descriptor field with a foreground mask
//! and a per-cell saliency. Matching is exhaustive: grids are small (≤ 32×32)
//! so the full distance matrix between two grids is cheap and exact.
//!
//! Cyclical distances are stored as non-negative distances where smaller is
//! better, with `+∞` marking cells whose reference→target→reference cycle
//! leaves the foreground at any step.

mod kmeans;
mod matchers;

pub use kmeans::{kmeans_diversify, KMEANS_MAX_ITERS};
pub use matchers::{
    dual_softmax_match, dual_softmax_scores, select_correspondences_mutual_nn, sinkhorn_match,
    sinkhorn_plan, Similarity,
};

use crate::error::{Error, Result};

/// Cells whose raw descriptor norm falls below this are treated as empty.
pub const MIN_DESCRIPTOR_NORM: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureGrid {
    height: usize,
    width: usize,
    dim: usize,
    data: Vec<f32>,
    foreground: Vec<bool>,
    saliency: Vec<f32>,
}

impl FeatureGrid {
    /// Builds a grid from row-major `(row, col, channel)` data.
    pub fn new(
        height: usize,
        width: usize,
        dim: usize,
        data: Vec<f32>,
        foreground: Vec<bool>,
        saliency: Vec<f32>,
    ) -> Result<Self> {
        let cells = height * width;
        if height == 0 || width == 0 || dim == 0 {
            return Err(Error::InvalidArgument(format!("empty grid {height}x{width}x{dim}")));
        }
        if data.len() != cells * dim || foreground.len() != cells || saliency.len() != cells {
            return Err(Error::InvalidArgument(format!(
                "buffer sizes do not match {height}x{width}x{dim}: data {}, mask {}, saliency {}",
                data.len(),
                foreground.len(),
                saliency.len()
            )));
        }
        if saliency.iter().any(|s| !s.is_finite() || *s < 0.0) {
            return Err(Error::InvalidArgument("saliency must be finite and non-negative".into()));
        }
        Ok(Self { height, width, dim, data, foreground, saliency })
    }

    /// All cells foreground, uniform saliency.
    pub fn from_data(height: usize, width: usize, dim: usize, data: Vec<f32>) -> Result<Self> {
        let cells = height * width;
        Self::new(height, width, dim, data, vec![true; cells], vec![1.0; cells])
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn cells(&self) -> usize {
        self.height * self.width
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn foreground(&self) -> &[bool] {
        &self.foreground
    }

    pub fn saliency(&self) -> &[f32] {
        &self.saliency
    }

    pub fn descriptor(&self, cell: usize) -> &[f32] {
        &self.data[cell * self.dim..(cell + 1) * self.dim]
    }

    pub fn descriptor_mut(&mut self, cell: usize) -> &mut [f32] {
        &mut self.data[cell * self.dim..(cell + 1) * self.dim]
    }

    pub fn set_foreground(&mut self, cell: usize, on: bool) {
        self.foreground[cell] = on;
    }

    pub fn is_foreground(&self, p: GridPoint) -> bool {
        self.foreground[self.index(p)]
    }

    pub fn foreground_count(&self) -> usize {
        self.foreground.iter().filter(|f| **f).count()
    }

    pub fn foreground_cells(&self) -> impl Iterator<Item = usize> + '_ {
        self.foreground.iter().enumerate().filter(|(_, f)| **f).map(|(i, _)| i)
    }

    pub fn index(&self, p: GridPoint) -> usize {
        p.row * self.width + p.col
    }

    pub fn point(&self, cell: usize) -> GridPoint {
        GridPoint { row: cell / self.width, col: cell % self.width }
    }
}

/// Rescales every cell to unit L2 norm; cells with (near-)zero norm are
/// zeroed and removed from the foreground.
pub fn normalize_grid(mut raw: FeatureGrid) -> FeatureGrid {
    for cell in 0..raw.cells() {
        let desc = raw.descriptor_mut(cell);
        let norm = desc.iter().map(|v| (*v as f64).powi(2)).sum::<f64>().sqrt();
        if norm < MIN_DESCRIPTOR_NORM || !norm.is_finite() {
            desc.iter_mut().for_each(|v| *v = 0.0);
            raw.foreground[cell] = false;
        } else {
            desc.iter_mut().for_each(|v| *v = (*v as f64 / norm) as f32);
        }
    }
    raw
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct GridPoint {
    pub row: usize,
    pub col: usize,
}

impl GridPoint {
    pub fn new(row: usize, col: usize) -> Self {
        Self { row, col }
    }

    /// Euclidean distance in grid cells.
    pub fn distance(&self, other: &GridPoint) -> f64 {
        let dr = self.row as f64 - other.row as f64;
        let dc = self.col as f64 - other.col as f64;
        (dr * dr + dc * dc).sqrt()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Correspondence {
    pub ref_point: GridPoint,
    pub tgt_point: GridPoint,
    /// L2 distance between the two descriptors.
    pub feat_dist: f64,
    /// Cyclical distance of `ref_point`, in grid cells.
    pub cyc_dist: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct CorrespondenceSet {
    pub items: Vec<Correspondence>,
    /// Count the selector was asked for; `None` for matchers with a data-dependent count.
    pub requested: Option<usize>,
    /// Fewer than `requested` correspondences could be found.
    pub short: bool,
}

impl CorrespondenceSet {
    pub fn new(items: Vec<Correspondence>, requested: Option<usize>) -> Self {
        let short = requested.is_some_and(|k| items.len() < k);
        Self { items, requested, short }
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Correspondence> {
        self.items.iter()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CyclicalDistanceMap {
    pub height: usize,
    pub width: usize,
    pub values: Vec<f64>,
}

impl CyclicalDistanceMap {
    pub fn get(&self, p: GridPoint) -> f64 {
        self.values[p.row * self.width + p.col]
    }
}

/// Squared L2 distance accumulated in f64.
pub(crate) fn sq_dist(a: &[f32], b: &[f32]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| {
            let d = *x as f64 - *y as f64;
            d * d
        })
        .sum()
}

/// Foreground cell of `grid` closest to `query` in L2; ties go to the
/// first cell in row-major order.
pub fn nearest_neighbor(query: &[f32], grid: &FeatureGrid) -> Result<GridPoint> {
    if query.len() != grid.dim {
        return Err(Error::DimMismatch(query.len(), grid.dim));
    }
    let mut best: Option<(f64, usize)> = None;
    for cell in grid.foreground_cells() {
        let d = sq_dist(query, grid.descriptor(cell));
        if best.is_none_or(|(bd, _)| d < bd) {
            best = Some((d, cell));
        }
    }
    best.map(|(_, cell)| grid.point(cell)).ok_or(Error::EmptyForeground)
}

/// Full reference→target→reference cycle for every reference cell.
///
/// Nearest neighbours are taken over *all* cells of the other grid, so a
/// cycle can land on background; such cells get `cyc = +∞`.
#[derive(Debug, Clone)]
pub struct CycleTrace {
    pub height: usize,
    pub width: usize,
    /// Target cell index reached from each reference cell.
    pub forward: Vec<usize>,
    /// Reference cell index reached back from `forward[u]`.
    pub back: Vec<usize>,
    /// L2 descriptor distance of the `u → forward[u]` match.
    pub feat: Vec<f64>,
    /// Cyclical distance in grid cells, `+∞` when gated.
    pub cyc: Vec<f64>,
}

impl CycleTrace {
    pub fn to_map(&self) -> CyclicalDistanceMap {
        CyclicalDistanceMap { height: self.height, width: self.width, values: self.cyc.clone() }
    }
}

fn check_pair(reference: &FeatureGrid, target: &FeatureGrid) -> Result<()> {
    if reference.dim != target.dim {
        return Err(Error::DimMismatch(reference.dim, target.dim));
    }
    if reference.foreground_count() == 0 || target.foreground_count() == 0 {
        return Err(Error::EmptyForeground);
    }
    Ok(())
}

/// Dense `n_ref × n_tgt` matrix of squared descriptor distances.
pub(crate) fn distance_matrix(reference: &FeatureGrid, target: &FeatureGrid) -> Vec<f64> {
    let (n, m) = (reference.cells(), target.cells());
    let mut out = vec![0.0; n * m];
    for u in 0..n {
        let a = reference.descriptor(u);
        let row = &mut out[u * m..(u + 1) * m];
        for (w, slot) in row.iter_mut().enumerate() {
            *slot = sq_dist(a, target.descriptor(w));
        }
    }
    out
}

pub fn cycle_trace(reference: &FeatureGrid, target: &FeatureGrid) -> Result<CycleTrace> {
    check_pair(reference, target)?;
    let (n, m) = (reference.cells(), target.cells());
    let dist = distance_matrix(reference, target);

    let forward: Vec<usize> = (0..n)
        .map(|u| argmin((0..m).map(|w| dist[u * m + w])))
        .collect();
    // Back-matches are only needed for target cells actually reached.
    let mut back_of = vec![usize::MAX; m];
    for &v in &forward {
        if back_of[v] == usize::MAX {
            back_of[v] = argmin((0..n).map(|w| dist[w * m + v]));
        }
    }
    let back: Vec<usize> = forward.iter().map(|&v| back_of[v]).collect();

    let mut feat = Vec::with_capacity(n);
    let mut cyc = Vec::with_capacity(n);
    for u in 0..n {
        let (v, u2) = (forward[u], back[u]);
        feat.push(dist[u * m + v].sqrt());
        let on_object = reference.foreground[u] && target.foreground[v] && reference.foreground[u2];
        cyc.push(if on_object {
            reference.point(u).distance(&reference.point(u2))
        } else {
            f64::INFINITY
        });
    }
    Ok(CycleTrace { height: reference.height, width: reference.width, forward, back, feat, cyc })
}

fn argmin(values: impl Iterator<Item = f64>) -> usize {
    let mut best = (f64::INFINITY, 0);
    for (i, v) in values.enumerate() {
        if v < best.0 {
            best = (v, i);
        }
    }
    best.1
}

pub fn cyclical_distance_map(reference: &FeatureGrid, target: &FeatureGrid) -> Result<CyclicalDistanceMap> {
    Ok(cycle_trace(reference, target)?.to_map())
}

/// Top-`2k` cells by cyclical distance, diversified down to `k` with k-means
/// over the reference descriptors.
pub fn select_correspondences_cyclical(
    reference: &FeatureGrid,
    target: &FeatureGrid,
    k: usize,
    seed: u64,
) -> Result<CorrespondenceSet> {
    let trace = cycle_trace(reference, target)?;
    Ok(select_from_trace(&trace, reference, target, k, seed))
}

pub(crate) fn select_from_trace(
    trace: &CycleTrace,
    reference: &FeatureGrid,
    target: &FeatureGrid,
    k: usize,
    seed: u64,
) -> CorrespondenceSet {
    let k = k.max(1);
    let mut finite: Vec<usize> = (0..trace.cyc.len()).filter(|&u| trace.cyc[u].is_finite()).collect();
    finite.sort_by(|&a, &b| {
        trace.cyc[a]
            .total_cmp(&trace.cyc[b])
            .then(trace.feat[a].total_cmp(&trace.feat[b]))
            .then(a.cmp(&b))
    });
    finite.truncate(2 * k);
    let candidates: Vec<Correspondence> = finite
        .iter()
        .map(|&u| Correspondence {
            ref_point: reference.point(u),
            tgt_point: target.point(trace.forward[u]),
            feat_dist: trace.feat[u],
            cyc_dist: trace.cyc[u],
        })
        .collect();
    if candidates.len() <= k {
        return CorrespondenceSet::new(candidates, Some(k));
    }
    kmeans_diversify(&CorrespondenceSet::new(candidates, None), k, reference, seed)
}


#[cfg(test)]
mod tests {
    use super::test_grids::*;
    use super::*;

    #[test]
    fn normalize_is_scale_invariant() {
        let g = random_grid(6, 6, 8, 1);
        let mut scaled = g.clone();
        let cell = g.index(GridPoint::new(3, 3));
        scaled.descriptor_mut(cell).iter_mut().for_each(|v| *v *= 7.0);
        let n = normalize_grid(scaled);
        for (a, b) in n.descriptor(cell).iter().zip(g.descriptor(cell)) {
            assert!((a - b).abs() < 1e-6);
        }
    }

    #[test]
    fn zero_cell_leaves_foreground() {
        let mut g = random_grid(4, 4, 8, 2);
        g.descriptor_mut(5).iter_mut().for_each(|v| *v = 0.0);
        let n = normalize_grid(g);
        assert!(!n.foreground()[5]);
        assert_eq!(n.foreground_count(), 15);
    }

    #[test]
    fn unit_norm_after_normalize() {
        let g = random_grid(8, 8, 16, 2);
        for cell in g.foreground_cells() {
            let norm: f64 = g.descriptor(cell).iter().map(|v| (*v as f64).powi(2)).sum::<f64>().sqrt();
            assert!((norm - 1.0).abs() < 1e-5);
        }
    }

    #[test]
    fn nn_exact_match_and_ties() {
        // (5,7) holds basis 0; everything else is orthogonal to it.
        let (h, w, d) = (8, 8, 64);
        let codes: Vec<usize> = (0..h * w).map(|i| if i == 5 * 8 + 7 { 0 } else { 1 + i % 63 }).collect();
        let g = one_hot(h, w, d, &codes);
        let mut q = vec![0.0f32; d];
        q[0] = 1.0;
        assert_eq!(nearest_neighbor(&q, &g).unwrap(), GridPoint::new(5, 7));

        // (1,4) and (2,0) carry the same descriptor; the row-major first wins.
        let (h, w, d) = (3, 5, 16);
        let codes: Vec<usize> = (0..h * w).map(|i| if i == 4 || i == 10 { 0 } else { 1 }).collect();
        let g = one_hot(h, w, d, &codes);
        assert_eq!(nearest_neighbor(&q[..d], &g).unwrap(), GridPoint::new(0, 4));
        let codes: Vec<usize> = (0..h * w).map(|i| if i == 9 || i == 10 { 0 } else { 1 + i % 15 }).collect();
        let g = one_hot(h, w, d, &codes);
        assert_eq!(nearest_neighbor(&q[..d], &g).unwrap(), GridPoint::new(1, 4));
    }

    #[test]
    fn nn_errors() {
        let mut g = random_grid(2, 2, 4, 0);
        assert!(matches!(nearest_neighbor(&[1.0; 3], &g), Err(Error::DimMismatch(3, 4))));
        for c in 0..4 {
            g.set_foreground(c, false);
        }
        assert!(matches!(nearest_neighbor(&[1.0; 4], &g), Err(Error::EmptyForeground)));
    }

    #[test]
    fn nn_matches_exhaustive_scan() {
        let g = random_grid(4, 4, 8, 3);
        let queries = random_grid(4, 4, 8, 33);
        for qc in 0..16 {
            let q = queries.descriptor(qc);
            // Oracle: explicit Euclidean distances, strictly-smaller scan.
            let mut best = (f64::INFINITY, 0);
            for c in 0..16 {
                let d: f64 = q.iter().zip(g.descriptor(c)).map(|(a, b)| ((a - b) as f64).powi(2)).sum::<f64>().sqrt();
                if d < best.0 {
                    best = (d, c);
                }
            }
            assert_eq!(nearest_neighbor(q, &g).unwrap(), g.point(best.1));
        }
    }

    #[test]
    fn self_cycle_is_zero() {
        let g = random_grid(6, 5, 12, 4);
        let map = cyclical_distance_map(&g, &g).unwrap();
        assert!(map.values.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn off_foreground_is_infinite() {
        let mut g = random_grid(4, 4, 8, 5);
        let t = g.clone();
        g.set_foreground(6, false);
        let map = cyclical_distance_map(&g, &t).unwrap();
        assert_eq!(map.values[6], f64::INFINITY);
        assert_eq!(map.values[7], 0.0);
    }

    #[test]
    fn hand_built_cycle_of_length_one() {
        let d = 12;
        let mut r = vec![0.0f32; 9 * d];
        let mut t = vec![0.0f32; 9 * d];
        for cell in 0..9 {
            r[cell * d + 2 + cell] = 1.0;
            t[cell * d + 2 + cell] = 1.0;
        }
        // ref (0,0): e0. ref (0,1): e0 + e1 (normalized). tgt (0,0): e0 + e1.
        r[0..d].iter_mut().for_each(|v| *v = 0.0);
        r[0] = 1.0;
        r[d..2 * d].iter_mut().for_each(|v| *v = 0.0);
        r[d] = 1.0;
        r[d + 1] = 1.0;
        t[0..d].iter_mut().for_each(|v| *v = 0.0);
        t[0] = 1.0;
        t[1] = 1.0;
        let rg = normalize_grid(FeatureGrid::from_data(3, 3, d, r).unwrap());
        let tg = normalize_grid(FeatureGrid::from_data(3, 3, d, t).unwrap());
        // Hand enumeration: from ref(0,0)=e0 the closest target is tgt(0,0) (distance 0.765 vs √2),
        // and from tgt(0,0) the closest reference is ref(0,1) (distance 0).
        let map = cyclical_distance_map(&rg, &tg).unwrap();
        assert_eq!(map.get(GridPoint::new(0, 0)), 1.0);
    }

    #[test]
    fn cyclical_selection_self_match() {
        let g = random_grid(6, 6, 16, 6);
        let set = select_correspondences_cyclical(&g, &g, 5, 0).unwrap();
        assert_eq!(set.len(), 5);
        assert!(!set.short);
        for c in set.iter() {
            assert_eq!(c.ref_point, c.tgt_point);
            assert_eq!(c.feat_dist, 0.0);
        }
    }

    #[test]
    fn cyclical_selection_short_set() {
        let mut g = random_grid(3, 3, 16, 7);
        for c in 3..9 {
            g.set_foreground(c, false);
        }
        let set = select_correspondences_cyclical(&g, &g, 5, 0).unwrap();
        assert_eq!(set.len(), 3);
        assert!(set.short);
    }

    #[test]
    fn cyclical_selection_errors() {
        let a = random_grid(3, 3, 8, 1);
        let b = random_grid(3, 3, 6, 1);
        assert!(matches!(select_correspondences_cyclical(&a, &b, 2, 0), Err(Error::DimMismatch(8, 6))));
    }
}
