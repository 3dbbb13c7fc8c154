//! Picking the target view to align against.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::features::{cycle_trace, select_from_trace, CorrespondenceSet, FeatureGrid};

/// Default cyclical-distance threshold for [`ViewStrategy::CyclicalDistIou`], in grid cells.
pub const DEFAULT_TAU: f64 = 2.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ViewStrategy {
    /// Sum of negated feature distances over the cyclical correspondences.
    #[default]
    CorrespondSim,
    /// Cosine similarity of mean-pooled foreground descriptors.
    GlobalSim,
    /// IoU of the foreground masks after centring their bounding boxes.
    SaliencyIou,
    /// IoU between the target foreground and the target cells reached by
    /// reference cells with cyclical distance below `tau`.
    CyclicalDistIou,
}

impl ViewStrategy {
    pub const ALL: [ViewStrategy; 4] =
        [Self::CorrespondSim, Self::GlobalSim, Self::SaliencyIou, Self::CyclicalDistIou];

    pub fn name(&self) -> &'static str {
        match self {
            Self::CorrespondSim => "correspond-sim",
            Self::GlobalSim => "global-sim",
            Self::SaliencyIou => "saliency-iou",
            Self::CyclicalDistIou => "cyclical-dist-iou",
        }
    }
}

impl fmt::Display for ViewStrategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ViewStrategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|v| v.name() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown view strategy {s:?}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ViewSelectConfig {
    pub strategy: ViewStrategy,
    pub k: usize,
    pub seed: u64,
    pub tau: f64,
}

impl Default for ViewSelectConfig {
    fn default() -> Self {
        Self { strategy: ViewStrategy::CorrespondSim, k: 50, seed: 0, tau: DEFAULT_TAU }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ViewScore {
    pub view_index: usize,
    /// Higher is better; `-∞` marks an unusable view.
    pub score: f64,
    /// Filled for [`ViewStrategy::CorrespondSim`].
    pub correspondences: CorrespondenceSet,
}

/// `Σ −feat_dist`; an empty set scores `-∞`.
pub fn correspondence_score(corrs: &CorrespondenceSet) -> f64 {
    if corrs.is_empty() {
        return f64::NEG_INFINITY;
    }
    -corrs.iter().map(|c| c.feat_dist).sum::<f64>()
}

fn unusable(e: Error) -> Result<f64> {
    match e {
        Error::EmptyForeground => Ok(f64::NEG_INFINITY),
        other => Err(other),
    }
}

fn pooled(grid: &FeatureGrid) -> Option<Vec<f64>> {
    let mut sum = vec![0.0; grid.dim()];
    for cell in grid.foreground_cells() {
        sum.iter_mut().zip(grid.descriptor(cell)).for_each(|(s, v)| *s += *v as f64);
    }
    let norm = sum.iter().map(|v| v * v).sum::<f64>().sqrt();
    (norm > 0.0).then(|| sum.into_iter().map(|v| v / norm).collect())
}

fn global_sim(reference: &FeatureGrid, target: &FeatureGrid) -> Result<f64> {
    if reference.dim() != target.dim() {
        return Err(Error::DimMismatch(reference.dim(), target.dim()));
    }
    match (pooled(reference), pooled(target)) {
        (Some(a), Some(b)) => Ok(a.iter().zip(&b).map(|(x, y)| x * y).sum()),
        _ => Ok(f64::NEG_INFINITY),
    }
}

/// Bounding box of the foreground as `(min_row, max_row, min_col, max_col)`.
fn bbox(grid: &FeatureGrid) -> Option<(i64, i64, i64, i64)> {
    grid.foreground_cells().map(|c| grid.point(c)).fold(None, |acc, p| {
        let (r, c) = (p.row as i64, p.col as i64);
        Some(match acc {
            None => (r, r, c, c),
            Some((r0, r1, c0, c1)) => (r0.min(r), r1.max(r), c0.min(c), c1.max(c)),
        })
    })
}

fn saliency_iou(reference: &FeatureGrid, target: &FeatureGrid) -> f64 {
    let (Some(a), Some(b)) = (bbox(reference), bbox(target)) else { return f64::NEG_INFINITY };
    // Shift target so the bbox centres coincide (doubled coordinates keep it integral).
    let dr = ((a.0 + a.1) - (b.0 + b.1)).div_euclid(2);
    let dc = ((a.2 + a.3) - (b.2 + b.3)).div_euclid(2);
    let (h, w) = (reference.height() as i64, reference.width() as i64);
    let mut inter = 0usize;
    for cell in target.foreground_cells() {
        let p = target.point(cell);
        let (r, c) = (p.row as i64 + dr, p.col as i64 + dc);
        if (0..h).contains(&r) && (0..w).contains(&c) && reference.foreground()[(r * w + c) as usize] {
            inter += 1;
        }
    }
    let union = reference.foreground_count() + target.foreground_count() - inter;
    inter as f64 / union as f64
}

fn cyclical_dist_iou(reference: &FeatureGrid, target: &FeatureGrid, tau: f64) -> Result<f64> {
    let trace = match cycle_trace(reference, target) {
        Ok(t) => t,
        Err(e) => return unusable(e),
    };
    let mut hit = vec![false; target.cells()];
    for u in 0..reference.cells() {
        if trace.cyc[u] < tau {
            hit[trace.forward[u]] = true;
        }
    }
    // Finite cycles only reach foreground targets, so the hit set is a subset.
    let inter = hit.iter().filter(|h| **h).count();
    Ok(inter as f64 / target.foreground_count() as f64)
}

/// Scores one target view.
pub fn score_view(reference: &FeatureGrid, target: &FeatureGrid, view_index: usize, cfg: &ViewSelectConfig) -> Result<ViewScore> {
    let mut correspondences = CorrespondenceSet::default();
    let score = match cfg.strategy {
        ViewStrategy::CorrespondSim => match cycle_trace(reference, target) {
            Ok(trace) => {
                correspondences = select_from_trace(&trace, reference, target, cfg.k, cfg.seed);
                correspondence_score(&correspondences)
            }
            Err(e) => unusable(e)?,
        },
        ViewStrategy::GlobalSim => global_sim(reference, target)?,
        ViewStrategy::SaliencyIou => saliency_iou(reference, target),
        ViewStrategy::CyclicalDistIou => cyclical_dist_iou(reference, target, cfg.tau)?,
    };
    Ok(ViewScore { view_index, score, correspondences })
}

/// Scores every target view (concurrently) in input order.
pub fn score_views(reference: &FeatureGrid, targets: &[FeatureGrid], cfg: &ViewSelectConfig) -> Result<Vec<ViewScore>> {
    targets.par_iter().enumerate().map(|(j, t)| score_view(reference, t, j, cfg)).collect()
}

/// Index of the highest finite-or-not score; ties go to the smallest index.
pub fn argmax_view(scores: &[ViewScore]) -> Result<usize> {
    let mut best: Option<usize> = None;
    for (j, s) in scores.iter().enumerate() {
        if s.score == f64::NEG_INFINITY || s.score.is_nan() {
            continue;
        }
        if best.is_none_or(|b| s.score > scores[b].score) {
            best = Some(j);
        }
    }
    best.ok_or(Error::AllViewsUnusable)
}

pub fn select_best_view(reference: &FeatureGrid, targets: &[FeatureGrid], cfg: &ViewSelectConfig) -> Result<ViewScore> {
    if targets.is_empty() {
        return Err(Error::InvalidArgument("no target views".into()));
    }
    let mut scores = score_views(reference, targets, cfg)?;
    let j = argmax_view(&scores)?;
    Ok(scores.swap_remove(j))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::test_grids::random_grid;
    use crate::features::{Correspondence, GridPoint};

    fn set_with(dists: &[f64]) -> CorrespondenceSet {
        let items = dists
            .iter()
            .map(|&d| Correspondence { ref_point: GridPoint::new(0, 0), tgt_point: GridPoint::new(0, 0), feat_dist: d, cyc_dist: 0.0 })
            .collect();
        CorrespondenceSet::new(items, None)
    }

    #[test]
    fn score_arithmetic() {
        assert_eq!(correspondence_score(&set_with(&[0.0; 50])), 0.0);
        assert_eq!(correspondence_score(&CorrespondenceSet::default()), f64::NEG_INFINITY);
        assert!((correspondence_score(&set_with(&[0.2, 0.5, 0.3])) + 1.0).abs() < 1e-12);
    }

    #[test]
    fn self_view_wins() {
        let reference = random_grid(6, 6, 16, 1);
        let targets = vec![random_grid(6, 6, 16, 2), reference.clone(), random_grid(6, 6, 16, 3)];
        for strategy in [ViewStrategy::CorrespondSim, ViewStrategy::GlobalSim, ViewStrategy::CyclicalDistIou] {
            let cfg = ViewSelectConfig { strategy, k: 8, ..Default::default() };
            assert_eq!(select_best_view(&reference, &targets, &cfg).unwrap().view_index, 1, "{strategy}");
        }
    }

    #[test]
    fn single_target_is_index_zero() {
        let reference = random_grid(4, 4, 8, 1);
        let targets = vec![random_grid(4, 4, 8, 9)];
        for strategy in ViewStrategy::ALL {
            let cfg = ViewSelectConfig { strategy, k: 4, ..Default::default() };
            assert_eq!(select_best_view(&reference, &targets, &cfg).unwrap().view_index, 0);
        }
    }

    #[test]
    fn all_empty_is_unusable() {
        let reference = random_grid(4, 4, 8, 1);
        let mut empty = random_grid(4, 4, 8, 2);
        (0..16).for_each(|c| empty.set_foreground(c, false));
        let cfg = ViewSelectConfig::default();
        assert!(matches!(select_best_view(&reference, &[empty.clone(), empty], &cfg), Err(Error::AllViewsUnusable)));
    }

    #[test]
    fn saliency_iou_ignores_translation() {
        let mut a = random_grid(8, 8, 4, 1);
        let mut b = a.clone();
        for c in 0..64 {
            let p = a.point(c);
            a.set_foreground(c, p.row < 3 && p.col < 3);
            b.set_foreground(c, (4..7).contains(&p.row) && (5..8).contains(&p.col));
        }
        assert_eq!(saliency_iou(&a, &b), 1.0);
    }

    #[test]
    fn strategy_names_round_trip() {
        for s in ViewStrategy::ALL {
            assert_eq!(s.name().parse::<ViewStrategy>().unwrap(), s);
        }
        assert!("best".parse::<ViewStrategy>().is_err());
    }
}
