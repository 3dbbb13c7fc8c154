//! End-to-end estimation: view selection, correspondences, lifting, RANSAC.

use std::cell::OnceCell;
use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::features::{
    dual_softmax_match, select_correspondences_cyclical, select_correspondences_mutual_nn, sinkhorn_match,
    CorrespondenceSet,
};
use crate::geom::{RigidTransformSE3, RigidTransformSim3};
use crate::io::{inpaint_depth, DepthImage, FrameBundle};
use crate::solver::{
    fuse_target_cloud, grid_to_pixel, icp_sim3, ransac_pose, unproject, IcpConfig, IcpEstimate, PointCloud,
    PointPair3D, PoseEstimate, RansacConfig,
};
use crate::viewsel::{argmax_view, score_views, select_best_view, ViewSelectConfig, ViewStrategy, DEFAULT_TAU};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Matcher {
    #[default]
    Cyclical,
    MutualNn,
    Sinkhorn,
    DualSoftmax,
}

impl Matcher {
    pub const ALL: [Matcher; 4] = [Self::Cyclical, Self::MutualNn, Self::Sinkhorn, Self::DualSoftmax];

    pub fn name(&self) -> &'static str {
        match self {
            Self::Cyclical => "cyclical",
            Self::MutualNn => "mutual-nn",
            Self::Sinkhorn => "sinkhorn",
            Self::DualSoftmax => "dual-softmax",
        }
    }
}

impl fmt::Display for Matcher {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Matcher {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown matcher {s:?}")))
    }
}

/// Whether the estimate came from RANSAC or fell back to the best view alone.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Fallback {
    #[default]
    None,
    BestViewOnly,
}

impl Fallback {
    pub fn name(&self) -> &'static str {
        match self {
            Self::None => "none",
            Self::BestViewOnly => "best_view_only_fallback",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PipelineConfig {
    pub k: usize,
    pub matcher: Matcher,
    pub view_strategy: ViewStrategy,
    /// Its seed also drives k-means diversification.
    pub ransac: RansacConfig,
    pub best_view_only: bool,
    pub sinkhorn_epsilon: f64,
    pub sinkhorn_iters: usize,
    pub softmax_temperature: f64,
    pub tau: f64,
    /// RANSAC results supported by fewer than this fraction of the lifted
    /// pairs are treated as having no consensus.
    pub min_inlier_fraction: f64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            k: 50,
            matcher: Matcher::Cyclical,
            view_strategy: ViewStrategy::CorrespondSim,
            ransac: RansacConfig::default(),
            best_view_only: false,
            sinkhorn_epsilon: 0.05,
            sinkhorn_iters: 100,
            softmax_temperature: 0.05,
            tau: DEFAULT_TAU,
            min_inlier_fraction: 0.3,
        }
    }
}

impl PipelineConfig {
    pub fn seed(&self) -> u64 {
        self.ransac.seed
    }

    pub fn validate(&self) -> Result<()> {
        if self.k < 4 && !self.best_view_only {
            return Err(Error::InvalidArgument(format!("k = {} < 4", self.k)));
        }
        if !(0.0..=1.0).contains(&self.min_inlier_fraction) {
            return Err(Error::InvalidArgument(format!("min_inlier_fraction {}", self.min_inlier_fraction)));
        }
        self.ransac.validate()
    }

    fn view_select(&self) -> ViewSelectConfig {
        ViewSelectConfig { strategy: self.view_strategy, k: self.k, seed: self.seed(), tau: self.tau }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineResult {
    /// Maps reference-camera coordinates to camera `best_view_index` coordinates.
    pub estimate: PoseEstimate,
    pub best_view_index: usize,
    pub correspondences: CorrespondenceSet,
    pub view_scores: Vec<f64>,
    /// Number of correspondences that survived depth lookup.
    pub lifted_pairs: usize,
    pub fallback: Fallback,
}

fn sample_depth(depth: &DepthImage, filled: &OnceCell<Option<DepthImage>>, x: f64, y: f64) -> Option<f64> {
    depth.sample(x, y).or_else(|| filled.get_or_init(|| inpaint_depth(depth).ok()).as_ref()?.sample(x, y))
}

/// Lifts grid correspondences to camera-frame 3D points in both views.
///
/// Depth is read at the pixel under each cell centre; the depth map is
/// inpainted (once, on demand) only when a lookup hits an invalid pixel.
/// Correspondences without usable depth are dropped. Returns the pairs and
/// the index of the correspondence each came from.
pub fn lift_correspondences(
    corrs: &CorrespondenceSet,
    reference: &FrameBundle,
    target: &FrameBundle,
) -> (Vec<PointPair3D>, Vec<usize>) {
    let (ref_fill, tgt_fill) = (OnceCell::new(), OnceCell::new());
    let lift = |frame: &FrameBundle, fill: &OnceCell<Option<DepthImage>>, p| {
        let g = &frame.features;
        let px = grid_to_pixel(p, &frame.crop, g.height(), g.width());
        let z = sample_depth(&frame.depth, fill, px.0, px.1)?;
        unproject(px, z, &frame.intrinsics).ok()
    };
    let mut pairs = Vec::with_capacity(corrs.len());
    let mut kept = Vec::with_capacity(corrs.len());
    for (i, c) in corrs.iter().enumerate() {
        let (Some(src), Some(dst)) = (lift(reference, &ref_fill, c.ref_point), lift(target, &tgt_fill, c.tgt_point))
        else {
            continue;
        };
        if let Ok(pair) = PointPair3D::new(src, dst) {
            pairs.push(pair);
            kept.push(i);
        }
    }
    (pairs, kept)
}

fn match_view(reference: &FrameBundle, target: &FrameBundle, cfg: &PipelineConfig) -> Result<CorrespondenceSet> {
    let (r, t) = (&reference.features, &target.features);
    match cfg.matcher {
        Matcher::Cyclical => select_correspondences_cyclical(r, t, cfg.k, cfg.seed()),
        Matcher::MutualNn => select_correspondences_mutual_nn(r, t),
        Matcher::Sinkhorn => sinkhorn_match(r, t, cfg.sinkhorn_epsilon, cfg.sinkhorn_iters, cfg.k, cfg.seed()),
        Matcher::DualSoftmax => dual_softmax_match(r, t, cfg.softmax_temperature, cfg.k, cfg.seed()),
    }
}

fn check_frames(reference: &FrameBundle, targets: &[FrameBundle]) -> Result<()> {
    if targets.is_empty() {
        return Err(Error::InvalidArgument("no target frames".into()));
    }
    reference.validate()?;
    targets.iter().try_for_each(FrameBundle::validate)
}

/// Estimates the Sim(3) from the reference camera to the best target camera.
///
/// With `best_view_only`, or when RANSAC cannot produce a consensus from the
/// lifted correspondences, the estimate is the identity at the best view and
/// the result says which of the two happened.
pub fn estimate_pose(reference: &FrameBundle, targets: &[FrameBundle], cfg: &PipelineConfig) -> Result<PipelineResult> {
    cfg.validate()?;
    check_frames(reference, targets)?;
    let grids: Vec<_> = targets.iter().map(|t| t.features.clone()).collect();
    let mut scores = score_views(&reference.features, &grids, &cfg.view_select())?;
    let best = argmax_view(&scores)?;
    let view_scores: Vec<f64> = scores.iter().map(|s| s.score).collect();

    let reuse = cfg.matcher == Matcher::Cyclical && cfg.view_strategy == ViewStrategy::CorrespondSim;
    let correspondences = if reuse || cfg.best_view_only {
        std::mem::take(&mut scores[best].correspondences)
    } else {
        match_view(reference, &targets[best], cfg)?
    };
    let mut result = PipelineResult {
        estimate: PoseEstimate::identity(),
        best_view_index: best,
        correspondences,
        view_scores,
        lifted_pairs: 0,
        fallback: Fallback::None,
    };
    if cfg.best_view_only {
        return Ok(result);
    }

    let (pairs, _) = lift_correspondences(&result.correspondences, reference, &targets[best]);
    result.lifted_pairs = pairs.len();
    match ransac_pose(&pairs, &cfg.ransac) {
        Ok(est) if (est.inlier_count as f64) >= cfg.min_inlier_fraction * pairs.len() as f64 => {
            result.estimate = est;
        }
        Ok(_) | Err(Error::NoConsensus | Error::TooFewPairs { .. } | Error::DegenerateConfiguration(_)) => {
            result.fallback = Fallback::BestViewOnly;
        }
        Err(e) => return Err(e),
    }
    Ok(result)
}

/// The estimate re-expressed for every target view: `cam_i ∘ cam_j*⁻¹ ∘ T*`.
pub fn propagate_to_sequence(result: &PipelineResult, target_extrinsics: &[RigidTransformSE3]) -> Vec<RigidTransformSim3> {
    let j = result.best_view_index;
    let from_best = target_extrinsics[j].invert().to_sim3().compose(&result.estimate.transform);
    target_extrinsics
        .iter()
        .enumerate()
        .map(|(i, cam)| if i == j { result.estimate.transform } else { cam.to_sim3().compose(&from_best) })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum IcpInit {
    /// Reference camera taken as coincident with the first target camera.
    #[default]
    Identity,
    /// Reference camera taken as coincident with the selected best view.
    BestView,
}

impl FromStr for IcpInit {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "identity" => Ok(Self::Identity),
            "best-view" => Ok(Self::BestView),
            _ => Err(Error::InvalidArgument(format!("unknown ICP init {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IcpBaselineConfig {
    pub init: IcpInit,
    pub icp: IcpConfig,
    /// Keep every `stride`-th valid depth pixel when building clouds.
    pub stride: usize,
    pub view: ViewSelectConfig,
}

impl Default for IcpBaselineConfig {
    fn default() -> Self {
        Self { init: IcpInit::Identity, icp: IcpConfig::default(), stride: 1, view: ViewSelectConfig::default() }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IcpResult {
    /// Maps reference-camera coordinates to camera `anchor_view` coordinates.
    pub icp: IcpEstimate,
    pub anchor_view: usize,
}

/// Reference-view depth cloud in its own camera frame.
pub fn reference_cloud(reference: &FrameBundle, stride: usize) -> PointCloud {
    fuse_target_cloud(&[(&reference.depth, &reference.intrinsics, &RigidTransformSE3::identity())], stride)
}

/// ICP baseline: aligns the reference view's depth cloud to the fused target
/// cloud expressed in the anchor view's camera frame, starting from identity
/// (i.e. from the anchor camera's pose).
pub fn estimate_icp(reference: &FrameBundle, targets: &[FrameBundle], cfg: &IcpBaselineConfig) -> Result<IcpResult> {
    check_frames(reference, targets)?;
    let anchor = match cfg.init {
        IcpInit::Identity => 0,
        IcpInit::BestView => {
            let grids: Vec<_> = targets.iter().map(|t| t.features.clone()).collect();
            select_best_view(&reference.features, &grids, &cfg.view)?.view_index
        }
    };
    let src = reference_cloud(reference, cfg.stride);
    let views: Vec<_> = targets.iter().map(|t| (&t.depth, &t.intrinsics, &t.extrinsics)).collect();
    let dst = fuse_target_cloud(&views, cfg.stride).transformed(&targets[anchor].extrinsics.to_sim3());
    let icp = icp_sim3(&src, &dst, &RigidTransformSim3::identity(), &cfg.icp)?;
    Ok(IcpResult { icp, anchor_view: anchor })
}
