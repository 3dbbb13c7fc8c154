//! Ground truth, per-pair errors and aggregate metrics.

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::geom::{geodesic_rotation_error, relative_gt_pose, RigidTransformSim3};
use crate::io::{DataSource, FrameBundle, PairSpec};
use crate::pipeline::{estimate_icp, estimate_pose, Fallback, IcpBaselineConfig, PipelineConfig};

pub const CSV_HEADER: &str = "category,pair_id,rotation_error_deg,translation_error,best_view,fallback";

/// What a predictor returns for one pair.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Prediction {
    /// Reference camera to camera `view`.
    pub transform: RigidTransformSim3,
    pub view: usize,
    pub fallback: Fallback,
}

/// Ground-truth context handed to predictors that need it (oracles, tests).
pub struct PairContext<'a> {
    pub spec: &'a PairSpec,
    pub reference: &'a FrameBundle,
    pub targets: &'a [FrameBundle],
    pub ref_alignment: &'a RigidTransformSim3,
    pub tgt_alignment: &'a RigidTransformSim3,
}

impl PairContext<'_> {
    pub fn ground_truth(&self, view: usize) -> RigidTransformSim3 {
        relative_gt_pose(self.ref_alignment, self.tgt_alignment, &self.reference.extrinsics, &self.targets[view].extrinsics)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PairResult {
    pub pair_id: String,
    pub category: String,
    pub rotation_error_deg: f64,
    /// `‖t_pred − t_gt‖` in scene units. Not part of the headline metrics.
    pub translation_error: f64,
    pub best_view: usize,
    pub fallback: &'static str,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CategoryReport {
    pub category: String,
    pub median_error_deg: f64,
    pub acc30: f64,
    pub acc15: f64,
    pub pairs: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Aggregate {
    pub median_error_deg: f64,
    pub acc30: f64,
    pub acc15: f64,
    pub pairs: usize,
    /// `"macro"` (mean over categories) or `"micro"` (pooled pairs).
    pub mode: &'static str,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalReport {
    pub aggregate: Aggregate,
    pub per_category: Vec<CategoryReport>,
    pub skipped: usize,
    #[serde(skip)]
    pub records: Vec<PairResult>,
    #[serde(skip)]
    pub skip_reasons: Vec<(String, String)>,
}

/// Lower-middle order statistic; `NaN` for an empty slice.
pub fn median(values: &[f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    v[(v.len() - 1) / 2]
}

/// Percentage of errors strictly below `threshold_deg`.
pub fn accuracy(errors_deg: &[f64], threshold_deg: f64) -> f64 {
    if errors_deg.is_empty() {
        return f64::NAN;
    }
    100.0 * errors_deg.iter().filter(|e| **e < threshold_deg).count() as f64 / errors_deg.len() as f64
}

pub fn category_report(category: &str, errors_deg: &[f64]) -> CategoryReport {
    CategoryReport {
        category: category.to_string(),
        median_error_deg: median(errors_deg),
        acc30: accuracy(errors_deg, 30.0),
        acc15: accuracy(errors_deg, 15.0),
        pairs: errors_deg.len(),
    }
}

/// Per-category reports (sorted by name) and the aggregate row.
pub fn aggregate(records: &[PairResult], micro: bool) -> (Vec<CategoryReport>, Aggregate) {
    let mut cats: Vec<&str> = records.iter().map(|r| r.category.as_str()).collect();
    cats.sort_unstable();
    cats.dedup();
    let per: Vec<CategoryReport> = cats
        .iter()
        .map(|c| {
            let errs: Vec<f64> = records.iter().filter(|r| r.category == *c).map(|r| r.rotation_error_deg).collect();
            category_report(c, &errs)
        })
        .collect();
    let agg = if micro {
        let all: Vec<f64> = records.iter().map(|r| r.rotation_error_deg).collect();
        let r = category_report("all", &all);
        Aggregate { median_error_deg: r.median_error_deg, acc30: r.acc30, acc15: r.acc15, pairs: r.pairs, mode: "micro" }
    } else {
        let n = per.len() as f64;
        let mean = |f: fn(&CategoryReport) -> f64| if per.is_empty() { f64::NAN } else { per.iter().map(f).sum::<f64>() / n };
        Aggregate {
            median_error_deg: mean(|r| r.median_error_deg),
            acc30: mean(|r| r.acc30),
            acc15: mean(|r| r.acc15),
            pairs: records.len(),
            mode: "macro",
        }
    };
    (per, agg)
}

pub fn score_prediction(spec: &PairSpec, pred: &Prediction, gt: &RigidTransformSim3) -> PairResult {
    PairResult {
        pair_id: spec.pair_id.clone(),
        category: spec.category.clone(),
        rotation_error_deg: geodesic_rotation_error(&pred.transform.rotation, &gt.rotation).to_degrees(),
        translation_error: (pred.transform.translation - gt.translation).norm(),
        best_view: pred.view,
        fallback: pred.fallback.name(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct EvalOptions {
    /// Use only the first `views` target frames of each pair.
    pub views: Option<usize>,
    /// Pool pairs for the aggregate instead of averaging categories.
    pub micro: bool,
}

enum Outcome {
    Scored(PairResult),
    Skipped(String),
}

fn run_pair<P>(spec: &PairSpec, data: &dyn DataSource, opts: &EvalOptions, predict: &P) -> Result<Outcome>
where
    P: Fn(&PairContext<'_>) -> Result<Prediction> + Sync,
{
    let cat = &spec.category;
    let (Some(ref_t0), Some(tgt_t0)) = (
        data.canonical_alignment(cat, &spec.reference.sequence)?,
        data.canonical_alignment(cat, &spec.target.sequence)?,
    ) else {
        return Ok(Outcome::Skipped(Error::MissingLabel(spec.pair_id.clone()).to_string()));
    };
    let reference = data.frame(cat, &spec.reference.sequence, &spec.reference.frame)?;
    let n = opts.views.map_or(spec.target.frames.len(), |v| v.min(spec.target.frames.len()));
    let targets = spec.target.frames[..n]
        .iter()
        .map(|f| data.frame(cat, &spec.target.sequence, f))
        .collect::<Result<Vec<_>>>()?;
    let ctx = PairContext { spec, reference: &reference, targets: &targets, ref_alignment: &ref_t0, tgt_alignment: &tgt_t0 };
    match predict(&ctx) {
        Ok(pred) => Ok(Outcome::Scored(score_prediction(spec, &pred, &ctx.ground_truth(pred.view)))),
        Err(e @ (Error::AllViewsUnusable | Error::NoConsensus | Error::DegenerateConfiguration(_))) => {
            Ok(Outcome::Skipped(format!("{}: {e}", spec.pair_id)))
        }
        Err(e) => Err(e),
    }
}

/// Runs `predict` on every pair (concurrently) and aggregates. Pairs whose
/// sequences lack a canonical alignment, or whose estimation fails, are
/// skipped and counted; data errors abort. Records keep the input order.
pub fn evaluate_with<P>(pairs: &[PairSpec], data: &dyn DataSource, opts: &EvalOptions, predict: P) -> Result<EvalReport>
where
    P: Fn(&PairContext<'_>) -> Result<Prediction> + Sync,
{
    let outcomes: Vec<Outcome> =
        pairs.par_iter().map(|spec| run_pair(spec, data, opts, &predict)).collect::<Result<Vec<_>>>()?;
    let mut records = Vec::new();
    let mut skip_reasons = Vec::new();
    for (spec, o) in pairs.iter().zip(outcomes) {
        match o {
            Outcome::Scored(r) => records.push(r),
            Outcome::Skipped(why) => skip_reasons.push((spec.pair_id.clone(), why)),
        }
    }
    let (per_category, aggregate) = aggregate(&records, opts.micro);
    Ok(EvalReport { aggregate, per_category, skipped: skip_reasons.len(), records, skip_reasons })
}

/// Evaluates the full pipeline.
pub fn evaluate_pairs(pairs: &[PairSpec], data: &dyn DataSource, cfg: &PipelineConfig, opts: &EvalOptions) -> Result<EvalReport> {
    evaluate_with(pairs, data, opts, |ctx| {
        let r = estimate_pose(ctx.reference, ctx.targets, cfg)?;
        Ok(Prediction { transform: r.estimate.transform, view: r.best_view_index, fallback: r.fallback })
    })
}

/// Evaluates the ICP baseline.
pub fn evaluate_icp(pairs: &[PairSpec], data: &dyn DataSource, cfg: &IcpBaselineConfig, opts: &EvalOptions) -> Result<EvalReport> {
    evaluate_with(pairs, data, opts, |ctx| {
        let r = estimate_icp(ctx.reference, ctx.targets, cfg)?;
        Ok(Prediction { transform: r.icp.estimate.transform, view: r.anchor_view, fallback: Fallback::None })
    })
}

/// Per-pair rows for external plotting, with [`CSV_HEADER`].
pub fn error_histogram(records: &[PairResult]) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for r in records {
        out.push_str(&format!(
            "{},{},{:.6},{:.6},{},{}\n",
            r.category, r.pair_id, r.rotation_error_deg, r.translation_error, r.best_view, r.fallback
        ));
    }
    out
}

/// Fraction of SO(3) (Haar) within `theta` of the identity:
/// `(θ − sin θ) / π`.
pub fn haar_ball_fraction(theta: f64) -> f64 {
    (theta - theta.sin()) / std::f64::consts::PI
}
