use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::{residual, umeyama, PointPair3D, PoseEstimate};
use crate::error::{Error, Result};
use crate::geom::RigidTransformSim3;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RansacConfig {
    pub max_iters: usize,
    /// Inlier distance in scene units (strict `<`).
    pub inlier_thresh: f64,
    pub sample_size: usize,
    pub seed: u64,
    pub min_pairs: usize,
}

impl Default for RansacConfig {
    fn default() -> Self {
        Self { max_iters: 1000, inlier_thresh: 0.2, sample_size: 4, seed: 0, min_pairs: 4 }
    }
}

impl RansacConfig {
    pub fn validate(&self) -> Result<()> {
        if self.sample_size < 3 {
            return Err(Error::InvalidArgument(format!("sample_size {} < 3", self.sample_size)));
        }
        if !(self.inlier_thresh > 0.0 && self.inlier_thresh.is_finite()) {
            return Err(Error::InvalidArgument(format!("inlier_thresh {} must be positive", self.inlier_thresh)));
        }
        Ok(())
    }
}

struct Trial {
    index: usize,
    model: RigidTransformSim3,
    inliers: Vec<usize>,
}

fn inliers_of(model: &RigidTransformSim3, pairs: &[PointPair3D], thresh: f64) -> Vec<usize> {
    (0..pairs.len()).filter(|&i| residual(model, &pairs[i]) < thresh).collect()
}

fn rms(model: &RigidTransformSim3, pairs: &[PointPair3D], idx: &[usize]) -> f64 {
    if idx.is_empty() {
        return 0.0;
    }
    (idx.iter().map(|&i| residual(model, &pairs[i]).powi(2)).sum::<f64>() / idx.len() as f64).sqrt()
}

fn refit(pairs: &[PointPair3D], idx: &[usize]) -> Result<RigidTransformSim3> {
    let subset: Vec<PointPair3D> = idx.iter().map(|&i| pairs[i]).collect();
    umeyama(&subset)
}

/// RANSAC over minimal Umeyama fits followed by a refit on the winning
/// consensus set.
///
/// Trial `i` draws its sample from a ChaCha stream keyed by `(seed, i)`, so
/// trials can run in any order and the result is identical to a sequential
/// run. All `max_iters` trials are run. Degenerate samples are skipped. The
/// winner has the most inliers; ties go to the lower RMS after refitting on
/// the trial's inliers, then to the earliest trial.
pub fn ransac_pose(pairs: &[PointPair3D], cfg: &RansacConfig) -> Result<PoseEstimate> {
    cfg.validate()?;
    let need = cfg.min_pairs.max(cfg.sample_size);
    if pairs.len() < need {
        return Err(Error::TooFewPairs { got: pairs.len(), need });
    }

    let trials: Vec<Trial> = (0..cfg.max_iters)
        .into_par_iter()
        .filter_map(|index| {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            rng.set_stream(index as u64);
            let sample: Vec<PointPair3D> =
                index::sample(&mut rng, pairs.len(), cfg.sample_size).into_iter().map(|i| pairs[i]).collect();
            let model = umeyama(&sample).ok()?;
            let inliers = inliers_of(&model, pairs, cfg.inlier_thresh);
            (inliers.len() >= cfg.sample_size).then_some(Trial { index, model, inliers })
        })
        .collect();

    let most = trials.iter().map(|t| t.inliers.len()).max().ok_or(Error::NoConsensus)?;
    let mut best: Option<(f64, &Trial)> = None;
    let mut scored: Vec<(&[usize], f64)> = Vec::new();
    for trial in trials.iter().filter(|t| t.inliers.len() == most) {
        let score = match scored.iter().find(|(set, _)| *set == trial.inliers.as_slice()) {
            Some((_, s)) => *s,
            None => {
                let s = refit(pairs, &trial.inliers).map_or(f64::INFINITY, |m| rms(&m, pairs, &trial.inliers));
                scored.push((&trial.inliers, s));
                s
            }
        };
        if best.is_none_or(|(b, t)| score < b || (score == b && trial.index < t.index)) {
            best = Some((score, trial));
        }
    }
    let (_, winner) = best.expect("at least one trial has the maximal count");

    let (model, inliers) = match refit(pairs, &winner.inliers) {
        Ok(m) => {
            let inl = inliers_of(&m, pairs, cfg.inlier_thresh);
            if inl.len() >= winner.inliers.len() {
                (m, inl)
            } else {
                (winner.model, winner.inliers.clone())
            }
        }
        Err(_) => (winner.model, winner.inliers.clone()),
    };
    Ok(PoseEstimate {
        transform: model,
        inlier_count: inliers.len(),
        rms_residual: rms(&model, pairs, &inliers),
        inlier_indices: inliers,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::{geodesic_rotation_error, Rotation3, Vec3};
    use rand::Rng;

    fn clean_pairs(n: usize, truth: &RigidTransformSim3, rng: &mut ChaCha8Rng) -> Vec<PointPair3D> {
        (0..n)
            .map(|_| {
                let src = Vec3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(2.0..4.0));
                PointPair3D { src, dst: truth.apply(&src) }
            })
            .collect()
    }

    #[test]
    fn outlier_free_recovers_exactly() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let truth = RigidTransformSim3::new(Rotation3::random(&mut rng), Vec3::new(0.1, 0.2, 0.3), 1.3).unwrap();
        let pairs = clean_pairs(30, &truth, &mut rng);
        let est = ransac_pose(&pairs, &RansacConfig { max_iters: 50, ..Default::default() }).unwrap();
        assert_eq!(est.inlier_count, 30);
        assert!(geodesic_rotation_error(&est.transform.rotation, &truth.rotation) < 1e-6);
        assert!((est.transform.scale - 1.3).abs() < 1e-6);
        assert!((est.transform.translation - truth.translation).norm() < 1e-6);
    }

    #[test]
    fn inconsistent_pairs_have_no_consensus() {
        let pairs = vec![
            PointPair3D { src: Vec3::new(0.0, 0.0, 1.0), dst: Vec3::new(5.0, 1.0, 2.0) },
            PointPair3D { src: Vec3::new(1.0, 0.0, 1.0), dst: Vec3::new(-3.0, 0.2, 9.0) },
            PointPair3D { src: Vec3::new(0.0, 1.0, 1.0), dst: Vec3::new(0.4, 7.0, 1.0) },
            PointPair3D { src: Vec3::new(0.0, 0.0, 2.0), dst: Vec3::new(2.0, -2.0, 3.0) },
        ];
        let cfg = RansacConfig { inlier_thresh: 1e-6, max_iters: 100, ..Default::default() };
        assert!(matches!(ransac_pose(&pairs, &cfg), Err(Error::NoConsensus)));
    }

    #[test]
    fn too_few_pairs() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let pairs = clean_pairs(3, &RigidTransformSim3::identity(), &mut rng);
        assert!(matches!(ransac_pose(&pairs, &RansacConfig::default()), Err(Error::TooFewPairs { got: 3, need: 4 })));
    }

    #[test]
    fn seeded_runs_are_identical() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let truth = RigidTransformSim3::new(Rotation3::random(&mut rng), Vec3::zeros(), 1.0).unwrap();
        let mut pairs = clean_pairs(40, &truth, &mut rng);
        for p in pairs.iter_mut().take(12) {
            p.dst = Vec3::new(rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0), rng.random_range(1.0..5.0));
        }
        let cfg = RansacConfig { seed: 77, ..Default::default() };
        assert_eq!(ransac_pose(&pairs, &cfg).unwrap(), ransac_pose(&pairs, &cfg).unwrap());
    }
}
