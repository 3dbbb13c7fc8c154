//! Lifting grid correspondences to 3D and robust similarity estimation.

mod icp;
mod ransac;

pub use icp::{icp_sim3, IcpConfig, IcpEstimate, ICP_EXHAUSTIVE_BELOW};
pub use ransac::{ransac_pose, RansacConfig};

use nalgebra::SVD;

use crate::error::{Error, Result};
use crate::features::GridPoint;
use crate::geom::{CameraIntrinsics, Mat3, RigidTransformSE3, RigidTransformSim3, Rotation3, Vec3};
use crate::io::{CropRect, DepthImage};

/// Relative singular-value floor below which the source spread counts as
/// rank-deficient.
const RANK_TOL: f64 = 1e-10;

/// A 3D correspondence: a reference-view point and its match in the target view.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PointPair3D {
    pub src: Vec3,
    pub dst: Vec3,
}

impl PointPair3D {
    pub fn new(src: Vec3, dst: Vec3) -> Result<Self> {
        if src.iter().chain(dst.iter()).any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("non-finite point".into()));
        }
        if src.z <= 0.0 || dst.z <= 0.0 {
            return Err(Error::InvalidArgument(format!("point behind camera: src.z={} dst.z={}", src.z, dst.z)));
        }
        Ok(Self { src, dst })
    }
}

/// Solver output: a similarity plus its support.
#[derive(Debug, Clone, PartialEq)]
pub struct PoseEstimate {
    pub transform: RigidTransformSim3,
    pub inlier_count: usize,
    pub inlier_indices: Vec<usize>,
    /// RMS of `‖dst − T(src)‖` over the inliers.
    pub rms_residual: f64,
}

impl PoseEstimate {
    pub fn identity() -> Self {
        Self { transform: RigidTransformSim3::identity(), inlier_count: 0, inlier_indices: Vec::new(), rms_residual: 0.0 }
    }
}

/// Centre of grid cell `p` in original-image pixel coordinates.
pub fn grid_to_pixel(p: GridPoint, crop: &CropRect, grid_height: usize, grid_width: usize) -> (f64, f64) {
    let x = crop.x + (p.col as f64 + 0.5) * crop.w / grid_width as f64;
    let y = crop.y + (p.row as f64 + 0.5) * crop.h / grid_height as f64;
    (x, y)
}

pub fn unproject(pixel: (f64, f64), depth: f64, intr: &CameraIntrinsics) -> Result<Vec3> {
    if !(depth.is_finite() && depth > 0.0) {
        return Err(Error::InvalidDepth(format!("depth {depth} at pixel {pixel:?}")));
    }
    let (x, y) = pixel;
    Ok(Vec3::new((x - intr.cx) / intr.fx * depth, (y - intr.cy) / intr.fy * depth, depth))
}

/// Least-squares similarity `dst ≈ λ R src + t` (Umeyama), with the sign
/// correction that keeps `det R = +1`.
pub fn umeyama_points(src: &[Vec3], dst: &[Vec3]) -> Result<RigidTransformSim3> {
    if src.len() != dst.len() {
        return Err(Error::InvalidArgument(format!("{} source vs {} target points", src.len(), dst.len())));
    }
    let n = src.len();
    if n < 3 {
        return Err(Error::DegenerateConfiguration(format!("{n} point pairs, need 3")));
    }
    let inv_n = 1.0 / n as f64;
    let mu_s = src.iter().sum::<Vec3>() * inv_n;
    let mu_d = dst.iter().sum::<Vec3>() * inv_n;

    let mut cov = Mat3::zeros();
    let mut src_cov = Mat3::zeros();
    let mut var_s = 0.0;
    for (s, d) in src.iter().zip(dst) {
        let (cs, cd) = (s - mu_s, d - mu_d);
        cov += cd * cs.transpose();
        src_cov += cs * cs.transpose();
        var_s += cs.norm_squared();
    }
    cov *= inv_n;
    src_cov *= inv_n;
    var_s *= inv_n;

    let mut spread = src_cov.symmetric_eigenvalues().iter().map(|v| v.max(0.0)).collect::<Vec<_>>();
    spread.sort_by(|a, b| b.total_cmp(a));
    if !(var_s > 0.0) || spread[1] <= RANK_TOL * spread[0] {
        return Err(Error::DegenerateConfiguration("source points are collinear or coincident".into()));
    }

    let svd = SVD::new(cov, true, true);
    let (u, v_t) = (svd.u.unwrap(), svd.v_t.unwrap());
    let sv = svd.singular_values;
    let mut s = Vec3::new(1.0, 1.0, 1.0);
    if u.determinant() * v_t.determinant() < 0.0 {
        let smallest = (0..3).min_by(|&a, &b| sv[a].total_cmp(&sv[b])).unwrap();
        s[smallest] = -1.0;
    }
    let r = u * Mat3::from_diagonal(&s) * v_t;
    let trace_ds = sv.component_mul(&s).sum();
    if !(trace_ds > 0.0) {
        return Err(Error::DegenerateConfiguration("non-positive scale".into()));
    }
    let scale = trace_ds / var_s;
    let rotation = Rotation3::from_matrix_repaired(r)?;
    let translation = mu_d - scale * rotation.apply(&mu_s);
    RigidTransformSim3::new(rotation, translation, scale)
}

pub fn umeyama(pairs: &[PointPair3D]) -> Result<RigidTransformSim3> {
    let src: Vec<Vec3> = pairs.iter().map(|p| p.src).collect();
    let dst: Vec<Vec3> = pairs.iter().map(|p| p.dst).collect();
    umeyama_points(&src, &dst)
}

pub(crate) fn residual(t: &RigidTransformSim3, p: &PointPair3D) -> f64 {
    (p.dst - t.apply(&p.src)).norm()
}

/// A point set; `view` records which input view produced each point.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PointCloud {
    pub points: Vec<Vec3>,
    pub view: Vec<usize>,
}

impl PointCloud {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn transformed(&self, t: &RigidTransformSim3) -> Self {
        Self { points: self.points.iter().map(|p| t.apply(p)).collect(), view: self.view.clone() }
    }
}

/// Unprojects every `stride`-th valid pixel (row-major) of each view at its
/// pixel centre and maps it to world coordinates through the inverse
/// extrinsic.
pub fn fuse_target_cloud(views: &[(&DepthImage, &CameraIntrinsics, &RigidTransformSE3)], stride: usize) -> PointCloud {
    let stride = stride.max(1);
    let mut cloud = PointCloud::default();
    for (vi, (depth, intr, extr)) in views.iter().enumerate() {
        let to_world = extr.invert();
        let mut seen = 0usize;
        for (i, (&z, &ok)) in depth.values().iter().zip(depth.valid()).enumerate() {
            if !ok {
                continue;
            }
            seen += 1;
            if (seen - 1) % stride != 0 {
                continue;
            }
            let (r, c) = (i / depth.width(), i % depth.width());
            let p = unproject((c as f64 + 0.5, r as f64 + 0.5), z as f64, intr)
                .expect("valid depth pixels are positive");
            cloud.points.push(to_world.apply(&p));
            cloud.view.push(vi);
        }
    }
    cloud
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn grid_to_pixel_cases() {
        let full = CropRect::full(224, 224);
        assert_eq!(grid_to_pixel(GridPoint::new(0, 0), &full, 28, 28), (4.0, 4.0));
        assert_eq!(grid_to_pixel(GridPoint::new(27, 27), &full, 28, 28), (220.0, 220.0));
        let crop = CropRect::new(100.0, 50.0, 448.0, 448.0).unwrap();
        assert_eq!(grid_to_pixel(GridPoint::new(14, 7), &crop, 28, 28), (220.0, 282.0));
    }

    #[test]
    fn unproject_cases() {
        let k = CameraIntrinsics::new(100.0, 100.0, 50.0, 40.0, 100, 80).unwrap();
        assert_eq!(unproject((50.0, 40.0), 2.0, &k).unwrap(), Vec3::new(0.0, 0.0, 2.0));
        let k = CameraIntrinsics::new(100.0, 100.0, 0.0, 0.0, 200, 200).unwrap();
        assert_eq!(unproject((100.0, 0.0), 1.0, &k).unwrap(), Vec3::new(1.0, 0.0, 1.0));
        assert!(matches!(unproject((1.0, 1.0), 0.0, &k), Err(Error::InvalidDepth(_))));
        assert!(matches!(unproject((1.0, 1.0), -1.0, &k), Err(Error::InvalidDepth(_))));
    }

    #[test]
    fn unproject_project_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let k = CameraIntrinsics::new(520.0, 515.0, 319.5, 239.5, 640, 480).unwrap();
        for _ in 0..100 {
            let px = (rng.random_range(0.0..640.0), rng.random_range(0.0..480.0));
            let z = rng.random_range(0.1..10.0);
            let (x, y) = k.project(&unproject(px, z, &k).unwrap());
            assert!((x - px.0).abs() < 1e-9 && (y - px.1).abs() < 1e-9);
        }
    }

    fn cube() -> Vec<Vec3> {
        (0..8).map(|i| Vec3::new((i & 1) as f64, ((i >> 1) & 1) as f64, ((i >> 2) & 1) as f64 + 1.0)).collect()
    }

    #[test]
    fn umeyama_identity() {
        let pts = cube();
        let t = umeyama_points(&pts, &pts).unwrap();
        assert!((t.rotation.matrix() - Mat3::identity()).norm() < 1e-12);
        assert!((t.scale - 1.0).abs() < 1e-12);
        assert!(t.translation.norm() < 1e-12);
    }

    #[test]
    fn umeyama_recovers_known_transform() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let src: Vec<Vec3> =
            (0..10).map(|_| Vec3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))).collect();
        let truth =
            RigidTransformSim3::new(Rotation3::rot_z(30f64.to_radians()), Vec3::new(1.0, -2.0, 0.5), 2.5).unwrap();
        let dst: Vec<Vec3> = src.iter().map(|p| truth.apply(p)).collect();
        let t = umeyama_points(&src, &dst).unwrap();
        assert!((t.rotation.matrix() - truth.rotation.matrix()).abs().max() < 1e-9);
        assert!((t.translation - truth.translation).abs().max() < 1e-9);
        assert!((t.scale - 2.5).abs() < 1e-9);
    }

    #[test]
    fn umeyama_degenerate_inputs() {
        let line: Vec<Vec3> = (0..5).map(|i| Vec3::new(i as f64, 0.0, 1.0)).collect();
        assert!(matches!(umeyama_points(&line, &line), Err(Error::DegenerateConfiguration(_))));
        let two = &cube()[..2];
        assert!(matches!(umeyama_points(two, two), Err(Error::DegenerateConfiguration(_))));
    }

    #[test]
    fn umeyama_planar_reflection_stays_proper() {
        // Mirror a planar set through the x = 0 plane: the best orthogonal fit
        // is a reflection, which must not be returned.
        let src = vec![Vec3::new(1.0, 0.0, 0.0), Vec3::new(0.0, 1.0, 0.0), Vec3::new(-1.0, -0.5, 0.0), Vec3::new(0.3, -1.0, 0.0)];
        let dst: Vec<Vec3> = src.iter().map(|p| Vec3::new(-p.x, p.y, p.z)).collect();
        let t = umeyama_points(&src, &dst).unwrap();
        assert!((t.rotation.matrix().determinant() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn fuse_flat_plane() {
        let depth = DepthImage::constant(4, 5, 1.0).unwrap();
        let k = CameraIntrinsics::new(10.0, 10.0, 2.5, 2.0, 5, 4).unwrap();
        let cloud = fuse_target_cloud(&[(&depth, &k, &RigidTransformSE3::identity())], 1);
        assert_eq!(cloud.len(), 20);
        assert!(cloud.points.iter().all(|p| (p.z - 1.0).abs() < 1e-12));
        let empty = DepthImage::new(4, 5, vec![0.0; 20], vec![false; 20]).unwrap();
        assert!(fuse_target_cloud(&[(&empty, &k, &RigidTransformSE3::identity())], 1).is_empty());
        assert_eq!(fuse_target_cloud(&[(&depth, &k, &RigidTransformSE3::identity())], 3).len(), 7);
    }
}
