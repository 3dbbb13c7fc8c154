//! Transform algebra, pinhole cameras and rotation metrics.
//!
//! Rotations are stored as 3×3 matrices. Everything here is an immutable
//! value type; composition follows function-composition order, so
//! `a.compose(&b)` applies `b` first.

use nalgebra::{Matrix3, Matrix4, UnitQuaternion, Vector3};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

pub type Vec3 = Vector3<f64>;
pub type Mat3 = Matrix3<f64>;
pub type Mat4 = Matrix4<f64>;

/// Tolerance for the orthonormality and determinant checks at construction.
pub const ROTATION_TOL: f64 = 1e-6;
/// Matrices loaded from files whose determinant is within this distance of 1
/// are projected back onto SO(3) instead of being rejected.
pub const REPAIR_TOL: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rotation3(Mat3);

impl Rotation3 {
    pub fn identity() -> Self {
        Self(Mat3::identity())
    }

    /// Checked constructor: `RᵀR = I` and `det R = 1`, both within [`ROTATION_TOL`].
    pub fn new(m: Mat3) -> Result<Self> {
        if m.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidRotation("non-finite entry".into()));
        }
        let ortho = (m.transpose() * m - Mat3::identity()).abs().max();
        if ortho > ROTATION_TOL {
            return Err(Error::InvalidRotation(format!(
                "not orthonormal (max |RᵀR - I| = {ortho:.3e})"
            )));
        }
        let det = m.determinant();
        if (det - 1.0).abs() > ROTATION_TOL {
            return Err(Error::InvalidRotation(format!("determinant {det:.6}")));
        }
        Ok(Self(m))
    }

    /// Row-major 3×3 entries.
    pub fn from_row_slice(rows: &[f64]) -> Result<Self> {
        if rows.len() != 9 {
            return Err(Error::InvalidRotation(format!("expected 9 entries, got {}", rows.len())));
        }
        Self::new(Mat3::from_row_slice(rows))
    }

    /// Accepts slightly drifted matrices (typically float32 round-off from
    /// structure-from-motion) and projects them onto SO(3) via SVD.
    pub fn from_matrix_repaired(m: Mat3) -> Result<Self> {
        if let Ok(r) = Self::new(m) {
            return Ok(r);
        }
        if m.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidRotation("non-finite entry".into()));
        }
        let det = m.determinant();
        let ortho = (m.transpose() * m - Mat3::identity()).abs().max();
        if (det - 1.0).abs() > REPAIR_TOL || ortho > REPAIR_TOL {
            return Err(Error::InvalidRotation(format!(
                "determinant {det:.6}, orthonormality error {ortho:.3e}: beyond repair tolerance"
            )));
        }
        let svd = m.svd(true, true);
        let (u, v_t) = (svd.u.unwrap(), svd.v_t.unwrap());
        let mut fix = Mat3::identity();
        fix[(2, 2)] = (u * v_t).determinant().signum();
        Self::new(u * fix * v_t)
    }

    pub fn from_axis_angle(axis: &Vec3, angle: f64) -> Self {
        let axis = nalgebra::Unit::new_normalize(*axis);
        Self(*nalgebra::Rotation3::from_axis_angle(&axis, angle).matrix())
    }

    pub fn rot_x(angle: f64) -> Self {
        Self::from_axis_angle(&Vec3::x(), angle)
    }

    pub fn rot_y(angle: f64) -> Self {
        Self::from_axis_angle(&Vec3::y(), angle)
    }

    pub fn rot_z(angle: f64) -> Self {
        Self::from_axis_angle(&Vec3::z(), angle)
    }

    /// Haar-uniform random rotation.
    pub fn random<R: Rng + ?Sized>(rng: &mut R) -> Self {
        let q = nalgebra::Quaternion::new(
            rng.sample::<f64, _>(StandardNormal),
            rng.sample::<f64, _>(StandardNormal),
            rng.sample::<f64, _>(StandardNormal),
            rng.sample::<f64, _>(StandardNormal),
        );
        let q = UnitQuaternion::from_quaternion(q);
        Self(*q.to_rotation_matrix().matrix())
    }

    pub fn matrix(&self) -> &Mat3 {
        &self.0
    }

    pub fn to_row_array(&self) -> [f64; 9] {
        let m = &self.0;
        [
            m[(0, 0)], m[(0, 1)], m[(0, 2)],
            m[(1, 0)], m[(1, 1)], m[(1, 2)],
            m[(2, 0)], m[(2, 1)], m[(2, 2)],
        ]
    }

    pub fn transpose(&self) -> Self {
        Self(self.0.transpose())
    }

    /// `self ∘ other`: applies `other` first.
    pub fn compose(&self, other: &Rotation3) -> Self {
        Self(self.0 * other.0)
    }

    pub fn apply(&self, p: &Vec3) -> Vec3 {
        self.0 * p
    }

    /// Rotation angle in radians, in `[0, π]`.
    pub fn angle(&self) -> f64 {
        geodesic_rotation_error(&Rotation3::identity(), self)
    }
}

/// Geodesic distance on SO(3), the rotation angle of `r1ᵀ r2` in `[0, π]`.
///
/// Evaluated as `atan2(‖skew‖, tr - 1)` rather than `arccos`, which loses
/// half the significant digits near 0 and π. Products are accumulated in a
/// fixed order so swapping the arguments gives a bit-identical result.
pub fn geodesic_rotation_error(r1: &Rotation3, r2: &Rotation3) -> f64 {
    let (a, b) = (&r1.0, &r2.0);
    let m = |i: usize, j: usize| a[(0, i)] * b[(0, j)] + a[(1, i)] * b[(1, j)] + a[(2, i)] * b[(2, j)];
    let trace = m(0, 0) + m(1, 1) + m(2, 2);
    let skew = Vec3::new(m(2, 1) - m(1, 2), m(0, 2) - m(2, 0), m(1, 0) - m(0, 1));
    skew.norm().atan2(trace - 1.0)
}

/// Rotation plus translation, used for camera extrinsics (world to view).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RigidTransformSE3 {
    pub rotation: Rotation3,
    pub translation: Vec3,
}

impl RigidTransformSE3 {
    pub fn identity() -> Self {
        Self { rotation: Rotation3::identity(), translation: Vec3::zeros() }
    }

    pub fn new(rotation: Rotation3, translation: Vec3) -> Result<Self> {
        if translation.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidTransform("non-finite translation".into()));
        }
        Ok(Self { rotation, translation })
    }

    /// Parses a row-major 4×4 homogeneous matrix, repairing small rotation
    /// drift per [`Rotation3::from_matrix_repaired`].
    pub fn from_homogeneous_rows(rows: &[f64]) -> Result<Self> {
        if rows.len() != 16 {
            return Err(Error::InvalidTransform(format!("expected 16 entries, got {}", rows.len())));
        }
        let m = Mat4::from_row_slice(rows);
        let bottom = [m[(3, 0)], m[(3, 1)], m[(3, 2)], m[(3, 3)]];
        if bottom != [0.0, 0.0, 0.0, 1.0] {
            return Err(Error::InvalidTransform(format!("bottom row {bottom:?} is not [0, 0, 0, 1]")));
        }
        let rotation = Rotation3::from_matrix_repaired(m.fixed_view::<3, 3>(0, 0).into_owned())?;
        Self::new(rotation, m.fixed_view::<3, 1>(0, 3).into_owned())
    }

    pub fn to_homogeneous(&self) -> Mat4 {
        self.to_sim3().to_homogeneous()
    }

    pub fn to_homogeneous_rows(&self) -> [f64; 16] {
        let m = self.to_homogeneous();
        let mut out = [0.0; 16];
        for r in 0..4 {
            for c in 0..4 {
                out[r * 4 + c] = m[(r, c)];
            }
        }
        out
    }

    pub fn to_sim3(&self) -> RigidTransformSim3 {
        RigidTransformSim3 { rotation: self.rotation, translation: self.translation, scale: 1.0 }
    }

    pub fn apply(&self, p: &Vec3) -> Vec3 {
        self.rotation.apply(p) + self.translation
    }

    pub fn compose(&self, other: &RigidTransformSE3) -> Self {
        Self {
            rotation: self.rotation.compose(&other.rotation),
            translation: self.rotation.apply(&other.translation) + self.translation,
        }
    }

    pub fn invert(&self) -> Self {
        let rt = self.rotation.transpose();
        Self { rotation: rt, translation: -rt.apply(&self.translation) }
    }
}

/// Similarity transform `x ↦ scale · R x + t`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RigidTransformSim3 {
    pub rotation: Rotation3,
    pub translation: Vec3,
    pub scale: f64,
}

impl Default for RigidTransformSim3 {
    fn default() -> Self {
        Self::identity()
    }
}

impl RigidTransformSim3 {
    pub fn identity() -> Self {
        Self { rotation: Rotation3::identity(), translation: Vec3::zeros(), scale: 1.0 }
    }

    pub fn new(rotation: Rotation3, translation: Vec3, scale: f64) -> Result<Self> {
        if !(scale.is_finite() && scale > 0.0) {
            return Err(Error::InvalidTransform(format!("scale must be positive and finite, got {scale}")));
        }
        if translation.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidTransform("non-finite translation".into()));
        }
        Ok(Self { rotation, translation, scale })
    }

    pub fn apply(&self, p: &Vec3) -> Vec3 {
        self.scale * self.rotation.apply(p) + self.translation
    }

    /// `self ∘ other`: `other` is applied first.
    pub fn compose(&self, other: &RigidTransformSim3) -> Self {
        Self {
            rotation: self.rotation.compose(&other.rotation),
            translation: self.scale * self.rotation.apply(&other.translation) + self.translation,
            scale: self.scale * other.scale,
        }
    }

    pub fn invert(&self) -> Self {
        let rt = self.rotation.transpose();
        let inv_scale = 1.0 / self.scale;
        Self { rotation: rt, translation: -inv_scale * rt.apply(&self.translation), scale: inv_scale }
    }

    pub fn to_homogeneous(&self) -> Mat4 {
        let mut m = Mat4::identity();
        m.fixed_view_mut::<3, 3>(0, 0).copy_from(&(self.scale * self.rotation.matrix()));
        m.fixed_view_mut::<3, 1>(0, 3).copy_from(&self.translation);
        m
    }
}

impl From<RigidTransformSE3> for RigidTransformSim3 {
    fn from(t: RigidTransformSE3) -> Self {
        t.to_sim3()
    }
}

/// Ground-truth relative pose between frame `i` of sequence `a` and frame
/// `j` of sequence `b`: `cam_bj ∘ t0b ∘ t0a⁻¹ ∘ cam_ai⁻¹`.
///
/// `t0a`/`t0b` map the category reference instance into each sequence's
/// world frame; `cam_*` are world-to-view extrinsics. The result maps
/// camera-`ai` coordinates to camera-`bj` coordinates.
pub fn relative_gt_pose(
    t0a: &RigidTransformSim3,
    t0b: &RigidTransformSim3,
    cam_ai: &RigidTransformSE3,
    cam_bj: &RigidTransformSE3,
) -> RigidTransformSim3 {
    cam_bj
        .to_sim3()
        .compose(t0b)
        .compose(&t0a.invert())
        .compose(&cam_ai.invert().to_sim3())
}

/// Pinhole intrinsics in pixels. Pixel `(i, j)` covers `[i, i+1) × [j, j+1)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CameraIntrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: u32,
    pub height: u32,
}

impl CameraIntrinsics {
    pub fn new(fx: f64, fy: f64, cx: f64, cy: f64, width: u32, height: u32) -> Result<Self> {
        let ok = fx.is_finite()
            && fy.is_finite()
            && fx > 0.0
            && fy > 0.0
            && (0.0..width as f64).contains(&cx)
            && (0.0..height as f64).contains(&cy);
        if !ok {
            return Err(Error::InvalidIntrinsics(format!(
                "fx={fx} fy={fy} cx={cx} cy={cy} size={width}x{height}"
            )));
        }
        Ok(Self { fx, fy, cx, cy, width, height })
    }

    /// Camera-frame point to continuous pixel coordinates.
    pub fn project(&self, p: &Vec3) -> (f64, f64) {
        (self.fx * p.x / p.z + self.cx, self.fy * p.y / p.z + self.cy)
    }
}
