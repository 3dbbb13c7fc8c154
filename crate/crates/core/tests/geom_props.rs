use proptest::prelude::*;

use zspose::geom::{
    geodesic_rotation_error, relative_gt_pose, Mat4, RigidTransformSE3, RigidTransformSim3, Rotation3, Vec3,
};

fn rotation() -> impl Strategy<Value = Rotation3> {
    (prop::array::uniform3(-1.0f64..1.0), 0.0f64..std::f64::consts::PI).prop_filter_map("zero axis", |(a, angle)| {
        let axis = Vec3::from(a);
        (axis.norm() > 1e-3).then(|| Rotation3::from_axis_angle(&axis, angle))
    })
}

fn vec3() -> impl Strategy<Value = Vec3> {
    prop::array::uniform3(-5.0f64..5.0).prop_map(Vec3::from)
}

fn sim3() -> impl Strategy<Value = RigidTransformSim3> {
    (rotation(), vec3(), 0.2f64..5.0).prop_map(|(r, t, s)| RigidTransformSim3::new(r, t, s).unwrap())
}

fn se3() -> impl Strategy<Value = RigidTransformSE3> {
    (rotation(), vec3()).prop_map(|(r, t)| RigidTransformSE3::new(r, t).unwrap())
}

fn max_abs(m: Mat4) -> f64 {
    m.abs().max()
}

fn rel(a: Mat4, b: Mat4) -> f64 {
    max_abs(a - b) / (1.0 + max_abs(b))
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 256, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn compose_is_associative(a in sim3(), b in sim3(), c in sim3()) {
        let lhs = a.compose(&b).compose(&c).to_homogeneous();
        let rhs = a.compose(&b.compose(&c)).to_homogeneous();
        prop_assert!(rel(lhs, rhs) < 1e-9);
    }

    #[test]
    fn compose_matches_matrix_product(a in sim3(), b in sim3()) {
        prop_assert!(rel(a.compose(&b).to_homogeneous(), a.to_homogeneous() * b.to_homogeneous()) < 1e-9);
    }

    #[test]
    fn inverse_cancels(a in sim3(), p in vec3()) {
        let id = RigidTransformSim3::identity().to_homogeneous();
        prop_assert!(max_abs(a.compose(&a.invert()).to_homogeneous() - id) < 1e-9);
        prop_assert!(max_abs(a.invert().compose(&a).to_homogeneous() - id) < 1e-9);
        prop_assert!((a.invert().apply(&a.apply(&p)) - p).norm() < 1e-9);
    }

    #[test]
    fn geodesic_symmetric_and_bounded(r in rotation(), q in rotation()) {
        let d = geodesic_rotation_error(&r, &q);
        prop_assert_eq!(d, geodesic_rotation_error(&q, &r));
        prop_assert!((0.0..=std::f64::consts::PI).contains(&d));
    }

    #[test]
    fn geodesic_right_invariant(r in rotation(), q in rotation(), s in rotation()) {
        let d1 = geodesic_rotation_error(&r, &q.compose(&r));
        let d2 = geodesic_rotation_error(&s, &q.compose(&s));
        prop_assert!((d1 - d2).abs() < 1e-9);
        prop_assert!((d1 - q.angle()).abs() < 1e-9);
    }

    #[test]
    fn geodesic_triangle_inequality(a in rotation(), b in rotation(), c in rotation()) {
        let ab = geodesic_rotation_error(&a, &b);
        let bc = geodesic_rotation_error(&b, &c);
        let ac = geodesic_rotation_error(&a, &c);
        prop_assert!(ac <= ab + bc + 1e-9);
    }

    #[test]
    fn relative_pose_matches_chain(t0a in sim3(), t0b in sim3(), ca in se3(), cb in se3()) {
        let got = relative_gt_pose(&t0a, &t0b, &ca, &cb).to_homogeneous();
        let want = cb.to_homogeneous()
            * t0b.to_homogeneous()
            * t0a.to_homogeneous().try_inverse().unwrap()
            * ca.to_homogeneous().try_inverse().unwrap();
        prop_assert!(rel(got, want) < 1e-9);
    }

    #[test]
    fn relative_pose_same_label_is_camera_chain(t0 in sim3(), ca in se3(), cb in se3()) {
        let got = relative_gt_pose(&t0, &t0, &ca, &cb).to_homogeneous();
        let want = cb.compose(&ca.invert()).to_homogeneous();
        prop_assert!(rel(got, want) < 1e-9);
    }

    #[test]
    fn relative_pose_self_pair_is_identity(t0 in sim3(), ca in se3()) {
        let got = relative_gt_pose(&t0, &t0, &ca, &ca).to_homogeneous();
        prop_assert!(max_abs(got - Mat4::identity()) < 1e-9);
    }
}

#[test]
fn compose_worked_example() {
    let a = RigidTransformSim3::new(Rotation3::rot_z(std::f64::consts::FRAC_PI_2), Vec3::new(1.0, 0.0, 0.0), 2.0)
        .unwrap();
    let b = RigidTransformSim3::new(Rotation3::identity(), Vec3::new(0.0, 1.0, 0.0), 1.0).unwrap();
    let p = a.compose(&b).apply(&Vec3::zeros());
    assert!((p - Vec3::new(-1.0, 0.0, 0.0)).norm() < 1e-9, "{p}");
}

#[test]
fn pure_translation_inverse() {
    let t = RigidTransformSim3::new(Rotation3::identity(), Vec3::new(0.0, 0.0, 1.0), 1.0).unwrap();
    assert_eq!(t.invert().translation, Vec3::new(0.0, 0.0, -1.0));
    assert_eq!(RigidTransformSim3::identity().invert(), RigidTransformSim3::identity());
}

#[test]
fn geodesic_examples() {
    let id = Rotation3::identity();
    assert_eq!(geodesic_rotation_error(&id, &id), 0.0);
    assert!((geodesic_rotation_error(&id, &Rotation3::rot_z(std::f64::consts::PI)) - std::f64::consts::PI).abs() < 1e-12);
    assert!((geodesic_rotation_error(&Rotation3::rot_z(0.1), &Rotation3::rot_z(0.3)) - 0.2).abs() < 1e-9);
}

#[test]
fn rejects_bad_rotations() {
    assert!(Rotation3::from_row_slice(&[1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, -1.0]).is_err());
    assert!(Rotation3::from_row_slice(&[1.1, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0]).is_err());
    assert!(RigidTransformSim3::new(Rotation3::identity(), Vec3::zeros(), 0.0).is_err());
    assert!(RigidTransformSim3::new(Rotation3::identity(), Vec3::new(f64::NAN, 0.0, 0.0), 1.0).is_err());
}
