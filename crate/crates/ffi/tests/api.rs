use std::ffi::{CStr, CString};
use std::ptr::{null, null_mut};

use zspose::geom::{relative_gt_pose, RigidTransformSE3, RigidTransformSim3, Rotation3, Vec3};
use zspose::io::{load_sequence, read_feature_file_raw};
use zspose::pipeline::{estimate_pose, PipelineConfig};
use zspose::solver::{ransac_pose, umeyama, PointPair3D, RansacConfig};
use zspose::synth::{gen_benchmark, write_dataset, NoiseProfile};
use zspose_ffi::*;

fn last_error() -> Option<String> {
    let p = zs_last_error();
    (!p.is_null()).then(|| unsafe { CStr::from_ptr(p) }.to_str().unwrap().to_owned())
}

fn zs(t: &RigidTransformSim3) -> ZsSim3 {
    ZsSim3 { rotation: t.rotation.to_row_array(), translation: [t.translation.x, t.translation.y, t.translation.z], scale: t.scale }
}

fn zs_se3(t: &RigidTransformSE3) -> ZsSe3 {
    ZsSe3 { rotation: t.rotation.to_row_array(), translation: [t.translation.x, t.translation.y, t.translation.z] }
}

fn cstr(s: &str) -> CString {
    CString::new(s).unwrap()
}

fn sample_pairs(truth: &RigidTransformSim3, n: usize, outliers: usize) -> Vec<PointPair3D> {
    (0..n)
        .map(|i| {
            let f = i as f64;
            let src = Vec3::new((f * 0.7).sin(), (f * 1.3).cos(), 3.0 + (f * 0.37).sin());
            let mut dst = truth.apply(&src);
            if i < outliers {
                dst += Vec3::new(1.5, -2.0, 0.5);
            }
            PointPair3D { src, dst }
        })
        .collect()
}

fn ffi_pairs(p: &[PointPair3D]) -> Vec<ZsPointPair> {
    p.iter().map(|q| ZsPointPair { src: q.src.into(), dst: q.dst.into() }).collect()
}

#[test]
fn version_is_crate_version() {
    let v = unsafe { CStr::from_ptr(zs_version()) };
    assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
}

#[test]
fn compose_worked_example() {
    let a = zs(&RigidTransformSim3::new(Rotation3::rot_z(std::f64::consts::FRAC_PI_2), Vec3::new(1.0, 0.0, 0.0), 2.0).unwrap());
    let b = zs(&RigidTransformSim3::new(Rotation3::identity(), Vec3::new(0.0, 1.0, 0.0), 1.0).unwrap());
    let mut ab = zs_sim3_identity();
    assert_eq!(unsafe { zs_sim3_compose(&a, &b, &mut ab) }, ZsStatus::Ok);
    let mut p = [f64::NAN; 3];
    assert_eq!(unsafe { zs_sim3_apply(&ab, [0.0; 3].as_ptr(), p.as_mut_ptr()) }, ZsStatus::Ok);
    for (got, want) in p.iter().zip([-1.0, 0.0, 0.0]) {
        assert!((got - want).abs() < 1e-9, "{p:?}");
    }

    let mut inv = zs_sim3_identity();
    let mut round = zs_sim3_identity();
    unsafe {
        assert_eq!(zs_sim3_invert(&ab, &mut inv), ZsStatus::Ok);
        assert_eq!(zs_sim3_compose(&ab, &inv, &mut round), ZsStatus::Ok);
    }
    let id = zs_sim3_identity();
    assert!(round.rotation.iter().zip(id.rotation).all(|(a, b)| (a - b).abs() < 1e-12));
    assert!(round.translation.iter().all(|v| v.abs() < 1e-12));
    assert!((round.scale - 1.0).abs() < 1e-12);
}

#[test]
fn geodesic_and_bad_rotation() {
    let a = Rotation3::rot_x(0.3).to_row_array();
    let id = Rotation3::identity().to_row_array();
    let mut angle = f64::NAN;
    assert_eq!(unsafe { zs_geodesic_error(a.as_ptr(), id.as_ptr(), &mut angle) }, ZsStatus::Ok);
    assert!((angle - 0.3).abs() < 1e-12);
    assert_eq!(last_error(), None);

    let mut scaled = id;
    scaled[0] = 2.0;
    assert_eq!(unsafe { zs_geodesic_error(scaled.as_ptr(), id.as_ptr(), &mut angle) }, ZsStatus::InvalidGeometry);
    assert!(last_error().unwrap().contains("rotation"));

    let bad = ZsSim3 { scale: -1.0, ..zs_sim3_identity() };
    let mut out = zs_sim3_identity();
    assert_eq!(unsafe { zs_sim3_invert(&bad, &mut out) }, ZsStatus::InvalidGeometry);
    assert_eq!(unsafe { zs_geodesic_error(a.as_ptr(), a.as_ptr(), &mut angle) }, ZsStatus::Ok);
    assert_eq!(last_error(), None);
}

#[test]
fn null_pointers_are_reported() {
    let id = zs_sim3_identity();
    unsafe {
        assert_eq!(zs_sim3_compose(&id, null(), null_mut()), ZsStatus::NullPointer);
        assert_eq!(zs_sim3_invert(&id, null_mut()), ZsStatus::NullPointer);
        assert_eq!(zs_umeyama(null(), 5, null_mut()), ZsStatus::NullPointer);
        assert_eq!(zs_frame_load(null(), null(), null_mut()), ZsStatus::NullPointer);
        assert_eq!(zs_estimate(null(), null(), null(), null_mut()), ZsStatus::NullPointer);
        assert_eq!(zs_config_set_k(null_mut(), 10), ZsStatus::NullPointer);
        zs_frame_free(null_mut());
        zs_sequence_free(null_mut());
        zs_config_free(null_mut());
    }
    assert!(last_error().unwrap().contains("null"));
}

#[test]
fn errors_are_thread_local() {
    let id = zs_sim3_identity();
    assert_eq!(unsafe { zs_sim3_invert(&id, null_mut()) }, ZsStatus::NullPointer);
    assert!(last_error().is_some());
    std::thread::spawn(|| assert_eq!(last_error(), None)).join().unwrap();
    assert!(last_error().is_some());
}

#[test]
fn umeyama_matches_core() {
    let truth = RigidTransformSim3::new(Rotation3::from_axis_angle(&Vec3::new(1.0, 2.0, -0.5), 0.8), Vec3::new(0.3, -0.2, 1.0), 1.7).unwrap();
    let pairs = sample_pairs(&truth, 12, 0);
    let mut out = zs_sim3_identity();
    assert_eq!(unsafe { zs_umeyama(ffi_pairs(&pairs).as_ptr(), pairs.len(), &mut out) }, ZsStatus::Ok);
    assert_eq!(out, zs(&umeyama(&pairs).unwrap()));
    assert!((out.scale - 1.7).abs() < 1e-9);

    let two = ffi_pairs(&pairs[..2]);
    assert_eq!(unsafe { zs_umeyama(two.as_ptr(), 2, &mut out) }, ZsStatus::Degenerate);
    let behind = [ZsPointPair { src: [0.0, 0.0, -1.0], dst: [0.0, 0.0, 1.0] }];
    assert_eq!(unsafe { zs_umeyama(behind.as_ptr(), 1, &mut out) }, ZsStatus::InvalidArgument);
}

#[test]
fn ransac_matches_core() {
    let truth = RigidTransformSim3::new(Rotation3::rot_y(0.4), Vec3::new(0.1, 0.0, 0.2), 0.9).unwrap();
    let pairs = sample_pairs(&truth, 40, 10);
    let mut cfg = zs_ransac_config_default();
    assert_eq!(cfg.max_iters, RansacConfig::default().max_iters);
    cfg.max_iters = 200;
    cfg.seed = 9;
    let mut out = ZsPoseEstimate { transform: zs_sim3_identity(), inlier_count: 0, rms_residual: f64::NAN };
    let mut inliers = vec![usize::MAX; pairs.len()];
    let status = unsafe { zs_ransac(ffi_pairs(&pairs).as_ptr(), pairs.len(), &cfg, &mut out, inliers.as_mut_ptr()) };
    assert_eq!(status, ZsStatus::Ok);

    let core = RansacConfig { max_iters: 200, seed: 9, ..RansacConfig::default() };
    let want = ransac_pose(&pairs, &core).unwrap();
    assert_eq!(out.transform, zs(&want.transform));
    assert_eq!(out.inlier_count, 30);
    assert_eq!(&inliers[..out.inlier_count], &want.inlier_indices[..]);
    assert!(inliers[out.inlier_count..].iter().all(|&i| i == usize::MAX));

    cfg.inlier_thresh = 0.0;
    let status = unsafe { zs_ransac(ffi_pairs(&pairs).as_ptr(), pairs.len(), &cfg, &mut out, null_mut()) };
    assert_eq!(status, ZsStatus::InvalidArgument);
}

#[test]
fn relative_pose_matches_core() {
    let t0a = RigidTransformSim3::new(Rotation3::rot_z(0.5), Vec3::new(1.0, 0.0, 0.0), 1.2).unwrap();
    let t0b = RigidTransformSim3::new(Rotation3::rot_x(-0.2), Vec3::new(0.0, 2.0, 0.0), 0.7).unwrap();
    let ca = RigidTransformSE3::new(Rotation3::rot_y(0.3), Vec3::new(0.0, 0.0, 4.0)).unwrap();
    let cb = RigidTransformSE3::new(Rotation3::rot_y(-1.1), Vec3::new(0.5, 0.0, 3.0)).unwrap();
    let mut out = zs_sim3_identity();
    let status = unsafe { zs_relative_gt_pose(&zs(&t0a), &zs(&t0b), &zs_se3(&ca), &zs_se3(&cb), &mut out) };
    assert_eq!(status, ZsStatus::Ok);
    assert_eq!(out, zs(&relative_gt_pose(&t0a, &t0b, &ca, &cb)));
}

#[test]
fn estimate_matches_core_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let data = gen_benchmark(1, 1, 4, NoiseProfile::default(), 5).unwrap();
    write_dataset(&data, dir.path()).unwrap();
    let ref_manifest = dir.path().join("cat00/p000_ref/manifest.json");
    let tgt_manifest = dir.path().join("cat00/p000_tgt/manifest.json");
    let (rm, tm) = (cstr(ref_manifest.to_str().unwrap()), cstr(tgt_manifest.to_str().unwrap()));

    let mut frame = null_mut();
    let mut seq = null_mut();
    unsafe {
        assert_eq!(zs_frame_load(rm.as_ptr(), cstr("ref").as_ptr(), &mut frame), ZsStatus::Ok);
        assert_eq!(zs_sequence_load(tm.as_ptr(), &mut seq), ZsStatus::Ok);
    }
    let (mut h, mut w, mut d, mut n) = (0, 0, 0, 0);
    unsafe {
        assert_eq!(zs_frame_grid_shape(frame, &mut h, &mut w, &mut d), ZsStatus::Ok);
        assert_eq!(zs_sequence_frame_count(seq, &mut n), ZsStatus::Ok);
    }
    assert_eq!((h, w, d, n), (16, 16, 32, 4));

    let cfg = zs_config_new();
    unsafe {
        assert_eq!(zs_config_set_k(cfg, 30), ZsStatus::Ok);
        assert_eq!(zs_config_set_seed(cfg, 4), ZsStatus::Ok);
        assert_eq!(zs_config_set_ransac(cfg, 300, 0.2), ZsStatus::Ok);
        assert_eq!(zs_config_set_matcher(cfg, cstr("mutual-nn").as_ptr()), ZsStatus::Ok);
        assert_eq!(zs_config_set_matcher(cfg, cstr("cyclical").as_ptr()), ZsStatus::Ok);
        assert_eq!(zs_config_set_matcher(cfg, cstr("nope").as_ptr()), ZsStatus::InvalidArgument);
        assert_eq!(zs_config_set_k(cfg, 2), ZsStatus::InvalidArgument);
        assert_eq!(zs_config_set_min_inlier_fraction(cfg, 1.5), ZsStatus::InvalidArgument);
    }
    let mut out = ZsEstimate { transform: zs_sim3_identity(), best_view: 99, inlier_count: 0, lifted_pairs: 0, fallback: 9 };
    assert_eq!(unsafe { zs_estimate(frame, seq, cfg, &mut out) }, ZsStatus::Ok);

    let reference = load_sequence(&ref_manifest).unwrap().frame("ref").unwrap();
    let target = load_sequence(&tgt_manifest).unwrap();
    let views: Vec<_> = target.frame_ids().map(|id| target.frame(id).unwrap()).collect();
    let mut core = PipelineConfig { k: 30, ..PipelineConfig::default() };
    core.ransac.seed = 4;
    core.ransac.max_iters = 300;
    let want = estimate_pose(&reference, &views, &core).unwrap();
    assert_eq!(out.transform, zs(&want.estimate.transform));
    assert_eq!((out.best_view, out.inlier_count, out.lifted_pairs), (want.best_view_index, want.estimate.inlier_count, want.lifted_pairs));
    assert_eq!(out.fallback, 0);

    let mut ext = ZsSe3 { rotation: [0.0; 9], translation: [0.0; 3] };
    unsafe {
        assert_eq!(zs_sequence_extrinsics(seq, 1, &mut ext), ZsStatus::Ok);
        assert_eq!(zs_sequence_extrinsics(seq, 4, &mut ext), ZsStatus::InvalidArgument);
    }
    assert_eq!(ext, zs_se3(&views[1].extrinsics));

    unsafe {
        assert_eq!(zs_config_set_best_view_only(cfg, true), ZsStatus::Ok);
        assert_eq!(zs_estimate(frame, seq, cfg, &mut out), ZsStatus::Ok);
    }
    assert_eq!((out.fallback, out.inlier_count, out.lifted_pairs), (0, 0, 0));
    assert_eq!(out.transform, zs_sim3_identity());

    unsafe {
        zs_config_free(cfg);
        zs_frame_free(frame);
        zs_sequence_free(seq);
    }
}

#[test]
fn load_errors() {
    let dir = tempfile::tempdir().unwrap();
    let data = gen_benchmark(1, 1, 2, NoiseProfile::zero(), 1).unwrap();
    write_dataset(&data, dir.path()).unwrap();
    let manifest = cstr(dir.path().join("cat00/p000_ref/manifest.json").to_str().unwrap());
    let missing = cstr(dir.path().join("nope.json").to_str().unwrap());
    let mut frame = null_mut();
    let mut seq = null_mut();
    unsafe {
        assert_eq!(zs_frame_load(manifest.as_ptr(), cstr("v7").as_ptr(), &mut frame), ZsStatus::BadManifest);
        assert_eq!(zs_frame_load(missing.as_ptr(), cstr("ref").as_ptr(), &mut frame), ZsStatus::Io);
        assert_eq!(zs_sequence_load(missing.as_ptr(), &mut seq), ZsStatus::Io);
    }
    assert!(frame.is_null() && seq.is_null());

    std::fs::write(dir.path().join("cat00/p000_ref/ref.zpf"), b"ZPF1\x01").unwrap();
    assert_eq!(unsafe { zs_frame_load(manifest.as_ptr(), cstr("ref").as_ptr(), &mut frame) }, ZsStatus::BadFile);
}

#[test]
fn written_features_pass_the_checker() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("grid.zpf");
    let p = cstr(path.to_str().unwrap());
    let (h, w, d) = (3usize, 4usize, 5usize);
    let data: Vec<f32> = (0..h * w * d).map(|i| (i as f32 * 0.37).sin()).collect();
    let fg: Vec<u8> = (0..h * w).map(|i| (i % 3 != 0) as u8).collect();
    let sal: Vec<f32> = (0..h * w).map(|i| i as f32 * 0.1).collect();
    let status = unsafe { zs_write_features(p.as_ptr(), h, w, d, data.as_ptr(), fg.as_ptr(), sal.as_ptr()) };
    assert_eq!(status, ZsStatus::Ok);

    let grid = read_feature_file_raw(&path).unwrap();
    assert_eq!(grid.data(), &data[..]);
    assert_eq!(grid.saliency(), &sal[..]);
    assert_eq!(grid.foreground_count(), 8);

    let mut buf = [0 as std::ffi::c_char; 128];
    assert_eq!(unsafe { zs_check_file(p.as_ptr(), buf.as_mut_ptr(), buf.len()) }, ZsStatus::Ok);
    let summary = unsafe { CStr::from_ptr(buf.as_ptr()) }.to_str().unwrap();
    assert_eq!(summary, "features 3x4x5, 8 foreground cells");
    assert_eq!(unsafe { zs_check_file(p.as_ptr(), null_mut(), 0) }, ZsStatus::Ok);

    let mut small = [0 as std::ffi::c_char; 9];
    assert_eq!(unsafe { zs_check_file(p.as_ptr(), small.as_mut_ptr(), small.len()) }, ZsStatus::BufferTooSmall);
    assert_eq!(unsafe { CStr::from_ptr(small.as_ptr()) }.to_str().unwrap(), "features");

    let status = unsafe { zs_write_features(p.as_ptr(), h, w, d, data.as_ptr(), null(), null()) };
    assert_eq!(status, ZsStatus::Ok);
    assert_eq!(read_feature_file_raw(&path).unwrap().foreground_count(), h * w);

    let neg = vec![-1.0f32; h * w];
    let status = unsafe { zs_write_features(p.as_ptr(), h, w, d, data.as_ptr(), null(), neg.as_ptr()) };
    assert_eq!(status, ZsStatus::InvalidArgument);
    assert_eq!(unsafe { zs_write_features(p.as_ptr(), 0, w, d, data.as_ptr(), null(), null()) }, ZsStatus::InvalidArgument);

    std::fs::write(&path, b"nonsense").unwrap();
    assert_eq!(unsafe { zs_check_file(p.as_ptr(), null_mut(), 0) }, ZsStatus::BadFile);
    let other = cstr(dir.path().join("x.txt").to_str().unwrap());
    assert_eq!(unsafe { zs_check_file(other.as_ptr(), null_mut(), 0) }, ZsStatus::InvalidArgument);
}
