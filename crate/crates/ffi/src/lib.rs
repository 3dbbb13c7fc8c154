//! C interface to the zspose estimator.
//!
//! Every function returns a [`ZsStatus`]. On failure the thread-local
//! message from [`zs_last_error`] describes what went wrong. Loaded frames,
//! target sequences and pipeline settings are opaque handles owned by the
//! caller and released with the matching `*_free` function.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;

use zspose::features::FeatureGrid;
use zspose::geom::{geodesic_rotation_error, relative_gt_pose, RigidTransformSE3, RigidTransformSim3, Rotation3, Vec3};
use zspose::io::{check_file, load_sequence, write_feature_file, FrameBundle, Sequence};
use zspose::pipeline::{estimate_pose, Fallback, Matcher, PipelineConfig};
use zspose::solver::{ransac_pose, umeyama, PointPair3D, RansacConfig};
use zspose::Error;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ZsStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    InvalidGeometry = 3,
    Degenerate = 4,
    NoConsensus = 5,
    TooFewPairs = 6,
    Io = 7,
    BadFile = 8,
    BadManifest = 9,
    BufferTooSmall = 10,
    Internal = 11,
}

/// Similarity `x ↦ scale · R x + t`, rotation row-major.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ZsSim3 {
    pub rotation: [f64; 9],
    pub translation: [f64; 3],
    pub scale: f64,
}

/// Rigid transform, rotation row-major.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ZsSe3 {
    pub rotation: [f64; 9],
    pub translation: [f64; 3],
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ZsPointPair {
    pub src: [f64; 3],
    pub dst: [f64; 3],
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ZsRansacConfig {
    pub max_iters: usize,
    pub inlier_thresh: f64,
    pub sample_size: usize,
    pub seed: u64,
    pub min_pairs: usize,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ZsPoseEstimate {
    pub transform: ZsSim3,
    pub inlier_count: usize,
    pub rms_residual: f64,
}

/// Pipeline output. `transform` maps reference-camera coordinates to the
/// coordinates of target view `best_view`. `fallback` is 0 when RANSAC
/// produced the transform and 1 when only the best view was used.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ZsEstimate {
    pub transform: ZsSim3,
    pub best_view: usize,
    pub inlier_count: usize,
    pub lifted_pairs: usize,
    pub fallback: u32,
}

/// One frame loaded from a manifest: features, depth and camera.
pub struct ZsFrame(FrameBundle);

/// A target sequence with every frame loaded, in manifest order.
pub struct ZsSequence {
    meta: Sequence,
    frames: Vec<FrameBundle>,
}

/// Pipeline settings, initialised to the defaults.
pub struct ZsConfig(PipelineConfig);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

struct Failure(ZsStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let status = match &e {
            Error::InvalidArgument(_) | Error::DimMismatch(..) => ZsStatus::InvalidArgument,
            Error::InvalidRotation(_) | Error::InvalidTransform(_) | Error::InvalidIntrinsics(_) => {
                ZsStatus::InvalidGeometry
            }
            Error::DegenerateConfiguration(_) => ZsStatus::Degenerate,
            Error::NoConsensus | Error::AllViewsUnusable => ZsStatus::NoConsensus,
            Error::TooFewPairs { .. } => ZsStatus::TooFewPairs,
            Error::Io(_) | Error::MissingFile(_) => ZsStatus::Io,
            Error::BadMagic { .. }
            | Error::TruncatedFile { .. }
            | Error::VersionUnsupported(_)
            | Error::CorruptFile(_)
            | Error::InvalidDepth(_)
            | Error::NoValidDepth => ZsStatus::BadFile,
            Error::SchemaError { .. } | Error::Json(_) | Error::InvalidFrame(_) | Error::MissingLabel(_) => {
                ZsStatus::BadManifest
            }
            _ => ZsStatus::Internal,
        };
        Failure(status, e.to_string())
    }
}

type FfiResult<T = ()> = Result<T, Failure>;

fn null(what: &str) -> Failure {
    Failure(ZsStatus::NullPointer, format!("{what} is null"))
}

fn invalid(msg: impl Into<String>) -> Failure {
    Failure(ZsStatus::InvalidArgument, msg.into())
}

fn guard(f: impl FnOnce() -> FfiResult) -> ZsStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            LAST_ERROR.with(|e| *e.borrow_mut() = None);
            ZsStatus::Ok
        }
        Ok(Err(Failure(status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic".into());
            ZsStatus::Internal
        }
    }
}

unsafe fn deref<'a, T>(p: *const T, what: &str) -> FfiResult<&'a T> {
    p.as_ref().ok_or_else(|| null(what))
}

unsafe fn write<T>(p: *mut T, value: T, what: &str) -> FfiResult {
    if p.is_null() {
        return Err(null(what));
    }
    p.write(value);
    Ok(())
}

unsafe fn slice<'a, T>(p: *const T, n: usize, what: &str) -> FfiResult<&'a [T]> {
    if n == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts(p, n))
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> FfiResult<&'a str> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p).to_str().map_err(|_| invalid(format!("{what} is not UTF-8")))
}

fn vec3(a: &[f64; 3]) -> Vec3 {
    Vec3::new(a[0], a[1], a[2])
}

fn arr3(v: &Vec3) -> [f64; 3] {
    [v.x, v.y, v.z]
}

fn to_sim3(t: &ZsSim3) -> FfiResult<RigidTransformSim3> {
    Ok(RigidTransformSim3::new(Rotation3::from_row_slice(&t.rotation)?, vec3(&t.translation), t.scale)?)
}

fn from_sim3(t: &RigidTransformSim3) -> ZsSim3 {
    ZsSim3 { rotation: t.rotation.to_row_array(), translation: arr3(&t.translation), scale: t.scale }
}

fn to_se3(t: &ZsSe3) -> FfiResult<RigidTransformSE3> {
    Ok(RigidTransformSE3::new(Rotation3::from_row_slice(&t.rotation)?, vec3(&t.translation))?)
}

fn pairs_of(p: &[ZsPointPair]) -> FfiResult<Vec<PointPair3D>> {
    p.iter().map(|q| PointPair3D::new(vec3(&q.src), vec3(&q.dst)).map_err(Failure::from)).collect()
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn zs_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Message for the last failed call on this thread, or NULL after a
/// successful call. Valid until the next call on the same thread.
#[no_mangle]
pub extern "C" fn zs_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(std::ptr::null(), |c| c.as_ptr()))
}

#[no_mangle]
pub extern "C" fn zs_sim3_identity() -> ZsSim3 {
    from_sim3(&RigidTransformSim3::identity())
}

/// `out = a ∘ b` (`b` applied first).
///
/// # Safety
/// Pointers must be valid or null.
#[no_mangle]
pub unsafe extern "C" fn zs_sim3_compose(a: *const ZsSim3, b: *const ZsSim3, out: *mut ZsSim3) -> ZsStatus {
    guard(|| {
        let (a, b) = (to_sim3(deref(a, "a")?)?, to_sim3(deref(b, "b")?)?);
        write(out, from_sim3(&a.compose(&b)), "out")
    })
}

/// # Safety
/// Pointers must be valid or null.
#[no_mangle]
pub unsafe extern "C" fn zs_sim3_invert(a: *const ZsSim3, out: *mut ZsSim3) -> ZsStatus {
    guard(|| write(out, from_sim3(&to_sim3(deref(a, "a")?)?.invert()), "out"))
}

/// # Safety
/// `point` and `out` must point to three doubles, `t` to a transform.
#[no_mangle]
pub unsafe extern "C" fn zs_sim3_apply(t: *const ZsSim3, point: *const f64, out: *mut f64) -> ZsStatus {
    guard(|| {
        let t = to_sim3(deref(t, "t")?)?;
        let p: &[f64; 3] = slice(point, 3, "point")?.try_into().unwrap();
        let q = arr3(&t.apply(&vec3(p)));
        if out.is_null() {
            return Err(null("out"));
        }
        std::ptr::copy_nonoverlapping(q.as_ptr(), out, 3);
        Ok(())
    })
}

/// Angle in radians, in `[0, π]`, between two row-major rotation matrices.
///
/// # Safety
/// `r1` and `r2` must point to nine doubles.
#[no_mangle]
pub unsafe extern "C" fn zs_geodesic_error(r1: *const f64, r2: *const f64, out_rad: *mut f64) -> ZsStatus {
    guard(|| {
        let a = Rotation3::from_row_slice(slice(r1, 9, "r1")?)?;
        let b = Rotation3::from_row_slice(slice(r2, 9, "r2")?)?;
        write(out_rad, geodesic_rotation_error(&a, &b), "out_rad")
    })
}

/// Ground-truth transform from camera `cam_ai` of sequence a to camera
/// `cam_bj` of sequence b, given each sequence's category alignment.
///
/// # Safety
/// Pointers must be valid or null.
#[no_mangle]
pub unsafe extern "C" fn zs_relative_gt_pose(
    t0a: *const ZsSim3,
    t0b: *const ZsSim3,
    cam_ai: *const ZsSe3,
    cam_bj: *const ZsSe3,
    out: *mut ZsSim3,
) -> ZsStatus {
    guard(|| {
        let t = relative_gt_pose(
            &to_sim3(deref(t0a, "t0a")?)?,
            &to_sim3(deref(t0b, "t0b")?)?,
            &to_se3(deref(cam_ai, "cam_ai")?)?,
            &to_se3(deref(cam_bj, "cam_bj")?)?,
        );
        write(out, from_sim3(&t), "out")
    })
}

/// Least-squares similarity mapping every `src` onto its `dst`.
///
/// # Safety
/// `pairs` must point to `n` elements.
#[no_mangle]
pub unsafe extern "C" fn zs_umeyama(pairs: *const ZsPointPair, n: usize, out: *mut ZsSim3) -> ZsStatus {
    guard(|| {
        let t = umeyama(&pairs_of(slice(pairs, n, "pairs")?)?)?;
        write(out, from_sim3(&t), "out")
    })
}

#[no_mangle]
pub extern "C" fn zs_ransac_config_default() -> ZsRansacConfig {
    let d = RansacConfig::default();
    ZsRansacConfig {
        max_iters: d.max_iters,
        inlier_thresh: d.inlier_thresh,
        sample_size: d.sample_size,
        seed: d.seed,
        min_pairs: d.min_pairs,
    }
}

/// Robust similarity fit. When `inliers` is non-null it must hold `n`
/// entries; the first `out->inlier_count` receive the inlier indices in
/// ascending order.
///
/// # Safety
/// `pairs` must point to `n` elements; other pointers valid or null.
#[no_mangle]
pub unsafe extern "C" fn zs_ransac(
    pairs: *const ZsPointPair,
    n: usize,
    cfg: *const ZsRansacConfig,
    out: *mut ZsPoseEstimate,
    inliers: *mut usize,
) -> ZsStatus {
    guard(|| {
        let c = deref(cfg, "cfg")?;
        let cfg = RansacConfig {
            max_iters: c.max_iters,
            inlier_thresh: c.inlier_thresh,
            sample_size: c.sample_size,
            seed: c.seed,
            min_pairs: c.min_pairs,
        };
        let est = ransac_pose(&pairs_of(slice(pairs, n, "pairs")?)?, &cfg)?;
        let summary = ZsPoseEstimate {
            transform: from_sim3(&est.transform),
            inlier_count: est.inlier_count,
            rms_residual: est.rms_residual,
        };
        write(out, summary, "out")?;
        if !inliers.is_null() {
            std::ptr::copy_nonoverlapping(est.inlier_indices.as_ptr(), inliers, est.inlier_indices.len());
        }
        Ok(())
    })
}

/// Loads frame `frame_id` of the sequence described by `manifest`.
///
/// # Safety
/// Strings must be NUL-terminated; `out` valid or null.
#[no_mangle]
pub unsafe extern "C" fn zs_frame_load(manifest: *const c_char, frame_id: *const c_char, out: *mut *mut ZsFrame) -> ZsStatus {
    guard(|| {
        let seq = load_sequence(Path::new(str_arg(manifest, "manifest")?))?;
        let frame = seq.frame(str_arg(frame_id, "frame_id")?)?;
        write(out, Box::into_raw(Box::new(ZsFrame(frame))), "out")
    })
}

/// # Safety
/// `frame` must come from [`zs_frame_load`] or be null.
#[no_mangle]
pub unsafe extern "C" fn zs_frame_free(frame: *mut ZsFrame) {
    if !frame.is_null() {
        drop(Box::from_raw(frame));
    }
}

/// Feature grid shape of a loaded frame.
///
/// # Safety
/// Pointers must be valid or null.
#[no_mangle]
pub unsafe extern "C" fn zs_frame_grid_shape(
    frame: *const ZsFrame,
    height: *mut usize,
    width: *mut usize,
    dim: *mut usize,
) -> ZsStatus {
    guard(|| {
        let g = &deref(frame, "frame")?.0.features;
        write(height, g.height(), "height")?;
        write(width, g.width(), "width")?;
        write(dim, g.dim(), "dim")
    })
}

/// Loads a target sequence and all of its frames.
///
/// # Safety
/// `manifest` must be NUL-terminated; `out` valid or null.
#[no_mangle]
pub unsafe extern "C" fn zs_sequence_load(manifest: *const c_char, out: *mut *mut ZsSequence) -> ZsStatus {
    guard(|| {
        let meta = load_sequence(Path::new(str_arg(manifest, "manifest")?))?;
        let frames = meta.frame_ids().map(|id| meta.frame(id)).collect::<Result<Vec<_>, _>>()?;
        write(out, Box::into_raw(Box::new(ZsSequence { meta, frames })), "out")
    })
}

/// # Safety
/// `seq` must come from [`zs_sequence_load`] or be null.
#[no_mangle]
pub unsafe extern "C" fn zs_sequence_free(seq: *mut ZsSequence) {
    if !seq.is_null() {
        drop(Box::from_raw(seq));
    }
}

/// # Safety
/// Pointers must be valid or null.
#[no_mangle]
pub unsafe extern "C" fn zs_sequence_frame_count(seq: *const ZsSequence, out: *mut usize) -> ZsStatus {
    guard(|| write(out, deref(seq, "seq")?.frames.len(), "out"))
}

/// World-to-view extrinsics of frame `index`.
///
/// # Safety
/// Pointers must be valid or null.
#[no_mangle]
pub unsafe extern "C" fn zs_sequence_extrinsics(seq: *const ZsSequence, index: usize, out: *mut ZsSe3) -> ZsStatus {
    guard(|| {
        let seq = deref(seq, "seq")?;
        let f = seq
            .frames
            .get(index)
            .ok_or_else(|| invalid(format!("frame index {index} out of range for {}", seq.meta.sequence_id)))?;
        let e = &f.extrinsics;
        write(out, ZsSe3 { rotation: e.rotation.to_row_array(), translation: arr3(&e.translation) }, "out")
    })
}

#[no_mangle]
pub extern "C" fn zs_config_new() -> *mut ZsConfig {
    Box::into_raw(Box::new(ZsConfig(PipelineConfig::default())))
}

/// # Safety
/// `cfg` must come from [`zs_config_new`] or be null.
#[no_mangle]
pub unsafe extern "C" fn zs_config_free(cfg: *mut ZsConfig) {
    if !cfg.is_null() {
        drop(Box::from_raw(cfg));
    }
}

unsafe fn edit(cfg: *mut ZsConfig, f: impl FnOnce(&mut PipelineConfig) -> FfiResult) -> ZsStatus {
    guard(|| {
        let c = cfg.as_mut().ok_or_else(|| null("cfg"))?;
        let mut next = c.0;
        f(&mut next)?;
        next.validate()?;
        c.0 = next;
        Ok(())
    })
}

/// # Safety
/// `cfg` must be a live handle or null.
#[no_mangle]
pub unsafe extern "C" fn zs_config_set_k(cfg: *mut ZsConfig, k: usize) -> ZsStatus {
    edit(cfg, |c| {
        c.k = k;
        Ok(())
    })
}

/// Seeds RANSAC and k-means.
///
/// # Safety
/// `cfg` must be a live handle or null.
#[no_mangle]
pub unsafe extern "C" fn zs_config_set_seed(cfg: *mut ZsConfig, seed: u64) -> ZsStatus {
    edit(cfg, |c| {
        c.ransac.seed = seed;
        Ok(())
    })
}

/// # Safety
/// `cfg` must be a live handle or null.
#[no_mangle]
pub unsafe extern "C" fn zs_config_set_ransac(cfg: *mut ZsConfig, iters: usize, inlier_thresh: f64) -> ZsStatus {
    edit(cfg, |c| {
        c.ransac.max_iters = iters;
        c.ransac.inlier_thresh = inlier_thresh;
        Ok(())
    })
}

/// `cyclical`, `mutual-nn`, `sinkhorn` or `dual-softmax`.
///
/// # Safety
/// `cfg` must be a live handle or null; `name` NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn zs_config_set_matcher(cfg: *mut ZsConfig, name: *const c_char) -> ZsStatus {
    edit(cfg, |c| {
        c.matcher = str_arg(name, "name")?.parse::<Matcher>()?;
        Ok(())
    })
}

/// # Safety
/// `cfg` must be a live handle or null.
#[no_mangle]
pub unsafe extern "C" fn zs_config_set_best_view_only(cfg: *mut ZsConfig, on: bool) -> ZsStatus {
    edit(cfg, |c| {
        c.best_view_only = on;
        Ok(())
    })
}

/// # Safety
/// `cfg` must be a live handle or null.
#[no_mangle]
pub unsafe extern "C" fn zs_config_set_min_inlier_fraction(cfg: *mut ZsConfig, fraction: f64) -> ZsStatus {
    edit(cfg, |c| {
        c.min_inlier_fraction = fraction;
        Ok(())
    })
}

/// Runs the full estimator. A null `cfg` uses the defaults.
///
/// # Safety
/// Handles must be live or null; `out` valid or null.
#[no_mangle]
pub unsafe extern "C" fn zs_estimate(
    reference: *const ZsFrame,
    target: *const ZsSequence,
    cfg: *const ZsConfig,
    out: *mut ZsEstimate,
) -> ZsStatus {
    guard(|| {
        let reference = &deref(reference, "reference")?.0;
        let target = deref(target, "target")?;
        let cfg = cfg.as_ref().map_or_else(PipelineConfig::default, |c| c.0);
        let r = estimate_pose(reference, &target.frames, &cfg)?;
        let est = ZsEstimate {
            transform: from_sim3(&r.estimate.transform),
            best_view: r.best_view_index,
            inlier_count: r.estimate.inlier_count,
            lifted_pairs: r.lifted_pairs,
            fallback: match r.fallback {
                Fallback::None => 0,
                Fallback::BestViewOnly => 1,
            },
        };
        write(out, est, "out")
    })
}

/// Writes a feature file. `data` holds `height·width·dim` floats in
/// row-major `(row, col, channel)` order. `foreground` (one byte per cell,
/// nonzero = object) and `saliency` (one float per cell) may be null, in
/// which case every cell is foreground with unit saliency.
///
/// # Safety
/// Buffers must hold the stated number of elements.
#[no_mangle]
pub unsafe extern "C" fn zs_write_features(
    path: *const c_char,
    height: usize,
    width: usize,
    dim: usize,
    data: *const f32,
    foreground: *const u8,
    saliency: *const f32,
) -> ZsStatus {
    guard(|| {
        let path = str_arg(path, "path")?;
        let cells = height.checked_mul(width).ok_or_else(|| invalid("grid too large"))?;
        let n = cells.checked_mul(dim).ok_or_else(|| invalid("grid too large"))?;
        let data = slice(data, n, "data")?.to_vec();
        let fg = match foreground.is_null() {
            true => vec![true; cells],
            false => slice(foreground, cells, "foreground")?.iter().map(|&b| b != 0).collect(),
        };
        let sal = match saliency.is_null() {
            true => vec![1.0; cells],
            false => slice(saliency, cells, "saliency")?.to_vec(),
        };
        let grid = FeatureGrid::new(height, width, dim, data, fg, sal)?;
        Ok(write_feature_file(Path::new(path), &grid)?)
    })
}

/// Validates a `.zpf`, `.zdf` or manifest `.json` file. On success a
/// one-line summary is copied into `buf` (NUL-terminated, truncated to
/// `cap`) when `buf` is non-null.
///
/// # Safety
/// `path` must be NUL-terminated; `buf` must hold `cap` bytes or be null.
#[no_mangle]
pub unsafe extern "C" fn zs_check_file(path: *const c_char, buf: *mut c_char, cap: usize) -> ZsStatus {
    guard(|| {
        let summary = check_file(Path::new(str_arg(path, "path")?))?.to_string();
        if !buf.is_null() && cap > 0 {
            let n = summary.len().min(cap - 1);
            std::ptr::copy_nonoverlapping(summary.as_ptr().cast(), buf, n);
            *buf.add(n) = 0;
            if n < summary.len() {
                return Err(Failure(ZsStatus::BufferTooSmall, format!("summary needs {} bytes", summary.len() + 1)));
            }
        }
        Ok(())
    })
}
