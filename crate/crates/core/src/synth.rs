//! Synthetic multi-view benchmark with known ground truth.
//!
//! A category is a set of parts: unit descriptors that are pairwise far
//! apart, placed on an ellipsoid-like shape. Instances jitter, stretch and
//! rescale the parts and sit at a random canonical pose in their own world
//! frame. Rendering projects front-facing parts into a feature grid; cells
//! next to a part form a lower-saliency ring, everything else is background
//! with fresh random descriptors.

use std::collections::BTreeMap;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};

use crate::error::{Error, Result};
use crate::features::{normalize_grid, FeatureGrid, GridPoint};
use crate::geom::{CameraIntrinsics, Mat3, Rotation3, RigidTransformSE3, RigidTransformSim3, Vec3};
use crate::io::{
    encode_depth, encode_features, save_manifest, write_pairs, CropRecord, CropRect, DataSource, DepthImage,
    FrameBundle, FrameRecord, FrameRef, IntrinsicsRecord, PairSpec, SequenceManifest, Sim3Record, TargetRef,
};

/// Pairwise cosine bound between part descriptors.
pub const MAX_PART_COSINE: f64 = 0.5;

fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

fn unit_gaussian<R: Rng + ?Sized>(rng: &mut R, d: usize) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..d).map(|_| StandardNormal.sample(rng)).collect();
        let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if n > 1e-9 {
            return v.into_iter().map(|x| x / n).collect();
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CategoryPrototype {
    pub descriptors: Vec<Vec<f32>>,
    /// Canonical part positions, roughly unit scale.
    pub positions: Vec<Vec3>,
}

impl CategoryPrototype {
    pub fn part_count(&self) -> usize {
        self.positions.len()
    }

    pub fn dim(&self) -> usize {
        self.descriptors[0].len()
    }

    pub fn max_pairwise_cosine(&self) -> f64 {
        let mut worst = f64::NEG_INFINITY;
        for (i, a) in self.descriptors.iter().enumerate() {
            for b in &self.descriptors[i + 1..] {
                worst = worst.max(a.iter().zip(b).map(|(x, y)| *x as f64 * *y as f64).sum());
            }
        }
        worst
    }
}

/// Semi-axes of the prototype shape.
const SHAPE_AXES: [f64; 3] = [1.0, 0.75, 0.55];

/// Rejection-samples `p` unit descriptors in `d` dimensions with pairwise
/// cosine below [`MAX_PART_COSINE`], and places the parts on a jittered
/// Fibonacci ellipsoid.
pub fn gen_category(p: usize, d: usize, seed: u64) -> Result<CategoryPrototype> {
    if p < 4 || d < 8 {
        return Err(Error::InvalidArgument(format!("need p >= 4 and d >= 8, got p={p} d={d}")));
    }
    let mut rng = stream(seed, 0);
    let budget = 10 * p * d;
    let mut accepted: Vec<Vec<f64>> = Vec::with_capacity(p);
    let mut draws = 0;
    while accepted.len() < p {
        if draws == budget {
            return Err(Error::SamplingExhausted(draws));
        }
        draws += 1;
        let v = unit_gaussian(&mut rng, d);
        if accepted.iter().all(|a| a.iter().zip(&v).map(|(x, y)| x * y).sum::<f64>() < MAX_PART_COSINE) {
            accepted.push(v);
        }
    }

    let mut rng = stream(seed, 1);
    let golden = std::f64::consts::PI * (3.0 - 5f64.sqrt());
    let positions = (0..p)
        .map(|i| {
            let z = 1.0 - 2.0 * (i as f64 + 0.5) / p as f64;
            let r = (1.0 - z * z).sqrt();
            let phi = golden * i as f64 + rng.random_range(-0.2..0.2);
            let radial = 1.0 + rng.random_range(-0.1..0.1);
            Vec3::new(
                SHAPE_AXES[0] * radial * r * phi.cos(),
                SHAPE_AXES[1] * radial * r * phi.sin(),
                SHAPE_AXES[2] * radial * z,
            )
        })
        .collect();
    let descriptors = accepted.into_iter().map(|v| v.into_iter().map(|x| x as f32).collect()).collect();
    Ok(CategoryPrototype { descriptors, positions })
}

/// One object instance: perturbed part positions in canonical space plus the
/// canonical-to-world alignment label.
#[derive(Debug, Clone, PartialEq)]
pub struct InstanceSpec {
    pub positions: Vec<Vec3>,
    pub descriptors: Vec<Vec<f32>>,
    /// Maps canonical coordinates into this instance's world frame.
    pub alignment: RigidTransformSim3,
}

impl InstanceSpec {
    pub fn scale(&self) -> f64 {
        self.alignment.scale
    }

    fn centroid(&self) -> Vec3 {
        self.positions.iter().sum::<Vec3>() / self.positions.len() as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InstanceParams {
    /// Per-part positional jitter (std, canonical units).
    pub shape_noise: f64,
    /// Per-axis stretch drawn from `[1 − stretch, 1 + stretch]`.
    pub stretch: f64,
    pub scale_range: (f64, f64),
}

impl Default for InstanceParams {
    fn default() -> Self {
        Self { shape_noise: 0.05, stretch: 0.15, scale_range: (0.8, 1.25) }
    }
}

pub fn gen_instance<R: Rng + ?Sized>(proto: &CategoryPrototype, params: &InstanceParams, rng: &mut R) -> Result<InstanceSpec> {
    if !(params.shape_noise >= 0.0 && (0.0..1.0).contains(&params.stretch)) {
        return Err(Error::InvalidArgument(format!("bad instance params {params:?}")));
    }
    let jitter = Normal::new(0.0, params.shape_noise).map_err(|e| Error::InvalidArgument(e.to_string()))?;
    let stretch = Mat3::from_diagonal(&Vec3::from_fn(|_, _| 1.0 + rng.random_range(-1.0..=1.0) * params.stretch));
    let positions = proto
        .positions
        .iter()
        .map(|p| stretch * (p + Vec3::from_fn(|_, _| jitter.sample(rng))))
        .collect();
    let (lo, hi) = params.scale_range;
    let scale = if lo < hi { rng.random_range(lo..hi) } else { lo };
    let translation = Vec3::from_fn(|_, _| rng.random_range(-1.0..1.0));
    let alignment = RigidTransformSim3::new(Rotation3::random(rng), translation, scale)?;
    Ok(InstanceSpec { positions, descriptors: proto.descriptors.clone(), alignment })
}

/// World-to-view extrinsics of a camera looking at the instance's canonical
/// origin from azimuth/elevation (radians) at `distance` canonical units,
/// with canonical +z as up.
pub fn look_at_camera(inst: &InstanceSpec, azimuth: f64, elevation: f64, distance: f64) -> RigidTransformSE3 {
    let dir = Vec3::new(elevation.cos() * azimuth.cos(), elevation.cos() * azimuth.sin(), elevation.sin());
    let t0 = &inst.alignment;
    let center = t0.apply(&(distance * dir));
    let target = t0.apply(&Vec3::zeros());
    let up = t0.rotation.apply(&Vec3::z());
    let forward = (target - center).normalize();
    let mut right = forward.cross(&up);
    if right.norm() < 1e-9 {
        right = forward.cross(&t0.rotation.apply(&Vec3::x()));
    }
    let right = right.normalize();
    let down = forward.cross(&right);
    let r = Mat3::from_rows(&[right.transpose(), down.transpose(), forward.transpose()]);
    let rotation = Rotation3::from_matrix_repaired(r).expect("orthonormal by construction");
    RigidTransformSE3::new(rotation, -rotation.apply(&center)).expect("finite")
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SynthRenderConfig {
    pub grid_height: usize,
    pub grid_width: usize,
    pub image_width: u32,
    pub image_height: u32,
    pub focal: f64,
    /// Per-component Gaussian noise added to part descriptors before renormalizing.
    pub feat_noise: f64,
    /// Extra per-component noise on ring cells.
    pub ring_noise: f64,
    pub depth_noise: f64,
    /// Crop padding as a fraction of the part bounding box, per side.
    pub crop_pad: f64,
}

impl Default for SynthRenderConfig {
    fn default() -> Self {
        Self {
            grid_height: 16,
            grid_width: 16,
            image_width: 64,
            image_height: 64,
            focal: 60.0,
            feat_noise: 0.1,
            ring_noise: 0.12,
            depth_noise: 0.0,
            crop_pad: 0.1,
        }
    }
}

impl SynthRenderConfig {
    pub fn intrinsics(&self) -> CameraIntrinsics {
        let (w, h) = (self.image_width, self.image_height);
        CameraIntrinsics::new(self.focal, self.focal, w as f64 / 2.0, h as f64 / 2.0, w, h).expect("valid defaults")
    }
}

/// A rendered frame plus the renderer's own bookkeeping.
#[derive(Debug, Clone)]
pub struct RenderedView {
    pub bundle: FrameBundle,
    /// Part owning each grid cell: the projected part on part cells, the
    /// nearest part on ring cells, `None` on background.
    pub owner: Vec<Option<usize>>,
    /// True on cells a part projected into.
    pub part_cell: Vec<bool>,
    /// Camera-frame position of each visible part, by part index.
    pub visible: BTreeMap<usize, Vec3>,
}

impl RenderedView {
    pub fn visible_parts(&self) -> impl Iterator<Item = usize> + '_ {
        self.visible.keys().copied()
    }
}

fn square_crop(xs: &[f64], ys: &[f64], cfg: &SynthRenderConfig) -> CropRect {
    let fold = |v: &[f64]| v.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), x| (a.min(*x), b.max(*x)));
    let ((x0, x1), (y0, y1)) = (fold(xs), fold(ys));
    let (w, h) = (cfg.image_width as f64, cfg.image_height as f64);
    let extent = (x1 - x0).max(y1 - y0);
    let side = (extent * (1.0 + 2.0 * cfg.crop_pad)).max(cfg.grid_width.max(cfg.grid_height) as f64).ceil().min(w.min(h));
    let cx = ((x0 + x1) / 2.0 - side / 2.0).floor().clamp(0.0, w - side);
    let cy = ((y0 + y1) / 2.0 - side / 2.0).floor().clamp(0.0, h - side);
    CropRect { x: cx, y: cy, w: side, h: side }
}

fn noisy_unit<R: Rng + ?Sized>(base: &[f32], sigma: f64, rng: &mut R) -> Vec<f32> {
    if sigma == 0.0 {
        return base.to_vec();
    }
    let v: Vec<f64> = base
        .iter()
        .map(|b| {
            let n: f64 = StandardNormal.sample(rng);
            *b as f64 + sigma * n
        })
        .collect();
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    v.into_iter().map(|x| (x / n) as f32).collect()
}

/// Renders one view of `inst`. Parts are visible when in front of the
/// camera, inside the image and facing it (outward normal from the
/// instance centroid). Each hit cell keeps its nearest part.
pub fn render_view(
    inst: &InstanceSpec,
    intrinsics: &CameraIntrinsics,
    extrinsics: &RigidTransformSE3,
    cfg: &SynthRenderConfig,
    frame_id: &str,
    seed: u64,
) -> Result<RenderedView> {
    let (gh, gw) = (cfg.grid_height, cfg.grid_width);
    let t0 = &inst.alignment;
    let center = extrinsics.invert().translation;
    let centroid = inst.centroid();

    let mut visible = BTreeMap::new();
    let mut proj = Vec::new();
    for (i, q) in inst.positions.iter().enumerate() {
        let world = t0.apply(q);
        let normal = t0.rotation.apply(&(q - centroid));
        let cam = extrinsics.apply(&world);
        if normal.dot(&(center - world)) <= 0.0 || cam.z <= 0.0 {
            continue;
        }
        let (x, y) = intrinsics.project(&cam);
        if !(0.0..intrinsics.width as f64).contains(&x) || !(0.0..intrinsics.height as f64).contains(&y) {
            continue;
        }
        visible.insert(i, cam);
        proj.push((i, x, y, cam.z));
    }
    if proj.is_empty() {
        return Err(Error::NoVisibleParts);
    }
    let xs: Vec<f64> = proj.iter().map(|p| p.1).collect();
    let ys: Vec<f64> = proj.iter().map(|p| p.2).collect();
    let crop = square_crop(&xs, &ys, cfg);

    // Nearest part per hit cell.
    let cells = gh * gw;
    let mut hit: Vec<Option<(usize, f64)>> = vec![None; cells];
    for &(i, x, y, z) in &proj {
        let col = (((x - crop.x) / crop.w * gw as f64).floor().max(0.0) as usize).min(gw - 1);
        let row = (((y - crop.y) / crop.h * gh as f64).floor().max(0.0) as usize).min(gh - 1);
        let slot = &mut hit[row * gw + col];
        if slot.is_none_or(|(_, zz)| z < zz) {
            *slot = Some((i, z));
        }
    }

    let mut owner = vec![None; cells];
    let mut cell_depth = vec![0.0f64; cells];
    let mut part_cell = vec![false; cells];
    for c in 0..cells {
        if let Some((i, z)) = hit[c] {
            owner[c] = Some(i);
            cell_depth[c] = z;
            part_cell[c] = true;
        }
    }
    for c in 0..cells {
        if part_cell[c] {
            continue;
        }
        let p = GridPoint::new(c / gw, c % gw);
        let (mut best, mut wsum, mut zsum) = (None::<(f64, usize)>, 0.0, 0.0);
        for dr in -1i64..=1 {
            for dc in -1i64..=1 {
                let (r, cc) = (p.row as i64 + dr, p.col as i64 + dc);
                if r < 0 || cc < 0 || r >= gh as i64 || cc >= gw as i64 {
                    continue;
                }
                let n = r as usize * gw + cc as usize;
                if let Some((part, z)) = hit[n] {
                    let d = p.distance(&GridPoint::new(r as usize, cc as usize));
                    if best.is_none_or(|(bd, _)| d < bd) {
                        best = Some((d, part));
                    }
                    wsum += 1.0 / d;
                    zsum += z / d;
                }
            }
        }
        if let Some((_, part)) = best {
            owner[c] = Some(part);
            cell_depth[c] = zsum / wsum;
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dim = inst.descriptors[0].len();
    let ring_sigma = (cfg.ring_noise.powi(2) + cfg.feat_noise.powi(2)).sqrt();
    let mut data = Vec::with_capacity(cells * dim);
    let mut saliency = vec![0.0f32; cells];
    for c in 0..cells {
        match owner[c] {
            Some(part) if part_cell[c] => {
                data.extend(noisy_unit(&inst.descriptors[part], cfg.feat_noise, &mut rng));
                saliency[c] = 1.0;
            }
            Some(part) => {
                data.extend(noisy_unit(&inst.descriptors[part], ring_sigma, &mut rng));
                saliency[c] = 0.5;
            }
            None => data.extend(unit_gaussian(&mut rng, dim).into_iter().map(|x| x as f32)),
        }
    }
    if cfg.depth_noise > 0.0 {
        for c in 0..cells {
            if owner[c].is_some() {
                let n: f64 = StandardNormal.sample(&mut rng);
                cell_depth[c] = (cell_depth[c] + cfg.depth_noise * n).max(1e-3);
            }
        }
    }
    let foreground: Vec<bool> = owner.iter().map(|o| o.is_some()).collect();
    let features = normalize_grid(FeatureGrid::new(gh, gw, dim, data, foreground.clone(), saliency)?);

    let (iw, ih) = (intrinsics.width as usize, intrinsics.height as usize);
    let mut values = vec![0.0f32; iw * ih];
    let mut valid = vec![false; iw * ih];
    for r in 0..ih {
        for c in 0..iw {
            let (x, y) = (c as f64 + 0.5, r as f64 + 0.5);
            let (u, v) = ((x - crop.x) / crop.w, (y - crop.y) / crop.h);
            if !(0.0..1.0).contains(&u) || !(0.0..1.0).contains(&v) {
                continue;
            }
            let cell = (v * gh as f64) as usize * gw + (u * gw as f64) as usize;
            if foreground[cell] {
                values[r * iw + c] = cell_depth[cell] as f32;
                valid[r * iw + c] = true;
            }
        }
    }
    let bundle = FrameBundle {
        frame_id: frame_id.to_string(),
        features,
        depth: DepthImage::new(ih, iw, values, valid)?,
        intrinsics: *intrinsics,
        extrinsics: *extrinsics,
        crop,
    };
    Ok(RenderedView { bundle, owner, part_cell, visible })
}

/// Noise levels of a benchmark.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseProfile {
    pub feat: f64,
    pub shape: f64,
    pub depth: f64,
}

impl NoiseProfile {
    pub fn zero() -> Self {
        Self { feat: 0.0, shape: 0.0, depth: 0.0 }
    }
}

impl Default for NoiseProfile {
    fn default() -> Self {
        Self { feat: 0.1, shape: 0.05, depth: 0.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SynthConfig {
    pub parts: usize,
    pub dim: usize,
    pub render: SynthRenderConfig,
    pub instance: InstanceParams,
    pub n_views: usize,
    /// Elevation of the target camera ring (radians).
    pub ring_elevation: f64,
    /// Range the reference camera's elevation is drawn from (radians).
    pub ref_elevation: (f64, f64),
    pub camera_distance: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            parts: 64,
            dim: 32,
            render: SynthRenderConfig::default(),
            instance: InstanceParams::default(),
            n_views: 5,
            ring_elevation: 20f64.to_radians(),
            ref_elevation: (5f64.to_radians(), 40f64.to_radians()),
            camera_distance: 3.0,
        }
    }
}

impl SynthConfig {
    pub fn with_noise(mut self, noise: NoiseProfile) -> Self {
        self.render.feat_noise = noise.feat;
        self.render.depth_noise = noise.depth;
        self.instance.shape_noise = noise.shape;
        self
    }
}

/// A reference view of one instance and a camera ring around another.
#[derive(Debug, Clone)]
pub struct SynthPair {
    pub reference: RenderedView,
    pub targets: Vec<RenderedView>,
    pub ref_instance: InstanceSpec,
    pub tgt_instance: InstanceSpec,
    /// Reference camera azimuth (radians, canonical frame).
    pub ref_azimuth: f64,
    pub ref_elevation: f64,
}

impl SynthPair {
    pub fn target_bundles(&self) -> Vec<FrameBundle> {
        self.targets.iter().map(|t| t.bundle.clone()).collect()
    }

    /// Ground-truth Sim(3) from the reference camera to target view `j`.
    pub fn ground_truth(&self, j: usize) -> RigidTransformSim3 {
        crate::geom::relative_gt_pose(
            &self.ref_instance.alignment,
            &self.tgt_instance.alignment,
            &self.reference.bundle.extrinsics,
            &self.targets[j].bundle.extrinsics,
        )
    }
}

/// Renders a pair with explicit camera placements (radians). Noise streams
/// are derived from `seed`; instances are drawn by the caller.
pub fn render_pair(
    ref_instance: InstanceSpec,
    tgt_instance: InstanceSpec,
    ref_view: (f64, f64),
    target_views: &[(f64, f64)],
    cfg: &SynthConfig,
    seed: u64,
) -> Result<SynthPair> {
    let intr = cfg.render.intrinsics();
    let cam = look_at_camera(&ref_instance, ref_view.0, ref_view.1, cfg.camera_distance);
    let reference = render_view(&ref_instance, &intr, &cam, &cfg.render, "ref", stream(seed, 1).random())?;
    let targets = target_views
        .iter()
        .enumerate()
        .map(|(j, &(az, el))| {
            let cam = look_at_camera(&tgt_instance, az, el, cfg.camera_distance);
            render_view(&tgt_instance, &intr, &cam, &cfg.render, &format!("v{j}"), stream(seed, 2 + j as u64).random())
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SynthPair { reference, targets, ref_instance, tgt_instance, ref_azimuth: ref_view.0, ref_elevation: ref_view.1 })
}

/// Evenly spaced ring azimuths starting at 0.
pub fn ring_azimuths(n: usize) -> Vec<f64> {
    (0..n).map(|k| std::f64::consts::TAU * k as f64 / n as f64).collect()
}

/// Two fresh instances of `proto`; the reference camera has random azimuth
/// and elevation, the targets sit on an evenly spaced ring.
pub fn gen_pair(proto: &CategoryPrototype, cfg: &SynthConfig, seed: u64) -> Result<SynthPair> {
    let mut rng = stream(seed, 0);
    let a = gen_instance(proto, &cfg.instance, &mut rng)?;
    let b = gen_instance(proto, &cfg.instance, &mut rng)?;
    let az = rng.random_range(0.0..std::f64::consts::TAU);
    let (lo, hi) = cfg.ref_elevation;
    let el = if lo < hi { rng.random_range(lo..hi) } else { lo };
    let ring: Vec<(f64, f64)> = ring_azimuths(cfg.n_views).into_iter().map(|a| (a, cfg.ring_elevation)).collect();
    render_pair(a, b, (az, el), &ring, cfg, seed)
}

#[derive(Debug, Clone)]
pub struct MemorySequence {
    pub category: String,
    pub sequence_id: String,
    pub canonical_alignment: Option<RigidTransformSim3>,
    pub frames: Vec<FrameBundle>,
}

/// An in-memory dataset with the same shape as the on-disk layout.
#[derive(Debug, Clone, Default)]
pub struct MemoryDataset {
    pub sequences: BTreeMap<(String, String), MemorySequence>,
    pub pairs: Vec<PairSpec>,
}

impl DataSource for MemoryDataset {
    fn frame(&self, category: &str, sequence: &str, frame_id: &str) -> Result<FrameBundle> {
        let seq = self.sequence(category, sequence)?;
        seq.frames
            .iter()
            .find(|f| f.frame_id == frame_id)
            .cloned()
            .ok_or_else(|| Error::InvalidFrame(format!("sequence {sequence} has no frame {frame_id}")))
    }

    fn canonical_alignment(&self, category: &str, sequence: &str) -> Result<Option<RigidTransformSim3>> {
        Ok(self.sequence(category, sequence)?.canonical_alignment)
    }
}

impl MemoryDataset {
    fn sequence(&self, category: &str, sequence: &str) -> Result<&MemorySequence> {
        self.sequences
            .get(&(category.to_string(), sequence.to_string()))
            .ok_or_else(|| Error::InvalidFrame(format!("unknown sequence {category}/{sequence}")))
    }

    fn insert(&mut self, seq: MemorySequence) {
        self.sequences.insert((seq.category.clone(), seq.sequence_id.clone()), seq);
    }

    pub fn frame_count(&self) -> usize {
        self.sequences.values().map(|s| s.frames.len()).sum()
    }
}

pub fn category_name(c: usize) -> String {
    format!("cat{c:02}")
}

/// Generates `categories × pairs_per_category` pairs, each with its own
/// reference sequence (one frame) and target sequence (`n_views` frames).
pub fn gen_benchmark(
    categories: usize,
    pairs_per_category: usize,
    n_views: usize,
    noise: NoiseProfile,
    seed: u64,
) -> Result<MemoryDataset> {
    let cfg = SynthConfig { n_views, ..SynthConfig::default() }.with_noise(noise);
    gen_benchmark_with(categories, pairs_per_category, &cfg, seed)
}

pub fn gen_benchmark_with(categories: usize, pairs_per_category: usize, cfg: &SynthConfig, seed: u64) -> Result<MemoryDataset> {
    if categories == 0 || pairs_per_category == 0 || cfg.n_views == 0 {
        return Err(Error::InvalidArgument("benchmark counts must be at least 1".into()));
    }
    let mut seeds = ChaCha8Rng::seed_from_u64(seed);
    let mut out = MemoryDataset::default();
    for c in 0..categories {
        let category = category_name(c);
        let proto = gen_category(cfg.parts, cfg.dim, seeds.random())?;
        for i in 0..pairs_per_category {
            let pair = gen_pair(&proto, cfg, seeds.random())?;
            let (ref_seq, tgt_seq) = (format!("p{i:03}_ref"), format!("p{i:03}_tgt"));
            out.pairs.push(PairSpec {
                pair_id: format!("{category}-{i:03}"),
                category: category.clone(),
                reference: FrameRef { sequence: ref_seq.clone(), frame: "ref".into() },
                target: TargetRef { sequence: tgt_seq.clone(), frames: (0..cfg.n_views).map(|j| format!("v{j}")).collect() },
            });
            out.insert(MemorySequence {
                category: category.clone(),
                sequence_id: ref_seq,
                canonical_alignment: Some(pair.ref_instance.alignment),
                frames: vec![pair.reference.bundle],
            });
            out.insert(MemorySequence {
                category: category.clone(),
                sequence_id: tgt_seq,
                canonical_alignment: Some(pair.tgt_instance.alignment),
                frames: pair.targets.into_iter().map(|t| t.bundle).collect(),
            });
        }
    }
    Ok(out)
}

/// Writes `<root>/<category>/<sequence>/{manifest.json,<frame>.zpf,<frame>.zdf}`
/// and `<root>/pairs.jsonl`.
pub fn write_dataset(data: &MemoryDataset, root: &Path) -> Result<()> {
    for seq in data.sequences.values() {
        let dir = root.join(&seq.category).join(&seq.sequence_id);
        std::fs::create_dir_all(&dir)?;
        let mut frames = Vec::with_capacity(seq.frames.len());
        for f in &seq.frames {
            let (zpf, zdf) = (format!("{}.zpf", f.frame_id), format!("{}.zdf", f.frame_id));
            std::fs::write(dir.join(&zpf), encode_features(&f.features))?;
            std::fs::write(dir.join(&zdf), encode_depth(&f.depth))?;
            frames.push(FrameRecord {
                frame_id: f.frame_id.clone(),
                features: zpf,
                depth: zdf,
                intrinsics: IntrinsicsRecord::from(&f.intrinsics),
                extrinsics: f.extrinsics.to_homogeneous_rows(),
                crop: CropRecord::from(&f.crop),
            });
        }
        let manifest = SequenceManifest {
            category: seq.category.clone(),
            sequence_id: seq.sequence_id.clone(),
            scene_scale: None,
            canonical_alignment: seq.canonical_alignment.as_ref().map(Sim3Record::from_sim3),
            frames,
        };
        save_manifest(&dir.join("manifest.json"), &manifest)?;
    }
    write_pairs(&root.join("pairs.jsonl"), &data.pairs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::solver::{grid_to_pixel, unproject};

    #[test]
    fn prototype_constraints() {
        let p = gen_category(4, 64, 12).unwrap();
        assert_eq!(p.descriptors.len(), 4);
        assert!(p.max_pairwise_cosine() < 0.5);
        assert_eq!(gen_category(4, 64, 12).unwrap(), p);
    }

    #[test]
    fn packing_infeasible_exhausts() {
        assert!(matches!(gen_category(100, 8, 0), Err(Error::SamplingExhausted(8000))));
    }

    #[test]
    fn camera_is_rotation_looking_at_origin() {
        let proto = gen_category(16, 16, 1).unwrap();
        let inst = gen_instance(&proto, &InstanceParams::default(), &mut stream(3, 0)).unwrap();
        let cam = look_at_camera(&inst, 0.7, 0.3, 3.0);
        let origin = cam.apply(&inst.alignment.apply(&Vec3::zeros()));
        assert!(origin.x.abs() < 1e-9 && origin.y.abs() < 1e-9);
        assert!((origin.z - 3.0 * inst.scale()).abs() < 1e-9);
    }

    #[test]
    fn zero_noise_parts_unproject_to_their_position() {
        let proto = gen_category(64, 32, 4).unwrap();
        let cfg = SynthConfig::default().with_noise(NoiseProfile::zero());
        let inst = gen_instance(&proto, &cfg.instance, &mut stream(5, 0)).unwrap();
        let intr = cfg.render.intrinsics();
        let cam = look_at_camera(&inst, 0.0, cfg.ring_elevation, cfg.camera_distance);
        let view = render_view(&inst, &intr, &cam, &cfg.render, "f", 0).unwrap();
        let f = &view.bundle;
        let cell_px = f.crop.w / cfg.render.grid_width as f64;
        let mut checked = 0;
        for c in 0..f.features.cells() {
            if !view.part_cell[c] {
                continue;
            }
            let part = view.owner[c].unwrap();
            let truth = view.visible[&part];
            let px = grid_to_pixel(f.features.point(c), &f.crop, 16, 16);
            let z = f.depth.sample(px.0, px.1).unwrap();
            let p = unproject(px, z, &intr).unwrap();
            // Half a cell's footprint at the part's depth, per axis.
            let half = 0.5 * cell_px * truth.z / cfg.render.focal;
            assert!((p.x - truth.x).abs() <= half + 1e-9 && (p.y - truth.y).abs() <= half + 1e-9);
            assert!((p.z - truth.z).abs() < 1e-6);
            checked += 1;
        }
        assert!(checked > 10);
    }

    #[test]
    fn renders_are_deterministic() {
        let proto = gen_category(32, 32, 6).unwrap();
        let a = gen_pair(&proto, &SynthConfig::default(), 9).unwrap();
        let b = gen_pair(&proto, &SynthConfig::default(), 9).unwrap();
        assert_eq!(encode_features(&a.reference.bundle.features), encode_features(&b.reference.bundle.features));
        assert_eq!(encode_depth(&a.targets[3].bundle.depth), encode_depth(&b.targets[3].bundle.depth));
    }

    #[test]
    fn camera_facing_away_sees_nothing() {
        let proto = gen_category(32, 32, 6).unwrap();
        let cfg = SynthConfig::default();
        let inst = gen_instance(&proto, &cfg.instance, &mut stream(1, 0)).unwrap();
        let cam = look_at_camera(&inst, 0.0, 0.2, 3.0);
        let turned = RigidTransformSE3::new(Rotation3::rot_y(std::f64::consts::PI).compose(&cam.rotation), Rotation3::rot_y(std::f64::consts::PI).apply(&cam.translation)).unwrap();
        assert!(matches!(
            render_view(&inst, &cfg.render.intrinsics(), &turned, &cfg.render, "f", 0),
            Err(Error::NoVisibleParts)
        ));
    }
}
