//! Synthetic point-cloud domains and a surrogate region-proposal stage.
//!
//! A [`SyntheticDomain`] describes a dataset by its per-class object size
//! statistics, point densities and clutter. [`generate_domain`] samples the
//! frames and returns a [`SyntheticExtractor`], which plays the role of a
//! frozen detector bound to that dataset.
//!
//! Each object carries a fixed set of candidate proposals, one per anchor
//! location that fires on it. A candidate's box center is the object center
//! plus a Gaussian regression error (`center_noise`); its yaw is the object's
//! yaw; its size is the anchor size under test (or the anchor plus the
//! predicted size residual when residuals are applied). For a candidate box:
//!
//! * the feature is a `G x G x G` occupancy grid of every point inside the
//!   box, in box-normalized coordinates, divided by the number of points
//!   inside;
//! * the score is `captured / (captured + foreign + missed)`, where
//!   `captured`/`missed` count the object's own surface points inside/outside
//!   the box and `foreign` counts every other point inside it (context
//!   returns, background clutter, neighbouring objects).
//!
//! Surface returns are stratified over each face (one point per lattice
//! cell, count proportional to face area) and sit at least `label_margin`
//! inside the labeled box, like a scan pattern inside a slightly loose
//! annotation. Context returns lie on the ground under the object and in a
//! low band beside its vertical faces, decaying outward, so admitting them
//! is the main cost of an oversized anchor.
//!
//! With NMS enabled only the best-localized candidate per object (smallest
//! center error) is returned, so the surviving box does not depend on the
//! anchor under test. Undersized anchors lose surface points, oversized
//! anchors admit context and clutter; both lower the score and shift the
//! feature.

use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Poisson};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::extractor::{FeatureExtractor, FrameId, ResidualPolicy};
use crate::io;
use crate::types::{
    normalize_yaw, Anchor, AnchorSizes, FeatureDatabase, FeatureVector, ScoredProposal,
};

/// Spacing of the bird's-eye anchor grid used for center residuals.
const ANCHOR_GRID_STEP: f64 = 0.4;
const MIN_BOX_SIZE: f64 = 0.05;
const PLACEMENT_ATTEMPTS: usize = 200;
/// Context returns are truncated at this many decay lengths.
const CONTEXT_REACH: f64 = 6.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassSpec {
    pub name: String,
    pub mean_size: AnchorSizes,
    /// Per-dimension standard deviation of object sizes, meters.
    pub size_std: [f64; 3],
}

/// Generative description of one dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SyntheticDomain {
    pub classes: Vec<ClassSpec>,
    /// Poisson mean of objects per frame.
    pub objects_per_frame: f64,
    /// Surface points per cubic meter of object volume.
    pub points_per_object: f64,
    /// Poisson mean of uniform background points per frame.
    pub clutter_rate: f64,
    /// Context returns per square meter of the object's vertical faces and
    /// footprint.
    pub context_density: f64,
    /// Mean outward distance of context returns from the surface, meters.
    pub context_decay: f64,
    /// Context returns lie between the ground and this height, meters.
    pub context_height: f64,
    /// Scene size (x, y, z) in meters; x and y are centered on the origin,
    /// z runs up from the ground plane.
    pub frame_extent: [f64; 3],
    /// Std of the per-candidate center regression error, meters.
    pub center_noise: f64,
    /// Gap between the labeled box and the outermost surface returns,
    /// meters (capped at a quarter of each half-extent).
    pub label_margin: f64,
    /// Std of the inward displacement of surface points beyond the label
    /// margin, meters.
    pub surface_jitter: f64,
    /// Std of the predicted size residual error, meters.
    pub size_residual_noise: f64,
    pub proposals_per_object: usize,
    /// Occupancy grid resolution G; the feature dimension is G^3.
    pub grid: usize,
    /// Keep only the best-localized candidate per object.
    pub nms: bool,
    pub seed: u64,
}

impl Default for SyntheticDomain {
    fn default() -> Self {
        SyntheticDomain::kitti_like(0)
    }
}

impl SyntheticDomain {
    fn with_car(mean: [f64; 3], std: [f64; 3], seed: u64) -> Self {
        SyntheticDomain {
            classes: vec![ClassSpec {
                name: "car".into(),
                mean_size: AnchorSizes::from_array(mean).expect("positive preset"),
                size_std: std,
            }],
            objects_per_frame: 4.0,
            points_per_object: 40.0,
            clutter_rate: 2000.0,
            context_density: 10.0,
            context_decay: 0.08,
            context_height: 0.4,
            frame_extent: [40.0, 40.0, 3.0],
            center_noise: 0.1,
            label_margin: 0.04,
            surface_jitter: 0.1,
            size_residual_noise: 0.05,
            proposals_per_object: 32,
            grid: 4,
            nms: true,
            seed,
        }
    }

    /// Single car class with mean size (1.6, 3.9, 1.5).
    pub fn kitti_like(seed: u64) -> Self {
        Self::with_car([1.6, 3.9, 1.5], [0.035, 0.08, 0.03], seed)
    }

    /// Single car class with mean size (2.1, 4.8, 1.8).
    pub fn waymo_like(seed: u64) -> Self {
        Self::with_car([2.1, 4.8, 1.8], [0.045, 0.1, 0.04], seed)
    }

    pub fn dim(&self) -> usize {
        self.grid * self.grid * self.grid
    }

    pub fn validate(&self) -> Result<()> {
        let nonneg = |name: &str, v: f64| {
            if v.is_finite() && v >= 0.0 {
                Ok(())
            } else {
                Err(Error::invalid(
                    name,
                    format!("must be finite and >= 0, got {v}"),
                ))
            }
        };
        let positive = |name: &str, v: f64| {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(Error::invalid(
                    name,
                    format!("must be finite and > 0, got {v}"),
                ))
            }
        };
        if self.classes.is_empty() {
            return Err(Error::invalid("classes", "at least one class is required"));
        }
        for (i, c) in self.classes.iter().enumerate() {
            for (k, (m, s)) in c.mean_size.to_array().iter().zip(c.size_std).enumerate() {
                nonneg(&format!("classes[{i}].size_std[{k}]"), s)?;
                if *m <= 3.0 * s {
                    return Err(Error::invalid(
                        format!("classes[{i}].size_std[{k}]"),
                        format!("mean size {m} must exceed 3x the std {s}"),
                    ));
                }
            }
        }
        nonneg("objects_per_frame", self.objects_per_frame)?;
        positive("points_per_object", self.points_per_object)?;
        nonneg("clutter_rate", self.clutter_rate)?;
        nonneg("context_density", self.context_density)?;
        nonneg("context_decay", self.context_decay)?;
        nonneg("context_height", self.context_height)?;
        for (k, e) in self.frame_extent.iter().enumerate() {
            positive(&format!("frame_extent[{k}]"), *e)?;
        }
        nonneg("center_noise", self.center_noise)?;
        nonneg("label_margin", self.label_margin)?;
        nonneg("surface_jitter", self.surface_jitter)?;
        nonneg("size_residual_noise", self.size_residual_noise)?;
        if self.proposals_per_object == 0 {
            return Err(Error::invalid("proposals_per_object", "must be >= 1"));
        }
        if !(1..=16).contains(&self.grid) {
            return Err(Error::invalid("grid", "must lie in 1..=16"));
        }
        Ok(())
    }
}

/// One candidate proposal attached to an object, in the object's frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub center_offset: [f64; 3],
    pub size_error: [f64; 3],
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticObject {
    pub class: usize,
    pub center: [f64; 3],
    pub size: AnchorSizes,
    pub yaw: f64,
    pub candidates: Vec<Candidate>,
    /// Surface points in the object frame (box-aligned, origin at center).
    pub points: Vec<[f32; 3]>,
    /// Context returns near the surface, in the object frame.
    pub context: Vec<[f32; 3]>,
}

impl SyntheticObject {
    /// Samples an object's points and candidates at a given pose.
    pub fn sample<R: Rng + ?Sized>(
        spec: &SyntheticDomain,
        class: usize,
        center: [f64; 3],
        size: AnchorSizes,
        yaw: f64,
        rng: &mut R,
    ) -> Self {
        let dims = size.to_array();
        let half = dims.map(|d| d / 2.0);

        let n = poisson(rng, spec.points_per_object * size.volume());
        let areas = [
            dims[1] * dims[2],
            dims[1] * dims[2],
            dims[0] * dims[2],
            dims[0] * dims[2],
            dims[0] * dims[1],
            dims[0] * dims[1],
        ];
        let total_area: f64 = areas.iter().sum();
        let jitter =
            Normal::new(0.0, spec.surface_jitter.max(f64::MIN_POSITIVE)).expect("std >= 0");
        let margin = half.map(|h| spec.label_margin.min(0.25 * h));
        let mut points = Vec::with_capacity(n);
        // stratified returns: one point per lattice cell on each face
        for (face, area) in areas.iter().enumerate() {
            let axis = face / 2;
            let sign = if face % 2 == 0 { 1.0 } else { -1.0 };
            let (a, b) = ((axis + 1) % 3, (axis + 2) % 3);
            let n_face = (n as f64 * area / total_area).round() as usize;
            if n_face == 0 {
                continue;
            }
            let span = [2.0 * (half[a] - margin[a]), 2.0 * (half[b] - margin[b])];
            let pitch = (span[0] * span[1] / n_face as f64).sqrt();
            let na = ((span[0] / pitch).round() as usize).max(1);
            let nb = ((span[1] / pitch).round() as usize).max(1);
            for i in 0..na {
                for j in 0..nb {
                    let mut p = [0.0f64; 3];
                    p[a] = ((i as f64 + rng.random::<f64>()) / na as f64 - 0.5) * span[0];
                    p[b] = ((j as f64 + rng.random::<f64>()) / nb as f64 - 0.5) * span[1];
                    let depth = if spec.surface_jitter > 0.0 {
                        let d: f64 = jitter.sample(rng);
                        margin[axis] + d.abs()
                    } else {
                        margin[axis]
                    };
                    // stay strictly inside so the point survives f32 rounding
                    let depth = depth.clamp(1e-4 * half[axis], 0.999 * half[axis]);
                    p[axis] = sign * (half[axis] - depth);
                    for (pk, hk) in p.iter_mut().zip(half) {
                        *pk = pk.clamp(-(1.0 - 1e-6) * hk, (1.0 - 1e-6) * hk);
                    }
                    points.push(p.map(|v| v as f32));
                }
            }
        }

        // ground below the object plus low returns beside its vertical
        // faces (curbs, vegetation); nothing above the roof
        let ctx_areas = [areas[0], areas[1], areas[2], areas[3], 0.0, areas[5]];
        let ctx_total: f64 = ctx_areas.iter().sum();
        let band = spec.context_height.min(dims[2]);
        let n_ctx = poisson(rng, spec.context_density * ctx_total);
        let mut context = Vec::with_capacity(n_ctx);
        for _ in 0..n_ctx {
            let (axis, sign) = pick_face(rng, &ctx_areas, ctx_total);
            let mut p = [0, 1, 2].map(|k| (rng.random::<f64>() - 0.5) * dims[k]);
            if axis != 2 {
                p[2] = -half[2] + rng.random::<f64>() * band;
            }
            let u: f64 = rng.random();
            let d = (-spec.context_decay * (1.0 - u).ln()).min(CONTEXT_REACH * spec.context_decay);
            // strictly outside the object box
            p[axis] = sign * (half[axis] + d.max(1e-6));
            context.push(p.map(|v| v as f32));
        }

        let center_err =
            Normal::new(0.0, spec.center_noise.max(f64::MIN_POSITIVE)).expect("std >= 0");
        let size_err =
            Normal::new(0.0, spec.size_residual_noise.max(f64::MIN_POSITIVE)).expect("std >= 0");
        let candidates = (0..spec.proposals_per_object)
            .map(|_| {
                let mut c = Candidate {
                    center_offset: [0.0; 3],
                    size_error: [0.0; 3],
                };
                for k in 0..3 {
                    let e: f64 = center_err.sample(rng);
                    c.center_offset[k] = if spec.center_noise > 0.0 { e } else { 0.0 };
                }
                for k in 0..3 {
                    let e: f64 = size_err.sample(rng);
                    c.size_error[k] = if spec.size_residual_noise > 0.0 {
                        e
                    } else {
                        0.0
                    };
                }
                c
            })
            .collect();

        SyntheticObject {
            class,
            center,
            size,
            yaw: normalize_yaw(yaw),
            candidates,
            points,
            context,
        }
    }

    /// Occupancy descriptor of the object's own points inside its true box.
    pub fn canonical_descriptor(&self, grid: usize) -> Vec<f32> {
        let dims = self.size.to_array();
        let mut hist = vec![0u32; grid * grid * grid];
        let mut n = 0u32;
        for p in &self.points {
            let q = p.map(|v| v as f64);
            if let Some(cell) = cell_of(q, dims, grid) {
                hist[cell] += 1;
                n += 1;
            }
        }
        normalize_hist(&hist, n)
    }

    /// Bird's-eye radius enclosing the object and its context returns.
    fn radius(&self, decay: f64) -> f64 {
        let w = self.size.w() / 2.0 + CONTEXT_REACH * decay;
        let l = self.size.l() / 2.0 + CONTEXT_REACH * decay;
        (w * w + l * l).sqrt()
    }

    fn to_world(&self, p: [f64; 3]) -> [f64; 3] {
        let (s, c) = self.yaw.sin_cos();
        [
            self.center[0] + c * p[0] - s * p[1],
            self.center[1] + s * p[0] + c * p[1],
            self.center[2] + p[2],
        ]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    pub objects: Vec<SyntheticObject>,
    /// Background points in world coordinates, sorted by x.
    clutter: Vec<[f32; 3]>,
}

impl Frame {
    pub fn new(objects: Vec<SyntheticObject>, mut clutter: Vec<[f32; 3]>) -> Self {
        clutter.sort_by(|a, b| a[0].total_cmp(&b[0]));
        Frame { objects, clutter }
    }

    pub fn clutter(&self) -> &[[f32; 3]] {
        &self.clutter
    }
}

/// Picks a box face with probability proportional to its area. Returns the
/// face normal axis and its sign.
fn pick_face<R: Rng + ?Sized>(rng: &mut R, areas: &[f64; 6], total: f64) -> (usize, f64) {
    let mut u = rng.random::<f64>() * total;
    let mut face = 5;
    for (i, a) in areas.iter().enumerate() {
        if u < *a {
            face = i;
            break;
        }
        u -= a;
    }
    (face / 2, if face % 2 == 0 { 1.0 } else { -1.0 })
}

fn poisson<R: Rng + ?Sized>(rng: &mut R, mean: f64) -> usize {
    if mean <= 0.0 {
        return 0;
    }
    let v: f64 = Poisson::new(mean).expect("positive mean").sample(rng);
    v as usize
}

fn cell_of(q: [f64; 3], dims: [f64; 3], grid: usize) -> Option<usize> {
    let mut idx = 0;
    for k in 0..3 {
        if q[k].abs() > dims[k] / 2.0 {
            return None;
        }
        let u = q[k] / dims[k] + 0.5;
        let c = ((u * grid as f64) as usize).min(grid - 1);
        idx = idx * grid + c;
    }
    Some(idx)
}

fn normalize_hist(hist: &[u32], n: u32) -> Vec<f32> {
    if n == 0 {
        return vec![0.0; hist.len()];
    }
    let inv = 1.0 / n as f64;
    hist.iter().map(|&c| (c as f64 * inv) as f32).collect()
}

fn frame_rng(seed: u64, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64 + 1);
    rng
}

/// Samples frame `index` of a domain.
pub fn generate_frame(spec: &SyntheticDomain, index: usize) -> Frame {
    let mut rng = frame_rng(spec.seed, index);
    let n_obj = poisson(&mut rng, spec.objects_per_frame);
    let [ex, ey, ez] = spec.frame_extent;
    let mut objects: Vec<SyntheticObject> = Vec::with_capacity(n_obj);
    for _ in 0..n_obj {
        let class = rng.random_range(0..spec.classes.len());
        let cs = &spec.classes[class];
        let mut dims = [0.0; 3];
        for (k, (m, s)) in cs.mean_size.to_array().iter().zip(cs.size_std).enumerate() {
            let z: f64 = rand_distr::StandardNormal.sample(&mut rng);
            dims[k] = m + s * z.clamp(-3.0, 3.0);
        }
        let size = AnchorSizes::from_array(dims).expect("mean > 3 std");
        let yaw = rng.random_range(-PI..PI);
        // keep 1.5x boxes plus context of neighbours disjoint
        let margin = CONTEXT_REACH * spec.context_decay;
        let reach = 1.5 * (size.w().hypot(size.l()) / 2.0) + margin;
        let mut placed = None;
        for _ in 0..PLACEMENT_ATTEMPTS {
            let x = rng.random_range(-ex / 2.0..ex / 2.0);
            let y = rng.random_range(-ey / 2.0..ey / 2.0);
            if x.abs() + reach > ex / 2.0 || y.abs() + reach > ey / 2.0 {
                continue;
            }
            let clear = objects.iter().all(|o| {
                let r = 1.5 * (o.size.w().hypot(o.size.l()) / 2.0) + margin;
                (o.center[0] - x).hypot(o.center[1] - y) > reach + r
            });
            if clear {
                placed = Some([x, y, size.h() / 2.0]);
                break;
            }
        }
        // crowded frames drop the object rather than overlap it
        let Some(center) = placed else { continue };
        objects.push(SyntheticObject::sample(
            spec, class, center, size, yaw, &mut rng,
        ));
    }
    let n_clutter = poisson(&mut rng, spec.clutter_rate);
    let clutter = (0..n_clutter)
        .map(|_| {
            [
                rng.random_range(-ex / 2.0..ex / 2.0) as f32,
                rng.random_range(-ey / 2.0..ey / 2.0) as f32,
                rng.random_range(0.0..ez) as f32,
            ]
        })
        .collect();
    Frame::new(objects, clutter)
}

/// Surrogate detector bound to one synthetic domain.
#[derive(Debug, Clone)]
pub struct SyntheticExtractor {
    spec: SyntheticDomain,
    anchors: Vec<Anchor>,
    frames: Vec<Frame>,
}

/// Samples `n_frames` frames of `spec`. The extractor's anchors default to
/// the per-class mean sizes, i.e. a detector tuned to this domain.
pub fn generate_domain(spec: &SyntheticDomain, n_frames: usize) -> Result<SyntheticExtractor> {
    spec.validate()?;
    if n_frames == 0 {
        return Err(Error::invalid("n_frames", "must be >= 1"));
    }
    let frames = (0..n_frames)
        .into_par_iter()
        .map(|i| generate_frame(spec, i))
        .collect();
    SyntheticExtractor::from_frames(spec.clone(), frames)
}

struct BoxEval {
    score: f64,
    inside: u32,
    hist: Vec<u32>,
}

impl SyntheticExtractor {
    pub fn from_frames(spec: SyntheticDomain, frames: Vec<Frame>) -> Result<Self> {
        spec.validate()?;
        if let Some(o) = frames
            .iter()
            .flat_map(|f| &f.objects)
            .find(|o| o.class >= spec.classes.len())
        {
            return Err(Error::UnknownClass(o.class));
        }
        let anchors = spec
            .classes
            .iter()
            .map(|c| Anchor::from_sizes(c.mean_size))
            .collect();
        Ok(SyntheticExtractor {
            spec,
            anchors,
            frames,
        })
    }

    /// Rebinds the detector's anchors, e.g. to run a source-tuned detector
    /// on a target domain.
    pub fn with_anchors(mut self, anchors: Vec<Anchor>) -> Result<Self> {
        if anchors.len() != self.spec.classes.len() {
            return Err(Error::invalid(
                "anchors",
                format!(
                    "expected {} anchors, got {}",
                    self.spec.classes.len(),
                    anchors.len()
                ),
            ));
        }
        self.anchors = anchors;
        Ok(self)
    }

    pub fn spec(&self) -> &SyntheticDomain {
        &self.spec
    }

    pub fn anchors(&self) -> &[Anchor] {
        &self.anchors
    }

    pub fn frame(&self, id: FrameId) -> Result<&Frame> {
        self.frames.get(id.0).ok_or(Error::UnknownFrame(id.0))
    }

    pub fn num_frames(&self) -> usize {
        self.frames.len()
    }

    /// Ground-truth objects of `class` across `frames`.
    pub fn objects<'a>(
        &'a self,
        frames: &'a [FrameId],
        class: usize,
    ) -> impl Iterator<Item = &'a SyntheticObject> + 'a {
        frames
            .iter()
            .filter_map(move |f| self.frames.get(f.0))
            .flat_map(|f| &f.objects)
            .filter(move |o| o.class == class)
    }

    fn eval_box(&self, frame: &Frame, obj_idx: usize, offset: [f64; 3], dims: [f64; 3]) -> BoxEval {
        let g = self.spec.grid;
        let obj = &frame.objects[obj_idx];
        let half = dims.map(|d| d / 2.0);
        let mut hist = vec![0u32; g * g * g];
        let mut own_in = 0u32;
        let mut foreign_in = 0u32;

        let mut visit = |q: [f64; 3], own: bool| {
            if (0..3).any(|k| q[k].abs() > half[k]) {
                return;
            }
            if own {
                own_in += 1;
            } else {
                foreign_in += 1;
            }
            hist[cell_of(q, dims, g).expect("inside")] += 1;
        };

        // the box shares the object's yaw, so object-frame points only shift
        for p in &obj.points {
            visit(
                [
                    p[0] as f64 - offset[0],
                    p[1] as f64 - offset[1],
                    p[2] as f64 - offset[2],
                ],
                true,
            );
        }
        for p in &obj.context {
            visit(
                [
                    p[0] as f64 - offset[0],
                    p[1] as f64 - offset[1],
                    p[2] as f64 - offset[2],
                ],
                false,
            );
        }

        let center = obj.to_world(offset);
        let (s, c) = obj.yaw.sin_cos();
        let to_box = |w: [f64; 3]| {
            let d = [w[0] - center[0], w[1] - center[1], w[2] - center[2]];
            [c * d[0] + s * d[1], -s * d[0] + c * d[1], d[2]]
        };
        let reach = half[0].hypot(half[1]);
        for (j, other) in frame.objects.iter().enumerate() {
            if j == obj_idx {
                continue;
            }
            let dist = (other.center[0] - center[0]).hypot(other.center[1] - center[1]);
            if dist > reach + other.radius(self.spec.context_decay) {
                continue;
            }
            for p in other.points.iter().chain(&other.context) {
                let w = other.to_world(p.map(|v| v as f64));
                visit(to_box(w), false);
            }
        }
        let lo = frame
            .clutter
            .partition_point(|p| (p[0] as f64) < center[0] - reach);
        for p in &frame.clutter[lo..] {
            let w = p.map(|v| v as f64);
            if w[0] > center[0] + reach {
                break;
            }
            if (w[1] - center[1]).abs() > reach {
                continue;
            }
            visit(to_box(w), false);
        }

        let total = obj.points.len() as f64 + foreign_in as f64;
        let score = if total > 0.0 {
            own_in as f64 / total
        } else {
            0.0
        };
        BoxEval {
            score,
            inside: own_in + foreign_in,
            hist,
        }
    }

    fn proposal(
        &self,
        frame: &Frame,
        obj_idx: usize,
        cand: &Candidate,
        anchor: &Anchor,
        sizes: AnchorSizes,
        dims: [f64; 3],
    ) -> Result<ScoredProposal> {
        let obj = &frame.objects[obj_idx];
        let eval = self.eval_box(frame, obj_idx, cand.center_offset, dims);
        let hist = eval.hist;
        let box_center = obj.to_world(cand.center_offset);
        let snap = |v: f64| (v / ANCHOR_GRID_STEP).round() * ANCHOR_GRID_STEP;
        let anchor_pos = [
            snap(obj.center[0]) + anchor.x,
            snap(obj.center[1]) + anchor.y,
            anchor.z,
        ];
        let predicted = self.predicted_size(obj, cand);
        Ok(ScoredProposal {
            score: eval.score,
            center_residuals: [0, 1, 2].map(|k| box_center[k] - anchor_pos[k]),
            yaw_residual: normalize_yaw(obj.yaw - anchor.theta()),
            size_residuals: [0, 1, 2].map(|k| predicted[k] - sizes.to_array()[k]),
            feature: FeatureVector::new(normalize_hist(&hist, eval.inside))?,
        })
    }

    fn predicted_size(&self, obj: &SyntheticObject, cand: &Candidate) -> [f64; 3] {
        let t = obj.size.to_array();
        [0, 1, 2].map(|k| (t[k] + cand.size_error[k]).max(MIN_BOX_SIZE))
    }
}

impl FeatureExtractor for SyntheticExtractor {
    fn dim(&self) -> usize {
        self.spec.dim()
    }

    fn num_classes(&self) -> usize {
        self.spec.classes.len()
    }

    fn anchor(&self, class: usize) -> Result<Anchor> {
        self.anchors
            .get(class)
            .copied()
            .ok_or(Error::UnknownClass(class))
    }

    fn frames(&self) -> Vec<FrameId> {
        (0..self.frames.len()).map(FrameId).collect()
    }

    fn propose_with(
        &self,
        frame_id: FrameId,
        class: usize,
        sizes: AnchorSizes,
        policy: ResidualPolicy,
    ) -> Result<Vec<ScoredProposal>> {
        let anchor = self.anchor(class)?;
        let frame = self.frame(frame_id)?;
        let mut out = Vec::new();
        for (i, obj) in frame.objects.iter().enumerate() {
            if obj.class != class {
                continue;
            }
            let dims_for = |cand: &Candidate| match policy {
                ResidualPolicy::Suppress => sizes.to_array(),
                ResidualPolicy::Apply => self.predicted_size(obj, cand),
            };
            if self.spec.nms {
                let mut best: Option<(usize, f64)> = None;
                for (ci, cand) in obj.candidates.iter().enumerate() {
                    let e: f64 = cand.center_offset.iter().map(|v| v * v).sum();
                    if best.is_none_or(|(_, b)| e < b) {
                        best = Some((ci, e));
                    }
                }
                if let Some((ci, _)) = best {
                    let cand = &obj.candidates[ci];
                    out.push(self.proposal(frame, i, cand, &anchor, sizes, dims_for(cand))?);
                }
            } else {
                for cand in &obj.candidates {
                    out.push(self.proposal(frame, i, cand, &anchor, sizes, dims_for(cand))?);
                }
            }
        }
        Ok(out)
    }
}

/// Mean score over every proposal for `class` on `frames` under `sizes`, with
/// no gate applied. Serves as the detection-quality proxy when judging a
/// fitness curve.
pub fn mean_capture_score<E: FeatureExtractor + ?Sized>(
    extractor: &E,
    frames: &[FrameId],
    class: usize,
    sizes: AnchorSizes,
) -> Result<f64> {
    let per_frame: Vec<Vec<f64>> = frames
        .par_iter()
        .map(|&f| {
            extractor
                .propose(f, class, sizes)
                .map(|ps| ps.iter().map(|p| p.score).collect())
        })
        .collect::<Result<_>>()?;
    let scores: Vec<f64> = per_frame.into_iter().flatten().collect();
    if scores.is_empty() {
        return Ok(0.0);
    }
    Ok(scores.iter().sum::<f64>() / scores.len() as f64)
}

// ---------------------------------------------------------------------------
// Domain cache: JSON manifest plus an SFDB file of 3-D points.

pub const DOMAIN_FORMAT: &str = "anchor-calib-domain";
pub const DOMAIN_VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
struct ObjectRecord {
    class: usize,
    center: [f64; 3],
    size: AnchorSizes,
    yaw: f64,
    candidates: Vec<Candidate>,
    points: usize,
    context: usize,
}

#[derive(Debug, Serialize, Deserialize)]
struct FrameRecord {
    objects: Vec<ObjectRecord>,
    clutter: usize,
}

/// Manifest describing a cached domain. Points are stored in `points_file`
/// (relative to the manifest) frame by frame: for each object its surface
/// points then its context points, in object coordinates; then the frame's
/// clutter in world coordinates.
#[derive(Debug, Serialize, Deserialize)]
pub struct DomainManifest {
    pub format: String,
    pub version: u32,
    pub spec: SyntheticDomain,
    pub anchors: Vec<Anchor>,
    pub n_frames: usize,
    pub points_file: String,
    frames: Vec<FrameRecord>,
}

impl SyntheticExtractor {
    /// Writes `<stem>.json` and `<stem>.points.sfdb` into `dir`. Returns the
    /// manifest path.
    pub fn save(&self, dir: &Path, stem: &str) -> Result<PathBuf> {
        let points_name = format!("{stem}.points.sfdb");
        let mut points: Vec<f32> = Vec::new();
        let mut frames = Vec::with_capacity(self.frames.len());
        for f in &self.frames {
            let mut objects = Vec::with_capacity(f.objects.len());
            for o in &f.objects {
                points.extend(o.points.iter().flatten());
                points.extend(o.context.iter().flatten());
                objects.push(ObjectRecord {
                    class: o.class,
                    center: o.center,
                    size: o.size,
                    yaw: o.yaw,
                    candidates: o.candidates.clone(),
                    points: o.points.len(),
                    context: o.context.len(),
                });
            }
            points.extend(f.clutter.iter().flatten());
            frames.push(FrameRecord {
                objects,
                clutter: f.clutter.len(),
            });
        }
        let db = FeatureDatabase::from_flat(3, points)?;
        io::write_sfdb(&dir.join(&points_name), &db)?;
        let manifest = DomainManifest {
            format: DOMAIN_FORMAT.into(),
            version: DOMAIN_VERSION,
            spec: self.spec.clone(),
            anchors: self.anchors.clone(),
            n_frames: self.frames.len(),
            points_file: points_name,
            frames,
        };
        let path = dir.join(format!("{stem}.json"));
        io::write_json(&path, &manifest)?;
        Ok(path)
    }

    /// Loads a domain written by [`SyntheticExtractor::save`].
    pub fn load(manifest_path: &Path) -> Result<Self> {
        let manifest: DomainManifest = io::read_json(manifest_path)?;
        let bad = |r: String| Error::format(manifest_path, r);
        if manifest.format != DOMAIN_FORMAT || manifest.version != DOMAIN_VERSION {
            return Err(bad(format!(
                "unsupported domain format {} v{}",
                manifest.format, manifest.version
            )));
        }
        if manifest.frames.len() != manifest.n_frames {
            return Err(bad("frame count does not match n_frames".into()));
        }
        let dir = manifest_path.parent().unwrap_or(Path::new("."));
        let db = io::read_sfdb(&dir.join(&manifest.points_file))?;
        if db.dim() != 3 {
            return Err(bad(format!("points file has dim {}, expected 3", db.dim())));
        }
        let mut rows = db.rows().map(|r| [r[0], r[1], r[2]]);
        let mut take = |n: usize| -> Result<Vec<[f32; 3]>> {
            let v: Vec<_> = rows.by_ref().take(n).collect();
            if v.len() != n {
                return Err(Error::format(
                    manifest_path,
                    "points file is shorter than the manifest",
                ));
            }
            Ok(v)
        };
        let mut frames = Vec::with_capacity(manifest.frames.len());
        for fr in &manifest.frames {
            let mut objects = Vec::with_capacity(fr.objects.len());
            for o in &fr.objects {
                objects.push(SyntheticObject {
                    class: o.class,
                    center: o.center,
                    size: o.size,
                    yaw: o.yaw,
                    candidates: o.candidates.clone(),
                    points: take(o.points)?,
                    context: take(o.context)?,
                });
            }
            frames.push(Frame::new(objects, take(fr.clutter)?));
        }
        if rows.next().is_some() {
            return Err(bad("points file is longer than the manifest".into()));
        }
        SyntheticExtractor::from_frames(manifest.spec, frames)?.with_anchors(manifest.anchors)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quiet(mut spec: SyntheticDomain) -> SyntheticDomain {
        spec.clutter_rate = 0.0;
        spec.context_density = 0.0;
        spec.center_noise = 0.0;
        spec
    }

    #[test]
    fn empty_domain_proposes_nothing() {
        let spec = SyntheticDomain {
            objects_per_frame: 0.0,
            ..SyntheticDomain::kitti_like(3)
        };
        let ex = generate_domain(&spec, 5).unwrap();
        for f in ex.frames() {
            assert!(ex.frame(f).unwrap().objects.is_empty());
            let sizes = ex.anchor(0).unwrap().sizes;
            assert!(ex.propose(f, 0, sizes).unwrap().is_empty());
        }
    }

    #[test]
    fn validation_names_the_field() {
        let spec = SyntheticDomain {
            objects_per_frame: -1.0,
            ..Default::default()
        };
        match spec.validate() {
            Err(Error::InvalidConfig { field, .. }) => assert_eq!(field, "objects_per_frame"),
            other => panic!("unexpected {other:?}"),
        }
        let mut spec = SyntheticDomain::default();
        spec.classes[0].size_std = [1.0, 0.1, 0.1];
        assert!(spec.validate().is_err());
        assert!(generate_domain(&SyntheticDomain::default(), 0).is_err());
    }

    #[test]
    fn perfect_capture_matches_canonical_descriptor() {
        let spec = quiet(SyntheticDomain::kitti_like(11));
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let size = AnchorSizes::new(1.7, 4.0, 1.45).unwrap();
        let obj = SyntheticObject::sample(&spec, 0, [0.0, 0.0, 0.725], size, 0.4, &mut rng);
        let expected = obj.canonical_descriptor(spec.grid);
        let ex =
            SyntheticExtractor::from_frames(spec, vec![Frame::new(vec![obj], vec![])]).unwrap();
        let props = ex.propose(FrameId(0), 0, size).unwrap();
        assert_eq!(props.len(), 1);
        assert_eq!(props[0].score, 1.0);
        assert_eq!(props[0].feature.values(), expected.as_slice());
        let total: f32 = expected.iter().sum();
        assert!((total - 1.0).abs() < 1e-5);
    }

    #[test]
    fn yaw_flip_keeps_features() {
        let spec = quiet(SyntheticDomain::kitti_like(2));
        let size = AnchorSizes::new(1.6, 3.9, 1.5).unwrap();
        let mk = |yaw: f64| {
            let mut rng = ChaCha8Rng::seed_from_u64(5);
            SyntheticObject::sample(&spec, 0, [3.0, -2.0, 0.75], size, yaw, &mut rng)
        };
        let a =
            SyntheticExtractor::from_frames(spec.clone(), vec![Frame::new(vec![mk(0.0)], vec![])])
                .unwrap();
        let b =
            SyntheticExtractor::from_frames(spec.clone(), vec![Frame::new(vec![mk(PI)], vec![])])
                .unwrap();
        for scale in [0.7, 1.0, 1.3] {
            let s = size.scaled(scale).unwrap();
            let pa = a.propose(FrameId(0), 0, s).unwrap();
            let pb = b.propose(FrameId(0), 0, s).unwrap();
            assert_eq!(pa[0].feature, pb[0].feature);
            assert_eq!(pa[0].score, pb[0].score);
        }
    }

    #[test]
    fn object_points_stay_near_the_box() {
        let ex = generate_domain(&SyntheticDomain::waymo_like(4), 10).unwrap();
        for f in ex.frames() {
            for o in &ex.frame(f).unwrap().objects {
                let d = o.size.to_array();
                for p in &o.points {
                    for k in 0..3 {
                        assert!((p[k] as f64).abs() <= 0.75 * d[k]);
                    }
                }
            }
        }
    }

    #[test]
    fn nms_off_returns_every_candidate() {
        let spec = SyntheticDomain {
            nms: false,
            ..SyntheticDomain::kitti_like(8)
        };
        let ex = generate_domain(&spec, 3).unwrap();
        let sizes = ex.anchor(0).unwrap().sizes;
        for f in ex.frames() {
            let n = ex.frame(f).unwrap().objects.len();
            assert_eq!(
                ex.propose(f, 0, sizes).unwrap().len(),
                n * spec.proposals_per_object
            );
        }
    }

    #[test]
    fn unknown_frame_and_class() {
        let ex = generate_domain(&SyntheticDomain::kitti_like(1), 2).unwrap();
        let s = ex.anchor(0).unwrap().sizes;
        assert!(matches!(
            ex.propose(FrameId(2), 0, s),
            Err(Error::UnknownFrame(2))
        ));
        assert!(matches!(
            ex.propose(FrameId(0), 1, s),
            Err(Error::UnknownClass(1))
        ));
    }

    #[test]
    fn cache_round_trip() {
        let ex = generate_domain(&SyntheticDomain::kitti_like(21), 4).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let manifest = ex.save(dir.path(), "target").unwrap();
        let back = SyntheticExtractor::load(&manifest).unwrap();
        assert_eq!(back.frames, ex.frames);
        assert_eq!(back.anchors, ex.anchors);
        assert_eq!(back.spec, ex.spec);
    }
}
