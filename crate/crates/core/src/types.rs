//! Value types shared by every stage of the pipeline: anchors, their size
//! triples, latent feature vectors and the databases that collect them.

use std::f64::consts::PI;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default lower bound applied to perturbed anchor sizes, in meters.
pub const DEFAULT_SIZE_FLOOR: f64 = 0.05;

/// One of the three calibrated anchor dimensions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Axis {
    W,
    L,
    H,
}

impl Axis {
    pub const ALL: [Axis; 3] = [Axis::W, Axis::L, Axis::H];

    pub fn index(self) -> usize {
        match self {
            Axis::W => 0,
            Axis::L => 1,
            Axis::H => 2,
        }
    }

    pub fn letter(self) -> char {
        match self {
            Axis::W => 'w',
            Axis::L => 'l',
            Axis::H => 'h',
        }
    }
}

impl fmt::Display for Axis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.letter())
    }
}

/// Box width, length and height in meters. All components are finite and
/// strictly positive.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawSizes", into = "RawSizes")]
pub struct AnchorSizes {
    w: f64,
    l: f64,
    h: f64,
}

#[derive(Serialize, Deserialize)]
struct RawSizes {
    w: f64,
    l: f64,
    h: f64,
}

impl TryFrom<RawSizes> for AnchorSizes {
    type Error = Error;

    fn try_from(raw: RawSizes) -> Result<Self> {
        AnchorSizes::new(raw.w, raw.l, raw.h)
    }
}

impl From<AnchorSizes> for RawSizes {
    fn from(s: AnchorSizes) -> Self {
        RawSizes {
            w: s.w,
            l: s.l,
            h: s.h,
        }
    }
}

impl AnchorSizes {
    pub fn new(w: f64, l: f64, h: f64) -> Result<Self> {
        for (name, v) in [("w", w), ("l", l), ("h", h)] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::invalid(
                    format!("anchor size {name}"),
                    format!("must be finite and > 0, got {v}"),
                ));
            }
        }
        Ok(AnchorSizes { w, l, h })
    }

    pub fn from_array(v: [f64; 3]) -> Result<Self> {
        Self::new(v[0], v[1], v[2])
    }

    pub fn w(&self) -> f64 {
        self.w
    }

    pub fn l(&self) -> f64 {
        self.l
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn get(&self, axis: Axis) -> f64 {
        self.to_array()[axis.index()]
    }

    pub fn to_array(&self) -> [f64; 3] {
        [self.w, self.l, self.h]
    }

    /// Copy with one axis replaced.
    pub fn with_axis(&self, axis: Axis, value: f64) -> Result<Self> {
        let mut v = self.to_array();
        v[axis.index()] = value;
        Self::from_array(v)
    }

    /// Componentwise scaling by a positive factor.
    pub fn scaled(&self, factor: f64) -> Result<Self> {
        Self::new(self.w * factor, self.l * factor, self.h * factor)
    }

    /// Largest componentwise relative deviation `|self - reference| / reference`.
    pub fn max_relative_error(&self, reference: &AnchorSizes) -> f64 {
        self.to_array()
            .iter()
            .zip(reference.to_array())
            .map(|(a, r)| (a - r).abs() / r)
            .fold(0.0, f64::max)
    }

    pub fn volume(&self) -> f64 {
        self.w * self.l * self.h
    }
}

impl fmt::Display for AnchorSizes {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(w={:.4}, l={:.4}, h={:.4})", self.w, self.l, self.h)
    }
}

/// Signed size offsets in meters.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct SizePerturbation {
    pub dw: f64,
    pub dl: f64,
    pub dh: f64,
}

impl SizePerturbation {
    pub fn new(dw: f64, dl: f64, dh: f64) -> Self {
        SizePerturbation { dw, dl, dh }
    }

    pub fn from_array(v: [f64; 3]) -> Self {
        SizePerturbation::new(v[0], v[1], v[2])
    }

    pub fn to_array(&self) -> [f64; 3] {
        [self.dw, self.dl, self.dh]
    }

    pub fn negated(&self) -> Self {
        SizePerturbation::new(-self.dw, -self.dl, -self.dh)
    }
}

/// Result of [`apply_perturbation`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Perturbed {
    pub sizes: AnchorSizes,
    /// True when at least one component hit the floor.
    pub clamped: bool,
}

/// Adds `eps` to `sizes` componentwise, raising any component that falls
/// below `floor` back up to it.
///
/// Clamping is reported through [`Perturbed::clamped`] rather than raised.
/// Panics if `floor` is not a positive finite number.
pub fn apply_perturbation(sizes: AnchorSizes, eps: SizePerturbation, floor: f64) -> Perturbed {
    assert!(
        floor.is_finite() && floor > 0.0,
        "size floor must be positive, got {floor}"
    );
    let mut clamped = false;
    let mut out = [0.0; 3];
    for ((o, s), d) in out.iter_mut().zip(sizes.to_array()).zip(eps.to_array()) {
        let v = s + d;
        // NaN deltas also land on the floor
        if v >= floor {
            *o = v;
        } else {
            *o = floor;
            clamped = true;
        }
    }
    Perturbed {
        sizes: AnchorSizes::from_array(out).expect("floored sizes are positive"),
        clamped,
    }
}

/// Wraps an angle to `[-pi, pi)`.
pub fn normalize_yaw(theta: f64) -> f64 {
    let wrapped = (theta + PI).rem_euclid(2.0 * PI) - PI;
    // rem_euclid can round up to exactly 2*pi
    if wrapped >= PI {
        wrapped - 2.0 * PI
    } else {
        wrapped
    }
}

/// Full 7-DoF anchor. Only the size triple is ever calibrated; position
/// offsets and yaw are carried as configured.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Anchor {
    pub x: f64,
    pub y: f64,
    pub z: f64,
    pub sizes: AnchorSizes,
    theta: f64,
}

impl Anchor {
    pub fn new(x: f64, y: f64, z: f64, sizes: AnchorSizes, theta: f64) -> Self {
        Anchor {
            x,
            y,
            z,
            sizes,
            theta: normalize_yaw(theta),
        }
    }

    /// Anchor at the origin with zero yaw.
    pub fn from_sizes(sizes: AnchorSizes) -> Self {
        Anchor::new(0.0, 0.0, 0.0, sizes, 0.0)
    }

    pub fn theta(&self) -> f64 {
        self.theta
    }

    pub fn with_sizes(&self, sizes: AnchorSizes) -> Self {
        Anchor { sizes, ..*self }
    }
}

/// One latent feature vector. Values are stored in single precision, which
/// is also the on-disk precision of feature databases.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVector(Vec<f32>);

impl FeatureVector {
    pub fn new(values: Vec<f32>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::invalid("feature", "dimension must be >= 1"));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteFeature { index: 0 });
        }
        Ok(FeatureVector(values))
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn values(&self) -> &[f32] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f32> {
        self.0
    }
}

/// Fixed-dimension collection of feature vectors, stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureDatabase {
    dim: usize,
    data: Vec<f32>,
}

impl FeatureDatabase {
    pub fn new(dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::invalid("feature database dim", "must be >= 1"));
        }
        Ok(FeatureDatabase {
            dim,
            data: Vec::new(),
        })
    }

    /// Builds a database from a row-major buffer. Every value must be finite.
    pub fn from_flat(dim: usize, data: Vec<f32>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::invalid("feature database dim", "must be >= 1"));
        }
        if !data.len().is_multiple_of(dim) {
            return Err(Error::invalid(
                "feature database",
                format!(
                    "buffer length {} is not a multiple of dim {dim}",
                    data.len()
                ),
            ));
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFiniteFeature { index: pos / dim });
        }
        Ok(FeatureDatabase { dim, data })
    }

    pub fn from_rows<I, R>(dim: usize, rows: I) -> Result<Self>
    where
        I: IntoIterator<Item = R>,
        R: AsRef<[f32]>,
    {
        let mut db = FeatureDatabase::new(dim)?;
        for row in rows {
            db.push(row.as_ref())?;
        }
        Ok(db)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.data.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn push(&mut self, row: &[f32]) -> Result<()> {
        if row.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                actual: row.len(),
            });
        }
        if row.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteFeature { index: self.len() });
        }
        self.data.extend_from_slice(row);
        Ok(())
    }

    pub fn push_vector(&mut self, f: &FeatureVector) -> Result<()> {
        self.push(f.values())
    }

    /// Appends every row of `other`.
    pub fn extend_from(&mut self, other: &FeatureDatabase) -> Result<()> {
        if other.dim != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                actual: other.dim,
            });
        }
        self.data.extend_from_slice(&other.data);
        Ok(())
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn rows(&self) -> std::slice::ChunksExact<'_, f32> {
        self.data.chunks_exact(self.dim)
    }

    pub fn as_flat(&self) -> &[f32] {
        &self.data
    }

    pub fn truncate(&mut self, len: usize) {
        self.data.truncate(len * self.dim);
    }
}

/// A confidence-scored region proposal.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoredProposal {
    /// Classification confidence in `[0, 1]`.
    pub score: f64,
    pub center_residuals: [f64; 3],
    pub yaw_residual: f64,
    /// Predicted size refinement. Carried, but only applied when the
    /// extractor runs with size residuals enabled.
    pub size_residuals: [f64; 3],
    pub feature: FeatureVector,
}
