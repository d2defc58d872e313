//! The frozen-detector boundary and the two feature-database builders.
//!
//! A [`FeatureExtractor`] stands in for the region-proposal stage of a
//! trained anchor-based detector bound to one dataset. The builders only see
//! proposals through this trait, so a bridge to a real network only has to
//! implement [`FeatureExtractor::propose_with`] plus the metadata accessors.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::{Anchor, AnchorSizes, FeatureDatabase, ScoredProposal};

/// Index of a frame within one extractor's domain.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct FrameId(pub usize);

/// How predicted size residuals enter the proposal box.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ResidualPolicy {
    /// Boxes keep the anchor sizes; only center and yaw residuals apply.
    Suppress,
    /// Boxes use anchor sizes plus predicted size residuals.
    Apply,
}

pub trait FeatureExtractor: Sync {
    /// Latent feature dimension.
    fn dim(&self) -> usize;

    fn num_classes(&self) -> usize;

    /// Anchor the detector was configured with for `class`.
    fn anchor(&self, class: usize) -> Result<Anchor>;

    /// Every frame in the bound domain, in canonical order.
    fn frames(&self) -> Vec<FrameId>;

    /// Proposals for `class` on `frame` with anchors resized to `sizes`.
    /// Must be a pure function of its arguments.
    fn propose_with(
        &self,
        frame: FrameId,
        class: usize,
        sizes: AnchorSizes,
        policy: ResidualPolicy,
    ) -> Result<Vec<ScoredProposal>>;

    /// Proposals with size residuals suppressed.
    fn propose(
        &self,
        frame: FrameId,
        class: usize,
        sizes: AnchorSizes,
    ) -> Result<Vec<ScoredProposal>> {
        self.propose_with(frame, class, sizes, ResidualPolicy::Suppress)
    }
}

/// Deterministic frame subsampling: seeded shuffle, keep a prefix, restore
/// the original order.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FrameSubset {
    pub fraction: f64,
    pub seed: u64,
}

/// Confidence gate and collection limits for database construction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GateConfig {
    /// Proposals are kept when `score > tau`.
    pub tau: f64,
    pub max_features: Option<usize>,
    pub frame_subset: Option<FrameSubset>,
    /// Build the reference database with size residuals suppressed, the
    /// same way target databases are built.
    pub suppress_size_residuals_in_reference: bool,
}

impl Default for GateConfig {
    fn default() -> Self {
        GateConfig {
            tau: 0.6,
            max_features: None,
            frame_subset: None,
            suppress_size_residuals_in_reference: true,
        }
    }
}

impl GateConfig {
    pub fn with_tau(tau: f64) -> Self {
        GateConfig {
            tau,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.tau) {
            return Err(Error::invalid(
                "gate.tau",
                format!("must lie in [0, 1], got {}", self.tau),
            ));
        }
        if let Some(s) = &self.frame_subset {
            if !(s.fraction > 0.0 && s.fraction <= 1.0) {
                return Err(Error::invalid(
                    "gate.frame_subset.fraction",
                    format!("must lie in (0, 1], got {}", s.fraction),
                ));
            }
        }
        Ok(())
    }

    fn reference_policy(&self) -> ResidualPolicy {
        if self.suppress_size_residuals_in_reference {
            ResidualPolicy::Suppress
        } else {
            ResidualPolicy::Apply
        }
    }
}

/// Applies the configured frame subset, preserving input order.
pub fn select_frames(frames: &[FrameId], subset: Option<&FrameSubset>) -> Vec<FrameId> {
    let Some(subset) = subset else {
        return frames.to_vec();
    };
    let keep = ((frames.len() as f64 * subset.fraction).ceil() as usize).clamp(1, frames.len());
    let mut idx: Vec<usize> = (0..frames.len()).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(subset.seed));
    idx.truncate(keep);
    idx.sort_unstable();
    idx.into_iter().map(|i| frames[i]).collect()
}

fn collect_features<E: FeatureExtractor + ?Sized>(
    extractor: &E,
    frames: &[FrameId],
    class: usize,
    sizes: AnchorSizes,
    policy: ResidualPolicy,
    gate: &GateConfig,
) -> Result<FeatureDatabase> {
    gate.validate()?;
    if frames.is_empty() {
        return Err(Error::invalid("frames", "at least one frame is required"));
    }
    let frames = select_frames(frames, gate.frame_subset.as_ref());
    let dim = extractor.dim();
    let per_frame: Vec<Vec<ScoredProposal>> = frames
        .par_iter()
        .map(|&f| extractor.propose_with(f, class, sizes, policy))
        .collect::<Result<_>>()?;

    let mut db = FeatureDatabase::new(dim)?;
    'frames: for proposals in per_frame {
        for p in proposals {
            if p.score > gate.tau {
                if gate.max_features.is_some_and(|m| db.len() >= m) {
                    break 'frames;
                }
                db.push_vector(&p.feature)?;
            }
        }
    }
    Ok(db)
}

/// Reference database: gated features of every frame, produced under the
/// extractor's own anchor for `class`.
///
/// Fails with [`Error::ZeroFeatures`] when nothing passes the gate.
pub fn build_reference_db<E: FeatureExtractor + ?Sized>(
    extractor: &E,
    frames: &[FrameId],
    class: usize,
    gate: &GateConfig,
) -> Result<FeatureDatabase> {
    let sizes = extractor.anchor(class)?.sizes;
    let db = collect_features(
        extractor,
        frames,
        class,
        sizes,
        gate.reference_policy(),
        gate,
    )?;
    if db.is_empty() {
        return Err(Error::ZeroFeatures { tau: gate.tau });
    }
    Ok(db)
}

/// Target database under candidate anchor `sizes`, with size residuals
/// suppressed so only the anchor choice changes the features.
///
/// An empty result is returned as an empty database, not an error.
pub fn build_target_db<E: FeatureExtractor + ?Sized>(
    extractor: &E,
    frames: &[FrameId],
    class: usize,
    sizes: AnchorSizes,
    gate: &GateConfig,
) -> Result<FeatureDatabase> {
    collect_features(
        extractor,
        frames,
        class,
        sizes,
        ResidualPolicy::Suppress,
        gate,
    )
}
