//! Anchor-size search: a per-axis linear sweep for initialization followed
//! by differential evolution over (w, l, h).
//!
//! Both searches maximize a fitness function over [`AnchorSizes`]. An
//! objective returns `f64::NEG_INFINITY` for candidates that produce no
//! usable target features; the searches route around those.
//! [`calibrate`] wires the feature builders, the mixture fit and both
//! searches together for one class.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::extractor::{
    build_reference_db, build_target_db, FeatureExtractor, FrameId, GateConfig,
};
use crate::gmm::{fit_em, fitness, EmConfig, Gmm};
use crate::types::{AnchorSizes, Axis, FeatureDatabase, DEFAULT_SIZE_FLOOR};

/// Grid for one axis of the linear sweep.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepConfig {
    pub axis: Axis,
    /// Half-width of the swept interval as a fraction of the source value.
    pub relative_range: f64,
    pub steps: usize,
}

impl SweepConfig {
    pub fn new(axis: Axis) -> Self {
        SweepConfig {
            axis,
            relative_range: 0.5,
            steps: 21,
        }
    }

    /// Default sweeps for all three axes.
    pub fn all() -> Vec<SweepConfig> {
        Axis::ALL.iter().map(|&a| SweepConfig::new(a)).collect()
    }

    pub fn validate(&self) -> Result<()> {
        if self.steps < 2 {
            return Err(Error::invalid(
                format!("sweep.{}.steps", self.axis),
                "must be >= 2",
            ));
        }
        if !(self.relative_range > 0.0 && self.relative_range < 1.0) {
            return Err(Error::invalid(
                format!("sweep.{}.relative_range", self.axis),
                format!("must lie in (0, 1), got {}", self.relative_range),
            ));
        }
        Ok(())
    }

    /// Grid values `source * (1 - r + 2 r k / (steps - 1))`.
    pub fn grid(&self, source: f64) -> Vec<f64> {
        let r = self.relative_range;
        (0..self.steps)
            .map(|k| source * (1.0 - r + 2.0 * r * k as f64 / (self.steps - 1) as f64))
            .collect()
    }
}

/// Differential evolution settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DeConfig {
    pub population: usize,
    /// Mutation amplitude.
    pub eta: f64,
    pub crossover_rate: f64,
    /// Half-width of the initial sampling box as a fraction of the source.
    pub init_range: f64,
    pub max_iters: usize,
    /// Smallest best-fitness gain that resets the stall counter.
    pub stall_tolerance: f64,
    pub stall_generations: usize,
    /// Lower bound for every evaluated size, meters.
    pub size_floor: f64,
    pub seed: u64,
}

impl Default for DeConfig {
    fn default() -> Self {
        DeConfig {
            population: 16,
            eta: 0.7,
            crossover_rate: 0.7,
            init_range: 0.3,
            max_iters: 200,
            stall_tolerance: 1e-6,
            stall_generations: 20,
            size_floor: DEFAULT_SIZE_FLOOR,
            seed: 0,
        }
    }
}

impl DeConfig {
    pub fn validate(&self) -> Result<()> {
        if self.population < 4 {
            return Err(Error::invalid("de.population", "must be >= 4"));
        }
        if !(self.eta.is_finite() && self.eta > 0.0) {
            return Err(Error::invalid("de.eta", "must be > 0"));
        }
        if !(0.0..=1.0).contains(&self.crossover_rate) {
            return Err(Error::invalid("de.crossover_rate", "must lie in [0, 1]"));
        }
        if !(self.init_range >= 0.0 && self.init_range < 1.0) {
            return Err(Error::invalid("de.init_range", "must lie in [0, 1)"));
        }
        if self.max_iters == 0 {
            return Err(Error::invalid("de.max_iters", "must be >= 1"));
        }
        if self.stall_tolerance.is_nan() || self.stall_tolerance < 0.0 {
            return Err(Error::invalid("de.stall_tolerance", "must be >= 0"));
        }
        if self.stall_generations == 0 {
            return Err(Error::invalid("de.stall_generations", "must be >= 1"));
        }
        if !(self.size_floor.is_finite() && self.size_floor > 0.0) {
            return Err(Error::invalid("de.size_floor", "must be > 0"));
        }
        Ok(())
    }
}

/// One evaluated grid point. `fitness` is `-inf` for an empty database and
/// serializes as `null`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub value: f64,
    #[serde(with = "fitness_json")]
    pub fitness: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepCurve {
    pub axis: Axis,
    pub points: Vec<CurvePoint>,
}

impl SweepCurve {
    /// Index of the best point: highest fitness, then closest to `source`,
    /// then lowest index. `None` if every point is `-inf`.
    pub fn best_index(&self, source: f64) -> Option<usize> {
        let mut best: Option<usize> = None;
        for (i, p) in self.points.iter().enumerate() {
            if p.fitness == f64::NEG_INFINITY {
                continue;
            }
            let better = match best {
                None => true,
                Some(b) => {
                    let q = &self.points[b];
                    p.fitness > q.fitness
                        || (p.fitness == q.fitness
                            && (p.value - source).abs() < (q.value - source).abs())
                }
            };
            if better {
                best = Some(i);
            }
        }
        best
    }

    /// True when the curve was sampled on exactly the grid `cfg` describes
    /// around `source`.
    pub fn matches(&self, cfg: &SweepConfig, source: f64) -> bool {
        let grid = cfg.grid(source);
        self.axis == cfg.axis
            && self.points.len() == grid.len()
            && self
                .points
                .iter()
                .zip(&grid)
                .all(|(p, g)| (p.value - g).abs() <= 1e-9 * g.abs().max(1.0))
    }
}

/// Result of [`linear_sweep`].
#[derive(Debug, Clone, PartialEq)]
pub struct SweepOutcome {
    /// Per-axis winners assembled into one candidate.
    pub initial: AnchorSizes,
    pub curves: Vec<SweepCurve>,
    /// Fitness evaluations spent; reused curves cost nothing.
    pub evaluations: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    Converged,
    MaxIters,
}

/// Result of [`differential_evolution`].
#[derive(Debug, Clone, PartialEq)]
pub struct DeOutcome {
    pub best: AnchorSizes,
    pub best_fitness: f64,
    /// Best fitness after initialization, then after each generation.
    pub trace: Vec<f64>,
    pub generations: usize,
    pub termination: Termination,
    pub evaluations: usize,
}

fn evaluate_all<F>(eval: &F, candidates: &[AnchorSizes]) -> Result<Vec<f64>>
where
    F: Fn(AnchorSizes) -> Result<f64> + Sync,
{
    let out: Vec<f64> = candidates
        .par_iter()
        .map(|&s| eval(s))
        .collect::<Result<_>>()?;
    if out.iter().any(|f| f.is_nan() || *f == f64::INFINITY) {
        return Err(Error::invalid("fitness", "objective returned NaN or +inf"));
    }
    Ok(out)
}

/// Sweeps each configured axis with the other two held at `source` and
/// assembles the per-axis winners.
///
/// Curves in `reuse` that match an axis grid are taken as-is instead of
/// being re-evaluated. Axes without a sweep keep their source value.
pub fn linear_sweep<F>(
    eval: &F,
    source: AnchorSizes,
    cfgs: &[SweepConfig],
    reuse: &[SweepCurve],
) -> Result<SweepOutcome>
where
    F: Fn(AnchorSizes) -> Result<f64> + Sync,
{
    let mut initial = source.to_array();
    let mut curves = Vec::with_capacity(cfgs.len());
    let mut evaluations = 0;
    for cfg in cfgs {
        cfg.validate()?;
        let src = source.get(cfg.axis);
        let curve = match reuse.iter().find(|c| c.matches(cfg, src)) {
            Some(c) => c.clone(),
            None => {
                let grid = cfg.grid(src);
                let candidates = grid
                    .iter()
                    .map(|&v| source.with_axis(cfg.axis, v))
                    .collect::<Result<Vec<_>>>()?;
                let fit = evaluate_all(eval, &candidates)?;
                evaluations += grid.len();
                SweepCurve {
                    axis: cfg.axis,
                    points: grid
                        .into_iter()
                        .zip(fit)
                        .map(|(value, fitness)| CurvePoint { value, fitness })
                        .collect(),
                }
            }
        };
        let best = curve.best_index(src).ok_or(Error::SweepExhausted {
            axis: cfg.axis.letter(),
        })?;
        initial[cfg.axis.index()] = curve.points[best].value;
        curves.push(curve);
    }
    Ok(SweepOutcome {
        initial: AnchorSizes::from_array(initial)?,
        curves,
        evaluations,
    })
}

/// Maximizes `eval` by best/1/bin differential evolution.
///
/// The population is sampled uniformly within `±init_range` of `source`,
/// with `init` as member 0. Every candidate is floored at
/// `cfg.size_floor` before evaluation. Internally the search minimizes the
/// negated fitness.
pub fn differential_evolution<F>(
    eval: &F,
    init: AnchorSizes,
    source: AnchorSizes,
    cfg: &DeConfig,
) -> Result<DeOutcome>
where
    F: Fn(AnchorSizes) -> Result<f64> + Sync,
{
    cfg.validate()?;
    let np = cfg.population;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    // NaN lands on the floor too
    let floor = |v: [f64; 3]| -> AnchorSizes {
        AnchorSizes::from_array(v.map(|x| {
            if x >= cfg.size_floor {
                x
            } else {
                cfg.size_floor
            }
        }))
        .expect("floored sizes are positive")
    };

    let src = source.to_array();
    let mut pop: Vec<AnchorSizes> = Vec::with_capacity(np);
    pop.push(floor(init.to_array()));
    for _ in 1..np {
        let v = src.map(|s| s * (1.0 + cfg.init_range * rng.random_range(-1.0..=1.0)));
        pop.push(floor(v));
    }
    let mut cost: Vec<f64> = evaluate_all(eval, &pop)?.into_iter().map(|f| -f).collect();
    let mut evaluations = np;
    if cost.iter().all(|c| *c == f64::INFINITY) {
        return Err(Error::NoViableCandidate);
    }

    let best_of =
        |cost: &[f64]| (0..cost.len()).fold(0, |b, i| if cost[i] < cost[b] { i } else { b });
    let mut best = best_of(&cost);
    let mut trace = vec![-cost[best]];
    let mut stall = 0;
    let mut generations = 0;
    let mut termination = Termination::MaxIters;

    while generations < cfg.max_iters {
        let base = pop[best].to_array();
        let trials: Vec<AnchorSizes> = (0..np)
            .map(|i| {
                let (r1, r2) = pick_two(&mut rng, np, best, i);
                let a = pop[r1].to_array();
                let b = pop[r2].to_array();
                let parent = pop[i].to_array();
                let forced = rng.random_range(0..3);
                let mut trial = parent;
                for k in 0..3 {
                    if k == forced || rng.random::<f64>() < cfg.crossover_rate {
                        trial[k] = base[k] + cfg.eta * (a[k] - b[k]);
                    }
                }
                floor(trial)
            })
            .collect();
        let trial_cost = evaluate_all(eval, &trials)?;
        evaluations += np;
        for (i, (t, f)) in trials.into_iter().zip(trial_cost).enumerate() {
            if -f < cost[i] {
                pop[i] = t;
                cost[i] = -f;
            }
        }
        generations += 1;

        let prev = trace[trace.len() - 1];
        best = best_of(&cost);
        let now = -cost[best];
        trace.push(now);
        if now - prev < cfg.stall_tolerance {
            stall += 1;
            if stall >= cfg.stall_generations {
                termination = Termination::Converged;
                break;
            }
        } else {
            stall = 0;
        }
    }

    Ok(DeOutcome {
        best: pop[best],
        best_fitness: -cost[best],
        trace,
        generations,
        termination,
        evaluations,
    })
}

/// Two distinct indices in `0..n`, both different from `best` and `parent`.
fn pick_two<R: Rng + ?Sized>(rng: &mut R, n: usize, best: usize, parent: usize) -> (usize, usize) {
    let pool: Vec<usize> = (0..n).filter(|&j| j != best && j != parent).collect();
    let a = rng.random_range(0..pool.len());
    let mut b = rng.random_range(0..pool.len() - 1);
    if b >= a {
        b += 1;
    }
    (pool[a], pool[b])
}

/// Fitness of candidate anchors on a fixed set of target frames.
///
/// Candidates whose gated target database holds fewer than
/// `min_features` vectors score `-inf`, the same as an empty database: an
/// average over a handful of proposals says little about the anchor.
pub struct TargetObjective<'a, E: FeatureExtractor + ?Sized> {
    pub extractor: &'a E,
    pub frames: &'a [FrameId],
    pub class: usize,
    pub gate: &'a GateConfig,
    pub model: &'a Gmm,
    pub min_features: usize,
}

impl<E: FeatureExtractor + ?Sized> TargetObjective<'_, E> {
    pub fn evaluate(&self, sizes: AnchorSizes) -> Result<f64> {
        let db = build_target_db(self.extractor, self.frames, self.class, sizes, self.gate)?;
        self.score(&db)
    }

    pub fn score(&self, db: &FeatureDatabase) -> Result<f64> {
        if db.is_empty() || db.len() < self.min_features {
            return Ok(f64::NEG_INFINITY);
        }
        fitness(db, self.model)
    }
}

/// Settings for one [`calibrate`] run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CalibrationConfig {
    pub gate: GateConfig,
    pub em: EmConfig,
    pub sweep: Vec<SweepConfig>,
    pub de: DeConfig,
    /// Candidates with fewer target features than this fraction of the
    /// target database size under the source anchors score `-inf`.
    pub min_support: f64,
}

impl Default for CalibrationConfig {
    fn default() -> Self {
        CalibrationConfig {
            gate: GateConfig::default(),
            em: EmConfig::default(),
            sweep: SweepConfig::all(),
            de: DeConfig::default(),
            min_support: 0.25,
        }
    }
}

impl CalibrationConfig {
    pub fn validate(&self) -> Result<()> {
        self.gate.validate()?;
        self.em.validate()?;
        for s in &self.sweep {
            s.validate()?;
        }
        self.de.validate()?;
        if !(0.0..=1.0).contains(&self.min_support) {
            return Err(Error::invalid("min_support", "must lie in [0, 1]"));
        }
        Ok(())
    }
}

/// Calibrated anchors for one class plus everything needed to report on
/// the run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationResult {
    pub class: usize,
    pub source: AnchorSizes,
    pub calibrated: AnchorSizes,
    #[serde(with = "fitness_json")]
    pub source_fitness: f64,
    pub calibrated_fitness: f64,
    /// Per-axis sweep winners, the first member of the DE population.
    pub initial: AnchorSizes,
    pub sweep_curves: Vec<SweepCurve>,
    /// Best fitness after DE initialization, then after each generation.
    pub de_trace: Vec<f64>,
    pub generations: usize,
    pub termination: Termination,
    /// Sweep evaluations run in this call plus DE evaluations.
    pub evaluations: usize,
    pub reference_features: usize,
    pub min_target_features: usize,
    /// True when DE ended below the source fitness and the source anchors
    /// were returned instead.
    pub kept_source: bool,
}

/// Full output of [`calibrate`].
#[derive(Debug, Clone)]
pub struct Calibration {
    pub result: CalibrationResult,
    pub reference: FeatureDatabase,
    pub model: Gmm,
}

/// Runs the whole pipeline for one class: reference database from the
/// source domain, mixture fit, linear sweep and differential evolution on
/// the target domain.
#[allow(clippy::too_many_arguments)]
pub fn calibrate<S, T>(
    source: &S,
    target: &T,
    source_frames: &[FrameId],
    target_frames: &[FrameId],
    class: usize,
    cfg: &CalibrationConfig,
    reuse_curves: &[SweepCurve],
) -> Result<Calibration>
where
    S: FeatureExtractor + ?Sized,
    T: FeatureExtractor + ?Sized,
{
    cfg.validate()?;
    if source.dim() != target.dim() {
        return Err(Error::DimensionMismatch {
            expected: source.dim(),
            actual: target.dim(),
        });
    }
    let reference = build_reference_db(source, source_frames, class, &cfg.gate)?;
    let model = fit_em(&reference, &cfg.em)?;
    calibrate_with_model(
        target,
        target_frames,
        class,
        cfg,
        source.anchor(class)?.sizes,
        reference,
        model,
        reuse_curves,
    )
}

/// [`calibrate`] with a reference database and mixture already in hand.
#[allow(clippy::too_many_arguments)]
pub fn calibrate_with_model<T: FeatureExtractor + ?Sized>(
    target: &T,
    target_frames: &[FrameId],
    class: usize,
    cfg: &CalibrationConfig,
    source_sizes: AnchorSizes,
    reference: FeatureDatabase,
    model: Gmm,
    reuse_curves: &[SweepCurve],
) -> Result<Calibration> {
    cfg.validate()?;
    if model.dim() != target.dim() {
        return Err(Error::DimensionMismatch {
            expected: model.dim(),
            actual: target.dim(),
        });
    }
    let at_source = build_target_db(target, target_frames, class, source_sizes, &cfg.gate)?;
    let objective = TargetObjective {
        extractor: target,
        frames: target_frames,
        class,
        gate: &cfg.gate,
        model: &model,
        min_features: min_target_features(at_source.len(), cfg.min_support),
    };
    let source_fitness = objective.score(&at_source)?;
    let eval = |s: AnchorSizes| objective.evaluate(s);

    let sweep = linear_sweep(&eval, source_sizes, &cfg.sweep, reuse_curves)?;
    let de = differential_evolution(&eval, sweep.initial, source_sizes, &cfg.de)?;

    let kept_source = de.best_fitness < source_fitness;
    let (calibrated, calibrated_fitness) = if kept_source {
        (source_sizes, source_fitness)
    } else {
        (de.best, de.best_fitness)
    };
    let result = CalibrationResult {
        class,
        source: source_sizes,
        calibrated,
        source_fitness,
        calibrated_fitness,
        initial: sweep.initial,
        sweep_curves: sweep.curves,
        de_trace: de.trace,
        generations: de.generations,
        termination: de.termination,
        evaluations: sweep.evaluations + de.evaluations,
        reference_features: reference.len(),
        min_target_features: objective.min_features,
        kept_source,
    };
    Ok(Calibration {
        result,
        reference,
        model,
    })
}

/// Support threshold: `ceil(min_support * n_at_source)`, at least 1.
pub fn min_target_features(n_at_source: usize, min_support: f64) -> usize {
    ((n_at_source as f64 * min_support).ceil() as usize).max(1)
}

/// `-inf` fitness as JSON `null`.
mod fitness_json {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_finite() {
            s.serialize_f64(*v)
        } else {
            s.serialize_none()
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::NEG_INFINITY))
    }
}
