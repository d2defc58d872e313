//! Diagonal-covariance Gaussian mixture models.
//!
//! Densities are always evaluated in log space: each component's log density
//! is formed directly and the mixture is combined with log-sum-exp, so
//! far-out features yield large negative values instead of `-inf`.
//!
//! [`fit_em`] is deterministic for a given seed and independent of the row
//! order of the input database: rows are sorted into a canonical order before
//! seeding, and all reductions run over fixed-size chunks that are combined
//! in chunk order, whatever the size of the rayon pool.

use std::cmp::Ordering;
use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::FeatureDatabase;

pub const DEFAULT_VARIANCE_FLOOR: f64 = 1e-6;

/// Rows per parallel work item. Fixed so that the summation order does not
/// depend on the number of worker threads.
const CHUNK_ROWS: usize = 256;

/// Weight given to a component that lost all responsibility mass.
const DEAD_WEIGHT: f64 = 1e-12;

const SEEDING_SUBSAMPLE: usize = 2048;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GmmComponent {
    pub weight: f64,
    pub mean: Vec<f64>,
    /// Per-dimension variances (diagonal covariance).
    pub variance: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct RawGmm {
    dim: usize,
    components: Vec<GmmComponent>,
}

/// A fitted mixture. Immutable once built.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(try_from = "RawGmm", into = "RawGmm")]
pub struct Gmm {
    dim: usize,
    components: Vec<GmmComponent>,
    // log(weight) - 0.5 * (D log 2pi + sum log var), per component
    log_consts: Vec<f64>,
    // 1 / var, flattened K x D
    inv_var: Vec<f64>,
}

impl PartialEq for Gmm {
    fn eq(&self, other: &Self) -> bool {
        self.dim == other.dim && self.components == other.components
    }
}

impl TryFrom<RawGmm> for Gmm {
    type Error = Error;

    fn try_from(raw: RawGmm) -> Result<Self> {
        Gmm::new(raw.dim, raw.components)
    }
}

impl From<Gmm> for RawGmm {
    fn from(g: Gmm) -> Self {
        RawGmm {
            dim: g.dim,
            components: g.components,
        }
    }
}

impl Gmm {
    /// Validates and assembles a mixture. Weights must sum to one within
    /// 1e-9 and every variance must be positive.
    pub fn new(dim: usize, components: Vec<GmmComponent>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::invalid("gmm dim", "must be >= 1"));
        }
        if components.is_empty() {
            return Err(Error::invalid("gmm components", "need at least one"));
        }
        let mut total = 0.0;
        for (i, c) in components.iter().enumerate() {
            if c.mean.len() != dim || c.variance.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    actual: if c.mean.len() != dim {
                        c.mean.len()
                    } else {
                        c.variance.len()
                    },
                });
            }
            if !(c.weight > 0.0 && c.weight <= 1.0) {
                return Err(Error::invalid(
                    format!("gmm component {i} weight"),
                    format!("must lie in (0, 1], got {}", c.weight),
                ));
            }
            if c.mean.iter().any(|m| !m.is_finite()) {
                return Err(Error::invalid(
                    format!("gmm component {i} mean"),
                    "must be finite",
                ));
            }
            if c.variance.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
                return Err(Error::invalid(
                    format!("gmm component {i} variance"),
                    "must be finite and > 0",
                ));
            }
            total += c.weight;
        }
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::invalid(
                "gmm weights",
                format!("must sum to 1, got {total}"),
            ));
        }
        let log_2pi = (2.0 * PI).ln();
        let log_consts = components
            .iter()
            .map(|c| {
                let log_det: f64 = c.variance.iter().map(|v| v.ln()).sum();
                c.weight.ln() - 0.5 * (dim as f64 * log_2pi + log_det)
            })
            .collect();
        let inv_var = components
            .iter()
            .flat_map(|c| c.variance.iter().map(|v| 1.0 / v))
            .collect();
        Ok(Gmm {
            dim,
            components,
            log_consts,
            inv_var,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn k(&self) -> usize {
        self.components.len()
    }

    pub fn components(&self) -> &[GmmComponent] {
        &self.components
    }

    /// `log sum_i w_i N(f | mu_i, diag(var_i))`.
    pub fn log_pdf(&self, f: &[f32]) -> Result<f64> {
        if f.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                actual: f.len(),
            });
        }
        Ok(self.log_pdf_unchecked(f))
    }

    /// Per-component log densities including the log weight.
    fn component_log_densities(&self, f: &[f32], out: &mut [f64]) {
        for (k, (c, o)) in self.components.iter().zip(out.iter_mut()).enumerate() {
            let inv = &self.inv_var[k * self.dim..(k + 1) * self.dim];
            let mut maha = 0.0;
            for ((x, m), iv) in f.iter().zip(&c.mean).zip(inv) {
                let d = *x as f64 - m;
                maha += d * d * iv;
            }
            *o = self.log_consts[k] - 0.5 * maha;
        }
    }

    fn log_pdf_unchecked(&self, f: &[f32]) -> f64 {
        let mut buf = vec![0.0; self.k()];
        self.component_log_densities(f, &mut buf);
        log_sum_exp(&buf)
    }

    /// Largest value any single weighted component density can reach, i.e.
    /// an upper bound on `log_pdf` over all inputs.
    pub fn log_pdf_upper_bound(&self) -> f64 {
        // log sum_i w_i N_i(x) <= log sum_i w_i peak_i <= max_i log peak_i
        let log_2pi = (2.0 * PI).ln();
        self.components
            .iter()
            .map(|c| {
                let log_det: f64 = c.variance.iter().map(|v| v.ln()).sum();
                -0.5 * (self.dim as f64 * log_2pi + log_det)
            })
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// Draws one sample.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        let u: f64 = rng.random();
        let mut acc = 0.0;
        let mut chosen = self.components.len() - 1;
        for (i, c) in self.components.iter().enumerate() {
            acc += c.weight;
            if u < acc {
                chosen = i;
                break;
            }
        }
        let c = &self.components[chosen];
        c.mean
            .iter()
            .zip(&c.variance)
            .map(|(m, v)| {
                let z: f64 = StandardNormal.sample(rng);
                m + v.sqrt() * z
            })
            .collect()
    }
}

/// Numerically stable `log(sum(exp(xs)))`. Returns `-inf` for an empty slice
/// or when every term is `-inf`.
pub fn log_sum_exp(xs: &[f64]) -> f64 {
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    if max == f64::INFINITY {
        return f64::INFINITY;
    }
    let s: f64 = xs.iter().map(|x| (x - max).exp()).sum();
    max + s.ln()
}

/// Compensated (Neumaier) summation.
fn neumaier_sum(values: impl IntoIterator<Item = f64>) -> f64 {
    let mut sum = 0.0;
    let mut comp = 0.0;
    for v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            comp += (sum - t) + v;
        } else {
            comp += (v - t) + sum;
        }
        sum = t;
    }
    sum + comp
}

/// Per-sample average log-likelihood of `db` under `model`.
///
/// Normalizing by the database size makes the value comparable across
/// databases of different cardinality: a database and any number of
/// concatenated copies of it score the same.
pub fn fitness(db: &FeatureDatabase, model: &Gmm) -> Result<f64> {
    if db.is_empty() {
        return Err(Error::EmptyDatabase);
    }
    if db.dim() != model.dim() {
        return Err(Error::DimensionMismatch {
            expected: model.dim(),
            actual: db.dim(),
        });
    }
    let per_row: Vec<f64> = db
        .as_flat()
        .par_chunks(CHUNK_ROWS * db.dim())
        .flat_map_iter(|chunk| {
            chunk
                .chunks_exact(model.dim())
                .map(|row| model.log_pdf_unchecked(row))
        })
        .collect();
    Ok(neumaier_sum(per_row) / db.len() as f64)
}

/// EM settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EmConfig {
    pub k: usize,
    pub max_iters: usize,
    /// Stop once the relative improvement of the average log-likelihood
    /// drops below this.
    pub ll_tolerance: f64,
    pub restarts: usize,
    pub variance_floor: f64,
    pub seed: u64,
}

impl Default for EmConfig {
    fn default() -> Self {
        EmConfig {
            k: 8,
            max_iters: 200,
            ll_tolerance: 1e-6,
            restarts: 2,
            variance_floor: DEFAULT_VARIANCE_FLOOR,
            seed: 0,
        }
    }
}

impl EmConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return Err(Error::invalid("em.k", "must be >= 1"));
        }
        if self.max_iters == 0 {
            return Err(Error::invalid("em.max_iters", "must be >= 1"));
        }
        if self.restarts == 0 {
            return Err(Error::invalid("em.restarts", "must be >= 1"));
        }
        if !(self.ll_tolerance.is_finite() && self.ll_tolerance > 0.0) {
            return Err(Error::invalid("em.ll_tolerance", "must be > 0"));
        }
        if !(self.variance_floor.is_finite() && self.variance_floor > 0.0) {
            return Err(Error::invalid("em.variance_floor", "must be > 0"));
        }
        Ok(())
    }
}

/// Trace of one EM restart.
#[derive(Debug, Clone)]
pub struct RestartTrace {
    /// Average training log-likelihood before each M-step, followed by the
    /// value at the final parameters.
    pub avg_log_likelihood: Vec<f64>,
    pub converged: bool,
}

#[derive(Debug, Clone)]
pub struct EmReport {
    pub model: Gmm,
    /// Average training log-likelihood of `model`.
    pub avg_log_likelihood: f64,
    pub best_restart: usize,
    pub restarts: Vec<RestartTrace>,
}

/// Fits a `cfg.k`-component diagonal mixture to `db` by EM and returns the
/// best of `cfg.restarts` runs.
pub fn fit_em(db: &FeatureDatabase, cfg: &EmConfig) -> Result<Gmm> {
    fit_em_report(db, cfg).map(|r| r.model)
}

/// [`fit_em`] with per-iteration log-likelihood traces.
pub fn fit_em_report(db: &FeatureDatabase, cfg: &EmConfig) -> Result<EmReport> {
    cfg.validate()?;
    if db.len() < cfg.k {
        return Err(Error::InsufficientSamples {
            available: db.len(),
            required: cfg.k,
        });
    }
    let data = canonical_rows(db);
    let dim = db.dim();

    let mut best: Option<(usize, Gmm, f64)> = None;
    let mut traces = Vec::with_capacity(cfg.restarts);
    for restart in 0..cfg.restarts {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        rng.set_stream(restart as u64);
        let (model, ll, trace) = run_restart(&data, dim, cfg, &mut rng)?;
        traces.push(trace);
        // strictly greater keeps the lowest restart index on ties
        if best.as_ref().is_none_or(|(_, _, b)| ll > *b) {
            best = Some((restart, model, ll));
        }
    }
    let (best_restart, model, avg_log_likelihood) = best.expect("restarts >= 1");
    Ok(EmReport {
        model,
        avg_log_likelihood,
        best_restart,
        restarts: traces,
    })
}

/// Copies rows to f64 in lexicographic order so the fit does not depend on
/// the order of the input database.
fn canonical_rows(db: &FeatureDatabase) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..db.len()).collect();
    idx.sort_by(|&a, &b| {
        db.row(a)
            .iter()
            .zip(db.row(b))
            .map(|(x, y)| x.total_cmp(y))
            .find(|o| *o != Ordering::Equal)
            .unwrap_or(Ordering::Equal)
    });
    idx.iter()
        .flat_map(|&i| db.row(i).iter().map(|v| *v as f64))
        .collect()
}

struct Params {
    weights: Vec<f64>,
    means: Vec<f64>,
    vars: Vec<f64>,
}

impl Params {
    fn to_gmm(&self, dim: usize) -> Result<Gmm> {
        let total: f64 = self.weights.iter().sum();
        let components = self
            .weights
            .iter()
            .enumerate()
            .map(|(k, w)| GmmComponent {
                weight: w / total,
                mean: self.means[k * dim..(k + 1) * dim].to_vec(),
                variance: self.vars[k * dim..(k + 1) * dim].to_vec(),
            })
            .collect();
        Gmm::new(dim, components)
    }
}

fn run_restart(
    data: &[f64],
    dim: usize,
    cfg: &EmConfig,
    rng: &mut ChaCha8Rng,
) -> Result<(Gmm, f64, RestartTrace)> {
    let n = data.len() / dim;
    let k = cfg.k;
    let centers = kmeans_pp_seeds(data, dim, k, rng);

    // start from the seeds with the pooled variance
    let mut pooled = vec![0.0; dim];
    let mean = column_means(data, dim);
    for row in data.chunks_exact(dim) {
        for ((p, x), m) in pooled.iter_mut().zip(row).zip(&mean) {
            *p += (x - m) * (x - m);
        }
    }
    let pooled: Vec<f64> = pooled
        .iter()
        .map(|p| (p / n as f64).max(cfg.variance_floor))
        .collect();
    let mut params = Params {
        weights: vec![1.0 / k as f64; k],
        means: centers
            .iter()
            .flat_map(|&i| data[i * dim..(i + 1) * dim].to_vec())
            .collect(),
        vars: pooled.iter().copied().cycle().take(k * dim).collect(),
    };

    let mut history = Vec::new();
    let mut converged = false;
    let mut resp = vec![0.0; n * k];
    for _ in 0..cfg.max_iters {
        let ll = e_step(data, dim, &params, &mut resp);
        if let Some(&prev) = history.last() {
            let prev: f64 = prev;
            if (ll - prev) / prev.abs().max(f64::MIN_POSITIVE) < cfg.ll_tolerance {
                history.push(ll);
                converged = true;
                break;
            }
        }
        history.push(ll);
        m_step(data, dim, &resp, cfg.variance_floor, &mut params);
    }
    let final_ll = if converged {
        *history.last().expect("non-empty")
    } else {
        let ll = e_step(data, dim, &params, &mut resp);
        history.push(ll);
        ll
    };
    let model = params.to_gmm(dim)?;
    Ok((
        model,
        final_ll,
        RestartTrace {
            avg_log_likelihood: history,
            converged,
        },
    ))
}

fn column_means(data: &[f64], dim: usize) -> Vec<f64> {
    let n = data.len() / dim;
    let mut m = vec![0.0; dim];
    for row in data.chunks_exact(dim) {
        for (a, x) in m.iter_mut().zip(row) {
            *a += x;
        }
    }
    m.iter().map(|v| v / n as f64).collect()
}

/// k-means++ seeding over a random subsample. Returns row indices into
/// `data`. Draws from `rng` in a fixed sequence; ties go to the lowest index.
fn kmeans_pp_seeds(data: &[f64], dim: usize, k: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
    let n = data.len() / dim;
    let pool: Vec<usize> = if n <= SEEDING_SUBSAMPLE {
        (0..n).collect()
    } else {
        let mut idx: Vec<usize> = (0..n).collect();
        for i in 0..SEEDING_SUBSAMPLE {
            let j = rng.random_range(i..n);
            idx.swap(i, j);
        }
        idx.truncate(SEEDING_SUBSAMPLE);
        idx.sort_unstable();
        idx
    };
    let row = |i: usize| &data[i * dim..(i + 1) * dim];
    let sq_dist =
        |a: &[f64], b: &[f64]| -> f64 { a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum() };

    let mut seeds = Vec::with_capacity(k);
    seeds.push(pool[rng.random_range(0..pool.len())]);
    let mut d2: Vec<f64> = pool
        .iter()
        .map(|&i| sq_dist(row(i), row(seeds[0])))
        .collect();
    while seeds.len() < k {
        let total: f64 = d2.iter().sum();
        let u: f64 = rng.random();
        let pick = if total > 0.0 {
            let target = u * total;
            let mut acc = 0.0;
            let mut pick = None;
            for (j, d) in d2.iter().enumerate() {
                acc += d;
                if acc > target && *d > 0.0 {
                    pick = Some(j);
                    break;
                }
            }
            // rounding can leave the target past the last bucket
            pick.unwrap_or_else(|| d2.iter().rposition(|d| *d > 0.0).expect("total > 0"))
        } else {
            // every candidate coincides with a seed
            seeds.len() % pool.len()
        };
        let chosen = pool[pick];
        seeds.push(chosen);
        for (d, &i) in d2.iter_mut().zip(&pool) {
            *d = d.min(sq_dist(row(i), row(chosen)));
        }
    }
    seeds
}

/// Fills responsibilities and returns the average log-likelihood of the
/// current parameters.
fn e_step(data: &[f64], dim: usize, p: &Params, resp: &mut [f64]) -> f64 {
    let k = p.weights.len();
    let log_2pi = (2.0 * PI).ln();
    let log_consts: Vec<f64> = (0..k)
        .map(|c| {
            let log_det: f64 = p.vars[c * dim..(c + 1) * dim].iter().map(|v| v.ln()).sum();
            p.weights[c].ln() - 0.5 * (dim as f64 * log_2pi + log_det)
        })
        .collect();
    let inv_var: Vec<f64> = p.vars.iter().map(|v| 1.0 / v).collect();

    let partial: Vec<Vec<f64>> = data
        .par_chunks(CHUNK_ROWS * dim)
        .zip(resp.par_chunks_mut(CHUNK_ROWS * k))
        .map(|(rows, rchunk)| {
            rows.chunks_exact(dim)
                .zip(rchunk.chunks_exact_mut(k))
                .map(|(x, r)| {
                    for (c, rc) in r.iter_mut().enumerate() {
                        let mu = &p.means[c * dim..(c + 1) * dim];
                        let iv = &inv_var[c * dim..(c + 1) * dim];
                        let mut maha = 0.0;
                        for ((xi, m), v) in x.iter().zip(mu).zip(iv) {
                            let d = xi - m;
                            maha += d * d * v;
                        }
                        *rc = log_consts[c] - 0.5 * maha;
                    }
                    let lse = log_sum_exp(r);
                    for rc in r.iter_mut() {
                        *rc = (*rc - lse).exp();
                    }
                    lse
                })
                .collect()
        })
        .collect();
    let n = data.len() / dim;
    neumaier_sum(partial.into_iter().flatten()) / n as f64
}

fn m_step(data: &[f64], dim: usize, resp: &[f64], floor: f64, p: &mut Params) {
    let k = p.weights.len();
    let n = data.len() / dim;

    // chunk partials: [nk (k) | sum r x (k*dim)]
    let sums: Vec<Vec<f64>> = data
        .par_chunks(CHUNK_ROWS * dim)
        .zip(resp.par_chunks(CHUNK_ROWS * k))
        .map(|(rows, rchunk)| {
            let mut acc = vec![0.0; k + k * dim];
            for (x, r) in rows.chunks_exact(dim).zip(rchunk.chunks_exact(k)) {
                for (c, rc) in r.iter().enumerate() {
                    acc[c] += rc;
                    let base = k + c * dim;
                    for (a, xi) in acc[base..base + dim].iter_mut().zip(x) {
                        *a += rc * xi;
                    }
                }
            }
            acc
        })
        .collect();
    let totals = sum_columns(&sums, k + k * dim);
    let nk = &totals[..k];
    let mut dead = vec![false; k];
    for c in 0..k {
        if nk[c] <= 0.0 || !nk[c].is_finite() {
            dead[c] = true;
            continue;
        }
        for d in 0..dim {
            p.means[c * dim + d] = totals[k + c * dim + d] / nk[c];
        }
    }

    let means = &p.means;
    let sq: Vec<Vec<f64>> = data
        .par_chunks(CHUNK_ROWS * dim)
        .zip(resp.par_chunks(CHUNK_ROWS * k))
        .map(|(rows, rchunk)| {
            let mut acc = vec![0.0; k * dim];
            for (x, r) in rows.chunks_exact(dim).zip(rchunk.chunks_exact(k)) {
                for (c, rc) in r.iter().enumerate() {
                    let mu = &means[c * dim..(c + 1) * dim];
                    for ((a, xi), m) in acc[c * dim..(c + 1) * dim].iter_mut().zip(x).zip(mu) {
                        let d = xi - m;
                        *a += rc * d * d;
                    }
                }
            }
            acc
        })
        .collect();
    let sq = sum_columns(&sq, k * dim);
    for c in 0..k {
        if dead[c] {
            p.weights[c] = DEAD_WEIGHT;
            continue;
        }
        p.weights[c] = nk[c] / n as f64;
        for d in 0..dim {
            p.vars[c * dim + d] = (sq[c * dim + d] / nk[c]).max(floor);
        }
    }
    let total: f64 = p.weights.iter().sum();
    for w in &mut p.weights {
        *w /= total;
    }
}

fn sum_columns(parts: &[Vec<f64>], width: usize) -> Vec<f64> {
    let mut out = vec![0.0; width];
    for part in parts {
        for (o, v) in out.iter_mut().zip(part) {
            *o += v;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn std_normal_2d() -> Gmm {
        Gmm::new(
            2,
            vec![GmmComponent {
                weight: 1.0,
                mean: vec![0.0, 0.0],
                variance: vec![1.0, 1.0],
            }],
        )
        .unwrap()
    }

    #[test]
    fn standard_normal_at_mean() {
        let v = std_normal_2d().log_pdf(&[0.0, 0.0]).unwrap();
        assert!((v + (2.0 * PI).ln()).abs() < 1e-12);
        assert!((v - -1.837877).abs() < 1e-6);
    }

    #[test]
    fn duplicate_components_match_single() {
        let one = std_normal_2d();
        let c = one.components()[0].clone();
        let two = Gmm::new(
            2,
            vec![
                GmmComponent {
                    weight: 0.5,
                    ..c.clone()
                },
                GmmComponent { weight: 0.5, ..c },
            ],
        )
        .unwrap();
        for f in [[0.0f32, 0.0], [1.5, -2.0], [30.0, 4.0]] {
            let a = one.log_pdf(&f).unwrap();
            let b = two.log_pdf(&f).unwrap();
            assert!((a - b).abs() < 1e-12, "{a} vs {b}");
        }
    }

    #[test]
    fn far_points_stay_finite() {
        let g = std_normal_2d();
        let v = g.log_pdf(&[1e6, -1e6]).unwrap();
        assert!(v.is_finite() && v < -1e11);
    }

    #[test]
    fn log_pdf_rejects_wrong_dim() {
        assert!(matches!(
            std_normal_2d().log_pdf(&[0.0]),
            Err(Error::DimensionMismatch {
                expected: 2,
                actual: 1
            })
        ));
    }

    #[test]
    fn construction_validates() {
        let c = GmmComponent {
            weight: 0.6,
            mean: vec![0.0],
            variance: vec![1.0],
        };
        assert!(Gmm::new(1, vec![c.clone()]).is_err());
        assert!(Gmm::new(1, vec![]).is_err());
        let bad_var = GmmComponent {
            weight: 1.0,
            variance: vec![0.0],
            ..c.clone()
        };
        assert!(Gmm::new(1, vec![bad_var]).is_err());
        assert!(Gmm::new(2, vec![GmmComponent { weight: 1.0, ..c }]).is_err());
    }

    #[test]
    fn log_sum_exp_edges() {
        assert_eq!(log_sum_exp(&[]), f64::NEG_INFINITY);
        assert_eq!(log_sum_exp(&[f64::NEG_INFINITY; 3]), f64::NEG_INFINITY);
        assert!((log_sum_exp(&[0.0, 0.0]) - 2f64.ln()).abs() < 1e-15);
        assert!((log_sum_exp(&[-1000.0, -1000.0]) - (-1000.0 + 2f64.ln())).abs() < 1e-12);
    }

    #[test]
    fn fitness_singleton_reduces_to_log_pdf() {
        let db = FeatureDatabase::from_rows(2, [[0.0f32, 0.0]]).unwrap();
        let v = fitness(&db, &std_normal_2d()).unwrap();
        assert!((v + (2.0 * PI).ln()).abs() < 1e-12);
    }

    #[test]
    fn fitness_errors() {
        let empty = FeatureDatabase::new(2).unwrap();
        assert!(matches!(
            fitness(&empty, &std_normal_2d()),
            Err(Error::EmptyDatabase)
        ));
        let wrong = FeatureDatabase::from_rows(3, [[0.0f32; 3]]).unwrap();
        assert!(matches!(
            fitness(&wrong, &std_normal_2d()),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn em_rejects_too_few_samples() {
        let db = FeatureDatabase::from_rows(1, [[0.0f32], [1.0]]).unwrap();
        let cfg = EmConfig {
            k: 3,
            ..Default::default()
        };
        assert!(matches!(
            fit_em(&db, &cfg),
            Err(Error::InsufficientSamples {
                available: 2,
                required: 3
            })
        ));
    }

    #[test]
    fn em_config_validation() {
        let db = FeatureDatabase::from_rows(1, [[0.0f32], [1.0]]).unwrap();
        for cfg in [
            EmConfig {
                k: 0,
                ..Default::default()
            },
            EmConfig {
                max_iters: 0,
                ..Default::default()
            },
            EmConfig {
                restarts: 0,
                ..Default::default()
            },
            EmConfig {
                ll_tolerance: 0.0,
                ..Default::default()
            },
            EmConfig {
                variance_floor: -1.0,
                ..Default::default()
            },
        ] {
            assert!(matches!(
                fit_em(&db, &cfg),
                Err(Error::InvalidConfig { .. })
            ));
        }
    }

    #[test]
    fn single_component_is_closed_form_mle() {
        let rows: Vec<[f32; 3]> = (0..50)
            .map(|i| {
                let t = i as f32;
                [t.sin(), 0.1 * t, 2.0]
            })
            .collect();
        let db = FeatureDatabase::from_rows(3, &rows).unwrap();
        let g = fit_em(
            &db,
            &EmConfig {
                k: 1,
                ..Default::default()
            },
        )
        .unwrap();
        let c = &g.components()[0];
        for d in 0..3 {
            let xs: Vec<f64> = rows.iter().map(|r| r[d] as f64).collect();
            let m = xs.iter().sum::<f64>() / xs.len() as f64;
            let v = xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / xs.len() as f64;
            assert!((c.mean[d] - m).abs() < 1e-9);
            assert!((c.variance[d] - v.max(DEFAULT_VARIANCE_FLOOR)).abs() < 1e-9);
        }
        // constant column sits at the floor
        assert_eq!(c.variance[2], DEFAULT_VARIANCE_FLOOR);
    }

    #[test]
    fn identical_rows_hit_floor() {
        let db = FeatureDatabase::from_rows(2, vec![[0.25f32, -3.0]; 40]).unwrap();
        let g = fit_em(
            &db,
            &EmConfig {
                k: 3,
                ..Default::default()
            },
        )
        .unwrap();
        for c in g.components() {
            assert!((c.mean[0] - 0.25).abs() < 1e-9 && (c.mean[1] + 3.0).abs() < 1e-9);
            assert!(c.variance.iter().all(|v| *v == DEFAULT_VARIANCE_FLOOR));
        }
        let total: f64 = g.components().iter().map(|c| c.weight).sum();
        assert!((total - 1.0).abs() < 1e-9);
    }

    #[test]
    fn json_round_trip() {
        let g = std_normal_2d();
        let s = serde_json::to_string(&g).unwrap();
        let back: Gmm = serde_json::from_str(&s).unwrap();
        assert_eq!(g, back);
        assert!(serde_json::from_str::<Gmm>(r#"{"dim":1,"components":[]}"#).is_err());
    }
}
