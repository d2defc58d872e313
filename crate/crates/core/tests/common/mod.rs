//! Shared oracles and fixtures for the integration tests.
#![allow(dead_code)]

use std::sync::{Mutex, MutexGuard};

use anchor_calib::gmm::{Gmm, GmmComponent};
use anchor_calib::types::FeatureDatabase;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Serializes the timed tests of one binary so wall-clock budgets are not
/// shared with concurrently running tests.
pub fn exclusive() -> MutexGuard<'static, ()> {
    static LOCK: Mutex<()> = Mutex::new(());
    LOCK.lock().unwrap_or_else(|e| e.into_inner())
}

/// Mixture density evaluated term by term without log-space tricks.
pub fn naive_log_pdf(g: &Gmm, x: &[f64]) -> f64 {
    let mut p = 0.0;
    for c in g.components() {
        let mut dens = c.weight;
        for ((xi, m), v) in x.iter().zip(&c.mean).zip(&c.variance) {
            dens *=
                (-(xi - m) * (xi - m) / (2.0 * v)).exp() / (2.0 * std::f64::consts::PI * v).sqrt();
        }
        p += dens;
    }
    p.ln()
}

/// Random mixture with well-conditioned variances.
pub fn random_gmm(rng: &mut ChaCha8Rng, k: usize, dim: usize) -> Gmm {
    let raw: Vec<f64> = (0..k).map(|_| rng.random_range(0.2..1.0)).collect();
    let total: f64 = raw.iter().sum();
    let components = raw
        .iter()
        .map(|w| GmmComponent {
            weight: w / total,
            mean: (0..dim).map(|_| rng.random_range(-2.0..2.0)).collect(),
            variance: (0..dim).map(|_| rng.random_range(0.3..2.0)).collect(),
        })
        .collect();
    Gmm::new(dim, components).unwrap()
}

pub fn sample_db(g: &Gmm, n: usize, seed: u64) -> FeatureDatabase {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut db = FeatureDatabase::new(g.dim()).unwrap();
    for _ in 0..n {
        let x: Vec<f32> = g.sample(&mut rng).iter().map(|v| *v as f32).collect();
        db.push(&x).unwrap();
    }
    db
}

/// Average ranks, ties sharing the mean rank.
pub fn ranks(v: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..v.len()).collect();
    idx.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
    let mut r = vec![0.0; v.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && v[idx[j + 1]] == v[idx[i]] {
            j += 1;
        }
        for &k in &idx[i..=j] {
            r[k] = (i + j) as f64 / 2.0;
        }
        i = j + 1;
    }
    r
}

/// Spearman rank correlation (Pearson correlation of the average ranks).
pub fn spearman(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    let (ra, rb) = (ranks(a), ranks(b));
    let n = a.len() as f64;
    let ma = ra.iter().sum::<f64>() / n;
    let mb = rb.iter().sum::<f64>() / n;
    let cov: f64 = ra.iter().zip(&rb).map(|(x, y)| (x - ma) * (y - mb)).sum();
    let va: f64 = ra.iter().map(|x| (x - ma).powi(2)).sum();
    let vb: f64 = rb.iter().map(|y| (y - mb).powi(2)).sum();
    cov / (va * vb).sqrt()
}

/// Mixture components matched to `truth` by the cheapest assignment of
/// means (exhaustive over permutations; fine for small K).
pub fn match_components(fit: &Gmm, truth: &Gmm) -> Vec<usize> {
    fn perms(n: usize) -> Vec<Vec<usize>> {
        if n == 0 {
            return vec![vec![]];
        }
        let mut out = Vec::new();
        for p in perms(n - 1) {
            for pos in 0..=p.len() {
                let mut q = p.clone();
                q.insert(pos, n - 1);
                out.push(q);
            }
        }
        out
    }
    let cost = |p: &Vec<usize>| -> f64 {
        p.iter()
            .enumerate()
            .map(|(t, &f)| {
                truth.components()[t]
                    .mean
                    .iter()
                    .zip(&fit.components()[f].mean)
                    .map(|(a, b)| (a - b).powi(2))
                    .sum::<f64>()
            })
            .sum()
    };
    perms(truth.k())
        .into_iter()
        .min_by(|a, b| cost(a).total_cmp(&cost(b)))
        .unwrap()
}
