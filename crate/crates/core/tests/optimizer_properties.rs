mod common;

use std::f64::consts::PI;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use anchor_calib::extractor::{FeatureExtractor, GateConfig};
use anchor_calib::optimizer::{
    calibrate, differential_evolution, linear_sweep, CalibrationConfig, DeConfig, SweepConfig,
    Termination,
};
use anchor_calib::synthdet::{generate_domain, SyntheticDomain};
use anchor_calib::types::{AnchorSizes, Axis};
use anchor_calib::{Error, Result};
use proptest::prelude::*;

fn sizes(v: [f64; 3]) -> AnchorSizes {
    AnchorSizes::from_array(v).unwrap()
}

fn dist(a: AnchorSizes, b: [f64; 3]) -> f64 {
    a.to_array()
        .iter()
        .zip(b)
        .map(|(x, y)| (x - y).powi(2))
        .sum::<f64>()
        .sqrt()
}

fn bowl(center: [f64; 3]) -> impl Fn(AnchorSizes) -> Result<f64> + Sync {
    move |s| Ok(-dist(s, center).powi(2))
}

fn rastrigin(center: [f64; 3]) -> impl Fn(AnchorSizes) -> Result<f64> + Sync {
    move |s| {
        Ok(-s
            .to_array()
            .iter()
            .zip(center)
            .map(|(x, c)| {
                let d = x - c;
                d * d - 10.0 * (2.0 * PI * d).cos() + 10.0
            })
            .sum::<f64>())
    }
}

#[test]
fn quadratic_bowl_on_five_seeds() {
    let c = [2.0, 4.0, 1.5];
    let start = sizes([1.6, 3.9, 1.5]);
    for seed in 0..5 {
        let cfg = DeConfig {
            seed,
            ..DeConfig::default()
        };
        let r = differential_evolution(&bowl(c), start, start, &cfg).unwrap();
        assert!(r.generations <= 200);
        assert!(dist(r.best, c) < 1e-2, "seed {seed}: {}", r.best);
    }
}

#[test]
fn shifted_rastrigin_global_optimum() {
    let c = [1.9, 4.6, 1.7];
    let start = sizes([1.6, 3.9, 1.5]);
    let hits = (0..5)
        .filter(|&seed| {
            let cfg = DeConfig {
                seed,
                population: 32,
                max_iters: 500,
                ..DeConfig::default()
            };
            let r = differential_evolution(&rastrigin(c), start, start, &cfg).unwrap();
            r.generations <= 500 && dist(r.best, c) < 0.1
        })
        .count();
    assert!(hits >= 4, "{hits}/5");
}

#[test]
fn constant_objective_stalls_on_the_initial_candidate() {
    let init = sizes([1.7, 4.1, 1.6]);
    let source = sizes([2.0, 4.5, 1.8]);
    let cfg = DeConfig::default();
    let r = differential_evolution(&|_| Ok(3.0), init, source, &cfg).unwrap();
    assert_eq!(r.termination, Termination::Converged);
    assert_eq!(r.generations, cfg.stall_generations);
    // strict selection never replaces anyone, so the best stays member 0
    assert_eq!(r.best, init);
    assert!(r.trace.iter().all(|f| *f == 3.0));
}

#[test]
fn sweep_ties_and_grid_argmax() {
    let source = sizes([2.0, 4.0, 1.5]);
    let out = linear_sweep(&|_| Ok(1.0), source, &SweepConfig::all(), &[]).unwrap();
    assert_eq!(out.initial, source);

    let cfg = SweepConfig {
        axis: Axis::W,
        relative_range: 0.25,
        steps: 4,
    };
    let grid = cfg.grid(2.0);
    assert_eq!(grid.len(), 4);
    let out = linear_sweep(
        &|s: AnchorSizes| Ok(-(s.w() - grid[1]).powi(2)),
        source,
        &[cfg],
        &[],
    )
    .unwrap();
    assert_eq!(out.initial.w(), grid[1]);
    assert_eq!((out.initial.l(), out.initial.h()), (4.0, 1.5));
}

#[test]
fn evaluation_bookkeeping_is_exact() {
    let count = AtomicUsize::new(0);
    let eval = |s: AnchorSizes| {
        count.fetch_add(1, Ordering::Relaxed);
        bowl([1.8, 4.2, 1.6])(s)
    };
    let source = sizes([2.1, 4.8, 1.8]);
    let sweep_cfg = SweepConfig::all();
    let sweep = linear_sweep(&eval, source, &sweep_cfg, &[]).unwrap();
    assert_eq!(sweep.evaluations, 63);
    let cfg = DeConfig {
        seed: 3,
        ..DeConfig::default()
    };
    let de = differential_evolution(&eval, sweep.initial, source, &cfg).unwrap();
    assert_eq!(de.evaluations, cfg.population * (1 + de.generations));
    assert_eq!(
        count.load(Ordering::Relaxed),
        sweep.evaluations + de.evaluations
    );
    assert_eq!(de.trace.len(), de.generations + 1);
    assert!(de.trace.windows(2).all(|w| w[1] >= w[0]));

    // a second sweep reusing every curve costs nothing
    let again = linear_sweep(&eval, source, &sweep_cfg, &sweep.curves).unwrap();
    assert_eq!(again.evaluations, 0);
    assert_eq!(again.initial, sweep.initial);
}

#[test]
fn same_seed_same_outcome() {
    let start = sizes([1.6, 3.9, 1.5]);
    let cfg = DeConfig {
        seed: 9,
        population: 20,
        ..DeConfig::default()
    };
    let f = rastrigin([1.9, 4.6, 1.7]);
    let a = differential_evolution(&f, start, start, &cfg).unwrap();
    let b = differential_evolution(&f, start, start, &cfg).unwrap();
    assert_eq!(a, b);
}

#[test]
fn gate_excluding_everything_aborts() {
    let s = generate_domain(&SyntheticDomain::waymo_like(1), 5).unwrap();
    let t = generate_domain(&SyntheticDomain::kitti_like(2), 5).unwrap();
    let cfg = CalibrationConfig {
        gate: GateConfig::with_tau(1.0),
        ..CalibrationConfig::default()
    };
    let e = calibrate(&s, &t, &s.frames(), &t.frames(), 0, &cfg, &[]).unwrap_err();
    assert!(matches!(e, Error::ZeroFeatures { .. }), "{e}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn every_evaluated_candidate_respects_the_floor(seed in any::<u64>(), eta in 0.3f64..2.0) {
        // the optimum lies at negative sizes, so the search presses on the floor
        let seen = Mutex::new(Vec::new());
        let eval = |s: AnchorSizes| {
            seen.lock().unwrap().push(s);
            Ok(-(s.w() + s.l() + s.h()))
        };
        let start = sizes([0.3, 0.4, 0.2]);
        let cfg = DeConfig { seed, eta, max_iters: 40, init_range: 0.9, ..DeConfig::default() };
        let r = differential_evolution(&eval, start, start, &cfg).unwrap();
        let seen = seen.into_inner().unwrap();
        prop_assert_eq!(seen.len(), r.evaluations);
        prop_assert!(seen.iter().all(|s| s.to_array().iter().all(|v| *v >= cfg.size_floor)));
        prop_assert!(r.trace.windows(2).all(|w| w[1] >= w[0]));
    }
}
