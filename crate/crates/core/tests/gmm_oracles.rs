mod common;

use anchor_calib::gmm::{fit_em, fit_em_report, fitness, EmConfig, Gmm, GmmComponent};
use anchor_calib::types::FeatureDatabase;
use common::*;
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[test]
fn log_pdf_matches_direct_evaluation() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let g = random_gmm(&mut rng, 3, 4);
    for x in [
        [0.0, 0.0, 0.0, 0.0],
        [1.0, -1.0, 0.5, 2.0],
        [-2.5, 3.0, 0.1, -0.7],
    ] {
        let xf: Vec<f32> = x.iter().map(|v| *v as f32).collect();
        let xd: Vec<f64> = xf.iter().map(|v| *v as f64).collect();
        let got = g.log_pdf(&xf).unwrap();
        let want = naive_log_pdf(&g, &xd);
        assert!((got - want).abs() < 1e-10, "{got} vs {want}");
    }
}

#[test]
fn fitness_of_own_samples_approaches_negative_entropy() {
    // single diagonal Gaussian: E[log p] = -1/2 sum_d (1 + ln 2 pi v_d)
    let var = [0.5, 1.0, 2.0];
    let g = Gmm::new(
        3,
        vec![GmmComponent {
            weight: 1.0,
            mean: vec![1.0, -2.0, 0.5],
            variance: var.to_vec(),
        }],
    )
    .unwrap();
    let n = 20_000;
    let db = sample_db(&g, n, 5);
    let expected: f64 = var
        .iter()
        .map(|v| -0.5 * (1.0 + (2.0 * std::f64::consts::PI * v).ln()))
        .sum();
    // log p = const - chi2_3 / 2 has variance D / 2
    let se = (1.5 / n as f64).sqrt();
    let got = fitness(&db, &g).unwrap();
    assert!(
        (got - expected).abs() < 4.0 * se,
        "{got} vs {expected} (se {se})"
    );
}

#[test]
fn em_log_likelihood_never_decreases() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let truth = random_gmm(&mut rng, 4, 6);
    let db = sample_db(&truth, 1500, 9);
    let report = fit_em_report(
        &db,
        &EmConfig {
            k: 4,
            restarts: 3,
            ..EmConfig::default()
        },
    )
    .unwrap();
    for r in &report.restarts {
        for w in r.avg_log_likelihood.windows(2) {
            assert!(w[1] >= w[0] - 1e-9, "{} -> {}", w[0], w[1]);
        }
    }
}

#[test]
fn fit_is_invariant_to_row_order() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let truth = random_gmm(&mut rng, 3, 4);
    let db = sample_db(&truth, 800, 1);
    let mut rows: Vec<Vec<f32>> = db.rows().map(|r| r.to_vec()).collect();
    rows.shuffle(&mut rng);
    let shuffled = FeatureDatabase::from_rows(4, rows).unwrap();
    let cfg = EmConfig {
        k: 3,
        ..EmConfig::default()
    };
    let a = fit_em(&db, &cfg).unwrap();
    let b = fit_em(&shuffled, &cfg).unwrap();
    assert_eq!(a, b);
    assert!((fitness(&db, &a).unwrap() - fitness(&shuffled, &a).unwrap()).abs() < 1e-12);
}

#[test]
fn fewer_samples_than_components_is_rejected() {
    let db = FeatureDatabase::from_rows(2, [[0.0f32, 1.0], [1.0, 0.0]]).unwrap();
    assert!(fit_em(
        &db,
        &EmConfig {
            k: 3,
            ..EmConfig::default()
        }
    )
    .is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn log_pdf_agrees_with_oracle_and_bound(seed in any::<u64>(), k in 1usize..5, dim in 1usize..6) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let g = random_gmm(&mut rng, k, dim);
        let db = sample_db(&g, 10, seed ^ 1);
        for row in db.rows() {
            let x: Vec<f64> = row.iter().map(|v| *v as f64).collect();
            let got = g.log_pdf(row).unwrap();
            prop_assert!((got - naive_log_pdf(&g, &x)).abs() < 1e-9);
            prop_assert!(got <= g.log_pdf_upper_bound() + 1e-12);
        }
    }

    #[test]
    fn fitness_ignores_duplication(seed in any::<u64>(), n in 1usize..50, copies in 2usize..4) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let g = random_gmm(&mut rng, 3, 4);
        let db = sample_db(&g, n, seed);
        let mut rep = db.clone();
        for _ in 1..copies {
            rep.extend_from(&db).unwrap();
        }
        let (a, b) = (fitness(&db, &g).unwrap(), fitness(&rep, &g).unwrap());
        prop_assert!((a - b).abs() <= 1e-12 * a.abs().max(1.0));
    }
}
