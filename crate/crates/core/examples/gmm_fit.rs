//! Fit a diagonal mixture to samples from a known two-component model and
//! compare the recovered parameters.

use anchor_calib::gmm::{fit_em_report, fitness, EmConfig, Gmm, GmmComponent};
use anchor_calib::types::FeatureDatabase;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> anchor_calib::Result<()> {
    let truth = Gmm::new(
        4,
        vec![
            GmmComponent {
                weight: 0.3,
                mean: vec![0.0, 0.0, 0.0, 0.0],
                variance: vec![0.2; 4],
            },
            GmmComponent {
                weight: 0.7,
                mean: vec![2.0, -1.0, 1.0, 3.0],
                variance: vec![0.3; 4],
            },
        ],
    )?;
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut db = FeatureDatabase::new(4)?;
    for _ in 0..2000 {
        let x: Vec<f32> = truth.sample(&mut rng).iter().map(|v| *v as f32).collect();
        db.push(&x)?;
    }

    let report = fit_em_report(
        &db,
        &EmConfig {
            k: 2,
            ..EmConfig::default()
        },
    )?;
    println!(
        "best restart {} of {}",
        report.best_restart,
        report.restarts.len()
    );
    for (r, t) in report.restarts.iter().enumerate() {
        println!(
            "  restart {r}: {} iterations, converged {}",
            t.avg_log_likelihood.len(),
            t.converged
        );
    }
    for c in report.model.components() {
        let mean: Vec<String> = c.mean.iter().map(|m| format!("{m:.3}")).collect();
        println!("weight {:.3} mean [{}]", c.weight, mean.join(", "));
    }
    println!("fitness under fit   {:.4}", fitness(&db, &report.model)?);
    println!("fitness under truth {:.4}", fitness(&db, &truth)?);
    Ok(())
}
