//! Differential evolution on a quadratic bowl and a shifted Rastrigin
//! function, both with known optima.

use std::f64::consts::PI;

use anchor_calib::optimizer::{differential_evolution, DeConfig};
use anchor_calib::types::AnchorSizes;

fn main() -> anchor_calib::Result<()> {
    let bowl_at = [2.0, 4.0, 1.5];
    let bowl = |s: AnchorSizes| -> anchor_calib::Result<f64> {
        Ok(-s
            .to_array()
            .iter()
            .zip(bowl_at)
            .map(|(x, c)| (x - c).powi(2))
            .sum::<f64>())
    };
    let rastrigin_at = [1.9, 4.6, 1.7];
    let rastrigin = |s: AnchorSizes| -> anchor_calib::Result<f64> {
        let v: f64 = s
            .to_array()
            .iter()
            .zip(rastrigin_at)
            .map(|(x, c)| {
                let d = x - c;
                d * d - 10.0 * (2.0 * PI * d).cos() + 10.0
            })
            .sum();
        Ok(-v)
    };

    let start = AnchorSizes::new(1.6, 3.9, 1.5)?;
    for seed in 0..5 {
        let cfg = DeConfig {
            seed,
            ..DeConfig::default()
        };
        let r = differential_evolution(&bowl, start, start, &cfg)?;
        println!(
            "bowl      seed {seed}: {} in {} generations",
            r.best, r.generations
        );
    }
    for seed in 0..5 {
        let cfg = DeConfig {
            seed,
            population: 32,
            max_iters: 500,
            stall_generations: 50,
            ..DeConfig::default()
        };
        let r = differential_evolution(&rastrigin, start, start, &cfg)?;
        println!(
            "rastrigin seed {seed}: {} fitness {:.4} in {} generations",
            r.best, r.best_fitness, r.generations
        );
    }
    Ok(())
}
