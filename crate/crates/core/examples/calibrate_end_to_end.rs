//! Full calibration of Waymo-like car anchors on a KITTI-like domain.

use std::time::Instant;

use anchor_calib::extractor::FeatureExtractor;
use anchor_calib::optimizer::{calibrate, CalibrationConfig};
use anchor_calib::synthdet::{generate_domain, SyntheticDomain};

fn main() -> anchor_calib::Result<()> {
    let source = generate_domain(&SyntheticDomain::waymo_like(1), 300)?;
    let target_spec = SyntheticDomain::kitti_like(2);
    let target = generate_domain(&target_spec, 100)?;

    let t = Instant::now();
    let cal = calibrate(
        &source,
        &target,
        &source.frames(),
        &target.frames(),
        0,
        &CalibrationConfig::default(),
        &[],
    )?;
    let r = &cal.result;
    let truth = target_spec.classes[0].mean_size;
    println!(
        "reference features {} (K = {})",
        r.reference_features,
        cal.model.k()
    );
    println!("source      {}  fitness {:.3}", r.source, r.source_fitness);
    println!("sweep       {}", r.initial);
    println!(
        "calibrated  {}  fitness {:.3}",
        r.calibrated, r.calibrated_fitness
    );
    println!(
        "target mean {}  max relative error {:.2}%",
        truth,
        100.0 * r.calibrated.max_relative_error(&truth)
    );
    println!(
        "{} generations ({:?}), {} evaluations, {:.1?}",
        r.generations,
        r.termination,
        r.evaluations,
        t.elapsed()
    );
    Ok(())
}
