//! Generate a synthetic domain and show how the surrogate detector's score
//! reacts to the anchor size.

use anchor_calib::extractor::FeatureExtractor;
use anchor_calib::synthdet::{generate_domain, mean_capture_score, SyntheticDomain};
use anchor_calib::types::Axis;

fn main() -> anchor_calib::Result<()> {
    let spec = SyntheticDomain::kitti_like(3);
    let domain = generate_domain(&spec, 50)?;
    let frames = domain.frames();
    let objects = domain.objects(&frames, 0).count();
    println!(
        "{} frames, {objects} cars, feature dim {}",
        frames.len(),
        domain.dim()
    );

    let truth = spec.classes[0].mean_size;
    for axis in Axis::ALL {
        print!("{axis}:");
        for scale in [0.5, 0.75, 1.0, 1.25, 1.5] {
            let sizes = truth.with_axis(axis, truth.get(axis) * scale)?;
            print!(
                "  x{scale:.2} {:.3}",
                mean_capture_score(&domain, &frames, 0, sizes)?
            );
        }
        println!();
    }

    let props = domain.propose(frames[0], 0, truth)?;
    if let Some(p) = props.first() {
        println!(
            "first proposal: score {:.3}, feature mass {:.3}",
            p.score,
            p.feature.values().iter().sum::<f32>()
        );
    }
    Ok(())
}
