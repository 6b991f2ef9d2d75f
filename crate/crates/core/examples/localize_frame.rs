//! One frame through the whole localizer, with per-stage numbers.

use stairloc::camera::Intrinsics;
use stairloc::detection::FrameBundle;
use stairloc::localizer::{localize, ExtrinsicsConfig, LocalizeParams};
use stairloc::synth::{build_scene, corrupt, detection_record, CorruptionSpec, StaircaseSpec};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let k = Intrinsics::new(600.0, 600.0, 320.0, 240.0, 640, 480)?;
    let scene = build_scene(&StaircaseSpec::standard(3.0, 0.0), &k)?;
    let noisy = corrupt(
        &scene,
        &CorruptionSpec {
            depth_noise: 0.01,
            jitter_px: 1.0,
            outlier_segments: 2,
            ..CorruptionSpec::none()
        },
        7,
    )?;
    let bundle = FrameBundle {
        color: None,
        depth: noisy.depth.clone(),
        intrinsics: k,
        detections: detection_record(&noisy, "frame_0000"),
    };
    let cfg = ExtrinsicsConfig::default();
    let result = localize(&bundle, &cfg, &LocalizeParams::default(), 7)?;
    for b in &result.boxes {
        println!(
            "box {}: {} inlier / {} outlier segments, {} lifted",
            b.box_index,
            b.inliers.len(),
            b.outliers.len(),
            b.lifted.len()
        );
        match &b.outcome {
            Ok(p) => {
                let t = &noisy.truth;
                println!(
                    "  P = [{:+.3}, {:+.3}, {:.3}]  truth [{:+.3}, {:+.3}, {:.3}]",
                    p.position.x,
                    p.position.y,
                    p.position.z,
                    t.position.x,
                    t.position.y,
                    t.position.z
                );
                println!(
                    "  θ = {:+.2}° (truth {:+.2}°), h = {:.3} m, {}, {} points on {} lines",
                    p.theta.to_degrees(),
                    t.theta.to_degrees(),
                    p.height,
                    p.direction.as_str(),
                    p.n_points,
                    p.n_lines
                );
            }
            Err(e) => println!("  rejected: {e}"),
        }
    }
    Ok(())
}
