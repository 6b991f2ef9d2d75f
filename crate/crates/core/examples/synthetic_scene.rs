//! Renders a staircase, corrupts it and writes the bundle to a directory.
//!
//! `cargo run --example synthetic_scene -- /tmp/scene`

use std::path::PathBuf;

use stairloc::camera::Intrinsics;
use stairloc::dataset::{write_bundle, TruthRecord};
use stairloc::synth::{build_scene, corrupt, detection_record, CorruptionSpec, StaircaseSpec};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let out: PathBuf = std::env::args()
        .nth(1)
        .unwrap_or_else(|| "synthetic_scene".into())
        .into();
    let k = Intrinsics::new(600.0, 600.0, 320.0, 240.0, 640, 480)?;
    let spec = StaircaseSpec {
        yaw: 15f64.to_radians(),
        ..StaircaseSpec::standard(3.0, 0.3)
    };
    let scene = build_scene(&spec, &k)?;
    println!(
        "{} visible nosings {:?}, {} valid depth pixels",
        scene.truth_segments.len(),
        scene.nosing_ids,
        scene.depth.valid_count()
    );
    let t = &scene.truth;
    println!(
        "truth: P = [{:+.3}, {:+.3}, {:.3}], θ = {:+.2}°, h = {:+.3} m, {}",
        t.position.x,
        t.position.y,
        t.position.z,
        t.theta.to_degrees(),
        t.height,
        t.direction.as_str()
    );
    let noisy = corrupt(
        &scene,
        &CorruptionSpec {
            depth_noise: 0.01,
            jitter_px: 1.0,
            outlier_segments: 2,
            ..CorruptionSpec::none()
        },
        42,
    )?;
    let rec = detection_record(&noisy, "frame_0000");
    write_bundle(
        &out,
        &k,
        &noisy.depth,
        &rec,
        Some(&TruthRecord::from(&noisy.truth)),
    )?;
    println!("bundle written to {}", out.display());
    Ok(())
}
