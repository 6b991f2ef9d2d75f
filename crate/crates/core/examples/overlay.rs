//! Writes an annotated PNG for a noisy synthetic frame.
//!
//! `cargo run --example overlay -- /tmp/overlay.png`

use std::path::PathBuf;

use stairloc::camera::Intrinsics;
use stairloc::detection::FrameBundle;
use stairloc::localizer::{localize, ExtrinsicsConfig, LocalizeParams};
use stairloc::overlay::{render_overlay, save_png};
use stairloc::synth::{build_scene, corrupt, detection_record, CorruptionSpec, StaircaseSpec};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let out: PathBuf = std::env::args()
        .nth(1)
        .unwrap_or_else(|| "overlay.png".into())
        .into();
    let k = Intrinsics::new(600.0, 600.0, 320.0, 240.0, 640, 480)?;
    let spec = StaircaseSpec {
        yaw: -20f64.to_radians(),
        ..StaircaseSpec::standard(2.5, 0.2)
    };
    let scene = corrupt(
        &build_scene(&spec, &k)?,
        &CorruptionSpec {
            outlier_segments: 3,
            ..CorruptionSpec::none()
        },
        5,
    )?;
    let bundle = FrameBundle {
        color: None,
        depth: scene.depth.clone(),
        intrinsics: k,
        detections: detection_record(&scene, "frame_0000"),
    };
    let cfg = ExtrinsicsConfig::default();
    let result = localize(&bundle, &cfg, &LocalizeParams::default(), 0)?;
    let img = render_overlay(&bundle, &result, &result.pose_records(), &cfg);
    save_png(&img, &out)?;
    println!("wrote {}", out.display());
    Ok(())
}
