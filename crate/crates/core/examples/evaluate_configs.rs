//! Synthesize the distance/viewpoint grid with noise, localize it and print
//! the error table.
//!
//! `cargo run --release --example evaluate_configs -- 20`

use stairloc::pipeline::{cmd_eval, cmd_localize, cmd_synth, RunConfig, SynthPlan};
use stairloc::synth::CorruptionSpec;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let count = std::env::args()
        .nth(1)
        .map(|s| s.parse())
        .transpose()?
        .unwrap_or(10);
    let dir = tempfile::tempdir()?;
    let dataset = dir.path().join("dataset");
    let corruption = CorruptionSpec {
        depth_noise: 0.01,
        jitter_px: 1.0,
        outlier_segments: 2,
        ..CorruptionSpec::none()
    };
    cmd_synth(&SynthPlan::distance_grid(), &corruption, count, 1, &dataset)?;
    let run = RunConfig {
        dataset: dataset.clone(),
        out: dir.path().join("run"),
        seed: 1,
        ..RunConfig::default()
    };
    let out = cmd_localize(&run)?;
    println!(
        "{} poses, {} nodes, {} diagnostics\n",
        out.poses.len(),
        out.nodes.len(),
        out.diagnostics.len()
    );
    let report = cmd_eval(
        &run.out.join("poses.jsonl"),
        &dataset.join("manifest.json"),
        None,
    )?;
    print!("{}", report.to_table());
    Ok(())
}
