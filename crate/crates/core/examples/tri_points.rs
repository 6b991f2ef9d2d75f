//! Tri-point segments, slope angles and the parallel-segment consensus.

use nalgebra::Vector2;
use stairloc::camera::Pixel;
use stairloc::segments::{
    ransac_parallel_filter, slope_angle, tp_to_endpoints, ConsensusParams, LineSegmentTP,
    SegmentSet,
};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    // four near-horizontal nosings and two strays, crop-local
    let raw = [
        ((10.0, 20.0), (200.0, 22.0)),
        ((12.0, 60.0), (205.0, 61.0)),
        ((8.0, 100.0), (210.0, 103.0)),
        ((15.0, 140.0), (190.0, 141.0)),
        ((50.0, 10.0), (70.0, 150.0)),
        ((100.0, 30.0), (160.0, 90.0)),
    ];
    let segs: Vec<LineSegmentTP> = raw
        .iter()
        .map(|&((a, b), (c, d))| LineSegmentTP::from_endpoints(Pixel::new(a, b), Pixel::new(c, d)))
        .collect();
    for (i, s) in segs.iter().enumerate() {
        let (p, q) = tp_to_endpoints(s)?;
        println!(
            "#{i}: {p} -> {q}, slope {:+.2}°",
            slope_angle(s)?.to_degrees()
        );
    }
    let set = SegmentSet::new(segs, Vector2::new(40.0, 80.0));
    let split = ransac_parallel_filter(&set, &ConsensusParams::default(), 0)?;
    println!(
        "\nconsensus {:+.2}°: inliers {:?}, outliers {:?}",
        split.consensus_angle.to_degrees(),
        split.inlier_indices,
        split.outlier_indices
    );
    Ok(())
}
