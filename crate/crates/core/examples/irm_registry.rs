//! Candidates from two staircases stream into the registry; each becomes
//! one node once its window is tight enough, and repeats are suppressed.

use nalgebra::Point3;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use stairloc::localizer::{ExtrinsicsConfig, StairPose};
use stairloc::registry::{Registry, RegistryConfig, StairCandidate, SubmitEvent};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let cfg = ExtrinsicsConfig::default();
    let mut reg = Registry::new(RegistryConfig::default())?;
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let pos = Normal::new(0.0, 0.03)?;
    let ang = Normal::new(0.0, 0.01)?;
    let stairs = [([0.0, 0.0, 3.0], 0.1), ([4.0, 0.0, 6.0], -0.4)];
    for i in 0..60 {
        let (c, theta) = stairs[i % 2];
        let p = Point3::new(
            c[0] + pos.sample(&mut rng),
            c[1],
            c[2] + pos.sample(&mut rng),
        );
        let pose = StairPose::from_parts(p, theta + ang.sample(&mut rng), &cfg);
        let event = reg.submit(StairCandidate {
            pose,
            timestamp: i as f64 * 0.1,
            frame: format!("frame_{i:04}"),
        });
        match event {
            SubmitEvent::Published(n) => println!(
                "t={:.1}s node {} at [{:+.3}, {:.3}], θ {:+.2}°, σ_pos {:.3} m, σ_θ {:.2}°",
                i as f64 * 0.1,
                n.id,
                n.pose.position.x,
                n.pose.position.z,
                n.pose.theta.to_degrees(),
                n.sigma_pos,
                n.sigma_theta.to_degrees()
            ),
            SubmitEvent::Suppressed(_) | SubmitEvent::None => {}
        }
    }
    println!(
        "{} nodes, {} candidates pending",
        reg.nodes().len(),
        reg.pending()
    );
    Ok(())
}
