//! Pixel + depth to a camera-frame point and back.

use stairloc::camera::{Intrinsics, Pixel};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let k = Intrinsics::new(600.0, 600.0, 320.0, 240.0, 640, 480)?;
    for (u, v, z) in [(320.0, 240.0, 1.0), (100.5, 400.25, 3.2), (639.0, 0.0, 7.5)] {
        let p = k.unproject(Pixel::new(u, v), z)?;
        let (back, depth) = k.project(&p)?;
        println!(
            "({u:>6.2}, {v:>6.2}) @ {z:.2} m -> [{:+.4}, {:+.4}, {:.4}] -> ({:.2}, {:.2}) @ {depth:.2} m",
            p.x, p.y, p.z, back.u, back.v
        );
    }
    println!("\n{}", k.to_kv());
    Ok(())
}
