//! Acceptance criteria, run in sequence so the timings are not disturbed by
//! other tests. One PASS/FAIL line per criterion; the process fails if any
//! criterion does.

use std::fs;
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use nalgebra::{Point3, Vector2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use stairloc::angles::fold_half_turn;
use stairloc::camera::{Intrinsics, Pixel};
use stairloc::detection::FrameBundle;
use stairloc::localizer::{localize, Direction, ExtrinsicsConfig, LocalizeParams, StairPose};
use stairloc::registry::{Registry, RegistryConfig, StairCandidate};
use stairloc::segments::{
    ransac_parallel_filter, ConsensusParams, LineSegmentTP, SegmentError, SegmentSet,
};
use stairloc::synth::{
    build_scene, corrupt, detection_record, CorruptionSpec, StairKind, StaircaseSpec,
    SyntheticScene,
};

struct Outcome {
    pass: bool,
    detail: String,
}

fn check(name: &str, f: impl FnOnce() -> Outcome) -> bool {
    let t = Instant::now();
    let o = f();
    let tag = if o.pass { "PASS" } else { "FAIL" };
    println!("{tag} {name}: {} [{:.2?}]", o.detail, t.elapsed());
    o.pass
}

fn camera() -> Intrinsics {
    Intrinsics::new(600.0, 600.0, 320.0, 240.0, 640, 480).unwrap()
}

fn bundle_of(scene: &SyntheticScene) -> FrameBundle {
    FrameBundle {
        color: None,
        depth: scene.depth.clone(),
        intrinsics: scene.intrinsics,
        detections: detection_record(scene, "f"),
    }
}

fn localize_scene(scene: &SyntheticScene, seed: u64) -> Option<StairPose> {
    let r = localize(
        &bundle_of(scene),
        &ExtrinsicsConfig::default(),
        &LocalizeParams::default(),
        seed,
    )
    .expect("well-formed bundle");
    r.boxes.into_iter().next().and_then(|b| b.outcome.ok())
}

fn projection_round_trip() -> Outcome {
    let k = Intrinsics::new(612.3, 608.9, 318.7, 243.1, 640, 480).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let t = Instant::now();
    let mut worst = 0.0f64;
    for _ in 0..10_000 {
        let px = Pixel::new(rng.random_range(0.0..640.0), rng.random_range(0.0..480.0));
        let z = rng.random_range(0.1..20.0);
        let p = k.unproject(px, z).unwrap();
        let (back, depth) = k.project(&p).unwrap();
        worst = worst
            .max((back.u - px.u).abs())
            .max((back.v - px.v).abs())
            .max((depth - z).abs());
        // and the other way round
        let q = k.unproject(back, depth).unwrap();
        worst = worst.max((q - p).amax());
    }
    let elapsed = t.elapsed();
    Outcome {
        pass: worst <= 1e-9 && elapsed < Duration::from_secs(1),
        detail: format!("10000 draws, max deviation {worst:.1e}, {elapsed:.2?}"),
    }
}

fn noiseless_grid() -> Outcome {
    let k = camera();
    let t = Instant::now();
    let cases: Vec<(f64, f64)> = [1.0, 3.0, 5.0]
        .iter()
        .flat_map(|&d| [0.0, -1.0, 1.0].map(|l| (d, l)))
        .collect();
    let errors: Vec<Option<(f64, f64)>> = cases
        .par_iter()
        .map(|&(d, l)| {
            let scene = build_scene(&StaircaseSpec::standard(d, l), &k).ok()?;
            let p = localize_scene(&scene, 0)?;
            let dp = (p.position - scene.truth.position).amax();
            let dth = fold_half_turn(p.theta - scene.truth.theta)
                .abs()
                .to_degrees();
            Some((dp, dth))
        })
        .collect();
    let elapsed = t.elapsed();
    let failed: Vec<String> = cases
        .iter()
        .zip(&errors)
        .filter(|(_, e)| !matches!(e, Some((dp, dth)) if *dp <= 1e-3 && *dth <= 0.1))
        .map(|((d, l), _)| format!("{d}m/{l:+}m"))
        .collect();
    let max_dp = errors.iter().flatten().map(|e| e.0).fold(0.0, f64::max);
    let max_dth = errors.iter().flatten().map(|e| e.1).fold(0.0, f64::max);
    Outcome {
        pass: failed.is_empty() && elapsed < Duration::from_secs(10),
        detail: format!(
            "9 configurations, max |Δp| {max_dp:.1e} m, max |Δθ| {max_dth:.1e}°, failing {failed:?}, {elapsed:.2?}"
        ),
    }
}

/// Depth σ 1% of range, 1 px endpoint jitter, and outliers making up at
/// least 20% of the reported segments.
fn noisy_corruption(scene: &SyntheticScene) -> CorruptionSpec {
    CorruptionSpec {
        depth_noise: 0.01,
        jitter_px: 1.0,
        outlier_segments: scene.truth_segments.len().div_ceil(4),
        ..CorruptionSpec::none()
    }
}

/// Mean absolute errors `[x, y, z, θ°]` over trials that produced a pose,
/// and the number of such trials.
fn noisy_trials(distance: f64, trials: u64) -> ([f64; 4], usize) {
    let scene = build_scene(&StaircaseSpec::standard(distance, 0.0), &camera()).unwrap();
    let c = noisy_corruption(&scene);
    let errs: Vec<[f64; 4]> = (0..trials)
        .into_par_iter()
        .filter_map(|s| {
            let noisy = corrupt(&scene, &c, 1000 + s).unwrap();
            let p = localize_scene(&noisy, s)?;
            let d = p.position - noisy.truth.position;
            let th = fold_half_turn(p.theta - noisy.truth.theta)
                .abs()
                .to_degrees();
            Some([d.x.abs(), d.y.abs(), d.z.abs(), th])
        })
        .collect();
    let n = errs.len().max(1) as f64;
    let mut mean = [0.0; 4];
    for e in &errs {
        for i in 0..4 {
            mean[i] += e[i] / n;
        }
    }
    (mean, errs.len())
}

fn noisy_three_metres() -> Outcome {
    let t = Instant::now();
    let (m, ok) = noisy_trials(3.0, 100);
    let elapsed = t.elapsed();
    Outcome {
        pass: ok == 100
            && m[..3].iter().all(|e| *e < 0.10)
            && m[3] < 5.0
            && elapsed < Duration::from_secs(60),
        detail: format!(
            "{ok}/100 localized, mean |error| x {:.4} y {:.4} z {:.4} m, θ {:.3}°, {elapsed:.2?}",
            m[0], m[1], m[2], m[3]
        ),
    }
}

fn degradation_with_distance() -> Outcome {
    let (near, n_near) = noisy_trials(1.0, 50);
    let (far, n_far) = noisy_trials(5.0, 50);
    Outcome {
        pass: n_near > 0 && n_far > 0 && far[3] >= near[3],
        detail: format!(
            "mean |θ error| 1 m {:.3}° ({n_near}/50), 5 m {:.3}° ({n_far}/50)",
            near[3], far[3]
        ),
    }
}

fn direction_trichotomy() -> Outcome {
    let eps = ExtrinsicsConfig::default().epsilon;
    let k = camera();
    let mut scenes = Vec::new();
    for kind in [StairKind::Up, StairKind::Down] {
        for floor in [0.3, 0.5, 0.7, 0.85, 1.0, 1.15, 1.3] {
            for (d, lateral) in [(2.0, 0.0), (3.0, -0.5), (4.0, 0.5)] {
                let mut spec = StaircaseSpec::standard(d, lateral);
                spec.kind = kind;
                spec.origin[1] = floor;
                scenes.push(spec);
            }
        }
    }
    let results: Vec<Option<(f64, Option<Direction>)>> = scenes
        .par_iter()
        .map(|spec| {
            let scene = build_scene(spec, &k).ok()?;
            let h = scene.truth.height;
            Some((h, localize_scene(&scene, 0).map(|p| p.direction)))
        })
        .collect();
    let (mut up, mut down, mut amb, mut wrong) = (0, 0, 0, Vec::new());
    for r in results.iter().flatten() {
        let (h, got) = *r;
        let expected = if h >= 2.0 * eps {
            up += 1;
            Direction::Up
        } else if h <= -2.0 * eps {
            down += 1;
            Direction::Down
        } else if h.abs() <= eps / 2.0 {
            amb += 1;
            Direction::Ambiguous
        } else {
            continue;
        };
        if got != Some(expected) {
            wrong.push(format!("h={h:+.3}: {got:?}"));
        }
    }
    Outcome {
        pass: wrong.is_empty() && up >= 3 && down >= 3 && amb >= 3,
        detail: format!("{up} up, {down} down, {amb} ambiguous scenes, misclassified {wrong:?}"),
    }
}

/// Largest set of segments all within `tol` of one member's line, from
/// direction cross products.
fn exhaustive_max(segs: &[LineSegmentTP], tol: f64) -> usize {
    let dirs: Vec<Vector2<f64>> = segs
        .iter()
        .map(|s| {
            let (a, b) = s.endpoints_unchecked();
            Vector2::new(b.u - a.u, b.v - a.v).normalize()
        })
        .collect();
    let limit = tol.sin();
    dirs.iter()
        .map(|u| dirs.iter().filter(|v| u.perp(v).abs() <= limit).count())
        .max()
        .unwrap_or(0)
}

fn ransac_oracle() -> Outcome {
    let params = ConsensusParams::default();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let t = Instant::now();
    let mut mismatches = Vec::new();
    for case in 0..1000 {
        let n = rng.random_range(1..=12);
        let families: Vec<f64> = (0..rng.random_range(1..=3))
            .map(|_| rng.random_range(-1.6..1.6))
            .collect();
        let segs: Vec<LineSegmentTP> = (0..n)
            .map(|_| {
                let a = if rng.random_bool(0.8) {
                    families[rng.random_range(0..families.len())] + rng.random_range(-0.08..0.08)
                } else {
                    rng.random_range(-3.2..3.2)
                };
                let len = rng.random_range(5.0..200.0);
                let s = Pixel::new(rng.random_range(0.0..640.0), rng.random_range(0.0..480.0));
                let e = Pixel::new(s.u + len * a.cos(), s.v + len * a.sin());
                LineSegmentTP::from_endpoints(s, e)
            })
            .collect();
        let oracle = exhaustive_max(&segs, params.tol);
        let got = match ransac_parallel_filter(&SegmentSet::full_frame(segs), &params, case) {
            Ok(split) => split.inlier_indices.len(),
            Err(SegmentError::InsufficientConsensus { best, .. }) => best,
            Err(e) => panic!("case {case}: {e}"),
        };
        if got != oracle {
            mismatches.push((case, got, oracle));
        }
    }
    let elapsed = t.elapsed();
    Outcome {
        pass: mismatches.is_empty() && elapsed < Duration::from_secs(5),
        detail: format!("1000 instances, mismatches {mismatches:?}, {elapsed:.2?}"),
    }
}

/// Sample σ of the positions and period-π σ of the angles about the best
/// reference on a fine grid.
fn recomputed_sigmas(poses: &[&StairPose]) -> (f64, f64) {
    let n = poses.len() as f64;
    let mut var = 0.0;
    for axis in 0..3 {
        let m = poses.iter().map(|p| p.position[axis]).sum::<f64>() / n;
        var += poses
            .iter()
            .map(|p| (p.position[axis] - m).powi(2))
            .sum::<f64>()
            / (n - 1.0);
    }
    let steps = 20_000;
    let best = (0..steps)
        .map(|i| {
            let r = -std::f64::consts::FRAC_PI_2 + std::f64::consts::PI * i as f64 / steps as f64;
            poses
                .iter()
                .map(|p| fold_half_turn(p.theta - r).powi(2))
                .sum::<f64>()
        })
        .fold(f64::INFINITY, f64::min);
    (var.sqrt(), (best / (n - 1.0)).sqrt())
}

fn irm_invariants() -> Outcome {
    let cfg = RegistryConfig::default();
    let frame = ExtrinsicsConfig::default();
    let mut reg = Registry::new(cfg).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    // stairs scattered over 40 m × 40 m, some observed tightly, some not
    let stairs: Vec<(f64, f64, f64, f64)> = (0..40)
        .map(|_| {
            let noise = [0.02, 0.06, 0.15, 0.4][rng.random_range(0..4)];
            (
                rng.random_range(-20.0..20.0),
                rng.random_range(-20.0..20.0),
                rng.random_range(-3.2..3.2),
                noise,
            )
        })
        .collect();
    let unit = Normal::new(0.0, 1.0).unwrap();
    let mut t = 0.0;
    for i in 0..10_000 {
        t += rng.random_range(0.0..0.1);
        let (x, z, theta, s) = stairs[rng.random_range(0..stairs.len())];
        let p = Point3::new(
            x + s * unit.sample(&mut rng),
            0.1 * s * unit.sample(&mut rng),
            z + s * unit.sample(&mut rng),
        );
        let th = theta + 0.3 * s * unit.sample(&mut rng);
        reg.submit(StairCandidate {
            pose: StairPose::from_parts(p, th, &frame),
            timestamp: t,
            frame: format!("c{i}"),
        });
    }
    let nodes = reg.nodes();
    let mut too_close = 0;
    for (i, a) in nodes.iter().enumerate() {
        for b in &nodes[i + 1..] {
            let d = (a.pose.position - b.pose.position).xz().norm();
            if d <= cfg.radius {
                too_close += 1;
            }
        }
    }
    let mut over_gate = 0;
    for n in nodes {
        let window: Vec<&StairPose> = n.window.iter().map(|c| &c.pose).collect();
        let (sp, st) = recomputed_sigmas(&window);
        if window.len() != cfg.window || sp > cfg.sigma_pos + 1e-9 || st > cfg.sigma_theta + 1e-4 {
            over_gate += 1;
        }
    }
    Outcome {
        pass: !nodes.is_empty() && too_close == 0 && over_gate == 0,
        detail: format!(
            "10000 submissions, {} nodes, {too_close} pairs within R, {over_gate} nodes over a σ gate",
            nodes.len()
        ),
    }
}

fn stairloc(args: &[&str]) -> Result<(), String> {
    let out = Command::new(env!("CARGO_BIN_EXE_stairloc"))
        .args(args)
        .output()
        .map_err(|e| e.to_string())?;
    if out.status.success() {
        Ok(())
    } else {
        Err(format!(
            "{args:?}: {}",
            String::from_utf8_lossy(&out.stderr)
        ))
    }
}

fn pipeline_run(root: &Path) -> Result<Vec<(String, Vec<u8>)>, String> {
    let corruption = root.join("corruption.json");
    fs::write(
        &corruption,
        r#"{"depth_noise": 0.01, "jitter_px": 1.0, "outlier_segments": 2, "dropout": 0.02}"#,
    )
    .map_err(|e| e.to_string())?;
    let (ds, run) = (root.join("ds"), root.join("run"));
    let s = |p: &Path| p.to_str().unwrap().to_owned();
    stairloc(&[
        "synth",
        "--corruption",
        &s(&corruption),
        "--count",
        "3",
        "--seed",
        "9",
        "--out",
        &s(&ds),
    ])?;
    stairloc(&[
        "localize",
        "--dataset",
        &s(&ds),
        "--seed",
        "9",
        "--out",
        &s(&run),
    ])?;
    stairloc(&[
        "eval",
        "--poses",
        &s(&run.join("poses.jsonl")),
        "--manifest",
        &s(&ds.join("manifest.json")),
        "--out",
        &s(&run),
    ])?;
    let mut files = Vec::new();
    for name in [
        "manifest.json",
        "frame_0013/detections.json",
        "frame_0013/depth.pfm",
    ] {
        files.push((
            name.to_owned(),
            fs::read(ds.join(name)).map_err(|e| e.to_string())?,
        ));
    }
    for name in [
        "poses.jsonl",
        "nodes.jsonl",
        "diagnostics.jsonl",
        "report.txt",
        "report.json",
    ] {
        files.push((
            name.to_owned(),
            fs::read(run.join(name)).map_err(|e| e.to_string())?,
        ));
    }
    Ok(files)
}

fn determinism() -> Outcome {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    match (pipeline_run(a.path()), pipeline_run(b.path())) {
        (Ok(x), Ok(y)) => {
            let differing: Vec<&str> = x
                .iter()
                .zip(&y)
                .filter(|(p, q)| p.1 != q.1)
                .map(|(p, _)| p.0.as_str())
                .collect();
            let report_rows = String::from_utf8_lossy(&x[6].1)
                .lines()
                .count()
                .saturating_sub(2);
            Outcome {
                pass: differing.is_empty() && report_rows == 9,
                detail: format!("synth→localize→eval twice, {report_rows} report rows, differing files {differing:?}"),
            }
        }
        (Err(e), _) | (_, Err(e)) => Outcome {
            pass: false,
            detail: e,
        },
    }
}

fn main() {
    let results = [
        check("projection round trip", projection_round_trip),
        check("noiseless end-to-end", noiseless_grid),
        check("noisy end-to-end at 3 m", noisy_three_metres),
        check("degradation with distance", degradation_with_distance),
        check("direction trichotomy", direction_trichotomy),
        check("RANSAC oracle equivalence", ransac_oracle),
        check("IRM invariants", irm_invariants),
        check("determinism", determinism),
    ];
    let failed = results.iter().filter(|p| !**p).count();
    println!("\n{} passed, {failed} failed", results.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
