//! Synthetic staircases: analytic depth rendering, nosing segments and
//! exact ground truth, plus seeded corruption.
//!
//! A staircase lives in its own frame `(a, h, b)`: `a` runs along the
//! nosings, `h` points up and `b` runs away from the viewer along the
//! treads. The frame origin is the centre of the first step's front edge on
//! the floor. It maps into the camera frame as
//!
//! ```text
//! P = origin + a·(cos ψ, 0, sin ψ) + h·(0, -1, 0) + b·(-sin ψ, 0, cos ψ)
//! ```
//!
//! Up staircases stack `steps` boxes on an infinite floor; nosing `k`
//! (1-based) sits at `h = k·rise, b = (k-1)·run`. Down staircases cut the
//! flight into the floor; nosing `k` sits at `h = -(k-1)·rise,
//! b = (k-1)·run`, the first one being the edge of the landing.

use nalgebra::{Point3, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::camera::{DepthFrame, Intrinsics, Pixel};
use crate::detection::{BoundingBox, BoxDetection, DetectionError, DetectionRecord, Detector};
use crate::localizer::{Direction, ExtrinsicsConfig, StairPose};
use crate::segments::{sample_segment, LineSegmentTP, SegmentSet};

/// Nosings whose visible part is shorter than this, in pixels, are left out
/// of the truth segments.
pub const MIN_TRUTH_SEGMENT_PX: f64 = 10.0;
/// Minimum visible share of a nosing's projected length.
pub const MIN_VISIBLE_FRACTION: f64 = 0.3;
/// Margin, in pixels, the synthetic detector adds around the segments.
pub const DETECTOR_MARGIN_PX: f64 = 8.0;
/// End trim used when sampling truth segments for the truth position.
pub const TRUTH_END_TRIM: f64 = 1.0;

const FAR: f64 = 50.0;

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("invalid staircase: {0}")]
    InvalidSpec(String),
    #[error("invalid corruption: {0}")]
    InvalidCorruption(String),
    #[error("no nosing of the staircase is visible in the image")]
    NotVisible,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StairKind {
    #[default]
    Up,
    Down,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StaircaseSpec {
    pub steps: usize,
    pub rise: f64,
    pub run: f64,
    pub width: f64,
    /// Staircase-frame origin in the camera frame, meters.
    pub origin: [f64; 3],
    /// Rotation about the up axis, radians.
    pub yaw: f64,
    pub kind: StairKind,
}

impl StaircaseSpec {
    /// Five 0.17 m × 0.29 m steps, 1 m wide, on a floor 0.5 m below the
    /// camera, `distance` ahead and `lateral` to the right.
    pub fn standard(distance: f64, lateral: f64) -> Self {
        Self {
            steps: 5,
            rise: 0.17,
            run: 0.29,
            width: 1.0,
            origin: [lateral, 0.5, distance],
            yaw: 0.0,
            kind: StairKind::Up,
        }
    }

    pub fn validate(&self) -> Result<(), SynthError> {
        let bad = |m: String| Err(SynthError::InvalidSpec(m));
        if self.steps < 1 {
            return bad("steps must be at least 1".into());
        }
        for (name, v) in [
            ("rise", self.rise),
            ("run", self.run),
            ("width", self.width),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return bad(format!("{name} must be positive, got {v}"));
            }
        }
        if !self.origin.iter().all(|c| c.is_finite()) || !self.yaw.is_finite() {
            return bad("origin and yaw must be finite".into());
        }
        Ok(())
    }

    /// Unit axes `(A, H, B)` of the staircase frame in camera coordinates.
    pub fn axes(&self) -> [Vector3<f64>; 3] {
        let (s, c) = self.yaw.sin_cos();
        [
            Vector3::new(c, 0.0, s),
            Vector3::new(0.0, -1.0, 0.0),
            Vector3::new(-s, 0.0, c),
        ]
    }

    pub fn to_camera(&self, a: f64, h: f64, b: f64) -> Point3<f64> {
        let [ax, hx, bx] = self.axes();
        Point3::from(Vector3::from(self.origin) + ax * a + hx * h + bx * b)
    }

    /// `(h, b)` of nosing `k`, 1-based.
    pub fn nosing(&self, k: usize) -> (f64, f64) {
        let kf = k as f64;
        match self.kind {
            StairKind::Up => (kf * self.rise, (kf - 1.0) * self.run),
            StairKind::Down => (-(kf - 1.0) * self.rise, (kf - 1.0) * self.run),
        }
    }

    /// Solids as `(lo, hi)` corners in staircase coordinates `(a, h, b)`.
    fn solids(&self) -> Vec<([f64; 3], [f64; 3])> {
        let hw = 0.5 * self.width;
        let n = self.steps as f64;
        let mut out = Vec::with_capacity(self.steps + 3);
        match self.kind {
            StairKind::Up => {
                out.push(([-FAR, -FAR, -FAR], [FAR, 0.0, FAR]));
                for k in 1..=self.steps {
                    let kf = k as f64;
                    out.push((
                        [-hw, 0.0, (kf - 1.0) * self.run],
                        [hw, kf * self.rise, n * self.run],
                    ));
                }
            }
            StairKind::Down => {
                out.push(([-FAR, -FAR, -FAR], [-hw, 0.0, FAR]));
                out.push(([hw, -FAR, -FAR], [FAR, 0.0, FAR]));
                out.push(([-hw, -FAR, -FAR], [hw, 0.0, 0.0]));
                for k in 1..=self.steps {
                    let kf = k as f64;
                    let far_b = if k == self.steps { FAR } else { kf * self.run };
                    out.push((
                        [-hw, -FAR, (kf - 1.0) * self.run],
                        [hw, -kf * self.rise, far_b],
                    ));
                }
            }
        }
        out
    }
}

/// Ray caster for one staircase, seen from the camera origin.
struct Caster {
    axes: [Vector3<f64>; 3],
    eye: [f64; 3],
    solids: Vec<([f64; 3], [f64; 3])>,
}

impl Caster {
    fn new(spec: &StaircaseSpec) -> Self {
        let axes = spec.axes();
        let o = -Vector3::from(spec.origin);
        Self {
            eye: [o.dot(&axes[0]), o.dot(&axes[1]), o.dot(&axes[2])],
            axes,
            solids: spec.solids(),
        }
    }

    /// Ray parameter of the nearest hit along `dir` from the camera origin.
    fn cast(&self, dir: &Vector3<f64>) -> Option<f64> {
        let d = [
            dir.dot(&self.axes[0]),
            dir.dot(&self.axes[1]),
            dir.dot(&self.axes[2]),
        ];
        let mut best: Option<f64> = None;
        'solid: for (lo, hi) in &self.solids {
            let (mut t0, mut t1) = (f64::NEG_INFINITY, f64::INFINITY);
            for i in 0..3 {
                if d[i] == 0.0 {
                    if self.eye[i] < lo[i] || self.eye[i] > hi[i] {
                        continue 'solid;
                    }
                    continue;
                }
                let a = (lo[i] - self.eye[i]) / d[i];
                let b = (hi[i] - self.eye[i]) / d[i];
                t0 = t0.max(a.min(b));
                t1 = t1.min(a.max(b));
            }
            if t0 <= t1 && t0 > 0.0 && best.is_none_or(|t| t0 < t) {
                best = Some(t0);
            }
        }
        best
    }
}

/// Renders the depth image: each pixel centre's ray, `z` of the nearest
/// hit, 0 where the ray hits nothing.
pub fn render_depth(spec: &StaircaseSpec, k: &Intrinsics) -> DepthFrame {
    let caster = Caster::new(spec);
    let mut depth = DepthFrame::filled(k.width, k.height, 0.0);
    for row in 0..k.height {
        for col in 0..k.width {
            let ray = k.ray(Pixel::new(col as f64, row as f64));
            // rays have unit z, so the ray parameter is the depth
            if let Some(t) = caster.cast(&ray) {
                depth.set(col, row, t as f32);
            }
        }
    }
    depth
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Occluder {
    /// Pixel rectangle, inclusive of `min`, exclusive of `max`.
    pub x_min: usize,
    pub y_min: usize,
    pub x_max: usize,
    pub y_max: usize,
    pub depth: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct CorruptionSpec {
    /// Gaussian depth noise, σ as a fraction of the range.
    pub depth_noise: f64,
    /// Fraction of depth pixels made invalid.
    pub dropout: f64,
    pub occluders: Vec<Occluder>,
    /// Gaussian σ, pixels, added to each segment endpoint coordinate.
    pub jitter_px: f64,
    pub outlier_segments: usize,
    /// Range of `|slope angle|` for outlier segments, radians; the sign is
    /// random.
    pub outlier_angle: [f64; 2],
    /// Length range of outlier segments, pixels.
    pub outlier_length: [f64; 2],
}

impl CorruptionSpec {
    pub fn none() -> Self {
        Self {
            outlier_angle: [0.3, 1.4],
            outlier_length: [40.0, 160.0],
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<(), SynthError> {
        let bad = |m: String| Err(SynthError::InvalidCorruption(m));
        if !(self.depth_noise >= 0.0) || !(self.jitter_px >= 0.0) {
            return bad("noise levels must be non-negative".into());
        }
        if !(0.0..=1.0).contains(&self.dropout) {
            return bad(format!("dropout must be in [0, 1], got {}", self.dropout));
        }
        for o in &self.occluders {
            if !(o.depth > 0.0) || o.x_min >= o.x_max || o.y_min >= o.y_max {
                return bad(format!("degenerate occluder {o:?}"));
            }
        }
        if self.outlier_segments > 0 {
            let [a0, a1] = self.outlier_angle;
            let [l0, l1] = self.outlier_length;
            if !(0.0 <= a0 && a0 <= a1 && a1 <= std::f64::consts::FRAC_PI_2) {
                return bad("outlier_angle must be an ordered range in [0, π/2]".into());
            }
            if !(1.0 <= l0 && l0 <= l1) {
                return bad("outlier_length must be an ordered range of at least 1 px".into());
            }
        }
        Ok(())
    }

    pub fn is_identity(&self) -> bool {
        self.depth_noise == 0.0
            && self.dropout == 0.0
            && self.occluders.is_empty()
            && self.jitter_px == 0.0
            && self.outlier_segments == 0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorruptionLog {
    pub spec: CorruptionSpec,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticScene {
    pub spec: StaircaseSpec,
    pub intrinsics: Intrinsics,
    pub depth: DepthFrame,
    /// Visible nosings, full-frame; index `i` is nosing `nosing_ids[i]`.
    pub truth_segments: SegmentSet,
    pub nosing_ids: Vec<usize>,
    /// What a detector reports: the truth segments until corrupted.
    pub observed_segments: SegmentSet,
    pub truth: StairPose,
    pub corruption: Vec<CorruptionLog>,
}

fn visible(caster: &Caster, k: &Intrinsics, p: &Point3<f64>) -> bool {
    let Ok((px, _)) = k.project(p) else {
        return false;
    };
    let inside =
        px.u >= 0.0 && px.v >= 0.0 && px.u <= (k.width - 1) as f64 && px.v <= (k.height - 1) as f64;
    if !inside {
        return false;
    }
    let dir = p.coords / p.z;
    match caster.cast(&dir) {
        Some(t) => t >= p.z * (1.0 - 1e-9) - 1e-9,
        None => true,
    }
}

/// Visible `[a_lo, a_hi]` of one nosing, if any.
fn visible_interval(
    spec: &StaircaseSpec,
    caster: &Caster,
    k: &Intrinsics,
    h: f64,
    b: f64,
) -> Option<(f64, f64)> {
    const N: usize = 400;
    let hw = 0.5 * spec.width;
    let at = |i: usize| -hw + spec.width * i as f64 / N as f64;
    let vis = |a: f64| visible(caster, k, &spec.to_camera(a, h, b));
    let flags: Vec<bool> = (0..=N).map(|i| vis(at(i))).collect();
    // longest visible run
    let (mut best, mut start) = (None::<(usize, usize)>, None);
    // a trailing `false` closes a run that reaches the edge
    for (i, &v) in flags.iter().chain([false].iter()).enumerate() {
        match (v, start) {
            (true, None) => start = Some(i),
            (false, Some(s)) => {
                if best.is_none_or(|(b0, b1)| i - 1 - s > b1 - b0) {
                    best = Some((s, i - 1));
                }
                start = None;
            }
            _ => {}
        }
    }
    let (i0, i1) = best?;
    let refine = |inside: f64, outside: f64| {
        let (mut good, mut bad) = (inside, outside);
        for _ in 0..60 {
            let mid = 0.5 * (good + bad);
            if vis(mid) {
                good = mid;
            } else {
                bad = mid;
            }
        }
        good
    };
    let lo = if i0 == 0 {
        -hw
    } else {
        refine(at(i0), at(i0 - 1))
    };
    let hi = if i1 == N {
        hw
    } else {
        refine(at(i1), at(i1 + 1))
    };
    (hi > lo).then_some((lo, hi))
}

/// Closest point on the line `p0 + s·u` to the ray `t·r` from the origin.
fn closest_on_line(p0: &Vector3<f64>, u: &Vector3<f64>, r: &Vector3<f64>) -> Vector3<f64> {
    // minimise |p0 + s·u - t·r|²
    let (uu, ur, rr) = (u.dot(u), u.dot(r), r.dot(r));
    let (pu, pr) = (p0.dot(u), p0.dot(r));
    let det = uu * rr - ur * ur;
    let s = (ur * pr - rr * pu) / det;
    p0 + u * s
}

/// Builds the scene: rendered depth, visible nosing segments and the
/// truth pose.
pub fn build_scene(spec: &StaircaseSpec, k: &Intrinsics) -> Result<SyntheticScene, SynthError> {
    spec.validate()?;
    let caster = Caster::new(spec);
    let hw = 0.5 * spec.width;
    let [axis_a, _, _] = spec.axes();

    let mut segments = Vec::new();
    let mut nosing_ids = Vec::new();
    let mut truth_sum = Vector3::zeros();
    let mut n_points = 0usize;
    for id in 1..=spec.steps {
        let (h, b) = spec.nosing(id);
        let Some((lo, hi)) = visible_interval(spec, &caster, k, h, b) else {
            continue;
        };
        let (Ok((p_lo, _)), Ok((p_hi, _))) = (
            k.project(&spec.to_camera(lo, h, b)),
            k.project(&spec.to_camera(hi, h, b)),
        ) else {
            continue;
        };
        let seg = LineSegmentTP::from_endpoints(p_lo, p_hi);
        let projected_full = match (
            k.project(&spec.to_camera(-hw, h, b)),
            k.project(&spec.to_camera(hw, h, b)),
        ) {
            (Ok((f0, _)), Ok((f1, _))) => (f1.u - f0.u).hypot(f1.v - f0.v),
            _ => f64::INFINITY,
        };
        let fraction = if projected_full.is_finite() && projected_full > 0.0 {
            seg.length() / projected_full
        } else {
            (hi - lo) / spec.width
        };
        if fraction < MIN_VISIBLE_FRACTION || seg.length() < MIN_TRUTH_SEGMENT_PX {
            continue;
        }
        let p0 = spec.to_camera(0.0, h, b).coords;
        let samples = sample_segment(&seg, k.width, k.height, TRUTH_END_TRIM);
        for s in &samples {
            truth_sum += closest_on_line(&p0, &axis_a, &k.ray(s.point));
        }
        n_points += samples.len();
        segments.push(seg);
        nosing_ids.push(id);
    }
    if segments.is_empty() || n_points == 0 {
        return Err(SynthError::NotVisible);
    }
    let position = Point3::from(truth_sum / n_points as f64);
    let mut truth = StairPose::from_parts(position, spec.yaw, &ExtrinsicsConfig::default());
    truth.direction = match spec.kind {
        StairKind::Up => Direction::Up,
        StairKind::Down => Direction::Down,
    };
    truth.n_points = n_points;
    truth.n_lines = segments.len();

    let truth_segments = SegmentSet::full_frame(segments);
    Ok(SyntheticScene {
        spec: spec.clone(),
        intrinsics: *k,
        depth: render_depth(spec, k),
        observed_segments: truth_segments.clone(),
        truth_segments,
        nosing_ids,
        truth,
        corruption: Vec::new(),
    })
}

/// Applies noise, dropout, occluders, endpoint jitter and outlier segments,
/// in that order, from a single seeded stream. Truth fields are untouched.
pub fn corrupt(
    scene: &SyntheticScene,
    c: &CorruptionSpec,
    seed: u64,
) -> Result<SyntheticScene, SynthError> {
    c.validate()?;
    let mut out = scene.clone();
    out.corruption.push(CorruptionLog {
        spec: c.clone(),
        seed,
    });
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (w, h) = (out.intrinsics.width, out.intrinsics.height);

    if c.depth_noise > 0.0 {
        let unit = Normal::new(0.0, 1.0).expect("unit normal");
        for d in out.depth.data_mut() {
            if DepthFrame::is_valid_sample(*d) {
                let noisy = *d as f64 * (1.0 + c.depth_noise * unit.sample(&mut rng));
                *d = if noisy > 0.0 { noisy as f32 } else { 0.0 };
            }
        }
    }
    if c.dropout > 0.0 {
        for d in out.depth.data_mut() {
            if rng.random_bool(c.dropout) {
                *d = 0.0;
            }
        }
    }
    for o in &c.occluders {
        for row in o.y_min..o.y_max.min(h) {
            for col in o.x_min..o.x_max.min(w) {
                out.depth.set(col, row, o.depth as f32);
            }
        }
    }
    let clamp = |p: Pixel| {
        Pixel::new(
            p.u.clamp(0.0, (w - 1) as f64),
            p.v.clamp(0.0, (h - 1) as f64),
        )
    };
    if c.jitter_px > 0.0 {
        let jitter = Normal::new(0.0, c.jitter_px).expect("finite jitter");
        for seg in &mut out.observed_segments.segments {
            let (s, e) = seg.endpoints_unchecked();
            let mut shake = |p: Pixel| {
                clamp(Pixel::new(
                    p.u + jitter.sample(&mut rng),
                    p.v + jitter.sample(&mut rng),
                ))
            };
            let (s2, e2) = (shake(s), shake(e));
            *seg = LineSegmentTP::from_endpoints(s2, e2).with_score(seg.score);
        }
    }
    if c.outlier_segments > 0 {
        let (lo, hi) = segment_extent(&out.observed_segments).unwrap_or((
            Pixel::new(0.0, 0.0),
            Pixel::new((w - 1) as f64, (h - 1) as f64),
        ));
        for _ in 0..c.outlier_segments {
            let angle = rng.random_range(c.outlier_angle[0]..=c.outlier_angle[1])
                * if rng.random_bool(0.5) { 1.0 } else { -1.0 };
            let len = rng.random_range(c.outlier_length[0]..=c.outlier_length[1]);
            let centre = Pixel::new(rng.random_range(lo.u..=hi.u), rng.random_range(lo.v..=hi.v));
            let (dx, dy) = (0.5 * len * angle.cos(), 0.5 * len * angle.sin());
            let s = clamp(Pixel::new(centre.u - dx, centre.v - dy));
            let e = clamp(Pixel::new(centre.u + dx, centre.v + dy));
            let seg = LineSegmentTP::from_endpoints(s, e);
            if seg.length() >= 1.0 {
                out.observed_segments.segments.push(seg);
            }
        }
    }
    Ok(out)
}

fn segment_extent(set: &SegmentSet) -> Option<(Pixel, Pixel)> {
    let mut it = set.segments.iter().flat_map(|s| {
        let (a, b) = s.endpoints_unchecked();
        [a, b]
    });
    let first = it.next()?;
    Some(it.fold((first, first), |(lo, hi), p| {
        (
            Pixel::new(lo.u.min(p.u), lo.v.min(p.v)),
            Pixel::new(hi.u.max(p.u), hi.v.max(p.v)),
        )
    }))
}

/// The truth pose of a scene.
pub fn truth_pose(scene: &SyntheticScene) -> &StairPose {
    &scene.truth
}

/// What an ideal stair detector would report for the scene: one box around
/// the observed segments (plus a margin), segments in crop coordinates.
pub fn detection_record(scene: &SyntheticScene, frame: &str) -> DetectionRecord {
    let Some((lo, hi)) = segment_extent(&scene.observed_segments) else {
        return DetectionRecord::empty(frame);
    };
    let (w, h) = (
        scene.intrinsics.width as f64,
        scene.intrinsics.height as f64,
    );
    let bbox = BoundingBox::new(
        (lo.u.floor() - DETECTOR_MARGIN_PX).max(0.0),
        (lo.v.floor() - DETECTOR_MARGIN_PX).max(0.0),
        (hi.u.ceil() + DETECTOR_MARGIN_PX).min(w),
        (hi.v.ceil() + DETECTOR_MARGIN_PX).min(h),
        1.0,
    );
    let origin = bbox.crop_origin();
    let local = scene
        .observed_segments
        .segments
        .iter()
        .map(|s| s.translated(-origin.x, -origin.y))
        .collect();
    DetectionRecord {
        frame: frame.to_owned(),
        boxes: vec![BoxDetection {
            bbox,
            segments: SegmentSet::new(local, origin),
        }],
    }
}

/// A detector that answers from synthetic scenes.
#[derive(Debug, Clone, Default)]
pub struct SyntheticDetector {
    records: Vec<DetectionRecord>,
}

impl SyntheticDetector {
    pub fn new<'a>(scenes: impl IntoIterator<Item = (&'a str, &'a SyntheticScene)>) -> Self {
        Self {
            records: scenes
                .into_iter()
                .map(|(frame, scene)| detection_record(scene, frame))
                .collect(),
        }
    }
}

impl Detector for SyntheticDetector {
    fn detect(&self, frame: &str) -> Result<DetectionRecord, DetectionError> {
        self.records
            .iter()
            .find(|r| r.frame == frame)
            .cloned()
            .ok_or_else(|| DetectionError::UnknownFrame(frame.to_owned()))
    }
}
