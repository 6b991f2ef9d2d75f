//! Stair pose from a detection box, its nosing segments and the depth image.
//!
//! Per box: crop, parallel-segment consensus in the image, lift the inlier
//! segments into the camera frame, average the cloud for the position,
//! project each lifted segment onto the ground plane and fit a line, reject
//! bad ground lines, average their angles for the heading, and classify the
//! staircase as going up or down from its height relative to the robot base.

use nalgebra::{Matrix3, Point3, Unit, UnitQuaternion, Vector2, Vector3};
use rand::seq::IndexedRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::angles::{circular_mean_half_turn, fold_half_turn, wrap_full_turn};
use crate::camera::{DepthFrame, Intrinsics, XAxis};
use crate::detection::{crop_roi, to_full_frame, DetectionError, FrameBundle};
use crate::segments::{
    angular_consensus, ransac_parallel_filter, sample_segment, ConsensusParams, SegmentError,
    SegmentSet,
};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LocalizeError {
    #[error("frame has no stair detections")]
    NoDetection,
    #[error("detection box is empty after clamping to the image")]
    EmptyCrop,
    #[error("segment endpoint outside the image: {0}")]
    OutOfImage(String),
    #[error("fewer than two segments left after the length filter")]
    TooFewSegments,
    #[error("parallel-segment consensus too weak: {best} of {total} agree, {required} required")]
    InsufficientConsensus {
        best: usize,
        required: usize,
        total: usize,
    },
    #[error("no segment has enough valid depth samples")]
    NoValidDepth,
    #[error("point cloud is empty")]
    EmptyCloud,
    #[error("need at least 2 ground points, got {0}")]
    TooFewPoints(usize),
    #[error("ground points are coincident")]
    DegenerateCluster,
    #[error("every ground line was rejected")]
    AllRejected,
    #[error("no ground lines to average")]
    EmptyInput,
    #[error("segment error: {0}")]
    Segment(SegmentError),
    #[error("malformed bundle: {0}")]
    MalformedBundle(String),
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
}

impl LocalizeError {
    /// Short stable name used in diagnostics streams.
    pub fn cause(&self) -> &'static str {
        match self {
            LocalizeError::NoDetection => "NoDetection",
            LocalizeError::EmptyCrop => "EmptyCrop",
            LocalizeError::OutOfImage(_) => "OutOfImage",
            LocalizeError::TooFewSegments => "TooFewSegments",
            LocalizeError::InsufficientConsensus { .. } => "InsufficientConsensus",
            LocalizeError::NoValidDepth => "NoValidDepth",
            LocalizeError::EmptyCloud => "EmptyCloud",
            LocalizeError::TooFewPoints(_) => "TooFewPoints",
            LocalizeError::DegenerateCluster => "DegenerateCluster",
            LocalizeError::AllRejected => "AllRejected",
            LocalizeError::EmptyInput => "EmptyInput",
            LocalizeError::Segment(_) => "SegmentError",
            LocalizeError::MalformedBundle(_) => "MalformedBundle",
            LocalizeError::InvalidParams(_) => "InvalidParams",
        }
    }
}

impl From<SegmentError> for LocalizeError {
    fn from(e: SegmentError) -> Self {
        match e {
            SegmentError::InsufficientConsensus {
                best,
                required,
                total,
            } => LocalizeError::InsufficientConsensus {
                best,
                required,
                total,
            },
            other => LocalizeError::Segment(other),
        }
    }
}

/// Camera mounting and the up/down threshold.
///
/// Points map into the base frame as `P_base = R·P_cam + t`. Gravity is
/// given in the camera frame and points down.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExtrinsicsConfig {
    /// Row-major camera-to-base rotation.
    pub rotation: [[f64; 3]; 3],
    /// Camera origin expressed in the base frame, meters.
    pub translation: [f64; 3],
    pub gravity: [f64; 3],
    /// Height band, meters, inside which the direction is ambiguous.
    pub epsilon: f64,
}

impl Default for ExtrinsicsConfig {
    fn default() -> Self {
        Self {
            rotation: [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]],
            // camera 0.5 m above the base origin; Y points down
            translation: [0.0, -0.5, 0.0],
            gravity: [0.0, 1.0, 0.0],
            epsilon: 0.15,
        }
    }
}

impl ExtrinsicsConfig {
    pub fn rotation_matrix(&self) -> Matrix3<f64> {
        let r = &self.rotation;
        Matrix3::new(
            r[0][0], r[0][1], r[0][2], r[1][0], r[1][1], r[1][2], r[2][0], r[2][1], r[2][2],
        )
    }

    pub fn translation_vector(&self) -> Vector3<f64> {
        Vector3::from(self.translation)
    }

    /// Unit gravity direction in the camera frame.
    pub fn gravity_unit(&self) -> Vector3<f64> {
        Vector3::from(self.gravity).normalize()
    }

    /// Orthonormal ground basis `(e1, e2)`, both perpendicular to gravity.
    ///
    /// `e1` is camera X with its gravity component removed and
    /// `e2 = e1 × g`; with gravity along +Y this is `(X, Z)`.
    pub fn ground_basis(&self) -> (Vector3<f64>, Vector3<f64>) {
        let g = self.gravity_unit();
        let mut e1 = Vector3::x() - g * g.x;
        if e1.norm() < 1e-6 {
            e1 = Vector3::z() - g * g.z;
        }
        let e1 = e1.normalize();
        (e1, e1.cross(&g))
    }

    pub fn validate(&self) -> Result<(), String> {
        let r = self.rotation_matrix();
        let err = (r.transpose() * r - Matrix3::identity()).abs().max();
        if !(err <= 1e-9) || !(r.determinant() > 0.0) {
            return Err(format!(
                "rotation is not a proper orthonormal matrix (err {err:e})"
            ));
        }
        let g = Vector3::from(self.gravity);
        if !(g.norm() > 1e-9) || !g.iter().all(|c| c.is_finite()) {
            return Err("gravity axis must be a finite non-zero vector".into());
        }
        if !self.translation.iter().all(|c| c.is_finite()) {
            return Err("translation must be finite".into());
        }
        if !(self.epsilon > 0.0) {
            return Err(format!("epsilon must be positive, got {}", self.epsilon));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Up,
    Down,
    Ambiguous,
}

impl Direction {
    pub fn as_str(self) -> &'static str {
        match self {
            Direction::Up => "up",
            Direction::Down => "down",
            Direction::Ambiguous => "ambiguous",
        }
    }

    /// Up above `epsilon`, down below `-epsilon`, ambiguous in between.
    pub fn classify(height: f64, epsilon: f64) -> Self {
        if height > epsilon {
            Direction::Up
        } else if height < -epsilon {
            Direction::Down
        } else {
            Direction::Ambiguous
        }
    }
}

/// How depth is read behind a segment sample.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DepthSampling {
    /// The rounded pixel only.
    Pixel,
    /// Nearest valid depth within `radius` pixels across the segment (along
    /// its minor axis). A nosing is a depth edge; the face in front of it
    /// is the one that contains the edge.
    NearestAcrossEdge { radius: u32 },
}

/// What the second consensus rejects.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GroundOutlierMode {
    /// Residual gate and angular consensus over whole ground lines.
    #[default]
    WholeLines,
    /// Additionally drop stray points inside each line before fitting.
    PointsWithinLine,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LocalizeParams {
    /// Image-space parallel-segment consensus.
    pub consensus: ConsensusParams,
    /// Segments shorter than this (pixels) are dropped before consensus.
    pub min_segment_px: f64,
    pub min_points: usize,
    /// Pixels skipped at each segment end.
    pub end_trim: f64,
    pub depth_sampling: DepthSampling,
    pub ground_outlier_mode: GroundOutlierMode,
    /// Ground lines with a larger mean squared residual (m²) are rejected.
    pub ground_residual_tol: f64,
    /// Point-to-line distance (m) for `PointsWithinLine`.
    pub ground_point_tol: f64,
    /// Angular consensus over ground-line angles.
    pub ground_consensus: ConsensusParams,
    /// Frame convention for reported poses.
    pub x_axis: XAxis,
}

impl Default for LocalizeParams {
    fn default() -> Self {
        Self {
            consensus: ConsensusParams::default(),
            min_segment_px: 10.0,
            min_points: 5,
            end_trim: 1.0,
            depth_sampling: DepthSampling::NearestAcrossEdge { radius: 2 },
            ground_outlier_mode: GroundOutlierMode::WholeLines,
            ground_residual_tol: 0.01,
            ground_point_tol: 0.05,
            ground_consensus: ConsensusParams {
                tol: 0.1,
                ..ConsensusParams::default()
            },
            x_axis: XAxis::Right,
        }
    }
}

impl LocalizeParams {
    pub fn validate(&self) -> Result<(), LocalizeError> {
        self.consensus.validate()?;
        self.ground_consensus.validate()?;
        let bad = |m: &str| Err(LocalizeError::InvalidParams(m.to_owned()));
        if self.min_points < 1 {
            return bad("min_points must be at least 1");
        }
        if !(self.min_segment_px >= 0.0) || !(self.end_trim >= 0.0) {
            return bad("min_segment_px and end_trim must be non-negative");
        }
        if !(self.ground_residual_tol > 0.0) || !(self.ground_point_tol > 0.0) {
            return bad("ground tolerances must be positive");
        }
        Ok(())
    }
}

/// Options for [`lift_segments`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LiftOptions {
    pub min_points: usize,
    pub end_trim: f64,
    pub sampling: DepthSampling,
}

impl From<&LocalizeParams> for LiftOptions {
    fn from(p: &LocalizeParams) -> Self {
        Self {
            min_points: p.min_points,
            end_trim: p.end_trim,
            sampling: p.depth_sampling,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LiftedSegment {
    /// Index of the segment in the set passed to [`lift_segments`].
    pub source: usize,
    pub points: Vec<Point3<f64>>,
    /// Valid samples over sampled pixels.
    pub valid_fraction: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct LiftStats {
    pub retained: usize,
    pub dropped: usize,
    pub sampled_pixels: usize,
    pub valid_pixels: usize,
}

fn depth_for_sample(
    depth: &DepthFrame,
    grid: (i64, i64),
    horizontal: bool,
    sampling: DepthSampling,
) -> Option<f64> {
    let valid = |c: i64, r: i64| {
        depth
            .sample(c, r)
            .filter(|d| DepthFrame::is_valid_sample(*d))
            .map(f64::from)
    };
    match sampling {
        DepthSampling::Pixel => valid(grid.0, grid.1),
        DepthSampling::NearestAcrossEdge { radius } => {
            let r = radius as i64;
            (-r..=r)
                .filter_map(|k| {
                    if horizontal {
                        valid(grid.0, grid.1 + k)
                    } else {
                        valid(grid.0 + k, grid.1)
                    }
                })
                .min_by(f64::total_cmp)
        }
    }
}

/// Lifts full-frame segments into camera-frame points.
///
/// Each segment is sampled once per integer step along its major axis; the
/// sample lies on the segment and is unprojected with the depth found
/// behind it. Samples without valid depth are skipped and segments with
/// fewer than `min_points` valid samples are dropped.
pub fn lift_segments(
    set: &SegmentSet,
    depth: &DepthFrame,
    k: &Intrinsics,
    opts: &LiftOptions,
) -> Result<(Vec<LiftedSegment>, LiftStats), LocalizeError> {
    let mut stats = LiftStats::default();
    let mut out = Vec::new();
    for (i, seg) in set.segments.iter().enumerate() {
        let seg = seg.translated(set.offset.x, set.offset.y);
        let d = seg.d_end - seg.d_start;
        let horizontal = d.x.abs() >= d.y.abs();
        let samples = sample_segment(&seg, depth.width(), depth.height(), opts.end_trim);
        let mut points = Vec::with_capacity(samples.len());
        for s in &samples {
            if let Some(z) = depth_for_sample(depth, s.grid, horizontal, opts.sampling) {
                if let Ok(p) = k.unproject(s.point, z) {
                    points.push(p);
                }
            }
        }
        stats.sampled_pixels += samples.len();
        stats.valid_pixels += points.len();
        if points.len() >= opts.min_points.max(1) {
            stats.retained += 1;
            out.push(LiftedSegment {
                source: i,
                valid_fraction: points.len() as f64 / samples.len() as f64,
                points,
            });
        } else {
            stats.dropped += 1;
        }
    }
    if out.is_empty() {
        return Err(LocalizeError::NoValidDepth);
    }
    Ok((out, stats))
}

/// Component-wise mean of every lifted point.
pub fn estimate_position(lifted: &[LiftedSegment]) -> Result<Point3<f64>, LocalizeError> {
    let mut sum = Vector3::zeros();
    let mut n = 0usize;
    for p in lifted.iter().flat_map(|l| &l.points) {
        sum += p.coords;
        n += 1;
    }
    if n == 0 {
        return Err(LocalizeError::EmptyCloud);
    }
    Ok(Point3::from(sum / n as f64))
}

/// Drops the gravity component; `[x, y, z] -> [x, z]` for gravity along Y.
pub fn ground_project(p: &Point3<f64>, cfg: &ExtrinsicsConfig) -> Vector2<f64> {
    let (e1, e2) = cfg.ground_basis();
    Vector2::new(p.coords.dot(&e1), p.coords.dot(&e2))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GroundLine {
    /// Undirected line angle in `[-π/2, π/2)`.
    pub angle: f64,
    pub centroid: Vector2<f64>,
    /// Mean squared perpendicular distance, m².
    pub residual_mse: f64,
    pub support: usize,
}

/// Total least squares line through 2D points.
pub fn fit_ground_line(points: &[Vector2<f64>]) -> Result<GroundLine, LocalizeError> {
    let n = points.len();
    if n < 2 {
        return Err(LocalizeError::TooFewPoints(n));
    }
    let centroid = points.iter().sum::<Vector2<f64>>() / n as f64;
    let (mut sxx, mut syy, mut sxy) = (0.0, 0.0, 0.0);
    let mut spread: f64 = 0.0;
    for p in points {
        let d = p - centroid;
        sxx += d.x * d.x;
        syy += d.y * d.y;
        sxy += d.x * d.y;
        spread = spread.max(d.norm());
    }
    if spread <= 1e-9 {
        return Err(LocalizeError::DegenerateCluster);
    }
    let angle = fold_half_turn(0.5 * (2.0 * sxy).atan2(sxx - syy));
    let half_diff = 0.5 * (sxx - syy);
    let lambda_min = 0.5 * (sxx + syy) - half_diff.hypot(sxy);
    Ok(GroundLine {
        angle,
        centroid,
        residual_mse: (lambda_min / n as f64).max(0.0),
        support: n,
    })
}

/// Line fit that first discards points farther than `inlier_tol` from the
/// best two-point hypothesis.
///
/// Hypotheses are every point pair when there are at most `max_iterations`
/// of them, otherwise `max_iterations` seeded random pairs.
pub fn fit_ground_line_robust(
    points: &[Vector2<f64>],
    inlier_tol: f64,
    max_iterations: usize,
    seed: u64,
) -> Result<GroundLine, LocalizeError> {
    let n = points.len();
    if n < 2 {
        return Err(LocalizeError::TooFewPoints(n));
    }
    let pair_count = n * (n - 1) / 2;
    let pairs: Vec<(usize, usize)> = if pair_count <= max_iterations {
        (0..n)
            .flat_map(|i| (i + 1..n).map(move |j| (i, j)))
            .collect()
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let idx: Vec<usize> = (0..n).collect();
        (0..max_iterations)
            .map(|_| {
                let pick: Vec<usize> = idx.choose_multiple(&mut rng, 2).copied().collect();
                (pick[0], pick[1])
            })
            .collect()
    };
    let mut best: Option<(usize, f64, Vec<usize>)> = None;
    for (i, j) in pairs {
        let dir = points[j] - points[i];
        let len = dir.norm();
        if len <= 1e-9 {
            continue;
        }
        let normal = Vector2::new(-dir.y, dir.x) / len;
        let mut inliers = Vec::new();
        let mut sse = 0.0;
        for (k, p) in points.iter().enumerate() {
            let dist = (p - points[i]).dot(&normal);
            if dist.abs() <= inlier_tol {
                inliers.push(k);
                sse += dist * dist;
            }
        }
        let better = match &best {
            None => true,
            Some((count, best_sse, _)) => {
                inliers.len() > *count || (inliers.len() == *count && sse < *best_sse)
            }
        };
        if better {
            best = Some((inliers.len(), sse, inliers));
        }
    }
    let (_, _, inliers) = best.ok_or(LocalizeError::DegenerateCluster)?;
    let kept: Vec<Vector2<f64>> = inliers.iter().map(|&k| points[k]).collect();
    fit_ground_line(&kept)
}

/// Residual gate followed by angular consensus over line angles.
///
/// Returns `(kept, rejected)` index lists into `lines`.
pub fn filter_ground_lines(
    lines: &[GroundLine],
    residual_tol: f64,
    consensus: &ConsensusParams,
    seed: u64,
) -> Result<(Vec<usize>, Vec<usize>), LocalizeError> {
    if lines.is_empty() {
        return Err(LocalizeError::EmptyInput);
    }
    let (gated, mut rejected): (Vec<usize>, Vec<usize>) =
        (0..lines.len()).partition(|&i| lines[i].residual_mse <= residual_tol);
    if gated.is_empty() {
        return Err(LocalizeError::AllRejected);
    }
    let angles: Vec<f64> = gated.iter().map(|&i| lines[i].angle).collect();
    let c = angular_consensus(&angles, consensus, seed).map_err(|e| match e {
        SegmentError::InsufficientConsensus { .. } => LocalizeError::AllRejected,
        other => LocalizeError::from(other),
    })?;
    let kept: Vec<usize> = c.inliers.iter().map(|&k| gated[k]).collect();
    rejected.extend(c.outliers.iter().map(|&k| gated[k]));
    rejected.sort_unstable();
    Ok((kept, rejected))
}

/// Heading of the staircase on the ground plane, in `[-π, π)`.
///
/// The undirected line angles are averaged on the doubled-angle circle.
/// The result is then turned so that the facing normal
/// `(sin θ, -cos θ)` points from the staircase toward the camera.
pub fn estimate_angle(kept: &[GroundLine]) -> Result<f64, LocalizeError> {
    let first = kept.first().ok_or(LocalizeError::EmptyInput)?;
    let folded = circular_mean_half_turn(kept.iter().map(|l| l.angle)).unwrap_or(first.angle);
    let total: usize = kept.iter().map(|l| l.support).sum();
    let centroid = kept
        .iter()
        .map(|l| l.centroid * l.support as f64)
        .sum::<Vector2<f64>>()
        / total.max(1) as f64;
    let normal = Vector2::new(folded.sin(), -folded.cos());
    let facing = -normal.dot(&centroid);
    let theta = if facing < -1e-12 {
        folded + std::f64::consts::PI
    } else {
        folded
    };
    Ok(wrap_full_turn(theta))
}

/// Rotation by `theta` about the up axis (opposite to gravity).
///
/// Rotating the first ground basis vector by the result gives
/// `cos θ·e1 + sin θ·e2`, the 2D rotation of the ground plane.
pub fn angle_to_quaternion(theta: f64, cfg: &ExtrinsicsConfig) -> UnitQuaternion<f64> {
    let up = Unit::new_normalize(-cfg.gravity_unit());
    UnitQuaternion::from_axis_angle(&up, theta)
}

/// Heading recovered from a quaternion built by [`angle_to_quaternion`].
pub fn quaternion_yaw(q: &UnitQuaternion<f64>, cfg: &ExtrinsicsConfig) -> f64 {
    let (e1, e2) = cfg.ground_basis();
    let r = q * e1;
    r.dot(&e2).atan2(r.dot(&e1))
}

/// Height of `p` above the base origin along the up axis, and the
/// resulting direction.
pub fn estimate_direction(p: &Point3<f64>, cfg: &ExtrinsicsConfig) -> (f64, Direction) {
    let r = cfg.rotation_matrix();
    let up_base = -(r * cfg.gravity_unit());
    let base = r * p.coords + cfg.translation_vector();
    let h = up_base.dot(&base);
    (h, Direction::classify(h, cfg.epsilon))
}

#[derive(Debug, Clone, PartialEq)]
pub struct StairPose {
    pub position: Point3<f64>,
    pub theta: f64,
    pub orientation: UnitQuaternion<f64>,
    pub height: f64,
    pub direction: Direction,
    /// Points averaged into the position.
    pub n_points: usize,
    /// Ground lines averaged into the angle.
    pub n_lines: usize,
    /// Mean residual of the kept ground lines, m².
    pub residual_mse: f64,
}

impl StairPose {
    /// Assembles a pose from its position and heading; height and direction
    /// follow from the extrinsics.
    pub fn from_parts(position: Point3<f64>, theta: f64, cfg: &ExtrinsicsConfig) -> Self {
        let theta = wrap_full_turn(theta);
        let (height, direction) = estimate_direction(&position, cfg);
        Self {
            position,
            theta,
            orientation: angle_to_quaternion(theta, cfg),
            height,
            direction,
            n_points: 0,
            n_lines: 0,
            residual_mse: 0.0,
        }
    }

    /// The same pose expressed with the camera X axis pointing left.
    pub fn mirrored_x(&self, cfg: &ExtrinsicsConfig) -> Self {
        let mut mirrored_cfg = *cfg;
        mirrored_cfg.gravity[0] = -cfg.gravity[0];
        let theta = wrap_full_turn(-self.theta);
        Self {
            position: XAxis::Left.apply(&self.position),
            theta,
            orientation: angle_to_quaternion(theta, &mirrored_cfg),
            ..self.clone()
        }
    }
}

/// Everything computed for one detection box.
#[derive(Debug, Clone, PartialEq)]
pub struct BoxResult {
    pub box_index: usize,
    /// Full-frame segments that passed the parallel consensus.
    pub inliers: SegmentSet,
    /// Full-frame segments rejected by the length filter or the consensus.
    pub outliers: SegmentSet,
    pub lifted: Vec<LiftedSegment>,
    pub outcome: Result<StairPose, LocalizeError>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FrameLocalization {
    pub frame: String,
    pub boxes: Vec<BoxResult>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Diagnostic {
    pub frame: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub box_index: Option<usize>,
    pub cause: String,
    pub detail: String,
}

/// One line of the pose stream.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoseRecord {
    pub frame: String,
    pub box_index: usize,
    pub position: [f64; 3],
    pub theta_rad: f64,
    pub quaternion: [f64; 4],
    pub height_m: f64,
    pub direction: Direction,
    pub n_points: usize,
    pub n_lines: usize,
    pub residual_mse: f64,
}

impl PoseRecord {
    pub fn new(frame: &str, box_index: usize, pose: &StairPose) -> Self {
        let q = pose.orientation.quaternion();
        Self {
            frame: frame.to_owned(),
            box_index,
            position: [pose.position.x, pose.position.y, pose.position.z],
            theta_rad: pose.theta,
            quaternion: [q.w, q.i, q.j, q.k],
            height_m: pose.height,
            direction: pose.direction,
            n_points: pose.n_points,
            n_lines: pose.n_lines,
            residual_mse: pose.residual_mse,
        }
    }
}

impl FrameLocalization {
    pub fn poses(&self) -> impl Iterator<Item = (usize, &StairPose)> {
        self.boxes
            .iter()
            .filter_map(|b| b.outcome.as_ref().ok().map(|p| (b.box_index, p)))
    }

    pub fn pose_records(&self) -> Vec<PoseRecord> {
        self.poses()
            .map(|(i, p)| PoseRecord::new(&self.frame, i, p))
            .collect()
    }

    pub fn diagnostics(&self) -> Vec<Diagnostic> {
        if self.boxes.is_empty() {
            return vec![Diagnostic {
                frame: self.frame.clone(),
                box_index: None,
                cause: LocalizeError::NoDetection.cause().to_owned(),
                detail: LocalizeError::NoDetection.to_string(),
            }];
        }
        self.boxes
            .iter()
            .filter_map(|b| {
                b.outcome.as_ref().err().map(|e| Diagnostic {
                    frame: self.frame.clone(),
                    box_index: Some(b.box_index),
                    cause: e.cause().to_owned(),
                    detail: e.to_string(),
                })
            })
            .collect()
    }
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

fn fnv1a(bytes: &[u8]) -> u64 {
    bytes.iter().fold(0xcbf2_9ce4_8422_2325u64, |h, &b| {
        (h ^ b as u64).wrapping_mul(0x0000_0100_0000_01b3)
    })
}

/// Seed for item `index` under `label` (a frame id, for instance),
/// independent of the order items are processed in.
pub fn derive_seed(run_seed: u64, label: &str, index: usize) -> u64 {
    splitmix64(splitmix64(run_seed ^ fnv1a(label.as_bytes())) ^ index as u64)
}

struct BoxWork {
    inliers: SegmentSet,
    outliers: SegmentSet,
    lifted: Vec<LiftedSegment>,
}

fn localize_box(
    bundle: &FrameBundle,
    box_index: usize,
    cfg: &ExtrinsicsConfig,
    params: &LocalizeParams,
    seed: u64,
    work: &mut BoxWork,
) -> Result<StairPose, LocalizeError> {
    let (w, h) = (bundle.intrinsics.width, bundle.intrinsics.height);
    let det = &bundle.detections.boxes[box_index];
    let crop = crop_roi(&det.bbox, w, h).map_err(|_| LocalizeError::EmptyCrop)?;
    let local = SegmentSet::new(det.segments.segments.clone(), crop.offset());
    let full = to_full_frame(&local, w, h).map_err(|e| match e {
        DetectionError::OutOfImage { .. } => LocalizeError::OutOfImage(e.to_string()),
        other => LocalizeError::MalformedBundle(other.to_string()),
    })?;

    let long: Vec<usize> = (0..full.len())
        .filter(|&i| full.segments[i].length() >= params.min_segment_px)
        .collect();
    let short: Vec<usize> = (0..full.len()).filter(|i| !long.contains(i)).collect();
    work.outliers = full.select(&short);
    if long.is_empty() {
        return Err(LocalizeError::TooFewSegments);
    }
    let candidates = full.select(&long);

    let split = ransac_parallel_filter(&candidates, &params.consensus, seed)?;
    work.inliers = split.inliers;
    work.outliers.segments.extend(split.outliers.segments);

    let (lifted, _stats) = lift_segments(
        &work.inliers,
        &bundle.depth,
        &bundle.intrinsics,
        &LiftOptions::from(params),
    )?;
    work.lifted = lifted;
    let position = estimate_position(&work.lifted)?;
    let n_points = work.lifted.iter().map(|l| l.points.len()).sum();

    let mut lines = Vec::with_capacity(work.lifted.len());
    for (k, l) in work.lifted.iter().enumerate() {
        let pts: Vec<Vector2<f64>> = l.points.iter().map(|p| ground_project(p, cfg)).collect();
        let fit = match params.ground_outlier_mode {
            GroundOutlierMode::WholeLines => fit_ground_line(&pts),
            GroundOutlierMode::PointsWithinLine => fit_ground_line_robust(
                &pts,
                params.ground_point_tol,
                params.ground_consensus.max_iterations,
                splitmix64(seed ^ k as u64),
            ),
        };
        // a lifted segment that collapses to a point carries no heading
        match fit {
            Ok(line) => lines.push(line),
            Err(LocalizeError::DegenerateCluster | LocalizeError::TooFewPoints(_)) => {}
            Err(e) => return Err(e),
        }
    }
    if lines.is_empty() {
        return Err(LocalizeError::AllRejected);
    }
    let (kept_idx, _) = filter_ground_lines(
        &lines,
        params.ground_residual_tol,
        &params.ground_consensus,
        splitmix64(seed),
    )?;
    let kept: Vec<GroundLine> = kept_idx.iter().map(|&i| lines[i]).collect();
    let theta = estimate_angle(&kept)?;

    let mut pose = StairPose::from_parts(position, theta, cfg);
    pose.n_points = n_points;
    pose.n_lines = kept.len();
    pose.residual_mse = kept.iter().map(|l| l.residual_mse).sum::<f64>() / kept.len() as f64;
    if params.x_axis == XAxis::Left {
        pose = pose.mirrored_x(cfg);
    }
    Ok(pose)
}

/// Localizes every detection box of a frame.
///
/// Per-box failures are reported in [`BoxResult::outcome`]; only a
/// malformed bundle or invalid configuration is an error.
pub fn localize(
    bundle: &FrameBundle,
    cfg: &ExtrinsicsConfig,
    params: &LocalizeParams,
    seed: u64,
) -> Result<FrameLocalization, LocalizeError> {
    bundle.validate().map_err(LocalizeError::MalformedBundle)?;
    cfg.validate().map_err(LocalizeError::InvalidParams)?;
    params.validate()?;
    let frame = bundle.detections.frame.clone();
    let boxes = (0..bundle.detections.boxes.len())
        .map(|i| {
            let mut work = BoxWork {
                inliers: SegmentSet::default(),
                outliers: SegmentSet::default(),
                lifted: Vec::new(),
            };
            let outcome = localize_box(
                bundle,
                i,
                cfg,
                params,
                derive_seed(seed, &frame, i),
                &mut work,
            );
            if let Err(e) = &outcome {
                log::debug!("frame {frame} box {i}: {e}");
            }
            BoxResult {
                box_index: i,
                inliers: work.inliers,
                outliers: work.outliers,
                lifted: work.lifted,
                outcome,
            }
        })
        .collect();
    Ok(FrameLocalization { frame, boxes })
}
