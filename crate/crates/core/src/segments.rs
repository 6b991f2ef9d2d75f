//! Tri-point line segments, grid traversal and slope consensus.
//!
//! A segment is stored the way tri-point line detectors emit it: a root
//! pixel plus two displacement vectors, `start = root + d_start` and
//! `end = root + d_end`. Staircase nosings show up as a majority of
//! near-parallel segments inside the stair region, so [`ransac_parallel_filter`]
//! keeps the largest group of segments that agree on a line angle and
//! discards the rest.

use nalgebra::Vector2;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::angles::{fold_half_turn, line_distance};
use crate::camera::Pixel;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SegmentError {
    #[error("degenerate segment: endpoints {0} and {1} coincide on the pixel grid")]
    DegenerateSegment(Pixel, Pixel),
    #[error("empty input")]
    EmptyInput,
    #[error("insufficient consensus: best model explains {best} of {total}, need {required}")]
    InsufficientConsensus {
        best: usize,
        required: usize,
        total: usize,
    },
    #[error("invalid consensus parameters: {0}")]
    InvalidParams(String),
}

/// Tri-point segment: root pixel and two opposite displacements.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LineSegmentTP {
    pub root: Pixel,
    pub d_start: Vector2<f64>,
    pub d_end: Vector2<f64>,
    /// Detector confidence in `[0, 1]`.
    pub score: f64,
}

impl LineSegmentTP {
    pub fn new(root: Pixel, d_start: Vector2<f64>, d_end: Vector2<f64>) -> Self {
        Self {
            root,
            d_start,
            d_end,
            score: 1.0,
        }
    }

    /// Segment with its root at the midpoint of `start`–`end`.
    pub fn from_endpoints(start: Pixel, end: Pixel) -> Self {
        let root = Pixel::new(0.5 * (start.u + end.u), 0.5 * (start.v + end.v));
        Self::new(
            root,
            Vector2::new(start.u - root.u, start.v - root.v),
            Vector2::new(end.u - root.u, end.v - root.v),
        )
    }

    pub fn with_score(mut self, score: f64) -> Self {
        self.score = score;
        self
    }

    /// Endpoints without the degeneracy check.
    pub fn endpoints_unchecked(&self) -> (Pixel, Pixel) {
        (
            Pixel::new(self.root.u + self.d_start.x, self.root.v + self.d_start.y),
            Pixel::new(self.root.u + self.d_end.x, self.root.v + self.d_end.y),
        )
    }

    pub fn length(&self) -> f64 {
        (self.d_end - self.d_start).norm()
    }

    pub fn translated(&self, du: f64, dv: f64) -> Self {
        Self {
            root: Pixel::new(self.root.u + du, self.root.v + dv),
            ..*self
        }
    }
}

/// Converts tri-point form to `(start, end)`.
pub fn tp_to_endpoints(seg: &LineSegmentTP) -> Result<(Pixel, Pixel), SegmentError> {
    let (start, end) = seg.endpoints_unchecked();
    if start.grid() == end.grid() {
        return Err(SegmentError::DegenerateSegment(start, end));
    }
    Ok((start, end))
}

/// Undirected line angle `atan2(Δv, Δu)` folded into `[-π/2, π/2)`.
///
/// Computed from the displacement difference so translating the root
/// leaves the value bit-identical.
pub fn slope_angle(seg: &LineSegmentTP) -> Result<f64, SegmentError> {
    tp_to_endpoints(seg)?;
    let d = seg.d_end - seg.d_start;
    Ok(fold_half_turn(d.y.atan2(d.x)))
}

/// Ordered segments plus the crop origin they are expressed relative to.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SegmentSet {
    pub segments: Vec<LineSegmentTP>,
    /// Top-left corner `(Δu, Δv)` of the crop in full-image pixels.
    pub offset: Vector2<f64>,
}

impl SegmentSet {
    pub fn new(segments: Vec<LineSegmentTP>, offset: Vector2<f64>) -> Self {
        Self { segments, offset }
    }

    pub fn full_frame(segments: Vec<LineSegmentTP>) -> Self {
        Self::new(segments, Vector2::zeros())
    }

    pub fn len(&self) -> usize {
        self.segments.len()
    }

    pub fn is_empty(&self) -> bool {
        self.segments.is_empty()
    }

    /// Subset by index, keeping the offset.
    pub fn select(&self, indices: &[usize]) -> Self {
        Self::new(
            indices.iter().map(|&i| self.segments[i]).collect(),
            self.offset,
        )
    }

    /// Drops segments shorter than `min_len` pixels (and degenerate ones).
    pub fn without_short(&self, min_len: f64) -> Self {
        Self::new(
            self.segments
                .iter()
                .filter(|s| s.length() >= min_len && tp_to_endpoints(s).is_ok())
                .copied()
                .collect(),
            self.offset,
        )
    }
}

/// Parameters for the single-angle consensus search.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ConsensusParams {
    /// Inlier tolerance on the folded angle, radians.
    pub tol: f64,
    /// Minimum fraction of the input the winning model must explain.
    pub min_inlier_frac: f64,
    /// Upper bound on evaluated hypotheses.
    pub max_iterations: usize,
    /// Success probability used for the adaptive hypothesis count.
    pub confidence: f64,
}

impl Default for ConsensusParams {
    fn default() -> Self {
        Self {
            tol: 0.05,
            min_inlier_frac: 0.5,
            max_iterations: 200,
            confidence: 0.99,
        }
    }
}

impl ConsensusParams {
    pub fn validate(&self) -> Result<(), SegmentError> {
        if !(self.tol > 0.0) {
            return Err(SegmentError::InvalidParams(format!(
                "tol must be positive, got {}",
                self.tol
            )));
        }
        if !(self.min_inlier_frac > 0.0 && self.min_inlier_frac <= 1.0) {
            return Err(SegmentError::InvalidParams(format!(
                "min_inlier_frac must be in (0, 1], got {}",
                self.min_inlier_frac
            )));
        }
        if self.max_iterations == 0 {
            return Err(SegmentError::InvalidParams(
                "max_iterations must be >= 1".into(),
            ));
        }
        if !(self.confidence > 0.0 && self.confidence < 1.0) {
            return Err(SegmentError::InvalidParams(format!(
                "confidence must be in (0, 1), got {}",
                self.confidence
            )));
        }
        Ok(())
    }

    fn required_inliers(&self, total: usize) -> usize {
        ((self.min_inlier_frac * total as f64) - 1e-9)
            .ceil()
            .max(1.0) as usize
    }
}

/// Winning model of [`angular_consensus`].
#[derive(Debug, Clone, PartialEq)]
pub struct AngularConsensus {
    /// Angle of the seed that produced the best support.
    pub angle: f64,
    pub inliers: Vec<usize>,
    pub outliers: Vec<usize>,
    /// Mean squared angular distance of the inliers to `angle`.
    pub mse: f64,
    pub hypotheses: usize,
}

/// Finds the line angle supported by the most inputs.
///
/// Each hypothesis is a single input angle; its support is the set of inputs
/// within `tol` (modulo π). Ties on support are broken by the smaller mean
/// squared angular distance, then by the lower index. When the input has no
/// more than `max_iterations` elements every hypothesis is evaluated, so the
/// result is the exact maximum. Larger inputs are sampled without replacement
/// in a seeded order until the adaptive RANSAC bound for `confidence` is met.
pub fn angular_consensus(
    angles: &[f64],
    params: &ConsensusParams,
    seed: u64,
) -> Result<AngularConsensus, SegmentError> {
    params.validate()?;
    let n = angles.len();
    if n == 0 {
        return Err(SegmentError::EmptyInput);
    }

    let mut order: Vec<usize> = (0..n).collect();
    let exhaustive = n <= params.max_iterations;
    if !exhaustive {
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    }

    // (support, mse, seed index)
    let mut best: Option<(usize, f64, usize)> = None;
    let mut limit = if exhaustive { n } else { params.max_iterations };
    let mut evaluated = 0;
    for &seed_idx in &order {
        if evaluated >= limit {
            break;
        }
        evaluated += 1;
        let model = angles[seed_idx];
        let (mut support, mut sq) = (0usize, 0.0);
        for &a in angles {
            let d = line_distance(a, model);
            if d <= params.tol {
                support += 1;
                sq += d * d;
            }
        }
        let mse = sq / support as f64;
        let better = match best {
            None => true,
            Some((bs, bm, bi)) => {
                support > bs || (support == bs && (mse < bm || (mse == bm && seed_idx < bi)))
            }
        };
        if better {
            best = Some((support, mse, seed_idx));
            if !exhaustive {
                limit = adaptive_limit(support as f64 / n as f64, params);
            }
        }
    }

    let (support, mse, seed_idx) = best.expect("at least one hypothesis evaluated");
    let required = params.required_inliers(n);
    if support < required {
        return Err(SegmentError::InsufficientConsensus {
            best: support,
            required,
            total: n,
        });
    }
    let model = angles[seed_idx];
    let (inliers, outliers) = (0..n).partition(|&i| line_distance(angles[i], model) <= params.tol);
    Ok(AngularConsensus {
        angle: fold_half_turn(model),
        inliers,
        outliers,
        mse,
        hypotheses: evaluated,
    })
}

fn adaptive_limit(inlier_ratio: f64, params: &ConsensusParams) -> usize {
    if inlier_ratio >= 1.0 {
        return 1;
    }
    let n = (1.0 - params.confidence).ln() / (1.0 - inlier_ratio).ln();
    (n.ceil() as usize).clamp(1, params.max_iterations)
}

/// Result of splitting a segment set into parallel inliers and outliers.
#[derive(Debug, Clone, PartialEq)]
pub struct ParallelSplit {
    pub inliers: SegmentSet,
    pub outliers: SegmentSet,
    pub inlier_indices: Vec<usize>,
    pub outlier_indices: Vec<usize>,
    pub consensus_angle: f64,
}

/// Keeps the majority group of parallel segments.
pub fn ransac_parallel_filter(
    set: &SegmentSet,
    params: &ConsensusParams,
    seed: u64,
) -> Result<ParallelSplit, SegmentError> {
    if set.is_empty() {
        return Err(SegmentError::EmptyInput);
    }
    let angles = set
        .segments
        .iter()
        .map(slope_angle)
        .collect::<Result<Vec<_>, _>>()?;
    let consensus = angular_consensus(&angles, params, seed)?;
    Ok(ParallelSplit {
        inliers: set.select(&consensus.inliers),
        outliers: set.select(&consensus.outliers),
        consensus_angle: consensus.angle,
        inlier_indices: consensus.inliers,
        outlier_indices: consensus.outliers,
    })
}

/// Integer Bresenham traversal between two grid points, inclusive.
pub fn bresenham(from: (i64, i64), to: (i64, i64)) -> Vec<(i64, i64)> {
    let (mut x, mut y) = from;
    let dx = (to.0 - x).abs();
    let dy = -(to.1 - y).abs();
    let sx = if x < to.0 { 1 } else { -1 };
    let sy = if y < to.1 { 1 } else { -1 };
    let mut err = dx + dy;
    let mut out = Vec::with_capacity((dx.max(-dy) + 1) as usize);
    loop {
        out.push((x, y));
        if (x, y) == to {
            break;
        }
        let e2 = 2 * err;
        if e2 >= dy {
            err += dy;
            x += sx;
        }
        if e2 <= dx {
            err += dx;
            y += sy;
        }
    }
    out
}

/// Grid pixels along a segment after applying `offset`, clipped to a
/// `width × height` raster. 8-connected, endpoints included when in bounds.
pub fn rasterize(
    seg: &LineSegmentTP,
    offset: Vector2<f64>,
    width: usize,
    height: usize,
) -> Vec<(i64, i64)> {
    let (s, e) = seg.endpoints_unchecked();
    let s = Pixel::new(s.u + offset.x, s.v + offset.y);
    let e = Pixel::new(e.u + offset.x, e.v + offset.y);
    bresenham(s.grid(), e.grid())
        .into_iter()
        .filter(|&(c, r)| c >= 0 && r >= 0 && (c as usize) < width && (r as usize) < height)
        .collect()
}

/// A point of a continuous segment at an integer major-axis coordinate,
/// with the pixel that contains it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SegmentSample {
    pub grid: (i64, i64),
    /// Point on the segment; its major-axis coordinate is an integer.
    pub point: Pixel,
}

/// Samples a full-frame segment once per integer step along its major axis.
///
/// Pixels closer than `end_trim` (along the major axis) to either endpoint
/// are skipped; the depth behind a segment's extremities is unreliable.
pub fn sample_segment(
    seg: &LineSegmentTP,
    width: usize,
    height: usize,
    end_trim: f64,
) -> Vec<SegmentSample> {
    let (s, e) = seg.endpoints_unchecked();
    let (du, dv) = (e.u - s.u, e.v - s.v);
    if du == 0.0 && dv == 0.0 {
        return Vec::new();
    }
    let horizontal = du.abs() >= dv.abs();
    let (lo, hi) = if horizontal {
        (s.u.min(e.u), s.u.max(e.u))
    } else {
        (s.v.min(e.v), s.v.max(e.v))
    };
    let first = (lo + end_trim).ceil() as i64;
    let last = (hi - end_trim).floor() as i64;
    (first..=last)
        .filter_map(|m| {
            let major = m as f64;
            let point = if horizontal {
                Pixel::new(major, s.v + (major - s.u) * dv / du)
            } else {
                Pixel::new(s.u + (major - s.v) * du / dv, major)
            };
            let (c, r) = point.grid();
            let inside = c >= 0 && r >= 0 && (c as usize) < width && (r as usize) < height;
            inside.then_some(SegmentSample {
                grid: (c, r),
                point,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::f64::consts::{FRAC_PI_2, FRAC_PI_4};

    fn seg(x0: f64, y0: f64, x1: f64, y1: f64) -> LineSegmentTP {
        LineSegmentTP::from_endpoints(Pixel::new(x0, y0), Pixel::new(x1, y1))
    }

    fn at_angle(theta: f64, len: f64) -> LineSegmentTP {
        seg(0.0, 0.0, len * theta.cos(), len * theta.sin())
    }

    #[test]
    fn endpoints_from_tri_points() {
        let s = LineSegmentTP::new(
            Pixel::new(5.0, 5.0),
            Vector2::new(-5.0, -5.0),
            Vector2::new(5.0, 5.0),
        );
        assert_eq!(
            tp_to_endpoints(&s).unwrap(),
            (Pixel::new(0.0, 0.0), Pixel::new(10.0, 10.0))
        );
        let s = LineSegmentTP::new(
            Pixel::new(100.0, 50.0),
            Vector2::zeros(),
            Vector2::new(30.0, 0.0),
        );
        assert_eq!(
            tp_to_endpoints(&s).unwrap(),
            (Pixel::new(100.0, 50.0), Pixel::new(130.0, 50.0))
        );
        let s = LineSegmentTP::new(
            Pixel::new(3.0, 3.0),
            Vector2::new(0.2, 0.2),
            Vector2::new(0.3, 0.3),
        );
        assert!(matches!(
            tp_to_endpoints(&s),
            Err(SegmentError::DegenerateSegment(..))
        ));
    }

    #[test]
    fn slope_examples() {
        assert_eq!(slope_angle(&seg(0.0, 0.0, 10.0, 0.0)).unwrap(), 0.0);
        assert!((slope_angle(&seg(0.0, 0.0, 10.0, 10.0)).unwrap() - FRAC_PI_4).abs() < 1e-12);
        assert!((slope_angle(&seg(0.0, 0.0, -10.0, -10.0)).unwrap() - FRAC_PI_4).abs() < 1e-12);
        // vertical folds to the lower end of the range
        assert!((slope_angle(&seg(0.0, 0.0, 0.0, 10.0)).unwrap() + FRAC_PI_2).abs() < 1e-12);
        assert!(slope_angle(&seg(3.2, 3.2, 3.3, 3.3)).is_err());
    }

    /// Maximum consensus over all single-segment-seeded models, by brute force.
    pub(crate) fn exhaustive_max_consensus(angles: &[f64], tol: f64) -> usize {
        angles
            .iter()
            .map(|&m| {
                angles
                    .iter()
                    .filter(|&&a| {
                        let mut d = (a - m).abs() % std::f64::consts::PI;
                        if d > FRAC_PI_2 {
                            d = std::f64::consts::PI - d;
                        }
                        d <= tol
                    })
                    .count()
            })
            .max()
            .unwrap_or(0)
    }

    #[test]
    fn filter_removes_the_odd_segment() {
        let mut segs: Vec<_> = (0..9)
            .map(|i| {
                let jitter = [
                    -0.005, -0.004, -0.002, 0.0, 0.001, 0.002, 0.003, 0.004, 0.005,
                ][i];
                at_angle(jitter, 80.0).translated(0.0, 10.0 * i as f64)
            })
            .collect();
        segs.insert(4, at_angle(0.8, 80.0));
        let set = SegmentSet::new(segs, Vector2::new(7.0, 3.0));
        let angles: Vec<f64> = set
            .segments
            .iter()
            .map(|s| slope_angle(s).unwrap())
            .collect();
        assert_eq!(exhaustive_max_consensus(&angles, 0.05), 9);

        let split = ransac_parallel_filter(&set, &ConsensusParams::default(), 7).unwrap();
        assert_eq!(split.inliers.len(), 9);
        assert_eq!(split.outlier_indices, vec![4]);
        assert_eq!(split.inliers.offset, set.offset);
    }

    #[test]
    fn unanimous_set_has_no_outliers() {
        let set = SegmentSet::full_frame(
            (0..6)
                .map(|i| at_angle(0.3, 50.0).translated(0.0, i as f64 * 20.0))
                .collect(),
        );
        let split = ransac_parallel_filter(&set, &ConsensusParams::default(), 1).unwrap();
        assert_eq!(split.inliers.len(), 6);
        assert!(split.outliers.is_empty());
    }

    #[test]
    fn split_groups_fail_a_strict_fraction() {
        let mut segs: Vec<_> = (0..3).map(|_| at_angle(0.0, 40.0)).collect();
        segs.extend((0..3).map(|_| at_angle(0.8, 40.0)));
        let set = SegmentSet::full_frame(segs);
        let angles: Vec<f64> = set
            .segments
            .iter()
            .map(|s| slope_angle(s).unwrap())
            .collect();
        assert_eq!(exhaustive_max_consensus(&angles, 0.05), 3);
        let params = ConsensusParams {
            min_inlier_frac: 0.7,
            ..Default::default()
        };
        assert_eq!(
            ransac_parallel_filter(&set, &params, 0),
            Err(SegmentError::InsufficientConsensus {
                best: 3,
                required: 5,
                total: 6
            })
        );
        // exactly half is a majority under the default fraction
        assert!(ransac_parallel_filter(&set, &ConsensusParams::default(), 0).is_ok());
    }

    #[test]
    fn empty_and_invalid_inputs() {
        assert_eq!(
            ransac_parallel_filter(&SegmentSet::default(), &ConsensusParams::default(), 0),
            Err(SegmentError::EmptyInput)
        );
        let bad = ConsensusParams {
            min_inlier_frac: 0.0,
            ..Default::default()
        };
        assert!(matches!(
            angular_consensus(&[0.0], &bad, 0),
            Err(SegmentError::InvalidParams(_))
        ));
    }

    #[test]
    fn consensus_wraps_at_vertical() {
        let angles = [FRAC_PI_2 - 0.01, -FRAC_PI_2 + 0.01, -FRAC_PI_2 + 0.02, 0.4];
        let c = angular_consensus(&angles, &ConsensusParams::default(), 0).unwrap();
        assert_eq!(c.inliers, vec![0, 1, 2]);
    }

    #[test]
    fn large_inputs_are_sampled_deterministically() {
        let angles: Vec<f64> = (0..500)
            .map(|i| {
                if i % 5 == 0 {
                    1.0
                } else {
                    0.001 * (i % 7) as f64
                }
            })
            .collect();
        let params = ConsensusParams::default();
        let a = angular_consensus(&angles, &params, 99).unwrap();
        let b = angular_consensus(&angles, &params, 99).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.inliers.len(), 400);
        assert!(a.hypotheses < params.max_iterations);
    }

    #[test]
    fn rasterize_examples() {
        let z = Vector2::zeros();
        assert_eq!(
            rasterize(&seg(0.0, 0.0, 3.0, 0.0), z, 10, 10),
            vec![(0, 0), (1, 0), (2, 0), (3, 0)]
        );
        assert_eq!(
            rasterize(&seg(0.0, 0.0, 2.0, 2.0), z, 10, 10),
            vec![(0, 0), (1, 1), (2, 2)]
        );
        let px = rasterize(&seg(0.0, 0.0, 5.0, 2.0), z, 10, 10);
        // DDA oracle: one pixel per column, row = round of the ideal line
        let oracle: Vec<(i64, i64)> = (0..=5)
            .map(|x| (x, (0.4 * x as f64).round() as i64))
            .collect();
        assert_eq!(px, oracle);
    }

    #[test]
    fn rasterize_offset_and_clip() {
        let px = rasterize(&seg(0.0, 0.0, 4.0, 0.0), Vector2::new(-2.0, 1.0), 10, 10);
        assert_eq!(px, vec![(0, 1), (1, 1), (2, 1)]);
        assert!(rasterize(&seg(0.0, 0.0, 4.0, 0.0), Vector2::new(50.0, 0.0), 10, 10).is_empty());
    }

    #[test]
    fn samples_lie_on_the_segment() {
        let s = seg(10.3, 20.7, 60.9, 31.2);
        let samples = sample_segment(&s, 100, 100, 1.0);
        assert!(!samples.is_empty());
        for smp in &samples {
            assert_eq!(smp.point.u, smp.grid.0 as f64);
            let t = (smp.point.u - 10.3) / (60.9 - 10.3);
            assert!((smp.point.v - (20.7 + t * (31.2 - 20.7))).abs() < 1e-9);
            assert!((smp.point.v - smp.grid.1 as f64).abs() <= 0.5 + 1e-9);
            assert!(smp.point.u >= 11.3 && smp.point.u <= 59.9);
        }
        assert_eq!(samples.len(), 48);
    }

    fn arb_segment() -> impl Strategy<Value = LineSegmentTP> {
        (
            -50.0f64..50.0,
            -50.0f64..50.0,
            -60.0f64..60.0,
            -60.0f64..60.0,
        )
            .prop_filter_map("degenerate", |(x, y, dx, dy)| {
                let s = seg(x, y, x + dx, y + dy);
                tp_to_endpoints(&s).ok().map(|_| s)
            })
    }

    proptest! {
        #[test]
        fn slope_invariances(s in arb_segment(), k in 0.1f64..10.0) {
            let a = slope_angle(&s).unwrap();
            let (p0, p1) = s.endpoints_unchecked();
            let swapped = LineSegmentTP::from_endpoints(p1, p0);
            prop_assert!(line_distance(a, slope_angle(&swapped).unwrap()) < 1e-12);
            let scaled = LineSegmentTP::new(s.root, s.d_start * k, s.d_end * k);
            if tp_to_endpoints(&scaled).is_ok() {
                prop_assert!(line_distance(a, slope_angle(&scaled).unwrap()) < 1e-12);
            }
            prop_assert!((-FRAC_PI_2..FRAC_PI_2).contains(&a));
        }

        #[test]
        fn traversal_is_connected(s in arb_segment()) {
            let px = rasterize(&s, Vector2::new(200.0, 200.0), 1000, 1000);
            let (p0, p1) = s.endpoints_unchecked();
            let g0 = Pixel::new(p0.u + 200.0, p0.v + 200.0).grid();
            let g1 = Pixel::new(p1.u + 200.0, p1.v + 200.0).grid();
            prop_assert_eq!(px[0], g0);
            prop_assert_eq!(*px.last().unwrap(), g1);
            let expected = (g1.0 - g0.0).abs().max((g1.1 - g0.1).abs()) as usize + 1;
            prop_assert_eq!(px.len(), expected);
            for w in px.windows(2) {
                let step = ((w[1].0 - w[0].0).abs(), (w[1].1 - w[0].1).abs());
                prop_assert!(step.0 <= 1 && step.1 <= 1 && step != (0, 0));
            }
            let mut dedup = px.clone();
            dedup.sort();
            dedup.dedup();
            prop_assert_eq!(dedup.len(), px.len());
        }

        #[test]
        fn filter_partitions_and_is_consistent(
            angles in proptest::collection::vec(-1.6f64..1.6, 1..14),
            seed in any::<u64>(),
        ) {
            let set = SegmentSet::full_frame(
                angles.iter().enumerate()
                    .map(|(i, &a)| at_angle(a, 40.0).translated(i as f64, 0.0))
                    .collect(),
            );
            let params = ConsensusParams { min_inlier_frac: 0.1, ..Default::default() };
            let folded: Vec<f64> = set.segments.iter().map(|s| slope_angle(s).unwrap()).collect();
            let split = match ransac_parallel_filter(&set, &params, seed) {
                Ok(split) => split,
                Err(SegmentError::InsufficientConsensus { best, required, .. }) => {
                    prop_assert!(best < required);
                    prop_assert_eq!(best, exhaustive_max_consensus(&folded, params.tol));
                    return Ok(());
                }
                Err(e) => return Err(TestCaseError::fail(e.to_string())),
            };
            let mut all: Vec<usize> = split.inlier_indices.iter()
                .chain(&split.outlier_indices).copied().collect();
            all.sort();
            prop_assert_eq!(all, (0..set.len()).collect::<Vec<_>>());
            for &i in &split.inlier_indices {
                prop_assert!(line_distance(folded[i], split.consensus_angle) <= params.tol);
                for &j in &split.inlier_indices {
                    prop_assert!(line_distance(folded[i], folded[j]) <= 2.0 * params.tol + 1e-12);
                }
            }
            if set.len() <= 12 {
                prop_assert_eq!(
                    split.inliers.len(),
                    exhaustive_max_consensus(&folded, params.tol)
                );
            }
            let again = ransac_parallel_filter(&set, &params, seed).unwrap();
            prop_assert_eq!(again, split);
        }
    }
}
