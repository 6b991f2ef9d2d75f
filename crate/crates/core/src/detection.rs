//! Detector outputs: bounding boxes, crop-local segments and the
//! `stairloc/1` wire format.
//!
//! One JSON document per frame, newline-delimited for streams:
//!
//! ```text
//! {"schema":"stairloc/1","frame":"f0","boxes":[{"bbox":[x_min,y_min,x_max,y_max],
//!   "confidence":0.9,"segments":[{"root":[u,v],"d_start":[du,dv],"d_end":[du,dv],"score":1.0}]}]}
//! ```
//!
//! `bbox` is in full-image pixels; segment coordinates are relative to the
//! top-left corner of the (clamped) crop. Only the stair class is carried:
//! a box with a `class` other than `"stair"` is rejected.

use std::collections::HashMap;
use std::path::{Path, PathBuf};

use nalgebra::Vector2;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::camera::{DepthFrame, Intrinsics, Pixel};
use crate::segments::{tp_to_endpoints, LineSegmentTP, SegmentSet};

pub const SCHEMA: &str = "stairloc/1";

/// Slack, in pixels, allowed when checking segment endpoints against a
/// crop or image rectangle.
pub const EDGE_TOLERANCE_PX: f64 = 1.0;

#[derive(Debug, Error)]
pub enum DetectionError {
    #[error("schema error on line {line}: {message}")]
    Schema { line: usize, message: String },
    #[error("invariant violated on line {line}: {invariant}")]
    Invariant { line: usize, invariant: String },
    #[error("crop of {0:?} is empty after clamping to the image")]
    EmptyCrop(BoundingBox),
    #[error("segment endpoint {endpoint} leaves the {width}x{height} image")]
    OutOfImage {
        endpoint: Pixel,
        width: usize,
        height: usize,
    },
    #[error("no detections recorded for frame `{0}`")]
    UnknownFrame(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundingBox {
    pub x_min: f64,
    pub y_min: f64,
    pub x_max: f64,
    pub y_max: f64,
    pub confidence: f64,
}

impl BoundingBox {
    pub fn new(x_min: f64, y_min: f64, x_max: f64, y_max: f64, confidence: f64) -> Self {
        Self {
            x_min,
            y_min,
            x_max,
            y_max,
            confidence,
        }
    }

    /// Returns the name of the first violated invariant.
    pub fn check(&self) -> Result<(), &'static str> {
        let coords = [self.x_min, self.y_min, self.x_max, self.y_max];
        if coords.iter().any(|c| !c.is_finite()) {
            return Err("bbox coordinates finite");
        }
        if self.x_min >= self.x_max {
            return Err("x_min < x_max");
        }
        if self.y_min >= self.y_max {
            return Err("y_min < y_max");
        }
        if !(0.0..=1.0).contains(&self.confidence) {
            return Err("confidence in [0, 1]");
        }
        Ok(())
    }

    /// Crop origin once the box is clamped at the image's top-left corner.
    pub fn crop_origin(&self) -> Vector2<f64> {
        Vector2::new(self.x_min.max(0.0), self.y_min.max(0.0))
    }
}

/// A box clamped to the image, with the offset that maps crop-local pixels
/// back to full-frame pixels.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CropRect {
    pub x_min: f64,
    pub y_min: f64,
    pub x_max: f64,
    pub y_max: f64,
}

impl CropRect {
    pub fn width(&self) -> f64 {
        self.x_max - self.x_min
    }

    pub fn height(&self) -> f64 {
        self.y_max - self.y_min
    }

    pub fn offset(&self) -> Vector2<f64> {
        Vector2::new(self.x_min, self.y_min)
    }

    pub fn to_full(&self, local: Pixel) -> Pixel {
        Pixel::new(local.u + self.x_min, local.v + self.y_min)
    }

    pub fn to_local(&self, full: Pixel) -> Pixel {
        Pixel::new(full.u - self.x_min, full.v - self.y_min)
    }
}

/// Clamps a detection box to a `width × height` image.
pub fn crop_roi(
    bbox: &BoundingBox,
    width: usize,
    height: usize,
) -> Result<CropRect, DetectionError> {
    let rect = CropRect {
        x_min: bbox.x_min.clamp(0.0, width as f64),
        y_min: bbox.y_min.clamp(0.0, height as f64),
        x_max: bbox.x_max.clamp(0.0, width as f64),
        y_max: bbox.y_max.clamp(0.0, height as f64),
    };
    if !(rect.width() > 0.0 && rect.height() > 0.0) {
        return Err(DetectionError::EmptyCrop(*bbox));
    }
    Ok(rect)
}

/// Moves crop-local segments into full-frame coordinates.
///
/// Endpoints that overshoot the image by at most [`EDGE_TOLERANCE_PX`] are
/// clamped onto the last valid pixel; larger overshoots are an error.
pub fn to_full_frame(
    set: &SegmentSet,
    width: usize,
    height: usize,
) -> Result<SegmentSet, DetectionError> {
    let (du, dv) = (set.offset.x, set.offset.y);
    let (w, h) = (width as f64, height as f64);
    let mut out = Vec::with_capacity(set.len());
    for seg in &set.segments {
        let moved = seg.translated(du, dv);
        let (s, e) = moved.endpoints_unchecked();
        let mut clamped = false;
        let mut fix = |p: Pixel| -> Result<Pixel, DetectionError> {
            let outside = p.u < -EDGE_TOLERANCE_PX
                || p.v < -EDGE_TOLERANCE_PX
                || p.u > w + EDGE_TOLERANCE_PX
                || p.v > h + EDGE_TOLERANCE_PX;
            if outside || !p.is_finite() {
                return Err(DetectionError::OutOfImage {
                    endpoint: p,
                    width,
                    height,
                });
            }
            let q = Pixel::new(p.u.clamp(0.0, w - 1.0), p.v.clamp(0.0, h - 1.0));
            clamped |= q != p;
            Ok(q)
        };
        let (s2, e2) = (fix(s)?, fix(e)?);
        if clamped {
            let root = Pixel::new(
                moved.root.u.clamp(0.0, w - 1.0),
                moved.root.v.clamp(0.0, h - 1.0),
            );
            out.push(LineSegmentTP {
                root,
                d_start: Vector2::new(s2.u - root.u, s2.v - root.v),
                d_end: Vector2::new(e2.u - root.u, e2.v - root.v),
                score: seg.score,
            });
        } else {
            out.push(moved);
        }
    }
    Ok(SegmentSet::full_frame(out))
}

/// One stair box and the segments detected inside its crop.
#[derive(Debug, Clone, PartialEq)]
pub struct BoxDetection {
    pub bbox: BoundingBox,
    /// Crop-local segments; `offset` is the clamped crop origin.
    pub segments: SegmentSet,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DetectionRecord {
    pub frame: String,
    pub boxes: Vec<BoxDetection>,
}

impl DetectionRecord {
    pub fn empty(frame: impl Into<String>) -> Self {
        Self {
            frame: frame.into(),
            boxes: Vec::new(),
        }
    }

    /// Checks box validity and that segments stay inside their crop.
    pub fn validate(&self) -> Result<(), String> {
        for (bi, b) in self.boxes.iter().enumerate() {
            b.bbox.check().map_err(|inv| format!("box {bi}: {inv}"))?;
            let origin = b.bbox.crop_origin();
            let crop_w = b.bbox.x_max - origin.x;
            let crop_h = b.bbox.y_max - origin.y;
            for (si, seg) in b.segments.segments.iter().enumerate() {
                if !(0.0..=1.0).contains(&seg.score) {
                    return Err(format!("box {bi} segment {si}: score in [0, 1]"));
                }
                let (s, e) = tp_to_endpoints(seg)
                    .map_err(|_| format!("box {bi} segment {si}: endpoints distinct"))?;
                for p in [s, e] {
                    let inside = p.u >= -EDGE_TOLERANCE_PX
                        && p.v >= -EDGE_TOLERANCE_PX
                        && p.u <= crop_w + EDGE_TOLERANCE_PX
                        && p.v <= crop_h + EDGE_TOLERANCE_PX;
                    if !inside {
                        return Err(format!(
                            "box {bi} segment {si}: endpoint {p} inside crop rectangle"
                        ));
                    }
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct WireRecord {
    schema: String,
    frame: String,
    boxes: Vec<WireBox>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct WireBox {
    bbox: [f64; 4],
    confidence: f64,
    #[serde(default, skip_serializing)]
    class: Option<String>,
    #[serde(default)]
    segments: Vec<WireSegment>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct WireSegment {
    root: [f64; 2],
    d_start: [f64; 2],
    d_end: [f64; 2],
    #[serde(default = "unit_score")]
    score: f64,
}

fn unit_score() -> f64 {
    1.0
}

impl From<&DetectionRecord> for WireRecord {
    fn from(r: &DetectionRecord) -> Self {
        WireRecord {
            schema: SCHEMA.to_owned(),
            frame: r.frame.clone(),
            boxes: r
                .boxes
                .iter()
                .map(|b| WireBox {
                    bbox: [b.bbox.x_min, b.bbox.y_min, b.bbox.x_max, b.bbox.y_max],
                    confidence: b.bbox.confidence,
                    class: None,
                    segments: b
                        .segments
                        .segments
                        .iter()
                        .map(|s| WireSegment {
                            root: [s.root.u, s.root.v],
                            d_start: [s.d_start.x, s.d_start.y],
                            d_end: [s.d_end.x, s.d_end.y],
                            score: s.score,
                        })
                        .collect(),
                })
                .collect(),
        }
    }
}

fn record_from_wire(w: WireRecord, line: usize) -> Result<DetectionRecord, DetectionError> {
    if w.schema != SCHEMA {
        return Err(DetectionError::Schema {
            line,
            message: format!("unsupported schema `{}`, expected `{SCHEMA}`", w.schema),
        });
    }
    let mut boxes = Vec::with_capacity(w.boxes.len());
    for (bi, b) in w.boxes.into_iter().enumerate() {
        if let Some(class) = b.class.as_deref() {
            if class != "stair" {
                return Err(DetectionError::Schema {
                    line,
                    message: format!(
                        "box {bi}: class `{class}` is not supported, only `stair` boxes are accepted"
                    ),
                });
            }
        }
        let [x_min, y_min, x_max, y_max] = b.bbox;
        let bbox = BoundingBox::new(x_min, y_min, x_max, y_max, b.confidence);
        let segments = b
            .segments
            .into_iter()
            .map(|s| LineSegmentTP {
                root: Pixel::new(s.root[0], s.root[1]),
                d_start: Vector2::new(s.d_start[0], s.d_start[1]),
                d_end: Vector2::new(s.d_end[0], s.d_end[1]),
                score: s.score,
            })
            .collect();
        boxes.push(BoxDetection {
            bbox,
            segments: SegmentSet::new(segments, bbox.crop_origin()),
        });
    }
    let record = DetectionRecord {
        frame: w.frame,
        boxes,
    };
    record
        .validate()
        .map_err(|invariant| DetectionError::Invariant { line, invariant })?;
    Ok(record)
}

/// Parses a newline-delimited stream of `stairloc/1` documents.
///
/// Blank lines are skipped; record order is preserved.
pub fn parse_detection_file(bytes: &[u8]) -> Result<Vec<DetectionRecord>, DetectionError> {
    let text = std::str::from_utf8(bytes).map_err(|e| DetectionError::Schema {
        line: 0,
        message: format!("not UTF-8: {e}"),
    })?;
    let mut out = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        if raw.trim().is_empty() {
            continue;
        }
        let wire: WireRecord = serde_json::from_str(raw).map_err(|e| DetectionError::Schema {
            line,
            message: format!("column {}: {e}", e.column()),
        })?;
        out.push(record_from_wire(wire, line)?);
    }
    Ok(out)
}

/// Canonical single-line JSON for one record (no trailing newline).
pub fn serialize_record(record: &DetectionRecord) -> String {
    serde_json::to_string(&WireRecord::from(record)).expect("wire record serializes")
}

/// Newline-delimited stream, one line per record.
pub fn serialize_records(records: &[DetectionRecord]) -> String {
    let mut out = String::new();
    for r in records {
        out.push_str(&serialize_record(r));
        out.push('\n');
    }
    out
}

/// Source of detection records for a frame id.
pub trait Detector {
    fn detect(&self, frame: &str) -> Result<DetectionRecord, DetectionError>;
}

/// Replays detections previously written in the wire format.
#[derive(Debug, Clone, Default)]
pub struct ReplayDetector {
    records: HashMap<String, DetectionRecord>,
}

impl ReplayDetector {
    pub fn new(records: impl IntoIterator<Item = DetectionRecord>) -> Self {
        Self {
            records: records.into_iter().map(|r| (r.frame.clone(), r)).collect(),
        }
    }

    pub fn load(path: &Path) -> Result<Self, DetectionError> {
        Ok(Self::new(parse_detection_file(&std::fs::read(path)?)?))
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }
}

impl Detector for ReplayDetector {
    fn detect(&self, frame: &str) -> Result<DetectionRecord, DetectionError> {
        self.records
            .get(frame)
            .cloned()
            .ok_or_else(|| DetectionError::UnknownFrame(frame.to_owned()))
    }
}

/// Everything the localizer needs for one frame.
#[derive(Debug, Clone)]
pub struct FrameBundle {
    pub color: Option<PathBuf>,
    pub depth: DepthFrame,
    pub intrinsics: Intrinsics,
    pub detections: DetectionRecord,
}

impl FrameBundle {
    pub fn validate(&self) -> Result<(), String> {
        if self.depth.width() != self.intrinsics.width
            || self.depth.height() != self.intrinsics.height
        {
            return Err(format!(
                "depth raster is {}x{} but intrinsics describe {}x{}",
                self.depth.width(),
                self.depth.height(),
                self.intrinsics.width,
                self.intrinsics.height
            ));
        }
        self.detections.validate()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::segments::slope_angle;
    use proptest::prelude::*;

    const MINIMAL: &str = r#"{"schema":"stairloc/1","frame":"f0","boxes":[{"bbox":[10.0,20.0,110.0,220.0],"confidence":0.9,"segments":[{"root":[50.0,40.0],"d_start":[-30.0,0.5],"d_end":[30.0,-0.5],"score":0.75}]}]}"#;

    #[test]
    fn crop_examples() {
        let r = crop_roi(&BoundingBox::new(10.0, 20.0, 110.0, 220.0, 1.0), 640, 480).unwrap();
        assert_eq!((r.width(), r.height()), (100.0, 200.0));
        assert_eq!(r.offset(), Vector2::new(10.0, 20.0));

        let r = crop_roi(&BoundingBox::new(-5.0, -5.0, 50.0, 50.0, 1.0), 640, 480).unwrap();
        assert_eq!((r.x_min, r.y_min, r.x_max, r.y_max), (0.0, 0.0, 50.0, 50.0));
        assert_eq!(r.offset(), Vector2::zeros());

        let r = crop_roi(&BoundingBox::new(600.0, 400.0, 700.0, 500.0, 1.0), 640, 480).unwrap();
        assert_eq!((r.width(), r.height()), (40.0, 80.0));
        assert_eq!(r.offset(), Vector2::new(600.0, 400.0));

        assert!(matches!(
            crop_roi(&BoundingBox::new(700.0, 10.0, 800.0, 50.0, 1.0), 640, 480),
            Err(DetectionError::EmptyCrop(_))
        ));
    }

    #[test]
    fn full_frame_translation() {
        let seg = LineSegmentTP::new(
            Pixel::new(5.0, 5.0),
            Vector2::new(-3.0, 0.0),
            Vector2::new(3.0, 1.0),
        );
        let set = SegmentSet::new(vec![seg], Vector2::new(100.0, 50.0));
        let full = to_full_frame(&set, 640, 480).unwrap();
        assert_eq!(full.segments[0].root, Pixel::new(105.0, 55.0));
        assert_eq!(full.offset, Vector2::zeros());
        assert_eq!(
            slope_angle(&full.segments[0]).unwrap(),
            slope_angle(&seg).unwrap()
        );

        let identity = SegmentSet::full_frame(vec![seg]);
        assert_eq!(to_full_frame(&identity, 640, 480).unwrap(), identity);
    }

    #[test]
    fn full_frame_boundary_rule() {
        let seg = LineSegmentTP::new(
            Pixel::new(630.0, 10.0),
            Vector2::new(-10.0, 0.0),
            Vector2::new(10.5, 0.0),
        );
        let full = to_full_frame(&SegmentSet::full_frame(vec![seg]), 640, 480).unwrap();
        let (_, e) = full.segments[0].endpoints_unchecked();
        assert_eq!(e, Pixel::new(639.0, 10.0));

        let far = LineSegmentTP::new(
            Pixel::new(630.0, 10.0),
            Vector2::new(-10.0, 0.0),
            Vector2::new(12.0, 0.0),
        );
        assert!(matches!(
            to_full_frame(&SegmentSet::full_frame(vec![far]), 640, 480),
            Err(DetectionError::OutOfImage { .. })
        ));
    }

    #[test]
    fn minimal_record_round_trips_byte_identically() {
        let records = parse_detection_file(MINIMAL.as_bytes()).unwrap();
        assert_eq!(records.len(), 1);
        let r = &records[0];
        assert_eq!(r.frame, "f0");
        assert_eq!(r.boxes[0].segments.offset, Vector2::new(10.0, 20.0));
        assert_eq!(r.boxes[0].segments.segments[0].score, 0.75);
        assert_eq!(serialize_record(r), MINIMAL);
    }

    #[test]
    fn inverted_box_is_an_invariant_error() {
        let doc =
            r#"{"schema":"stairloc/1","frame":"f","boxes":[{"bbox":[50,0,50,10],"confidence":1}]}"#;
        match parse_detection_file(doc.as_bytes()) {
            Err(DetectionError::Invariant { line, invariant }) => {
                assert_eq!(line, 1);
                assert!(invariant.contains("x_min < x_max"), "{invariant}");
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn zero_boxes_is_a_valid_empty_detection() {
        let doc = "\n{\"schema\":\"stairloc/1\",\"frame\":\"empty\",\"boxes\":[]}\n\n";
        let records = parse_detection_file(doc.as_bytes()).unwrap();
        assert_eq!(records, vec![DetectionRecord::empty("empty")]);
    }

    #[test]
    fn schema_errors_carry_line_numbers() {
        let doc = format!("{MINIMAL}\n{{\"schema\":\"stairloc/1\",\"frame\":3,\"boxes\":[]}}\n");
        match parse_detection_file(doc.as_bytes()) {
            Err(DetectionError::Schema { line, .. }) => assert_eq!(line, 2),
            other => panic!("unexpected {other:?}"),
        }
        let wrong_version = r#"{"schema":"stairloc/2","frame":"a","boxes":[]}"#;
        assert!(matches!(
            parse_detection_file(wrong_version.as_bytes()),
            Err(DetectionError::Schema { .. })
        ));
        let typo = r#"{"schema":"stairloc/1","frame":"a","boxs":[]}"#;
        assert!(matches!(
            parse_detection_file(typo.as_bytes()),
            Err(DetectionError::Schema { .. })
        ));
    }

    #[test]
    fn non_stair_classes_are_rejected() {
        let doc = r#"{"schema":"stairloc/1","frame":"a","boxes":[{"bbox":[0,0,5,5],"confidence":0.5,"class":"person"}]}"#;
        match parse_detection_file(doc.as_bytes()) {
            Err(DetectionError::Schema { message, .. }) => assert!(message.contains("person")),
            other => panic!("unexpected {other:?}"),
        }
        let stair = r#"{"schema":"stairloc/1","frame":"a","boxes":[{"bbox":[0,0,5,5],"confidence":0.5,"class":"stair"}]}"#;
        assert_eq!(parse_detection_file(stair.as_bytes()).unwrap().len(), 1);
    }

    #[test]
    fn segments_must_stay_in_their_crop() {
        let doc = r#"{"schema":"stairloc/1","frame":"a","boxes":[{"bbox":[0,0,20,20],"confidence":0.5,"segments":[{"root":[10,10],"d_start":[-5,0],"d_end":[15,0]}]}]}"#;
        assert!(matches!(
            parse_detection_file(doc.as_bytes()),
            Err(DetectionError::Invariant { .. })
        ));
    }

    #[test]
    fn replay_detector_lookup() {
        let det = ReplayDetector::new(parse_detection_file(MINIMAL.as_bytes()).unwrap());
        assert_eq!(det.detect("f0").unwrap().boxes.len(), 1);
        assert!(matches!(
            det.detect("nope"),
            Err(DetectionError::UnknownFrame(_))
        ));
    }

    fn arb_record() -> impl Strategy<Value = DetectionRecord> {
        let seg = (
            0.0f64..50.0,
            0.0f64..50.0,
            2.0f64..40.0,
            -20.0f64..20.0,
            0.0f64..=1.0,
        )
            .prop_map(|(u, v, dx, dy, score)| {
                LineSegmentTP::from_endpoints(
                    Pixel::new(u, v),
                    Pixel::new(u + dx, (v + dy).clamp(0.0, 60.0)),
                )
                .with_score(score)
            });
        let bx = (
            -10.0f64..300.0,
            -10.0f64..200.0,
            0.0f64..=1.0,
            proptest::collection::vec(seg, 0..4),
        )
            .prop_map(|(x, y, conf, segs)| {
                let bbox = BoundingBox::new(x, y, x.max(0.0) + 100.0, y.max(0.0) + 80.0, conf);
                BoxDetection {
                    bbox,
                    segments: SegmentSet::new(segs, bbox.crop_origin()),
                }
            });
        ("[a-z0-9_]{1,12}", proptest::collection::vec(bx, 0..3))
            .prop_map(|(frame, boxes)| DetectionRecord { frame, boxes })
    }

    proptest! {
        #[test]
        fn wire_round_trip(records in proptest::collection::vec(arb_record(), 0..4)) {
            let text = serialize_records(&records);
            let parsed = parse_detection_file(text.as_bytes()).unwrap();
            prop_assert_eq!(&parsed, &records);
            prop_assert_eq!(serialize_records(&parsed), text);
        }

        #[test]
        fn crop_then_restore_is_exact(
            x in -20.0f64..600.0, y in -20.0f64..400.0,
            lu in 0.0f64..1.0, lv in 0.0f64..1.0,
        ) {
            let bbox = BoundingBox::new(x, y, x + 60.0, y + 50.0, 1.0);
            if let Ok(rect) = crop_roi(&bbox, 640, 480) {
                let full = Pixel::new(rect.x_min + lu * rect.width(), rect.y_min + lv * rect.height());
                let local = rect.to_local(full);
                prop_assert_eq!(rect.to_full(local), full);
            }
        }
    }
}
