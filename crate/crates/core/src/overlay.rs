//! Annotated frame images: detection box, inlier and outlier segments, and
//! one arrow per pose.

use std::path::Path;

use image::{Rgb, RgbImage};
use nalgebra::Point3;

use crate::camera::{DepthFrame, Intrinsics};
use crate::detection::FrameBundle;
use crate::localizer::{ExtrinsicsConfig, FrameLocalization, PoseRecord};
use crate::segments::{bresenham, rasterize, SegmentSet};

pub const BOX_COLOR: Rgb<u8> = Rgb([0, 255, 0]);
pub const INLIER_COLOR: Rgb<u8> = Rgb([255, 0, 0]);
pub const OUTLIER_COLOR: Rgb<u8> = Rgb([0, 0, 255]);
pub const ARROW_COLOR: Rgb<u8> = Rgb([160, 32, 240]);

/// Length of the pose arrow on the ground, meters.
const ARROW_LENGTH_M: f64 = 0.4;

/// Depth as grayscale, near = bright; invalid pixels are black.
pub fn depth_to_gray(depth: &DepthFrame) -> RgbImage {
    let valid = depth
        .data()
        .iter()
        .copied()
        .filter(|d| DepthFrame::is_valid_sample(*d));
    let (lo, hi) = valid.fold((f32::INFINITY, 0.0f32), |(lo, hi), d| {
        (lo.min(d), hi.max(d))
    });
    let span = (hi - lo).max(1e-6);
    let mut img = RgbImage::new(depth.width() as u32, depth.height() as u32);
    for (i, d) in depth.data().iter().enumerate() {
        let g = if DepthFrame::is_valid_sample(*d) {
            (235.0 - 200.0 * (d - lo) / span).round() as u8
        } else {
            0
        };
        let (x, y) = ((i % depth.width()) as u32, (i / depth.width()) as u32);
        img.put_pixel(x, y, Rgb([g, g, g]));
    }
    img
}

fn put(img: &mut RgbImage, x: i64, y: i64, c: Rgb<u8>) {
    if x >= 0 && y >= 0 && (x as u32) < img.width() && (y as u32) < img.height() {
        img.put_pixel(x as u32, y as u32, c);
    }
}

fn line(img: &mut RgbImage, a: (i64, i64), b: (i64, i64), c: Rgb<u8>) {
    for (x, y) in bresenham(a, b) {
        put(img, x, y, c);
    }
}

fn draw_segments(img: &mut RgbImage, set: &SegmentSet, c: Rgb<u8>) {
    for seg in &set.segments {
        for (x, y) in rasterize(seg, set.offset, img.width() as usize, img.height() as usize) {
            put(img, x, y, c);
        }
    }
}

/// Draws one pose arrow: a square at the projected position and a shaft
/// pointing into the staircase. Returns the anchor pixel, if in front of
/// the camera.
pub fn draw_pose(
    img: &mut RgbImage,
    k: &Intrinsics,
    cfg: &ExtrinsicsConfig,
    position: &Point3<f64>,
    theta: f64,
) -> Option<(i64, i64)> {
    let (anchor, _) = k.project(position).ok()?;
    let a = anchor.grid();
    for dy in -2..=2 {
        for dx in -2..=2 {
            put(img, a.0 + dx, a.1 + dy, ARROW_COLOR);
        }
    }
    let (e1, e2) = cfg.ground_basis();
    let into = e1 * -theta.sin() + e2 * theta.cos();
    if let Ok((tip, _)) = k.project(&(position + into * ARROW_LENGTH_M)) {
        let t = tip.grid();
        for off in [(0, 0), (1, 0), (0, 1)] {
            line(
                img,
                (a.0 + off.0, a.1 + off.1),
                (t.0 + off.0, t.1 + off.1),
                ARROW_COLOR,
            );
        }
        let (du, dv) = ((t.0 - a.0) as f64, (t.1 - a.1) as f64);
        let len = du.hypot(dv);
        if len > 1.0 {
            let (ux, uy) = (du / len, dv / len);
            for side in [-1.0, 1.0] {
                let (c, s) = (150f64.to_radians().cos(), side * 150f64.to_radians().sin());
                let hx = ux * c - uy * s;
                let hy = ux * s + uy * c;
                let end = (
                    t.0 + (8.0 * hx).round() as i64,
                    t.1 + (8.0 * hy).round() as i64,
                );
                line(img, t, end, ARROW_COLOR);
            }
        }
    }
    Some(a)
}

/// Renders the overlay for one localized frame. The background is the
/// color image when the bundle has one, the depth otherwise.
pub fn render_overlay(
    bundle: &FrameBundle,
    result: &FrameLocalization,
    poses: &[PoseRecord],
    cfg: &ExtrinsicsConfig,
) -> RgbImage {
    let mut img = bundle
        .color
        .as_deref()
        .and_then(|p| image::open(p).ok())
        .map(|i| i.to_rgb8())
        .filter(|i| {
            i.width() as usize == bundle.intrinsics.width
                && i.height() as usize == bundle.intrinsics.height
        })
        .unwrap_or_else(|| depth_to_gray(&bundle.depth));
    for b in &bundle.detections.boxes {
        let x0 = b.bbox.x_min.max(0.0).round() as i64;
        let y0 = b.bbox.y_min.max(0.0).round() as i64;
        let x1 = (b.bbox.x_max.round() as i64).min(img.width() as i64 - 1);
        let y1 = (b.bbox.y_max.round() as i64).min(img.height() as i64 - 1);
        line(&mut img, (x0, y0), (x1, y0), BOX_COLOR);
        line(&mut img, (x1, y0), (x1, y1), BOX_COLOR);
        line(&mut img, (x1, y1), (x0, y1), BOX_COLOR);
        line(&mut img, (x0, y1), (x0, y0), BOX_COLOR);
    }
    for b in &result.boxes {
        draw_segments(&mut img, &b.outliers, OUTLIER_COLOR);
        draw_segments(&mut img, &b.inliers, INLIER_COLOR);
    }
    for p in poses {
        let position = Point3::from(p.position);
        draw_pose(&mut img, &bundle.intrinsics, cfg, &position, p.theta_rad);
    }
    img
}

pub fn save_png(img: &RgbImage, path: &Path) -> Result<(), image::ImageError> {
    img.save_with_format(path, image::ImageFormat::Png)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::camera::Pixel;
    use crate::detection::{BoundingBox, BoxDetection, DetectionRecord};
    use crate::localizer::{localize, LocalizeParams};
    use crate::segments::LineSegmentTP;
    use nalgebra::Vector2;

    fn bundle(segments: Vec<LineSegmentTP>) -> FrameBundle {
        let k = Intrinsics::new(200.0, 200.0, 100.0, 80.0, 200, 160).unwrap();
        let bbox = BoundingBox::new(20.0, 20.0, 180.0, 140.0, 1.0);
        FrameBundle {
            color: None,
            depth: DepthFrame::filled(200, 160, 2.0),
            intrinsics: k,
            detections: DetectionRecord {
                frame: "f".into(),
                boxes: vec![BoxDetection {
                    bbox,
                    segments: SegmentSet::new(segments, Vector2::new(20.0, 20.0)),
                }],
            },
        }
    }

    #[test]
    fn arrow_anchor_at_projected_position() {
        let b = bundle(Vec::new());
        let mut img = depth_to_gray(&b.depth);
        let p = Point3::new(0.0, 0.0, 2.0);
        let a = draw_pose(
            &mut img,
            &b.intrinsics,
            &ExtrinsicsConfig::default(),
            &p,
            0.0,
        )
        .unwrap();
        let (proj, _) = b.intrinsics.project(&p).unwrap();
        assert!((a.0 as f64 - proj.u).abs() <= 2.0 && (a.1 as f64 - proj.v).abs() <= 2.0);
        assert_eq!(*img.get_pixel(proj.u as u32, proj.v as u32), ARROW_COLOR);
    }

    #[test]
    fn no_pose_draws_only_the_box() {
        let b = bundle(Vec::new());
        let r = localize(
            &b,
            &ExtrinsicsConfig::default(),
            &LocalizeParams::default(),
            0,
        )
        .unwrap();
        let img = render_overlay(&b, &r, &[], &ExtrinsicsConfig::default());
        assert_eq!(*img.get_pixel(20, 20), BOX_COLOR);
        assert_eq!(*img.get_pixel(100, 140), BOX_COLOR);
        assert!(!img
            .pixels()
            .any(|p| *p == ARROW_COLOR || *p == INLIER_COLOR));
    }

    #[test]
    fn inliers_and_outliers_use_different_channels() {
        // crop-local: three horizontal segments and one steep outlier
        let segs = vec![
            LineSegmentTP::from_endpoints(Pixel::new(10.0, 10.0), Pixel::new(120.0, 10.0)),
            LineSegmentTP::from_endpoints(Pixel::new(10.0, 40.0), Pixel::new(120.0, 40.0)),
            LineSegmentTP::from_endpoints(Pixel::new(10.0, 70.0), Pixel::new(120.0, 70.0)),
            LineSegmentTP::from_endpoints(Pixel::new(140.0, 5.0), Pixel::new(150.0, 100.0)),
        ];
        let b = bundle(segs);
        let r = localize(
            &b,
            &ExtrinsicsConfig::default(),
            &LocalizeParams::default(),
            0,
        )
        .unwrap();
        let img = render_overlay(&b, &r, &[], &ExtrinsicsConfig::default());
        // full-frame (80, 30) lies on the first inlier, (165, 72) on the outlier
        assert_eq!(*img.get_pixel(80, 30), INLIER_COLOR);
        let on_outlier = rasterize(
            &r.boxes[0].outliers.segments[0],
            r.boxes[0].outliers.offset,
            200,
            160,
        );
        let (x, y) = on_outlier[on_outlier.len() / 2];
        let px = img.get_pixel(x as u32, y as u32);
        assert_eq!(*px, OUTLIER_COLOR);
        assert_eq!(px[0], 0);
        assert_eq!(INLIER_COLOR[2], 0);
    }
}
