//! Error statistics of estimated poses against ground truth, grouped by
//! configuration.

use std::collections::HashMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::angles::fold_half_turn;
use crate::dataset::Manifest;
use crate::localizer::PoseRecord;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EvalError {
    #[error("no pose matches a manifest frame with ground truth")]
    Join,
}

/// Mean and sample (`n - 1`) standard deviation.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct MeanStd {
    pub mean: f64,
    pub std: f64,
}

impl MeanStd {
    /// `std` is 0 for fewer than two values; both are 0 for none.
    pub fn of(values: &[f64]) -> Self {
        let n = values.len();
        if n == 0 {
            return Self::default();
        }
        let mean = values.iter().sum::<f64>() / n as f64;
        let std = if n < 2 {
            0.0
        } else {
            (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
        };
        Self { mean, std }
    }

    fn cell(&self, digits: usize) -> String {
        format!("{:+.*} ± {:.*}", digits, self.mean, digits, self.std)
    }
}

/// Signed angular error in degrees; both angles and their difference are
/// taken modulo 180°, into `[-90°, 90°)`.
pub fn theta_error_deg(estimate: f64, truth: f64) -> f64 {
    fold_half_turn(fold_half_turn(estimate) - fold_half_turn(truth)).to_degrees()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRow {
    pub config: String,
    pub x: MeanStd,
    pub y: MeanStd,
    pub z: MeanStd,
    pub theta_deg: MeanStd,
    /// Frames with a matched pose over frames with ground truth.
    pub detection_rate: f64,
    pub frames: usize,
    pub matched: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub rows: Vec<EvalRow>,
}

#[derive(Default)]
struct Acc {
    frames: usize,
    x: Vec<f64>,
    y: Vec<f64>,
    z: Vec<f64>,
    theta: Vec<f64>,
}

/// Joins poses to manifest truth by frame id. When a frame has several
/// poses the one closest to the truth position is scored.
pub fn evaluate(poses: &[PoseRecord], manifest: &Manifest) -> Result<EvalReport, EvalError> {
    let mut by_frame: HashMap<&str, Vec<&PoseRecord>> = HashMap::new();
    for p in poses {
        by_frame.entry(p.frame.as_str()).or_default().push(p);
    }
    let mut order: Vec<&str> = Vec::new();
    let mut acc: HashMap<&str, Acc> = HashMap::new();
    let mut matched_total = 0usize;
    for entry in &manifest.frames {
        let Some(truth) = &entry.truth else {
            continue;
        };
        let a = acc.entry(entry.config.as_str()).or_insert_with(|| {
            order.push(entry.config.as_str());
            Acc::default()
        });
        a.frames += 1;
        let Some(candidates) = by_frame.get(entry.frame.as_str()) else {
            continue;
        };
        let dist = |p: &PoseRecord| {
            (0..3)
                .map(|i| (p.position[i] - truth.position[i]).powi(2))
                .sum::<f64>()
        };
        let best = candidates
            .iter()
            .min_by(|a, b| dist(a).total_cmp(&dist(b)))
            .expect("non-empty candidate list");
        a.x.push(best.position[0] - truth.position[0]);
        a.y.push(best.position[1] - truth.position[1]);
        a.z.push(best.position[2] - truth.position[2]);
        a.theta
            .push(theta_error_deg(best.theta_rad, truth.theta_rad));
        matched_total += 1;
    }
    if matched_total == 0 {
        return Err(EvalError::Join);
    }
    let rows = order
        .into_iter()
        .map(|config| {
            let a = &acc[config];
            EvalRow {
                config: config.to_owned(),
                x: MeanStd::of(&a.x),
                y: MeanStd::of(&a.y),
                z: MeanStd::of(&a.z),
                theta_deg: MeanStd::of(&a.theta),
                detection_rate: a.x.len() as f64 / a.frames as f64,
                frames: a.frames,
                matched: a.x.len(),
            }
        })
        .collect();
    Ok(EvalReport { rows })
}

impl EvalReport {
    /// Plain-text table: one row per configuration, cells as `μ ± σ`.
    pub fn to_table(&self) -> String {
        let header = [
            "Config",
            "X error (m)",
            "Y error (m)",
            "Z error (m)",
            "θ error (deg)",
            "Det. rate",
            "Frames",
        ];
        let body: Vec<[String; 7]> = self
            .rows
            .iter()
            .map(|r| {
                [
                    r.config.clone(),
                    r.x.cell(4),
                    r.y.cell(4),
                    r.z.cell(4),
                    r.theta_deg.cell(2),
                    format!("{:.2}", r.detection_rate),
                    format!("{}/{}", r.matched, r.frames),
                ]
            })
            .collect();
        let mut widths = header.map(|h| h.chars().count());
        for row in &body {
            for (w, cell) in widths.iter_mut().zip(row) {
                *w = (*w).max(cell.chars().count());
            }
        }
        let line = |cells: &[String]| {
            let mut s = String::new();
            for (i, (cell, w)) in cells.iter().zip(widths).enumerate() {
                if i > 0 {
                    s.push_str(" | ");
                }
                let pad = w - cell.chars().count();
                if i == 0 {
                    let _ = write!(s, "{cell}{}", " ".repeat(pad));
                } else {
                    let _ = write!(s, "{}{cell}", " ".repeat(pad));
                }
            }
            s.trim_end().to_owned() + "\n"
        };
        let mut out = line(&header.map(String::from));
        let rule: Vec<String> = widths.iter().map(|w| "-".repeat(*w)).collect();
        out.push_str(&rule.join("-+-"));
        out.push('\n');
        for row in &body {
            out.push_str(&line(row));
        }
        out
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }
}
