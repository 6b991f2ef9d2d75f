//! On-disk dataset layout shared by synthetic and captured data.
//!
//! ```text
//! <root>/manifest.json
//! <root>/<bundle>/intrinsics.txt   key = value pinhole parameters
//! <root>/<bundle>/depth.pfm        depth in meters, 0 = invalid
//! <root>/<bundle>/detections.json  one stairloc/1 record
//! <root>/<bundle>/truth.json       optional ground truth
//! <root>/<bundle>/color.png        optional
//! ```

use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::camera::{CameraError, DepthFrame, Intrinsics};
use crate::detection::{
    parse_detection_file, serialize_record, DetectionError, DetectionRecord, FrameBundle, SCHEMA,
};
use crate::localizer::{Direction, StairPose};

pub const MANIFEST: &str = "manifest.json";
pub const INTRINSICS: &str = "intrinsics.txt";
pub const DEPTH: &str = "depth.pfm";
pub const DETECTIONS: &str = "detections.json";
pub const TRUTH: &str = "truth.json";
pub const COLOR: &str = "color.png";

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{path}: {message}")]
    Format { path: PathBuf, message: String },
}

impl DatasetError {
    fn format(path: &Path, message: impl ToString) -> Self {
        DatasetError::Format {
            path: path.to_owned(),
            message: message.to_string(),
        }
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> DatasetError + '_ {
    move |source| DatasetError::Io {
        path: path.to_owned(),
        source,
    }
}

/// Ground truth for one frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruthRecord {
    pub position: [f64; 3],
    pub theta_rad: f64,
    pub height_m: f64,
    pub direction: Direction,
}

impl From<&StairPose> for TruthRecord {
    fn from(p: &StairPose) -> Self {
        Self {
            position: [p.position.x, p.position.y, p.position.z],
            theta_rad: p.theta,
            height_m: p.height,
            direction: p.direction,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub frame: String,
    pub config: String,
    /// Bundle directory, relative to the manifest.
    pub bundle: String,
    /// Seconds on a monotonic clock.
    pub timestamp: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub truth: Option<TruthRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub schema: String,
    pub frames: Vec<ManifestEntry>,
}

impl Default for Manifest {
    fn default() -> Self {
        Self {
            schema: SCHEMA.to_owned(),
            frames: Vec::new(),
        }
    }
}

impl Manifest {
    pub fn load(path: &Path) -> Result<Self, DatasetError> {
        let text = fs::read_to_string(path).map_err(io_err(path))?;
        let m: Manifest = serde_json::from_str(&text).map_err(|e| DatasetError::format(path, e))?;
        if m.schema != SCHEMA {
            return Err(DatasetError::format(
                path,
                format!("unsupported schema `{}`", m.schema),
            ));
        }
        Ok(m)
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("manifest serializes");
        s.push('\n');
        s
    }

    pub fn save(&self, path: &Path) -> Result<(), DatasetError> {
        fs::write(path, self.to_json()).map_err(io_err(path))
    }
}

/// Writes one bundle directory.
pub fn write_bundle(
    dir: &Path,
    intrinsics: &Intrinsics,
    depth: &DepthFrame,
    detections: &DetectionRecord,
    truth: Option<&TruthRecord>,
) -> Result<(), DatasetError> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let p = dir.join(INTRINSICS);
    fs::write(&p, intrinsics.to_kv()).map_err(io_err(&p))?;
    let p = dir.join(DEPTH);
    let file = fs::File::create(&p).map_err(io_err(&p))?;
    let mut w = BufWriter::new(file);
    depth
        .write_pfm(&mut w)
        .map_err(|e| DatasetError::format(&p, e))?;
    w.flush().map_err(io_err(&p))?;
    let p = dir.join(DETECTIONS);
    fs::write(&p, serialize_record(detections) + "\n").map_err(io_err(&p))?;
    if let Some(t) = truth {
        let p = dir.join(TRUTH);
        let text = serde_json::to_string(t).expect("truth serializes") + "\n";
        fs::write(&p, text).map_err(io_err(&p))?;
    }
    Ok(())
}

fn camera_err(path: &Path, e: CameraError) -> DatasetError {
    match e {
        CameraError::Io(source) => DatasetError::Io {
            path: path.to_owned(),
            source,
        },
        other => DatasetError::format(path, other),
    }
}

/// Reads and validates one bundle directory. With `frame` given, the
/// detection record must carry that frame id.
pub fn load_bundle(dir: &Path, frame: Option<&str>) -> Result<FrameBundle, DatasetError> {
    let p = dir.join(INTRINSICS);
    let intrinsics = Intrinsics::read(&p).map_err(|e| camera_err(&p, e))?;
    let p = dir.join(DEPTH);
    let depth = DepthFrame::load_pfm(&p).map_err(|e| camera_err(&p, e))?;
    let p = dir.join(DETECTIONS);
    let bytes = fs::read(&p).map_err(io_err(&p))?;
    let records = parse_detection_file(&bytes).map_err(|e| match e {
        DetectionError::Io(source) => DatasetError::Io {
            path: p.clone(),
            source,
        },
        other => DatasetError::format(&p, other),
    })?;
    let fallback = || {
        frame
            .map(str::to_owned)
            .or_else(|| dir.file_name().map(|n| n.to_string_lossy().into_owned()))
            .unwrap_or_default()
    };
    let detections = match records.len() {
        0 => DetectionRecord::empty(fallback()),
        1 => records.into_iter().next().expect("one record"),
        n => {
            return Err(DatasetError::format(
                &p,
                format!("expected one record, found {n}"),
            ))
        }
    };
    if let Some(frame) = frame.filter(|f| *f != detections.frame) {
        return Err(DatasetError::format(
            &p,
            format!(
                "record is for frame `{}`, manifest says `{frame}`",
                detections.frame
            ),
        ));
    }
    let color = Some(dir.join(COLOR)).filter(|c| c.is_file());
    let bundle = FrameBundle {
        color,
        depth,
        intrinsics,
        detections,
    };
    bundle
        .validate()
        .map_err(|m| DatasetError::format(dir, m))?;
    Ok(bundle)
}
