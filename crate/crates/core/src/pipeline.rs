//! The four pipeline commands behind the `stairloc` binary, usable as a
//! library.
//!
//! Output streams are newline-delimited JSON. Every command is
//! deterministic for a fixed seed: frames are processed in parallel but
//! results are collected and written in manifest order.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use thiserror::Error;

use crate::camera::{Intrinsics, XAxis};
use crate::dataset::{
    load_bundle, write_bundle, DatasetError, Manifest, ManifestEntry, TruthRecord, MANIFEST,
};
use crate::detection::SCHEMA;
use crate::eval::{evaluate, EvalError, EvalReport};
use crate::localizer::{
    derive_seed, localize, Diagnostic, ExtrinsicsConfig, FrameLocalization, LocalizeError,
    LocalizeParams, PoseRecord,
};
use crate::overlay::{render_overlay, save_png};
use crate::registry::{NodeRecord, Registry, RegistryConfig, StairCandidate, SubmitEvent};
use crate::synth::{build_scene, corrupt, detection_record, CorruptionSpec, StaircaseSpec};

pub const POSES: &str = "poses.jsonl";
pub const NODES: &str = "nodes.jsonl";
pub const DIAGNOSTICS: &str = "diagnostics.jsonl";
pub const REPORT_TXT: &str = "report.txt";
pub const REPORT_JSON: &str = "report.json";

/// Synthetic frames are stamped this far apart, seconds.
pub const FRAME_PERIOD_S: f64 = 0.1;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("config: {0}")]
    Config(String),
    #[error("spec: {0}")]
    Spec(String),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error(transparent)]
    Join(#[from] EvalError),
    #[error("invariant violated: {0}")]
    Invariant(String),
}

impl PipelineError {
    /// 1 usage or configuration, 2 unreadable dataset, 3 internal
    /// invariant violation.
    pub fn exit_code(&self) -> i32 {
        match self {
            PipelineError::Config(_) | PipelineError::Spec(_) => 1,
            PipelineError::Dataset(_) | PipelineError::Io { .. } | PipelineError::Join(_) => 2,
            PipelineError::Invariant(_) => 3,
        }
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> PipelineError + '_ {
    move |source| PipelineError::Io {
        path: path.to_owned(),
        source,
    }
}

/// Parses a config file: a JSON object, or `section.key = value` lines
/// where each value is JSON or a bare string. `#` starts a comment.
///
/// ```text
/// seed = 7
/// extrinsics.epsilon = 0.2
/// localize.depth_sampling = pixel
/// localize.consensus.tol = 0.04
/// ```
pub fn parse_config_text(text: &str) -> Result<Value, PipelineError> {
    if text.trim_start().starts_with('{') {
        return serde_json::from_str(text).map_err(|e| PipelineError::Config(e.to_string()));
    }
    let mut root = Map::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let bad = |m: &str| PipelineError::Config(format!("line {}: {m}", i + 1));
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| bad("expected `key = value`"))?;
        let value = value.trim();
        let value = serde_json::from_str(value).unwrap_or_else(|_| Value::String(value.to_owned()));
        let path: Vec<&str> = key.trim().split('.').map(str::trim).collect();
        if path.iter().any(|p| p.is_empty()) {
            return Err(bad("empty key segment"));
        }
        let (last, parents) = path.split_last().expect("non-empty path");
        let mut node = &mut root;
        for p in parents {
            let slot = node
                .entry(p.to_string())
                .or_insert_with(|| Value::Object(Map::new()));
            node = slot
                .as_object_mut()
                .ok_or_else(|| bad(&format!("`{p}` is already a value")))?;
        }
        node.insert(last.to_string(), value);
    }
    Ok(Value::Object(root))
}

fn from_value<T: DeserializeOwned>(v: Value) -> Result<T, PipelineError> {
    serde_json::from_value(v).map_err(|e| PipelineError::Config(e.to_string()))
}

fn read_text(path: &Path) -> Result<String, PipelineError> {
    fs::read_to_string(path).map_err(|e| PipelineError::Config(format!("{}: {e}", path.display())))
}

/// Settings for `localize` and `overlay`.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub dataset: PathBuf,
    pub out: PathBuf,
    pub extrinsics: ExtrinsicsConfig,
    pub localize: LocalizeParams,
    /// Poses are reported in the camera frame, so when `registry.gravity`
    /// is not given it follows `extrinsics.gravity`.
    pub registry: RegistryConfig,
    pub seed: u64,
}

impl RunConfig {
    pub fn from_text(text: &str) -> Result<Self, PipelineError> {
        let mut v = parse_config_text(text)?;
        let gravity = v.pointer("/extrinsics/gravity").cloned();
        if let (Some(g), Some(obj)) = (gravity, v.as_object_mut()) {
            let reg = obj
                .entry("registry")
                .or_insert_with(|| Value::Object(Map::new()));
            if let Some(reg) = reg.as_object_mut() {
                reg.entry("gravity").or_insert(g);
            }
        }
        let cfg: RunConfig = from_value(v)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, PipelineError> {
        Self::from_text(&read_text(path)?)
    }

    pub fn validate(&self) -> Result<(), PipelineError> {
        self.extrinsics.validate().map_err(PipelineError::Config)?;
        self.localize
            .validate()
            .map_err(|e| PipelineError::Config(e.to_string()))?;
        self.registry
            .validate()
            .map_err(|e| PipelineError::Config(e.to_string()))
    }
}

/// One named scene configuration, e.g. `3m-front`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthConfig {
    pub name: String,
    pub staircase: StaircaseSpec,
    /// Overrides the command-wide corruption for this configuration.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub corruption: Option<CorruptionSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthPlan {
    #[serde(default = "default_intrinsics")]
    pub intrinsics: Intrinsics,
    pub configs: Vec<SynthConfig>,
}

/// 640×480 with a 600 px focal length.
pub fn default_intrinsics() -> Intrinsics {
    Intrinsics::new(600.0, 600.0, 320.0, 240.0, 640, 480).expect("valid default intrinsics")
}

impl Default for SynthPlan {
    fn default() -> Self {
        Self::distance_grid()
    }
}

impl SynthPlan {
    /// The standard staircase at 1, 3 and 5 m, straight ahead and 1 m to
    /// either side: `1m-front`, `1m-left`, `1m-right`, `3m-front`, ...
    pub fn distance_grid() -> Self {
        let mut configs = Vec::new();
        for d in [1.0, 3.0, 5.0] {
            for (where_, lateral) in [("front", 0.0), ("left", -1.0), ("right", 1.0)] {
                configs.push(SynthConfig {
                    name: format!("{d}m-{where_}"),
                    staircase: StaircaseSpec::standard(d, lateral),
                    corruption: None,
                });
            }
        }
        Self {
            intrinsics: default_intrinsics(),
            configs,
        }
    }

    pub fn load(path: &Path) -> Result<Self, PipelineError> {
        let text = read_text(path)?;
        let plan: SynthPlan = from_value(parse_config_text(&text)?)?;
        Ok(plan)
    }
}

pub fn load_corruption(path: &Path) -> Result<CorruptionSpec, PipelineError> {
    let text = read_text(path)?;
    let mut v = parse_config_text(&text)?;
    // fields left out fall back to `CorruptionSpec::none`, not to zeros
    let base = serde_json::to_value(CorruptionSpec::none()).expect("corruption serializes");
    if let (Some(obj), Value::Object(b)) = (v.as_object_mut(), base) {
        for (k, val) in b {
            obj.entry(k).or_insert(val);
        }
    }
    from_value(v)
}

/// Writes `count` frames per configuration of `plan` under `out` and
/// returns the manifest. Frame ids are `frame_0000`, `frame_0001`, ...
/// over configurations in plan order; each frame is corrupted with a seed
/// derived from `seed` and its id.
pub fn cmd_synth(
    plan: &SynthPlan,
    corruption: &CorruptionSpec,
    count: usize,
    seed: u64,
    out: &Path,
) -> Result<Manifest, PipelineError> {
    let spec_err =
        |name: &str, e: &dyn std::fmt::Display| PipelineError::Spec(format!("{name}: {e}"));
    corruption
        .validate()
        .map_err(|e| spec_err("corruption", &e))?;
    for c in &plan.configs {
        c.staircase.validate().map_err(|e| spec_err(&c.name, &e))?;
        if let Some(cc) = &c.corruption {
            cc.validate().map_err(|e| spec_err(&c.name, &e))?;
        }
    }
    fs::create_dir_all(out).map_err(io_err(out))?;
    let scenes = if count == 0 {
        Vec::new()
    } else {
        plan.configs
            .par_iter()
            .map(|c| build_scene(&c.staircase, &plan.intrinsics).map_err(|e| spec_err(&c.name, &e)))
            .collect::<Result<Vec<_>, _>>()?
    };
    let jobs: Vec<(usize, usize)> = (0..scenes.len())
        .flat_map(|c| (0..count).map(move |i| (c, i)))
        .collect();
    let frames = jobs
        .par_iter()
        .enumerate()
        .map(|(j, &(c, _))| {
            let cfg = &plan.configs[c];
            let frame = format!("frame_{j:04}");
            let spec = cfg.corruption.as_ref().unwrap_or(corruption);
            let scene = corrupt(&scenes[c], spec, derive_seed(seed, &frame, 0))
                .map_err(|e| spec_err(&cfg.name, &e))?;
            let truth = TruthRecord::from(&scene.truth);
            let rec = detection_record(&scene, &frame);
            write_bundle(
                &out.join(&frame),
                &plan.intrinsics,
                &scene.depth,
                &rec,
                Some(&truth),
            )?;
            Ok(ManifestEntry {
                frame: frame.clone(),
                config: cfg.name.clone(),
                bundle: frame,
                timestamp: j as f64 * FRAME_PERIOD_S,
                truth: Some(truth),
            })
        })
        .collect::<Result<Vec<_>, PipelineError>>()?;
    let manifest = Manifest {
        schema: SCHEMA.to_owned(),
        frames,
    };
    manifest.save(&out.join(MANIFEST))?;
    log::info!(
        "wrote {} frames to {}",
        manifest.frames.len(),
        out.display()
    );
    Ok(manifest)
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct LocalizeOutput {
    pub poses: Vec<PoseRecord>,
    pub nodes: Vec<NodeRecord>,
    pub diagnostics: Vec<Diagnostic>,
}

fn localize_err(e: LocalizeError) -> PipelineError {
    match e {
        LocalizeError::InvalidParams(m) => PipelineError::Config(m),
        other => PipelineError::Invariant(other.to_string()),
    }
}

fn check_pose(p: &PoseRecord) -> Result<(), PipelineError> {
    let q = p.quaternion;
    let norm = q.iter().map(|c| c * c).sum::<f64>().sqrt();
    let finite = p.position.iter().chain(&q).all(|c| c.is_finite()) && p.theta_rad.is_finite();
    if !finite || (norm - 1.0).abs() > 1e-9 {
        return Err(PipelineError::Invariant(format!(
            "frame {} box {}: non-finite pose or non-unit quaternion",
            p.frame, p.box_index
        )));
    }
    Ok(())
}

/// Localizes every frame of `manifest` (rooted at `root`), then feeds the
/// poses to the registry in frame order.
pub fn localize_manifest(
    root: &Path,
    manifest: &Manifest,
    run: &RunConfig,
) -> Result<LocalizeOutput, PipelineError> {
    run.validate()?;
    let mut registry =
        Registry::new(run.registry).map_err(|e| PipelineError::Config(e.to_string()))?;
    let results: Vec<FrameLocalization> = manifest
        .frames
        .par_iter()
        .map(|entry| {
            let bundle = load_bundle(&root.join(&entry.bundle), Some(&entry.frame))?;
            localize(&bundle, &run.extrinsics, &run.localize, run.seed).map_err(localize_err)
        })
        .collect::<Result<_, PipelineError>>()?;
    let mut out = LocalizeOutput::default();
    for (entry, r) in manifest.frames.iter().zip(&results) {
        for (i, pose) in r.poses() {
            let rec = PoseRecord::new(&r.frame, i, pose);
            check_pose(&rec)?;
            out.poses.push(rec);
            let event = registry.submit(StairCandidate {
                pose: pose.clone(),
                timestamp: entry.timestamp,
                frame: r.frame.clone(),
            });
            if let SubmitEvent::Published(node) = event {
                log::info!("node {} published at frame {}", node.id, r.frame);
                out.nodes.push(NodeRecord::from(&node));
            }
        }
        out.diagnostics.extend(r.diagnostics());
    }
    Ok(out)
}

fn write_jsonl<T: Serialize>(path: &Path, items: &[T]) -> Result<(), PipelineError> {
    let file = fs::File::create(path).map_err(io_err(path))?;
    let mut w = BufWriter::new(file);
    for it in items {
        let line =
            serde_json::to_string(it).map_err(|e| PipelineError::Invariant(e.to_string()))?;
        writeln!(w, "{line}").map_err(io_err(path))?;
    }
    w.flush().map_err(io_err(path))
}

/// Reads a newline-delimited JSON stream; blank lines are skipped.
pub fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>, PipelineError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| {
                PipelineError::Dataset(DatasetError::Format {
                    path: path.to_owned(),
                    message: format!("line {}: {e}", i + 1),
                })
            })
        })
        .collect()
}

/// Runs [`localize_manifest`] on `run.dataset` and writes the pose, node
/// and diagnostics streams into `run.out`.
pub fn cmd_localize(run: &RunConfig) -> Result<LocalizeOutput, PipelineError> {
    let manifest = Manifest::load(&run.dataset.join(MANIFEST))?;
    let out = localize_manifest(&run.dataset, &manifest, run)?;
    fs::create_dir_all(&run.out).map_err(io_err(&run.out))?;
    write_jsonl(&run.out.join(POSES), &out.poses)?;
    write_jsonl(&run.out.join(NODES), &out.nodes)?;
    write_jsonl(&run.out.join(DIAGNOSTICS), &out.diagnostics)?;
    log::info!(
        "{} frames: {} poses, {} nodes, {} diagnostics",
        manifest.frames.len(),
        out.poses.len(),
        out.nodes.len(),
        out.diagnostics.len()
    );
    Ok(out)
}

/// Scores a pose stream against a manifest. With `out`, also writes the
/// text table and the JSON report there.
pub fn cmd_eval(
    poses: &Path,
    manifest: &Path,
    out: Option<&Path>,
) -> Result<EvalReport, PipelineError> {
    let records: Vec<PoseRecord> = read_jsonl(poses)?;
    let manifest = Manifest::load(manifest)?;
    let report = evaluate(&records, &manifest)?;
    for row in &report.rows {
        let sane = [row.x.std, row.y.std, row.z.std, row.theta_deg.std]
            .iter()
            .all(|s| *s >= 0.0)
            && (0.0..=1.0).contains(&row.detection_rate)
            && row.theta_deg.mean.abs() <= 90.0;
        if !sane {
            return Err(PipelineError::Invariant(format!(
                "report row `{}` out of range",
                row.config
            )));
        }
    }
    if let Some(dir) = out {
        fs::create_dir_all(dir).map_err(io_err(dir))?;
        let p = dir.join(REPORT_TXT);
        fs::write(&p, report.to_table()).map_err(io_err(&p))?;
        let p = dir.join(REPORT_JSON);
        fs::write(&p, report.to_json()).map_err(io_err(&p))?;
    }
    Ok(report)
}

/// Localizes one bundle and writes its overlay PNG. Arrows come from
/// `poses` (records of this frame only) when given, else from the fresh
/// localization.
pub fn cmd_overlay(
    bundle_dir: &Path,
    poses: Option<&Path>,
    run: &RunConfig,
    out: &Path,
) -> Result<(), PipelineError> {
    run.validate()?;
    let bundle = load_bundle(bundle_dir, None)?;
    let result =
        localize(&bundle, &run.extrinsics, &run.localize, run.seed).map_err(localize_err)?;
    let mut records = match poses {
        Some(p) => read_jsonl::<PoseRecord>(p)?
            .into_iter()
            .filter(|r| r.frame == result.frame)
            .collect(),
        None => result.pose_records(),
    };
    // arrows are drawn in the camera frame
    if run.localize.x_axis == XAxis::Left {
        for r in &mut records {
            r.position[0] = -r.position[0];
            r.theta_rad = -r.theta_rad;
        }
    }
    let img = render_overlay(&bundle, &result, &records, &run.extrinsics);
    if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(io_err(dir))?;
    }
    save_png(&img, out).map_err(|e| PipelineError::Io {
        path: out.to_owned(),
        source: std::io::Error::other(e),
    })
}
