//! Pinhole camera model and depth rasters.
//!
//! Coordinates follow the usual computer-vision camera frame: X right,
//! Y down, Z forward. Pixels are real-valued `(u, v)` with `u` growing to
//! the right and `v` growing downward; they are rounded to the integer grid
//! only when a raster is indexed.
//!
//! ```text
//! project:    [u, v, 1]ᵀ = (1/z) · K · [x, y, z]ᵀ
//! unproject:  [x, y, z]ᵀ = d · K⁻¹ · [u, v, 1]ᵀ
//! ```
//!
//! Skew and lens distortion are assumed to be zero.

use std::fmt;
use std::io::{BufRead, Write};
use std::path::Path;

use nalgebra::{Matrix3, Point3, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CameraError {
    #[error("non-positive depth {0}")]
    NonPositiveDepth(f64),
    #[error("pixel ({u}, {v}) is outside the {width}x{height} image")]
    OutOfBounds {
        u: f64,
        v: f64,
        width: usize,
        height: usize,
    },
    #[error("invalid intrinsics: {0}")]
    InvalidIntrinsics(String),
    #[error("invalid depth frame: {0}")]
    InvalidDepthFrame(String),
    #[error("intrinsics file line {line}: {message}")]
    IntrinsicsFormat { line: usize, message: String },
    #[error("PFM: {0}")]
    Pfm(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// A real-valued image location.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Pixel {
    pub u: f64,
    pub v: f64,
}

impl Pixel {
    pub const fn new(u: f64, v: f64) -> Self {
        Self { u, v }
    }

    /// Nearest integer grid location (round half away from zero).
    pub fn grid(&self) -> (i64, i64) {
        (self.u.round() as i64, self.v.round() as i64)
    }

    pub fn is_finite(&self) -> bool {
        self.u.is_finite() && self.v.is_finite()
    }
}

impl fmt::Display for Pixel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {})", self.u, self.v)
    }
}

/// Which way the camera X axis points.
///
/// The geometry is always computed in the X-right frame; `Left` mirrors the
/// X coordinate of reported results for consumers that use an X-left frame.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum XAxis {
    #[default]
    Right,
    Left,
}

impl XAxis {
    pub fn apply(self, p: &Point3<f64>) -> Point3<f64> {
        match self {
            XAxis::Right => *p,
            XAxis::Left => Point3::new(-p.x, p.y, p.z),
        }
    }
}

/// Pinhole intrinsics together with the image rectangle `[0,width)×[0,height)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawIntrinsics")]
pub struct Intrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: usize,
    pub height: usize,
}

#[derive(Deserialize)]
struct RawIntrinsics {
    fx: f64,
    fy: f64,
    cx: f64,
    cy: f64,
    width: usize,
    height: usize,
}

impl TryFrom<RawIntrinsics> for Intrinsics {
    type Error = CameraError;

    fn try_from(r: RawIntrinsics) -> Result<Self, Self::Error> {
        Intrinsics::new(r.fx, r.fy, r.cx, r.cy, r.width, r.height)
    }
}

impl Intrinsics {
    pub fn new(
        fx: f64,
        fy: f64,
        cx: f64,
        cy: f64,
        width: usize,
        height: usize,
    ) -> Result<Self, CameraError> {
        if !(fx.is_finite() && fx > 0.0 && fy.is_finite() && fy > 0.0) {
            return Err(CameraError::InvalidIntrinsics(format!(
                "focal lengths must be positive (fx={fx}, fy={fy})"
            )));
        }
        if width == 0 || height == 0 {
            return Err(CameraError::InvalidIntrinsics(format!(
                "image must be at least 1x1 (got {width}x{height})"
            )));
        }
        if !(cx >= 0.0 && cx < width as f64 && cy >= 0.0 && cy < height as f64) {
            return Err(CameraError::InvalidIntrinsics(format!(
                "principal point ({cx}, {cy}) outside the {width}x{height} image"
            )));
        }
        Ok(Self {
            fx,
            fy,
            cx,
            cy,
            width,
            height,
        })
    }

    /// Centered principal point with equal focal lengths.
    pub fn simple(focal: f64, width: usize, height: usize) -> Result<Self, CameraError> {
        Self::new(
            focal,
            focal,
            width as f64 / 2.0,
            height as f64 / 2.0,
            width,
            height,
        )
    }

    pub fn matrix(&self) -> Matrix3<f64> {
        Matrix3::new(
            self.fx, 0.0, self.cx, //
            0.0, self.fy, self.cy, //
            0.0, 0.0, 1.0,
        )
    }

    pub fn inverse_matrix(&self) -> Matrix3<f64> {
        Matrix3::new(
            1.0 / self.fx,
            0.0,
            -self.cx / self.fx,
            0.0,
            1.0 / self.fy,
            -self.cy / self.fy,
            0.0,
            0.0,
            1.0,
        )
    }

    /// Projects a camera-frame point, returning the pixel and its depth `z`.
    ///
    /// The pixel may fall outside the image; callers filter.
    pub fn project(&self, p: &Point3<f64>) -> Result<(Pixel, f64), CameraError> {
        if !(p.z > 0.0) {
            return Err(CameraError::NonPositiveDepth(p.z));
        }
        let inv_z = 1.0 / p.z;
        let pixel = Pixel::new(
            self.fx * p.x * inv_z + self.cx,
            self.fy * p.y * inv_z + self.cy,
        );
        Ok((pixel, p.z))
    }

    /// Lifts a pixel with known depth back into the camera frame.
    pub fn unproject(&self, p: Pixel, depth: f64) -> Result<Point3<f64>, CameraError> {
        if !(depth > 0.0) || !depth.is_finite() {
            return Err(CameraError::NonPositiveDepth(depth));
        }
        Ok(Point3::from(self.ray(p) * depth))
    }

    /// Direction `K⁻¹·[u, v, 1]ᵀ` (unit z component, not normalized).
    pub fn ray(&self, p: Pixel) -> Vector3<f64> {
        Vector3::new((p.u - self.cx) / self.fx, (p.v - self.cy) / self.fy, 1.0)
    }

    pub fn contains_grid(&self, col: i64, row: i64) -> bool {
        col >= 0 && row >= 0 && (col as usize) < self.width && (row as usize) < self.height
    }

    /// Reads the key-value intrinsics format (`key = value`, `#` comments).
    ///
    /// Distortion coefficients (`k1`, `k2`, `k3`, `p1`, `p2`) are accepted
    /// and ignored with a warning.
    pub fn parse_kv(text: &str) -> Result<Self, CameraError> {
        let mut fx = None;
        let mut fy = None;
        let mut cx = None;
        let mut cy = None;
        let mut width = None;
        let mut height = None;
        for (idx, raw) in text.lines().enumerate() {
            let line_no = idx + 1;
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(CameraError::IntrinsicsFormat {
                    line: line_no,
                    message: format!("expected `key = value`, got `{line}`"),
                });
            };
            let key = key.trim();
            let value = value.trim();
            let number = |v: &str| -> Result<f64, CameraError> {
                v.parse::<f64>().map_err(|_| CameraError::IntrinsicsFormat {
                    line: line_no,
                    message: format!("`{key}` is not a number: `{v}`"),
                })
            };
            match key {
                "fx" => fx = Some(number(value)?),
                "fy" => fy = Some(number(value)?),
                "cx" => cx = Some(number(value)?),
                "cy" => cy = Some(number(value)?),
                "width" | "height" => {
                    let n = number(value)?;
                    if n < 1.0 || n.fract() != 0.0 {
                        return Err(CameraError::IntrinsicsFormat {
                            line: line_no,
                            message: format!("`{key}` must be a positive integer, got `{value}`"),
                        });
                    }
                    if key == "width" {
                        width = Some(n as usize);
                    } else {
                        height = Some(n as usize);
                    }
                }
                "k1" | "k2" | "k3" | "p1" | "p2" => {
                    number(value)?;
                    log::warn!("intrinsics: ignoring distortion coefficient `{key}`");
                }
                other => {
                    return Err(CameraError::IntrinsicsFormat {
                        line: line_no,
                        message: format!("unknown key `{other}`"),
                    })
                }
            }
        }
        let missing = |name: &str| CameraError::IntrinsicsFormat {
            line: 0,
            message: format!("missing `{name}`"),
        };
        Self::new(
            fx.ok_or_else(|| missing("fx"))?,
            fy.ok_or_else(|| missing("fy"))?,
            cx.ok_or_else(|| missing("cx"))?,
            cy.ok_or_else(|| missing("cy"))?,
            width.ok_or_else(|| missing("width"))?,
            height.ok_or_else(|| missing("height"))?,
        )
    }

    pub fn to_kv(&self) -> String {
        format!(
            "fx = {}\nfy = {}\ncx = {}\ncy = {}\nwidth = {}\nheight = {}\n",
            self.fx, self.fy, self.cx, self.cy, self.width, self.height
        )
    }

    pub fn read(path: &Path) -> Result<Self, CameraError> {
        Self::parse_kv(&std::fs::read_to_string(path)?)
    }
}

/// Registered depth raster in meters, row-major.
///
/// Samples that are non-finite or `<= 0` mean "no depth".
#[derive(Debug, Clone, PartialEq)]
pub struct DepthFrame {
    width: usize,
    height: usize,
    data: Vec<f32>,
}

impl DepthFrame {
    pub fn new(width: usize, height: usize, data: Vec<f32>) -> Result<Self, CameraError> {
        if width == 0 || height == 0 {
            return Err(CameraError::InvalidDepthFrame(format!(
                "empty raster {width}x{height}"
            )));
        }
        if data.len() != width * height {
            return Err(CameraError::InvalidDepthFrame(format!(
                "expected {} samples for {width}x{height}, got {}",
                width * height,
                data.len()
            )));
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    pub fn filled(width: usize, height: usize, value: f32) -> Self {
        Self {
            width,
            height,
            data: vec![value; width * height],
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f32] {
        &mut self.data
    }

    pub fn is_valid_sample(value: f32) -> bool {
        value.is_finite() && value > 0.0
    }

    /// Raw sample at an integer grid location, if inside the raster.
    pub fn sample(&self, col: i64, row: i64) -> Option<f32> {
        if col < 0 || row < 0 || col as usize >= self.width || row as usize >= self.height {
            return None;
        }
        Some(self.data[row as usize * self.width + col as usize])
    }

    pub fn set(&mut self, col: usize, row: usize, value: f32) {
        self.data[row * self.width + col] = value;
    }

    /// Depth at the rounded pixel; `Ok(None)` when the sample is invalid.
    pub fn depth_at(&self, p: Pixel) -> Result<Option<f64>, CameraError> {
        let (col, row) = p.grid();
        match self.sample(col, row) {
            None => Err(CameraError::OutOfBounds {
                u: p.u,
                v: p.v,
                width: self.width,
                height: self.height,
            }),
            Some(d) if Self::is_valid_sample(d) => Ok(Some(d as f64)),
            Some(_) => Ok(None),
        }
    }

    pub fn valid_count(&self) -> usize {
        self.data
            .iter()
            .filter(|d| Self::is_valid_sample(**d))
            .count()
    }

    /// Writes a little-endian greyscale PFM (scale `-1.0`).
    ///
    /// PFM stores rows bottom-to-top.
    pub fn write_pfm<W: Write>(&self, mut w: W) -> Result<(), CameraError> {
        write!(w, "Pf\n{} {}\n-1.0\n", self.width, self.height)?;
        let mut buf = Vec::with_capacity(self.data.len() * 4);
        for row in (0..self.height).rev() {
            for v in &self.data[row * self.width..(row + 1) * self.width] {
                buf.extend_from_slice(&v.to_le_bytes());
            }
        }
        w.write_all(&buf)?;
        Ok(())
    }

    pub fn read_pfm<R: BufRead>(mut r: R) -> Result<Self, CameraError> {
        let mut header = Vec::new();
        // magic, dimensions, scale: three whitespace-terminated tokens
        let mut tokens: Vec<String> = Vec::new();
        while tokens.len() < 4 {
            header.clear();
            let n = r.read_until(b'\n', &mut header)?;
            if n == 0 {
                return Err(CameraError::Pfm("truncated header".into()));
            }
            let line = String::from_utf8_lossy(&header);
            tokens.extend(line.split_whitespace().map(str::to_owned));
        }
        if tokens[0] != "Pf" {
            return Err(CameraError::Pfm(format!(
                "expected greyscale `Pf` magic, got `{}`",
                tokens[0]
            )));
        }
        let parse_dim = |s: &str| {
            s.parse::<usize>()
                .map_err(|_| CameraError::Pfm(format!("bad dimension `{s}`")))
        };
        let width = parse_dim(&tokens[1])?;
        let height = parse_dim(&tokens[2])?;
        let scale: f64 = tokens[3]
            .parse()
            .map_err(|_| CameraError::Pfm(format!("bad scale `{}`", tokens[3])))?;
        if scale == 0.0 || !scale.is_finite() {
            return Err(CameraError::Pfm(format!("bad scale `{scale}`")));
        }
        let little_endian = scale < 0.0;
        let mut bytes = vec![0u8; width * height * 4];
        r.read_exact(&mut bytes)
            .map_err(|_| CameraError::Pfm("truncated pixel data".into()))?;
        let mut data = vec![0f32; width * height];
        for (i, chunk) in bytes.chunks_exact(4).enumerate() {
            let raw = [chunk[0], chunk[1], chunk[2], chunk[3]];
            let value = if little_endian {
                f32::from_le_bytes(raw)
            } else {
                f32::from_be_bytes(raw)
            };
            let file_row = i / width;
            let col = i % width;
            data[(height - 1 - file_row) * width + col] = value;
        }
        Self::new(width, height, data)
    }

    pub fn save_pfm(&self, path: &Path) -> Result<(), CameraError> {
        let file = std::fs::File::create(path)?;
        self.write_pfm(std::io::BufWriter::new(file))
    }

    pub fn load_pfm(path: &Path) -> Result<Self, CameraError> {
        let file = std::fs::File::open(path)?;
        Self::read_pfm(std::io::BufReader::new(file))
    }
}
