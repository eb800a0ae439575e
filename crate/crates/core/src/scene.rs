//! Reflective sample objects.
//!
//! A scene maps a sample-plane position and idler frequency to the
//! round-trip return magnitude (fraction of the idler fed back into the
//! crystal) and the round-trip phase.

use std::f64::consts::{FRAC_1_SQRT_2, PI};
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::biphoton::TransversePoint;
use crate::error::{Error, Result};
use crate::optics::SPEED_OF_LIGHT;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Response {
    pub magnitude: f64,
    pub phase: f64,
}

impl Response {
    pub const MIRROR: Self = Self { magnitude: 1.0, phase: 0.0 };
    pub const ABSORBED: Self = Self { magnitude: 0.0, phase: 0.0 };
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TapeSpec {
    pub refractive_index: f64,
    pub thickness: f64,
    /// Width of the central single-layer stripe.
    pub stripe_width: f64,
}

impl Default for TapeSpec {
    fn default() -> Self {
        Self { refractive_index: 1.5, thickness: 50e-6, stripe_width: 0.5e-3 }
    }
}

impl TapeSpec {
    /// Round-trip phase of one layer at frequency `f`.
    pub fn layer_phase(&self, f: f64) -> f64 {
        2.0 * 2.0 * PI * f * (self.refractive_index - 1.0) * self.thickness / SPEED_OF_LIGHT
    }

    /// Number of tape layers at sample-plane abscissa `x`.
    pub fn layers_at(&self, x: f64) -> u32 {
        let half = self.stripe_width / 2.0;
        if x < -half {
            0
        } else if x < half {
            1
        } else {
            2
        }
    }
}

/// Magnitude/phase raster centred on the optical axis; positions outside
/// the grid return no light.
#[derive(Debug, Clone, PartialEq)]
pub struct RasterScene {
    pub pixel_pitch: f64,
    pub magnitude: Vec<Vec<f64>>,
    pub phase: Vec<Vec<f64>>,
}

impl RasterScene {
    /// Parses the raster CSV format: a `pixel_pitch,<meters>` header line,
    /// then one line per row of alternating `magnitude,phase` values.
    /// Lines starting with `#` are ignored.
    pub fn from_csv_str(text: &str) -> Result<Self> {
        let mut lines = text
            .lines()
            .enumerate()
            .filter(|(_, l)| !l.trim().is_empty() && !l.trim_start().starts_with('#'));
        let (_, header) = lines.next().ok_or_else(|| Error::Format("empty raster file".into()))?;
        let mut parts = header.split(',').map(str::trim);
        let pixel_pitch = match (parts.next(), parts.next()) {
            (Some("pixel_pitch"), Some(v)) => v
                .parse::<f64>()
                .map_err(|e| Error::Format(format!("line 1: bad pixel_pitch: {e}")))?,
            _ => return Err(Error::Format("line 1: expected `pixel_pitch,<meters>`".into())),
        };
        if !(pixel_pitch > 0.0) {
            return Err(Error::Format("pixel_pitch must be positive".into()));
        }
        let mut magnitude = Vec::new();
        let mut phase = Vec::new();
        for (idx, line) in lines {
            let values = line
                .split(',')
                .map(|v| v.trim().parse::<f64>())
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(|e| Error::Format(format!("line {}: {e}", idx + 1)))?;
            if values.len() % 2 != 0 || values.is_empty() {
                return Err(Error::Format(format!(
                    "line {}: expected magnitude,phase pairs",
                    idx + 1
                )));
            }
            let (m, p): (Vec<f64>, Vec<f64>) = values.chunks(2).map(|c| (c[0], c[1])).unzip();
            if let Some(bad) = m.iter().find(|v| !(0.0..=1.0).contains(*v)) {
                return Err(Error::Format(format!("line {}: magnitude {bad} outside [0, 1]", idx + 1)));
            }
            if let Some(first) = magnitude.first() {
                let first: &Vec<f64> = first;
                if first.len() != m.len() {
                    return Err(Error::Format(format!("line {}: ragged row", idx + 1)));
                }
            }
            magnitude.push(m);
            phase.push(p);
        }
        if magnitude.is_empty() {
            return Err(Error::Format("raster has no rows".into()));
        }
        Ok(Self { pixel_pitch, magnitude, phase })
    }

    pub fn to_csv_string(&self) -> String {
        let mut out = format!("pixel_pitch,{:e}\n", self.pixel_pitch);
        for (m, p) in self.magnitude.iter().zip(&self.phase) {
            let row: Vec<String> = m.iter().zip(p).map(|(a, b)| format!("{a},{b}")).collect();
            out.push_str(&row.join(","));
            out.push('\n');
        }
        out
    }

    fn lookup(&self, pos: TransversePoint) -> Response {
        let rows = self.magnitude.len();
        let cols = self.magnitude[0].len();
        let c = (pos.x / self.pixel_pitch + cols as f64 / 2.0).floor();
        let r = (pos.y / self.pixel_pitch + rows as f64 / 2.0).floor();
        if c < 0.0 || r < 0.0 || c >= cols as f64 || r >= rows as f64 {
            return Response::ABSORBED;
        }
        let (r, c) = (r as usize, c as usize);
        Response { magnitude: self.magnitude[r][c], phase: self.phase[r][c] }
    }
}

type ResponseFn = dyn Fn(TransversePoint, f64) -> Response + Send + Sync;

#[derive(Clone)]
enum Shape {
    Mirror,
    Cross { line_width: f64 },
    Tape(TapeSpec),
    HalfAbsorber { left: f64, right: f64 },
    KnifeEdge { edge_x: f64 },
    Raster(Arc<RasterScene>),
    Scaled { inner: Box<SceneObject>, factor: f64 },
    Custom(Arc<ResponseFn>),
}

/// A sample object with a deterministic, thread-safe response.
#[derive(Clone)]
pub struct SceneObject {
    shape: Shape,
    pub label: String,
}

impl fmt::Debug for SceneObject {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SceneObject").field("label", &self.label).finish_non_exhaustive()
    }
}

impl SceneObject {
    pub fn response(&self, pos: TransversePoint, f: f64) -> Response {
        match &self.shape {
            Shape::Mirror => Response::MIRROR,
            Shape::Cross { line_width } => {
                let half = line_width / 2.0;
                let d1 = (pos.x - pos.y).abs() * FRAC_1_SQRT_2;
                let d2 = (pos.x + pos.y).abs() * FRAC_1_SQRT_2;
                if d1 <= half || d2 <= half {
                    Response::ABSORBED
                } else {
                    Response::MIRROR
                }
            }
            Shape::Tape(spec) => Response {
                magnitude: 1.0,
                phase: spec.layers_at(pos.x) as f64 * spec.layer_phase(f),
            },
            Shape::HalfAbsorber { left, right } => {
                let k = if pos.x < 0.0 { *left } else { *right };
                Response { magnitude: 10f64.powf(-k / 2.0), phase: 0.0 }
            }
            Shape::KnifeEdge { edge_x } => {
                if pos.x < *edge_x {
                    Response::MIRROR
                } else {
                    Response::ABSORBED
                }
            }
            Shape::Raster(r) => r.lookup(pos),
            Shape::Scaled { inner, factor } => {
                let r = inner.response(pos, f);
                Response { magnitude: r.magnitude * factor, phase: r.phase }
            }
            Shape::Custom(func) => func(pos, f),
        }
    }

    /// Same object with every magnitude multiplied by `factor` (clamped to
    /// `[0, 1]`).
    pub fn scaled(self, factor: f64) -> Self {
        let factor = factor.clamp(0.0, 1.0);
        let label = format!("{} x{factor}", self.label);
        Self { shape: Shape::Scaled { inner: Box::new(self), factor }, label }
    }

    pub fn custom(
        label: impl Into<String>,
        func: impl Fn(TransversePoint, f64) -> Response + Send + Sync + 'static,
    ) -> Self {
        Self { shape: Shape::Custom(Arc::new(func)), label: label.into() }
    }
}

pub fn plain_mirror() -> SceneObject {
    SceneObject { shape: Shape::Mirror, label: "plain_mirror".into() }
}

/// Diagonal (±45°) cross cut out of a metal plate.
pub fn cross_cutout(line_width: f64) -> SceneObject {
    SceneObject {
        shape: Shape::Cross { line_width },
        label: format!("cross_cutout(line_width={line_width:e})"),
    }
}

/// Bare metal left, one tape layer in the central stripe, two layers right.
pub fn tape_stripes(spec: TapeSpec) -> SceneObject {
    SceneObject { shape: Shape::Tape(spec), label: "tape_stripes".into() }
}

/// Left/right halves with round-trip extinctions `K` (magnitude `10^(−K/2)`).
pub fn half_absorber(extinction_left: f64, extinction_right: f64) -> SceneObject {
    SceneObject {
        shape: Shape::HalfAbsorber { left: extinction_left, right: extinction_right },
        label: format!("half_absorber(K_left={extinction_left}, K_right={extinction_right})"),
    }
}

/// Reflects for `x < edge_x`, absorbs beyond.
pub fn knife_edge(edge_x: f64) -> SceneObject {
    SceneObject { shape: Shape::KnifeEdge { edge_x }, label: format!("knife_edge(edge_x={edge_x:e})") }
}

pub fn raster(scene: RasterScene) -> SceneObject {
    SceneObject { shape: Shape::Raster(Arc::new(scene)), label: "raster".into() }
}

/// Scene selection as it appears in scenario files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SceneSpec {
    PlainMirror,
    CrossCutout {
        line_width: f64,
    },
    TapeStripes {
        #[serde(default)]
        tape: TapeSpec,
    },
    HalfAbsorber {
        extinction_left: f64,
        extinction_right: f64,
    },
    KnifeEdge {
        edge_x: f64,
    },
    /// Raster CSV file; relative paths resolve against the scenario file.
    Raster {
        path: String,
    },
}

impl SceneSpec {
    /// Builds the object; `load` resolves and reads raster files.
    pub fn build(&self, load: impl Fn(&str) -> Result<String>) -> Result<SceneObject> {
        Ok(match self {
            SceneSpec::PlainMirror => plain_mirror(),
            SceneSpec::CrossCutout { line_width } => {
                if !(*line_width > 0.0) {
                    return Err(Error::Format("cross_cutout.line_width must be positive".into()));
                }
                cross_cutout(*line_width)
            }
            SceneSpec::TapeStripes { tape } => {
                if tape.refractive_index < 1.0 || !(tape.thickness > 0.0) {
                    return Err(Error::Format(
                        "tape needs refractive_index >= 1 and positive thickness".into(),
                    ));
                }
                tape_stripes(*tape)
            }
            SceneSpec::HalfAbsorber { extinction_left, extinction_right } => {
                if *extinction_left < 0.0 || *extinction_right < 0.0 {
                    return Err(Error::Format("extinctions must be >= 0".into()));
                }
                half_absorber(*extinction_left, *extinction_right)
            }
            SceneSpec::KnifeEdge { edge_x } => knife_edge(*edge_x),
            SceneSpec::Raster { path } => raster(RasterScene::from_csv_str(&load(path)?)?),
        })
    }
}
