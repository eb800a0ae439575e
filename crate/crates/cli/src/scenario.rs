//! Scenario files: JSON with whole-line `//` comments.

use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thzqi_core::optics::{validate, ConfigBundle};
use thzqi_core::scene::{SceneObject, SceneSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum NoiseMode {
    /// Full visibility, no shot noise.
    #[default]
    Off,
    /// 0.15 % visibility, Poisson noise and the experimental signal flux.
    Experimental,
}

fn default_positions() -> usize {
    12
}
fn default_roi_half() -> usize {
    1
}
fn default_margin() -> f64 {
    0.3e-3
}
fn default_phase_margin() -> f64 {
    0.15e-3
}
fn default_row_half() -> usize {
    8
}

/// Artifact selectors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Output {
    AmplitudeImage,
    PhaseImage,
    Reference,
    WaveformDump {
        row: usize,
        col: usize,
    },
    Metrology,
    KnifeEdgeSweep {
        /// Edge displacement between positions, scene plane.
        step: f64,
        #[serde(default = "default_positions")]
        positions: usize,
        #[serde(default)]
        center: f64,
        /// Half-size of the summed pixel block.
        #[serde(default = "default_roi_half")]
        roi_half: usize,
    },
    FovCurve,
    Extinction {
        frequency: f64,
        /// Pixels closer than this to the dividing line are skipped.
        #[serde(default = "default_margin")]
        margin: f64,
        #[serde(default = "default_row_half")]
        row_half: usize,
    },
    PhaseSteps {
        #[serde(default = "default_phase_margin")]
        margin: f64,
        #[serde(default = "default_row_half")]
        row_half: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub name: String,
    #[serde(default)]
    pub figure: String,
    #[serde(default)]
    pub description: String,
    #[serde(default)]
    pub config: ConfigBundle,
    pub scene: SceneSpec,
    /// Reference object; a plain mirror when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reference: Option<SceneSpec>,
    #[serde(default)]
    pub noise: NoiseMode,
    #[serde(default)]
    pub seed: u64,
    pub outputs: Vec<Output>,
}

/// A validation problem, anchored to a line of the scenario text when one
/// can be found.
#[derive(Debug, Clone, PartialEq)]
pub struct Diagnostic {
    pub line: Option<usize>,
    pub message: String,
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.line {
            Some(l) => write!(f, "line {l}: {}", self.message),
            None => f.write_str(&self.message),
        }
    }
}

/// Blanks whole-line `//` comments, keeping line numbers intact.
pub fn strip_comments(text: &str) -> String {
    text.lines()
        .map(|l| if l.trim_start().starts_with("//") { "" } else { l })
        .collect::<Vec<_>>()
        .join("\n")
}

/// First line containing `"key"`, 1-based.
fn line_of(text: &str, key: &str) -> Option<usize> {
    let needle = format!("\"{key}\"");
    text.lines().position(|l| !l.trim_start().starts_with("//") && l.contains(&needle)).map(|i| i + 1)
}

impl Scenario {
    /// Parses and validates; every problem found is reported.
    pub fn parse(text: &str) -> Result<Self, Vec<Diagnostic>> {
        let scenario: Scenario = serde_json::from_str(&strip_comments(text))
            .map_err(|e| vec![Diagnostic { line: Some(e.line()), message: e.to_string() }])?;
        let mut problems: Vec<Diagnostic> = validate(&scenario.config)
            .into_iter()
            .map(|v| Diagnostic { line: line_of(text, &v.field), message: v.to_string() })
            .collect();
        problems.extend(scenario.check_outputs().into_iter().map(|(key, message)| Diagnostic {
            line: line_of(text, key),
            message,
        }));
        // raster files are only read at run time
        for spec in [Some(&scenario.scene), scenario.reference.as_ref()].into_iter().flatten() {
            if !matches!(spec, SceneSpec::Raster { .. }) {
                if let Err(e) = spec.build(|_| Ok(String::new())) {
                    problems.push(Diagnostic { line: line_of(text, "scene"), message: e.to_string() });
                }
            }
        }
        if problems.is_empty() {
            Ok(scenario)
        } else {
            Err(problems)
        }
    }

    fn check_outputs(&self) -> Vec<(&'static str, String)> {
        let (rows, cols) = self.config.camera.binned_shape();
        let mut v = Vec::new();
        if self.outputs.is_empty() {
            v.push(("outputs", "at least one output is required".to_string()));
        }
        for o in &self.outputs {
            match o {
                Output::WaveformDump { row, col } if *row >= rows || *col >= cols => v.push((
                    "waveform_dump",
                    format!("waveform_dump pixel ({row}, {col}) outside the {rows}×{cols} binned grid"),
                )),
                Output::KnifeEdgeSweep { step, positions, .. } if !(*step > 0.0) || *positions < 8 => v.push((
                    "knife_edge_sweep",
                    "knife_edge_sweep needs a positive step and at least 8 positions".to_string(),
                )),
                Output::PhaseSteps { .. } if !matches!(self.scene, SceneSpec::TapeStripes { .. }) => {
                    v.push(("phase_steps", "phase_steps requires a tape_stripes scene".to_string()))
                }
                Output::Extinction { frequency, .. } if !(*frequency > 0.0) => {
                    v.push(("extinction", "extinction frequency must be positive".to_string()))
                }
                _ => {}
            }
        }
        v
    }

    pub fn wants(&self, pred: impl Fn(&Output) -> bool) -> bool {
        self.outputs.iter().any(pred)
    }

    pub fn reference_spec(&self) -> SceneSpec {
        self.reference.clone().unwrap_or(SceneSpec::PlainMirror)
    }

    pub fn canonical_json(&self) -> String {
        serde_json::to_string(self).expect("scenario serializes")
    }
}

/// Builds a scene, resolving raster paths against `base`.
pub fn build_scene(spec: &SceneSpec, base: Option<&Path>) -> thzqi_core::Result<SceneObject> {
    spec.build(|p| {
        let path = match base {
            Some(dir) if Path::new(p).is_relative() => dir.join(p),
            _ => PathBuf::from(p),
        };
        Ok(std::fs::read_to_string(path)?)
    })
}

pub struct Bundled {
    pub name: &'static str,
    pub text: &'static str,
}

pub const BUNDLED: &[Bundled] = &[
    Bundled { name: "fig2_reference", text: include_str!("../scenarios/fig2_reference.json") },
    Bundled { name: "fig3_cross", text: include_str!("../scenarios/fig3_cross.json") },
    Bundled { name: "fig3_tape", text: include_str!("../scenarios/fig3_tape.json") },
    Bundled { name: "fig4_absorber_1p0THz", text: include_str!("../scenarios/fig4_absorber_1p0THz.json") },
    Bundled { name: "fig4_absorber_1p5THz", text: include_str!("../scenarios/fig4_absorber_1p5THz.json") },
    Bundled { name: "fig6_knife_edge", text: include_str!("../scenarios/fig6_knife_edge.json") },
    Bundled { name: "fov_characterization", text: include_str!("../scenarios/fov_characterization.json") },
];

pub fn bundled(name: &str) -> Option<&'static Bundled> {
    BUNDLED.iter().find(|b| b.name == name)
}
