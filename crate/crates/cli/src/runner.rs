//! Scenario execution: synthesis, distillation, metrology and artifacts.

use std::fs;
use std::path::{Path, PathBuf};

use ndarray::Array2;
use thzqi_core::biphoton::{qmc_pair_samples, PairSample};
use thzqi_core::distill::{
    brightest_region, distill_image, fit_phase_image, fit_shared_params, preprocess_waveform_with,
    reference_normalize, wrap_phase, SharedParams, SpectrumAnalyzer,
};
use thzqi_core::io::{mask_to_csv, matrix_to_csv, to_pgm16};
use thzqi_core::metrics::{
    central_region, extinction_curve, fov_pixels, integrated_amplitude, knife_edge_resolution, mean_phase,
    measure_fov, FovMethod, MetrologyReport, RegionValue,
};
use thzqi_core::optics::ConfigBundle;
use thzqi_core::scene::{knife_edge, SceneObject, SceneSpec};
use thzqi_core::synth::{synthesize_scan_with_samples, NoiseSpec, WaveformCube, EXPERIMENTAL_SIGNAL_FLUX};

use crate::manifest::{sha256_hex, Artifact, Manifest, Versions, SCHEMA_VERSION};
use crate::scenario::{build_scene, Diagnostic, NoiseMode, Output, Scenario};

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    pub seed: Option<u64>,
    pub qmc_samples: Option<usize>,
    pub noise: Option<NoiseMode>,
}

#[derive(Debug, thiserror::Error)]
pub enum RunError {
    #[error("{}", join(.0))]
    Invalid(Vec<Diagnostic>),
    #[error("stage `{stage}` failed: {source}")]
    Stage { stage: &'static str, source: thzqi_core::Error },
}

fn join(d: &[Diagnostic]) -> String {
    d.iter().map(|d| d.to_string()).collect::<Vec<_>>().join("\n")
}

impl RunError {
    pub fn exit_code(&self) -> i32 {
        match self {
            RunError::Invalid(_) => 1,
            RunError::Stage { .. } => 2,
        }
    }
}

trait StageExt<T> {
    fn stage(self, stage: &'static str) -> Result<T, RunError>;
}

impl<T, E: Into<thzqi_core::Error>> StageExt<T> for Result<T, E> {
    fn stage(self, stage: &'static str) -> Result<T, RunError> {
        self.map_err(|e| RunError::Stage { stage, source: e.into() })
    }
}

pub struct RunOutcome {
    pub manifest: Manifest,
    pub report: Option<MetrologyReport>,
    pub out_dir: PathBuf,
}

struct Writer {
    root: PathBuf,
    artifacts: Vec<Artifact>,
}

impl Writer {
    fn put(&mut self, name: &str, bytes: impl AsRef<[u8]>) -> Result<(), RunError> {
        let bytes = bytes.as_ref();
        fs::write(self.root.join(name), bytes).stage("write")?;
        self.artifacts.push(Artifact { path: name.to_string(), bytes: bytes.len() as u64, sha256: sha256_hex(bytes) });
        Ok(())
    }
}

/// Applies command-line overrides to a parsed scenario.
pub fn resolve(mut scenario: Scenario, opts: &RunOptions) -> Scenario {
    if let Some(seed) = opts.seed {
        scenario.seed = seed;
    }
    if let Some(n) = opts.qmc_samples {
        scenario.config.simulation.qmc_samples = n;
    }
    if let Some(mode) = opts.noise {
        scenario.noise = mode;
    }
    scenario
}

struct Pipeline {
    bundle: ConfigBundle,
    mode: NoiseMode,
    seed: u64,
    samples: Vec<PairSample>,
}

impl Pipeline {
    fn new(scenario: &Scenario) -> Self {
        let mut bundle = scenario.config.clone();
        if scenario.noise == NoiseMode::Experimental {
            bundle.optical.signal_flux = EXPERIMENTAL_SIGNAL_FLUX;
        }
        let samples =
            qmc_pair_samples(bundle.simulation.qmc_samples, &bundle.optical, bundle.simulation.sequence_offset);
        Self { bundle, mode: scenario.noise, seed: scenario.seed, samples }
    }

    /// Noise for the `stream`-th cube of the run.
    fn noise(&self, stream: u64) -> NoiseSpec {
        let seed = self.seed.wrapping_add(stream);
        match self.mode {
            NoiseMode::Off => NoiseSpec { rng_seed: seed, ..NoiseSpec::noiseless(&self.bundle.camera) },
            NoiseMode::Experimental => NoiseSpec::experimental(&self.bundle.camera, seed),
        }
    }

    fn synthesize(&self, scene: &SceneObject, stream: u64) -> Result<WaveformCube, RunError> {
        synthesize_scan_with_samples(scene, &self.bundle, &self.noise(stream), &self.samples).stage("synthesize")
    }

    fn sample_pitch(&self, cube: &WaveformCube) -> f64 {
        self.bundle.optical.crystal_to_sample(cube.pixel_pitch_effective)
    }
}

fn pgm_and_csv(w: &mut Writer, stem: &str, m: &Array2<f64>) -> Result<(), RunError> {
    w.put(&format!("{stem}.csv"), matrix_to_csv(m))?;
    w.put(&format!("{stem}.pgm"), to_pgm16(m))
}

/// Pixels of the central rows whose scene-plane x satisfies `pred`.
fn band_region(
    cube: &WaveformCube,
    bundle: &ConfigBundle,
    mask: &Array2<bool>,
    row_half: usize,
    pred: impl Fn(f64) -> bool,
) -> Vec<(usize, usize)> {
    let (rows, cols, _) = cube.shape();
    let rc = rows / 2;
    let mut v = Vec::new();
    for r in rc.saturating_sub(row_half)..(rc + row_half).min(rows) {
        for c in 0..cols {
            if mask[[r, c]] && pred(cube.object_position(r, c, &bundle.optical).x) {
                v.push((r, c));
            }
        }
    }
    v
}

/// Runs a scenario given its source text. `base_dir` resolves relative
/// raster paths.
pub fn run_text(text: &str, base_dir: Option<&Path>, out_dir: &Path, opts: &RunOptions) -> Result<RunOutcome, RunError> {
    let scenario = resolve(Scenario::parse(text).map_err(RunError::Invalid)?, opts);
    let problems: Vec<Diagnostic> = thzqi_core::optics::validate(&scenario.config)
        .into_iter()
        .map(|v| Diagnostic { line: None, message: format!("after overrides: {v}") })
        .collect();
    if !problems.is_empty() {
        return Err(RunError::Invalid(problems));
    }
    fs::create_dir_all(out_dir).stage("write")?;
    let mut w = Writer { root: out_dir.to_path_buf(), artifacts: Vec::new() };

    let scene = build_scene(&scenario.scene, base_dir).stage("scene")?;
    let reference_spec = scenario.reference_spec();
    let pipe = Pipeline::new(&scenario);
    let analysis = pipe.bundle.analysis.clone();
    // thresholds are modulation depths at full visibility
    let depth_scale = pipe.noise(0).visibility_scale;
    let threshold = analysis.threshold * depth_scale;

    let needs_reference = scenario.wants(|o| {
        matches!(
            o,
            Output::Reference
                | Output::PhaseImage
                | Output::Metrology
                | Output::FovCurve
                | Output::Extinction { .. }
                | Output::PhaseSteps { .. }
        )
    });
    let needs_phase = scenario.wants(|o| matches!(o, Output::PhaseImage | Output::PhaseSteps { .. }));

    let cube = pipe.synthesize(&scene, 0)?;
    let reference_cube = if !needs_reference {
        None
    } else if scenario.scene == reference_spec {
        Some(cube.clone())
    } else {
        Some(pipe.synthesize(&build_scene(&reference_spec, base_dir).stage("scene")?, 1)?)
    };

    let mut image = distill_image(&cube, &analysis).stage("distill")?;
    let mut reference = match &reference_cube {
        Some(c) => Some(distill_image(c, &analysis).stage("distill")?),
        None => None,
    };
    if needs_phase {
        // one set of shared parameters for both cubes: they describe the
        // instrument, not the object
        let (fit_cube, fit_image) = match (&reference_cube, &reference) {
            (Some(c), Some(i)) => (c, i),
            _ => (&cube, &image),
        };
        let shared: SharedParams =
            fit_shared_params(fit_cube, &brightest_region(fit_image, 0.5), &analysis).stage("distill")?;
        fit_phase_image(&cube, &shared, &mut image).stage("distill")?;
        if let (Some(c), Some(i)) = (&reference_cube, reference.as_mut()) {
            fit_phase_image(c, &shared, i).stage("distill")?;
        }
    }
    let normalized = match &reference {
        Some(r) => Some(reference_normalize(&image, r, threshold).stage("distill")?),
        None => None,
    };

    let mut report = MetrologyReport::default();
    let mut wants_report = false;
    let sample_pitch = pipe.sample_pitch(&cube);

    for output in &scenario.outputs {
        match output {
            Output::AmplitudeImage => {
                pgm_and_csv(&mut w, "amplitude", &image.amplitude)?;
                w.put("modulation_depth.csv", matrix_to_csv(&image.modulation_depth()))?;
                w.put("mask.csv", mask_to_csv(&image.valid_mask))?;
            }
            Output::Reference => {
                let (r, n) = (reference.as_ref().expect("reference built"), normalized.as_ref().expect("built"));
                pgm_and_csv(&mut w, "reference_amplitude", &r.amplitude)?;
                pgm_and_csv(&mut w, "ratio", &n.amplitude)?;
                w.put("ratio_mask.csv", mask_to_csv(&n.valid_mask))?;
            }
            Output::PhaseImage => {
                let n = normalized.as_ref().expect("reference built");
                pgm_and_csv(&mut w, "phase", &n.phase)?;
                w.put("phase_mask.csv", mask_to_csv(&n.valid_mask))?;
            }
            Output::WaveformDump { row, col } => {
                let wave = cube.waveform(*row, *col);
                let mut s = String::from("delay_s,counts\n");
                for (t, v) in cube.delay_times.iter().zip(&wave) {
                    s.push_str(&format!("{t:e},{v:e}\n"));
                }
                w.put(&format!("waveform_r{row}_c{col}.csv"), s)?;
                let analyzer = SpectrumAnalyzer::new(wave.len(), cube.delay_step(), analysis.pad_factor);
                let spec = analyzer
                    .spectrum(&preprocess_waveform_with(&wave, analysis.taper_fraction).stage("distill")?);
                let mut s = String::from("frequency_hz,amplitude\n");
                for (f, a) in spec.frequencies.iter().zip(&spec.amplitudes) {
                    s.push_str(&format!("{f:e},{a:e}\n"));
                }
                w.put(&format!("spectrum_r{row}_c{col}.csv"), s)?;
            }
            Output::Metrology => {
                wants_report = true;
                let r = reference.as_ref().expect("reference built");
                let depth = r.noise_floor_depth();
                let mut floors: Vec<f64> =
                    depth.indexed_iter().filter(|(i, _)| r.valid_mask[*i]).map(|(_, v)| *v).collect();
                floors.sort_by(f64::total_cmp);
                report.noise_floor = floors.get(floors.len() / 2).copied();
                match measure_fov(r, &r.noise_floor, threshold, sample_pitch) {
                    Ok(m) => report.fov = Some(m),
                    Err(thzqi_core::Error::NoSignal) => report.note("fov: no pixel passes the threshold"),
                    Err(e) => return Err(e).stage("metrology"),
                }
            }
            Output::KnifeEdgeSweep { step, positions, center, roi_half } => {
                wants_report = true;
                let (rows, cols, _) = cube.shape();
                let roi = central_region(rows, cols, *roi_half);
                let xs: Vec<f64> =
                    (0..*positions).map(|i| center + (i as f64 - (*positions as f64 - 1.0) / 2.0) * step).collect();
                let mut ys = Vec::with_capacity(xs.len());
                for (i, &x) in xs.iter().enumerate() {
                    let c = pipe.synthesize(&knife_edge(x), 2 + i as u64)?;
                    ys.push(integrated_amplitude(&distill_image(&c, &analysis).stage("distill")?, &roi));
                }
                let mut s = String::from("edge_position_m,integrated_amplitude\n");
                for (x, y) in xs.iter().zip(&ys) {
                    s.push_str(&format!("{x:e},{y:e}\n"));
                }
                w.put("knife_edge.csv", s)?;
                let fit = knife_edge_resolution(&xs, &ys).stage("metrology")?;
                if fit.non_monotonic {
                    report.note("knife edge: response not monotonic beyond fit residual");
                }
                report.resolution = Some(fit.resolution);
            }
            Output::FovCurve => {
                wants_report = true;
                let r = reference.as_ref().expect("reference built");
                let mut s = String::from("threshold,fov_m\n");
                for k in 0..=12 {
                    let t = 1e-4 * 10f64.powf(k as f64 / 6.0) * depth_scale;
                    if let Ok(px) = fov_pixels(r, &r.noise_floor, t, FovMethod::CrossSection) {
                        s.push_str(&format!("{t:e},{:e}\n", px * sample_pitch));
                    }
                }
                w.put("fov_curve.csv", s)?;
                let (depth, floor) = (r.modulation_depth(), r.noise_floor_depth());
                let row = r.centroid().map_or(r.shape().0 / 2, |c| c.0.round() as usize);
                let mut s = String::from("col,x_sample_m,modulation_depth,noise_floor_depth\n");
                for c in 0..r.shape().1 {
                    let x = pipe.bundle.optical.crystal_to_sample(cube.pixel_center(row, c).x);
                    s.push_str(&format!("{c},{x:e},{:e},{:e}\n", depth[[row, c]], floor[[row, c]]));
                }
                w.put("fov_profile.csv", s)?;
            }
            Output::Extinction { frequency, margin, row_half } => {
                wants_report = true;
                let (rc, n) = (reference_cube.as_ref().expect("built"), normalized.as_ref().expect("built"));
                let band = analysis.signal_band;
                for (label, region) in [
                    ("left", band_region(&cube, &pipe.bundle, &n.valid_mask, *row_half, |x| x < -margin)),
                    ("right", band_region(&cube, &pipe.bundle, &n.valid_mask, *row_half, |x| x > *margin)),
                ] {
                    let curve = extinction_curve(rc, &cube, &region, band, &analysis).stage("metrology")?;
                    w.put(&format!("extinction_{label}.csv"), curve.to_csv())?;
                    let k = curve.at(*frequency).expect("non-empty curve");
                    report.extinction.push(RegionValue { label: label.into(), value: k });
                }
            }
            Output::PhaseSteps { margin, row_half } => {
                wants_report = true;
                let SceneSpec::TapeStripes { tape } = &scenario.scene else { unreachable!("checked at parse") };
                let n = normalized.as_ref().expect("built");
                let half = tape.stripe_width / 2.0;
                let region = |pred: &dyn Fn(f64) -> bool| {
                    let r = band_region(&cube, &pipe.bundle, &n.valid_mask, *row_half, pred);
                    mean_phase(n, &r).stage("metrology")
                };
                let bare = region(&|x| x < -half - margin)?;
                let single = region(&|x| x.abs() < half - margin)?;
                let double = region(&|x| x > half + margin)?;
                for (label, a, b) in [
                    ("single_vs_bare", single, bare),
                    ("double_vs_single", double, single),
                    ("double_vs_bare", double, bare),
                ] {
                    report.phase_steps.push(RegionValue { label: label.into(), value: wrap_phase(a - b).abs() });
                }
            }
        }
    }

    if wants_report {
        report.derive_modes();
        w.put("report.json", report.to_json())?;
    }
    w.artifacts.sort_by(|a, b| a.path.cmp(&b.path));
    let manifest = Manifest {
        schema: SCHEMA_VERSION,
        scenario: scenario.name.clone(),
        scenario_sha256: sha256_hex(text.as_bytes()),
        config_sha256: sha256_hex(scenario.canonical_json().as_bytes()),
        seed: scenario.seed,
        qmc_samples: scenario.config.simulation.qmc_samples,
        noise: scenario.noise,
        versions: Versions::default(),
        artifacts: w.artifacts.clone(),
    };
    fs::write(out_dir.join("manifest.json"), manifest.to_json()).stage("write")?;
    Ok(RunOutcome { manifest, report: wants_report.then_some(report), out_dir: out_dir.to_path_buf() })
}
