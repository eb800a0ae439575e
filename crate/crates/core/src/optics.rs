//! Physical and acquisition parameters plus the closed-form quantities
//! derived from them.
//!
//! All quantities are SI: lengths in meters, times in seconds, frequencies
//! in hertz. Every config type deserializes with per-field defaults, so a
//! JSON file only has to name the fields it changes.

use std::f64::consts::{LN_2, PI};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Vacuum speed of light in m/s.
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

/// Half-maximum argument of `sinc²(x) = (sin πx / πx)²`.
const SINC2_HALF_MAX_X: f64 = 0.442_946_470_689_452_3;

/// A single failed invariant, naming the offending field.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub field: String,
    pub constraint: String,
}

impl Violation {
    fn new(field: &str, constraint: impl Into<String>) -> Self {
        Self { field: field.to_string(), constraint: constraint.into() }
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.field, self.constraint)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OpticalConfig {
    /// Signal (detected) wavelength.
    pub lambda_vis: f64,
    /// Idler (undetected) wavelength.
    pub lambda_thz: f64,
    pub crystal_length: f64,
    /// Pump beam radius (1/e² intensity) at the crystal.
    pub pump_waist: f64,
    /// Sample plane to crystal plane magnification of the idler arm.
    pub mag_thz: f64,
    /// Crystal plane to camera magnification of the signal path.
    pub mag_vis: f64,
    /// Sample plane to camera magnification.
    pub mag_image: f64,
    pub na_limit: f64,
    /// Total signal-photon flux reaching the camera, photons/s, summed over
    /// the whole crystal image. Sets the signal-to-background ratio.
    pub signal_flux: f64,
}

impl Default for OpticalConfig {
    fn default() -> Self {
        Self {
            lambda_vis: 662.2e-9,
            lambda_thz: 200e-6,
            crystal_length: 1e-3,
            pump_waist: 0.885e-3,
            mag_thz: 0.78,
            mag_vis: 3.43,
            mag_image: 2.67,
            na_limit: 0.447,
            signal_flux: DEFAULT_SIGNAL_FLUX,
        }
    }
}

/// Default signal flux in photons/s.
///
/// Chosen so that a noiseless plain-mirror reference at desk resolution
/// drops to the 1e-3 modulation-depth cut at about 15 % of its peak
/// pump intensity.
pub const DEFAULT_SIGNAL_FLUX: f64 = 2.0e3;

impl OpticalConfig {
    /// Sum of signal and idler wavelengths.
    pub fn lambda_sum(&self) -> f64 {
        self.lambda_vis + self.lambda_thz
    }

    /// Converts a crystal-plane length into the sample plane via the
    /// camera magnifications (crystal → camera → sample).
    pub fn crystal_to_sample(&self, length: f64) -> f64 {
        length * self.mag_vis / self.mag_image
    }

    /// Position at which scene objects are evaluated for an idler at
    /// crystal-plane position `length`.
    pub fn crystal_to_object(&self, length: f64) -> f64 {
        length * self.mag_thz
    }

    pub fn violations(&self) -> Vec<Violation> {
        let mut v = Vec::new();
        for (name, value) in [
            ("lambda_vis", self.lambda_vis),
            ("lambda_thz", self.lambda_thz),
            ("crystal_length", self.crystal_length),
            ("pump_waist", self.pump_waist),
        ] {
            if !(value.is_finite() && value > 0.0) {
                v.push(Violation::new(name, format!("must be a positive length (got {value})")));
            }
        }
        if self.lambda_thz.is_finite()
            && self.lambda_vis.is_finite()
            && self.lambda_thz > 0.0
            && self.lambda_vis > 0.0
            && self.lambda_thz <= self.lambda_vis
        {
            v.push(Violation::new("lambda_thz", "must exceed lambda_vis"));
        }
        for (name, value) in
            [("mag_thz", self.mag_thz), ("mag_vis", self.mag_vis), ("mag_image", self.mag_image)]
        {
            if !(value.is_finite() && value > 0.0) {
                v.push(Violation::new(name, format!("magnification must be positive (got {value})")));
            }
        }
        if !(self.na_limit > 0.0 && self.na_limit <= 1.0) {
            v.push(Violation::new("na_limit", format!("must lie in (0, 1] (got {})", self.na_limit)));
        }
        if !(self.signal_flux.is_finite() && self.signal_flux >= 0.0) {
            v.push(Violation::new("signal_flux", "must be finite and >= 0"));
        }
        v
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScanConfig {
    /// Stage shift per frame.
    pub step_length: f64,
    pub n_steps: usize,
    pub frames_averaged_per_step: usize,
    /// Exposure per frame in seconds.
    pub exposure: f64,
}

impl Default for ScanConfig {
    fn default() -> Self {
        Self { step_length: 10e-6, n_steps: 150, frames_averaged_per_step: 1000, exposure: 1.0 }
    }
}

impl ScanConfig {
    pub fn delay_step(&self) -> f64 {
        delay_time_step(self.step_length)
    }

    pub fn nyquist(&self) -> f64 {
        1.0 / (2.0 * self.delay_step())
    }

    /// Delay axis symmetric about the equal-arm point.
    pub fn delay_times(&self) -> Vec<f64> {
        let dt = self.delay_step();
        let mid = (self.n_steps as f64 - 1.0) / 2.0;
        (0..self.n_steps).map(|k| (k as f64 - mid) * dt).collect()
    }

    pub fn violations(&self, band_upper: f64) -> Vec<Violation> {
        let mut v = Vec::new();
        if self.n_steps < 8 {
            v.push(Violation::new("n_steps", format!("must be at least 8 (got {})", self.n_steps)));
        }
        if !(self.step_length.is_finite() && self.step_length > 0.0) {
            v.push(Violation::new("step_length", "must be a positive length"));
        } else if self.nyquist() <= band_upper {
            v.push(Violation::new(
                "step_length",
                format!(
                    "Nyquist frequency {:.4e} Hz does not exceed the analysis band edge {:.4e} Hz",
                    self.nyquist(),
                    band_upper
                ),
            ));
        }
        if self.frames_averaged_per_step == 0 {
            v.push(Violation::new("frames_averaged_per_step", "must be at least 1"));
        }
        if !(self.exposure.is_finite() && self.exposure > 0.0) {
            v.push(Violation::new("exposure", "must be positive"));
        }
        v
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpectralShape {
    Gaussian,
    SincSquared,
}

/// Idler power spectrum, sampled on a fixed grid for the spectral average.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SpectralModel {
    pub center_frequency: f64,
    pub fwhm: f64,
    pub n_frequency_samples: usize,
    pub shape: SpectralShape,
}

impl Default for SpectralModel {
    fn default() -> Self {
        Self {
            center_frequency: 1.5e12,
            fwhm: 0.1e12,
            n_frequency_samples: 21,
            shape: SpectralShape::Gaussian,
        }
    }
}

impl SpectralModel {
    pub fn centered_at(center_frequency: f64) -> Self {
        Self { center_frequency, ..Self::default() }
    }

    /// Standard deviation of the Gaussian shape with this FWHM.
    pub fn sigma(&self) -> f64 {
        self.fwhm / (2.0 * (2.0 * LN_2).sqrt())
    }

    /// Unnormalized spectral density at `f`.
    pub fn density(&self, f: f64) -> f64 {
        let d = f - self.center_frequency;
        match self.shape {
            SpectralShape::Gaussian => (-0.5 * (d / self.sigma()).powi(2)).exp(),
            SpectralShape::SincSquared => {
                let x = d / (self.fwhm / (2.0 * SINC2_HALF_MAX_X));
                if x == 0.0 {
                    1.0
                } else {
                    let s = (PI * x).sin() / (PI * x);
                    s * s
                }
            }
        }
    }

    /// Equally spaced `(frequency, weight)` pairs across ±2·FWHM; weights
    /// sum to one.
    pub fn samples(&self) -> Vec<(f64, f64)> {
        let n = self.n_frequency_samples.max(1);
        if n == 1 {
            return vec![(self.center_frequency, 1.0)];
        }
        let step = 4.0 * self.fwhm / (n as f64 - 1.0);
        let mid = (n as f64 - 1.0) / 2.0;
        let freqs: Vec<f64> =
            (0..n).map(|k| self.center_frequency + (k as f64 - mid) * step).collect();
        let raw: Vec<f64> = freqs.iter().map(|&f| self.density(f)).collect();
        let total: f64 = raw.iter().sum();
        freqs.into_iter().zip(raw.into_iter().map(|w| w / total)).collect()
    }

    pub fn violations(&self) -> Vec<Violation> {
        let mut v = Vec::new();
        if !(self.fwhm.is_finite() && self.fwhm > 0.0) {
            v.push(Violation::new("fwhm", "must be positive"));
        }
        if !(self.center_frequency.is_finite() && self.center_frequency - self.fwhm > 0.0) {
            v.push(Violation::new("center_frequency", "center_frequency - fwhm must be positive"));
        }
        if self.n_frequency_samples % 2 == 0 {
            v.push(Violation::new(
                "n_frequency_samples",
                format!("must be odd so the center is sampled (got {})", self.n_frequency_samples),
            ));
        }
        v
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CameraConfig {
    pub pixel_pitch: f64,
    pub binning: usize,
    pub quantum_efficiency: f64,
    /// Background counts per second per binned pixel.
    pub background_rate: f64,
    /// Raw sensor shape `[rows, cols]`.
    pub sensor_shape: [usize; 2],
}

impl Default for CameraConfig {
    fn default() -> Self {
        Self {
            pixel_pitch: 5.04e-6,
            binning: 3,
            quantum_efficiency: 0.55,
            background_rate: 150.0,
            sensor_shape: [1080, 1920],
        }
    }
}

impl CameraConfig {
    /// Camera that yields `n × n` binned pixels with the given binning.
    pub fn desk(n: usize, binning: usize) -> Self {
        Self { binning, sensor_shape: [n * binning, n * binning], ..Self::default() }
    }

    /// `(rows, cols)` after binning; excess raw rows/cols are dropped.
    pub fn binned_shape(&self) -> (usize, usize) {
        let b = self.binning.max(1);
        (self.sensor_shape[0] / b, self.sensor_shape[1] / b)
    }

    /// Binned pixel pitch on the camera.
    pub fn binned_pitch(&self) -> f64 {
        self.pixel_pitch * self.binning as f64
    }

    pub fn violations(&self) -> Vec<Violation> {
        let mut v = Vec::new();
        if !(self.pixel_pitch.is_finite() && self.pixel_pitch > 0.0) {
            v.push(Violation::new("pixel_pitch", "must be positive"));
        }
        if self.binning < 1 {
            v.push(Violation::new("binning", "must be at least 1"));
        }
        if !(self.quantum_efficiency > 0.0 && self.quantum_efficiency <= 1.0) {
            v.push(Violation::new("quantum_efficiency", "must lie in (0, 1]"));
        }
        if !(self.background_rate.is_finite() && self.background_rate >= 0.0) {
            v.push(Violation::new("background_rate", "must be >= 0"));
        }
        let (r, c) = self.binned_shape();
        if r == 0 || c == 0 {
            v.push(Violation::new("sensor_shape", "must hold at least one binned pixel"));
        }
        v
    }
}

/// Distillation and metrology settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnalysisConfig {
    pub signal_band: [f64; 2],
    pub quiet_band: [f64; 2],
    /// Modulation depth a reference pixel must exceed its noise floor by.
    pub threshold: f64,
    /// Fraction of samples tapered at each end of a waveform.
    pub taper_fraction: f64,
    /// Minimum zero-padding factor before the FFT.
    pub pad_factor: usize,
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        Self {
            signal_band: [1.4e12, 1.6e12],
            quiet_band: [0.6e12, 1.2e12],
            threshold: 1e-3,
            taper_fraction: 0.1,
            pad_factor: 4,
        }
    }
}

impl AnalysisConfig {
    pub fn violations(&self) -> Vec<Violation> {
        let mut v = Vec::new();
        if !(self.signal_band[0] >= 0.0 && self.signal_band[0] < self.signal_band[1]) {
            v.push(Violation::new("signal_band", "must satisfy 0 <= lo < hi"));
        }
        if !(self.quiet_band[0] > 0.0 && self.quiet_band[0] < self.quiet_band[1]) {
            v.push(Violation::new("quiet_band", "must satisfy 0 < lo < hi"));
        }
        if !(self.threshold.is_finite() && self.threshold >= 0.0) {
            v.push(Violation::new("threshold", "must be >= 0"));
        }
        if !(0.0..0.5).contains(&self.taper_fraction) {
            v.push(Violation::new("taper_fraction", "must lie in [0, 0.5)"));
        }
        if self.pad_factor < 1 {
            v.push(Violation::new("pad_factor", "must be at least 1"));
        }
        v
    }
}

/// Quasi-Monte Carlo integration settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulationConfig {
    pub qmc_samples: usize,
    pub sequence_offset: u64,
}

impl Default for SimulationConfig {
    fn default() -> Self {
        Self { qmc_samples: 1 << 16, sequence_offset: 0 }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConfigBundle {
    pub optical: OpticalConfig,
    pub scan: ScanConfig,
    pub spectral: SpectralModel,
    pub camera: CameraConfig,
    pub analysis: AnalysisConfig,
    pub simulation: SimulationConfig,
}

impl ConfigBundle {
    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    /// Returns `Err(InvalidConfig)` when any invariant fails.
    pub fn validated(self) -> Result<Self> {
        let v = validate(&self);
        if v.is_empty() {
            Ok(self)
        } else {
            Err(Error::InvalidConfig(v))
        }
    }
}

/// Lists every violated invariant in the bundle; empty means valid.
pub fn validate(bundle: &ConfigBundle) -> Vec<Violation> {
    let mut v = bundle.optical.violations();
    v.extend(bundle.scan.violations(bundle.analysis.signal_band[1]));
    v.extend(bundle.spectral.violations());
    v.extend(bundle.camera.violations());
    v.extend(bundle.analysis.violations());
    if bundle.simulation.qmc_samples == 0 {
        v.push(Violation::new("qmc_samples", "must be at least 1"));
    }
    v
}

/// Field of view (FWHM of the illumination) in the sample plane.
pub fn theoretical_fov(cfg: &OpticalConfig) -> f64 {
    (2.0 * LN_2).sqrt() * cfg.pump_waist / cfg.mag_thz
}

/// Aperture-limited resolution `0.51 λ / NA`.
pub fn diffraction_resolution(lambda_thz: f64, na: f64) -> Result<f64> {
    if !(na > 0.0 && na <= 1.0) {
        return Err(Error::InvalidNa(na));
    }
    Ok(0.51 * lambda_thz / na)
}

/// Delay added by a stage shift; the path is traversed twice.
pub fn delay_time_step(step_length: f64) -> f64 {
    2.0 * step_length / SPEED_OF_LIGHT
}
