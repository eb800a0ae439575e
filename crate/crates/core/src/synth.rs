//! Detector image synthesis over a delay scan.
//!
//! Each QMC pair sample is assigned to the binned detector pixel its signal
//! photon lands in. Per pixel we accumulate, for every sampled idler
//! frequency, the complex return `|T| e^{iφ}` of the scene at the idler
//! position. A pixel's count rate at delay τ is then
//!
//! ```text
//! R(τ) = (1/n) [ N_pix + v Σ_f w_f Re(C_f e^{i 2π f τ}) ]
//! ```
//!
//! which is the QMC estimate of the pixel-integrated count rate with the
//! interference term averaged over the idler spectrum.

use std::f64::consts::PI;

use ndarray::{Array2, Array3};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::biphoton::{qmc_pair_samples, PairSample, TransversePoint};
use crate::error::{Error, Result};
use crate::optics::{CameraConfig, ConfigBundle, OpticalConfig, SpectralModel};
use crate::scene::SceneObject;

/// Detector counts over `[row][col][delay]`.
#[derive(Debug, Clone, PartialEq)]
pub struct WaveformCube {
    pub counts: Array3<f64>,
    /// Binned pixel pitch in the crystal image plane.
    pub pixel_pitch_effective: f64,
    pub delay_times: Vec<f64>,
    /// False where no QMC sample landed in the pixel.
    pub valid: Array2<bool>,
}

impl WaveformCube {
    pub fn new(counts: Array3<f64>, pixel_pitch_effective: f64, delay_times: Vec<f64>) -> Result<Self> {
        let (rows, cols, _) = counts.dim();
        let cube = Self {
            counts,
            pixel_pitch_effective,
            delay_times,
            valid: Array2::from_elem((rows, cols), true),
        };
        cube.check()?;
        Ok(cube)
    }

    pub fn shape(&self) -> (usize, usize, usize) {
        self.counts.dim()
    }

    pub fn delay_step(&self) -> f64 {
        self.delay_times[1] - self.delay_times[0]
    }

    pub fn waveform(&self, row: usize, col: usize) -> Vec<f64> {
        self.counts.slice(ndarray::s![row, col, ..]).to_vec()
    }

    /// Scene-plane position probed by the idler partners of a pixel's
    /// signal photons.
    pub fn object_position(&self, row: usize, col: usize, optical: &OpticalConfig) -> TransversePoint {
        self.pixel_center(row, col).scale(optical.mag_thz)
    }

    /// Crystal-plane position of a pixel centre.
    pub fn pixel_center(&self, row: usize, col: usize) -> TransversePoint {
        let (rows, cols, _) = self.shape();
        pixel_center(row, col, rows, cols, self.pixel_pitch_effective)
    }

    /// Checks the structural invariants.
    pub fn check(&self) -> Result<()> {
        let (rows, cols, n) = self.shape();
        if n != self.delay_times.len() {
            return Err(Error::ShapeMismatch(vec![rows, cols, n], vec![self.delay_times.len()]));
        }
        if self.valid.dim() != (rows, cols) {
            return Err(Error::ShapeMismatch(vec![rows, cols], self.valid.shape().to_vec()));
        }
        if n < 2 {
            return Err(Error::Format("a cube needs at least two delay frames".into()));
        }
        let dt = self.delay_step();
        if !(dt > 0.0) {
            return Err(Error::Format("delay_times must increase".into()));
        }
        let uniform = self
            .delay_times
            .windows(2)
            .all(|w| ((w[1] - w[0]) - dt).abs() <= 1e-6 * dt);
        if !uniform {
            return Err(Error::Format("delay_times must be uniformly spaced".into()));
        }
        if self.counts.iter().any(|c| !c.is_finite() || *c < 0.0) {
            return Err(Error::Format("counts must be finite and non-negative".into()));
        }
        if !(self.pixel_pitch_effective > 0.0) {
            return Err(Error::Format("pixel pitch must be positive".into()));
        }
        Ok(())
    }
}

fn pixel_center(row: usize, col: usize, rows: usize, cols: usize, pitch: f64) -> TransversePoint {
    TransversePoint::new(
        (col as f64 + 0.5 - cols as f64 / 2.0) * pitch,
        (row as f64 + 0.5 - rows as f64 / 2.0) * pitch,
    )
}

fn pixel_index(p: TransversePoint, rows: usize, cols: usize, pitch: f64) -> Option<(usize, usize)> {
    let c = (p.x / pitch + cols as f64 / 2.0).floor();
    let r = (p.y / pitch + rows as f64 / 2.0).floor();
    if c >= 0.0 && r >= 0.0 && c < cols as f64 && r < rows as f64 {
        Some((r as usize, c as usize))
    } else {
        None
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NoiseSpec {
    /// Scales the interference term; folds in idler loss and parasitic
    /// signal.
    pub visibility_scale: f64,
    pub shot_noise: bool,
    /// Background counts per second per binned pixel.
    pub background_rate: f64,
    pub rng_seed: u64,
}

impl Default for NoiseSpec {
    fn default() -> Self {
        Self::noiseless(&CameraConfig::default())
    }
}

/// Signal flux for experimental emulation, photons/s. Puts a few thousand
/// signal counts per second on the central binned pixel, well above the
/// 150 counts/s background.
pub const EXPERIMENTAL_SIGNAL_FLUX: f64 = 5.0e6;

impl NoiseSpec {
    pub fn noiseless(camera: &CameraConfig) -> Self {
        Self { visibility_scale: 1.0, shot_noise: false, background_rate: camera.background_rate, rng_seed: 0 }
    }

    /// Experimental conditions: 0.15 % visibility and Poisson noise.
    pub fn experimental(camera: &CameraConfig, rng_seed: u64) -> Self {
        Self { visibility_scale: 0.0015, shot_noise: true, background_rate: camera.background_rate, rng_seed }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.visibility_scale) {
            return Err(Error::Format(format!(
                "visibility_scale must lie in [0, 1] (got {})",
                self.visibility_scale
            )));
        }
        if !(self.background_rate.is_finite() && self.background_rate >= 0.0) {
            return Err(Error::Format("background_rate must be >= 0".into()));
        }
        Ok(())
    }
}

/// Spectrally resolved return accumulated over the samples of one pixel.
#[derive(Debug, Clone)]
struct PixelAccumulator {
    samples: usize,
    re: Vec<f64>,
    im: Vec<f64>,
}

impl PixelAccumulator {
    fn new(nf: usize) -> Self {
        Self { samples: 0, re: vec![0.0; nf], im: vec![0.0; nf] }
    }

    fn add(&mut self, s: &PairSample, scene: &SceneObject, mag_thz: f64, spectrum: &[(f64, f64)]) {
        self.samples += 1;
        let pos = s.rho_thz.scale(mag_thz);
        for (k, &(f, _)) in spectrum.iter().enumerate() {
            let r = scene.response(pos, f);
            let (sin, cos) = r.phase.sin_cos();
            self.re[k] += s.weight * r.magnitude * cos;
            self.im[k] += s.weight * r.magnitude * sin;
        }
    }

    /// `N_pix + v Σ_f w_f Re(C_f e^{i2πfτ})` for every delay.
    fn waveform(&self, delays: &[f64], visibility: f64, spectrum: &[(f64, f64)]) -> Vec<f64> {
        delays
            .iter()
            .map(|&tau| {
                let osc: f64 = spectrum
                    .iter()
                    .enumerate()
                    .map(|(k, &(f, w))| {
                        let (sin, cos) = (2.0 * PI * f * tau).sin_cos();
                        w * (self.re[k] * cos - self.im[k] * sin)
                    })
                    .sum();
                self.samples as f64 + visibility * osc
            })
            .collect()
    }
}

/// QMC estimate of the count rate (fraction of all pairs per unit time
/// normalization) for the pixel centred on detector position `rho_d`.
///
/// `footprint` is the pixel side length in the crystal plane. Only samples
/// whose signal photon lands inside the footprint contribute.
#[allow(clippy::too_many_arguments)]
pub fn pixel_count_rate(
    rho_d: TransversePoint,
    delay: f64,
    scene: &SceneObject,
    cfg: &OpticalConfig,
    spectral: &SpectralModel,
    samples: &[PairSample],
    footprint: f64,
    visibility: f64,
) -> Result<f64> {
    let center = rho_d.scale(1.0 / cfg.mag_vis);
    let half = footprint / 2.0;
    let spectrum = spectral.samples();
    let mut acc = PixelAccumulator::new(spectrum.len());
    for s in samples {
        let d = s.rho_vis - center;
        if d.x >= -half && d.x < half && d.y >= -half && d.y < half {
            acc.add(s, scene, cfg.mag_thz, &spectrum);
        }
    }
    if acc.samples == 0 {
        return Err(Error::EmptyPixel { x: rho_d.x, y: rho_d.y });
    }
    Ok(acc.waveform(&[delay], visibility, &spectrum)[0] / samples.len() as f64)
}

/// Synthesizes the full delay scan with freshly generated QMC samples.
pub fn synthesize_scan(scene: &SceneObject, bundle: &ConfigBundle, noise: &NoiseSpec) -> Result<WaveformCube> {
    let samples = qmc_pair_samples(
        bundle.simulation.qmc_samples,
        &bundle.optical,
        bundle.simulation.sequence_offset,
    );
    synthesize_scan_with_samples(scene, bundle, noise, &samples)
}

/// Synthesizes the delay scan from a given sample set; lets sweeps reuse
/// one set across scenes.
///
/// Mean counts per frame are `(flux · R · QE + background) · exposure`.
/// With shot noise each step is the average of
/// `frames_averaged_per_step` Poisson frames.
pub fn synthesize_scan_with_samples(
    scene: &SceneObject,
    bundle: &ConfigBundle,
    noise: &NoiseSpec,
    samples: &[PairSample],
) -> Result<WaveformCube> {
    noise.validate()?;
    if samples.is_empty() {
        return Err(Error::Format("no QMC samples".into()));
    }
    let (rows, cols) = bundle.camera.binned_shape();
    let pitch = bundle.camera.binned_pitch() / bundle.optical.mag_vis;
    let spectrum = bundle.spectral.samples();
    let delays = bundle.scan.delay_times();
    let n_delays = delays.len();

    // bucket sample indices by pixel, preserving sequence order
    let assignment: Vec<Option<usize>> = samples
        .par_iter()
        .map(|s| pixel_index(s.rho_vis, rows, cols, pitch).map(|(r, c)| r * cols + c))
        .collect();
    let mut buckets: Vec<Vec<u32>> = vec![Vec::new(); rows * cols];
    for (i, a) in assignment.iter().enumerate() {
        if let Some(p) = a {
            buckets[*p].push(i as u32);
        }
    }

    let scale = bundle.optical.signal_flux * bundle.camera.quantum_efficiency / samples.len() as f64;
    let exposure = bundle.scan.exposure;
    let frames = bundle.scan.frames_averaged_per_step.max(1) as f64;

    let pixels: Vec<(Vec<f64>, bool)> = buckets
        .par_iter()
        .enumerate()
        .map(|(p, bucket)| {
            let mut acc = PixelAccumulator::new(spectrum.len());
            for &i in bucket {
                acc.add(&samples[i as usize], scene, bundle.optical.mag_thz, &spectrum);
            }
            let valid = acc.samples > 0;
            let mut wave: Vec<f64> = acc
                .waveform(&delays, noise.visibility_scale, &spectrum)
                .into_iter()
                .map(|r| ((r * scale).max(0.0) + noise.background_rate) * exposure)
                .collect();
            if noise.shot_noise {
                let mut rng = ChaCha8Rng::seed_from_u64(noise.rng_seed);
                rng.set_stream(p as u64);
                for c in wave.iter_mut() {
                    let lambda = *c * frames;
                    *c = if lambda > 0.0 {
                        Poisson::new(lambda).expect("positive finite rate").sample(&mut rng) / frames
                    } else {
                        0.0
                    };
                }
            }
            (wave, valid)
        })
        .collect();

    let mut counts = Array3::<f64>::zeros((rows, cols, n_delays));
    let mut valid = Array2::from_elem((rows, cols), false);
    for (p, (wave, ok)) in pixels.into_iter().enumerate() {
        let (r, c) = (p / cols, p % cols);
        valid[[r, c]] = ok;
        for (k, v) in wave.into_iter().enumerate() {
            counts[[r, c, k]] = v;
        }
    }
    Ok(WaveformCube { counts, pixel_pitch_effective: pitch, delay_times: delays, valid })
}

/// Sums `binning × binning` blocks of every frame; excess rows and columns
/// are dropped.
pub fn apply_binning(raw: &Array3<f64>, binning: usize) -> Array3<f64> {
    let b = binning.max(1);
    let (rows, cols, n) = raw.dim();
    let (out_r, out_c) = (rows / b, cols / b);
    let mut out = Array3::<f64>::zeros((out_r, out_c, n));
    for r in 0..out_r * b {
        for c in 0..out_c * b {
            for k in 0..n {
                out[[r / b, c / b, k]] += raw[[r, c, k]];
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::optics::SpectralShape;
    use crate::scene::{plain_mirror, SceneObject};
    use proptest::prelude::*;

    fn single_tone() -> SpectralModel {
        SpectralModel { n_frequency_samples: 1, ..SpectralModel::default() }
    }

    fn dark() -> SceneObject {
        plain_mirror().scaled(0.0)
    }

    fn small_bundle() -> ConfigBundle {
        let mut b = ConfigBundle::default();
        b.camera = CameraConfig::desk(16, 27);
        b.simulation.qmc_samples = 1 << 13;
        b
    }

    #[test]
    fn full_visibility_reaches_zero() {
        let cfg = OpticalConfig::default();
        let samples = qmc_pair_samples(1 << 14, &cfg, 0);
        let spectral = single_tone();
        let period = 1.0 / spectral.center_frequency;
        let rate = |tau| {
            pixel_count_rate(TransversePoint::ORIGIN, tau, &plain_mirror(), &cfg, &spectral, &samples, 50e-6, 1.0)
                .unwrap()
        };
        let max = rate(0.0);
        let min = rate(period / 2.0);
        assert!(max > 0.0);
        assert!(min.abs() < 1e-12 * max, "{min} {max}");
    }

    #[test]
    fn dark_scene_is_delay_independent() {
        let cfg = OpticalConfig::default();
        let samples = qmc_pair_samples(1 << 12, &cfg, 0);
        let s = SpectralModel::default();
        let a = pixel_count_rate(TransversePoint::ORIGIN, 0.0, &dark(), &cfg, &s, &samples, 80e-6, 1.0).unwrap();
        let b = pixel_count_rate(TransversePoint::ORIGIN, 1.3e-12, &dark(), &cfg, &s, &samples, 80e-6, 1.0)
            .unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn empty_pixel_detected() {
        let cfg = OpticalConfig::default();
        let samples = qmc_pair_samples(64, &cfg, 0);
        let far = TransversePoint::new(0.05, 0.0);
        let r = pixel_count_rate(far, 0.0, &plain_mirror(), &cfg, &SpectralModel::default(), &samples, 1e-6, 1.0);
        assert!(matches!(r, Err(Error::EmptyPixel { .. })));
    }

    /// Envelope of the oscillation for a Gaussian spectrum:
    /// `exp(−2 (π σ_f τ)²)`.
    #[test]
    fn gaussian_envelope_matches_fourier_transform() {
        let cfg = OpticalConfig::default();
        let samples = qmc_pair_samples(1 << 12, &cfg, 0);
        let s = SpectralModel::default();
        assert_eq!(s.shape, SpectralShape::Gaussian);
        let fc = s.center_frequency;
        let rate = |tau| {
            pixel_count_rate(TransversePoint::ORIGIN, tau, &plain_mirror(), &cfg, &s, &samples, 80e-6, 1.0).unwrap()
        };
        let base = rate(0.5 / fc + 0.25 / fc); // cos = 0 at fc
        let tau_far = 3.0 / (PI * s.fwhm);
        // oscillation amplitude from a quadrature pair around each delay
        let amp = |t0: f64| {
            let t0 = (t0 * fc).round() / fc;
            let a = rate(t0) - base;
            let b = rate(t0 + 0.25 / fc) - base;
            (a * a + b * b).sqrt()
        };
        let ratio = amp(tau_far) / amp(0.0);
        let t = (tau_far * fc).round() / fc;
        let expected = (-2.0 * (PI * s.sigma() * t).powi(2)).exp();
        assert!((ratio - expected).abs() < 0.02 * expected + 1e-4, "{ratio} vs {expected}");
        assert!(ratio < 0.1);
    }

    #[test]
    fn binning_examples() {
        let raw = Array3::from_shape_fn((4, 5, 2), |(r, c, k)| (r * 10 + c + k) as f64);
        assert_eq!(apply_binning(&raw, 1), raw);
        let ones = Array3::<f64>::ones((6, 6, 3));
        let b = apply_binning(&ones, 3);
        assert_eq!(b.dim(), (2, 2, 3));
        assert!(b.iter().all(|&v| v == 9.0));
    }

    proptest! {
        #[test]
        fn binning_conserves_counts(rows in 1usize..12, cols in 1usize..12, b in 1usize..5, seed in 0u64..1000) {
            let raw = Array3::from_shape_fn((rows, cols, 3), |(r, c, k)| ((r * 31 + c * 7 + k + seed as usize) % 13) as f64);
            let out = apply_binning(&raw, b);
            let retained: f64 = raw
                .indexed_iter()
                .filter(|((r, c, _), _)| *r < (rows / b) * b && *c < (cols / b) * b)
                .map(|(_, v)| *v)
                .sum();
            prop_assert_eq!(out.sum(), retained);
        }
    }

    #[test]
    fn noiseless_mean_is_constant_term() {
        let b = small_bundle();
        let noise = NoiseSpec::noiseless(&b.camera);
        let cube = synthesize_scan(&plain_mirror(), &b, &noise).unwrap();
        let dark_cube = synthesize_scan(&dark(), &b, &noise).unwrap();
        let (rows, cols, n) = cube.shape();
        for r in rows / 2 - 1..=rows / 2 {
            for c in cols / 2 - 1..=cols / 2 {
                let mean = cube.waveform(r, c).iter().sum::<f64>() / n as f64;
                let constant = dark_cube.counts[[r, c, 0]];
                // the enveloped oscillation averages out up to the envelope's
                // residual DC leakage
                assert!((mean - constant).abs() < 0.02 * constant, "{mean} {constant}");
            }
        }
    }

    #[test]
    fn background_only_is_poisson() {
        let mut b = small_bundle();
        b.scan.frames_averaged_per_step = 1;
        b.optical.signal_flux = 0.0;
        let noise = NoiseSpec { shot_noise: true, rng_seed: 11, ..NoiseSpec::noiseless(&b.camera) };
        let cube = synthesize_scan(&plain_mirror(), &b, &noise).unwrap();
        let all: Vec<f64> = cube.counts.iter().copied().collect();
        let n = all.len() as f64;
        let mean = all.iter().sum::<f64>() / n;
        let var = all.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
        assert!((mean - 150.0).abs() < 1.0, "{mean}");
        assert!((var - 150.0).abs() < 6.0, "{var}");
    }

    #[test]
    fn seeded_runs_identical() {
        let b = small_bundle();
        let noise = NoiseSpec::experimental(&b.camera, 5);
        let a = synthesize_scan(&plain_mirror(), &b, &noise).unwrap();
        let c = synthesize_scan(&plain_mirror(), &b, &noise).unwrap();
        assert_eq!(a, c);
        let other = NoiseSpec { rng_seed: 6, ..noise };
        assert_ne!(a, synthesize_scan(&plain_mirror(), &b, &other).unwrap());
    }

    #[test]
    fn thread_count_does_not_change_result() {
        let b = small_bundle();
        let noise = NoiseSpec::experimental(&b.camera, 9);
        let one = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let four = rayon::ThreadPoolBuilder::new().num_threads(4).build().unwrap();
        let a = one.install(|| synthesize_scan(&plain_mirror(), &b, &noise).unwrap());
        let c = four.install(|| synthesize_scan(&plain_mirror(), &b, &noise).unwrap());
        assert_eq!(a, c);
    }

    #[test]
    fn oscillation_linear_in_magnitude() {
        let mut b = small_bundle();
        b.camera.background_rate = 0.0;
        let noise = NoiseSpec::noiseless(&b.camera);
        let full = synthesize_scan(&plain_mirror(), &b, &noise).unwrap();
        let part = synthesize_scan(&plain_mirror().scaled(0.37), &b, &noise).unwrap();
        let dark_cube = synthesize_scan(&dark(), &b, &noise).unwrap();
        let (rows, cols, n) = full.shape();
        let (r, c) = (rows / 2, cols / 2);
        for k in 0..n {
            let base = dark_cube.counts[[r, c, k]];
            let a = full.counts[[r, c, k]] - base;
            let s = part.counts[[r, c, k]] - base;
            assert!((s - 0.37 * a).abs() <= 1e-9 * base, "{k}: {s} vs {}", 0.37 * a);
        }
    }

    #[test]
    fn envelope_symmetric_about_zero_delay() {
        let b = small_bundle();
        let mut noise = NoiseSpec::noiseless(&b.camera);
        noise.background_rate = 0.0;
        let cube = synthesize_scan(&plain_mirror(), &b, &noise).unwrap();
        let (rows, cols, n) = cube.shape();
        let w = cube.waveform(rows / 2, cols / 2);
        let dc = synthesize_scan(&dark(), &b, &noise).unwrap().counts[[rows / 2, cols / 2, 0]];
        // cos is even in τ, so the waveform itself is symmetric
        for k in 0..n / 2 {
            assert!(((w[k] - dc) - (w[n - 1 - k] - dc)).abs() < 1e-9 * dc);
        }
    }

    #[test]
    fn cube_check_rejects_bad_axes() {
        let counts = Array3::<f64>::zeros((2, 2, 3));
        assert!(WaveformCube::new(counts.clone(), 1e-5, vec![0.0, 1.0, 3.0]).is_err());
        assert!(WaveformCube::new(counts.clone(), 1e-5, vec![0.0, 1.0]).is_err());
        assert!(WaveformCube::new(counts, 1e-5, vec![0.0, 1.0, 2.0]).is_ok());
    }
}
