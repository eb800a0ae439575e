//! Quantum distillation: isolating the interference term of each pixel by
//! its modulation frequency over the delay scan.

use std::f64::consts::PI;
use std::sync::Arc;

use nalgebra::{Matrix3, Vector3};
use ndarray::Array2;
use rayon::prelude::*;
use rustfft::{num_complex::Complex, Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fit::{fit_curve, GaussianWavePacket};
use crate::optics::AnalysisConfig;
use crate::synth::WaveformCube;

pub const MIN_WAVEFORM_LEN: usize = 8;

#[derive(Debug, Clone, PartialEq)]
pub struct PixelSpectrum {
    pub frequencies: Vec<f64>,
    pub amplitudes: Vec<f64>,
}

impl PixelSpectrum {
    /// Largest amplitude in `[lo, hi]` and its frequency.
    pub fn band_peak(&self, lo: f64, hi: f64) -> Result<(f64, f64)> {
        self.frequencies
            .iter()
            .zip(&self.amplitudes)
            .filter(|(f, _)| **f >= lo && **f <= hi)
            .fold(None, |best: Option<(f64, f64)>, (&f, &a)| match best {
                Some((_, b)) if b >= a => best,
                _ => Some((f, a)),
            })
            .ok_or(Error::EmptyBand { lo, hi })
    }
}

/// Parameters of `A sin(ν t + φ) exp(−(t − t_c)² / (2 w²)) + y0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WaveformFitParams {
    pub amplitude: f64,
    /// rad/s
    pub angular_frequency: f64,
    pub phase: f64,
    pub envelope_center: f64,
    pub envelope_width: f64,
    pub offset: f64,
}

impl WaveformFitParams {
    pub fn eval(&self, t: f64) -> f64 {
        let env = (-(t - self.envelope_center).powi(2) / (2.0 * self.envelope_width.powi(2))).exp();
        self.amplitude * (self.angular_frequency * t + self.phase).sin() * env + self.offset
    }

    pub fn shared(&self) -> SharedParams {
        SharedParams {
            angular_frequency: self.angular_frequency,
            envelope_center: self.envelope_center,
            envelope_width: self.envelope_width,
            offset: self.offset,
        }
    }

    /// Folds a negative amplitude into the phase and wraps the phase.
    fn canonical(mut self) -> Self {
        if self.amplitude < 0.0 {
            self.amplitude = -self.amplitude;
            self.phase += PI;
        }
        self.envelope_width = self.envelope_width.abs();
        self.phase = wrap_phase(self.phase);
        self
    }
}

/// The parameters common to every pixel, `(ν, t_c, w, y0)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SharedParams {
    pub angular_frequency: f64,
    pub envelope_center: f64,
    pub envelope_width: f64,
    pub offset: f64,
}

/// Wraps into `(−π, π]`.
pub fn wrap_phase(phi: f64) -> f64 {
    let r = phi.rem_euclid(2.0 * PI);
    if r > PI {
        r - 2.0 * PI
    } else {
        r
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DistilledImage {
    /// Band-peak FFT amplitude in counts.
    pub amplitude: Array2<f64>,
    /// Radians; NaN where undefined.
    pub phase: Array2<f64>,
    pub valid_mask: Array2<bool>,
    pub band: (f64, f64),
    /// Mean counts of each raw waveform.
    pub mean_counts: Array2<f64>,
    /// Quiet-band peak amplitude in the same units as `amplitude`.
    pub noise_floor: Array2<f64>,
}

impl DistilledImage {
    pub fn shape(&self) -> (usize, usize) {
        self.amplitude.dim()
    }

    fn depth(values: &Array2<f64>, mean: &Array2<f64>) -> Array2<f64> {
        ndarray::Zip::from(values).and(mean).map_collect(|&a, &m| if m > 0.0 { a / m } else { 0.0 })
    }

    /// Amplitude as a fraction of the mean pixel counts.
    pub fn modulation_depth(&self) -> Array2<f64> {
        Self::depth(&self.amplitude, &self.mean_counts)
    }

    pub fn noise_floor_depth(&self) -> Array2<f64> {
        Self::depth(&self.noise_floor, &self.mean_counts)
    }

    /// Amplitude-weighted centroid `(row, col)` over valid pixels.
    pub fn centroid(&self) -> Option<(f64, f64)> {
        let mut acc = (0.0, 0.0, 0.0);
        for ((r, c), &a) in self.amplitude.indexed_iter() {
            if self.valid_mask[[r, c]] && a.is_finite() {
                acc.0 += a * r as f64;
                acc.1 += a * c as f64;
                acc.2 += a;
            }
        }
        (acc.2 > 0.0).then(|| (acc.0 / acc.2, acc.1 / acc.2))
    }
}

fn taper_weight(i: usize, ramp: usize) -> f64 {
    0.5 * (1.0 - (PI * i as f64 / ramp as f64).cos())
}

/// Subtracts the mean and applies a cosine ramp over `taper_fraction` of the
/// samples at each end, reaching zero at both endpoints.
pub fn preprocess_waveform_with(w: &[f64], taper_fraction: f64) -> Result<Vec<f64>> {
    let n = w.len();
    if n < MIN_WAVEFORM_LEN {
        return Err(Error::TooShort { len: n, min: MIN_WAVEFORM_LEN });
    }
    let mean = w.iter().sum::<f64>() / n as f64;
    let mut out: Vec<f64> = w.iter().map(|v| v - mean).collect();
    let ramp = ((taper_fraction * n as f64).ceil() as usize).clamp(1, n / 2);
    for i in 0..ramp {
        let g = taper_weight(i, ramp);
        out[i] *= g;
        out[n - 1 - i] *= g;
    }
    Ok(out)
}

pub fn preprocess_waveform(w: &[f64]) -> Result<Vec<f64>> {
    preprocess_waveform_with(w, AnalysisConfig::default().taper_fraction)
}

/// Zero-padded magnitude spectrum for waveforms of one fixed length.
///
/// Amplitudes are `2|X_k| / N` with `N` the unpadded length, so a pure
/// sinusoid of amplitude `A` peaks near `A`.
#[derive(Clone)]
pub struct SpectrumAnalyzer {
    fft: Arc<dyn Fft<f64>>,
    len: usize,
    dt: f64,
}

impl SpectrumAnalyzer {
    pub fn new(len: usize, dt: f64, pad_factor: usize) -> Self {
        let padded = (len * pad_factor.max(1)).next_power_of_two();
        let fft = FftPlanner::new().plan_fft_forward(padded);
        Self { fft, len, dt }
    }

    pub fn padded_len(&self) -> usize {
        self.fft.len()
    }

    pub fn frequencies(&self) -> Vec<f64> {
        let m = self.padded_len();
        (0..=m / 2).map(|k| k as f64 / (m as f64 * self.dt)).collect()
    }

    pub fn amplitudes(&self, w: &[f64]) -> Vec<f64> {
        assert_eq!(w.len(), self.len, "waveform length differs from the analyzer's");
        let m = self.padded_len();
        let mut buf: Vec<Complex<f64>> = w.iter().map(|&v| Complex::new(v, 0.0)).collect();
        buf.resize(m, Complex::new(0.0, 0.0));
        self.fft.process(&mut buf);
        let scale = 2.0 / self.len as f64;
        buf[..=m / 2].iter().map(|c| c.norm() * scale).collect()
    }

    pub fn spectrum(&self, w: &[f64]) -> PixelSpectrum {
        PixelSpectrum { frequencies: self.frequencies(), amplitudes: self.amplitudes(w) }
    }
}

/// Magnitude spectrum of `w` sampled at `dt`, zero-padded to the next power
/// of two of at least four times its length.
pub fn waveform_spectrum(w: &[f64], dt: f64) -> PixelSpectrum {
    assert!(dt > 0.0, "sample spacing must be positive");
    SpectrumAnalyzer::new(w.len(), dt, AnalysisConfig::default().pad_factor).spectrum(w)
}

pub fn band_peak_amplitude(s: &PixelSpectrum, f_lo: f64, f_hi: f64) -> Result<f64> {
    s.band_peak(f_lo, f_hi).map(|(_, a)| a)
}

fn check_bands(analyzer: &SpectrumAnalyzer, bands: &[[f64; 2]]) -> Result<()> {
    let freqs = analyzer.frequencies();
    for b in bands {
        if !freqs.iter().any(|f| *f >= b[0] && *f <= b[1]) {
            return Err(Error::EmptyBand { lo: b[0], hi: b[1] });
        }
    }
    Ok(())
}

/// Band-peak amplitude and quiet-band floor of every pixel; phase is left
/// undefined.
pub fn distill_image(cube: &WaveformCube, analysis: &AnalysisConfig) -> Result<DistilledImage> {
    cube.check()?;
    let (rows, cols, n) = cube.shape();
    if n < MIN_WAVEFORM_LEN {
        return Err(Error::TooShort { len: n, min: MIN_WAVEFORM_LEN });
    }
    let analyzer = SpectrumAnalyzer::new(n, cube.delay_step(), analysis.pad_factor);
    check_bands(&analyzer, &[analysis.signal_band, analysis.quiet_band])?;
    let freqs = analyzer.frequencies();
    let peak_in = |amps: &[f64], band: [f64; 2]| {
        freqs
            .iter()
            .zip(amps)
            .filter(|(f, _)| **f >= band[0] && **f <= band[1])
            .map(|(_, a)| *a)
            .fold(0.0, f64::max)
    };
    let per_pixel: Vec<(f64, f64, f64)> = (0..rows * cols)
        .into_par_iter()
        .map(|p| {
            let w = cube.waveform(p / cols, p % cols);
            let mean = w.iter().sum::<f64>() / n as f64;
            let x = preprocess_waveform_with(&w, analysis.taper_fraction).expect("length checked");
            let amps = analyzer.amplitudes(&x);
            (peak_in(&amps, analysis.signal_band), peak_in(&amps, analysis.quiet_band), mean)
        })
        .collect();
    let amplitude = Array2::from_shape_fn((rows, cols), |(r, c)| per_pixel[r * cols + c].0);
    let noise_floor = Array2::from_shape_fn((rows, cols), |(r, c)| per_pixel[r * cols + c].1);
    let mean_counts = Array2::from_shape_fn((rows, cols), |(r, c)| per_pixel[r * cols + c].2);
    Ok(DistilledImage {
        amplitude,
        phase: Array2::from_elem((rows, cols), f64::NAN),
        valid_mask: cube.valid.clone(),
        band: (analysis.signal_band[0], analysis.signal_band[1]),
        mean_counts,
        noise_floor,
    })
}

/// Pixels whose amplitude is at least `fraction` of the image maximum.
pub fn brightest_region(image: &DistilledImage, fraction: f64) -> Vec<(usize, usize)> {
    let max = image
        .amplitude
        .indexed_iter()
        .filter(|(i, _)| image.valid_mask[*i])
        .map(|(_, a)| *a)
        .fold(0.0, f64::max);
    image
        .amplitude
        .indexed_iter()
        .filter(|(i, a)| image.valid_mask[*i] && **a >= fraction * max && max > 0.0)
        .map(|(i, _)| i)
        .collect()
}

const PS: f64 = 1e-12;

/// Full six-parameter fit of one waveform.
///
/// Seeds: ν from the signal-band peak, `t_c` and `w` from the first two
/// moments of the squared deviation from the mean, `y0` from the mean.
/// Fails with `InsufficientSnr` when the signal-band peak is not three
/// times the quiet-band peak.
pub fn fit_waveform(w: &[f64], delay_times: &[f64], analysis: &AnalysisConfig) -> Result<WaveformFitParams> {
    let n = w.len();
    if n < MIN_WAVEFORM_LEN {
        return Err(Error::TooShort { len: n, min: MIN_WAVEFORM_LEN });
    }
    if delay_times.len() != n {
        return Err(Error::ShapeMismatch(vec![n], vec![delay_times.len()]));
    }
    let dt = delay_times[1] - delay_times[0];
    let analyzer = SpectrumAnalyzer::new(n, dt, analysis.pad_factor);
    let spectrum = analyzer.spectrum(&preprocess_waveform_with(w, analysis.taper_fraction)?);
    let (f_peak, a_peak) = spectrum.band_peak(analysis.signal_band[0], analysis.signal_band[1])?;
    let (_, a_quiet) = spectrum.band_peak(analysis.quiet_band[0], analysis.quiet_band[1])?;
    let snr = if a_peak > 0.0 { a_peak / a_quiet.max(f64::MIN_POSITIVE) } else { 0.0 };
    if snr <= 3.0 {
        return Err(Error::InsufficientSnr { snr });
    }

    let y0 = w.iter().sum::<f64>() / n as f64;
    let e: Vec<f64> = w.iter().map(|v| (v - y0).powi(2)).collect();
    let total: f64 = e.iter().sum();
    let tc = delay_times.iter().zip(&e).map(|(t, e)| t * e).sum::<f64>() / total;
    let var = delay_times.iter().zip(&e).map(|(t, e)| (t - tc).powi(2) * e).sum::<f64>() / total;
    // squared Gaussian envelope has variance w²/2
    let width = (2.0 * var).sqrt().max(dt);
    let nu = 2.0 * PI * f_peak;
    let seed_shared = SharedParams { angular_frequency: nu, envelope_center: tc, envelope_width: width, offset: y0 };
    let (a, phi) = fit_pixel_phase(w, delay_times, &seed_shared)?;

    // work in picoseconds so all parameters are of order unity
    let t_ps: Vec<f64> = delay_times.iter().map(|t| t / PS).collect();
    let scale = a.max(f64::MIN_POSITIVE);
    let y: Vec<f64> = w.iter().map(|v| (v - y0) / scale).collect();
    let init = [1.0, nu * PS, phi, tc / PS, width / PS, 0.0];
    let fit = fit_curve(&GaussianWavePacket, &t_ps, &y, &init)?;
    let p = &fit.params;
    Ok(WaveformFitParams {
        amplitude: p[0] * scale,
        angular_frequency: p[1] / PS,
        phase: p[2],
        envelope_center: p[3] * PS,
        envelope_width: p[4] * PS,
        offset: y0 + p[5] * scale,
    }
    .canonical())
}

/// Shared parameters from a fit to the mean waveform of `roi`.
pub fn fit_shared_params(
    cube: &WaveformCube,
    roi: &[(usize, usize)],
    analysis: &AnalysisConfig,
) -> Result<SharedParams> {
    if roi.is_empty() {
        return Err(Error::EmptyRegion);
    }
    let n = cube.delay_times.len();
    let mut mean = vec![0.0; n];
    for &(r, c) in roi {
        for (k, v) in cube.waveform(r, c).into_iter().enumerate() {
            mean[k] += v / roi.len() as f64;
        }
    }
    fit_waveform(&mean, &cube.delay_times, analysis).map(|p| p.shared())
}

/// Number of samples within two envelope widths of the centre.
fn envelope_support(delay_times: &[f64], shared: &SharedParams) -> usize {
    delay_times
        .iter()
        .filter(|t| (**t - shared.envelope_center).abs() <= 2.0 * shared.envelope_width)
        .count()
}

/// Closed-form `(A, φ)` with the shared parameters held fixed.
///
/// Solves the linear least-squares problem in `(A cos φ, A sin φ, c)`
/// against the enveloped quadrature pair plus a constant, so a per-pixel
/// offset does not leak into the phase.
pub fn fit_pixel_phase(w: &[f64], delay_times: &[f64], shared: &SharedParams) -> Result<(f64, f64)> {
    if w.len() != delay_times.len() {
        return Err(Error::ShapeMismatch(vec![w.len()], vec![delay_times.len()]));
    }
    let support = envelope_support(delay_times, shared);
    if support < 3 || !(shared.envelope_width > 0.0) {
        return Err(Error::DegenerateEnvelope { support });
    }
    let mut ata = Matrix3::<f64>::zeros();
    let mut atb = Vector3::<f64>::zeros();
    for (&t, &y) in delay_times.iter().zip(w) {
        let env = (-(t - shared.envelope_center).powi(2) / (2.0 * shared.envelope_width.powi(2))).exp();
        let (s, c) = (shared.angular_frequency * t).sin_cos();
        let row = Vector3::new(s * env, c * env, 1.0);
        ata += row * row.transpose();
        atb += row * (y - shared.offset);
    }
    let x = ata.lu().solve(&atb).ok_or(Error::DegenerateEnvelope { support })?;
    let amplitude = x[0].hypot(x[1]);
    let phase = if amplitude > 0.0 { wrap_phase(x[1].atan2(x[0])) } else { 0.0 };
    Ok((amplitude, phase))
}

/// Fills `image.phase` from per-pixel fits; pixels with no fitted amplitude
/// keep an undefined phase.
pub fn fit_phase_image(cube: &WaveformCube, shared: &SharedParams, image: &mut DistilledImage) -> Result<()> {
    let (rows, cols, _) = cube.shape();
    if image.shape() != (rows, cols) {
        return Err(Error::ShapeMismatch(vec![rows, cols], vec![image.shape().0, image.shape().1]));
    }
    let fits: Vec<Result<(f64, f64)>> = (0..rows * cols)
        .into_par_iter()
        .map(|p| fit_pixel_phase(&cube.waveform(p / cols, p % cols), &cube.delay_times, shared))
        .collect();
    for (p, fit) in fits.into_iter().enumerate() {
        let (r, c) = (p / cols, p % cols);
        let (a, phi) = fit?;
        let tiny = 1e-12 * image.mean_counts[[r, c]].abs().max(1.0);
        image.phase[[r, c]] = if image.valid_mask[[r, c]] && a > tiny { phi } else { f64::NAN };
    }
    Ok(())
}

/// Distills amplitude and phase of a cube; the shared fit uses the pixels
/// above half the peak amplitude.
pub fn distill_with_phase(cube: &WaveformCube, analysis: &AnalysisConfig) -> Result<(DistilledImage, SharedParams)> {
    let mut image = distill_image(cube, analysis)?;
    let roi = brightest_region(&image, 0.5);
    let shared = fit_shared_params(cube, &roi, analysis)?;
    fit_phase_image(cube, &shared, &mut image)?;
    Ok((image, shared))
}

/// Expresses `image` relative to `reference`.
///
/// Amplitudes become ratios and phases differences. A pixel stays valid
/// only where the reference modulation depth exceeds its quiet-band floor
/// by more than `threshold`.
pub fn reference_normalize(
    image: &DistilledImage,
    reference: &DistilledImage,
    threshold: f64,
) -> Result<DistilledImage> {
    if image.shape() != reference.shape() {
        let (a, b) = (image.shape(), reference.shape());
        return Err(Error::ShapeMismatch(vec![a.0, a.1], vec![b.0, b.1]));
    }
    let ref_depth = reference.modulation_depth();
    let ref_floor = reference.noise_floor_depth();
    let (rows, cols) = image.shape();
    let valid = Array2::from_shape_fn((rows, cols), |i| {
        image.valid_mask[i] && reference.valid_mask[i] && ref_depth[i] - ref_floor[i] > threshold
    });
    let ratio = |a: f64, r: f64| if r > 0.0 { a / r } else { 0.0 };
    Ok(DistilledImage {
        amplitude: Array2::from_shape_fn((rows, cols), |i| ratio(image.amplitude[i], reference.amplitude[i])),
        phase: Array2::from_shape_fn((rows, cols), |i| {
            let d = image.phase[i] - reference.phase[i];
            if valid[i] && d.is_finite() {
                wrap_phase(d)
            } else {
                f64::NAN
            }
        }),
        valid_mask: valid,
        band: image.band,
        mean_counts: image.mean_counts.clone(),
        noise_floor: Array2::from_shape_fn((rows, cols), |i| ratio(image.noise_floor[i], reference.amplitude[i])),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    const DT: f64 = 66.7e-15;

    fn tone(f: f64, n: usize, amp: f64) -> Vec<f64> {
        (0..n).map(|k| amp * (2.0 * PI * f * k as f64 * DT).sin()).collect()
    }

    fn peak_bin(x: &[f64]) -> usize {
        let a = SpectrumAnalyzer::new(x.len(), DT, 4).amplitudes(x);
        (0..a.len()).max_by(|&i, &j| a[i].total_cmp(&a[j])).unwrap()
    }

    #[test]
    fn constant_becomes_zero() {
        assert!(preprocess_waveform(&[3.5; 20]).unwrap().iter().all(|v| v.abs() < 1e-15));
    }

    #[test]
    fn endpoints_vanish() {
        let w: Vec<f64> = (0..37).map(|i| (i as f64 * 0.7).sin() + 0.1 * i as f64).collect();
        let p = preprocess_waveform(&w).unwrap();
        assert_eq!(p[0], 0.0);
        assert_eq!(p[36], 0.0);
        assert!(matches!(preprocess_waveform(&[1.0; 7]), Err(Error::TooShort { len: 7, min: 8 })));
    }

    #[test]
    fn preprocessing_keeps_dominant_bin() {
        let n = 120;
        let period = 10.0;
        let w: Vec<f64> = (0..n).map(|k| 5.0 + (2.0 * PI * k as f64 / period).sin()).collect();
        let mut centred = w.clone();
        let mean = w.iter().sum::<f64>() / n as f64;
        centred.iter_mut().for_each(|v| *v -= mean);
        assert_eq!(peak_bin(&preprocess_waveform(&w).unwrap()), peak_bin(&centred));
    }

    #[test]
    fn single_tone_peak() {
        let s = waveform_spectrum(&tone(1.5e12, 150, 1.0), DT);
        let (f, a) = s.band_peak(0.0, 7.5e12).unwrap();
        let half_bin = 0.5 * s.frequencies[1];
        assert!((f - 1.5e12).abs() <= half_bin, "{f}");
        assert!((a - 1.0).abs() < 0.05, "{a}");
        assert!((band_peak_amplitude(&s, 1.4e12, 1.6e12).unwrap() - a).abs() < 1e-15);
    }

    #[test]
    fn zeros_give_zero_spectrum() {
        assert!(waveform_spectrum(&[0.0; 64], DT).amplitudes.iter().all(|&a| a == 0.0));
    }

    #[test]
    fn two_tones_resolved() {
        let w: Vec<f64> =
            tone(1.0e12, 150, 1.0).iter().zip(tone(1.5e12, 150, 1.0)).map(|(a, b)| a + b).collect();
        let s = waveform_spectrum(&w, DT);
        let bin = s.frequencies[1];
        let (f1, _) = s.band_peak(0.8e12, 1.2e12).unwrap();
        let (f2, _) = s.band_peak(1.3e12, 1.7e12).unwrap();
        assert!((f1 - 1.0e12).abs() <= bin);
        assert!((f2 - 1.5e12).abs() <= bin);
    }

    #[test]
    fn out_of_band_tone_is_leakage_only() {
        let x = preprocess_waveform(&tone(1.0e12, 150, 1.0)).unwrap();
        let s = waveform_spectrum(&x, DT);
        let leak = band_peak_amplitude(&s, 1.4e12, 1.6e12).unwrap();
        // sidelobes of a 10 % Tukey window four resolution bins out
        assert!(leak < 0.1, "{leak}");
        assert!(matches!(band_peak_amplitude(&s, 1.0e12, 1.0e12 + 1.0), Err(Error::EmptyBand { .. })));
    }

    #[test]
    fn white_noise_band_matches_quiet_floor() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let (mut band_sum, mut quiet_sum) = (0.0, 0.0);
        for _ in 0..100 {
            let w: Vec<f64> = (0..150).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
            let s = waveform_spectrum(&preprocess_waveform(&w).unwrap(), DT);
            let band = band_peak_amplitude(&s, 1.4e12, 1.6e12).unwrap();
            let quiet = band_peak_amplitude(&s, 0.6e12, 1.2e12).unwrap();
            band_sum += band;
            quiet_sum += quiet;
        }
        let ratio = band_sum / quiet_sum;
        assert!(ratio > 0.5 && ratio < 2.0, "{ratio}");
    }

    #[test]
    fn offset_invariance() {
        let w = tone(1.5e12, 150, 2.0);
        let shifted: Vec<f64> = w.iter().map(|v| v + 1234.5).collect();
        let a = band_peak_amplitude(&waveform_spectrum(&preprocess_waveform(&w).unwrap(), DT), 1.4e12, 1.6e12);
        let b =
            band_peak_amplitude(&waveform_spectrum(&preprocess_waveform(&shifted).unwrap(), DT), 1.4e12, 1.6e12);
        assert_relative_eq!(a.unwrap(), b.unwrap(), max_relative = 1e-9);
    }

    fn truth() -> WaveformFitParams {
        WaveformFitParams {
            amplitude: 37.0,
            angular_frequency: 2.0 * PI * 1.52e12,
            phase: 0.3 * PI,
            envelope_center: 0.4e-12,
            envelope_width: 1.1e-12,
            offset: 5000.0,
        }
    }

    fn delays(n: usize) -> Vec<f64> {
        (0..n).map(|k| (k as f64 - (n as f64 - 1.0) / 2.0) * DT).collect()
    }

    fn generate(p: &WaveformFitParams, t: &[f64]) -> Vec<f64> {
        t.iter().map(|&t| p.eval(t)).collect()
    }

    #[test]
    fn waveform_fit_round_trip() {
        let t = delays(150);
        let p = truth();
        let fit = fit_waveform(&generate(&p, &t), &t, &AnalysisConfig::default()).unwrap();
        assert_relative_eq!(fit.angular_frequency, p.angular_frequency, max_relative = 1e-6);
        assert_relative_eq!(fit.envelope_center, p.envelope_center, max_relative = 1e-6);
        assert_relative_eq!(fit.envelope_width, p.envelope_width, max_relative = 1e-6);
        assert_relative_eq!(fit.offset, p.offset, max_relative = 1e-6);
        assert_relative_eq!(fit.amplitude, p.amplitude, max_relative = 1e-6);
        assert!((fit.phase - p.phase).abs() < 1e-6);
        let rms = (t.iter().map(|&x| (fit.eval(x) - p.eval(x)).powi(2)).sum::<f64>() / t.len() as f64).sqrt();
        assert!(rms / p.amplitude < 1e-8, "{rms}");
    }

    #[test]
    fn flat_waveform_lacks_snr() {
        let t = delays(150);
        assert!(matches!(
            fit_waveform(&vec![10.0; 150], &t, &AnalysisConfig::default()),
            Err(Error::InsufficientSnr { .. })
        ));
    }

    #[test]
    fn pixel_phase_round_trip() {
        let t = delays(150);
        let p = truth();
        let (a, phi) = fit_pixel_phase(&generate(&p, &t), &t, &p.shared()).unwrap();
        assert!((phi - 0.3 * PI).abs() < 1e-6);
        assert_relative_eq!(a, p.amplitude, max_relative = 1e-9);

        let flipped = WaveformFitParams { phase: p.phase + PI, ..p };
        let (a2, phi2) = fit_pixel_phase(&generate(&flipped, &t), &t, &p.shared()).unwrap();
        assert_relative_eq!(a2, a, max_relative = 1e-9);
        assert!((wrap_phase(phi2 - phi - PI)).abs() < 1e-9);

        let zero = WaveformFitParams { amplitude: 0.0, ..p };
        let (a0, _) = fit_pixel_phase(&generate(&zero, &t), &t, &p.shared()).unwrap();
        assert!(a0 < 1e-9);
    }

    #[test]
    fn pixel_phase_ignores_offset_error() {
        let t = delays(150);
        let p = truth();
        let w: Vec<f64> = generate(&p, &t).iter().map(|v| v + 3.0).collect();
        let (_, phi) = fit_pixel_phase(&w, &t, &p.shared()).unwrap();
        assert!((phi - p.phase).abs() < 1e-9);
    }

    #[test]
    fn narrow_envelope_is_degenerate() {
        let t = delays(150);
        let shared = SharedParams { envelope_width: 0.2 * DT, ..truth().shared() };
        assert!(matches!(
            fit_pixel_phase(&vec![0.0; 150], &t, &shared),
            Err(Error::DegenerateEnvelope { .. })
        ));
    }

    #[test]
    fn wrap_range() {
        assert_eq!(wrap_phase(PI), PI);
        assert!((wrap_phase(-PI) - PI).abs() < 1e-15);
        assert!((wrap_phase(3.0 * PI / 2.0) + PI / 2.0).abs() < 1e-15);
    }

    fn image_from(cube_amp: Array2<f64>) -> DistilledImage {
        let dim = cube_amp.dim();
        DistilledImage {
            amplitude: cube_amp,
            phase: Array2::zeros(dim),
            valid_mask: Array2::from_elem(dim, true),
            band: (1.4e12, 1.6e12),
            mean_counts: Array2::from_elem(dim, 100.0),
            noise_floor: Array2::from_elem(dim, 0.01),
        }
    }

    #[test]
    fn normalize_against_itself() {
        let img = image_from(Array2::from_shape_fn((4, 4), |(r, c)| 1.0 + (r + c) as f64));
        let n = reference_normalize(&img, &img, 1e-3).unwrap();
        assert!(n.valid_mask.iter().all(|&v| v));
        assert!(n.amplitude.iter().all(|&a| (a - 1.0).abs() < 1e-15));
        assert!(n.phase.iter().all(|&p| p == 0.0));
        let small = image_from(Array2::zeros((3, 4)));
        assert!(matches!(reference_normalize(&small, &img, 1e-3), Err(Error::ShapeMismatch(..))));
    }

    #[test]
    fn normalize_masks_weak_reference() {
        let mut reference = image_from(Array2::from_elem((2, 2), 1.0));
        reference.amplitude[[0, 0]] = 0.05;
        let n = reference_normalize(&reference, &reference, 1e-3).unwrap();
        assert!(!n.valid_mask[[0, 0]]);
        assert!(n.phase[[0, 0]].is_nan());
        assert!(n.valid_mask[[1, 1]]);
    }
}
