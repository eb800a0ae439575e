//! Metrology on distilled images.

use std::ops::Range;

use ndarray::Array2;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::distill::{preprocess_waveform_with, DistilledImage, SpectrumAnalyzer, MIN_WAVEFORM_LEN};
use crate::error::{Error, Result};
use crate::fit::{fit_curve, ErfStep};
use crate::optics::AnalysisConfig;
use crate::synth::WaveformCube;

/// A value with a one-sigma style uncertainty.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Measured {
    pub value: f64,
    pub uncertainty: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MetrologyReport {
    /// Sample-plane field of view, metres.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub fov: Option<Measured>,
    /// Sample-plane resolution, metres.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub resolution: Option<Measured>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub spatial_modes: Option<f64>,
    /// Median quiet-band floor as modulation depth.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub noise_floor: Option<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub extinction: Vec<RegionValue>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub phase_steps: Vec<RegionValue>,
    pub notes: String,
}

/// A scalar attached to a labelled image region.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionValue {
    pub label: String,
    pub value: f64,
}

impl MetrologyReport {
    pub fn note(&mut self, text: impl AsRef<str>) {
        if !self.notes.is_empty() {
            self.notes.push('\n');
        }
        self.notes.push_str(text.as_ref());
    }

    /// Fills `spatial_modes` when both FoV and resolution are present.
    pub fn derive_modes(&mut self) {
        if let (Some(f), Some(r)) = (self.fov, self.resolution) {
            self.spatial_modes = Some(spatial_mode_count(f.value, r.value));
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

/// Per-pixel peak amplitude inside `band`, in the units of
/// [`DistilledImage::amplitude`].
pub fn band_peak_image(cube: &WaveformCube, band: [f64; 2], analysis: &AnalysisConfig) -> Result<Array2<f64>> {
    cube.check()?;
    let (rows, cols, n) = cube.shape();
    if n < MIN_WAVEFORM_LEN {
        return Err(Error::TooShort { len: n, min: MIN_WAVEFORM_LEN });
    }
    let analyzer = SpectrumAnalyzer::new(n, cube.delay_step(), analysis.pad_factor);
    let freqs = analyzer.frequencies();
    let bins: Vec<usize> = (0..freqs.len()).filter(|&k| freqs[k] >= band[0] && freqs[k] <= band[1]).collect();
    if bins.is_empty() {
        return Err(Error::EmptyBand { lo: band[0], hi: band[1] });
    }
    let values: Vec<f64> = (0..rows * cols)
        .into_par_iter()
        .map(|p| {
            let x = preprocess_waveform_with(&cube.waveform(p / cols, p % cols), analysis.taper_fraction)
                .expect("length checked");
            let a = analyzer.amplitudes(&x);
            bins.iter().map(|&k| a[k]).fold(0.0, f64::max)
        })
        .collect();
    Ok(Array2::from_shape_vec((rows, cols), values).expect("shape matches"))
}

/// Per-pixel maximum spectral amplitude in the quiet band, where no
/// interference is expected.
pub fn noise_floor(cube: &WaveformCube, quiet_band: [f64; 2], analysis: &AnalysisConfig) -> Result<Array2<f64>> {
    if !(quiet_band[0] > 0.0 && quiet_band[0] < quiet_band[1]) {
        return Err(Error::EmptyBand { lo: quiet_band[0], hi: quiet_band[1] });
    }
    band_peak_image(cube, quiet_band, analysis)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FovMethod {
    /// Chord along the row through the amplitude centroid.
    #[default]
    CrossSection,
    /// Twice the radius where the azimuthal mean drops below threshold.
    Radial,
}

/// Excess modulation depth over floor and threshold; negative means the
/// pixel fails the cut.
fn excess(reference: &DistilledImage, floor: &Array2<f64>, threshold: f64) -> Array2<f64> {
    Array2::from_shape_fn(reference.shape(), |i| {
        let m = reference.mean_counts[i];
        if !reference.valid_mask[i] || !(m > 0.0) {
            return -threshold.abs().max(f64::MIN_POSITIVE);
        }
        (reference.amplitude[i] - floor[i]) / m - threshold
    })
}

/// Linear zero crossing between `x` (value `a`) and `x + step` (value `b`).
fn crossing(x: f64, a: f64, b: f64, step: f64) -> f64 {
    x + step * a / (a - b)
}

fn chord_width(g: &[f64], start: usize) -> f64 {
    let n = g.len();
    let mut lo = start;
    while lo > 0 && g[lo - 1] >= 0.0 {
        lo -= 1;
    }
    let left = if lo == 0 { -0.5 } else { crossing(lo as f64, g[lo], g[lo - 1], -1.0) };
    let mut hi = start;
    while hi + 1 < n && g[hi + 1] >= 0.0 {
        hi += 1;
    }
    let right = if hi + 1 == n { n as f64 - 0.5 } else { crossing(hi as f64, g[hi], g[hi + 1], 1.0) };
    right - left
}

fn cross_section(ex: &Array2<f64>, centroid: (f64, f64)) -> Result<f64> {
    let (rows, cols) = ex.dim();
    let r0 = (centroid.0.floor().max(0.0) as usize).min(rows - 1);
    let r1 = (r0 + 1).min(rows - 1);
    let t = (centroid.0 - r0 as f64).clamp(0.0, 1.0);
    let g: Vec<f64> = (0..cols).map(|c| (1.0 - t) * ex[[r0, c]] + t * ex[[r1, c]]).collect();
    let cc = (centroid.1.round().max(0.0) as usize).min(cols - 1);
    let start = if g[cc] >= 0.0 {
        cc
    } else {
        (0..cols).max_by(|&a, &b| g[a].total_cmp(&g[b])).filter(|&c| g[c] >= 0.0).ok_or(Error::NoSignal)?
    };
    Ok(chord_width(&g, start))
}

fn radial(ex: &Array2<f64>, centroid: (f64, f64)) -> Result<f64> {
    let (rows, cols) = ex.dim();
    let max_ring = ((rows.max(cols)) as f64 * std::f64::consts::SQRT_2).ceil() as usize + 1;
    let mut sum = vec![0.0; max_ring];
    let mut count = vec![0usize; max_ring];
    for ((r, c), &v) in ex.indexed_iter() {
        let d = ((r as f64 - centroid.0).powi(2) + (c as f64 - centroid.1).powi(2)).sqrt();
        let k = d.round() as usize;
        sum[k] += v;
        count[k] += 1;
    }
    let profile: Vec<(f64, f64)> =
        (0..max_ring).filter(|&k| count[k] > 0).map(|k| (k as f64, sum[k] / count[k] as f64)).collect();
    if profile.first().map_or(true, |p| p.1 < 0.0) {
        return Err(Error::NoSignal);
    }
    for w in profile.windows(2) {
        if w[1].1 < 0.0 {
            let r = w[0].0 + (w[1].0 - w[0].0) * w[0].1 / (w[0].1 - w[1].1);
            return Ok(2.0 * r);
        }
    }
    Ok(2.0 * profile.last().expect("non-empty").0)
}

/// Width of the region whose modulation depth exceeds the noise floor by
/// `threshold`, in pixels.
pub fn fov_pixels(reference: &DistilledImage, floor: &Array2<f64>, threshold: f64, method: FovMethod) -> Result<f64> {
    if floor.dim() != reference.shape() {
        let (a, b) = (reference.shape(), floor.dim());
        return Err(Error::ShapeMismatch(vec![a.0, a.1], vec![b.0, b.1]));
    }
    let ex = excess(reference, floor, threshold);
    if !ex.iter().any(|&v| v >= 0.0) {
        return Err(Error::NoSignal);
    }
    let centroid = reference.centroid().ok_or(Error::NoSignal)?;
    match method {
        FovMethod::CrossSection => cross_section(&ex, centroid),
        FovMethod::Radial => radial(&ex, centroid),
    }
}

/// Field of view in the sample plane. The uncertainty is half the spread
/// obtained by moving the threshold by ±20 %.
pub fn measure_fov_with(
    reference: &DistilledImage,
    floor: &Array2<f64>,
    threshold: f64,
    pixel_pitch_sample_plane: f64,
    method: FovMethod,
) -> Result<Measured> {
    let width = |t: f64| fov_pixels(reference, floor, t, method).map(|w| w * pixel_pitch_sample_plane);
    let value = width(threshold)?;
    let lo = width(0.8 * threshold).unwrap_or(value);
    let hi = width(1.2 * threshold).unwrap_or(0.0);
    Ok(Measured { value, uncertainty: 0.5 * (lo - hi).abs() })
}

pub fn measure_fov(
    reference: &DistilledImage,
    floor: &Array2<f64>,
    threshold: f64,
    pixel_pitch_sample_plane: f64,
) -> Result<Measured> {
    measure_fov_with(reference, floor, threshold, pixel_pitch_sample_plane, FovMethod::CrossSection)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KnifeEdgeFit {
    /// FWHM of the line spread function.
    pub resolution: Measured,
    /// `[a, b, x0, σ]` of `a + b erf((x − x0) / (√2 σ))`.
    pub params: [f64; 4],
    /// Set when the data is not monotone beyond its fit residual.
    pub non_monotonic: bool,
}

pub const FWHM_PER_SIGMA: f64 = 2.354_820_045_030_949_3;

/// Fits an error function to an edge response and returns the FWHM of its
/// Gaussian derivative.
pub fn knife_edge_resolution(edge_positions: &[f64], integrated_amplitudes: &[f64]) -> Result<KnifeEdgeFit> {
    let n = edge_positions.len();
    if n != integrated_amplitudes.len() {
        return Err(Error::ShapeMismatch(vec![n], vec![integrated_amplitudes.len()]));
    }
    if n < 8 {
        return Err(Error::TooShort { len: n, min: 8 });
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| edge_positions[a].total_cmp(&edge_positions[b]));
    let x: Vec<f64> = order.iter().map(|&i| edge_positions[i]).collect();
    let y: Vec<f64> = order.iter().map(|&i| integrated_amplitudes[i]).collect();

    let x_mid = 0.5 * (x[0] + x[n - 1]);
    let x_scale = 0.5 * (x[n - 1] - x[0]);
    let y_scale = y.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if !(x_scale > 0.0 && y_scale > 0.0) {
        return Err(Error::NoConvergence("edge data has no spread".into()));
    }
    let xs: Vec<f64> = x.iter().map(|v| (v - x_mid) / x_scale).collect();
    let ys: Vec<f64> = y.iter().map(|v| v / y_scale).collect();

    let a0 = 0.5 * (ys[0] + ys[n - 1]);
    let b0 = 0.5 * (ys[n - 1] - ys[0]);
    // seed the edge where the data crosses its midpoint
    let x0 = (0..n - 1)
        .find(|&i| (ys[i] - a0) * (ys[i + 1] - a0) <= 0.0 && ys[i] != ys[i + 1])
        .map(|i| xs[i] + (xs[i + 1] - xs[i]) * (a0 - ys[i]) / (ys[i + 1] - ys[i]))
        .unwrap_or(0.0);
    let fit = fit_curve(&ErfStep, &xs, &ys, &[a0, b0, x0, 0.25])?;
    let p = &fit.params;
    let sigma = p[3].abs() * x_scale;
    let sigma_err = fit.std_error(3).unwrap_or(0.0) * x_scale;

    let rms = (fit.residual_sum_squares / n as f64).sqrt();
    let sign = p[1].signum();
    let non_monotonic = ys.windows(2).any(|w| sign * (w[1] - w[0]) < -3.0 * rms - 1e-12);

    Ok(KnifeEdgeFit {
        resolution: Measured { value: FWHM_PER_SIGMA * sigma, uncertainty: FWHM_PER_SIGMA * sigma_err },
        // σ's sign is absorbed into b
        params: [p[0] * y_scale, p[1] * y_scale * p[3].signum(), x_mid + p[2] * x_scale, sigma],
        non_monotonic,
    })
}

/// Sum of valid amplitudes over `region`.
pub fn integrated_amplitude(image: &DistilledImage, region: &[(usize, usize)]) -> f64 {
    region
        .iter()
        .filter(|&&i| image.valid_mask[i])
        .map(|&i| image.amplitude[i])
        .sum()
}

/// `(2h + 1)²` pixels around the centre of a `rows × cols` grid. For even
/// sizes the block is anchored at the pixel just past the centre line.
pub fn central_region(rows: usize, cols: usize, half: usize) -> Vec<(usize, usize)> {
    let (rc, cc) = (rows / 2, cols / 2);
    let mut v = Vec::new();
    for r in rc.saturating_sub(half)..(rc + half + 1).min(rows) {
        for c in cc.saturating_sub(half)..(cc + half + 1).min(cols) {
            v.push((r, c));
        }
    }
    v
}

pub fn spatial_mode_count(fov: f64, resolution: f64) -> f64 {
    fov / resolution
}

/// `K = 2 log10(a0 / a)`.
pub fn extinction(a0: f64, a: f64) -> Result<f64> {
    if !(a0 > 0.0 && a > 0.0) {
        return Err(Error::NonPositiveAmplitude { a0, a });
    }
    Ok(2.0 * (a0 / a).log10())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExtinctionCurve {
    pub frequencies: Vec<f64>,
    pub k_values: Vec<f64>,
}

impl ExtinctionCurve {
    /// Two-column CSV `frequency_hz,extinction`.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("frequency_hz,extinction\n");
        for (f, k) in self.frequencies.iter().zip(&self.k_values) {
            s.push_str(&format!("{f:.6e},{k:.6e}\n"));
        }
        s
    }

    /// Value at the bin nearest `f`.
    pub fn at(&self, f: f64) -> Option<f64> {
        let i = (0..self.frequencies.len())
            .min_by(|&a, &b| (self.frequencies[a] - f).abs().total_cmp(&(self.frequencies[b] - f).abs()))?;
        Some(self.k_values[i])
    }
}

/// Mean preprocessed amplitude spectrum over `region`.
pub fn region_spectrum(
    cube: &WaveformCube,
    region: &[(usize, usize)],
    analysis: &AnalysisConfig,
) -> Result<(Vec<f64>, Vec<f64>)> {
    if region.is_empty() {
        return Err(Error::EmptyRegion);
    }
    let n = cube.delay_times.len();
    let analyzer = SpectrumAnalyzer::new(n, cube.delay_step(), analysis.pad_factor);
    let mut mean = vec![0.0; analyzer.frequencies().len()];
    for &(r, c) in region {
        let x = preprocess_waveform_with(&cube.waveform(r, c), analysis.taper_fraction)?;
        for (m, a) in mean.iter_mut().zip(analyzer.amplitudes(&x)) {
            *m += a / region.len() as f64;
        }
    }
    Ok((analyzer.frequencies(), mean))
}

/// Extinction spectrum of a region of `sample` against the same region of
/// `reference`, over `band`. Negative values, which only noise can produce
/// for a passive sample, are clamped to zero.
pub fn extinction_curve(
    reference: &WaveformCube,
    sample: &WaveformCube,
    region: &[(usize, usize)],
    band: [f64; 2],
    analysis: &AnalysisConfig,
) -> Result<ExtinctionCurve> {
    let (freqs, a0) = region_spectrum(reference, region, analysis)?;
    let (_, a) = region_spectrum(sample, region, analysis)?;
    let mut curve = ExtinctionCurve { frequencies: Vec::new(), k_values: Vec::new() };
    for k in 0..freqs.len() {
        if freqs[k] >= band[0] && freqs[k] <= band[1] {
            curve.frequencies.push(freqs[k]);
            curve.k_values.push(extinction(a0[k], a[k])?.max(0.0));
        }
    }
    if curve.frequencies.is_empty() {
        return Err(Error::EmptyBand { lo: band[0], hi: band[1] });
    }
    Ok(curve)
}

/// Circular mean of the defined phases over `region`.
pub fn mean_phase(image: &DistilledImage, region: &[(usize, usize)]) -> Result<f64> {
    let (mut s, mut c, mut n) = (0.0, 0.0, 0usize);
    for &i in region {
        let p = image.phase[i];
        if image.valid_mask[i] && p.is_finite() {
            s += p.sin();
            c += p.cos();
            n += 1;
        }
    }
    if n == 0 {
        return Err(Error::EmptyRegion);
    }
    Ok(s.atan2(c))
}

/// Shifts both TDS values by one offset so the left value matches the mean
/// imaging value over `left_region`.
pub fn align_tds_to_imaging(
    tds_pair: (f64, f64),
    imaging_column_means: &[f64],
    left_region: Range<usize>,
) -> Result<(f64, f64)> {
    let region = imaging_column_means.get(left_region).filter(|s| !s.is_empty()).ok_or(Error::EmptyRegion)?;
    let mean = region.iter().sum::<f64>() / region.len() as f64;
    let offset = mean - tds_pair.0;
    Ok((tds_pair.0 + offset, tds_pair.1 + offset))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use statrs::function::erf::erf;

    fn gaussian_image(n: usize, sigma_px: f64, peak: f64) -> DistilledImage {
        let c = (n as f64 - 1.0) / 2.0;
        let amp = Array2::from_shape_fn((n, n), |(r, col)| {
            let d2 = (r as f64 - c).powi(2) + (col as f64 - c).powi(2);
            peak * (-d2 / (2.0 * sigma_px * sigma_px)).exp()
        });
        DistilledImage {
            amplitude: amp,
            phase: Array2::from_elem((n, n), f64::NAN),
            valid_mask: Array2::from_elem((n, n), true),
            band: (1.4e12, 1.6e12),
            mean_counts: Array2::from_elem((n, n), 1.0),
            noise_floor: Array2::zeros((n, n)),
        }
    }

    #[test]
    fn gaussian_chord_matches_level_set() {
        let img = gaussian_image(64, 9.0, 0.01);
        let floor = Array2::zeros((64, 64));
        for &t in &[1e-3, 3e-3, 6e-3] {
            let expected = 2.0 * 9.0 * (2.0 * (0.01f64 / t).ln()).sqrt();
            let got = fov_pixels(&img, &floor, t, FovMethod::CrossSection).unwrap();
            assert!((got - expected).abs() < 1.0, "{got} vs {expected}");
            let radial = fov_pixels(&img, &floor, t, FovMethod::Radial).unwrap();
            assert!((radial - expected).abs() < 1.0, "{radial} vs {expected}");
        }
    }

    #[test]
    fn fov_units_and_uncertainty() {
        let img = gaussian_image(64, 9.0, 0.01);
        let floor = Array2::zeros((64, 64));
        let m = measure_fov(&img, &floor, 1e-3, 50e-6).unwrap();
        let px = fov_pixels(&img, &floor, 1e-3, FovMethod::CrossSection).unwrap();
        assert_relative_eq!(m.value, px * 50e-6, max_relative = 1e-12);
        assert!(m.uncertainty > 0.0 && m.uncertainty < 0.2 * m.value);
    }

    #[test]
    fn threshold_above_max_has_no_signal() {
        let img = gaussian_image(16, 3.0, 0.01);
        let floor = Array2::zeros((16, 16));
        assert!(matches!(measure_fov(&img, &floor, 0.02, 1.0), Err(Error::NoSignal)));
    }

    #[test]
    fn fov_scale_invariance() {
        let img = gaussian_image(32, 5.0, 0.01);
        let floor = Array2::from_elem((32, 32), 2e-4);
        let base = fov_pixels(&img, &floor, 1e-3, FovMethod::CrossSection).unwrap();
        let mut scaled = img.clone();
        scaled.amplitude.mapv_inplace(|v| v * 7.5);
        let floor_s = floor.mapv(|v| v * 7.5);
        let got = fov_pixels(&scaled, &floor_s, 7.5e-3, FovMethod::CrossSection).unwrap();
        assert_relative_eq!(got, base, max_relative = 1e-9);
    }

    fn erf_data(sigma: f64, x0: f64) -> (Vec<f64>, Vec<f64>) {
        let x: Vec<f64> = (0..12).map(|i| x0 + (i as f64 - 5.5) * 0.6 * sigma).collect();
        let y = x.iter().map(|&v| 3.0 + 2.0 * erf((v - x0) / (std::f64::consts::SQRT_2 * sigma))).collect();
        (x, y)
    }

    #[test]
    fn exact_erf_resolution() {
        let (x, y) = erf_data(100e-6, 0.3e-3);
        let fit = knife_edge_resolution(&x, &y).unwrap();
        assert!((fit.resolution.value - 235.482e-6).abs() < 1e-6 * 235.482e-6, "{}", fit.resolution.value);
        assert!(!fit.non_monotonic);
    }

    #[test]
    fn reversed_data_flips_b() {
        let (x, y) = erf_data(80e-6, 0.0);
        let a = knife_edge_resolution(&x, &y).unwrap();
        let xr: Vec<f64> = x.iter().map(|v| -v).collect();
        let b = knife_edge_resolution(&xr, &y).unwrap();
        assert_relative_eq!(a.resolution.value, b.resolution.value, max_relative = 1e-8);
        assert!(a.params[1] * b.params[1] < 0.0);
    }

    #[test]
    fn flags_non_monotonic() {
        let (x, mut y) = erf_data(100e-6, 0.0);
        y[9] -= 1.5;
        let fit = knife_edge_resolution(&x, &y).unwrap();
        assert!(fit.non_monotonic);
        assert!(matches!(knife_edge_resolution(&x[..5], &y[..5]), Err(Error::TooShort { .. })));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]
        #[test]
        fn recovers_sigma(sigma in 20e-6f64..1e-3, shift in -0.5f64..0.5) {
            let (x, y) = erf_data(sigma, shift * sigma);
            let fit = knife_edge_resolution(&x, &y).unwrap();
            prop_assert!((fit.params[3] / sigma - 1.0).abs() < 1e-6);
        }

        #[test]
        fn extinction_additive(a0 in 1e-3f64..1e3, a in 1e-3f64..1e3, a1 in 1e-3f64..1e3) {
            let lhs = extinction(a0, a).unwrap() + extinction(a, a1).unwrap();
            prop_assert!((lhs - extinction(a0, a1).unwrap()).abs() <= 1e-12 * (1.0 + lhs.abs()));
        }

        #[test]
        fn tds_difference_preserved(l in -1e3f64..1e3, r in -1e3f64..1e3, m in proptest::collection::vec(-1e3f64..1e3, 1..20)) {
            let (a, b) = align_tds_to_imaging((l, r), &m, 0..m.len()).unwrap();
            prop_assert!(((a - b) - (l - r)).abs() <= 1e-9 * (1.0 + (l - r).abs()));
        }
    }

    #[test]
    fn extinction_examples() {
        assert_eq!(extinction(3.0, 3.0).unwrap(), 0.0);
        assert!((extinction(5.0, 0.5).unwrap() - 2.0).abs() < 1e-15);
        assert!(matches!(extinction(0.0, 1.0), Err(Error::NonPositiveAmplitude { .. })));
    }

    #[test]
    fn tds_examples() {
        assert_eq!(align_tds_to_imaging((5.0, 3.0), &[10.0, 10.0, 4.0], 0..2).unwrap(), (10.0, 8.0));
        assert_eq!(align_tds_to_imaging((2.0, 2.0), &[1.0, 3.0], 0..2).unwrap(), (2.0, 2.0));
        assert!(matches!(align_tds_to_imaging((1.0, 1.0), &[1.0], 1..1), Err(Error::EmptyRegion)));
    }

    #[test]
    fn mode_count_examples() {
        assert!((spatial_mode_count(2.0e-3, 0.24e-3) - 8.33).abs() < 0.01);
        assert_eq!(spatial_mode_count(0.5, 0.5), 1.0);
        assert!((spatial_mode_count(2.2e-3, 0.174e-3) - 12.64).abs() < 0.01);
    }

    #[test]
    fn mean_phase_wraps() {
        let mut img = gaussian_image(2, 1.0, 1.0);
        img.phase = Array2::from_shape_vec((2, 2), vec![0.99 * std::f64::consts::PI, -0.99 * std::f64::consts::PI, f64::NAN, 0.0]).unwrap();
        let m = mean_phase(&img, &[(0, 0), (0, 1), (1, 0)]).unwrap();
        assert!((m.abs() - std::f64::consts::PI).abs() < 1e-12);
        assert!(matches!(mean_phase(&img, &[(1, 0)]), Err(Error::EmptyRegion)));
    }

    #[test]
    fn central_region_size() {
        assert_eq!(central_region(64, 64, 1).len(), 9);
        assert!(central_region(64, 64, 1).contains(&(32, 32)));
        assert_eq!(central_region(1, 1, 2), vec![(0, 0)]);
    }
}
