//! Biphoton position statistics in the crystal plane.
//!
//! The pair density factorizes into a narrow Gaussian in the difference
//! coordinate `u = ρ_vis − ρ_thz` (phase matching) and a broad Gaussian in
//! the pump-weighted coordinate `v = (λ_thz ρ_vis − λ_vis ρ_thz) / Λ`.
//! Quasi-Monte Carlo samples are drawn directly from that product, so every
//! sample carries unit weight.

use std::f64::consts::PI;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};
use crate::optics::OpticalConfig;
use crate::qmc::Halton;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct TransversePoint {
    pub x: f64,
    pub y: f64,
}

impl TransversePoint {
    pub const ORIGIN: Self = Self { x: 0.0, y: 0.0 };

    pub fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn norm_sqr(self) -> f64 {
        self.x * self.x + self.y * self.y
    }

    pub fn scale(self, s: f64) -> Self {
        Self { x: self.x * s, y: self.y * s }
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }
}

impl std::ops::Sub for TransversePoint {
    type Output = Self;
    fn sub(self, o: Self) -> Self {
        Self { x: self.x - o.x, y: self.y - o.y }
    }
}

impl std::ops::Add for TransversePoint {
    type Output = Self;
    fn add(self, o: Self) -> Self {
        Self { x: self.x + o.x, y: self.y + o.y }
    }
}

impl std::ops::Neg for TransversePoint {
    type Output = Self;
    fn neg(self) -> Self {
        Self { x: -self.x, y: -self.y }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PairSample {
    pub rho_vis: TransversePoint,
    pub rho_thz: TransversePoint,
    pub weight: f64,
}

/// Per-axis standard deviations of the two Gaussian factors.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PairDistributionParams {
    /// Std of `ρ_vis − ρ_thz`.
    pub sigma_diff: f64,
    /// Std of the pump-weighted coordinate.
    pub sigma_pump: f64,
}

impl PairDistributionParams {
    pub fn from_config(cfg: &OpticalConfig) -> Self {
        Self {
            sigma_diff: (cfg.crystal_length * cfg.lambda_sum() / (8.0 * PI)).sqrt(),
            sigma_pump: cfg.pump_waist / 2.0,
        }
    }
}

/// Pair transition probability density (1/m⁴).
pub fn transition_probability(
    rho_vis: TransversePoint,
    rho_thz: TransversePoint,
    cfg: &OpticalConfig,
) -> f64 {
    let lsum = cfg.lambda_sum();
    let wp2 = cfg.pump_waist * cfg.pump_waist;
    let prefactor = 8.0 / (PI * cfg.crystal_length * wp2 * lsum);
    let diff = (rho_vis - rho_thz).norm_sqr();
    let pump = (rho_vis.scale(cfg.lambda_thz) - rho_thz.scale(cfg.lambda_vis)).norm_sqr();
    prefactor
        * (-4.0 * PI / (cfg.crystal_length * lsum) * diff).exp()
        * (-2.0 / (wp2 * lsum * lsum) * pump).exp()
}

/// Closed-form integral of [`transition_probability`] over all four
/// coordinates, `(Λ / (λ_thz − λ_vis))²`.
pub fn analytic_normalization(cfg: &OpticalConfig) -> f64 {
    (cfg.lambda_sum() / (cfg.lambda_thz - cfg.lambda_vis)).powi(2)
}

/// Maps the factor coordinates `(u, v)` back to `(ρ_vis, ρ_thz)`.
fn from_factor_coords(u: f64, v: f64, cfg: &OpticalConfig) -> (f64, f64) {
    let rho_vis = (cfg.lambda_sum() * v - cfg.lambda_vis * u) / (cfg.lambda_thz - cfg.lambda_vis);
    (rho_vis, rho_vis - u)
}

/// `n` deterministic pair samples starting at `sequence_offset` in a 4D
/// Halton sequence. Disjoint offset ranges partition the sequence, so
/// producers can run in parallel.
pub fn qmc_pair_samples(n: usize, cfg: &OpticalConfig, sequence_offset: u64) -> Vec<PairSample> {
    let params = PairDistributionParams::from_config(cfg);
    let normal = Normal::standard();
    let seq = Halton::<4>::new();
    (0..n as u64)
        .into_par_iter()
        .map(|i| {
            // index 0 maps to the corner of the cube and is skipped
            let p = seq.point(sequence_offset + i + 1);
            let z = p.map(|q| normal.inverse_cdf(q));
            let (vx, vy) = (params.sigma_pump * z[0], params.sigma_pump * z[1]);
            let (ux, uy) = (params.sigma_diff * z[2], params.sigma_diff * z[3]);
            let (vis_x, thz_x) = from_factor_coords(ux, vx, cfg);
            let (vis_y, thz_y) = from_factor_coords(uy, vy, cfg);
            PairSample {
                rho_vis: TransversePoint::new(vis_x, vis_y),
                rho_thz: TransversePoint::new(thz_x, thz_y),
                weight: 1.0,
            }
        })
        .collect()
}

/// Riemann sum of the density over the 4D grid `[-extent, extent]⁴` with
/// `grid_points` nodes per axis.
///
/// The density factorizes into x and y parts, so the 4D sum equals
/// `S_x² / P(0, 0)` where `S_x` is the 2D sum over `(x_vis, x_thz)` with
/// both y components zero.
fn grid_sum(cfg: &OpticalConfig, extent: f64, grid_points: usize) -> f64 {
    let h = 2.0 * extent / (grid_points as f64 - 1.0);
    let node = |i: usize| -extent + i as f64 * h;
    let sx: f64 = (0..grid_points)
        .into_par_iter()
        .map(|i| {
            let xv = TransversePoint::new(node(i), 0.0);
            (0..grid_points)
                .map(|j| transition_probability(xv, TransversePoint::new(node(j), 0.0), cfg))
                .sum::<f64>()
        })
        .collect::<Vec<_>>()
        .iter()
        .sum();
    let p0 = transition_probability(TransversePoint::ORIGIN, TransversePoint::ORIGIN, cfg);
    sx * sx / p0 * h.powi(4)
}

/// Brute-force quadrature of [`transition_probability`] over ℝ⁴.
///
/// `grid_extent` is the half-width of the grid in every coordinate. Fails
/// with `GridTooCoarse` when halving the step moves the result by more
/// than 0.5 %.
pub fn normalization_check(cfg: &OpticalConfig, grid_extent: f64, grid_points: usize) -> Result<f64> {
    let params = PairDistributionParams::from_config(cfg);
    if grid_points < 3 {
        return Err(Error::InvalidGrid(format!("need at least 3 points per axis, got {grid_points}")));
    }
    if grid_extent < 3.0 * params.sigma_pump {
        return Err(Error::InvalidGrid(format!(
            "half-width {grid_extent:.3e} m covers less than ±3σ ({:.3e} m)",
            3.0 * params.sigma_pump
        )));
    }
    let coarse = grid_sum(cfg, grid_extent, grid_points);
    let fine = grid_sum(cfg, grid_extent, 2 * grid_points - 1);
    let relative_change = ((fine - coarse) / fine).abs();
    if relative_change > 5e-3 {
        return Err(Error::GridTooCoarse { coarse, fine, relative_change });
    }
    Ok(coarse)
}
