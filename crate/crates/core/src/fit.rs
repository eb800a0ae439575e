//! Nonlinear least-squares curve fitting on top of `levenberg-marquardt`.
//!
//! Callers should pass well-scaled abscissae (order unity); the model
//! implementations below do no internal rescaling.

use levenberg_marquardt::{LeastSquaresProblem, LevenbergMarquardt, TerminationReason};
use nalgebra::{storage::Owned, DMatrix, DVector, Dyn};
use statrs::function::erf::erf;

use crate::error::{Error, Result};

/// A scalar model `y = f(x; p)` with an analytic gradient in `p`.
pub trait Model: Sync {
    fn n_params(&self) -> usize;
    fn eval(&self, x: f64, p: &[f64]) -> f64;
    fn gradient(&self, x: f64, p: &[f64], out: &mut [f64]);
}

/// `A sin(ν t + φ) exp(−(t − t_c)² / (2 w²)) + y0`, params
/// `[A, ν, φ, t_c, w, y0]`.
#[derive(Debug, Clone, Copy, Default)]
pub struct GaussianWavePacket;

impl Model for GaussianWavePacket {
    fn n_params(&self) -> usize {
        6
    }

    fn eval(&self, t: f64, p: &[f64]) -> f64 {
        let [a, nu, phi, tc, w, y0] = [p[0], p[1], p[2], p[3], p[4], p[5]];
        let env = (-(t - tc).powi(2) / (2.0 * w * w)).exp();
        a * (nu * t + phi).sin() * env + y0
    }

    fn gradient(&self, t: f64, p: &[f64], out: &mut [f64]) {
        let [a, nu, phi, tc, w, _] = [p[0], p[1], p[2], p[3], p[4], p[5]];
        let d = t - tc;
        let env = (-d * d / (2.0 * w * w)).exp();
        let (s, c) = (nu * t + phi).sin_cos();
        out[0] = s * env;
        out[1] = a * c * t * env;
        out[2] = a * c * env;
        out[3] = a * s * env * d / (w * w);
        out[4] = a * s * env * d * d / (w * w * w);
        out[5] = 1.0;
    }
}

/// `a + b erf((x − x0) / (√2 σ))`, params `[a, b, x0, σ]`.
#[derive(Debug, Clone, Copy, Default)]
pub struct ErfStep;

impl Model for ErfStep {
    fn n_params(&self) -> usize {
        4
    }

    fn eval(&self, x: f64, p: &[f64]) -> f64 {
        p[0] + p[1] * erf((x - p[2]) / (std::f64::consts::SQRT_2 * p[3]))
    }

    fn gradient(&self, x: f64, p: &[f64], out: &mut [f64]) {
        let z = (x - p[2]) / (std::f64::consts::SQRT_2 * p[3]);
        let g = p[1] * std::f64::consts::FRAC_2_SQRT_PI * (-z * z).exp();
        out[0] = 1.0;
        out[1] = erf(z);
        out[2] = -g / (std::f64::consts::SQRT_2 * p[3]);
        out[3] = -g * z / p[3];
    }
}

#[derive(Debug, Clone)]
pub struct CurveFit {
    pub params: Vec<f64>,
    /// `s² (JᵀJ)⁻¹` at the optimum; `None` if singular or without spare
    /// degrees of freedom.
    pub covariance: Option<DMatrix<f64>>,
    pub residual_sum_squares: f64,
    pub evaluations: usize,
}

impl CurveFit {
    pub fn std_error(&self, i: usize) -> Option<f64> {
        self.covariance.as_ref().map(|c| c[(i, i)].max(0.0).sqrt())
    }
}

struct Problem<'a, M: Model> {
    model: &'a M,
    x: &'a [f64],
    y: &'a [f64],
    p: DVector<f64>,
}

impl<M: Model> LeastSquaresProblem<f64, Dyn, Dyn> for Problem<'_, M> {
    type ResidualStorage = Owned<f64, Dyn>;
    type JacobianStorage = Owned<f64, Dyn, Dyn>;
    type ParameterStorage = Owned<f64, Dyn>;

    fn set_params(&mut self, p: &DVector<f64>) {
        self.p.copy_from(p);
    }

    fn params(&self) -> DVector<f64> {
        self.p.clone()
    }

    fn residuals(&self) -> Option<DVector<f64>> {
        let p = self.p.as_slice();
        Some(DVector::from_iterator(
            self.x.len(),
            self.x.iter().zip(self.y).map(|(&x, &y)| self.model.eval(x, p) - y),
        ))
    }

    fn jacobian(&self) -> Option<DMatrix<f64>> {
        Some(jacobian(self.model, self.x, self.p.as_slice()))
    }
}

fn jacobian<M: Model>(model: &M, x: &[f64], p: &[f64]) -> DMatrix<f64> {
    let n = model.n_params();
    let mut j = DMatrix::zeros(x.len(), n);
    let mut row = vec![0.0; n];
    for (i, &xi) in x.iter().enumerate() {
        model.gradient(xi, p, &mut row);
        for k in 0..n {
            j[(i, k)] = row[k];
        }
    }
    j
}

/// Levenberg-Marquardt fit of `model` to `(x, y)` from `initial`.
pub fn fit_curve<M: Model>(model: &M, x: &[f64], y: &[f64], initial: &[f64]) -> Result<CurveFit> {
    let n = model.n_params();
    if initial.len() != n || x.len() != y.len() {
        return Err(Error::ShapeMismatch(vec![n, x.len()], vec![initial.len(), y.len()]));
    }
    if x.len() < n {
        return Err(Error::TooShort { len: x.len(), min: n });
    }
    let problem = Problem { model, x, y, p: DVector::from_column_slice(initial) };
    let (solved, report) = LevenbergMarquardt::new()
        .with_ftol(1e-15)
        .with_xtol(1e-15)
        .with_gtol(1e-15)
        .with_patience(400)
        .minimize(problem);
    let ok = report.termination.was_successful()
        || matches!(report.termination, TerminationReason::NoImprovementPossible(_));
    let params: Vec<f64> = solved.p.iter().copied().collect();
    if !ok || params.iter().any(|v| !v.is_finite()) {
        return Err(Error::NoConvergence(format!("{:?}", report.termination)));
    }
    let rss = 2.0 * report.objective_function;
    let dof = x.len().saturating_sub(n);
    let covariance = if dof > 0 {
        let j = jacobian(model, x, &params);
        (j.transpose() * &j).try_inverse().map(|inv| inv * (rss / dof as f64))
    } else {
        None
    };
    Ok(CurveFit { params, covariance, residual_sum_squares: rss, evaluations: report.number_of_evaluations })
}
