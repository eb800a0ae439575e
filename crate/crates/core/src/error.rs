use thiserror::Error;

use crate::optics::Violation;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("numerical aperture {0} outside (0, 1]")]
    InvalidNa(f64),

    #[error("invalid configuration: {}", format_violations(.0))]
    InvalidConfig(Vec<Violation>),

    #[error("quadrature grid invalid: {0}")]
    InvalidGrid(String),

    #[error("quadrature grid too coarse: halving the step changed the result by {relative_change:.3e}")]
    GridTooCoarse { coarse: f64, fine: f64, relative_change: f64 },

    #[error("no QMC samples landed in the pixel footprint at ({x:.3e}, {y:.3e}) m")]
    EmptyPixel { x: f64, y: f64 },

    #[error("waveform has {len} samples, need at least {min}")]
    TooShort { len: usize, min: usize },

    #[error("no spectral bin inside [{lo:.4e}, {hi:.4e}] Hz")]
    EmptyBand { lo: f64, hi: f64 },

    #[error("fit did not converge: {0}")]
    NoConvergence(String),

    #[error("insufficient signal-to-noise ratio ({snr:.3}) for a waveform fit")]
    InsufficientSnr { snr: f64 },

    #[error("envelope support of {support} samples is too small for a phase fit")]
    DegenerateEnvelope { support: usize },

    #[error("shape mismatch: {0:?} vs {1:?}")]
    ShapeMismatch(Vec<usize>, Vec<usize>),

    #[error("no pixel exceeds the noise floor by the threshold")]
    NoSignal,

    #[error("amplitudes must be positive (got a0 = {a0}, a = {a})")]
    NonPositiveAmplitude { a0: f64, a: f64 },

    #[error("region is empty")]
    EmptyRegion,

    #[error("{0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

fn format_violations(v: &[Violation]) -> String {
    v.iter().map(|v| v.to_string()).collect::<Vec<_>>().join("; ")
}
