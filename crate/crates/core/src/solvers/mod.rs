//! Snapshot generators for the benchmark problems.

mod advdiff2d;
mod advection1d;
mod linear;
mod navier_stokes;

use serde::{Deserialize, Serialize};

pub use advdiff2d::{solve_advdiff_2d, AdvDiff2dConfig};
pub use advection1d::{solve_advection_1d, Advection1dConfig};
pub use linear::{solve_linear_system, Coefficient, Forcing, LinearSystemConfig};
pub use navier_stokes::{solve_navier_stokes, NavierStokesConfig, NsInitial, NsOutput, WallCondition};

/// Scalar function of time.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TimeSignal {
    Constant { value: f64 },
    Sine { amplitude: f64, omega: f64 },
    Cosine { amplitude: f64, omega: f64 },
}

impl TimeSignal {
    pub fn at(&self, t: f64) -> f64 {
        match *self {
            TimeSignal::Constant { value } => value,
            TimeSignal::Sine { amplitude, omega } => amplitude * (omega * t).sin(),
            TimeSignal::Cosine { amplitude, omega } => amplitude * (omega * t).cos(),
        }
    }

    /// Upper bound of `|s(t)|` over all time.
    pub fn max_abs(&self) -> f64 {
        match *self {
            TimeSignal::Constant { value } => value.abs(),
            TimeSignal::Sine { amplitude, .. } | TimeSignal::Cosine { amplitude, .. } => amplitude.abs(),
        }
    }
}

/// Initial profile `exp(-sharpness·|x - center|²)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Gaussian {
    pub center: Vec<f64>,
    pub sharpness: f64,
}

impl Gaussian {
    pub fn at(&self, x: &[f64]) -> f64 {
        let r2: f64 = x.iter().zip(&self.center).map(|(a, c)| (a - c) * (a - c)).sum();
        (-self.sharpness * r2).exp()
    }
}

/// Cell centers of `[lo, hi]` split into cells of width close to `dx`.
pub fn cell_centers(lo: f64, hi: f64, cells: usize) -> Vec<f64> {
    let h = (hi - lo) / cells as f64;
    (0..cells).map(|i| lo + (i as f64 + 0.5) * h).collect()
}

/// Number of uniform steps of size `dt` covering `[0, t_final]`.
pub(crate) fn step_count(t_final: f64, dt: f64) -> crate::Result<usize> {
    if !(dt > 0.0) || !(t_final > 0.0) {
        return Err(crate::Error::Config(format!("need dt > 0 and t_final > 0, got {dt}, {t_final}")));
    }
    let steps = (t_final / dt).round();
    if (steps * dt - t_final).abs() > 1e-9 * t_final {
        return Err(crate::Error::Config(format!("t_final {t_final} is not a multiple of dt {dt}")));
    }
    Ok(steps as usize)
}

/// Number of cells of width `dx` covering `[lo, hi]`.
pub(crate) fn cell_count(lo: f64, hi: f64, dx: f64) -> crate::Result<usize> {
    if !(dx > 0.0) || !(hi > lo) {
        return Err(crate::Error::Config(format!("invalid interval [{lo}, {hi}] with dx {dx}")));
    }
    let n = ((hi - lo) / dx).round();
    if (n * dx - (hi - lo)).abs() > 1e-9 * (hi - lo) {
        return Err(crate::Error::Config(format!("interval length {} is not a multiple of dx {dx}", hi - lo)));
    }
    Ok(n as usize)
}
