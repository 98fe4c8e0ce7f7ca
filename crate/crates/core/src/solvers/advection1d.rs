use serde::{Deserialize, Serialize};

use super::{cell_centers, cell_count, step_count, Gaussian, TimeSignal};
use crate::error::{Error, Result};
use crate::snapshots::{SnapshotSet, TimeGrid};

/// `u_t + (v(t) u)_x = 0` on a cell-centered grid with zero inflow.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Advection1dConfig {
    pub velocity: TimeSignal,
    pub x_range: [f64; 2],
    pub dx: f64,
    pub dt: f64,
    pub t_final: f64,
    pub initial: Gaussian,
}

impl Default for Advection1dConfig {
    fn default() -> Self {
        Self {
            velocity: TimeSignal::Sine {
                amplitude: 2.0,
                omega: std::f64::consts::FRAC_PI_2,
            },
            x_range: [-10.0, 10.0],
            dx: 0.05,
            dt: 0.01,
            t_final: 8.0,
            initial: Gaussian {
                center: vec![0.0],
                sharpness: 0.5,
            },
        }
    }
}

impl Advection1dConfig {
    pub fn cells(&self) -> Result<usize> {
        cell_count(self.x_range[0], self.x_range[1], self.dx)
    }

    pub fn centers(&self) -> Result<Vec<f64>> {
        Ok(cell_centers(self.x_range[0], self.x_range[1], self.cells()?))
    }

    /// Velocity used for step `n`, sampled at the step midpoint.
    pub fn step_velocity(&self, n: usize) -> f64 {
        self.velocity.at((n as f64 + 0.5) * self.dt)
    }
}

/// Conservative first-order upwind scheme; the upwind side follows the sign
/// of the velocity at each step.
pub fn solve_advection_1d(cfg: &Advection1dConfig) -> Result<SnapshotSet> {
    let steps = step_count(cfg.t_final, cfg.dt)?;
    let x = cfg.centers()?;
    let n = x.len();
    let lambda = cfg.dt / cfg.dx;
    let mut u: Vec<f64> = x.iter().map(|&xi| cfg.initial.at(&[xi])).collect();
    let mut states = Vec::with_capacity(steps + 1);
    states.push(u.clone());
    let mut flux = vec![0.0; n + 1];
    for step in 0..steps {
        let v = cfg.step_velocity(step);
        let courant = v.abs() * lambda;
        if !(courant <= 1.0) {
            return Err(Error::Stability {
                step,
                reason: format!("CFL number {courant:.4} exceeds 1"),
            });
        }
        let (vp, vm) = (v.max(0.0), v.min(0.0));
        // flux[i] sits at the left face of cell i; ghost cells carry zero.
        for (i, f) in flux.iter_mut().enumerate() {
            let left = if i == 0 { 0.0 } else { u[i - 1] };
            let right = if i == n { 0.0 } else { u[i] };
            *f = vp * left + vm * right;
        }
        for i in 0..n {
            u[i] -= lambda * (flux[i + 1] - flux[i]);
        }
        states.push(u.clone());
    }
    SnapshotSet::from_states(TimeGrid::new(0.0, cfg.dt, steps + 1)?, &states)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mass(u: &[f64], dx: f64) -> f64 {
        u.iter().sum::<f64>() * dx
    }

    #[test]
    fn zero_speed_is_frozen() {
        let cfg = Advection1dConfig {
            velocity: TimeSignal::Constant { value: 0.0 },
            t_final: 1.0,
            ..Default::default()
        };
        let s = solve_advection_1d(&cfg).unwrap();
        assert_eq!(s.state_vec(0), s.state_vec(s.len() - 1));
    }

    #[test]
    fn reference_setup_dimensions() {
        let s = solve_advection_1d(&Advection1dConfig::default()).unwrap();
        assert_eq!(s.len(), 801);
        assert_eq!(s.dim(), 400);
    }

    #[test]
    fn one_period_returns_and_conserves_mass() {
        let cfg = Advection1dConfig {
            t_final: 4.0,
            ..Default::default()
        };
        let s = solve_advection_1d(&cfg).unwrap();
        let u0 = s.state_vec(0);
        let u4 = s.state_vec(s.len() - 1);
        let m0 = mass(&u0, cfg.dx);
        assert!((mass(&u4, cfg.dx) - m0).abs() <= 1e-10 * m0);
        // Net displacement after one period is zero; only scheme diffusion remains.
        let x = cfg.centers().unwrap();
        let mean = |u: &[f64]| x.iter().zip(u).map(|(a, b)| a * b).sum::<f64>() / u.iter().sum::<f64>();
        assert!((mean(&u4) - mean(&u0)).abs() < 1e-3);
        let peak_drop = u0.iter().cloned().fold(0.0, f64::max) - u4.iter().cloned().fold(0.0, f64::max);
        assert!(peak_drop > 0.0 && peak_drop < 0.1);
    }

    #[test]
    fn constant_speed_matches_characteristics() {
        let cfg = Advection1dConfig {
            velocity: TimeSignal::Constant { value: 1.0 },
            t_final: 1.0,
            dt: 0.05,
            ..Default::default()
        };
        // Courant number 1 makes upwind an exact shift by one cell.
        let s = solve_advection_1d(&cfg).unwrap();
        let u0 = s.state_vec(0);
        let u1 = s.state_vec(s.len() - 1);
        for i in 20..400 {
            assert!((u1[i] - u0[i - 20]).abs() < 1e-14);
        }
    }

    #[test]
    fn cfl_violation_names_step() {
        let cfg = Advection1dConfig {
            dt: 0.04,
            t_final: 2.0,
            ..Default::default()
        };
        // |v| dt/dx exceeds 1 once |2 sin(πt/2)| > 1.25.
        match solve_advection_1d(&cfg) {
            Err(Error::Stability { step, .. }) => assert!(step > 0 && step < 25, "{step}"),
            other => panic!("expected stability error, got {other:?}"),
        }
    }

    #[test]
    fn deterministic() {
        let cfg = Advection1dConfig {
            t_final: 0.5,
            ..Default::default()
        };
        let a = solve_advection_1d(&cfg).unwrap();
        let b = solve_advection_1d(&cfg).unwrap();
        assert_eq!(a.matrix(), b.matrix());
    }
}
