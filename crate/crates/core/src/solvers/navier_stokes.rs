//! Incompressible channel flow past a cylinder on a MAC staggered grid.
//!
//! Layout: pressure at cell centers `(i, j)`, `u` on vertical faces
//! `i = 0..=nx`, `v` on horizontal faces `j = 0..=ny`. The inflow face
//! `i = 0` carries the prescribed speed, the outlet holds `p = 0` with
//! zero-gradient velocity, and the channel walls are either no-slip or
//! free-slip. Cells whose centers lie inside the cylinder are solid and every
//! face touching a solid cell is held at zero velocity.

use serde::{Deserialize, Serialize};

use super::step_count;
use crate::error::{Error, Result};
use crate::snapshots::{SnapshotSet, TimeGrid};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WallCondition {
    NoSlip,
    FreeSlip,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NsInitial {
    /// `u` equal to the inflow speed everywhere, then projected.
    Uniform,
    /// Fluid at rest apart from the inflow face, then projected.
    Rest,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Cylinder {
    pub center: [f64; 2],
    pub radius: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NavierStokesConfig {
    pub rho: f64,
    /// Kinematic viscosity.
    pub nu: f64,
    pub length: [f64; 2],
    pub cylinder: Option<Cylinder>,
    /// Uniform spacing in both directions.
    pub dx: f64,
    pub dt: f64,
    pub t_final: f64,
    pub inflow: f64,
    pub walls: WallCondition,
    pub initial: NsInitial,
    /// Donor-cell weight of the convective terms: 0 is centered, 1 is full upwind.
    pub upwind_weight: f64,
    /// Bound on the post-projection divergence per cell.
    pub pressure_tol: f64,
    pub pressure_max_iter: usize,
    /// Steps between recorded snapshots.
    pub snapshot_stride: usize,
}

impl Default for NavierStokesConfig {
    fn default() -> Self {
        Self {
            rho: 1.0,
            nu: 1.0 / 600.0,
            length: [2.0, 1.0],
            cylinder: Some(Cylinder {
                center: [0.3, 0.5],
                radius: 0.1,
            }),
            dx: 0.02,
            dt: 0.001,
            t_final: 3.0,
            inflow: 1.0,
            walls: WallCondition::NoSlip,
            initial: NsInitial::Uniform,
            upwind_weight: 0.9,
            pressure_tol: 1e-10,
            pressure_max_iter: 10_000,
            snapshot_stride: 1,
        }
    }
}

impl NavierStokesConfig {
    pub fn cells(&self) -> Result<(usize, usize)> {
        Ok((
            super::cell_count(0.0, self.length[0], self.dx)?,
            super::cell_count(0.0, self.length[1], self.dx)?,
        ))
    }

    /// Cell-center axes of the output field.
    pub fn axes(&self) -> Result<[Vec<f64>; 2]> {
        let (nx, ny) = self.cells()?;
        Ok([
            super::cell_centers(0.0, self.length[0], nx),
            super::cell_centers(0.0, self.length[1], ny),
        ])
    }

    fn validate(&self) -> Result<()> {
        if !(self.rho > 0.0) || !(self.nu >= 0.0) {
            return Err(Error::Config("density must be positive and viscosity non-negative".into()));
        }
        if !(0.0..=1.0).contains(&self.upwind_weight) {
            return Err(Error::Config(format!("upwind weight {} outside [0, 1]", self.upwind_weight)));
        }
        if self.snapshot_stride == 0 || !(self.pressure_tol > 0.0) {
            return Err(Error::Config("snapshot stride and pressure tolerance must be positive".into()));
        }
        Ok(())
    }
}

/// Velocity-magnitude snapshots plus per-step diagnostics.
#[derive(Debug, Clone)]
pub struct NsOutput {
    pub snapshots: SnapshotSet,
    /// Largest post-projection divergence over fluid cells, one per projection
    /// (the first entry is the projection of the initial field).
    pub max_divergence: Vec<f64>,
    pub pressure_iterations: Vec<usize>,
}

struct Poisson {
    /// Cell index of each unknown.
    cell: Vec<usize>,
    /// Neighbor unknowns per unknown.
    neighbors: Vec<Vec<usize>>,
    diag: Vec<f64>,
    phi: Vec<f64>,
}

struct Flow<'a> {
    cfg: &'a NavierStokesConfig,
    nx: usize,
    ny: usize,
    h: f64,
    solid: Vec<bool>,
    u: Vec<f64>,
    v: Vec<f64>,
    u_fixed: Vec<Option<f64>>,
    v_fixed: Vec<Option<f64>>,
    poisson: Poisson,
}

impl<'a> Flow<'a> {
    fn new(cfg: &'a NavierStokesConfig) -> Result<Self> {
        let (nx, ny) = cfg.cells()?;
        let h = cfg.dx;
        let solid: Vec<bool> = (0..nx * ny)
            .map(|k| {
                let (i, j) = (k / ny, k % ny);
                cfg.cylinder.is_some_and(|c| {
                    let x = (i as f64 + 0.5) * h - c.center[0];
                    let y = (j as f64 + 0.5) * h - c.center[1];
                    x * x + y * y <= c.radius * c.radius
                })
            })
            .collect();
        let is_solid = |i: usize, j: usize| solid[i * ny + j];
        let u_fixed: Vec<Option<f64>> = (0..(nx + 1) * ny)
            .map(|k| {
                let (i, j) = (k / ny, k % ny);
                let touches_solid = (i > 0 && is_solid(i - 1, j)) || (i < nx && is_solid(i, j));
                if touches_solid {
                    Some(0.0)
                } else if i == 0 {
                    Some(cfg.inflow)
                } else {
                    None
                }
            })
            .collect();
        let v_fixed: Vec<Option<f64>> = (0..nx * (ny + 1))
            .map(|k| {
                let (i, j) = (k / (ny + 1), k % (ny + 1));
                let touches_solid = (j > 0 && is_solid(i, j - 1)) || (j < ny && is_solid(i, j));
                (j == 0 || j == ny || touches_solid).then_some(0.0)
            })
            .collect();

        // Pressure unknowns: fluid cells with at least one free face.
        let mut index = vec![usize::MAX; nx * ny];
        let mut cell = Vec::new();
        let mut diag = Vec::new();
        let mut faces = Vec::new();
        for i in 0..nx {
            for j in 0..ny {
                if is_solid(i, j) {
                    continue;
                }
                // (free?, neighbor cell or None for the outlet ghost)
                let list = [
                    (u_fixed[(i + 1) * ny + j].is_none(), (i + 1 < nx).then(|| (i + 1) * ny + j)),
                    (u_fixed[i * ny + j].is_none(), (i > 0).then(|| (i - 1) * ny + j)),
                    (v_fixed[i * (ny + 1) + j + 1].is_none(), Some(i * ny + j + 1)),
                    (v_fixed[i * (ny + 1) + j].is_none(), j.checked_sub(1).map(|jm| i * ny + jm)),
                ];
                let mut d = 0.0;
                let mut nbs = Vec::new();
                for (free, nb) in list {
                    if !free {
                        continue;
                    }
                    match nb {
                        Some(c) => {
                            d += 1.0;
                            nbs.push(c);
                        }
                        None => d += 2.0,
                    }
                }
                if d > 0.0 {
                    index[i * ny + j] = cell.len();
                    cell.push(i * ny + j);
                    diag.push(d / (h * h));
                    faces.push(nbs);
                }
            }
        }
        let neighbors = faces
            .into_iter()
            .map(|nbs| nbs.into_iter().map(|c| index[c]).collect())
            .collect();
        let unknowns = cell.len();

        let mut flow = Self {
            cfg,
            nx,
            ny,
            h,
            solid,
            u: vec![0.0; (nx + 1) * ny],
            v: vec![0.0; nx * (ny + 1)],
            u_fixed,
            v_fixed,
            poisson: Poisson {
                cell,
                neighbors,
                diag,
                phi: vec![0.0; unknowns],
            },
        };
        let interior = match cfg.initial {
            NsInitial::Uniform => cfg.inflow,
            NsInitial::Rest => 0.0,
        };
        for k in 0..flow.u.len() {
            flow.u[k] = flow.u_fixed[k].unwrap_or(interior);
        }
        Ok(flow)
    }

    #[inline]
    fn wall_sign(&self) -> f64 {
        match self.cfg.walls {
            WallCondition::NoSlip => -1.0,
            WallCondition::FreeSlip => 1.0,
        }
    }

    /// `u` with ghost values: zero-gradient past the outlet, reflected at walls.
    #[inline]
    fn u_at(&self, i: usize, j: isize) -> f64 {
        let i = i.min(self.nx);
        if j < 0 {
            self.wall_sign() * self.u[i * self.ny]
        } else if j as usize >= self.ny {
            self.wall_sign() * self.u[i * self.ny + self.ny - 1]
        } else {
            self.u[i * self.ny + j as usize]
        }
    }

    /// `v` with ghost values: odd reflection at the inflow, zero-gradient past the outlet.
    #[inline]
    fn v_at(&self, i: isize, j: usize) -> f64 {
        let stride = self.ny + 1;
        if i < 0 {
            -self.v[j]
        } else if i as usize >= self.nx {
            self.v[(self.nx - 1) * stride + j]
        } else {
            self.v[i as usize * stride + j]
        }
    }

    fn momentum(&self) -> (Vec<f64>, Vec<f64>) {
        let (nx, ny, h) = (self.nx, self.ny, self.h);
        let (dt, nu, g) = (self.cfg.dt, self.cfg.nu, self.cfg.upwind_weight);
        let mut f = self.u.clone();
        for i in 1..=nx {
            for j in 0..ny {
                let k = i * ny + j;
                if self.u_fixed[k].is_some() {
                    continue;
                }
                let jj = j as isize;
                let c = self.u[k];
                let e = self.u_at(i + 1, jj);
                let w = self.u_at(i - 1, jj);
                let n = self.u_at(i, jj + 1);
                let s = self.u_at(i, jj - 1);
                let ii = i as isize;
                let v_top = 0.5 * (self.v_at(ii - 1, j + 1) + self.v_at(ii, j + 1));
                let v_bot = 0.5 * (self.v_at(ii - 1, j) + self.v_at(ii, j));
                let ue = 0.5 * (c + e);
                let uw = 0.5 * (w + c);
                let duu = (ue * ue - uw * uw + g * (ue.abs() * 0.5 * (c - e) - uw.abs() * 0.5 * (w - c))) / h;
                let un = 0.5 * (c + n);
                let us = 0.5 * (s + c);
                let duv = (v_top * un - v_bot * us + g * (v_top.abs() * 0.5 * (c - n) - v_bot.abs() * 0.5 * (s - c))) / h;
                let lap = (e + w + n + s - 4.0 * c) / (h * h);
                f[k] = c + dt * (nu * lap - duu - duv);
            }
        }
        let stride = ny + 1;
        let mut gv = self.v.clone();
        for i in 0..nx {
            for j in 1..ny {
                let k = i * stride + j;
                if self.v_fixed[k].is_some() {
                    continue;
                }
                let ii = i as isize;
                let c = self.v[k];
                let e = self.v_at(ii + 1, j);
                let w = self.v_at(ii - 1, j);
                let n = self.v[k + 1];
                let s = self.v[k - 1];
                let u_right = 0.5 * (self.u[(i + 1) * ny + j - 1] + self.u[(i + 1) * ny + j]);
                let u_left = 0.5 * (self.u[i * ny + j - 1] + self.u[i * ny + j]);
                let ve = 0.5 * (c + e);
                let vw = 0.5 * (w + c);
                let duv = (u_right * ve - u_left * vw + g * (u_right.abs() * 0.5 * (c - e) - u_left.abs() * 0.5 * (w - c))) / h;
                let vn = 0.5 * (c + n);
                let vs = 0.5 * (s + c);
                let dvv = (vn * vn - vs * vs + g * (vn.abs() * 0.5 * (c - n) - vs.abs() * 0.5 * (s - c))) / h;
                let lap = (e + w + n + s - 4.0 * c) / (h * h);
                gv[k] = c + dt * (nu * lap - duv - dvv);
            }
        }
        (f, gv)
    }

    fn divergence(&self, u: &[f64], v: &[f64], cell: usize) -> f64 {
        let (i, j) = (cell / self.ny, cell % self.ny);
        let stride = self.ny + 1;
        (u[(i + 1) * self.ny + j] - u[i * self.ny + j] + v[i * stride + j + 1] - v[i * stride + j]) / self.h
    }

    fn max_divergence(&self) -> f64 {
        (0..self.nx * self.ny)
            .filter(|&c| !self.solid[c])
            .map(|c| self.divergence(&self.u, &self.v, c).abs())
            .fold(0.0, f64::max)
    }

    fn apply(&self, x: &[f64], out: &mut [f64]) {
        let p = &self.poisson;
        let h2 = self.h * self.h;
        for (k, o) in out.iter_mut().enumerate() {
            let nb: f64 = p.neighbors[k].iter().map(|&m| x[m]).sum();
            *o = p.diag[k] * x[k] - nb / h2;
        }
    }

    /// Jacobi-preconditioned CG on `A φ = −div`, stopping when the max-norm
    /// residual (the post-projection divergence) is below tolerance.
    fn solve_pressure(&mut self, rhs: &[f64]) -> Result<usize> {
        let n = rhs.len();
        let tol = self.cfg.pressure_tol;
        let cap = self.cfg.pressure_max_iter;
        let mut phi = std::mem::take(&mut self.poisson.phi);
        let mut ap = vec![0.0; n];
        let mut iterations = 0;
        let max_abs = |v: &[f64]| v.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        loop {
            self.apply(&phi, &mut ap);
            let mut r: Vec<f64> = rhs.iter().zip(&ap).map(|(b, a)| b - a).collect();
            if max_abs(&r) <= tol {
                self.poisson.phi = phi;
                return Ok(iterations);
            }
            if iterations >= cap {
                let residual = max_abs(&r);
                self.poisson.phi = phi;
                return Err(Error::Solver { iterations, residual });
            }
            let mut z: Vec<f64> = r.iter().zip(&self.poisson.diag).map(|(r, d)| r / d).collect();
            let mut p = z.clone();
            let mut rz: f64 = r.iter().zip(&z).map(|(a, b)| a * b).sum();
            while iterations < cap {
                iterations += 1;
                self.apply(&p, &mut ap);
                let pap: f64 = p.iter().zip(&ap).map(|(a, b)| a * b).sum();
                if pap <= 0.0 {
                    break;
                }
                let alpha = rz / pap;
                for k in 0..n {
                    phi[k] += alpha * p[k];
                    r[k] -= alpha * ap[k];
                }
                // Leave a margin so the recomputed residual also passes.
                if max_abs(&r) <= 0.5 * tol {
                    break;
                }
                for k in 0..n {
                    z[k] = r[k] / self.poisson.diag[k];
                }
                let rz_new: f64 = r.iter().zip(&z).map(|(a, b)| a * b).sum();
                let beta = rz_new / rz;
                rz = rz_new;
                for k in 0..n {
                    p[k] = z[k] + beta * p[k];
                }
            }
        }
    }

    /// Replace `(u, v)` by the divergence-free projection of `(f, g)`.
    fn project(&mut self, f: Vec<f64>, g: Vec<f64>) -> Result<usize> {
        let rhs: Vec<f64> = self.poisson.cell.iter().map(|&c| -self.divergence(&f, &g, c)).collect();
        let iterations = self.solve_pressure(&rhs)?;
        let (nx, ny, h) = (self.nx, self.ny, self.h);
        let mut phi_cell = vec![0.0; nx * ny];
        for (k, &c) in self.poisson.cell.iter().enumerate() {
            phi_cell[c] = self.poisson.phi[k];
        }
        self.u = f;
        self.v = g;
        for i in 1..=nx {
            for j in 0..ny {
                let k = i * ny + j;
                if self.u_fixed[k].is_none() {
                    let west = phi_cell[(i - 1) * ny + j];
                    let east = if i < nx { phi_cell[i * ny + j] } else { -west };
                    self.u[k] -= (east - west) / h;
                }
            }
        }
        let stride = ny + 1;
        for i in 0..nx {
            for j in 1..ny {
                let k = i * stride + j;
                if self.v_fixed[k].is_none() {
                    self.v[k] -= (phi_cell[i * ny + j] - phi_cell[i * ny + j - 1]) / h;
                }
            }
        }
        Ok(iterations)
    }

    fn magnitude(&self) -> Vec<f64> {
        let (nx, ny) = (self.nx, self.ny);
        let stride = ny + 1;
        (0..nx * ny)
            .map(|c| {
                if self.solid[c] {
                    return 0.0;
                }
                let (i, j) = (c / ny, c % ny);
                let uc = 0.5 * (self.u[i * ny + j] + self.u[(i + 1) * ny + j]);
                let vc = 0.5 * (self.v[i * stride + j] + self.v[i * stride + j + 1]);
                uc.hypot(vc)
            })
            .collect()
    }
}

/// Projection-method solve; returns cell-centered velocity magnitudes with
/// the x index varying slowest.
pub fn solve_navier_stokes(cfg: &NavierStokesConfig) -> Result<NsOutput> {
    cfg.validate()?;
    let steps = step_count(cfg.t_final, cfg.dt)?;
    if steps % cfg.snapshot_stride != 0 {
        return Err(Error::Config(format!(
            "{steps} steps are not a multiple of the snapshot stride {}",
            cfg.snapshot_stride
        )));
    }
    let mut flow = Flow::new(cfg)?;
    let mut max_divergence = Vec::with_capacity(steps + 1);
    let mut pressure_iterations = Vec::with_capacity(steps + 1);

    let (f, g) = (flow.u.clone(), flow.v.clone());
    pressure_iterations.push(flow.project(f, g)?);
    max_divergence.push(flow.max_divergence());

    let mut states = Vec::with_capacity(steps / cfg.snapshot_stride + 1);
    states.push(flow.magnitude());
    for step in 1..=steps {
        let (f, g) = flow.momentum();
        if f.iter().chain(&g).any(|x| !x.is_finite()) {
            return Err(Error::Stability {
                step,
                reason: "non-finite velocity".into(),
            });
        }
        pressure_iterations.push(flow.project(f, g)?);
        max_divergence.push(flow.max_divergence());
        if step % cfg.snapshot_stride == 0 {
            states.push(flow.magnitude());
        }
    }
    log::debug!(
        "navier-stokes: {steps} steps, max divergence {:.2e}, mean pressure iterations {:.1}",
        max_divergence.iter().cloned().fold(0.0, f64::max),
        pressure_iterations.iter().sum::<usize>() as f64 / pressure_iterations.len() as f64
    );
    let grid = TimeGrid::new(0.0, cfg.dt * cfg.snapshot_stride as f64, states.len())?;
    Ok(NsOutput {
        snapshots: SnapshotSet::from_states(grid, &states)?,
        max_divergence,
        pressure_iterations,
    })
}
