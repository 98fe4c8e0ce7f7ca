//! Lagrangian moving-grid observables.
//!
//! The moving grid is a tensor product of one-dimensional axes, each shifted
//! by a spatially uniform velocity `v(t)`. The observable is
//! `w = [axis_0; …; axis_{d-1}; values]` with values stored with axis 0
//! varying slowest.

use std::io::Write;

use crate::dmd::{DmdModel, Truncation};
use crate::error::{Error, Result};
use crate::piecewise::{fit_piecewise, PiecewiseDmdModel};
use crate::snapshots::{build_data_pair, SnapshotSet, TimeGrid};

/// Densities with trapezoid mass at or below this are rejected.
pub const MIN_MASS: f64 = 1e-12;

/// Tensor-product grid of `d` one-dimensional axes at a given time.
#[derive(Debug, Clone, PartialEq)]
pub struct MovingGrid {
    axes: Vec<Vec<f64>>,
    time: f64,
}

fn check_axis(axis: &[f64], k: usize) -> Result<()> {
    if axis.len() < 2 {
        return Err(Error::InsufficientData(format!("axis {k} has {} nodes", axis.len())));
    }
    if axis.windows(2).any(|p| !(p[1] > p[0])) {
        return Err(Error::MeshTangled { axis: k });
    }
    Ok(())
}

impl MovingGrid {
    pub fn new(axes: Vec<Vec<f64>>, time: f64) -> Result<Self> {
        if axes.is_empty() {
            return Err(Error::InsufficientData("grid has no axes".into()));
        }
        for (k, a) in axes.iter().enumerate() {
            check_axis(a, k)?;
        }
        Ok(Self { axes, time })
    }

    pub fn axes(&self) -> &[Vec<f64>] {
        &self.axes
    }

    pub fn time(&self) -> f64 {
        self.time
    }

    pub fn d(&self) -> usize {
        self.axes.len()
    }

    pub fn shape(&self) -> Vec<usize> {
        self.axes.iter().map(Vec::len).collect()
    }

    /// Number of coordinates `Σ n_k`.
    pub fn coord_count(&self) -> usize {
        self.axes.iter().map(Vec::len).sum()
    }

    /// Number of tensor nodes `Π n_k`.
    pub fn node_count(&self) -> usize {
        self.axes.iter().map(Vec::len).product()
    }

    /// Length of the observable `w`.
    pub fn state_len(&self) -> usize {
        self.coord_count() + self.node_count()
    }

    /// Rigid translation by `shift`, one entry per axis.
    pub fn shifted(&self, shift: &[f64], time: f64) -> Self {
        let axes = self
            .axes
            .iter()
            .zip(shift)
            .map(|(a, s)| a.iter().map(|x| x + s).collect())
            .collect();
        Self { axes, time }
    }
}

/// Observable `w = [𝒳; u]` at one time.
#[derive(Debug, Clone, PartialEq)]
pub struct LagrangianState {
    pub grid: MovingGrid,
    pub values: Vec<f64>,
}

impl LagrangianState {
    pub fn new(grid: MovingGrid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.node_count() {
            return Err(Error::Index(format!(
                "{} values for a grid of {} nodes",
                values.len(),
                grid.node_count()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::DegenerateInput("non-finite field value".into()));
        }
        Ok(Self { grid, values })
    }

    /// Split a stacked vector for a grid of the given shape.
    pub fn from_vector(w: &[f64], shape: &[usize], time: f64) -> Result<Self> {
        let coords: usize = shape.iter().sum();
        let nodes: usize = shape.iter().product();
        if w.len() != coords + nodes {
            return Err(Error::Index(format!(
                "state of length {} does not match shape {shape:?} (need {})",
                w.len(),
                coords + nodes
            )));
        }
        let mut axes = Vec::with_capacity(shape.len());
        let mut offset = 0;
        for &n in shape {
            axes.push(w[offset..offset + n].to_vec());
            offset += n;
        }
        Self::new(MovingGrid::new(axes, time)?, w[coords..].to_vec())
    }

    pub fn to_vector(&self) -> Vec<f64> {
        let mut w = Vec::with_capacity(self.grid.state_len());
        for a in &self.grid.axes {
            w.extend_from_slice(a);
        }
        w.extend_from_slice(&self.values);
        w
    }

    pub fn len(&self) -> usize {
        self.grid.state_len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Composite trapezoid weights of a (possibly non-uniform) axis.
pub fn trapezoid_weights(axis: &[f64]) -> Vec<f64> {
    let n = axis.len();
    let mut w = vec![0.0; n];
    for i in 0..n - 1 {
        let h = 0.5 * (axis[i + 1] - axis[i]);
        w[i] += h;
        w[i + 1] += h;
    }
    w
}

fn for_each_node(shape: &[usize], mut f: impl FnMut(usize, &[usize])) {
    let total: usize = shape.iter().product();
    let mut idx = vec![0; shape.len()];
    for flat in 0..total {
        f(flat, &idx);
        for k in (0..shape.len()).rev() {
            idx[k] += 1;
            if idx[k] < shape[k] {
                break;
            }
            idx[k] = 0;
        }
    }
}

/// Trapezoid mass of a field on a tensor grid.
pub fn trapezoid_mass(u: &[f64], axes: &[Vec<f64>]) -> f64 {
    let weights: Vec<Vec<f64>> = axes.iter().map(|a| trapezoid_weights(a)).collect();
    let shape: Vec<usize> = axes.iter().map(Vec::len).collect();
    let mut mass = 0.0;
    for_each_node(&shape, |flat, idx| {
        let w: f64 = idx.iter().zip(&weights).map(|(&i, wk)| wk[i]).product();
        mass += w * u[flat];
    });
    mass
}

/// Density-weighted mean position `∫x u / ∫u` by trapezoid quadrature.
pub fn mode_mean(u: &[f64], axes: &[Vec<f64>]) -> Result<Vec<f64>> {
    let shape: Vec<usize> = axes.iter().map(Vec::len).collect();
    if u.len() != shape.iter().product::<usize>() {
        return Err(Error::Index(format!("field of length {} on grid {shape:?}", u.len())));
    }
    let weights: Vec<Vec<f64>> = axes.iter().map(|a| trapezoid_weights(a)).collect();
    let mut mass = 0.0;
    let mut first = vec![0.0; axes.len()];
    for_each_node(&shape, |flat, idx| {
        let w: f64 = idx.iter().zip(&weights).map(|(&i, wk)| wk[i]).product::<f64>() * u[flat];
        mass += w;
        for (k, &i) in idx.iter().enumerate() {
            first[k] += axes[k][i] * w;
        }
    });
    if !(mass.abs() > MIN_MASS) {
        return Err(Error::DegenerateDensity { mass });
    }
    Ok(first.into_iter().map(|m| m / mass).collect())
}

/// Mean path and its time derivative.
#[derive(Debug, Clone)]
pub struct VelocityEstimate {
    pub times: Vec<f64>,
    pub mean_path: Vec<Vec<f64>>,
    pub velocity: Vec<Vec<f64>>,
}

impl VelocityEstimate {
    pub fn d(&self) -> usize {
        self.velocity.first().map_or(0, Vec::len)
    }

    /// Velocity linearly interpolated in time, held constant outside the span.
    pub fn at(&self, t: f64) -> Vec<f64> {
        let n = self.times.len();
        if t <= self.times[0] {
            return self.velocity[0].clone();
        }
        if t >= self.times[n - 1] {
            return self.velocity[n - 1].clone();
        }
        let j = self.times.partition_point(|&s| s <= t).clamp(1, n - 1);
        let (t0, t1) = (self.times[j - 1], self.times[j]);
        let a = (t - t0) / (t1 - t0);
        self.velocity[j - 1]
            .iter()
            .zip(&self.velocity[j])
            .map(|(v0, v1)| v0 + a * (v1 - v0))
            .collect()
    }

    pub fn write_csv(&self, w: &mut impl Write) -> Result<()> {
        let names = ["v_x", "v_y", "v_z"];
        let header: Vec<String> = (0..self.d())
            .map(|k| names.get(k).map_or_else(|| format!("v_{k}"), |s| s.to_string()))
            .collect();
        writeln!(w, "t,{}", header.join(","))?;
        for (t, v) in self.times.iter().zip(&self.velocity) {
            let row: Vec<String> = v.iter().map(f64::to_string).collect();
            writeln!(w, "{t},{}", row.join(","))?;
        }
        Ok(())
    }
}

/// Estimate a spatially uniform advection velocity by differentiating the
/// density mean: centered in the interior, one-sided at the ends.
pub fn estimate_velocity(s: &SnapshotSet, axes: &[Vec<f64>]) -> Result<VelocityEstimate> {
    let times = s.grid().times();
    let mean_path = (0..s.len())
        .map(|i| mode_mean(&s.state_vec(i), axes))
        .collect::<Result<Vec<_>>>()?;
    let n = times.len();
    let d = axes.len();
    let dt = s.grid().dt();
    let velocity = (0..n)
        .map(|i| {
            let (lo, hi, span) = match i {
                0 => (0, 1, dt),
                i if i == n - 1 => (n - 2, n - 1, dt),
                i => (i - 1, i + 1, 2.0 * dt),
            };
            (0..d).map(|k| (mean_path[hi][k] - mean_path[lo][k]) / span).collect()
        })
        .collect();
    Ok(VelocityEstimate {
        times,
        mean_path,
        velocity,
    })
}

/// Advance a uniform-velocity grid to `t_next` with one classical RK4 step.
pub fn evolve_grid(g: &MovingGrid, v: impl Fn(f64) -> Vec<f64>, t_next: f64) -> MovingGrid {
    evolve_grid_substeps(g, v, t_next, 1)
}

/// RK4 integration of `d𝒳/dt = v(t)` with `steps` equal substeps.
pub fn evolve_grid_substeps(g: &MovingGrid, v: impl Fn(f64) -> Vec<f64>, t_next: f64, steps: usize) -> MovingGrid {
    assert!(t_next >= g.time, "grid cannot move backwards in time");
    let steps = steps.max(1);
    let h = (t_next - g.time) / steps as f64;
    let mut shift = vec![0.0; g.d()];
    for s in 0..steps {
        let t = g.time + s as f64 * h;
        let (k1, k2, k4) = (v(t), v(t + 0.5 * h), v(t + h));
        // The field is independent of position, so k2 = k3.
        for k in 0..g.d() {
            shift[k] += h / 6.0 * (k1[k] + 4.0 * k2[k] + k4[k]);
        }
    }
    g.shifted(&shift, t_next)
}

/// For each target coordinate, the bracketing source index and weight.
/// Targets outside the source range clamp to the boundary value.
fn brackets(src: &[f64], dst: &[f64]) -> (Vec<(usize, f64)>, bool) {
    let n = src.len();
    let mut clamped = false;
    let b = dst
        .iter()
        .map(|&x| {
            if x <= src[0] {
                clamped |= x < src[0];
                (0, 0.0)
            } else if x >= src[n - 1] {
                clamped |= x > src[n - 1];
                (n - 2, 1.0)
            } else {
                let j = src.partition_point(|&s| s <= x).clamp(1, n - 1) - 1;
                (j, (x - src[j]) / (src[j + 1] - src[j]))
            }
        })
        .collect();
    (b, clamped)
}

/// Multilinear interpolation between tensor grids; the flag reports whether
/// any target point was clamped.
pub fn interpolate_tensor(src_axes: &[Vec<f64>], values: &[f64], dst_axes: &[Vec<f64>]) -> (Vec<f64>, bool) {
    let d = src_axes.len();
    assert_eq!(d, dst_axes.len(), "dimension mismatch");
    let mut clamped = false;
    let per_axis: Vec<Vec<(usize, f64)>> = src_axes
        .iter()
        .zip(dst_axes)
        .map(|(s, t)| {
            let (b, c) = brackets(s, t);
            clamped |= c;
            b
        })
        .collect();
    let src_shape: Vec<usize> = src_axes.iter().map(Vec::len).collect();
    let mut strides = vec![1; d];
    for k in (0..d.saturating_sub(1)).rev() {
        strides[k] = strides[k + 1] * src_shape[k + 1];
    }
    let dst_shape: Vec<usize> = dst_axes.iter().map(Vec::len).collect();
    let mut out = vec![0.0; dst_shape.iter().product()];
    for_each_node(&dst_shape, |flat, idx| {
        let mut acc = 0.0;
        for corner in 0..(1usize << d) {
            let mut weight = 1.0;
            let mut offset = 0;
            for k in 0..d {
                let (j, a) = per_axis[k][idx[k]];
                let upper = (corner >> k) & 1 == 1;
                weight *= if upper { a } else { 1.0 - a };
                offset += (j + upper as usize) * strides[k];
            }
            if weight != 0.0 {
                acc += weight * values[offset];
            }
        }
        out[flat] = acc;
    });
    (out, clamped)
}

/// Lagrangian observables of an Eulerian trajectory.
#[derive(Debug, Clone)]
pub struct LagrangianSnapshots {
    pub set: SnapshotSet,
    pub shape: Vec<usize>,
    /// Times at which the moving grid left the Eulerian domain.
    pub clamped_times: Vec<f64>,
}

impl LagrangianSnapshots {
    pub fn state(&self, i: usize) -> Result<LagrangianState> {
        LagrangianState::from_vector(&self.set.state_vec(i), &self.shape, self.set.grid().time(i))
    }
}

/// Sample the Eulerian solution on a grid that starts at `axes` and moves
/// with velocity `v`, integrated with `substeps` RK4 steps per snapshot.
pub fn to_lagrangian(
    s: &SnapshotSet,
    axes: &[Vec<f64>],
    v: impl Fn(f64) -> Vec<f64>,
    substeps: usize,
) -> Result<LagrangianSnapshots> {
    let grid0 = MovingGrid::new(axes.to_vec(), s.grid().t0())?;
    if s.dim() != grid0.node_count() {
        return Err(Error::Index(format!(
            "snapshot dimension {} does not match grid of {} nodes",
            s.dim(),
            grid0.node_count()
        )));
    }
    let mut states = Vec::with_capacity(s.len());
    let mut clamped_times = Vec::new();
    let mut grid = grid0;
    for i in 0..s.len() {
        let t = s.grid().time(i);
        if i > 0 {
            grid = evolve_grid_substeps(&grid, &v, t, substeps);
        }
        let (values, clamped) = interpolate_tensor(axes, &s.state_vec(i), grid.axes());
        if clamped {
            clamped_times.push(t);
        }
        states.push(LagrangianState::new(grid.clone(), values)?.to_vector());
    }
    if let Some(t) = clamped_times.first() {
        log::warn!(
            "moving grid left the domain at {} of {} snapshots (first at t = {t}); values clamped",
            clamped_times.len(),
            s.len()
        );
    }
    let shape = axes.iter().map(Vec::len).collect();
    let grid = TimeGrid::new(s.grid().t0(), s.grid().dt(), s.len())?;
    Ok(LagrangianSnapshots {
        set: SnapshotSet::from_states(grid, &states)?,
        shape,
        clamped_times,
    })
}

/// Map a stacked observable back onto fixed target axes.
pub fn to_eulerian(w: &[f64], shape: &[usize], target: &[Vec<f64>]) -> Result<Vec<f64>> {
    let coords: usize = shape.iter().sum();
    let nodes: usize = shape.iter().product();
    if w.len() != coords + nodes || target.len() != shape.len() {
        return Err(Error::Index(format!(
            "state of length {} does not match shape {shape:?}",
            w.len()
        )));
    }
    let mut axes = Vec::with_capacity(shape.len());
    let mut offset = 0;
    for (k, &n) in shape.iter().enumerate() {
        let axis = w[offset..offset + n].to_vec();
        check_axis(&axis, k)?;
        axes.push(axis);
        offset += n;
    }
    Ok(interpolate_tensor(&axes, &w[coords..], target).0)
}

/// Static Lagrangian DMD.
pub fn fit_lagrangian(s: &LagrangianSnapshots, eps: impl Into<Truncation>) -> Result<DmdModel> {
    DmdModel::fit(&build_data_pair(&s.set)?, eps, s.set.grid().dt())
}

/// Time-varying Lagrangian DMD.
pub fn fit_lagrangian_tv(s: &LagrangianSnapshots, window: usize, eps: impl Into<Truncation>) -> Result<PiecewiseDmdModel> {
    fit_piecewise(&s.set, window, eps)
}
