use faer::{Mat, MatRef};

use super::perturbation::op_norm;
use super::BoundReport;
use crate::error::{Error, Result};
use crate::linalg::norm2;
use crate::snapshots::DataPair;
use crate::solvers::{AdvDiff2dConfig, Advection1dConfig, LinearSystemConfig};

/// Quadrature points per step interval, endpoints excluded from the count.
pub const SAMPLES_PER_STEP: usize = 100;
/// Safety factor applied to sampled maxima.
pub const SAMPLE_INFLATION: f64 = 1.01;

/// Below this `γ` the `m f²/γ²` term is treated as divergent.
const GAMMA_FLOOR: f64 = 1e-12;

/// Pointwise norms of the coefficient matrix and forcing of `x' = C(t)x + f(t)`.
pub trait CoefficientNorms {
    /// An upper bound on `‖C(t)‖₂`.
    fn coefficient_norm(&self, t: f64) -> Result<f64>;
    /// An upper bound on `‖f(t)‖₂`.
    fn forcing_norm(&self, t: f64) -> Result<f64>;
    /// `C` itself when it is constant and `f ≡ 0`.
    fn autonomous_matrix(&self) -> Option<Mat<f64>> {
        None
    }
}

fn finite(v: f64, t: f64) -> Result<f64> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::InvalidCoefficient { t })
    }
}

impl CoefficientNorms for LinearSystemConfig {
    fn coefficient_norm(&self, t: f64) -> Result<f64> {
        let c = self.coefficient.at(t);
        if c.col_iter().flat_map(|col| col.iter().copied().collect::<Vec<_>>()).any(|v| !v.is_finite()) {
            return Err(Error::InvalidCoefficient { t });
        }
        finite(op_norm(c.as_ref())?, t)
    }

    fn forcing_norm(&self, t: f64) -> Result<f64> {
        finite(norm2(&self.forcing.at(t, self.coefficient.dim())), t)
    }

    fn autonomous_matrix(&self) -> Option<Mat<f64>> {
        (self.coefficient.is_constant() && self.forcing.is_zero()).then(|| self.coefficient.at(0.0))
    }
}

/// Semi-discrete upwind operator `C(t) = −v(t) B / Δx` with `B` a one-sided
/// difference; `‖B‖₂ ≤ 2` by the triangle inequality.
impl CoefficientNorms for Advection1dConfig {
    fn coefficient_norm(&self, t: f64) -> Result<f64> {
        finite(2.0 * self.velocity.at(t).abs() / self.dx, t)
    }

    fn forcing_norm(&self, _t: f64) -> Result<f64> {
        Ok(0.0)
    }
}

/// Semi-discrete `C(t) = D Δ_h − v_x(t) D_x − v_y(t) D_y` with Dirichlet
/// walls, bounded term by term: `‖Δ_h‖ ≤ 4/Δx² + 4/Δy²`, `‖D_x‖ ≤ 1/Δx`.
impl CoefficientNorms for AdvDiff2dConfig {
    fn coefficient_norm(&self, t: f64) -> Result<f64> {
        let (dx, dy) = (self.dx(), self.dy());
        let diffusion = self.diffusivity * (4.0 / (dx * dx) + 4.0 / (dy * dy));
        finite(diffusion + self.vx.at(t).abs() / dx + self.vy.at(t).abs() / dy, t)
    }

    fn forcing_norm(&self, _t: f64) -> Result<f64> {
        Ok(0.0)
    }
}

/// Sampled per-step maxima of `‖C(s)‖₂` and `‖f(s)‖₂`.
#[derive(Debug, Clone, PartialEq)]
pub struct GammaF {
    pub gamma_i: Vec<f64>,
    pub f_i: Vec<f64>,
    pub gamma: f64,
    pub f: f64,
}

impl GammaF {
    /// Samples `[t0 + iΔt, t0 + (i+1)Δt]` for `i < m` at
    /// `SAMPLES_PER_STEP + 1` points and inflates each maximum by
    /// `SAMPLE_INFLATION`.
    pub fn sample(coeffs: &impl CoefficientNorms, t0: f64, dt: f64, m: usize) -> Result<Self> {
        let mut gamma_i = Vec::with_capacity(m);
        let mut f_i = Vec::with_capacity(m);
        for i in 0..m {
            let (mut g, mut f) = (0.0f64, 0.0f64);
            for k in 0..=SAMPLES_PER_STEP {
                let s = t0 + (i as f64 + k as f64 / SAMPLES_PER_STEP as f64) * dt;
                g = g.max(coeffs.coefficient_norm(s)?);
                f = f.max(coeffs.forcing_norm(s)?);
            }
            gamma_i.push(SAMPLE_INFLATION * g);
            f_i.push(SAMPLE_INFLATION * f);
        }
        Ok(Self {
            gamma: gamma_i.iter().copied().fold(0.0, f64::max),
            f: f_i.iter().copied().fold(0.0, f64::max),
            gamma_i,
            f_i,
        })
    }

    /// `(γ, f)` over the first `m` intervals.
    pub fn prefix(&self, m: usize) -> (f64, f64) {
        let g = self.gamma_i[..m].iter().copied().fold(0.0, f64::max);
        let f = self.f_i[..m].iter().copied().fold(0.0, f64::max);
        (g, f)
    }
}

/// `exp(γ²Δt/2)·√(m f²/γ² + ‖X‖_F²)`. The `f²/γ²` term is `0` when `f = 0`
/// and `+∞` (with a notice) when `f > 0` and `γ` vanishes.
///
/// The per-step factor `exp(γ²Δt/2)` is below the Grönwall factor
/// `exp(γΔt)` when `γ < 2`, so data with growing modes and few columns can
/// exceed it; contractive flows always satisfy it.
pub fn time_shift_value(gamma: f64, f: f64, m: usize, frobenius_sq: f64, dt: f64) -> (f64, Option<String>) {
    let forcing = if f == 0.0 {
        0.0
    } else if gamma < GAMMA_FLOOR {
        return (
            f64::INFINITY,
            Some(format!("forcing {f:.3e} with vanishing coefficient norm: bound diverges")),
        );
    } else {
        m as f64 * f * f / (gamma * gamma)
    };
    ((0.5 * gamma * gamma * dt).exp() * (forcing + frobenius_sq).sqrt(), None)
}

/// The time-shift bound against `‖Y‖₂` using the first `m` columns for
/// each `m` in `counts`. Column `i` of `X` sits at `t0 + iΔt`.
pub fn time_shift_curve(
    coeffs: &impl CoefficientNorms,
    d: &DataPair,
    t0: f64,
    dt: f64,
    counts: &[usize],
) -> Result<BoundReport> {
    let pairs = d.pairs();
    if let Some(&bad) = counts.iter().find(|&&m| m == 0 || m > pairs) {
        return Err(Error::Index(format!("column count {bad} outside 1..={pairs}")));
    }
    let top = counts.iter().copied().max().unwrap_or(0);
    let g = GammaF::sample(coeffs, t0, dt, top)?;
    let mut frob = Vec::with_capacity(top + 1);
    frob.push(0.0);
    for j in 0..top {
        let prev = frob[j];
        frob.push(prev + d.x.col(j).squared_norm_l2());
    }
    let mut computed = Vec::with_capacity(counts.len());
    let mut measured = Vec::with_capacity(counts.len());
    let mut notice = None;
    for &m in counts {
        let (gamma, f) = g.prefix(m);
        let (b, note) = time_shift_value(gamma, f, m, frob[m], dt);
        notice = notice.or(note);
        computed.push(b);
        measured.push(op_norm(d.y.get(.., ..m))?);
    }
    Ok(BoundReport::series("time_shift", "", top, counts.to_vec(), computed, measured).with_notice(notice))
}

/// [`time_shift_curve`] at the full column count.
pub fn time_shift_bound(coeffs: &impl CoefficientNorms, d: &DataPair, t0: f64, dt: f64) -> Result<BoundReport> {
    time_shift_curve(coeffs, d, t0, dt, &[d.pairs()])
}

/// Constant-coefficient refinement `κ₂(Q)·e^{λ₁Δt}·σ_max(X)` for
/// `C = QΛQ⁻¹` and `f ≡ 0`, where `λ₁` is the largest real part.
/// Eigenvectors are normalized to unit length before taking `κ₂`.
pub fn refined_time_shift_bound(c: MatRef<'_, f64>, d: &DataPair, dt: f64) -> Result<BoundReport> {
    if c.nrows() != c.ncols() || c.nrows() != d.dim() {
        return Err(Error::Index(format!(
            "coefficient is {}x{}, data dimension is {}",
            c.nrows(),
            c.ncols(),
            d.dim()
        )));
    }
    let evd = c
        .eigen()
        .map_err(|e| Error::DegenerateInput(format!("eigendecomposition failed: {e:?}")))?;
    let lambda1 = evd.S().column_vector().iter().map(|l| l.re).fold(f64::NEG_INFINITY, f64::max);
    let mut q = evd.U().to_owned();
    for k in 0..q.ncols() {
        let n = q.col(k).norm_l2();
        if n > 0.0 {
            for i in 0..q.nrows() {
                q[(i, k)] /= n;
            }
        }
    }
    let qs = q
        .singular_values()
        .map_err(|e| Error::DegenerateInput(format!("eigenvector SVD failed: {e:?}")))?;
    let smin = qs.last().copied().unwrap_or(0.0);
    if !(smin > 0.0) {
        return Err(Error::DefectiveOperator { cond: f64::INFINITY });
    }
    let kappa = qs[0] / smin;
    let bound = kappa * (lambda1 * dt).exp() * op_norm(d.x.as_ref())?;
    let measured = op_norm(d.y.as_ref())?;
    Ok(BoundReport::scalar("time_shift_refined", "", d.pairs(), bound, measured))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::snapshots::build_data_pair;
    use crate::solvers::{solve_linear_system, Coefficient, Forcing};

    fn linear(coefficient: Coefficient, forcing: Forcing, x0: Vec<f64>) -> LinearSystemConfig {
        LinearSystemConfig {
            coefficient,
            forcing,
            x0,
            ..Default::default()
        }
    }

    #[test]
    fn zero_system_reduces_to_frobenius_norm() {
        let cfg = linear(Coefficient::Diagonal { values: vec![0.0, 0.0] }, Forcing::Zero, vec![1.0, 2.0]);
        let d = build_data_pair(&solve_linear_system(&cfg).unwrap()).unwrap();
        let r = time_shift_bound(&cfg, &d, 0.0, cfg.dt).unwrap();
        let frob = (d.x.squared_norm_l2()).sqrt();
        assert!((r.computed[0] - frob).abs() < 1e-12 * frob);
        assert!(r.satisfied);
    }

    #[test]
    fn rotation_gamma_is_one_plus_eps_t() {
        let cfg = LinearSystemConfig::default();
        let g = GammaF::sample(&cfg, 0.0, cfg.dt, 1000).unwrap();
        assert!((g.gamma - SAMPLE_INFLATION * 1.1).abs() < 1e-12);
        assert!((g.gamma_i[0] - SAMPLE_INFLATION * (1.0 + 0.1 * cfg.dt)).abs() < 1e-12);
        assert_eq!(g.f, 0.0);
    }

    #[test]
    fn rotation_bound_dominates_every_count() {
        let cfg = LinearSystemConfig::default();
        let d = build_data_pair(&solve_linear_system(&cfg).unwrap()).unwrap();
        let counts: Vec<usize> = (1..=10).map(|k| 100 * k).collect();
        let r = time_shift_curve(&cfg, &d, 0.0, cfg.dt, &counts).unwrap();
        assert!(r.satisfied);
        assert!(r.computed.windows(2).all(|w| w[1] >= w[0]));
    }

    #[test]
    fn diagonal_refinement() {
        let cfg = linear(Coefficient::Diagonal { values: vec![-1.0, -2.0] }, Forcing::Zero, vec![1.0, 1.0]);
        let d = build_data_pair(&solve_linear_system(&cfg).unwrap()).unwrap();
        let c = cfg.autonomous_matrix().unwrap();
        let r = refined_time_shift_bound(c.as_ref(), &d, cfg.dt).unwrap();
        let smax = op_norm(d.x.as_ref()).unwrap();
        assert!((r.computed[0] - (-cfg.dt).exp() * smax).abs() < 1e-12 * smax);
        assert!(r.satisfied);
    }

    #[test]
    fn forcing_without_coefficient_diverges() {
        let (b, note) = time_shift_value(0.0, 1.0, 3, 2.0, 0.1);
        assert!(b.is_infinite() && note.is_some());
        let (b, note) = time_shift_value(0.0, 0.0, 3, 4.0, 0.1);
        assert_eq!(b, 2.0);
        assert!(note.is_none());
    }

    #[test]
    fn forced_system_satisfied() {
        let cfg = linear(
            Coefficient::Constant {
                rows: vec![vec![-0.5, 1.0], vec![-1.0, -0.5]],
            },
            Forcing::Constant { values: vec![1.0, -2.0] },
            vec![0.0, 1.0],
        );
        assert!(cfg.autonomous_matrix().is_none());
        let d = build_data_pair(&solve_linear_system(&cfg).unwrap()).unwrap();
        assert!(time_shift_bound(&cfg, &d, 0.0, cfg.dt).unwrap().satisfied);
    }

    #[test]
    fn count_out_of_range_rejected() {
        let cfg = LinearSystemConfig::default();
        let d = build_data_pair(&solve_linear_system(&cfg).unwrap()).unwrap();
        assert!(matches!(time_shift_curve(&cfg, &d, 0.0, cfg.dt, &[0]), Err(Error::Index(_))));
        assert!(matches!(time_shift_curve(&cfg, &d, 0.0, cfg.dt, &[1001]), Err(Error::Index(_))));
    }
}
