//! Standard dynamic mode decomposition.
//!
//! Given time-shifted data `X`, `Y`, the reduced operator
//! `K̂ = U_rᵀ Y V_r Σ_r⁻¹` is diagonalized as `K̂ = Q Λ Q⁻¹` and the modes are
//! `Φ = U_r Q`. Predictions evaluate `Re(Φ e^{tΩ} Φ† x0)` with
//! `ω_k = ln(λ_k)/Δt` on the principal branch; frequencies above the Nyquist
//! rate `π/Δt` alias and are not corrected.

use std::io::Write;

use faer::linalg::solvers::DenseSolveCore;
use faer::{c64, Col, Mat, MatRef};

use crate::error::{Error, Result};
use crate::linalg;
use crate::snapshots::DataPair;

/// Eigenvalues with modulus below this are dead modes: they contribute at
/// `t = 0` and vanish for `t > 0`.
pub const DEAD_MODE_CUTOFF: f64 = 1e-14;
/// Largest admissible condition number of the eigenvector matrix.
pub const MAX_EIGVEC_CONDITION: f64 = 1e12;
/// Singular values within this fraction of `σ_1` of the last retained one are
/// kept as ties.
const TIE_TOL: f64 = 1e-12;

/// How many singular triplets to keep.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Truncation {
    /// Smallest rank whose relative discarded energy `Σ_{k>r}σ_k² / Σσ_k²`
    /// is below the threshold.
    Energy(f64),
    /// Fixed rank, clipped to the numerical rank.
    Rank(usize),
    /// Every singular value above `max(rows, cols)·ε_mach·σ_1`.
    NumericalRank,
}

impl From<f64> for Truncation {
    fn from(eps: f64) -> Self {
        Truncation::Energy(eps)
    }
}

/// Rank-`r` SVD factors of a data matrix.
#[derive(Debug, Clone)]
pub struct TruncatedSvd {
    pub u: Mat<f64>,
    pub sigma: Vec<f64>,
    pub v: Mat<f64>,
    /// Relative energy of the discarded singular values.
    pub tail_energy: f64,
    /// Every singular value of the input, retained or not.
    pub all_sigma: Vec<f64>,
}

impl TruncatedSvd {
    pub fn rank(&self) -> usize {
        self.sigma.len()
    }
}

/// Relative tail energies: entry `r` is `Σ_{k≥r} σ_k² / Σ σ_k²` (0-based).
pub fn tail_energies(sigma: &[f64]) -> Vec<f64> {
    let total: f64 = sigma.iter().map(|s| s * s).sum();
    let mut tails = vec![0.0; sigma.len() + 1];
    for k in (0..sigma.len()).rev() {
        tails[k] = tails[k + 1] + sigma[k] * sigma[k];
    }
    tails.iter().map(|t| t / total).collect()
}

pub fn truncated_svd(x: MatRef<'_, f64>, truncation: impl Into<Truncation>) -> Result<TruncatedSvd> {
    let truncation = truncation.into();
    if x.nrows() == 0 || x.ncols() == 0 || x.norm_l2() == 0.0 {
        return Err(Error::DegenerateInput("data matrix is zero".into()));
    }
    let (u, sigma, v) = linalg::thin_svd(x)?;
    let numerical = linalg::numerical_rank(&sigma, x.shape());
    let tails = tail_energies(&sigma);
    let mut r = match truncation {
        Truncation::Energy(eps) => {
            if !(eps > 0.0 && eps < 1.0) {
                return Err(Error::Config(format!("truncation threshold must lie in (0, 1), got {eps}")));
            }
            (1..=sigma.len()).find(|&r| tails[r] < eps).unwrap_or(sigma.len())
        }
        Truncation::Rank(k) => k.max(1),
        Truncation::NumericalRank => numerical,
    };
    if !matches!(truncation, Truncation::Rank(_)) {
        while r < numerical && sigma[r - 1] - sigma[r] <= TIE_TOL * sigma[0] {
            r += 1;
        }
    }
    let r = r.min(numerical).max(1);
    Ok(TruncatedSvd {
        u: u.get(.., ..r).to_owned(),
        sigma: sigma[..r].to_vec(),
        v: v.get(.., ..r).to_owned(),
        tail_energy: tails[r],
        all_sigma: sigma,
    })
}

/// Something that maps a batch of states (as columns) forward one step.
pub trait LinearMap {
    fn apply(&self, x: MatRef<'_, f64>) -> Mat<f64>;
}

impl LinearMap for Mat<f64> {
    fn apply(&self, x: MatRef<'_, f64>) -> Mat<f64> {
        self * x
    }
}

impl LinearMap for MatRef<'_, f64> {
    fn apply(&self, x: MatRef<'_, f64>) -> Mat<f64> {
        *self * x
    }
}

/// Mean squared one-step error `(1/m) Σ ‖y_i − K x_i‖²`.
pub fn mse_loss(op: &impl LinearMap, d: &DataPair) -> f64 {
    let pred = op.apply(d.x.as_ref());
    assert_eq!(pred.shape(), d.y.shape(), "operator output shape mismatch");
    let diff = &d.y - &pred;
    let sq = diff.norm_l2();
    sq * sq / d.pairs() as f64
}

/// A fitted standard DMD model for one time interval.
#[derive(Debug, Clone)]
pub struct DmdModel {
    svd: TruncatedSvd,
    k_hat: Mat<f64>,
    eigvals: Vec<c64>,
    eigvecs: Mat<c64>,
    eigvecs_inv: Mat<c64>,
    omegas: Vec<Option<c64>>,
    amplitudes: Vec<c64>,
    /// `Y V_r Σ_r⁻¹`; the rank-`r` least-squares operator is this times `U_rᵀ`.
    ls_factor: Mat<f64>,
    dt: f64,
}

/// Standard DMD on a data pair with truncation threshold `eps`.
pub fn fit_standard(d: &DataPair, eps: impl Into<Truncation>, dt: f64) -> Result<DmdModel> {
    DmdModel::fit(d, eps, dt)
}

impl DmdModel {
    pub fn fit(d: &DataPair, truncation: impl Into<Truncation>, dt: f64) -> Result<Self> {
        if !(dt > 0.0) {
            return Err(Error::Config(format!("time step must be positive, got {dt}")));
        }
        let svd = truncated_svd(d.x.as_ref(), truncation)?;
        let r = svd.rank();
        let yv = &d.y * &svd.v;
        let ls_factor = Mat::from_fn(yv.nrows(), r, |i, k| yv[(i, k)] / svd.sigma[k]);
        let k_hat = svd.u.transpose() * &ls_factor;

        let evd = k_hat
            .eigen()
            .map_err(|e| Error::DegenerateInput(format!("eigendecomposition failed: {e:?}")))?;
        let eigvals: Vec<c64> = evd.S().column_vector().iter().copied().collect();
        let mut eigvecs = evd.U().to_owned();
        for k in 0..r {
            let n = eigvecs.col(k).norm_l2();
            if n > 0.0 {
                for i in 0..r {
                    eigvecs[(i, k)] /= n;
                }
            }
        }
        let qs = eigvecs
            .singular_values()
            .map_err(|e| Error::DegenerateInput(format!("eigenvector SVD failed: {e:?}")))?;
        let smin = qs.last().copied().unwrap_or(0.0);
        let cond = if smin > 0.0 { qs[0] / smin } else { f64::INFINITY };
        if !(cond <= MAX_EIGVEC_CONDITION) {
            return Err(Error::DefectiveOperator { cond });
        }
        let eigvecs_inv = eigvecs.partial_piv_lu().inverse();
        let omegas = eigvals
            .iter()
            .map(|&l| (l.norm() >= DEAD_MODE_CUTOFF).then(|| l.ln() / dt))
            .collect();

        let mut model = Self {
            svd,
            k_hat,
            eigvals,
            eigvecs,
            eigvecs_inv,
            omegas,
            amplitudes: Vec::new(),
            ls_factor,
            dt,
        };
        model.amplitudes = model.amplitudes_of(d.x.col(0).as_mat().col(0));
        Ok(model)
    }

    pub fn dim(&self) -> usize {
        self.svd.u.nrows()
    }

    pub fn rank(&self) -> usize {
        self.svd.rank()
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn svd(&self) -> &TruncatedSvd {
        &self.svd
    }

    pub fn reduced_operator(&self) -> MatRef<'_, f64> {
        self.k_hat.as_ref()
    }

    pub fn eigenvalues(&self) -> &[c64] {
        &self.eigvals
    }

    pub fn eigenvectors(&self) -> MatRef<'_, c64> {
        self.eigvecs.as_ref()
    }

    /// Continuous-time frequencies; `None` marks a dead mode.
    pub fn frequencies(&self) -> &[Option<c64>] {
        &self.omegas
    }

    /// Amplitudes `Φ† x_1` of the first training snapshot.
    pub fn amplitudes(&self) -> &[c64] {
        &self.amplitudes
    }

    /// DMD modes `Φ = U_r Q`.
    pub fn modes(&self) -> Mat<c64> {
        let u = Mat::from_fn(self.dim(), self.rank(), |i, k| c64::new(self.svd.u[(i, k)], 0.0));
        &u * &self.eigvecs
    }

    /// Mode amplitudes `Φ† x = Q⁻¹ U_rᵀ x`.
    pub fn amplitudes_of(&self, x: faer::ColRef<'_, f64>) -> Vec<c64> {
        let reduced = self.svd.u.transpose() * x;
        let rc = Col::<c64>::from_fn(self.rank(), |k| c64::new(reduced[k], 0.0));
        let b = &self.eigvecs_inv * &rc;
        b.iter().copied().collect()
    }

    fn synthesize(&self, coeffs: &[c64]) -> Vec<f64> {
        let cc = Col::<c64>::from_fn(self.rank(), |k| coeffs[k]);
        let z = &self.eigvecs * &cc;
        let zr = Col::<f64>::from_fn(self.rank(), |k| z[k].re);
        let out = &self.svd.u * &zr;
        out.iter().copied().collect()
    }

    fn check_dim(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.dim() {
            return Err(Error::Index(format!(
                "state has length {}, model dimension is {}",
                x.len(),
                self.dim()
            )));
        }
        Ok(())
    }

    /// Evolve `x` for an elapsed time `tau ≥ 0`: `Re(Φ e^{τΩ} Φ† x)`.
    pub fn propagate(&self, x: &[f64], tau: f64) -> Result<Vec<f64>> {
        self.check_dim(x)?;
        if tau < 0.0 {
            return Err(Error::Index(format!("negative elapsed time {tau}")));
        }
        let b = self.amplitudes_of(linalg::col_from_slice(x).as_ref());
        let scaled: Vec<c64> = b
            .iter()
            .zip(&self.omegas)
            .map(|(&bk, om)| match om {
                Some(w) => bk * (*w * tau).exp(),
                None if tau == 0.0 => bk,
                None => c64::new(0.0, 0.0),
            })
            .collect();
        Ok(self.synthesize(&scaled))
    }

    /// Prediction at absolute time `t` from `x0` at `t = 0`.
    pub fn predict_at(&self, x0: &[f64], t: f64) -> Result<Vec<f64>> {
        self.propagate(x0, t)
    }

    /// Discrete prediction `Re(Φ Λ^k Φ† x0)`.
    pub fn predict_steps(&self, x0: &[f64], k: u32) -> Result<Vec<f64>> {
        self.check_dim(x0)?;
        let b = self.amplitudes_of(linalg::col_from_slice(x0).as_ref());
        let scaled: Vec<c64> = b.iter().zip(&self.eigvals).map(|(&bk, &l)| bk * l.powu(k)).collect();
        Ok(self.synthesize(&scaled))
    }

    /// Dense `Φ Λ Φ†`, the one-step map the predictions use.
    pub fn projected_operator(&self) -> Mat<f64> {
        let lambda_qinv = Mat::<c64>::from_fn(self.rank(), self.rank(), |i, j| self.eigvals[i] * self.eigvecs_inv[(i, j)]);
        let core = &self.eigvecs * &lambda_qinv;
        let core_re = Mat::from_fn(self.rank(), self.rank(), |i, j| core[(i, j)].re);
        &self.svd.u * &core_re * self.svd.u.transpose()
    }

    /// Dense rank-`r` least-squares operator `Y V_r Σ_r⁻¹ U_rᵀ`.
    pub fn least_squares_operator(&self) -> Mat<f64> {
        &self.ls_factor * self.svd.u.transpose()
    }

    /// One-step training error of the least-squares operator.
    pub fn training_mse(&self, d: &DataPair) -> f64 {
        mse_loss(self, d)
    }

    /// CSV rows of eigenvalues, frequencies and amplitudes of `x0`.
    pub fn write_spectrum_csv(&self, w: &mut impl Write, x0: Option<&[f64]>) -> Result<()> {
        let amps = match x0 {
            Some(x) => {
                self.check_dim(x)?;
                self.amplitudes_of(linalg::col_from_slice(x).as_ref())
            }
            None => self.amplitudes.clone(),
        };
        writeln!(w, "mode,lambda_re,lambda_im,omega_re,omega_im,amplitude_re,amplitude_im,amplitude_abs")?;
        for (k, (l, a)) in self.eigvals.iter().zip(&amps).enumerate() {
            let (ore, oim) = match self.omegas[k] {
                Some(o) => (o.re.to_string(), o.im.to_string()),
                None => (String::new(), String::new()),
            };
            writeln!(w, "{k},{},{},{ore},{oim},{},{},{}", l.re, l.im, a.re, a.im, a.norm())?;
        }
        Ok(())
    }
}

impl LinearMap for DmdModel {
    /// Applies the least-squares operator without forming it.
    fn apply(&self, x: MatRef<'_, f64>) -> Mat<f64> {
        let reduced = self.svd.u.transpose() * x;
        &self.ls_factor * &reduced
    }
}
