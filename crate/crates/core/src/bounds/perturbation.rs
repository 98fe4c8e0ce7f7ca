use faer::{Col, Mat, MatRef};

use super::BoundReport;
use crate::error::{Error, Result};
use crate::linalg::{self, col_from_slice, hstack, norm2, numerical_rank, pinv, thin_svd};
use crate::snapshots::DataPair;

/// Below this size the spectral norm comes from a full SVD; above it,
/// from power iteration.
const DENSE_NORM_LIMIT: usize = 256;

/// Collapse threshold for the appended column, relative to `‖u‖²`.
const COLLAPSE_RTOL: f64 = 1e-12;

/// Orthogonality threshold for `‖Xmᵀu‖`, relative to `‖u‖`.
const ORTHOGONAL_RTOL: f64 = 1e-12;

pub(crate) fn op_norm(a: MatRef<'_, f64>) -> Result<f64> {
    if a.nrows().min(a.ncols()) <= DENSE_NORM_LIMIT {
        Ok(linalg::singular_values(a)?.first().copied().unwrap_or(0.0))
    } else {
        Ok(linalg::spectral_norm(a))
    }
}

struct TailSvd {
    u: Mat<f64>,
    sigma: Vec<f64>,
    v: Mat<f64>,
    rank: usize,
    notice: Option<String>,
}

fn checked_svd(x: MatRef<'_, f64>, r: usize) -> Result<TailSvd> {
    let (u, sigma, v) = thin_svd(x)?;
    let rank = numerical_rank(&sigma, x.shape());
    if r > rank {
        return Err(Error::Config(format!("truncation rank {r} exceeds the numerical rank {rank}")));
    }
    let notice = (rank < x.nrows().min(x.ncols()))
        .then(|| format!("X has numerical rank {rank}; smallest nonzero singular value used"));
    Ok(TailSvd {
        u,
        sigma,
        v,
        rank,
        notice,
    })
}

/// `‖Y X† − Y X_r†‖₂ ≤ σ_max(Y) / σ_min(X)`, with `σ_min` the smallest
/// nonzero singular value.
pub fn rank_truncation_bound(d: &DataPair, r: usize) -> Result<BoundReport> {
    let svd = checked_svd(d.x.as_ref(), r)?;
    let smax_y = op_norm(d.y.as_ref())?;
    let bound = if svd.rank == 0 { 0.0 } else { smax_y / svd.sigma[svd.rank - 1] };
    // K − K_r = Y V_tail Σ_tail⁻¹ U_tailᵀ, and U_tail has orthonormal columns.
    let tail = Mat::from_fn(d.x.ncols(), svd.rank - r, |i, k| svd.v[(i, r + k)] / svd.sigma[r + k]);
    let measured = op_norm((&d.y * &tail).as_ref())?;
    Ok(BoundReport::scalar("rank_truncation", format!("r={r}"), d.pairs(), bound, measured).with_notice(svd.notice))
}

/// `‖Kx − K_r x‖₂² ≤ Σ_{k>r} σ_max²(Y)/σ_k²(X)·(u_kᵀx)²`, reported on the
/// norm (square-root) scale.
pub fn pointwise_rank_bound(d: &DataPair, r: usize, x: &[f64]) -> Result<BoundReport> {
    if x.len() != d.dim() {
        return Err(Error::Index(format!("vector has length {}, data dimension is {}", x.len(), d.dim())));
    }
    let svd = checked_svd(d.x.as_ref(), r)?;
    let smax_y = op_norm(d.y.as_ref())?;
    let xc = col_from_slice(x);
    let coeffs: Vec<f64> = (r..svd.rank)
        .map(|k| svd.u.col(k).transpose() * &xc)
        .collect();
    let bound = coeffs
        .iter()
        .zip(&svd.sigma[r..svd.rank])
        .map(|(c, s)| (smax_y * c / s).powi(2))
        .sum::<f64>()
        .sqrt();
    let z = Col::<f64>::from_fn(d.x.ncols(), |i| {
        coeffs.iter().enumerate().map(|(k, c)| svd.v[(i, r + k)] * c / svd.sigma[r + k]).sum()
    });
    let measured = (&d.y * &z).norm_l2();
    Ok(BoundReport::scalar("pointwise_rank", format!("r={r}"), d.pairs(), bound, measured).with_notice(svd.notice))
}

/// Pseudoinverse of `[Xm, u]` from that of `Xm`.
#[derive(Debug, Clone)]
pub struct PinvUpdate {
    pub pinv: Mat<f64>,
    /// `1 / (‖u‖² − uᵀXm(XmᵀXm)⁻¹Xmᵀu)`; always `≥ 1/‖u‖²`.
    pub c: f64,
    /// `(I − Xm Xm†) u`.
    pub residual: Vec<f64>,
}

/// Block update `[Xm† − c Xm†u rᵀ; c rᵀ]` with `r = (I − Xm Xm†) u`.
///
/// The denominator of `c` equals `‖r‖²`, which is evaluated directly
/// instead of as a difference of two nearly equal terms.
pub fn pinv_append(xm_pinv: MatRef<'_, f64>, xm: MatRef<'_, f64>, u: &[f64]) -> Result<PinvUpdate> {
    let (n, m) = xm.shape();
    if xm_pinv.shape() != (m, n) || u.len() != n {
        return Err(Error::Index(format!(
            "shapes X {n}x{m}, X† {}x{}, u {} do not match",
            xm_pinv.nrows(),
            xm_pinv.ncols(),
            u.len()
        )));
    }
    if n < m + 1 {
        return Err(Error::Config(format!("{} columns cannot have full column rank in dimension {n}", m + 1)));
    }
    let uc = col_from_slice(u);
    let w = xm_pinv * &uc;
    let r = &uc - xm * &w;
    let denom = r.squared_norm_l2();
    if denom <= COLLAPSE_RTOL * uc.squared_norm_l2() {
        return Err(Error::RankCollapse { residual: denom });
    }
    let c = 1.0 / denom;
    let pinv = Mat::from_fn(m + 1, n, |i, j| {
        if i < m {
            xm_pinv[(i, j)] - c * w[i] * r[j]
        } else {
            c * r[j]
        }
    });
    Ok(PinvUpdate {
        pinv,
        c,
        residual: r.iter().copied().collect(),
    })
}

/// Inverse of [`pinv_append`]: recovers `Xm†` from `[Xm, u]†` alone.
///
/// With `[Xm, u]† = [A; bᵀ]`, `Xm† = A − (A b) bᵀ / ‖b‖²`.
pub fn pinv_delete_last(x_pinv: MatRef<'_, f64>) -> Result<Mat<f64>> {
    let (rows, n) = x_pinv.shape();
    if rows < 2 {
        return Err(Error::InsufficientData("need at least two rows to delete one".into()));
    }
    let m = rows - 1;
    let a = x_pinv.get(..m, ..);
    let b = x_pinv.row(m).transpose().to_owned();
    let bb = b.squared_norm_l2();
    if bb == 0.0 {
        return Err(Error::DegenerateInput("last row of the pseudoinverse is zero".into()));
    }
    let ab = a * &b;
    Ok(Mat::from_fn(m, n, |i, j| a[(i, j)] - ab[i] * b[j] / bb))
}

struct DeletionParts {
    c: f64,
    u2: f64,
    v2: f64,
    smin2: f64,
    smax_y2: f64,
    orthogonal: bool,
    measured: f64,
}

fn deletion_parts(xm: MatRef<'_, f64>, ym: MatRef<'_, f64>, u: &[f64], v: &[f64]) -> Result<DeletionParts> {
    let (n, m) = xm.shape();
    if ym.shape() != (n, m) || v.len() != n {
        return Err(Error::Index("X and Y blocks must have equal shapes".into()));
    }
    let sigma = linalg::singular_values(xm)?;
    if numerical_rank(&sigma, xm.shape()) < m {
        return Err(Error::DegenerateInput("Xm does not have full column rank".into()));
    }
    let xm_pinv = pinv(xm)?;
    let upd = pinv_append(xm_pinv.as_ref(), xm, u)?;
    let uc = col_from_slice(u);
    let u_norm = norm2(u);
    let orthogonal = (xm.transpose() * &uc).norm_l2() <= ORTHOGONAL_RTOL * u_norm;

    // Measured against an independent pseudoinverse of the full block.
    let x_full = hstack(xm, uc.as_mat());
    let y_full = hstack(ym, col_from_slice(v).as_mat());
    let k_full = &y_full * pinv(x_full.as_ref())?;
    let k_m = ym * &xm_pinv;
    let measured = op_norm((&k_full - &k_m).as_ref())?;
    let smax_y = op_norm(ym)?;
    Ok(DeletionParts {
        c: upd.c,
        u2: u_norm * u_norm,
        v2: norm2(v).powi(2),
        smin2: sigma[m - 1].powi(2),
        smax_y2: smax_y * smax_y,
        orthogonal,
        measured,
    })
}

fn general_value(p: &DeletionParts) -> f64 {
    (p.c * p.c * p.u2 * (1.0 + p.u2 / p.smin2) * (p.smax_y2 + p.v2) + p.v2 / p.smin2).sqrt()
}

fn orthogonal_value(p: &DeletionParts) -> f64 {
    ((p.smax_y2 + p.v2) / p.u2 + (p.smax_y2 + 2.0 * p.v2) / p.smin2).sqrt()
}

/// `‖[Ym, v][Xm, u]† − Ym Xm†‖₂` against the column-deletion bound; the
/// tightened form applies when `u ⊥ range(Xm)`.
pub fn column_deletion_bound(xm: MatRef<'_, f64>, ym: MatRef<'_, f64>, u: &[f64], v: &[f64]) -> Result<BoundReport> {
    let p = deletion_parts(xm, ym, u, v)?;
    let (name, bound) = if p.orthogonal {
        ("column_deletion_orthogonal", orthogonal_value(&p))
    } else {
        ("column_deletion", general_value(&p))
    };
    Ok(BoundReport::scalar(name, "", xm.ncols(), bound, p.measured))
}

/// The general column-deletion bound, regardless of orthogonality.
pub fn column_deletion_general_bound(
    xm: MatRef<'_, f64>,
    ym: MatRef<'_, f64>,
    u: &[f64],
    v: &[f64],
) -> Result<BoundReport> {
    let p = deletion_parts(xm, ym, u, v)?;
    Ok(BoundReport::scalar("column_deletion", "", xm.ncols(), general_value(&p), p.measured))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn gaussian(rows: usize, cols: usize, seed: u64) -> Mat<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Mat::from_fn(rows, cols, |_, _| StandardNormal.sample(&mut rng))
    }

    fn vec_of(m: &Mat<f64>, j: usize) -> Vec<f64> {
        m.col(j).iter().copied().collect()
    }

    fn max_abs_diff(a: &Mat<f64>, b: &Mat<f64>) -> f64 {
        let mut d = 0.0f64;
        for j in 0..a.ncols() {
            for i in 0..a.nrows() {
                d = d.max((a[(i, j)] - b[(i, j)]).abs());
            }
        }
        d
    }

    #[test]
    fn identity_truncation_is_tight() {
        let d = DataPair::new(Mat::identity(3, 3), Mat::identity(3, 3)).unwrap();
        let r = rank_truncation_bound(&d, 2).unwrap();
        assert!((r.computed[0] - 1.0).abs() < 1e-12 && (r.measured[0] - 1.0).abs() < 1e-12);
        assert!(r.satisfied);
    }

    #[test]
    fn full_rank_truncation_measures_zero() {
        let d = DataPair::new(gaussian(30, 10, 1), gaussian(30, 10, 2)).unwrap();
        let r = rank_truncation_bound(&d, 10).unwrap();
        assert_eq!(r.measured[0], 0.0);
    }

    #[test]
    fn gaussian_truncation_satisfied() {
        for seed in 0..10 {
            let d = DataPair::new(gaussian(30, 10, 2 * seed), gaussian(30, 10, 2 * seed + 1)).unwrap();
            assert!(rank_truncation_bound(&d, 5).unwrap().satisfied);
        }
    }

    #[test]
    fn rank_above_numerical_rank_rejected() {
        let x = Mat::from_fn(4, 3, |i, j| if i == j && i < 2 { 1.0 } else { 0.0 });
        let d = DataPair::new(x.clone(), x).unwrap();
        assert!(matches!(rank_truncation_bound(&d, 3), Err(Error::Config(_))));
        let ok = rank_truncation_bound(&d, 1).unwrap();
        assert!(ok.notice.is_some());
    }

    #[test]
    fn pointwise_rank_on_singular_vectors() {
        let d = DataPair::new(gaussian(20, 8, 5), gaussian(20, 8, 6)).unwrap();
        let (u, sigma, _) = thin_svd(d.x.as_ref()).unwrap();
        let r0 = pointwise_rank_bound(&d, 3, &vec_of(&u, 0)).unwrap();
        assert!(r0.computed[0] < 1e-12 && r0.measured[0] < 1e-12);
        let r3 = pointwise_rank_bound(&d, 3, &vec_of(&u, 3)).unwrap();
        let smax_y = linalg::singular_values(d.y.as_ref()).unwrap()[0];
        assert!((r3.computed[0] - smax_y / sigma[3]).abs() < 1e-10 * r3.computed[0]);
        assert!(r3.satisfied);
    }

    #[test]
    fn pointwise_rank_random_vector() {
        let d = DataPair::new(gaussian(20, 8, 7), gaussian(20, 8, 8)).unwrap();
        let x = vec_of(&gaussian(20, 1, 9), 0);
        for r in 0..=8 {
            assert!(pointwise_rank_bound(&d, r, &x).unwrap().satisfied);
        }
    }

    #[test]
    fn orthogonal_append_has_unit_c() {
        let xm = Mat::from_fn(2, 1, |i, _| if i == 0 { 1.0 } else { 0.0 });
        let upd = pinv_append(pinv(xm.as_ref()).unwrap().as_ref(), xm.as_ref(), &[0.0, 1.0]).unwrap();
        assert!((upd.c - 1.0).abs() < 1e-15);
        assert!(max_abs_diff(&upd.pinv, &Mat::identity(2, 2)) < 1e-15);
    }

    #[test]
    fn append_matches_direct_pseudoinverse() {
        let xm = gaussian(40, 10, 11);
        let u = vec_of(&gaussian(40, 1, 12), 0);
        let upd = pinv_append(pinv(xm.as_ref()).unwrap().as_ref(), xm.as_ref(), &u).unwrap();
        let direct = pinv(hstack(xm.as_ref(), col_from_slice(&u).as_mat()).as_ref()).unwrap();
        let scale = max_abs_diff(&direct, &Mat::zeros(11, 40));
        assert!(max_abs_diff(&upd.pinv, &direct) <= 1e-10 * scale);
        assert!(upd.c >= 1.0 / norm2(&u).powi(2));
    }

    #[test]
    fn append_in_range_collapses() {
        let xm = gaussian(10, 3, 13);
        let u: Vec<f64> = (0..10).map(|i| xm[(i, 0)] - 2.0 * xm[(i, 2)]).collect();
        let got = pinv_append(pinv(xm.as_ref()).unwrap().as_ref(), xm.as_ref(), &u);
        assert!(matches!(got, Err(Error::RankCollapse { .. })));
    }

    #[test]
    fn append_then_delete_round_trips() {
        let xm = gaussian(25, 6, 14);
        let xp = pinv(xm.as_ref()).unwrap();
        let upd = pinv_append(xp.as_ref(), xm.as_ref(), &vec_of(&gaussian(25, 1, 15), 0)).unwrap();
        let back = pinv_delete_last(upd.pinv.as_ref()).unwrap();
        assert!(max_abs_diff(&back, &xp) < 1e-10 * max_abs_diff(&xp, &Mat::zeros(6, 25)));
    }

    #[test]
    fn too_many_columns_rejected() {
        let xm = gaussian(3, 3, 16);
        let got = pinv_append(pinv(xm.as_ref()).unwrap().as_ref(), xm.as_ref(), &[1.0, 0.0, 0.0]);
        assert!(matches!(got, Err(Error::Config(_))));
    }

    #[test]
    fn deletion_bound_holds_on_gaussian_data() {
        for seed in 0..10u64 {
            for m in [10, 20, 30, 40] {
                let s = 1000 * seed + m as u64;
                let xm = gaussian(50, m, s);
                let ym = gaussian(50, m, s + 1);
                let u = vec_of(&gaussian(50, 1, s + 2), 0);
                let v = vec_of(&gaussian(50, 1, s + 3), 0);
                let r = column_deletion_bound(xm.as_ref(), ym.as_ref(), &u, &v).unwrap();
                assert_eq!(r.name, "column_deletion");
                assert!(r.satisfied, "seed {seed} m {m}: {r:?}");
            }
        }
    }

    #[test]
    fn orthogonal_deletion_uses_tightened_form() {
        let xm = gaussian(50, 10, 21);
        let ym = gaussian(50, 10, 22);
        let g = gaussian(50, 1, 23);
        let xp = pinv(xm.as_ref()).unwrap();
        let u: Vec<f64> = (&g - &xm * (&xp * &g)).col(0).iter().copied().collect();
        let v = vec_of(&gaussian(50, 1, 24), 0);
        let tight = column_deletion_bound(xm.as_ref(), ym.as_ref(), &u, &v).unwrap();
        assert_eq!(tight.name, "column_deletion_orthogonal");
        assert!(tight.satisfied);
        let general = column_deletion_general_bound(xm.as_ref(), ym.as_ref(), &u, &v).unwrap();
        assert!(general.satisfied);
        assert_eq!(general.measured, tight.measured);
    }

    #[test]
    fn orthogonal_deletion_without_new_output() {
        let xm = gaussian(12, 4, 31);
        let ym = gaussian(12, 4, 32);
        let g = gaussian(12, 1, 33);
        let xp = pinv(xm.as_ref()).unwrap();
        let u: Vec<f64> = (&g - &xm * (&xp * &g)).col(0).iter().copied().collect();
        let r = column_deletion_bound(xm.as_ref(), ym.as_ref(), &u, &[0.0; 12]).unwrap();
        let s = linalg::singular_values(xm.as_ref()).unwrap();
        let smax_y = linalg::singular_values(ym.as_ref()).unwrap()[0];
        let want = (smax_y * smax_y * (1.0 / norm2(&u).powi(2) + 1.0 / s[3].powi(2))).sqrt();
        assert!((r.computed[0] - want).abs() < 1e-12 * want);
        // v = 0 leaves K unchanged: the appended column maps to zero.
        assert!(r.measured[0] < 1e-10);
    }
}
