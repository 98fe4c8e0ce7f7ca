//! Small dense linear-algebra helpers shared across the crate.

use faer::{Col, Mat, MatRef};

use crate::error::{Error, Result};

/// Relative tolerance for power iteration.
pub const POWER_TOL: f64 = 1e-10;
/// Iteration cap for power iteration.
pub const POWER_MAX_ITER: usize = 10_000;

/// Spectral norm `‖a‖₂` by power iteration on `aᵀa`.
///
/// The start vector is fixed so results are reproducible.
pub fn spectral_norm(a: MatRef<'_, f64>) -> f64 {
    let (rows, cols) = a.shape();
    if rows == 0 || cols == 0 {
        return 0.0;
    }
    let mut v = Col::<f64>::from_fn(cols, |j| 1.0 + 1e-3 * ((j * 7919 % 13) as f64));
    let n0 = v.norm_l2();
    v /= n0;
    let mut estimate = 0.0;
    for _ in 0..POWER_MAX_ITER {
        let av = a * &v;
        let sigma = av.norm_l2();
        if sigma == 0.0 {
            return 0.0;
        }
        let mut w = a.transpose() * &av;
        let wn = w.norm_l2();
        if wn == 0.0 {
            return sigma;
        }
        w /= wn;
        v = w;
        if (sigma - estimate).abs() <= POWER_TOL * sigma {
            // One extra application so the returned value uses the updated vector.
            return (a * &v).norm_l2().max(sigma);
        }
        estimate = sigma;
    }
    estimate
}

/// Singular values in non-increasing order.
pub fn singular_values(a: MatRef<'_, f64>) -> Result<Vec<f64>> {
    if a.nrows() == 0 || a.ncols() == 0 {
        return Ok(Vec::new());
    }
    a.singular_values()
        .map_err(|e| Error::DegenerateInput(format!("singular value decomposition failed: {e:?}")))
}

/// Default numerical-rank cutoff for a matrix with the given singular values.
pub fn rank_cutoff(sigma: &[f64], shape: (usize, usize)) -> f64 {
    let largest = sigma.first().copied().unwrap_or(0.0);
    shape.0.max(shape.1) as f64 * f64::EPSILON * largest
}

/// Number of singular values above the default numerical-rank cutoff.
pub fn numerical_rank(sigma: &[f64], shape: (usize, usize)) -> usize {
    let cutoff = rank_cutoff(sigma, shape);
    sigma.iter().take_while(|&&s| s > cutoff).count()
}

/// Thin SVD factors `(U, σ, V)` truncated to the numerical rank.
pub fn thin_svd(a: MatRef<'_, f64>) -> Result<(Mat<f64>, Vec<f64>, Mat<f64>)> {
    let svd = a
        .thin_svd()
        .map_err(|e| Error::DegenerateInput(format!("singular value decomposition failed: {e:?}")))?;
    let sigma: Vec<f64> = svd.S().column_vector().iter().copied().collect();
    Ok((svd.U().to_owned(), sigma, svd.V().to_owned()))
}

/// Moore-Penrose pseudoinverse through the SVD.
pub fn pinv(a: MatRef<'_, f64>) -> Result<Mat<f64>> {
    let (u, sigma, v) = thin_svd(a)?;
    let rank = numerical_rank(&sigma, a.shape());
    let scaled = Mat::from_fn(v.nrows(), rank, |i, k| v[(i, k)] / sigma[k]);
    Ok(&scaled * u.get(.., ..rank).transpose())
}

/// Copy a column into a `Vec`.
pub fn col_to_vec(c: faer::ColRef<'_, f64>) -> Vec<f64> {
    c.iter().copied().collect()
}

/// Build a column from a slice.
pub fn col_from_slice(v: &[f64]) -> Col<f64> {
    Col::from_fn(v.len(), |i| v[i])
}

/// Euclidean norm of a slice.
pub fn norm2(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Stack two matrices with the same row count side by side.
pub fn hstack(a: MatRef<'_, f64>, b: MatRef<'_, f64>) -> Mat<f64> {
    assert_eq!(a.nrows(), b.nrows());
    let k = a.ncols();
    Mat::from_fn(a.nrows(), k + b.ncols(), |i, j| {
        if j < k {
            a[(i, j)]
        } else {
            b[(i, j - k)]
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn spectral_norm_matches_largest_singular_value() {
        let a = Mat::from_fn(7, 4, |i, j| ((i * 31 + j * 17) % 11) as f64 - 5.0);
        let sigma = singular_values(a.as_ref()).unwrap();
        let norm = spectral_norm(a.as_ref());
        assert!((norm - sigma[0]).abs() <= 1e-9 * sigma[0], "{norm} vs {}", sigma[0]);
    }

    #[test]
    fn spectral_norm_of_zero_is_zero() {
        let a = Mat::<f64>::zeros(3, 3);
        assert_eq!(spectral_norm(a.as_ref()), 0.0);
    }

    #[test]
    fn pinv_of_tall_full_rank_is_left_inverse() {
        let a = Mat::from_fn(6, 3, |i, j| ((i + 1) as f64).powi(j as i32));
        let p = pinv(a.as_ref()).unwrap();
        let eye = &p * &a;
        for i in 0..3 {
            for j in 0..3 {
                let want = if i == j { 1.0 } else { 0.0 };
                assert!((eye[(i, j)] - want).abs() < 1e-10);
            }
        }
    }
}
