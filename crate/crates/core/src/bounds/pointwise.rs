use super::{BoundReport, LipschitzData};
use crate::error::{Error, Result};
use crate::linalg::norm2;
use crate::piecewise::PiecewiseDmdModel;
use crate::snapshots::SnapshotSet;

fn check_match(model: &PiecewiseDmdModel, s: &SnapshotSet) -> Result<()> {
    let pairs: usize = model.windows().iter().map(|w| w.pairs).sum();
    let grid = s.grid();
    let same_grid = (grid.t0() - model.t0()).abs() <= 1e-9 * grid.dt() && (grid.dt() - model.dt()).abs() <= 1e-12 * grid.dt();
    if s.dim() != model.dim() || pairs + 1 != s.len() || !same_grid {
        return Err(Error::Index(format!(
            "model covers {} pairs of dimension {}, trajectory has {} snapshots of dimension {}",
            pairs,
            model.dim(),
            s.len(),
            s.dim()
        )));
    }
    Ok(())
}

/// Per window, `max_j ‖x_{j+1} − K x_j‖₂` over the window's training pairs,
/// where `K` is the window's one-step map `Φ Λ Φ†`.
pub fn window_residuals(model: &PiecewiseDmdModel, s: &SnapshotSet) -> Result<Vec<f64>> {
    check_match(model, s)?;
    model
        .windows()
        .iter()
        .enumerate()
        .map(|(k, w)| {
            let mut worst = 0.0f64;
            for j in w.first..w.first + w.pairs {
                let next = w.model.predict_steps(&s.state_vec(j), 1).map_err(|e| e.in_window(k))?;
                let target = s.state_vec(j + 1);
                let diff: Vec<f64> = target.iter().zip(&next).map(|(a, b)| a - b).collect();
                worst = worst.max(norm2(&diff));
            }
            Ok(worst)
        })
        .collect()
}

/// Recursive bound `Bⁿ = (1 + e^{LΔt}) Bⁿ⁻¹ + ρ̂²` on the squared error of
/// the chained prediction, against the measured `‖x_n − x̂_n‖₂²`.
///
/// `ρ̂` is the residual of the window that owns the transition into step
/// `n`. `e0` defaults to the measured initial error, which is the
/// projection error of `x_0` onto the first window's basis. The sequence is
/// non-decreasing and may overflow to `+∞` on long horizons.
pub fn pointwise_error_bound(
    model: &PiecewiseDmdModel,
    s: &SnapshotSet,
    lipschitz: &LipschitzData,
    e0: Option<f64>,
) -> Result<BoundReport> {
    let rho = window_residuals(model, s)?;
    let times = s.grid().times();
    let preds = model.predict_series(&s.state_vec(0), &times)?;
    let measured: Vec<f64> = preds
        .iter()
        .enumerate()
        .map(|(n, p)| s.state(n).iter().zip(p).map(|(a, b)| (a - b).powi(2)).sum())
        .collect();
    let start = e0.unwrap_or(measured[0]);
    if !(start >= 0.0) {
        return Err(Error::Config(format!("initial error {start} must be non-negative")));
    }
    let growth = 1.0 + (lipschitz.l * s.grid().dt()).exp();
    let mut owner = Vec::with_capacity(s.len() - 1);
    for (k, w) in model.windows().iter().enumerate() {
        owner.extend(std::iter::repeat_n(k, w.pairs));
    }
    let mut bound = Vec::with_capacity(s.len());
    bound.push(start);
    for n in 1..s.len() {
        let r = rho[owner[n - 1]];
        bound.push(growth * bound[n - 1] + r * r);
    }
    let overflow = bound.iter().any(|b| b.is_infinite());
    let notice = overflow.then(|| "bound overflows to +inf on the later steps".to_string());
    Ok(BoundReport::series(
        "pointwise_error",
        format!("windows={}", model.len()),
        s.len() - 1,
        (0..s.len()).collect(),
        bound,
        measured,
    )
    .with_notice(notice))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dmd::Truncation;
    use crate::piecewise::fit_piecewise;
    use crate::snapshots::TimeGrid;

    fn trajectory(states: Vec<Vec<f64>>, dt: f64) -> SnapshotSet {
        SnapshotSet::from_states(TimeGrid::new(0.0, dt, states.len()).unwrap(), &states).unwrap()
    }

    #[test]
    fn exact_linear_data_gives_zero_bound() {
        let (c, s) = (0.9 * 0.3f64.cos(), 0.9 * 0.3f64.sin());
        let mut x = vec![1.0, 0.5, -0.2];
        let mut states = vec![x.clone()];
        for _ in 0..20 {
            x = vec![c * x[0] - s * x[1], s * x[0] + c * x[1], 0.95 * x[2]];
            states.push(x.clone());
        }
        let snaps = trajectory(states, 0.1);
        let model = fit_piecewise(&snaps, 5, Truncation::Rank(3)).unwrap();
        let r = pointwise_error_bound(&model, &snaps, &LipschitzData::new(0.0).unwrap(), Some(0.0)).unwrap();
        assert!(r.computed.iter().all(|b| *b < 1e-20), "{:?}", r.computed);
        assert!(r.measured.iter().all(|e| *e < 1e-20));
        assert!(r.satisfied);
    }

    fn exponential(rate: impl Fn(f64) -> f64, count: usize, dt: f64) -> SnapshotSet {
        // Exact samples of x' = a(t) x with x(0) = 1, via the integrated rate.
        let states = (0..count).map(|n| vec![rate(n as f64 * dt).exp()]).collect();
        trajectory(states, dt)
    }

    #[test]
    fn coarse_window_on_exponential_growth() {
        let dt = 0.01;
        let snaps = exponential(|t| t, 201, dt);
        let model = fit_piecewise(&snaps, 100, Truncation::Rank(1)).unwrap();
        let r = pointwise_error_bound(&model, &snaps, &LipschitzData::new(1.0).unwrap(), None).unwrap();
        assert!(r.satisfied, "violations at {:?}", r.violations());
        assert!(r.computed.windows(2).all(|w| w[1] >= w[0]));
    }

    #[test]
    fn aligned_residuals_outgrow_the_recursion_only_briefly() {
        // x' = (1 + sin 3t) x: one fitted rate per window leaves residuals of
        // one sign, so errors add coherently (n ρ after n steps) while the
        // recursion adds ρ² against a doubling history. The geometric term
        // overtakes the coherent sum after a handful of steps.
        let dt = 0.01;
        let snaps = exponential(|t| t + (1.0 - (3.0 * t).cos()) / 3.0, 201, dt);
        let model = fit_piecewise(&snaps, 50, Truncation::Rank(1)).unwrap();
        let r = pointwise_error_bound(&model, &snaps, &LipschitzData::new(2.0).unwrap(), None).unwrap();
        let bad = r.violations();
        assert!(!bad.is_empty() && bad.iter().all(|&n| n < 10), "{bad:?}");
        assert!(r.computed.windows(2).all(|w| w[1] >= w[0]));
    }

    #[test]
    fn mismatched_trajectory_rejected() {
        let snaps = exponential(|t| -t, 11, 0.1);
        let model = fit_piecewise(&snaps, 5, 1e-10).unwrap();
        let short = snaps.slice_window(0, 6).unwrap();
        let l = LipschitzData::new(0.0).unwrap();
        assert!(matches!(pointwise_error_bound(&model, &short, &l, None), Err(Error::Index(_))));
    }
}
