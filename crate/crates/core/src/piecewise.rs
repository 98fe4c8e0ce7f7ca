//! Piecewise-constant-in-time DMD.
//!
//! The trajectory is cut into consecutive windows of `r` data pairs. Window
//! `i` uses states `[i·r, (i+1)·r]`, so its last target is the first state of
//! the next window. When `m` is not a multiple of `r` the remainder forms a
//! shorter trailing window.

use std::io::Write;

use faer::c64;

use crate::dmd::{mse_loss, DmdModel, Truncation};
use crate::error::{Error, Result};
use crate::snapshots::{build_data_pair, DataPair, SnapshotSet};

/// One fitted window.
#[derive(Debug, Clone)]
pub struct Window {
    /// Index of the first state of the window in the full trajectory.
    pub first: usize,
    /// Number of data pairs.
    pub pairs: usize,
    pub start: f64,
    pub end: f64,
    pub model: DmdModel,
}

impl Window {
    pub fn duration(&self) -> f64 {
        self.end - self.start
    }
}

/// A sequence of standard DMD models, one per window, realizing a
/// piecewise-constant Koopman operator.
#[derive(Debug, Clone)]
pub struct PiecewiseDmdModel {
    windows: Vec<Window>,
    window: usize,
    t0: f64,
    dt: f64,
}

/// Pair counts of each window for `m` pairs cut into chunks of `r`.
pub fn window_lengths(m: usize, r: usize) -> Vec<usize> {
    let mut lengths = vec![r; m / r];
    if !m.is_multiple_of(r) {
        lengths.push(m % r);
    }
    lengths
}

/// Fit one model per window of `window` data pairs.
pub fn fit_piecewise(s: &SnapshotSet, window: usize, eps: impl Into<Truncation>) -> Result<PiecewiseDmdModel> {
    if window < 2 {
        return Err(Error::InvalidWindow(window));
    }
    if s.len() < window + 1 {
        return Err(Error::InsufficientData(format!(
            "{} snapshots cannot fill a window of {window} pairs",
            s.len()
        )));
    }
    let mut model = fit_piecewise_with_lengths(s, &window_lengths(s.len() - 1, window), eps)?;
    model.window = window;
    Ok(model)
}

/// Fit one model per window with explicitly given pair counts.
pub fn fit_piecewise_with_lengths(
    s: &SnapshotSet,
    lengths: &[usize],
    eps: impl Into<Truncation>,
) -> Result<PiecewiseDmdModel> {
    let eps = eps.into();
    let m = s.len() - 1;
    if lengths.is_empty() || lengths.contains(&0) || lengths.iter().sum::<usize>() != m {
        return Err(Error::Config(format!("window lengths {lengths:?} do not partition {m} pairs")));
    }
    let grid = s.grid();
    let mut windows = Vec::with_capacity(lengths.len());
    let mut first = 0;
    for (index, &pairs) in lengths.iter().enumerate() {
        let fit = s
            .slice_window(first, pairs + 1)
            .and_then(|w| build_data_pair(&w))
            .and_then(|d| DmdModel::fit(&d, eps, grid.dt()))
            .map_err(|e| e.in_window(index))?;
        windows.push(Window {
            first,
            pairs,
            start: grid.time(first),
            end: grid.time(first + pairs),
            model: fit,
        });
        first += pairs;
    }
    log::debug!("fitted {} windows over {m} pairs", windows.len());
    Ok(PiecewiseDmdModel {
        window: lengths[0],
        windows,
        t0: grid.t0(),
        dt: grid.dt(),
    })
}

impl PiecewiseDmdModel {
    pub fn windows(&self) -> &[Window] {
        &self.windows
    }

    pub fn len(&self) -> usize {
        self.windows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.windows.is_empty()
    }

    /// Nominal pairs per window.
    pub fn window_size(&self) -> usize {
        self.window
    }

    pub fn t0(&self) -> f64 {
        self.t0
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    /// Window end times `t_1 … t_p`.
    pub fn boundaries(&self) -> Vec<f64> {
        self.windows.iter().map(|w| w.end).collect()
    }

    pub fn dim(&self) -> usize {
        self.windows[0].model.dim()
    }

    /// Index of the window that governs time `t`: the first whose end is at
    /// or after `t`, or the last one when extrapolating.
    pub fn active_window(&self, t: f64) -> usize {
        self.windows
            .iter()
            .position(|w| t <= w.end)
            .unwrap_or(self.windows.len() - 1)
    }

    /// States at the start of every window when starting from `w0`; entry
    /// `k` is the input of window `k`.
    pub fn boundary_states(&self, w0: &[f64]) -> Result<Vec<Vec<f64>>> {
        let mut states = Vec::with_capacity(self.windows.len());
        states.push(w0.to_vec());
        for (k, w) in self.windows.iter().enumerate().take(self.windows.len() - 1) {
            let next = w.model.propagate(&states[k], w.duration()).map_err(|e| e.in_window(k))?;
            states.push(next);
        }
        Ok(states)
    }

    fn check_time(&self, t: f64) -> Result<()> {
        if !(t >= self.t0 - 1e-12 * self.dt) {
            return Err(Error::Index(format!("time {t} precedes the model start {}", self.t0)));
        }
        Ok(())
    }

    /// Chained prediction at absolute time `t`.
    pub fn predict_chained(&self, w0: &[f64], t: f64) -> Result<Vec<f64>> {
        self.check_time(t)?;
        let k = self.active_window(t);
        let mut state = w0.to_vec();
        for (j, w) in self.windows[..k].iter().enumerate() {
            state = w.model.propagate(&state, w.duration()).map_err(|e| e.in_window(j))?;
        }
        let w = &self.windows[k];
        w.model.propagate(&state, (t - w.start).max(0.0)).map_err(|e| e.in_window(k))
    }

    /// Chained predictions at many times, reusing the boundary states.
    pub fn predict_series(&self, w0: &[f64], times: &[f64]) -> Result<Vec<Vec<f64>>> {
        if w0.len() != self.dim() {
            return Err(Error::Index(format!("state has length {}, model dimension is {}", w0.len(), self.dim())));
        }
        let starts = self.boundary_states(w0)?;
        times
            .iter()
            .map(|&t| {
                self.check_time(t)?;
                let k = self.active_window(t);
                let w = &self.windows[k];
                w.model.propagate(&starts[k], (t - w.start).max(0.0)).map_err(|e| e.in_window(k))
            })
            .collect()
    }

    /// One-step training MSE over all pairs, each window using its own
    /// least-squares operator.
    pub fn training_mse(&self, s: &SnapshotSet) -> Result<f64> {
        let m = s.len() - 1;
        let mut total = 0.0;
        for (k, w) in self.windows.iter().enumerate() {
            let d = window_pair(s, w).map_err(|e| e.in_window(k))?;
            total += mse_loss(&w.model, &d) * w.pairs as f64;
        }
        Ok(total / m as f64)
    }

    /// CSV of the three modes with largest amplitude per window.
    pub fn write_spectrum_csv(&self, w: &mut impl Write) -> Result<()> {
        writeln!(w, "t_mid,re_omega_1,re_omega_2,re_omega_3,im_omega_1,im_omega_2,im_omega_3")?;
        for win in &self.windows {
            let top = dominant_frequencies(&win.model, 3);
            let cell = |k: usize, f: fn(&c64) -> f64| top.get(k).map(|o| f(o).to_string()).unwrap_or_default();
            writeln!(
                w,
                "{},{},{},{},{},{},{}",
                0.5 * (win.start + win.end),
                cell(0, |o| o.re),
                cell(1, |o| o.re),
                cell(2, |o| o.re),
                cell(0, |o| o.im),
                cell(1, |o| o.im),
                cell(2, |o| o.im),
            )?;
        }
        Ok(())
    }
}

/// Live frequencies sorted by decreasing amplitude of the first training state.
pub fn dominant_frequencies(model: &DmdModel, count: usize) -> Vec<c64> {
    let mut live: Vec<(f64, c64)> = model
        .frequencies()
        .iter()
        .zip(model.amplitudes())
        .filter_map(|(o, a)| o.map(|o| (a.norm(), o)))
        .collect();
    live.sort_by(|a, b| b.0.total_cmp(&a.0));
    live.into_iter().take(count).map(|(_, o)| o).collect()
}

/// Data pair of one window of the training trajectory.
pub fn window_pair(s: &SnapshotSet, w: &Window) -> Result<DataPair> {
    build_data_pair(&s.slice_window(w.first, w.pairs + 1)?)
}

/// Training MSE of the standard and the piecewise fit on the same data.
pub fn loss_dominance_report(s: &SnapshotSet, window: usize, eps: impl Into<Truncation>) -> Result<(f64, f64)> {
    let eps = eps.into();
    let d = build_data_pair(s)?;
    let global = DmdModel::fit(&d, eps, s.grid().dt())?;
    let piecewise = fit_piecewise(s, window, eps)?;
    Ok((mse_loss(&global, &d), piecewise.training_mse(s)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dmd::fit_standard;
    use crate::snapshots::TimeGrid;

    fn scalar_piecewise(dt: f64) -> SnapshotSet {
        // u' = u on [0,1], u' = -u on [1,2].
        let count = (2.0 / dt).round() as usize + 1;
        let states: Vec<Vec<f64>> = (0..count)
            .map(|i| {
                let t = i as f64 * dt;
                vec![if t <= 1.0 { t.exp() } else { (2.0 - t).exp() }]
            })
            .collect();
        SnapshotSet::from_states(TimeGrid::new(0.0, dt, count).unwrap(), &states).unwrap()
    }

    #[test]
    fn window_lengths_with_remainder() {
        assert_eq!(window_lengths(800, 5), vec![5; 160]);
        assert_eq!(window_lengths(11, 5), vec![5, 5, 1]);
        assert_eq!(window_lengths(3000, 50).len(), 60);
    }

    #[test]
    fn small_window_rejected() {
        let s = scalar_piecewise(0.1);
        assert!(matches!(fit_piecewise(&s, 1, 1e-6), Err(Error::InvalidWindow(1))));
    }

    #[test]
    fn recovers_piecewise_scalar_rates() {
        let s = scalar_piecewise(0.1);
        let model = fit_piecewise(&s, 10, 1e-10).unwrap();
        assert_eq!(model.len(), 2);
        let l1 = model.windows()[0].model.eigenvalues()[0];
        let l2 = model.windows()[1].model.eigenvalues()[0];
        assert!((l1.re - 0.1f64.exp()).abs() < 1e-10 && l1.im.abs() < 1e-12);
        assert!((l2.re - (-0.1f64).exp()).abs() < 1e-10 && l2.im.abs() < 1e-12);
    }

    #[test]
    fn chained_prediction_matches_analytic_flow() {
        let s = scalar_piecewise(0.1);
        let model = fit_piecewise(&s, 10, 1e-10).unwrap();
        let p = model.predict_chained(&[1.0], 2.0).unwrap();
        assert!((p[0] - 1.0).abs() < 1e-8, "{}", p[0]);
        let p = model.predict_chained(&[1.0], 1.5).unwrap();
        assert!((p[0] - 0.5f64.exp()).abs() < 1e-8);
        let p = model.predict_chained(&[1.0], 1.0).unwrap();
        assert!((p[0] - 1f64.exp()).abs() < 1e-8);
    }

    #[test]
    fn single_window_equals_standard() {
        let s = scalar_piecewise(0.1);
        let pw = fit_piecewise(&s, 20, 1e-10).unwrap();
        assert_eq!(pw.len(), 1);
        let std = fit_standard(&build_data_pair(&s).unwrap(), 1e-10, 0.1).unwrap();
        for t in [0.0, 0.35, 1.0, 2.0, 3.0] {
            let a = pw.predict_chained(&[1.0], t).unwrap();
            let b = std.predict_at(&[1.0], t).unwrap();
            assert!((a[0] - b[0]).abs() <= 1e-12 * b[0].abs().max(1.0));
        }
    }

    #[test]
    fn series_matches_pointwise_chaining() {
        let s = scalar_piecewise(0.05);
        let model = fit_piecewise(&s, 7, 1e-10).unwrap();
        let times: Vec<f64> = (0..50).map(|i| i as f64 * 0.05).collect();
        let series = model.predict_series(&[1.0], &times).unwrap();
        for (t, p) in times.iter().zip(&series) {
            let q = model.predict_chained(&[1.0], *t).unwrap();
            assert!((p[0] - q[0]).abs() <= 1e-13 * q[0].abs());
        }
    }

    #[test]
    fn time_before_start_is_index_error() {
        let s = scalar_piecewise(0.1);
        let model = fit_piecewise(&s, 10, 1e-10).unwrap();
        assert!(matches!(model.predict_chained(&[1.0], -0.5), Err(Error::Index(_))));
    }

    #[test]
    fn window_errors_carry_index() {
        // Second window has a zero trajectory.
        let mut states: Vec<Vec<f64>> = (0..4).map(|i| vec![1.0 + i as f64]).collect();
        states.extend((0..5).map(|_| vec![0.0]));
        let s = SnapshotSet::from_states(TimeGrid::new(0.0, 1.0, 9).unwrap(), &states).unwrap();
        let err = fit_piecewise(&s, 4, 1e-6).unwrap_err();
        assert!(matches!(err, Error::Window { index: 1, .. }), "{err}");
    }

    #[test]
    fn piecewise_data_prefers_time_varying_loss() {
        let s = scalar_piecewise(0.1);
        let (std, tv) = loss_dominance_report(&s, 10, Truncation::NumericalRank).unwrap();
        assert!(tv < std, "{tv} vs {std}");
    }

    #[test]
    fn invariant_data_gives_equal_losses() {
        let states: Vec<Vec<f64>> = (0..21).map(|i| vec![0.9f64.powi(i), 0.5 * 0.9f64.powi(i)]).collect();
        let s = SnapshotSet::from_states(TimeGrid::new(0.0, 0.1, 21).unwrap(), &states).unwrap();
        let (std, tv) = loss_dominance_report(&s, 5, Truncation::NumericalRank).unwrap();
        assert!((std - tv).abs() <= 1e-12 * std.max(1e-300) + 1e-28);
    }

    #[test]
    fn spectrum_csv_has_row_per_window() {
        let s = scalar_piecewise(0.1);
        let model = fit_piecewise(&s, 5, 1e-10).unwrap();
        let mut out = Vec::new();
        model.write_spectrum_csv(&mut out).unwrap();
        assert_eq!(String::from_utf8(out).unwrap().lines().count(), 5);
    }
}
