//! Theoretical error and perturbation estimates, each paired with the
//! quantity it bounds so the two can be compared numerically.

use std::io::Write;

use serde::Serialize;

use crate::error::{Error, Result};

mod perturbation;
mod pointwise;
mod time_shift;

pub use perturbation::{
    column_deletion_bound, column_deletion_general_bound, pinv_append, pinv_delete_last, pointwise_rank_bound, rank_truncation_bound, PinvUpdate,
};
pub use pointwise::{pointwise_error_bound, window_residuals};
pub use time_shift::{
    refined_time_shift_bound, time_shift_bound, time_shift_curve, time_shift_value, CoefficientNorms, GammaF,
    SAMPLES_PER_STEP, SAMPLE_INFLATION,
};

/// Relative slack granted to floating-point round-off when comparing.
pub const COMPARE_RTOL: f64 = 1e-9;

/// `measured ≤ bound + 1e-9·max(1, bound)`.
pub fn within(measured: f64, bound: f64) -> bool {
    measured <= bound + COMPARE_RTOL * bound.max(1.0)
}

/// A computed bound next to the measured quantity it controls. Scalar
/// bounds use one-element vectors; sequences hold one entry per step or
/// per column count.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundReport {
    pub name: String,
    pub instance: String,
    /// Column count (or step count) of the instance.
    pub m: usize,
    /// Abscissa of each entry: step index or column count.
    pub index: Vec<usize>,
    pub computed: Vec<f64>,
    pub measured: Vec<f64>,
    pub satisfied: bool,
    pub slack: Vec<f64>,
    pub notice: Option<String>,
}

impl BoundReport {
    pub fn scalar(name: &str, instance: impl Into<String>, m: usize, computed: f64, measured: f64) -> Self {
        Self::series(name, instance, m, vec![m], vec![computed], vec![measured])
    }

    /// Panics if the three vectors differ in length.
    pub fn series(
        name: &str,
        instance: impl Into<String>,
        m: usize,
        index: Vec<usize>,
        computed: Vec<f64>,
        measured: Vec<f64>,
    ) -> Self {
        assert!(index.len() == computed.len() && computed.len() == measured.len());
        let satisfied = computed.iter().zip(&measured).all(|(&b, &e)| within(e, b));
        let slack = computed.iter().zip(&measured).map(|(b, e)| b - e).collect();
        Self {
            name: name.to_string(),
            instance: instance.into(),
            m,
            index,
            computed,
            measured,
            satisfied,
            slack,
            notice: None,
        }
    }

    pub fn with_notice(mut self, notice: Option<String>) -> Self {
        self.notice = notice;
        self
    }

    /// Entries where the bound is violated.
    pub fn violations(&self) -> Vec<usize> {
        (0..self.computed.len())
            .filter(|&k| !within(self.measured[k], self.computed[k]))
            .collect()
    }

    /// Largest `measured / bound` ratio over finite positive bounds.
    pub fn max_ratio(&self) -> f64 {
        self.computed
            .iter()
            .zip(&self.measured)
            .filter(|(b, _)| b.is_finite() && **b > 0.0)
            .map(|(b, e)| e / b)
            .fold(0.0, f64::max)
    }
}

pub const REPORT_CSV_HEADER: &str = "name,instance,m,index,computed_bound,measured,slack,satisfied";

/// One row per entry of every report.
pub fn write_reports_csv(w: &mut impl Write, reports: &[BoundReport]) -> Result<()> {
    writeln!(w, "{REPORT_CSV_HEADER}")?;
    for r in reports {
        for k in 0..r.computed.len() {
            writeln!(
                w,
                "{},{},{},{},{:e},{:e},{:e},{}",
                r.name,
                r.instance,
                r.m,
                r.index[k],
                r.computed[k],
                r.measured[k],
                r.slack[k],
                within(r.measured[k], r.computed[k])
            )?;
        }
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum LipschitzSource {
    UserSupplied,
    Estimated,
}

/// Lipschitz constant of the right-hand side in the state variable.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LipschitzData {
    pub l: f64,
    pub source: LipschitzSource,
}

impl LipschitzData {
    pub fn new(l: f64) -> Result<Self> {
        if !(l >= 0.0) || !l.is_finite() {
            return Err(Error::Config(format!("Lipschitz constant {l} must be finite and non-negative")));
        }
        Ok(Self {
            l,
            source: LipschitzSource::UserSupplied,
        })
    }

    /// `max ‖C(t)‖₂` over `[t0, t1]` sampled on the same grid as the
    /// time-shift bound; for `x' = C(t)x + f(t)` this is a valid constant.
    pub fn estimate(coeffs: &impl CoefficientNorms, t0: f64, t1: f64, dt: f64) -> Result<Self> {
        let steps = ((t1 - t0) / dt).round().max(1.0) as usize;
        let g = GammaF::sample(coeffs, t0, dt, steps)?;
        Ok(Self {
            l: g.gamma,
            source: LipschitzSource::Estimated,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn comparison_tolerance() {
        assert!(within(1.0 + 5e-10, 1.0));
        assert!(!within(1.0 + 2e-9, 1.0));
        assert!(within(5e-10, 0.0));
        assert!(within(1e300, f64::INFINITY));
    }

    #[test]
    fn report_flags_violations() {
        let r = BoundReport::series("x", "a", 3, vec![1, 2, 3], vec![1.0, 2.0, 3.0], vec![0.5, 2.5, 3.0]);
        assert!(!r.satisfied);
        assert_eq!(r.violations(), vec![1]);
        assert_eq!(r.slack, vec![0.5, -0.5, 0.0]);
    }

    #[test]
    fn csv_has_one_row_per_entry() {
        let r = BoundReport::series("x", "a", 2, vec![1, 2], vec![1.0, 2.0], vec![0.5, 1.0]);
        let mut buf = Vec::new();
        write_reports_csv(&mut buf, &[r]).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 3);
        assert!(text.lines().nth(2).unwrap().ends_with(",true"));
    }

    #[test]
    fn negative_lipschitz_rejected() {
        assert!(matches!(LipschitzData::new(-1.0), Err(Error::Config(_))));
        assert!(LipschitzData::new(0.0).is_ok());
    }
}
