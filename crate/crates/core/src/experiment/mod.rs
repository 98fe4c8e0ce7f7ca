//! Configuration-driven experiment runner: trajectory generation, the four
//! fitting strategies, relative-error curves and CSV artifacts.

mod artifacts;
mod config;
mod figures;
mod suite;

use crate::dmd::{DmdModel, Truncation};
use crate::error::{Error, Result};
use crate::lagrangian::{estimate_velocity, to_eulerian, to_lagrangian, LagrangianSnapshots, VelocityEstimate};
use crate::linalg::norm2;
use crate::piecewise::{fit_piecewise, PiecewiseDmdModel};
use crate::snapshots::{build_data_pair, SnapshotSet};
use crate::solvers::{solve_advdiff_2d, solve_advection_1d, solve_linear_system, solve_navier_stokes, TimeSignal};

pub use artifacts::{render_artifacts, write_artifacts, write_error_curves_csv, ERRORS_CSV_HEADER, MODEL_CSV_HEADER};
pub use config::{ExperimentConfig, SolverSection, Strategy, VelocitySource};
pub use figures::{figure_config, reproduce, Reproduction, FIGURE_IDS};
pub use suite::{reference_system_reports, run_bounds_suite, SuiteOptions};

/// Norm below which a reference state carries no information.
pub const MIN_REFERENCE_NORM: f64 = 1e-14;

/// `‖pred − truth‖₂ / ‖truth‖₂`.
pub fn relative_error(pred: &[f64], truth: &[f64]) -> Result<f64> {
    if pred.len() != truth.len() {
        return Err(Error::Index(format!("prediction length {} vs reference {}", pred.len(), truth.len())));
    }
    let n = norm2(truth);
    if !(n > MIN_REFERENCE_NORM) {
        return Err(Error::DegenerateReference);
    }
    let d: f64 = pred.iter().zip(truth).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
    Ok(d / n)
}

/// Relative errors of one strategy; times with a zero reference are skipped.
#[derive(Debug, Clone, PartialEq)]
pub struct ErrorCurve {
    pub strategy: Strategy,
    pub times: Vec<f64>,
    pub rel_errors: Vec<f64>,
}

impl ErrorCurve {
    /// Error at the sample closest to `t`.
    pub fn at(&self, t: f64) -> Option<f64> {
        let k = self
            .times
            .iter()
            .enumerate()
            .min_by(|a, b| (a.1 - t).abs().total_cmp(&(b.1 - t).abs()))?
            .0;
        Some(self.rel_errors[k])
    }

    pub fn max_over(&self, t0: f64, t1: f64) -> f64 {
        self.times
            .iter()
            .zip(&self.rel_errors)
            .filter(|(t, _)| **t >= t0 && **t <= t1)
            .map(|(_, e)| *e)
            .fold(0.0, f64::max)
    }
}

/// A solver run plus what the Lagrangian strategies need from it.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub snapshots: SnapshotSet,
    pub axes: Option<Vec<Vec<f64>>>,
    /// Prescribed velocity components, when the solver has them.
    pub velocity: Option<Vec<TimeSignal>>,
    /// Post-projection divergence per step (Navier-Stokes only).
    pub max_divergence: Option<Vec<f64>>,
}

pub fn generate(solver: &SolverSection) -> Result<Trajectory> {
    Ok(match solver {
        SolverSection::Advection1d(c) => Trajectory {
            snapshots: solve_advection_1d(c)?,
            axes: Some(vec![c.centers()?]),
            velocity: Some(vec![c.velocity]),
            max_divergence: None,
        },
        SolverSection::AdvDiff2d(c) => {
            let [ax, ay] = c.axes();
            Trajectory {
                snapshots: solve_advdiff_2d(c)?,
                axes: Some(vec![ax, ay]),
                velocity: Some(vec![c.vx, c.vy]),
                max_divergence: None,
            }
        }
        SolverSection::Linear(c) => Trajectory {
            snapshots: solve_linear_system(c)?,
            axes: None,
            velocity: None,
            max_divergence: None,
        },
        SolverSection::NavierStokes(c) => {
            let out = solve_navier_stokes(c)?;
            Trajectory {
                snapshots: out.snapshots,
                axes: None,
                velocity: None,
                max_divergence: Some(out.max_divergence),
            }
        }
        SolverSection::SnapshotFile { path, axes } => Trajectory {
            snapshots: SnapshotSet::load(path)?,
            axes: axes.clone(),
            velocity: None,
            max_divergence: None,
        },
    })
}

#[derive(Debug, Clone)]
pub enum FittedModel {
    Global(Box<DmdModel>),
    Piecewise(PiecewiseDmdModel),
}

/// A fitted strategy together with the frame it lives in.
#[derive(Debug, Clone)]
pub struct Fitted {
    pub strategy: Strategy,
    pub model: FittedModel,
    /// Training start time; predictions are measured from here.
    pub t0: f64,
    /// Initial state in the model's own coordinates.
    pub initial: Vec<f64>,
    lagrangian: Option<(Vec<usize>, Vec<Vec<f64>>)>,
}

impl Fitted {
    /// Eulerian predictions at absolute times `times`.
    pub fn predict(&self, times: &[f64]) -> Result<Vec<Vec<f64>>> {
        let raw = match &self.model {
            FittedModel::Global(m) => times
                .iter()
                .map(|&t| m.propagate(&self.initial, (t - self.t0).max(0.0)))
                .collect::<Result<Vec<_>>>()?,
            FittedModel::Piecewise(m) => m.predict_series(&self.initial, times)?,
        };
        match &self.lagrangian {
            None => Ok(raw),
            Some((shape, axes)) => raw
                .iter()
                .map(|w| to_eulerian(w, shape, axes).map_err(|e| e.in_stage("eulerian")))
                .collect(),
        }
    }

    pub fn ranks(&self) -> Vec<usize> {
        match &self.model {
            FittedModel::Global(m) => vec![m.rank()],
            FittedModel::Piecewise(m) => m.windows().iter().map(|w| w.model.rank()).collect(),
        }
    }
}

/// Everything an experiment produces before it touches the disk.
#[derive(Debug, Clone)]
pub struct ExperimentOutput {
    pub config: ExperimentConfig,
    pub truth: SnapshotSet,
    pub train: SnapshotSet,
    pub fits: Vec<Fitted>,
    pub curves: Vec<ErrorCurve>,
    pub velocity: Option<VelocityEstimate>,
    pub lagrangian_dim: Option<usize>,
    pub clamped_snapshots: usize,
    pub max_divergence: Option<Vec<f64>>,
}

impl ExperimentOutput {
    pub fn curve(&self, s: Strategy) -> Option<&ErrorCurve> {
        self.curves.iter().find(|c| c.strategy == s)
    }
}

fn span_indices(s: &SnapshotSet, span: [f64; 2], what: &str) -> Result<(usize, usize)> {
    let g = s.grid();
    let slack = 1e-9 * g.dt();
    if span[0] < g.t0() - slack || span[1] > g.t_final() + slack {
        return Err(Error::Config(format!(
            "{what} span [{}, {}] leaves the trajectory [{}, {}]",
            span[0],
            span[1],
            g.t0(),
            g.t_final()
        )));
    }
    Ok((s.index_of(span[0]), s.index_of(span[1])))
}

fn lagrangian_data(
    cfg: &ExperimentConfig,
    traj: &Trajectory,
    train: &SnapshotSet,
) -> Result<(LagrangianSnapshots, Option<VelocityEstimate>, Vec<Vec<f64>>)> {
    let axes = traj
        .axes
        .clone()
        .ok_or_else(|| Error::Config("Lagrangian strategies need grid axes".into()))?;
    match cfg.velocity {
        VelocitySource::Estimated => {
            let est = estimate_velocity(train, &axes)?;
            let l = to_lagrangian(train, &axes, |t| est.at(t), cfg.grid_substeps)?;
            Ok((l, Some(est), axes))
        }
        VelocitySource::Exact => {
            let signals = traj.velocity.clone().unwrap_or_default();
            let l = to_lagrangian(train, &axes, |t| signals.iter().map(|s| s.at(t)).collect(), cfg.grid_substeps)?;
            Ok((l, None, axes))
        }
    }
}

fn fit_one(strategy: Strategy, set: &SnapshotSet, cfg: &ExperimentConfig, trunc: Truncation) -> Result<FittedModel> {
    if strategy.is_time_varying() {
        let window = cfg.window.ok_or_else(|| Error::Config("missing window".into()))?;
        Ok(FittedModel::Piecewise(fit_piecewise(set, window, trunc)?))
    } else {
        Ok(FittedModel::Global(Box::new(DmdModel::fit(&build_data_pair(set)?, trunc, set.grid().dt())?)))
    }
}

/// Fit every configured strategy on an existing trajectory and score it.
pub fn evaluate(cfg: &ExperimentConfig, traj: &Trajectory) -> Result<ExperimentOutput> {
    cfg.validate()?;
    let truth = &traj.snapshots;
    let (i0, i1) = span_indices(truth, cfg.train_span, "training")?;
    let (p0, p1) = span_indices(truth, cfg.predict_span, "prediction")?;
    let train = truth.slice_window(i0, i1 - i0 + 1)?;
    let t0 = train.grid().t0();

    let lagrangian = if cfg.strategies.iter().any(|s| s.is_lagrangian()) {
        Some(lagrangian_data(cfg, traj, &train).map_err(|e| e.in_stage("lagrangian"))?)
    } else {
        None
    };
    if let Some((l, _, _)) = &lagrangian {
        log::info!(
            "state dimension {} (Eulerian) and {} (Lagrangian)",
            truth.dim(),
            l.set.dim()
        );
    }

    let sample: Vec<usize> = (p0..=p1).step_by(cfg.sample_every).collect();
    let times: Vec<f64> = sample.iter().map(|&i| truth.grid().time(i)).collect();
    let trunc = cfg.truncation();
    let mut fits = Vec::with_capacity(cfg.strategies.len());
    let mut curves = Vec::with_capacity(cfg.strategies.len());
    for &strategy in &cfg.strategies {
        let (set, frame) = match (&lagrangian, strategy.is_lagrangian()) {
            (Some((l, _, axes)), true) => (&l.set, Some((l.shape.clone(), axes.clone()))),
            _ => (&train, None),
        };
        let model = fit_one(strategy, set, cfg, trunc).map_err(|e| e.in_stage("fit"))?;
        let fitted = Fitted {
            strategy,
            model,
            t0,
            initial: set.state_vec(0),
            lagrangian: frame,
        };
        let preds = fitted.predict(&times).map_err(|e| e.in_stage("predict"))?;
        let mut curve = ErrorCurve {
            strategy,
            times: Vec::with_capacity(times.len()),
            rel_errors: Vec::with_capacity(times.len()),
        };
        for ((&i, &t), p) in sample.iter().zip(&times).zip(&preds) {
            match relative_error(p, &truth.state_vec(i)) {
                Ok(e) => {
                    curve.times.push(t);
                    curve.rel_errors.push(e);
                }
                Err(Error::DegenerateReference) => {}
                Err(e) => return Err(e.in_stage("errors")),
            }
        }
        fits.push(fitted);
        curves.push(curve);
    }
    let (lagrangian_dim, clamped, velocity) = match lagrangian {
        Some((l, v, _)) => (Some(l.set.dim()), l.clamped_times.len(), v),
        None => (None, 0, None),
    };
    Ok(ExperimentOutput {
        config: cfg.clone(),
        truth: truth.clone(),
        train,
        fits,
        curves,
        velocity,
        lagrangian_dim,
        clamped_snapshots: clamped,
        max_divergence: traj.max_divergence.clone(),
    })
}

/// Full pipeline; artifacts are written only when every stage succeeds and
/// `output_dir` is set.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentOutput> {
    cfg.validate()?;
    let traj = generate(&cfg.solver).map_err(|e| e.in_stage("solve"))?;
    let out = evaluate(cfg, &traj)?;
    if let Some(dir) = &cfg.output_dir {
        write_artifacts(&out, dir).map_err(|e| e.in_stage("write"))?;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::solvers::{Advection1dConfig, LinearSystemConfig};

    #[test]
    fn relative_error_examples() {
        let truth = [3.0, 4.0];
        assert_eq!(relative_error(&truth, &truth).unwrap(), 0.0);
        assert!((relative_error(&[6.0, 8.0], &truth).unwrap() - 1.0).abs() < 1e-15);
        assert!((relative_error(&[3.5, 4.0], &truth).unwrap() - 0.1).abs() < 1e-15);
        assert!(matches!(relative_error(&[1.0, 1.0], &[0.0, 0.0]), Err(Error::DegenerateReference)));
    }

    fn linear_cfg() -> ExperimentConfig {
        ExperimentConfig {
            solver: SolverSection::Linear(LinearSystemConfig::default()),
            strategies: vec![Strategy::Standard, Strategy::TimeVarying],
            eps: 1e-10,
            rank: None,
            window: Some(100),
            train_span: [0.0, 1.0],
            predict_span: [0.0, 1.0],
            sample_every: 10,
            velocity: VelocitySource::Estimated,
            grid_substeps: 4,
            seed: 0,
            output_dir: None,
        }
    }

    #[test]
    fn linear_system_reconstruction() {
        let out = run_experiment(&linear_cfg()).unwrap();
        assert_eq!(out.curves.len(), 2);
        let tv = out.curve(Strategy::TimeVarying).unwrap();
        assert_eq!(tv.times.len(), 101);
        assert!(tv.rel_errors.iter().all(|e| *e < 1e-4), "{:?}", tv.rel_errors);
        // x0 lies in the retained subspace, so the t = 0 error vanishes.
        assert!(tv.rel_errors[0] < 1e-12);
    }

    #[test]
    fn lagrangian_needs_axes() {
        let mut cfg = linear_cfg();
        cfg.strategies = vec![Strategy::Lagrangian];
        let err = run_experiment(&cfg).unwrap_err();
        assert!(matches!(err, Error::Stage { stage: "lagrangian", .. }), "{err}");
        assert!(matches!(err.root(), Error::Config(_)));
    }

    #[test]
    fn span_outside_trajectory_rejected() {
        let mut cfg = linear_cfg();
        cfg.predict_span = [0.0, 2.0];
        assert!(matches!(run_experiment(&cfg), Err(Error::Config(_))));
    }

    #[test]
    fn exact_velocity_on_rigid_translation() {
        let cfg = ExperimentConfig {
            solver: SolverSection::Advection1d(Advection1dConfig {
                velocity: TimeSignal::Constant { value: 1.0 },
                dt: 0.05,
                t_final: 2.0,
                ..Default::default()
            }),
            strategies: vec![Strategy::Lagrangian],
            eps: 1e-8,
            rank: None,
            window: None,
            train_span: [0.0, 2.0],
            predict_span: [0.0, 2.0],
            sample_every: 1,
            velocity: VelocitySource::Exact,
            grid_substeps: 4,
            seed: 0,
            output_dir: None,
        };
        let out = run_experiment(&cfg).unwrap();
        assert_eq!(out.lagrangian_dim, Some(800));
        // Courant number 1: the grid moves one cell per step and the values freeze.
        let c = out.curve(Strategy::Lagrangian).unwrap();
        assert!(c.max_over(0.0, 2.0) < 1e-6, "{:?}", c.rel_errors);
    }
}
