use std::path::Path;

use super::{run_experiment, run_bounds_suite, ExperimentConfig, ExperimentOutput, SolverSection, Strategy, SuiteOptions, VelocitySource};
use crate::bounds::{write_reports_csv, BoundReport};
use crate::error::{Error, Result};
use crate::solvers::{AdvDiff2dConfig, Advection1dConfig, NavierStokesConfig};

/// Figure identifiers accepted by [`reproduce`].
pub const FIGURE_IDS: [&str; 8] = [
    "advection-1d",
    "velocity-1d",
    "advection-diffusion-2d",
    "navier-stokes",
    "navier-stokes-full",
    "bounds-rank-truncation",
    "bounds-column-deletion",
    "bounds-time-shift",
];

fn base(solver: SolverSection, eps: f64, window: usize, train: [f64; 2], predict: [f64; 2]) -> ExperimentConfig {
    ExperimentConfig {
        solver,
        strategies: Strategy::ALL.to_vec(),
        eps,
        rank: None,
        window: Some(window),
        train_span: train,
        predict_span: predict,
        sample_every: 1,
        velocity: VelocitySource::Estimated,
        grid_substeps: 4,
        seed: 0,
        output_dir: None,
    }
}

/// Preset experiment for an experiment figure; `None` for the bounds figures.
pub fn figure_config(id: &str) -> Result<Option<ExperimentConfig>> {
    let cfg = match id {
        "advection-1d" => base(SolverSection::Advection1d(Advection1dConfig::default()), 1e-6, 5, [0.0, 8.0], [0.0, 8.0]),
        "velocity-1d" => ExperimentConfig {
            strategies: vec![Strategy::Lagrangian],
            ..base(SolverSection::Advection1d(Advection1dConfig::default()), 1e-6, 5, [0.0, 8.0], [0.0, 8.0])
        },
        "advection-diffusion-2d" => ExperimentConfig {
            sample_every: 10,
            ..base(SolverSection::AdvDiff2d(AdvDiff2dConfig::default()), 1e-6, 30, [0.0, 10.0], [0.0, 8.0])
        },
        "navier-stokes" => {
            let ns = NavierStokesConfig {
                dx: 0.04,
                t_final: 1.5,
                ..Default::default()
            };
            ExperimentConfig {
                strategies: vec![Strategy::Standard, Strategy::TimeVarying],
                sample_every: 10,
                ..base(SolverSection::NavierStokes(ns), 1e-2, 50, [0.0, 1.5], [0.0, 1.5])
            }
        }
        "navier-stokes-full" => ExperimentConfig {
            strategies: vec![Strategy::Standard, Strategy::TimeVarying],
            sample_every: 10,
            ..base(SolverSection::NavierStokes(NavierStokesConfig::default()), 1e-2, 50, [0.0, 3.0], [0.0, 3.0])
        },
        "bounds-rank-truncation" | "bounds-column-deletion" | "bounds-time-shift" => return Ok(None),
        other => {
            return Err(Error::Config(format!(
                "unknown figure id {other:?}; expected one of {}",
                FIGURE_IDS.join(", ")
            )))
        }
    };
    Ok(Some(cfg))
}

fn bounds_filter(id: &str, name: &str) -> bool {
    match id {
        "bounds-rank-truncation" => name == "rank_truncation" || name == "pointwise_rank",
        "bounds-column-deletion" => name.starts_with("column_deletion"),
        _ => name.starts_with("time_shift"),
    }
}

/// Result of one figure reproduction.
#[derive(Debug, Clone)]
pub enum Reproduction {
    Experiment(Box<ExperimentOutput>),
    Bounds(Vec<BoundReport>),
}

/// Regenerate the data behind a figure. Artifacts go to `out` when given.
pub fn reproduce(id: &str, seed: u64, out: Option<&Path>) -> Result<Reproduction> {
    match figure_config(id)? {
        Some(mut cfg) => {
            cfg.seed = seed;
            cfg.output_dir = out.map(Path::to_path_buf);
            Ok(Reproduction::Experiment(Box::new(run_experiment(&cfg)?)))
        }
        None => {
            let opts = SuiteOptions {
                base_seed: seed,
                reference_systems: id == "bounds-time-shift",
                lagrangian_2d: id == "bounds-time-shift",
                ..Default::default()
            };
            let reports: Vec<BoundReport> = run_bounds_suite(&opts)?
                .into_iter()
                .filter(|r| bounds_filter(id, &r.name))
                .collect();
            if let Some(dir) = out {
                let mut buf = Vec::new();
                write_reports_csv(&mut buf, &reports)?;
                std::fs::create_dir_all(dir)?;
                std::fs::write(dir.join(format!("{id}.csv")), buf)?;
            }
            Ok(Reproduction::Bounds(reports))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_experiment_preset_validates() {
        for id in FIGURE_IDS {
            if let Some(cfg) = figure_config(id).unwrap() {
                cfg.validate().unwrap();
                let text = cfg.to_toml().unwrap();
                assert_eq!(ExperimentConfig::from_toml(&text).unwrap(), cfg, "{id}");
            }
        }
        assert!(matches!(figure_config("nope"), Err(Error::Config(_))));
    }
}
