use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::dmd::Truncation;
use crate::error::{Error, Result};
use crate::solvers::{AdvDiff2dConfig, Advection1dConfig, LinearSystemConfig, NavierStokesConfig};

/// Source of the snapshot trajectory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SolverSection {
    #[serde(rename = "advection_1d")]
    Advection1d(Advection1dConfig),
    #[serde(rename = "adv_diff_2d")]
    AdvDiff2d(AdvDiff2dConfig),
    Linear(LinearSystemConfig),
    NavierStokes(NavierStokesConfig),
    /// A saved snapshot set; `axes` enables the Lagrangian strategies.
    SnapshotFile {
        path: PathBuf,
        #[serde(default)]
        axes: Option<Vec<Vec<f64>>>,
    },
}

impl SolverSection {
    pub fn name(&self) -> &'static str {
        match self {
            SolverSection::Advection1d(_) => "advection_1d",
            SolverSection::AdvDiff2d(_) => "adv_diff_2d",
            SolverSection::Linear(_) => "linear",
            SolverSection::NavierStokes(_) => "navier_stokes",
            SolverSection::SnapshotFile { .. } => "snapshot_file",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    Standard,
    TimeVarying,
    Lagrangian,
    LagrangianTimeVarying,
}

impl Strategy {
    pub const ALL: [Strategy; 4] = [
        Strategy::Standard,
        Strategy::TimeVarying,
        Strategy::Lagrangian,
        Strategy::LagrangianTimeVarying,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Strategy::Standard => "standard",
            Strategy::TimeVarying => "time_varying",
            Strategy::Lagrangian => "lagrangian",
            Strategy::LagrangianTimeVarying => "lagrangian_time_varying",
        }
    }

    pub fn is_lagrangian(self) -> bool {
        matches!(self, Strategy::Lagrangian | Strategy::LagrangianTimeVarying)
    }

    pub fn is_time_varying(self) -> bool {
        matches!(self, Strategy::TimeVarying | Strategy::LagrangianTimeVarying)
    }
}

/// Where the Lagrangian strategies take the grid velocity from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VelocitySource {
    /// Mode tracking on the training snapshots.
    #[default]
    Estimated,
    /// The solver's prescribed velocity (advection solvers only).
    Exact,
}

fn default_strategies() -> Vec<Strategy> {
    Strategy::ALL.to_vec()
}

fn one() -> usize {
    1
}

fn four() -> usize {
    4
}

/// One experiment: a trajectory, the strategies to fit on it and the span
/// over which predictions are scored.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub solver: SolverSection,
    #[serde(default = "default_strategies")]
    pub strategies: Vec<Strategy>,
    /// Relative tail-energy tolerance of the SVD truncation.
    pub eps: f64,
    /// Fixed rank; overrides `eps` when present.
    #[serde(default)]
    pub rank: Option<usize>,
    /// Data pairs per window for the time-varying strategies.
    #[serde(default)]
    pub window: Option<usize>,
    pub train_span: [f64; 2],
    pub predict_span: [f64; 2],
    /// Score every `k`-th snapshot of the prediction span.
    #[serde(default = "one")]
    pub sample_every: usize,
    #[serde(default)]
    pub velocity: VelocitySource,
    /// RK4 substeps per snapshot when moving the Lagrangian grid.
    #[serde(default = "four")]
    pub grid_substeps: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn truncation(&self) -> Truncation {
        match self.rank {
            Some(r) => Truncation::Rank(r),
            None => Truncation::Energy(self.eps),
        }
    }

    /// Checks that do not need the trajectory; span limits are checked
    /// once the solver has run.
    pub fn validate(&self) -> Result<()> {
        if !(self.eps > 0.0 && self.eps < 1.0) {
            return Err(Error::Config(format!("eps {} must lie in (0, 1)", self.eps)));
        }
        if self.rank == Some(0) {
            return Err(Error::Config("rank must be positive".into()));
        }
        if self.strategies.is_empty() {
            return Err(Error::Config("no strategies selected".into()));
        }
        if self.strategies.iter().any(|s| s.is_time_varying()) {
            match self.window {
                Some(w) if w >= 2 => {}
                Some(w) => return Err(Error::Config(format!("window {w} must be at least 2"))),
                None => return Err(Error::Config("time-varying strategies need a window".into())),
            }
        }
        let [t0, t1] = self.train_span;
        let [p0, p1] = self.predict_span;
        if !(t1 > t0) || !(p1 >= p0) {
            return Err(Error::Config("spans must be increasing".into()));
        }
        if p0 < t0 {
            return Err(Error::Config(format!("prediction starts at {p0}, before training start {t0}")));
        }
        if self.sample_every == 0 || self.grid_substeps == 0 {
            return Err(Error::Config("sample_every and grid_substeps must be positive".into()));
        }
        if self.velocity == VelocitySource::Exact
            && !matches!(self.solver, SolverSection::Advection1d(_) | SolverSection::AdvDiff2d(_))
        {
            return Err(Error::Config("exact velocity is only known for the advection solvers".into()));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
        eps = 1e-6
        window = 5
        train_span = [0.0, 8.0]
        predict_span = [0.0, 3.0]

        [solver]
        kind = "advection_1d"
        t_final = 8.0
    "#;

    #[test]
    fn minimal_config_fills_defaults() {
        let cfg = ExperimentConfig::from_toml(MINIMAL).unwrap();
        assert_eq!(cfg.strategies, Strategy::ALL.to_vec());
        assert_eq!(cfg.sample_every, 1);
        match &cfg.solver {
            SolverSection::Advection1d(a) => assert_eq!(a.dx, 0.05),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn round_trips_through_toml() {
        let cfg = ExperimentConfig::from_toml(MINIMAL).unwrap();
        let again = ExperimentConfig::from_toml(&cfg.to_toml().unwrap()).unwrap();
        assert_eq!(cfg, again);
    }

    #[test]
    fn rejects_bad_values() {
        let bad_eps = MINIMAL.replace("eps = 1e-6", "eps = 1.5");
        assert!(matches!(ExperimentConfig::from_toml(&bad_eps), Err(Error::Config(_))));
        let no_window = MINIMAL.replace("window = 5", "");
        assert!(matches!(ExperimentConfig::from_toml(&no_window), Err(Error::Config(_))));
        let typo = MINIMAL.replace("t_final", "t_fnal");
        assert!(matches!(ExperimentConfig::from_toml(&typo), Err(Error::Config(_))));
    }
}
