use faer::Mat;
use serde::{Deserialize, Serialize};

use super::step_count;
use crate::error::{Error, Result};
use crate::snapshots::{SnapshotSet, TimeGrid};

/// Coefficient matrix `C(t)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Coefficient {
    /// `[[0, 1 + εt], [−1 − εt, 0]]`.
    GrowingRotation { epsilon: f64 },
    /// Row-major constant matrix.
    Constant { rows: Vec<Vec<f64>> },
    Diagonal { values: Vec<f64> },
}

impl Coefficient {
    pub fn dim(&self) -> usize {
        match self {
            Coefficient::GrowingRotation { .. } => 2,
            Coefficient::Constant { rows } => rows.len(),
            Coefficient::Diagonal { values } => values.len(),
        }
    }

    pub fn at(&self, t: f64) -> Mat<f64> {
        match self {
            Coefficient::GrowingRotation { epsilon } => {
                let a = 1.0 + epsilon * t;
                Mat::from_fn(2, 2, |i, j| match (i, j) {
                    (0, 1) => a,
                    (1, 0) => -a,
                    _ => 0.0,
                })
            }
            Coefficient::Constant { rows } => Mat::from_fn(rows.len(), rows.len(), |i, j| rows[i][j]),
            Coefficient::Diagonal { values } => {
                Mat::from_fn(values.len(), values.len(), |i, j| if i == j { values[i] } else { 0.0 })
            }
        }
    }

    pub fn is_constant(&self) -> bool {
        !matches!(self, Coefficient::GrowingRotation { epsilon } if *epsilon != 0.0)
    }
}

/// Forcing term `f(t)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Forcing {
    Zero,
    Constant { values: Vec<f64> },
}

impl Forcing {
    pub fn at(&self, _t: f64, dim: usize) -> Vec<f64> {
        match self {
            Forcing::Zero => vec![0.0; dim],
            Forcing::Constant { values } => values.clone(),
        }
    }

    pub fn is_zero(&self) -> bool {
        match self {
            Forcing::Zero => true,
            Forcing::Constant { values } => values.iter().all(|v| *v == 0.0),
        }
    }
}

/// `x' = C(t) x + f(t)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LinearSystemConfig {
    pub coefficient: Coefficient,
    pub forcing: Forcing,
    pub x0: Vec<f64>,
    pub dt: f64,
    pub t_final: f64,
    /// RK4 substeps per output step.
    #[serde(default = "default_substeps")]
    pub substeps: usize,
}

fn default_substeps() -> usize {
    4
}

impl Default for LinearSystemConfig {
    fn default() -> Self {
        Self {
            coefficient: Coefficient::GrowingRotation { epsilon: 0.1 },
            forcing: Forcing::Zero,
            x0: vec![1.0, 0.0],
            dt: 1e-3,
            t_final: 1.0,
            substeps: default_substeps(),
        }
    }
}

impl LinearSystemConfig {
    fn validate(&self) -> Result<()> {
        let n = self.coefficient.dim();
        if n == 0 || self.x0.len() != n {
            return Err(Error::Config(format!("initial state has length {}, system has {n}", self.x0.len())));
        }
        if let Coefficient::Constant { rows } = &self.coefficient {
            if rows.iter().any(|r| r.len() != n) {
                return Err(Error::Config("coefficient matrix is not square".into()));
            }
        }
        if let Forcing::Constant { values } = &self.forcing {
            if values.len() != n {
                return Err(Error::Config(format!("forcing has length {}, system has {n}", values.len())));
            }
        }
        Ok(())
    }

    fn rhs(&self, t: f64, x: &[f64]) -> Result<Vec<f64>> {
        let c = self.coefficient.at(t);
        let f = self.forcing.at(t, x.len());
        let out: Vec<f64> = (0..x.len())
            .map(|i| f[i] + (0..x.len()).map(|j| c[(i, j)] * x[j]).sum::<f64>())
            .collect();
        if out.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidCoefficient { t });
        }
        Ok(out)
    }
}

/// Classical RK4 with `substeps` steps between consecutive snapshots.
pub fn solve_linear_system(cfg: &LinearSystemConfig) -> Result<SnapshotSet> {
    cfg.validate()?;
    let steps = step_count(cfg.t_final, cfg.dt)?;
    let sub = cfg.substeps.max(1);
    let h = cfg.dt / sub as f64;
    let axpy = |x: &[f64], a: f64, k: &[f64]| -> Vec<f64> { x.iter().zip(k).map(|(x, k)| x + a * k).collect() };
    let mut x = cfg.x0.clone();
    let mut states = Vec::with_capacity(steps + 1);
    states.push(x.clone());
    for n in 0..steps {
        for s in 0..sub {
            let t = n as f64 * cfg.dt + s as f64 * h;
            let k1 = cfg.rhs(t, &x)?;
            let k2 = cfg.rhs(t + 0.5 * h, &axpy(&x, 0.5 * h, &k1))?;
            let k3 = cfg.rhs(t + 0.5 * h, &axpy(&x, 0.5 * h, &k2))?;
            let k4 = cfg.rhs(t + h, &axpy(&x, h, &k3))?;
            for i in 0..x.len() {
                x[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
            }
        }
        states.push(x.clone());
    }
    SnapshotSet::from_states(TimeGrid::new(0.0, cfg.dt, steps + 1)?, &states)
}
