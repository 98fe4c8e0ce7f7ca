use faer::Mat;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::bounds::{
    column_deletion_bound, column_deletion_general_bound, pointwise_rank_bound, rank_truncation_bound,
    refined_time_shift_bound, time_shift_bound, time_shift_curve, BoundReport,
};
use crate::error::{Error, Result};
use crate::lagrangian::to_lagrangian;
use crate::linalg::pinv;
use crate::snapshots::{build_data_pair, DataPair};
use crate::solvers::{
    solve_advdiff_2d, solve_advection_1d, solve_linear_system, AdvDiff2dConfig, Advection1dConfig, Coefficient,
    Forcing, LinearSystemConfig,
};

/// Which instances the bounds suite runs.
#[derive(Debug, Clone, PartialEq)]
pub struct SuiteOptions {
    pub seeds: usize,
    /// Column counts `m` of the random instances.
    pub sizes: Vec<usize>,
    /// Row count of the random instances.
    pub n: usize,
    pub base_seed: u64,
    /// Also run the time-shift bound on the three reference systems.
    pub reference_systems: bool,
    /// Add the 2D time-shift variant on the stacked Lagrangian state.
    pub lagrangian_2d: bool,
}

impl Default for SuiteOptions {
    fn default() -> Self {
        Self {
            seeds: 10,
            sizes: vec![5, 10, 20, 40],
            n: 50,
            base_seed: 0,
            reference_systems: true,
            lagrangian_2d: false,
        }
    }
}

fn gaussian(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Mat<f64> {
    Mat::from_fn(rows, cols, |_, _| StandardNormal.sample(rng))
}

fn gaussian_vec(rng: &mut ChaCha8Rng, len: usize) -> Vec<f64> {
    (0..len).map(|_| StandardNormal.sample(rng)).collect()
}

/// `g` with its component in `range(X)` removed; projected twice so that
/// `‖Xᵀu‖` sits at rounding level.
fn orthogonal_to(x: &Mat<f64>, g: &[f64]) -> Result<Vec<f64>> {
    let xp = pinv(x.as_ref())?;
    let mut u = g.to_vec();
    for _ in 0..2 {
        let col = crate::linalg::col_from_slice(&u);
        let proj = x * (&xp * &col);
        for (ui, pi) in u.iter_mut().zip(proj.iter()) {
            *ui -= pi;
        }
    }
    Ok(u)
}

fn tag(mut r: BoundReport, instance: String) -> BoundReport {
    r.instance = instance;
    r
}

/// Stable per-instance seed.
fn instance_seed(base: u64, seed: usize, m: usize) -> u64 {
    base.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ ((seed as u64) << 32) ^ m as u64
}

fn random_instances(opts: &SuiteOptions, out: &mut Vec<BoundReport>) -> Result<()> {
    let n = opts.n;
    for &m in &opts.sizes {
        if m == 0 || m + 1 > n {
            return Err(Error::Config(format!(
                "size m = {m} needs 1 <= m and m + 1 <= N = {n} for full column rank after appending"
            )));
        }
    }
    for s in 0..opts.seeds {
        for &m in &opts.sizes {
            let mut rng = ChaCha8Rng::seed_from_u64(instance_seed(opts.base_seed, s, m));
            let id = format!("gaussian seed={s} N={n}");
            let r = (m / 2).max(1);
            let d = DataPair::new(gaussian(&mut rng, n, m), gaussian(&mut rng, n, m))?;
            out.push(tag(rank_truncation_bound(&d, r)?, format!("{id} r={r}")));
            let x = gaussian_vec(&mut rng, n);
            out.push(tag(pointwise_rank_bound(&d, r, &x)?, format!("{id} r={r}")));

            let (u, v) = (gaussian_vec(&mut rng, n), gaussian_vec(&mut rng, n));
            out.push(tag(column_deletion_general_bound(d.x.as_ref(), d.y.as_ref(), &u, &v)?, id.clone()));
            let g = gaussian_vec(&mut rng, n);
            let u_perp = orthogonal_to(&d.x, &g)?;
            out.push(tag(column_deletion_bound(d.x.as_ref(), d.y.as_ref(), &u_perp, &v)?, id.clone()));

            // x' = Cx + f with Gaussian C scaled to unit-order norm and constant f.
            let scale = 1.0 / (n as f64).sqrt();
            let c = gaussian(&mut rng, n, n);
            let sys = LinearSystemConfig {
                coefficient: Coefficient::Constant {
                    rows: (0..n).map(|i| (0..n).map(|j| scale * c[(i, j)]).collect()).collect(),
                },
                forcing: Forcing::Constant {
                    values: gaussian_vec(&mut rng, n),
                },
                x0: gaussian_vec(&mut rng, n),
                dt: 0.01,
                t_final: 0.01 * m as f64,
                substeps: 4,
            };
            let traj = build_data_pair(&solve_linear_system(&sys)?)?;
            out.push(tag(time_shift_bound(&sys, &traj, 0.0, sys.dt)?, id));
        }
    }
    Ok(())
}

fn every(step: usize, top: usize) -> Vec<usize> {
    let mut counts: Vec<usize> = std::iter::once(1).chain((step..=top).step_by(step)).collect();
    if counts.last() != Some(&top) {
        counts.push(top);
    }
    counts
}

/// Time-shift bounds on the reference systems: the 2×2 rotation, 1D
/// advection (400 states) and 2D advection-diffusion (2500 states), plus
/// the refined bound on `diag(−1, −2)`.
pub fn reference_system_reports(lagrangian_2d: bool) -> Result<Vec<BoundReport>> {
    let mut out = Vec::new();

    let lin = LinearSystemConfig::default();
    let d = build_data_pair(&solve_linear_system(&lin)?)?;
    let counts: Vec<usize> = (1..=d.pairs()).collect();
    out.push(tag(time_shift_curve(&lin, &d, 0.0, lin.dt, &counts)?, "rotation N=2".into()));

    let diag = LinearSystemConfig {
        coefficient: Coefficient::Diagonal { values: vec![-1.0, -2.0] },
        x0: vec![1.0, 1.0],
        ..Default::default()
    };
    let d = build_data_pair(&solve_linear_system(&diag)?)?;
    let c = diag.coefficient.at(0.0);
    out.push(tag(refined_time_shift_bound(c.as_ref(), &d, diag.dt)?, "diag(-1,-2)".into()));
    out.push(tag(time_shift_bound(&diag, &d, 0.0, diag.dt)?, "diag(-1,-2)".into()));

    let adv = Advection1dConfig::default();
    let d = build_data_pair(&solve_advection_1d(&adv)?)?;
    out.push(tag(
        time_shift_curve(&adv, &d, 0.0, adv.dt, &every(50, d.pairs()))?,
        format!("advection_1d N={}", d.dim()),
    ));

    let ad = AdvDiff2dConfig::default();
    let snaps = solve_advdiff_2d(&ad)?;
    let d = build_data_pair(&snaps)?;
    out.push(tag(
        time_shift_curve(&ad, &d, 0.0, ad.dt, &every(100, d.pairs()))?,
        format!("adv_diff_2d N={}", d.dim()),
    ));
    if lagrangian_2d {
        let [ax, ay] = ad.axes();
        let l = to_lagrangian(&snaps, &[ax, ay], |t| vec![ad.vx.at(t), ad.vy.at(t)], 4)?;
        let d = build_data_pair(&l.set)?;
        out.push(tag(
            time_shift_curve(&ad, &d, 0.0, ad.dt, &every(100, d.pairs()))?,
            format!("adv_diff_2d lagrangian N={}", d.dim()),
        ));
    }
    Ok(out)
}

/// Every bound on random Gaussian instances and, optionally, the reference
/// systems. Reports come back in a fixed order; violations are left for the
/// caller to act on.
pub fn run_bounds_suite(opts: &SuiteOptions) -> Result<Vec<BoundReport>> {
    if opts.seeds == 0 {
        return Err(Error::Config("seed count must be at least 1".into()));
    }
    let mut out = Vec::new();
    random_instances(opts, &mut out)?;
    if opts.reference_systems {
        out.extend(reference_system_reports(opts.lagrangian_2d)?);
    }
    Ok(out)
}
