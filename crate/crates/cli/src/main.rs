use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use ldmd::bounds::{write_reports_csv, BoundReport};
use ldmd::experiment::{
    evaluate, generate, render_artifacts, reproduce, run_bounds_suite, ExperimentConfig, ExperimentOutput,
    Reproduction, SuiteOptions, FIGURE_IDS,
};
use ldmd::Error;

/// Time-varying and Lagrangian DMD experiments.
#[derive(Parser)]
#[command(name = "ldmd", version)]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    verb: Verb,
}

#[derive(Args)]
struct Common {
    /// Experiment configuration (TOML).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the configured seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory; overrides the configured one.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Verb {
    /// Run the solver and save the snapshot trajectory.
    Solve,
    /// Fit the configured strategies and export spectra and window layouts.
    Fit,
    /// Write predicted states over the prediction span.
    Predict,
    /// Compute relative-error curves and write every artifact.
    Errors,
    /// Run the bounds verification suite.
    Bounds {
        #[arg(long, default_value_t = 10)]
        seeds: usize,
        /// Column counts of the random instances.
        #[arg(long, value_delimiter = ',', default_values_t = [5, 10, 20, 40])]
        sizes: Vec<usize>,
        /// Row count of the random instances.
        #[arg(long, default_value_t = 50)]
        rows: usize,
        /// Skip the reference-system time-shift checks.
        #[arg(long)]
        random_only: bool,
        /// Include the 2D time-shift check on the stacked Lagrangian state.
        #[arg(long)]
        lagrangian_2d: bool,
    },
    /// Regenerate the data behind a figure.
    Reproduce {
        #[arg(value_parser = clap::builder::PossibleValuesParser::new(FIGURE_IDS))]
        fig_id: String,
    },
}

const EXIT_INPUT: u8 = 2;
const EXIT_NUMERIC: u8 = 3;
const EXIT_VIOLATION: u8 = 4;

fn exit_code(e: &Error) -> u8 {
    match e.root() {
        Error::Config(_)
        | Error::Index(_)
        | Error::Format(_)
        | Error::Io(_)
        | Error::InvalidWindow(_)
        | Error::InsufficientData(_) => EXIT_INPUT,
        _ => EXIT_NUMERIC,
    }
}

enum Outcome {
    Ok,
    Violations(usize),
}

fn load_config(common: &Common) -> Result<ExperimentConfig, Error> {
    let path = common
        .config
        .as_ref()
        .ok_or_else(|| Error::Config("--config is required for this verb".into()))?;
    let mut cfg = ExperimentConfig::load(path)?;
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    if let Some(out) = &common.out {
        cfg.output_dir = Some(out.clone());
    }
    Ok(cfg)
}

fn out_dir(cfg: &ExperimentConfig) -> PathBuf {
    cfg.output_dir.clone().unwrap_or_else(|| PathBuf::from("."))
}

/// Writes all files or none.
fn write_all(dir: &Path, files: Vec<(String, Vec<u8>)>) -> Result<(), Error> {
    std::fs::create_dir_all(dir)?;
    let mut written = Vec::new();
    for (name, bytes) in files {
        let path = dir.join(&name);
        if let Err(e) = std::fs::write(&path, bytes) {
            for p in written.iter().chain(std::iter::once(&path)) {
                let _ = std::fs::remove_file(p);
            }
            return Err(e.into());
        }
        log::info!("wrote {}", path.display());
        written.push(path);
    }
    Ok(())
}

fn run_pipeline(cfg: &ExperimentConfig) -> Result<ExperimentOutput, Error> {
    let traj = generate(&cfg.solver).map_err(|e| Error::Stage {
        stage: "solve",
        source: Box::new(e),
    })?;
    evaluate(cfg, &traj)
}

fn predictions(out: &ExperimentOutput) -> Result<Vec<(String, Vec<u8>)>, Error> {
    let cfg = &out.config;
    let (p0, p1) = (out.truth.index_of(cfg.predict_span[0]), out.truth.index_of(cfg.predict_span[1]));
    let times: Vec<f64> = (p0..=p1).step_by(cfg.sample_every).map(|i| out.truth.grid().time(i)).collect();
    let mut files = Vec::new();
    for fit in &out.fits {
        let mut buf = Vec::new();
        let dim = out.truth.dim();
        write!(buf, "t")?;
        for k in 0..dim {
            write!(buf, ",c{k}")?;
        }
        writeln!(buf)?;
        for (t, x) in times.iter().zip(fit.predict(&times)?) {
            write!(buf, "{t}")?;
            for v in x {
                write!(buf, ",{v:e}")?;
            }
            writeln!(buf)?;
        }
        files.push((format!("prediction_{}.csv", fit.strategy.name()), buf));
    }
    Ok(files)
}

fn report_bounds(reports: &[BoundReport]) -> Outcome {
    let bad: Vec<&BoundReport> = reports.iter().filter(|r| !r.satisfied).collect();
    for r in &bad {
        eprintln!(
            "violated: {} [{}] m={} at {:?} (max measured/bound {:.6e})",
            r.name,
            r.instance,
            r.m,
            r.violations(),
            r.max_ratio()
        );
    }
    for r in reports.iter().filter(|r| r.notice.is_some()) {
        log::warn!("{} [{}]: {}", r.name, r.instance, r.notice.as_deref().unwrap_or_default());
    }
    println!("{} bound reports, {} violated", reports.len(), bad.len());
    if bad.is_empty() {
        Outcome::Ok
    } else {
        Outcome::Violations(bad.len())
    }
}

fn run(cli: Cli) -> Result<Outcome, Error> {
    match cli.verb {
        Verb::Solve => {
            let cfg = load_config(&cli.common)?;
            let traj = generate(&cfg.solver)?;
            let mut csv = Vec::new();
            traj.snapshots.write_csv(&mut csv)?;
            let mut bin = Vec::new();
            traj.snapshots.write_to(&mut bin)?;
            let provenance = cfg.to_toml()?;
            write_all(
                &out_dir(&cfg),
                vec![
                    ("snapshots.dmds".into(), bin),
                    ("snapshots.csv".into(), csv),
                    ("solver.toml".into(), provenance.into_bytes()),
                ],
            )?;
            if let Some(div) = &traj.max_divergence {
                println!("max divergence {:.3e}", div.iter().copied().fold(0.0, f64::max));
            }
            println!("{} snapshots of dimension {}", traj.snapshots.len(), traj.snapshots.dim());
            Ok(Outcome::Ok)
        }
        Verb::Fit => {
            let cfg = load_config(&cli.common)?;
            let out = run_pipeline(&cfg)?;
            let files = render_artifacts(&out)?
                .into_iter()
                .filter(|(n, _)| n.starts_with("spectrum_") || n.starts_with("model_") || n == "provenance.json")
                .collect();
            write_all(&out_dir(&cfg), files)?;
            for f in &out.fits {
                println!("{}: ranks {:?}", f.strategy.name(), f.ranks());
            }
            Ok(Outcome::Ok)
        }
        Verb::Predict => {
            let cfg = load_config(&cli.common)?;
            let out = run_pipeline(&cfg)?;
            write_all(&out_dir(&cfg), predictions(&out)?)?;
            Ok(Outcome::Ok)
        }
        Verb::Errors => {
            let cfg = load_config(&cli.common)?;
            let out = run_pipeline(&cfg)?;
            write_all(&out_dir(&cfg), render_artifacts(&out)?)?;
            for c in &out.curves {
                println!(
                    "{}: max relative error {:.4e} over [{}, {}]",
                    c.strategy.name(),
                    c.rel_errors.iter().copied().fold(0.0, f64::max),
                    cfg.predict_span[0],
                    cfg.predict_span[1]
                );
            }
            Ok(Outcome::Ok)
        }
        Verb::Bounds {
            seeds,
            sizes,
            rows,
            random_only,
            lagrangian_2d,
        } => {
            let opts = SuiteOptions {
                seeds,
                sizes,
                n: rows,
                base_seed: cli.common.seed.unwrap_or(0),
                reference_systems: !random_only,
                lagrangian_2d,
            };
            let reports = run_bounds_suite(&opts)?;
            let mut buf = Vec::new();
            write_reports_csv(&mut buf, &reports)?;
            let dir = cli.common.out.clone().unwrap_or_else(|| PathBuf::from("."));
            write_all(&dir, vec![("bounds.csv".into(), buf)])?;
            Ok(report_bounds(&reports))
        }
        Verb::Reproduce { fig_id } => {
            let dir = cli.common.out.clone().unwrap_or_else(|| PathBuf::from(&fig_id));
            match reproduce(&fig_id, cli.common.seed.unwrap_or(0), Some(&dir))? {
                Reproduction::Experiment(out) => {
                    for c in &out.curves {
                        println!(
                            "{}: max relative error {:.4e}",
                            c.strategy.name(),
                            c.rel_errors.iter().copied().fold(0.0, f64::max)
                        );
                    }
                    println!("artifacts in {}", dir.display());
                    Ok(Outcome::Ok)
                }
                Reproduction::Bounds(reports) => Ok(report_bounds(&reports)),
            }
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(Outcome::Ok) => ExitCode::SUCCESS,
        Ok(Outcome::Violations(n)) => {
            eprintln!("{n} bound violation(s)");
            ExitCode::from(EXIT_VIOLATION)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
