use std::io::Write;
use std::path::Path;

use serde_json::json;

use super::{ErrorCurve, ExperimentOutput, FittedModel};
use crate::error::Result;
use crate::snapshots::SnapshotSet;

pub const ERRORS_CSV_HEADER: &str = "strategy,t,rel_error";
pub const MODEL_CSV_HEADER: &str = "window,start,end,pairs,rank";

/// Long format, one row per strategy and sample time.
pub fn write_error_curves_csv(w: &mut impl Write, curves: &[ErrorCurve]) -> Result<()> {
    writeln!(w, "{ERRORS_CSV_HEADER}")?;
    for c in curves {
        for (t, e) in c.times.iter().zip(&c.rel_errors) {
            writeln!(w, "{},{t:.10},{e:.17e}", c.strategy.name())?;
        }
    }
    Ok(())
}

fn model_csv(fit: &FittedModel, train: &SnapshotSet) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    writeln!(buf, "{MODEL_CSV_HEADER}")?;
    match fit {
        FittedModel::Global(m) => {
            let g = train.grid();
            writeln!(buf, "0,{},{},{},{}", g.t0(), g.t_final(), train.len() - 1, m.rank())?;
        }
        FittedModel::Piecewise(p) => {
            for (k, w) in p.windows().iter().enumerate() {
                writeln!(buf, "{k},{},{},{},{}", w.start, w.end, w.pairs, w.model.rank())?;
            }
        }
    }
    Ok(buf)
}

/// Every artifact as `(file name, bytes)`, in a fixed order.
pub fn render_artifacts(out: &ExperimentOutput) -> Result<Vec<(String, Vec<u8>)>> {
    let mut files = Vec::new();
    let mut errors = Vec::new();
    write_error_curves_csv(&mut errors, &out.curves)?;
    files.push(("errors.csv".to_string(), errors));
    for fit in &out.fits {
        let name = fit.strategy.name();
        let mut spectrum = Vec::new();
        match &fit.model {
            FittedModel::Global(m) => m.write_spectrum_csv(&mut spectrum, Some(&fit.initial))?,
            FittedModel::Piecewise(p) => p.write_spectrum_csv(&mut spectrum)?,
        }
        files.push((format!("spectrum_{name}.csv"), spectrum));
        files.push((format!("model_{name}.csv"), model_csv(&fit.model, &out.train)?));
    }
    if let Some(v) = &out.velocity {
        let mut buf = Vec::new();
        v.write_csv(&mut buf)?;
        files.push(("velocity.csv".to_string(), buf));
    }
    // The output location is not a parameter of the run.
    let mut config = out.config.clone();
    config.output_dir = None;
    let provenance = json!({
        "package": env!("CARGO_PKG_NAME"),
        "version": env!("CARGO_PKG_VERSION"),
        "config": config,
        "eulerian_dim": out.truth.dim(),
        "lagrangian_dim": out.lagrangian_dim,
        "snapshots": out.truth.len(),
        "training_snapshots": out.train.len(),
        "clamped_snapshots": out.clamped_snapshots,
        "max_divergence": out.max_divergence.as_ref().map(|d| d.iter().copied().fold(0.0, f64::max)),
        "ranks": out.fits.iter().map(|f| (f.strategy.name(), f.ranks())).collect::<std::collections::BTreeMap<_, _>>(),
    });
    let text = serde_json::to_string_pretty(&provenance).map_err(|e| crate::Error::Format(e.to_string()))?;
    files.push(("provenance.json".to_string(), text.into_bytes()));
    Ok(files)
}

/// Writes every artifact into `dir`. On failure, files written so far are
/// removed so that no partial result set is left behind.
pub fn write_artifacts(out: &ExperimentOutput, dir: &Path) -> Result<Vec<std::path::PathBuf>> {
    let files = render_artifacts(out)?;
    std::fs::create_dir_all(dir)?;
    let mut written = Vec::with_capacity(files.len());
    for (name, bytes) in files {
        let path = dir.join(name);
        if let Err(e) = std::fs::write(&path, bytes) {
            for p in &written {
                let _ = std::fs::remove_file(p);
            }
            let _ = std::fs::remove_file(&path);
            return Err(e.into());
        }
        written.push(path);
    }
    Ok(written)
}
