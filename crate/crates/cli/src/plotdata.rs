//! CSV exports for plotting. Every file has a header row.
//!
//! * `perm_draws_<method>.csv`: `statistic`, one row per reference value
//!   (B + 1 rows for Monte Carlo tests).
//! * `resample_draws_<method>.csv`: `statistic` for bootstrap and subsample draws.
//! * `confset.csv`: `delta,phi,conservative,randomized`.
//! * power curves: `shift,rejection,se,reps,failures`.

use std::fs::{self, File};
use std::path::Path;

use anyhow::{Context, Result};
use permrate::simlab::PowerCurve;
use permrate::{ConfidenceSet, Method};

use crate::report::Report;

fn create(path: &Path) -> Result<csv::Writer<File>> {
    let f = File::create(path).with_context(|| format!("cannot create {}", path.display()))?;
    Ok(csv::Writer::from_writer(f))
}

pub fn write_draws(path: &Path, draws: &[f64]) -> Result<()> {
    let mut w = create(path)?;
    w.write_record(["statistic"])?;
    for d in draws {
        w.write_record([d.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_confset(path: &Path, cs: &ConfidenceSet) -> Result<()> {
    let mut w = create(path)?;
    w.write_record(["delta", "phi", "conservative", "randomized"])?;
    for (i, (d, phi)) in cs.grid.iter().zip(&cs.phi).enumerate() {
        w.write_record([
            d.to_string(),
            phi.to_string(),
            u8::from(cs.conservative_contains(i)).to_string(),
            u8::from(cs.randomized_contains(i)).to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_power_curve(path: &Path, curve: &PowerCurve) -> Result<()> {
    let f = File::create(path).with_context(|| format!("cannot create {}", path.display()))?;
    Ok(curve.write_csv(f)?)
}

pub fn write_report(dir: &Path, report: &Report) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display()))?;
    for p in &report.permutation {
        write_draws(&dir.join(format!("perm_draws_{}.csv", p.method.name())), &p.report.perm_draws)?;
    }
    for c in &report.comparators {
        let name = match c.method {
            Method::T => continue,
            Method::WildBootstrap { .. } => "sb",
            Method::Subsample { .. } => "ss",
        };
        write_draws(&dir.join(format!("resample_draws_{name}.csv")), &c.draws)?;
    }
    if let Some(cs) = &report.confidence_set {
        write_confset(&dir.join("confset.csv"), cs)?;
    }
    Ok(())
}
