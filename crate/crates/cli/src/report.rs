use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use anyhow::{Context, Result};
use permrate::simlab::MethodId;
use permrate::{BandwidthChoice, ComparatorReport, ConfidenceSet, EstimateResult, EstimatorSpec, TestReport};
use serde::{Deserialize, Serialize};

use crate::args::AnalysisArgs;

pub const SCHEMA_VERSION: u32 = 1;

/// A permutation test with its realised tie-breaking uniform.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PermOutcome {
    pub method: MethodId,
    pub uniform: f64,
    /// `uniform < φ`.
    pub reject: bool,
    pub report: TestReport,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub schema_version: u32,
    pub command: String,
    pub config: AnalysisArgs,
    pub spec: EstimatorSpec,
    pub n: [usize; 2],
    pub bandwidth: BandwidthChoice,
    pub estimates: [EstimateResult; 2],
    pub t_n: f64,
    pub s_n: Option<f64>,
    pub sigma_hat2: f64,
    pub permutation: Vec<PermOutcome>,
    pub comparators: Vec<ComparatorReport>,
    pub confidence_set: Option<ConfidenceSet>,
    /// Wall-clock seconds per stage.
    pub timings: BTreeMap<String, f64>,
}

impl Report {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Report> {
        let r: Report = serde_json::from_str(text).context("not a permrate report")?;
        anyhow::ensure!(r.schema_version == SCHEMA_VERSION, "unsupported report schema {}", r.schema_version);
        Ok(r)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?).with_context(|| format!("cannot write {}", path.display()))
    }

    pub fn summary(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "n1 = {}, n2 = {}, h = {:.6} ({:?})", self.n[0], self.n[1], self.bandwidth.value, self.bandwidth.rule);
        for (k, e) in self.estimates.iter().enumerate() {
            let _ = writeln!(
                s,
                "sample {}: theta = {:.6} (uncorrected {:.6}), xi2 = {:.6}, n_eff = {}",
                k + 1,
                e.theta,
                e.theta_b,
                e.xi2_hat,
                e.n_eff
            );
        }
        let sn = self.s_n.map_or("undefined".to_string(), |v| format!("{v:.4}"));
        let _ = writeln!(s, "T_n = {:.4}, S_n = {sn}", self.t_n);
        let _ = writeln!(s, "{:<6} {:>12} {:>10} {:>8}", "method", "statistic", "p-value", "reject");
        for p in &self.permutation {
            let _ = writeln!(
                s,
                "{:<6} {:>12.4} {:>10.4} {:>8}",
                p.method.name(),
                p.report.statistic,
                p.report.p_value,
                p.reject
            );
        }
        for c in &self.comparators {
            let name = match c.method {
                permrate::Method::T => "t",
                permrate::Method::WildBootstrap { .. } => "sb",
                permrate::Method::Subsample { .. } => "ss",
            };
            let _ = writeln!(s, "{:<6} {:>12.4} {:>10.4} {:>8}", name, c.statistic, c.p_value, c.reject);
        }
        if let Some(cs) = &self.confidence_set {
            let show = |h: Option<(f64, f64)>| h.map_or("empty".to_string(), |(a, b)| format!("[{a:.6}, {b:.6}]"));
            let _ = writeln!(
                s,
                "{:.0}% set: conservative {}, randomized {} (U = {:.4})",
                100.0 * cs.level,
                show(cs.interval_hull),
                show(cs.randomized_hull),
                cs.u
            );
        }
        s
    }
}
