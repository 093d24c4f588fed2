use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use clap::{Args, Parser, Subcommand, ValueEnum};
use permrate::simlab::{DesignId, HRule, MethodId};
use permrate::KernelKind;
use serde::{Deserialize, Serialize};

#[derive(Debug, Parser)]
#[command(name = "permrate", version, about = "Studentized two-sample permutation tests for kernel estimators")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Test equality of the two parameters.
    Test(AnalysisArgs),
    /// Confidence set for the parameter difference (or density ratio).
    Cset(CsetArgs),
    /// Monte Carlo rejection tables, power curves and coverage.
    Simulate(SimulateArgs),
    /// Report the plug-in bandwidth for a data set.
    Bandwidth(AnalysisArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum KindArg {
    TwoSampleMean,
    TwoSampleQuantile,
    Rdd,
    Density,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BiasArg {
    Plugin,
    OrderBump,
    None,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum VarianceArg {
    Plugin,
    Nn3,
    Sandwich,
}

/// `ik` or a positive number in regressor units.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BandwidthArg {
    Ik,
    Value(f64),
}

impl FromStr for BandwidthArg {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        if s.eq_ignore_ascii_case("ik") {
            return Ok(BandwidthArg::Ik);
        }
        match s.parse::<f64>() {
            Ok(h) if h.is_finite() && h > 0.0 => Ok(BandwidthArg::Value(h)),
            _ => Err(format!("expected 'ik' or a positive number, got '{s}'")),
        }
    }
}

impl fmt::Display for BandwidthArg {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BandwidthArg::Ik => f.write_str("ik"),
            BandwidthArg::Value(h) => write!(f, "{h}"),
        }
    }
}

impl From<BandwidthArg> for HRule {
    fn from(b: BandwidthArg) -> HRule {
        match b {
            BandwidthArg::Ik => HRule::Ik,
            BandwidthArg::Value(h) => HRule::Fixed(h),
        }
    }
}

/// Settings shared by `test`, `cset` and `bandwidth`; echoed in reports.
#[derive(Clone, Debug, PartialEq, Args, Serialize, Deserialize)]
pub struct AnalysisArgs {
    /// CSV file with a header row.
    #[arg(long)]
    pub input: Option<PathBuf>,
    #[arg(long, default_value = "x")]
    pub x: String,
    #[arg(long, default_value = "y")]
    pub y: String,
    /// Denominator outcome; turns mean problems into ratio-of-means problems.
    #[arg(long)]
    pub d: Option<String>,
    /// Two-valued group column for two-sample problems.
    #[arg(long)]
    pub group: Option<String>,
    #[arg(long, value_enum, default_value = "two-sample-mean")]
    pub kind: KindArg,
    /// Cutoff of the running variable for `rdd`.
    #[arg(long, default_value_t = 0.0)]
    pub cutoff: f64,
    /// Evaluation point for two-sample and density problems.
    #[arg(long)]
    pub point: Option<f64>,
    #[arg(long, default_value_t = 0.5)]
    pub quantile: f64,
    #[arg(long, default_value = "triangular")]
    pub kernel: KernelKind,
    #[arg(long, default_value = "ik")]
    pub bandwidth: BandwidthArg,
    /// Local polynomial order of the estimate.
    #[arg(long, default_value_t = 1)]
    pub order: usize,
    /// Bias correction; defaults to order-bump for means and plugin otherwise.
    #[arg(long, value_enum)]
    pub bias: Option<BiasArg>,
    /// Variance estimator; defaults to nn3 for means and plugin otherwise.
    #[arg(long, value_enum)]
    pub variance: Option<VarianceArg>,
    #[arg(long)]
    pub min_window: Option<usize>,
    #[arg(long, default_value_t = 0.05)]
    pub alpha: f64,
    /// Random permutations; 0 enumerates all of them (n ≤ 10).
    #[arg(long, default_value_t = 1000)]
    pub perms: usize,
    #[arg(long, env = "PERMRATE_SEED", default_value_t = 0)]
    pub seed: u64,
    #[arg(long, value_delimiter = ',', default_value = "sp,nsp,t")]
    pub methods: Vec<MethodId>,
    /// Never reject on ties at the critical values.
    #[arg(long)]
    pub conservative_ties: bool,
    #[arg(long)]
    pub threads: Option<usize>,
    /// JSON report path.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Directory for CSV plot data.
    #[arg(long)]
    pub plot_dir: Option<PathBuf>,
}

#[derive(Parser)]
struct AnalysisOnly {
    #[command(flatten)]
    args: AnalysisArgs,
}

impl AnalysisArgs {
    /// Command-line defaults with the given input file.
    pub fn with_input(path: impl Into<PathBuf>) -> AnalysisArgs {
        let mut a = AnalysisOnly::parse_from(["permrate"]).args;
        a.input = Some(path.into());
        a
    }
}

#[derive(Clone, Debug, PartialEq, Args, Serialize, Deserialize)]
pub struct CsetArgs {
    #[command(flatten)]
    pub analysis: AnalysisArgs,
    #[arg(long, default_value_t = 41)]
    pub grid_points: usize,
    /// Grid half-width in standard errors.
    #[arg(long, default_value_t = 6.0)]
    pub grid_width: f64,
    /// Bisection tolerance in standard errors.
    #[arg(long, default_value_t = 0.01)]
    pub grid_tol: f64,
    /// Shift the observed statistic instead of transforming the data.
    #[arg(long)]
    pub shift_stat: bool,
}

#[derive(Clone, Debug, PartialEq, Args, Serialize, Deserialize)]
pub struct SimulateArgs {
    #[arg(long, default_value = "design1")]
    pub design: DesignId,
    #[arg(long, value_delimiter = ',', default_value = "1,1")]
    pub sigma2: Vec<f64>,
    #[arg(long, value_delimiter = ',', default_value = "100,1900")]
    pub n: Vec<usize>,
    #[arg(long, default_value_t = 1.0)]
    pub mu: f64,
    /// Bandwidth rules, `ik` or numbers.
    #[arg(long, value_delimiter = ',', default_value = "0.1")]
    pub h: Vec<BandwidthArg>,
    #[arg(long, value_delimiter = ',', default_value = "nsp,sp,t")]
    pub methods: Vec<MethodId>,
    #[arg(long, default_value_t = 2000)]
    pub reps: usize,
    #[arg(long, default_value_t = 500)]
    pub perms: usize,
    /// 10,000 replications with 1,000 permutations each.
    #[arg(long)]
    pub full_scale: bool,
    #[arg(long, env = "PERMRATE_SEED", default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 0.05)]
    pub alpha: f64,
    /// Location shifts for power curves (must include 0).
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub power_shifts: Vec<f64>,
    #[arg(long)]
    pub size_adjust: bool,
    /// Estimate coverage of the inverted test at this shift.
    #[arg(long, allow_hyphen_values = true)]
    pub coverage_shift: Option<f64>,
    #[arg(long)]
    pub threads: Option<usize>,
    /// Output directory for CSV and JSON files.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[cfg(test)]
mod tests {
    use super::*;
    use clap::CommandFactory;

    #[test]
    fn cli_definition_is_consistent() {
        Cli::command().debug_assert();
    }

    #[test]
    fn parse_flags() {
        let cli = Cli::try_parse_from([
            "permrate", "test", "--input", "a.csv", "--kind", "rdd", "--bandwidth", "29.39", "--methods", "sp,t,sb",
            "--bias", "order-bump", "--variance", "sandwich", "--conservative-ties", "--seed", "9",
        ])
        .unwrap();
        let Command::Test(a) = cli.command else { panic!() };
        assert_eq!(a.kind, KindArg::Rdd);
        assert_eq!(a.bandwidth, BandwidthArg::Value(29.39));
        assert_eq!(a.methods, vec![MethodId::Sp, MethodId::T, MethodId::Sb]);
        assert_eq!(a.variance, Some(VarianceArg::Sandwich));
        assert!(a.conservative_ties);
        assert_eq!(a.seed, 9);
        assert!(Cli::try_parse_from(["permrate", "test", "--bandwidth", "-1"]).is_err());
        assert!(Cli::try_parse_from(["permrate", "test", "--methods", "sp,zz"]).is_err());
    }

    #[test]
    fn defaults() {
        let a = AnalysisArgs::with_input("d.csv");
        assert_eq!(a.kernel, KernelKind::Triangular);
        assert_eq!(a.bandwidth, BandwidthArg::Ik);
        assert_eq!((a.perms, a.alpha, a.order), (1000, 0.05, 1));
        let cli = Cli::try_parse_from(["permrate", "simulate", "--power-shifts", "-1,0,1", "--h", "ik,0.3"]).unwrap();
        let Command::Simulate(s) = cli.command else { panic!() };
        assert_eq!(s.power_shifts, vec![-1.0, 0.0, 1.0]);
        assert_eq!(s.h, vec![BandwidthArg::Ik, BandwidthArg::Value(0.3)]);
    }
}
