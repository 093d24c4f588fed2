use std::io::Write;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bandwidth::ik_bandwidth;
use crate::compare::{self, CompareConfig};
use crate::confset::phi_at;
use crate::error::{Error, Result};
use crate::permute::{test_both, PermPlan, TiePolicy};
use crate::rng::{child_seed, substream, Purpose};
use crate::smooth::EstimatorSpec;
use crate::split::Problem;

use super::{draw, Design};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HRule {
    Fixed(f64),
    Ik,
}

impl HRule {
    pub fn label(&self) -> String {
        match self {
            HRule::Fixed(h) => format!("{h}"),
            HRule::Ik => "ik".into(),
        }
    }

    pub fn resolve(&self, p: &Problem, spec: &EstimatorSpec) -> Result<f64> {
        match *self {
            HRule::Fixed(h) => Ok(h),
            HRule::Ik => Ok(ik_bandwidth(p, &spec.kernel)?.value),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MethodId {
    Nsp,
    Sp,
    T,
    Sb,
    Ss,
}

impl MethodId {
    pub const ALL: [MethodId; 5] = [MethodId::Nsp, MethodId::Sp, MethodId::T, MethodId::Sb, MethodId::Ss];

    pub fn name(self) -> &'static str {
        match self {
            MethodId::Nsp => "nsp",
            MethodId::Sp => "sp",
            MethodId::T => "t",
            MethodId::Sb => "sb",
            MethodId::Ss => "ss",
        }
    }
}

impl std::str::FromStr for MethodId {
    type Err = Error;
    fn from_str(s: &str) -> Result<MethodId> {
        MethodId::ALL
            .into_iter()
            .find(|m| m.name().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| Error::InvalidInput(format!("unknown method '{s}'")))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimOptions {
    pub reps: usize,
    /// Permutations per replication; also the bootstrap and subsample draws.
    pub perms: usize,
    pub seed: u64,
    pub alpha: f64,
    pub ties: TiePolicy,
    /// Replications run in parallel; inner loops are always serial.
    pub parallel: bool,
    pub compare: CompareConfig,
    /// Overrides the design's default estimator.
    pub spec: Option<EstimatorSpec>,
}

impl SimOptions {
    pub fn new(reps: usize, perms: usize, seed: u64) -> SimOptions {
        SimOptions {
            reps,
            perms,
            seed,
            alpha: 0.05,
            ties: TiePolicy::Randomized,
            parallel: true,
            compare: CompareConfig::default(),
            spec: None,
        }
    }

    pub(crate) fn spec_for(&self, design: &Design) -> EstimatorSpec {
        self.spec.unwrap_or_else(|| design.default_spec())
    }

    pub(crate) fn plan(&self, rep: u64) -> PermPlan {
        PermPlan::monte_carlo(self.perms, child_seed(self.seed, Purpose::Permutation, rep)).serial().with_ties(self.ties)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimCell {
    pub design: Design,
    pub h_rule: HRule,
    pub method: MethodId,
    /// Mean rejection; permutation tests contribute `E[φ]` per replication.
    pub rate: f64,
    pub se: f64,
    pub reps: usize,
    pub failures: usize,
    pub perms: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimTable {
    pub seed: u64,
    pub alpha: f64,
    pub cells: Vec<SimCell>,
}

impl SimTable {
    pub fn cell(&self, design: &Design, h: HRule, method: MethodId) -> Option<&SimCell> {
        self.cells.iter().find(|c| c.design == *design && c.h_rule == h && c.method == method)
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        let io = |e: csv::Error| Error::Simulation(e.to_string());
        out.write_record([
            "design", "sigma2_1", "sigma2_2", "n1", "n2", "mu", "shift", "h", "method", "rate", "se", "reps", "failures",
            "perms",
        ])
        .map_err(io)?;
        for c in &self.cells {
            let d = &c.design;
            out.write_record([
                d.id.name().to_string(),
                d.sigma2[0].to_string(),
                d.sigma2[1].to_string(),
                d.n[0].to_string(),
                d.n[1].to_string(),
                d.mu.to_string(),
                d.shift.to_string(),
                c.h_rule.label(),
                c.method.name().to_string(),
                c.rate.to_string(),
                c.se.to_string(),
                c.reps.to_string(),
                c.failures.to_string(),
                c.perms.to_string(),
            ])
            .map_err(io)?;
        }
        out.flush().map_err(|e| Error::Simulation(e.to_string()))
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::Simulation(e.to_string()))
    }
}

/// Rejection outcome of each requested method for one replication.
pub(crate) fn run_rep(
    design: &Design,
    h_rule: HRule,
    methods: &[MethodId],
    opts: &SimOptions,
    rep: u64,
) -> Vec<Result<f64>> {
    let prepared = draw(design, opts.seed, rep).and_then(|p| {
        let spec = opts.spec_for(design);
        let h = h_rule.resolve(&p, &spec)?;
        Ok((p, spec, h))
    });
    let (p, spec, h) = match prepared {
        Ok(v) => v,
        Err(e) => return vec![Err(e); methods.len()],
    };
    let needs_perm = methods.iter().any(|m| matches!(m, MethodId::Nsp | MethodId::Sp | MethodId::T));
    let both = if needs_perm { Some(test_both(&p, &opts.plan(rep), h, &spec, opts.alpha)) } else { None };
    methods
        .iter()
        .map(|m| match m {
            MethodId::Nsp => both.as_ref().unwrap().as_ref().map(|b| b.0.phi).map_err(Clone::clone),
            MethodId::Sp => both.as_ref().unwrap().as_ref().map(|b| b.1.phi).map_err(Clone::clone),
            MethodId::T => {
                let b = both.as_ref().unwrap().as_ref().map_err(Clone::clone)?;
                let s = b.1.s_n.ok_or(Error::DegenerateVariance)?;
                Ok(f64::from(u8::from(compare::t_test(s, opts.alpha)?.reject)))
            }
            MethodId::Sb => {
                let seed = child_seed(opts.seed, Purpose::WildBootstrap, rep);
                compare::wild_bootstrap(&p, opts.perms, h, &spec, seed, opts.alpha, &opts.compare, false)
                    .map(|r| f64::from(u8::from(r.reject)))
            }
            MethodId::Ss => {
                let seed = child_seed(opts.seed, Purpose::Subsample, rep);
                compare::subsample(&p, opts.perms, h, &spec, seed, opts.alpha, &opts.compare, false)
                    .map(|r| f64::from(u8::from(r.reject)))
            }
        })
        .collect()
}

pub(crate) fn for_reps<T: Send>(opts: &SimOptions, f: impl Fn(u64) -> T + Sync + Send) -> Vec<T> {
    if opts.parallel {
        (0..opts.reps as u64).into_par_iter().map(f).collect()
    } else {
        (0..opts.reps as u64).map(f).collect()
    }
}

/// Rate and Monte Carlo standard error of the successful outcomes; more
/// than 1% failures is an error.
pub(crate) fn summarize(outcomes: &[&Result<f64>], what: &str) -> Result<(f64, f64, usize, usize)> {
    let ok: Vec<f64> = outcomes.iter().filter_map(|r| r.as_ref().ok().copied()).collect();
    let failures = outcomes.len() - ok.len();
    if failures * 100 > outcomes.len() {
        let first = outcomes.iter().find_map(|r| r.as_ref().err()).unwrap();
        return Err(Error::Simulation(format!(
            "{what}: {failures} of {} replications failed (first error: {first})",
            outcomes.len()
        )));
    }
    if ok.is_empty() {
        return Err(Error::Simulation(format!("{what}: no successful replications")));
    }
    let rate = ok.iter().sum::<f64>() / ok.len() as f64;
    let se = (rate * (1.0 - rate) / ok.len() as f64).sqrt();
    Ok((rate, se, ok.len(), failures))
}

/// Simulated rejection rates for every design, bandwidth rule and method.
pub fn rejection_table(designs: &[Design], h_rules: &[HRule], methods: &[MethodId], opts: &SimOptions) -> Result<SimTable> {
    if opts.reps < 200 {
        return Err(Error::InvalidInput(format!("rejection tables need at least 200 replications, got {}", opts.reps)));
    }
    crate::permute::check_alpha(opts.alpha)?;
    let mut cells = Vec::new();
    for design in designs {
        for &h_rule in h_rules {
            let outcomes = for_reps(opts, |rep| run_rep(design, h_rule, methods, opts, rep));
            for (j, &method) in methods.iter().enumerate() {
                let col: Vec<&Result<f64>> = outcomes.iter().map(|o| &o[j]).collect();
                let what = format!("{} h={} {}", design.id.name(), h_rule.label(), method.name());
                let (rate, se, reps, failures) = summarize(&col, &what)?;
                cells.push(SimCell { design: *design, h_rule, method, rate, se, reps, failures, perms: opts.perms });
            }
        }
    }
    Ok(SimTable { seed: opts.seed, alpha: opts.alpha, cells })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Coverage {
    pub delta: f64,
    /// Share of replications with `U > φ_δ`.
    pub randomized: f64,
    /// `1 − E[φ_δ]`.
    pub expected: f64,
    /// Share with `φ_δ < 1`.
    pub conservative: f64,
    pub se: f64,
    pub reps: usize,
    pub failures: usize,
}

/// Coverage of the true parameter by the inverted studentized test. The
/// uniform for replication `r` matches a confidence set built with seed
/// `child_seed(seed, Purpose::Simulation, r)`.
pub fn coverage(design: &Design, h_rule: HRule, opts: &SimOptions) -> Result<Coverage> {
    crate::permute::check_alpha(opts.alpha)?;
    let delta = design.true_delta();
    let outcomes = for_reps(opts, |rep| -> Result<(f64, f64)> {
        let p = draw(design, opts.seed, rep)?;
        let spec = opts.spec_for(design);
        let h = h_rule.resolve(&p, &spec)?;
        let phi = phi_at(&p, &opts.plan(rep), h, &spec, opts.alpha, delta)?;
        let u: f64 = substream(child_seed(opts.seed, Purpose::Simulation, rep), Purpose::Uniform, 0, 0).random();
        Ok((phi, u))
    });
    let covered: Vec<Result<f64>> = outcomes.iter().map(|o| o.as_ref().map(|&(phi, u)| f64::from(u8::from(u > phi))).map_err(Clone::clone)).collect();
    let refs: Vec<&Result<f64>> = covered.iter().collect();
    let (randomized, se, reps, failures) = summarize(&refs, "coverage")?;
    let ok: Vec<f64> = outcomes.iter().filter_map(|o| o.as_ref().ok().map(|v| v.0)).collect();
    let expected = 1.0 - ok.iter().sum::<f64>() / ok.len() as f64;
    let conservative = ok.iter().filter(|&&f| f < 1.0).count() as f64 / ok.len() as f64;
    Ok(Coverage { delta, randomized, expected, conservative, se, reps, failures })
}
