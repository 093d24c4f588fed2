use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::compare;
use crate::error::{Error, Result};
use crate::permute::{self, Reference, StatKind};
use crate::rng::{child_seed, Purpose};

use super::table::{for_reps, summarize, HRule, MethodId, SimOptions};
use super::{draw, Design};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PowerPoint {
    pub shift: f64,
    pub rejection: f64,
    pub se: f64,
    pub reps: usize,
    pub failures: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PowerCurve {
    pub method: MethodId,
    pub size_adjusted: bool,
    /// Nominal level used at every shift.
    pub alpha: f64,
    /// Simulated null critical value of `|S|` for the size-adjusted t-test.
    pub t_critical: Option<f64>,
    pub points: Vec<PowerPoint>,
}

impl PowerCurve {
    /// Columns: `shift,rejection,se,reps,failures`.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        let io = |e: csv::Error| Error::Simulation(e.to_string());
        out.write_record(["shift", "rejection", "se", "reps", "failures"]).map_err(io)?;
        for p in &self.points {
            out.write_record([
                p.shift.to_string(),
                p.rejection.to_string(),
                p.se.to_string(),
                p.reps.to_string(),
                p.failures.to_string(),
            ])
            .map_err(io)?;
        }
        out.flush().map_err(|e| Error::Simulation(e.to_string()))
    }
}

/// What one replication leaves behind, enough to decide at any level.
enum Raw {
    Perm { stat: f64, reference: Reference },
    AbsStat(f64),
    PValue(f64),
}

impl Raw {
    fn reject(&self, opts: &SimOptions, alpha: f64, t_crit: Option<f64>) -> f64 {
        match self {
            Raw::Perm { stat, reference } => reference.decide(*stat, alpha, opts.ties).phi,
            Raw::AbsStat(s) => {
                let c = t_crit.unwrap_or_else(|| {
                    use statrs::distribution::{ContinuousCDF, Normal};
                    Normal::standard().inverse_cdf(1.0 - alpha / 2.0)
                });
                f64::from(u8::from(*s > c))
            }
            Raw::PValue(p) => f64::from(u8::from(*p < alpha)),
        }
    }
}

fn raw_outcome(design: &Design, h_rule: HRule, method: MethodId, opts: &SimOptions, rep: u64) -> Result<Raw> {
    let p = draw(design, opts.seed, rep)?;
    let spec = opts.spec_for(design);
    let h = h_rule.resolve(&p, &spec)?;
    match method {
        MethodId::Nsp | MethodId::Sp => {
            let kind = if method == MethodId::Sp { StatKind::Studentized } else { StatKind::Nonstudentized };
            let r = permute::test(&p, &opts.plan(rep), h, &spec, kind, opts.alpha)?;
            Ok(Raw::Perm { stat: r.statistic, reference: Reference::new(r.perm_draws)? })
        }
        MethodId::T => {
            let s = permute::statistic(&p, h, &spec)?.s_n.ok_or(Error::DegenerateVariance)?;
            Ok(Raw::AbsStat(s.abs()))
        }
        MethodId::Sb => {
            let seed = child_seed(opts.seed, Purpose::WildBootstrap, rep);
            let r = compare::wild_bootstrap(&p, opts.perms, h, &spec, seed, opts.alpha, &opts.compare, false)?;
            Ok(Raw::PValue(r.p_value))
        }
        MethodId::Ss => {
            let seed = child_seed(opts.seed, Purpose::Subsample, rep);
            let r = compare::subsample(&p, opts.perms, h, &spec, seed, opts.alpha, &opts.compare, false)?;
            Ok(Raw::PValue(r.p_value))
        }
    }
}

fn rate(raws: &[Result<Raw>], opts: &SimOptions, alpha: f64, t_crit: Option<f64>, what: &str) -> Result<(f64, f64, usize, usize)> {
    let outcomes: Vec<Result<f64>> =
        raws.iter().map(|r| r.as_ref().map(|r| r.reject(opts, alpha, t_crit)).map_err(Clone::clone)).collect();
    summarize(&outcomes.iter().collect::<Vec<_>>(), what)
}

const TARGET_TOL: f64 = 0.002;
const MAX_STEPS: usize = 30;

/// Rejection rates over `shifts` (added to sample 1 outcomes). With
/// `size_adjust` the level is tuned so the null rejection is within 0.002 of
/// `opts.alpha`: by bisection on the nominal level for resampling tests, and
/// by a simulated null critical value for the t-test.
pub fn power_curve(
    design: &Design,
    h_rule: HRule,
    shifts: &[f64],
    method: MethodId,
    size_adjust: bool,
    opts: &SimOptions,
) -> Result<PowerCurve> {
    permute::check_alpha(opts.alpha)?;
    if !shifts.contains(&0.0) {
        return Err(Error::InvalidInput("power curve shifts must include 0".into()));
    }
    let run = |shift: f64| {
        let d = design.with_shift(design.shift + shift);
        for_reps(opts, |rep| raw_outcome(&d, h_rule, method, opts, rep))
    };
    let null = run(0.0);
    let (mut alpha, mut t_crit) = (opts.alpha, None);
    if size_adjust {
        if method == MethodId::T {
            let mut s: Vec<f64> = null
                .iter()
                .filter_map(|r| match r {
                    Ok(Raw::AbsStat(v)) => Some(*v),
                    _ => None,
                })
                .collect();
            if s.is_empty() {
                return Err(Error::Simulation("no successful null replications".into()));
            }
            s.sort_by(f64::total_cmp);
            let k = ((1.0 - opts.alpha) * s.len() as f64).ceil() as usize;
            t_crit = Some(s[k.clamp(1, s.len()) - 1]);
        } else {
            alpha = search_alpha(&null, opts)?;
        }
    }
    let mut points = Vec::with_capacity(shifts.len());
    for &shift in shifts {
        let raws = if shift == 0.0 { None } else { Some(run(shift)) };
        let raws = raws.as_deref().unwrap_or(&null);
        let (rejection, se, reps, failures) = rate(raws, opts, alpha, t_crit, &format!("shift {shift}"))?;
        points.push(PowerPoint { shift, rejection, se, reps, failures });
    }
    Ok(PowerCurve { method, size_adjusted: size_adjust, alpha, t_critical: t_crit, points })
}

fn search_alpha(null: &[Result<Raw>], opts: &SimOptions) -> Result<f64> {
    let target = opts.alpha;
    let (mut lo, mut hi) = (1e-6_f64, (2.0 * target).clamp(target, 0.999));
    // Widen the upper end once if the nominal bracket is too narrow.
    if rate(null, opts, hi, None, "size search")?.0 < target {
        hi = 0.999;
    }
    for _ in 0..MAX_STEPS {
        let mid = 0.5 * (lo + hi);
        let r = rate(null, opts, mid, None, "size search")?.0;
        if (r - target).abs() <= TARGET_TOL {
            return Ok(mid);
        }
        if r < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Err(Error::Simulation(format!("size adjustment did not reach {target} ± {TARGET_TOL} in {MAX_STEPS} steps")))
}
