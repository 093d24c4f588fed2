use std::collections::BTreeMap;
use std::time::Instant;

use anyhow::{bail, Context, Result};
use permrate::compare::{self, CompareConfig};
use permrate::rng::{child_seed, substream, Purpose};
use permrate::simlab::{self, Design, DesignId, HRule, MethodId, SimOptions};
use permrate::{
    build_problem, ik_bandwidth, permute, BandwidthChoice, BiasMode, EstimatorSpec, EvalPoint, Family, GridSpec,
    InvertMode, Kernel, PermPlan, Problem, ProblemKind, StatKind, TiePolicy, VarianceMode,
};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::args::{AnalysisArgs, BandwidthArg, BiasArg, CsetArgs, KindArg, SimulateArgs, VarianceArg};
use crate::ingest::{ingest, ColumnMap};
use crate::plotdata;
use crate::report::{PermOutcome, Report, SCHEMA_VERSION};

pub fn problem_kind(a: &AnalysisArgs) -> Result<ProblemKind> {
    let point = || a.point.context("--point is required for two-sample problems");
    Ok(match a.kind {
        KindArg::TwoSampleMean => ProblemKind::TwoSampleMean { point: EvalPoint::interior(point()?) },
        KindArg::TwoSampleQuantile => {
            ProblemKind::TwoSampleQuantile { point: EvalPoint::interior(point()?), chi: a.quantile }
        }
        KindArg::Rdd => ProblemKind::Rdd { cutoff: a.cutoff },
        KindArg::Density => ProblemKind::DensityJump { point: a.point.unwrap_or(0.0) },
    })
}

pub fn load_problem(a: &AnalysisArgs) -> Result<Problem> {
    let path = a.input.as_ref().context("--input is required")?;
    let density = a.kind == KindArg::Density;
    let two_sample = matches!(a.kind, KindArg::TwoSampleMean | KindArg::TwoSampleQuantile);
    if two_sample && a.group.is_none() {
        bail!("two-sample problems need --group");
    }
    let map = ColumnMap {
        x: a.x.clone(),
        y: (!density).then(|| a.y.clone()),
        d: a.d.clone(),
        group: if two_sample { a.group.clone() } else { None },
    };
    let mut sample = ingest(path, &map)?;
    if density {
        // Random half-split, reproducible from the seed.
        sample = sample.shuffled(a.seed);
    }
    Ok(build_problem(&sample, problem_kind(a)?)?)
}

pub fn estimator_spec(a: &AnalysisArgs) -> Result<EstimatorSpec> {
    let family = match a.kind {
        KindArg::TwoSampleMean | KindArg::Rdd if a.d.is_some() => Family::MeanRatio { order: a.order },
        KindArg::TwoSampleMean | KindArg::Rdd if a.order == 0 => Family::NwMean,
        KindArg::TwoSampleMean | KindArg::Rdd => Family::LprMean { order: a.order },
        KindArg::TwoSampleQuantile => Family::LocalQuantile { chi: a.quantile },
        KindArg::Density => Family::DensityEdge,
    };
    let mut spec = EstimatorSpec::new(family).with_kernel(Kernel::new(a.kernel));
    if let Some(b) = a.bias {
        spec = spec.with_bias(match b {
            BiasArg::Plugin => BiasMode::Plugin,
            BiasArg::OrderBump => BiasMode::OrderBump,
            BiasArg::None => BiasMode::None,
        });
    }
    if let Some(v) = a.variance {
        spec = spec.with_variance(match v {
            VarianceArg::Plugin => VarianceMode::Plugin,
            VarianceArg::Nn3 => VarianceMode::NnMatched { neighbors: 3 },
            VarianceArg::Sandwich => VarianceMode::Sandwich,
        });
    }
    if let Some(m) = a.min_window {
        spec = spec.with_min_window(m);
    }
    Ok(spec)
}

pub fn choose_bandwidth(a: &AnalysisArgs, p: &Problem, spec: &EstimatorSpec) -> Result<BandwidthChoice> {
    Ok(match a.bandwidth {
        BandwidthArg::Ik => ik_bandwidth(p, &spec.kernel).context("plug-in bandwidth failed; pass --bandwidth <h>")?,
        BandwidthArg::Value(h) => BandwidthChoice::fixed(h)?,
    })
}

pub fn perm_plan(a: &AnalysisArgs) -> PermPlan {
    let plan = if a.perms == 0 {
        PermPlan::exhaustive()
    } else {
        PermPlan::monte_carlo(a.perms, child_seed(a.seed, Purpose::Permutation, 0))
    };
    plan.with_ties(if a.conservative_ties { TiePolicy::Conservative } else { TiePolicy::Randomized })
}

/// Uniform used to resolve the randomized decision of the test at `δ₀`.
pub fn decision_uniform(seed: u64) -> f64 {
    substream(seed, Purpose::Uniform, 1, 0).random()
}

pub fn run_test(a: &AnalysisArgs) -> Result<Report> {
    analyse(a, None)
}

pub fn run_cset(c: &CsetArgs) -> Result<Report> {
    analyse(&c.analysis, Some(c))
}

pub fn run_bandwidth(a: &AnalysisArgs) -> Result<BandwidthChoice> {
    let p = load_problem(a)?;
    choose_bandwidth(a, &p, &estimator_spec(a)?)
}

fn analyse(a: &AnalysisArgs, cset: Option<&CsetArgs>) -> Result<Report> {
    let mut timings = BTreeMap::new();
    let clock = Instant::now();
    let p = load_problem(a)?;
    let spec = estimator_spec(a)?;
    timings.insert("load".into(), clock.elapsed().as_secs_f64());

    let clock = Instant::now();
    let bandwidth = choose_bandwidth(a, &p, &spec)?;
    let h = bandwidth.value;
    timings.insert("bandwidth".into(), clock.elapsed().as_secs_f64());

    let observed = permute::statistic(&p, h, &spec).context("estimation failed on the observed data")?;
    let plan = perm_plan(a);
    let u = decision_uniform(a.seed);
    let wants = |m: MethodId| a.methods.contains(&m);
    let outcome = |method, report: permute::TestReport| PermOutcome { method, uniform: u, reject: report.rejects(u), report };

    let mut permutation = Vec::new();
    let clock = Instant::now();
    match (wants(MethodId::Sp), wants(MethodId::Nsp)) {
        (true, true) => {
            let (nsp, sp) = permute::test_both(&p, &plan, h, &spec, a.alpha)?;
            permutation.push(outcome(MethodId::Sp, sp));
            permutation.push(outcome(MethodId::Nsp, nsp));
        }
        (true, false) => {
            permutation.push(outcome(MethodId::Sp, permute::test(&p, &plan, h, &spec, StatKind::Studentized, a.alpha)?))
        }
        (false, true) => permutation
            .push(outcome(MethodId::Nsp, permute::test(&p, &plan, h, &spec, StatKind::Nonstudentized, a.alpha)?)),
        (false, false) => {}
    }
    if !permutation.is_empty() {
        timings.insert("permutation".into(), clock.elapsed().as_secs_f64());
    }

    let mut comparators = Vec::new();
    let cfg = CompareConfig::default();
    let draws = a.perms.max(1);
    if wants(MethodId::T) {
        let clock = Instant::now();
        let s = observed.s_n.context("studentized statistic undefined (zero variance estimate)")?;
        comparators.push(compare::t_test(s, a.alpha)?);
        timings.insert("t".into(), clock.elapsed().as_secs_f64());
    }
    if wants(MethodId::Sb) {
        let clock = Instant::now();
        let seed = child_seed(a.seed, Purpose::WildBootstrap, 0);
        comparators.push(compare::wild_bootstrap(&p, draws, h, &spec, seed, a.alpha, &cfg, true)?);
        timings.insert("sb".into(), clock.elapsed().as_secs_f64());
    }
    if wants(MethodId::Ss) {
        let clock = Instant::now();
        let seed = child_seed(a.seed, Purpose::Subsample, 0);
        comparators.push(compare::subsample(&p, draws, h, &spec, seed, a.alpha, &cfg, true)?);
        timings.insert("ss".into(), clock.elapsed().as_secs_f64());
    }

    let confidence_set = match cset {
        Some(c) => {
            let clock = Instant::now();
            let grid = GridSpec { half_width: c.grid_width, points: c.grid_points, rel_tol: c.grid_tol };
            let mode = if c.shift_stat { InvertMode::ShiftStat } else { InvertMode::DataTransform };
            let cs = permrate::invert(&p, &plan, h, &spec, a.alpha, &grid, a.seed, mode)?;
            timings.insert("confidence_set".into(), clock.elapsed().as_secs_f64());
            Some(cs)
        }
        None => None,
    };

    let report = Report {
        schema_version: SCHEMA_VERSION,
        command: if cset.is_some() { "cset" } else { "test" }.into(),
        config: a.clone(),
        spec,
        n: [p.n1, p.n2()],
        bandwidth,
        estimates: [observed.est1, observed.est2],
        t_n: observed.t_n,
        s_n: observed.s_n,
        sigma_hat2: observed.sigma_hat2,
        permutation,
        comparators,
        confidence_set,
        timings,
    };
    if let Some(out) = &a.out {
        report.write(out)?;
    }
    if let Some(dir) = &a.plot_dir {
        plotdata::write_report(dir, &report)?;
    }
    Ok(report)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimulateOutput {
    pub table: Option<simlab::SimTable>,
    pub curves: Vec<simlab::PowerCurve>,
    pub coverage: Option<simlab::Coverage>,
}

pub fn design_from(s: &SimulateArgs) -> Result<Design> {
    let pair = |v: &[f64], what: &str| -> Result<[f64; 2]> {
        match v {
            [a] => Ok([*a, *a]),
            [a, b] => Ok([*a, *b]),
            _ => bail!("--{what} takes one or two values"),
        }
    };
    let n: [usize; 2] = match s.n.as_slice() {
        [a] => [*a, *a],
        [a, b] => [*a, *b],
        _ => bail!("--n takes one or two values"),
    };
    let sigma2 = pair(&s.sigma2, "sigma2")?;
    Ok(match s.design {
        DesignId::Design1 => Design::design1(sigma2, n),
        DesignId::Design2 => Design::design2(sigma2, s.mu, n),
        DesignId::Example1 => Design::example1(),
        DesignId::SharpNullCustom => Design { sigma2, ..Design::sharp_null(sigma2[0], n) },
        DesignId::DensityNull => Design::density_null(n[0] + n[1]),
    })
}

pub fn run_simulate(s: &SimulateArgs) -> Result<SimulateOutput> {
    let design = design_from(s)?;
    let (reps, perms) = if s.full_scale { (10_000, 1_000) } else { (s.reps, s.perms) };
    let opts = SimOptions { alpha: s.alpha, ..SimOptions::new(reps, perms, s.seed) };
    let rules: Vec<HRule> = s.h.iter().map(|&b| b.into()).collect();
    let mut out = SimulateOutput { table: None, curves: Vec::new(), coverage: None };

    if s.power_shifts.is_empty() && s.coverage_shift.is_none() {
        out.table = Some(simlab::rejection_table(&[design], &rules, &s.methods, &opts)?);
    }
    for &m in &s.methods {
        if !s.power_shifts.is_empty() {
            out.curves.push(simlab::power_curve(&design, rules[0], &s.power_shifts, m, s.size_adjust, &opts)?);
        }
    }
    if let Some(shift) = s.coverage_shift {
        out.coverage = Some(simlab::coverage(&design.with_shift(shift), rules[0], &opts)?);
    }
    if let Some(dir) = &s.out {
        std::fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display()))?;
        if let Some(t) = &out.table {
            t.write_csv(std::fs::File::create(dir.join("table.csv"))?)?;
            std::fs::write(dir.join("table.json"), t.to_json()?)?;
        }
        for c in &out.curves {
            plotdata::write_power_curve(&dir.join(format!("power_{}.csv", c.method.name())), c)?;
        }
        if let Some(c) = &out.coverage {
            std::fs::write(dir.join("coverage.json"), serde_json::to_string_pretty(c)?)?;
        }
    }
    Ok(out)
}

pub fn simulate_summary(o: &SimulateOutput) -> String {
    let mut s = String::new();
    if let Some(t) = &o.table {
        s.push_str("design  h       method  rate    se\n");
        for c in &t.cells {
            s.push_str(&format!(
                "{:<7} {:<7} {:<7} {:.4}  {:.4}\n",
                c.design.id.name(),
                c.h_rule.label(),
                c.method.name(),
                c.rate,
                c.se
            ));
        }
    }
    for c in &o.curves {
        s.push_str(&format!("power curve {} (alpha {:.4}):\n", c.method.name(), c.alpha));
        for p in &c.points {
            s.push_str(&format!("  shift {:>8.4}  rejection {:.4} ± {:.4}\n", p.shift, p.rejection, p.se));
        }
    }
    if let Some(c) = &o.coverage {
        s.push_str(&format!("coverage at delta = {}: randomized {:.4} ± {:.4}, expected {:.4}\n", c.delta, c.randomized, c.se, c.expected));
    }
    s
}

