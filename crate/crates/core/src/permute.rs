//! Permutation engine: statistics recomputed under reshuffles of the pooled
//! rows with the label vector held fixed, and the randomized test function.
//!
//! Only rows within [`EstimatorSpec::reach`] of the evaluation point can
//! change an estimate, so a Monte Carlo draw only needs the positions those
//! rows land on. Each draw places the `m` nearby rows with a partial
//! Fisher–Yates shuffle of the `n` positions, which costs `O(m)`.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{substream, Purpose};
use crate::smooth::{estimate_window, EstimateResult, EstimatorSpec, EvalPoint, Obs, PointSide};
use crate::split::Problem;

/// Largest pooled size for which all `n!` orderings may be enumerated.
pub const MAX_EXHAUSTIVE_N: usize = 10;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "type")]
pub enum PermMode {
    Exhaustive,
    /// `draws` uniform permutations, sampled with replacement.
    MonteCarlo { draws: usize },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TiePolicy {
    /// Reject with probability `a` on the tie branch.
    Randomized,
    /// Never reject on the tie branch.
    Conservative,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PermPlan {
    pub mode: PermMode,
    pub seed: u64,
    pub ties: TiePolicy,
    /// Spread draws over the rayon pool. Results do not depend on it.
    pub parallel: bool,
}

impl PermPlan {
    pub fn monte_carlo(draws: usize, seed: u64) -> PermPlan {
        PermPlan { mode: PermMode::MonteCarlo { draws }, seed, ties: TiePolicy::Randomized, parallel: true }
    }

    pub fn exhaustive() -> PermPlan {
        PermPlan { mode: PermMode::Exhaustive, seed: 0, ties: TiePolicy::Randomized, parallel: false }
    }

    pub fn serial(mut self) -> Self {
        self.parallel = false;
        self
    }

    pub fn with_ties(mut self, ties: TiePolicy) -> Self {
        self.ties = ties;
        self
    }

    /// Size of the reference set the decision is based on.
    pub fn reference_size(&self, n: usize) -> Result<usize> {
        match self.mode {
            PermMode::MonteCarlo { draws } => Ok(draws + 1),
            PermMode::Exhaustive => {
                if n > MAX_EXHAUSTIVE_N {
                    return Err(Error::InvalidInput(format!(
                        "exhaustive enumeration needs n <= {MAX_EXHAUSTIVE_N}, got {n}"
                    )));
                }
                Ok((1..=n).product())
            }
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StatKind {
    Nonstudentized,
    Studentized,
}

/// Both statistics for one assignment of rows to samples.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StatValue {
    /// `√(nh) (θ̂₁ − θ̂₂)`.
    pub t_n: f64,
    /// `T_n / σ̂_n`; `None` when `σ̂_n = 0` but `T_n ≠ 0`.
    pub s_n: Option<f64>,
    /// `σ̂²_n = (n/n₁) ξ̂₁² + (n/n₂) ξ̂₂²`.
    pub sigma_hat2: f64,
    pub est1: EstimateResult,
    pub est2: EstimateResult,
}

impl StatValue {
    pub fn from_estimates(est1: EstimateResult, est2: EstimateResult, n1: usize, n2: usize, h: f64) -> StatValue {
        let n = (n1 + n2) as f64;
        let mut diff = est1.theta - est2.theta;
        // Differences at rounding level (e.g. fits of constant data) are zero.
        if diff.abs() <= 8.0 * f64::EPSILON * est1.theta.abs().max(est2.theta.abs()) {
            diff = 0.0;
        }
        let t_n = (n * h).sqrt() * diff;
        let sigma_hat2 = n / n1 as f64 * est1.xi2_hat + n / n2 as f64 * est2.xi2_hat;
        let s_n = if sigma_hat2 > 0.0 {
            Some(t_n / sigma_hat2.sqrt())
        } else if t_n == 0.0 {
            Some(0.0)
        } else {
            None
        };
        StatValue { t_n, s_n, sigma_hat2, est1, est2 }
    }

    pub fn get(&self, kind: StatKind) -> Result<f64> {
        match kind {
            StatKind::Nonstudentized => Ok(self.t_n),
            StatKind::Studentized => self.s_n.ok_or(Error::DegenerateVariance),
        }
    }
}

/// Rows near the evaluation point, sorted, with their pooled positions.
pub(crate) struct Prepared<'a> {
    point: EvalPoint,
    h: f64,
    spec: &'a EstimatorSpec,
    n: usize,
    n1: usize,
    rows: Vec<Obs>,
    origin: Vec<usize>,
}

#[derive(Default)]
pub(crate) struct Scratch {
    pos: Vec<usize>,
    swaps: Vec<usize>,
    s1: Vec<Obs>,
    s2: Vec<Obs>,
}

impl<'a> Prepared<'a> {
    pub fn new(p: &Problem, h: f64, spec: &'a EstimatorSpec) -> Result<Prepared<'a>> {
        p.check_family(&spec.family)?;
        let point = p.eval_point();
        let reach = spec.reach(h, p.n1.max(p.n2()));
        let mut idx: Vec<usize> = (0..p.n())
            .filter(|&i| {
                let d = p.obs[i].x - point.x;
                d.abs() <= reach && !(point.side == PointSide::BoundaryRight && d < 0.0)
            })
            .collect();
        idx.sort_by(|&a, &b| crate::smooth::cmp_obs(&p.obs[a], &p.obs[b]).then(a.cmp(&b)));
        Ok(Prepared {
            point,
            h,
            spec,
            n: p.n(),
            n1: p.n1,
            rows: idx.iter().map(|&i| p.obs[i]).collect(),
            origin: idx,
        })
    }

    pub fn scratch(&self) -> Scratch {
        Scratch { pos: (0..self.n).collect(), ..Scratch::default() }
    }

    fn evaluate(&self, scratch: &mut Scratch, in_first: impl Fn(usize) -> bool) -> Result<StatValue> {
        scratch.s1.clear();
        scratch.s2.clear();
        for (j, o) in self.rows.iter().enumerate() {
            if in_first(j) {
                scratch.s1.push(*o);
            } else {
                scratch.s2.push(*o);
            }
        }
        let n2 = self.n - self.n1;
        let e1 = estimate_window(&scratch.s1, self.n1, self.point, self.h, self.spec)?;
        let e2 = estimate_window(&scratch.s2, n2, self.point, self.h, self.spec)?;
        Ok(StatValue::from_estimates(e1, e2, self.n1, n2, self.h))
    }

    pub fn observed(&self, scratch: &mut Scratch) -> Result<StatValue> {
        let n1 = self.n1;
        let origin = &self.origin;
        self.evaluate(scratch, |j| origin[j] < n1)
    }

    /// Statistic under one uniformly drawn permutation.
    pub fn random_draw<R: Rng>(&self, scratch: &mut Scratch, rng: &mut R) -> Result<StatValue> {
        let m = self.rows.len();
        scratch.swaps.clear();
        for j in 0..m {
            let k = rng.random_range(j..self.n);
            scratch.pos.swap(j, k);
            scratch.swaps.push(k);
        }
        let n1 = self.n1;
        let out = {
            let pos = std::mem::take(&mut scratch.pos);
            let r = self.evaluate(scratch, |j| pos[j] < n1);
            scratch.pos = pos;
            r
        };
        for j in (0..m).rev() {
            let k = scratch.swaps[j];
            scratch.pos.swap(j, k);
        }
        out
    }

    /// Statistic when pooled row `i` sits at position `perm[i]`.
    fn at_positions(&self, scratch: &mut Scratch, perm: &[usize]) -> Result<StatValue> {
        let n1 = self.n1;
        let origin = &self.origin;
        self.evaluate(scratch, |j| perm[origin[j]] < n1)
    }
}

/// Statistic of the observed labelling.
pub fn statistic(p: &Problem, h: f64, spec: &EstimatorSpec) -> Result<StatValue> {
    let prep = Prepared::new(p, h, spec)?;
    let mut scratch = prep.scratch();
    prep.observed(&mut scratch)
}

/// Permutation statistics of both kinds, in draw order.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PermDraws {
    pub t: Vec<f64>,
    /// Empty unless studentized statistics were requested.
    pub s: Vec<f64>,
    /// Estimator failures that were redrawn.
    pub failures: usize,
}

/// Recompute the statistic under the plan's permutations.
///
/// Monte Carlo draws exclude the observed labelling; exhaustive mode returns
/// all `n!` orderings, the identity first. A Monte Carlo draw whose
/// estimate fails is redrawn from a fresh substream; more than `10 B`
/// failures abort.
pub fn perm_draws(p: &Problem, plan: &PermPlan, h: f64, spec: &EstimatorSpec, studentized: bool) -> Result<PermDraws> {
    let prep = Prepared::new(p, h, spec)?;
    draws_prepared(&prep, plan, studentized)
}

fn is_retryable(e: &Error) -> bool {
    matches!(
        e,
        Error::EmptyWindow { .. }
            | Error::SingularFit { .. }
            | Error::BiasUnstable { .. }
            | Error::VarianceUnstable { .. }
            | Error::DegenerateVariance
    )
}

fn pick(v: StatValue, studentized: bool) -> Result<(f64, f64)> {
    if studentized {
        Ok((v.t_n, v.s_n.ok_or(Error::DegenerateVariance)?))
    } else {
        Ok((v.t_n, f64::NAN))
    }
}

pub(crate) fn draws_prepared(prep: &Prepared<'_>, plan: &PermPlan, studentized: bool) -> Result<PermDraws> {
    let n = prep.n;
    let total = plan.reference_size(n)?;
    match plan.mode {
        PermMode::Exhaustive => {
            let mut scratch = prep.scratch();
            let mut out = PermDraws { t: Vec::with_capacity(total), s: Vec::new(), failures: 0 };
            let mut perm: Vec<usize> = (0..n).collect();
            let mut push = |perm: &[usize], scratch: &mut Scratch| -> Result<()> {
                let (t, s) = pick(prep.at_positions(scratch, perm)?, studentized)?;
                out.t.push(t);
                if studentized {
                    out.s.push(s);
                }
                Ok(())
            };
            push(&perm, &mut scratch)?;
            // Heap's algorithm, iterative form.
            let mut c = vec![0usize; n];
            let mut i = 0;
            while i < n {
                if c[i] < i {
                    if i % 2 == 0 {
                        perm.swap(0, i);
                    } else {
                        perm.swap(c[i], i);
                    }
                    push(&perm, &mut scratch)?;
                    c[i] += 1;
                    i = 0;
                } else {
                    c[i] = 0;
                    i += 1;
                }
            }
            Ok(out)
        }
        PermMode::MonteCarlo { draws } => {
            let cap = 10 * draws.max(1);
            let one = |scratch: &mut Scratch, i: usize| -> Result<((f64, f64), usize)> {
                let mut failures = 0;
                loop {
                    let mut rng = substream(plan.seed, Purpose::Permutation, failures as u64, i as u64);
                    match prep.random_draw(scratch, &mut rng).and_then(|v| pick(v, studentized)) {
                        Ok(v) => return Ok((v, failures)),
                        Err(e) if is_retryable(&e) => {
                            failures += 1;
                            if failures > cap {
                                return Err(Error::RetryCapExceeded { what: "permutation draws", failures, cap });
                            }
                        }
                        Err(e) => return Err(e),
                    }
                }
            };
            let results: Vec<Result<((f64, f64), usize)>> = if plan.parallel {
                (0..draws).into_par_iter().map_init(|| prep.scratch(), |s, i| one(s, i)).collect()
            } else {
                let mut s = prep.scratch();
                (0..draws).map(|i| one(&mut s, i)).collect()
            };
            let mut out = PermDraws { t: Vec::with_capacity(draws), s: Vec::new(), failures: 0 };
            for r in results {
                let ((t, s), f) = r?;
                out.t.push(t);
                if studentized {
                    out.s.push(s);
                }
                out.failures += f;
            }
            if out.failures > cap {
                return Err(Error::RetryCapExceeded { what: "permutation draws", failures: out.failures, cap });
            }
            Ok(out)
        }
    }
}

/// Recomputed statistics of one kind; see [`perm_draws`].
pub fn perm_statistics(p: &Problem, plan: &PermPlan, h: f64, spec: &EstimatorSpec, kind: StatKind) -> Result<Vec<f64>> {
    let studentized = kind == StatKind::Studentized;
    let d = perm_draws(p, plan, h, spec, studentized)?;
    Ok(if studentized { d.s } else { d.t })
}

/// Empirical CDF of `draws` at `t`.
pub fn perm_cdf(draws: &[f64], t: f64) -> f64 {
    if draws.is_empty() {
        return f64::NAN;
    }
    draws.iter().filter(|&&v| v <= t).count() as f64 / draws.len() as f64
}

/// Outcome of the randomized test function for one observed value.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Decision {
    /// Rejection probability: 1, `a_frac` (tie branch) or 0.
    pub phi: f64,
    pub a_frac: f64,
    /// `T^(k⁻)`; `None` when `k⁻ = 0`.
    pub crit_lo: Option<f64>,
    /// `T^(k⁺)`.
    pub crit_hi: f64,
    pub k_lo: usize,
    pub k_hi: usize,
}

/// A sorted reference set of statistics.
#[derive(Clone, Debug, PartialEq)]
pub struct Reference {
    sorted: Vec<f64>,
}

impl Reference {
    pub fn new(mut values: Vec<f64>) -> Result<Reference> {
        if values.is_empty() {
            return Err(Error::InvalidInput("empty reference set".into()));
        }
        if values.iter().any(|v| v.is_nan()) {
            return Err(Error::InvalidInput("reference set contains NaN".into()));
        }
        values.sort_by(f64::total_cmp);
        Ok(Reference { sorted: values })
    }

    pub fn len(&self) -> usize {
        self.sorted.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sorted.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.sorted
    }

    fn count_lt(&self, t: f64) -> usize {
        self.sorted.partition_point(|&v| v < t)
    }

    fn count_le(&self, t: f64) -> usize {
        self.sorted.partition_point(|&v| v <= t)
    }

    /// Critical values and the tie fraction `a` at level `alpha`.
    ///
    /// With `k⁻ = ⌊Nα/2⌋` the tie fraction `(αN − M⁺ − M⁻)/M⁰` can exceed
    /// one when few values tie at the critical order statistics; `k⁻` is
    /// then moved inward until it does not, which keeps
    /// `M⁺ + M⁻ + a M⁰ = αN` and therefore the exact size. Each step keeps
    /// `a > 0`, and at `k⁻ = ⌊N/2⌋` every value is rejected or tied, so
    /// `a ≤ 1` there.
    pub fn critical(&self, alpha: f64) -> Decision {
        let n = self.sorted.len();
        let an = alpha * n as f64;
        let mut k = (an / 2.0 + 1e-9).floor() as usize;
        loop {
            let k_hi = n - k;
            let hi = self.sorted[k_hi - 1];
            let lo = if k == 0 { None } else { Some(self.sorted[k - 1]) };
            let m_plus = n - self.count_le(hi);
            let m_minus = lo.map_or(0, |l| self.count_lt(l));
            let mut m_zero = self.count_le(hi) - self.count_lt(hi);
            if let Some(l) = lo {
                if l != hi {
                    m_zero += self.count_le(l) - self.count_lt(l);
                }
            }
            let a = (an - m_plus as f64 - m_minus as f64) / m_zero as f64;
            if a <= 1.0 + 1e-12 || 2 * (k + 1) > n {
                return Decision { phi: 0.0, a_frac: a.clamp(0.0, 1.0), crit_lo: lo, crit_hi: hi, k_lo: k, k_hi };
            }
            k += 1;
        }
    }

    /// Randomized decision for observed value `t`.
    pub fn decide(&self, t: f64, alpha: f64, ties: TiePolicy) -> Decision {
        let mut d = self.critical(alpha);
        let below = d.crit_lo.is_some_and(|l| t < l);
        let on_tie = t == d.crit_hi || d.crit_lo == Some(t);
        d.phi = if t > d.crit_hi || below {
            1.0
        } else if on_tie {
            match ties {
                TiePolicy::Randomized => d.a_frac,
                TiePolicy::Conservative => 0.0,
            }
        } else {
            0.0
        };
        d
    }

    /// `2 min(#{≤ t}, #{≥ t}) / N`, capped at one.
    pub fn p_value(&self, t: f64) -> f64 {
        let n = self.sorted.len();
        let le = self.count_le(t);
        let ge = n - self.count_lt(t);
        (2.0 * le.min(ge) as f64 / n as f64).min(1.0)
    }

    pub fn cdf(&self, t: f64) -> f64 {
        self.count_le(t) as f64 / self.sorted.len() as f64
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TestReport {
    pub kind: StatKind,
    pub t_n: f64,
    /// `None` when the studentized statistic is undefined (nonstudentized tests only).
    pub s_n: Option<f64>,
    /// The statistic the decision is based on.
    pub statistic: f64,
    pub sigma_hat2: f64,
    pub alpha: f64,
    pub crit_lo: Option<f64>,
    pub crit_hi: f64,
    pub phi: f64,
    pub a_frac: f64,
    pub p_value: f64,
    pub ties: TiePolicy,
    pub failures: usize,
    pub est1: EstimateResult,
    pub est2: EstimateResult,
    /// Reference set: the observed statistic first, then the draws.
    pub perm_draws: Vec<f64>,
}

impl TestReport {
    /// Build a report from the observed statistic and recomputed draws.
    /// Monte Carlo draws are joined with the observed value; exhaustive
    /// draws already contain it.
    pub fn assemble(
        observed: &StatValue,
        kind: StatKind,
        draws: &[f64],
        include_observed: bool,
        alpha: f64,
        ties: TiePolicy,
        failures: usize,
    ) -> Result<TestReport> {
        check_alpha(alpha)?;
        let stat = observed.get(kind)?;
        let mut reference = Vec::with_capacity(draws.len() + 1);
        if include_observed {
            reference.push(stat);
        }
        reference.extend_from_slice(draws);
        let r = Reference::new(reference.clone())?;
        let d = r.decide(stat, alpha, ties);
        Ok(TestReport {
            kind,
            t_n: observed.t_n,
            s_n: observed.s_n,
            statistic: stat,
            sigma_hat2: observed.sigma_hat2,
            alpha,
            crit_lo: d.crit_lo,
            crit_hi: d.crit_hi,
            phi: d.phi,
            a_frac: d.a_frac,
            p_value: r.p_value(stat),
            ties,
            failures,
            est1: observed.est1,
            est2: observed.est2,
            perm_draws: reference,
        })
    }

    pub fn rejects(&self, u: f64) -> bool {
        u < self.phi
    }
}

pub(crate) fn check_alpha(alpha: f64) -> Result<()> {
    if alpha > 0.0 && alpha < 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidInput(format!("alpha must lie in (0, 1), got {alpha}")))
    }
}

/// Permutation test of equal parameters.
pub fn test(p: &Problem, plan: &PermPlan, h: f64, spec: &EstimatorSpec, kind: StatKind, alpha: f64) -> Result<TestReport> {
    check_alpha(alpha)?;
    let prep = Prepared::new(p, h, spec)?;
    let observed = prep.observed(&mut prep.scratch())?;
    let studentized = kind == StatKind::Studentized;
    observed.get(kind)?;
    let d = draws_prepared(&prep, plan, studentized)?;
    let draws = if studentized { &d.s } else { &d.t };
    let mc = matches!(plan.mode, PermMode::MonteCarlo { .. });
    TestReport::assemble(&observed, kind, draws, mc, alpha, plan.ties, d.failures)
}

/// Nonstudentized and studentized tests from one set of permutations.
pub fn test_both(p: &Problem, plan: &PermPlan, h: f64, spec: &EstimatorSpec, alpha: f64) -> Result<(TestReport, TestReport)> {
    check_alpha(alpha)?;
    let prep = Prepared::new(p, h, spec)?;
    let observed = prep.observed(&mut prep.scratch())?;
    observed.get(StatKind::Studentized)?;
    let d = draws_prepared(&prep, plan, true)?;
    let mc = matches!(plan.mode, PermMode::MonteCarlo { .. });
    let nsp = TestReport::assemble(&observed, StatKind::Nonstudentized, &d.t, mc, alpha, plan.ties, d.failures)?;
    let sp = TestReport::assemble(&observed, StatKind::Studentized, &d.s, mc, alpha, plan.ties, d.failures)?;
    Ok((nsp, sp))
}
