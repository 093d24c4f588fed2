//! Comparator tests for the same studentized statistic: the normal
//! approximation, a wild bootstrap and subsampling.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};
use crate::permute::{check_alpha, statistic, StatValue};
use crate::rng::{substream, Purpose};
use crate::smooth::{estimate_window, lpr_fit, EstimatorSpec, EvalPoint, Family, Obs, PointSide};
use crate::split::Problem;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "type")]
pub enum Method {
    T,
    WildBootstrap { draws: usize },
    Subsample { draws: usize, b1: usize, b2: usize },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComparatorReport {
    pub method: Method,
    pub statistic: f64,
    pub p_value: f64,
    pub alpha: f64,
    pub reject: bool,
    /// Resampled studentized statistics; empty for the t-test.
    pub draws: Vec<f64>,
    pub failures: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CompareConfig {
    /// Wild bootstrap pilot bandwidth is `pilot_factor * h`.
    pub pilot_factor: f64,
    /// Total subsample size; `⌈n^{2/3}⌉` when `None`.
    pub subsample_size: Option<usize>,
    /// Smallest per-sample subsample size.
    pub min_subsample: usize,
}

impl Default for CompareConfig {
    fn default() -> Self {
        CompareConfig { pilot_factor: 1.3, subsample_size: None, min_subsample: 10 }
    }
}

/// Two-sided normal test: `p = 2(1 − Φ(|S|))`.
pub fn t_test(s_n: f64, alpha: f64) -> Result<ComparatorReport> {
    check_alpha(alpha)?;
    if !s_n.is_finite() {
        return Err(Error::InvalidInput(format!("statistic must be finite, got {s_n}")));
    }
    let z = Normal::standard();
    let p_value = (2.0 * z.sf(s_n.abs())).min(1.0);
    let crit = z.inverse_cdf(1.0 - alpha / 2.0);
    Ok(ComparatorReport {
        method: Method::T,
        statistic: s_n,
        p_value,
        alpha,
        reject: s_n.abs() > crit,
        draws: Vec::new(),
        failures: 0,
    })
}

fn resample_report(method: Method, s_n: f64, draws: Vec<f64>, alpha: f64, failures: usize) -> ComparatorReport {
    let exceed = draws.iter().filter(|d| d.abs() >= s_n.abs()).count();
    let p_value = if draws.is_empty() { 1.0 } else { exceed as f64 / draws.len() as f64 };
    ComparatorReport { method, statistic: s_n, p_value, alpha, reject: p_value < alpha, draws, failures }
}

fn retryable(e: &Error) -> bool {
    matches!(
        e,
        Error::EmptyWindow { .. }
            | Error::SingularFit { .. }
            | Error::BiasUnstable { .. }
            | Error::VarianceUnstable { .. }
            | Error::DegenerateVariance
    )
}

/// Run `draws` resampling replicates with per-draw substreams and redraws.
fn replicate<F>(draws: usize, seed: u64, purpose: Purpose, parallel: bool, what: &'static str, f: F) -> Result<(Vec<f64>, usize)>
where
    F: Fn(&mut rand_chacha::ChaCha8Rng) -> Result<f64> + Sync,
{
    let cap = 10 * draws.max(1);
    let one = |i: usize| -> Result<(f64, usize)> {
        let mut failures = 0;
        loop {
            let mut rng = substream(seed, purpose, failures as u64, i as u64);
            match f(&mut rng) {
                Ok(v) => return Ok((v, failures)),
                Err(e) if retryable(&e) => {
                    failures += 1;
                    if failures > cap {
                        return Err(Error::RetryCapExceeded { what, failures, cap });
                    }
                }
                Err(e) => return Err(e),
            }
        }
    };
    let results: Vec<Result<(f64, usize)>> =
        if parallel { (0..draws).into_par_iter().map(one).collect() } else { (0..draws).map(one).collect() };
    let mut out = Vec::with_capacity(draws);
    let mut failures = 0;
    for r in results {
        let (v, f) = r?;
        out.push(v);
        failures += f;
    }
    if failures > cap {
        return Err(Error::RetryCapExceeded { what, failures, cap });
    }
    Ok((out, failures))
}

/// Rows of one sample that can influence estimates at bandwidth `h`.
fn near_rows(rows: &[Obs], point: EvalPoint, reach: f64) -> Vec<Obs> {
    rows.iter()
        .copied()
        .filter(|o| {
            let d = o.x - point.x;
            d.abs() <= reach && !(point.side == PointSide::BoundaryRight && d < 0.0)
        })
        .collect()
}

struct WildSample {
    /// Rows near the point with their pilot fits and residuals for y and d.
    rows: Vec<Obs>,
    fit_y: Vec<f64>,
    res_y: Vec<f64>,
    fit_d: Vec<f64>,
    res_d: Vec<f64>,
    center_y: f64,
    center_d: f64,
    n: usize,
}

fn pilot_fit(all: &[Obs], x: f64, g: f64, spec: &EstimatorSpec, resp: fn(&Obs) -> f64) -> Result<f64> {
    let view: Vec<Obs> = all.iter().map(|o| Obs::new(o.x, resp(o))).collect();
    Ok(lpr_fit(&view, EvalPoint::interior(x), g, &spec.kernel, 1)?.coef[0])
}

fn wild_sample(all: &[Obs], point: EvalPoint, h: f64, g: f64, spec: &EstimatorSpec, ratio: bool) -> Result<WildSample> {
    let reach = spec.reach(h, all.len());
    let rows = near_rows(all, point, reach);
    // Pilot fits use only this sample's rows on the admissible side.
    let side_rows: Vec<Obs> = if point.side == PointSide::BoundaryRight {
        all.iter().copied().filter(|o| o.x >= point.x).collect()
    } else {
        all.to_vec()
    };
    let fits = |resp: fn(&Obs) -> f64| -> Result<(Vec<f64>, Vec<f64>, f64)> {
        let mut fit = Vec::with_capacity(rows.len());
        let mut res = Vec::with_capacity(rows.len());
        for o in &rows {
            let m = pilot_fit(&side_rows, o.x, g, spec, resp)?;
            fit.push(m);
            res.push(resp(o) - m);
        }
        let center = pilot_fit(&side_rows, point.x, g, spec, resp)?;
        Ok((fit, res, center))
    };
    let (fit_y, res_y, center_y) = fits(|o| o.y)?;
    let (fit_d, res_d, center_d) = if ratio { fits(|o| o.d)? } else { (Vec::new(), Vec::new(), 1.0) };
    Ok(WildSample { rows, fit_y, res_y, fit_d, res_d, center_y, center_d, n: all.len() })
}

/// Wild bootstrap with Rademacher weights around a pilot local-linear fit at
/// bandwidth `pilot_factor * h`, with the null imposed at the pooled value.
/// Mean-type problems only.
#[allow(clippy::too_many_arguments)]
pub fn wild_bootstrap(
    p: &Problem,
    draws: usize,
    h: f64,
    spec: &EstimatorSpec,
    seed: u64,
    alpha: f64,
    config: &CompareConfig,
    parallel: bool,
) -> Result<ComparatorReport> {
    check_alpha(alpha)?;
    if !spec.family.is_mean() {
        return Err(Error::Unsupported("the wild bootstrap needs a conditional-mean target".into()));
    }
    let observed = statistic(p, h, spec)?;
    let s_n = observed.get(crate::permute::StatKind::Studentized)?;
    let point = p.eval_point();
    let g = config.pilot_factor * h;
    let ratio = matches!(spec.family, Family::MeanRatio { .. });
    let w1 = wild_sample(p.sample1(), point, h, g, spec, ratio)?;
    let w2 = wild_sample(p.sample2(), point, h, g, spec, ratio)?;
    let (n1, n2) = (w1.n, w2.n);
    // Pooled target: the common value both bootstrap populations share.
    let r1 = w1.center_y / w1.center_d;
    let r2 = w2.center_y / w2.center_d;
    let pooled = (n1 as f64 * r1 + n2 as f64 * r2) / (n1 + n2) as f64;

    let make = |w: &WildSample, rng: &mut rand_chacha::ChaCha8Rng, buf: &mut Vec<Obs>| {
        buf.clear();
        let shift = pooled * w.center_d - w.center_y;
        for (i, o) in w.rows.iter().enumerate() {
            let s: f64 = if rng.random::<bool>() { 1.0 } else { -1.0 };
            let y = w.fit_y[i] + shift + s * w.res_y[i];
            let d = if ratio { w.fit_d[i] + s * w.res_d[i] } else { o.d };
            buf.push(Obs { x: o.x, y, d });
        }
    };
    let (draws_v, failures) = replicate(draws, seed, Purpose::WildBootstrap, parallel, "wild bootstrap", |rng| {
        let (mut b1, mut b2) = (Vec::new(), Vec::new());
        make(&w1, rng, &mut b1);
        make(&w2, rng, &mut b2);
        let e1 = estimate_window(&b1, n1, point, h, spec)?;
        let e2 = estimate_window(&b2, n2, point, h, spec)?;
        StatValue::from_estimates(e1, e2, n1, n2, h).get(crate::permute::StatKind::Studentized)
    })?;
    Ok(resample_report(Method::WildBootstrap { draws }, s_n, draws_v, alpha, failures))
}

/// Per-sample subsample sizes for a total of `b`.
pub fn subsample_sizes(n1: usize, n2: usize, b: usize, min_size: usize) -> Result<(usize, usize)> {
    let n = n1 + n2;
    if b >= n {
        return Err(Error::InvalidInput(format!("subsample size {b} must be below n = {n}")));
    }
    let split = |nk: usize| -> usize {
        let raw = (b as f64 * nk as f64 / n as f64).round() as usize;
        raw.max(min_size).min(nk.saturating_sub(1))
    };
    let (b1, b2) = (split(n1), split(n2));
    if b1 == 0 || b2 == 0 {
        return Err(Error::DegenerateSubsample(format!("sample sizes ({n1}, {n2}) leave no room for subsamples")));
    }
    Ok((b1, b2))
}

/// Subsampling without replacement, `(b₁, b₂)` proportional to `(n₁, n₂)`,
/// bandwidth `h (n/b)^{1/5}` and the statistic centred at the full-sample
/// estimate.
#[allow(clippy::too_many_arguments)]
pub fn subsample(
    p: &Problem,
    draws: usize,
    h: f64,
    spec: &EstimatorSpec,
    seed: u64,
    alpha: f64,
    config: &CompareConfig,
    parallel: bool,
) -> Result<ComparatorReport> {
    check_alpha(alpha)?;
    let observed = statistic(p, h, spec)?;
    let s_n = observed.get(crate::permute::StatKind::Studentized)?;
    let (n1, n2) = (p.n1, p.n2());
    let n = n1 + n2;
    let b = config.subsample_size.unwrap_or_else(|| (n as f64).powf(2.0 / 3.0).ceil() as usize);
    let (b1, b2) = subsample_sizes(n1, n2, b, config.min_subsample)?;
    let bt = b1 + b2;
    let hb = h * (n as f64 / bt as f64).powf(0.2);
    let point = p.eval_point();
    let center = observed.est1.theta - observed.est2.theta;
    let reach = spec.reach(hb, b1.max(b2));
    let near1 = near_rows(p.sample1(), point, reach);
    let near2 = near_rows(p.sample2(), point, reach);

    // A uniform b-subset of n rows, restricted to the m nearby rows: row j
    // is kept iff its shuffled position falls below b.
    let pick = |near: &[Obs], nk: usize, bk: usize, rng: &mut rand_chacha::ChaCha8Rng| -> Vec<Obs> {
        let mut chosen: std::collections::HashMap<usize, usize> = std::collections::HashMap::new();
        let mut out = Vec::new();
        for (j, o) in near.iter().enumerate() {
            let k = rng.random_range(j..nk);
            let at_k = *chosen.get(&k).unwrap_or(&k);
            let at_j = *chosen.get(&j).unwrap_or(&j);
            chosen.insert(k, at_j);
            if at_k < bk {
                out.push(*o);
            }
        }
        out
    };
    let result = replicate(draws, seed, Purpose::Subsample, parallel, "subsample", |rng| {
        let s1 = pick(&near1, n1, b1, rng);
        let s2 = pick(&near2, n2, b2, rng);
        let e1 = estimate_window(&s1, b1, point, hb, spec)?;
        let e2 = estimate_window(&s2, b2, point, hb, spec)?;
        let v = StatValue::from_estimates(e1, e2, b1, b2, hb);
        if !(v.sigma_hat2 > 0.0) {
            return Err(Error::DegenerateVariance);
        }
        let t = (bt as f64 * hb).sqrt() * (e1.theta - e2.theta - center);
        Ok(t / v.sigma_hat2.sqrt())
    });
    let (draws_v, failures) = match result {
        Err(Error::RetryCapExceeded { failures, .. }) => {
            return Err(Error::DegenerateSubsample(format!(
                "estimation failed {failures} times on subsamples of sizes ({b1}, {b2})"
            )))
        }
        other => other?,
    };
    Ok(resample_report(Method::Subsample { draws, b1, b2 }, s_n, draws_v, alpha, failures))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::split::ProblemKind;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn problem(n1: usize, n2: usize, sd1: f64, sd2: f64, seed: u64) -> Problem {
        let mut r = ChaCha8Rng::seed_from_u64(seed);
        let mut draw = |n: usize, sd: f64| -> Vec<Obs> {
            (0..n)
                .map(|_| {
                    let x: f64 = r.random();
                    let e: f64 = StandardNormal.sample(&mut r);
                    Obs::new(x, sd * e)
                })
                .collect()
        };
        let s1 = draw(n1, sd1);
        let s2 = draw(n2, sd2);
        Problem::from_samples(ProblemKind::TwoSampleMean { point: EvalPoint::interior(0.5) }, s1, s2).unwrap()
    }

    #[test]
    fn t_test_values() {
        assert_eq!(t_test(0.0, 0.05).unwrap().p_value, 1.0);
        let r = t_test(3.0, 0.05).unwrap();
        assert!((r.p_value - 0.0026997960632601866).abs() < 1e-12);
        assert!(r.reject);
        let edge = t_test(1.959964, 0.05).unwrap();
        assert!((edge.p_value - 0.05).abs() < 1e-6);
        assert!(!t_test(1.9599, 0.05).unwrap().reject);
        assert!(t_test(1.9600, 0.05).unwrap().reject);
    }

    #[test]
    fn wild_bootstrap_constant_and_determinism() {
        let spec = EstimatorSpec::new(Family::LprMean { order: 1 });
        let mut p = problem(100, 200, 1.0, 1.0, 1);
        let cfg = CompareConfig::default();
        let r = wild_bootstrap(&p, 49, 0.3, &spec, 5, 0.05, &cfg, true).unwrap();
        let again = wild_bootstrap(&p, 49, 0.3, &spec, 5, 0.05, &cfg, false).unwrap();
        assert_eq!(r, again);
        assert!((0.0..=1.0).contains(&r.p_value));
        for o in &mut p.obs {
            o.y = 3.0;
        }
        let c = wild_bootstrap(&p, 49, 0.3, &spec, 5, 0.05, &cfg, true).unwrap();
        assert!(c.draws.iter().all(|&d| d == 0.0));
        assert_eq!(c.p_value, 1.0);
    }

    #[test]
    fn wild_bootstrap_rejects_quantiles() {
        let p = problem(50, 50, 1.0, 1.0, 2);
        let spec = EstimatorSpec::new(Family::LocalQuantile { chi: 0.5 });
        assert!(wild_bootstrap(&p, 9, 0.3, &spec, 1, 0.05, &CompareConfig::default(), false).is_err());
    }

    #[test]
    fn subsample_guards_and_determinism() {
        let spec = EstimatorSpec::new(Family::LprMean { order: 1 });
        let p = problem(200, 400, 1.0, 1.0, 3);
        let mut cfg = CompareConfig::default();
        let a = subsample(&p, 49, 0.3, &spec, 5, 0.05, &cfg, true).unwrap();
        let b = subsample(&p, 49, 0.3, &spec, 5, 0.05, &cfg, false).unwrap();
        assert_eq!(a, b);
        match a.method {
            Method::Subsample { b1, b2, .. } => {
                assert_eq!(b1 + b2, 72);
                assert_eq!((b1, b2), (24, 48));
            }
            _ => unreachable!(),
        }
        cfg.subsample_size = Some(600);
        assert!(matches!(subsample(&p, 9, 0.3, &spec, 5, 0.05, &cfg, false), Err(Error::InvalidInput(_))));
    }

    #[test]
    fn subsample_sizes_floor_and_cap() {
        assert_eq!(subsample_sizes(40, 1960, 159, 10).unwrap(), (10, 156));
        assert_eq!(subsample_sizes(5, 100, 50, 10).unwrap(), (4, 48));
    }

    #[test]
    fn rademacher_moments() {
        let mut r = ChaCha8Rng::seed_from_u64(1);
        let w: Vec<f64> = (0..100_000).map(|_| if r.random::<bool>() { 1.0 } else { -1.0 }).collect();
        assert!(w.iter().all(|v| v * v == 1.0));
        let mean = w.iter().sum::<f64>() / w.len() as f64;
        assert!(mean.abs() < 0.01);
    }
}
