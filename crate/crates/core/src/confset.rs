//! Confidence sets from inverting the studentized permutation test over the
//! parameter value `δ`.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernel::Side;
use crate::permute::{self, check_alpha, PermPlan, Reference, StatKind};
use crate::rng::{substream, Purpose};
use crate::smooth::EstimatorSpec;
use crate::split::{apply_delta, Problem, ProblemKind};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InvertMode {
    /// Transform sample 1 by `ψ_δ` and rerun the test.
    DataTransform,
    /// Shift the observed statistic by `√(nh) δ / σ̂_n` against the
    /// reference set at the null value. Location parameters only.
    ShiftStat,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    /// Grid half-width in standard errors around the estimate.
    pub half_width: f64,
    pub points: usize,
    /// Bisection tolerance as a fraction of one standard error.
    pub rel_tol: f64,
}

impl Default for GridSpec {
    fn default() -> Self {
        GridSpec { half_width: 6.0, points: 41, rel_tol: 0.01 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "type", content = "a")]
pub enum Inclusion {
    In,
    Out,
    Randomized(f64),
}

impl Inclusion {
    fn from_phi(phi: f64) -> Inclusion {
        if phi <= 0.0 {
            Inclusion::In
        } else if phi >= 1.0 {
            Inclusion::Out
        } else {
            Inclusion::Randomized(phi)
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConfidenceSet {
    pub level: f64,
    pub mode: InvertMode,
    /// Evaluated `δ` values in increasing order, including bisection points.
    pub grid: Vec<f64>,
    pub phi: Vec<f64>,
    pub include: Vec<Inclusion>,
    /// The uniform `U` defining the randomized set `{δ : U > φ_δ}`.
    pub u: f64,
    /// Hull of the conservative set `{δ : φ_δ < 1}`.
    pub interval_hull: Option<(f64, f64)>,
    /// Hull of the randomized set.
    pub randomized_hull: Option<(f64, f64)>,
    /// Point estimate the grid is centred on.
    pub estimate: f64,
    /// True when no grid point was rejected.
    pub full_grid: bool,
    /// True when the conservative set is not a single run of grid points.
    pub non_interval: bool,
}

impl ConfidenceSet {
    pub fn randomized_contains(&self, i: usize) -> bool {
        self.u > self.phi[i]
    }

    pub fn conservative_contains(&self, i: usize) -> bool {
        self.phi[i] < 1.0
    }
}

/// Rejection probability `φ_δ` of the studentized test at parameter value `delta`.
pub fn phi_at(p: &Problem, plan: &PermPlan, h: f64, spec: &EstimatorSpec, alpha: f64, delta: f64) -> Result<f64> {
    let q = apply_delta(p, delta)?;
    Ok(permute::test(&q, plan, h, spec, StatKind::Studentized, alpha)?.phi)
}

/// Point estimate of the parameter and a standard error on the grid's scale
/// (log scale for the density ratio).
fn centre_and_scale(p: &Problem, h: f64, spec: &EstimatorSpec) -> Result<(f64, f64)> {
    let v = permute::statistic(p, h, spec)?;
    let nh = p.n() as f64 * h;
    match p.kind {
        ProblemKind::DensityJump { .. } => {
            let k = &spec.kernel;
            let (mut plus, mut minus) = (0.0, 0.0);
            for o in p.sample1() {
                let w = k.eval(o.x / h);
                if o.x >= 0.0 {
                    plus += w;
                } else {
                    minus += w;
                }
            }
            if !(plus > 0.0 && minus > 0.0) {
                return Err(Error::InvalidInput("density ratio needs observations on both sides of the point".into()));
            }
            let scale = p.n1 as f64 * h * k.kappa(0, 1, Side::Positive);
            let (fp, fm) = (plus / scale, minus / scale);
            let cvar = k.kappa(0, 2, Side::Positive) / k.kappa(0, 1, Side::Positive).powi(2);
            let se_log = (cvar * (1.0 / fp + 1.0 / fm) / (p.n1 as f64 * h)).sqrt();
            Ok((fp / fm, se_log))
        }
        _ => Ok((v.est1.theta - v.est2.theta, v.sigma_hat2.sqrt() / nh.sqrt())),
    }
}

/// Invert the studentized permutation test over a grid of `δ` values,
/// refining the edges of the randomized set by bisection.
#[allow(clippy::too_many_arguments)]
pub fn invert(
    p: &Problem,
    plan: &PermPlan,
    h: f64,
    spec: &EstimatorSpec,
    alpha: f64,
    grid: &GridSpec,
    seed: u64,
    mode: InvertMode,
) -> Result<ConfidenceSet> {
    check_alpha(alpha)?;
    if grid.points < 2 || !(grid.half_width > 0.0) || !(grid.rel_tol > 0.0) {
        return Err(Error::InvalidInput("grid needs at least two points, a positive width and tolerance".into()));
    }
    let ratio = p.kind.is_ratio();
    if matches!(spec.family, crate::smooth::Family::MeanRatio { .. }) && mode == InvertMode::DataTransform {
        return Err(Error::Unsupported("data-transform inversion for ratio-of-means targets".into()));
    }
    if ratio && mode == InvertMode::ShiftStat {
        return Err(Error::Unsupported("statistic shifting for the density ratio".into()));
    }
    let (estimate, se) = centre_and_scale(p, h, spec)?;
    let inner = plan.serial();

    // Map grid coordinates to δ: linear for location, exponential for ratio.
    let to_delta = |z: f64| if ratio { estimate * z.exp() } else { estimate + z * se };
    let mut zs: Vec<f64> = (0..grid.points)
        .map(|i| -grid.half_width + 2.0 * grid.half_width * i as f64 / (grid.points - 1) as f64)
        .collect();
    let null = p.kind.delta_null();
    let z_null = if ratio { (null / estimate).ln() } else { (null - estimate) / se };
    if z_null.is_finite() && !zs.contains(&z_null) {
        zs.push(z_null);
    }
    zs.sort_by(f64::total_cmp);

    let shift_ref = if mode == InvertMode::ShiftStat {
        let r = permute::test(p, &inner, h, spec, StatKind::Studentized, alpha)?;
        let sigma = r.sigma_hat2.sqrt();
        // Monte Carlo references carry the observed value first; it is
        // replaced by the shifted statistic at each δ.
        let mc = matches!(inner.mode, permute::PermMode::MonteCarlo { .. });
        let draws = if mc { r.perm_draws[1..].to_vec() } else { r.perm_draws.clone() };
        Some((draws, mc, r.statistic, sigma))
    } else {
        None
    };
    let nh_sqrt = (p.n() as f64 * h).sqrt();
    let eval = |z: f64| -> Result<f64> {
        let delta = to_delta(z);
        match &shift_ref {
            Some((draws, mc, s_n, sigma)) => {
                let s = s_n - nh_sqrt * delta / sigma;
                let mut values = draws.clone();
                if *mc {
                    values.push(s);
                }
                Ok(Reference::new(values)?.decide(s, alpha, inner.ties).phi)
            }
            None => phi_at(p, &inner, h, spec, alpha, delta),
        }
    };

    let phis: Vec<Result<f64>> = if plan.parallel {
        zs.par_iter().map(|&z| eval(z)).collect()
    } else {
        zs.iter().map(|&z| eval(z)).collect()
    };
    let mut points: Vec<(f64, f64)> = zs.iter().copied().zip(phis.into_iter().collect::<Result<Vec<_>>>()?).collect();

    let u: f64 = substream(seed, Purpose::Uniform, 0, 0).random();
    let member = |phi: f64| u > phi;
    let tol = grid.rel_tol;
    let mut refined = Vec::new();
    for w in points.windows(2) {
        let ((mut a, pa), (mut b, pb)) = (w[0], w[1]);
        if member(pa) == member(pb) {
            continue;
        }
        let inside_left = member(pa);
        let mut guard = 0;
        while (b - a) > tol && guard < 60 {
            let mid = 0.5 * (a + b);
            let pm = eval(mid)?;
            refined.push((mid, pm));
            if member(pm) == inside_left {
                a = mid;
            } else {
                b = mid;
            }
            guard += 1;
        }
    }
    points.extend(refined);
    points.sort_by(|a, b| a.0.total_cmp(&b.0));

    let grid_d: Vec<f64> = points.iter().map(|&(z, _)| to_delta(z)).collect();
    let phi: Vec<f64> = points.iter().map(|&(_, p)| p).collect();
    let hull = |keep: &dyn Fn(f64) -> bool| {
        let idx: Vec<usize> = (0..phi.len()).filter(|&i| keep(phi[i])).collect();
        idx.first().map(|&a| (grid_d[a], grid_d[*idx.last().unwrap()]))
    };
    let conservative: Vec<bool> = phi.iter().map(|&f| f < 1.0).collect();
    let runs = conservative.windows(2).filter(|w| !w[0] && w[1]).count() + usize::from(conservative[0]);
    let full_grid = phi.iter().all(|&f| f < 1.0);
    if full_grid {
        log::warn!("no grid point was rejected; the confidence set covers the whole grid");
    }
    Ok(ConfidenceSet {
        level: 1.0 - alpha,
        mode,
        include: phi.iter().map(|&f| Inclusion::from_phi(f)).collect(),
        interval_hull: hull(&|f| f < 1.0),
        randomized_hull: hull(&|f| u > f),
        grid: grid_d,
        phi,
        u,
        estimate,
        full_grid,
        non_interval: runs > 1,
    })
}
