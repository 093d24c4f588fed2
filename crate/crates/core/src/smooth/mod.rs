//! Nonparametric point estimators with first-order bias corrections and
//! variance estimates.
//!
//! Every estimator is a pure function of its rows. Rows are sorted by
//! `(x, y, d)` before any accumulation so results do not depend on input
//! order, which lets the permutation engine hand over rows in any order.

mod local;

use std::borrow::Cow;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernel::{Kernel, Side};
pub(crate) use local::obs_cmp as cmp_obs;
use local::{nn_residual_variance, obs_cmp, one_sided_sums, poly_eval, poly_fit, split_sides, Window};

/// Floor on estimated densities appearing in denominators.
pub const DENSITY_FLOOR: f64 = 1e-6;

/// One observation. `d` is the second response of ratio targets and is
/// ignored elsewhere; density problems use `x` only.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Obs {
    pub x: f64,
    pub y: f64,
    #[serde(default)]
    pub d: f64,
}

impl Obs {
    pub fn new(x: f64, y: f64) -> Obs {
        Obs { x, y, d: 0.0 }
    }

    pub fn with_d(x: f64, y: f64, d: f64) -> Obs {
        Obs { x, y, d }
    }

    pub fn scalar(x: f64) -> Obs {
        Obs { x, y: 0.0, d: 0.0 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PointSide {
    Interior,
    /// Only rows with `r >= x` contribute.
    BoundaryRight,
}

impl PointSide {
    pub(crate) fn moment_side(self) -> Side {
        match self {
            PointSide::Interior => Side::Full,
            PointSide::BoundaryRight => Side::Positive,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalPoint {
    pub x: f64,
    pub side: PointSide,
}

impl EvalPoint {
    pub fn interior(x: f64) -> EvalPoint {
        EvalPoint { x, side: PointSide::Interior }
    }

    pub fn boundary(x: f64) -> EvalPoint {
        EvalPoint { x, side: PointSide::BoundaryRight }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "type")]
pub enum Family {
    NwMean,
    LprMean { order: usize },
    LocalQuantile { chi: f64 },
    DensityEdge,
    /// Ratio `m_y / m_d` of two local polynomial fits of the same order.
    MeanRatio { order: usize },
}

impl Family {
    pub fn is_mean(&self) -> bool {
        matches!(self, Family::NwMean | Family::LprMean { .. } | Family::MeanRatio { .. })
    }

    pub fn order(&self) -> usize {
        match *self {
            Family::LprMean { order } | Family::MeanRatio { order } => order,
            _ => 0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BiasMode {
    Plugin,
    OrderBump,
    None,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "type")]
pub enum VarianceMode {
    Plugin,
    NnMatched { neighbors: usize },
    Sandwich,
}

/// Kernel moment in the boundary local-constant bias `2 κ⁺_{1,t} m'(0⁺)`.
///
/// The first-order expansion integrates `u K(u)`, giving `t = 1`; `t = 2` is
/// kept for comparison with the alternative printed constant.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundaryBiasMoment {
    Kappa11,
    Kappa12,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EstimatorSpec {
    pub family: Family,
    pub kernel: Kernel,
    pub bias: BiasMode,
    pub variance: VarianceMode,
    /// `c` in the pilot bandwidth `c h n^{1/5 - 1/7}`.
    pub pilot_inflation: f64,
    pub boundary_bias_moment: BoundaryBiasMoment,
    /// Fewest in-window rows accepted, on top of `order + 2`.
    pub min_window: usize,
}

impl EstimatorSpec {
    /// Family defaults: means use an order bump and 3-NN variances; quantile
    /// and density estimators use plug-in bias and variance.
    pub fn new(family: Family) -> EstimatorSpec {
        let (bias, variance) = if family.is_mean() {
            (BiasMode::OrderBump, VarianceMode::NnMatched { neighbors: 3 })
        } else {
            (BiasMode::Plugin, VarianceMode::Plugin)
        };
        EstimatorSpec {
            family,
            kernel: Kernel::default(),
            bias,
            variance,
            pilot_inflation: 1.5,
            boundary_bias_moment: BoundaryBiasMoment::Kappa11,
            min_window: 5,
        }
    }

    pub fn with_kernel(mut self, kernel: Kernel) -> Self {
        self.kernel = kernel;
        self
    }

    pub fn with_bias(mut self, bias: BiasMode) -> Self {
        self.bias = bias;
        self
    }

    pub fn with_variance(mut self, variance: VarianceMode) -> Self {
        self.variance = variance;
        self
    }

    pub fn with_min_window(mut self, rows: usize) -> Self {
        self.min_window = rows;
        self
    }

    pub(crate) fn min_window(&self, order: usize) -> usize {
        (order + 2).max(self.min_window)
    }

    pub fn pilot_bandwidth(&self, h: f64, n: usize) -> f64 {
        self.pilot_inflation * h * (n.max(1) as f64).powf(1.0 / 5.0 - 1.0 / 7.0)
    }

    /// Distance from the evaluation point beyond which rows cannot affect
    /// an estimate from a sample of size at most `n`.
    pub fn reach(&self, h: f64, n: usize) -> f64 {
        let widest = if self.bias == BiasMode::Plugin {
            self.pilot_bandwidth(h, n).max(h)
        } else {
            h
        };
        widest * self.kernel.support()
    }

    /// Order of the polynomial actually fitted for mean families.
    pub fn effective_order(&self, side: PointSide) -> usize {
        let rho = self.family.order();
        if self.bias != BiasMode::OrderBump {
            return rho;
        }
        match side {
            PointSide::BoundaryRight => rho + 1,
            PointSide::Interior if rho % 2 == 0 => rho + 2,
            PointSide::Interior => rho + 1,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EstimateResult {
    pub theta_b: f64,
    pub bias_hat: f64,
    pub theta: f64,
    pub xi2_hat: f64,
    pub n_eff: usize,
    pub h: f64,
    /// Polynomial order of the fit (0 for quantile and density).
    pub order: usize,
    /// `p` in `theta = theta_b - h^p bias_hat`.
    pub bias_exponent: i32,
}

fn bias_exponent(order: usize, side: PointSide) -> i32 {
    match side {
        PointSide::BoundaryRight => order as i32 + 1,
        PointSide::Interior if order % 2 == 0 => order as i32 + 2,
        PointSide::Interior => order as i32 + 1,
    }
}

fn check_h(h: f64) -> Result<()> {
    if h.is_finite() && h > 0.0 {
        Ok(())
    } else {
        Err(Error::InvalidInput(format!("bandwidth must be positive and finite, got {h}")))
    }
}

fn sorted_rows(rows: &[Obs]) -> Cow<'_, [Obs]> {
    if rows.windows(2).all(|w| obs_cmp(&w[0], &w[1]).is_le()) {
        Cow::Borrowed(rows)
    } else {
        let mut v = rows.to_vec();
        v.sort_by(obs_cmp);
        Cow::Owned(v)
    }
}

/// Kernel-weighted mean of `y` around `point`.
pub fn nw_mean(data: &[Obs], point: EvalPoint, h: f64, kernel: &Kernel) -> Result<f64> {
    check_h(h)?;
    let rows = sorted_rows(data);
    let win = Window::build(&rows, point, h, kernel);
    if win.len() == 0 {
        return Err(Error::EmptyWindow { x: point.x, h, n_eff: 0, required: 1 });
    }
    let num: f64 = win.idx.iter().zip(&win.w).map(|(&i, &w)| w * rows[i].y).sum();
    Ok(num / win.total_weight())
}

/// Output of [`lpr_fit`]. Vectors are indexed like `rows`, the in-window
/// observations in sorted `(x, y, d)` order.
#[derive(Clone, Debug)]
pub struct LprFit {
    /// Coefficients on `((r - x)/h)^j`, `j = 0..=order`.
    pub coef: Vec<f64>,
    pub rows: Vec<Obs>,
    pub weights: Vec<f64>,
    pub residuals: Vec<f64>,
    /// `coef[0] = Σ equivalent_weights[i] * rows[i].y`.
    pub equivalent_weights: Vec<f64>,
}

/// Kernel-weighted polynomial least squares of `y` on `(r - x)/h`.
pub fn lpr_fit(data: &[Obs], point: EvalPoint, h: f64, kernel: &Kernel, order: usize) -> Result<LprFit> {
    check_h(h)?;
    let rows = sorted_rows(data);
    let win = Window::build(&rows, point, h, kernel);
    if win.len() < order + 2 {
        return Err(Error::EmptyWindow { x: point.x, h, n_eff: win.len(), required: order + 2 });
    }
    let y: Vec<f64> = win.idx.iter().map(|&i| rows[i].y).collect();
    let fit = poly_fit(&win.u, &win.w, &y, order)?;
    let residuals = win.u.iter().zip(&y).map(|(&u, &yi)| yi - poly_eval(&fit.coef, u)).collect();
    Ok(LprFit {
        coef: fit.coef.iter().copied().collect(),
        rows: win.idx.iter().map(|&i| rows[i]).collect(),
        weights: win.w,
        residuals,
        equivalent_weights: fit.ell,
    })
}

/// Kernel-weighted `chi`-quantile of `y`: the smallest in-window value whose
/// cumulative weight reaches `chi` times the total.
pub fn local_quantile(data: &[Obs], point: EvalPoint, h: f64, kernel: &Kernel, chi: f64) -> Result<f64> {
    check_h(h)?;
    check_chi(chi)?;
    let win = Window::build(data, point, h, kernel);
    if win.len() == 0 {
        return Err(Error::EmptyWindow { x: point.x, h, n_eff: 0, required: 1 });
    }
    let mut pairs: Vec<(f64, f64)> = win.idx.iter().zip(&win.w).map(|(&i, &w)| (data[i].y, w)).collect();
    Ok(local::weighted_quantile(&mut pairs, chi))
}

fn check_chi(chi: f64) -> Result<()> {
    if chi > 0.0 && chi < 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidInput(format!("quantile level must lie in (0, 1), got {chi}")))
    }
}

/// `(1/(n h)) Σ K(r/h) (1{r >= 0} - 1{r < 0})` over a scalar sample.
pub fn density_edge(r: &[f64], h: f64, kernel: &Kernel) -> Result<f64> {
    check_h(h)?;
    let (mut pos, mut neg) = split_sides(r.iter().copied());
    let (a0p, _, _) = one_sided_sums(&mut pos, h, kernel);
    let (a0n, _, _) = one_sided_sums(&mut neg, h, kernel);
    Ok((a0p - a0n) / (r.len().max(1) as f64 * h))
}

/// Plug-in or mode-specific bias estimate `B̂`; see [`estimate`].
pub fn bias_hat(data: &[Obs], point: EvalPoint, h: f64, spec: &EstimatorSpec) -> Result<f64> {
    estimate(data, point, h, spec).map(|e| e.bias_hat)
}

/// Variance estimate `ξ̂²`; see [`estimate`].
pub fn xi2_hat(data: &[Obs], point: EvalPoint, h: f64, spec: &EstimatorSpec) -> Result<f64> {
    estimate(data, point, h, spec).map(|e| e.xi2_hat)
}

/// Bias-corrected estimate and variance from a full sample.
pub fn estimate(data: &[Obs], point: EvalPoint, h: f64, spec: &EstimatorSpec) -> Result<EstimateResult> {
    estimate_window(data, data.len(), point, h, spec)
}

/// As [`estimate`], for a sample of size `n` of which only `rows` are given.
///
/// Rows farther than [`EstimatorSpec::reach`] from the evaluation point may
/// be omitted without changing the result.
pub fn estimate_window(
    rows: &[Obs],
    n: usize,
    point: EvalPoint,
    h: f64,
    spec: &EstimatorSpec,
) -> Result<EstimateResult> {
    check_h(h)?;
    if n < rows.len() {
        return Err(Error::InvalidInput(format!("sample size {n} is smaller than the {} rows given", rows.len())));
    }
    let rows = sorted_rows(rows);
    match spec.family {
        Family::NwMean => mean_estimate(&rows, n, point, h, spec, 0, |o| o.y),
        Family::LprMean { order } => mean_estimate(&rows, n, point, h, spec, order, |o| o.y),
        Family::MeanRatio { order } => ratio_estimate(&rows, n, point, h, spec, order),
        Family::LocalQuantile { chi } => quantile_estimate(&rows, n, point, h, spec, chi),
        Family::DensityEdge => density_estimate(&rows, n, point, h, spec),
    }
}

fn mean_estimate(
    rows: &[Obs],
    n: usize,
    point: EvalPoint,
    h: f64,
    spec: &EstimatorSpec,
    order: usize,
    resp: fn(&Obs) -> f64,
) -> Result<EstimateResult> {
    let kernel = &spec.kernel;
    let side = point.side;
    let eff = spec.effective_order(side);
    let win = Window::build(rows, point, h, kernel);
    let required = spec.min_window(eff);
    if win.len() < required {
        return Err(Error::EmptyWindow { x: point.x, h, n_eff: win.len(), required });
    }
    let y: Vec<f64> = win.idx.iter().map(|&i| resp(&rows[i])).collect();
    let fit = poly_fit(&win.u, &win.w, &y, eff)?;
    let theta_b = fit.coef[0];

    let (bias_hat, p) = match spec.bias {
        BiasMode::Plugin => mean_plugin_bias(rows, n, point, h, spec, order, resp)?,
        _ => (0.0, bias_exponent(eff, side)),
    };
    let theta = theta_b - h.powi(p) * bias_hat;

    let nh = n as f64 * h;
    let xi2 = match spec.variance {
        VarianceMode::Plugin => {
            let sw = win.total_weight();
            let v = win
                .u
                .iter()
                .zip(&win.w)
                .zip(&y)
                .map(|((&u, &w), &yi)| w * (yi - poly_eval(&fit.coef, u)).powi(2))
                .sum::<f64>()
                / sw;
            let f = sw / (nh * kernel.kappa(0, 1, side.moment_side()));
            if !(f >= DENSITY_FLOOR) {
                return Err(Error::VarianceUnstable { what: "f_R", value: f });
            }
            let cvar = kernel.moment_matrices(eff, side.moment_side())?.variance_constant();
            cvar * v / f
        }
        VarianceMode::NnMatched { neighbors } => {
            let x: Vec<f64> = win.idx.iter().map(|&i| rows[i].x).collect();
            let s2 = nn_residual_variance(&x, &y, neighbors);
            nh * fit.ell.iter().zip(&s2).map(|(l, s)| l * l * s).sum::<f64>()
        }
        VarianceMode::Sandwich => {
            nh * fit
                .ell
                .iter()
                .zip(&win.u)
                .zip(&y)
                .map(|((l, &u), &yi)| l * l * (yi - poly_eval(&fit.coef, u)).powi(2))
                .sum::<f64>()
        }
    };

    Ok(EstimateResult {
        theta_b,
        bias_hat,
        theta,
        xi2_hat: xi2.max(0.0),
        n_eff: win.len(),
        h,
        order: eff,
        bias_exponent: p,
    })
}

/// Plug-in leading bias of a mean estimator of order `order` and its exponent.
fn mean_plugin_bias(
    rows: &[Obs],
    n: usize,
    point: EvalPoint,
    h: f64,
    spec: &EstimatorSpec,
    order: usize,
    resp: fn(&Obs) -> f64,
) -> Result<(f64, i32)> {
    let kernel = &spec.kernel;
    let side = point.side;
    let hp = spec.pilot_bandwidth(h, n);
    let pilot_fit = |fit_order: usize| -> Result<(Window, local::PolyFit)> {
        let win = Window::build(rows, point, hp, kernel);
        let required = spec.min_window(fit_order);
        if win.len() < required {
            return Err(Error::EmptyWindow { x: point.x, h: hp, n_eff: win.len(), required });
        }
        let y: Vec<f64> = win.idx.iter().map(|&i| resp(&rows[i])).collect();
        let fit = poly_fit(&win.u, &win.w, &y, fit_order)?;
        Ok((win, fit))
    };

    match side {
        PointSide::Interior if order == 0 => {
            let (win, fit) = pilot_fit(3)?;
            let m1 = fit.coef[1] / hp;
            let m2 = 2.0 * fit.coef[2] / (hp * hp);
            let nhp = n as f64 * hp;
            let f = win.total_weight() / nhp;
            if !(f >= DENSITY_FLOOR) {
                return Err(Error::BiasUnstable { what: "f_R", value: f });
            }
            let a1: f64 = win.u.iter().zip(&win.w).map(|(u, w)| u * w).sum::<f64>() / nhp;
            let k21 = kernel.kappa(2, 1, Side::Full);
            let f1 = a1 / (hp * k21);
            Ok((k21 * (m1 * f1 / f + 0.5 * m2), 2))
        }
        PointSide::Interior if order % 2 == 0 => Err(Error::Unsupported(format!(
            "plug-in bias for interior local polynomial fits of even order {order}"
        ))),
        _ => {
            let (_, fit) = pilot_fit(order + 2)?;
            // m^{(ρ+1)}/(ρ+1)! in regressor units.
            let scaled = fit.coef[order + 1] / hp.powi(order as i32 + 1);
            let constant = if side == PointSide::BoundaryRight
                && order == 0
                && spec.boundary_bias_moment == BoundaryBiasMoment::Kappa12
            {
                2.0 * kernel.kappa(1, 2, Side::Positive)
            } else {
                kernel.moment_matrices(order, side.moment_side())?.bias_constant()
            };
            Ok((scaled * constant, order as i32 + 1))
        }
    }
}

fn ratio_estimate(
    rows: &[Obs],
    n: usize,
    point: EvalPoint,
    h: f64,
    spec: &EstimatorSpec,
    order: usize,
) -> Result<EstimateResult> {
    let ey = mean_estimate(rows, n, point, h, spec, order, |o| o.y)?;
    let ed = mean_estimate(rows, n, point, h, spec, order, |o| o.d)?;
    if !(ed.theta.abs() >= DENSITY_FLOOR) || !(ed.theta_b.abs() >= DENSITY_FLOOR) {
        return Err(Error::VarianceUnstable { what: "theta_d", value: ed.theta });
    }
    let theta_b = ey.theta_b / ed.theta_b;
    let theta = ey.theta / ed.theta;
    let hp = h.powi(ey.bias_exponent);
    let td2 = ed.theta * ed.theta;
    let xi2 = ey.xi2_hat / td2 + ey.theta * ey.theta * ed.xi2_hat / (td2 * td2);
    Ok(EstimateResult {
        theta_b,
        bias_hat: (theta_b - theta) / hp,
        theta,
        xi2_hat: xi2,
        n_eff: ey.n_eff,
        h,
        order: ey.order,
        bias_exponent: ey.bias_exponent,
    })
}

fn quantile_estimate(
    rows: &[Obs],
    n: usize,
    point: EvalPoint,
    h: f64,
    spec: &EstimatorSpec,
    chi: f64,
) -> Result<EstimateResult> {
    check_chi(chi)?;
    let kernel = &spec.kernel;
    let side = point.side;
    if spec.bias == BiasMode::OrderBump {
        return Err(Error::Unsupported("order-bump bias mode for local quantiles".into()));
    }
    if spec.variance != VarianceMode::Plugin {
        return Err(Error::Unsupported("only plug-in variances are available for local quantiles".into()));
    }
    let win = Window::build(rows, point, h, kernel);
    let required = spec.min_window(0);
    if win.len() < required {
        return Err(Error::EmptyWindow { x: point.x, h, n_eff: win.len(), required });
    }
    let ys: Vec<f64> = win.idx.iter().map(|&i| rows[i].y).collect();
    let mut pairs: Vec<(f64, f64)> = ys.iter().copied().zip(win.w.iter().copied()).collect();
    let theta_b = local::weighted_quantile(&mut pairs, chi);

    let sw = win.total_weight();
    let f_r = sw / (n as f64 * h * kernel.kappa(0, 1, side.moment_side()));
    let f_s = conditional_density(&ys, &win.w, theta_b, kernel);

    let (bias_hat, p) = match spec.bias {
        BiasMode::Plugin => {
            if side != PointSide::Interior {
                return Err(Error::Unsupported("plug-in bias for boundary local quantiles".into()));
            }
            let hp = spec.pilot_bandwidth(h, n);
            let pw = Window::build(rows, point, hp, kernel);
            let required = spec.min_window(3);
            if pw.len() < required {
                return Err(Error::EmptyWindow { x: point.x, h: hp, n_eff: pw.len(), required });
            }
            let ind: Vec<f64> = pw.idx.iter().map(|&i| if rows[i].y <= theta_b { 1.0 } else { 0.0 }).collect();
            let fit = poly_fit(&pw.u, &pw.w, &ind, 3)?;
            let cdf1 = fit.coef[1] / hp;
            let cdf2 = 2.0 * fit.coef[2] / (hp * hp);
            let nhp = n as f64 * hp;
            let f = pw.total_weight() / nhp;
            let k21 = kernel.kappa(2, 1, Side::Full);
            let f1 = pw.u.iter().zip(&pw.w).map(|(u, w)| u * w).sum::<f64>() / (nhp * hp * k21);
            let denom = f_s * f;
            if !(f >= DENSITY_FLOOR) {
                return Err(Error::BiasUnstable { what: "f_R", value: f });
            }
            if !(f_s >= DENSITY_FLOOR) || !f_s.is_finite() {
                return Err(Error::BiasUnstable { what: "f_{S|R}", value: f_s });
            }
            (-k21 / denom * (cdf1 * f1 + 0.5 * cdf2 * f), 2)
        }
        _ => (0.0, bias_exponent(0, side)),
    };
    let theta = theta_b - h.powi(p) * bias_hat;

    if !(f_r >= DENSITY_FLOOR) {
        return Err(Error::VarianceUnstable { what: "f_R", value: f_r });
    }
    let xi2 = if f_s.is_infinite() {
        0.0
    } else {
        if !(f_s >= DENSITY_FLOOR) {
            return Err(Error::VarianceUnstable { what: "f_{S|R}", value: f_s });
        }
        let cvar = kernel.moment_matrices(0, side.moment_side())?.variance_constant();
        cvar * chi * (1.0 - chi) / (f_s * f_s * f_r)
    };

    Ok(EstimateResult {
        theta_b,
        bias_hat,
        theta,
        xi2_hat: xi2,
        n_eff: win.len(),
        h,
        order: 0,
        bias_exponent: p,
    })
}

/// Kernel estimate of the density of `y` at `at` among weighted rows, with a
/// rule-of-thumb bandwidth. Infinite when the rows have no spread.
fn conditional_density(y: &[f64], w: &[f64], at: f64, kernel: &Kernel) -> f64 {
    let sw: f64 = w.iter().sum();
    let mean = y.iter().zip(w).map(|(a, b)| a * b).sum::<f64>() / sw;
    let var = y.iter().zip(w).map(|(a, b)| b * (a - mean).powi(2)).sum::<f64>() / sw;
    if !(var > 0.0) {
        return f64::INFINITY;
    }
    // Silverman's rule, moved to the kernel's canonical scale.
    let canonical = |k: &Kernel| (k.kappa(0, 2, Side::Full) / k.kappa(2, 1, Side::Full).powi(2)).powf(0.2);
    let gauss = Kernel::new(crate::kernel::KernelKind::Gaussian);
    let b = 1.06 * var.sqrt() * (y.len() as f64).powf(-0.2) * canonical(kernel) / canonical(&gauss);
    y.iter().zip(w).map(|(&v, &wi)| wi * kernel.eval((v - at) / b)).sum::<f64>() / (b * sw)
}

fn density_estimate(rows: &[Obs], n: usize, point: EvalPoint, h: f64, spec: &EstimatorSpec) -> Result<EstimateResult> {
    let kernel = &spec.kernel;
    let (mut pos, mut neg) = split_sides(rows.iter().map(|o| o.x - point.x));
    let (a0p, _, np) = one_sided_sums(&mut pos, h, kernel);
    let (a0n, _, nn) = one_sided_sums(&mut neg, h, kernel);
    let nf = n.max(1) as f64;
    let theta_b = (a0p - a0n) / (nf * h);
    let n_eff = np + nn;
    let required = spec.min_window(0);
    if n_eff < required {
        return Err(Error::EmptyWindow { x: point.x, h, n_eff, required });
    }

    let (bias_hat, p) = match spec.bias {
        BiasMode::None => (0.0, 1),
        BiasMode::OrderBump => {
            return Err(Error::Unsupported("order-bump bias mode for the density edge estimator".into()))
        }
        BiasMode::Plugin => {
            let hp = spec.pilot_bandwidth(h, n);
            let slope = |mags: &mut [f64]| {
                let (s0, s1, _) = one_sided_sums(mags, hp, kernel);
                let (a0, a1) = (s0 / (nf * hp), s1 / (nf * hp));
                let (k01, k11, k21) = (
                    kernel.kappa(0, 1, Side::Positive),
                    kernel.kappa(1, 1, Side::Positive),
                    kernel.kappa(2, 1, Side::Positive),
                );
                // [k01 k11; k11 k21] [f; hp f'] = [a0; a1]
                let det = k01 * k21 - k11 * k11;
                (k01 * a1 - k11 * a0) / det / hp
            };
            let fp_plus = slope(&mut pos);
            let fp_minus = -slope(&mut neg);
            (kernel.kappa(1, 1, Side::Positive) * (fp_plus + fp_minus), 1)
        }
    };
    let theta = theta_b - h.powi(p) * bias_hat;

    let xi2 = match spec.variance {
        VarianceMode::Plugin => {
            let f_sum = (a0p + a0n) / (nf * h * kernel.kappa(0, 1, Side::Positive));
            kernel.kappa(0, 2, Side::Positive) * f_sum
        }
        VarianceMode::Sandwich => {
            let s2: f64 = pos.iter().chain(neg.iter()).map(|&r| kernel.eval(r / h).powi(2)).sum();
            s2 / (nf * h) - h * theta_b * theta_b
        }
        VarianceMode::NnMatched { .. } => {
            return Err(Error::Unsupported("nearest-neighbour variances for the density edge estimator".into()))
        }
    };

    Ok(EstimateResult {
        theta_b,
        bias_hat,
        theta,
        xi2_hat: xi2.max(0.0),
        n_eff,
        h,
        order: 0,
        bias_exponent: p,
    })
}

#[cfg(test)]
mod tests;
