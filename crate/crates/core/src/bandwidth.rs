//! Fixed bandwidths and an Imbens–Kalyanaraman style MSE-optimal rule for
//! local-linear estimation at boundary (RDD) and interior points.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernel::{Kernel, Side};
use crate::smooth::Obs;
use crate::split::{Problem, ProblemKind};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BandwidthRule {
    Fixed,
    IkLlr,
}

/// Every constant of the plug-in rule.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct IkConfig {
    /// Silverman-type pilot `h₁ = silverman · S_X · N^{-1/5}`.
    pub silverman: f64,
    /// Pilot for second derivatives, `h₂ = pilot · (σ²/(f m₃²))^{1/7} N^{-1/7}`.
    pub pilot: f64,
    /// Regularisation `r = c σ² / (N₂ h₂⁴)` for one-sided quadratic fits.
    pub reg_boundary: f64,
    /// Same for two-sided quadratic fits at interior points.
    pub reg_interior: f64,
    /// Restrict the global cubic to observations between the side medians.
    pub cubic_median_window: bool,
    pub regularize: bool,
    pub warn_n_eff: usize,
}

impl Default for IkConfig {
    fn default() -> Self {
        IkConfig {
            silverman: 1.84,
            pilot: 3.56,
            reg_boundary: 720.0,
            reg_interior: 45.0,
            cubic_median_window: true,
            regularize: true,
            warn_n_eff: 50,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IkDiagnostics {
    pub h1: f64,
    /// Density at the point, per side (boundary) or per sample (interior).
    pub f_hat: [f64; 2],
    pub sigma2: [f64; 2],
    pub m3: [f64; 2],
    pub h2: [f64; 2],
    pub m2: [f64; 2],
    pub n2: [usize; 2],
    pub reg: [f64; 2],
    pub constant: f64,
    pub clamped: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BandwidthChoice {
    pub value: f64,
    pub rule: BandwidthRule,
    pub diagnostics: Option<IkDiagnostics>,
}

impl BandwidthChoice {
    pub fn fixed(h: f64) -> Result<BandwidthChoice> {
        if !(h.is_finite() && h > 0.0) {
            return Err(Error::InvalidInput(format!("bandwidth must be positive, got {h}")));
        }
        Ok(BandwidthChoice { value: h, rule: BandwidthRule::Fixed, diagnostics: None })
    }
}

pub fn ik_bandwidth(p: &Problem, kernel: &Kernel) -> Result<BandwidthChoice> {
    ik_bandwidth_with(p, kernel, &IkConfig::default())
}

pub fn ik_bandwidth_with(p: &Problem, kernel: &Kernel, cfg: &IkConfig) -> Result<BandwidthChoice> {
    let (mut value, mut diag) = match p.kind {
        ProblemKind::Rdd { .. } => boundary_rule(p, kernel, cfg)?,
        ProblemKind::TwoSampleMean { point } | ProblemKind::TwoSampleQuantile { point, .. } => {
            if point.side != crate::smooth::PointSide::Interior {
                return Err(Error::BandwidthFailure("two-sample rule needs an interior point".into()));
            }
            interior_rule(p, point.x, kernel, cfg)?
        }
        ProblemKind::DensityJump { .. } => {
            return Err(Error::BandwidthFailure("no plug-in rule for the density edge problem".into()));
        }
    };
    let xs = p.obs.iter().map(|o| o.x);
    let (lo, hi) = xs.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), x| (a.min(x), b.max(x)));
    let range = match p.kind {
        // Distances to the cutoff on both sides span the original regressor.
        ProblemKind::Rdd { .. } => {
            let m1 = p.sample1().iter().map(|o| o.x).fold(0.0, f64::max);
            let m2 = p.sample2().iter().map(|o| o.x).fold(0.0, f64::max);
            m1 + m2
        }
        _ => hi - lo,
    };
    if !(value.is_finite() && value > 0.0) {
        return Err(Error::BandwidthFailure(format!("plug-in bandwidth is {value}")));
    }
    if value > range && range > 0.0 {
        value = range;
        diag.clamped = true;
    }
    Ok(BandwidthChoice { value, rule: BandwidthRule::IkLlr, diagnostics: Some(diag) })
}

/// `C_K` of the local-linear boundary rule.
pub fn boundary_constant(kernel: &Kernel) -> Result<f64> {
    let m = kernel.lpr_matrices(1)?;
    Ok((m.variance_constant() / m.bias_constant().powi(2)).powf(0.2))
}

/// `C_K` of the local-linear interior rule.
pub fn interior_constant(kernel: &Kernel) -> f64 {
    let k0 = kernel.kappa(0, 1, Side::Full);
    let roughness = kernel.kappa(0, 2, Side::Full) / (k0 * k0);
    let mu2 = kernel.kappa(2, 1, Side::Full) / k0;
    (roughness / (mu2 * mu2)).powf(0.2)
}

fn mean_var(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    let s = v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (n - 1.0);
    (m, s)
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

fn ols(rows: &[Vec<f64>], y: &[f64]) -> Result<Vec<f64>> {
    let p = rows.first().map_or(0, Vec::len);
    if rows.len() <= p {
        return Err(Error::BandwidthFailure(format!("pilot regression has {} rows for {p} coefficients", rows.len())));
    }
    let x = DMatrix::from_fn(rows.len(), p, |i, j| rows[i][j]);
    let svd = x.svd(true, true);
    let smax = svd.singular_values.max();
    if svd.singular_values.min() <= 1e-10 * smax {
        return Err(Error::BandwidthFailure("pilot regression is singular".into()));
    }
    let b = svd.solve(&DVector::from_column_slice(y), 0.0).map_err(|e| Error::BandwidthFailure(e.to_string()))?;
    Ok(b.iter().copied().collect())
}

/// Second derivative from an unweighted quadratic fit of `y` on `x - x0`
/// over `pts`.
fn quad_curvature(pts: &[(f64, f64)], x0: f64) -> Result<f64> {
    let rows: Vec<Vec<f64>> = pts.iter().map(|&(x, _)| vec![1.0, x - x0, (x - x0).powi(2)]).collect();
    let y: Vec<f64> = pts.iter().map(|&(_, y)| y).collect();
    Ok(2.0 * ols(&rows, &y)?[2])
}

fn positive(what: &str, v: f64) -> Result<f64> {
    if v.is_finite() && v > 0.0 {
        Ok(v)
    } else {
        Err(Error::BandwidthFailure(format!("degenerate pilot {what} = {v}")))
    }
}

/// Scale used to standardise the regressor and the outcome.
fn scales(z: &[f64], y: &[f64]) -> Result<(f64, f64)> {
    let sx = positive("regressor spread", mean_var(z).1.sqrt())?;
    let sy = positive("outcome variance", mean_var(y).1.sqrt())?;
    Ok((sx, sy))
}

fn boundary_rule(p: &Problem, kernel: &Kernel, cfg: &IkConfig) -> Result<(f64, IkDiagnostics)> {
    // Signed distance to the cutoff: sample 1 sits at z ≥ 0, sample 2 at z < 0.
    let raw: Vec<(f64, f64)> =
        p.sample1().iter().map(|o| (o.x, o.y)).chain(p.sample2().iter().map(|o| (-o.x, o.y))).collect();
    let z: Vec<f64> = raw.iter().map(|r| r.0).collect();
    let y: Vec<f64> = raw.iter().map(|r| r.1).collect();
    let (sx, sy) = scales(&z, &y)?;
    let pts: Vec<(f64, f64)> = raw.iter().map(|&(z, y)| (z / sx, y / sy)).collect();
    let n = pts.len() as f64;
    let is_plus = |z: f64| z >= 0.0;

    let h1 = cfg.silverman * n.powf(-0.2);
    let plus: Vec<f64> = pts.iter().filter(|q| is_plus(q.0) && q.0 <= h1).map(|q| q.1).collect();
    let minus: Vec<f64> = pts.iter().filter(|q| !is_plus(q.0) && q.0 >= -h1).map(|q| q.1).collect();
    if plus.len() < 2 || minus.len() < 2 {
        return Err(Error::BandwidthFailure("too few observations near the cutoff".into()));
    }
    let f = positive("density", (plus.len() + minus.len()) as f64 / (2.0 * n * h1))?;
    let s2 = [positive("variance", mean_var(&plus).1)?, positive("variance", mean_var(&minus).1)?];

    let (lo, hi) = if cfg.cubic_median_window {
        let zm: Vec<f64> = pts.iter().filter(|q| !is_plus(q.0)).map(|q| q.0).collect();
        let zp: Vec<f64> = pts.iter().filter(|q| is_plus(q.0)).map(|q| q.0).collect();
        (median(zm), median(zp))
    } else {
        (f64::NEG_INFINITY, f64::INFINITY)
    };
    let sel: Vec<&(f64, f64)> = pts.iter().filter(|q| q.0 >= lo && q.0 <= hi).collect();
    let rows: Vec<Vec<f64>> =
        sel.iter().map(|q| vec![1.0, if is_plus(q.0) { 1.0 } else { 0.0 }, q.0, q.0 * q.0, q.0.powi(3)]).collect();
    let m3 = 6.0 * ols(&rows, &sel.iter().map(|q| q.1).collect::<Vec<_>>())?[4];
    let m3 = positive("third derivative", m3.abs())?;

    let n_side = [pts.iter().filter(|q| is_plus(q.0)).count() as f64, pts.iter().filter(|q| !is_plus(q.0)).count() as f64];
    let mut h2 = [0.0; 2];
    let mut m2 = [0.0; 2];
    let mut n2 = [0usize; 2];
    let mut reg = [0.0; 2];
    for s in 0..2 {
        h2[s] = cfg.pilot * (s2[s] / (f * m3 * m3)).powf(1.0 / 7.0) * n_side[s].powf(-1.0 / 7.0);
        let win: Vec<(f64, f64)> = pts
            .iter()
            .filter(|q| if s == 0 { is_plus(q.0) && q.0 <= h2[s] } else { !is_plus(q.0) && q.0 >= -h2[s] })
            .copied()
            .collect();
        n2[s] = win.len();
        m2[s] = quad_curvature(&win, 0.0)?;
        if cfg.regularize {
            reg[s] = cfg.reg_boundary * s2[s] / (n2[s] as f64 * h2[s].powi(4));
        }
    }
    let ck = boundary_constant(kernel)?;
    let denom = positive("bias term", (m2[0] - m2[1]).powi(2) + reg[0] + reg[1])?;
    let h = ck * ((s2[0] + s2[1]) / (f * denom)).powf(0.2) * n.powf(-0.2);
    warn_small(p, h * sx, cfg);
    let diag = IkDiagnostics {
        h1: h1 * sx,
        f_hat: [f / sx, f / sx],
        sigma2: s2.map(|v| v * sy * sy),
        m3: [m3 * sy / sx.powi(3); 2],
        h2: h2.map(|v| v * sx),
        m2: m2.map(|v| v * sy / (sx * sx)),
        n2,
        reg: reg.map(|v| v * sy * sy / sx.powi(4)),
        constant: ck,
        clamped: false,
    };
    Ok((h * sx, diag))
}

fn interior_rule(p: &Problem, x0: f64, kernel: &Kernel, cfg: &IkConfig) -> Result<(f64, IkDiagnostics)> {
    let all_x: Vec<f64> = p.obs.iter().map(|o| o.x).collect();
    let all_y: Vec<f64> = p.obs.iter().map(|o| o.y).collect();
    let (sx, sy) = scales(&all_x, &all_y)?;
    let std = |s: &[Obs]| -> Vec<(f64, f64)> { s.iter().map(|o| ((o.x - x0) / sx, o.y / sy)).collect() };
    let samples = [std(p.sample1()), std(p.sample2())];

    let mut d = IkDiagnostics {
        h1: 0.0,
        f_hat: [0.0; 2],
        sigma2: [0.0; 2],
        m3: [0.0; 2],
        h2: [0.0; 2],
        m2: [0.0; 2],
        n2: [0; 2],
        reg: [0.0; 2],
        constant: interior_constant(kernel),
        clamped: false,
    };
    let mut var_term = 0.0;
    let mut m2s = [0.0; 2];
    let mut regs = [0.0; 2];
    for (k, pts) in samples.iter().enumerate() {
        let nk = pts.len() as f64;
        let xs: Vec<f64> = pts.iter().map(|q| q.0).collect();
        let h1 = cfg.silverman * mean_var(&xs).1.sqrt() * nk.powf(-0.2);
        // The one-sided recipe is run on each side of the point and pooled.
        let right: Vec<f64> = pts.iter().filter(|q| q.0 >= 0.0 && q.0 <= h1).map(|q| q.1).collect();
        let left: Vec<f64> = pts.iter().filter(|q| q.0 < 0.0 && q.0 >= -h1).map(|q| q.1).collect();
        if right.len() < 2 || left.len() < 2 {
            return Err(Error::BandwidthFailure(format!("too few observations near the point in sample {}", k + 1)));
        }
        let f = positive("density", (right.len() + left.len()) as f64 / (2.0 * nk * h1))?;
        let s2 = positive("variance", 0.5 * (mean_var(&right).1 + mean_var(&left).1))?;

        let (lo, hi) = if cfg.cubic_median_window {
            let l: Vec<f64> = xs.iter().copied().filter(|&x| x < 0.0).collect();
            let r: Vec<f64> = xs.iter().copied().filter(|&x| x >= 0.0).collect();
            if l.is_empty() || r.is_empty() {
                return Err(Error::BandwidthFailure("point lies outside the regressor range".into()));
            }
            (median(l), median(r))
        } else {
            (f64::NEG_INFINITY, f64::INFINITY)
        };
        let sel: Vec<(f64, f64)> = pts.iter().filter(|q| q.0 >= lo && q.0 <= hi).copied().collect();
        let rows: Vec<Vec<f64>> = sel.iter().map(|q| vec![1.0, q.0, q.0 * q.0, q.0.powi(3)]).collect();
        let m3 = 6.0 * ols(&rows, &sel.iter().map(|q| q.1).collect::<Vec<_>>())?[3];
        let m3 = positive("third derivative", m3.abs())?;

        let h2 = cfg.pilot * (s2 / (f * m3 * m3)).powf(1.0 / 7.0) * nk.powf(-1.0 / 7.0);
        let win: Vec<(f64, f64)> = pts.iter().filter(|q| q.0.abs() <= h2).copied().collect();
        let m2 = quad_curvature(&win, 0.0)?;
        let reg = if cfg.regularize { cfg.reg_interior * s2 / (win.len() as f64 * h2.powi(4)) } else { 0.0 };

        var_term += s2 / (nk * f);
        d.h1 = d.h1.max(h1 * sx);
        d.f_hat[k] = f / sx;
        d.sigma2[k] = s2 * sy * sy;
        d.m3[k] = m3 * sy / sx.powi(3);
        d.h2[k] = h2 * sx;
        d.m2[k] = m2 * sy / (sx * sx);
        d.n2[k] = win.len();
        d.reg[k] = reg * sy * sy / sx.powi(4);
        m2s[k] = m2;
        regs[k] = reg;
    }
    let denom = positive("bias term", (m2s[0] - m2s[1]).powi(2) + regs[0] + regs[1])?;
    let h = d.constant * (var_term / denom).powf(0.2) * sx;
    warn_small(p, h, cfg);
    Ok((h, d))
}

fn warn_small(p: &Problem, h: f64, cfg: &IkConfig) {
    let point = p.eval_point().x;
    let n_eff = p.obs.iter().filter(|o| (o.x - point).abs() <= h).count();
    if n_eff < cfg.warn_n_eff {
        log::warn!("bandwidth {h:.4} keeps only {n_eff} observations near the point");
    }
}
