//! Kernel-weighted primitives: windows, local polynomial fits, weighted
//! quantiles and the signed density-edge sum.

use std::cmp::Ordering;

use nalgebra::{DMatrix, DVector};

use super::{EvalPoint, Obs, PointSide};
use crate::error::{Error, Result};
use crate::kernel::Kernel;

/// Rows with nonzero kernel weight, in input order.
#[derive(Clone, Debug, Default)]
pub(crate) struct Window {
    /// Scaled offsets `(r - x) / h`.
    pub u: Vec<f64>,
    pub w: Vec<f64>,
    pub idx: Vec<usize>,
}

impl Window {
    pub fn build(rows: &[Obs], point: EvalPoint, h: f64, kernel: &Kernel) -> Window {
        let mut win = Window::default();
        for (i, o) in rows.iter().enumerate() {
            let d = o.x - point.x;
            if point.side == PointSide::BoundaryRight && d < 0.0 {
                continue;
            }
            let u = d / h;
            let w = kernel.eval(u);
            if w > 0.0 {
                win.u.push(u);
                win.w.push(w);
                win.idx.push(i);
            }
        }
        win
    }

    pub fn len(&self) -> usize {
        self.w.len()
    }

    pub fn total_weight(&self) -> f64 {
        self.w.iter().sum()
    }
}

/// Weighted least squares fit of a degree-`order` polynomial in `u`.
#[derive(Clone, Debug)]
pub(crate) struct PolyFit {
    pub coef: DVector<f64>,
    /// Equivalent weights of the intercept: `coef[0] = Σ ell_i y_i`.
    pub ell: Vec<f64>,
}

pub(crate) fn poly_fit(u: &[f64], w: &[f64], y: &[f64], order: usize) -> Result<PolyFit> {
    let p = order + 1;
    let mut m = DMatrix::<f64>::zeros(p, p);
    let mut b = DVector::<f64>::zeros(p);
    let mut pows = vec![0.0; 2 * p - 1];
    for ((&ui, &wi), &yi) in u.iter().zip(w).zip(y) {
        let mut acc = wi;
        for slot in pows.iter_mut() {
            *slot = acc;
            acc *= ui;
        }
        for j in 0..p {
            b[j] += pows[j] * yi;
            for l in 0..p {
                m[(j, l)] += pows[j + l];
            }
        }
    }
    let diag: Vec<f64> = (0..p).map(|j| m[(j, j)]).collect();
    let chol = m.cholesky().ok_or(Error::SingularFit { order })?;
    let l = chol.l_dirty();
    for j in 0..p {
        if !(l[(j, j)] * l[(j, j)] > 1e-12 * diag[j]) {
            return Err(Error::SingularFit { order });
        }
    }
    let coef = chol.solve(&b);
    let mut e1 = DVector::<f64>::zeros(p);
    e1[0] = 1.0;
    let c = chol.solve(&e1);
    let ell = u
        .iter()
        .zip(w)
        .map(|(&ui, &wi)| {
            let mut acc = 0.0;
            let mut pow = 1.0;
            for j in 0..p {
                acc += c[j] * pow;
                pow *= ui;
            }
            wi * acc
        })
        .collect();
    Ok(PolyFit { coef, ell })
}

/// Fitted value of the polynomial at `u`.
pub(crate) fn poly_eval(coef: &DVector<f64>, u: f64) -> f64 {
    coef.iter().rev().fold(0.0, |acc, &c| acc * u + c)
}

/// Left-continuous weighted `chi`-quantile of `(value, weight)` pairs.
pub(crate) fn weighted_quantile(pairs: &mut [(f64, f64)], chi: f64) -> f64 {
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    let total: f64 = pairs.iter().map(|p| p.1).sum();
    let target = chi * total * (1.0 - 1e-12);
    let mut cum = 0.0;
    for &(v, w) in pairs.iter() {
        cum += w;
        if cum >= target {
            return v;
        }
    }
    pairs[pairs.len() - 1].0
}

/// Sums of `K(|r|/h)` and `K(|r|/h)|r|/h` over one side of zero, accumulated
/// in increasing `|r|` so mirrored samples give bitwise-equal sums.
pub(crate) fn one_sided_sums(abs_r: &mut [f64], h: f64, kernel: &Kernel) -> (f64, f64, usize) {
    abs_r.sort_by(f64::total_cmp);
    let (mut a0, mut a1, mut n) = (0.0, 0.0, 0);
    for &r in abs_r.iter() {
        let u = r / h;
        let k = kernel.eval(u);
        if k > 0.0 {
            a0 += k;
            a1 += k * u;
            n += 1;
        }
    }
    (a0, a1, n)
}

/// Split scalar offsets into magnitudes on `[0, ∞)` and on `(-∞, 0)`.
pub(crate) fn split_sides(r: impl Iterator<Item = f64>) -> (Vec<f64>, Vec<f64>) {
    let (mut pos, mut neg) = (Vec::new(), Vec::new());
    for v in r {
        if v >= 0.0 {
            pos.push(v);
        } else {
            neg.push(-v);
        }
    }
    (pos, neg)
}

pub(crate) fn obs_cmp(a: &Obs, b: &Obs) -> Ordering {
    a.x.total_cmp(&b.x)
        .then(a.y.total_cmp(&b.y))
        .then(a.d.total_cmp(&b.d))
}

/// Nearest-neighbour residual variances `J/(J+1) (y_i - mean of J neighbours)²`.
///
/// `x` must be sorted. Distance ties go to the lower index.
pub(crate) fn nn_residual_variance(x: &[f64], y: &[f64], neighbors: usize) -> Vec<f64> {
    let n = x.len();
    let j_eff = neighbors.min(n.saturating_sub(1));
    if j_eff == 0 {
        return vec![0.0; n];
    }
    let scale = j_eff as f64 / (j_eff as f64 + 1.0);
    (0..n)
        .map(|i| {
            let (mut lo, mut hi) = (i, i + 1);
            let mut sum = 0.0;
            for _ in 0..j_eff {
                let left = if lo > 0 { Some(x[i] - x[lo - 1]) } else { None };
                let right = if hi < n { Some(x[hi] - x[i]) } else { None };
                let take_left = match (left, right) {
                    (Some(l), Some(r)) => l <= r,
                    (Some(_), None) => true,
                    _ => false,
                };
                if take_left {
                    lo -= 1;
                    sum += y[lo];
                } else {
                    sum += y[hi];
                    hi += 1;
                }
            }
            let e = y[i] - sum / j_eff as f64;
            scale * e * e
        })
        .collect()
}
