//! Kernel functions, their one- and two-sided moments, and the local
//! polynomial moment matrices used by every estimator.
//!
//! Moments are `kappa(s, t) = ∫ u^s K(u)^t du` over the real line
//! ([`Side::Full`]) or over the positive half line ([`Side::Positive`]).
//! All shipped kernels have closed forms; values for small `s` are tabulated
//! when the kernel is constructed so inner loops can read them for free.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const TABLE_ORDERS: usize = 16;
const GAUSSIAN_TRUNCATION: f64 = 8.0;
const MAX_CONDITION: f64 = 1e12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum KernelKind {
    Triangular,
    Epanechnikov,
    Uniform,
    Gaussian,
}

impl KernelKind {
    pub const ALL: [KernelKind; 4] = [
        KernelKind::Triangular,
        KernelKind::Epanechnikov,
        KernelKind::Uniform,
        KernelKind::Gaussian,
    ];

    pub fn name(self) -> &'static str {
        match self {
            KernelKind::Triangular => "triangular",
            KernelKind::Epanechnikov => "epanechnikov",
            KernelKind::Uniform => "uniform",
            KernelKind::Gaussian => "gaussian",
        }
    }
}

impl fmt::Display for KernelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for KernelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "triangular" | "tri" => Ok(KernelKind::Triangular),
            "epanechnikov" | "epa" => Ok(KernelKind::Epanechnikov),
            "uniform" | "rectangular" => Ok(KernelKind::Uniform),
            "gaussian" | "normal" => Ok(KernelKind::Gaussian),
            other => Err(Error::InvalidInput(format!("unknown kernel '{other}'"))),
        }
    }
}

/// Which part of the real line a moment integrates over.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Full,
    Positive,
}

/// A symmetric, nonnegative, bounded kernel density with cached moments.
#[derive(Clone, Copy, Serialize, Deserialize)]
#[serde(from = "KernelKind", into = "KernelKind")]
pub struct Kernel {
    kind: KernelKind,
    // plus[s][t - 1] = kappa^+_{s,t}
    plus: [[f64; 2]; TABLE_ORDERS],
}

impl fmt::Debug for Kernel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_tuple("Kernel").field(&self.kind).finish()
    }
}

impl PartialEq for Kernel {
    fn eq(&self, other: &Self) -> bool {
        self.kind == other.kind
    }
}

impl Default for Kernel {
    fn default() -> Self {
        Kernel::new(KernelKind::Triangular)
    }
}

impl From<KernelKind> for Kernel {
    fn from(kind: KernelKind) -> Self {
        Kernel::new(kind)
    }
}

impl From<Kernel> for KernelKind {
    fn from(k: Kernel) -> Self {
        k.kind
    }
}

impl FromStr for Kernel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        s.parse::<KernelKind>().map(Kernel::new)
    }
}

impl Kernel {
    pub fn new(kind: KernelKind) -> Self {
        let mut plus = [[0.0; 2]; TABLE_ORDERS];
        for (s, row) in plus.iter_mut().enumerate() {
            for t in 1..=2 {
                row[t - 1] = positive_moment(kind, s, t);
            }
        }
        Kernel { kind, plus }
    }

    pub fn triangular() -> Self {
        Kernel::new(KernelKind::Triangular)
    }

    pub fn uniform() -> Self {
        Kernel::new(KernelKind::Uniform)
    }

    pub fn kind(&self) -> KernelKind {
        self.kind
    }

    pub fn name(&self) -> &'static str {
        self.kind.name()
    }

    /// Kernel weight at `u`; zero outside [`Kernel::support`].
    #[inline]
    pub fn eval(&self, u: f64) -> f64 {
        let a = u.abs();
        match self.kind {
            KernelKind::Triangular => {
                if a < 1.0 {
                    1.0 - a
                } else {
                    0.0
                }
            }
            KernelKind::Epanechnikov => {
                if a < 1.0 {
                    0.75 * (1.0 - a * a)
                } else {
                    0.0
                }
            }
            KernelKind::Uniform => {
                if a <= 1.0 {
                    0.5
                } else {
                    0.0
                }
            }
            KernelKind::Gaussian => {
                if a <= GAUSSIAN_TRUNCATION {
                    (-0.5 * a * a).exp() / (2.0 * PI).sqrt()
                } else {
                    0.0
                }
            }
        }
    }

    /// Radius in `u` units beyond which [`Kernel::eval`] is zero.
    pub fn support(&self) -> f64 {
        match self.kind {
            KernelKind::Gaussian => GAUSSIAN_TRUNCATION,
            _ => 1.0,
        }
    }

    /// `kappa_{s,t}` (full line) or `kappa^+_{s,t}` (positive half line).
    pub fn moment(&self, s: usize, t: usize, side: Side) -> Result<f64> {
        if !(1..=2).contains(&t) {
            return Err(Error::UnsupportedMoment { s, t });
        }
        let plus = if s < TABLE_ORDERS {
            self.plus[s][t - 1]
        } else {
            positive_moment(self.kind, s, t)
        };
        Ok(match side {
            Side::Positive => plus,
            Side::Full if s % 2 == 1 => 0.0,
            Side::Full => 2.0 * plus,
        })
    }

    /// Infallible accessor for `t` in {1, 2}; used on hot paths.
    #[inline]
    pub(crate) fn kappa(&self, s: usize, t: usize, side: Side) -> f64 {
        debug_assert!(t == 1 || t == 2);
        self.moment(s, t, side).expect("t is 1 or 2")
    }

    /// One-sided local polynomial matrices of order `order`.
    pub fn lpr_matrices(&self, order: usize) -> Result<LprMatrices> {
        self.moment_matrices(order, Side::Positive)
    }

    /// Moment matrices for local polynomial fits of `order`; `Side::Full`
    /// gives the interior-point analogue of the boundary matrices.
    pub fn moment_matrices(&self, order: usize, side: Side) -> Result<LprMatrices> {
        let p = order + 1;
        let gamma = DMatrix::from_fn(p, p, |j, l| self.kappa(j + l, 1, side));
        let delta = DMatrix::from_fn(p, p, |j, l| self.kappa(j + l, 2, side));
        let gamma_star = DVector::from_fn(p, |l, _| self.kappa(order + 1 + l, 1, side));

        let eig = gamma.clone().symmetric_eigen();
        let max = eig.eigenvalues.max();
        let min = eig.eigenvalues.min();
        let condition = if min > 0.0 { max / min } else { f64::INFINITY };
        if !(condition <= MAX_CONDITION) {
            return Err(Error::SingularMoments {
                kernel: self.name(),
                order,
                condition,
            });
        }
        let gamma_inv = gamma
            .clone()
            .try_inverse()
            .ok_or(Error::SingularMoments {
                kernel: self.name(),
                order,
                condition,
            })?;
        Ok(LprMatrices {
            order,
            side,
            gamma,
            delta,
            gamma_star,
            gamma_inv,
        })
    }
}

/// Kernel moment matrices of a local polynomial fit.
///
/// `gamma[j][l] = kappa_{j+l,1}`, `delta[j][l] = kappa_{j+l,2}` and
/// `gamma_star[l] = kappa_{order+1+l,1}`, all on the same [`Side`].
#[derive(Clone, Debug)]
pub struct LprMatrices {
    pub order: usize,
    pub side: Side,
    pub gamma: DMatrix<f64>,
    pub delta: DMatrix<f64>,
    pub gamma_star: DVector<f64>,
    gamma_inv: DMatrix<f64>,
}

impl LprMatrices {
    pub fn gamma_inv(&self) -> &DMatrix<f64> {
        &self.gamma_inv
    }

    /// `e1' Γ⁻¹ Δ Γ⁻¹ e1`, the variance constant of the intercept.
    pub fn variance_constant(&self) -> f64 {
        let row = self.gamma_inv.row(0);
        (row * &self.delta * row.transpose())[(0, 0)]
    }

    /// `e1' Γ⁻¹ γ*`, the leading bias constant of the intercept.
    pub fn bias_constant(&self) -> f64 {
        (self.gamma_inv.row(0) * &self.gamma_star)[(0, 0)]
    }

    /// Equivalent kernel of the intercept, `e1' Γ⁻¹ (1, u, …, u^ρ)' K(u)`.
    pub fn equivalent_kernel(&self, kernel: &Kernel, u: f64) -> f64 {
        let row = self.gamma_inv.row(0);
        let mut acc = 0.0;
        let mut pow = 1.0;
        for j in 0..=self.order {
            acc += row[j] * pow;
            pow *= u;
        }
        acc * kernel.eval(u)
    }
}

fn positive_moment(kind: KernelKind, s: usize, t: usize) -> f64 {
    let sf = s as f64;
    match kind {
        KernelKind::Uniform => 0.5_f64.powi(t as i32) / (sf + 1.0),
        // Beta(s + 1, t + 1) = t! / ((s+1)(s+2)...(s+t+1))
        KernelKind::Triangular => {
            let mut num = 1.0;
            for j in 1..=t {
                num *= j as f64;
            }
            let mut den = 1.0;
            for j in 1..=(t + 1) {
                den *= sf + j as f64;
            }
            num / den
        }
        KernelKind::Epanechnikov => {
            let mut acc = 0.0;
            let mut binom = 1.0;
            for j in 0..=t {
                let sign = if j % 2 == 0 { 1.0 } else { -1.0 };
                acc += sign * binom / (sf + 2.0 * j as f64 + 1.0);
                binom = binom * (t - j) as f64 / (j + 1) as f64;
            }
            0.75_f64.powi(t as i32) * acc
        }
        KernelKind::Gaussian => {
            let g = half_integer_gamma(s + 1);
            if t == 1 {
                2f64.powf(sf / 2.0) * g / (2.0 * PI.sqrt())
            } else {
                g / (4.0 * PI)
            }
        }
    }
}

/// Γ(k / 2) for a positive integer `k`.
fn half_integer_gamma(k: usize) -> f64 {
    debug_assert!(k >= 1);
    let (mut x, mut g) = if k % 2 == 0 { (1.0, 1.0) } else { (0.5, PI.sqrt()) };
    let target = k as f64 / 2.0;
    while x < target - 1e-9 {
        g *= x;
        x += 1.0;
    }
    g
}
