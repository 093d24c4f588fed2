//! Monte Carlo designs, rejection-rate tables and power curves.

mod power;
mod table;

pub use power::{power_curve, PowerCurve, PowerPoint};
pub use table::{coverage, rejection_table, Coverage, HRule, MethodId, SimCell, SimOptions, SimTable};

use rand::Rng;
use rand_distr::{Beta, Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernel::Kernel;
use crate::rng::{substream, Purpose};
use crate::smooth::{BiasMode, EstimatorSpec, EvalPoint, Family, Obs, VarianceMode};
use crate::split::{build_problem, Problem, ProblemKind, Sample};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DesignId {
    /// Controlled means `g₁`, `g₂` that agree and vanish near 0.5.
    Design1,
    /// Ratio of controlled means `(1 + g_k)/μ`.
    Design2,
    /// Linear model with OLS intercepts.
    Example1,
    /// Identical nonlinear mean in both samples; with equal variances the
    /// samples are equal in law up to `shift`.
    SharpNullCustom,
    /// Asymmetric density continuous at 0 for the density-edge test.
    DensityNull,
}

impl DesignId {
    pub fn name(self) -> &'static str {
        match self {
            DesignId::Design1 => "design1",
            DesignId::Design2 => "design2",
            DesignId::Example1 => "example1",
            DesignId::SharpNullCustom => "sharp_null_custom",
            DesignId::DensityNull => "density_null",
        }
    }
}

impl std::str::FromStr for DesignId {
    type Err = Error;
    fn from_str(s: &str) -> Result<DesignId> {
        Ok(match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "design1" | "d1" => DesignId::Design1,
            "design2" | "d2" => DesignId::Design2,
            "example1" => DesignId::Example1,
            "sharp_null_custom" | "sharp" => DesignId::SharpNullCustom,
            "density_null" | "density" => DesignId::DensityNull,
            other => return Err(Error::InvalidInput(format!("unknown design '{other}'"))),
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Design {
    pub id: DesignId,
    /// Error variances `(σ₁², σ₂²)`.
    pub sigma2: [f64; 2],
    /// Sample sizes; the density design uses `n[0] + n[1]` observations.
    pub n: [usize; 2],
    /// Denominator mean for `design2`.
    pub mu: f64,
    /// Location shift added to sample 1 outcomes.
    pub shift: f64,
}

pub fn g1(x: f64) -> f64 {
    if (x - 0.5).abs() > 0.3 {
        5.0 * (x - 0.2) * (x - 0.8)
    } else {
        0.0
    }
}

pub fn g2(x: f64) -> f64 {
    if (x - 0.5).abs() > 0.3 {
        -15.0 * (x - 0.2) * (x - 0.8)
    } else {
        0.0
    }
}

impl Design {
    pub fn design1(sigma2: [f64; 2], n: [usize; 2]) -> Design {
        Design { id: DesignId::Design1, sigma2, n, mu: 1.0, shift: 0.0 }
    }

    pub fn design2(sigma2: [f64; 2], mu: f64, n: [usize; 2]) -> Design {
        Design { id: DesignId::Design2, sigma2, n, mu, shift: 0.0 }
    }

    pub fn example1() -> Design {
        Design { id: DesignId::Example1, sigma2: [5.0, 1.0], n: [20, 980], mu: 1.0, shift: 0.0 }
    }

    pub fn sharp_null(sigma2: f64, n: [usize; 2]) -> Design {
        Design { id: DesignId::SharpNullCustom, sigma2: [sigma2, sigma2], n, mu: 1.0, shift: 0.0 }
    }

    pub fn density_null(n: usize) -> Design {
        Design { id: DesignId::DensityNull, sigma2: [0.0, 0.0], n: [n / 2, n - n / 2], mu: 1.0, shift: 0.0 }
    }

    pub fn with_shift(mut self, shift: f64) -> Design {
        self.shift = shift;
        self
    }

    pub fn kind(&self) -> ProblemKind {
        match self.id {
            DesignId::Example1 => ProblemKind::TwoSampleMean { point: EvalPoint::boundary(0.0) },
            DesignId::DensityNull => ProblemKind::DensityJump { point: 0.0 },
            _ => ProblemKind::TwoSampleMean { point: EvalPoint::interior(0.5) },
        }
    }

    /// Value of the parameter `δ` at which the data are null after `ψ_δ`.
    pub fn true_delta(&self) -> f64 {
        match self.id {
            DesignId::Design2 => self.shift / self.mu,
            DesignId::DensityNull => 1.0,
            _ => self.shift,
        }
    }

    /// Estimator used for the design in the simulations.
    pub fn default_spec(&self) -> EstimatorSpec {
        match self.id {
            DesignId::Design1 | DesignId::SharpNullCustom => EstimatorSpec::new(Family::LprMean { order: 1 }),
            DesignId::Design2 => EstimatorSpec::new(Family::MeanRatio { order: 1 }),
            DesignId::Example1 => EstimatorSpec::new(Family::LprMean { order: 1 })
                .with_kernel(Kernel::uniform())
                .with_bias(BiasMode::None)
                .with_variance(VarianceMode::Sandwich),
            DesignId::DensityNull => EstimatorSpec::new(Family::DensityEdge).with_bias(BiasMode::None),
        }
    }

    fn validate(&self) -> Result<()> {
        let ok_n = self.n.iter().all(|&k| k >= 2);
        let ok_s = self.id == DesignId::DensityNull || self.sigma2.iter().all(|&s| s.is_finite() && s > 0.0);
        let ok_mu = self.id != DesignId::Design2 || (self.mu.is_finite() && self.mu != 0.0);
        if ok_n && ok_s && ok_mu && self.shift.is_finite() {
            Ok(())
        } else {
            Err(Error::InvalidInput(format!("invalid design parameters {self:?}")))
        }
    }
}

/// One simulated problem for replication `rep`.
pub fn draw(design: &Design, seed: u64, rep: u64) -> Result<Problem> {
    design.validate()?;
    let mut rng = substream(seed, Purpose::Simulation, rep, 0);
    if design.id == DesignId::DensityNull {
        let beta = Beta::new(2.0, 3.0).map_err(|e| Error::Simulation(e.to_string()))?;
        let obs: Vec<Obs> =
            (0..design.n[0] + design.n[1]).map(|_| Obs::scalar(beta.sample(&mut rng) - 1.0 / 3.0)).collect();
        return build_problem(&Sample::new(obs), design.kind());
    }
    let mut samples = Vec::with_capacity(2);
    for k in 0..2 {
        let noise = Normal::new(0.0, design.sigma2[k].sqrt()).map_err(|e| Error::Simulation(e.to_string()))?;
        let unit = Normal::new(0.0, 1.0).unwrap();
        let shift = if k == 0 { design.shift } else { 0.0 };
        let g = if k == 0 { g1 } else { g2 };
        let obs: Vec<Obs> = (0..design.n[k])
            .map(|_| {
                let x: f64 = rng.random();
                let e = noise.sample(&mut rng);
                match design.id {
                    DesignId::Design1 => Obs::new(x, g(x) + e + shift),
                    DesignId::Design2 => {
                        let d = design.mu + unit.sample(&mut rng);
                        Obs::with_d(x, 1.0 + g(x) + e + shift, d)
                    }
                    DesignId::Example1 => Obs::new(x, (x - 0.5) + e + shift),
                    _ => Obs::new(x, 5.0 * (x - 0.2) * (x - 0.8) + e + shift),
                }
            })
            .collect();
        samples.push(obs);
    }
    let s2 = samples.pop().unwrap();
    let s1 = samples.pop().unwrap();
    Problem::from_samples(design.kind(), s1, s2)
}
