use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("kernel moment with s={s}, t={t} is not supported (t must be 1 or 2)")]
    UnsupportedMoment { s: usize, t: usize },

    #[error("moment matrix for {kernel} kernel of order {order} is numerically singular (condition number {condition:.3e})")]
    SingularMoments {
        kernel: &'static str,
        order: usize,
        condition: f64,
    },

    #[error("empty estimation window at x={x} with h={h} (n_eff={n_eff}, need {required})")]
    EmptyWindow {
        x: f64,
        h: f64,
        n_eff: usize,
        required: usize,
    },

    #[error("weighted design of order {order} is rank deficient")]
    SingularFit { order: usize },

    #[error("plug-in bias denominator {what} = {value:.3e} is below the floor; try the order-bump bias mode")]
    BiasUnstable { what: &'static str, value: f64 },

    #[error("plug-in variance denominator {what} = {value:.3e} is below the floor")]
    VarianceUnstable { what: &'static str, value: f64 },

    #[error("sample split is degenerate: {0}")]
    DegenerateSplit(String),

    #[error("invalid delta {delta}: {reason}")]
    InvalidDelta { delta: f64, reason: &'static str },

    #[error("studentized statistic has zero variance estimate with nonzero numerator")]
    DegenerateVariance,

    #[error("{what}: {failures} estimator failures exceeded the retry cap of {cap}")]
    RetryCapExceeded {
        what: &'static str,
        failures: usize,
        cap: usize,
    },

    #[error("subsample too small for estimation: {0}")]
    DegenerateSubsample(String),

    #[error("bandwidth selection failed: {0}")]
    BandwidthFailure(String),

    #[error("unsupported combination: {0}")]
    Unsupported(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("{0}")]
    Simulation(String),
}
