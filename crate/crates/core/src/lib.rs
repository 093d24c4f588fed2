//! Studentized two-sample permutation tests for parameters estimated at
//! nonparametric rates: kernel and local polynomial estimators, the
//! permutation engine, comparator tests, confidence sets, bandwidth
//! selection and a simulation harness.

pub mod bandwidth;
pub mod compare;
pub mod confset;
pub mod error;
pub mod kernel;
pub mod permute;
pub mod rng;
pub mod simlab;
pub mod smooth;
pub mod split;

pub use bandwidth::{ik_bandwidth, BandwidthChoice, BandwidthRule, IkConfig};
pub use compare::{CompareConfig, ComparatorReport, Method};
pub use confset::{invert, ConfidenceSet, GridSpec, Inclusion, InvertMode};
pub use error::{Error, Result};
pub use kernel::{Kernel, KernelKind};
pub use permute::{statistic, test, test_both, PermMode, PermPlan, Reference, StatKind, StatValue, TestReport, TiePolicy};
pub use smooth::{
    estimate, BiasMode, BoundaryBiasMoment, EstimateResult, EstimatorSpec, EvalPoint, Family, Obs, PointSide,
    VarianceMode,
};
pub use split::{apply_delta, build_problem, Problem, ProblemKind, Sample};
