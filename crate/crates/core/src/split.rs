//! Map raw data onto two labelled samples and apply the null-shifting
//! transformations used for test inversion.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::smooth::{EvalPoint, Family, Obs};

/// Raw input rows, with group labels (1 or 2) for two-sample problems.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub obs: Vec<Obs>,
    pub group: Option<Vec<u8>>,
}

impl Sample {
    pub fn new(obs: Vec<Obs>) -> Sample {
        Sample { obs, group: None }
    }

    pub fn with_groups(obs: Vec<Obs>, group: Vec<u8>) -> Sample {
        Sample { obs, group: Some(group) }
    }

    pub fn len(&self) -> usize {
        self.obs.len()
    }

    /// Rows in a seeded random order, for the random half-split of the
    /// density problem.
    pub fn shuffled(&self, seed: u64) -> Sample {
        use rand::seq::SliceRandom;
        let mut order: Vec<usize> = (0..self.obs.len()).collect();
        order.shuffle(&mut crate::rng::substream(seed, crate::rng::Purpose::DensitySplit, 0, 0));
        Sample {
            obs: order.iter().map(|&i| self.obs[i]).collect(),
            group: self.group.as_ref().map(|g| order.iter().map(|&i| g[i]).collect()),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.obs.is_empty()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "type")]
pub enum ProblemKind {
    TwoSampleMean { point: EvalPoint },
    TwoSampleQuantile { point: EvalPoint, chi: f64 },
    /// Sharp discontinuity of a conditional mean at `cutoff`.
    Rdd { cutoff: f64 },
    /// Discontinuity of a density at `point`.
    DensityJump { point: f64 },
}

impl ProblemKind {
    /// The parameter value at which the two populations agree.
    pub fn delta_null(&self) -> f64 {
        match self {
            ProblemKind::DensityJump { .. } => 1.0,
            _ => 0.0,
        }
    }

    pub fn is_ratio(&self) -> bool {
        matches!(self, ProblemKind::DensityJump { .. })
    }
}

/// Two samples stored back to back, sample 1 first. The label vector is
/// `n1` ones followed by `n - n1` twos and never changes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Problem {
    pub kind: ProblemKind,
    pub obs: Vec<Obs>,
    pub n1: usize,
}

impl Problem {
    /// Assemble a problem from already transformed samples.
    pub fn from_samples(kind: ProblemKind, sample1: Vec<Obs>, sample2: Vec<Obs>) -> Result<Problem> {
        if sample1.is_empty() || sample2.is_empty() {
            return Err(Error::DegenerateSplit(format!(
                "sample sizes are {} and {}; both must be positive",
                sample1.len(),
                sample2.len()
            )));
        }
        let n1 = sample1.len();
        let mut obs = sample1;
        obs.extend(sample2);
        Ok(Problem { kind, obs, n1 })
    }

    pub fn n(&self) -> usize {
        self.obs.len()
    }

    pub fn n2(&self) -> usize {
        self.obs.len() - self.n1
    }

    pub fn sample1(&self) -> &[Obs] {
        &self.obs[..self.n1]
    }

    pub fn sample2(&self) -> &[Obs] {
        &self.obs[self.n1..]
    }

    pub fn labels(&self) -> Vec<u8> {
        (0..self.n()).map(|i| if i < self.n1 { 1 } else { 2 }).collect()
    }

    /// Evaluation point in the transformed coordinates.
    pub fn eval_point(&self) -> EvalPoint {
        match self.kind {
            ProblemKind::TwoSampleMean { point } | ProblemKind::TwoSampleQuantile { point, .. } => point,
            ProblemKind::Rdd { .. } => EvalPoint::boundary(0.0),
            ProblemKind::DensityJump { .. } => EvalPoint::interior(0.0),
        }
    }

    /// Check that an estimator family targets this problem's parameter.
    pub fn check_family(&self, family: &Family) -> Result<()> {
        let ok = match (self.kind, family) {
            (ProblemKind::TwoSampleMean { .. } | ProblemKind::Rdd { .. }, f) => f.is_mean(),
            (ProblemKind::TwoSampleQuantile { chi, .. }, Family::LocalQuantile { chi: c }) => chi == *c,
            (ProblemKind::DensityJump { .. }, Family::DensityEdge) => true,
            _ => false,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::Unsupported(format!("estimator family {family:?} does not match problem {:?}", self.kind)))
        }
    }
}

/// Split and transform raw rows for `kind`.
///
/// Two-sample kinds keep input order within each group. RDD rows with
/// `x >= cutoff` form sample 1; both sides are re-expressed as distances
/// from the cutoff. Density problems put the first `⌊n/2⌋` rows in sample 1
/// and negate sample 2 around the point.
pub fn build_problem(raw: &Sample, kind: ProblemKind) -> Result<Problem> {
    if raw.is_empty() {
        return Err(Error::DegenerateSplit("no observations".into()));
    }
    match kind {
        ProblemKind::TwoSampleMean { .. } | ProblemKind::TwoSampleQuantile { .. } => {
            let group = raw
                .group
                .as_ref()
                .ok_or_else(|| Error::InvalidInput("two-sample problems need a group column".into()))?;
            if group.len() != raw.len() {
                return Err(Error::InvalidInput(format!(
                    "{} group labels for {} observations",
                    group.len(),
                    raw.len()
                )));
            }
            let (mut s1, mut s2) = (Vec::new(), Vec::new());
            for (i, (&g, &o)) in group.iter().zip(&raw.obs).enumerate() {
                match g {
                    1 => s1.push(o),
                    2 => s2.push(o),
                    other => {
                        return Err(Error::InvalidInput(format!("row {i}: group label {other} is not 1 or 2")))
                    }
                }
            }
            Problem::from_samples(kind, s1, s2)
        }
        ProblemKind::Rdd { cutoff } => {
            let (mut s1, mut s2) = (Vec::new(), Vec::new());
            for &o in &raw.obs {
                if o.x >= cutoff {
                    s1.push(Obs { x: o.x - cutoff, ..o });
                } else {
                    s2.push(Obs { x: cutoff - o.x, ..o });
                }
            }
            Problem::from_samples(kind, s1, s2)
        }
        ProblemKind::DensityJump { point } => {
            let n1 = raw.len() / 2;
            let s1 = raw.obs[..n1].iter().map(|o| Obs { x: o.x - point, ..*o }).collect();
            let s2 = raw.obs[n1..].iter().map(|o| Obs { x: point - o.x, ..*o }).collect();
            Problem::from_samples(kind, s1, s2)
        }
    }
}

/// Transform sample 1 so that the parameter value `delta` maps to the
/// null value: `y - δ` for location parameters, and `x δ` / `x / δ` on the
/// right / left of the point for the density ratio.
pub fn apply_delta(p: &Problem, delta: f64) -> Result<Problem> {
    if !delta.is_finite() {
        return Err(Error::InvalidDelta { delta, reason: "must be finite" });
    }
    let mut out = p.clone();
    let s1 = &mut out.obs[..p.n1];
    match p.kind {
        ProblemKind::DensityJump { .. } => {
            if delta <= 0.0 {
                return Err(Error::InvalidDelta { delta, reason: "density ratios require a positive delta" });
            }
            if delta != 1.0 {
                for o in s1 {
                    o.x = if o.x >= 0.0 { o.x * delta } else { o.x / delta };
                }
            }
        }
        _ => {
            if delta != 0.0 {
                for o in s1 {
                    o.y -= delta;
                }
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn xs(v: &[f64]) -> Vec<Obs> {
        v.iter().map(|&x| Obs::new(x, x * 10.0)).collect()
    }

    #[test]
    fn shuffle_is_a_seeded_permutation() {
        let raw = Sample::with_groups(xs(&[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]), vec![1, 1, 1, 2, 2, 2]);
        let a = raw.shuffled(3);
        assert_eq!(a, raw.shuffled(3));
        let mut x: Vec<f64> = a.obs.iter().map(|o| o.x).collect();
        for (o, g) in a.obs.iter().zip(a.group.as_ref().unwrap()) {
            assert_eq!(*g, if o.x <= 3.0 { 1 } else { 2 });
        }
        x.sort_by(f64::total_cmp);
        assert_eq!(x, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
    }

    #[test]
    fn rdd_split_and_reflection() {
        let p = build_problem(&Sample::new(xs(&[-1.0, 2.0, -3.0, 4.0])), ProblemKind::Rdd { cutoff: 0.0 }).unwrap();
        assert_eq!(p.n1, 2);
        assert_eq!(p.sample1().iter().map(|o| o.x).collect::<Vec<_>>(), vec![2.0, 4.0]);
        assert_eq!(p.sample2().iter().map(|o| o.x).collect::<Vec<_>>(), vec![1.0, 3.0]);
        assert_eq!(p.sample2()[0].y, -10.0);
        // Per-row labels in input order are {2, 1, 2, 1}.
        let raw = [-1.0, 2.0, -3.0, 4.0];
        let lab: Vec<u8> = raw.iter().map(|&x| if x >= 0.0 { 1 } else { 2 }).collect();
        assert_eq!(lab, vec![2, 1, 2, 1]);
        assert_eq!(p.labels(), vec![1, 1, 2, 2]);
    }

    #[test]
    fn rdd_cutoff_row_is_treated() {
        let p = build_problem(&Sample::new(xs(&[0.5, 0.2, 1.0])), ProblemKind::Rdd { cutoff: 0.5 }).unwrap();
        assert_eq!(p.n1, 2);
        assert_eq!(p.sample1()[0].x, 0.0);
    }

    #[test]
    fn rdd_one_sided_is_degenerate() {
        let err = build_problem(&Sample::new(xs(&[1.0, 2.0])), ProblemKind::Rdd { cutoff: 0.0 }).unwrap_err();
        assert!(matches!(err, Error::DegenerateSplit(_)));
    }

    #[test]
    fn density_floor_split() {
        let p = build_problem(&Sample::new(xs(&[1.0, 2.0, 3.0, 4.0, 5.0])), ProblemKind::DensityJump { point: 0.0 })
            .unwrap();
        assert_eq!((p.n1, p.n2()), (2, 3));
        assert_eq!(p.sample2().iter().map(|o| o.x).collect::<Vec<_>>(), vec![-3.0, -4.0, -5.0]);
        assert!(build_problem(&Sample::new(xs(&[1.0])), ProblemKind::DensityJump { point: 0.0 }).is_err());
    }

    #[test]
    fn two_sample_groups() {
        let kind = ProblemKind::TwoSampleMean { point: EvalPoint::interior(0.0) };
        let p = build_problem(&Sample::with_groups(xs(&[1.0, 2.0, 3.0]), vec![1, 2, 1]), kind).unwrap();
        assert_eq!((p.n1, p.n2()), (2, 1));
        assert_eq!(p.sample1().iter().map(|o| o.x).collect::<Vec<_>>(), vec![1.0, 3.0]);
        assert!(build_problem(&Sample::new(xs(&[1.0])), kind).is_err());
        assert!(build_problem(&Sample::with_groups(xs(&[1.0, 2.0]), vec![1, 3]), kind).is_err());
    }

    #[test]
    fn delta_examples() {
        let kind = ProblemKind::TwoSampleMean { point: EvalPoint::interior(0.0) };
        let p = Problem::from_samples(kind, vec![Obs::new(0.0, 3.0), Obs::new(0.1, 5.0)], vec![Obs::new(0.0, 1.0)])
            .unwrap();
        assert_eq!(apply_delta(&p, 0.0).unwrap(), p);
        let q = apply_delta(&p, 2.0).unwrap();
        assert_eq!(q.sample1().iter().map(|o| o.y).collect::<Vec<_>>(), vec![1.0, 3.0]);
        assert_eq!(q.sample2(), p.sample2());

        let d = Problem::from_samples(
            ProblemKind::DensityJump { point: 0.0 },
            vec![Obs::scalar(0.5), Obs::scalar(-0.5)],
            vec![Obs::scalar(0.1)],
        )
        .unwrap();
        let t = apply_delta(&d, 2.0).unwrap();
        assert_eq!(t.sample1().iter().map(|o| o.x).collect::<Vec<_>>(), vec![1.0, -0.25]);
        assert_eq!(apply_delta(&d, 1.0).unwrap(), d);
        assert!(matches!(apply_delta(&d, 0.0), Err(Error::InvalidDelta { .. })));
        assert!(matches!(apply_delta(&d, -1.0), Err(Error::InvalidDelta { .. })));
    }

    #[test]
    fn family_compatibility() {
        let p = Problem::from_samples(ProblemKind::Rdd { cutoff: 0.0 }, xs(&[1.0]), xs(&[2.0])).unwrap();
        assert!(p.check_family(&Family::LprMean { order: 1 }).is_ok());
        assert!(p.check_family(&Family::DensityEdge).is_err());
        assert_eq!(p.eval_point(), EvalPoint::boundary(0.0));
    }
}
