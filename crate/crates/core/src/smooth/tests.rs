use super::*;
use crate::kernel::KernelKind;
use approx::assert_abs_diff_eq;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn uniform_rows(n: usize, seed: u64, m: impl Fn(f64) -> f64, sd: f64) -> Vec<Obs> {
    let mut r = rng(seed);
    (0..n)
        .map(|_| {
            let x: f64 = r.random();
            let e: f64 = StandardNormal.sample(&mut r);
            Obs::new(x, m(x) + sd * e)
        })
        .collect()
}

fn spec(family: Family, bias: BiasMode, variance: VarianceMode) -> EstimatorSpec {
    EstimatorSpec::new(family).with_bias(bias).with_variance(variance)
}

#[test]
fn nw_constant_and_single_point() {
    let k = Kernel::triangular();
    let data: Vec<Obs> = (0..20).map(|i| Obs::new(i as f64 / 19.0, 4.25)).collect();
    for h in [0.1, 0.5, 3.0] {
        assert_eq!(nw_mean(&data, EvalPoint::interior(0.5), h, &k).unwrap(), 4.25);
    }
    let one = [Obs::new(0.3, 7.0)];
    assert_eq!(nw_mean(&one, EvalPoint::interior(0.3), 1.0, &k).unwrap(), 7.0);
}

#[test]
fn nw_hand_computed() {
    let data = [Obs::new(-0.5, 0.0), Obs::new(0.0, 1.0), Obs::new(0.5, 2.0)];
    let v = nw_mean(&data, EvalPoint::interior(0.0), 1.0, &Kernel::uniform()).unwrap();
    assert_abs_diff_eq!(v, 1.0, epsilon = 1e-15);
}

#[test]
fn nw_empty_window() {
    let data = [Obs::new(5.0, 1.0)];
    let err = nw_mean(&data, EvalPoint::interior(0.0), 1.0, &Kernel::triangular()).unwrap_err();
    assert_eq!(err, Error::EmptyWindow { x: 0.0, h: 1.0, n_eff: 0, required: 1 });
}

#[test]
fn lpr_line_exact() {
    let data: Vec<Obs> = (0..30).map(|i| {
        let r = -1.0 + i as f64 / 14.5;
        Obs::new(r, 2.0 + 3.0 * r)
    }).collect();
    for kind in KernelKind::ALL {
        let fit = lpr_fit(&data, EvalPoint::interior(0.0), 0.7, &Kernel::new(kind), 1).unwrap();
        assert_abs_diff_eq!(fit.coef[0], 2.0, epsilon = 1e-10);
        assert_abs_diff_eq!(fit.coef[1], 3.0 * 0.7, epsilon = 1e-10);
    }
}

#[test]
fn lpr_order_zero_is_nw() {
    let data = uniform_rows(200, 3, |x| x.sin(), 0.5);
    let k = Kernel::triangular();
    let p = EvalPoint::interior(0.4);
    let a = lpr_fit(&data, p, 0.2, &k, 0).unwrap().coef[0];
    let b = nw_mean(&data, p, 0.2, &k).unwrap();
    assert_abs_diff_eq!(a, b, epsilon = 1e-12);
}

#[test]
fn lpr_boundary_quadratic_exact() {
    let data: Vec<Obs> = (0..25).map(|i| {
        let r = i as f64 / 20.0;
        Obs::new(r, r * r)
    }).collect();
    let fit = lpr_fit(&data, EvalPoint::boundary(0.0), 1.0, &Kernel::triangular(), 2).unwrap();
    assert_abs_diff_eq!(fit.coef[0], 0.0, epsilon = 1e-12);
    let direct: f64 = fit.equivalent_weights.iter().zip(&fit.rows).map(|(l, o)| l * o.y).sum();
    assert_abs_diff_eq!(direct, fit.coef[0], epsilon = 1e-12);
    assert_eq!(fit.residuals.len(), fit.rows.len());
}

#[test]
fn lpr_boundary_ignores_left_rows() {
    let mut data: Vec<Obs> = (0..25).map(|i| Obs::new(i as f64 / 20.0, 1.0)).collect();
    data.push(Obs::new(-0.1, 100.0));
    let fit = lpr_fit(&data, EvalPoint::boundary(0.0), 1.0, &Kernel::triangular(), 1).unwrap();
    assert_abs_diff_eq!(fit.coef[0], 1.0, epsilon = 1e-12);
}

#[test]
fn lpr_rank_deficient() {
    let data: Vec<Obs> = (0..10).map(|i| Obs::new(0.0, i as f64)).collect();
    let err = lpr_fit(&data, EvalPoint::interior(0.0), 1.0, &Kernel::triangular(), 1).unwrap_err();
    assert_eq!(err, Error::SingularFit { order: 1 });
}

#[test]
fn lpr_too_few_rows() {
    let data = [Obs::new(0.0, 1.0), Obs::new(0.1, 2.0)];
    let err = lpr_fit(&data, EvalPoint::interior(0.0), 1.0, &Kernel::triangular(), 1).unwrap_err();
    assert!(matches!(err, Error::EmptyWindow { n_eff: 2, required: 3, .. }));
}

fn check_loss(data: &[Obs], p: EvalPoint, h: f64, k: &Kernel, chi: f64, a: f64) -> f64 {
    data.iter()
        .map(|o| {
            let u = o.y - a;
            let w = if p.side == PointSide::BoundaryRight && o.x < p.x { 0.0 } else { k.eval((o.x - p.x) / h) };
            w * u * (chi - if u < 0.0 { 1.0 } else { 0.0 })
        })
        .sum()
}

#[test]
fn quantile_examples() {
    let k = Kernel::uniform();
    let data = [Obs::new(0.0, 1.0), Obs::new(0.0, 2.0), Obs::new(0.0, 3.0), Obs::new(0.0, 4.0)];
    let p = EvalPoint::interior(0.0);
    let q = local_quantile(&data, p, 1.0, &k, 0.25).unwrap();
    assert_eq!(q, 1.0);
    // Grid minimisation of the check loss agrees.
    let best = (0..=500)
        .map(|i| 0.5 + i as f64 * 0.01)
        .map(|a| (check_loss(&data, p, 1.0, &k, 0.25, a), a))
        .fold((f64::INFINITY, 0.0), |acc, v| if v.0 < acc.0 - 1e-12 { v } else { acc });
    assert_abs_diff_eq!(best.1, 1.0, epsilon = 1e-9);

    let odd: Vec<Obs> = [5.0, 1.0, 9.0, 3.0, 7.0].iter().map(|&y| Obs::new(0.1, y)).collect();
    assert_eq!(local_quantile(&odd, p, 1.0, &k, 0.5).unwrap(), 5.0);
    let flat: Vec<Obs> = (0..7).map(|i| Obs::new(i as f64 / 10.0, 2.5)).collect();
    for chi in [0.1, 0.5, 0.9] {
        assert_eq!(local_quantile(&flat, p, 1.0, &Kernel::triangular(), chi).unwrap(), 2.5);
    }
    assert!(local_quantile(&flat, p, 1.0, &k, 1.0).is_err());
}

#[test]
fn density_edge_examples() {
    let k = Kernel::triangular();
    let mut r = rng(9);
    let half: Vec<f64> = (0..101).map(|_| r.random::<f64>() * 0.7 + 1e-3).collect();
    let sym: Vec<f64> = half.iter().flat_map(|&v| [v, -v]).collect();
    assert_eq!(density_edge(&sym, 0.3, &k).unwrap(), 0.0);
    let far = [2.0, 3.0, -5.0];
    assert_eq!(density_edge(&far, 1.0, &k).unwrap(), 0.0);
    let four = [-0.5, -0.25, 0.25, 0.5];
    assert_eq!(density_edge(&four, 1.0, &Kernel::uniform()).unwrap(), 0.0);
    assert!(density_edge(&four, 0.0, &k).is_err());
}

#[test]
fn plugin_bias_vanishes_for_linear_mean() {
    let data = uniform_rows(10_000, 11, |x| 1.0 + 2.0 * x, 0.0);
    let s = spec(Family::NwMean, BiasMode::Plugin, VarianceMode::Plugin);
    let b = bias_hat(&data, EvalPoint::interior(0.5), 0.1, &s).unwrap();
    assert!(b.abs() < 0.05, "B = {b}");
}

#[test]
fn plugin_bias_interior_nw_matches_quadratic_mean() {
    // m = x², f uniform: B = κ21 m''/2 = κ21.
    let data = uniform_rows(20_000, 12, |x| x * x, 0.1);
    let s = spec(Family::NwMean, BiasMode::Plugin, VarianceMode::Plugin);
    let e = estimate(&data, EvalPoint::interior(0.5), 0.08, &s).unwrap();
    let k21 = 1.0 / 6.0;
    assert!((e.bias_hat - k21).abs() < 0.15 * k21, "B = {}", e.bias_hat);
    assert_eq!(e.bias_exponent, 2);
    assert!((e.theta - 0.25).abs() < (e.theta_b - 0.25).abs());
}

fn linear_density_sample(n: usize, c: f64, seed: u64) -> Vec<f64> {
    // f(x) = 1/2 + c x on [-1, 1]; inverse of F(x) = (x+1)/2 + c (x² - 1)/2.
    let mut r = rng(seed);
    (0..n)
        .map(|_| {
            let u: f64 = r.random();
            let (a, b, cc) = (c / 2.0, 0.5, 0.5 - c / 2.0 - u);
            (-b + (b * b - 4.0 * a * cc).sqrt()) / (2.0 * a)
        })
        .collect()
}

#[test]
fn plugin_bias_density_linear_sides() {
    let c = 0.3;
    let xs = linear_density_sample(50_000, c, 13);
    let rows: Vec<Obs> = xs.iter().map(|&x| Obs::scalar(x)).collect();
    let s = spec(Family::DensityEdge, BiasMode::Plugin, VarianceMode::Plugin);
    let b = bias_hat(&rows, EvalPoint::interior(0.0), 0.2, &s).unwrap();
    let target = (1.0 / 6.0) * 2.0 * c;
    assert!((b - target).abs() < 0.15 * target, "B = {b}, target {target}");
}

#[test]
fn order_bump_has_zero_bias() {
    let data = uniform_rows(500, 14, |x| (3.0 * x).sin(), 0.3);
    let s = spec(Family::LprMean { order: 1 }, BiasMode::OrderBump, VarianceMode::NnMatched { neighbors: 3 });
    assert_eq!(bias_hat(&data, EvalPoint::interior(0.5), 0.2, &s).unwrap(), 0.0);
}

#[test]
fn xi2_plugin_mean_target() {
    let data = uniform_rows(20_000, 15, |_| 0.0, 1.0);
    let s = spec(Family::NwMean, BiasMode::None, VarianceMode::Plugin);
    let xi2 = xi2_hat(&data, EvalPoint::interior(0.5), 0.1, &s).unwrap();
    assert!((xi2 - 2.0 / 3.0).abs() < 0.1 * 2.0 / 3.0, "xi2 = {xi2}");
}

#[test]
fn xi2_plugin_density_target() {
    let mut r = rng(16);
    let rows: Vec<Obs> = (0..20_000).map(|_| Obs::scalar(r.random::<f64>() * 2.0 - 1.0)).collect();
    let s = spec(Family::DensityEdge, BiasMode::None, VarianceMode::Plugin);
    let xi2 = xi2_hat(&rows, EvalPoint::interior(0.0), 0.1, &s).unwrap();
    assert!((xi2 - 1.0 / 3.0).abs() < 0.1 / 3.0, "xi2 = {xi2}");
    let sw = spec(Family::DensityEdge, BiasMode::None, VarianceMode::Sandwich);
    let xi2s = xi2_hat(&rows, EvalPoint::interior(0.0), 0.1, &sw).unwrap();
    assert!((xi2s - 1.0 / 3.0).abs() < 0.1 / 3.0, "sandwich xi2 = {xi2s}");
}

#[test]
fn xi2_plugin_quantile_target() {
    let mut r = rng(17);
    let rows: Vec<Obs> = (0..20_000).map(|_| Obs::new(r.random(), r.random())).collect();
    let s = spec(Family::LocalQuantile { chi: 0.5 }, BiasMode::None, VarianceMode::Plugin);
    let xi2 = xi2_hat(&rows, EvalPoint::interior(0.5), 0.1, &s).unwrap();
    let target = (2.0 / 3.0) * 0.25;
    assert!((xi2 - target).abs() < 0.1 * target, "xi2 = {xi2}");
}

#[test]
fn quantile_rejects_unsupported_modes() {
    let rows = uniform_rows(100, 18, |_| 0.0, 1.0);
    let p = EvalPoint::interior(0.5);
    let bump = spec(Family::LocalQuantile { chi: 0.5 }, BiasMode::OrderBump, VarianceMode::Plugin);
    assert!(matches!(estimate(&rows, p, 0.3, &bump), Err(Error::Unsupported(_))));
    let nn = spec(Family::LocalQuantile { chi: 0.5 }, BiasMode::None, VarianceMode::NnMatched { neighbors: 3 });
    assert!(matches!(estimate(&rows, p, 0.3, &nn), Err(Error::Unsupported(_))));
}

#[test]
fn constant_data_estimate() {
    let data: Vec<Obs> = (0..200).map(|i| Obs::new(i as f64 / 199.0, -1.5)).collect();
    for fam in [Family::NwMean, Family::LprMean { order: 1 }] {
        for bias in [BiasMode::Plugin, BiasMode::OrderBump, BiasMode::None] {
            let e = estimate(&data, EvalPoint::interior(0.5), 0.2, &spec(fam, bias, VarianceMode::Plugin)).unwrap();
            assert_abs_diff_eq!(e.theta, -1.5, epsilon = 1e-10);
            assert_abs_diff_eq!(e.bias_hat, 0.0, epsilon = 1e-8);
        }
    }
}

#[test]
fn boundary_order_bump_is_local_quadratic() {
    let data = uniform_rows(400, 19, |x| (2.0 * x).exp(), 0.2);
    let p = EvalPoint::boundary(0.0);
    let k = Kernel::triangular();
    let s = spec(Family::LprMean { order: 1 }, BiasMode::OrderBump, VarianceMode::Sandwich);
    let e = estimate(&data, p, 0.4, &s).unwrap();
    let fit = lpr_fit(&data, p, 0.4, &k, 2).unwrap();
    assert_abs_diff_eq!(e.theta, fit.coef[0], epsilon = 1e-12);
    assert_eq!(e.order, 2);
}

fn g1(x: f64) -> f64 {
    if (x - 0.5).abs() > 0.3 {
        5.0 * (x - 0.2) * (x - 0.8)
    } else {
        0.0
    }
}

#[test]
fn design_one_estimate_is_centred() {
    let s = EstimatorSpec::new(Family::LprMean { order: 1 });
    let mut z = Vec::new();
    for rep in 0..200 {
        let data = uniform_rows(2_000, 100 + rep, g1, 1.0);
        let e = estimate(&data, EvalPoint::interior(0.5), 0.1, &s).unwrap();
        z.push(e.theta / (e.xi2_hat / (2_000.0 * 0.1)).sqrt());
    }
    let mean = z.iter().sum::<f64>() / z.len() as f64;
    let var = z.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (z.len() - 1) as f64;
    // Standardised estimates: mean 0 and variance near 1.
    assert!(mean.abs() < 3.0 / (z.len() as f64).sqrt(), "mean z = {mean}");
    assert!((0.75..1.3).contains(&var), "var z = {var}");
}

#[test]
fn estimate_is_row_order_invariant() {
    let data = uniform_rows(300, 20, |x| x * x, 0.5);
    let mut rev = data.clone();
    rev.reverse();
    let mut r = rng(21);
    let mut shuffled = data.clone();
    for i in (1..shuffled.len()).rev() {
        let j = r.random_range(0..=i);
        shuffled.swap(i, j);
    }
    let p = EvalPoint::interior(0.5);
    for s in [
        EstimatorSpec::new(Family::LprMean { order: 1 }),
        spec(Family::NwMean, BiasMode::Plugin, VarianceMode::Plugin),
        spec(Family::LprMean { order: 1 }, BiasMode::None, VarianceMode::Sandwich),
        spec(Family::LocalQuantile { chi: 0.3 }, BiasMode::Plugin, VarianceMode::Plugin),
    ] {
        let a = estimate(&data, p, 0.25, &s).unwrap();
        assert_eq!(a, estimate(&rev, p, 0.25, &s).unwrap());
        assert_eq!(a, estimate(&shuffled, p, 0.25, &s).unwrap());
    }
}

#[test]
fn ols_intercept_sandwich_matches_closed_form() {
    // Uniform kernel, h = 1 at the left edge of U[0,1] is ordinary least
    // squares, whose intercept has n Var = E[(S - m)² (4 - 6R)²] = 4 v.
    let v: f64 = 5.0;
    let data = uniform_rows(20_000, 22, |x| x - 0.5, v.sqrt());
    let s = spec(Family::LprMean { order: 1 }, BiasMode::None, VarianceMode::Sandwich).with_kernel(Kernel::uniform());
    let e = estimate(&data, EvalPoint::boundary(0.0), 1.0, &s).unwrap();
    assert!((e.xi2_hat - 4.0 * v).abs() < 0.05 * 4.0 * v, "xi2 = {}", e.xi2_hat);
    let pl = s.with_variance(VarianceMode::Plugin);
    let e2 = estimate(&data, EvalPoint::boundary(0.0), 1.0, &pl).unwrap();
    assert!((e2.xi2_hat - 4.0 * v).abs() < 0.05 * 4.0 * v, "plugin xi2 = {}", e2.xi2_hat);
}

#[test]
fn boundary_nw_variance_matches_quarter_density_form() {
    // ξ² = v κ⁺02 / (f/4) with f the one-sided density at 0⁺.
    let data = uniform_rows(40_000, 23, |_| 0.0, 1.0);
    let s = spec(Family::NwMean, BiasMode::None, VarianceMode::NnMatched { neighbors: 3 });
    let e = estimate(&data, EvalPoint::boundary(0.0), 0.1, &s).unwrap();
    let target = (1.0 / 3.0) / (1.0 / 4.0);
    assert!((e.xi2_hat - target).abs() < 0.1 * target, "xi2 = {}", e.xi2_hat);
}

#[test]
fn boundary_bias_moment_switch() {
    let data = uniform_rows(20_000, 24, |x| 2.0 * x, 0.1);
    let p = EvalPoint::boundary(0.0);
    let mut s = spec(Family::NwMean, BiasMode::Plugin, VarianceMode::Plugin);
    let b11 = bias_hat(&data, p, 0.1, &s).unwrap();
    // 2 κ⁺11 m' = 2 (1/6) 2.
    assert!((b11 - 2.0 / 3.0).abs() < 0.05, "B = {b11}");
    s.boundary_bias_moment = BoundaryBiasMoment::Kappa12;
    let b12 = bias_hat(&data, p, 0.1, &s).unwrap();
    // κ⁺12 = 1/12 for the triangular kernel.
    assert_abs_diff_eq!(b12 / b11, (1.0 / 12.0) / (1.0 / 6.0), epsilon = 1e-12);
}

#[test]
fn ratio_family_delta_rule() {
    let mut r = rng(25);
    let rows: Vec<Obs> = (0..4_000)
        .map(|_| {
            let x: f64 = r.random();
            let ey: f64 = StandardNormal.sample(&mut r);
            let ed: f64 = StandardNormal.sample(&mut r);
            Obs::with_d(x, 1.0 + 0.2 * ey, 2.0 + 0.2 * ed)
        })
        .collect();
    let s = EstimatorSpec::new(Family::MeanRatio { order: 1 });
    let e = estimate(&rows, EvalPoint::interior(0.5), 0.2, &s).unwrap();
    assert!((e.theta - 0.5).abs() < 0.02);
    let ey = estimate(&rows, EvalPoint::interior(0.5), 0.2, &EstimatorSpec::new(Family::LprMean { order: 1 })).unwrap();
    let td = 2.0_f64;
    // ξ_ratio² ≈ ξ_y²/θ_d² + θ_y² ξ_d²/θ_d⁴ with ξ_d² ≈ ξ_y² here.
    let approx = ey.xi2_hat / (td * td) * (1.0 + 0.25);
    assert!((e.xi2_hat - approx).abs() < 0.2 * approx);
}

#[test]
fn estimate_window_matches_full_sample() {
    let data = uniform_rows(1_000, 26, g1, 1.0);
    let s = EstimatorSpec::new(Family::LprMean { order: 1 });
    let p = EvalPoint::interior(0.5);
    let reach = s.reach(0.1, data.len());
    let near: Vec<Obs> = data.iter().copied().filter(|o| (o.x - 0.5).abs() <= reach).collect();
    assert_eq!(estimate(&data, p, 0.1, &s).unwrap(), estimate_window(&near, data.len(), p, 0.1, &s).unwrap());
}
