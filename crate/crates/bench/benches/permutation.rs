use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use permrate::simlab::{draw, Design};
use permrate::{estimate, ik_bandwidth, permute, EstimatorSpec, EvalPoint, Family, Kernel, PermPlan, StatKind};

fn estimators(c: &mut Criterion) {
    let p = draw(&Design::design1([1.0, 1.0], [100, 1900]), 1, 0).unwrap();
    let mut g = c.benchmark_group("estimate");
    for (name, spec) in [
        ("nw", EstimatorSpec::new(Family::NwMean)),
        ("llr_bump_nn3", EstimatorSpec::new(Family::LprMean { order: 1 })),
        ("quantile", EstimatorSpec::new(Family::LocalQuantile { chi: 0.5 })),
    ] {
        g.bench_function(name, |b| {
            b.iter(|| estimate(black_box(p.sample2()), EvalPoint::interior(0.5), 0.1, &spec).unwrap())
        });
    }
    g.finish();
}

fn permutation_test(c: &mut Criterion) {
    let spec = EstimatorSpec::new(Family::LprMean { order: 1 });
    let mut g = c.benchmark_group("permutation_test");
    g.sample_size(10);
    for n2 in [900usize, 1900, 4750] {
        let p = draw(&Design::design1([1.0, 1.0], [100, n2]), 2, 0).unwrap();
        let plan = PermPlan::monte_carlo(199, 3).serial();
        g.bench_with_input(BenchmarkId::from_parameter(100 + n2), &p, |b, p| {
            b.iter(|| permute::test(p, &plan, 0.1, &spec, StatKind::Studentized, 0.05).unwrap())
        });
    }
    g.finish();
}

fn bandwidth(c: &mut Criterion) {
    let p = draw(&Design::design1([1.0, 1.0], [250, 4750]), 4, 0).unwrap();
    c.bench_function("ik_bandwidth", |b| b.iter(|| ik_bandwidth(black_box(&p), &Kernel::triangular()).unwrap()));
}

criterion_group!(benches, estimators, permutation_test, bandwidth);
criterion_main!(benches);
