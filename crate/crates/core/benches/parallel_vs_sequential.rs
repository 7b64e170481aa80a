use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use gibbslab::ding::{ding_functional, DingGrid, HermitianMetricMatrix};
use gibbslab::geometry::{make_grid, SpherePoint, C64};
use gibbslab::pair::LogPairCurve;
use gibbslab::par::Execution;
use gibbslab::sections::SectionSpace;
use gibbslab::stability::{partition_estimate, DeformedDensityParams, PartitionMethod, Proposal};
use num_rational::Rational64;

const MODES: [(&str, Execution); 2] = [("sequential", Execution::Sequential), ("parallel", Execution::Parallel)];

fn half_pair() -> LogPairCurve {
    LogPairCurve::genus0(
        vec![SpherePoint::zero(), SpherePoint::infinity(), SpherePoint::from_chart(C64::new(1.0, 0.0))],
        vec![Rational64::new(1, 2); 3],
    )
    .unwrap()
}

fn mc_partition(c: &mut Criterion) {
    let params = DeformedDensityParams::new(half_pair(), Rational64::from_integer(4), Rational64::from_integer(1)).unwrap();
    let method = PartitionMethod::ImportanceMC {
        budget: 60_000,
        seed: 1,
        proposal: Proposal::Defensive,
    };
    let mut group = c.benchmark_group("mc_partition");
    group.sample_size(10);
    for (name, exec) in MODES {
        group.bench_with_input(BenchmarkId::from_parameter(name), &exec, |b, &exec| {
            b.iter(|| partition_estimate(&params, method, exec).unwrap())
        });
    }
    group.finish();
}

fn grid_integration(c: &mut Criterion) {
    let grid = make_grid(256).unwrap();
    let f = |p: &SpherePoint| (1.0 + p.height()).ln() * p.z1().norm();
    let mut group = c.benchmark_group("grid_integration");
    for (name, exec) in MODES {
        group.bench_with_input(BenchmarkId::from_parameter(name), &exec, |b, &exec| {
            b.iter(|| grid.integrate(exec, f))
        });
    }
    group.finish();
}

fn ding(c: &mut Criterion) {
    let space = SectionSpace::anticanonical(3);
    let grid = DingGrid::new(&space, 64).unwrap();
    let h = HermitianMetricMatrix::identity(space.dimension());
    let mut group = c.benchmark_group("ding_functional");
    for (name, exec) in MODES {
        group.bench_with_input(BenchmarkId::from_parameter(name), &exec, |b, &exec| {
            b.iter(|| ding_functional(&h, 1.0, &space, &grid, exec).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, mc_partition, grid_integration, ding);
criterion_main!(benches);
