use criterion::{black_box, criterion_group, criterion_main, BenchmarkId, Criterion};

use eqm_core::analysis::{classify, ClassifyPolicy};
use eqm_core::solver::{minimize, solve_unconstrained};
use eqm_core::{ConstraintSet, Grid, Interval, LogKernelOperator, PotentialSpec, SolverConfig};

fn kernel(c: &mut Criterion) {
    let mut g = c.benchmark_group("kernel");
    for n in [500usize, 2000] {
        let grid = Grid::uniform(Interval::symmetric(1.5), n).unwrap();
        g.bench_with_input(BenchmarkId::new("assemble", n), &grid, |b, grid| {
            b.iter(|| LogKernelOperator::assemble(black_box(grid)))
        });
        let k = LogKernelOperator::assemble(&grid);
        let v = vec![1.0 / n as f64; n];
        g.bench_with_input(BenchmarkId::new("apply", n), &v, |b, v| b.iter(|| k.apply(black_box(v))));
    }
    g.finish();
}

fn solve(c: &mut Criterion) {
    let mut g = c.benchmark_group("solve");
    g.sample_size(10);
    let cfg = SolverConfig::default();
    for n in [500usize, 2000] {
        g.bench_with_input(BenchmarkId::new("semicircle", n), &n, |b, &n| {
            b.iter(|| solve_unconstrained(&PotentialSpec::quadratic(), 1.0, n, &cfg).unwrap())
        });
    }
    let capped = ConstraintSet::capped(Grid::uniform(Interval::symmetric(3.0), 2000).unwrap(), 1.0, 0.5);
    g.bench_function("capped/2000", |b| {
        b.iter(|| minimize(&PotentialSpec::quadratic(), &capped, &cfg).unwrap())
    });
    let sol = solve_unconstrained(&PotentialSpec::quartic_double_well(1.0, 1.0), 2.0, 2000, &cfg).unwrap();
    g.bench_function("classify/2000", |b| b.iter(|| classify(black_box(&sol), &ClassifyPolicy::default())));
    g.finish();
}

criterion_group!(benches, kernel, solve);
criterion_main!(benches);
