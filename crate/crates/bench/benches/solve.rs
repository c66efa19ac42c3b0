use std::hint::black_box;
use std::sync::Arc;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use hypokfem_core::manufactured::{eval_jet_order, primal_forcing, sin4_benchmark, target_d1};
use hypokfem_core::mesh::build_structured;
use hypokfem_core::solvers::{solve_stationary_kkt, solve_stationary_primal, Operators};
use hypokfem_core::space::build_space;
use hypokfem_core::HParams;

fn solve(c: &mut Criterion) {
    let mut g = c.benchmark_group("solve");
    g.sample_size(10);
    let u = sin4_benchmark(1.0);
    for n in [16, 32] {
        let p = HParams { alpha: 1e-2, ..HParams::default() };
        let sp = build_space(Arc::new(build_structured(n, n, 1.0).unwrap()), 2).unwrap();
        let ops = Operators::new(&sp, &p).unwrap();
        let f = |x: f64, v: f64| primal_forcing(&eval_jet_order(&u, x, v, 3), v, p.eps);
        g.bench_with_input(BenchmarkId::new("primal", n), &ops, |b, ops| b.iter(|| solve_stationary_primal(black_box(ops), &f).unwrap()));
        g.bench_with_input(BenchmarkId::new("kkt", n), &ops, |b, ops| b.iter(|| solve_stationary_kkt(black_box(ops), &target_d1).unwrap()));
    }
    g.finish();
}

criterion_group!(benches, solve);
criterion_main!(benches);
