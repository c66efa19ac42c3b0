use std::hint::black_box;
use std::sync::Arc;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use hypokfem_core::assembly::{assemble_adjoint, assemble_h_mass, assemble_primal};
use hypokfem_core::mesh::build_structured;
use hypokfem_core::space::build_space;
use hypokfem_core::HParams;

fn assembly(c: &mut Criterion) {
    let mut g = c.benchmark_group("assembly");
    g.sample_size(10);
    for (n, r) in [(16, 2), (32, 2), (16, 4)] {
        let sp = build_space(Arc::new(build_structured(n, n, 1.0).unwrap()), r).unwrap();
        let p = HParams { r, ..HParams::default() };
        let id = format!("n{n}_r{r}");
        g.bench_with_input(BenchmarkId::new("primal", &id), &sp, |b, sp| b.iter(|| assemble_primal(black_box(sp), &p)));
        g.bench_with_input(BenchmarkId::new("adjoint", &id), &sp, |b, sp| b.iter(|| assemble_adjoint(black_box(sp), &p)));
        g.bench_with_input(BenchmarkId::new("h_mass", &id), &sp, |b, sp| b.iter(|| assemble_h_mass(black_box(sp), p.mmat())));
    }
    g.finish();
}

criterion_group!(benches, assembly);
criterion_main!(benches);
