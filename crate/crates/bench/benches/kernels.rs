use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use dinls_bench::{gaussian, grid, params};
use dinls_core::evolve::Stepper;
use dinls_core::{rho, shoot, weinstein_quotient, EllipticProblem, ProblemKind, ShootingConfig};
use num_complex::Complex64;

fn stepper(c: &mut Criterion) {
    let p = params().unwrap();
    let mut group = c.benchmark_group("stepper_advance");
    for &n in &[1024usize, 4096] {
        let g = grid(3, n).unwrap();
        let u0: Vec<Complex64> = gaussian(g.clone(), 0.5).unwrap().into_values();
        let mut st = Stepper::new(&g, &p, 1e-12, 50).unwrap();
        group.bench_with_input(BenchmarkId::from_parameter(n), &n, |bch, _| {
            bch.iter_batched_ref(
                || u0.clone(),
                |u| st.advance(black_box(u), 1e-3).unwrap(),
                criterion::BatchSize::SmallInput,
            )
        });
    }
    group.finish();
}

fn shooting(c: &mut Criterion) {
    let p = params().unwrap();
    let g = grid(3, 2048).unwrap();
    let prob = EllipticProblem::new(ProblemKind::SingleTerm, p).unwrap();
    let cfg = ShootingConfig::default();
    let mut group = c.benchmark_group("shoot");
    group.sample_size(10);
    group.bench_function("single_term_2048", |b| b.iter(|| shoot(&prob, g.clone(), &cfg).unwrap()));
    group.finish();
}

fn diagnostics(c: &mut Criterion) {
    let p = params().unwrap();
    let idx = p.derive_indices().unwrap();
    let g = grid(3, 4096).unwrap();
    let f = gaussian(g, 1.0).unwrap();
    c.bench_function("rho_4096", |b| b.iter(|| rho(black_box(&f), 1.0, &idx).unwrap()));
    c.bench_function("weinstein_quotient_4096", |b| {
        b.iter(|| weinstein_quotient(black_box(&f), &p, &idx).unwrap())
    });
}

criterion_group!(benches, stepper, shooting, diagnostics);
criterion_main!(benches);
