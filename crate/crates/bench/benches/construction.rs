use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use imprim_bench::cases;
use imprim_core::{build_imprimitivity_bundle, uniqueness_iso, validate_fell_bundle, DEFAULT_TOL};

fn construction(c: &mut Criterion) {
    let mut group = c.benchmark_group("build");
    for (name, demi) in cases() {
        group.bench_with_input(BenchmarkId::from_parameter(&name), &demi, |b, m| {
            b.iter(|| build_imprimitivity_bundle(m, DEFAULT_TOL).expect("valid input"))
        });
    }
    group.finish();
}

fn validation(c: &mut Criterion) {
    let mut group = c.benchmark_group("validate");
    for (name, demi) in cases() {
        let imp = build_imprimitivity_bundle(&demi, DEFAULT_TOL).expect("valid input");
        group.bench_with_input(BenchmarkId::from_parameter(&name), &imp, |b, imp| {
            b.iter(|| validate_fell_bundle(imp.bundle(), DEFAULT_TOL))
        });
    }
    group.finish();
}

fn uniqueness(c: &mut Criterion) {
    let mut group = c.benchmark_group("uniqueness_iso");
    for (name, demi) in cases() {
        let e = build_imprimitivity_bundle(&demi, DEFAULT_TOL)
            .expect("valid input")
            .equivalence;
        group.bench_with_input(BenchmarkId::from_parameter(&name), &e, |b, e| {
            b.iter(|| uniqueness_iso(e, e, DEFAULT_TOL).expect("same data"))
        });
    }
    group.finish();
}

criterion_group!(benches, construction, validation, uniqueness);
criterion_main!(benches);
