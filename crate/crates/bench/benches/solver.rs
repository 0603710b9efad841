use criterion::{black_box, criterion_group, criterion_main, Criterion};
use quasisol_bench::{benchmark_context, bump};
use quasisol_core::mountain_pass::solve;
use quasisol_core::{DualTransform, SolverConfig};

fn transform(c: &mut Criterion) {
    let tr = DualTransform::default();
    let ts: Vec<f64> = (0..1000).map(|k| (k as f64 - 500.0) * 0.37).collect();
    c.bench_function("transform_eval_1000", |b| {
        b.iter(|| {
            let mut acc = 0.0;
            for &t in &ts {
                acc += tr.eval(black_box(t)).unwrap().value;
            }
            acc
        })
    });
}

fn gradient(c: &mut Criterion) {
    let ctx = benchmark_context(400);
    let state = bump(ctx.grid(), 1.5);
    c.bench_function("phi_grad_n400", |b| b.iter(|| ctx.phi_grad(black_box(&state)).unwrap()));
}

fn small_solve(c: &mut Criterion) {
    let ctx = benchmark_context(100);
    let config = SolverConfig::default();
    let mut group = c.benchmark_group("solve");
    group.sample_size(10);
    group.bench_function("benchmark_n100", |b| b.iter(|| solve(&ctx, &config).unwrap()));
    group.finish();
}

criterion_group!(benches, transform, gradient, small_solve);
criterion_main!(benches);
