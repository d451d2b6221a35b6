use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use windshare::{LocalTrio, RingElement};
use windshare_bench::{shared_fixed, shared_onehot};

fn kernels(c: &mut Criterion) {
    let mut g = c.benchmark_group("secure");
    g.sample_size(20);
    let mut trio = LocalTrio::new(1).unwrap();
    let mut session = 0u64;
    for n in [256usize, 4096] {
        let x = shared_fixed(n, 1);
        let y = shared_fixed(n, 2);
        g.bench_with_input(BenchmarkId::new("mul", n), &n, |b, _| {
            b.iter(|| {
                session += 1;
                trio.run(|ctx| {
                    ctx.begin_session(session);
                    let j = ctx.index();
                    ctx.sec_mul(&x[j], &y[j])
                })
                .unwrap()
            })
        });
        g.bench_with_input(BenchmarkId::new("msb", n), &n, |b, _| {
            b.iter(|| {
                session += 1;
                trio.run(|ctx| {
                    ctx.begin_session(session);
                    let j = ctx.index();
                    ctx.sec_msb(&x[j])
                })
                .unwrap()
            })
        });
        g.bench_with_input(BenchmarkId::new("eq_const", n), &n, |b, _| {
            b.iter(|| {
                session += 1;
                trio.run(|ctx| {
                    ctx.begin_session(session);
                    let j = ctx.index();
                    ctx.sec_eq_const(&x[j], RingElement(black_box(3)))
                })
                .unwrap()
            })
        });
    }
    g.finish();
}

fn aggregation(c: &mut Criterion) {
    let mut g = c.benchmark_group("aggregate");
    g.sample_size(10);
    let mut trio = LocalTrio::new(2).unwrap();
    let mut session = 0u64;
    for (rows, cols) in [(1000usize, 64usize), (4000, 256)] {
        let (hot, grads) = shared_onehot(rows, cols, 3);
        g.bench_with_input(BenchmarkId::new("xt_y", format!("{rows}x{cols}")), &rows, |b, _| {
            b.iter(|| {
                session += 1;
                trio.run(|ctx| {
                    ctx.begin_session(session);
                    let j = ctx.index();
                    ctx.sec_xt_y_raw(&hot[j], &grads[j])
                })
                .unwrap()
            })
        });
    }
    g.finish();
}

criterion_group!(benches, kernels, aggregation);
criterion_main!(benches);
