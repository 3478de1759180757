use criterion::{black_box, criterion_group, criterion_main, BenchmarkId, Criterion};

use lstm_sharp_bench::fixtures;
use lstm_sharp_core::{build_program, critical_path, simulate, sweep_k, ScheduleKind};

fn bench_build(c: &mut Criterion) {
    let mut g = c.benchmark_group("build_program");
    for (spec, hw, tile) in fixtures() {
        let id = format!("h{}-m{}-k{}", spec.hidden_dim, hw.total_macs, tile.k_eff);
        g.bench_with_input(BenchmarkId::new("unfolded", &id), &(), |b, _| {
            b.iter(|| build_program(ScheduleKind::Unfolded, &spec, &hw, &tile, true).unwrap())
        });
    }
    g.finish();
}

fn bench_simulate(c: &mut Criterion) {
    let mut g = c.benchmark_group("simulate");
    for (spec, hw, tile) in fixtures() {
        for kind in [ScheduleKind::Sequential, ScheduleKind::Unfolded] {
            let program = build_program(kind, &spec, &hw, &tile, true).unwrap();
            let id = format!("h{}-m{}-k{}", spec.hidden_dim, hw.total_macs, tile.k_eff);
            g.bench_with_input(BenchmarkId::new(kind.name(), &id), &program, |b, p| {
                b.iter(|| simulate(black_box(p), &hw).unwrap())
            });
        }
    }
    g.finish();
}

fn bench_closed_form(c: &mut Criterion) {
    let (spec, hw, tile) = fixtures().remove(1);
    c.bench_function("critical_path/sequential", |b| {
        b.iter(|| critical_path(ScheduleKind::Sequential, &spec, &hw, &tile, false).unwrap())
    });
}

fn bench_sweep(c: &mut Criterion) {
    let (spec, hw, _) = fixtures().remove(0);
    let mut g = c.benchmark_group("sweep_k");
    g.sample_size(10);
    g.bench_function("h200-m1024", |b| {
        b.iter(|| sweep_k(&spec, &hw, ScheduleKind::Unfolded, true, 1).unwrap())
    });
    g.finish();
}

criterion_group!(
    benches,
    bench_build,
    bench_simulate,
    bench_closed_form,
    bench_sweep
);
criterion_main!(benches);
