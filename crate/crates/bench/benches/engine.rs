use criterion::{black_box, criterion_group, criterion_main, BenchmarkId, Criterion, Throughput};
use wavepinn_bench::fixture;
use wavepinn_core::bounds::empirical_ledger;
use wavepinn_core::trainer::{lbfgs_direction, CurvaturePair};
use wavepinn_core::{eval_jets, loss_and_gradient, total_error_l2, training_error, JetPlan};

fn jets(c: &mut Criterion) {
    let mut g = c.benchmark_group("eval_jets");
    for total in [1500, 18750] {
        let f = fixture(total);
        let pts = &f.sets.interior.points;
        g.throughput(Throughput::Elements(f.sets.interior.len() as u64));
        g.bench_with_input(BenchmarkId::new("value", total), pts, |b, p| {
            b.iter(|| eval_jets(&f.net, black_box(p), &JetPlan::value_only(3)).unwrap())
        });
        g.bench_with_input(BenchmarkId::new("full", total), pts, |b, p| {
            b.iter(|| eval_jets(&f.net, black_box(p), &JetPlan::full(3)).unwrap())
        });
    }
    g.finish();
}

fn loss_gradient(c: &mut Criterion) {
    let mut g = c.benchmark_group("loss_and_gradient");
    g.sample_size(10);
    for total in [144, 1500, 18750] {
        let f = fixture(total);
        g.throughput(Throughput::Elements(total as u64));
        g.bench_function(BenchmarkId::from_parameter(total), |b| {
            b.iter(|| loss_and_gradient(black_box(&f.net), &f.sets, &f.problem).unwrap())
        });
    }
    g.finish();
}

fn lbfgs(c: &mut Criterion) {
    let n = fixture(144).net.as_slice().len();
    let pairs: Vec<CurvaturePair> = (0..10)
        .filter_map(|k| {
            let s: Vec<f64> = (0..n).map(|i| ((i * 7 + k) % 13) as f64 * 1e-3 + 1e-4).collect();
            let y: Vec<f64> = s.iter().map(|v| 2.0 * v).collect();
            CurvaturePair::new(s, y)
        })
        .collect();
    let grad: Vec<f64> = (0..n).map(|i| (i as f64).sin()).collect();
    c.bench_function("lbfgs_direction/m10", |b| b.iter(|| lbfgs_direction(black_box(&pairs), black_box(&grad))));
}

fn evaluation(c: &mut Criterion) {
    let mut g = c.benchmark_group("evaluation");
    g.sample_size(10);
    let f = fixture(1500);
    g.bench_function("training_error/1500", |b| b.iter(|| training_error(&f.net, &f.sets, &f.problem).unwrap()));
    g.bench_function("total_error_l2/48x48x28", |b| b.iter(|| total_error_l2(&f.net, &f.problem, &[48, 48, 28]).unwrap()));
    g.bench_function("empirical_ledger/25", |b| {
        b.iter(|| empirical_ledger(&f.net, &f.problem, &Default::default(), 25).unwrap())
    });
    g.finish();
}

criterion_group!(benches, jets, loss_gradient, lbfgs, evaluation);
criterion_main!(benches);
