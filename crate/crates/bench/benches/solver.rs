use std::hint::black_box;

use ccwgd_core::ba::{ba_capacity_at_cost, BaOptions};
use ccwgd_core::channels::{linspace, quantize_channel};
use ccwgd_core::estimator::estimate_objectives;
use ccwgd_core::particles::init_particles;
use ccwgd_core::{
    ChannelModel, FadingCsirChannel, FadingNoCsirChannel, ImportanceConfig, InitSpec, MimoAwgnChannel, PowerCost,
};
use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

fn mixture_logpdf(c: &mut Criterion) {
    let ps = init_particles(&InitSpec::isotropic(1, 1.0), 128, 1, 0).unwrap();
    let channels: Vec<Box<dyn ChannelModel>> = vec![
        Box::new(MimoAwgnChannel::scalar()),
        Box::new(FadingCsirChannel),
        Box::new(FadingNoCsirChannel),
    ];
    let mut group = c.benchmark_group("mixture_logpdf");
    for ch in &channels {
        let mix = ch.mixture(&ps);
        let y = vec![0.7; ch.output_dim()];
        group.bench_function(ch.name(), |b| b.iter(|| mix.log_pdf(black_box(&y))));
    }
    group.finish();
}

fn objectives(c: &mut Criterion) {
    let ch = MimoAwgnChannel::scalar();
    let mut group = c.benchmark_group("estimate_objectives");
    group.sample_size(10);
    for n in [32, 128] {
        let ps = init_particles(&InitSpec::isotropic(1, 1.0), n, 1, 0).unwrap();
        let cfg = ImportanceConfig::default();
        group.bench_with_input(BenchmarkId::from_parameter(n), &ps, |b, ps| {
            b.iter(|| estimate_objectives(ps, ps, &ch, &PowerCost, 0.25, &cfg, 0, 0).unwrap())
        });
    }
    group.finish();
}

fn blahut_arimoto(c: &mut Criterion) {
    let mut edges = vec![f64::NEG_INFINITY];
    edges.extend(linspace(-8.0, 8.0, 161));
    edges.push(f64::INFINITY);
    let ch = quantize_channel(&MimoAwgnChannel::scalar(), &linspace(-4.0, 4.0, 41), &edges, &PowerCost).unwrap();
    let opts = BaOptions {
        tau: 4.0,
        tol: 1e-5,
        max_iters: 200_000,
    };
    let mut group = c.benchmark_group("ba");
    group.sample_size(10);
    group.bench_function("capacity_at_cost_41x162", |b| {
        b.iter(|| ba_capacity_at_cost(&ch, 1.0, &opts).unwrap())
    });
    group.finish();
}

criterion_group!(benches, mixture_logpdf, objectives, blahut_arimoto);
criterion_main!(benches);
