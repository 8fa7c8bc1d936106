use criterion::{black_box, criterion_group, criterion_main, BatchSize, Criterion};
use gcs_core::channel::dbm_to_mw;
use gcs_core::metrics::{mi_montecarlo, qam};
use gcs_core::ssf::{modulate, Propagator, SsfConfig};
use gcs_core::trainer::{sample_one_hot, TrainState};
use gcs_core::{ChannelParams, LinkConfig, ModelKind, NlinCoefficients, TrainConfig};

fn train_step(c: &mut Criterion) {
    let cfg = TrainConfig::default();
    let ch = ChannelParams::for_link(ModelKind::Nlin, &LinkConfig::default(), 1.0, NlinCoefficients::default_for_spans(20)).unwrap();
    let batch = sample_one_hot(cfg.order, cfg.batch_size, 1);
    let mut state = TrainState::new(&cfg).unwrap();
    c.bench_function("train_step_m64_b512", |b| {
        b.iter(|| state.train_step(black_box(&batch), &ch, 7).unwrap());
    });
}

fn mi(c: &mut Criterion) {
    let q = qam(64).unwrap();
    c.bench_function("mi_montecarlo_m64_2e5", |b| b.iter(|| mi_montecarlo(black_box(&q), 0.02, 200_000, 3)));
}

fn ssf_span(c: &mut Criterion) {
    let cfg = SsfConfig { symbols_per_channel: 1 << 11, ..Default::default() };
    let q = qam(16).unwrap();
    let (field, _) = modulate(&q, &cfg, dbm_to_mw(0.0), 1).unwrap();
    let mut prop = Propagator::new(&cfg.link, cfg.steps_per_span, &field).unwrap();
    let mut group = c.benchmark_group("ssf");
    group.sample_size(10);
    group.bench_function("span_5ch_2k_symbols_300_steps", |b| {
        b.iter_batched(|| field.clone(), |mut f| prop.span(&mut f, 0).unwrap(), BatchSize::LargeInput);
    });
    group.finish();
}

criterion_group!(benches, train_step, mi, ssf_span);
criterion_main!(benches);
