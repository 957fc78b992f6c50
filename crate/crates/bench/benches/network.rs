use criterion::{criterion_group, criterion_main, Criterion};
use std::hint::black_box;

use pigo_core::neuro::{loss, loss_and_grad, GatingKind, GatingMode, NetWeights, SplitData, TrainConfig};
use pigo_core::{BitString, Stream};

fn forward_backward(c: &mut Criterion) {
    let data = SplitData::spirals(512, 64, 3, 0.2, 1).unwrap().train;
    let batch: Vec<usize> = (0..64).collect();
    let mut group = c.benchmark_group("network_batch64");
    for kind in [GatingKind::LayerSkip, GatingKind::ActivationSelect] {
        let config = TrainConfig::for_gating(kind);
        let widths = config.widths(&data);
        let mode = GatingMode::new(kind, &widths).unwrap();
        let net = NetWeights::init(&widths, &Stream::new(2)).unwrap();
        let mask = BitString::ones(mode.mask_dim);
        group.bench_function(format!("{kind:?}/forward"), |b| {
            b.iter(|| loss(&net, &mask, &data, black_box(&batch), mode).unwrap())
        });
        group.bench_function(format!("{kind:?}/forward_backward"), |b| {
            b.iter(|| loss_and_grad(&net, &mask, &data, black_box(&batch), mode).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, forward_backward);
criterion_main!(benches);
