use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use srnet_bench::{conv_case, desk_model, image};
use srnet_core::cost::cost_report;
use srnet_core::nnops::{channel_shuffle, conv2d, ConvSpec};
use srnet_core::srnet::{build_network, AblationVariant, BackboneKind, NetConfig};
use srnet_core::training::{loss_and_gradients, LossConfig, Sample};
use srnet_core::{Shape, Tensor};

fn conv_taxonomy(c: &mut Criterion) {
    let mut group = c.benchmark_group("conv_64ch_40x40");
    let cases = [
        ("standard_3x3", ConvSpec::new(64, 64, 3).with_padding(1)),
        ("group4_1x1", ConvSpec::pointwise(64, 64, 4)),
        ("depthwise_3x3_d1", ConvSpec::depthwise(64, 1)),
        ("depthwise_3x3_d2", ConvSpec::depthwise(64, 2)),
    ];
    for (name, spec) in cases {
        let (x, w) = conv_case(&spec, 40, 1);
        group.bench_function(name, |b| b.iter(|| conv2d(black_box(&x), &spec, &w, None).unwrap()));
    }
    group.finish();
}

fn shuffle(c: &mut Criterion) {
    let x = Tensor::full(Shape { n: 1, c: 64, h: 40, w: 40 }, 1.0);
    c.bench_function("channel_shuffle_64ch_g4", |b| b.iter(|| channel_shuffle(black_box(&x), 4).unwrap()));
}

fn network(c: &mut Criterion) {
    let mut group = c.benchmark_group("desk_forward_64");
    group.sample_size(10);
    let x = image(64, 2);
    for ablation in AblationVariant::ALL {
        let model = desk_model(ablation);
        group.bench_with_input(BenchmarkId::from_parameter(ablation), &x, |b, x| {
            b.iter(|| model.forward(black_box(x)).unwrap())
        });
    }
    group.finish();

    let mut model = desk_model(AblationVariant::SrNet);
    let mask = Tensor::new(
        Shape { n: 1, c: 1, h: 64, w: 64 },
        (0..64 * 64).map(|k| f64::from(u8::from(k % 64 > 20 && k / 64 > 20))).collect::<Vec<_>>(),
    )
    .unwrap();
    let batch = vec![Sample::new(x, mask).unwrap()];
    let loss = LossConfig::default();
    let mut g = c.benchmark_group("desk_train_step_64");
    g.sample_size(10);
    g.bench_function("srnet", |b| b.iter(|| loss_and_gradients(&mut model, &batch, &loss).unwrap()));
    g.finish();
}

fn audit(c: &mut Criterion) {
    let graph = build_network(&NetConfig::reference(BackboneKind::ResnetLike, AblationVariant::SrNet)).unwrap();
    c.bench_function("cost_report_reference_320", |b| {
        b.iter(|| cost_report(black_box(&graph), graph.input_shape()).unwrap())
    });
}

criterion_group!(benches, conv_taxonomy, shuffle, network, audit);
criterion_main!(benches);
