use criterion::{black_box, criterion_group, criterion_main, BenchmarkId, Criterion};
use rand::Rng;

use clt_bench::{bench_model_config, Fixture};
use clt_core::models::{ModelConfig, ModelKind, NoRng};
use clt_core::numcore::{
    conv1d_maxpool, conv1d_maxpool_backward, kl_divergence, softmax, Adadelta, ConvBank, HasParameters, Mode,
};
use clt_core::seed::rng_for;
use clt_core::Real;
use clt_core::training::{batch_loss, Direction, Terms};

/// One encoder at the paper's size: E = 300, widths 3/4/5, 100 maps each.
fn conv(c: &mut Criterion) {
    let (e, widths, maps) = (300, [3, 4, 5], 100);
    let mut rng = rng_for(0, "bench-conv", &[]);
    let mut banks: Vec<ConvBank> = widths
        .iter()
        .map(|&h| ConvBank::random("enc", h, maps, e, &mut rng))
        .collect();
    let mut group = c.benchmark_group("conv1d_maxpool");
    for len in [10usize, 40, 160] {
        let x: Vec<Real> = (0..len * e).map(|_| rng.gen_range(-0.25..0.25)).collect();
        group.bench_with_input(BenchmarkId::new("forward", len), &x, |b, x| {
            b.iter(|| conv1d_maxpool(black_box(x), len, e, &banks).unwrap())
        });
        let (out, trace) = conv1d_maxpool(&x, len, e, &banks).unwrap();
        let dout = vec![1.0; out.len()];
        let mut dx = vec![0.0; x.len()];
        group.bench_with_input(BenchmarkId::new("backward", len), &x, |b, x| {
            b.iter(|| conv1d_maxpool_backward(black_box(x), e, &mut banks, &trace, &dout, &mut dx))
        });
    }
    group.finish();
}

fn distributions(c: &mut Criterion) {
    let mut rng = rng_for(0, "bench-dist", &[]);
    let logits: Vec<Real> = (0..5).map(|_| rng.gen_range(-3.0..3.0)).collect();
    let p = softmax(&logits).unwrap();
    let q = softmax(&logits.iter().rev().copied().collect::<Vec<_>>()).unwrap();
    c.bench_function("softmax/5", |b| b.iter(|| softmax(black_box(&logits)).unwrap()));
    c.bench_function("kl_divergence/5", |b| {
        b.iter(|| kl_divergence(black_box(&p), black_box(&q)).unwrap())
    });
}

/// Forward and backward of each objective over a 32-text batch.
fn objectives(c: &mut Criterion) {
    let f = Fixture::new(bench_model_config());
    let mut group = c.benchmark_group("batch_loss");
    group.sample_size(10);
    for kind in ModelKind::ALL {
        for direction in Direction::BOTH {
            let batch = f.batch(direction, 32);
            let pseudo = f.pseudo(direction, 6);
            let mut model = f.model(kind);
            group.bench_function(format!("{kind}/{direction}"), |b| {
                b.iter(|| {
                    model.zero_grad();
                    batch_loss(
                        &mut model,
                        &batch,
                        pseudo.as_ref(),
                        None,
                        direction,
                        0.1,
                        Terms::FULL,
                        Mode::Eval,
                        &mut NoRng,
                        true,
                    )
                    .unwrap()
                })
            });
        }
    }
    group.finish();
}

fn optimizer(c: &mut Criterion) {
    let f = Fixture::new(ModelConfig::default());
    let mut model = f.model(ModelKind::LeTraNets);
    for p in model.parameters_mut() {
        p.grad.data_mut().fill(1e-3);
    }
    let mut opt = Adadelta::default();
    c.bench_function("adadelta_step/letranets_paper_size", |b| {
        b.iter(|| opt.step(&mut model.parameters_mut()).unwrap())
    });
}

criterion_group!(benches, conv, distributions, objectives, optimizer);
criterion_main!(benches);
