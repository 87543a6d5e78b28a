use criterion::{criterion_group, criterion_main, Criterion};
use rand::Rng;
use scenelayout::decoder::{synth_dataset, synth_trial, train_decoder, DecoderConfig, StimulusSpec, SynthConfig, N_CLASSES};
use scenelayout::luminance::{LuminanceEstimator, RgbFrame};
use scenelayout::recommend::{recommend, SamplerConfig};
use scenelayout::reward::RewardModel;
use scenelayout::rng::substream;
use scenelayout::scene::{SceneConfig, SceneKind};
use scenelayout::session::{random_contexts, train_session_bandits};

fn luminance(c: &mut Criterion) {
    let mut rng = substream(1, "bench-frame");
    let pixels: Vec<[u8; 3]> = (0..1920 * 1080).map(|_| rng.random()).collect();
    let frame = RgbFrame::new(1920, 1080, pixels).unwrap();
    let estimator = LuminanceEstimator::default();
    c.bench_function("luminance_grid_1080p", |b| b.iter(|| estimator.grid(std::slice::from_ref(&frame)).unwrap()));
}

fn recommendation(c: &mut Criterion) {
    let model = RewardModel::default();
    let scene = SceneConfig::default();
    let training = random_contexts(50, SceneKind::Mixed, &scene, 12, N_CLASSES, 2).unwrap();
    let bandits = train_session_bandits(&training, &model, 50, 2).unwrap();
    let context = &random_contexts(1, SceneKind::Mixed, &scene, 12, N_CLASSES, 3).unwrap()[0];
    let sampler = SamplerConfig::default();
    let mut group = c.benchmark_group("recommend");
    group.sample_size(10);
    group.bench_function("joli_default_sampler", |b| {
        b.iter(|| recommend(&bandits.joli, context, &model, &sampler).unwrap())
    });
    group.finish();
}

fn decoding(c: &mut Criterion) {
    let synth = SynthConfig::default();
    let data = synth_dataset(10, (0.8, 1.0), 3.86, &synth, &mut substream(4, "bench-data")).unwrap();
    let config = DecoderConfig {
        epochs: 2,
        ..DecoderConfig::default()
    };
    let (model, _) = train_decoder(&data, config).unwrap();
    let epoch = synth_trial(StimulusSpec::for_class(2).unwrap(), 1.0, 3.0, &synth, &mut substream(5, "bench-trial")).unwrap();
    c.bench_function("decode_3s_epoch", |b| b.iter(|| model.predict(&epoch).unwrap()));
}

criterion_group!(benches, luminance, recommendation, decoding);
criterion_main!(benches);
