use criterion::{criterion_group, criterion_main, BatchSize, Criterion};
use spectropose::model::{forward_on_tape, init_params};
use spectropose::autodiff::Tape;
use spectropose::graph::NUM_JOINTS;
use spectropose::spectral::{build_schedule, extract_features, fft_bluestein, TimeSeries};
use spectropose::synth::SynthSpec;
use spectropose::train::build_adjacency;
use spectropose::{FaigcnConfig, RngStream};

fn bench_fft(c: &mut Criterion) {
    let mut rng = RngStream::new(0);
    for n in [1000usize, 997, 1024] {
        let samples: Vec<f64> = (0..n).map(|_| rng.uniform(-1.0, 1.0)).collect();
        let series = TimeSeries::new(samples, 25.0).unwrap();
        c.bench_function(&format!("fft_bluestein/{n}"), |b| {
            b.iter(|| fft_bluestein(std::hint::black_box(&series)).unwrap())
        });
    }
}

fn bench_features(c: &mut Criterion) {
    let data = spectropose::synth::generate(&SynthSpec::mini_like(3)).unwrap();
    let schedule = build_schedule(25.0, 1000, 6.0, 1.00264).unwrap();
    c.bench_function("extract_features/8s_25fps_b198", |b| {
        b.iter(|| extract_features(std::hint::black_box(&data[0]), &schedule).unwrap())
    });
}

fn bench_forward(c: &mut Criterion) {
    let cfg = FaigcnConfig::default();
    let bins = 24;
    let mut rng = RngStream::new(1);
    let params = init_params(&cfg, bins, &mut rng).unwrap();
    let adj = build_adjacency(bins, &cfg).unwrap();
    let input: Vec<f64> = (0..bins * NUM_JOINTS * 2).map(|_| rng.uniform(0.0, 1.0)).collect();
    c.bench_function("forward/eval_b24", |b| {
        b.iter_batched(
            || input.clone(),
            |x| {
                let mut tape = Tape::new(false);
                let mut r = RngStream::new(0);
                forward_on_tape(&mut tape, &params, &adj, x, 1, &mut r).unwrap()
            },
            BatchSize::SmallInput,
        )
    });
}

criterion_group!(benches, bench_fft, bench_features, bench_forward);
criterion_main!(benches);
