use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion, Throughput};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use stlu::parallel::{par_map_indexed, seq_map_indexed};
use stlu::predictor::mc_samples;
use stlu::{parse, Flowpipe, GaussianPoint, McOptions, Monitor, Schema, Srt, ToyArModel};

fn flowpipes(count: usize) -> Vec<Flowpipe> {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    (0..count)
        .map(|_| {
            let pts = (0..8)
                .map(|_| GaussianPoint::new(rng.random_range(0.0..12.0), rng.random_range(0.1..2.0)).unwrap())
                .collect();
            Flowpipe::single("x", 100, pts).unwrap()
        })
        .collect()
}

fn batch_monitoring(c: &mut Criterion) {
    let fps = flowpipes(10_000);
    let mut group = c.benchmark_group("batch_monitor");
    group.throughput(Throughput::Elements(fps.len() as u64));
    let cases = [
        ("always", "always[0,7] x < 10 @ 0.95"),
        ("nested", "eventually[0,3] ((x - 6)^2 < 4 @ 0.9) & always[0,7] x > 0 @ 0.99"),
    ];
    for (id, src) in cases {
        let phi = parse(src).unwrap();
        let m = Monitor::new(&phi).unwrap();
        group.bench_with_input(BenchmarkId::new("sequential", id), &fps, |b, fps| {
            b.iter(|| seq_map_indexed(fps.len(), |i| m.verdict(&fps[i], 0).unwrap()))
        });
        group.bench_with_input(BenchmarkId::new("parallel", id), &fps, |b, fps| {
            b.iter(|| par_map_indexed(fps.len(), |i| m.verdict(&fps[i], 0).unwrap()))
        });
    }
    group.finish();
}

fn monte_carlo(c: &mut Criterion) {
    let model = ToyArModel::new(vec![0.5, 0.3, 0.1], 0.2).unwrap();
    let schema = Schema::new(Srt::GaussianDropConnect, 0.8).unwrap();
    let opts = McOptions { n_samples: 1_000, seed: 3, resample_per_step: true };
    c.bench_function("mc_samples/1000x24", |b| {
        b.iter(|| mc_samples(&model, &[1.0, 2.0, 3.0], 24, schema, opts).unwrap())
    });
}

criterion_group!(benches, batch_monitoring, monte_carlo);
criterion_main!(benches);
