use criterion::{criterion_group, criterion_main, BatchSize, Criterion};
use gener_bench::{batch, default_config};
use gener_core::autonet::{Adam, Mode};
use gener_core::model::build_gener;
use gener_core::Rng;

fn forward_backward(c: &mut Criterion) {
    let mut group = c.benchmark_group("gener");
    group.sample_size(10);
    for l in [64, 536] {
        let cfg = default_config(l);
        let b = batch(64, l, 1);
        let mut net = build_gener::<f32>(&cfg, 3).expect("valid config");
        group.bench_function(format!("infer_L{l}_b64"), |bench| {
            bench.iter(|| net.predict_proba(&b).expect("shapes match"))
        });
        let opt = Adam::new(1e-3);
        group.bench_function(format!("train_step_L{l}_b64"), |bench| {
            bench.iter_batched(
                || (net.clone(), Rng::new(5)),
                |(mut n, mut rng)| n.train_step(&b, &opt, &mut rng).expect("shapes match"),
                BatchSize::LargeInput,
            )
        });
        let mut rng = Rng::new(6);
        group.bench_function(format!("forward_train_L{l}_b64"), |bench| {
            bench.iter(|| net.forward(&b, Mode::Train, &mut rng).expect("shapes match"))
        });
    }
    group.finish();
}

criterion_group!(benches, forward_backward);
criterion_main!(benches);
