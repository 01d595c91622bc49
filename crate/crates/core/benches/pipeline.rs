//! C1, C2 and batch extraction on one worker versus the full pool.
//! `cargo bench --no-default-features` measures the sequential build.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use facehmax::experiments::TestFace;
use facehmax::hmax::{c2, learn_templates, Band, Model, ModelConfig};
use facehmax::par::with_threads;
use facehmax::stimulus::{gen_synthetic_faces, Image, StimulusParams};
use facehmax::SizeClass;

fn faces(n: usize) -> Vec<Image> {
    let stim = StimulusParams::default();
    gen_synthetic_faces(n, 5, (308, 300))
        .unwrap()
        .iter()
        .map(|f| TestFace::prepare("b", &f.image, Some(f.eye_region), &stim).unwrap().image)
        .collect()
}

fn pipeline(c: &mut Criterion) {
    let model = Model::new(ModelConfig::default()).unwrap();
    let imgs = faces(4);
    let bank = learn_templates(&model, &imgs, 200, SizeClass::Large, Band(7), 1).unwrap();
    let c1 = model.c1_for_c2(&imgs[0]).unwrap();
    let pool = std::thread::available_parallelism().map_or(1, |n| n.get());
    let pooling = model.config().pooling;

    let mut g = c.benchmark_group("pipeline");
    g.sample_size(10);
    for threads in [1, pool] {
        g.bench_with_input(BenchmarkId::new("c1", threads), &threads, |b, &t| {
            b.iter(|| with_threads(t, || model.c1_for_c2(&imgs[0]).unwrap()))
        });
        g.bench_with_input(BenchmarkId::new("c2_200_templates", threads), &threads, |b, &t| {
            b.iter(|| with_threads(t, || c2(&c1, &bank, pooling).unwrap()))
        });
        g.bench_with_input(BenchmarkId::new("extract_4_faces", threads), &threads, |b, &t| {
            b.iter(|| {
                with_threads(t, || {
                    facehmax::par::map(&imgs, |i| c2(&model.c1_for_c2(i).unwrap(), &bank, pooling).unwrap())
                })
            })
        });
    }
    g.finish();
}

criterion_group!(benches, pipeline);
criterion_main!(benches);
