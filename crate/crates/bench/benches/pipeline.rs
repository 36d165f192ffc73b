use std::hint::black_box;

use cellseg::{
    distance_map, h_maxima, instance_segment, map_score, synth_instances, Connectivity, PipelineConfig, SynthSpec,
};
use criterion::{criterion_group, criterion_main, Criterion};

fn sample() -> cellseg::SynthSample {
    synth_instances(&SynthSpec {
        seed: 1,
        ..Default::default()
    })
    .unwrap()
}

fn bench_distance_map(c: &mut Criterion) {
    let s = sample();
    c.bench_function("distance_map 512x512 / 30 cells", |b| {
        b.iter(|| distance_map(black_box(&s.labels)))
    });
}

fn bench_h_maxima(c: &mut Criterion) {
    let s = sample();
    c.bench_function("h_maxima h=10 512x512", |b| {
        b.iter(|| h_maxima(black_box(&s.distance), 10.0, Connectivity::Eight).unwrap())
    });
}

fn bench_instance_segment(c: &mut Criterion) {
    let s = sample();
    let logits = s.semantic.to_logits(40.0);
    let cfg = PipelineConfig::default();
    c.bench_function("instance_segment 512x512", |b| {
        b.iter(|| instance_segment(black_box(&s.distance), black_box(&logits), &cfg).unwrap())
    });
}

fn bench_map_score(c: &mut Criterion) {
    let s = sample();
    let logits = s.semantic.to_logits(40.0);
    let pred = instance_segment(&s.distance, &logits, &PipelineConfig::default()).unwrap();
    c.bench_function("map_score 512x512", |b| {
        b.iter(|| map_score(black_box(&s.labels), black_box(&pred)).unwrap())
    });
}

criterion_group!(
    benches,
    bench_distance_map,
    bench_h_maxima,
    bench_instance_segment,
    bench_map_score
);
criterion_main!(benches);
