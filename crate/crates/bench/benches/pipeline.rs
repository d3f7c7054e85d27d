use std::sync::Arc;

use criterion::{criterion_group, criterion_main, Criterion};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use forcejs_core::cluster::{dbscan, DbscanParams, FeatureVector};
use forcejs_core::harness::{generate_corpus, run_pipeline, GeneratorSpec, PipelineConfig};
use forcejs_core::{mark_forced_blocks, parse_str, ApiCatalog, Engine, EngineConfig, Mode, ResourceResolver};

const TIMEBOMB: &str = include_str!("../../core/fixtures/timebomb_tracker.js");
const RESOURCES: &str = include_str!("../../core/fixtures/resources.json");

fn frontend(c: &mut Criterion) {
    let catalog = ApiCatalog::browser();
    c.bench_function("parse_timebomb_tracker", |b| b.iter(|| parse_str(TIMEBOMB).unwrap()));
    let program = parse_str(TIMEBOMB).unwrap();
    c.bench_function("mark_timebomb_tracker", |b| b.iter(|| mark_forced_blocks(&program, &catalog, 500)));
}

fn engine(c: &mut Criterion) {
    let resolver = Arc::new(ResourceResolver::from_json(RESOURCES).unwrap());
    c.bench_function("forced_run_timebomb_tracker", |b| {
        b.iter(|| {
            let mut e = Engine::new(EngineConfig::new(Mode::Browser), resolver.clone());
            e.run_root("timebomb_tracker.js", TIMEBOMB);
            e.forced_events().len()
        })
    });
}

fn clustering(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let points: Vec<FeatureVector> = (0..200)
        .map(|i| FeatureVector { id: format!("p{i:03}"), bits: (0..28).map(|_| rng.gen_bool(0.15) as u8).collect() })
        .collect();
    c.bench_function("dbscan_200x28", |b| b.iter(|| dbscan(&points, DbscanParams::default())));
}

fn corpus(c: &mut Criterion) {
    let corpus = generate_corpus(&GeneratorSpec::default());
    let samples = corpus.plain_samples();
    let cfg = PipelineConfig { resolver: Arc::new(corpus.resolver()), ..PipelineConfig::default() };
    let mut group = c.benchmark_group("pipeline");
    group.sample_size(10);
    group.bench_function("generated_corpus", |b| b.iter(|| run_pipeline(&samples, &cfg).outcomes.len()));
    group.finish();
}

criterion_group!(benches, frontend, engine, clustering, corpus);
criterion_main!(benches);
