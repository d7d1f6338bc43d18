//! Stage benchmarks over a mid-sized synthetic chain. Run once with the
//! default features and once with `--no-default-features` to compare the
//! rayon path against the sequential fallback:
//!
//! ```text
//! cargo bench --bench stages
//! cargo bench --bench stages --no-default-features
//! ```

use criterion::{criterion_group, criterion_main, Criterion};

use lapmatch::em::{e_step, init_params, EmConfig};
use lapmatch::embed::embed_with;
use lapmatch::graph::build_graph;
use lapmatch::pipeline::{run_match, PipelineConfig};
use lapmatch::synth::{synthesize, ArticulatedModel, ModelKind};

fn bench_stages(c: &mut Criterion) {
    let model = ArticulatedModel::new(ModelKind::Chain);
    let straight = synthesize(&model, &model.named_pose("straight").unwrap(), 1.5).unwrap();
    let bent = synthesize(&model, &model.named_pose("bent").unwrap(), 1.5).unwrap();
    let config = PipelineConfig::default().with_seed(0);

    c.bench_function("graph_build", |b| {
        b.iter(|| build_graph(&straight.voxels, &config.graph).unwrap())
    });

    let graph_x = build_graph(&straight.voxels, &config.graph).unwrap();
    let graph_y = build_graph(&bent.voxels, &config.graph).unwrap();
    c.bench_function("embed_k10", |b| {
        b.iter(|| embed_with(&graph_x, 10, &config.embed).unwrap())
    });

    let x = embed_with(&graph_x, 10, &config.embed).unwrap().coordinates;
    let y = embed_with(&graph_y, 10, &config.embed).unwrap().coordinates;
    let em_config = EmConfig::default();
    let params = init_params(&x, &y, &nalgebra::DMatrix::identity(10, 10), &em_config).unwrap();
    c.bench_function("e_step", |b| b.iter(|| e_step(&x, &y, &params).unwrap()));

    let mut group = c.benchmark_group("pipeline");
    group.sample_size(10);
    group.bench_function("chain_pair", |b| {
        b.iter(|| run_match(&straight.voxels, &bent.voxels, &config).unwrap())
    });
    group.finish();
}

criterion_group!(stages, bench_stages);
criterion_main!(stages);
