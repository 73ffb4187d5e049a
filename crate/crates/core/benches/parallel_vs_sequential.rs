use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use localrec::eval::{run_experiment_with, ExperimentConfig, PopularityBin, Scorer, WrmfScorer};
use localrec::synth::{generate_catalog, SynthConfig};
use localrec::wrmf::{train_wrmf, WrmfTrainer};
use localrec::{Catalog, Exec, WrmfConfig};

const MODES: [(&str, Exec); 2] = [("sequential", Exec::Sequential), ("parallel", Exec::Parallel)];

fn catalog() -> Catalog {
    generate_catalog(&SynthConfig {
        seed: 11,
        artists: 1000,
        ..SynthConfig::default()
    })
    .unwrap()
}

fn als_sweep(c: &mut Criterion) {
    let cat = catalog();
    let config = WrmfConfig {
        factors: 32,
        ..WrmfConfig::default()
    };
    let mut group = c.benchmark_group("als_sweep");
    group.sample_size(10);
    for (name, exec) in MODES {
        group.bench_function(BenchmarkId::from_parameter(name), |b| {
            let mut trainer = WrmfTrainer::new(cat.graph(), config.clone(), exec).unwrap();
            b.iter(|| trainer.sweep().unwrap());
        });
    }
    group.finish();
}

fn experiment(c: &mut Criterion) {
    let cat = catalog();
    let model = train_wrmf(
        cat.graph(),
        &WrmfConfig {
            factors: 32,
            sweeps: 2,
            ..WrmfConfig::default()
        },
    )
    .unwrap();
    let scorer = WrmfScorer {
        name: "wrmf".into(),
        model: &model,
    };
    let scorers: [&dyn Scorer; 1] = [&scorer];
    let config = ExperimentConfig {
        bins: PopularityBin::default_bins()[..4].to_vec(),
        trials_per_bin: 25,
        ..ExperimentConfig::default()
    };
    let mut group = c.benchmark_group("experiment");
    group.sample_size(10);
    for (name, exec) in MODES {
        group.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| run_experiment_with(&cat, &scorers, &config, exec).unwrap());
        });
    }
    group.finish();
}

criterion_group!(benches, als_sweep, experiment);
criterion_main!(benches);
