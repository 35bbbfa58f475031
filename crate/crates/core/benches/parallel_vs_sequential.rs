//! Data-parallel core against the sequential fallback on the hot paths:
//! GMM fitting, membership tables, query evaluation and VAS.
//!
//! Build with `--no-default-features` to benchmark a binary without rayon at all.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use dldg::artifact::RunArtifacts;
use dldg::latent::{gmm_fit, CovarianceMode, LatentConfig};
use dldg::par::Execution;
use dldg::query::{evaluate, EvalConfig, LabeledSample};
use dldg::samplers::{fit_memberships, ModelKind, Sample, SampleSpec, Sampler, Strategy};
use dldg::synth::{generate, SynthSpec};

const MODES: [(&str, Execution); 2] = [
    ("parallel", Execution::Parallel),
    ("sequential", Execution::Sequential),
];

fn run() -> RunArtifacts {
    generate(&SynthSpec {
        items: 5000,
        seed: 1,
        ..SynthSpec::default()
    })
    .unwrap()
}

fn latent(execution: Execution) -> LatentConfig {
    LatentConfig {
        execution,
        ..LatentConfig::default()
    }
}

fn bench_gmm(c: &mut Criterion) {
    let run = run();
    let mut group = c.benchmark_group("gmm_fit");
    group.sample_size(10);
    for (name, exec) in MODES {
        for mode in [CovarianceMode::Spherical, CovarianceMode::Full] {
            let id = BenchmarkId::new(format!("{mode:?}").to_lowercase(), name);
            group.bench_function(id, |b| {
                b.iter(|| gmm_fit(run.latent(), run.class_count, mode, 0, &latent(exec)).unwrap())
            });
        }
    }
    group.finish();
}

fn bench_memberships(c: &mut Criterion) {
    let run = run();
    let mut group = c.benchmark_group("max_margin_memberships");
    group.sample_size(10);
    for (name, exec) in MODES {
        group.bench_function(name, |b| {
            b.iter(|| fit_memberships(&run, ModelKind::MaxMargin, 0, &latent(exec)).unwrap())
        });
    }
    group.finish();
}

fn bench_evaluate(c: &mut Criterion) {
    let run = run();
    let samples: Vec<LabeledSample> = (0..20u64)
        .map(|seed| {
            let spec = SampleSpec::new(Strategy::Uniform, 0.1, seed);
            let sample = Sampler::new(&run, LatentConfig::default())
                .sample(&spec)
                .unwrap();
            LabeledSample::from(&sample)
        })
        .collect();
    let mut group = c.benchmark_group("evaluate_20_samples");
    group.sample_size(10);
    for (name, exec) in MODES {
        let cfg = EvalConfig {
            ks: vec![10, 25, 50, 100],
            execution: exec,
            ..EvalConfig::default()
        };
        group.bench_function(name, |b| b.iter(|| evaluate(&run, &samples, &cfg).unwrap()));
    }
    group.finish();

    // single full-data sample: parallelism comes from inside the context
    let full = LabeledSample::from_sample(
        &Sample::from_ids(
            SampleSpec::new(Strategy::Uniform, 1.0, 0),
            0..run.item_count(),
        ),
        None,
    );
    let mut group = c.benchmark_group("evaluate_full_data");
    group.sample_size(10);
    for (name, exec) in MODES {
        let cfg = EvalConfig {
            execution: exec,
            ..EvalConfig::default()
        };
        group.bench_function(name, |b| {
            b.iter(|| evaluate(&run, std::slice::from_ref(&full), &cfg).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, bench_gmm, bench_memberships, bench_evaluate);
criterion_main!(benches);
