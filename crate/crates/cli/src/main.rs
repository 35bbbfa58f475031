//! `dldg`: generate synthetic runs, draw samples, evaluate query sets and
//! run parameter sweeps.
//!
//! Exit status is 0 on success, 1 on runtime errors and 2 on usage errors.

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};

use dldg::artifact::{load_run, resolve_manifest, write_run, RunArtifacts, MANIFEST_FILE};
use dldg::latent::LatentConfig;
use dldg::par::{self, Execution};
use dldg::query::{
    evaluate, write_aggregate_csv, write_cells_csv, write_timing_csv, EvalConfig, LabeledSample,
    RankBy,
};
use dldg::samplers::{
    read_sample_csv, write_sample_csv, Sample, SampleMeta, SampleSpec, Sampler, Strategy,
};
use dldg::sweep::{run_sweep, SweepConfig};
use dldg::synth::{self, NoiseMode, SynthSpec};

#[derive(Parser)]
#[command(
    name = "dldg",
    version,
    about = "Sampling and diagnosis-query harness for layer activations"
)]
struct Cli {
    /// Run everything on the calling thread.
    #[arg(long, global = true)]
    sequential: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic run and write it as an artifact directory.
    Synth(SynthArgs),
    /// Draw one sample from a run.
    Sample(SampleArgs),
    /// Score samples against the full-data query answers.
    Eval(EvalArgs),
    /// Sweep strategies, fractions, seeds and the tuning factor.
    Bench(BenchArgs),
}

#[derive(clap::Args)]
struct SynthArgs {
    #[arg(long, default_value_t = 10)]
    classes: usize,
    #[arg(long, default_value_t = 5000)]
    items: usize,
    #[arg(long, default_value_t = 16)]
    dims: usize,
    /// Radius of the sphere holding the class means.
    #[arg(long, default_value_t = 8.0)]
    sep: f64,
    /// Hidden layer widths, comma separated.
    #[arg(long, value_delimiter = ',', default_value = "128,64")]
    layers: Vec<usize>,
    /// Log-posterior noise (boundary) or flip probability (flip).
    #[arg(long, default_value_t = 1.0)]
    noise: f64,
    #[arg(long, value_enum, default_value_t = NoiseArg::Boundary)]
    noise_mode: NoiseArg,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output directory; replaced if it already holds a run.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum NoiseArg {
    Boundary,
    Flip,
}

#[derive(clap::Args)]
struct SampleArgs {
    /// Run directory or manifest path.
    #[arg(long)]
    run: PathBuf,
    #[arg(long, value_parser = parse_strategy)]
    strategy: Strategy,
    /// Sample fraction in (0, 1]; ignored by eb_tree.
    #[arg(long, value_parser = parse_fraction)]
    fraction: Option<f64>,
    /// Share of each cluster's budget taken from the outlier end.
    #[arg(long, value_parser = parse_unit, default_value_t = dldg::samplers::DEFAULT_TUNING)]
    j: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Sample CSV path; a `.meta.json` sidecar is written next to it.
    /// Without it the CSV goes to stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(clap::Args)]
struct EvalArgs {
    #[arg(long)]
    run: PathBuf,
    /// Sample CSVs. Labels come from each file's `.meta.json` sidecar when present.
    #[arg(long, num_args = 1.., required = true)]
    samples: Vec<PathBuf>,
    #[arg(long, value_delimiter = ',', default_value = "10", value_parser = parse_k)]
    ks: Vec<usize>,
    #[arg(long, value_enum, default_value_t = RankArg::Mean)]
    rank_by: RankArg,
    /// Receives cells.csv, aggregate.csv and timing.csv.
    #[arg(long)]
    out_dir: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum RankArg {
    Mean,
    Max,
}

#[derive(clap::Args)]
struct BenchArgs {
    #[arg(long)]
    run: PathBuf,
    #[arg(long, default_value_t = 10)]
    seeds: u64,
    #[arg(long, default_value_t = 10)]
    weighted_seeds: u64,
    #[arg(long, value_delimiter = ',', value_parser = parse_strategy)]
    strategies: Option<Vec<Strategy>>,
    #[arg(long, value_delimiter = ',', value_parser = parse_fraction, default_value = "0.05,0.1,0.2,0.4,0.8")]
    fractions: Vec<f64>,
    #[arg(long, value_delimiter = ',', value_parser = parse_k, default_value = "10,25,50,100")]
    ks: Vec<usize>,
    #[arg(long, value_parser = parse_unit, default_value_t = dldg::samplers::DEFAULT_TUNING)]
    j: f64,
    /// Tuning factors for the clustered-strategy sweep.
    #[arg(long, value_delimiter = ',', value_parser = parse_unit, default_value = "0,0.25,0.5,0.75,1")]
    j_values: Vec<f64>,
    /// Receives sweep.csv and summary.txt.
    #[arg(long)]
    out_dir: PathBuf,
}

fn parse_strategy(s: &str) -> Result<Strategy, String> {
    s.parse().map_err(|_| {
        let names: Vec<&str> = Strategy::ALL.iter().map(|s| s.name()).collect();
        format!(
            "unknown strategy '{s}' (expected one of {})",
            names.join(", ")
        )
    })
}

fn parse_fraction(s: &str) -> Result<f64, String> {
    match s.parse::<f64>() {
        Ok(f) if f > 0.0 && f <= 1.0 => Ok(f),
        Ok(f) => Err(format!("fraction {f} outside (0, 1]")),
        Err(e) => Err(e.to_string()),
    }
}

fn parse_unit(s: &str) -> Result<f64, String> {
    match s.parse::<f64>() {
        Ok(v) if (0.0..=1.0).contains(&v) => Ok(v),
        Ok(v) => Err(format!("{v} outside [0, 1]")),
        Err(e) => Err(e.to_string()),
    }
}

fn parse_k(s: &str) -> Result<usize, String> {
    match s.parse::<usize>() {
        Ok(0) => Err("k must be >= 1".into()),
        Ok(k) => Ok(k),
        Err(e) => Err(e.to_string()),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    par::init_threads_from_env();
    let execution = if cli.sequential {
        Execution::Sequential
    } else {
        Execution::Parallel
    };
    let result = match cli.command {
        Command::Synth(a) => cmd_synth(a),
        Command::Sample(a) => cmd_sample(a, execution),
        Command::Eval(a) => cmd_eval(a, execution),
        Command::Bench(a) => cmd_bench(a, execution),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

fn open_run(path: &Path) -> Result<RunArtifacts> {
    let manifest = resolve_manifest(path);
    load_run(&manifest).with_context(|| format!("loading run {}", manifest.display()))
}

/// Writes `path` via a temporary file in the same directory.
fn write_atomic(path: &Path, fill: impl FnOnce(&mut fs::File) -> Result<()>) -> Result<()> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    fill(tmp.as_file_mut())?;
    tmp.as_file().sync_all()?;
    tmp.persist(path)
        .with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

fn cmd_synth(a: SynthArgs) -> Result<()> {
    let spec = SynthSpec {
        classes: a.classes,
        items: a.items,
        dims: a.dims,
        separation: a.sep,
        layers: a.layers,
        label_noise: a.noise,
        seed: a.seed,
        noise_mode: match a.noise_mode {
            NoiseArg::Boundary => NoiseMode::Boundary,
            NoiseArg::Flip => NoiseMode::UniformFlip,
        },
    };
    let run = synth::generate(&spec)?;

    // Build the run next to its destination, then swap it in.
    if a.out.exists() {
        let is_run = a.out.join(MANIFEST_FILE).is_file();
        let is_empty = a.out.is_dir() && fs::read_dir(&a.out)?.next().is_none();
        if !is_run && !is_empty {
            bail!(
                "{} exists and does not hold a run; refusing to replace it",
                a.out.display()
            );
        }
    }
    let parent = match a.out.parent() {
        Some(d) if !d.as_os_str().is_empty() => d.to_path_buf(),
        _ => PathBuf::from("."),
    };
    fs::create_dir_all(&parent)?;
    let staging = tempfile::Builder::new()
        .prefix(".dldg-synth")
        .tempdir_in(&parent)?;
    write_run(&run, staging.path())?;
    if a.out.exists() {
        fs::remove_dir_all(&a.out)?;
    }
    fs::rename(staging.keep(), &a.out)
        .with_context(|| format!("moving run into {}", a.out.display()))?;

    let wrong = run.items().iter().filter(|m| !m.correct()).count();
    println!(
        "wrote {} ({} items, {} classes, {} layers, {} misclassified)",
        a.out.display(),
        run.item_count(),
        run.class_count,
        run.layers().len(),
        wrong
    );
    Ok(())
}

fn cmd_sample(a: SampleArgs, execution: Execution) -> Result<()> {
    let fraction = match (a.strategy, a.fraction) {
        (Strategy::EbTree, Some(f)) => {
            eprintln!("warning: eb_tree sample size is emergent; --fraction {f} is ignored");
            1.0
        }
        (Strategy::EbTree, None) => 1.0,
        (_, Some(f)) => f,
        (s, None) => {
            use clap::CommandFactory;
            Cli::command()
                .error(
                    clap::error::ErrorKind::MissingRequiredArgument,
                    format!("--fraction is required for strategy {s}"),
                )
                .exit()
        }
    };
    let run = open_run(&a.run)?;
    let spec = SampleSpec::new(a.strategy, fraction, a.seed).with_tuning(a.j);
    let latent = LatentConfig {
        execution,
        ..LatentConfig::default()
    };
    let timed = Sampler::new(&run, latent).sample(&spec)?;
    let mut sample = timed.sample;
    if !a.strategy.fraction_controlled() {
        sample.spec.fraction = sample.len() as f64 / run.item_count() as f64;
    }

    let meta = SampleMeta {
        spec: sample.spec,
        size: sample.len(),
        seconds: timed.seconds,
    };
    let timing = format!(
        "{},{},{},{},{}",
        a.strategy,
        sample.spec.fraction,
        a.seed,
        sample.len(),
        timed.seconds
    );
    match &a.out {
        Some(path) => {
            write_atomic(path, |f| Ok(write_sample_csv(f, &sample)?))?;
            let json = serde_json::to_string_pretty(&meta)? + "\n";
            write_atomic(&SampleMeta::path_for(path), |f| {
                Ok(f.write_all(json.as_bytes())?)
            })?;
            println!("strategy,fraction,seed,size,seconds");
            println!("{timing}");
        }
        None => {
            write_sample_csv(io::stdout().lock(), &sample)?;
            eprintln!("{timing}");
        }
    }
    Ok(())
}

fn labeled_sample(run: &RunArtifacts, path: &Path) -> Result<LabeledSample> {
    let entries = read_sample_csv(path, run.item_count())?;
    let ids: Vec<usize> = entries.iter().map(|e| e.item_id).collect();
    let meta_path = SampleMeta::path_for(path);
    if meta_path.is_file() {
        let text = fs::read_to_string(&meta_path)?;
        let meta: SampleMeta = serde_json::from_str(&text)
            .with_context(|| format!("parsing {}", meta_path.display()))?;
        let sample = Sample::from_disk(meta.spec, entries);
        return Ok(LabeledSample::from_sample(&sample, Some(meta.seconds)));
    }
    let stem = path
        .file_stem()
        .and_then(|s| s.to_str())
        .unwrap_or("sample");
    Ok(LabeledSample {
        strategy: stem.to_string(),
        fraction: ids.len() as f64 / run.item_count() as f64,
        seed: 0,
        ids,
        seconds: None,
    })
}

fn cmd_eval(a: EvalArgs, execution: Execution) -> Result<()> {
    let run = open_run(&a.run)?;
    let samples = a
        .samples
        .iter()
        .map(|p| labeled_sample(&run, p).with_context(|| format!("reading sample {}", p.display())))
        .collect::<Result<Vec<_>>>()?;
    let cfg = EvalConfig {
        ks: a.ks,
        rank_by: match a.rank_by {
            RankArg::Mean => RankBy::Mean,
            RankArg::Max => RankBy::Max,
        },
        execution,
    };
    let report = evaluate(&run, &samples, &cfg)?;
    write_atomic(&a.out_dir.join("cells.csv"), |f| {
        Ok(write_cells_csv(f, &report.cells)?)
    })?;
    write_atomic(&a.out_dir.join("aggregate.csv"), |f| {
        Ok(write_aggregate_csv(f, &report.aggregates)?)
    })?;
    write_atomic(&a.out_dir.join("timing.csv"), |f| {
        Ok(write_timing_csv(f, &report.timings)?)
    })?;
    for r in &report.aggregates {
        let k = r.k.map(|k| format!("@{k}")).unwrap_or_default();
        println!(
            "{:<14} {:>7} {}{:<5} {:.6}",
            r.strategy, r.fraction, r.query_set, k, r.accuracy
        );
    }
    Ok(())
}

fn cmd_bench(a: BenchArgs, execution: Execution) -> Result<()> {
    let run = open_run(&a.run)?;
    let cfg = SweepConfig {
        strategies: a.strategies.unwrap_or_else(|| Strategy::ALL.to_vec()),
        fractions: a.fractions,
        seeds: a.seeds,
        weighted_seeds: a.weighted_seeds,
        ks: a.ks,
        tuning: a.j,
        j_values: a.j_values,
        latent: LatentConfig {
            execution,
            ..LatentConfig::default()
        },
        execution,
        ..SweepConfig::default()
    };
    let report = run_sweep(&run, &cfg)?;
    write_atomic(&a.out_dir.join("sweep.csv"), |f| Ok(report.write_csv(f)?))?;
    let summary = report.summary();
    write_atomic(&a.out_dir.join("summary.txt"), |f| {
        Ok(f.write_all(summary.as_bytes())?)
    })?;
    print!("{summary}");
    Ok(())
}
