use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use dualprox_cli::bench::{format_report, run_bench, BenchOptions};
use dualprox_cli::dataset::GenOptions;
use dualprox_cli::eval::{run_eval, summary_table};
use dualprox_cli::plot::run_plot;
use dualprox_cli::train::{parse_seeds, run_training, TrainOptions};
use dualprox_cli::{init_workers, read_toml, run_gen_data, CliError, Result};
use dualprox_core::dcopf::SamplerConfig;
use dualprox_core::{Method, TrainConfig};

/// Dual optimization proxies for parametric DC optimal power flow.
///
/// Worker threads default to the logical core count; set DUALPROX_WORKERS
/// to override. Exit codes: 0 success, 2 invalid input, 3 numerical failure.
#[derive(Parser)]
#[command(name = "dualprox", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Sample demand scenarios from a MATPOWER case and optionally solve them.
    GenData(GenDataArgs),
    /// Train one proxy per seed.
    Train(TrainArgs),
    /// Test-split metrics for a checkpoint or a directory of runs.
    Eval(EvalArgs),
    /// Time proxy inference against the interior point oracle.
    Bench(BenchArgs),
    /// Validation curves from run manifests as CSV and SVG.
    Plot(PlotArgs),
}

#[derive(Args)]
struct GenDataArgs {
    /// MATPOWER case file.
    #[arg(long)]
    case: PathBuf,
    #[arg(long, default_value_t = 4000)]
    samples: usize,
    /// Fraction of samples in the training split.
    #[arg(long, default_value_t = 0.8)]
    split: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Seed of the train/test split (defaults to --seed).
    #[arg(long)]
    split_seed: Option<u64>,
    /// Solve every sample and store optimal values and solutions.
    #[arg(long)]
    with_oracle: bool,
    /// TOML file with sampler settings.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    dataset: PathBuf,
    /// TOML file with training settings; flags below override it.
    #[arg(long)]
    config: Option<PathBuf>,
    /// s3l, dll, dc3 or penalty.
    #[arg(long)]
    method: Option<Method>,
    /// A seed, an inclusive range `0..9` or a list `1,4,7`.
    #[arg(long, default_value = "0")]
    seeds: String,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    mu0: Option<f64>,
    #[arg(long)]
    hidden: Option<usize>,
    /// Fraction of the training split held out for validation curves.
    #[arg(long, default_value_t = 0.1)]
    validation_fraction: f64,
    /// Scale the dual head by the std of oracle duals on training samples.
    #[arg(long)]
    output_scale: bool,
    /// Output directory; each seed writes to `<out>/seed-<s>/`.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct EvalArgs {
    /// Checkpoint file or directory tree of runs.
    #[arg(long)]
    run: PathBuf,
    #[arg(long)]
    dataset: PathBuf,
    /// Directory for per-run metric CSVs and `summary.csv`.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct BenchArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    dataset: PathBuf,
    #[arg(long, default_value_t = 1000)]
    batch: usize,
    #[arg(long, default_value_t = 5)]
    runs: usize,
    /// Variables of the synthetic completion benchmark.
    #[arg(long, default_value_t = 500)]
    completion_n: usize,
    /// Write the report as JSON to this file.
    #[arg(long)]
    json: Option<PathBuf>,
}

#[derive(Args)]
struct PlotArgs {
    /// Manifest files or directories containing them.
    #[arg(required = true)]
    manifests: Vec<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

fn gen_data(a: GenDataArgs) -> Result<()> {
    let sampler = match &a.config {
        Some(p) => read_toml::<SamplerConfig>(p)?,
        None => SamplerConfig::default(),
    };
    let opts = GenOptions {
        n_samples: a.samples,
        split: a.split,
        seed: a.seed,
        split_seed: a.split_seed.unwrap_or(a.seed),
        with_oracle: a.with_oracle,
        sampler,
    };
    let data = run_gen_data(&a.case, &opts, &a.out)?;
    let h = &data.header;
    println!(
        "wrote {}: {} samples ({} train, {} test), {} buses, m = {}, n = {}",
        a.out.display(),
        h.n_samples,
        h.train.len(),
        h.test.len(),
        h.n_bus,
        h.m,
        h.n
    );
    Ok(())
}

fn train(a: TrainArgs) -> Result<()> {
    let mut config = match &a.config {
        Some(p) => read_toml::<TrainConfig>(p)?,
        None => TrainConfig::default(),
    };
    if let Some(m) = a.method {
        config.method = m;
    }
    if let Some(v) = a.epochs {
        config.epochs = v;
    }
    if let Some(v) = a.batch_size {
        config.batch_size = v;
    }
    if let Some(v) = a.lr {
        config.adam.lr = v;
    }
    if let Some(v) = a.mu0 {
        config.mu0 = v;
    }
    if let Some(v) = a.hidden {
        config.hidden = v;
    }
    let opts = TrainOptions {
        config,
        validation_fraction: a.validation_fraction,
        output_scale: a.output_scale,
    };
    let seeds = parse_seeds(&a.seeds)?;
    for run in run_training(&a.dataset, &opts, &seeds, &a.out)? {
        let last = run.manifest.history.last();
        let gap = last
            .and_then(|r| r.val_mean_gstar)
            .map_or_else(|| "n/a".to_string(), |g| format!("{g:.4}%"));
        println!(
            "{} seed {}: {} epochs in {:.1} s, final validation G★ {gap} -> {}",
            run.manifest.method.name(),
            run.manifest.seed,
            run.manifest.history.len(),
            run.timings.train_seconds,
            run.dir.display()
        );
    }
    Ok(())
}

fn eval(a: EvalArgs) -> Result<()> {
    let rows = run_eval(&a.run, &a.dataset, a.out.as_deref())?;
    print!("{}", summary_table(&rows));
    let excluded: usize = rows.iter().map(|r| r.record.excluded).sum();
    if excluded > 0 {
        println!("{excluded} samples with zero optimal value excluded from gap means");
    }
    Ok(())
}

fn bench(a: BenchArgs) -> Result<()> {
    let opts = BenchOptions {
        batch: a.batch,
        runs: a.runs,
        completion_n: a.completion_n,
        ..Default::default()
    };
    let report = run_bench(&a.checkpoint, &a.dataset, &opts)?;
    print!("{}", format_report(&report));
    if let Some(p) = a.json {
        let bytes = serde_json::to_vec_pretty(&report).expect("report serializes");
        std::fs::write(&p, bytes).map_err(|e| CliError::io(&p, e))?;
    }
    Ok(())
}

fn plot(a: PlotArgs) -> Result<()> {
    let epochs = run_plot(&a.manifests, &a.out)?;
    println!("plotted {epochs} epochs to {}", a.out.display());
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let res = init_workers().and_then(|()| match cli.command {
        Command::GenData(a) => gen_data(a),
        Command::Train(a) => train(a),
        Command::Eval(a) => eval(a),
        Command::Bench(a) => bench(a),
        Command::Plot(a) => plot(a),
    });
    match res {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
