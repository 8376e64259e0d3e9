use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};
use qmoe::experiments::{run_experiment, ExperimentConfig, ExperimentKind, MetricsReport};
use qmoe::{ErrorKind, QmoeError};

#[derive(Parser)]
#[command(
    name = "qmoe",
    version,
    about = "Quantum and classical mixture-of-experts experiments"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train every configured model on every seed and tabulate test metrics.
    Ablation(RunArgs),
    /// Evaluate the quantum-routed model under depolarizing noise.
    NoiseSweep(RunArgs),
    /// Accuracy against parameter count for each configured model.
    ParamSweep(RunArgs),
    /// Predicted class and gate over a grid covering 2-d data.
    Boundary(RunArgs),
    /// Train each model and write traces and checkpoints.
    Train(RunArgs),
}

#[derive(Args)]
struct RunArgs {
    /// Experiment config (JSON); a run's manifest.json also works.
    #[arg(long)]
    config: PathBuf,
    /// Override a config field, e.g. --set train.max_epochs=20.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// Output directory (overrides output_dir).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Comma-separated seeds (overrides seeds).
    #[arg(long, value_delimiter = ',')]
    seed_list: Option<Vec<u64>>,
    /// Worker threads; 0 or unset uses every core.
    #[arg(long, env = "QMOE_THREADS")]
    threads: Option<usize>,
}

fn exit_code(err: &anyhow::Error) -> u8 {
    match err.downcast_ref::<QmoeError>().map(QmoeError::kind) {
        Some(ErrorKind::Config) => 2,
        Some(ErrorKind::Data) => 3,
        _ => 4,
    }
}

fn run(kind: ExperimentKind, args: RunArgs) -> anyhow::Result<()> {
    let mut overrides = args.set.clone();
    overrides.push(format!("kind={}", serde_json::to_string(&kind)?));
    if let Some(seeds) = &args.seed_list {
        overrides.push(format!("seeds={}", serde_json::to_string(seeds)?));
    }
    if let Some(out) = &args.out {
        overrides.push(format!("output_dir={}", serde_json::to_string(out)?));
    }
    let config = ExperimentConfig::load(&args.config, &overrides)?;
    if let Some(n) = args.threads.filter(|&n| n > 0) {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .context("configuring the worker pool")?;
    }
    eprintln!(
        "qmoe {}: {} model(s) x {} seed(s) -> {}",
        kind.as_str(),
        config.models.len(),
        config.seeds.len(),
        config.output_dir.display()
    );
    let report = run_experiment(&config)?;
    print_report(&report);
    eprintln!(
        "wrote {} file(s) to {}",
        report.files.len(),
        config.output_dir.display()
    );
    Ok(())
}

fn print_report(report: &MetricsReport) {
    println!(
        "{:<16} {:>8} {:>6} {:>9} {:>7} {:>9} {:>8} {:>10} {:>10}",
        "model", "epsilon", "seeds", "accuracy", "f1", "p_router", "p_total", "eta_router", "eta_total"
    );
    for s in &report.summary {
        let eps = s.epsilon.map_or_else(|| "-".to_string(), |e| e.to_string());
        println!(
            "{:<16} {:>8} {:>6} {:>9.4} {:>7.4} {:>9} {:>8} {:>10.4} {:>10.4}",
            s.model, eps, s.n_seeds, s.accuracy, s.f1, s.params_router, s.params_total, s.eta_router, s.eta_total
        );
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (kind, args) = match cli.command {
        Command::Ablation(a) => (ExperimentKind::Ablation, a),
        Command::NoiseSweep(a) => (ExperimentKind::NoiseSweep, a),
        Command::ParamSweep(a) => (ExperimentKind::ParamSweep, a),
        Command::Boundary(a) => (ExperimentKind::Boundary, a),
        Command::Train(a) => (ExperimentKind::TrainSingle, a),
    };
    match run(kind, args) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
