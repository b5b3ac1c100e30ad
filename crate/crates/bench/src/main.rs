use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use ovk_bench::{exit_code, run, Experiment, ExperimentConfig, RunContext};

#[derive(Parser)]
#[command(name = "ovk", version, about = "Kernel regression and Koopman experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct RunArgs {
    /// TOML experiment configuration.
    #[arg(long)]
    config: PathBuf,
    /// Output directory (overrides `output_dir` in the config).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Overrides `seed` in the config.
    #[arg(long)]
    seed: Option<u64>,
    /// Run sweep entries on all cores.
    #[arg(long)]
    parallel: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Regression error rates over a sample-size sweep.
    Exp1(RunArgs),
    /// Koopman spectra, self-convergence and operator gap.
    Exp2(RunArgs),
    /// Rank-truncated forecast errors.
    Exp3(RunArgs),
    /// Fit a model and tabulate its predictions.
    Fit(RunArgs),
    /// Forecast an observable from given initial states.
    Forecast(RunArgs),
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let (which, args) = match cli.command {
        Command::Exp1(a) => (Experiment::Exp1, a),
        Command::Exp2(a) => (Experiment::Exp2, a),
        Command::Exp3(a) => (Experiment::Exp3, a),
        Command::Fit(a) => (Experiment::Fit, a),
        Command::Forecast(a) => (Experiment::Forecast, a),
    };
    let outcome = ExperimentConfig::load(&args.config).and_then(|mut cfg| {
        if let Some(seed) = args.seed {
            cfg.seed = seed;
        }
        if let Some(out) = args.out {
            cfg.output_dir = out;
        }
        let ctx = RunContext::new(&cfg.output_dir, args.parallel)?;
        let lines = run(which, &cfg, &ctx)?;
        Ok((lines, ctx))
    });
    match outcome {
        Ok((lines, ctx)) => {
            for l in lines {
                println!("{l}");
            }
            println!("results in {}", ctx.out_dir.display());
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("ovk {which}: {e}");
            ExitCode::from(exit_code(&e) as u8)
        }
    }
}
