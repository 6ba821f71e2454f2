use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use nestmlmc_cli::{run_calibrate, run_estimate, run_rates, run_sweep, CliError, Overrides, RunConfig};

#[derive(Parser)]
#[command(name = "nestmlmc", version, about = "Nested expectations by crude MC, MLMC and ML2R")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// One estimate from an explicit geometry, a target RMSE, or a saved plan.
    Estimate(Args),
    /// Weak and strong error rate fits.
    Rates(Args),
    /// Pilot run and level plan for a target RMSE.
    Calibrate(Args),
    /// Cost and RMSE comparison of the estimator families over RMSE targets.
    Sweep(Args),
}

#[derive(clap::Args, Clone)]
struct Args {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, env = "NESTMLMC_WORKERS")]
    workers: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
}

fn run(cmd: Command) -> Result<(), CliError> {
    let (Command::Estimate(a) | Command::Rates(a) | Command::Calibrate(a) | Command::Sweep(a)) = &cmd;
    let overrides = Overrides { seed: a.seed, workers: a.workers, out: a.out.clone() };
    let cfg = RunConfig::load(&a.config)?.resolve(&overrides)?;
    match cmd {
        Command::Estimate(_) => {
            let out = run_estimate(&cfg)?;
            println!("value {:.16e} std_error {:.6e}", out.result.value, out.result.std_error);
        }
        Command::Rates(_) => {
            let out = run_rates(&cfg)?;
            println!("fit      alpha_hat  beta_hat");
            for (name, r) in [("weak", &out.weak), ("strong", &out.strong)] {
                if let Some(r) = r {
                    let f = |x: Option<f64>| x.map_or("-".to_string(), |v| format!("{v:.4}"));
                    println!("{name:<8} {:<10} {}", f(r.alpha_hat), f(r.beta_hat));
                }
            }
        }
        Command::Calibrate(_) => {
            let out = run_calibrate(&cfg)?;
            println!(
                "R {} N {} predicted cost {:.4e}",
                out.plan.geometry.r, out.plan.allocation.n, out.plan.predicted_cost
            );
        }
        Command::Sweep(_) => {
            let out = run_sweep(&cfg)?;
            println!("{} rows written", out.rows.len());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("nestmlmc: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
