use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use simulate::config::{ModeConfig, Overrides, RunConfig};
use simulate::run::run;

#[derive(Parser)]
#[command(name = "simulate", version, about = "Boussinesq wave simulations from a JSON configuration")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the scenario described by a configuration file.
    Run {
        config: PathBuf,
        /// Simulated duration (s).
        #[arg(long)]
        duration: Option<f64>,
        #[arg(long)]
        output_dir: Option<PathBuf>,
        #[arg(long, value_enum)]
        mode: Option<Mode>,
        /// Target Courant number.
        #[arg(long)]
        cfl: Option<f64>,
        /// Run with this constant step (s).
        #[arg(long)]
        fixed_dt: Option<f64>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    Adaptive,
    Fixed,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let Command::Run { config, duration, output_dir, mode, cfl, fixed_dt } = Cli::parse().command;
    let overrides = Overrides {
        duration,
        output_dir,
        mode: mode.map(|m| match m {
            Mode::Adaptive => ModeConfig::Adaptive,
            Mode::Fixed => ModeConfig::Fixed,
        }),
        cfl,
        fixed_dt,
    };
    let cfg = RunConfig::load(&config).and_then(|mut c| c.apply(&overrides).map(|_| c));
    let cfg = match cfg {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    match run(&cfg) {
        Ok(out) => {
            eprintln!(
                "done: {} steps, t = {:.3} s, mean dt = {:.4e} s, outputs in {}",
                out.summary.steps,
                out.summary.final_time,
                out.summary.dt_mean,
                out.output_dir.display()
            );
            ExitCode::SUCCESS
        }
        Err((_, e)) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
