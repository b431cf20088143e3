use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use reinforced_walk::cli;

#[derive(Parser)]
#[command(
    name = "rwalk",
    about = "Monte Carlo laboratory for directionally reinforced random walks"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate the configured ensemble, run the regime's tests, write
    /// CSV values and a JSON summary.
    Run {
        /// Experiment config (JSON).
        #[arg(long)]
        config: PathBuf,
        /// Override the config's master seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Worker threads; affects wall time only, never results.
        #[arg(long)]
        threads: Option<usize>,
        /// Output directory (default: the config's out_dir).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Print derived quantities (pi, mu, E T, b, a_t) without simulating.
    Describe {
        #[arg(long)]
        config: PathBuf,
    },
    /// Simulate a single trajectory and dump its legs as CSV.
    DumpTrajectory {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    let args = Cli::parse();
    let result = match args.command {
        Command::Run {
            config,
            seed,
            threads,
            out,
        } => {
            if let Some(k) = threads {
                if let Err(e) = rayon::ThreadPoolBuilder::new()
                    .num_threads(k)
                    .build_global()
                {
                    eprintln!("error: cannot configure {k} threads: {e}");
                    return ExitCode::from(cli::EXIT_INPUT_ERROR as u8);
                }
            }
            cli::run(&config, seed, out.as_deref())
        }
        Command::Describe { config } => cli::describe(&config, &mut std::io::stdout()),
        Command::DumpTrajectory { config, seed, out } => {
            cli::dump_trajectory(&config, seed, out.as_deref())
        }
    };
    match result {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(cli::EXIT_INPUT_ERROR as u8)
        }
    }
}
