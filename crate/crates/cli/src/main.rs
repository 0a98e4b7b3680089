use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use salm_cli::commands::{
    defaults_command, run_command, verify_command, verify_outcome, RunOverrides,
};
use salm_cli::config::RunConfig;
use salm_cli::exit;

#[derive(Debug, Parser)]
#[command(
    name = "salm",
    version,
    about = "Stochastic augmented Lagrangian solver"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Solve the configured problem for each seed and write logs.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Run only this seed instead of the configured list.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Total sample budget per seed.
        #[arg(long)]
        budget: Option<u64>,
    },
    /// Check gradients, the multiplier identity and cone properties.
    Verify {
        #[arg(long)]
        config: PathBuf,
    },
    /// Print the reference constants as TOML.
    Defaults,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let code = match cli.command {
        Command::Run {
            config,
            seed,
            out,
            budget,
        } => RunConfig::load(&config)
            .and_then(|c| {
                run_command(
                    &c,
                    &RunOverrides {
                        seed,
                        out_dir: out,
                        budget,
                    },
                )
            })
            .map(|outputs| {
                for o in outputs {
                    println!("seed {}: {}", o.seed, o.csv.display());
                }
            }),
        Command::Verify { config } => RunConfig::load(&config)
            .and_then(|c| verify_command(&c))
            .and_then(|report| {
                println!(
                    "{}",
                    serde_json::to_string_pretty(&report).expect("report serializes")
                );
                verify_outcome(&report)
            }),
        Command::Defaults => {
            print!("{}", defaults_command());
            Ok(())
        }
    };
    match code {
        Ok(()) => ExitCode::from(exit::OK as u8),
        Err(e) => {
            eprintln!("salm: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
