use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use levy_bsde_cli::{configure_threads, run_config_file};

#[derive(Parser)]
#[command(
    name = "levy-bsde",
    about = "Config-driven experiments on Lévy-driven backward SDEs",
    version
)]
struct Cli {
    /// Worker thread cap (also via LEVY_BSDE_THREADS); 0 = hardware default.
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Execute the experiment described by a JSON config file.
    Run {
        config: PathBuf,
        /// Replace the config's output directory.
        #[arg(long)]
        output_dir: Option<PathBuf>,
    },
    /// List generator, terminal and modulus identifiers.
    List {
        /// Substring filter on the listing.
        filter: Option<String>,
    },
    /// Print the tool version.
    Version,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    configure_threads(cli.threads);
    match cli.command {
        Command::Run { config, output_dir } => {
            match run_config_file(&config, output_dir.as_deref()) {
                Ok(verdict) => ExitCode::from(verdict.exit_code() as u8),
                Err(err) => {
                    eprintln!("error: {err}");
                    ExitCode::from(1)
                }
            }
        }
        Command::List { filter } => {
            for line in levy_bsde::registry::listing(filter.as_deref().unwrap_or("")) {
                println!("{line}");
            }
            ExitCode::SUCCESS
        }
        Command::Version => {
            println!("levy-bsde {}", env!("CARGO_PKG_VERSION"));
            ExitCode::SUCCESS
        }
    }
}
