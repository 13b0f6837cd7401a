use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(name = "dwave", version, about = "Damped wave spectral laboratory")]
struct Cli {
    /// Worker threads for parallel sections (defaults to all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Output directory, overriding `output.dir` in the config.
    #[arg(long, global = true, env = "DWAVE_OUT")]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the experiment described by a config file.
    Run { config: PathBuf },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if n == 0 || rayon::ThreadPoolBuilder::new().num_threads(n).build_global().is_err() {
            eprintln!("config error: invalid thread count {n}");
            return ExitCode::from(dwave::cli::EXIT_CONFIG as u8);
        }
    }
    let code = match cli.command {
        Command::Run { config } => dwave::cli::run(&config, cli.out),
    };
    ExitCode::from(code as u8)
}
