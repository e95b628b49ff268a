use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use fairmeasure::cli::{run, Command, EXIT_FAILURE};

/// Fairest equivalent measures on finite scenario lattices.
#[derive(Parser)]
#[command(name = "fairmeasure", version)]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Build the configured process and write `process.csv`.
    Simulate(Common),
    /// Fit GBM parameters from prices and write `params.json`.
    Calibrate(Common),
    /// Evaluate `m` and `n` under the configured or base measure.
    Eval(Common),
    /// Minimize the configured objective over the constraint class.
    Optimize(Common),
    /// Run the invariant suites on generated instances.
    Verify(Common),
}

#[derive(Args)]
struct Common {
    /// JSON run configuration.
    #[arg(long)]
    config: PathBuf,
    /// Output directory; overrides `output.dir`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Seed for both simulation and solver restarts.
    #[arg(long)]
    seed: Option<u64>,
}

fn init_threads() -> Result<(), String> {
    let Ok(raw) = std::env::var("FAIRMEASURE_THREADS") else {
        return Ok(());
    };
    let n: usize = raw
        .trim()
        .parse()
        .map_err(|_| format!("FAIRMEASURE_THREADS must be a nonnegative integer, got {raw:?}"))?;
    if n > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| e.to_string())?;
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    if let Err(e) = init_threads() {
        eprintln!("error: {e}");
        return ExitCode::from(EXIT_FAILURE as u8);
    }
    let (command, args) = match cli.command {
        Cmd::Simulate(a) => (Command::Simulate, a),
        Cmd::Calibrate(a) => (Command::Calibrate, a),
        Cmd::Eval(a) => (Command::Eval, a),
        Cmd::Optimize(a) => (Command::Optimize, a),
        Cmd::Verify(a) => (Command::Verify, a),
    };
    match run(command, &args.config, args.out, args.seed) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(EXIT_FAILURE as u8)
        }
    }
}
