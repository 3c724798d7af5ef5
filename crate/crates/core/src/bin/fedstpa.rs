use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use fedstpa::cli::{self, BlobParams, CliError};

#[derive(Parser)]
#[command(name = "fedstpa", version, about = "Byzantine-robust federated learning simulator")]
struct Args {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum DataKind {
    Blobs,
}

#[derive(Subcommand)]
enum Command {
    /// Run one experiment, writing per-round JSONL and a CSV summary.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Re-run a config for several malicious fractions.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, value_delimiter = ',', num_args = 0..)]
        fractions: Vec<f64>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Generate a synthetic dataset file.
    GenData {
        #[arg(long, value_enum, default_value = "blobs")]
        kind: DataKind,
        #[arg(long, default_value_t = 10)]
        classes: usize,
        #[arg(long, default_value_t = 20)]
        dim: usize,
        #[arg(long, default_value_t = 200)]
        samples_per_class: usize,
        #[arg(long, default_value_t = fedstpa::simulation::DEFAULT_BLOB_SPREAD)]
        spread: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
}

fn main() -> ExitCode {
    let args = match Args::try_parse() {
        Ok(a) => a,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    let result: Result<(), CliError> = match args.command {
        Command::Run { config, seed, out } => cli::cmd_run(&config, seed, &out),
        Command::Sweep { config, fractions, seed, out } => {
            cli::cmd_sweep(&config, &fractions, seed, &out).map(|rows| {
                for r in rows {
                    println!(
                        "fraction {:>5}: {} / {}: {:.3} ± {:.3} %",
                        r.fraction, r.rule, r.attack, r.mean_final_error, r.std_final_error
                    );
                }
            })
        }
        Command::GenData { kind: DataKind::Blobs, classes, dim, samples_per_class, spread, seed, out } => {
            let p = BlobParams { n_classes: classes, dim, samples_per_class, spread, seed };
            cli::cmd_gen_data(&p, &out)
        }
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
