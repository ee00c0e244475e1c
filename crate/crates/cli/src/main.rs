use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use ttslab_cli::exec::{execute, load, RunOptions};
use ttslab_cli::report::render_dir;
use ttslab_cli::{write_atomic, CliError};

#[derive(Parser)]
#[command(name = "ttslab", version, about = "Two-timescale SGD simulation laboratory")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment file.
    Run {
        config: PathBuf,
        /// Output directory; overrides `output_dir` in the file.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Override the global seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Worker threads for replicas and sweep cells.
        #[arg(long, env = "TTSLAB_WORKERS")]
        workers: Option<usize>,
        /// Treat every failed check as a validation failure.
        #[arg(long)]
        strict: bool,
    },
    /// Parse a file and print the effective configuration.
    Validate { config: PathBuf },
    /// Re-render plot.csv from the artifacts in a run directory.
    Report { run_dir: PathBuf },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli.command) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("ttslab: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn dispatch(cmd: Command) -> Result<i32, CliError> {
    match cmd {
        Command::Run {
            config,
            out,
            seed,
            workers,
            strict,
        } => {
            if let Some(n) = workers {
                rayon::ThreadPoolBuilder::new()
                    .num_threads(n)
                    .build_global()
                    .map_err(|e| CliError::Config(format!("workers: {e}")))?;
            }
            let cfg = load(&config)?;
            let mut stdout = std::io::stdout().lock();
            stdout.write_all(cfg.echo().as_bytes())?;
            let rep = execute(
                &cfg,
                &RunOptions {
                    out_dir: out,
                    seed,
                    strict,
                },
            )?;
            writeln!(stdout)?;
            stdout.write_all(rep.render().as_bytes())?;
            Ok(rep.exit_code())
        }
        Command::Validate { config } => {
            let cfg = load(&config)?;
            print!("{}", cfg.echo());
            Ok(0)
        }
        Command::Report { run_dir } => {
            let plot = render_dir(&run_dir)?;
            write_atomic(&run_dir.join("plot.csv"), &plot)?;
            println!("wrote {}", run_dir.join("plot.csv").display());
            Ok(0)
        }
    }
}
