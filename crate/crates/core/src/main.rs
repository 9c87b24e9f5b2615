use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use paultrap::harness::{
    load_config, replay, run_scenario, to_toml, FileVerdict, Preset, RunOptions, RunRecord,
};
use paultrap::Error;

/// Linear Paul trap simulation suite.
#[derive(Parser)]
#[command(version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a preset pipeline and write CSV files plus a run record.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// stability, secular, volume, ratescan, loadcurve, massspec, fig4,
        /// fig5, fig6a or fig6b
        #[arg(long)]
        preset: String,
        /// Overrides `master_seed`.
        #[arg(long)]
        seed: Option<u64>,
        /// Overrides `output_directory`.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Re-run a recorded run and compare its outputs cell by cell.
    Replay {
        #[arg(long)]
        record: PathBuf,
    },
    /// Parse and validate a configuration; print its digest and resolved form.
    Validate {
        #[arg(long)]
        config: PathBuf,
    },
}

const EXIT_CONFIG: u8 = 1;
const EXIT_SIMULATION: u8 = 2;

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Parse { .. } | Error::Validation { .. } | Error::DigestMismatch { .. } => {
            EXIT_CONFIG
        }
        Error::InvalidInput(_) => EXIT_CONFIG,
        _ => EXIT_SIMULATION,
    }
}

/// Relative output directories in a config file are taken from the file's
/// own directory.
fn output_directory(config_path: &Path, configured: &Path) -> PathBuf {
    if configured.is_absolute() {
        configured.to_path_buf()
    } else {
        config_path
            .parent()
            .unwrap_or(Path::new("."))
            .join(configured)
    }
}

fn run(cli: Cli) -> Result<u8, Error> {
    match cli.command {
        Command::Run {
            config,
            preset,
            seed,
            out,
        } => {
            let preset: Preset = preset.parse()?;
            let cfg = load_config(&config)?;
            let options = RunOptions {
                output_directory: out
                    .unwrap_or_else(|| output_directory(&config, &cfg.output_directory)),
                seed: seed.unwrap_or(cfg.master_seed),
                config_path: config,
            };
            let record = run_scenario(&cfg, preset, &options)?;
            for f in &record.outputs {
                println!("{}", record.output_directory.join(f).display());
            }
            println!(
                "{}",
                record
                    .output_directory
                    .join(RunRecord::file_name(&record.preset))
                    .display()
            );
            Ok(0)
        }
        Command::Replay { record } => {
            let record = RunRecord::read(&record)?;
            let report = replay(&record)?;
            for (name, verdict) in &report.files {
                match verdict {
                    FileVerdict::Pass => println!("PASS {name}"),
                    FileVerdict::Missing => println!("FAIL {name}: missing"),
                    FileVerdict::Fail(d) => println!(
                        "FAIL {name}: row {} column `{}`: recorded {} vs replayed {}",
                        d.row, d.column, d.expected, d.actual
                    ),
                }
            }
            Ok(if report.passed() { 0 } else { EXIT_SIMULATION })
        }
        Command::Validate { config } => {
            let cfg = load_config(&config)?;
            println!("# config_digest: {}", cfg.digest());
            print!("{}", to_toml(&cfg));
            Ok(0)
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_CONFIG } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
