use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use noon::config::keys_help;
use noon::{commands, CliError, RunConfig};

#[derive(Parser)]
#[command(name = "noon", version, about = "Three-photon NOON projection: fringes, delay scans, dip fits and E/A")]
#[command(after_help = keys_help())]
struct Cli {
    /// Config file of `key = value` lines.
    #[arg(short, long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,

    /// Override one key; repeatable.
    #[arg(short = 's', long = "set", global = true, value_name = "KEY=VALUE")]
    set: Vec<String>,

    /// Shorthand for `--set seed=N`.
    #[arg(long, global = true)]
    seed: Option<String>,

    /// Shorthand for `--set out_dir=DIR`.
    #[arg(long, global = true, value_name = "DIR")]
    out_dir: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Projection rate against phase shift.
    Fringe,
    /// Four-fold delay scan with the 2x2 accidental estimate.
    Scan,
    /// Fit one or two dips to the `input` CSV.
    Fit,
    /// Visibilities expected from beta and E/A.
    Predict,
    /// E/A from a visibility or from a scan.
    InferEa,
    /// Calibrate, scan both H configurations and compare with targets.
    Reproduce,
}

fn run(cli: Cli) -> Result<(), CliError> {
    let mut overrides = cli.set;
    if let Some(seed) = cli.seed {
        overrides.push(format!("seed={seed}"));
    }
    if let Some(dir) = cli.out_dir {
        overrides.push(format!("out_dir={}", dir.display()));
    }
    let cfg = RunConfig::resolve(cli.config.as_deref(), &overrides)?;
    let stdout = std::io::stdout();
    let mut out = stdout.lock();
    match cli.command {
        Command::Fringe => commands::fringe(&cfg, &mut out),
        Command::Scan => commands::scan(&cfg, &mut out).map(drop),
        Command::Fit => commands::fit(&cfg, &mut out).map(drop),
        Command::Predict => commands::predict(&cfg, &mut out),
        Command::InferEa => commands::infer_ea_cmd(&cfg, &mut out).map(drop),
        Command::Reproduce => {
            let failures = commands::reproduce(&cfg, &mut out)?.failures();
            if failures.is_empty() {
                Ok(())
            } else {
                Err(CliError::RowFailure(failures))
            }
        }
    }?;
    out.flush().map_err(|e| CliError::io("stdout", e))
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("noon: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
