//! `itq`: batch command-line interface.
//!
//! Exit codes: 0 ok, 2 input error, 3 flag error, 4 internal failure.

mod args;
mod error;
mod manifest;
mod run;

use std::io::Write;
use std::process::ExitCode;
use std::time::Instant;

use clap::Parser;

use args::{Cli, Command};
use error::{CliError, CliResult};
use manifest::RunManifest;

fn init_threads(threads: Option<usize>) -> CliResult<()> {
    if let Some(n) = threads {
        if n == 0 {
            return Err(CliError::Flag("--threads must be positive".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Internal(e.to_string()))?;
    }
    Ok(())
}

fn parse(argv: &[String]) -> CliResult<Cli> {
    Cli::try_parse_from(std::iter::once("itq".to_string()).chain(argv.iter().cloned()))
        .map_err(|e| CliError::Flag(e.to_string()))
}

fn replay(cli: &Cli, manifest_path: &std::path::Path) -> CliResult<()> {
    let recorded = RunManifest::read(manifest_path)?;
    let mut again = parse(&recorded.argv)?;
    if matches!(again.command, Command::Replay(_)) {
        return Err(CliError::Input("manifest records a replay".into()));
    }
    // the original seed and draws win over the environment of this run
    again.seed = recorded.seed;
    again.mc_draws = recorded.mc_draws;
    let start = Instant::now();
    let output = run::execute(&again)?;
    let fresh = RunManifest::new(recorded.argv.clone(), &again, &output, start.elapsed().as_secs_f64());
    let diffs = manifest::compare(&recorded, &fresh);
    if let Some(dir) = &cli.out {
        manifest::write_all(dir, &output, &fresh)?;
    }
    if diffs.is_empty() {
        println!("replay matches {}", manifest_path.display());
        Ok(())
    } else {
        Err(CliError::Internal(format!("replay mismatch: {}", diffs.join(", "))))
    }
}

fn real_main() -> CliResult<()> {
    let argv: Vec<String> = std::env::args().skip(1).collect();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            // --help and --version
            print!("{e}");
            return Ok(());
        }
        Err(e) => return Err(CliError::Flag(e.to_string())),
    };
    init_threads(cli.threads)?;
    if let Command::Replay(r) = &cli.command {
        return replay(&cli, &r.manifest);
    }
    let start = Instant::now();
    let output = run::execute(&cli)?;
    let manifest = RunManifest::new(argv, &cli, &output, start.elapsed().as_secs_f64());
    match &cli.out {
        Some(dir) => manifest::write_all(dir, &output, &manifest)?,
        None => {
            let mut stdout = std::io::stdout().lock();
            writeln!(stdout, "{}", output.json).map_err(|e| CliError::Internal(e.to_string()))?;
            eprintln!("{}", manifest.to_json()?);
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match real_main() {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("itq: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
