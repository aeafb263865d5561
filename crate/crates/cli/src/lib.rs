//! Command-line front end of `probit-uq`: dataset generation, solvers,
//! state evolution, densities, calibration, cross-validation and figure
//! recipes. Every run writes its outputs plus a `manifest.json` from which it
//! can be replayed.

pub mod args;
pub mod commands;
pub mod error;
pub mod figures;
pub mod output;
pub mod parallel;
pub mod svg;

use std::time::Instant;

use args::{Cli, Command, OutputFormat};
use error::CliError;
use output::{Manifest, Sink, MANIFEST_FILE, SCHEMA_VERSION};

/// Runs `command`, writes its outputs and manifest into `out_dir`, and
/// returns the manifest.
pub fn run(
    command: &Command,
    out_dir: &std::path::Path,
    format: OutputFormat,
    threads: usize,
) -> Result<Manifest, CliError> {
    if let Command::Replay(r) = command {
        let m = Manifest::read(&r.manifest)?;
        if matches!(m.params, Command::Replay(_)) {
            return Err(CliError::Usage("a manifest cannot record a replay".into()));
        }
        return run(&m.params, out_dir, m.format, threads);
    }
    let start = Instant::now();
    let mut sink = Sink::new(out_dir, format)?;
    let workers = parallel::worker_count(threads);
    let seeds = match command {
        Command::Generate(a) => commands::generate_cmd(a, &mut sink)?,
        Command::Gamp(a) => commands::gamp_cmd(a, &mut sink)?,
        Command::Erm(a) => commands::erm_cmd(a, &mut sink)?,
        Command::Se(a) => commands::se_cmd(a, &mut sink)?,
        Command::Density(a) => commands::density_cmd(a, &mut sink)?,
        Command::Calibration(a) => commands::calibration_cmd(a, &mut sink)?,
        Command::Crossval(a) => commands::crossval_cmd(a, &mut sink)?,
        Command::Figure(a) => figures::run(a, &mut sink, workers)?,
        Command::Replay(_) => unreachable!("handled above"),
    };
    let manifest = Manifest {
        schema_version: SCHEMA_VERSION,
        library_version: env!("CARGO_PKG_VERSION").to_owned(),
        command: command.name().to_owned(),
        format,
        params: command.clone(),
        seeds,
        outputs: sink.written().to_vec(),
        wall_clock_seconds: start.elapsed().as_secs_f64(),
    };
    sink.json(MANIFEST_FILE, &manifest)?;
    Ok(manifest)
}

pub fn run_cli(cli: &Cli) -> Result<Manifest, CliError> {
    run(&cli.command, &cli.out_dir, cli.format, cli.threads)
}
