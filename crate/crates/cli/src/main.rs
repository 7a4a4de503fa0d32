//! `tpe` command-line entry point.
//!
//! Exit codes: 0 success, 2 usage error, 3 data error, 4 numeric divergence.
//! Failures print a JSON object `{"error": {kind, code, message}}` on stderr.
//! `TPE_THREADS` caps the worker thread count.

mod args;
mod commands;
mod output;

use clap::error::ErrorKind;
use clap::Parser;

use args::{Cli, Command};
use output::{CliError, CliResult};

fn configure_threads() -> CliResult<()> {
    let Ok(value) = std::env::var("TPE_THREADS") else {
        return Ok(());
    };
    let threads: usize = value
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| {
            CliError::Usage(format!(
                "TPE_THREADS must be a positive integer, got `{value}`"
            ))
        })?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global()
        .map_err(|e| CliError::Usage(format!("cannot configure {threads} threads: {e}")))
}

fn run(cli: Cli) -> CliResult<()> {
    configure_threads()?;
    let v = cli.verbose;
    match &cli.command {
        Command::Gen(a) => commands::gen(a, v),
        Command::PcaInit(a) => commands::pca(a, v),
        Command::Train(a) => commands::train_cmd(a, v),
        Command::Project(a) => commands::project(a, v),
        Command::Pool(a) => commands::pool(a, v),
        Command::VerifyEval(a) => commands::verify(a, v),
        Command::IdentEval(a) => commands::ident(a, v),
        Command::Cluster(a) => commands::cluster(a, v),
        Command::ReproFig3(a) => commands::fig3(a, v),
        Command::ReproCluster(a) => commands::cluster_repro(a, v),
    }
}

fn main() {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) => {
            let _ = e.print();
            return;
        }
        Err(e) => {
            let err = CliError::Usage(e.render().to_string().trim().to_string());
            eprintln!("{}", err.to_json());
            std::process::exit(err.exit_code());
        }
    };
    if let Err(err) = run(cli) {
        eprintln!("{}", err.to_json());
        std::process::exit(err.exit_code());
    }
}
