//! The `uqfuse` command-line tool: selective classification over embedding
//! datasets with fused uncertainty signals. The library surface exists so
//! integration tests can drive the pipeline in-process.

pub mod commands;
pub mod config;
pub mod error;
pub mod pipeline;
pub mod report;

use clap::Parser;

use commands::{Cli, Ctx};
use config::PipelineConfig;
use error::CliError;

/// Parse arguments, run, and hand back the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            // clap handles --help/--version as "errors" with exit code 0
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match run_parsed(cli) {
        Ok(()) => 0,
        Err(e) => {
            e.emit();
            e.exit_code()
        }
    }
}

fn run_parsed(cli: Cli) -> Result<(), CliError> {
    if let Some(n) = cli.threads {
        // already-initialized pools are fine; later calls are a no-op
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global();
    }
    let mut config = match &cli.config {
        Some(path) => PipelineConfig::from_toml_file(path)?,
        None => PipelineConfig::default(),
    };
    if let Some(seed) = cli.seed {
        config.seed = seed;
    }
    let ctx = Ctx {
        config,
        global_seed: cli.seed,
        quiet: cli.quiet,
    };
    commands::dispatch(cli.command, &ctx)
}
