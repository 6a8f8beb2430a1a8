//! `bazykin`: run a scenario file or a bundled preset and write CSV, SVG and
//! a manifest into the output directory.

mod artifacts;
mod commands;
mod config;
mod presets;
mod svg;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;

use artifacts::Artifacts;
use commands::CliError;
use config::{ConfigError, Scenario};

#[derive(Parser, Debug)]
#[command(name = "bazykin", version, about = "Slow-fast Bazykin prey-predator laboratory")]
struct Cli {
    /// Scenario file (JSON).
    #[arg(long, conflicts_with = "preset", required_unless_present_any = ["preset", "list_presets"])]
    config: Option<PathBuf>,
    /// Bundled scenario name.
    #[arg(long)]
    preset: Option<String>,
    /// Print the bundled scenario names and exit.
    #[arg(long)]
    list_presets: bool,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Overrides the scenario seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads for sweeps; defaults to all cores.
    #[arg(long)]
    threads: Option<usize>,
}

fn load(cli: &Cli) -> Result<Scenario, CliError> {
    let text = match (&cli.config, &cli.preset) {
        (Some(path), _) => std::fs::read_to_string(path)
            .map_err(|e| ConfigError { path: "--config".into(), message: format!("{}: {e}", path.display()) })?,
        (None, Some(name)) => presets::get(name)
            .ok_or_else(|| ConfigError { path: "--preset".into(), message: format!("unknown preset {name:?}; known: {}", presets::names().join(", ")) })?
            .to_string(),
        (None, None) => unreachable!("clap requires one of --config and --preset"),
    };
    let mut sc = Scenario::from_json(&text)?;
    if let Some(seed) = cli.seed {
        sc.seed = seed;
    }
    Ok(sc)
}

fn run(cli: &Cli) -> Result<(), CliError> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(ConfigError { path: "--threads".into(), message: "must be at least 1".into() }.into());
        }
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global().map_err(|e| ConfigError {
            path: "--threads".into(),
            message: e.to_string(),
        })?;
    }
    let sc = load(cli)?;
    let mut out = Artifacts::create(&cli.out)?;
    commands::run(&sc, &mut out)?;
    let files = out.finish(&sc)?;
    eprintln!("wrote {} files and manifest.json to {}", files.len(), cli.out.display());
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if cli.list_presets {
        for name in presets::names() {
            println!("{name}");
        }
        return ExitCode::SUCCESS;
    }
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
