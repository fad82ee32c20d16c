use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};

use ssnscope_cli::config::{parse_override, Config, ConfigError, Scenario};
use ssnscope_cli::{run, Exec, RunError};

/// Simulated sub-shot-noise transmittance microscope.
#[derive(Parser)]
#[command(name = "ssnscope", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Precision ratio against transmittance for the direct and feed-forward sources.
    Figure1(RunArgs),
    /// Transmittance sweep of the heralded source with empirical precision ratios.
    Calibrate(RunArgs),
    /// Phantom scanned with the quantum, differential and bright-coherent schemes.
    Scan(RunArgs),
    /// Pixel-wise precision ratio over repeated scans of a phantom.
    Variance(RunArgs),
    /// Line-pair resolution target.
    Target(RunArgs),
    /// Print the default config of a scenario.
    Defaults {
        #[arg(value_parser = parse_scenario)]
        scenario: Scenario,
    },
}

#[derive(Args)]
struct RunArgs {
    /// TOML config file; a run's manifest.toml is accepted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Master seed, overriding the config.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Override one config key, e.g. `--set repetitions=8`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Worker threads; 0 uses every core, 1 runs serially.
    #[arg(long, default_value_t = 0)]
    threads: usize,
}

fn parse_scenario(s: &str) -> Result<Scenario, String> {
    Scenario::ALL
        .into_iter()
        .find(|sc| sc.name() == s)
        .ok_or_else(|| format!("unknown scenario `{s}`"))
}

fn execute(scenario: Scenario, args: RunArgs) -> anyhow::Result<PathBuf> {
    let text = match &args.config {
        Some(p) => Some(fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?),
        None => None,
    };
    let mut overrides = args
        .overrides
        .iter()
        .map(|s| parse_override(s))
        .collect::<Result<Vec<_>, _>>()?;
    if let Some(seed) = args.seed {
        overrides.push(("seed".into(), toml::Value::Integer(seed as i64)));
    }
    let config = Config::resolve(scenario, text.as_deref(), &overrides)?;
    log::info!("{}", config.stamp());
    let manifest = run(&config, &args.out, Exec { threads: args.threads })
        .with_context(|| format!("running {scenario} into {}", args.out.display()))?;
    Ok(manifest)
}

fn exit_code(e: &anyhow::Error) -> u8 {
    for cause in e.chain() {
        if let Some(r) = cause.downcast_ref::<RunError>() {
            return r.exit_code();
        }
        if cause.is::<ConfigError>() {
            return 2;
        }
        if cause.is::<std::io::Error>() {
            return 4;
        }
    }
    3
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let (scenario, args) = match cli.command {
        Command::Figure1(a) => (Scenario::Figure1, a),
        Command::Calibrate(a) => (Scenario::Calibrate, a),
        Command::Scan(a) => (Scenario::Scan, a),
        Command::Variance(a) => (Scenario::Variance, a),
        Command::Target(a) => (Scenario::Target, a),
        Command::Defaults { scenario } => {
            print!("{}", Config::defaults(scenario).to_toml());
            return ExitCode::SUCCESS;
        }
    };
    match execute(scenario, args) {
        Ok(manifest) => {
            println!("{}", manifest.display());
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
