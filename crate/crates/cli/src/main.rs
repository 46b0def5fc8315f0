//! Experiment driver. Reads a sectioned config, runs one verification
//! command against the configured map, and writes a JSON certificate plus
//! columnar plot tables. Exit codes: 0 all verifications passed, 1 a
//! verification or runtime failure (a report is still written when
//! possible), 2 the config could not be parsed or validated.

mod artifact;
mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use artifact::Artifact;
use commands::CommandOutput;
use config::{ConfigError, ExperimentConfig};

#[derive(Parser)]
#[command(
    name = "phdyn",
    version,
    about = "certified experiments for partially hyperbolic torus maps"
)]
struct Cli {
    /// Experiment description file.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Output directory for certificates and plot tables.
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Worker threads for the parallel kernels (0 = all cores).
    #[arg(long, global = true, value_name = "N")]
    threads: Option<usize>,
    /// Seed for every randomized sweep; overrides the config.
    #[arg(long, global = true, value_name = "N")]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Clone, Copy, PartialEq, Eq)]
enum Command {
    /// Certify a partially hyperbolic splitting by cone-field invariance.
    Certify,
    /// Compute a local invariant leaf and measure its invariance defect.
    Leaves,
    /// Build one localized perturbation and verify its size and structure.
    Perturb,
    /// Measure the center displacement of su-quadrilateral holonomies.
    Holonomy,
    /// Run the four-point accessibility checklist and target coverage.
    Access,
    /// Build a disk family with a certified return-time lower bound.
    Sections,
    /// Estimate Lyapunov exponents and classify the exponent signature.
    Lyapunov,
}

impl Command {
    fn name(self) -> &'static str {
        match self {
            Command::Certify => "certify",
            Command::Leaves => "leaves",
            Command::Perturb => "perturb",
            Command::Holonomy => "holonomy",
            Command::Access => "access",
            Command::Sections => "sections",
            Command::Lyapunov => "lyapunov",
        }
    }
}

enum RunError {
    /// Anything wrong with the config file or its values: exit 2.
    Config(ConfigError),
    /// Failures past the config stage: exit 1.
    Fatal(String),
}

impl From<ConfigError> for RunError {
    fn from(e: ConfigError) -> Self {
        RunError::Config(e)
    }
}

impl From<artifact::WriteError> for RunError {
    fn from(e: artifact::WriteError) -> Self {
        RunError::Fatal(e.to_string())
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(RunError::Config(e)) => {
            eprintln!("config error: {e}");
            ExitCode::from(2)
        }
        Err(RunError::Fatal(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
    }
}

fn missing_block(name: &str) -> ConfigError {
    config::invalid(format!("config has no [{name}] block"))
}

fn run(cli: Cli) -> Result<bool, RunError> {
    let path = cli
        .config
        .ok_or_else(|| config::invalid("a --config file is required"))?;
    let cfg = config::load(&path)?;
    let map = cfg.map.build()?;
    let d = map.dim();

    if let Some(threads) = cli.threads {
        // Best effort: the pool can only be sized once per process.
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .ok();
    }
    let seed = cli.seed.or(cfg.seed).unwrap_or(9);
    let out_dir = cli
        .out
        .or_else(|| cfg.out_dir.clone())
        .unwrap_or_else(|| PathBuf::from("out"));

    let command = cli.command;
    let name = command.name();
    let result = dispatch(command, &cfg, map.as_ref(), d, seed)?;

    let (pass, report, plots, failure) = match result {
        Ok(output) => (output.pass, output.report, output.plots, output.failure),
        Err(core_err) => {
            let msg = core_err.to_string();
            (
                false,
                serde_json::json!({ "error": msg }),
                Vec::new(),
                Some(msg),
            )
        }
    };

    let artifact = Artifact {
        schema_version: artifact::SCHEMA_VERSION,
        command: name,
        map: map.name(),
        seed,
        config: &cfg,
        pass,
        report,
    };
    let report_path = artifact.write(&out_dir)?;
    artifact::write_plots(&out_dir, &plots)?;

    if !pass {
        match &failure {
            Some(msg) => eprintln!("{name}: verification failed: {msg}"),
            None => eprintln!("{name}: verification failed"),
        }
        eprintln!("{name}: report written to {}", report_path.display());
    }
    Ok(pass)
}

/// Validates the relevant config block and runs the command. The outer
/// Result carries config problems (exit 2), the inner one runtime failures
/// that still produce an error artifact (exit 1).
fn dispatch(
    command: Command,
    cfg: &ExperimentConfig,
    map: &dyn phdyn::maps::DynamicalMap,
    d: usize,
    seed: u64,
) -> Result<phdyn::Result<CommandOutput>, RunError> {
    match command {
        Command::Certify => {
            let spec = cfg.certify.as_ref().ok_or_else(|| missing_block("certify"))?;
            spec.validate(d)?;
            Ok(commands::certify::run(map, spec))
        }
        Command::Leaves => {
            let spec = cfg.leaves.as_ref().ok_or_else(|| missing_block("leaves"))?;
            spec.validate(d)?;
            Ok(commands::leaves::run(map, spec))
        }
        Command::Perturb => {
            let spec = cfg.perturb.as_ref().ok_or_else(|| missing_block("perturb"))?;
            spec.validate(d)?;
            Ok(commands::perturb::run(map, &cfg.map, spec, seed))
        }
        Command::Holonomy => {
            let spec = cfg
                .holonomy
                .as_ref()
                .ok_or_else(|| missing_block("holonomy"))?;
            spec.validate(d)?;
            Ok(commands::holonomy::run(map, spec))
        }
        Command::Access => {
            let spec = cfg.access.as_ref().ok_or_else(|| missing_block("access"))?;
            spec.validate(d)?;
            Ok(commands::access::run(map, spec))
        }
        Command::Sections => {
            let spec = cfg
                .sections
                .as_ref()
                .ok_or_else(|| missing_block("sections"))?;
            spec.validate(d)?;
            Ok(commands::sections::run(map, spec, seed))
        }
        Command::Lyapunov => {
            let spec = cfg
                .lyapunov
                .as_ref()
                .ok_or_else(|| missing_block("lyapunov"))?;
            spec.validate(d)?;
            if let Some(cs) = cfg.certify.as_ref() {
                cs.validate(d)?;
            }
            Ok(commands::lyapunov::run(map, spec, cfg.certify.as_ref()))
        }
    }
}
