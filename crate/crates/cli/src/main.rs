use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use susd_core::bundle::{self, ResultBundle};
use susd_core::config::{self, OutputFormat, OutputTarget, Overrides, ResolvedConfig, RunConfig};
use susd_core::validate::{run_validation, ValidationOptions};
use susd_core::SusdError;

/// Sequential unambiguous state discrimination simulator.
#[derive(Parser)]
#[command(name = "susd", version)]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Exact detector tables and joint-success curve.
    Analytic(Common),
    /// Trial simulation with photon-counting statistics.
    Simulate(Common),
    /// Imperfection envelopes from Monte Carlo sampling.
    Montecarlo(Common),
    /// Run the self-check suite.
    Validate(ValidateArgs),
}

#[derive(Args)]
struct Common {
    /// JSON configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Single overlap value.
    #[arg(long, conflicts_with = "s_grid")]
    s: Option<f64>,
    /// Comma-separated overlap grid.
    #[arg(long)]
    s_grid: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    trials: Option<u64>,
    /// Output directory. Without it, results go to stdout.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum)]
    format: Option<Format>,
    /// Worker threads (results do not depend on it).
    #[arg(long)]
    workers: Option<usize>,
}

#[derive(Args)]
struct ValidateArgs {
    #[command(flatten)]
    common: Common,
    /// Misalign Bob's clockwise plate by this many degrees.
    #[arg(long, default_value_t = 0.0)]
    inject_bob_cw_error: f64,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Csv,
    Json,
}

enum Failure {
    Config(String),
    Validation,
    Other(String),
}

impl From<SusdError> for Failure {
    fn from(e: SusdError) -> Self {
        match e {
            SusdError::Config(m) => Failure::Config(m),
            other => Failure::Other(other.to_string()),
        }
    }
}

fn resolve(c: &Common) -> Result<(ResolvedConfig, OutputTarget), Failure> {
    let file = c.config.as_deref().map(RunConfig::load).transpose()?;
    let s_grid = match (&c.s, &c.s_grid) {
        (Some(s), _) => Some(vec![*s]),
        (None, Some(g)) => Some(config::parse_grid(g)?),
        (None, None) => None,
    };
    let overrides = Overrides {
        s_grid,
        seed: c.seed,
        trials: c.trials,
        out: c.out.clone(),
        format: c.format.map(|f| match f {
            Format::Csv => OutputFormat::Csv,
            Format::Json => OutputFormat::Json,
        }),
    };
    let env_seed = std::env::var(config::SEED_ENV).ok();
    Ok(config::resolve(file, overrides, env_seed.as_deref())?)
}

fn set_workers(n: Option<usize>) -> Result<(), Failure> {
    if let Some(n) = n {
        if n == 0 {
            return Err(Failure::Config("workers must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Failure::Other(e.to_string()))?;
    }
    Ok(())
}

fn stdout(text: &str) -> Result<(), Failure> {
    std::io::stdout()
        .write_all(text.as_bytes())
        .map_err(|e| Failure::Other(e.to_string()))
}

fn emit(b: &ResultBundle, target: &OutputTarget) -> Result<(), Failure> {
    match &target.path {
        Some(dir) => {
            for path in bundle::write_bundle(b, target.format, dir)? {
                eprintln!("wrote {}", path.display());
            }
            Ok(())
        }
        None => match target.format {
            OutputFormat::Csv => stdout(&format!(
                "{}\n{}",
                bundle::render_detectors_csv(b),
                bundle::render_success_csv(b)
            )),
            OutputFormat::Json => stdout(&bundle::render_json(b)),
        },
    }
}

fn run(cli: Cli) -> Result<(), Failure> {
    let (common, command): (&Common, fn(&ResolvedConfig) -> susd_core::Result<ResultBundle>) =
        match &cli.command {
            Cmd::Analytic(c) => (c, bundle::cmd_analytic),
            Cmd::Simulate(c) => (c, bundle::cmd_simulate),
            Cmd::Montecarlo(c) => (c, bundle::cmd_montecarlo),
            Cmd::Validate(v) => return validate(v),
        };
    let (cfg, target) = resolve(common)?;
    set_workers(common.workers)?;
    emit(&command(&cfg)?, &target)
}

fn validate(v: &ValidateArgs) -> Result<(), Failure> {
    let (cfg, target) = resolve(&v.common)?;
    set_workers(v.common.workers)?;
    let report = run_validation(&ValidationOptions {
        s_grid: cfg.s_grid,
        seed: cfg.seed,
        bob_cw_error_deg: v.inject_bob_cw_error,
        ..Default::default()
    })?;
    let (name, text) = match target.format {
        OutputFormat::Csv => ("validation.txt", report.render()),
        OutputFormat::Json => ("validation.json", report.to_json()),
    };
    match &target.path {
        Some(dir) => {
            std::fs::create_dir_all(dir).map_err(|e| Failure::Other(e.to_string()))?;
            bundle::write_atomic(&dir.join(name), &text)?;
        }
        None => stdout(&text)?,
    }
    if report.passed() {
        Ok(())
    } else {
        Err(Failure::Validation)
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(m)) => {
            eprintln!("config error: {m}");
            ExitCode::from(2)
        }
        Err(Failure::Validation) => {
            eprintln!("validation failed");
            ExitCode::from(3)
        }
        Err(Failure::Other(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(1)
        }
    }
}
