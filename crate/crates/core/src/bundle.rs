//! Command implementations and their self-describing result bundles, with
//! CSV and JSON rendering and atomic file output.

use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::config::{GridSource, OutputFormat, ResolvedConfig};
use crate::counting::{estimate_probs, simulate_trial_counts};
use crate::error::Result;
use crate::imperfection::{mc_envelope, mc_success_envelope, EnvelopeResult};
use crate::protocol::{
    analytic_detector_probs, joint_success_probability, run_session, AlicePolicy, Detector,
    MappingPolicy, ProtocolChain, SessionConfig,
};
use crate::qstate::Sign;
use crate::streams::child_seed;

pub const DETECTOR_COLUMNS: &str = "s,state,mu,k,p_analytic,p_mean,p_std,p_env_min,p_env_max,p_raw_mean,p_raw_std";
pub const SUCCESS_COLUMNS: &str = "s,p_succ_analytic,p_succ_mean,p_succ_std,p_succ_env_min,p_succ_env_max";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Command {
    Analytic,
    Simulate,
    Montecarlo,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metadata {
    pub tool: String,
    pub version: String,
    pub command: Command,
    pub seed: u64,
    pub config_hash: String,
    pub grid_source: GridSource,
    pub config: ResolvedConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectorRow {
    pub s: f64,
    pub state: String,
    pub mu: u8,
    pub k: String,
    pub p_analytic: f64,
    /// Background-subtracted counting estimate.
    pub p_mean: Option<f64>,
    pub p_std: Option<f64>,
    pub p_env_min: Option<f64>,
    pub p_env_max: Option<f64>,
    /// Counting estimate without background subtraction.
    pub p_raw_mean: Option<f64>,
    pub p_raw_std: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuccessRow {
    pub s: f64,
    pub p_succ_analytic: f64,
    pub p_succ_mean: Option<f64>,
    pub p_succ_std: Option<f64>,
    pub p_succ_env_min: Option<f64>,
    pub p_succ_env_max: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultBundle {
    pub metadata: Metadata,
    pub detectors: Vec<DetectorRow>,
    pub success: Vec<SuccessRow>,
}

/// Rounds to 15 significant digits.
pub fn round15(x: f64) -> f64 {
    if !x.is_finite() || x == 0.0 {
        return x;
    }
    format!("{x:.14e}").parse().expect("formatted float parses")
}

fn r(x: f64) -> f64 {
    round15(x)
}

fn ro(x: Option<f64>) -> Option<f64> {
    x.map(round15)
}

fn metadata(cfg: &ResolvedConfig, command: Command) -> Metadata {
    Metadata {
        tool: env!("CARGO_PKG_NAME").to_string(),
        version: env!("CARGO_PKG_VERSION").to_string(),
        command,
        seed: cfg.seed,
        config_hash: cfg.hash(),
        grid_source: cfg.grid_source,
        config: cfg.clone(),
    }
}

fn analytic_row(cfg: &ResolvedConfig, s: f64, sign: Sign, d: Detector) -> Result<DetectorRow> {
    let p = analytic_detector_probs(s, sign, &cfg.port_mapping)?.get(d);
    Ok(DetectorRow {
        s: r(s),
        state: sign.symbol().to_string(),
        mu: d.mu,
        k: d.k.symbol().to_string(),
        p_analytic: r(p),
        p_mean: None,
        p_std: None,
        p_env_min: None,
        p_env_max: None,
        p_raw_mean: None,
        p_raw_std: None,
    })
}

fn analytic_success(s: f64) -> Result<SuccessRow> {
    Ok(SuccessRow {
        s: r(s),
        p_succ_analytic: r(joint_success_probability(s)?),
        p_succ_mean: None,
        p_succ_std: None,
        p_succ_env_min: None,
        p_succ_env_max: None,
    })
}

/// Exact detector tables and joint-success curve.
pub fn cmd_analytic(cfg: &ResolvedConfig) -> Result<ResultBundle> {
    cfg.validate()?;
    let mut detectors = Vec::new();
    let mut success = Vec::new();
    for &s in &cfg.s_grid {
        for sign in cfg.alice_policy.signs() {
            for d in Detector::all() {
                detectors.push(analytic_row(cfg, s, sign, d)?);
            }
        }
        success.push(analytic_success(s)?);
    }
    Ok(ResultBundle {
        metadata: metadata(cfg, Command::Analytic),
        detectors,
        success,
    })
}

fn sign_index(sign: Sign) -> u64 {
    match sign {
        Sign::Plus => 1,
        Sign::Minus => 2,
    }
}

/// Trial simulation for the joint-success estimate, and photon-counting
/// runs per state for the detector table.
pub fn cmd_simulate(cfg: &ResolvedConfig) -> Result<ResultBundle> {
    cfg.validate()?;
    let mapping = MappingPolicy::Fixed(cfg.port_mapping);
    let mut detectors = Vec::new();
    let mut success = Vec::new();
    for (i, &s) in cfg.s_grid.iter().enumerate() {
        let point_seed = child_seed(cfg.seed, i as u64);
        let chain = ProtocolChain::new(s)?;
        for sign in cfg.alice_policy.signs() {
            let counts = simulate_trial_counts(
                &chain,
                sign,
                &mapping,
                &cfg.source,
                child_seed(point_seed, sign_index(sign)),
            )?;
            let est = estimate_probs(&counts)?;
            let main = est.subtracted.unwrap_or(est.raw);
            for d in Detector::all() {
                let mut row = analytic_row(cfg, s, sign, d)?;
                row.p_mean = ro(Some(main.mean.get(d)));
                row.p_std = ro(Some(main.std.get(d)));
                row.p_raw_mean = ro(Some(est.raw.mean.get(d)));
                row.p_raw_std = ro(Some(est.raw.std.get(d)));
                detectors.push(row);
            }
        }
        let stats = run_session(&SessionConfig {
            s,
            trials: cfg.trials,
            alice_policy: cfg.alice_policy,
            mapping,
            seed: point_seed,
        })?;
        let mut row = analytic_success(s)?;
        row.p_succ_mean = ro(Some(stats.p_succ()));
        row.p_succ_std = ro(Some(stats.p_succ_std()));
        success.push(row);
    }
    Ok(ResultBundle {
        metadata: metadata(cfg, Command::Simulate),
        detectors,
        success,
    })
}

/// Imperfection envelopes around the exact curves.
pub fn cmd_montecarlo(cfg: &ResolvedConfig) -> Result<ResultBundle> {
    cfg.validate()?;
    let signs = cfg.alice_policy.signs();
    let per_sign: Vec<(Sign, EnvelopeResult)> = signs
        .iter()
        .map(|&sign| {
            mc_envelope(&cfg.s_grid, sign, &cfg.imperfection, &cfg.port_mapping, cfg.seed)
                .map(|e| (sign, e))
        })
        .collect::<Result<_>>()?;
    let success_env = match cfg.alice_policy {
        AlicePolicy::Uniform => {
            mc_success_envelope(&cfg.s_grid, &cfg.imperfection, &cfg.port_mapping, cfg.seed)?
        }
        _ => per_sign[0].1.clone(),
    };
    let mut detectors = Vec::new();
    let mut success = Vec::new();
    for (i, &s) in cfg.s_grid.iter().enumerate() {
        for (sign, env) in &per_sign {
            let point = &env.points[i];
            for d in Detector::all() {
                let band = point.band(d);
                let mut row = analytic_row(cfg, s, *sign, d)?;
                row.p_mean = ro(Some(band.mean));
                row.p_env_min = ro(Some(band.min));
                row.p_env_max = ro(Some(band.max));
                detectors.push(row);
            }
        }
        let band = success_env.points[i].p_succ;
        let mut row = analytic_success(s)?;
        row.p_succ_mean = ro(Some(band.mean));
        row.p_succ_env_min = ro(Some(band.min));
        row.p_succ_env_max = ro(Some(band.max));
        success.push(row);
    }
    Ok(ResultBundle {
        metadata: metadata(cfg, Command::Montecarlo),
        detectors,
        success,
    })
}

/// Re-runs the command recorded in a bundle's metadata.
pub fn regenerate(bundle: &ResultBundle) -> Result<ResultBundle> {
    let cfg = &bundle.metadata.config;
    match bundle.metadata.command {
        Command::Analytic => cmd_analytic(cfg),
        Command::Simulate => cmd_simulate(cfg),
        Command::Montecarlo => cmd_montecarlo(cfg),
    }
}

fn num(x: f64) -> String {
    format!("{x}")
}

fn opt(x: Option<f64>) -> String {
    x.map(num).unwrap_or_default()
}

pub fn render_detectors_csv(b: &ResultBundle) -> String {
    let mut out = String::from(DETECTOR_COLUMNS);
    out.push('\n');
    for row in &b.detectors {
        let fields = [
            num(row.s),
            row.state.clone(),
            row.mu.to_string(),
            row.k.clone(),
            num(row.p_analytic),
            opt(row.p_mean),
            opt(row.p_std),
            opt(row.p_env_min),
            opt(row.p_env_max),
            opt(row.p_raw_mean),
            opt(row.p_raw_std),
        ];
        out.push_str(&fields.join(","));
        out.push('\n');
    }
    out
}

pub fn render_success_csv(b: &ResultBundle) -> String {
    let mut out = String::from(SUCCESS_COLUMNS);
    out.push('\n');
    for row in &b.success {
        let fields = [
            num(row.s),
            num(row.p_succ_analytic),
            opt(row.p_succ_mean),
            opt(row.p_succ_std),
            opt(row.p_succ_env_min),
            opt(row.p_succ_env_max),
        ];
        out.push_str(&fields.join(","));
        out.push('\n');
    }
    out
}

pub fn render_metadata_json(b: &ResultBundle) -> String {
    let mut s = serde_json::to_string_pretty(&b.metadata).expect("metadata serializes");
    s.push('\n');
    s
}

pub fn render_json(b: &ResultBundle) -> String {
    let mut s = serde_json::to_string_pretty(b).expect("bundle serializes");
    s.push('\n');
    s
}

/// File name and content of every output file for `format`.
pub fn render(b: &ResultBundle, format: OutputFormat) -> Vec<(&'static str, String)> {
    match format {
        OutputFormat::Csv => vec![
            ("detectors.csv", render_detectors_csv(b)),
            ("success.csv", render_success_csv(b)),
            ("metadata.json", render_metadata_json(b)),
        ],
        OutputFormat::Json => vec![("result.json", render_json(b))],
    }
}

/// Writes through a temporary file in the same directory, then renames.
pub fn write_atomic(path: &Path, content: &str) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(content.as_bytes())?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| e.error)?;
    Ok(())
}

/// Writes the bundle into directory `dir`, creating it if needed.
pub fn write_bundle(b: &ResultBundle, format: OutputFormat, dir: &Path) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir)?;
    render(b, format)
        .into_iter()
        .map(|(name, content)| {
            let path = dir.join(name);
            write_atomic(&path, &content)?;
            Ok(path)
        })
        .collect()
}
