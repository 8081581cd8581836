//! Run configuration: a JSON document plus command-line overrides, resolved
//! into the exact parameter set a command runs with.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::counting::SourceConfig;
use crate::error::{Result, SusdError};
use crate::imperfection::ImperfectionConfig;
use crate::protocol::{AlicePolicy, PortMapping};

/// Seven overlaps spread over (0, 1). Not taken from any measured data set.
pub const DEFAULT_S_GRID: [f64; 7] = [0.05, 0.10, 0.20, 0.30, 0.50, 0.70, 0.90];
pub const DEFAULT_TRIALS: u64 = 1_000_000;
pub const DEFAULT_SEED: u64 = 20_240_601;
pub const SEED_ENV: &str = "SUSD_SEED";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum OutputFormat {
    #[default]
    Csv,
    Json,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    pub path: Option<PathBuf>,
    pub format: Option<OutputFormat>,
}

/// The on-disk configuration document. Every field is optional.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub s_grid: Option<Vec<f64>>,
    pub alice_policy: Option<AlicePolicy>,
    pub trials: Option<u64>,
    pub seed: Option<u64>,
    pub imperfection: Option<ImperfectionConfig>,
    pub source: Option<SourceConfig>,
    pub port_mapping: Option<PortMapping>,
    pub output: Option<OutputConfig>,
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| SusdError::Config(e.to_string()))
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| SusdError::Config(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }
}

/// Command-line values that take precedence over the file.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Overrides {
    pub s_grid: Option<Vec<f64>>,
    pub seed: Option<u64>,
    pub trials: Option<u64>,
    pub out: Option<PathBuf>,
    pub format: Option<OutputFormat>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GridSource {
    /// The built-in grid, which is illustrative and not measured data.
    IllustrativeDefault,
    User,
}

/// Everything that determines a command's numbers. Output location and
/// format are kept separate so they do not enter the config hash.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ResolvedConfig {
    pub s_grid: Vec<f64>,
    pub grid_source: GridSource,
    pub alice_policy: AlicePolicy,
    pub trials: u64,
    pub seed: u64,
    pub imperfection: ImperfectionConfig,
    pub source: SourceConfig,
    pub port_mapping: PortMapping,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct OutputTarget {
    pub path: Option<PathBuf>,
    pub format: OutputFormat,
}

fn parse_env_seed(value: Option<&str>) -> Result<Option<u64>> {
    value
        .map(|v| {
            v.trim()
                .parse::<u64>()
                .map_err(|_| SusdError::Config(format!("{SEED_ENV}={v:?} is not a u64")))
        })
        .transpose()
}

/// Merges file, overrides and the seed environment value. Seed precedence:
/// override, then file, then environment, then the built-in default.
pub fn resolve(
    file: Option<RunConfig>,
    overrides: Overrides,
    env_seed: Option<&str>,
) -> Result<(ResolvedConfig, OutputTarget)> {
    let file = file.unwrap_or_default();
    let (s_grid, grid_source) = match overrides.s_grid.or(file.s_grid) {
        Some(g) => (g, GridSource::User),
        None => (DEFAULT_S_GRID.to_vec(), GridSource::IllustrativeDefault),
    };
    let seed = match overrides.seed.or(file.seed) {
        Some(s) => s,
        None => parse_env_seed(env_seed)?.unwrap_or(DEFAULT_SEED),
    };
    let output = file.output.unwrap_or_default();
    let resolved = ResolvedConfig {
        s_grid,
        grid_source,
        alice_policy: file.alice_policy.unwrap_or_default(),
        trials: overrides.trials.or(file.trials).unwrap_or(DEFAULT_TRIALS),
        seed,
        imperfection: file.imperfection.unwrap_or_default(),
        source: file.source.unwrap_or_default(),
        port_mapping: file.port_mapping.unwrap_or_default(),
    };
    resolved.validate()?;
    let target = OutputTarget {
        path: overrides.out.or(output.path),
        format: overrides.format.or(output.format).unwrap_or_default(),
    };
    Ok((resolved, target))
}

impl ResolvedConfig {
    pub fn validate(&self) -> Result<()> {
        if self.s_grid.is_empty() {
            return Err(SusdError::Config("s_grid must not be empty".into()));
        }
        if let Some(bad) = self.s_grid.iter().find(|s| !(0.0..=1.0).contains(*s)) {
            return Err(SusdError::Config(format!("s_grid value {bad} outside [0, 1]")));
        }
        if self.trials == 0 {
            return Err(SusdError::Config("trials must be at least 1".into()));
        }
        self.imperfection.validate()?;
        self.source.validate()
    }

    /// Canonical JSON used for hashing and embedding.
    pub fn canonical_json(&self) -> String {
        serde_json::to_string(self).expect("config serializes")
    }

    /// SHA-256 of [`ResolvedConfig::canonical_json`], hex encoded.
    pub fn hash(&self) -> String {
        use sha2::{Digest, Sha256};
        hex::encode(Sha256::digest(self.canonical_json().as_bytes()))
    }
}

/// Parses a comma-separated grid such as `0.1,0.2,0.5`.
pub fn parse_grid(text: &str) -> Result<Vec<f64>> {
    text.split(',')
        .map(|t| {
            t.trim()
                .parse::<f64>()
                .map_err(|_| SusdError::Config(format!("bad grid value {t:?}")))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_document_resolves_to_defaults() {
        let (c, out) = resolve(Some(RunConfig::from_json("{}").unwrap()), Overrides::default(), None).unwrap();
        assert_eq!(c.s_grid, DEFAULT_S_GRID.to_vec());
        assert_eq!(c.grid_source, GridSource::IllustrativeDefault);
        assert_eq!(c.trials, DEFAULT_TRIALS);
        assert_eq!(c.seed, DEFAULT_SEED);
        assert_eq!(c.source, SourceConfig::default());
        assert_eq!(out.format, OutputFormat::Csv);
        assert!(out.path.is_none());
    }

    #[test]
    fn unknown_keys_are_rejected() {
        for doc in [
            r#"{"grid": [0.1]}"#,
            r#"{"source": {"rate": 1}}"#,
            r#"{"imperfection": {"jitter": 1}}"#,
            r#"{"output": {"dir": "x"}}"#,
        ] {
            assert!(matches!(RunConfig::from_json(doc), Err(SusdError::Config(_))), "{doc}");
        }
    }

    #[test]
    fn out_of_range_values_are_rejected() {
        for doc in [
            r#"{"s_grid": [0.1, 1.5]}"#,
            r#"{"s_grid": []}"#,
            r#"{"trials": 0}"#,
            r#"{"source": {"detector_efficiency": 0}}"#,
            r#"{"imperfection": {"samples": 0}}"#,
        ] {
            let cfg = RunConfig::from_json(doc).unwrap();
            assert!(resolve(Some(cfg), Overrides::default(), None).is_err(), "{doc}");
        }
    }

    #[test]
    fn seed_precedence() {
        let file = RunConfig {
            seed: Some(5),
            ..Default::default()
        };
        let flag = Overrides {
            seed: Some(9),
            ..Default::default()
        };
        let seed = |f: Option<RunConfig>, o: Overrides, e| resolve(f, o, e).unwrap().0.seed;
        assert_eq!(seed(Some(file.clone()), flag.clone(), Some("7")), 9);
        assert_eq!(seed(Some(file), Overrides::default(), Some("7")), 5);
        assert_eq!(seed(None, Overrides::default(), Some("7")), 7);
        assert_eq!(seed(None, Overrides::default(), None), DEFAULT_SEED);
        assert!(resolve(None, Overrides::default(), Some("abc")).is_err());
    }

    #[test]
    fn overrides_win_and_mark_grid_as_user() {
        let file = RunConfig::from_json(
            r#"{"s_grid": [0.2], "trials": 10, "output": {"path": "a", "format": "json"}}"#,
        )
        .unwrap();
        let (c, out) = resolve(
            Some(file),
            Overrides {
                s_grid: Some(vec![0.3, 0.4]),
                trials: Some(20),
                format: Some(OutputFormat::Csv),
                ..Default::default()
            },
            None,
        )
        .unwrap();
        assert_eq!(c.s_grid, vec![0.3, 0.4]);
        assert_eq!(c.grid_source, GridSource::User);
        assert_eq!(c.trials, 20);
        assert_eq!(out.path, Some(PathBuf::from("a")));
        assert_eq!(out.format, OutputFormat::Csv);
    }

    #[test]
    fn hash_is_stable_and_sensitive() {
        let (a, _) = resolve(None, Overrides::default(), None).unwrap();
        let (b, _) = resolve(None, Overrides::default(), None).unwrap();
        assert_eq!(a.hash(), b.hash());
        assert_eq!(a.hash().len(), 64);
        let (c, _) = resolve(
            None,
            Overrides {
                seed: Some(1),
                ..Default::default()
            },
            None,
        )
        .unwrap();
        assert_ne!(a.hash(), c.hash());
    }

    #[test]
    fn resolved_config_round_trips() {
        let (a, _) = resolve(None, Overrides::default(), None).unwrap();
        let back: ResolvedConfig = serde_json::from_str(&a.canonical_json()).unwrap();
        assert_eq!(a, back);
    }

    #[test]
    fn grid_parsing() {
        assert_eq!(parse_grid("0.1, 0.5,1").unwrap(), vec![0.1, 0.5, 1.0]);
        assert!(parse_grid("0.1,x").is_err());
    }
}
