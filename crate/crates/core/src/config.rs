//! Declarative run configuration (TOML). CLI flags override file values;
//! the merged result is echoed into every manifest.

use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::execution::{BindingKind, ExecutorBinding};
use crate::profile::{TermSet, DEFAULT_TERMS};
use crate::selection::{LengthUnit, SelectionSpec, Strategy};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("config file not found: {0}")]
    MissingFile(String),
    #[error("failed to parse config: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("{0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetPaths {
    pub train: Option<PathBuf>,
    pub test: Option<PathBuf>,
    pub predictions: Option<PathBuf>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SelectionConfig {
    pub strategy: String,
    pub target_size: usize,
    pub group_cap: usize,
    pub stratum_size: Option<usize>,
    pub stratum_percentile: Option<f64>,
    pub hard_databases: Vec<String>,
    pub hard_sources: Vec<String>,
    pub seed: u64,
    pub length_unit: String,
}

impl Default for SelectionConfig {
    fn default() -> Self {
        let spec = SelectionSpec::default();
        SelectionConfig {
            strategy: spec.strategy.name().to_string(),
            target_size: spec.target_size,
            group_cap: spec.group_cap,
            stratum_size: Some(spec.stratum_size),
            stratum_percentile: None,
            hard_databases: spec.hard_databases.into_iter().collect(),
            hard_sources: spec.hard_sources.into_iter().collect(),
            seed: spec.seed,
            length_unit: "chars".to_string(),
        }
    }
}

impl SelectionConfig {
    /// Resolves to a SelectionSpec. `computed_stratum` supplies the value
    /// when only a percentile is configured.
    pub fn to_spec(&self, computed_stratum: Option<usize>) -> Result<SelectionSpec, ConfigError> {
        let strategy: Strategy = self
            .strategy
            .parse()
            .map_err(ConfigError::Invalid)?;
        let length_unit = match self.length_unit.as_str() {
            "chars" => LengthUnit::Chars,
            "tokens" => LengthUnit::Tokens,
            other => {
                return Err(ConfigError::Invalid(format!(
                    "length_unit must be \"chars\" or \"tokens\", got {other:?}"
                )))
            }
        };
        let stratum_size = self
            .stratum_size
            .or(computed_stratum)
            .unwrap_or(SelectionSpec::default().stratum_size);
        if self.target_size == 0 {
            return Err(ConfigError::Invalid("target_size must be >= 1".into()));
        }
        if self.group_cap == 0 {
            return Err(ConfigError::Invalid("group_cap must be >= 1".into()));
        }
        Ok(SelectionSpec {
            strategy,
            target_size: self.target_size,
            group_cap: self.group_cap,
            stratum_size,
            hard_databases: self.hard_databases.iter().cloned().collect::<BTreeSet<_>>(),
            hard_sources: self.hard_sources.iter().cloned().collect::<BTreeSet<_>>(),
            seed: self.seed,
            length_unit,
        })
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExecutorConfig {
    pub mode: String,
    pub fixture: Option<PathBuf>,
    pub uri: Option<String>,
    pub user: Option<String>,
    pub password: Option<String>,
    pub timeout_secs: u64,
    pub max_in_flight: usize,
    pub retries: usize,
}

impl Default for ExecutorConfig {
    fn default() -> Self {
        ExecutorConfig {
            mode: "replay".to_string(),
            fixture: None,
            uri: None,
            user: None,
            password: None,
            timeout_secs: 30,
            max_in_flight: 4,
            retries: 2,
        }
    }
}

impl ExecutorConfig {
    /// Environment variables GRAPHDB_URI/GRAPHDB_USER/GRAPHDB_PASSWORD fill
    /// in live-connection fields the config leaves unset.
    pub fn to_binding(&self) -> Result<ExecutorBinding, ConfigError> {
        match self.mode.as_str() {
            "replay" => {
                let fixture = self.fixture.as_ref().ok_or_else(|| {
                    ConfigError::Invalid("replay mode requires a fixture path".into())
                })?;
                let mut binding = ExecutorBinding::replay(fixture.display().to_string());
                binding.timeout_secs = self.timeout_secs;
                binding.max_in_flight = self.max_in_flight;
                Ok(binding)
            }
            "live" => {
                let uri = self
                    .uri
                    .clone()
                    .or_else(|| std::env::var("GRAPHDB_URI").ok())
                    .ok_or_else(|| {
                        ConfigError::Invalid(
                            "live mode requires executor.uri or GRAPHDB_URI".into(),
                        )
                    })?;
                Ok(ExecutorBinding {
                    kind: BindingKind::Live,
                    target: uri,
                    user: self.user.clone().or_else(|| std::env::var("GRAPHDB_USER").ok()),
                    password: self
                        .password
                        .clone()
                        .or_else(|| std::env::var("GRAPHDB_PASSWORD").ok()),
                    timeout_secs: self.timeout_secs,
                    max_in_flight: self.max_in_flight,
                    retries: self.retries,
                })
            }
            other => Err(ConfigError::Invalid(format!(
                "executor.mode must be \"replay\" or \"live\", got {other:?}"
            ))),
        }
    }
}

fn default_term_set() -> Vec<String> {
    DEFAULT_TERMS.iter().map(|t| t.to_string()).collect()
}

fn default_out_dir() -> PathBuf {
    PathBuf::from("reports")
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub dataset: DatasetPaths,
    pub selection: SelectionConfig,
    pub term_set: Vec<String>,
    pub executor: ExecutorConfig,
    pub out_dir: PathBuf,
    pub strict: bool,
    /// run translation/execution evaluation stages when predictions exist
    pub evaluate: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            dataset: DatasetPaths::default(),
            selection: SelectionConfig::default(),
            term_set: default_term_set(),
            executor: ExecutorConfig::default(),
            out_dir: default_out_dir(),
            strict: false,
            evaluate: false,
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        if !path.exists() {
            return Err(ConfigError::MissingFile(path.display().to_string()));
        }
        let raw = fs::read_to_string(path)?;
        Ok(toml::from_str(&raw)?)
    }

    pub fn term_set(&self) -> TermSet {
        TermSet::new(&self.term_set)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_spec_round_trips_through_config() {
        let config = RunConfig::default();
        let spec = config.selection.to_spec(None).unwrap();
        assert_eq!(spec, SelectionSpec::default());
    }

    #[test]
    fn parse_minimal_toml() {
        let raw = r#"
            [dataset]
            train = "train.jsonl"

            [selection]
            strategy = "length"
            seed = 99
        "#;
        let config: RunConfig = toml::from_str(raw).unwrap();
        assert_eq!(config.dataset.train.as_deref(), Some(Path::new("train.jsonl")));
        let spec = config.selection.to_spec(None).unwrap();
        assert_eq!(spec.strategy, Strategy::Length);
        assert_eq!(spec.seed, 99);
        assert_eq!(spec.target_size, 16_173);
    }

    #[test]
    fn bad_strategy_rejected() {
        let config = SelectionConfig {
            strategy: "mystery".into(),
            ..Default::default()
        };
        assert!(config.to_spec(None).is_err());
    }

    #[test]
    fn percentile_stratum_resolution() {
        let config = SelectionConfig {
            stratum_size: None,
            stratum_percentile: Some(0.75),
            ..Default::default()
        };
        let spec = config.to_spec(Some(1234)).unwrap();
        assert_eq!(spec.stratum_size, 1234);
    }

    #[test]
    fn replay_mode_requires_fixture() {
        let config = ExecutorConfig::default();
        assert!(config.to_binding().is_err());
        let config = ExecutorConfig {
            fixture: Some(PathBuf::from("fixture.jsonl")),
            ..Default::default()
        };
        assert_eq!(config.to_binding().unwrap().kind, BindingKind::Replay);
    }
}
