//! TOML configuration.
//!
//! ```toml
//! main_branches = ["main"]
//!
//! [filter]
//! source_whitelist = ["src/"]
//!
//! [builder]
//! weak_edge_overlap = 0.3
//!
//! [testbed]
//! k_runs = 4
//! runner = { kind = "command", collect = "make list-tests", run = "make test {tests}" }
//! ```
//!
//! Every key is optional. The file is named by `--config`, else by the
//! `MDAG_CONFIG` environment variable.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::history::FilterConfig;
use crate::milestone::BuilderConfig;

pub const CONFIG_ENV: &str = "MDAG_CONFIG";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub main_branches: Vec<String>,
    pub filter: FilterConfig,
    pub builder: BuilderConfig,
    pub testbed: TestbedConfig,
    pub judge: JudgeConfig,
    pub analysis: AnalysisConfig,
}

impl Default for Config {
    fn default() -> Self {
        Config {
            main_branches: vec!["main".into(), "master".into()],
            filter: FilterConfig::default(),
            builder: BuilderConfig::default(),
            testbed: TestbedConfig::default(),
            judge: JudgeConfig::default(),
            analysis: AnalysisConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TestbedConfig {
    pub k_runs: usize,
    pub runner: RunnerConfig,
}

impl Default for TestbedConfig {
    fn default() -> Self {
        TestbedConfig { k_runs: 3, runner: RunnerConfig::Declarative }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum RunnerConfig {
    Declarative,
    Scripted { script: PathBuf },
    Command { collect: String, run: String },
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct JudgeConfig {
    /// External judge command, split shell-style.
    pub command: Option<String>,
    pub cache: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnalysisConfig {
    pub bins: usize,
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        AnalysisConfig { bins: 10 }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("invalid config {path}: {source}")]
    Parse { path: PathBuf, source: toml::de::Error },
}

impl Config {
    pub fn from_toml(text: &str) -> Result<Config, toml::de::Error> {
        toml::from_str(text)
    }

    pub fn read(path: &Path) -> Result<Config, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io { path: path.into(), source })?;
        Config::from_toml(&text).map_err(|source| ConfigError::Parse { path: path.into(), source })
    }

    /// Explicit path, else `MDAG_CONFIG`, else defaults.
    pub fn load(explicit: Option<&Path>) -> Result<Config, ConfigError> {
        let env = std::env::var_os(CONFIG_ENV).map(PathBuf::from);
        match explicit.map(Path::to_path_buf).or(env) {
            Some(p) => Config::read(&p),
            None => Ok(Config::default()),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn partial_config_keeps_defaults() {
        let c = Config::from_toml(
            "main_branches = [\"trunk\"]\n[builder]\nweak_edge_overlap = 0.3\n[testbed]\nk_runs = 4\nrunner = { kind = \"command\", collect = \"a\", run = \"b {tests}\" }\n",
        )
        .unwrap();
        assert_eq!(c.main_branches, vec!["trunk"]);
        assert_eq!(c.builder.weak_edge_overlap, 0.3);
        assert_eq!(c.builder.max_refine_rounds, 5);
        assert_eq!(c.testbed.k_runs, 4);
        assert!(matches!(c.testbed.runner, RunnerConfig::Command { .. }));
        assert_eq!(c.filter, FilterConfig::default());
        assert!(Config::from_toml("bogus = 1").is_err());
    }

    #[test]
    fn empty_is_default() {
        assert_eq!(Config::from_toml("").unwrap(), Config::default());
    }
}
