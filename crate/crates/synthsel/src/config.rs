//! Run configuration, readable from a JSON file.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use synthsel_core::bandit::{RewardKind, SolverId, PROMPT_STYLES};
use synthsel_core::budget::BudgetConfig;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum SelectorMode {
    Single,
    Double,
    LinearSingle,
    LinearDouble,
    FixedSolver,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum BackendKind {
    Http,
    Replay,
    /// Live HTTP, appending every answer to the fixture file.
    Record,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub name: String,
    /// Chat-completion URL, for the http and record backends.
    #[serde(default)]
    pub endpoint: Option<String>,
    /// Environment variable holding the API key.
    #[serde(default)]
    pub api_key_env: Option<String>,
    #[serde(default = "default_temperature")]
    pub temperature: f64,
    #[serde(default = "all_styles")]
    pub styles: Vec<u8>,
}

fn default_temperature() -> f64 {
    0.2
}

fn all_styles() -> Vec<u8> {
    (1..=PROMPT_STYLES).collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub selector: SelectorMode,
    /// Solver used by the fixed-solver selector.
    pub fixed_solver: SolverId,
    pub reward: RewardKind,
    pub time_budget: f64,
    pub cost_budget: f64,
    pub k: usize,
    /// Tail bound of the time allocator.
    pub delta1: f64,
    /// Tail bound of the cost allocator.
    pub delta2: f64,
    pub models: Vec<ModelConfig>,
    pub enumerator: bool,
    pub backend: BackendKind,
    /// Replay misses abort the run instead of counting as unsolved.
    pub strict_replay: bool,
    pub state: Option<PathBuf>,
    pub fixtures: Option<PathBuf>,
    pub corpus: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub smt_cmd: Option<String>,
    pub seed: u64,
    pub runs: usize,
    /// Seconds a solver may overrun its slice before it is flagged.
    pub grace: f64,
    /// Half-width of the internal verifier's integer grid.
    pub grid_bound: i64,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            selector: SelectorMode::Single,
            fixed_solver: SolverId::Enumerator,
            reward: RewardKind::Time,
            time_budget: 100.0,
            cost_budget: 100_000.0,
            k: 15,
            delta1: 0.05,
            delta2: 0.05,
            models: Vec::new(),
            enumerator: true,
            backend: BackendKind::Replay,
            strict_replay: false,
            state: None,
            fixtures: None,
            corpus: None,
            out: None,
            smt_cmd: None,
            seed: 0,
            runs: 1,
            grace: 0.5,
            grid_bound: 32,
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: {source}")]
    Json { path: PathBuf, source: serde_json::Error },
    #[error("invalid configuration: {0}")]
    Invalid(String),
}

impl RunConfig {
    pub fn from_file(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io { path: path.into(), source })?;
        serde_json::from_str(&text).map_err(|source| ConfigError::Json { path: path.into(), source })
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |m: String| Err(ConfigError::Invalid(m));
        if !(self.time_budget > 0.0) || !(self.cost_budget > 0.0) {
            return bad(format!("budgets must be positive (T = {}, C = {})", self.time_budget, self.cost_budget));
        }
        if self.k == 0 {
            return bad("k must be at least 1".into());
        }
        for d in [self.delta1, self.delta2] {
            if !(d > 0.0 && d < 1.0) {
                return bad(format!("tail bound {} is outside (0, 1)", d));
            }
        }
        for m in &self.models {
            if let Some(s) = m.styles.iter().find(|s| !(1..=PROMPT_STYLES).contains(s)) {
                return bad(format!("model {}: prompt style {} is outside 1..=6", m.name, s));
            }
        }
        if self.portfolio().is_empty() {
            return bad("the solver portfolio is empty".into());
        }
        if self.runs == 0 {
            return bad("runs must be at least 1".into());
        }
        Ok(())
    }

    /// Every enabled style of every model, then the enumerator.
    pub fn portfolio(&self) -> Vec<SolverId> {
        let mut out: Vec<SolverId> = self
            .models
            .iter()
            .flat_map(|m| m.styles.iter().map(move |s| SolverId::Llm { model: m.name.clone(), style: *s }))
            .collect();
        if self.enumerator {
            out.push(SolverId::Enumerator);
        }
        out
    }

    pub fn budget(&self) -> BudgetConfig {
        BudgetConfig {
            time: self.time_budget,
            cost: self.cost_budget,
            k: self.k,
            delta_time: self.delta1,
            delta_cost: self.delta2,
        }
    }
}
