//! TOML pipeline configuration. Every default matches the reference
//! hyperparameters (K = 16, three curriculum rounds, sigma 0.1, 6-call tool
//! cap), so an empty config file runs the canonical settings.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::policy::CurriculumSchedule;
use crate::reward::RewardConfig;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("invalid config: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("referenced path does not exist: {0}")]
    MissingPath(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub paths: PathsConfig,
    pub flywheel: FlywheelSection,
    pub sampler: SamplerSection,
    pub rewards: RewardConfig,
    pub curriculum: CurriculumSection,
    pub generator: Binding,
    pub judge: Binding,
    pub sim: SimSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct PathsConfig {
    /// Optional directory of prompt/hint template overrides.
    pub templates_dir: Option<PathBuf>,
    /// Optional input dataset directory.
    pub data_dir: Option<PathBuf>,
    /// Run directories are created under this root.
    pub output_dir: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FlywheelSection {
    pub rounds: usize,
    pub initial_rollouts_per_question: usize,
    pub max_tool_calls: usize,
    pub pool_cap: usize,
    pub enhance_all_rounds: bool,
}

impl Default for FlywheelSection {
    fn default() -> Self {
        FlywheelSection {
            rounds: 1,
            initial_rollouts_per_question: 8,
            max_tool_calls: 6,
            pool_cap: 64,
            enhance_all_rounds: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SamplerSection {
    /// Trajectories sampled per question for dispersion statistics.
    pub k: usize,
    /// Questions retained by Pareto selection.
    pub n: usize,
}

impl Default for SamplerSection {
    fn default() -> Self {
        SamplerSection { k: 16, n: 64 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CurriculumSection {
    pub rounds: usize,
    pub sigma_tool_per_round: Vec<f64>,
    pub sigma_len_per_round: Vec<f64>,
    pub epochs_per_round: usize,
    pub epsilon: f64,
    pub learning_rate: f64,
}

impl Default for CurriculumSection {
    fn default() -> Self {
        let d = CurriculumSchedule::default();
        CurriculumSection {
            rounds: d.rounds,
            sigma_tool_per_round: d.sigma_tool_per_round,
            sigma_len_per_round: d.sigma_len_per_round,
            epochs_per_round: d.epochs_per_round,
            epsilon: d.epsilon,
            learning_rate: d.learning_rate,
        }
    }
}

impl CurriculumSection {
    pub fn to_schedule(&self, sampler: &SamplerSection) -> CurriculumSchedule {
        CurriculumSchedule {
            rounds: self.rounds,
            sigma_tool_per_round: self.sigma_tool_per_round.clone(),
            sigma_len_per_round: self.sigma_len_per_round.clone(),
            selection_size: sampler.n,
            epochs_per_round: self.epochs_per_round,
            rollouts_per_question: sampler.k,
            epsilon: self.epsilon,
            learning_rate: self.learning_rate,
        }
    }
}

/// How the generator or judge is provided: the built-in simulated agent or
/// an OpenAI-compatible HTTP endpoint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Binding {
    Simulated {
        #[serde(default)]
        seed: u64,
    },
    Http {
        base_url: String,
        model: String,
        /// Name of the environment variable holding the API key; checked at
        /// run time, not load time.
        key_env_var: String,
        #[serde(default = "default_temperature")]
        temperature: f64,
        #[serde(default = "default_timeout_secs")]
        timeout_secs: u64,
    },
}

fn default_temperature() -> f64 {
    0.7
}

fn default_timeout_secs() -> u64 {
    120
}

impl Default for Binding {
    fn default() -> Self {
        Binding::Simulated { seed: 0 }
    }
}

/// Parameters of the synthetic world and the simulated agent's error knobs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimSection {
    pub n_math: usize,
    pub n_knowledge: usize,
    pub seed: u64,
    pub p_redundant_call: f64,
    pub p_malformed_call: f64,
    pub p_premature_answer: f64,
    pub p_reasoning_error: f64,
    pub verbosity_min: usize,
    pub verbosity_max: usize,
}

impl Default for SimSection {
    fn default() -> Self {
        SimSection {
            n_math: 100,
            n_knowledge: 100,
            seed: 0,
            p_redundant_call: 0.6,
            p_malformed_call: 0.0,
            p_premature_answer: 0.2,
            p_reasoning_error: 0.0,
            verbosity_min: 0,
            verbosity_max: 4,
        }
    }
}

impl SimSection {
    pub fn agent_config(&self) -> crate::sim::SimAgentConfig {
        crate::sim::SimAgentConfig {
            seed: self.seed,
            p_redundant_call: self.p_redundant_call,
            p_malformed_call: self.p_malformed_call,
            p_premature_answer: self.p_premature_answer,
            p_reasoning_error: self.p_reasoning_error,
            verbosity_tokens: (self.verbosity_min, self.verbosity_max),
        }
    }
}

impl PipelineConfig {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        let config: PipelineConfig = toml::from_str(&text)?;
        for dir in [&config.paths.templates_dir, &config.paths.data_dir] {
            if let Some(dir) = dir {
                if !dir.exists() {
                    return Err(ConfigError::MissingPath(dir.display().to_string()));
                }
            }
        }
        Ok(config)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }
}
