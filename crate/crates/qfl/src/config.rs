//! JSON experiment configs. A config file holds one command block plus the global seed
//! and shot setting; every field has a default, so `{}` is a valid file.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use qfl_core::baselines::CpGranularity;
use qfl_core::training::{ModelConfig, TrainConfig};
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::CliError;

/// How observables are read out: exactly, or from a fixed number of shots.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Shots {
    #[default]
    Exact,
    Count(usize),
}

impl Shots {
    pub fn count(self) -> Option<usize> {
        match self {
            Shots::Exact => None,
            Shots::Count(n) => Some(n),
        }
    }
}

impl FromStr for Shots {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        if s.eq_ignore_ascii_case("exact") {
            return Ok(Shots::Exact);
        }
        match s.parse::<usize>() {
            Ok(0) => Err("shot count must be positive".into()),
            Ok(n) => Ok(Shots::Count(n)),
            Err(_) => Err(format!("expected a positive integer or `exact`, got `{s}`")),
        }
    }
}

impl fmt::Display for Shots {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Shots::Exact => f.write_str("exact"),
            Shots::Count(n) => write!(f, "{n}"),
        }
    }
}

impl Serialize for Shots {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            Shots::Exact => s.serialize_str("exact"),
            Shots::Count(n) => s.serialize_u64(*n as u64),
        }
    }
}

impl<'de> Deserialize<'de> for Shots {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        match Value::deserialize(d)? {
            Value::String(s) => s.parse().map_err(serde::de::Error::custom),
            Value::Number(n) => match n.as_u64() {
                Some(0) | None => Err(serde::de::Error::custom("shot count must be a positive integer")),
                Some(v) => Ok(Shots::Count(v as usize)),
            },
            other => Err(serde::de::Error::custom(format!("invalid shots value {other}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExpressivityConfig {
    pub num_features: Vec<usize>,
    pub depths: Vec<usize>,
    pub trials: usize,
    /// Multiplies the first block by a global phase so `det ≠ 1`.
    pub negative_control: bool,
}

impl Default for ExpressivityConfig {
    fn default() -> Self {
        Self { num_features: vec![1, 2, 3], depths: (1..=6).collect(), trials: 20, negative_control: false }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TorusConfig {
    pub num_features: usize,
    pub depths: Vec<usize>,
    pub resolution: usize,
    /// Entry of the restricted matrix, `(row, column)`.
    pub entry: [usize; 2],
}

impl Default for TorusConfig {
    fn default() -> Self {
        Self { num_features: 2, depths: vec![1, 2, 6], resolution: 101, entry: [1, 1] }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GapConfig {
    pub ranks: Vec<usize>,
    pub steps: usize,
    pub learning_rate: f64,
    pub seeds: Vec<u64>,
}

impl Default for GapConfig {
    fn default() -> Self {
        Self { ranks: vec![1, 2, 4], steps: 3000, learning_rate: 0.01, seeds: (0..5).collect() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SeparationConfig {
    pub class1_samples: usize,
    pub reduction_trials: usize,
    pub gap: GapConfig,
}

impl Default for SeparationConfig {
    fn default() -> Self {
        Self { class1_samples: 64, reduction_trials: 100, gap: GapConfig::default() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SampleBoundConfig {
    pub epsilon: f64,
    pub delta: f64,
    pub trials: usize,
}

impl Default for SampleBoundConfig {
    fn default() -> Self {
        Self { epsilon: 0.1, delta: 0.05, trials: 500 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TaskConfig {
    pub num_modalities: usize,
    pub feature_dim: usize,
    pub degree: usize,
    pub samples: usize,
}

impl Default for TaskConfig {
    fn default() -> Self {
        Self { num_modalities: 2, feature_dim: 1, degree: 2, samples: 400 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CpBaselineConfig {
    pub rank: usize,
    pub granularity: CpGranularity,
}

impl Default for CpBaselineConfig {
    fn default() -> Self {
        Self { rank: 2, granularity: CpGranularity::PerScalar }
    }
}

/// The training block; `train.seed` and `train.shots` are overwritten by the globals.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSyntheticConfig {
    pub task: TaskConfig,
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub cp: CpBaselineConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "command", rename_all = "kebab-case")]
pub enum CommandConfig {
    VerifyExpressivity(ExpressivityConfig),
    TorusScan(TorusConfig),
    Separation(SeparationConfig),
    SampleBound(SampleBoundConfig),
    TrainSynthetic(TrainSyntheticConfig),
}

impl CommandConfig {
    pub fn name(&self) -> &'static str {
        match self {
            CommandConfig::VerifyExpressivity(_) => "verify-expressivity",
            CommandConfig::TorusScan(_) => "torus-scan",
            CommandConfig::Separation(_) => "separation",
            CommandConfig::SampleBound(_) => "sample-bound",
            CommandConfig::TrainSynthetic(_) => "train-synthetic",
        }
    }
}

/// A fully resolved run. This is what gets echoed to `config.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub shots: Shots,
    #[serde(flatten)]
    pub command: CommandConfig,
}

impl ExperimentConfig {
    /// Parses `text` as the config of `command`. A missing `command` field is filled in;
    /// a different one is an error.
    pub fn parse(command: &str, text: &str) -> Result<Self, CliError> {
        let mut value: Value = serde_json::from_str(text).map_err(|e| CliError::Usage(format!("malformed config: {e}")))?;
        let Value::Object(map) = &mut value else {
            return Err(CliError::Usage("config must be a JSON object".into()));
        };
        match map.get("command") {
            None => {
                map.insert("command".into(), Value::String(command.into()));
            }
            Some(Value::String(c)) if c == command => {}
            Some(other) => return Err(CliError::Usage(format!("config is for {other}, not `{command}`"))),
        }
        map.entry("seed").or_insert(Value::from(0u64));
        map.entry("shots").or_insert(Value::String("exact".into()));
        serde_json::from_value(value).map_err(|e| CliError::Usage(format!("invalid config: {e}")))
    }

    pub fn load(command: &str, path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Usage(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(command, &text)
    }

    pub fn default_for(command: &str) -> Result<Self, CliError> {
        Self::parse(command, "{}")
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("config serializes");
        s.push('\n');
        s
    }
}
