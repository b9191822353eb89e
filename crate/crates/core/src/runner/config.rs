//! Run configuration: one declarative TOML file plus CLI flag overrides.
//! Environment variables carry secrets only (API keys named per endpoint).

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::client::{Backend, GenerationParams, MockBehavior, MockRule, MockSpec, ModelEndpoint};
use crate::dataset::TernaryLabel;
use crate::prompts::{OptionOrder, PromptStage};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("cannot parse config {path}: {source}")]
    Parse {
        path: String,
        #[source]
        source: toml::de::Error,
    },
    #[error("invalid config: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StrategyName {
    LabelOnly,
    SingleNoRot,
    Single,
    SelfReflection,
    DebateOnly,
    SelfreflectDebate,
}

impl StrategyName {
    pub fn id(self) -> &'static str {
        match self {
            StrategyName::LabelOnly => "label-only",
            StrategyName::SingleNoRot => "single-no-rot",
            StrategyName::Single => "single",
            StrategyName::SelfReflection => "self-reflection",
            StrategyName::DebateOnly => "debate-only",
            StrategyName::SelfreflectDebate => "selfreflect-debate",
        }
    }

    pub fn parse(s: &str) -> Result<Self, ConfigError> {
        match s {
            "label-only" => Ok(StrategyName::LabelOnly),
            "single-no-rot" => Ok(StrategyName::SingleNoRot),
            "single" => Ok(StrategyName::Single),
            "self-reflection" => Ok(StrategyName::SelfReflection),
            "debate-only" => Ok(StrategyName::DebateOnly),
            "selfreflect-debate" => Ok(StrategyName::SelfreflectDebate),
            other => Err(ConfigError::Invalid(format!("unknown strategy '{other}'"))),
        }
    }

    pub fn agent_count(self) -> usize {
        match self {
            StrategyName::LabelOnly => 0,
            StrategyName::SingleNoRot | StrategyName::Single | StrategyName::SelfReflection => 1,
            StrategyName::DebateOnly | StrategyName::SelfreflectDebate => 2,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PolicyName {
    Judge,
    Oracle,
    Random,
}

impl PolicyName {
    pub fn parse(s: &str) -> Result<Self, ConfigError> {
        match s {
            "judge" => Ok(PolicyName::Judge),
            "oracle" => Ok(PolicyName::Oracle),
            "random" => Ok(PolicyName::Random),
            other => Err(ConfigError::Invalid(format!("unknown policy '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetConfig {
    pub path: PathBuf,
    pub group_map: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StrategyConfig {
    pub kind: StrategyName,
    #[serde(default = "one")]
    pub rounds: u32,
    #[serde(default = "one")]
    pub iterations: u32,
    /// Constant answer for the label-only baseline.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fixed_label: Option<TernaryLabel>,
    /// Which of the two option-order runs feeds the accuracy tables.
    #[serde(default = "default_canonical")]
    pub canonical_order: OptionOrder,
}

fn one() -> u32 {
    1
}

fn default_canonical() -> OptionOrder {
    OptionOrder::ReflectFirst
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PolicyConfig {
    pub kind: PolicyName,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EndpointKind {
    Http,
    Mock,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MockBehaviorName {
    EchoGold,
    FixedLabel,
    SeededRandomLabel,
}

/// A scripted mock response; omitted keys match anything.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScriptRule {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scenario_id: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stage: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub turn_index: Option<u32>,
    pub response: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EndpointConfig {
    pub name: String,
    pub kind: EndpointKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model_id: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub base_url: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub api_key_env: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub default_behavior: Option<MockBehaviorName>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fixed_label: Option<TernaryLabel>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub script: Vec<ScriptRule>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub temperature: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_tokens: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub retry_limit: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub timeout_secs: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub backoff_base_ms: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub backoff_factor: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub jitter: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_in_flight: Option<usize>,
    /// Simulated per-call latency for mock endpoints.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delay_ms: Option<u64>,
}

impl EndpointConfig {
    /// Resolve into a concrete endpoint. The default sampling temperature is
    /// 0.0; strategies that run a scenario multiple times default to 0.8
    /// unless the config pins a value.
    pub fn to_endpoint(&self, strategy: StrategyName) -> Result<ModelEndpoint, ConfigError> {
        let default_temperature = if strategy == StrategyName::SelfreflectDebate {
            0.8
        } else {
            0.0
        };
        let mut params = GenerationParams {
            temperature: self.temperature.unwrap_or(default_temperature),
            ..GenerationParams::default()
        };
        if let Some(v) = self.max_tokens {
            params.max_tokens = v;
        }
        if let Some(v) = self.retry_limit {
            params.retry_limit = v;
        }
        if let Some(v) = self.timeout_secs {
            params.timeout = std::time::Duration::from_secs_f64(v);
        }
        if let Some(v) = self.backoff_base_ms {
            params.backoff_base = std::time::Duration::from_millis(v);
        }
        if let Some(v) = self.backoff_factor {
            params.backoff_factor = v;
        }
        if let Some(v) = self.jitter {
            params.jitter = v;
        }
        if !(0.0..=2.0).contains(&params.temperature) {
            return Err(ConfigError::Invalid(format!(
                "endpoint {}: temperature {} outside [0, 2]",
                self.name, params.temperature
            )));
        }
        let backend = match self.kind {
            EndpointKind::Http => Backend::Http {
                base_url: self
                    .base_url
                    .clone()
                    .ok_or_else(|| {
                        ConfigError::Invalid(format!("endpoint {}: http needs base_url", self.name))
                    })?,
                api_key_env: self.api_key_env.clone(),
            },
            EndpointKind::Mock => {
                let behavior = match self.default_behavior.unwrap_or(MockBehaviorName::EchoGold) {
                    MockBehaviorName::EchoGold => MockBehavior::EchoGold,
                    MockBehaviorName::SeededRandomLabel => MockBehavior::SeededRandomLabel,
                    MockBehaviorName::FixedLabel => MockBehavior::FixedLabel(
                        self.fixed_label.ok_or_else(|| {
                            ConfigError::Invalid(format!(
                                "endpoint {}: fixed-label behavior needs fixed_label",
                                self.name
                            ))
                        })?,
                    ),
                };
                let mut script = Vec::with_capacity(self.script.len());
                for rule in &self.script {
                    let stage = match &rule.stage {
                        Some(id) => Some(PromptStage::from_id(id).map_err(|_| {
                            ConfigError::Invalid(format!(
                                "endpoint {}: unknown stage '{id}' in script",
                                self.name
                            ))
                        })?),
                        None => None,
                    };
                    script.push(MockRule {
                        scenario_id: rule.scenario_id.clone(),
                        stage,
                        turn_index: rule.turn_index,
                        response: rule.response.clone(),
                    });
                }
                Backend::Mock(MockSpec {
                    seed: self.seed.unwrap_or(0),
                    script,
                    default_behavior: behavior,
                    delay_ms: self.delay_ms.unwrap_or(0),
                })
            }
        };
        Ok(ModelEndpoint {
            name: self.name.clone(),
            model_id: self
                .model_id
                .clone()
                .unwrap_or_else(|| format!("mock-{}", self.name)),
            backend,
            params,
            max_in_flight: self.max_in_flight.unwrap_or(4),
        })
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FilterConfig {
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub countries: Vec<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub ids: Vec<String>,
    /// 0 selects everything; N > 0 takes a seeded sample of N scenarios.
    #[serde(default)]
    pub sample: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_concurrency")]
    pub concurrency: usize,
    pub out_dir: PathBuf,
    pub dataset: DatasetConfig,
    pub strategy: StrategyConfig,
    pub policy: PolicyConfig,
    /// Endpoint names acting as agents, in role order (M1 then M2).
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub agents: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub judge: Option<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub endpoints: Vec<EndpointConfig>,
    #[serde(default)]
    pub filter: FilterConfig,
}

fn default_concurrency() -> usize {
    4
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        toml::from_str(&text).map_err(|source| ConfigError::Parse {
            path: path.display().to_string(),
            source,
        })
    }

    /// Stable serialization used for the manifest checksum.
    pub fn canonical_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    fn endpoint(&self, name: &str) -> Option<&EndpointConfig> {
        self.endpoints.iter().find(|e| e.name == name)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.concurrency == 0 {
            return Err(ConfigError::Invalid("concurrency must be >= 1".into()));
        }
        let mut names = std::collections::BTreeSet::new();
        for e in &self.endpoints {
            if !names.insert(e.name.as_str()) {
                return Err(ConfigError::Invalid(format!(
                    "duplicate endpoint name '{}'",
                    e.name
                )));
            }
        }
        let kind = self.strategy.kind;
        let wanted = kind.agent_count();
        if self.agents.len() != wanted {
            return Err(ConfigError::Invalid(format!(
                "strategy {} needs exactly {wanted} agent(s), got {}",
                kind.id(),
                self.agents.len()
            )));
        }
        if wanted == 2 && self.agents[0] == self.agents[1] {
            return Err(ConfigError::Invalid(
                "debate strategies need two distinct agents".into(),
            ));
        }
        for agent in &self.agents {
            if self.endpoint(agent).is_none() {
                return Err(ConfigError::Invalid(format!(
                    "agent '{agent}' is not a configured endpoint"
                )));
            }
        }
        if kind == StrategyName::LabelOnly && self.strategy.fixed_label.is_none() {
            return Err(ConfigError::Invalid(
                "label-only strategy needs strategy.fixed_label".into(),
            ));
        }
        if kind == StrategyName::SelfReflection && self.strategy.iterations == 0 {
            return Err(ConfigError::Invalid("iterations must be >= 1".into()));
        }
        if kind == StrategyName::DebateOnly && self.strategy.rounds == 0 {
            return Err(ConfigError::Invalid("rounds must be >= 1".into()));
        }
        let needs_judge = wanted == 2 && self.policy.kind == PolicyName::Judge;
        match (&self.judge, needs_judge) {
            (None, true) => {
                return Err(ConfigError::Invalid(
                    "judge policy needs a judge endpoint".into(),
                ))
            }
            (Some(name), _) => {
                if self.endpoint(name).is_none() {
                    return Err(ConfigError::Invalid(format!(
                        "judge '{name}' is not a configured endpoint"
                    )));
                }
                if self.agents.iter().any(|a| a == name) {
                    return Err(ConfigError::Invalid(
                        "judge endpoint must differ from the agents".into(),
                    ));
                }
            }
            (None, false) => {}
        }
        // resolve every referenced endpoint so transport errors surface now
        for name in self.agents.iter().chain(self.judge.iter()) {
            self.endpoint(name)
                .expect("checked above")
                .to_endpoint(kind)?;
        }
        Ok(())
    }
}
