//! Model registry: the ordered selection set of models and the pipeline defaults.
//!
//! The registry is loaded from a TOML file:
//!
//! ```toml
//! fuser_endpoint = "http://127.0.0.1:9000/fuse"   # optional
//!
//! [defaults]
//! budget_fraction = 0.2
//! grid_resolution = 1000
//! dispatch_timeout_ms = 30000
//! failure_policy = "fuse_partial"        # or "fail_fast"
//! fusion_mode = "best_predicted"         # or "remote"; omitted => remote iff fuser_endpoint is set
//! infeasible_policy = "error"            # or "cheapest_model"
//! token_mode = "chars_ratio"             # or "whitespace"
//! max_parallel = 0                       # 0 => all selected models at once
//! max_tokens = 256
//!
//! [[models]]
//! name = "alpaca-7b"
//! endpoint = "mock"                      # or an http(s) URL
//! n_params = 6_700_000_000
//! n_layer = 32
//! d_model = 4096
//! max_ctx = 2048
//! chars_per_token = 4.0                  # optional, default 4.0
//! ```
//!
//! Model order in the file is the canonical index order: predictor output slot
//! `i`, cost vector slot `i` and selection index `i` all refer to `models[i]`.

use std::collections::HashSet;
use std::path::Path;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::costing::TokenMode;
use crate::error::{Error, Result};

/// Environment variable consulted for the registry path when `--config` is absent.
pub const CONFIG_ENV: &str = "LLM_ENSEMBLE_CONFIG";

pub const DEFAULT_CHARS_PER_TOKEN: f64 = 4.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub name: String,
    pub endpoint: String,
    /// Non-embedding parameter count.
    #[serde(deserialize_with = "de_count")]
    pub n_params: u64,
    pub n_layer: u64,
    /// Residual-stream width.
    pub d_model: u64,
    pub max_ctx: u64,
    #[serde(default = "default_chars_per_token")]
    pub chars_per_token: f64,
}

fn default_chars_per_token() -> f64 {
    DEFAULT_CHARS_PER_TOKEN
}

// Accepts `6_700_000_000` as well as `6.7e9`.
fn de_count<'de, D: serde::Deserializer<'de>>(de: D) -> std::result::Result<u64, D::Error> {
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Count {
        Int(u64),
        Float(f64),
    }
    match Count::deserialize(de)? {
        Count::Int(v) => Ok(v),
        Count::Float(f) if f.is_finite() && f >= 0.0 && f.fract() == 0.0 && f < 1.8e19 => Ok(f as u64),
        Count::Float(f) => Err(serde::de::Error::custom(format!("expected a non-negative integer count, got {f}"))),
    }
}

impl ModelSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |message: &str| Error::InvalidModel { model: self.name.clone(), message: message.to_string() };
        if self.name.trim().is_empty() {
            return Err(bad("name must be non-empty"));
        }
        if self.endpoint.trim().is_empty() {
            return Err(bad("endpoint must be non-empty"));
        }
        if self.n_params < 1 {
            return Err(bad("n_params must be >= 1"));
        }
        if self.n_layer < 1 {
            return Err(bad("n_layer must be >= 1"));
        }
        if self.d_model < 1 {
            return Err(bad("d_model must be >= 1"));
        }
        if self.max_ctx < 1 {
            return Err(bad("max_ctx must be >= 1"));
        }
        if !(self.chars_per_token.is_finite() && self.chars_per_token > 0.0) {
            return Err(bad("chars_per_token must be a positive finite number"));
        }
        Ok(())
    }

    pub fn is_mock(&self) -> bool {
        self.endpoint == "mock"
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum FailurePolicy {
    FailFast,
    #[default]
    FusePartial,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FusionMode {
    Remote,
    BestPredicted,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum InfeasiblePolicy {
    #[default]
    Error,
    CheapestModel,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub budget_fraction: f64,
    pub grid_resolution: usize,
    pub dispatch_timeout: Duration,
    pub failure_policy: FailurePolicy,
    pub fusion_mode: FusionMode,
    pub infeasible_policy: InfeasiblePolicy,
    pub token_mode: TokenMode,
    /// Upper bound on concurrent outbound generation calls; 0 means unbounded.
    pub max_parallel: usize,
    pub max_tokens: u32,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            budget_fraction: 0.2,
            grid_resolution: 1000,
            dispatch_timeout: Duration::from_secs(30),
            failure_policy: FailurePolicy::FusePartial,
            fusion_mode: FusionMode::BestPredicted,
            infeasible_policy: InfeasiblePolicy::Error,
            token_mode: TokenMode::CharsRatio,
            max_parallel: 0,
            max_tokens: 256,
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        validate_fraction(self.budget_fraction)?;
        if self.grid_resolution < 1 {
            return Err(Error::InvalidConfig("grid_resolution must be >= 1".into()));
        }
        if self.dispatch_timeout.is_zero() {
            return Err(Error::InvalidConfig("dispatch_timeout must be positive".into()));
        }
        Ok(())
    }
}

/// Checks `0 < fraction <= 1`.
pub fn validate_fraction(fraction: f64) -> Result<()> {
    if fraction.is_finite() && fraction > 0.0 && fraction <= 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("budget fraction must lie in (0, 1], got {fraction}")))
    }
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawDefaults {
    budget_fraction: Option<f64>,
    grid_resolution: Option<usize>,
    dispatch_timeout_ms: Option<u64>,
    failure_policy: Option<FailurePolicy>,
    fusion_mode: Option<FusionMode>,
    infeasible_policy: Option<InfeasiblePolicy>,
    token_mode: Option<TokenMode>,
    max_parallel: Option<usize>,
    max_tokens: Option<u32>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawRegistry {
    fuser_endpoint: Option<String>,
    #[serde(default)]
    defaults: RawDefaults,
    models: Vec<ModelSpec>,
}

/// Immutable, validated selection set.
#[derive(Debug, Clone, PartialEq)]
pub struct Registry {
    models: Vec<ModelSpec>,
    fuser_endpoint: Option<String>,
    defaults: PipelineConfig,
}

impl Registry {
    pub fn new(models: Vec<ModelSpec>, fuser_endpoint: Option<String>, defaults: PipelineConfig) -> Result<Self> {
        if models.is_empty() {
            return Err(Error::InvalidConfig("registry must contain at least one model".into()));
        }
        let mut seen = HashSet::new();
        for spec in &models {
            spec.validate()?;
            if !seen.insert(spec.name.as_str()) {
                return Err(Error::InvalidModel { model: spec.name.clone(), message: "duplicate model name".into() });
            }
        }
        defaults.validate()?;
        Ok(Self { models, fuser_endpoint, defaults })
    }

    pub fn from_toml_str(source: &str) -> Result<Self> {
        let raw: RawRegistry =
            toml::from_str(source).map_err(|e| Error::Parse { context: "registry".into(), message: e.to_string() })?;
        let d = raw.defaults;
        let base = PipelineConfig::default();
        let fusion_mode = d.fusion_mode.unwrap_or(if raw.fuser_endpoint.is_some() {
            FusionMode::Remote
        } else {
            FusionMode::BestPredicted
        });
        let defaults = PipelineConfig {
            budget_fraction: d.budget_fraction.unwrap_or(base.budget_fraction),
            grid_resolution: d.grid_resolution.unwrap_or(base.grid_resolution),
            dispatch_timeout: d.dispatch_timeout_ms.map(Duration::from_millis).unwrap_or(base.dispatch_timeout),
            failure_policy: d.failure_policy.unwrap_or(base.failure_policy),
            fusion_mode,
            infeasible_policy: d.infeasible_policy.unwrap_or(base.infeasible_policy),
            token_mode: d.token_mode.unwrap_or(base.token_mode),
            max_parallel: d.max_parallel.unwrap_or(base.max_parallel),
            max_tokens: d.max_tokens.unwrap_or(base.max_tokens),
        };
        Self::new(raw.models, raw.fuser_endpoint, defaults)
    }

    pub fn models(&self) -> &[ModelSpec] {
        &self.models
    }

    pub fn len(&self) -> usize {
        self.models.len()
    }

    pub fn is_empty(&self) -> bool {
        self.models.is_empty()
    }

    pub fn get(&self, index: usize) -> Option<&ModelSpec> {
        self.models.get(index)
    }

    pub fn fuser_endpoint(&self) -> Option<&str> {
        self.fuser_endpoint.as_deref()
    }

    pub fn defaults(&self) -> &PipelineConfig {
        &self.defaults
    }

    pub fn model_index(&self, name: &str) -> Result<usize> {
        self.models.iter().position(|m| m.name == name).ok_or_else(|| Error::UnknownModel(name.to_string()))
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.models.iter().map(|m| m.name.as_str())
    }

    /// Same models and defaults, different pipeline configuration.
    pub fn with_defaults(&self, defaults: PipelineConfig) -> Result<Self> {
        defaults.validate()?;
        Ok(Self { models: self.models.clone(), fuser_endpoint: self.fuser_endpoint.clone(), defaults })
    }
}

pub fn load_registry(path: impl AsRef<Path>) -> Result<Registry> {
    let path = path.as_ref();
    let source = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Registry::from_toml_str(&source).map_err(|e| match e {
        Error::Parse { message, .. } => Error::Parse { context: path.display().to_string(), message },
        other => other,
    })
}
