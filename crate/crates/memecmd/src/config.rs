//! TOML run configuration. Every field is optional; command-line flags
//! override file values, and built-in defaults fill the rest.

use std::path::{Path, PathBuf};

use serde::Deserialize;

use memecmd_core::aligner::{AlignerWeights, ImplicitSign};
use crate::http::HttpConfig;
use crate::pipeline::{AlignerParams, Mode, Strategy};

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {message}")]
    Parse { path: PathBuf, message: String },
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub seed: Option<u64>,
    pub mock: Option<bool>,
    pub mode: Option<Mode>,
    pub turns: Option<u32>,
    pub sessions: Option<u32>,
    pub workers: Option<usize>,
    pub reply_limit: Option<usize>,
    pub scenarios_per_pair: Option<usize>,
    pub library: Option<PathBuf>,
    pub news: Option<PathBuf>,
    pub roles: Option<PathBuf>,
    pub out: Option<PathBuf>,
    #[serde(default)]
    pub aligner: AlignerFileConfig,
    #[serde(default)]
    pub backends: BackendsFileConfig,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AlignerFileConfig {
    pub theta0: Option<f64>,
    pub delta: Option<f64>,
    pub lambda: Option<f64>,
    pub k: Option<usize>,
    pub strategy: Option<Strategy>,
    pub implicit_sign: Option<ImplicitSign>,
    /// `[w_scenario, w_penalty, w_implicit, w_motivation]`
    pub weights: Option<[f64; 4]>,
}

impl AlignerFileConfig {
    /// Folds file values over the defaults; `overrides` (from flags) win.
    pub fn resolve(&self, overrides: &AlignerFileConfig) -> AlignerParams {
        let defaults = AlignerParams::default();
        let weights = overrides
            .weights
            .or(self.weights)
            .map(|[w_scenario, w_penalty, w_implicit, w_motivation]| AlignerWeights {
                w_scenario,
                w_penalty,
                w_implicit,
                w_motivation,
            })
            .unwrap_or(defaults.weights);
        AlignerParams {
            weights,
            theta0: overrides.theta0.or(self.theta0).unwrap_or(defaults.theta0),
            delta: overrides.delta.or(self.delta).unwrap_or(defaults.delta),
            lambda: overrides.lambda.or(self.lambda).unwrap_or(defaults.lambda),
            top_k: overrides.k.or(self.k).unwrap_or(defaults.top_k),
            implicit_sign: overrides
                .implicit_sign
                .or(self.implicit_sign)
                .unwrap_or(defaults.implicit_sign),
            strategy: overrides
                .strategy
                .or(self.strategy)
                .unwrap_or(defaults.strategy),
        }
    }
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BackendsFileConfig {
    pub chat: Option<HttpFileConfig>,
    pub vision: Option<HttpFileConfig>,
    pub embedding: Option<EmbeddingFileConfig>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HttpFileConfig {
    pub endpoint: Option<String>,
    pub model: Option<String>,
    pub temperature: Option<f64>,
    pub max_tokens: Option<u32>,
    pub timeout_secs: Option<u64>,
    pub retries: Option<u32>,
    pub backoff_ms: Option<u64>,
}

impl HttpFileConfig {
    pub fn to_http_config(&self, what: &str) -> Result<HttpConfig, String> {
        let endpoint = self
            .endpoint
            .clone()
            .ok_or_else(|| format!("missing {what} endpoint (set [backends.{what}].endpoint or use --mock)"))?;
        let model = self
            .model
            .clone()
            .ok_or_else(|| format!("missing {what} model (set [backends.{what}].model)"))?;
        let defaults = HttpConfig::default();
        Ok(HttpConfig {
            base_url: endpoint,
            model,
            temperature: self.temperature.unwrap_or(defaults.temperature),
            max_tokens: self.max_tokens.or(defaults.max_tokens),
            timeout_secs: self.timeout_secs.unwrap_or(defaults.timeout_secs),
            retries: self.retries.unwrap_or(defaults.retries),
            backoff_ms: self.backoff_ms.unwrap_or(defaults.backoff_ms),
        })
    }
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EmbeddingFileConfig {
    #[serde(flatten)]
    pub http: HttpFileConfig,
    pub dim: Option<usize>,
}

/// Mock embedding dimension when nothing else is configured.
pub const DEFAULT_MOCK_DIM: usize = 256;

pub fn load_file_config(path: &Path) -> Result<FileConfig, ConfigError> {
    let body = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    toml::from_str(&body).map_err(|e| ConfigError::Parse {
        path: path.to_path_buf(),
        message: e.to_string(),
    })
}
