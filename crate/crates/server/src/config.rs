//! Server configuration, read from `INKER_*` environment variables.

use std::path::PathBuf;
use std::time::Duration;

use inker_core::gateway::{ModelConfig, ProviderKind};
use inker_core::pipeline::PipelineSettings;
use thiserror::Error;

pub const DEFAULT_PORT: u16 = 8080;
pub const DEFAULT_MAX_ESSAY_CHARS: usize = 20_000;
pub const DEFAULT_WORKERS: usize = 2;

#[derive(Debug, Clone, PartialEq)]
pub struct ServerConfig {
    pub port: u16,
    /// Record directory; `None` keeps everything in memory.
    pub store_dir: Option<PathBuf>,
    pub max_essay_chars: usize,
    /// Analysis jobs that may run at once.
    pub workers: usize,
    /// When set, every request except `/health` needs a matching `x-inker-secret` header.
    pub shared_secret: Option<String>,
    pub model: ModelConfig,
    pub mock_dir: Option<PathBuf>,
    pub pipeline: PipelineSettings,
    pub shutdown_grace: Duration,
}

impl Default for ServerConfig {
    fn default() -> Self {
        Self {
            port: DEFAULT_PORT,
            store_dir: None,
            max_essay_chars: DEFAULT_MAX_ESSAY_CHARS,
            workers: DEFAULT_WORKERS,
            shared_secret: None,
            model: ModelConfig::default(),
            mock_dir: None,
            pipeline: PipelineSettings::default(),
            shutdown_grace: Duration::from_secs(30),
        }
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
#[error("{var}: {message}")]
pub struct EnvError {
    pub var: &'static str,
    pub message: String,
}

fn parsed<T: std::str::FromStr>(
    lookup: &dyn Fn(&str) -> Option<String>,
    var: &'static str,
) -> Result<Option<T>, EnvError>
where
    T::Err: std::fmt::Display,
{
    match lookup(var).filter(|v| !v.trim().is_empty()) {
        None => Ok(None),
        Some(raw) => raw.trim().parse().map(Some).map_err(|e: T::Err| EnvError {
            var,
            message: format!("cannot parse {raw:?}: {e}"),
        }),
    }
}

impl ServerConfig {
    pub fn from_env() -> Result<Self, EnvError> {
        Self::default().overlay_env()
    }

    /// Replaces settings with any `INKER_*` variables that are set.
    pub fn overlay_env(self) -> Result<Self, EnvError> {
        self.overlay(&|var| std::env::var(var).ok())
    }

    pub fn from_lookup(lookup: &dyn Fn(&str) -> Option<String>) -> Result<Self, EnvError> {
        Self::default().overlay(lookup)
    }

    /// Replaces settings with values found through `lookup`.
    ///
    /// | variable | meaning |
    /// |---|---|
    /// | `INKER_PORT` | listen port |
    /// | `INKER_STORE_DIR` | record directory (memory if unset) |
    /// | `INKER_MAX_ESSAY_CHARS` | essay size limit in characters |
    /// | `INKER_WORKERS` | concurrent analysis jobs |
    /// | `INKER_SHARED_SECRET` | required `x-inker-secret` value |
    /// | `INKER_PROVIDER` | `anthropic`, `openai` or `mock` |
    /// | `INKER_MODEL` | model name |
    /// | `INKER_MOCK_DIR` | mock fixtures (implies the mock provider) |
    /// | `INKER_ANCHOR_THRESHOLD` | fuzzy anchoring threshold |
    /// | `INKER_CONCURRENCY` | validity calls in flight per analysis |
    /// | `INKER_REQUESTS_PER_MINUTE` | provider rate limit |
    pub fn overlay(self, lookup: &dyn Fn(&str) -> Option<String>) -> Result<Self, EnvError> {
        let mut config = self;
        if let Some(port) = parsed(lookup, "INKER_PORT")? {
            config.port = port;
        }
        if let Some(dir) = parsed(lookup, "INKER_STORE_DIR")? {
            config.store_dir = Some(dir);
        }
        if let Some(n) = parsed(lookup, "INKER_MAX_ESSAY_CHARS")? {
            config.max_essay_chars = n;
        }
        if let Some(n) = parsed::<usize>(lookup, "INKER_WORKERS")? {
            if n == 0 {
                return Err(EnvError {
                    var: "INKER_WORKERS",
                    message: "must be at least 1".into(),
                });
            }
            config.workers = n;
        }
        if let Some(secret) = parsed(lookup, "INKER_SHARED_SECRET")? {
            config.shared_secret = Some(secret);
        }
        let mock_dir = parsed::<PathBuf>(lookup, "INKER_MOCK_DIR")?;
        let provider = parsed::<ProviderKind>(lookup, "INKER_PROVIDER")?;
        if let Some(dir) = mock_dir {
            config.mock_dir = Some(dir);
            if provider.is_none() {
                config.model = ModelConfig::mock();
            }
        }
        match provider {
            Some(ProviderKind::Mock) => config.model = ModelConfig::mock(),
            Some(p) => config.model.provider = p,
            None => {}
        }
        if let Some(name) = parsed(lookup, "INKER_MODEL")? {
            config.model.model_name = name;
        }
        if let Some(rpm) = parsed(lookup, "INKER_REQUESTS_PER_MINUTE")? {
            config.model.requests_per_minute = Some(rpm);
        }
        if let Some(t) = parsed::<f64>(lookup, "INKER_ANCHOR_THRESHOLD")? {
            if !(t > 0.0 && t <= 1.0) {
                return Err(EnvError {
                    var: "INKER_ANCHOR_THRESHOLD",
                    message: "must be in (0, 1]".into(),
                });
            }
            config.pipeline.anchor_threshold = t;
        }
        if let Some(n) = parsed::<usize>(lookup, "INKER_CONCURRENCY")? {
            config.pipeline.concurrency = n.max(1);
        }
        Ok(config)
    }

    /// Key for idempotent analysis jobs: model configuration plus pipeline settings.
    pub fn fingerprint(&self) -> String {
        format!(
            "{}-{}-{}",
            self.model.fingerprint(),
            self.pipeline.anchor_threshold,
            self.pipeline.concurrency
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashMap;

    fn from(pairs: &[(&str, &str)]) -> Result<ServerConfig, EnvError> {
        let map: HashMap<String, String> = pairs.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect();
        ServerConfig::from_lookup(&move |k| map.get(k).cloned())
    }

    #[test]
    fn defaults_and_overrides() {
        assert_eq!(from(&[]).unwrap(), ServerConfig::default());
        let c = from(&[
            ("INKER_PORT", "9001"),
            ("INKER_MOCK_DIR", "/tmp/m"),
            ("INKER_ANCHOR_THRESHOLD", "0.9"),
            ("INKER_SHARED_SECRET", "s3"),
        ])
        .unwrap();
        assert_eq!(c.port, 9001);
        assert_eq!(c.model.provider, ProviderKind::Mock);
        assert_eq!(c.pipeline.anchor_threshold, 0.9);
        assert_eq!(c.shared_secret.as_deref(), Some("s3"));
    }

    #[test]
    fn bad_values_name_the_variable() {
        assert_eq!(from(&[("INKER_PORT", "eighty")]).unwrap_err().var, "INKER_PORT");
        assert_eq!(from(&[("INKER_WORKERS", "0")]).unwrap_err().var, "INKER_WORKERS");
        assert_eq!(from(&[("INKER_ANCHOR_THRESHOLD", "1.5")]).unwrap_err().var, "INKER_ANCHOR_THRESHOLD");
        assert_eq!(from(&[("INKER_PROVIDER", "acme")]).unwrap_err().var, "INKER_PROVIDER");
    }
}
