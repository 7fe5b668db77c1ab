//! Service configuration and the flat `key = value` file format.

use std::path::{Path, PathBuf};

use triage_core::corpus::{Label, NUM_CLASSES};

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: expected `key = value`, got {text:?}")]
    Malformed { line: usize, text: String },
    #[error("unknown configuration key {key:?}")]
    UnknownKey { key: String },
    #[error("bad value for {key}: {message}")]
    BadValue { key: String, message: String },
    #[error("queue_capacity must be at least 1")]
    BadQueueCapacity,
    #[error("worker_count must be at least 1")]
    BadWorkerCount,
}

/// Everything the service needs to run. `data_dir` holds the append-only
/// event log (`events.jsonl`) and one sink file per label under `sinks/`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RouterConfig {
    pub queue_capacity: usize,
    pub worker_count: usize,
    pub model_path: PathBuf,
    pub listen_addr: String,
    pub data_dir: PathBuf,
    /// Optional webhook per label, POSTed the sink line before the sink
    /// write.
    pub webhooks: [Option<String>; NUM_CLASSES],
    /// Delay before each worker starts consuming. Zero in production; lets
    /// tests fill the bounded queue deterministically.
    pub worker_startup_delay_ms: u64,
}

impl RouterConfig {
    pub fn new(model_path: impl Into<PathBuf>, data_dir: impl Into<PathBuf>) -> Self {
        RouterConfig {
            queue_capacity: 1024,
            worker_count: 2,
            model_path: model_path.into(),
            listen_addr: "127.0.0.1:7878".to_string(),
            data_dir: data_dir.into(),
            webhooks: [None, None, None],
            worker_startup_delay_ms: 0,
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.queue_capacity < 1 {
            return Err(ConfigError::BadQueueCapacity);
        }
        if self.worker_count < 1 {
            return Err(ConfigError::BadWorkerCount);
        }
        Ok(())
    }

    pub fn events_path(&self) -> PathBuf {
        self.data_dir.join("events.jsonl")
    }

    pub fn sinks_dir(&self) -> PathBuf {
        self.data_dir.join("sinks")
    }

    /// Apply one `key = value` pair from a config file.
    pub fn apply(&mut self, key: &str, value: &str) -> Result<(), ConfigError> {
        let parse_usize = |key: &str, value: &str| {
            value.parse::<usize>().map_err(|e| ConfigError::BadValue {
                key: key.to_string(),
                message: e.to_string(),
            })
        };
        match key {
            "queue_capacity" => self.queue_capacity = parse_usize(key, value)?,
            "worker_count" => self.worker_count = parse_usize(key, value)?,
            "worker_startup_delay_ms" => {
                self.worker_startup_delay_ms =
                    value.parse::<u64>().map_err(|e| ConfigError::BadValue {
                        key: key.to_string(),
                        message: e.to_string(),
                    })?
            }
            "model" => self.model_path = PathBuf::from(value),
            "listen" => self.listen_addr = value.to_string(),
            "data_dir" => self.data_dir = PathBuf::from(value),
            "webhook.change" => self.webhooks[Label::Change.index()] = Some(value.to_string()),
            "webhook.problem" => self.webhooks[Label::Problem.index()] = Some(value.to_string()),
            "webhook.request" => self.webhooks[Label::Request.index()] = Some(value.to_string()),
            other => {
                return Err(ConfigError::UnknownKey {
                    key: other.to_string(),
                })
            }
        }
        Ok(())
    }

    /// Overlay settings from a flat config file: one `key = value` per
    /// line, `#` comments and blank lines ignored.
    pub fn load_overrides(&mut self, path: &Path) -> Result<(), ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        for ((key, value), _line) in parse_kv_lines(&text)? {
            self.apply(&key, &value)?;
        }
        self.validate()
    }
}

/// Parse flat `key = value` lines; returns pairs with their line numbers.
pub fn parse_kv_lines(text: &str) -> Result<Vec<((String, String), usize)>, ConfigError> {
    let mut pairs = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            return Err(ConfigError::Malformed {
                line: i + 1,
                text: raw.to_string(),
            });
        };
        pairs.push(((key.trim().to_string(), value.trim().to_string()), i + 1));
    }
    Ok(pairs)
}
