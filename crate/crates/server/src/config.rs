//! `adamant.toml` plus environment overrides.

use std::net::SocketAddr;
use std::path::{Path, PathBuf};

use serde::Deserialize;

pub const DEFAULT_LISTEN: &str = "127.0.0.1:7171";
pub const ENV_LISTEN: &str = "ADAMANT_LISTEN";
pub const ENV_STORE: &str = "ADAMANT_STORE";

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Read { path: String, source: std::io::Error },
    #[error("bad config {path}: {message}")]
    Parse { path: String, message: String },
    #[error("bad listen address `{0}`")]
    BadListen(String),
    #[error("no store_dir configured (set it in adamant.toml or {ENV_STORE})")]
    MissingStore,
    #[error("store_dir {0} does not exist")]
    StoreDirMissing(String),
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileConfig {
    listen_addr: Option<String>,
    store_dir: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Config {
    pub listen_addr: SocketAddr,
    pub store_dir: PathBuf,
}

impl Config {
    /// Reads `path` (if given), then applies `ADAMANT_LISTEN` / `ADAMANT_STORE`.
    /// A relative `store_dir` is taken relative to the config file.
    pub fn load(path: Option<&Path>) -> Result<Config, ConfigError> {
        let env = |k: &str| std::env::var(k).ok().filter(|v| !v.is_empty());
        Self::load_with(path, env(ENV_LISTEN), env(ENV_STORE))
    }

    pub fn load_with(
        path: Option<&Path>,
        env_listen: Option<String>,
        env_store: Option<String>,
    ) -> Result<Config, ConfigError> {
        let mut file = FileConfig::default();
        if let Some(p) = path {
            let text = std::fs::read_to_string(p).map_err(|source| ConfigError::Read {
                path: p.display().to_string(),
                source,
            })?;
            file = toml::from_str(&text).map_err(|e| ConfigError::Parse {
                path: p.display().to_string(),
                message: e.to_string(),
            })?;
            if let Some(dir) = &file.store_dir {
                if dir.is_relative() {
                    let base = p.parent().unwrap_or(Path::new("."));
                    file.store_dir = Some(base.join(dir));
                }
            }
        }
        let listen = env_listen
            .or(file.listen_addr)
            .unwrap_or_else(|| DEFAULT_LISTEN.to_string());
        let listen_addr = listen.parse().map_err(|_| ConfigError::BadListen(listen))?;
        let store_dir = env_store
            .map(PathBuf::from)
            .or(file.store_dir)
            .ok_or(ConfigError::MissingStore)?;
        Ok(Config { listen_addr, store_dir })
    }

    /// Fails unless the store directory already exists.
    pub fn require_store_dir(&self) -> Result<(), ConfigError> {
        if self.store_dir.is_dir() {
            Ok(())
        } else {
            Err(ConfigError::StoreDirMissing(self.store_dir.display().to_string()))
        }
    }
}
