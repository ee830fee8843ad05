use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::dsn::LinkParams;

/// Bus configuration, loadable from a TOML file. Every key is optional.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EsbConfig {
    /// Rover-facing `POST /esb` listener.
    pub rover_listen: SocketAddr,
    /// Management API listener.
    pub ops_listen: SocketAddr,
    /// When set, a link proxy in front of the rover listener.
    pub dsn_listen: Option<SocketAddr>,
    /// Shared secret a rover presents when binding.
    pub rover_secret: String,
    /// Bearer credential for mutating management calls and service registration.
    pub management_secret: String,
    /// Per-exchange adapter timeout.
    pub timeout_ms: u64,
    pub image_store_dir: PathBuf,
    pub audit_capacity: usize,
    /// Optional JSON-lines copy of every audit record.
    pub audit_file: Option<PathBuf>,
    /// Registry snapshot, restored on start and rewritten after each change.
    pub registry_file: Option<PathBuf>,
    /// Consecutive SERVICE_DOWN results that mark a service FAILED.
    pub failure_threshold: u32,
    /// Static files served under `/` on the management port.
    pub console_dir: Option<PathBuf>,
    pub dsn: LinkParams,
}

impl Default for EsbConfig {
    fn default() -> Self {
        EsbConfig {
            rover_listen: SocketAddr::from(([127, 0, 0, 1], 7000)),
            ops_listen: SocketAddr::from(([127, 0, 0, 1], 7001)),
            dsn_listen: None,
            rover_secret: "rover-secret".into(),
            management_secret: "ops-secret".into(),
            timeout_ms: 5_000,
            image_store_dir: PathBuf::from("esb-images"),
            audit_capacity: 10_000,
            audit_file: None,
            registry_file: None,
            failure_threshold: 3,
            console_dir: None,
            dsn: LinkParams::default(),
        }
    }
}

impl EsbConfig {
    /// Loopback config on ephemeral ports, for tests and embedding.
    pub fn ephemeral(image_store_dir: impl Into<PathBuf>) -> Self {
        let any = SocketAddr::from(([127, 0, 0, 1], 0));
        EsbConfig {
            rover_listen: any,
            ops_listen: any,
            image_store_dir: image_store_dir.into(),
            ..EsbConfig::default()
        }
    }

    pub fn from_toml(text: &str) -> Result<Self, String> {
        let cfg: EsbConfig = toml::from_str(text).map_err(|e| e.to_string())?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, String> {
        let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
        Self::from_toml(&text).map_err(|e| format!("{}: {e}", path.display()))
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.rover_secret.is_empty() || self.management_secret.is_empty() {
            return Err("secrets must not be empty".into());
        }
        if self.timeout_ms == 0 {
            return Err("timeout_ms must be > 0".into());
        }
        if self.audit_capacity == 0 {
            return Err("audit_capacity must be > 0".into());
        }
        if self.failure_threshold == 0 {
            return Err("failure_threshold must be > 0".into());
        }
        self.dsn.validate()
    }

    pub fn timeout(&self) -> Duration {
        Duration::from_millis(self.timeout_ms)
    }
}
