//! Service configuration: a flat `key = value` TOML file, then `DIFFX_<KEY>`
//! environment overrides.
//!
//! ```toml
//! listen_addr = "127.0.0.1:8080"
//! edge_backend = "mock"                  # or "http://host:port"
//! cloud_backend = "http://10.0.0.5:7860"
//! edge_weights = "weights/edge.bin"
//! cloud_weights = "weights/cloud.bin"
//! predictor_enabled = true
//! fixed_strength = 0.9
//! uplink_bps = 20000000.0
//! downlink_bps = 20000000.0
//! base_steps_edge = 25
//! base_steps_cloud = 25
//! persistence_path = "diffx-data"
//! seed = 0
//! timing = "measured"                    # or "simulated"
//! backend_timeout_s = 120
//! ```

use std::path::{Path, PathBuf};

use diffx_core::netsim::{NetworkConfig, DEFAULT_BPS};
use diffx_core::{Error, Result, Strength};
use serde::{Deserialize, Serialize};

pub const ENV_PREFIX: &str = "DIFFX_";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TimingMode {
    Measured,
    Simulated,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ServiceConfig {
    pub listen_addr: String,
    /// `"mock"` or the base URL of a model server.
    pub edge_backend: String,
    pub cloud_backend: String,
    pub edge_weights: Option<PathBuf>,
    pub cloud_weights: Option<PathBuf>,
    pub predictor_enabled: bool,
    pub fixed_strength: Strength,
    pub uplink_bps: f64,
    pub downlink_bps: f64,
    pub base_steps_edge: u32,
    pub base_steps_cloud: u32,
    pub persistence_path: PathBuf,
    pub seed: u64,
    pub timing: TimingMode,
    pub backend_timeout_s: f64,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        ServiceConfig {
            listen_addr: "127.0.0.1:8080".into(),
            edge_backend: "mock".into(),
            cloud_backend: "mock".into(),
            edge_weights: None,
            cloud_weights: None,
            predictor_enabled: true,
            fixed_strength: Strength::new(Strength::MAX).expect("grid max"),
            uplink_bps: DEFAULT_BPS,
            downlink_bps: DEFAULT_BPS,
            base_steps_edge: 25,
            base_steps_cloud: 25,
            persistence_path: PathBuf::from("diffx-data"),
            seed: 0,
            timing: TimingMode::Measured,
            backend_timeout_s: 120.0,
        }
    }
}

/// Parses an override value as a TOML scalar, falling back to a bare string.
fn env_value(raw: &str) -> toml::Value {
    toml::from_str::<toml::Table>(&format!("v = {raw}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()))
}

impl ServiceConfig {
    pub fn network(&self) -> NetworkConfig {
        NetworkConfig {
            uplink_bps: self.uplink_bps,
            downlink_bps: self.downlink_bps,
        }
    }

    /// Reads `path` (if any), applies overrides from `env`, and validates.
    pub fn load(
        path: Option<&Path>,
        env: impl IntoIterator<Item = (String, String)>,
    ) -> Result<Self> {
        let mut table = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p)?;
                toml::from_str::<toml::Table>(&text)
                    .map_err(|e| Error::InvalidConfig(format!("{}: {e}", p.display())))?
            }
            None => toml::Table::new(),
        };
        for (key, raw) in env {
            if let Some(name) = key.strip_prefix(ENV_PREFIX) {
                table.insert(name.to_ascii_lowercase(), env_value(&raw));
            }
        }
        let config: ServiceConfig = table
            .try_into()
            .map_err(|e: toml::de::Error| Error::InvalidConfig(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        if self.base_steps_edge == 0 || self.base_steps_cloud == 0 {
            return Err(Error::InvalidConfig("base steps must be at least 1".into()));
        }
        if !(self.backend_timeout_s > 0.0 && self.backend_timeout_s.is_finite()) {
            return Err(Error::InvalidConfig(
                "backend_timeout_s must be positive".into(),
            ));
        }
        if self.predictor_enabled && (self.edge_weights.is_none() || self.cloud_weights.is_none()) {
            return Err(Error::InvalidConfig(
                "predictor_enabled requires edge_weights and cloud_weights".into(),
            ));
        }
        self.network().validate()
    }
}
