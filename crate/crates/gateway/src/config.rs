//! Service configuration loaded from JSON.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use aesp_core::crypto::{derive_identity_root, IdentityRoot, MasterCredential};
use aesp_core::identity::AgentId;
use aesp_core::policy::{CheckId, Policy, PolicyEngineConfig};
use aesp_core::storage::{FileStorage, InMemoryStorage, StorageAdapter};
use aesp_eval::corpus::{reference_policy, CORPUS_EPOCH_MS};
use serde::{Deserialize, Serialize};
use uuid::Uuid;

use crate::pipeline::{Gateway, GatewayError};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ServiceConfig {
    /// Hex of the 32-byte master credential.
    pub master_seed: String,
    pub credential_domain: String,
    pub tz_offset_minutes: i32,
    pub enabled_checks: Vec<CheckId>,
    /// File-backed storage directory; `AESP_STORAGE_DIR` applies when unset.
    pub storage_dir: Option<PathBuf>,
    pub policies: Vec<Policy>,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        Self {
            master_seed: "11".repeat(32),
            credential_domain: "aesp-gateway".into(),
            tz_offset_minutes: 0,
            enabled_checks: CheckId::ALL.to_vec(),
            storage_dir: None,
            policies: Vec::new(),
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("reading {0}: {1}")]
    Io(PathBuf, std::io::Error),
    #[error("parsing config: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("master_seed must be 64 hex characters")]
    Seed,
    #[error("credential: {0}")]
    Credential(String),
    #[error(transparent)]
    Gateway(#[from] GatewayError),
}

impl ServiceConfig {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError::Io(path.into(), e))?;
        Ok(serde_json::from_str(&text)?)
    }

    /// The reference policy installed for `agent-demo` when a config names
    /// no policies.
    pub fn demo() -> Self {
        let mut p = reference_policy(Uuid::from_u128(0xde70), AgentId::from("agent-demo"));
        p.created_at = CORPUS_EPOCH_MS;
        p.expires_at = i64::MAX;
        p.conditions.time_window = None;
        Self {
            policies: vec![p],
            ..Self::default()
        }
    }

    pub fn root(&self) -> Result<IdentityRoot, ConfigError> {
        let bytes: [u8; 32] = hex::decode(&self.master_seed)
            .ok()
            .and_then(|b| b.try_into().ok())
            .ok_or(ConfigError::Seed)?;
        let cred = MasterCredential::new(&bytes, &self.credential_domain)
            .map_err(|e| ConfigError::Credential(e.to_string()))?;
        derive_identity_root(&cred).map_err(|e| ConfigError::Credential(e.to_string()))
    }

    pub fn storage(&self) -> Result<Arc<dyn StorageAdapter>, ConfigError> {
        if let Some(dir) = &self.storage_dir {
            let s = FileStorage::open(dir).map_err(|e| ConfigError::Io(dir.clone(), e))?;
            return Ok(Arc::new(s));
        }
        match FileStorage::from_env() {
            Ok(Some(s)) => Ok(Arc::new(s)),
            Ok(None) => Ok(Arc::new(InMemoryStorage::new())),
            Err(e) => Err(ConfigError::Io("AESP_STORAGE_DIR".into(), e)),
        }
    }

    pub fn engine(&self) -> PolicyEngineConfig {
        PolicyEngineConfig {
            enabled_checks: self.enabled_checks.iter().copied().collect(),
            tz_offset_minutes: self.tz_offset_minutes,
        }
    }

    /// Builds a system-clocked gateway with every configured policy installed.
    pub fn gateway(&self) -> Result<Gateway, ConfigError> {
        let gw = Gateway::builder(self.root()?)
            .storage(self.storage()?)
            .engine(self.engine())
            .build()?;
        for p in &self.policies {
            gw.install_policy(p.clone());
        }
        Ok(gw)
    }
}
