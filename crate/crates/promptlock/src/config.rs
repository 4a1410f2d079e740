//! Configuration file and issuer-registry file formats.
//!
//! Both files are canonical key-sorted JSON. Secrets are never placed in
//! config or argv; the issuer secret is read from the file named by
//! `PROMPTLOCK_ISSUER_SECRET_FILE` (or `issuer_secret_path`).

use std::collections::HashSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::bridge::{IssuerRegistryEntry, Placement};

pub const ENV_ISSUER_SECRET_FILE: &str = "PROMPTLOCK_ISSUER_SECRET_FILE";
pub const ENV_STORE_DIR: &str = "PROMPTLOCK_STORE_DIR";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum OutputFormat {
    #[default]
    Human,
    Json,
}

/// Operator configuration shared by the CLI and the two services. Every
/// field is optional; subcommands validate what they need.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub bridge_url: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub delay_owner_provider: Option<i64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub delay_user_owner: Option<i64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub delay_user_provider: Option<i64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub escrow_url: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub issuer_registry_path: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub issuer_secret_path: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub listen_addr: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub output_format: Option<OutputFormat>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub placement: Option<Placement>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub provider_endpoint: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub store_dir: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub token_ttl_days: Option<i64>,
}

impl Config {
    pub fn load(path: impl AsRef<Path>) -> std::io::Result<Self> {
        let text = std::fs::read_to_string(path)?;
        serde_json::from_str(&text)
            .map_err(|e| std::io::Error::new(std::io::ErrorKind::InvalidData, e))
    }

    /// Environment variables override file values.
    pub fn apply_env(mut self) -> Self {
        if let Ok(v) = std::env::var(ENV_ISSUER_SECRET_FILE) {
            self.issuer_secret_path = Some(v);
        }
        if let Ok(v) = std::env::var(ENV_STORE_DIR) {
            self.store_dir = Some(v);
        }
        self
    }
}

/// One issuer-registry record: which prompts this bridge can validate and
/// which buyers have been revoked. The secret itself lives in the file
/// named by `issuer_secret_ref` (falling back to the bridge-wide secret).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RegistryFileEntry {
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub issuer_secret_ref: Option<String>,
    pub prompt_id: String,
    #[serde(default)]
    pub revoked_user_ids: Vec<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RegistryFile {
    pub entries: Vec<RegistryFileEntry>,
}

/// Load the issuer registry, resolving each entry's secret from its
/// `issuer_secret_ref` file or the provided default secret.
pub fn load_registry(
    path: impl AsRef<Path>,
    default_secret: &[u8],
) -> std::io::Result<Vec<IssuerRegistryEntry>> {
    let text = std::fs::read_to_string(path)?;
    let file: RegistryFile = serde_json::from_str(&text)
        .map_err(|e| std::io::Error::new(std::io::ErrorKind::InvalidData, e))?;
    let mut entries = Vec::with_capacity(file.entries.len());
    for e in file.entries {
        let secret = match &e.issuer_secret_ref {
            Some(p) => std::fs::read(p)?,
            None => default_secret.to_vec(),
        };
        entries.push(IssuerRegistryEntry {
            prompt_id: e.prompt_id,
            issuer_secret: secret,
            revoked_user_ids: e.revoked_user_ids.into_iter().collect::<HashSet<_>>(),
        });
    }
    Ok(entries)
}
