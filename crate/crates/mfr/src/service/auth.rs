use std::collections::HashMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Public,
    Kiosk,
    Staff,
    Admin,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Principal {
    pub role: Role,
    /// Operator or kiosk name, recorded on acknowledgements.
    pub name: String,
    pub kiosk_id: Option<String>,
}

impl Principal {
    pub fn anonymous() -> Self {
        Self {
            role: Role::Public,
            name: "public".into(),
            kiosk_id: None,
        }
    }

    pub fn is(&self, roles: &[Role]) -> bool {
        roles.contains(&self.role)
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum AuthError {
    #[error("missing or unknown credentials")]
    Unauthenticated,
    #[error("role {0:?} may not do this")]
    Forbidden(Role),
}

#[derive(Debug, Error)]
pub enum CredentialsError {
    #[error("cannot read credentials: {0}")]
    Io(#[from] std::io::Error),
    #[error("invalid credentials file: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("invalid credentials file: {0}")]
    Invalid(String),
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct TokenEntry {
    token: String,
    role: Role,
    name: Option<String>,
    kiosk_id: Option<String>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct CredentialsFile {
    #[serde(default)]
    tokens: Vec<TokenEntry>,
}

/// Bearer tokens, kept only as SHA-256 digests.
#[derive(Debug, Clone, Default)]
pub struct Credentials {
    by_digest: HashMap<[u8; 32], Principal>,
}

fn digest(token: &str) -> [u8; 32] {
    Sha256::digest(token.as_bytes()).into()
}

impl Credentials {
    pub fn parse(text: &str) -> Result<Self, CredentialsError> {
        let file: CredentialsFile = toml::from_str(text)?;
        let mut by_digest = HashMap::new();
        for t in file.tokens {
            if t.token.len() < 8 {
                return Err(CredentialsError::Invalid(
                    "tokens must be at least 8 characters".into(),
                ));
            }
            if t.role == Role::Kiosk && t.kiosk_id.as_deref().is_none_or(str::is_empty) {
                return Err(CredentialsError::Invalid(
                    "kiosk tokens need a kiosk_id".into(),
                ));
            }
            let name = t
                .name
                .or_else(|| t.kiosk_id.clone())
                .unwrap_or_else(|| format!("{:?}", t.role).to_lowercase());
            let principal = Principal {
                role: t.role,
                name,
                kiosk_id: t.kiosk_id,
            };
            if by_digest.insert(digest(&t.token), principal).is_some() {
                return Err(CredentialsError::Invalid("duplicate token".into()));
            }
        }
        Ok(Self { by_digest })
    }

    pub fn load(path: &Path) -> Result<Self, CredentialsError> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    /// No header means the public role; a header with an unknown token fails.
    pub fn authenticate(&self, authorization: Option<&str>) -> Result<Principal, AuthError> {
        let Some(header) = authorization else {
            return Ok(Principal::anonymous());
        };
        let token = header
            .strip_prefix("Bearer ")
            .map(str::trim)
            .ok_or(AuthError::Unauthenticated)?;
        self.by_digest
            .get(&digest(token))
            .cloned()
            .ok_or(AuthError::Unauthenticated)
    }
}
