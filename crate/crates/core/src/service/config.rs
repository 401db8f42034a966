use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::ServiceError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Author,
    Qa,
    Admin,
}

impl Role {
    pub const ALL: [Role; 3] = [Role::Author, Role::Qa, Role::Admin];

    pub fn as_str(self) -> &'static str {
        match self {
            Role::Author => "author",
            Role::Qa => "qa",
            Role::Admin => "admin",
        }
    }
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct UserEntry {
    pub username: String,
    pub salt: String,
    /// Lowercase hex of SHA-256 over salt followed by password.
    pub password_hash: String,
    pub roles: Vec<Role>,
}

impl UserEntry {
    pub fn new(username: &str, salt: &str, password: &str, roles: &[Role]) -> Self {
        UserEntry {
            username: username.to_owned(),
            salt: salt.to_owned(),
            password_hash: hash_password(salt, password),
            roles: roles.to_vec(),
        }
    }
}

pub fn hash_password(salt: &str, password: &str) -> String {
    let mut h = Sha256::new();
    h.update(salt.as_bytes());
    h.update(password.as_bytes());
    hex::encode(h.finalize())
}

fn default_port() -> u16 {
    8080
}
fn default_bind() -> String {
    "127.0.0.1".into()
}
fn default_staging_ttl() -> u64 {
    86_400
}
fn default_upload_limit() -> u64 {
    50 * 1024 * 1024
}
fn default_session_ttl() -> u64 {
    8 * 3600
}
fn default_true() -> bool {
    true
}

/// Server configuration, read from one TOML file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct Config {
    pub pid_namespace: String,
    #[serde(default = "default_port")]
    pub port: u16,
    #[serde(default = "default_bind")]
    pub bind: String,
    pub data_dir: PathBuf,
    #[serde(default = "default_staging_ttl", alias = "stagingTTL")]
    pub staging_ttl_seconds: u64,
    /// Largest accepted staging upload, in bytes.
    #[serde(default = "default_upload_limit")]
    pub upload_limit: u64,
    #[serde(default = "default_session_ttl")]
    pub session_ttl_seconds: u64,
    /// Static web UI bundle served under `/ui/`.
    #[serde(default)]
    pub ui_dir: Option<PathBuf>,
    /// Externally visible base URL; derived from the bound address if unset.
    #[serde(default)]
    pub base_url: Option<String>,
    #[serde(default = "default_true")]
    pub fsync: bool,
    #[serde(default)]
    pub users: Vec<UserEntry>,
}

impl Config {
    pub fn new(pid_namespace: &str, data_dir: &Path) -> Self {
        Config {
            pid_namespace: pid_namespace.to_owned(),
            port: default_port(),
            bind: default_bind(),
            data_dir: data_dir.to_owned(),
            staging_ttl_seconds: default_staging_ttl(),
            upload_limit: default_upload_limit(),
            session_ttl_seconds: default_session_ttl(),
            ui_dir: None,
            base_url: None,
            fsync: true,
            users: Vec::new(),
        }
    }

    pub fn from_toml(text: &str) -> Result<Self, ServiceError> {
        let config: Config = toml::from_str(text).map_err(|e| ServiceError::Config(e.to_string()))?;
        config.check()?;
        Ok(config)
    }

    /// Loads a config file; relative directories are taken relative to it.
    pub fn load(path: &Path) -> Result<Self, ServiceError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ServiceError::Config(format!("{}: {e}", path.display())))?;
        let mut config = Config::from_toml(&text)?;
        let base = path.parent().unwrap_or(Path::new("."));
        if config.data_dir.is_relative() {
            config.data_dir = base.join(&config.data_dir);
        }
        if let Some(ui) = config.ui_dir.as_mut().filter(|p| p.is_relative()) {
            *ui = base.join(&*ui);
        }
        Ok(config)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config is always serializable")
    }

    pub fn check(&self) -> Result<(), ServiceError> {
        if !crate::repository::valid_namespace(&self.pid_namespace) {
            return Err(ServiceError::Config(format!(
                "pidNamespace '{}' must match [a-z][a-z0-9]*",
                self.pid_namespace
            )));
        }
        if self.upload_limit == 0 || self.session_ttl_seconds == 0 {
            return Err(ServiceError::Config("uploadLimit and sessionTtlSeconds must be positive".into()));
        }
        let mut names: Vec<&str> = self.users.iter().map(|u| u.username.as_str()).collect();
        names.sort_unstable();
        if let Some(w) = names.windows(2).find(|w| w[0] == w[1]) {
            return Err(ServiceError::Config(format!("user '{}' is listed twice", w[0])));
        }
        Ok(())
    }
}
