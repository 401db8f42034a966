use std::collections::HashMap;
use std::sync::Mutex;

use chrono::{DateTime, Duration, Utc};
use rand::RngCore;
use serde::{Deserialize, Serialize};
use subtle::ConstantTimeEq;

use super::config::{hash_password, Role, UserEntry};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Session {
    pub token: String,
    pub actor_id: String,
    pub roles: Vec<Role>,
    pub expires_at: DateTime<Utc>,
}

impl Session {
    pub fn has(&self, role: Role) -> bool {
        self.roles.contains(&role)
    }
}

/// Issued bearer tokens, held in memory only.
pub struct Sessions {
    users: Vec<UserEntry>,
    ttl: Duration,
    live: Mutex<HashMap<String, Session>>,
}

impl Sessions {
    pub fn new(users: Vec<UserEntry>, ttl_seconds: u64) -> Self {
        Sessions {
            users,
            ttl: Duration::seconds(ttl_seconds as i64),
            live: Mutex::new(HashMap::new()),
        }
    }

    /// Checks credentials without revealing which half was wrong. Unknown
    /// users still pay for a hash and a comparison.
    pub fn login(&self, username: &str, password: &str) -> Option<Session> {
        let user = self.users.iter().find(|u| u.username == username);
        let (salt, expected) = match user {
            Some(u) => (u.salt.as_str(), u.password_hash.to_ascii_lowercase()),
            None => ("", "0".repeat(64)),
        };
        let actual = hash_password(salt, password);
        let same: bool = actual.as_bytes().ct_eq(expected.as_bytes()).into();
        let user = user.filter(|_| same)?;
        let mut raw = [0u8; 16];
        rand::thread_rng().fill_bytes(&mut raw);
        let session = Session {
            token: hex::encode(raw),
            actor_id: user.username.clone(),
            roles: user.roles.clone(),
            expires_at: Utc::now() + self.ttl,
        };
        let mut live = self.live.lock().expect("session lock poisoned");
        let now = Utc::now();
        live.retain(|_, s| s.expires_at > now);
        live.insert(session.token.clone(), session.clone());
        Some(session)
    }

    pub fn lookup(&self, token: &str) -> Option<Session> {
        let mut live = self.live.lock().expect("session lock poisoned");
        match live.get(token) {
            Some(s) if s.expires_at > Utc::now() => Some(s.clone()),
            Some(_) => {
                live.remove(token);
                None
            }
            None => None,
        }
    }

    pub fn logout(&self, token: &str) {
        self.live.lock().expect("session lock poisoned").remove(token);
    }

    /// Usernames holding `role`, for engine role resolution.
    pub fn holders(&self, role: Role) -> impl Iterator<Item = &str> {
        self.users
            .iter()
            .filter(move |u| u.roles.contains(&role))
            .map(|u| u.username.as_str())
    }
}
