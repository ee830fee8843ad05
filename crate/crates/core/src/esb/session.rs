use std::collections::HashMap;
use std::sync::RwLock;
use std::time::{SystemTime, UNIX_EPOCH};

use rand::RngCore;
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::fault::{Fault, FaultCode};

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Session {
    pub session_id: String,
    pub client: String,
    /// Milliseconds since the Unix epoch.
    pub created_at: u64,
}

pub(crate) fn now_ms() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_millis() as u64)
        .unwrap_or_default()
}

/// Compares two secrets through their digests so the comparison time does
/// not depend on the position of the first differing byte.
pub(crate) fn secrets_match(given: &str, expected: &str) -> bool {
    let a = Sha256::digest(given.as_bytes());
    let b = Sha256::digest(expected.as_bytes());
    a.iter().zip(b.iter()).fold(0u8, |acc, (x, y)| acc | (x ^ y)) == 0
}

#[derive(Debug)]
pub struct Sessions {
    secret: String,
    live: RwLock<HashMap<String, Session>>,
}

impl Sessions {
    pub fn new(secret: impl Into<String>) -> Self {
        Sessions {
            secret: secret.into(),
            live: RwLock::new(HashMap::new()),
        }
    }

    /// Issues a fresh 128-bit session for `client` if `credential` matches.
    pub fn bind(&self, client: &str, credential: &str) -> Result<Session, Fault> {
        if !secrets_match(credential, &self.secret) {
            return Err(Fault::new(FaultCode::AuthFailed, format!("bad credential for `{client}`")));
        }
        let mut raw = [0u8; 16];
        rand::rng().fill_bytes(&mut raw);
        let session = Session {
            session_id: hex::encode(raw),
            client: client.to_owned(),
            created_at: now_ms(),
        };
        self.live
            .write()
            .expect("session lock")
            .insert(session.session_id.clone(), session.clone());
        Ok(session)
    }

    pub fn check(&self, session_id: Option<&str>) -> Result<Session, Fault> {
        let id = session_id.ok_or_else(|| Fault::new(FaultCode::AuthFailed, "no session; bind first"))?;
        self.live
            .read()
            .expect("session lock")
            .get(id)
            .cloned()
            .ok_or_else(|| Fault::new(FaultCode::AuthFailed, "unknown session"))
    }

    pub fn len(&self) -> usize {
        self.live.read().expect("session lock").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}
