use std::collections::HashMap;
use std::time::{Duration, Instant};

use guestnet::domain::{GuesthouseId, UserId};
use parking_lot::Mutex;
use rand::RngCore;
use serde::{Deserialize, Serialize};

/// Who a session acts for.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Principal {
    User { user_id: UserId },
    Admin { guesthouse_id: GuesthouseId },
}

#[derive(Debug, Clone)]
struct Session {
    principal: Principal,
    expires: Instant,
}

/// Opaque bearer tokens with a fixed lifetime.
#[derive(Debug)]
pub struct Sessions {
    ttl: Duration,
    live: Mutex<HashMap<String, Session>>,
}

impl Sessions {
    pub fn new(ttl: Duration) -> Self {
        Self {
            ttl,
            live: Mutex::default(),
        }
    }

    pub fn ttl(&self) -> Duration {
        self.ttl
    }

    pub fn issue(&self, principal: Principal) -> String {
        let mut bytes = [0u8; 32];
        rand::thread_rng().fill_bytes(&mut bytes);
        let token = hex::encode(bytes);
        let now = Instant::now();
        let mut live = self.live.lock();
        live.retain(|_, s| s.expires > now);
        live.insert(
            token.clone(),
            Session {
                principal,
                expires: now + self.ttl,
            },
        );
        token
    }

    /// The principal behind a token, if the token exists and has not expired.
    pub fn resolve(&self, token: &str) -> Option<Principal> {
        let mut live = self.live.lock();
        let session = live.get(token)?;
        if session.expires <= Instant::now() {
            live.remove(token);
            return None;
        }
        Some(session.principal.clone())
    }

    pub fn revoke(&self, token: &str) {
        self.live.lock().remove(token);
    }
}
