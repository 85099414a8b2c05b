//! Bearer sessions opened by password login.

use std::collections::HashMap;

use chrono::{DateTime, Duration, Utc};
use rand::RngCore;

use crate::aadhaar::AadhaarId;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Session {
    pub owner: AadhaarId,
    pub expires_at: DateTime<Utc>,
}

pub struct Sessions {
    ttl: Duration,
    live: HashMap<String, Session>,
}

impl Sessions {
    pub fn new(ttl_secs: u64) -> Self {
        Sessions {
            ttl: Duration::seconds(ttl_secs.min(i64::MAX as u64 / 1000) as i64),
            live: HashMap::new(),
        }
    }

    /// Issues a fresh 256-bit token.
    pub fn open(&mut self, owner: AadhaarId, now: DateTime<Utc>) -> (String, Session) {
        let mut bytes = [0u8; 32];
        rand::rng().fill_bytes(&mut bytes);
        let token = hex::encode(bytes);
        let session = Session {
            owner,
            expires_at: now + self.ttl,
        };
        self.live.insert(token.clone(), session.clone());
        self.live.retain(|_, s| s.expires_at > now);
        (token, session)
    }

    /// Owner of a live session. Expired tokens are forgotten.
    pub fn check(&mut self, token: &str, now: DateTime<Utc>) -> Option<AadhaarId> {
        match self.live.get(token) {
            Some(s) if s.expires_at > now => Some(s.owner),
            Some(_) => {
                self.live.remove(token);
                None
            }
            None => None,
        }
    }

    pub fn close(&mut self, token: &str) -> bool {
        self.live.remove(token).is_some()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::TimeZone;

    #[test]
    fn expiry() {
        let t0 = Utc.with_ymd_and_hms(2026, 3, 1, 6, 0, 0).unwrap();
        let owner: AadhaarId = "234567890124".parse().unwrap();
        let mut s = Sessions::new(60);
        let (token, _) = s.open(owner, t0);
        assert_eq!(token.len(), 64);
        assert_eq!(s.check(&token, t0 + Duration::seconds(59)), Some(owner));
        assert_eq!(s.check(&token, t0 + Duration::seconds(60)), None);
        assert_eq!(s.check(&token, t0), None);
    }

    #[test]
    fn logout_and_unknown_tokens() {
        let t0 = Utc.with_ymd_and_hms(2026, 3, 1, 6, 0, 0).unwrap();
        let owner: AadhaarId = "234567890124".parse().unwrap();
        let mut s = Sessions::new(60);
        let (a, _) = s.open(owner, t0);
        let (b, _) = s.open(owner, t0);
        assert_ne!(a, b);
        assert!(s.close(&a));
        assert_eq!(s.check(&a, t0), None);
        assert_eq!(s.check(&b, t0), Some(owner));
        assert_eq!(s.check("nope", t0), None);
    }
}
