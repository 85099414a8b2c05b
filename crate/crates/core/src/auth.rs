//! Credentials and per-transfer authorization.
//!
//! Biometrics are 512-bit templates compared by Hamming distance. Passwords
//! and card PINs are kept only as salted SHA-256 digests.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use chrono::{DateTime, NaiveDate, Utc};
use rand::RngCore;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::aadhaar::AadhaarId;
use crate::directory::{normalize_alias, AliasKind, Directory, DirectoryError};
use crate::ledger::{Ledger, WalletStatus};
use crate::money::Money;

pub const TEMPLATE_BYTES: usize = 64;
pub const TEMPLATE_BITS: u32 = (TEMPLATE_BYTES * 8) as u32;

/// A 512-bit biometric template.
#[derive(Clone, Copy, PartialEq, Eq, Hash)]
pub struct Template([u8; TEMPLATE_BYTES]);

impl Template {
    pub fn from_bytes(bytes: &[u8]) -> Result<Self, AuthError> {
        let arr: [u8; TEMPLATE_BYTES] = bytes.try_into().map_err(|_| AuthError::MalformedTemplate {
            bits: bytes.len() * 8,
        })?;
        Ok(Template(arr))
    }

    /// Parses hex text; every hex digit carries four bits, so a 125-digit
    /// string is reported as a 500-bit template.
    pub fn from_hex(text: &str) -> Result<Self, AuthError> {
        let text = text.trim();
        if text.len() != TEMPLATE_BYTES * 2 {
            return Err(AuthError::MalformedTemplate { bits: text.len() * 4 });
        }
        let bytes = hex::decode(text).map_err(|_| AuthError::MalformedTemplate { bits: 0 })?;
        Template::from_bytes(&bytes)
    }

    pub fn as_bytes(&self) -> &[u8; TEMPLATE_BYTES] {
        &self.0
    }

    pub fn to_hex(&self) -> String {
        hex::encode(self.0)
    }

    pub fn hamming(&self, other: &Template) -> u32 {
        self.0
            .chunks_exact(8)
            .zip(other.0.chunks_exact(8))
            .map(|(a, b)| {
                let a = u64::from_le_bytes(a.try_into().expect("8 bytes"));
                let b = u64::from_le_bytes(b.try_into().expect("8 bytes"));
                (a ^ b).count_ones()
            })
            .sum()
    }

    /// Copy with the given bit positions (0..512) inverted.
    pub fn with_flipped_bits(&self, positions: impl IntoIterator<Item = usize>) -> Template {
        let mut out = self.0;
        for pos in positions {
            out[pos / 8] ^= 1 << (pos % 8);
        }
        Template(out)
    }
}

impl fmt::Debug for Template {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Template({}..)", &self.to_hex()[..8])
    }
}

impl Serialize for Template {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.to_hex())
    }
}

impl<'de> Deserialize<'de> for Template {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        Template::from_hex(&s).map_err(serde::de::Error::custom)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum FactorKind {
    Password,
    Fingerprint,
    Voice,
    Card,
    RegisteredPhone,
    RegisteredEmail,
}

/// Salted SHA-256 of a secret: `sha256(salt || secret)`.
#[derive(Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SaltedHash {
    #[serde(with = "hex_bytes")]
    salt: Vec<u8>,
    #[serde(with = "hex_bytes")]
    digest: Vec<u8>,
}

impl SaltedHash {
    pub const SALT_BYTES: usize = 16;

    pub fn new(secret: &str) -> Self {
        let mut salt = vec![0u8; Self::SALT_BYTES];
        rand::rng().fill_bytes(&mut salt);
        Self::with_salt(secret, salt)
    }

    pub fn with_salt(secret: &str, salt: Vec<u8>) -> Self {
        let digest = Self::compute(&salt, secret);
        SaltedHash { salt, digest }
    }

    fn compute(salt: &[u8], secret: &str) -> Vec<u8> {
        let mut h = Sha256::new();
        h.update(salt);
        h.update(secret.as_bytes());
        h.finalize().to_vec()
    }

    pub fn verify(&self, secret: &str) -> bool {
        let candidate = Self::compute(&self.salt, secret);
        // Fold over every byte so timing does not depend on the mismatch position.
        candidate.len() == self.digest.len()
            && candidate
                .iter()
                .zip(&self.digest)
                .fold(0u8, |acc, (a, b)| acc | (a ^ b))
                == 0
    }
}

impl fmt::Debug for SaltedHash {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("SaltedHash(..)")
    }
}

mod hex_bytes {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(bytes: &[u8], s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&hex::encode(bytes))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<u8>, D::Error> {
        let text = String::deserialize(d)?;
        hex::decode(text).map_err(serde::de::Error::custom)
    }
}

/// What is stored for an enrolled credential.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "factor", rename_all = "SCREAMING_SNAKE_CASE")]
pub enum CredentialSecret {
    Password { hash: SaltedHash },
    Fingerprint { template: Template },
    Voice { template: Template },
    Card { number: String, pin: SaltedHash },
    RegisteredPhone { value: String },
    RegisteredEmail { value: String },
}

impl CredentialSecret {
    pub fn factor(&self) -> FactorKind {
        match self {
            CredentialSecret::Password { .. } => FactorKind::Password,
            CredentialSecret::Fingerprint { .. } => FactorKind::Fingerprint,
            CredentialSecret::Voice { .. } => FactorKind::Voice,
            CredentialSecret::Card { .. } => FactorKind::Card,
            CredentialSecret::RegisteredPhone { .. } => FactorKind::RegisteredPhone,
            CredentialSecret::RegisteredEmail { .. } => FactorKind::RegisteredEmail,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CredentialRecord {
    pub id: String,
    pub owner: AadhaarId,
    pub secret: CredentialSecret,
    pub enrolled_at: DateTime<Utc>,
}

/// Clear-text enrollment request; turned into a [`CredentialSecret`] by
/// [`Enrollment::into_secret`], which hashes passwords and PINs.
#[derive(Clone, Debug, PartialEq, Eq, Deserialize)]
#[serde(tag = "factor", rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Enrollment {
    Password { password: String },
    Fingerprint { template: String },
    Voice { template: String },
    Card { number: String, pin: String },
    RegisteredPhone { value: String },
    RegisteredEmail { value: String },
}

impl Enrollment {
    pub fn into_secret(self) -> Result<CredentialSecret, AuthError> {
        Ok(match self {
            Enrollment::Password { password } => {
                if password.is_empty() {
                    return Err(AuthError::EmptyPassword);
                }
                CredentialSecret::Password {
                    hash: SaltedHash::new(&password),
                }
            }
            Enrollment::Fingerprint { template } => CredentialSecret::Fingerprint {
                template: Template::from_hex(&template)?,
            },
            Enrollment::Voice { template } => CredentialSecret::Voice {
                template: Template::from_hex(&template)?,
            },
            Enrollment::Card { number, pin } => {
                let number = normalize_alias(AliasKind::Card, &number)?;
                if pin.len() != 4 || !pin.bytes().all(|b| b.is_ascii_digit()) {
                    return Err(AuthError::MalformedPin);
                }
                CredentialSecret::Card {
                    number,
                    pin: SaltedHash::new(&pin),
                }
            }
            Enrollment::RegisteredPhone { value } => CredentialSecret::RegisteredPhone {
                value: normalize_alias(AliasKind::Phone, &value)?,
            },
            Enrollment::RegisteredEmail { value } => CredentialSecret::RegisteredEmail {
                value: normalize_alias(AliasKind::Email, &value)?,
            },
        })
    }
}

/// One proof presented at transfer time.
#[derive(Clone, PartialEq, Eq)]
pub enum AuthProof {
    Password(String),
    FingerprintSample(Template),
    VoiceSample { template: Template, transcript: String },
    CardSwipe { number: String, pin: String },
    OriginPhone(String),
    OriginEmail(String),
    /// A bearer session opened by a successful password login for `owner`.
    /// Only the gateway constructs this after checking the token.
    PasswordSession { owner: AadhaarId },
}

impl AuthProof {
    /// Factor this proof would satisfy if it verifies.
    pub fn factor(&self) -> FactorKind {
        match self {
            AuthProof::Password(_) | AuthProof::PasswordSession { .. } => FactorKind::Password,
            AuthProof::FingerprintSample(_) => FactorKind::Fingerprint,
            AuthProof::VoiceSample { .. } => FactorKind::Voice,
            AuthProof::CardSwipe { .. } => FactorKind::Card,
            AuthProof::OriginPhone(_) => FactorKind::RegisteredPhone,
            AuthProof::OriginEmail(_) => FactorKind::RegisteredEmail,
        }
    }
}

impl fmt::Debug for AuthProof {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AuthProof::Password(_) => f.write_str("Password(..)"),
            AuthProof::FingerprintSample(t) => write!(f, "FingerprintSample({t:?})"),
            AuthProof::VoiceSample { template, transcript } => {
                write!(f, "VoiceSample({template:?}, {transcript:?})")
            }
            AuthProof::CardSwipe { .. } => f.write_str("CardSwipe(..)"),
            AuthProof::OriginPhone(p) => write!(f, "OriginPhone({p})"),
            AuthProof::OriginEmail(e) => write!(f, "OriginEmail({e})"),
            AuthProof::PasswordSession { owner } => write!(f, "PasswordSession({owner})"),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct AuthEvidence(pub Vec<AuthProof>);

impl AuthEvidence {
    pub fn new(proofs: Vec<AuthProof>) -> Self {
        AuthEvidence(proofs)
    }

    pub fn single(proof: AuthProof) -> Self {
        AuthEvidence(vec![proof])
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn push(&mut self, proof: AuthProof) {
        self.0.push(proof);
    }

    pub fn iter(&self) -> impl Iterator<Item = &AuthProof> {
        self.0.iter()
    }

    /// Distinct factor kinds presented, verified or not.
    pub fn presented(&self) -> BTreeSet<FactorKind> {
        self.0.iter().map(AuthProof::factor).collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AuthPolicy {
    pub high_value_threshold: Money,
    pub daily_ceiling: Money,
    pub biometric_hamming_max: u32,
}

impl Default for AuthPolicy {
    fn default() -> Self {
        AuthPolicy {
            high_value_threshold: Money::from_rupees(10_000),
            daily_ceiling: Money::from_rupees(25_000),
            biometric_hamming_max: 64,
        }
    }
}

impl AuthPolicy {
    pub fn validate(&self) -> Result<(), AuthError> {
        if !self.high_value_threshold.is_positive() {
            return Err(AuthError::BadPolicy("high-value threshold must be positive"));
        }
        if !self.daily_ceiling.is_positive() {
            return Err(AuthError::BadPolicy("daily ceiling must be positive"));
        }
        if self.biometric_hamming_max >= TEMPLATE_BITS {
            return Err(AuthError::BadPolicy("hamming max must be below 512"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum AuthError {
    #[error("no wallet for {0}")]
    UnknownWallet(AadhaarId),
    #[error("a password is already enrolled for this wallet")]
    DuplicatePassword,
    #[error("card already enrolled")]
    DuplicateCard,
    #[error("biometric templates are 512 bits, got {bits}")]
    MalformedTemplate { bits: usize },
    #[error("a PIN has exactly 4 digits")]
    MalformedPin,
    #[error("password must not be empty")]
    EmptyPassword,
    #[error(transparent)]
    Alias(#[from] DirectoryError),
    #[error("invalid policy: {0}")]
    BadPolicy(&'static str),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Denial {
    InsufficientFactors,
    CeilingExceeded,
    FrozenWallet,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Decision {
    Authorized { satisfied: BTreeSet<FactorKind> },
    Rejected { reason: Denial, satisfied: BTreeSet<FactorKind> },
}

impl Decision {
    pub fn is_authorized(&self) -> bool {
        matches!(self, Decision::Authorized { .. })
    }

    pub fn satisfied(&self) -> &BTreeSet<FactorKind> {
        match self {
            Decision::Authorized { satisfied } | Decision::Rejected { satisfied, .. } => satisfied,
        }
    }
}

/// Minimum number of distinct factor kinds for a debit of `amount`.
pub fn required_factors(amount: Money, policy: &AuthPolicy) -> usize {
    if amount < policy.high_value_threshold {
        1
    } else {
        2
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CredentialStore {
    by_owner: BTreeMap<AadhaarId, Vec<CredentialRecord>>,
}

impl CredentialStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn check_enroll(&self, owner: AadhaarId, secret: &CredentialSecret) -> Result<(), AuthError> {
        match secret {
            CredentialSecret::Password { .. } => {
                if self.of(owner).any(|r| r.secret.factor() == FactorKind::Password) {
                    return Err(AuthError::DuplicatePassword);
                }
            }
            CredentialSecret::Card { number, .. } => {
                let taken = self.iter().any(|r| {
                    matches!(&r.secret, CredentialSecret::Card { number: n, .. } if n == number)
                });
                if taken {
                    return Err(AuthError::DuplicateCard);
                }
            }
            _ => {}
        }
        Ok(())
    }

    pub fn insert(&mut self, record: CredentialRecord) -> Result<(), AuthError> {
        self.check_enroll(record.owner, &record.secret)?;
        self.by_owner.entry(record.owner).or_default().push(record);
        Ok(())
    }

    pub fn of(&self, owner: AadhaarId) -> impl Iterator<Item = &CredentialRecord> {
        self.by_owner.get(&owner).into_iter().flatten()
    }

    pub fn iter(&self) -> impl Iterator<Item = &CredentialRecord> {
        self.by_owner.values().flatten()
    }

    pub fn len(&self) -> usize {
        self.by_owner.values().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn check_password(&self, owner: AadhaarId, password: &str) -> bool {
        self.of(owner).any(|r| matches!(&r.secret, CredentialSecret::Password { hash } if hash.verify(password)))
    }

    /// Owners with an enrolled template of `factor` within `max_distance` of
    /// `sample`. Each owner appears at most once.
    pub fn identify(&self, factor: FactorKind, sample: &Template, max_distance: u32) -> Vec<AadhaarId> {
        let mut found: Vec<AadhaarId> = self
            .iter()
            .filter(|r| r.secret.factor() == factor)
            .filter(|r| match &r.secret {
                CredentialSecret::Fingerprint { template } | CredentialSecret::Voice { template } => {
                    template.hamming(sample) <= max_distance
                }
                _ => false,
            })
            .map(|r| r.owner)
            .collect();
        found.dedup();
        found
    }

    /// Owner of an enrolled card number, if any.
    pub fn card_owner(&self, number: &str) -> Option<AadhaarId> {
        self.iter().find_map(|r| match &r.secret {
            CredentialSecret::Card { number: n, .. } if n == number => Some(r.owner),
            _ => None,
        })
    }

    /// Factor kinds of `evidence` that verify for `owner`.
    pub fn verify_evidence(
        &self,
        owner: AadhaarId,
        evidence: &AuthEvidence,
        directory: &Directory,
        policy: &AuthPolicy,
    ) -> BTreeSet<FactorKind> {
        evidence
            .iter()
            .filter(|proof| self.proof_holds(owner, proof, directory, policy))
            .map(AuthProof::factor)
            .collect()
    }

    fn proof_holds(&self, owner: AadhaarId, proof: &AuthProof, directory: &Directory, policy: &AuthPolicy) -> bool {
        let max = policy.biometric_hamming_max;
        match proof {
            AuthProof::Password(clear) => self.check_password(owner, clear),
            AuthProof::PasswordSession { owner: session_owner } => *session_owner == owner,
            AuthProof::FingerprintSample(sample) => self.of(owner).any(|r| {
                matches!(&r.secret, CredentialSecret::Fingerprint { template } if template.hamming(sample) <= max)
            }),
            AuthProof::VoiceSample { template: sample, .. } => self.of(owner).any(|r| {
                matches!(&r.secret, CredentialSecret::Voice { template } if template.hamming(sample) <= max)
            }),
            AuthProof::CardSwipe { number, pin } => {
                let Ok(number) = normalize_alias(AliasKind::Card, number) else {
                    return false;
                };
                self.of(owner).any(|r| {
                    matches!(&r.secret, CredentialSecret::Card { number: n, pin: hash } if *n == number && hash.verify(pin))
                })
            }
            AuthProof::OriginPhone(phone) => directory.is_alias_of(owner, AliasKind::Phone, phone),
            AuthProof::OriginEmail(email) => directory.is_alias_of(owner, AliasKind::Email, email),
        }
    }
}

/// Authorization of a debit from `sender`. Rules are checked in order:
/// factor count, daily ceiling on `day`, wallet status.
#[allow(clippy::too_many_arguments)]
pub fn authorize(
    sender: AadhaarId,
    amount: Money,
    evidence: &AuthEvidence,
    policy: &AuthPolicy,
    credentials: &CredentialStore,
    directory: &Directory,
    ledger: &Ledger,
    day: NaiveDate,
) -> Result<Decision, AuthError> {
    let satisfied = credentials.verify_evidence(sender, evidence, directory, policy);
    if satisfied.len() < required_factors(amount, policy) {
        return Ok(Decision::Rejected {
            reason: Denial::InsufficientFactors,
            satisfied,
        });
    }
    let headroom = ledger
        .daily_headroom(sender, day, policy.daily_ceiling)
        .map_err(|_| AuthError::UnknownWallet(sender))?;
    if amount > headroom {
        return Ok(Decision::Rejected {
            reason: Denial::CeilingExceeded,
            satisfied,
        });
    }
    let wallet = ledger.wallet(sender).ok_or(AuthError::UnknownWallet(sender))?;
    if wallet.status == WalletStatus::Frozen {
        return Ok(Decision::Rejected {
            reason: Denial::FrozenWallet,
            satisfied,
        });
    }
    Ok(Decision::Authorized { satisfied })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::directory::Registration;
    use crate::ledger::{business_day, AccountRef, Posting, SystemAccount};
    use chrono::TimeZone;
    use proptest::prelude::*;

    fn w1() -> AadhaarId {
        "234567890124".parse().unwrap()
    }

    fn t0() -> DateTime<Utc> {
        Utc.with_ymd_and_hms(2026, 3, 1, 6, 0, 0).unwrap()
    }

    fn template(fill: u8) -> Template {
        Template([fill; TEMPLATE_BYTES])
    }

    fn enroll(store: &mut CredentialStore, owner: AadhaarId, e: Enrollment) -> Result<(), AuthError> {
        let secret = e.into_secret()?;
        store.insert(CredentialRecord {
            id: format!("C{}", store.len() + 1),
            owner,
            secret,
            enrolled_at: t0(),
        })
    }

    fn funded(amount: i64) -> Ledger {
        let mut l = Ledger::new();
        l.open_wallet(w1(), business_day(t0())).unwrap();
        l.apply_postings(
            &[
                Posting::new(AccountRef::System(SystemAccount::CashPool("o".into())), Money::from_paise(-amount), "s"),
                Posting::new(AccountRef::Wallet(w1()), Money::from_paise(amount), "s"),
            ],
            t0(),
        )
        .unwrap();
        l
    }

    #[test]
    fn password_round_trip() {
        let mut store = CredentialStore::new();
        enroll(&mut store, w1(), Enrollment::Password { password: "s3cret".into() }).unwrap();
        assert!(store.check_password(w1(), "s3cret"));
        assert!(!store.check_password(w1(), "s3cret "));
    }

    #[test]
    fn second_password_rejected() {
        let mut store = CredentialStore::new();
        enroll(&mut store, w1(), Enrollment::Password { password: "a".into() }).unwrap();
        let err = enroll(&mut store, w1(), Enrollment::Password { password: "b".into() }).unwrap_err();
        assert_eq!(err, AuthError::DuplicatePassword);
    }

    #[test]
    fn short_template_rejected() {
        let err = Enrollment::Fingerprint { template: "a".repeat(125) }.into_secret().unwrap_err();
        assert_eq!(err, AuthError::MalformedTemplate { bits: 500 });
    }

    #[test]
    fn hashes_hide_secrets() {
        let secret = Enrollment::Card { number: "4111111111111111".into(), pin: "4321".into() }
            .into_secret()
            .unwrap();
        let text = serde_json::to_string(&secret).unwrap();
        assert!(!text.contains("4321"));
        let pw = Enrollment::Password { password: "hunter2".into() }.into_secret().unwrap();
        assert!(!serde_json::to_string(&pw).unwrap().contains("hunter2"));
    }

    #[test]
    fn biometric_threshold_boundary() {
        let policy = AuthPolicy::default();
        let mut store = CredentialStore::new();
        let enrolled = template(0x5a);
        enroll(&mut store, w1(), Enrollment::Fingerprint { template: enrolled.to_hex() }).unwrap();
        let dir = Directory::new();
        let check = |sample: Template| {
            store
                .verify_evidence(w1(), &AuthEvidence::single(AuthProof::FingerprintSample(sample)), &dir, &policy)
                .contains(&FactorKind::Fingerprint)
        };
        let max = policy.biometric_hamming_max as usize;
        assert!(check(enrolled));
        assert!(check(enrolled.with_flipped_bits(0..max)));
        assert!(!check(enrolled.with_flipped_bits(0..max + 1)));
    }

    #[test]
    fn origin_factor_requires_registered_alias() {
        let policy = AuthPolicy::default();
        let store = CredentialStore::new();
        let mut dir = Directory::new();
        let value = normalize_alias(AliasKind::Phone, "9876543210").unwrap();
        if let Registration::New(a) = dir.check_register(w1(), AliasKind::Phone, &value, t0()).unwrap() {
            dir.insert(a).unwrap();
        }
        let ok = AuthEvidence::single(AuthProof::OriginPhone("+91 98765 43210".into()));
        let bad = AuthEvidence::single(AuthProof::OriginPhone("9123456780".into()));
        assert_eq!(store.verify_evidence(w1(), &ok, &dir, &policy).len(), 1);
        assert!(store.verify_evidence(w1(), &bad, &dir, &policy).is_empty());
    }

    #[test]
    fn required_factor_step() {
        let policy = AuthPolicy::default();
        let t = policy.high_value_threshold;
        assert_eq!(required_factors(t - Money::from_paise(1), &policy), 1);
        assert_eq!(required_factors(t, &policy), 2);
        assert_eq!(required_factors(Money::from_paise(t.paise() * 10), &policy), 2);
    }

    #[test]
    fn same_factor_twice_counts_once() {
        let policy = AuthPolicy::default();
        let mut store = CredentialStore::new();
        enroll(&mut store, w1(), Enrollment::Password { password: "pw".into() }).unwrap();
        let ledger = funded(5_000_000);
        let ev = AuthEvidence::new(vec![AuthProof::Password("pw".into()), AuthProof::Password("pw".into())]);
        let d = authorize(w1(), policy.high_value_threshold, &ev, &policy, &store, &Directory::new(), &ledger, business_day(t0())).unwrap();
        assert_eq!(d, Decision::Rejected { reason: Denial::InsufficientFactors, satisfied: [FactorKind::Password].into() });
    }

    #[test]
    fn ceiling_and_frozen_rules() {
        let policy = AuthPolicy::default();
        let mut store = CredentialStore::new();
        enroll(&mut store, w1(), Enrollment::Password { password: "pw".into() }).unwrap();
        enroll(&mut store, w1(), Enrollment::Fingerprint { template: template(1).to_hex() }).unwrap();
        let mut ledger = funded(5_000_000);
        let ev = AuthEvidence::new(vec![AuthProof::Password("pw".into()), AuthProof::FingerprintSample(template(1))]);
        let day = business_day(t0());
        let over = policy.daily_ceiling + Money::from_paise(1);
        let d = authorize(w1(), over, &ev, &policy, &store, &Directory::new(), &ledger, day).unwrap();
        assert!(matches!(d, Decision::Rejected { reason: Denial::CeilingExceeded, .. }));
        let d = authorize(w1(), policy.daily_ceiling, &ev, &policy, &store, &Directory::new(), &ledger, day).unwrap();
        assert!(d.is_authorized());
        ledger.set_status(w1(), WalletStatus::Frozen).unwrap();
        let d = authorize(w1(), Money::from_paise(100), &ev, &policy, &store, &Directory::new(), &ledger, day).unwrap();
        assert!(matches!(d, Decision::Rejected { reason: Denial::FrozenWallet, .. }));
    }

    #[test]
    fn identify_finds_unique_owner() {
        let mut store = CredentialStore::new();
        enroll(&mut store, w1(), Enrollment::Voice { template: template(0).to_hex() }).unwrap();
        let sample = template(0).with_flipped_bits([3, 100, 400]);
        assert_eq!(store.identify(FactorKind::Voice, &sample, 64), vec![w1()]);
        assert!(store.identify(FactorKind::Fingerprint, &sample, 64).is_empty());
        assert!(store.identify(FactorKind::Voice, &template(0xff), 64).is_empty());
    }

    fn arb_template() -> impl Strategy<Value = Template> {
        proptest::collection::vec(any::<u8>(), TEMPLATE_BYTES).prop_map(|v| Template::from_bytes(&v).unwrap())
    }

    proptest! {
        #[test]
        fn hamming_is_symmetric_and_reflexive(a in arb_template(), b in arb_template()) {
            prop_assert_eq!(a.hamming(&b), b.hamming(&a));
            prop_assert_eq!(a.hamming(&a), 0);
        }

        #[test]
        fn adding_proofs_never_shrinks_satisfied_set(extra_pw in any::<bool>(), extra_fp in any::<bool>()) {
            let policy = AuthPolicy::default();
            let mut store = CredentialStore::new();
            enroll(&mut store, w1(), Enrollment::Password { password: "pw".into() }).unwrap();
            enroll(&mut store, w1(), Enrollment::Fingerprint { template: template(9).to_hex() }).unwrap();
            let dir = Directory::new();
            let mut ev = AuthEvidence::single(AuthProof::Password("wrong".into()));
            let before = store.verify_evidence(w1(), &ev, &dir, &policy);
            if extra_pw { ev.push(AuthProof::Password("pw".into())); }
            if extra_fp { ev.push(AuthProof::FingerprintSample(template(9))); }
            let after = store.verify_evidence(w1(), &ev, &dir, &policy);
            prop_assert!(before.is_subset(&after));
        }
    }
}
