//! Alias directory: every registered identifier maps to exactly one wallet.
//!
//! Lookups are exact matches on the normalized value. Normalization rules per
//! kind live in [`normalize_alias`]; biometric kinds are stored as the SHA-256
//! digest of the 512-bit template, never as the template itself.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use chrono::{DateTime, SecondsFormat, Utc};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::aadhaar::AadhaarId;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum AliasKind {
    Phone,
    Email,
    HomeAddress,
    OfficeAddress,
    Fingerprint,
    Voice,
    Card,
}

impl AliasKind {
    pub const ALL: [AliasKind; 7] = [
        AliasKind::Phone,
        AliasKind::Email,
        AliasKind::HomeAddress,
        AliasKind::OfficeAddress,
        AliasKind::Fingerprint,
        AliasKind::Voice,
        AliasKind::Card,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            AliasKind::Phone => "PHONE",
            AliasKind::Email => "EMAIL",
            AliasKind::HomeAddress => "HOME_ADDRESS",
            AliasKind::OfficeAddress => "OFFICE_ADDRESS",
            AliasKind::Fingerprint => "FINGERPRINT",
            AliasKind::Voice => "VOICE",
            AliasKind::Card => "CARD",
        }
    }

    pub fn is_biometric(self) -> bool {
        matches!(self, AliasKind::Fingerprint | AliasKind::Voice)
    }
}

impl fmt::Display for AliasKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for AliasKind {
    type Err = DirectoryError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        AliasKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| DirectoryError::UnknownKind(s.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum DirectoryError {
    #[error("{kind} value cannot be normalized: {reason}")]
    Unnormalizable { kind: AliasKind, reason: &'static str },
    #[error("{kind}:{value} is already registered to another wallet")]
    DuplicateAlias { kind: AliasKind, value: String },
    #[error("no wallet for {0}")]
    UnknownWallet(AadhaarId),
    #[error("alias not found")]
    NotFound,
    #[error("unknown alias kind {0:?}")]
    UnknownKind(String),
    #[error("malformed directory record on line {line}: {reason}")]
    BadRecord { line: usize, reason: String },
}

fn unnormalizable(kind: AliasKind, reason: &'static str) -> DirectoryError {
    DirectoryError::Unnormalizable { kind, reason }
}

/// Canonical form of a raw identifier. Idempotent for every accepted input.
pub fn normalize_alias(kind: AliasKind, raw: &str) -> Result<String, DirectoryError> {
    if raw.trim().is_empty() {
        return Err(unnormalizable(kind, "empty"));
    }
    match kind {
        AliasKind::Phone => normalize_phone(raw),
        AliasKind::Email => normalize_email(raw),
        AliasKind::HomeAddress | AliasKind::OfficeAddress => normalize_address(raw)
            .ok_or_else(|| unnormalizable(kind, "no letters or digits")),
        AliasKind::Fingerprint | AliasKind::Voice => normalize_template_digest(kind, raw),
        AliasKind::Card => {
            let digits: String = raw.chars().filter(char::is_ascii_digit).collect();
            if digits.len() != 16 {
                return Err(unnormalizable(kind, "a card number has 16 digits"));
            }
            Ok(digits)
        }
    }
}

fn normalize_phone(raw: &str) -> Result<String, DirectoryError> {
    let digits: String = raw.chars().filter(char::is_ascii_digit).collect();
    match digits.len() {
        0..=9 => Err(unnormalizable(AliasKind::Phone, "fewer than 10 digits")),
        10 => Ok(format!("91{digits}")),
        11..=15 => Ok(digits),
        _ => Err(unnormalizable(AliasKind::Phone, "more than 15 digits")),
    }
}

fn normalize_email(raw: &str) -> Result<String, DirectoryError> {
    let email = raw.trim().to_lowercase();
    let well_formed = match email.split_once('@') {
        Some((local, domain)) => {
            !local.is_empty() && !domain.is_empty() && !domain.contains('@')
        }
        None => false,
    };
    if !well_formed || email.chars().any(char::is_whitespace) {
        return Err(unnormalizable(AliasKind::Email, "expected local@domain"));
    }
    Ok(email)
}

/// Uppercases, drops everything except letters, digits, whitespace and `/`,
/// then collapses whitespace runs to a single space. `None` if nothing
/// remains.
pub fn normalize_address(raw: &str) -> Option<String> {
    let kept: String = raw
        .chars()
        .flat_map(char::to_uppercase)
        .filter(|c| c.is_alphanumeric() || c.is_whitespace() || *c == '/')
        .collect();
    let out = kept.split_whitespace().collect::<Vec<_>>().join(" ");
    (!out.is_empty()).then_some(out)
}

/// Biometric aliases accept either a 128-hex-digit template, which is
/// digested, or an existing 64-hex-digit digest, which passes through.
fn normalize_template_digest(kind: AliasKind, raw: &str) -> Result<String, DirectoryError> {
    let raw = raw.trim();
    let bytes = hex::decode(raw).map_err(|_| unnormalizable(kind, "expected hex"))?;
    match bytes.len() {
        64 => Ok(hex::encode(Sha256::digest(&bytes))),
        32 => Ok(raw.to_ascii_lowercase()),
        _ => Err(unnormalizable(kind, "expected a 512-bit template or its digest")),
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Alias {
    pub kind: AliasKind,
    pub value: String,
    pub owner: AadhaarId,
    pub registered_at: DateTime<Utc>,
}

/// Outcome of an accepted registration.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Registration {
    New(Alias),
    /// Same owner registered the same value before.
    Existing(Alias),
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Directory {
    aliases: BTreeMap<AliasKind, BTreeMap<String, Alias>>,
}

impl Directory {
    pub fn new() -> Self {
        Self::default()
    }

    /// Checks whether `(kind, value)` could be registered to `owner`.
    /// `value` must already be normalized.
    pub fn check_register(
        &self,
        owner: AadhaarId,
        kind: AliasKind,
        value: &str,
        at: DateTime<Utc>,
    ) -> Result<Registration, DirectoryError> {
        match self.get(kind, value) {
            Some(existing) if existing.owner == owner => Ok(Registration::Existing(existing.clone())),
            Some(_) => Err(DirectoryError::DuplicateAlias {
                kind,
                value: value.to_string(),
            }),
            None => Ok(Registration::New(Alias {
                kind,
                value: value.to_string(),
                owner,
                registered_at: at,
            })),
        }
    }

    /// Inserts an alias previously accepted by [`Directory::check_register`].
    pub fn insert(&mut self, alias: Alias) -> Result<(), DirectoryError> {
        let by_value = self.aliases.entry(alias.kind).or_default();
        match by_value.get(&alias.value) {
            Some(existing) if existing.owner != alias.owner => Err(DirectoryError::DuplicateAlias {
                kind: alias.kind,
                value: alias.value,
            }),
            Some(_) => Ok(()),
            None => {
                by_value.insert(alias.value.clone(), alias);
                Ok(())
            }
        }
    }

    /// Removes `(kind, value)` if `owner` holds it.
    pub fn remove(&mut self, owner: AadhaarId, kind: AliasKind, normalized: &str) -> Result<Alias, DirectoryError> {
        let by_value = self.aliases.get_mut(&kind).ok_or(DirectoryError::NotFound)?;
        match by_value.get(normalized) {
            Some(a) if a.owner == owner => {
                let removed = by_value.remove(normalized).expect("present");
                if by_value.is_empty() {
                    self.aliases.remove(&kind);
                }
                Ok(removed)
            }
            _ => Err(DirectoryError::NotFound),
        }
    }

    pub fn get(&self, kind: AliasKind, normalized: &str) -> Option<&Alias> {
        self.aliases.get(&kind)?.get(normalized)
    }

    pub fn resolve(&self, kind: AliasKind, raw: &str) -> Result<AadhaarId, DirectoryError> {
        let value = normalize_alias(kind, raw)?;
        self.get(kind, &value)
            .map(|a| a.owner)
            .ok_or(DirectoryError::NotFound)
    }

    pub fn is_alias_of(&self, owner: AadhaarId, kind: AliasKind, raw: &str) -> bool {
        matches!(self.resolve(kind, raw), Ok(found) if found == owner)
    }

    pub fn aliases_of(&self, owner: AadhaarId) -> impl Iterator<Item = &Alias> {
        self.iter().filter(move |a| a.owner == owner)
    }

    /// All aliases in `(kind, value)` order.
    pub fn iter(&self) -> impl Iterator<Item = &Alias> {
        self.aliases.values().flat_map(BTreeMap::values)
    }

    pub fn len(&self) -> usize {
        self.aliases.values().map(BTreeMap::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Line-delimited export: `kind|value|owner|registered_at`, sorted by
    /// `(kind, value)`.
    pub fn export(&self) -> String {
        export_lines(self.iter())
    }

    /// Export restricted to one wallet's aliases.
    pub fn export_for(&self, owner: AadhaarId) -> String {
        export_lines(self.aliases_of(owner))
    }

    pub fn import(text: &str) -> Result<Directory, DirectoryError> {
        let mut dir = Directory::new();
        for (idx, line) in text.lines().enumerate() {
            let line_no = idx + 1;
            if line.is_empty() {
                continue;
            }
            let bad = |reason: String| DirectoryError::BadRecord {
                line: line_no,
                reason,
            };
            // Only the value may contain '|': kind splits from the left, owner and
            // timestamp from the right.
            let mut parts = line.rsplitn(3, '|');
            let at = parts.next().ok_or_else(|| bad("missing timestamp".into()))?;
            let owner = parts.next().ok_or_else(|| bad("missing owner".into()))?;
            let head = parts.next().ok_or_else(|| bad("missing kind".into()))?;
            let (kind, value) = head
                .split_once('|')
                .ok_or_else(|| bad("missing value".into()))?;
            let kind: AliasKind = kind.parse()?;
            let owner: AadhaarId = owner.parse().map_err(|e| bad(format!("{e}")))?;
            let at = DateTime::parse_from_rfc3339(at)
                .map_err(|e| bad(e.to_string()))?
                .with_timezone(&Utc);
            let normalized = normalize_alias(kind, value)?;
            if normalized != value {
                return Err(bad("value is not normalized".into()));
            }
            dir.insert(Alias {
                kind,
                value: normalized,
                owner,
                registered_at: at,
            })?;
        }
        Ok(dir)
    }
}

fn export_lines<'a>(aliases: impl Iterator<Item = &'a Alias>) -> String {
    let mut out = String::new();
    for a in aliases {
        out.push_str(&format!(
            "{}|{}|{}|{}\n",
            a.kind,
            a.value,
            a.owner,
            a.registered_at.to_rfc3339_opts(SecondsFormat::Micros, true)
        ));
    }
    out
}
