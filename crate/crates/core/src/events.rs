//! Ledger events and their line encoding.
//!
//! One event per line: `seq<TAB>iso8601<TAB>KIND<TAB>payload`, where the
//! payload is JSON with object keys sorted at every level. Decoding rejects
//! payloads that are not already in that canonical form, so a log read back
//! and re-encoded is byte-identical.

use std::fmt;
use std::str::FromStr;

use chrono::{DateTime, SecondsFormat, SubsecRound, Utc};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::aadhaar::AadhaarId;
use crate::auth::CredentialRecord;
use crate::directory::{Alias, AliasKind};
use crate::ledger::{Posting, WalletStatus};
use crate::transfer::{MoneyOrder, MoneyOrderState, Transaction, TxnState};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum EventKind {
    WalletOpened,
    WalletStatusChanged,
    AliasRegistered,
    AliasRemoved,
    CredentialEnrolled,
    PostingsApplied,
    TxnStateChanged,
    MoneyOrderStateChanged,
}

impl EventKind {
    const ALL: [EventKind; 8] = [
        EventKind::WalletOpened,
        EventKind::WalletStatusChanged,
        EventKind::AliasRegistered,
        EventKind::AliasRemoved,
        EventKind::CredentialEnrolled,
        EventKind::PostingsApplied,
        EventKind::TxnStateChanged,
        EventKind::MoneyOrderStateChanged,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            EventKind::WalletOpened => "WALLET_OPENED",
            EventKind::WalletStatusChanged => "WALLET_STATUS_CHANGED",
            EventKind::AliasRegistered => "ALIAS_REGISTERED",
            EventKind::AliasRemoved => "ALIAS_REMOVED",
            EventKind::CredentialEnrolled => "CREDENTIAL_ENROLLED",
            EventKind::PostingsApplied => "POSTINGS_APPLIED",
            EventKind::TxnStateChanged => "TXN_STATE_CHANGED",
            EventKind::MoneyOrderStateChanged => "MONEY_ORDER_STATE_CHANGED",
        }
    }
}

impl fmt::Display for EventKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for EventKind {
    type Err = ();

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        EventKind::ALL.into_iter().find(|k| k.as_str() == s).ok_or(())
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct WalletOpened {
    pub owner: AadhaarId,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct WalletStatusChanged {
    pub owner: AadhaarId,
    pub status: WalletStatus,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AliasRegistered {
    pub alias: Alias,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AliasRemoved {
    pub owner: AadhaarId,
    pub kind: AliasKind,
    pub value: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CredentialEnrolled {
    pub record: CredentialRecord,
}

/// A balanced batch of postings. `commit_events` more events, written in
/// the same append, complete the batch (the settling state change).
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PostingsApplied {
    pub txn_id: String,
    pub postings: Vec<Posting>,
    pub commit_events: u32,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TxnStateChanged {
    pub from: Option<TxnState>,
    pub txn: Transaction,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MoneyOrderStateChanged {
    pub from: Option<MoneyOrderState>,
    pub order: MoneyOrder,
}

#[derive(Clone, Debug, PartialEq, Eq)]
#[allow(clippy::large_enum_variant)]
pub enum EventPayload {
    WalletOpened(WalletOpened),
    WalletStatusChanged(WalletStatusChanged),
    AliasRegistered(AliasRegistered),
    AliasRemoved(AliasRemoved),
    CredentialEnrolled(CredentialEnrolled),
    PostingsApplied(PostingsApplied),
    TxnStateChanged(TxnStateChanged),
    MoneyOrderStateChanged(MoneyOrderStateChanged),
}

impl EventPayload {
    pub fn kind(&self) -> EventKind {
        match self {
            EventPayload::WalletOpened(_) => EventKind::WalletOpened,
            EventPayload::WalletStatusChanged(_) => EventKind::WalletStatusChanged,
            EventPayload::AliasRegistered(_) => EventKind::AliasRegistered,
            EventPayload::AliasRemoved(_) => EventKind::AliasRemoved,
            EventPayload::CredentialEnrolled(_) => EventKind::CredentialEnrolled,
            EventPayload::PostingsApplied(_) => EventKind::PostingsApplied,
            EventPayload::TxnStateChanged(_) => EventKind::TxnStateChanged,
            EventPayload::MoneyOrderStateChanged(_) => EventKind::MoneyOrderStateChanged,
        }
    }

    fn to_value(&self) -> Value {
        let v = match self {
            EventPayload::WalletOpened(p) => serde_json::to_value(p),
            EventPayload::WalletStatusChanged(p) => serde_json::to_value(p),
            EventPayload::AliasRegistered(p) => serde_json::to_value(p),
            EventPayload::AliasRemoved(p) => serde_json::to_value(p),
            EventPayload::CredentialEnrolled(p) => serde_json::to_value(p),
            EventPayload::PostingsApplied(p) => serde_json::to_value(p),
            EventPayload::TxnStateChanged(p) => serde_json::to_value(p),
            EventPayload::MoneyOrderStateChanged(p) => serde_json::to_value(p),
        };
        v.expect("event payloads serialize")
    }

    fn from_value(kind: EventKind, v: Value) -> Result<Self, serde_json::Error> {
        fn de<T: DeserializeOwned>(v: Value) -> Result<T, serde_json::Error> {
            serde_json::from_value(v)
        }
        Ok(match kind {
            EventKind::WalletOpened => EventPayload::WalletOpened(de(v)?),
            EventKind::WalletStatusChanged => EventPayload::WalletStatusChanged(de(v)?),
            EventKind::AliasRegistered => EventPayload::AliasRegistered(de(v)?),
            EventKind::AliasRemoved => EventPayload::AliasRemoved(de(v)?),
            EventKind::CredentialEnrolled => EventPayload::CredentialEnrolled(de(v)?),
            EventKind::PostingsApplied => EventPayload::PostingsApplied(de(v)?),
            EventKind::TxnStateChanged => EventPayload::TxnStateChanged(de(v)?),
            EventKind::MoneyOrderStateChanged => EventPayload::MoneyOrderStateChanged(de(v)?),
        })
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LedgerEvent {
    pub seq: u64,
    pub at: DateTime<Utc>,
    pub payload: EventPayload,
}

impl LedgerEvent {
    pub fn kind(&self) -> EventKind {
        self.payload.kind()
    }

    pub fn to_line(&self) -> String {
        format!(
            "{}\t{}\t{}\t{}",
            self.seq,
            format_time(self.at),
            self.kind(),
            canonical_json(&self.payload.to_value())
        )
    }

    pub fn parse_line(line: &str) -> Result<LedgerEvent, EventParseError> {
        let mut fields = line.splitn(4, '\t');
        let (Some(seq), Some(at), Some(kind), Some(payload)) =
            (fields.next(), fields.next(), fields.next(), fields.next())
        else {
            return Err(EventParseError::MissingField);
        };
        let seq: u64 = seq.parse().map_err(|_| EventParseError::BadSeq)?;
        let at = DateTime::parse_from_rfc3339(at)
            .map_err(|_| EventParseError::BadTimestamp)?
            .with_timezone(&Utc);
        let kind: EventKind = kind
            .parse()
            .map_err(|_| EventParseError::UnknownKind(kind.to_string()))?;
        let value: Value =
            serde_json::from_str(payload).map_err(|e| EventParseError::BadPayload(e.to_string()))?;
        let payload = EventPayload::from_value(kind, value).map_err(|e| EventParseError::BadPayload(e.to_string()))?;
        let event = LedgerEvent { seq, at, payload };
        if event.to_line() != line {
            return Err(EventParseError::NotCanonical);
        }
        Ok(event)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EventParseError {
    #[error("expected four tab-separated fields")]
    MissingField,
    #[error("sequence number is not an integer")]
    BadSeq,
    #[error("timestamp is not RFC 3339")]
    BadTimestamp,
    #[error("unknown event kind {0:?}")]
    UnknownKind(String),
    #[error("payload does not decode: {0}")]
    BadPayload(String),
    #[error("record is not in canonical form")]
    NotCanonical,
}

/// Event timestamps carry microsecond precision.
pub fn truncate_time(at: DateTime<Utc>) -> DateTime<Utc> {
    at.trunc_subsecs(6)
}

pub fn format_time(at: DateTime<Utc>) -> String {
    at.to_rfc3339_opts(SecondsFormat::Micros, true)
}

/// JSON text with object keys sorted at every level and no insignificant
/// whitespace.
pub fn canonical_json(value: &Value) -> String {
    let mut out = String::new();
    write_canonical(value, &mut out);
    out
}

fn write_canonical(value: &Value, out: &mut String) {
    match value {
        Value::Object(map) => {
            let mut entries: Vec<(&String, &Value)> = map.iter().collect();
            entries.sort_by(|a, b| a.0.cmp(b.0));
            out.push('{');
            for (i, (k, v)) in entries.into_iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                out.push_str(&Value::String(k.clone()).to_string());
                out.push(':');
                write_canonical(v, out);
            }
            out.push('}');
        }
        Value::Array(items) => {
            out.push('[');
            for (i, v) in items.iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                write_canonical(v, out);
            }
            out.push(']');
        }
        scalar => out.push_str(&scalar.to_string()),
    }
}
