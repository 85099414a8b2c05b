//! Transfer instructions, transactions and money orders.

use std::fmt;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::aadhaar::AadhaarId;
use crate::auth::{AuthEvidence, FactorKind};
use crate::directory::AliasKind;
use crate::ledger::Posting;
use crate::money::Money;

/// How a party is named in an instruction.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PartySelector {
    ByAadhaar { aadhaar: AadhaarId },
    ByAlias { kind: AliasKind, value: String },
}

impl PartySelector {
    pub fn aadhaar(id: AadhaarId) -> Self {
        PartySelector::ByAadhaar { aadhaar: id }
    }

    pub fn alias(kind: AliasKind, value: impl Into<String>) -> Self {
        PartySelector::ByAlias {
            kind,
            value: value.into(),
        }
    }
}

impl fmt::Display for PartySelector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PartySelector::ByAadhaar { aadhaar } => write!(f, "AADHAAR:{aadhaar}"),
            PartySelector::ByAlias { kind, value } if kind.is_biometric() => {
                write!(f, "{kind}:{}..", &value[..value.len().min(8)])
            }
            PartySelector::ByAlias { kind, value } => write!(f, "{kind}:{value}"),
        }
    }
}

/// Destination of a transfer: a wallet, or a postal address for an
/// outbound money order.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Receiver {
    Party(PartySelector),
    Postal { postal: String },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Channel {
    Sms,
    Email,
    Voice,
    Pos,
    Web,
    Outlet,
    MoneyOrder,
}

/// Channel-independent transfer instruction.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TransferIntent {
    pub sender: PartySelector,
    pub receiver: Receiver,
    pub amount: Money,
    pub channel: Channel,
    pub evidence: AuthEvidence,
    pub idempotency_key: String,
    pub received_at: DateTime<Utc>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum TxnKind {
    Transfer,
    CashIn,
    CashOut,
    BankOut,
    MoneyOrderOut,
    MoneyOrderIn,
    /// Inbound money-order cash held in the postal payable because the
    /// cited receiver could not be resolved.
    MoneyOrderPark,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum RejectReason {
    SenderNotFound,
    ReceiverNotFound,
    CustomerNotFound,
    InsufficientFactors,
    CeilingExceeded,
    InsufficientFunds,
    FrozenWallet,
    BankUnavailable,
    Unnormalizable,
    InvalidAmount,
    SelfTransfer,
    /// The service stopped before the transaction reached a terminal state.
    Interrupted,
}

impl fmt::Display for RejectReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let text = serde_json::to_value(self).expect("unit variant");
        f.write_str(text.as_str().expect("string"))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "state", content = "reason", rename_all = "SCREAMING_SNAKE_CASE")]
pub enum TxnState {
    Received,
    Resolved,
    Authorized,
    Settled,
    Rejected(RejectReason),
}

impl TxnState {
    pub fn is_terminal(self) -> bool {
        matches!(self, TxnState::Settled | TxnState::Rejected(_))
    }

    /// Legal edges: RECEIVED -> RESOLVED -> AUTHORIZED -> SETTLED, plus
    /// REJECTED from any non-terminal state.
    pub fn can_move_to(self, next: TxnState) -> bool {
        matches!(
            (self, next),
            (TxnState::Received, TxnState::Resolved)
                | (TxnState::Resolved, TxnState::Authorized)
                | (TxnState::Authorized, TxnState::Settled)
        ) || (!self.is_terminal() && matches!(next, TxnState::Rejected(_)))
    }

    pub fn name(self) -> &'static str {
        match self {
            TxnState::Received => "RECEIVED",
            TxnState::Resolved => "RESOLVED",
            TxnState::Authorized => "AUTHORIZED",
            TxnState::Settled => "SETTLED",
            TxnState::Rejected(_) => "REJECTED",
        }
    }
}

impl fmt::Display for TxnState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TxnState::Rejected(reason) => write!(f, "REJECTED({reason})"),
            other => f.write_str(other.name()),
        }
    }
}

/// A transfer moving through its state machine. Holds no secrets: the
/// evidence is reduced to the factor kinds presented and satisfied.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Transaction {
    pub id: String,
    pub kind: TxnKind,
    pub channel: Channel,
    pub idempotency_key: String,
    pub sender: Option<PartySelector>,
    pub receiver: Option<Receiver>,
    pub outlet: Option<String>,
    pub amount: Money,
    pub received_at: DateTime<Utc>,
    pub updated_at: DateTime<Utc>,
    pub resolved_sender: Option<AadhaarId>,
    pub resolved_receiver: Option<AadhaarId>,
    pub factors_presented: Vec<FactorKind>,
    pub factors_satisfied: Vec<FactorKind>,
    /// Postal address: the destination of an outbound order, or the sender's
    /// return address on an inbound one.
    pub postal_address: Option<String>,
    pub money_order: Option<String>,
    pub state: TxnState,
    pub postings: Vec<Posting>,
}

impl Transaction {
    pub fn is_settled(&self) -> bool {
        self.state == TxnState::Settled
    }

    pub fn rejection(&self) -> Option<RejectReason> {
        match self.state {
            TxnState::Rejected(r) => Some(r),
            _ => None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum MoneyOrderState {
    Issued,
    Dispatched,
    Delivered,
    Returned,
}

impl MoneyOrderState {
    pub fn is_terminal(self) -> bool {
        matches!(self, MoneyOrderState::Delivered | MoneyOrderState::Returned)
    }

    pub fn can_move_to(self, next: MoneyOrderState) -> bool {
        use MoneyOrderState::*;
        matches!(
            (self, next),
            (Issued, Dispatched) | (Dispatched, Delivered) | (Issued, Returned) | (Dispatched, Returned)
        )
    }
}

impl std::str::FromStr for MoneyOrderState {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        serde_json::from_value(serde_json::Value::String(s.to_string()))
            .map_err(|_| format!("unknown money-order state {s:?}"))
    }
}

/// Outbound postal remittance funded from a wallet.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MoneyOrder {
    pub id: String,
    pub owner: AadhaarId,
    pub destination: String,
    pub amount: Money,
    pub state: MoneyOrderState,
    pub funding_txn: String,
    pub updated_at: DateTime<Utc>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum ReceiptStatus {
    Success,
    Failed,
}

/// Receipt mailed back to the sender of an inbound money order.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Receipt {
    pub receipt_id: String,
    pub txn_id: String,
    pub status: ReceiptStatus,
    pub amount: Money,
    pub destination: String,
    pub at: DateTime<Utc>,
}

impl Receipt {
    /// `receipt_id|txn_id|status|amount_paise|destination|iso8601`
    pub fn to_line(&self) -> String {
        let status = match self.status {
            ReceiptStatus::Success => "SUCCESS",
            ReceiptStatus::Failed => "FAILED",
        };
        format!(
            "{}|{}|{}|{}|{}|{}",
            self.receipt_id,
            self.txn_id,
            status,
            self.amount.paise(),
            self.destination,
            self.at.to_rfc3339_opts(chrono::SecondsFormat::Micros, true)
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const ALL: [TxnState; 5] = [
        TxnState::Received,
        TxnState::Resolved,
        TxnState::Authorized,
        TxnState::Settled,
        TxnState::Rejected(RejectReason::InsufficientFunds),
    ];

    #[test]
    fn declared_edges_only() {
        let allowed: Vec<(TxnState, TxnState)> = ALL
            .iter()
            .flat_map(|a| ALL.iter().map(move |b| (*a, *b)))
            .filter(|(a, b)| a.can_move_to(*b))
            .collect();
        let rejected = TxnState::Rejected(RejectReason::InsufficientFunds);
        assert_eq!(
            allowed,
            vec![
                (TxnState::Received, TxnState::Resolved),
                (TxnState::Received, rejected),
                (TxnState::Resolved, TxnState::Authorized),
                (TxnState::Resolved, rejected),
                (TxnState::Authorized, TxnState::Settled),
                (TxnState::Authorized, rejected),
            ]
        );
    }

    #[test]
    fn state_serialization() {
        assert_eq!(serde_json::to_string(&TxnState::Settled).unwrap(), r#"{"state":"SETTLED"}"#);
        assert_eq!(
            serde_json::to_string(&TxnState::Rejected(RejectReason::ReceiverNotFound)).unwrap(),
            r#"{"state":"REJECTED","reason":"RECEIVER_NOT_FOUND"}"#
        );
        assert_eq!(RejectReason::CeilingExceeded.to_string(), "CEILING_EXCEEDED");
    }

    #[test]
    fn selector_json_shapes() {
        let by_alias: PartySelector = serde_json::from_str(r#"{"kind":"PHONE","value":"9876543210"}"#).unwrap();
        assert_eq!(by_alias, PartySelector::alias(AliasKind::Phone, "9876543210"));
        let by_id: PartySelector = serde_json::from_str(r#"{"aadhaar":"234567890124"}"#).unwrap();
        assert!(matches!(by_id, PartySelector::ByAadhaar { .. }));
        let postal: Receiver = serde_json::from_str(r#"{"postal":"12 MG Road"}"#).unwrap();
        assert_eq!(postal, Receiver::Postal { postal: "12 MG Road".into() });
    }

    #[test]
    fn money_order_edges() {
        use MoneyOrderState::*;
        assert!(Issued.can_move_to(Dispatched));
        assert!(Dispatched.can_move_to(Delivered));
        assert!(Dispatched.can_move_to(Returned));
        assert!(!Issued.can_move_to(Delivered));
        assert!(!Delivered.can_move_to(Returned));
        assert!(!Returned.can_move_to(Dispatched));
        assert_eq!("DISPATCHED".parse::<MoneyOrderState>(), Ok(Dispatched));
    }
}
