//! Per-wallet statements read off the event log.

use std::collections::BTreeMap;

use chrono::{DateTime, FixedOffset, Utc};
use serde::Serialize;
use thiserror::Error;

use crate::aadhaar::AadhaarId;
use crate::events::{EventPayload, LedgerEvent};
use crate::ledger::AccountRef;
use crate::money::Money;
use crate::state::{CorruptLog, State};

#[derive(Debug, Error)]
pub enum AuditError {
    #[error(transparent)]
    Corrupt(#[from] CorruptLog),
    #[error("no wallet for {0}")]
    UnknownWallet(AadhaarId),
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct StatementLine {
    pub seq: u64,
    pub at: DateTime<Utc>,
    pub txn_id: String,
    pub description: String,
    pub delta: Money,
    pub balance: Money,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Statement {
    pub owner: AadhaarId,
    pub lines: Vec<StatementLine>,
}

/// `XXXX XXXX 1234`: statements go out by e-mail, so other parties'
/// numbers are masked.
pub fn mask(id: &AadhaarId) -> String {
    format!("XXXX XXXX {}", &id.as_str()[8..])
}

fn describe(account: &AccountRef) -> String {
    match account {
        AccountRef::Wallet(id) => format!("wallet {}", mask(id)),
        system => system.to_string(),
    }
}

fn signed(m: Money) -> String {
    if m.is_positive() {
        format!("+{}", m.to_rupees_string())
    } else {
        m.to_rupees_string()
    }
}

impl Statement {
    pub fn closing(&self) -> Money {
        self.lines.last().map_or(Money::ZERO, |l| l.balance)
    }

    pub fn render(&self) -> String {
        let ist = FixedOffset::east_opt(5 * 3600 + 1800).expect("valid offset");
        let mut out = format!("Statement for wallet {}\n", self.owner);
        for l in &self.lines {
            out.push_str(&format!(
                "{}  {:<20}  {:<40}  {:>14}  {:>14}\n",
                l.at.with_timezone(&ist).format("%Y-%m-%d %H:%M:%S IST"),
                l.txn_id,
                l.description,
                signed(l.delta),
                l.balance.to_rupees_string(),
            ));
        }
        out.push_str(&format!("Closing balance {}\n", self.closing()));
        out
    }
}

/// Statements for every wallet in `events`. The log is folded alongside,
/// so an invalid log is reported rather than summarized.
pub fn statements(events: &[LedgerEvent]) -> Result<BTreeMap<AadhaarId, Statement>, CorruptLog> {
    let mut state = State::new();
    let mut out: BTreeMap<AadhaarId, Statement> = BTreeMap::new();
    let mut kinds = BTreeMap::new();
    for event in events {
        state.apply(event)?;
        match &event.payload {
            EventPayload::WalletOpened(p) => {
                out.insert(p.owner, Statement { owner: p.owner, lines: Vec::new() });
            }
            EventPayload::TxnStateChanged(p) if p.from.is_none() => {
                let kind = serde_json::to_value(p.txn.kind).expect("unit variant");
                kinds.insert(p.txn.id.clone(), kind.as_str().unwrap_or("").to_string());
            }
            EventPayload::PostingsApplied(p) => {
                let label = kinds.get(&p.txn_id).cloned().unwrap_or_else(|| {
                    match p.txn_id.rsplit_once(':') {
                        Some((_, what)) => format!("MONEY_ORDER_{what}"),
                        None => p.txn_id.clone(),
                    }
                });
                for posting in &p.postings {
                    let AccountRef::Wallet(owner) = posting.account else { continue };
                    let counter = p
                        .postings
                        .iter()
                        .find(|o| o.account != posting.account && o.delta.is_positive() != posting.delta.is_positive())
                        .map(|o| describe(&o.account))
                        .unwrap_or_default();
                    let direction = if posting.delta.is_positive() { "from" } else { "to" };
                    let statement = out.get_mut(&owner).expect("postings only touch open wallets");
                    let balance = statement.closing() + posting.delta;
                    statement.lines.push(StatementLine {
                        seq: event.seq,
                        at: event.at,
                        txn_id: p.txn_id.clone(),
                        description: format!("{label} {direction} {counter}"),
                        delta: posting.delta,
                        balance,
                    });
                }
            }
            _ => {}
        }
    }
    Ok(out)
}

pub fn statement_for(events: &[LedgerEvent], owner: AadhaarId) -> Result<Statement, AuditError> {
    statements(events)?
        .remove(&owner)
        .ok_or(AuditError::UnknownWallet(owner))
}
