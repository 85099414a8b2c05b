//! Aggregate state and the fold that rebuilds it from events.
//!
//! [`State::apply`] is the only way state changes, both live and on replay,
//! and it validates every event before mutating anything.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::aadhaar::AadhaarId;
use crate::auth::CredentialStore;
use crate::directory::{normalize_alias, Directory};
use crate::events::{canonical_json, EventPayload, LedgerEvent, PostingsApplied};
use crate::ledger::{business_day, Ledger, Posting};
use crate::money::Money;
use crate::transfer::{MoneyOrder, MoneyOrderState, Transaction, TxnState};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("corrupt event log at seq {seq}: {reason}")]
pub struct CorruptLog {
    pub seq: u64,
    pub reason: String,
}

/// Postings applied whose commit events have not all arrived yet.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
struct OpenBatch {
    txn_id: String,
    postings: Vec<Posting>,
    remaining: u32,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct State {
    last_seq: u64,
    directory: Directory,
    ledger: Ledger,
    credentials: CredentialStore,
    transactions: BTreeMap<String, Transaction>,
    idempotency: BTreeMap<String, String>,
    money_orders: BTreeMap<String, MoneyOrder>,
    open_batch: Option<OpenBatch>,
}

impl State {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn last_seq(&self) -> u64 {
        self.last_seq
    }

    pub fn directory(&self) -> &Directory {
        &self.directory
    }

    pub fn ledger(&self) -> &Ledger {
        &self.ledger
    }

    pub fn credentials(&self) -> &CredentialStore {
        &self.credentials
    }

    pub fn transactions(&self) -> impl Iterator<Item = &Transaction> {
        self.transactions.values()
    }

    pub fn transaction(&self, id: &str) -> Option<&Transaction> {
        self.transactions.get(id)
    }

    pub fn transaction_count(&self) -> usize {
        self.transactions.len()
    }

    pub fn by_idempotency_key(&self, key: &str) -> Option<&Transaction> {
        self.idempotency.get(key).and_then(|id| self.transactions.get(id))
    }

    pub fn money_order(&self, id: &str) -> Option<&MoneyOrder> {
        self.money_orders.get(id)
    }

    pub fn money_orders(&self) -> impl Iterator<Item = &MoneyOrder> {
        self.money_orders.values()
    }

    pub fn money_order_count(&self) -> usize {
        self.money_orders.len()
    }

    pub fn has_wallet(&self, owner: AadhaarId) -> bool {
        self.ledger.has_wallet(owner)
    }

    /// True while a postings batch is waiting for its commit events.
    pub fn mid_batch(&self) -> bool {
        self.open_batch.is_some()
    }

    /// Canonical JSON of the full state. Equal states give equal bytes.
    pub fn snapshot(&self) -> String {
        canonical_json(&serde_json::to_value(self).expect("state serializes"))
    }

    /// Snapshot file contents: a header naming the covered seq, then the
    /// canonical state on one line.
    pub fn snapshot_file(&self) -> String {
        format!("UPS-SNAPSHOT seq={}\n{}\n", self.last_seq, self.snapshot())
    }

    pub fn from_snapshot_file(text: &str) -> Result<State, CorruptLog> {
        let bad = |reason: String| CorruptLog { seq: 0, reason };
        let (header, body) = text.split_once('\n').ok_or_else(|| bad("snapshot has no header".into()))?;
        let seq: u64 = header
            .strip_prefix("UPS-SNAPSHOT seq=")
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| bad(format!("bad snapshot header {header:?}")))?;
        let body = body.strip_suffix('\n').unwrap_or(body);
        let state: State = serde_json::from_str(body).map_err(|e| bad(format!("snapshot body: {e}")))?;
        if state.last_seq != seq || state.snapshot() != body {
            return Err(bad("snapshot header and body disagree".into()));
        }
        Ok(state)
    }

    /// Validates `event` against the current state and folds it in. On error
    /// the state is unchanged.
    pub fn apply(&mut self, event: &LedgerEvent) -> Result<(), CorruptLog> {
        let fail = |reason: String| CorruptLog { seq: event.seq, reason };
        if event.seq != self.last_seq + 1 {
            return Err(fail(format!("expected seq {}", self.last_seq + 1)));
        }
        if self.open_batch.is_some()
            && !matches!(
                event.payload,
                EventPayload::TxnStateChanged(_) | EventPayload::MoneyOrderStateChanged(_)
            )
        {
            return Err(fail("postings batch interrupted before its commit events".into()));
        }
        match &event.payload {
            EventPayload::WalletOpened(p) => {
                self.ledger
                    .open_wallet(p.owner, business_day(event.at))
                    .map_err(|e| fail(e.to_string()))?;
            }
            EventPayload::WalletStatusChanged(p) => {
                self.ledger.set_status(p.owner, p.status).map_err(|e| fail(e.to_string()))?;
            }
            EventPayload::AliasRegistered(p) => {
                let alias = &p.alias;
                if !self.ledger.has_wallet(alias.owner) {
                    return Err(fail(format!("alias for unknown wallet {}", alias.owner)));
                }
                if normalize_alias(alias.kind, &alias.value).as_deref() != Ok(alias.value.as_str()) {
                    return Err(fail("alias value is not normalized".into()));
                }
                if self.directory.get(alias.kind, &alias.value).is_some() {
                    return Err(fail("alias already registered".into()));
                }
                self.directory.insert(alias.clone()).map_err(|e| fail(e.to_string()))?;
            }
            EventPayload::AliasRemoved(p) => {
                if normalize_alias(p.kind, &p.value).as_deref() != Ok(p.value.as_str()) {
                    return Err(fail("alias value is not normalized".into()));
                }
                self.directory
                    .remove(p.owner, p.kind, &p.value)
                    .map_err(|_| fail(format!("{}:{} is not an alias of {}", p.kind, p.value, p.owner)))?;
            }
            EventPayload::CredentialEnrolled(p) => {
                if !self.ledger.has_wallet(p.record.owner) {
                    return Err(fail(format!("credential for unknown wallet {}", p.record.owner)));
                }
                self.credentials.insert(p.record.clone()).map_err(|e| fail(e.to_string()))?;
            }
            EventPayload::PostingsApplied(p) => self.apply_postings(p, event).map_err(fail)?,
            EventPayload::TxnStateChanged(p) => self.apply_txn(p.from, &p.txn).map_err(fail)?,
            EventPayload::MoneyOrderStateChanged(p) => self.apply_money_order(p.from, &p.order).map_err(fail)?,
        }
        self.last_seq = event.seq;
        Ok(())
    }

    fn apply_postings(&mut self, p: &PostingsApplied, event: &LedgerEvent) -> Result<(), String> {
        if p.commit_events == 0 {
            return Err("postings batch without commit events".into());
        }
        if p.postings.iter().any(|x| x.txn_id != p.txn_id) {
            return Err("posting references another transaction".into());
        }
        self.ledger.apply_postings(&p.postings, event.at).map_err(|e| e.to_string())?;
        self.open_batch = Some(OpenBatch {
            txn_id: p.txn_id.clone(),
            postings: p.postings.clone(),
            remaining: p.commit_events,
        });
        Ok(())
    }

    /// Takes the open batch's postings if they belong to `txn_id`.
    fn check_batch_for(&self, txn_id: &str) -> Result<&[Posting], String> {
        match &self.open_batch {
            Some(batch) if batch.txn_id == txn_id => Ok(&batch.postings),
            _ => Err(format!("{txn_id} commits without its postings")),
        }
    }

    fn consume_commit(&mut self) {
        if let Some(batch) = &mut self.open_batch {
            batch.remaining -= 1;
            if batch.remaining == 0 {
                self.open_batch = None;
            }
        }
    }

    fn apply_txn(&mut self, from: Option<TxnState>, txn: &Transaction) -> Result<(), String> {
        let existing = self.transactions.get(&txn.id);
        if existing.map(|t| t.state) != from {
            return Err(format!("{} is not in state {:?}", txn.id, from));
        }
        match existing {
            None => {
                if txn.state != TxnState::Received {
                    return Err(format!("{} must start RECEIVED", txn.id));
                }
                if self.idempotency.contains_key(&txn.idempotency_key) {
                    return Err(format!("idempotency key of {} already used", txn.id));
                }
            }
            Some(prev) => {
                if !prev.state.can_move_to(txn.state) {
                    return Err(format!("illegal transition {} -> {}", prev.state, txn.state));
                }
                if prev.kind != txn.kind || prev.amount != txn.amount || prev.idempotency_key != txn.idempotency_key {
                    return Err(format!("immutable fields of {} changed", txn.id));
                }
            }
        }
        if txn.state == TxnState::Settled {
            let postings = self.check_batch_for(&txn.id)?;
            if postings != txn.postings.as_slice() {
                return Err(format!("{} settles with postings other than those applied", txn.id));
            }
        } else {
            if !txn.postings.is_empty() {
                return Err(format!("{} carries postings without settling", txn.id));
            }
            if self.open_batch.is_some() {
                return Err("open postings batch must be committed by its settlement".into());
            }
        }
        if existing.is_none() {
            self.idempotency.insert(txn.idempotency_key.clone(), txn.id.clone());
        }
        self.transactions.insert(txn.id.clone(), txn.clone());
        if txn.state == TxnState::Settled {
            self.consume_commit();
        }
        Ok(())
    }

    fn apply_money_order(&mut self, from: Option<MoneyOrderState>, order: &MoneyOrder) -> Result<(), String> {
        let existing = self.money_orders.get(&order.id);
        if existing.map(|o| o.state) != from {
            return Err(format!("{} is not in state {:?}", order.id, from));
        }
        match existing {
            None => {
                if order.state != MoneyOrderState::Issued {
                    return Err(format!("{} must start ISSUED", order.id));
                }
                let funded = self
                    .transactions
                    .get(&order.funding_txn)
                    .is_some_and(|t| t.is_settled() && t.amount == order.amount && t.resolved_sender == Some(order.owner));
                if !funded {
                    return Err(format!("{} has no settled funding transaction", order.id));
                }
                if self.open_batch.as_ref().is_some_and(|b| b.txn_id != order.funding_txn) {
                    return Err(format!("{} issued inside another batch", order.id));
                }
            }
            Some(prev) => {
                if !prev.state.can_move_to(order.state) {
                    return Err(format!("illegal money-order transition {:?} -> {:?}", prev.state, order.state));
                }
                if prev.amount != order.amount || prev.owner != order.owner || prev.funding_txn != order.funding_txn {
                    return Err(format!("immutable fields of {} changed", order.id));
                }
                if order.state.is_terminal() {
                    let expected = money_order_posting_id(&order.id, order.state);
                    let postings = self.check_batch_for(&expected)?;
                    if net_for_order(postings) != order.amount {
                        return Err(format!("{} settles the wrong amount", order.id));
                    }
                } else if self.open_batch.is_some() {
                    return Err("open postings batch must be committed by its settlement".into());
                }
            }
        }
        self.money_orders.insert(order.id.clone(), order.clone());
        if self.open_batch.is_some() {
            self.consume_commit();
        }
        Ok(())
    }
}

/// Transaction id carried by the postings of a money-order delivery or
/// return, e.g. `MO-00000001:DELIVERED`.
pub fn money_order_posting_id(order_id: &str, state: MoneyOrderState) -> String {
    let suffix = match state {
        MoneyOrderState::Issued => "ISSUED",
        MoneyOrderState::Dispatched => "DISPATCHED",
        MoneyOrderState::Delivered => "DELIVERED",
        MoneyOrderState::Returned => "RETURNED",
    };
    format!("{order_id}:{suffix}")
}

fn net_for_order(postings: &[Posting]) -> Money {
    postings
        .iter()
        .filter(|p| p.delta.is_positive())
        .fold(Money::ZERO, |acc, p| acc + p.delta)
}

/// Folds a complete event sequence into state.
pub fn rebuild_state<'a>(events: impl IntoIterator<Item = &'a LedgerEvent>) -> Result<State, CorruptLog> {
    let mut state = State::new();
    for event in events {
        state.apply(event)?;
    }
    if let Some(batch) = &state.open_batch {
        return Err(CorruptLog {
            seq: state.last_seq,
            reason: format!("postings for {} never committed", batch.txn_id),
        });
    }
    Ok(state)
}

/// Parses and folds log text. Every line must be a complete event.
pub fn rebuild_from_text(text: &str) -> Result<State, CorruptLog> {
    let mut events = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        let event = LedgerEvent::parse_line(line).map_err(|e| CorruptLog {
            seq: idx as u64 + 1,
            reason: e.to_string(),
        })?;
        events.push(event);
    }
    rebuild_state(&events)
}
