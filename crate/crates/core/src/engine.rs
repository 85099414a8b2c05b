//! The transfer engine.
//!
//! Every mutation goes through [`Engine::commit`], which folds events into
//! [`State`] and then appends them to the log as one batch. A transaction
//! walks RECEIVED -> RESOLVED -> AUTHORIZED -> SETTLED, one event per step;
//! the settling state change is written in the same batch as its postings.

use std::collections::BTreeSet;
use std::sync::Arc;

use chrono::{DateTime, Utc};
use thiserror::Error;

use crate::aadhaar::{validate_aadhaar, AadhaarError, AadhaarId};
use crate::auth::{
    authorize, AuthError, AuthEvidence, AuthPolicy, CredentialRecord, Decision, Denial, Enrollment, FactorKind,
    Template,
};
use crate::bank::{BankClient, BankTransfer};
use crate::clock::Clock;
use crate::directory::{normalize_address, normalize_alias, Alias, AliasKind, DirectoryError, Registration};
use crate::events::{
    truncate_time, AliasRegistered, AliasRemoved, CredentialEnrolled, EventPayload, LedgerEvent, MoneyOrderStateChanged,
    PostingsApplied, TxnStateChanged, WalletOpened, WalletStatusChanged,
};
use crate::ledger::{
    business_day, valid_outlet_id, AccountRef, LedgerError, Posting, SystemAccount, Wallet, WalletStatus,
    POSTAL_OUTLET,
};
use crate::money::Money;
use crate::state::{money_order_posting_id, rebuild_state, CorruptLog, State};
use crate::store::EventSink;
use crate::transfer::{
    Channel, MoneyOrder, MoneyOrderState, PartySelector, Receipt, ReceiptStatus, Receiver, RejectReason,
    Transaction, TransferIntent, TxnKind, TxnState,
};

#[derive(Debug, Error)]
pub enum EngineError {
    #[error(transparent)]
    Aadhaar(#[from] AadhaarError),
    #[error(transparent)]
    Ledger(#[from] LedgerError),
    #[error(transparent)]
    Directory(#[from] DirectoryError),
    #[error(transparent)]
    Auth(#[from] AuthError),
    #[error("no wallet for {0}")]
    UnknownWallet(AadhaarId),
    #[error("no money order {0}")]
    UnknownMoneyOrder(String),
    #[error("money order {id} cannot move from {from:?} to {to:?}")]
    IllegalTransition {
        id: String,
        from: MoneyOrderState,
        to: MoneyOrderState,
    },
    #[error("invalid outlet id {0:?}")]
    InvalidOutlet(String),
}

/// Inbound money order: cash sent by post, citing the receiver.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MoneyOrderIntake {
    pub sender_name: String,
    /// Normalized return address of the sender.
    pub sender_address: String,
    pub receiver: PartySelector,
    pub amount: Money,
    pub idempotency_key: String,
    pub received_at: DateTime<Utc>,
}

type Observer = Box<dyn FnMut(&State) + Send>;

pub struct Engine {
    state: State,
    sink: Box<dyn EventSink>,
    clock: Arc<dyn Clock>,
    policy: AuthPolicy,
    bank: Arc<dyn BankClient>,
    observer: Option<Observer>,
}

/// Where the credit side of a debit goes.
enum Credit {
    Wallet(PartySelector),
    System(SystemAccount),
    Postal(String),
}

struct Draft {
    kind: TxnKind,
    channel: Channel,
    key: Option<String>,
    sender: Option<PartySelector>,
    receiver: Option<Receiver>,
    outlet: Option<String>,
    amount: Money,
    received_at: DateTime<Utc>,
    presented: BTreeSet<FactorKind>,
    postal_address: Option<String>,
}

impl Draft {
    fn new(kind: TxnKind, channel: Channel, amount: Money, received_at: DateTime<Utc>) -> Self {
        Draft {
            kind,
            channel,
            key: None,
            sender: None,
            receiver: None,
            outlet: None,
            amount,
            received_at,
            presented: BTreeSet::new(),
            postal_address: None,
        }
    }
}

impl Engine {
    pub fn new(sink: Box<dyn EventSink>, clock: Arc<dyn Clock>, policy: AuthPolicy, bank: Arc<dyn BankClient>) -> Self {
        Engine {
            state: State::new(),
            sink,
            clock,
            policy,
            bank,
            observer: None,
        }
    }

    /// Rebuilds state from `events`, then appends new events to `sink`.
    pub fn from_events(
        events: &[LedgerEvent],
        sink: Box<dyn EventSink>,
        clock: Arc<dyn Clock>,
        policy: AuthPolicy,
        bank: Arc<dyn BankClient>,
    ) -> Result<Self, CorruptLog> {
        let state = rebuild_state(events)?;
        Ok(Engine::from_state(state, sink, clock, policy, bank))
    }

    pub fn from_state(
        state: State,
        sink: Box<dyn EventSink>,
        clock: Arc<dyn Clock>,
        policy: AuthPolicy,
        bank: Arc<dyn BankClient>,
    ) -> Self {
        let mut engine = Engine::new(sink, clock, policy, bank);
        engine.state = state;
        engine
    }

    /// Called with the state after every committed batch.
    pub fn set_observer(&mut self, observer: impl FnMut(&State) + Send + 'static) {
        self.observer = Some(Box::new(observer));
    }

    pub fn state(&self) -> &State {
        &self.state
    }

    pub fn policy(&self) -> &AuthPolicy {
        &self.policy
    }

    pub fn now(&self) -> DateTime<Utc> {
        truncate_time(self.clock.now())
    }

    /// Folds `payloads` into state, then writes them as one batch. A fold
    /// failure here means the engine let an invalid event through, and a
    /// write failure leaves memory ahead of the log; both are fatal and the
    /// service must be rebuilt from the log.
    fn commit(&mut self, at: DateTime<Utc>, payloads: Vec<EventPayload>) {
        let mut batch = String::new();
        for payload in payloads {
            let event = LedgerEvent {
                seq: self.state.last_seq() + 1,
                at,
                payload,
            };
            if let Err(e) = self.state.apply(&event) {
                panic!("engine produced an invalid event: {e}");
            }
            batch.push_str(&event.to_line());
            batch.push('\n');
        }
        if let Err(e) = self.sink.append(&batch) {
            panic!("event log append failed: {e}");
        }
        if let Some(observer) = self.observer.as_mut() {
            observer(&self.state);
        }
    }

    // ---- wallets, aliases, credentials ----

    pub fn open_wallet(&mut self, raw: &str) -> Result<Wallet, EngineError> {
        let owner = validate_aadhaar(raw)?;
        if self.state.has_wallet(owner) {
            return Err(LedgerError::AlreadyExists(owner).into());
        }
        let now = self.now();
        self.commit(now, vec![EventPayload::WalletOpened(WalletOpened { owner })]);
        Ok(self.wallet(owner)?.clone())
    }

    pub fn set_wallet_status(&mut self, owner: AadhaarId, status: WalletStatus) -> Result<Wallet, EngineError> {
        let current = self.wallet(owner)?.status;
        if current != status {
            let now = self.now();
            self.commit(
                now,
                vec![EventPayload::WalletStatusChanged(WalletStatusChanged { owner, status })],
            );
        }
        Ok(self.wallet(owner)?.clone())
    }

    pub fn wallet(&self, owner: AadhaarId) -> Result<&Wallet, EngineError> {
        self.state.ledger().wallet(owner).ok_or(EngineError::UnknownWallet(owner))
    }

    pub fn balance(&self, owner: AadhaarId) -> Result<Money, EngineError> {
        Ok(self.wallet(owner)?.balance)
    }

    pub fn daily_headroom(&self, owner: AadhaarId) -> Result<Money, EngineError> {
        let day = business_day(self.now());
        Ok(self.state.ledger().daily_headroom(owner, day, self.policy.daily_ceiling)?)
    }

    pub fn register_alias(&mut self, owner: AadhaarId, kind: AliasKind, raw: &str) -> Result<Alias, EngineError> {
        if !self.state.has_wallet(owner) {
            return Err(EngineError::UnknownWallet(owner));
        }
        let value = normalize_alias(kind, raw)?;
        let now = self.now();
        match self.state.directory().check_register(owner, kind, &value, now)? {
            Registration::Existing(alias) => Ok(alias),
            Registration::New(alias) => {
                self.commit(
                    now,
                    vec![EventPayload::AliasRegistered(AliasRegistered { alias: alias.clone() })],
                );
                Ok(alias)
            }
        }
    }

    /// Removes an alias held by `owner`.
    pub fn remove_alias(&mut self, owner: AadhaarId, kind: AliasKind, raw: &str) -> Result<Alias, EngineError> {
        let value = normalize_alias(kind, raw)?;
        let alias = match self.state.directory().get(kind, &value) {
            Some(a) if a.owner == owner => a.clone(),
            _ => return Err(DirectoryError::NotFound.into()),
        };
        let now = self.now();
        self.commit(now, vec![EventPayload::AliasRemoved(AliasRemoved { owner, kind, value })]);
        Ok(alias)
    }

    pub fn resolve_alias(&self, kind: AliasKind, raw: &str) -> Result<AadhaarId, EngineError> {
        Ok(self.state.directory().resolve(kind, raw)?)
    }

    pub fn enroll_credential(&mut self, owner: AadhaarId, enrollment: Enrollment) -> Result<CredentialRecord, EngineError> {
        if !self.state.has_wallet(owner) {
            return Err(EngineError::UnknownWallet(owner));
        }
        let secret = enrollment.into_secret()?;
        self.state.credentials().check_enroll(owner, &secret)?;
        let now = self.now();
        let record = CredentialRecord {
            id: format!("CRED-{:08}", self.state.credentials().len() + 1),
            owner,
            secret,
            enrolled_at: now,
        };
        self.commit(
            now,
            vec![EventPayload::CredentialEnrolled(CredentialEnrolled { record: record.clone() })],
        );
        Ok(record)
    }

    pub fn verify_evidence(&self, owner: AadhaarId, evidence: &AuthEvidence) -> BTreeSet<FactorKind> {
        self.state
            .credentials()
            .verify_evidence(owner, evidence, self.state.directory(), &self.policy)
    }

    /// Wallet named by `selector`. Biometric selectors carrying a raw
    /// template fall back to nearest-template search and resolve only when
    /// exactly one enrollment is within the Hamming threshold; card numbers
    /// fall back to enrolled cards.
    pub fn resolve_party(&self, selector: &PartySelector) -> Option<AadhaarId> {
        match selector {
            PartySelector::ByAadhaar { aadhaar } => self.state.has_wallet(*aadhaar).then_some(*aadhaar),
            PartySelector::ByAlias { kind, value } => {
                if let Ok(owner) = self.state.directory().resolve(*kind, value) {
                    return Some(owner);
                }
                match kind {
                    AliasKind::Fingerprint | AliasKind::Voice => {
                        let template = Template::from_hex(value).ok()?;
                        let factor = if *kind == AliasKind::Fingerprint {
                            FactorKind::Fingerprint
                        } else {
                            FactorKind::Voice
                        };
                        match self.identify(factor, &template).as_slice() {
                            [only] => Some(*only),
                            _ => None,
                        }
                    }
                    AliasKind::Card => {
                        let number = normalize_alias(AliasKind::Card, value).ok()?;
                        self.state.credentials().card_owner(&number)
                    }
                    _ => None,
                }
            }
        }
    }

    /// Owners whose enrolled template of `factor` is within the threshold.
    pub fn identify(&self, factor: FactorKind, sample: &Template) -> Vec<AadhaarId> {
        self.state
            .credentials()
            .identify(factor, sample, self.policy.biometric_hamming_max)
    }

    // ---- transaction plumbing ----

    fn start(&mut self, draft: Draft, at: DateTime<Utc>) -> Transaction {
        let id = format!("TXN-{:08}", self.state.transaction_count() + 1);
        let txn = Transaction {
            idempotency_key: draft.key.unwrap_or_else(|| format!("auto:{id}")),
            id,
            kind: draft.kind,
            channel: draft.channel,
            sender: draft.sender,
            receiver: draft.receiver,
            outlet: draft.outlet,
            amount: draft.amount,
            received_at: truncate_time(draft.received_at),
            updated_at: at,
            resolved_sender: None,
            resolved_receiver: None,
            factors_presented: draft.presented.into_iter().collect(),
            factors_satisfied: Vec::new(),
            postal_address: draft.postal_address,
            money_order: None,
            state: TxnState::Received,
            postings: Vec::new(),
        };
        self.commit(
            at,
            vec![EventPayload::TxnStateChanged(TxnStateChanged {
                from: None,
                txn: txn.clone(),
            })],
        );
        txn
    }

    fn advance(&mut self, txn: &mut Transaction, to: TxnState, at: DateTime<Utc>) {
        let from = txn.state;
        txn.state = to;
        txn.updated_at = at;
        self.commit(
            at,
            vec![EventPayload::TxnStateChanged(TxnStateChanged {
                from: Some(from),
                txn: txn.clone(),
            })],
        );
    }

    fn reject(&mut self, mut txn: Transaction, reason: RejectReason, at: DateTime<Utc>) -> Transaction {
        self.advance(&mut txn, TxnState::Rejected(reason), at);
        txn
    }

    /// Writes postings, the SETTLED change and any `trailing` commit events
    /// as one batch.
    fn settle(
        &mut self,
        mut txn: Transaction,
        postings: Vec<Posting>,
        trailing: Vec<EventPayload>,
        at: DateTime<Utc>,
    ) -> Transaction {
        let from = txn.state;
        txn.state = TxnState::Settled;
        txn.updated_at = at;
        txn.postings = postings.clone();
        let mut batch = vec![
            EventPayload::PostingsApplied(PostingsApplied {
                txn_id: txn.id.clone(),
                postings,
                commit_events: 1 + trailing.len() as u32,
            }),
            EventPayload::TxnStateChanged(TxnStateChanged {
                from: Some(from),
                txn: txn.clone(),
            }),
        ];
        batch.extend(trailing);
        self.commit(at, batch);
        txn
    }

    fn existing(&self, key: Option<&str>) -> Option<Transaction> {
        key.and_then(|k| self.state.by_idempotency_key(k)).cloned()
    }

    fn reject_reason_for(err: &LedgerError) -> RejectReason {
        match err {
            LedgerError::FrozenWallet(_) => RejectReason::FrozenWallet,
            LedgerError::UnknownWallet(_) => RejectReason::ReceiverNotFound,
            LedgerError::InvalidAmount => RejectReason::InvalidAmount,
            _ => RejectReason::InsufficientFunds,
        }
    }

    /// Shared debit path: resolve, authorize, check funds, optionally wait
    /// for the bank, settle.
    fn run_debit(
        &mut self,
        mut draft: Draft,
        sender: PartySelector,
        sender_missing: RejectReason,
        evidence: &AuthEvidence,
        credit: Credit,
    ) -> Result<Transaction, EngineError> {
        if let Some(prior) = self.existing(draft.key.as_deref()) {
            return Ok(prior);
        }
        let now = self.now();
        draft.presented = evidence.presented();
        draft.sender = Some(sender.clone());
        let mut txn = self.start(draft, now);
        if !txn.amount.is_positive() {
            return Ok(self.reject(txn, RejectReason::InvalidAmount, now));
        }
        let Some(sender_id) = self.resolve_party(&sender) else {
            return Ok(self.reject(txn, sender_missing, now));
        };
        txn.resolved_sender = Some(sender_id);
        let counter = match credit {
            Credit::Wallet(receiver) => {
                let Some(receiver_id) = self.resolve_party(&receiver) else {
                    return Ok(self.reject(txn, RejectReason::ReceiverNotFound, now));
                };
                if receiver_id == sender_id {
                    return Ok(self.reject(txn, RejectReason::SelfTransfer, now));
                }
                txn.resolved_receiver = Some(receiver_id);
                AccountRef::Wallet(receiver_id)
            }
            Credit::System(account) => AccountRef::System(account),
            Credit::Postal(raw) => {
                let Some(address) = normalize_address(&raw) else {
                    return Ok(self.reject(txn, RejectReason::Unnormalizable, now));
                };
                txn.postal_address = Some(address);
                AccountRef::System(SystemAccount::PostalPayable)
            }
        };
        self.advance(&mut txn, TxnState::Resolved, now);

        let decision = authorize(
            sender_id,
            txn.amount,
            evidence,
            &self.policy,
            self.state.credentials(),
            self.state.directory(),
            self.state.ledger(),
            business_day(now),
        )?;
        txn.factors_satisfied = decision.satisfied().iter().copied().collect();
        if let Decision::Rejected { reason, .. } = decision {
            let reason = match reason {
                Denial::InsufficientFactors => RejectReason::InsufficientFactors,
                Denial::CeilingExceeded => RejectReason::CeilingExceeded,
                Denial::FrozenWallet => RejectReason::FrozenWallet,
            };
            return Ok(self.reject(txn, reason, now));
        }
        self.advance(&mut txn, TxnState::Authorized, now);

        let postings = vec![
            Posting::new(AccountRef::Wallet(sender_id), -txn.amount, &txn.id),
            Posting::new(counter.clone(), txn.amount, &txn.id),
        ];
        if let Err(e) = self.state.ledger().check_postings(&postings) {
            return Ok(self.reject(txn, Self::reject_reason_for(&e), now));
        }
        if counter == AccountRef::System(SystemAccount::BankSettlement) {
            let req = BankTransfer {
                txn_id: txn.id.clone(),
                owner: sender_id,
                amount: txn.amount,
            };
            if self.bank.transfer(&req).is_err() {
                return Ok(self.reject(txn, RejectReason::BankUnavailable, now));
            }
        }
        let mut trailing = Vec::new();
        if txn.kind == TxnKind::MoneyOrderOut {
            let order = MoneyOrder {
                id: format!("MO-{:08}", self.state.money_order_count() + 1),
                owner: sender_id,
                destination: txn.postal_address.clone().unwrap_or_default(),
                amount: txn.amount,
                state: MoneyOrderState::Issued,
                funding_txn: txn.id.clone(),
                updated_at: now,
            };
            txn.money_order = Some(order.id.clone());
            trailing.push(EventPayload::MoneyOrderStateChanged(MoneyOrderStateChanged { from: None, order }));
        }
        Ok(self.settle(txn, postings, trailing, now))
    }

    /// Credit path for flows without a debited wallet.
    fn run_credit(
        &mut self,
        mut draft: Draft,
        receiver: PartySelector,
        receiver_missing: RejectReason,
        source: SystemAccount,
    ) -> Transaction {
        let now = self.now();
        draft.receiver = Some(Receiver::Party(receiver.clone()));
        let mut txn = self.start(draft, now);
        if !txn.amount.is_positive() {
            return self.reject(txn, RejectReason::InvalidAmount, now);
        }
        let Some(receiver_id) = self.resolve_party(&receiver) else {
            return self.reject(txn, receiver_missing, now);
        };
        txn.resolved_receiver = Some(receiver_id);
        self.advance(&mut txn, TxnState::Resolved, now);
        self.advance(&mut txn, TxnState::Authorized, now);
        let postings = vec![
            Posting::new(AccountRef::System(source), -txn.amount, &txn.id),
            Posting::new(AccountRef::Wallet(receiver_id), txn.amount, &txn.id),
        ];
        if let Err(e) = self.state.ledger().check_postings(&postings) {
            return self.reject(txn, Self::reject_reason_for(&e), now);
        }
        self.settle(txn, postings, Vec::new(), now)
    }

    // ---- public flows ----

    /// Runs a channel-independent instruction to a terminal state. A key
    /// seen before returns the earlier transaction untouched.
    pub fn submit_intent(&mut self, intent: TransferIntent) -> Result<Transaction, EngineError> {
        let (kind, credit, receiver) = match &intent.receiver {
            Receiver::Party(p) => (TxnKind::Transfer, Credit::Wallet(p.clone()), intent.receiver.clone()),
            Receiver::Postal { postal } => (TxnKind::MoneyOrderOut, Credit::Postal(postal.clone()), intent.receiver.clone()),
        };
        let mut draft = Draft::new(kind, intent.channel, intent.amount, intent.received_at);
        draft.key = Some(intent.idempotency_key.clone());
        draft.receiver = Some(receiver);
        self.run_debit(draft, intent.sender, RejectReason::SenderNotFound, &intent.evidence, credit)
    }

    fn check_outlet(outlet: &str) -> Result<(), EngineError> {
        if !valid_outlet_id(outlet) || outlet == POSTAL_OUTLET {
            return Err(EngineError::InvalidOutlet(outlet.to_string()));
        }
        Ok(())
    }

    /// Cash deposited at an outlet. No factors: the cash is the value.
    pub fn cash_in(
        &mut self,
        outlet: &str,
        customer: PartySelector,
        amount: Money,
        key: Option<String>,
    ) -> Result<Transaction, EngineError> {
        Self::check_outlet(outlet)?;
        if let Some(prior) = self.existing(key.as_deref()) {
            return Ok(prior);
        }
        let now = self.now();
        let mut draft = Draft::new(TxnKind::CashIn, Channel::Outlet, amount, now);
        draft.key = key;
        draft.outlet = Some(outlet.to_string());
        Ok(self.run_credit(
            draft,
            customer,
            RejectReason::CustomerNotFound,
            SystemAccount::CashPool(outlet.to_string()),
        ))
    }

    pub fn cash_out(
        &mut self,
        outlet: &str,
        customer: PartySelector,
        amount: Money,
        evidence: &AuthEvidence,
        key: Option<String>,
    ) -> Result<Transaction, EngineError> {
        Self::check_outlet(outlet)?;
        let now = self.now();
        let mut draft = Draft::new(TxnKind::CashOut, Channel::Outlet, amount, now);
        draft.key = key;
        draft.outlet = Some(outlet.to_string());
        self.run_debit(
            draft,
            customer,
            RejectReason::CustomerNotFound,
            evidence,
            Credit::System(SystemAccount::CashPool(outlet.to_string())),
        )
    }

    /// Wallet to bank account. Settles only after the bank acknowledges.
    pub fn bank_transfer_out(
        &mut self,
        customer: PartySelector,
        amount: Money,
        evidence: &AuthEvidence,
        key: Option<String>,
    ) -> Result<Transaction, EngineError> {
        let now = self.now();
        let mut draft = Draft::new(TxnKind::BankOut, Channel::Web, amount, now);
        draft.key = key;
        self.run_debit(
            draft,
            customer,
            RejectReason::CustomerNotFound,
            evidence,
            Credit::System(SystemAccount::BankSettlement),
        )
    }

    /// Debits the sender and issues a money order to `destination`. The
    /// order id is on the returned transaction.
    pub fn issue_money_order(
        &mut self,
        sender: PartySelector,
        destination: &str,
        amount: Money,
        evidence: &AuthEvidence,
        channel: Channel,
        key: Option<String>,
    ) -> Result<Transaction, EngineError> {
        let now = self.now();
        let mut draft = Draft::new(TxnKind::MoneyOrderOut, channel, amount, now);
        draft.key = key;
        draft.receiver = Some(Receiver::Postal {
            postal: destination.to_string(),
        });
        self.run_debit(
            draft,
            sender,
            RejectReason::SenderNotFound,
            evidence,
            Credit::Postal(destination.to_string()),
        )
    }

    /// Moves an outbound order along ISSUED -> DISPATCHED -> DELIVERED, or to
    /// RETURNED, which refunds the funding wallet. Repeating the current
    /// state is a no-op.
    pub fn advance_money_order(&mut self, id: &str, to: MoneyOrderState) -> Result<MoneyOrder, EngineError> {
        let order = self
            .state
            .money_order(id)
            .cloned()
            .ok_or_else(|| EngineError::UnknownMoneyOrder(id.to_string()))?;
        if order.state == to {
            return Ok(order);
        }
        if !order.state.can_move_to(to) {
            return Err(EngineError::IllegalTransition {
                id: id.to_string(),
                from: order.state,
                to,
            });
        }
        let now = self.now();
        let mut next = order.clone();
        next.state = to;
        next.updated_at = now;
        let change = EventPayload::MoneyOrderStateChanged(MoneyOrderStateChanged {
            from: Some(order.state),
            order: next.clone(),
        });
        let counter = match to {
            MoneyOrderState::Delivered => Some(AccountRef::System(SystemAccount::CashPool(POSTAL_OUTLET.to_string()))),
            MoneyOrderState::Returned => Some(AccountRef::Wallet(order.owner)),
            _ => None,
        };
        let batch = match counter {
            None => vec![change],
            Some(counter) => {
                let txn_id = money_order_posting_id(id, to);
                let postings = vec![
                    Posting::new(AccountRef::System(SystemAccount::PostalPayable), -order.amount, &txn_id),
                    Posting::new(counter, order.amount, &txn_id),
                ];
                self.state.ledger().check_postings(&postings)?;
                vec![
                    EventPayload::PostingsApplied(PostingsApplied {
                        txn_id,
                        postings,
                        commit_events: 1,
                    }),
                    change,
                ]
            }
        };
        self.commit(now, batch);
        Ok(next)
    }

    /// Credits the wallet cited on an inbound money order. When the receiver
    /// cannot be resolved the transaction is rejected and the cash is parked
    /// in the postal payable by a separate settled transaction.
    pub fn receive_money_order(&mut self, intake: &MoneyOrderIntake) -> (Transaction, Receipt) {
        if let Some(prior) = self.existing(Some(&intake.idempotency_key)) {
            let receipt = Self::receipt_for(&prior);
            return (prior, receipt);
        }
        let mut draft = Draft::new(TxnKind::MoneyOrderIn, Channel::MoneyOrder, intake.amount, intake.received_at);
        draft.key = Some(intake.idempotency_key.clone());
        draft.postal_address = Some(intake.sender_address.clone());
        let txn = self.run_credit(
            draft,
            intake.receiver.clone(),
            RejectReason::ReceiverNotFound,
            SystemAccount::CashPool(POSTAL_OUTLET.to_string()),
        );
        if txn.rejection() == Some(RejectReason::ReceiverNotFound) {
            self.park_money_order(intake);
        }
        let receipt = Self::receipt_for(&txn);
        (txn, receipt)
    }

    fn park_money_order(&mut self, intake: &MoneyOrderIntake) -> Transaction {
        let now = self.now();
        let mut draft = Draft::new(TxnKind::MoneyOrderPark, Channel::MoneyOrder, intake.amount, intake.received_at);
        draft.key = Some(format!("{}:park", intake.idempotency_key));
        draft.postal_address = Some(intake.sender_address.clone());
        draft.receiver = Some(Receiver::Party(intake.receiver.clone()));
        let mut txn = self.start(draft, now);
        self.advance(&mut txn, TxnState::Resolved, now);
        self.advance(&mut txn, TxnState::Authorized, now);
        let postings = vec![
            Posting::new(
                AccountRef::System(SystemAccount::CashPool(POSTAL_OUTLET.to_string())),
                -txn.amount,
                &txn.id,
            ),
            Posting::new(AccountRef::System(SystemAccount::PostalPayable), txn.amount, &txn.id),
        ];
        self.settle(txn, postings, Vec::new(), now)
    }

    /// Receipt mailed to the sender of an inbound money order.
    pub fn receipt_for(txn: &Transaction) -> Receipt {
        Receipt {
            receipt_id: format!("RCPT-{}", txn.id),
            txn_id: txn.id.clone(),
            status: if txn.is_settled() {
                ReceiptStatus::Success
            } else {
                ReceiptStatus::Failed
            },
            amount: txn.amount,
            destination: txn.postal_address.clone().unwrap_or_default(),
            at: txn.updated_at,
        }
    }

    /// Finishes transactions left non-terminal by a restart. Bank transfers
    /// the bank already acknowledged are settled; everything else is
    /// rejected as interrupted. None of them had postings.
    pub fn recover_pending(&mut self) -> Vec<Transaction> {
        let pending: Vec<Transaction> = self
            .state
            .transactions()
            .filter(|t| !t.state.is_terminal())
            .cloned()
            .collect();
        let now = self.now();
        let mut out = Vec::new();
        for txn in pending {
            let acked = txn.kind == TxnKind::BankOut
                && txn.state == TxnState::Authorized
                && self.bank.status(&txn.id).is_some();
            let postings = txn.resolved_sender.map(|sender| {
                vec![
                    Posting::new(AccountRef::Wallet(sender), -txn.amount, &txn.id),
                    Posting::new(AccountRef::System(SystemAccount::BankSettlement), txn.amount, &txn.id),
                ]
            });
            let done = match postings {
                Some(p) if acked && self.state.ledger().check_postings(&p).is_ok() => {
                    self.settle(txn, p, Vec::new(), now)
                }
                _ => self.reject(txn, RejectReason::Interrupted, now),
            };
            out.push(done);
        }
        out
    }

    pub fn transaction(&self, id: &str) -> Option<&Transaction> {
        self.state.transaction(id)
    }

    pub fn money_order(&self, id: &str) -> Option<&MoneyOrder> {
        self.state.money_order(id)
    }
}
