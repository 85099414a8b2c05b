mod support;

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::sync::Arc;

use ups_core::bank::{StubBank, StubMode};
use ups_core::clock::ManualClock;
use ups_core::state::rebuild_from_text;
use ups_core::store::{durable_prefix, MemoryLog};
use ups_core::{
    AuthEvidence, AuthPolicy, AuthProof, Engine, Enrollment, Money, PartySelector, RejectReason, TxnKind, TxnState,
};

use support::*;

const OWNER: &str = "234567890124";

fn engine(log: &MemoryLog, bank: Arc<StubBank>) -> Engine {
    let events = durable_prefix(log.contents().as_bytes()).unwrap().events;
    Engine::from_events(
        &events,
        Box::new(log.clone()),
        Arc::new(ManualClock::new(t0())),
        AuthPolicy::default(),
        bank,
    )
    .unwrap()
}

fn funded(log: &MemoryLog, bank: Arc<StubBank>) {
    let mut e = engine(log, bank);
    let w = e.open_wallet(OWNER).unwrap();
    e.enroll_credential(w.owner, Enrollment::Password { password: "pw".into() }).unwrap();
    e.cash_in("o1", PartySelector::aadhaar(w.owner), Money::from_rupees(500), None).unwrap();
}

fn pw() -> AuthEvidence {
    AuthEvidence::single(AuthProof::Password("pw".into()))
}

fn crash_after_bank_accepts(log: &MemoryLog, bank: &Arc<StubBank>) {
    bank.set_before_ack(|_| panic!("power cut"));
    let mut e = engine(log, bank.clone());
    let owner = OWNER.parse().unwrap();
    let hook = std::panic::take_hook();
    std::panic::set_hook(Box::new(|_| {}));
    let r = catch_unwind(AssertUnwindSafe(|| {
        e.bank_transfer_out(PartySelector::aadhaar(owner), Money::from_rupees(200), &pw(), Some("bt-1".into()))
    }));
    std::panic::set_hook(hook);
    assert!(r.is_err());
}

#[test]
fn crash_between_bank_accept_and_settle_is_never_half_settled() {
    let log = MemoryLog::new();
    let bank = Arc::new(StubBank::new(StubMode::Ack));
    funded(&log, bank.clone());
    crash_after_bank_accepts(&log, &bank);

    let state = rebuild_from_text(&log.contents()).unwrap();
    let txn = state.transactions().find(|t| t.kind == TxnKind::BankOut).unwrap();
    assert_eq!(txn.state, TxnState::Authorized);
    assert!(txn.postings.is_empty());
    assert_eq!(state.ledger().balance(OWNER.parse().unwrap()).unwrap(), Money::from_rupees(500));
    assert_eq!(state.ledger().total(), 0);
}

#[test]
fn restart_settles_what_the_bank_acknowledged_exactly_once() {
    let log = MemoryLog::new();
    let bank = Arc::new(StubBank::new(StubMode::Ack));
    funded(&log, bank.clone());
    crash_after_bank_accepts(&log, &bank);

    let fresh_bank = Arc::new(StubBank::new(StubMode::Ack));
    // The bank's own record survives the restart; ours is the same bank.
    let mut e = engine(&log, bank.clone());
    let recovered = e.recover_pending();
    assert_eq!(recovered.len(), 1);
    assert_eq!(recovered[0].state, TxnState::Settled);
    let owner = OWNER.parse().unwrap();
    assert_eq!(e.balance(owner).unwrap(), Money::from_rupees(300));
    assert_eq!(bank.acknowledged().len(), 1);

    // Retrying the request returns the settled transaction.
    let again = e
        .bank_transfer_out(PartySelector::aadhaar(owner), Money::from_rupees(200), &pw(), Some("bt-1".into()))
        .unwrap();
    assert!(again.is_settled());
    assert_eq!(e.balance(owner).unwrap(), Money::from_rupees(300));
    assert!(e.recover_pending().is_empty());
    assert!(fresh_bank.acknowledged().is_empty());

    let rebuilt = rebuild_from_text(&log.contents()).unwrap();
    assert_eq!(rebuilt.snapshot(), e.state().snapshot());
}

#[test]
fn restart_without_bank_record_rejects_as_interrupted() {
    let log = MemoryLog::new();
    let bank = Arc::new(StubBank::new(StubMode::Ack));
    funded(&log, bank.clone());
    crash_after_bank_accepts(&log, &bank);

    let mut e = engine(&log, Arc::new(StubBank::new(StubMode::Ack)));
    let recovered = e.recover_pending();
    assert_eq!(recovered[0].rejection(), Some(RejectReason::Interrupted));
    assert_eq!(e.balance(OWNER.parse().unwrap()).unwrap(), Money::from_rupees(500));
}

#[test]
fn torn_tail_is_dropped_and_the_rest_survives() {
    let mut h = Harness::new(|_| {});
    let members = population(2, 3);
    for req in setup_requests(&members) {
        assert!(h.call(&req).status < 300);
    }
    let before = h.snapshot();
    let mut bytes = std::fs::read(h.log_path()).unwrap();
    h.kill();
    bytes.extend_from_slice(b"{\"seq\":999,\"at\":\"2026-03-0");
    std::fs::write(h.log_path(), &bytes).unwrap();
    h.restart();
    assert_eq!(h.gw().startup_report().discarded_bytes, 26);
    assert_eq!(h.snapshot(), before);
    assert_eq!(std::fs::read(h.log_path()).unwrap().len(), bytes.len() - 26);
}

#[test]
fn corruption_before_the_tail_refuses_to_start() {
    let mut h = Harness::new(|_| {});
    for req in setup_requests(&population(2, 4)) {
        assert!(h.call(&req).status < 300);
    }
    h.kill();
    let text = std::fs::read_to_string(h.log_path()).unwrap();
    let mut lines: Vec<&str> = text.lines().collect();
    lines[1] = "not an event";
    std::fs::write(h.log_path(), lines.join("\n") + "\n").unwrap();
    let reopened = ups_core::gateway::Gateway::open_with(&h.config, h.clock.clone(), h.bank.clone());
    assert!(reopened.is_err());
}
