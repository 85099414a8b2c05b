//! Fixtures shared by the benchmarks.

use std::sync::Arc;

use chrono::{TimeZone, Utc};
use ups_core::bank::{StubBank, StubMode};
use ups_core::channels::pos::{PosFrame, PosPayload};
use ups_core::clock::ManualClock;
use ups_core::store::NullLog;
use ups_core::{AuthPolicy, Engine, Enrollment, Money, PartySelector};

pub const SENDER: &str = "234567890124";
pub const RECEIVER: &str = "345678901238";

pub fn card_frame() -> Vec<u8> {
    PosFrame {
        terminal_id: "SHOP0001".parse().expect("terminal id"),
        amount: 12_550,
        payload: PosPayload::CardPay {
            card: "4111111111111111".into(),
            pin: "1234".into(),
        },
    }
    .encode()
    .expect("frame encodes")
}

/// An engine with a funded sender holding a password, and a receiver with a
/// phone alias. Events go nowhere.
pub fn engine() -> Engine {
    let clock = Arc::new(ManualClock::new(Utc.with_ymd_and_hms(2026, 3, 2, 4, 30, 0).unwrap()));
    let mut e = Engine::new(
        Box::new(NullLog),
        clock,
        AuthPolicy {
            daily_ceiling: Money::from_rupees(100_000_000),
            ..AuthPolicy::default()
        },
        Arc::new(StubBank::new(StubMode::Ack)),
    );
    let s = e.open_wallet(SENDER).expect("sender").owner;
    let r = e.open_wallet(RECEIVER).expect("receiver").owner;
    e.enroll_credential(s, Enrollment::Password { password: "pw".into() }).expect("password");
    e.register_alias(r, ups_core::AliasKind::Phone, "9123456780").expect("alias");
    e.cash_in("o1", PartySelector::aadhaar(s), Money::from_rupees(10_000_000), None)
        .expect("funding");
    e
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fixtures_are_usable() {
        assert!(PosFrame::decode(&card_frame()).is_ok());
        let e = engine();
        assert_eq!(e.balance(SENDER.parse().unwrap()).unwrap(), Money::from_rupees(10_000_000));
    }
}
