//! Inbound money-order forms: UTF-8 `key=value` lines.
//!
//! ```text
//! sender_name=Ramesh Kumar
//! sender_address=House 4, Near Temple, Rampur 263001
//! receiver_phone=9876543210
//! amount=500
//! enclosed_cash=500
//! reference=MO/2026/0042        (optional)
//! ```
//!
//! Blank lines and lines starting with `#` are skipped. Keys are
//! case-insensitive; values are trimmed.

use chrono::{DateTime, Utc};
use thiserror::Error;

use crate::directory::{normalize_address, normalize_alias, AliasKind};
use crate::engine::MoneyOrderIntake;
use crate::money::{parse_rupees, AmountError, Money};
use crate::transfer::PartySelector;

use super::message_key;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum FormError {
    #[error("line {line}: expected key=value")]
    Malformed { line: usize },
    #[error("line {line}: unknown field {key:?}")]
    UnknownField { line: usize, key: String },
    #[error("line {line}: {key} given twice")]
    DuplicateField { line: usize, key: &'static str },
    #[error("missing field {0}")]
    MissingField(&'static str),
    #[error("{field}: {error}")]
    BadAmount { field: &'static str, error: AmountError },
    #[error("{0} is not usable")]
    BadValue(&'static str),
    #[error("enclosed cash {enclosed} does not match stated amount {stated}")]
    AmountMismatch { stated: Money, enclosed: Money },
}

const FIELDS: [&str; 6] = [
    "sender_name",
    "sender_address",
    "receiver_phone",
    "amount",
    "enclosed_cash",
    "reference",
];

/// Raw field values of a form, before validation.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct MoneyOrderForm {
    pub sender_name: String,
    pub sender_address: String,
    pub receiver_phone: String,
    pub amount: String,
    pub enclosed_cash: String,
    pub reference: Option<String>,
}

impl MoneyOrderForm {
    pub fn parse(text: &str) -> Result<MoneyOrderForm, FormError> {
        let mut values: [Option<String>; 6] = Default::default();
        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            let trimmed = raw.trim();
            if trimmed.is_empty() || trimmed.starts_with('#') {
                continue;
            }
            let (key, value) = trimmed.split_once('=').ok_or(FormError::Malformed { line })?;
            let key = key.trim().to_ascii_lowercase();
            let slot = FIELDS.iter().position(|f| *f == key).ok_or(FormError::UnknownField {
                line,
                key: key.clone(),
            })?;
            if values[slot].is_some() {
                return Err(FormError::DuplicateField { line, key: FIELDS[slot] });
            }
            values[slot] = Some(value.trim().to_string());
        }
        let [name, address, phone, amount, cash, reference] = values;
        let need = |v: Option<String>, field: &'static str| v.filter(|s| !s.is_empty()).ok_or(FormError::MissingField(field));
        Ok(MoneyOrderForm {
            sender_name: need(name, "sender_name")?,
            sender_address: need(address, "sender_address")?,
            receiver_phone: need(phone, "receiver_phone")?,
            amount: need(amount, "amount")?,
            enclosed_cash: need(cash, "enclosed_cash")?,
            reference: reference.filter(|s| !s.is_empty()),
        })
    }

    pub fn render(&self) -> String {
        let mut out = format!(
            "sender_name={}\nsender_address={}\nreceiver_phone={}\namount={}\nenclosed_cash={}\n",
            self.sender_name, self.sender_address, self.receiver_phone, self.amount, self.enclosed_cash
        );
        if let Some(r) = &self.reference {
            out.push_str(&format!("reference={r}\n"));
        }
        out
    }

    /// Normalized return address, if the form carries a usable one. Lets a
    /// failure receipt be mailed even when the rest of the form is bad.
    pub fn return_address(text: &str) -> Option<String> {
        text.lines()
            .filter_map(|l| l.trim().split_once('='))
            .find(|(k, _)| k.trim().eq_ignore_ascii_case("sender_address"))
            .and_then(|(_, v)| normalize_address(v))
    }

    /// Validates the form. Enclosed cash must equal the stated amount. The
    /// idempotency key covers every normalized field, so the same form
    /// presented twice is one remittance.
    pub fn into_intake(self, received_at: DateTime<Utc>) -> Result<MoneyOrderIntake, FormError> {
        let amount = parse_rupees(&self.amount).map_err(|error| FormError::BadAmount { field: "amount", error })?;
        let enclosed = parse_rupees(&self.enclosed_cash).map_err(|error| FormError::BadAmount {
            field: "enclosed_cash",
            error,
        })?;
        if amount != enclosed {
            return Err(FormError::AmountMismatch { stated: amount, enclosed });
        }
        let address = normalize_address(&self.sender_address).ok_or(FormError::BadValue("sender_address"))?;
        let phone = normalize_alias(AliasKind::Phone, &self.receiver_phone).map_err(|_| FormError::BadValue("receiver_phone"))?;
        let name = self.sender_name.split_whitespace().collect::<Vec<_>>().join(" ");
        let paise = amount.paise().to_string();
        let reference = self.reference.unwrap_or_default();
        let key = message_key(
            "mo",
            &[
                name.as_bytes(),
                address.as_bytes(),
                phone.as_bytes(),
                paise.as_bytes(),
                reference.as_bytes(),
            ],
        );
        Ok(MoneyOrderIntake {
            sender_name: name,
            sender_address: address,
            receiver: PartySelector::alias(AliasKind::Phone, phone),
            amount,
            idempotency_key: key,
            received_at,
        })
    }
}

/// Parses and validates a form in one step.
pub fn intake_money_order_form(text: &str, received_at: DateTime<Utc>) -> Result<MoneyOrderIntake, FormError> {
    MoneyOrderForm::parse(text)?.into_intake(received_at)
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::TimeZone;
    use proptest::prelude::*;

    fn t0() -> DateTime<Utc> {
        Utc.with_ymd_and_hms(2026, 3, 1, 6, 0, 0).unwrap()
    }

    const FORM: &str = "sender_name=Ramesh  Kumar\nsender_address=House 4, Rampur\n\
                        receiver_phone=98765 43210\namount=500\nenclosed_cash=500.00\n";

    #[test]
    fn complete_form() {
        let i = intake_money_order_form(FORM, t0()).unwrap();
        assert_eq!(i.receiver, PartySelector::alias(AliasKind::Phone, "919876543210"));
        assert_eq!(i.amount, Money::from_rupees(500));
        assert_eq!(i.sender_address, "HOUSE 4 RAMPUR");
        assert_eq!(i.sender_name, "Ramesh Kumar");
    }

    #[test]
    fn cash_must_match() {
        let form = FORM.replace("enclosed_cash=500.00", "enclosed_cash=400");
        assert_eq!(
            intake_money_order_form(&form, t0()),
            Err(FormError::AmountMismatch {
                stated: Money::from_rupees(500),
                enclosed: Money::from_rupees(400)
            })
        );
        assert_eq!(MoneyOrderForm::return_address(&form).as_deref(), Some("HOUSE 4 RAMPUR"));
    }

    #[test]
    fn field_errors() {
        let missing = FORM.replace("amount=500\n", "");
        assert_eq!(intake_money_order_form(&missing, t0()), Err(FormError::MissingField("amount")));
        let extra = format!("{FORM}colour=red\n");
        assert!(matches!(
            intake_money_order_form(&extra, t0()),
            Err(FormError::UnknownField { line: 6, .. })
        ));
        let twice = format!("{FORM}amount=5\n");
        assert!(matches!(
            intake_money_order_form(&twice, t0()),
            Err(FormError::DuplicateField { key: "amount", .. })
        ));
        assert_eq!(
            intake_money_order_form("# header\n\nnonsense", t0()),
            Err(FormError::Malformed { line: 3 })
        );
    }

    #[test]
    fn same_form_same_key() {
        let a = intake_money_order_form(FORM, t0()).unwrap();
        let b = intake_money_order_form(&FORM.replace("Ramesh  Kumar", "Ramesh Kumar"), t0()).unwrap();
        let c = intake_money_order_form(&format!("{FORM}reference=MO-7\n"), t0()).unwrap();
        assert_eq!(a.idempotency_key, b.idempotency_key);
        assert_ne!(a.idempotency_key, c.idempotency_key);
    }

    proptest! {
        #[test]
        fn parser_is_total(text in "\\PC{0,120}") {
            let _ = intake_money_order_form(&text, t0());
        }

        #[test]
        fn render_parse_round_trip(
            name in "[A-Za-z][A-Za-z ]{0,20}[A-Za-z]",
            address in "[A-Za-z0-9][A-Za-z0-9 ,/]{0,30}[A-Za-z0-9]",
            phone in "[6-9][0-9]{9}",
            amount in "[1-9][0-9]{0,5}",
            reference in proptest::option::of("[A-Z0-9/-]{1,10}"),
        ) {
            let form = MoneyOrderForm {
                sender_name: name,
                sender_address: address,
                receiver_phone: phone,
                enclosed_cash: amount.clone(),
                amount,
                reference,
            };
            prop_assert_eq!(MoneyOrderForm::parse(&form.render()), Ok(form));
        }
    }
}
