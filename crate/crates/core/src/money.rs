use std::fmt;
use std::ops::{Add, Neg, Sub};

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// An amount in Indian paise (100 paise = 1 rupee).
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Money(i64);

impl Money {
    pub const ZERO: Money = Money(0);

    pub const fn from_paise(paise: i64) -> Self {
        Money(paise)
    }

    pub const fn from_rupees(rupees: i64) -> Self {
        Money(rupees * 100)
    }

    pub const fn paise(self) -> i64 {
        self.0
    }

    pub const fn is_positive(self) -> bool {
        self.0 > 0
    }

    pub fn checked_add(self, other: Money) -> Option<Money> {
        self.0.checked_add(other.0).map(Money)
    }

    pub fn checked_sub(self, other: Money) -> Option<Money> {
        self.0.checked_sub(other.0).map(Money)
    }

    /// Renders as rupees with exactly two decimals, e.g. `-12.05`.
    pub fn to_rupees_string(self) -> String {
        let sign = if self.0 < 0 { "-" } else { "" };
        let abs = self.0.unsigned_abs();
        format!("{sign}{}.{:02}", abs / 100, abs % 100)
    }
}

impl Add for Money {
    type Output = Money;
    fn add(self, rhs: Money) -> Money {
        Money(self.0 + rhs.0)
    }
}

impl Sub for Money {
    type Output = Money;
    fn sub(self, rhs: Money) -> Money {
        Money(self.0 - rhs.0)
    }
}

impl Neg for Money {
    type Output = Money;
    fn neg(self) -> Money {
        Money(-self.0)
    }
}

impl fmt::Display for Money {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "₹{}", self.to_rupees_string())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
pub enum AmountError {
    #[error("not a number")]
    Malformed,
    #[error("amount must be greater than zero")]
    Zero,
    #[error("amount must not be negative")]
    Negative,
    #[error("amounts take either no decimals or exactly two")]
    BadDecimals,
    #[error("amount too large")]
    Overflow,
}

/// Parses a rupee amount of the form `digits[.dd]` into paise.
///
/// Anything that looks numeric (digits, dots, a leading sign) but breaks the
/// form is reported as a specific amount error; other text is `Malformed`.
pub fn parse_rupees(text: &str) -> Result<Money, AmountError> {
    let looks_numeric = !text.is_empty()
        && text
            .chars()
            .all(|c| c.is_ascii_digit() || c == '.' || c == '-' || c == '+')
        && text.chars().any(|c| c.is_ascii_digit());
    if !looks_numeric {
        return Err(AmountError::Malformed);
    }
    let unsigned = match text.as_bytes()[0] {
        b'-' => return Err(AmountError::Negative),
        b'+' => return Err(AmountError::Malformed),
        _ => text,
    };
    if unsigned.contains(['-', '+']) {
        return Err(AmountError::Malformed);
    }
    let (whole, frac) = match unsigned.split_once('.') {
        None => (unsigned, None),
        Some((w, f)) => (w, Some(f)),
    };
    if whole.is_empty() {
        return Err(AmountError::Malformed);
    }
    let frac_paise = match frac {
        None => 0,
        Some(f) if f.contains('.') => return Err(AmountError::Malformed),
        Some(f) if f.len() != 2 => return Err(AmountError::BadDecimals),
        Some(f) => f.parse::<i64>().map_err(|_| AmountError::Malformed)?,
    };
    let rupees: i64 = whole.parse().map_err(|_| AmountError::Overflow)?;
    let paise = rupees
        .checked_mul(100)
        .and_then(|p| p.checked_add(frac_paise))
        .ok_or(AmountError::Overflow)?;
    if paise == 0 {
        return Err(AmountError::Zero);
    }
    Ok(Money(paise))
}

/// Inverse of [`parse_rupees`] for positive amounts; whole rupees render
/// without decimals.
pub fn render_rupees(amount: Money) -> String {
    let p = amount.paise();
    if p % 100 == 0 {
        (p / 100).to_string()
    } else {
        amount.to_rupees_string()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn parses_whole_and_two_decimal_amounts() {
        assert_eq!(parse_rupees("500"), Ok(Money::from_paise(50_000)));
        assert_eq!(parse_rupees("10.50"), Ok(Money::from_paise(1_050)));
        assert_eq!(parse_rupees("0.01"), Ok(Money::from_paise(1)));
        assert_eq!(parse_rupees("007"), Ok(Money::from_paise(700)));
    }

    #[test]
    fn rejects_bad_amounts() {
        assert_eq!(parse_rupees("10.5"), Err(AmountError::BadDecimals));
        assert_eq!(parse_rupees("10.505"), Err(AmountError::BadDecimals));
        assert_eq!(parse_rupees("0"), Err(AmountError::Zero));
        assert_eq!(parse_rupees("0.00"), Err(AmountError::Zero));
        assert_eq!(parse_rupees("-5"), Err(AmountError::Negative));
        assert_eq!(parse_rupees("99999999999999999999"), Err(AmountError::Overflow));
        assert_eq!(parse_rupees("abc"), Err(AmountError::Malformed));
        assert_eq!(parse_rupees(".50"), Err(AmountError::Malformed));
        assert_eq!(parse_rupees("1.2.3"), Err(AmountError::Malformed));
        assert_eq!(parse_rupees(""), Err(AmountError::Malformed));
    }

    #[test]
    fn display() {
        assert_eq!(Money::from_paise(-1205).to_rupees_string(), "-12.05");
        assert_eq!(Money::from_paise(5).to_string(), "₹0.05");
    }

    proptest! {
        #[test]
        fn render_parse_round_trip(paise in 1i64..=i64::MAX / 1000) {
            let m = Money::from_paise(paise);
            prop_assert_eq!(parse_rupees(&render_rupees(m)), Ok(m));
        }
    }
}
