//! Double-entry account balances.
//!
//! Wallet accounts hold customer value and never go negative. System
//! accounts are the counterparties at the edges (outlet cash pools, the bank
//! settlement account, postal payables) and may go negative as they issue
//! value. Every applied batch of postings sums to zero, so the sum over all
//! accounts is always zero.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use chrono::{DateTime, FixedOffset, NaiveDate, Utc};
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::aadhaar::AadhaarId;
use crate::money::Money;

/// Outlet id of the postal counter that handles money orders.
pub const POSTAL_OUTLET: &str = "postal";

/// Asia/Kolkata calendar date of an instant (UTC+05:30, no DST).
pub fn business_day(at: DateTime<Utc>) -> NaiveDate {
    let ist = FixedOffset::east_opt(5 * 3600 + 30 * 60).expect("valid offset");
    at.with_timezone(&ist).date_naive()
}

/// Outlet ids are short tokens of ASCII letters, digits, `_` and `-`.
pub fn valid_outlet_id(id: &str) -> bool {
    !id.is_empty()
        && id.len() <= 32
        && id.bytes().all(|b| b.is_ascii_alphanumeric() || b == b'_' || b == b'-')
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum SystemAccount {
    CashPool(String),
    BankSettlement,
    PostalPayable,
}

impl fmt::Display for SystemAccount {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SystemAccount::CashPool(outlet) => write!(f, "CASH_POOL:{outlet}"),
            SystemAccount::BankSettlement => f.write_str("BANK_SETTLEMENT"),
            SystemAccount::PostalPayable => f.write_str("POSTAL_PAYABLE"),
        }
    }
}

impl FromStr for SystemAccount {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "BANK_SETTLEMENT" => Ok(SystemAccount::BankSettlement),
            "POSTAL_PAYABLE" => Ok(SystemAccount::PostalPayable),
            _ => match s.strip_prefix("CASH_POOL:") {
                Some(outlet) if valid_outlet_id(outlet) => Ok(SystemAccount::CashPool(outlet.to_string())),
                _ => Err(format!("unknown system account {s:?}")),
            },
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum AccountRef {
    Wallet(AadhaarId),
    System(SystemAccount),
}

impl fmt::Display for AccountRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AccountRef::Wallet(id) => write!(f, "WALLET:{id}"),
            AccountRef::System(s) => write!(f, "SYSTEM:{s}"),
        }
    }
}

impl FromStr for AccountRef {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if let Some(id) = s.strip_prefix("WALLET:") {
            return id.parse().map(AccountRef::Wallet).map_err(|e| format!("{e}"));
        }
        if let Some(sys) = s.strip_prefix("SYSTEM:") {
            return sys.parse().map(AccountRef::System);
        }
        Err(format!("unknown account {s:?}"))
    }
}

macro_rules! string_serde {
    ($ty:ty) => {
        impl Serialize for $ty {
            fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
                serializer.collect_str(self)
            }
        }

        impl<'de> Deserialize<'de> for $ty {
            fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
                let s = String::deserialize(deserializer)?;
                s.parse().map_err(serde::de::Error::custom)
            }
        }
    };
}

string_serde!(SystemAccount);
string_serde!(AccountRef);

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Posting {
    pub account: AccountRef,
    pub delta: Money,
    pub txn_id: String,
}

impl Posting {
    pub fn new(account: AccountRef, delta: Money, txn_id: &str) -> Self {
        Posting {
            account,
            delta,
            txn_id: txn_id.to_string(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum WalletStatus {
    Active,
    Frozen,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Wallet {
    pub owner: AadhaarId,
    pub balance: Money,
    pub status: WalletStatus,
    /// Business day that `day_debited` refers to.
    pub day: NaiveDate,
    pub day_debited: Money,
}

impl Wallet {
    /// Debits already made on `on`. Days before the tracked one are not
    /// retained, so they report the tracked day's total.
    pub fn debited_on(&self, on: NaiveDate) -> Money {
        if on > self.day {
            Money::ZERO
        } else {
            self.day_debited
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum LedgerError {
    #[error("wallet {0} already exists")]
    AlreadyExists(AadhaarId),
    #[error("no wallet for {0}")]
    UnknownWallet(AadhaarId),
    #[error("wallet {0} has insufficient funds")]
    InsufficientFunds(AadhaarId),
    #[error("wallet {0} is frozen")]
    FrozenWallet(AadhaarId),
    #[error("postings do not sum to zero")]
    UnbalancedPostings,
    #[error("posting amounts must be non-zero")]
    InvalidAmount,
    #[error("no postings")]
    EmptyPostings,
    #[error("postings reference more than one transaction")]
    MixedTransactions,
    #[error("balance overflow")]
    Overflow,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Ledger {
    wallets: BTreeMap<AadhaarId, Wallet>,
    system: BTreeMap<SystemAccount, Money>,
}

impl Ledger {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn open_wallet(&mut self, owner: AadhaarId, day: NaiveDate) -> Result<&Wallet, LedgerError> {
        if self.wallets.contains_key(&owner) {
            return Err(LedgerError::AlreadyExists(owner));
        }
        Ok(self.wallets.entry(owner).or_insert(Wallet {
            owner,
            balance: Money::ZERO,
            status: WalletStatus::Active,
            day,
            day_debited: Money::ZERO,
        }))
    }

    pub fn set_status(&mut self, owner: AadhaarId, status: WalletStatus) -> Result<(), LedgerError> {
        let wallet = self.wallets.get_mut(&owner).ok_or(LedgerError::UnknownWallet(owner))?;
        wallet.status = status;
        Ok(())
    }

    pub fn wallet(&self, owner: AadhaarId) -> Option<&Wallet> {
        self.wallets.get(&owner)
    }

    pub fn wallets(&self) -> impl Iterator<Item = &Wallet> {
        self.wallets.values()
    }

    pub fn has_wallet(&self, owner: AadhaarId) -> bool {
        self.wallets.contains_key(&owner)
    }

    pub fn balance(&self, owner: AadhaarId) -> Result<Money, LedgerError> {
        self.wallet(owner)
            .map(|w| w.balance)
            .ok_or(LedgerError::UnknownWallet(owner))
    }

    pub fn system_balance(&self, account: &SystemAccount) -> Money {
        self.system.get(account).copied().unwrap_or_default()
    }

    pub fn system_accounts(&self) -> impl Iterator<Item = (&SystemAccount, &Money)> {
        self.system.iter()
    }

    pub fn account_balance(&self, account: &AccountRef) -> Option<Money> {
        match account {
            AccountRef::Wallet(id) => self.wallet(*id).map(|w| w.balance),
            AccountRef::System(s) => Some(self.system_balance(s)),
        }
    }

    /// Sum over every wallet and system account. Zero whenever the ledger is
    /// consistent.
    pub fn total(&self) -> i128 {
        let wallets: i128 = self.wallets.values().map(|w| i128::from(w.balance.paise())).sum();
        let system: i128 = self.system.values().map(|m| i128::from(m.paise())).sum();
        wallets + system
    }

    /// `ceiling` minus what the wallet already spent on `on`, floored at zero.
    pub fn daily_headroom(&self, owner: AadhaarId, on: NaiveDate, ceiling: Money) -> Result<Money, LedgerError> {
        let wallet = self.wallet(owner).ok_or(LedgerError::UnknownWallet(owner))?;
        Ok(ceiling.checked_sub(wallet.debited_on(on)).filter(|m| m.paise() > 0).unwrap_or(Money::ZERO))
    }

    /// Validates a batch without touching state. Wallet debits require an
    /// active wallet; credits to a frozen wallet are accepted so refunds can
    /// land.
    pub fn check_postings(&self, postings: &[Posting]) -> Result<(), LedgerError> {
        let first = postings.first().ok_or(LedgerError::EmptyPostings)?;
        if postings.iter().any(|p| p.txn_id != first.txn_id) {
            return Err(LedgerError::MixedTransactions);
        }
        if postings.iter().any(|p| p.delta == Money::ZERO) {
            return Err(LedgerError::InvalidAmount);
        }
        let sum: i128 = postings.iter().map(|p| i128::from(p.delta.paise())).sum();
        if sum != 0 {
            return Err(LedgerError::UnbalancedPostings);
        }
        for (account, net) in net_deltas(postings) {
            match account {
                AccountRef::Wallet(owner) => {
                    let wallet = self.wallets.get(owner).ok_or(LedgerError::UnknownWallet(*owner))?;
                    let has_debit = postings
                        .iter()
                        .any(|p| p.account == *account && p.delta.paise() < 0);
                    if has_debit && wallet.status == WalletStatus::Frozen {
                        return Err(LedgerError::FrozenWallet(*owner));
                    }
                    let after = i128::from(wallet.balance.paise()) + net;
                    if after < 0 {
                        return Err(LedgerError::InsufficientFunds(*owner));
                    }
                    if after > i128::from(i64::MAX) {
                        return Err(LedgerError::Overflow);
                    }
                }
                AccountRef::System(s) => {
                    let after = i128::from(self.system_balance(s).paise()) + net;
                    if after > i128::from(i64::MAX) || after < i128::from(i64::MIN) {
                        return Err(LedgerError::Overflow);
                    }
                }
            }
        }
        Ok(())
    }

    /// Applies a batch atomically: either every delta lands or nothing
    /// changes. Wallet debits count toward the business day of `at`.
    pub fn apply_postings(&mut self, postings: &[Posting], at: DateTime<Utc>) -> Result<(), LedgerError> {
        self.check_postings(postings)?;
        let day = business_day(at);
        for (account, net) in net_deltas(postings) {
            let net = Money::from_paise(i64::try_from(net).map_err(|_| LedgerError::Overflow)?);
            match account {
                AccountRef::Wallet(owner) => {
                    let wallet = self.wallets.get_mut(owner).expect("checked above");
                    wallet.balance = wallet.balance + net;
                }
                AccountRef::System(s) => {
                    let entry = self.system.entry(s.clone()).or_default();
                    *entry = *entry + net;
                }
            }
        }
        for p in postings.iter().filter(|p| p.delta.paise() < 0) {
            if let AccountRef::Wallet(owner) = &p.account {
                let wallet = self.wallets.get_mut(owner).expect("checked above");
                if day > wallet.day {
                    wallet.day = day;
                    wallet.day_debited = Money::ZERO;
                }
                wallet.day_debited = wallet.day_debited.checked_add(-p.delta).unwrap_or(Money::from_paise(i64::MAX));
            }
        }
        Ok(())
    }
}

fn net_deltas(postings: &[Posting]) -> BTreeMap<&AccountRef, i128> {
    let mut net = BTreeMap::new();
    for p in postings {
        *net.entry(&p.account).or_insert(0i128) += i128::from(p.delta.paise());
    }
    net
}
