//! Bank rail stub.
//!
//! The real rail acknowledges transfers asynchronously. [`StubBank`] mimics
//! that with a worker thread that answers after a configurable delay; the
//! caller waits up to a timeout.

use std::collections::BTreeMap;
use std::sync::mpsc;
use std::sync::{Arc, Mutex};
use std::thread;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::aadhaar::AadhaarId;
use crate::money::Money;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BankTransfer {
    pub txn_id: String,
    pub owner: AadhaarId,
    pub amount: Money,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BankAck {
    pub txn_id: String,
    pub bank_ref: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Error)]
pub enum BankError {
    #[error("bank declined or unreachable")]
    Unavailable,
    #[error("no acknowledgement within the timeout")]
    Timeout,
}

pub trait BankClient: Send + Sync {
    /// Submits a transfer and blocks until it is acknowledged or fails.
    fn transfer(&self, req: &BankTransfer) -> Result<BankAck, BankError>;

    /// Acknowledgement previously given for `txn_id`, if any. Used to finish
    /// transfers interrupted by a restart.
    fn status(&self, txn_id: &str) -> Option<BankAck>;
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StubMode {
    Ack,
    Fail,
    /// Never answers; the caller times out.
    Silent,
}

type Hook = Box<dyn Fn(&BankTransfer) + Send + Sync>;

pub struct StubBank {
    mode: Mutex<StubMode>,
    delay: Duration,
    timeout: Duration,
    acked: Arc<Mutex<BTreeMap<String, BankAck>>>,
    before_ack: Mutex<Option<Hook>>,
}

impl StubBank {
    pub fn new(mode: StubMode) -> Self {
        StubBank {
            mode: Mutex::new(mode),
            delay: Duration::ZERO,
            timeout: Duration::from_secs(2),
            acked: Arc::default(),
            before_ack: Mutex::new(None),
        }
    }

    pub fn with_timing(mut self, delay: Duration, timeout: Duration) -> Self {
        self.delay = delay;
        self.timeout = timeout;
        self
    }

    pub fn set_mode(&self, mode: StubMode) {
        *self.mode.lock().expect("mode lock") = mode;
    }

    /// Runs `hook` after the bank has accepted a transfer but before the
    /// caller sees the acknowledgement.
    pub fn set_before_ack(&self, hook: impl Fn(&BankTransfer) + Send + Sync + 'static) {
        *self.before_ack.lock().expect("hook lock") = Some(Box::new(hook));
    }

    pub fn acknowledged(&self) -> Vec<BankAck> {
        self.acked.lock().expect("ack lock").values().cloned().collect()
    }
}

impl BankClient for StubBank {
    fn transfer(&self, req: &BankTransfer) -> Result<BankAck, BankError> {
        let mode = *self.mode.lock().expect("mode lock");
        if let Some(ack) = self.status(&req.txn_id) {
            return Ok(ack);
        }
        let (tx, rx) = mpsc::channel();
        let delay = self.delay;
        let acked = Arc::clone(&self.acked);
        let req_owned = req.clone();
        thread::spawn(move || {
            thread::sleep(delay);
            let reply = match mode {
                StubMode::Ack => {
                    let ack = BankAck {
                        txn_id: req_owned.txn_id.clone(),
                        bank_ref: format!("BANK-{}", req_owned.txn_id),
                    };
                    acked.lock().expect("ack lock").insert(ack.txn_id.clone(), ack.clone());
                    Ok(ack)
                }
                StubMode::Fail => Err(BankError::Unavailable),
                StubMode::Silent => return,
            };
            let _ = tx.send(reply);
        });
        let reply = rx.recv_timeout(self.timeout).map_err(|_| BankError::Timeout)?;
        if reply.is_ok() {
            if let Some(hook) = self.before_ack.lock().expect("hook lock").as_ref() {
                hook(req);
            }
        }
        reply
    }

    fn status(&self, txn_id: &str) -> Option<BankAck> {
        self.acked.lock().expect("ack lock").get(txn_id).cloned()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn req() -> BankTransfer {
        BankTransfer {
            txn_id: "TXN-1".into(),
            owner: "234567890124".parse().unwrap(),
            amount: Money::from_paise(100),
        }
    }

    #[test]
    fn ack_is_remembered() {
        let bank = StubBank::new(StubMode::Ack).with_timing(Duration::from_millis(5), Duration::from_secs(1));
        let ack = bank.transfer(&req()).unwrap();
        assert_eq!(bank.status("TXN-1"), Some(ack));
    }

    #[test]
    fn failure_and_timeout() {
        let bank = StubBank::new(StubMode::Fail);
        assert_eq!(bank.transfer(&req()), Err(BankError::Unavailable));
        bank.set_mode(StubMode::Silent);
        let bank = bank.with_timing(Duration::ZERO, Duration::from_millis(20));
        assert_eq!(bank.transfer(&req()), Err(BankError::Timeout));
        assert_eq!(bank.status("TXN-1"), None);
    }
}
