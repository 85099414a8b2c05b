//! Service configuration: `key=value` lines, `#` comments.
//!
//! ```text
//! listen=127.0.0.1:8080
//! log_path=ups-events.log
//! receipts_path=ups-receipts.log
//! daily_ceiling=25000
//! high_value_threshold=10000
//! biometric_hamming_max=64
//! session_ttl_secs=900
//! sync=true
//! bank=ack
//! outlet.o1=s3cret
//! terminal.SHOP0001=234567890124
//! ```
//!
//! Amounts are rupees in the `digits[.dd]` form.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::aadhaar::validate_aadhaar;
use crate::auth::AuthPolicy;
use crate::bank::StubMode;
use crate::channels::pos::{TerminalId, TerminalRegistry};
use crate::ledger::{valid_outlet_id, POSTAL_OUTLET};
use crate::money::parse_rupees;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("config line {line}: {message}")]
    Invalid { line: usize, message: String },
    #[error("config: {0}")]
    Policy(String),
    #[error("reading config: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Clone, Debug)]
pub struct Config {
    pub listen: String,
    pub log_path: PathBuf,
    pub receipts_path: PathBuf,
    pub policy: AuthPolicy,
    pub session_ttl_secs: u64,
    /// fsync the log after every batch.
    pub sync: bool,
    pub bank: StubMode,
    /// Outlet id to its shared secret.
    pub outlets: BTreeMap<String, String>,
    pub terminals: TerminalRegistry,
}

impl Default for Config {
    fn default() -> Self {
        Config {
            listen: "127.0.0.1:8080".into(),
            log_path: "ups-events.log".into(),
            receipts_path: "ups-receipts.log".into(),
            policy: AuthPolicy::default(),
            session_ttl_secs: 900,
            sync: true,
            bank: StubMode::Ack,
            outlets: BTreeMap::new(),
            terminals: TerminalRegistry::new(),
        }
    }
}

impl Config {
    /// Defaults with the log and receipts placed in `dir`.
    pub fn in_dir(dir: &Path) -> Config {
        Config {
            log_path: dir.join("events.log"),
            receipts_path: dir.join("receipts.log"),
            ..Config::default()
        }
    }

    pub fn load(path: &Path) -> Result<Config, ConfigError> {
        Config::parse(&std::fs::read_to_string(path)?)
    }

    pub fn parse(text: &str) -> Result<Config, ConfigError> {
        let mut config = Config::default();
        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            let trimmed = raw.trim();
            if trimmed.is_empty() || trimmed.starts_with('#') {
                continue;
            }
            let invalid = |message: String| ConfigError::Invalid { line, message };
            let (key, value) = trimmed
                .split_once('=')
                .ok_or_else(|| invalid("expected key=value".into()))?;
            let (key, value) = (key.trim(), value.trim());
            let rupees = |v: &str| parse_rupees(v).map_err(|e| invalid(format!("{key}: {e}")));
            let number = |v: &str| v.parse::<u64>().map_err(|e| invalid(format!("{key}: {e}")));
            match key {
                "listen" => config.listen = value.to_string(),
                "log_path" => config.log_path = value.into(),
                "receipts_path" => config.receipts_path = value.into(),
                "daily_ceiling" => config.policy.daily_ceiling = rupees(value)?,
                "high_value_threshold" => config.policy.high_value_threshold = rupees(value)?,
                "biometric_hamming_max" => {
                    config.policy.biometric_hamming_max =
                        u32::try_from(number(value)?).map_err(|e| invalid(format!("{key}: {e}")))?
                }
                "session_ttl_secs" => config.session_ttl_secs = number(value)?,
                "sync" => {
                    config.sync = value
                        .parse()
                        .map_err(|_| invalid("sync is true or false".into()))?
                }
                "bank" => {
                    config.bank = match value {
                        "ack" => StubMode::Ack,
                        "fail" => StubMode::Fail,
                        "silent" => StubMode::Silent,
                        _ => return Err(invalid("bank is ack, fail or silent".into())),
                    }
                }
                _ => {
                    if let Some(id) = key.strip_prefix("outlet.") {
                        if !valid_outlet_id(id) || id == POSTAL_OUTLET {
                            return Err(invalid(format!("bad outlet id {id:?}")));
                        }
                        if value.is_empty() {
                            return Err(invalid(format!("outlet {id} has an empty secret")));
                        }
                        config.outlets.insert(id.to_string(), value.to_string());
                    } else if let Some(id) = key.strip_prefix("terminal.") {
                        let terminal: TerminalId = id.parse().map_err(|e| invalid(format!("{e}")))?;
                        let merchant = validate_aadhaar(value).map_err(|e| invalid(format!("{key}: {e}")))?;
                        config.terminals.register(terminal, merchant);
                    } else {
                        return Err(invalid(format!("unknown key {key:?}")));
                    }
                }
            }
        }
        config
            .policy
            .validate()
            .map_err(|e| ConfigError::Policy(e.to_string()))?;
        Ok(config)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::money::Money;

    #[test]
    fn parses_all_keys() {
        let c = Config::parse(
            "# service\nlisten=0.0.0.0:9000\nlog_path=/tmp/e.log\nreceipts_path=/tmp/r.log\n\
             daily_ceiling=30000\nhigh_value_threshold=5000.50\nbiometric_hamming_max=40\n\
             session_ttl_secs=60\nsync=false\nbank=fail\noutlet.o1=k1\nterminal.SHOP0001=234567890124\n",
        )
        .unwrap();
        assert_eq!(c.listen, "0.0.0.0:9000");
        assert_eq!(c.policy.daily_ceiling, Money::from_rupees(30_000));
        assert_eq!(c.policy.high_value_threshold, Money::from_paise(500_050));
        assert_eq!(c.policy.biometric_hamming_max, 40);
        assert_eq!(c.session_ttl_secs, 60);
        assert!(!c.sync);
        assert_eq!(c.bank, StubMode::Fail);
        assert_eq!(c.outlets["o1"], "k1");
        assert!(c.terminals.merchant(&"SHOP0001".parse().unwrap()).is_some());
    }

    #[test]
    fn rejects_bad_lines() {
        assert!(matches!(Config::parse("colour=red"), Err(ConfigError::Invalid { line: 1, .. })));
        assert!(matches!(Config::parse("\nsync=maybe"), Err(ConfigError::Invalid { line: 2, .. })));
        assert!(matches!(Config::parse("outlet.postal=x"), Err(ConfigError::Invalid { .. })));
        assert!(matches!(Config::parse("terminal.SHOP0001=123"), Err(ConfigError::Invalid { .. })));
        assert!(matches!(Config::parse("daily_ceiling=10.5"), Err(ConfigError::Invalid { .. })));
    }

    #[test]
    fn defaults() {
        let c = Config::parse("").unwrap();
        assert_eq!(c.policy, AuthPolicy::default());
        assert_eq!(c.session_ttl_secs, 900);
        assert!(c.sync);
    }
}
