//! Scripted end-to-end runs against a fresh gateway.
//!
//! One command per line, shell-style quoting, `#` comments:
//!
//! ```text
//! open <name> <aadhaar>
//! alias <name> <KIND> <value>
//! enroll <name> password <pw> | fingerprint <tpl> | voice <tpl> | card <number> <pin>
//!        | registered-phone <value> | registered-email <value>
//! terminal <terminal-id> <name>
//! cash-in <outlet> <name> <rupees>
//! cash-out <outlet> <name> <rupees> password <pw>
//! sms <from> <body>
//! email <from> <body>
//! voice <tpl> <transcript>
//! pos-fingerprint <terminal-id> <rupees> <tpl> [receiver-phone]
//! pos-card <terminal-id> <rupees> <card> <pin>
//! login <name> <password>
//! transfer <name> <rupees> <KIND>:<value> [idempotency-key]
//! mo-in <field>=<value>...
//! mo-advance <STATE>
//! expect balance <name> <rupees>
//! expect system <ACCOUNT> <rupees>
//! expect last SETTLED | REJECTED <REASON>
//! expect receipt SUCCESS | FAILED
//! expect money-order <STATE>
//! expect registered <KIND> <value> | unregistered <KIND> <value>
//! expect login-fails <name> <password>
//! ```
//!
//! A template `<tpl>` is `seed:N`, 512 pseudo-random bits from seed `N`, or
//! `seed:N~k`, the same with `k` bits flipped. Outlets `o1`..`o5` exist.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use chrono::{TimeZone, Utc};
use rand::seq::index::sample;
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};

use crate::aadhaar::AadhaarId;
use crate::auth::{Template, TEMPLATE_BITS, TEMPLATE_BYTES};
use crate::bank::{StubBank, StubMode};
use crate::channels::pos::{PosFrame, PosPayload, TerminalId};
use crate::clock::ManualClock;
use crate::gateway::{ApiRequest, ApiResponse, Config, Gateway};
use crate::ledger::SystemAccount;
use crate::money::{parse_rupees, Money};
use crate::state::rebuild_state;
use crate::store::durable_prefix;
use crate::transfer::{Transaction, TxnKind};

pub const OUTLET_KEY: &str = "scenario-outlet-key";
const ADMIN_OUTLET: &str = "o1";

/// The bundled scripts, one per use case.
pub const BUNDLED: [(&str, &str); 8] = [
    ("home_address_to_phone", include_str!("../scenarios/home_address_to_phone.scn")),
    ("fingerprint_to_phone", include_str!("../scenarios/fingerprint_to_phone.scn")),
    ("email_to_email", include_str!("../scenarios/email_to_email.scn")),
    ("phone_to_phone", include_str!("../scenarios/phone_to_phone.scn")),
    ("voice_to_email", include_str!("../scenarios/voice_to_email.scn")),
    ("voice_to_home_address", include_str!("../scenarios/voice_to_home_address.scn")),
    ("debit_card_to_wallet", include_str!("../scenarios/debit_card_to_wallet.scn")),
    ("password_to_email", include_str!("../scenarios/password_to_email.scn")),
];

/// The first step that did not go as the script said.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct StepFailure {
    pub step: usize,
    pub line: usize,
    pub command: String,
    pub message: String,
}

#[derive(Clone, Debug)]
pub struct ScenarioReport {
    pub name: String,
    pub steps_run: usize,
    pub failure: Option<StepFailure>,
    /// Σ of every account balance in the state rebuilt from the log.
    pub final_total: i128,
    /// Rebuilt state equals the live one.
    pub replay_matches: bool,
    /// Debits that settled with no satisfied factor. Always empty on a
    /// correct build.
    pub unauthorized_settlements: Vec<String>,
    pub transactions: Vec<Transaction>,
}

impl ScenarioReport {
    pub fn passed(&self) -> bool {
        self.failure.is_none() && self.final_total == 0 && self.replay_matches && self.unauthorized_settlements.is_empty()
    }
}

impl fmt::Display for ScenarioReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.passed() {
            return write!(f, "PASS {} ({} steps)", self.name, self.steps_run);
        }
        write!(f, "FAIL {}", self.name)?;
        if let Some(s) = &self.failure {
            write!(f, ": step {} (line {}) `{}`: {}", s.step, s.line, s.command, s.message)?;
        }
        if self.final_total != 0 {
            write!(f, "; balances sum to {} paise", self.final_total)?;
        }
        if !self.replay_matches {
            write!(f, "; replayed state differs")?;
        }
        if !self.unauthorized_settlements.is_empty() {
            write!(f, "; settled without factors: {:?}", self.unauthorized_settlements)?;
        }
        Ok(())
    }
}

/// `seed:N` or `seed:N~k`.
pub fn parse_template(text: &str) -> Result<Template, String> {
    let rest = text
        .strip_prefix("seed:")
        .ok_or_else(|| format!("template {text:?} is not seed:N[~k]"))?;
    let (seed, flips) = match rest.split_once('~') {
        Some((s, k)) => (s, k.parse::<usize>().map_err(|e| format!("flips: {e}"))?),
        None => (rest, 0),
    };
    let seed: u64 = seed.parse().map_err(|e| format!("seed: {e}"))?;
    if flips > TEMPLATE_BITS as usize {
        return Err(format!("cannot flip {flips} of {TEMPLATE_BITS} bits"));
    }
    let mut bytes = [0u8; TEMPLATE_BYTES];
    ChaCha8Rng::seed_from_u64(seed).fill_bytes(&mut bytes);
    let base = Template::from_bytes(&bytes).map_err(|e| e.to_string())?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5EED_F11B);
    Ok(base.with_flipped_bits(sample(&mut rng, TEMPLATE_BITS as usize, flips)))
}

fn signed_rupees(text: &str) -> Result<Money, String> {
    let (neg, digits) = match text.strip_prefix('-') {
        Some(d) => (true, d),
        None => (false, text),
    };
    if !digits.is_empty() && digits.chars().all(|c| c == '0' || c == '.') && digits.matches('.').count() <= 1 {
        return Ok(Money::ZERO);
    }
    let m = parse_rupees(digits).map_err(|e| format!("{text:?}: {e}"))?;
    Ok(if neg { -m } else { m })
}

fn paise_of(text: &str) -> Result<i64, String> {
    Ok(parse_rupees(text).map_err(|e| format!("{text:?}: {e}"))?.paise())
}

fn receiver_json(target: &str) -> Result<Value, String> {
    let (kind, value) = target
        .split_once(':')
        .ok_or_else(|| format!("receiver {target:?} is not KIND:value"))?;
    Ok(match kind.to_ascii_uppercase().as_str() {
        "AADHAAR" => json!({ "aadhaar": value }),
        "ADDR" => json!({ "postal": value }),
        k => json!({ "kind": k, "value": value }),
    })
}

struct Runner {
    gateway: Gateway,
    wallets: BTreeMap<String, AadhaarId>,
    sessions: BTreeMap<String, String>,
    last_txn: Option<Value>,
    last_receipt: Option<Value>,
    last_money_order: Option<String>,
}

impl Runner {
    fn wallet(&self, name: &str) -> Result<AadhaarId, String> {
        self.wallets
            .get(name)
            .copied()
            .ok_or_else(|| format!("no wallet named {name:?}; open it first"))
    }

    fn call(&self, req: ApiRequest) -> Result<Value, String> {
        let r = self.gateway.handle(&req);
        let body = r.json_body();
        if r.status >= 300 {
            return Err(format!("{} {} -> {} {}", method_name(&req), req.path, r.status, body));
        }
        Ok(body)
    }

    fn admin(req: ApiRequest) -> ApiRequest {
        req.outlet(ADMIN_OUTLET, OUTLET_KEY)
    }

    fn as_owner(&self, name: &str, req: ApiRequest) -> ApiRequest {
        match self.sessions.get(name) {
            Some(token) => req.bearer(token),
            None => Self::admin(req),
        }
    }

    fn record_txn(&mut self, txn: Value) {
        if let Some(mo) = txn["money_order"].as_str() {
            self.last_money_order = Some(mo.to_string());
        }
        self.last_txn = Some(txn);
    }

    fn pos(&mut self, terminal: &str, rupees: &str, payload: PosPayload) -> Result<(), String> {
        let terminal_id = terminal.parse::<TerminalId>().map_err(|e| e.to_string())?;
        let frame = PosFrame {
            terminal_id,
            amount: u64::try_from(paise_of(rupees)?).map_err(|e| e.to_string())?,
            payload,
        };
        let raw = frame.encode().map_err(|e| e.to_string())?;
        let r: ApiResponse = self.gateway.handle(&ApiRequest::post_bytes("/channels/pos", raw));
        let reply = PosFrame::decode(&r.body).map_err(|e| format!("PoS reply: {e}"))?;
        let txn_id = match reply.payload {
            PosPayload::Ack { txn_id } => txn_id,
            PosPayload::Nak { reason } => match reason.split_once(' ') {
                Some((id, _)) if id.starts_with("TXN-") => id.to_string(),
                _ => return Err(format!("PoS NAK: {reason}")),
            },
            other => return Err(format!("unexpected PoS reply {other:?}")),
        };
        let txn = self.call(Self::admin(ApiRequest::get(&format!("/transactions/{txn_id}"))))?;
        self.record_txn(txn);
        Ok(())
    }

    fn step(&mut self, args: &[String]) -> Result<(), String> {
        let a: Vec<&str> = args.iter().map(String::as_str).collect();
        match a.as_slice() {
            ["open", name, id] => {
                let w = self.call(ApiRequest::post_json("/wallets", &json!({ "aadhaar": id })))?;
                let owner: AadhaarId = serde_json::from_value(w["owner"].clone()).map_err(|e| e.to_string())?;
                self.wallets.insert(name.to_string(), owner);
            }
            ["alias", name, kind, value] => {
                let id = self.wallet(name)?;
                self.call(self.as_owner(
                    name,
                    ApiRequest::post_json(&format!("/wallets/{id}/aliases"), &json!({ "kind": kind, "value": value })),
                ))?;
            }
            ["enroll", name, factor, rest @ ..] => {
                let id = self.wallet(name)?;
                let body = match (*factor, rest) {
                    ("password", [pw]) => json!({ "factor": "PASSWORD", "password": pw }),
                    ("fingerprint", [t]) => json!({ "factor": "FINGERPRINT", "template": parse_template(t)?.to_hex() }),
                    ("voice", [t]) => json!({ "factor": "VOICE", "template": parse_template(t)?.to_hex() }),
                    ("card", [number, pin]) => json!({ "factor": "CARD", "number": number, "pin": pin }),
                    ("registered-phone", [v]) => json!({ "factor": "REGISTERED_PHONE", "value": v }),
                    ("registered-email", [v]) => json!({ "factor": "REGISTERED_EMAIL", "value": v }),
                    _ => return Err(format!("cannot enroll {factor} with {rest:?}")),
                };
                self.call(self.as_owner(name, ApiRequest::post_json(&format!("/wallets/{id}/credentials"), &body)))?;
            }
            ["terminal", terminal, name] => {
                let id = self.wallet(name)?;
                self.call(Self::admin(ApiRequest::post_json(
                    "/terminals",
                    &json!({ "terminal_id": terminal, "merchant": id.to_string() }),
                )))?;
            }
            ["cash-in", outlet, name, rupees] => {
                let id = self.wallet(name)?;
                let txn = self.call(
                    ApiRequest::post_json(
                        &format!("/outlets/{outlet}/cash-in"),
                        &json!({ "customer": { "aadhaar": id }, "amount_paise": paise_of(rupees)? }),
                    )
                    .outlet(outlet, OUTLET_KEY),
                )?;
                self.record_txn(txn);
            }
            ["cash-out", outlet, name, rupees, "password", pw] => {
                let id = self.wallet(name)?;
                let txn = self.call(
                    ApiRequest::post_json(
                        &format!("/outlets/{outlet}/cash-out"),
                        &json!({
                            "customer": { "aadhaar": id },
                            "amount_paise": paise_of(rupees)?,
                            "proofs": [{ "factor": "PASSWORD", "password": pw }],
                        }),
                    )
                    .outlet(outlet, OUTLET_KEY),
                )?;
                self.record_txn(txn);
            }
            [channel @ ("sms" | "email"), from, body] => {
                let txn = self.call(ApiRequest::post_json(
                    &format!("/channels/{channel}"),
                    &json!({ "from": from, "body": body }),
                ))?;
                self.record_txn(txn);
            }
            ["voice", t, transcript] => {
                let txn = self.call(ApiRequest::post_json(
                    "/channels/voice",
                    &json!({ "template": parse_template(t)?.to_hex(), "transcript": transcript }),
                ))?;
                self.record_txn(txn);
            }
            ["pos-fingerprint", terminal, rupees, t, phone @ ..] if phone.len() <= 1 => {
                let payload = PosPayload::FingerprintPay {
                    template: parse_template(t)?,
                    receiver_phone: phone.first().map(|p| p.to_string()),
                };
                self.pos(terminal, rupees, payload)?;
            }
            ["pos-card", terminal, rupees, card, pin] => {
                let payload = PosPayload::CardPay {
                    card: card.to_string(),
                    pin: pin.to_string(),
                };
                self.pos(terminal, rupees, payload)?;
            }
            ["login", name, pw] => {
                let id = self.wallet(name)?;
                let body = self.call(ApiRequest::post_json("/sessions", &json!({ "aadhaar": id, "password": pw })))?;
                let token = body["token"].as_str().ok_or("login returned no token")?;
                self.sessions.insert(name.to_string(), token.to_string());
            }
            ["transfer", name, rupees, target, key @ ..] if key.len() <= 1 => {
                let token = self
                    .sessions
                    .get(*name)
                    .ok_or_else(|| format!("{name} is not logged in"))?;
                let mut req = ApiRequest::post_json(
                    "/transfers",
                    &json!({ "receiver": receiver_json(target)?, "amount_paise": paise_of(rupees)? }),
                )
                .bearer(token);
                if let Some(k) = key.first() {
                    req = req.with_header("idempotency-key", k);
                }
                let txn = self.call(req)?;
                self.record_txn(txn);
            }
            ["mo-in", fields @ ..] => {
                let form: String = fields.iter().map(|f| format!("{f}\n")).collect();
                let r = self
                    .gateway
                    .handle(&Self::admin(ApiRequest::post_bytes("/money-orders/intake", form)));
                let body = r.json_body();
                match r.status {
                    200 => {
                        self.last_receipt = Some(body["receipt"].clone());
                        self.record_txn(body["transaction"].clone());
                    }
                    _ => {
                        self.last_receipt = body["detail"].get("receipt").cloned();
                        self.last_txn = None;
                    }
                }
            }
            ["mo-advance", state] => {
                let id = self.last_money_order.clone().ok_or("no money order issued yet")?;
                self.call(Self::admin(ApiRequest::post_json(
                    &format!("/money-orders/{id}/advance"),
                    &json!({ "state": state }),
                )))?;
            }
            ["expect", "balance", name, rupees] => {
                let id = self.wallet(name)?;
                let want = signed_rupees(rupees)?;
                let got = self.gateway.with_engine(|e| e.balance(id)).map_err(|e| e.to_string())?;
                if got != want {
                    return Err(format!("balance of {name}: expected {want}, got {got}"));
                }
            }
            ["expect", "system", account, rupees] => {
                let account = account.parse::<SystemAccount>().map_err(|e| e.to_string())?;
                let want = signed_rupees(rupees)?;
                let got = self.gateway.with_engine(|e| e.state().ledger().system_balance(&account));
                if got != want {
                    return Err(format!("{account}: expected {want}, got {got}"));
                }
            }
            ["expect", "last", want @ ..] => {
                let txn = self.last_txn.as_ref().ok_or("no transaction yet")?;
                let state = &txn["state"];
                let got: Vec<&str> = [state["state"].as_str(), state["reason"].as_str()]
                    .into_iter()
                    .flatten()
                    .collect();
                if got != want {
                    return Err(format!("last transaction {}: expected {want:?}, got {got:?}", txn["id"]));
                }
            }
            ["expect", "receipt", status] => {
                let receipt = self.last_receipt.as_ref().ok_or("no receipt issued")?;
                if receipt["status"].as_str() != Some(status) {
                    return Err(format!("receipt: expected {status}, got {}", receipt["status"]));
                }
            }
            ["expect", which @ ("registered" | "unregistered"), kind, value] => {
                let body = self.call(ApiRequest::post_json(
                    "/aliases/resolve-batch",
                    &json!({ "items": [{ "kind": kind, "value": value }] }),
                ))?;
                let registered = body["results"][0]["registered"].as_bool() == Some(true);
                if registered != (*which == "registered") {
                    return Err(format!("{kind}:{value}: expected {which}"));
                }
            }
            ["expect", "login-fails", name, pw] => {
                let id = self.wallet(name)?;
                let r = self
                    .gateway
                    .handle(&ApiRequest::post_json("/sessions", &json!({ "aadhaar": id, "password": pw })));
                if r.status != 401 {
                    return Err(format!("login with {pw:?} gave {}", r.status));
                }
            }
            ["expect", "money-order", state] => {
                let id = self.last_money_order.clone().ok_or("no money order issued yet")?;
                let order = self.call(Self::admin(ApiRequest::get(&format!("/money-orders/{id}"))))?;
                if order["state"].as_str() != Some(state) {
                    return Err(format!("money order {id}: expected {state}, got {}", order["state"]));
                }
            }
            _ => return Err("unknown command or wrong arguments".into()),
        }
        Ok(())
    }
}

fn method_name(req: &ApiRequest) -> &'static str {
    match req.method {
        crate::gateway::Method::Get => "GET",
        crate::gateway::Method::Post => "POST",
        crate::gateway::Method::Delete => "DELETE",
        crate::gateway::Method::Other => "?",
    }
}

/// Runs `script` against a new gateway whose log lives in a temporary
/// directory, then rebuilds state from that log and checks it.
pub fn run_script(name: &str, script: &str) -> ScenarioReport {
    let dir = tempfile::tempdir().expect("temporary directory");
    let mut config = Config::in_dir(dir.path());
    config.sync = false;
    for i in 1..=5 {
        config.outlets.insert(format!("o{i}"), OUTLET_KEY.to_string());
    }
    let clock = Arc::new(ManualClock::new(Utc.with_ymd_and_hms(2026, 3, 2, 4, 30, 0).unwrap()));
    let gateway = Gateway::open_with(&config, clock.clone(), Arc::new(StubBank::new(StubMode::Ack)))
        .expect("fresh gateway opens");
    let mut runner = Runner {
        gateway,
        wallets: BTreeMap::new(),
        sessions: BTreeMap::new(),
        last_txn: None,
        last_receipt: None,
        last_money_order: None,
    };

    let mut failure = None;
    let mut steps_run = 0;
    for (idx, raw) in script.lines().enumerate() {
        let trimmed = raw.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        steps_run += 1;
        let outcome = shlex::split(trimmed)
            .ok_or_else(|| "unbalanced quotes".to_string())
            .and_then(|args| runner.step(&args));
        clock.advance(chrono::Duration::seconds(1));
        if let Err(message) = outcome {
            failure = Some(StepFailure {
                step: steps_run,
                line: idx + 1,
                command: trimmed.to_string(),
                message,
            });
            break;
        }
    }

    let live = runner.gateway.with_engine(|e| e.state().snapshot());
    let transactions: Vec<Transaction> = runner
        .gateway
        .with_engine(|e| e.state().transactions().cloned().collect());
    drop(runner);
    let bytes = std::fs::read(&config.log_path).expect("log readable");
    let rebuilt = durable_prefix(&bytes)
        .ok()
        .and_then(|p| rebuild_state(&p.events).ok());
    let (final_total, replay_matches) = match &rebuilt {
        Some(state) => (state.ledger().total(), state.snapshot() == live),
        None => (0, false),
    };
    let unauthorized_settlements = transactions
        .iter()
        .filter(|t| t.is_settled() && is_debit(t.kind) && t.factors_satisfied.is_empty())
        .map(|t| t.id.clone())
        .collect();
    ScenarioReport {
        name: name.to_string(),
        steps_run,
        failure,
        final_total,
        replay_matches,
        unauthorized_settlements,
        transactions,
    }
}

fn is_debit(kind: TxnKind) -> bool {
    matches!(
        kind,
        TxnKind::Transfer | TxnKind::CashOut | TxnKind::BankOut | TxnKind::MoneyOrderOut
    )
}

pub fn run_bundled() -> Vec<ScenarioReport> {
    BUNDLED.iter().map(|(name, text)| run_script(name, text)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn templates_are_deterministic() {
        let a = parse_template("seed:7").unwrap();
        assert_eq!(a, parse_template("seed:7").unwrap());
        assert_ne!(a, parse_template("seed:8").unwrap());
        assert_eq!(a.hamming(&parse_template("seed:7~20").unwrap()), 20);
        assert!(parse_template("7").is_err());
        assert!(parse_template("seed:7~600").is_err());
    }

    #[test]
    fn wrong_balance_fails_at_that_step() {
        let script = "open a 234567890124\ncash-in o1 a 100\n# note\nexpect balance a 99.99\nexpect balance a 100\n";
        let r = run_script("wrong", script);
        assert!(!r.passed());
        let f = r.failure.unwrap();
        assert_eq!((f.step, f.line), (3, 4));
        assert!(f.message.contains("expected ₹99.99, got ₹100"), "{}", f.message);
    }

    #[test]
    fn unknown_command_is_reported() {
        let r = run_script("bad", "open a 234567890124\nfly a\n");
        assert_eq!(r.failure.unwrap().step, 2);
        let r = run_script("quotes", "sms 9876543210 \"PAY 5\n");
        assert!(r.failure.unwrap().message.contains("quotes"));
    }

    #[test]
    fn bundled_scripts_pass() {
        for report in run_bundled() {
            assert!(report.passed(), "{report}");
        }
    }
}
