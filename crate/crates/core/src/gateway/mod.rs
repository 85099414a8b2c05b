//! Request handling over every operation, independent of the HTTP transport.
//!
//! [`Gateway::handle`] takes an [`ApiRequest`] and returns an [`ApiResponse`];
//! the CLI's server is a thin adapter over it, and the tests drive it
//! directly. Errors are JSON `{"error": code, "message": text}`.
//!
//! Callers identify themselves in one of three ways:
//!
//! * `Authorization: Bearer <token>` from `POST /sessions` (password login);
//! * `X-Outlet-Id` / `X-Outlet-Key` for outlets and postal staff;
//! * nothing, relying on the factors carried in the request.
//!
//! Channel routes (`/channels/*`) authenticate by content: origin address,
//! voice or fingerprint sample, card and PIN.

pub mod api;
pub mod config;
pub mod session;

use std::collections::{BTreeMap, HashSet};
use std::fs::{File, OpenOptions};
use std::io::{self, Write};
use std::path::PathBuf;
use std::sync::{Arc, Mutex, MutexGuard, RwLock};

use rand::RngCore;
use serde_json::{json, Value};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::aadhaar::{validate_aadhaar, AadhaarId};
use crate::audit::statement_for;
use crate::auth::{AuthError, AuthEvidence, AuthProof, Enrollment, FactorKind, Template};
use crate::bank::{BankClient, StubBank};
use crate::channels::money_order::{intake_money_order_form, MoneyOrderForm};
use crate::channels::pos::{decode_pos_request, encode_pos_nak, encode_pos_response, PosFrame, TerminalId, TerminalRegistry};
use crate::channels::text::{parse_email, parse_sms, TextError};
use crate::channels::voice::{parse_voice_transcript, VoiceError};
use crate::clock::{Clock, SystemClock};
use crate::directory::{normalize_alias, DirectoryError};
use crate::engine::{Engine, EngineError};
use crate::ledger::LedgerError;
use crate::money::Money;
use crate::state::{CorruptLog, State};
use crate::store::{durable_prefix, FileLog, StoreError};
use crate::transfer::{Channel, PartySelector, Receipt, ReceiptStatus, Transaction, TransferIntent};

pub use api::{ApiError, ApiRequest, ApiResponse, Method};
pub use config::{Config, ConfigError};
pub use session::Sessions;

use api::*;

/// Most aliases a single resolve-batch request may carry.
pub const RESOLVE_BATCH_MAX: usize = 1000;

#[derive(Debug, Error)]
pub enum StartupError {
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error(transparent)]
    Corrupt(#[from] CorruptLog),
    #[error("receipts file: {0}")]
    Receipts(#[from] io::Error),
}

/// What startup found in the log.
#[derive(Clone, Debug, Default)]
pub struct StartupReport {
    pub events: usize,
    /// Bytes of a torn final write that were cut off.
    pub discarded_bytes: usize,
    /// Transactions a previous run left unfinished, now terminal.
    pub recovered: Vec<Transaction>,
}

struct Receipts {
    file: File,
    seen: HashSet<String>,
}

impl Receipts {
    /// Appends `receipt` unless a receipt with its id was written before.
    fn record(&mut self, receipt: &Receipt) -> io::Result<()> {
        if self.seen.insert(receipt.receipt_id.clone()) {
            writeln!(self.file, "{}", receipt.to_line())?;
            self.file.flush()?;
        }
        Ok(())
    }
}

pub struct Gateway {
    engine: Mutex<Engine>,
    sessions: Mutex<Sessions>,
    terminals: RwLock<TerminalRegistry>,
    outlets: BTreeMap<String, String>,
    receipts: Mutex<Receipts>,
    log_path: PathBuf,
    clock: Arc<dyn Clock>,
    report: StartupReport,
}

enum Caller {
    Session(AadhaarId),
    Outlet(String),
    Anonymous,
}

fn engine_error(e: EngineError) -> ApiError {
    match e {
        EngineError::Aadhaar(e) => ApiError::new(400, "InvalidAadhaar", e.to_string()),
        EngineError::Ledger(e) => ledger_error(e),
        EngineError::Directory(e) => directory_error(e),
        EngineError::Auth(e) => auth_error(e),
        EngineError::UnknownWallet(_) => ApiError::new(404, "UnknownWallet", e.to_string()),
        EngineError::UnknownMoneyOrder(_) => ApiError::new(404, "UnknownMoneyOrder", e.to_string()),
        EngineError::IllegalTransition { .. } => ApiError::new(409, "IllegalTransition", e.to_string()),
        EngineError::InvalidOutlet(_) => ApiError::new(400, "InvalidOutlet", e.to_string()),
    }
}

fn ledger_error(e: LedgerError) -> ApiError {
    match e {
        LedgerError::AlreadyExists(_) => ApiError::new(409, "WalletExists", e.to_string()),
        LedgerError::UnknownWallet(_) => ApiError::new(404, "UnknownWallet", e.to_string()),
        _ => ApiError::new(422, "LedgerRejected", e.to_string()),
    }
}

fn directory_error(e: DirectoryError) -> ApiError {
    match e {
        DirectoryError::DuplicateAlias { .. } => ApiError::new(409, "DuplicateAlias", e.to_string()),
        DirectoryError::Unnormalizable { .. } => ApiError::new(400, "Unnormalizable", e.to_string()),
        DirectoryError::UnknownWallet(_) => ApiError::new(404, "UnknownWallet", e.to_string()),
        DirectoryError::NotFound => ApiError::new(404, "AliasNotFound", e.to_string()),
        _ => ApiError::bad_request(e.to_string()),
    }
}

fn auth_error(e: AuthError) -> ApiError {
    match e {
        AuthError::DuplicatePassword | AuthError::DuplicateCard => {
            ApiError::new(409, "DuplicateCredential", e.to_string())
        }
        AuthError::UnknownWallet(_) => ApiError::new(404, "UnknownWallet", e.to_string()),
        AuthError::Alias(d) => directory_error(d),
        _ => ApiError::new(400, "BadCredential", e.to_string()),
    }
}

fn text_error(e: TextError) -> ApiError {
    match &e {
        TextError::Parse { position, expected } => ApiError::new(400, "ParseError", e.to_string())
            .with_detail(json!({ "position": position, "expected": expected })),
        TextError::BadAmount(_) => ApiError::new(400, "BadAmount", e.to_string()),
        TextError::BadOrigin(_) => ApiError::new(400, "BadOrigin", e.to_string()),
    }
}

fn voice_error(e: VoiceError) -> ApiError {
    match &e {
        VoiceError::Parse { position, expected } => ApiError::new(400, "ParseError", e.to_string())
            .with_detail(json!({ "position": position, "expected": expected })),
        VoiceError::BadAmount(_) => ApiError::new(400, "BadAmount", e.to_string()),
        VoiceError::AmbiguousSender { .. } => ApiError::new(422, "AmbiguousSender", e.to_string()),
    }
}

fn parse_wallet(id: &str) -> Result<AadhaarId, ApiError> {
    validate_aadhaar(id).map_err(|e| ApiError::new(400, "InvalidAadhaar", e.to_string()))
}

fn paise(amount: i64) -> Money {
    Money::from_paise(amount)
}

fn evidence(proofs: Vec<ProofBody>, session: Option<AadhaarId>) -> Result<AuthEvidence, ApiError> {
    let mut out = AuthEvidence::default();
    if let Some(owner) = session {
        out.push(AuthProof::PasswordSession { owner });
    }
    for p in proofs {
        out.push(p.into_proof().map_err(auth_error)?);
    }
    Ok(out)
}

fn random_key() -> String {
    let mut bytes = [0u8; 16];
    rand::rng().fill_bytes(&mut bytes);
    hex::encode(bytes)
}

fn query_param<'a>(path: &'a str, name: &str) -> Option<&'a str> {
    let (_, query) = path.split_once('?')?;
    query
        .split('&')
        .filter_map(|kv| kv.split_once('='))
        .find(|(k, _)| *k == name)
        .map(|(_, v)| v)
}

impl Gateway {
    /// Opens the log in `config`, rebuilds state from it and finishes any
    /// transaction a previous run left in flight. A corrupt log is an error.
    pub fn open(config: &Config) -> Result<Gateway, StartupError> {
        Self::open_with(config, Arc::new(SystemClock), Arc::new(StubBank::new(config.bank)))
    }

    pub fn open_with(
        config: &Config,
        clock: Arc<dyn Clock>,
        bank: Arc<dyn BankClient>,
    ) -> Result<Gateway, StartupError> {
        let (log, prefix) = FileLog::open(&config.log_path, config.sync)?;
        let mut engine = Engine::from_events(&prefix.events, Box::new(log), clock.clone(), config.policy, bank)?;
        let recovered = engine.recover_pending();
        let seen = match std::fs::read_to_string(&config.receipts_path) {
            Ok(text) => text
                .lines()
                .filter_map(|l| l.split('|').next())
                .map(str::to_string)
                .collect(),
            Err(e) if e.kind() == io::ErrorKind::NotFound => HashSet::new(),
            Err(e) => return Err(e.into()),
        };
        let file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(&config.receipts_path)?;
        Ok(Gateway {
            engine: Mutex::new(engine),
            sessions: Mutex::new(Sessions::new(config.session_ttl_secs)),
            terminals: RwLock::new(config.terminals.clone()),
            outlets: config.outlets.clone(),
            receipts: Mutex::new(Receipts { file, seen }),
            log_path: config.log_path.clone(),
            clock,
            report: StartupReport {
                events: prefix.events.len(),
                discarded_bytes: prefix.discarded,
                recovered,
            },
        })
    }

    pub fn startup_report(&self) -> &StartupReport {
        &self.report
    }

    /// Runs `f` with the engine locked. For tests and tools.
    pub fn with_engine<R>(&self, f: impl FnOnce(&Engine) -> R) -> R {
        let engine = self.engine.lock().unwrap_or_else(|p| p.into_inner());
        f(&engine)
    }

    /// See [`Engine::set_observer`].
    pub fn set_observer(&self, observer: impl FnMut(&State) + Send + 'static) {
        let mut engine = self.engine.lock().unwrap_or_else(|p| p.into_inner());
        engine.set_observer(observer);
    }

    pub fn handle(&self, req: &ApiRequest) -> ApiResponse {
        match self.route(req) {
            Ok(r) => r,
            Err(e) => e.into_response(),
        }
    }

    fn engine(&self) -> Result<MutexGuard<'_, Engine>, ApiError> {
        self.engine
            .lock()
            .map_err(|_| ApiError::new(503, "Unavailable", "service must be restarted from its log"))
    }

    fn route(&self, req: &ApiRequest) -> Result<ApiResponse, ApiError> {
        use Method::*;
        let path = req.path.split('?').next().unwrap_or("");
        let segs: Vec<&str> = path.split('/').filter(|s| !s.is_empty()).collect();
        match (req.method, segs.as_slice()) {
            (Get, ["health"]) => self.health(),
            (Post, ["sessions"]) => self.login(req),
            (Delete, ["sessions"]) => self.logout(req),
            (Post, ["wallets"]) => self.open_wallet(req),
            (Get, ["wallets", id, "balance"]) => self.balance(req, id),
            (Get, ["wallets", id, "aliases"]) => self.list_aliases(req, id),
            (Post, ["wallets", id, "aliases"]) => self.add_alias(req, id),
            (Post, ["wallets", id, "aliases", "remove"]) => self.remove_alias(req, id),
            (Post, ["wallets", id, "credentials"]) => self.enroll(req, id),
            (Post, ["wallets", id, "status"]) => self.set_status(req, id),
            (Get, ["wallets", id, "transactions"]) => self.history(req, id),
            (Get, ["wallets", id, "statement"]) => self.statement(req, id),
            (Post, ["wallets", id, "bank-transfer"]) => self.bank_transfer(req, id),
            (Post, ["transfers"]) => self.transfer(req),
            (Get, ["transactions", id]) => self.get_transaction(req, id),
            (Post, ["channels", "sms"]) => self.sms(req),
            (Post, ["channels", "email"]) => self.email(req),
            (Post, ["channels", "voice"]) => self.voice(req),
            (Post, ["channels", "pos"]) => Ok(self.pos(req)),
            (Post, ["outlets", oid, "cash-in"]) => self.cash(req, oid, true),
            (Post, ["outlets", oid, "cash-out"]) => self.cash(req, oid, false),
            (Post, ["money-orders"]) => self.issue_money_order(req),
            (Post, ["money-orders", "intake"]) => self.intake(req),
            (Get, ["money-orders", id]) => self.get_money_order(req, id),
            (Post, ["money-orders", id, "advance"]) => self.advance(req, id),
            (Post, ["aliases", "resolve-batch"]) => self.resolve_batch(req),
            (Post, ["terminals"]) => self.register_terminal(req),
            _ => Err(ApiError::not_found(format!("no route {:?} {path}", req.method))),
        }
    }

    // ---- callers ----

    fn caller(&self, req: &ApiRequest) -> Result<Caller, ApiError> {
        if let Some(auth) = req.header("authorization") {
            let token = auth
                .strip_prefix("Bearer ")
                .ok_or_else(|| ApiError::unauthorized("expected a bearer token"))?;
            let now = self.clock.now();
            let mut sessions = self.sessions.lock().unwrap_or_else(|p| p.into_inner());
            return sessions
                .check(token.trim(), now)
                .map(Caller::Session)
                .ok_or_else(|| ApiError::unauthorized("session expired or unknown; log in again"));
        }
        if let Some(id) = req.header("x-outlet-id") {
            let key = req.header("x-outlet-key").unwrap_or("");
            return match self.outlets.get(id) {
                Some(secret) if !key.is_empty() && secret.as_bytes() == key.as_bytes() => Ok(Caller::Outlet(id.to_string())),
                _ => Err(ApiError::unauthorized("unknown outlet or wrong key")),
            };
        }
        Ok(Caller::Anonymous)
    }

    fn outlet(&self, req: &ApiRequest) -> Result<String, ApiError> {
        match self.caller(req)? {
            Caller::Outlet(id) => Ok(id),
            _ => Err(ApiError::unauthorized("outlet credentials required")),
        }
    }

    /// Wallet-scoped routes: the wallet's own session, an outlet, or nobody
    /// at all while the wallet has no password to log in with.
    fn wallet_access(&self, req: &ApiRequest, engine: &Engine, owner: AadhaarId) -> Result<(), ApiError> {
        engine.wallet(owner).map_err(engine_error)?;
        match self.caller(req)? {
            Caller::Session(s) if s == owner => Ok(()),
            Caller::Session(_) => Err(ApiError::forbidden("session belongs to another wallet")),
            Caller::Outlet(_) => Ok(()),
            Caller::Anonymous => {
                let has_password = engine
                    .state()
                    .credentials()
                    .of(owner)
                    .any(|c| c.secret.factor() == FactorKind::Password);
                if has_password {
                    Err(ApiError::unauthorized("log in to use this wallet"))
                } else {
                    Ok(())
                }
            }
        }
    }

    fn idempotency_key(req: &ApiRequest, body: Option<String>) -> Option<String> {
        req.header("idempotency-key").map(str::to_string).or(body)
    }

    // ---- sessions and wallets ----

    fn health(&self) -> Result<ApiResponse, ApiError> {
        let engine = self.engine()?;
        let state = engine.state();
        Ok(ApiResponse::json(
            200,
            &json!({
                "status": "ok",
                "events": state.last_seq(),
                "wallets": state.ledger().wallets().count(),
                "transactions": state.transaction_count(),
            }),
        ))
    }

    fn login(&self, req: &ApiRequest) -> Result<ApiResponse, ApiError> {
        let body: LoginBody = req.json()?;
        let owner = {
            let engine = self.engine()?;
            engine
                .resolve_party(&body.who)
                .filter(|o| engine.state().credentials().check_password(*o, &body.password))
        };
        let owner = owner.ok_or_else(|| ApiError::new(401, "InvalidCredentials", "wallet or password is wrong"))?;
        let now = self.clock.now();
        let (token, session) = self
            .sessions
            .lock()
            .unwrap_or_else(|p| p.into_inner())
            .open(owner, now);
        Ok(ApiResponse::json(
            201,
            &json!({ "token": token, "owner": owner, "expires_at": session.expires_at }),
        ))
    }

    fn logout(&self, req: &ApiRequest) -> Result<ApiResponse, ApiError> {
        let token = req
            .header("authorization")
            .and_then(|a| a.strip_prefix("Bearer "))
            .ok_or_else(|| ApiError::unauthorized("expected a bearer token"))?;
        self.sessions
            .lock()
            .unwrap_or_else(|p| p.into_inner())
            .close(token.trim());
        Ok(ApiResponse::json(200, &json!({ "closed": true })))
    }

    fn open_wallet(&self, req: &ApiRequest) -> Result<ApiResponse, ApiError> {
        let body: OpenWalletBody = req.json()?;
        let wallet = self.engine()?.open_wallet(&body.aadhaar).map_err(engine_error)?;
        Ok(ApiResponse::json(201, &serde_json::to_value(wallet).expect("wallet serializes")))
    }

    fn balance(&self, req: &ApiRequest, id: &str) -> Result<ApiResponse, ApiError> {
        let owner = parse_wallet(id)?;
        let engine = self.engine()?;
        self.wallet_access(req, &engine, owner)?;
        let wallet = engine.wallet(owner).map_err(engine_error)?;
        let headroom = engine.daily_headroom(owner).map_err(engine_error)?;
        Ok(ApiResponse::json(
            200,
            &json!({
                "owner": owner,
                "balance_paise": wallet.balance.paise(),
                "balance": wallet.balance.to_string(),
                "status": wallet.status,
                "daily_headroom_paise": headroom.paise(),
            }),
        ))
    }

    fn list_aliases(&self, req: &ApiRequest, id: &str) -> Result<ApiResponse, ApiError> {
        let owner = parse_wallet(id)?;
        let engine = self.engine()?;
        self.wallet_access(req, &engine, owner)?;
        let aliases: Vec<_> = engine.state().directory().aliases_of(owner).cloned().collect();
        Ok(ApiResponse::json(
            200,
            &json!({ "owner": owner, "aliases": aliases, "export": engine.state().directory().export_for(owner) }),
        ))
    }

    fn add_alias(&self, req: &ApiRequest, id: &str) -> Result<ApiResponse, ApiError> {
        let owner = parse_wallet(id)?;
        let body: AliasBody = req.json()?;
        let mut engine = self.engine()?;
        self.wallet_access(req, &engine, owner)?;
        let alias = engine.register_alias(owner, body.kind, &body.value).map_err(engine_error)?;
        Ok(ApiResponse::ok(&alias))
    }

    fn remove_alias(&self, req: &ApiRequest, id: &str) -> Result<ApiResponse, ApiError> {
        let owner = parse_wallet(id)?;
        let body: AliasBody = req.json()?;
        let mut engine = self.engine()?;
        self.wallet_access(req, &engine, owner)?;
        let alias = engine.remove_alias(owner, body.kind, &body.value).map_err(engine_error)?;
        Ok(ApiResponse::ok(&alias))
    }

    fn enroll(&self, req: &ApiRequest, id: &str) -> Result<ApiResponse, ApiError> {
        let owner = parse_wallet(id)?;
        let body: Enrollment = req.json()?;
        let mut engine = self.engine()?;
        self.wallet_access(req, &engine, owner)?;
        let record = engine.enroll_credential(owner, body).map_err(engine_error)?;
        Ok(ApiResponse::json(
            201,
            &json!({
                "credential_id": record.id,
                "owner": record.owner,
                "factor": record.secret.factor(),
                "enrolled_at": record.enrolled_at,
            }),
        ))
    }

    fn set_status(&self, req: &ApiRequest, id: &str) -> Result<ApiResponse, ApiError> {
        let owner = parse_wallet(id)?;
        self.outlet(req)?;
        let body: StatusBody = req.json()?;
        let wallet = self
            .engine()?
            .set_wallet_status(owner, body.status)
            .map_err(engine_error)?;
        Ok(ApiResponse::ok(&wallet))
    }

    fn history(&self, req: &ApiRequest, id: &str) -> Result<ApiResponse, ApiError> {
        let owner = parse_wallet(id)?;
        let limit = match query_param(&req.path, "limit") {
            Some(v) => v.parse::<usize>().map_err(|_| ApiError::bad_request("limit is a count"))?,
            None => 100,
        };
        let engine = self.engine()?;
        self.wallet_access(req, &engine, owner)?;
        let mine: Vec<&Transaction> = engine
            .state()
            .transactions()
            .filter(|t| t.resolved_sender == Some(owner) || t.resolved_receiver == Some(owner))
            .collect();
        let recent = &mine[mine.len().saturating_sub(limit)..];
        Ok(ApiResponse::json(200, &json!({ "owner": owner, "transactions": recent })))
    }

    fn statement(&self, req: &ApiRequest, id: &str) -> Result<ApiResponse, ApiError> {
        let owner = parse_wallet(id)?;
        let engine = self.engine()?;
        self.wallet_access(req, &engine, owner)?;
        let bytes = std::fs::read(&self.log_path)
            .map_err(|e| ApiError::new(500, "LogUnreadable", e.to_string()))?;
        let prefix = durable_prefix(&bytes).map_err(|e| ApiError::new(500, "LogUnreadable", e.to_string()))?;
        let statement =
            statement_for(&prefix.events, owner).map_err(|e| ApiError::new(500, "LogUnreadable", e.to_string()))?;
        let mut body = serde_json::to_value(&statement).expect("statement serializes");
        body["closing_paise"] = json!(statement.closing().paise());
        body["text"] = json!(statement.render());
        Ok(ApiResponse::json(200, &body))
    }

    fn bank_transfer(&self, req: &ApiRequest, id: &str) -> Result<ApiResponse, ApiError> {
        let owner = parse_wallet(id)?;
        let body: BankTransferBody = req.json()?;
        let session = match self.caller(req)? {
            Caller::Session(s) if s == owner => Some(s),
            Caller::Session(_) => return Err(ApiError::forbidden("session belongs to another wallet")),
            _ => None,
        };
        let evidence = evidence(body.proofs, session)?;
        let key = Self::idempotency_key(req, body.idempotency_key).map(|k| format!("web:{owner}:bank:{k}"));
        let txn = self
            .engine()?
            .bank_transfer_out(PartySelector::aadhaar(owner), paise(body.amount_paise), &evidence, key)
            .map_err(engine_error)?;
        Ok(ApiResponse::ok(&txn))
    }

    // ---- transfers ----

    /// Sender, its namespace for idempotency keys, and the session proof.
    fn web_sender(
        &self,
        req: &ApiRequest,
        engine: &Engine,
        named: Option<PartySelector>,
    ) -> Result<(PartySelector, String, Option<AadhaarId>), ApiError> {
        match (self.caller(req)?, named) {
            (Caller::Session(owner), named) => {
                if let Some(n) = &named {
                    if engine.resolve_party(n) != Some(owner) {
                        return Err(ApiError::forbidden("a session can only send from its own wallet"));
                    }
                }
                Ok((PartySelector::aadhaar(owner), owner.to_string(), Some(owner)))
            }
            (_, Some(sender)) => {
                let ns = match engine.resolve_party(&sender) {
                    Some(id) => id.to_string(),
                    None => serde_json::to_string(&sender).expect("selector serializes"),
                };
                Ok((sender, ns, None))
            }
            (_, None) => Err(ApiError::bad_request("name a sender or log in")),
        }
    }

    fn transfer(&self, req: &ApiRequest) -> Result<ApiResponse, ApiError> {
        let body: TransferBody = req.json()?;
        let mut engine = self.engine()?;
        let (sender, ns, session) = self.web_sender(req, &engine, body.sender)?;
        let key = Self::idempotency_key(req, body.idempotency_key).unwrap_or_else(random_key);
        let intent = TransferIntent {
            sender,
            receiver: body.receiver,
            amount: paise(body.amount_paise),
            channel: Channel::Web,
            evidence: evidence(body.proofs, session)?,
            idempotency_key: format!("web:{ns}:{key}"),
            received_at: engine.now(),
        };
        let txn = engine.submit_intent(intent).map_err(engine_error)?;
        Ok(ApiResponse::ok(&txn))
    }

    fn get_transaction(&self, req: &ApiRequest, id: &str) -> Result<ApiResponse, ApiError> {
        let caller = self.caller(req)?;
        let engine = self.engine()?;
        let txn = engine
            .transaction(id)
            .ok_or_else(|| ApiError::not_found(format!("no transaction {id}")))?;
        match caller {
            Caller::Outlet(_) => {}
            Caller::Session(s) if txn.resolved_sender == Some(s) || txn.resolved_receiver == Some(s) => {}
            Caller::Session(_) => return Err(ApiError::forbidden("not a party to this transaction")),
            Caller::Anonymous => return Err(ApiError::unauthorized("log in to read transactions")),
        }
        Ok(ApiResponse::ok(txn))
    }

    // ---- channels ----

    fn sms(&self, req: &ApiRequest) -> Result<ApiResponse, ApiError> {
        let body: MessageBody = req.json()?;
        let mut engine = self.engine()?;
        let intent = parse_sms(&body.from, &body.body, engine.now()).map_err(text_error)?;
        let txn = engine.submit_intent(intent).map_err(engine_error)?;
        Ok(ApiResponse::ok(&txn))
    }

    fn email(&self, req: &ApiRequest) -> Result<ApiResponse, ApiError> {
        let body: MessageBody = req.json()?;
        let mut engine = self.engine()?;
        let intent = parse_email(&body.from, &body.body, engine.now()).map_err(text_error)?;
        let txn = engine.submit_intent(intent).map_err(engine_error)?;
        Ok(ApiResponse::ok(&txn))
    }

    fn voice(&self, req: &ApiRequest) -> Result<ApiResponse, ApiError> {
        let body: VoiceBody = req.json()?;
        let sample = Template::from_hex(&body.template).map_err(auth_error)?;
        let mut engine = self.engine()?;
        let now = engine.now();
        let intent = parse_voice_transcript(&body.transcript, &sample, now, |t| {
            engine.identify(FactorKind::Voice, t)
        })
        .map_err(voice_error)?;
        let txn = engine.submit_intent(intent).map_err(engine_error)?;
        Ok(ApiResponse::ok(&txn))
    }

    /// Binary in, binary out. Requests that never become a transaction get
    /// a NAK naming the problem, with status 400.
    fn pos(&self, req: &ApiRequest) -> ApiResponse {
        let raw = &req.body;
        let header_terminal = || {
            raw.get(4..12)
                .and_then(|b| <[u8; 8]>::try_from(b).ok())
                .map(TerminalId)
                .unwrap_or(TerminalId([0; 8]))
        };
        let frame = PosFrame::decode(raw);
        let (terminal, amount) = match &frame {
            Ok(f) => (f.terminal_id, f.amount),
            Err(_) => (header_terminal(), 0),
        };
        let nak = |status: u16, reason: String| ApiResponse::bytes(status, encode_pos_nak(terminal, amount, &reason));
        let mut engine = match self.engine() {
            Ok(e) => e,
            Err(e) => return nak(e.status, e.message),
        };
        let intent = {
            let terminals = self.terminals.read().unwrap_or_else(|p| p.into_inner());
            decode_pos_request(raw, &terminals, engine.now())
        };
        let intent = match intent {
            Ok(i) => i,
            Err(e) => return nak(400, e.to_string()),
        };
        match engine.submit_intent(intent) {
            Ok(txn) => ApiResponse::bytes(200, encode_pos_response(terminal, &txn)),
            Err(e) => {
                let e = engine_error(e);
                nak(e.status, e.message)
            }
        }
    }

    // ---- outlets ----

    fn cash(&self, req: &ApiRequest, oid: &str, cash_in: bool) -> Result<ApiResponse, ApiError> {
        let outlet = self.outlet(req)?;
        if outlet != oid {
            return Err(ApiError::forbidden("credentials are for another outlet"));
        }
        let body: CashBody = req.json()?;
        let key = Self::idempotency_key(req, body.idempotency_key).map(|k| format!("outlet:{oid}:{k}"));
        let mut engine = self.engine()?;
        let txn = if cash_in {
            engine.cash_in(oid, body.customer, paise(body.amount_paise), key)
        } else {
            let evidence = evidence(body.proofs, None)?;
            engine.cash_out(oid, body.customer, paise(body.amount_paise), &evidence, key)
        }
        .map_err(engine_error)?;
        Ok(ApiResponse::ok(&txn))
    }

    fn register_terminal(&self, req: &ApiRequest) -> Result<ApiResponse, ApiError> {
        self.outlet(req)?;
        let body: TerminalBody = req.json()?;
        let terminal: TerminalId = body
            .terminal_id
            .parse()
            .map_err(|e: crate::channels::pos::PosError| ApiError::bad_request(e.to_string()))?;
        let merchant = parse_wallet(&body.merchant)?;
        self.engine()?.wallet(merchant).map_err(engine_error)?;
        self.terminals
            .write()
            .unwrap_or_else(|p| p.into_inner())
            .register(terminal, merchant);
        Ok(ApiResponse::json(
            201,
            &json!({ "terminal_id": terminal.to_string(), "merchant": merchant }),
        ))
    }

    // ---- money orders ----

    fn issue_money_order(&self, req: &ApiRequest) -> Result<ApiResponse, ApiError> {
        let body: MoneyOrderBody = req.json()?;
        let mut engine = self.engine()?;
        let (sender, ns, session) = self.web_sender(req, &engine, body.sender)?;
        let key = Self::idempotency_key(req, body.idempotency_key).unwrap_or_else(random_key);
        let evidence = evidence(body.proofs, session)?;
        let txn = engine
            .issue_money_order(
                sender,
                &body.destination,
                paise(body.amount_paise),
                &evidence,
                Channel::Web,
                Some(format!("web:{ns}:mo:{key}")),
            )
            .map_err(engine_error)?;
        Ok(ApiResponse::ok(&txn))
    }

    fn get_money_order(&self, req: &ApiRequest, id: &str) -> Result<ApiResponse, ApiError> {
        let caller = self.caller(req)?;
        let engine = self.engine()?;
        let order = engine
            .money_order(id)
            .ok_or_else(|| ApiError::new(404, "UnknownMoneyOrder", format!("no money order {id}")))?;
        match caller {
            Caller::Outlet(_) => {}
            Caller::Session(s) if s == order.owner => {}
            Caller::Session(_) => return Err(ApiError::forbidden("not your money order")),
            Caller::Anonymous => return Err(ApiError::unauthorized("log in to read money orders")),
        }
        Ok(ApiResponse::ok(order))
    }

    fn advance(&self, req: &ApiRequest, id: &str) -> Result<ApiResponse, ApiError> {
        self.outlet(req)?;
        let body: AdvanceBody = req.json()?;
        let order = self
            .engine()?
            .advance_money_order(id, body.state)
            .map_err(engine_error)?;
        Ok(ApiResponse::ok(&order))
    }

    fn record_receipt(&self, receipt: &Receipt) -> Result<(), ApiError> {
        self.receipts
            .lock()
            .unwrap_or_else(|p| p.into_inner())
            .record(receipt)
            .map_err(|e| ApiError::new(500, "ReceiptsUnwritable", e.to_string()))
    }

    /// A form arrives with its cash at a post office. Valid forms credit the
    /// receiver or park the cash; either way a receipt goes to the sender.
    /// An invalid form with a usable return address gets a FAILED receipt
    /// and its cash goes back with it.
    fn intake(&self, req: &ApiRequest) -> Result<ApiResponse, ApiError> {
        self.outlet(req)?;
        let text = req.text()?;
        let mut engine = self.engine()?;
        let now = engine.now();
        match intake_money_order_form(text, now) {
            Ok(intake) => {
                let (txn, receipt) = engine.receive_money_order(&intake);
                drop(engine);
                self.record_receipt(&receipt)?;
                Ok(ApiResponse::json(200, &json!({ "transaction": txn, "receipt": receipt })))
            }
            Err(e) => {
                drop(engine);
                let mut err = ApiError::new(422, "FormError", e.to_string());
                if let Some(address) = MoneyOrderForm::return_address(text) {
                    let digest = hex::encode(Sha256::digest(text.as_bytes()));
                    let amount = MoneyOrderForm::parse(text)
                        .ok()
                        .and_then(|f| crate::money::parse_rupees(&f.enclosed_cash).ok())
                        .unwrap_or(Money::ZERO);
                    let receipt = Receipt {
                        receipt_id: format!("RCPT-FORM-{}", &digest[..16]),
                        txn_id: String::new(),
                        status: ReceiptStatus::Failed,
                        amount,
                        destination: address,
                        at: now,
                    };
                    self.record_receipt(&receipt)?;
                    err = err.with_detail(json!({ "receipt": receipt }));
                }
                Err(err)
            }
        }
    }

    // ---- directory ----

    /// Which of a contact list are registered. Only a yes or no per entry
    /// comes back, never the owner.
    fn resolve_batch(&self, req: &ApiRequest) -> Result<ApiResponse, ApiError> {
        let body: ResolveBatchBody = req.json()?;
        if body.items.len() > RESOLVE_BATCH_MAX {
            return Err(ApiError::new(
                413,
                "BatchTooLarge",
                format!("at most {RESOLVE_BATCH_MAX} aliases per request"),
            ));
        }
        let engine = self.engine()?;
        let directory = engine.state().directory();
        let results: Vec<Value> = body
            .items
            .iter()
            .map(|item| match normalize_alias(item.kind, &item.value) {
                Ok(n) => json!({
                    "kind": item.kind,
                    "value": item.value,
                    "normalized": n,
                    "registered": directory.get(item.kind, &n).is_some(),
                }),
                Err(e) => json!({
                    "kind": item.kind,
                    "value": item.value,
                    "registered": false,
                    "error": e.to_string(),
                }),
            })
            .collect();
        Ok(ApiResponse::json(200, &json!({ "results": results })))
    }
}
