//! Transport-independent request and response records, and the JSON bodies
//! the routes accept.

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::auth::{AuthError, AuthProof, Template};
use crate::directory::AliasKind;
use crate::ledger::WalletStatus;
use crate::transfer::{MoneyOrderState, PartySelector, Receiver};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Method {
    Get,
    Post,
    Delete,
    Other,
}

impl Method {
    pub fn parse(m: &str) -> Method {
        match m.to_ascii_uppercase().as_str() {
            "GET" => Method::Get,
            "POST" => Method::Post,
            "DELETE" => Method::Delete,
            _ => Method::Other,
        }
    }
}

#[derive(Clone, Debug)]
pub struct ApiRequest {
    pub method: Method,
    pub path: String,
    /// Lower-cased names.
    pub headers: Vec<(String, String)>,
    pub body: Vec<u8>,
}

impl ApiRequest {
    pub fn new(method: Method, path: &str) -> Self {
        ApiRequest {
            method,
            path: path.to_string(),
            headers: Vec::new(),
            body: Vec::new(),
        }
    }

    pub fn get(path: &str) -> Self {
        Self::new(Method::Get, path)
    }

    pub fn post_json(path: &str, body: &Value) -> Self {
        let mut r = Self::new(Method::Post, path).with_header("content-type", "application/json");
        r.body = body.to_string().into_bytes();
        r
    }

    pub fn post_bytes(path: &str, body: impl Into<Vec<u8>>) -> Self {
        let mut r = Self::new(Method::Post, path);
        r.body = body.into();
        r
    }

    pub fn with_header(mut self, name: &str, value: &str) -> Self {
        self.headers.push((name.to_ascii_lowercase(), value.to_string()));
        self
    }

    pub fn bearer(self, token: &str) -> Self {
        self.with_header("authorization", &format!("Bearer {token}"))
    }

    pub fn outlet(self, id: &str, key: &str) -> Self {
        self.with_header("x-outlet-id", id).with_header("x-outlet-key", key)
    }

    pub fn header(&self, name: &str) -> Option<&str> {
        self.headers
            .iter()
            .find(|(n, _)| n.eq_ignore_ascii_case(name))
            .map(|(_, v)| v.as_str())
    }

    pub(crate) fn json<T: DeserializeOwned>(&self) -> Result<T, ApiError> {
        serde_json::from_slice(&self.body).map_err(|e| ApiError::bad_request(format!("request body: {e}")))
    }

    pub(crate) fn text(&self) -> Result<&str, ApiError> {
        std::str::from_utf8(&self.body).map_err(|_| ApiError::bad_request("request body is not UTF-8"))
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ApiResponse {
    pub status: u16,
    pub content_type: &'static str,
    pub body: Vec<u8>,
}

impl ApiResponse {
    pub fn json(status: u16, value: &Value) -> Self {
        ApiResponse {
            status,
            content_type: "application/json",
            body: value.to_string().into_bytes(),
        }
    }

    pub fn ok<T: Serialize>(value: &T) -> Self {
        Self::json(200, &serde_json::to_value(value).expect("response serializes"))
    }

    pub fn bytes(status: u16, body: Vec<u8>) -> Self {
        ApiResponse {
            status,
            content_type: "application/octet-stream",
            body,
        }
    }

    /// Body parsed as JSON, `Null` when it is not JSON.
    pub fn json_body(&self) -> Value {
        serde_json::from_slice(&self.body).unwrap_or(Value::Null)
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ApiError {
    pub status: u16,
    pub code: &'static str,
    pub message: String,
    pub detail: Option<Value>,
}

impl ApiError {
    pub fn new(status: u16, code: &'static str, message: impl Into<String>) -> Self {
        ApiError {
            status,
            code,
            message: message.into(),
            detail: None,
        }
    }

    pub fn bad_request(message: impl Into<String>) -> Self {
        Self::new(400, "BadRequest", message)
    }

    pub fn unauthorized(message: impl Into<String>) -> Self {
        Self::new(401, "Unauthorized", message)
    }

    pub fn forbidden(message: impl Into<String>) -> Self {
        Self::new(403, "Forbidden", message)
    }

    pub fn not_found(message: impl Into<String>) -> Self {
        Self::new(404, "NotFound", message)
    }

    pub fn with_detail(mut self, detail: Value) -> Self {
        self.detail = Some(detail);
        self
    }

    pub fn into_response(self) -> ApiResponse {
        let mut body = json!({ "error": self.code, "message": self.message });
        if let Some(d) = self.detail {
            body["detail"] = d;
        }
        ApiResponse::json(self.status, &body)
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OpenWalletBody {
    pub aadhaar: String,
}

#[derive(Deserialize, Serialize, Clone, Debug)]
#[serde(deny_unknown_fields)]
pub struct AliasBody {
    pub kind: AliasKind,
    pub value: String,
}

#[derive(Deserialize)]
pub struct LoginBody {
    #[serde(flatten)]
    pub who: PartySelector,
    pub password: String,
}

/// A proof submitted over the web. Origin proofs are never accepted here:
/// they come only from the channel a message arrived on.
#[derive(Deserialize, Clone, Debug)]
#[serde(tag = "factor", rename_all = "SCREAMING_SNAKE_CASE", deny_unknown_fields)]
pub enum ProofBody {
    Password { password: String },
    Fingerprint { template: String },
    Voice { template: String, transcript: String },
    Card { number: String, pin: String },
}

impl ProofBody {
    pub fn into_proof(self) -> Result<AuthProof, AuthError> {
        Ok(match self {
            ProofBody::Password { password } => AuthProof::Password(password),
            ProofBody::Fingerprint { template } => AuthProof::FingerprintSample(Template::from_hex(&template)?),
            ProofBody::Voice { template, transcript } => AuthProof::VoiceSample {
                template: Template::from_hex(&template)?,
                transcript,
            },
            ProofBody::Card { number, pin } => AuthProof::CardSwipe { number, pin },
        })
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TransferBody {
    pub sender: Option<PartySelector>,
    pub receiver: Receiver,
    pub amount_paise: i64,
    pub idempotency_key: Option<String>,
    #[serde(default)]
    pub proofs: Vec<ProofBody>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MoneyOrderBody {
    pub sender: Option<PartySelector>,
    pub destination: String,
    pub amount_paise: i64,
    pub idempotency_key: Option<String>,
    #[serde(default)]
    pub proofs: Vec<ProofBody>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BankTransferBody {
    pub amount_paise: i64,
    pub idempotency_key: Option<String>,
    #[serde(default)]
    pub proofs: Vec<ProofBody>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CashBody {
    pub customer: PartySelector,
    pub amount_paise: i64,
    pub idempotency_key: Option<String>,
    #[serde(default)]
    pub proofs: Vec<ProofBody>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MessageBody {
    pub from: String,
    pub body: String,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VoiceBody {
    pub transcript: String,
    pub template: String,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AdvanceBody {
    pub state: MoneyOrderState,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StatusBody {
    pub status: WalletStatus,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ResolveBatchBody {
    pub items: Vec<AliasBody>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TerminalBody {
    pub terminal_id: String,
    pub merchant: String,
}
