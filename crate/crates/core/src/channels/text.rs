//! SMS and e-mail instructions.
//!
//! Grammar, keywords case-insensitive, tokens separated by whitespace:
//!
//! ```text
//! PAY <amount> TO <KIND>:<value> [REF <token>]
//! KIND := PHONE | EMAIL | AADHAAR | ADDR
//! ```
//!
//! `<amount>` is rupees as `digits[.dd]`. An `ADDR` value is free text that
//! runs to the end of the line, or up to a trailing `REF <token>`, and names
//! the destination of an outbound money order.

use chrono::{DateTime, Utc};
use thiserror::Error;

use crate::aadhaar::{validate_aadhaar, AadhaarId};
use crate::auth::{AuthEvidence, AuthProof};
use crate::directory::{normalize_address, normalize_alias, AliasKind, DirectoryError};
use crate::money::{parse_rupees, render_rupees, AmountError, Money};
use crate::transfer::{Channel, PartySelector, Receiver, TransferIntent};

use super::message_key;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TextError {
    #[error("at byte {position}: expected {expected}")]
    Parse { position: usize, expected: &'static str },
    #[error("bad amount: {0}")]
    BadAmount(AmountError),
    #[error("bad origin: {0}")]
    BadOrigin(DirectoryError),
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RenderError {
    #[error("receiver has no text form")]
    UnsupportedReceiver,
    #[error("reference must be one non-empty token")]
    BadReference,
    #[error("address would read back with a different reference")]
    AmbiguousAddress,
    #[error("amount must be positive")]
    NonPositiveAmount,
}

/// Receiver named in a PAY command, already normalized.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Target {
    Phone(String),
    Email(String),
    Aadhaar(AadhaarId),
    Addr(String),
}

impl Target {
    pub fn receiver(&self) -> Receiver {
        match self {
            Target::Phone(v) => Receiver::Party(PartySelector::alias(AliasKind::Phone, v.clone())),
            Target::Email(v) => Receiver::Party(PartySelector::alias(AliasKind::Email, v.clone())),
            Target::Aadhaar(id) => Receiver::Party(PartySelector::aadhaar(*id)),
            Target::Addr(a) => Receiver::Postal { postal: a.clone() },
        }
    }

    pub fn from_receiver(receiver: &Receiver) -> Option<Target> {
        match receiver {
            Receiver::Party(PartySelector::ByAadhaar { aadhaar }) => Some(Target::Aadhaar(*aadhaar)),
            Receiver::Party(PartySelector::ByAlias { kind: AliasKind::Phone, value }) => {
                normalize_alias(AliasKind::Phone, value).ok().map(Target::Phone)
            }
            Receiver::Party(PartySelector::ByAlias { kind: AliasKind::Email, value }) => {
                normalize_alias(AliasKind::Email, value).ok().map(Target::Email)
            }
            Receiver::Postal { postal } => normalize_address(postal).map(Target::Addr),
            Receiver::Party(_) => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PayCommand {
    pub amount: Money,
    pub target: Target,
    pub reference: Option<String>,
}

impl PayCommand {
    pub fn render(&self) -> Result<String, RenderError> {
        if !self.amount.is_positive() {
            return Err(RenderError::NonPositiveAmount);
        }
        let (kind, value) = match &self.target {
            Target::Phone(v) => ("PHONE", v.clone()),
            Target::Email(v) => ("EMAIL", v.clone()),
            Target::Aadhaar(id) => ("AADHAAR", id.to_string()),
            Target::Addr(a) => {
                let words: Vec<&str> = a.split_whitespace().collect();
                let trailing_ref = words.len() >= 2 && words[words.len() - 2].eq_ignore_ascii_case("REF");
                if self.reference.is_none() && trailing_ref {
                    return Err(RenderError::AmbiguousAddress);
                }
                ("ADDR", a.clone())
            }
        };
        let mut out = format!("PAY {} TO {kind}:{value}", render_rupees(self.amount));
        if let Some(r) = &self.reference {
            if r.is_empty() || r.chars().any(char::is_whitespace) {
                return Err(RenderError::BadReference);
            }
            out.push_str(" REF ");
            out.push_str(r);
        }
        Ok(out)
    }
}

fn tokens(line: &str) -> Vec<(usize, &str)> {
    let mut out = Vec::new();
    let mut start = None;
    for (i, c) in line.char_indices() {
        match (c.is_whitespace(), start) {
            (true, Some(s)) => {
                out.push((s, &line[s..i]));
                start = None;
            }
            (false, None) => start = Some(i),
            _ => {}
        }
    }
    if let Some(s) = start {
        out.push((s, &line[s..]));
    }
    out
}

/// Parses one PAY line. Error positions are byte offsets into `line`.
pub fn parse_command(line: &str) -> Result<PayCommand, TextError> {
    let toks = tokens(line);
    let at = |i: usize| toks.get(i).map_or(line.len(), |t| t.0);
    let keyword = |i: usize, word: &'static str| -> Result<(), TextError> {
        match toks.get(i) {
            Some((_, t)) if t.eq_ignore_ascii_case(word) => Ok(()),
            _ => Err(TextError::Parse { position: at(i), expected: word }),
        }
    };
    keyword(0, "PAY")?;
    let amount = match toks.get(1) {
        None => return Err(TextError::Parse { position: line.len(), expected: "amount" }),
        Some((_, t)) => parse_rupees(t).map_err(TextError::BadAmount)?,
    };
    keyword(2, "TO")?;
    let Some(&(target_pos, target)) = toks.get(3) else {
        return Err(TextError::Parse { position: line.len(), expected: "KIND:value" });
    };
    let Some((kind, first)) = target.split_once(':') else {
        return Err(TextError::Parse { position: target_pos, expected: "KIND:value" });
    };
    let value_pos = target_pos + kind.len() + 1;
    let kind = kind.to_ascii_uppercase();

    let rest = &toks[4..];
    let (extra, reference) = match rest {
        [head @ .., (_, kw), (_, r)] if kw.eq_ignore_ascii_case("REF") => (head, Some(r.to_string())),
        _ => (rest, None),
    };
    let bad_value = |expected| TextError::Parse { position: value_pos, expected };
    let target = match kind.as_str() {
        "ADDR" => {
            let text = std::iter::once(first)
                .chain(extra.iter().map(|t| t.1))
                .collect::<Vec<_>>()
                .join(" ");
            Target::Addr(normalize_address(&text).ok_or(bad_value("postal address"))?)
        }
        "PHONE" | "EMAIL" | "AADHAAR" => {
            if let Some((pos, _)) = extra.first() {
                return Err(TextError::Parse {
                    position: *pos,
                    expected: "REF <token> or end of message",
                });
            }
            match kind.as_str() {
                "PHONE" => Target::Phone(normalize_alias(AliasKind::Phone, first).map_err(|_| bad_value("phone number"))?),
                "EMAIL" => Target::Email(normalize_alias(AliasKind::Email, first).map_err(|_| bad_value("e-mail address"))?),
                _ => Target::Aadhaar(validate_aadhaar(first).map_err(|_| bad_value("Aadhaar number"))?),
            }
        }
        _ => {
            return Err(TextError::Parse {
                position: target_pos,
                expected: "PHONE, EMAIL, AADHAAR or ADDR",
            })
        }
    };
    Ok(PayCommand { amount, target, reference })
}

fn intent(
    cmd: PayCommand,
    sender: PartySelector,
    proof: AuthProof,
    channel: Channel,
    key: String,
    received_at: DateTime<Utc>,
) -> TransferIntent {
    TransferIntent {
        sender,
        receiver: cmd.target.receiver(),
        amount: cmd.amount,
        channel,
        evidence: AuthEvidence::single(proof),
        idempotency_key: key,
        received_at,
    }
}

/// SMS from `origin_phone`. The sender is the wallet holding that phone and
/// the origin itself is the evidence.
pub fn parse_sms(origin_phone: &str, body: &str, received_at: DateTime<Utc>) -> Result<TransferIntent, TextError> {
    let origin = normalize_alias(AliasKind::Phone, origin_phone).map_err(TextError::BadOrigin)?;
    let cmd = parse_command(body)?;
    let reference = cmd.reference.clone().unwrap_or_default();
    let key = message_key("sms", &[origin.as_bytes(), body.as_bytes(), reference.as_bytes()]);
    Ok(intent(
        cmd,
        PartySelector::alias(AliasKind::Phone, origin.clone()),
        AuthProof::OriginPhone(origin),
        Channel::Sms,
        key,
        received_at,
    ))
}

/// E-mail from `from_addr`; the first non-blank body line is the command.
pub fn parse_email(from_addr: &str, body: &str, received_at: DateTime<Utc>) -> Result<TransferIntent, TextError> {
    let origin = normalize_alias(AliasKind::Email, from_addr).map_err(TextError::BadOrigin)?;
    let mut offset = 0;
    let mut line = None;
    for l in body.split_inclusive('\n') {
        if !l.trim().is_empty() {
            line = Some(l.trim_end_matches(['\n', '\r']));
            break;
        }
        offset += l.len();
    }
    let Some(line) = line else {
        return Err(TextError::Parse { position: body.len(), expected: "PAY" });
    };
    let cmd = parse_command(line).map_err(|e| match e {
        TextError::Parse { position, expected } => TextError::Parse {
            position: position + offset,
            expected,
        },
        other => other,
    })?;
    let reference = cmd.reference.clone().unwrap_or_default();
    let key = message_key("email", &[origin.as_bytes(), body.as_bytes(), reference.as_bytes()]);
    Ok(intent(
        cmd,
        PartySelector::alias(AliasKind::Email, origin.clone()),
        AuthProof::OriginEmail(origin),
        Channel::Email,
        key,
        received_at,
    ))
}

/// Message body that parses back to `intent` (without a reference).
pub fn render_intent(intent: &TransferIntent) -> Result<String, RenderError> {
    let target = Target::from_receiver(&intent.receiver).ok_or(RenderError::UnsupportedReceiver)?;
    PayCommand {
        amount: intent.amount,
        target,
        reference: None,
    }
    .render()
}
