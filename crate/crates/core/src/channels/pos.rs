//! Point-of-sale wire frames.
//!
//! ```text
//! "PS" | 0x01 | msg_type | terminal_id[8] | amount u64 BE (paise)
//!      | fields: (u16 BE length, bytes)*  | crc16 BE
//! ```
//!
//! The CRC is CRC-16/CCITT-FALSE over every preceding byte. Payload fields by
//! message type:
//!
//! | type | fields |
//! |------|--------|
//! | 0x01 FINGERPRINT_PAY | template (64), receiver phone (0 or 12 ASCII digits) |
//! | 0x02 CARD_PAY | card number (16 ASCII digits), PIN (4 ASCII digits) |
//! | 0x03 ACK | transaction id (UTF-8) |
//! | 0x04 NAK | reason (UTF-8) |

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use chrono::{DateTime, Utc};
use thiserror::Error;

use crate::aadhaar::AadhaarId;
use crate::auth::{AuthEvidence, AuthProof, Template, TEMPLATE_BYTES};
use crate::directory::AliasKind;
use crate::money::Money;
use crate::transfer::{Channel, PartySelector, Receiver, Transaction, TransferIntent};

use super::crc::crc16_ccitt_false;
use super::message_key;

pub const MAGIC: [u8; 2] = *b"PS";
pub const VERSION: u8 = 0x01;
const HEADER_LEN: usize = 20;
const CRC_LEN: usize = 2;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PosError {
    #[error("frame does not start with \"PS\"")]
    BadMagic,
    #[error("unsupported frame version {0}")]
    BadVersion(u8),
    #[error("CRC mismatch")]
    BadCrc,
    #[error("frame or field length is wrong")]
    BadLength,
    #[error("unknown message type {0:#04x}")]
    BadMsgType(u8),
    #[error("malformed {0} field")]
    BadField(&'static str),
    #[error("amount does not fit")]
    BadAmount,
    #[error("terminal is not registered and the frame names no receiver")]
    UnregisteredTerminalAndNoReceiver,
    #[error("ACK and NAK frames are responses, not requests")]
    NotARequest,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct TerminalId(pub [u8; 8]);

impl fmt::Display for TerminalId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.0.iter().all(u8::is_ascii_graphic) {
            f.write_str(std::str::from_utf8(&self.0).expect("ascii"))
        } else {
            f.write_str(&hex::encode(self.0))
        }
    }
}

impl FromStr for TerminalId {
    type Err = PosError;

    /// Eight printable ASCII characters, or sixteen hex digits.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let mut id = [0u8; 8];
        if s.len() == 8 && s.bytes().all(|b| b.is_ascii_graphic()) {
            id.copy_from_slice(s.as_bytes());
        } else {
            let bytes = hex::decode(s).map_err(|_| PosError::BadField("terminal id"))?;
            if bytes.len() != 8 {
                return Err(PosError::BadField("terminal id"));
            }
            id.copy_from_slice(&bytes);
        }
        Ok(TerminalId(id))
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum PosPayload {
    FingerprintPay {
        template: Template,
        /// Normalized 12-digit phone of the receiver, if the frame names one.
        receiver_phone: Option<String>,
    },
    CardPay {
        card: String,
        pin: String,
    },
    Ack {
        txn_id: String,
    },
    Nak {
        reason: String,
    },
}

impl PosPayload {
    pub fn msg_type(&self) -> u8 {
        match self {
            PosPayload::FingerprintPay { .. } => 0x01,
            PosPayload::CardPay { .. } => 0x02,
            PosPayload::Ack { .. } => 0x03,
            PosPayload::Nak { .. } => 0x04,
        }
    }

    fn fields(&self) -> Vec<&[u8]> {
        match self {
            PosPayload::FingerprintPay { template, receiver_phone } => vec![
                template.as_bytes().as_slice(),
                receiver_phone.as_deref().unwrap_or("").as_bytes(),
            ],
            PosPayload::CardPay { card, pin } => vec![card.as_bytes(), pin.as_bytes()],
            PosPayload::Ack { txn_id } => vec![txn_id.as_bytes()],
            PosPayload::Nak { reason } => vec![reason.as_bytes()],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PosFrame {
    pub terminal_id: TerminalId,
    pub amount: u64,
    pub payload: PosPayload,
}

fn digits(bytes: &[u8], len: usize, what: &'static str) -> Result<String, PosError> {
    if bytes.len() != len || !bytes.iter().all(u8::is_ascii_digit) {
        return Err(PosError::BadField(what));
    }
    Ok(String::from_utf8(bytes.to_vec()).expect("ascii digits"))
}

impl PosFrame {
    /// Fails only when a field is longer than the 16-bit length prefix allows.
    pub fn encode(&self) -> Result<Vec<u8>, PosError> {
        let mut out = Vec::with_capacity(HEADER_LEN + 96);
        out.extend_from_slice(&MAGIC);
        out.push(VERSION);
        out.push(self.payload.msg_type());
        out.extend_from_slice(&self.terminal_id.0);
        out.extend_from_slice(&self.amount.to_be_bytes());
        for field in self.payload.fields() {
            let len = u16::try_from(field.len()).map_err(|_| PosError::BadLength)?;
            out.extend_from_slice(&len.to_be_bytes());
            out.extend_from_slice(field);
        }
        let crc = crc16_ccitt_false(&out);
        out.extend_from_slice(&crc.to_be_bytes());
        Ok(out)
    }

    /// The CRC is checked before anything else, so a corrupted frame is
    /// always reported as `BadCrc`.
    pub fn decode(bytes: &[u8]) -> Result<PosFrame, PosError> {
        if bytes.len() < HEADER_LEN + CRC_LEN {
            return Err(PosError::BadLength);
        }
        let (body, crc) = bytes.split_at(bytes.len() - CRC_LEN);
        if crc16_ccitt_false(body) != u16::from_be_bytes([crc[0], crc[1]]) {
            return Err(PosError::BadCrc);
        }
        if body[..2] != MAGIC {
            return Err(PosError::BadMagic);
        }
        if body[2] != VERSION {
            return Err(PosError::BadVersion(body[2]));
        }
        let msg_type = body[3];
        let terminal_id = TerminalId(body[4..12].try_into().expect("8 bytes"));
        let amount = u64::from_be_bytes(body[12..20].try_into().expect("8 bytes"));

        let mut fields = Vec::new();
        let mut rest = &body[HEADER_LEN..];
        while !rest.is_empty() {
            if rest.len() < 2 {
                return Err(PosError::BadLength);
            }
            let len = u16::from_be_bytes([rest[0], rest[1]]) as usize;
            if rest.len() < 2 + len {
                return Err(PosError::BadLength);
            }
            fields.push(&rest[2..2 + len]);
            rest = &rest[2 + len..];
        }

        let payload = match (msg_type, fields.as_slice()) {
            (0x01, [template, phone]) => {
                if template.len() != TEMPLATE_BYTES {
                    return Err(PosError::BadLength);
                }
                let receiver_phone = match phone.len() {
                    0 => None,
                    _ => Some(digits(phone, 12, "receiver phone")?),
                };
                PosPayload::FingerprintPay {
                    template: Template::from_bytes(template).map_err(|_| PosError::BadLength)?,
                    receiver_phone,
                }
            }
            (0x02, [card, pin]) => PosPayload::CardPay {
                card: digits(card, 16, "card number")?,
                pin: digits(pin, 4, "PIN")?,
            },
            (0x03, [txn_id]) => PosPayload::Ack {
                txn_id: String::from_utf8(txn_id.to_vec()).map_err(|_| PosError::BadField("transaction id"))?,
            },
            (0x04, [reason]) => PosPayload::Nak {
                reason: String::from_utf8(reason.to_vec()).map_err(|_| PosError::BadField("reason"))?,
            },
            (0x01..=0x04, _) => return Err(PosError::BadLength),
            (other, _) => return Err(PosError::BadMsgType(other)),
        };
        Ok(PosFrame {
            terminal_id,
            amount,
            payload,
        })
    }
}

/// Terminals registered to a merchant wallet. Each terminal maps to exactly
/// one wallet.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct TerminalRegistry {
    merchants: BTreeMap<TerminalId, AadhaarId>,
}

impl TerminalRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    /// Registers or re-points `terminal`.
    pub fn register(&mut self, terminal: TerminalId, merchant: AadhaarId) {
        self.merchants.insert(terminal, merchant);
    }

    pub fn merchant(&self, terminal: &TerminalId) -> Option<AadhaarId> {
        self.merchants.get(terminal).copied()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&TerminalId, &AadhaarId)> {
        self.merchants.iter()
    }
}

/// Turns a decoded payment request into an intent. A registered terminal
/// pays its merchant; otherwise a fingerprint frame must name a receiver
/// phone. The idempotency key is a digest of the raw frame, so a terminal
/// retrying the same frame cannot pay twice.
pub fn pos_intent(
    frame: &PosFrame,
    raw: &[u8],
    terminals: &TerminalRegistry,
    received_at: DateTime<Utc>,
) -> Result<TransferIntent, PosError> {
    let amount = i64::try_from(frame.amount).map_err(|_| PosError::BadAmount)?;
    let merchant = terminals.merchant(&frame.terminal_id);
    let (sender, proof, phone) = match &frame.payload {
        PosPayload::FingerprintPay { template, receiver_phone } => (
            PartySelector::alias(AliasKind::Fingerprint, template.to_hex()),
            AuthProof::FingerprintSample(*template),
            receiver_phone.clone(),
        ),
        PosPayload::CardPay { card, pin } => (
            PartySelector::alias(AliasKind::Card, card.clone()),
            AuthProof::CardSwipe {
                number: card.clone(),
                pin: pin.clone(),
            },
            None,
        ),
        PosPayload::Ack { .. } | PosPayload::Nak { .. } => return Err(PosError::NotARequest),
    };
    let receiver = match (merchant, phone) {
        (Some(m), _) => PartySelector::aadhaar(m),
        (None, Some(p)) => PartySelector::alias(AliasKind::Phone, p),
        (None, None) => return Err(PosError::UnregisteredTerminalAndNoReceiver),
    };
    Ok(TransferIntent {
        sender,
        receiver: Receiver::Party(receiver),
        amount: Money::from_paise(amount),
        channel: Channel::Pos,
        evidence: AuthEvidence::single(proof),
        idempotency_key: message_key("pos", &[raw]),
        received_at,
    })
}

/// Decodes `bytes` and builds the intent in one step.
pub fn decode_pos_request(
    bytes: &[u8],
    terminals: &TerminalRegistry,
    received_at: DateTime<Utc>,
) -> Result<TransferIntent, PosError> {
    let frame = PosFrame::decode(bytes)?;
    pos_intent(&frame, bytes, terminals, received_at)
}

/// ACK carrying the transaction id when `txn` settled, NAK carrying the
/// final state otherwise.
pub fn encode_pos_response(terminal_id: TerminalId, txn: &Transaction) -> Vec<u8> {
    let payload = if txn.is_settled() {
        PosPayload::Ack { txn_id: txn.id.clone() }
    } else {
        PosPayload::Nak {
            reason: format!("{} {}", txn.id, txn.state),
        }
    };
    let frame = PosFrame {
        terminal_id,
        amount: txn.amount.paise().max(0) as u64,
        payload,
    };
    frame.encode().expect("short response fields")
}

/// NAK for a request that never became a transaction.
pub fn encode_pos_nak(terminal_id: TerminalId, amount: u64, reason: &str) -> Vec<u8> {
    let mut reason = reason.to_string();
    reason.truncate(512);
    PosFrame {
        terminal_id,
        amount,
        payload: PosPayload::Nak { reason },
    }
    .encode()
    .expect("short response fields")
}
