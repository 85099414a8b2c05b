//! Voice calls, taken as an already transcribed text plus the caller's voice
//! template.
//!
//! ```text
//! [MY AADHAAR <12 digits>] TRANSFER <amount> RUPEES TO
//!     ( EMAIL <addr> | PHONE <digits> | HOME ADDRESS <free text to end> )
//! ```
//!
//! Keywords are case-insensitive. Without a stated Aadhaar number the caller
//! is identified by matching the template against enrolled voice prints.

use chrono::{DateTime, Utc};
use thiserror::Error;

use crate::aadhaar::{validate_aadhaar, AadhaarId};
use crate::auth::{AuthEvidence, AuthProof, Template};
use crate::directory::{normalize_address, normalize_alias, AliasKind};
use crate::money::{parse_rupees, AmountError};
use crate::transfer::{Channel, PartySelector, Receiver, TransferIntent};

use super::message_key;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum VoiceError {
    #[error("at word {position}: expected {expected}")]
    Parse { position: usize, expected: &'static str },
    #[error("bad amount: {0}")]
    BadAmount(AmountError),
    #[error("voice matches {matches} enrolled callers; state the Aadhaar number")]
    AmbiguousSender { matches: usize },
}

/// Parses `transcript`. `identify` returns the owners whose enrolled voice
/// template is within the matching threshold of `sample`.
pub fn parse_voice_transcript(
    transcript: &str,
    sample: &Template,
    received_at: DateTime<Utc>,
    identify: impl FnOnce(&Template) -> Vec<AadhaarId>,
) -> Result<TransferIntent, VoiceError> {
    let words: Vec<&str> = transcript.split_whitespace().collect();
    let mut pos = 0;
    let is = |i: usize, w: &str| words.get(i).is_some_and(|x| x.eq_ignore_ascii_case(w));
    let expect = |i: usize, w: &'static str| -> Result<(), VoiceError> {
        if is(i, w) {
            Ok(())
        } else {
            Err(VoiceError::Parse { position: i, expected: w })
        }
    };

    let mut stated = None;
    if is(0, "MY") {
        expect(1, "AADHAAR")?;
        let id = words
            .get(2)
            .and_then(|w| validate_aadhaar(w).ok())
            .ok_or(VoiceError::Parse {
                position: 2,
                expected: "Aadhaar number",
            })?;
        stated = Some(id);
        pos = 3;
    }
    expect(pos, "TRANSFER")?;
    let amount = words
        .get(pos + 1)
        .ok_or(VoiceError::Parse {
            position: pos + 1,
            expected: "amount",
        })
        .and_then(|w| parse_rupees(w).map_err(VoiceError::BadAmount))?;
    expect(pos + 2, "RUPEES")?;
    expect(pos + 3, "TO")?;
    let at = pos + 4;
    let single = |i: usize, kind: AliasKind, expected: &'static str| {
        match words.get(i..) {
            Some([w]) => normalize_alias(kind, w).ok(),
            _ => None,
        }
        .ok_or(VoiceError::Parse { position: i, expected })
    };
    let receiver = if is(at, "EMAIL") {
        Receiver::Party(PartySelector::alias(
            AliasKind::Email,
            single(at + 1, AliasKind::Email, "e-mail address")?,
        ))
    } else if is(at, "PHONE") {
        Receiver::Party(PartySelector::alias(
            AliasKind::Phone,
            single(at + 1, AliasKind::Phone, "phone number")?,
        ))
    } else if is(at, "HOME") {
        expect(at + 1, "ADDRESS")?;
        let text = words.get(at + 2..).unwrap_or_default().join(" ");
        let postal = normalize_address(&text).ok_or(VoiceError::Parse {
            position: at + 2,
            expected: "postal address",
        })?;
        Receiver::Postal { postal }
    } else {
        return Err(VoiceError::Parse {
            position: at,
            expected: "EMAIL, PHONE or HOME ADDRESS",
        });
    };

    let sender = match stated {
        Some(id) => id,
        None => match identify(sample).as_slice() {
            [only] => *only,
            many => return Err(VoiceError::AmbiguousSender { matches: many.len() }),
        },
    };
    let key = message_key("voice", &[sample.as_bytes(), transcript.as_bytes()]);
    Ok(TransferIntent {
        sender: PartySelector::aadhaar(sender),
        receiver,
        amount,
        channel: Channel::Voice,
        evidence: AuthEvidence::single(AuthProof::VoiceSample {
            template: *sample,
            transcript: transcript.to_string(),
        }),
        idempotency_key: key,
        received_at,
    })
}
