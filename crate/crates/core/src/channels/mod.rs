//! Inbound channel adapters. Each turns raw channel content into a
//! [`TransferIntent`](crate::transfer::TransferIntent) or a structured error;
//! none of them touch state.

pub mod crc;
pub mod money_order;
pub mod pos;
pub mod text;
pub mod voice;

use sha2::{Digest, Sha256};

/// Deterministic idempotency key over the parts of a message.
pub(crate) fn message_key(channel: &str, parts: &[&[u8]]) -> String {
    let mut h = Sha256::new();
    h.update(channel.as_bytes());
    for part in parts {
        h.update((part.len() as u64).to_be_bytes());
        h.update(part);
    }
    format!("{channel}:{}", hex::encode(h.finalize()))
}
