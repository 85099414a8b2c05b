//! Aadhaar number validation.
//!
//! A valid number has exactly 12 decimal digits, a leading digit in `2..=9`
//! and a trailing Verhoeff check digit computed over the first eleven.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

/// Multiplication table of the dihedral group D5.
const D: [[u8; 10]; 10] = [
    [0, 1, 2, 3, 4, 5, 6, 7, 8, 9],
    [1, 2, 3, 4, 0, 6, 7, 8, 9, 5],
    [2, 3, 4, 0, 1, 7, 8, 9, 5, 6],
    [3, 4, 0, 1, 2, 8, 9, 5, 6, 7],
    [4, 0, 1, 2, 3, 9, 5, 6, 7, 8],
    [5, 9, 8, 7, 6, 0, 4, 3, 2, 1],
    [6, 5, 9, 8, 7, 1, 0, 4, 3, 2],
    [7, 6, 5, 9, 8, 2, 1, 0, 4, 3],
    [8, 7, 6, 5, 9, 3, 2, 1, 0, 4],
    [9, 8, 7, 6, 5, 4, 3, 2, 1, 0],
];

/// Position-dependent permutation table.
const P: [[u8; 10]; 8] = [
    [0, 1, 2, 3, 4, 5, 6, 7, 8, 9],
    [1, 5, 7, 6, 2, 8, 3, 0, 9, 4],
    [5, 8, 0, 3, 7, 9, 6, 1, 4, 2],
    [8, 9, 1, 6, 0, 4, 3, 5, 2, 7],
    [9, 4, 5, 3, 1, 2, 6, 8, 7, 0],
    [4, 2, 8, 6, 5, 7, 3, 9, 0, 1],
    [2, 7, 9, 3, 8, 0, 6, 4, 1, 5],
    [7, 0, 4, 6, 9, 1, 3, 2, 5, 8],
];

const INV: [u8; 10] = [0, 4, 3, 2, 1, 5, 6, 7, 8, 9];

/// Returns true when `digits` (values 0..=9, check digit last) has a zero
/// Verhoeff checksum.
pub fn verhoeff_valid(digits: &[u8]) -> bool {
    let c = digits
        .iter()
        .rev()
        .enumerate()
        .fold(0u8, |c, (i, &d)| D[c as usize][P[i % 8][d as usize] as usize]);
    c == 0
}

/// Computes the Verhoeff check digit to append to `digits`.
pub fn verhoeff_check_digit(digits: &[u8]) -> u8 {
    let c = digits
        .iter()
        .rev()
        .enumerate()
        .fold(0u8, |c, (i, &d)| {
            D[c as usize][P[(i + 1) % 8][d as usize] as usize]
        });
    INV[c as usize]
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
pub enum AadhaarError {
    #[error("an Aadhaar number has exactly 12 decimal digits")]
    BadLength,
    #[error("an Aadhaar number cannot start with 0 or 1")]
    BadLeadingDigit,
    #[error("Verhoeff check digit mismatch")]
    BadChecksum,
}

/// A validated 12-digit Aadhaar number; the primary key of a wallet.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct AadhaarId([u8; 12]);

impl AadhaarId {
    pub fn as_str(&self) -> &str {
        // Only ASCII digits are ever stored.
        std::str::from_utf8(&self.0).expect("ascii digits")
    }
}

/// Strips spaces and hyphens, then checks length, leading digit and checksum
/// in that order.
pub fn validate_aadhaar(raw: &str) -> Result<AadhaarId, AadhaarError> {
    let cleaned: Vec<u8> = raw
        .bytes()
        .filter(|b| *b != b' ' && *b != b'-')
        .collect();
    if cleaned.len() != 12 || !cleaned.iter().all(u8::is_ascii_digit) {
        return Err(AadhaarError::BadLength);
    }
    if !(b'2'..=b'9').contains(&cleaned[0]) {
        return Err(AadhaarError::BadLeadingDigit);
    }
    let values: Vec<u8> = cleaned.iter().map(|b| b - b'0').collect();
    if !verhoeff_valid(&values) {
        return Err(AadhaarError::BadChecksum);
    }
    let mut out = [0u8; 12];
    out.copy_from_slice(&cleaned);
    Ok(AadhaarId(out))
}

impl FromStr for AadhaarId {
    type Err = AadhaarError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        validate_aadhaar(s)
    }
}

impl fmt::Display for AadhaarId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl fmt::Debug for AadhaarId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "AadhaarId({})", self.as_str())
    }
}

impl Serialize for AadhaarId {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(self.as_str())
    }
}

impl<'de> Deserialize<'de> for AadhaarId {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        validate_aadhaar(&s).map_err(serde::de::Error::custom)
    }
}
