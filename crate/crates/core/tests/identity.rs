mod support;

use proptest::prelude::*;
use ups_core::aadhaar::{verhoeff_check_digit, verhoeff_valid};
use ups_core::{validate_aadhaar, AadhaarError};

use support::verhoeff;

#[test]
fn classic_check_digit() {
    assert_eq!(verhoeff::check_digit(&[2, 3, 6]), 3);
    assert_eq!(verhoeff_check_digit(&[2, 3, 6]), 3);
    assert!(verhoeff_valid(&[2, 3, 6, 3]));
}

#[test]
fn rejections_are_ordered() {
    assert_eq!(validate_aadhaar("23456789012"), Err(AadhaarError::BadLength));
    assert_eq!(validate_aadhaar("134567890124"), Err(AadhaarError::BadLeadingDigit));
    assert_eq!(validate_aadhaar("234567890125"), Err(AadhaarError::BadChecksum));
    assert_eq!(validate_aadhaar("2345 6789-0124").unwrap().as_str(), "234567890124");
}

fn digits(n: usize) -> impl Strategy<Value = Vec<u8>> {
    prop::collection::vec(0..10u8, n)
}

proptest! {
    #[test]
    fn check_digit_matches_oracle(body in digits(11)) {
        prop_assert_eq!(verhoeff_check_digit(&body), verhoeff::check_digit(&body));
    }

    #[test]
    fn validity_matches_oracle(d in digits(12)) {
        let s: String = d.iter().map(|x| char::from(b'0' + x)).collect();
        prop_assert_eq!(validate_aadhaar(&s).is_ok(), verhoeff::valid_aadhaar(&s));
    }

    #[test]
    fn single_substitution_is_caught(body in digits(11), pos in 0..12usize, delta in 1..10u8) {
        let mut d = body.clone();
        d.push(verhoeff::check_digit(&body));
        d[pos] = (d[pos] + delta) % 10;
        prop_assert!(!verhoeff_valid(&d));
    }

    #[test]
    fn adjacent_transposition_is_caught(body in digits(11), pos in 0..11usize) {
        let mut d = body.clone();
        d.push(verhoeff::check_digit(&body));
        prop_assume!(d[pos] != d[pos + 1]);
        d.swap(pos, pos + 1);
        prop_assert!(!verhoeff_valid(&d));
    }
}
