mod common;

use common::arb_label;
use parcel_core::codec::{crc8, decode, encode, MAX_PAYLOAD_LEN};
use parcel_core::model::ZoneSet;
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(2000))]

    #[test]
    fn encode_then_decode_is_identity(label in arb_label()) {
        let payload = encode(&label);
        prop_assert!(payload.len() <= MAX_PAYLOAD_LEN);
        prop_assert!(payload.bytes().all(|b| (0x21..=0x7e).contains(&b)));
        prop_assert_eq!(decode(&payload, &ZoneSet::default()).unwrap(), label);
    }

    #[test]
    fn encoding_is_injective(a in arb_label(), b in arb_label()) {
        prop_assert_eq!(a == b, encode(&a) == encode(&b));
    }

    #[test]
    fn every_single_byte_substitution_is_rejected(label in arb_label(), pos in any::<prop::sample::Index>(), byte in 0x21u8..=0x7e) {
        let payload = encode(&label);
        let mut bytes = payload.clone().into_bytes();
        let i = pos.index(bytes.len());
        prop_assume!(bytes[i] != byte);
        bytes[i] = byte;
        let mutated = String::from_utf8(bytes).unwrap();
        prop_assert!(decode(&mutated, &ZoneSet::default()).is_err(), "{} accepted", mutated);
    }

    #[test]
    fn decode_is_total_on_arbitrary_input(s in "\\PC{0,80}") {
        let _ = decode(&s, &ZoneSet::default());
    }

    #[test]
    fn crc_appended_checks_to_zero(bytes in proptest::collection::vec(any::<u8>(), 0..64)) {
        let mut framed = bytes.clone();
        framed.push(crc8(&bytes));
        prop_assert_eq!(crc8(&framed), 0);
    }
}
