// SPDX-License-Identifier: CC0-1.0

#![no_main]

use covenant_core::crypto::{decode_witness_signature, der_decode, der_encode};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(sig) = der_decode(data) {
        // strict DER has one encoding per signature
        assert_eq!(der_encode(&sig), data);
    }
    if let Ok((sig, ty)) = decode_witness_signature(data) {
        assert_eq!(sig.to_witness_bytes(ty), data);
    }
});
