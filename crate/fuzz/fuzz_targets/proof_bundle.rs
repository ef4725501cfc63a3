// SPDX-License-Identifier: CC0-1.0

#![no_main]

use covenant_core::covenant::{verify_proof, ProofBundle};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(bundle) = serde_json::from_str::<ProofBundle>(text) {
        let _ = verify_proof(&bundle);
    }
});
