// SPDX-License-Identifier: CC0-1.0

#![no_main]

use covenant_core::tx::Transaction;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(tx) = Transaction::deserialize(data) {
        // decoding is strict, so a decoded transaction re-encodes to the input
        let with_witness = tx.has_witness();
        assert_eq!(tx.serialize(with_witness).unwrap(), data);
        assert_eq!(Transaction::from_hex(&tx.to_hex()).unwrap(), tx);
        let _ = tx.txid();
        let _ = tx.wtxid();
    }
});
