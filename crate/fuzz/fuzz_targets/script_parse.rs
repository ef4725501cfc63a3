// SPDX-License-Identifier: CC0-1.0

#![no_main]

use covenant_core::script::Script;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let script = Script::from_bytes(data.to_vec());
    if script.validate().is_ok() {
        let asm = script.to_asm();
        let again = Script::from_asm(&asm).expect("asm of a valid script parses");
        assert_eq!(again.to_asm(), asm);
    }
    if let Ok(text) = std::str::from_utf8(data) {
        let _ = Script::from_asm(text);
    }
});
