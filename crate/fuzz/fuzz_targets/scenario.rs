// SPDX-License-Identifier: CC0-1.0

#![no_main]

use covenant_core::protocol::Scenario;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    // parsing only: running a scenario is bounded by its own timeout, not by size
    let _ = Scenario::from_json(text);
});
