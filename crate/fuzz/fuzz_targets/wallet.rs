// SPDX-License-Identifier: CC0-1.0

#![no_main]

use covenant_cli::CovenantWallet;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(wallet) = CovenantWallet::from_json(text) {
        let public = wallet.export_public();
        assert!(public.secrets.is_none());
        assert_eq!(CovenantWallet::from_json(&wallet.to_json()).unwrap(), wallet);
    }
});
