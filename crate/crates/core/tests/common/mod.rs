// SPDX-License-Identifier: CC0-1.0

#![allow(dead_code)]

use covenant_core::compose::{wallet_locking_script, FundingSource, Keyring};
use covenant_core::covenant::CustodialPolicy;
use covenant_core::crypto::PrivateKey;
use covenant_core::script::Script;
use covenant_core::tx::Amount;
use covenant_core::validator::{ChainConfig, ChainState};
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

pub fn rng(seed: u64) -> ChaCha20Rng {
    ChaCha20Rng::seed_from_u64(seed)
}

pub fn sat(v: u64) -> Amount {
    Amount::from_sat(v).unwrap()
}

pub struct Setup {
    pub chain: ChainState,
    pub keys: Keyring,
    pub custodian: PrivateKey,
    pub custody: CustodialPolicy,
    pub destination: Script,
    pub rng: ChaCha20Rng,
}

impl Setup {
    pub fn new(seed: u64) -> Setup {
        let mut rng = rng(seed);
        let custodian = PrivateKey::generate(&mut rng);
        let mut keys = Keyring::new();
        keys.insert(custodian.clone());
        let destination = wallet_locking_script(&PrivateKey::generate(&mut rng).public_key());
        Setup {
            chain: ChainState::new(ChainConfig::default()),
            custody: CustodialPolicy::single(custodian.public_key()),
            keys,
            custodian,
            destination,
            rng,
        }
    }

    pub fn fund(&mut self, amount: u64) -> FundingSource {
        let key = PrivateKey::generate(&mut self.rng);
        self.keys.insert(key.clone());
        FundingSource::mint(&mut self.chain, key, sat(amount))
    }
}
