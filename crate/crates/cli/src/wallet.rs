// SPDX-License-Identifier: CC0-1.0

//! The covenant wallet file.
//!
//! Public data (custodial public keys, covenant packages, graphs and proofs) lives at
//! the top level. Private keys and signature seeds live in the `secrets` section,
//! which `export_public` drops. Every package is a covenant proof bundle and is
//! verified when the wallet is loaded.

use std::path::Path;

use covenant_core::compose::{CovenantGraph, Keyring};
use covenant_core::covenant::{verify_proof, ProofBundle, ProofKind};
use covenant_core::crypto::{PrivateKey, PublicKey, SignatureSeeds};
use serde::{Deserialize, Serialize};

use crate::input::{parse_json, ParseError};

pub const WALLET_FORMAT: u32 = 1;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum WalletError {
    #[error(transparent)]
    Parse(#[from] ParseError),
    #[error("unsupported wallet format {0}")]
    Format(u32),
    #[error("package {label:?} rejected: {reason}: {detail}")]
    PackageRejected { label: String, reason: &'static str, detail: String },
    #[error("secret key {0} has no matching public entry")]
    OrphanSecret(PublicKey),
    #[error("duplicate label {0:?}")]
    DuplicateLabel(String),
    #[error("{0}")]
    Io(String),
}

/// A private key stored as hex.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StoredKey {
    pub label: String,
    #[serde(with = "secret_hex")]
    pub secret: PrivateKey,
}

mod secret_hex {
    use covenant_core::crypto::PrivateKey;
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(k: &PrivateKey, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&hex::encode(k.to_bytes()))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<PrivateKey, D::Error> {
        let s = String::deserialize(d)?;
        let bytes: [u8; 32] = hex::decode(&s)
            .map_err(serde::de::Error::custom)?
            .try_into()
            .map_err(|_| serde::de::Error::custom("private key must be 32 bytes"))?;
        PrivateKey::from_bytes(&bytes).map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StoredSeeds {
    pub label: String,
    pub seeds: SignatureSeeds,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Secrets {
    #[serde(default)]
    pub keys: Vec<StoredKey>,
    #[serde(default)]
    pub seeds: Vec<StoredSeeds>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PublicEntry {
    pub label: String,
    pub key: PublicKey,
    /// Whether the key is one of the wallet's custodial keys.
    #[serde(default)]
    pub custodial: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StoredPackage {
    pub label: String,
    pub bundle: ProofBundle,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StoredGraph {
    pub label: String,
    pub graph: CovenantGraph,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CovenantWallet {
    pub format: u32,
    #[serde(default)]
    pub keys: Vec<PublicEntry>,
    #[serde(default)]
    pub packages: Vec<StoredPackage>,
    #[serde(default)]
    pub graphs: Vec<StoredGraph>,
    #[serde(default)]
    pub proofs: Vec<StoredPackage>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub secrets: Option<Secrets>,
}

impl Default for CovenantWallet {
    fn default() -> CovenantWallet {
        CovenantWallet::new()
    }
}

fn check_package(p: &StoredPackage) -> Result<(), WalletError> {
    if p.bundle.kind != ProofKind::Covenant {
        return Err(WalletError::PackageRejected {
            label: p.label.clone(),
            reason: "format",
            detail: "packages must be covenant bundles".into(),
        });
    }
    verify_proof(&p.bundle).map(|_| ()).map_err(|r| WalletError::PackageRejected {
        label: p.label.clone(),
        reason: r.reason,
        detail: r.detail,
    })
}

impl CovenantWallet {
    pub fn new() -> CovenantWallet {
        CovenantWallet {
            format: WALLET_FORMAT,
            keys: Vec::new(),
            packages: Vec::new(),
            graphs: Vec::new(),
            proofs: Vec::new(),
            secrets: Some(Secrets::default()),
        }
    }

    /// Parses and verifies a wallet.
    pub fn from_json(text: &str) -> Result<CovenantWallet, WalletError> {
        let w: CovenantWallet = parse_json("wallet", text)?;
        if w.format != WALLET_FORMAT {
            return Err(WalletError::Format(w.format));
        }
        w.packages.iter().try_for_each(check_package)?;
        if let Some(s) = &w.secrets {
            for k in &s.keys {
                let pk = k.secret.public_key();
                if !w.keys.iter().any(|e| e.key == pk && e.label == k.label) {
                    return Err(WalletError::OrphanSecret(pk));
                }
            }
        }
        Ok(w)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("wallet serializes")
    }

    /// Loads `path`, or returns an empty wallet when it does not exist.
    pub fn load_or_new(path: &Path) -> Result<CovenantWallet, WalletError> {
        match std::fs::read_to_string(path) {
            Ok(text) => CovenantWallet::from_json(&text),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(CovenantWallet::new()),
            Err(e) => Err(WalletError::Io(format!("{}: {e}", path.display()))),
        }
    }

    pub fn save(&self, path: &Path) -> Result<(), WalletError> {
        std::fs::write(path, self.to_json() + "\n").map_err(|e| WalletError::Io(format!("{}: {e}", path.display())))
    }

    /// The wallet without its secrets section.
    pub fn export_public(&self) -> CovenantWallet {
        CovenantWallet { secrets: None, ..self.clone() }
    }

    pub fn is_watch_only(&self) -> bool {
        self.secrets.as_ref().is_none_or(|s| s.keys.is_empty())
    }

    fn label_free<T>(items: &[T], label: &str, get: impl Fn(&T) -> &str) -> Result<(), WalletError> {
        if items.iter().any(|i| get(i) == label) {
            return Err(WalletError::DuplicateLabel(label.into()));
        }
        Ok(())
    }

    /// Stores a key pair; the secret goes to the secrets section.
    pub fn add_key(&mut self, label: &str, key: PrivateKey, custodial: bool) -> Result<PublicKey, WalletError> {
        Self::label_free(&self.keys, label, |e| &e.label)?;
        let pk = key.public_key();
        self.keys.push(PublicEntry { label: label.into(), key: pk, custodial });
        self.secrets.get_or_insert_with(Secrets::default).keys.push(StoredKey { label: label.into(), secret: key });
        Ok(pk)
    }

    pub fn add_seeds(&mut self, label: &str, seeds: SignatureSeeds) {
        self.secrets.get_or_insert_with(Secrets::default).seeds.push(StoredSeeds { label: label.into(), seeds });
    }

    /// Verifies and stores a covenant package.
    pub fn add_package(&mut self, label: &str, bundle: ProofBundle) -> Result<(), WalletError> {
        Self::label_free(&self.packages, label, |p| &p.label)?;
        let p = StoredPackage { label: label.into(), bundle };
        check_package(&p)?;
        self.packages.push(p);
        Ok(())
    }

    pub fn add_proof(&mut self, label: &str, bundle: ProofBundle) -> Result<(), WalletError> {
        Self::label_free(&self.proofs, label, |p| &p.label)?;
        self.proofs.push(StoredPackage { label: label.into(), bundle });
        Ok(())
    }

    pub fn add_graph(&mut self, label: &str, graph: CovenantGraph) -> Result<(), WalletError> {
        Self::label_free(&self.graphs, label, |g| &g.label)?;
        self.graphs.push(StoredGraph { label: label.into(), graph });
        Ok(())
    }

    pub fn package(&self, label: &str) -> Option<&ProofBundle> {
        self.packages.iter().find(|p| p.label == label).map(|p| &p.bundle)
    }

    pub fn graph(&self, label: &str) -> Option<&CovenantGraph> {
        self.graphs.iter().find(|g| g.label == label).map(|g| &g.graph)
    }

    pub fn secret(&self, label: &str) -> Option<&PrivateKey> {
        self.secrets.as_ref()?.keys.iter().find(|k| k.label == label).map(|k| &k.secret)
    }

    /// Every private key in the wallet.
    pub fn keyring(&self) -> Keyring {
        self.secrets.iter().flat_map(|s| s.keys.iter().map(|k| k.secret.clone())).collect()
    }

    /// Labels not yet used for keys, of the form `<prefix>-<n>`.
    pub fn next_label(&self, prefix: &str) -> String {
        (0..)
            .map(|i| format!("{prefix}-{i}"))
            .find(|l| {
                !self.keys.iter().any(|k| &k.label == l)
                    && !self.packages.iter().any(|p| &p.label == l)
                    && !self.graphs.iter().any(|g| &g.label == l)
                    && !self.proofs.iter().any(|p| &p.label == l)
            })
            .expect("unbounded")
    }
}
