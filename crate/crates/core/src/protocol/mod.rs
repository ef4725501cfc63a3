// SPDX-License-Identifier: CC0-1.0

//! The multi-party deleted-key enforcement protocol.
//!
//! One depositor, `n` enforcers and `k` custodians exchange messages over an
//! in-process scheduler. Time is a tick counter: a message sent at tick `t` is
//! delivered at `t + latency` (plus any stall), and messages due at the same tick are
//! delivered in an order shuffled from the run seed. The run is fully determined by
//! the setup, the adversary script and the seed.
//!
//! 1. Enforcers generate key pairs and send the public keys to the depositor.
//! 2. The depositor builds the deposit transaction paying to `A(P, Q)`.
//! 3. The depositor sends the deposit details to the enforcers.
//! 4. Enforcers sign the covenant template, delete their keys and reply with the
//!    signature and a deletion attestation.
//! 5. The depositor checks the signatures and broadcasts the deposit once a quorum
//!    is valid and every enforcer has confirmed deletion.
//! 6. Enforcers send their signatures to the custodians.
//! 7. The depositor sends the covenant package to the custodians.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::covenant::{
    Branch, CommitmentSignature, CovenantError, CovenantTemplate, CustodialPolicy, DepositSpec, Satisfaction, SpendPath,
};
use crate::crypto::{PrivateKey, PublicKey};
use crate::sighash::SigHashType;
use crate::tx::{Amount, Transaction, TxOutput, Txid};

mod run;

pub use crate::covenant::proof::DeletionAttestation;
pub use run::{key_lifetime_report, run_protocol, run_scenario, KeyLifetime, ProtocolRun};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ProtocolError {
    #[error("invalid role set: {0}")]
    InvalidRoles(String),
    #[error("invalid adversary script: {0}")]
    InvalidAdversary(String),
    #[error("unsupported scenario format {0}")]
    Format(u32),
    #[error(transparent)]
    Covenant(#[from] CovenantError),
}

impl From<crate::tx::TxError> for ProtocolError {
    fn from(e: crate::tx::TxError) -> ProtocolError {
        ProtocolError::Covenant(e.into())
    }
}

impl From<crate::compose::ComposeError> for ProtocolError {
    fn from(e: crate::compose::ComposeError) -> ProtocolError {
        match e {
            crate::compose::ComposeError::Covenant(c) => ProtocolError::Covenant(c),
            other => ProtocolError::InvalidRoles(other.to_string()),
        }
    }
}

/// A participant, rendered as `depositor`, `enforcer-<i>` or `custodian-<i>`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum RoleId {
    Depositor,
    Enforcer(usize),
    Custodian(usize),
}

impl fmt::Display for RoleId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RoleId::Depositor => f.write_str("depositor"),
            RoleId::Enforcer(i) => write!(f, "enforcer-{i}"),
            RoleId::Custodian(i) => write!(f, "custodian-{i}"),
        }
    }
}

impl FromStr for RoleId {
    type Err = String;

    fn from_str(s: &str) -> Result<RoleId, String> {
        if s == "depositor" {
            return Ok(RoleId::Depositor);
        }
        let index = |rest: &str| rest.parse::<usize>().map_err(|_| format!("bad role index in {s:?}"));
        if let Some(rest) = s.strip_prefix("enforcer-") {
            return Ok(RoleId::Enforcer(index(rest)?));
        }
        if let Some(rest) = s.strip_prefix("custodian-") {
            return Ok(RoleId::Custodian(index(rest)?));
        }
        Err(format!("unknown role {s:?}"))
    }
}

impl Serialize for RoleId {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for RoleId {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<RoleId, D::Error> {
        String::deserialize(d)?.parse().map_err(serde::de::Error::custom)
    }
}

/// An enforcer's private key. Deletion moves the scalar out and drops it; nothing can
/// sign with a destroyed slot.
#[derive(Debug)]
pub(crate) enum KeySlot {
    Present(PrivateKey),
    Destroyed,
}

impl KeySlot {
    pub(crate) fn key(&self) -> Option<&PrivateKey> {
        match self {
            KeySlot::Present(k) => Some(k),
            KeySlot::Destroyed => None,
        }
    }

    /// Destroys the key; returns whether one was present.
    pub(crate) fn destroy(&mut self) -> bool {
        matches!(std::mem::replace(self, KeySlot::Destroyed), KeySlot::Present(_))
    }
}

/// A protocol deviation injected by the adversary harness.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case", deny_unknown_fields)]
pub enum Deviation {
    /// The enforcer delays its public key by `duration` ticks, or forever.
    Stall { enforcer: usize, duration: Option<u64> },
    /// A copy of the enforcer's key escapes before deletion.
    LeakKey { enforcer: usize },
    /// The enforcer does not forward its signature to the custodians.
    WithholdSignature { enforcer: usize },
    /// The depositor does not send the covenant package to the listed custodians
    /// (all of them when absent).
    WithholdForwarding { custodians: Option<Vec<usize>> },
    /// The depositor never broadcasts the deposit.
    AbortDeposit,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct AdversaryScript {
    pub deviations: Vec<Deviation>,
}

impl AdversaryScript {
    pub fn honest() -> AdversaryScript {
        AdversaryScript::default()
    }

    pub fn new(deviations: Vec<Deviation>) -> AdversaryScript {
        AdversaryScript { deviations }
    }

    pub fn validate(&self, setup: &ProtocolSetup) -> Result<(), ProtocolError> {
        for d in &self.deviations {
            let enforcer = match d {
                Deviation::Stall { enforcer, .. }
                | Deviation::LeakKey { enforcer }
                | Deviation::WithholdSignature { enforcer } => Some(*enforcer),
                Deviation::WithholdForwarding { custodians: Some(cs) } => {
                    if let Some(c) = cs.iter().find(|&&c| c >= setup.custodians) {
                        return Err(ProtocolError::InvalidAdversary(format!("no custodian-{c}")));
                    }
                    None
                }
                _ => None,
            };
            if let Some(e) = enforcer.filter(|&e| e >= setup.enforcers) {
                return Err(ProtocolError::InvalidAdversary(format!("no enforcer-{e}")));
            }
        }
        Ok(())
    }

    pub(crate) fn stall(&self, enforcer: usize) -> Option<Option<u64>> {
        self.deviations.iter().find_map(|d| match d {
            Deviation::Stall { enforcer: e, duration } if *e == enforcer => Some(*duration),
            _ => None,
        })
    }

    pub(crate) fn leaks(&self, enforcer: usize) -> bool {
        self.deviations.iter().any(|d| matches!(d, Deviation::LeakKey { enforcer: e } if *e == enforcer))
    }

    pub(crate) fn withholds_signature(&self, enforcer: usize) -> bool {
        self.deviations.iter().any(|d| matches!(d, Deviation::WithholdSignature { enforcer: e } if *e == enforcer))
    }

    pub(crate) fn withholds_forwarding(&self, custodian: usize) -> bool {
        self.deviations.iter().any(|d| match d {
            Deviation::WithholdForwarding { custodians: None } => true,
            Deviation::WithholdForwarding { custodians: Some(cs) } => cs.contains(&custodian),
            _ => false,
        })
    }

    pub(crate) fn aborts_deposit(&self) -> bool {
        self.deviations.contains(&Deviation::AbortDeposit)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SchedulerConfig {
    /// Ticks between sending and delivering a message.
    pub latency: u64,
    /// Tick at which the depositor gives up waiting for enforcers.
    pub timeout: u64,
    /// Key lifetime, in ticks, above which the report flags a key.
    pub max_key_lifetime: u64,
}

impl Default for SchedulerConfig {
    fn default() -> SchedulerConfig {
        SchedulerConfig { latency: 1, timeout: 20, max_key_lifetime: 8 }
    }
}

fn default_sighash() -> SigHashType {
    SigHashType::ALL
}

fn default_custody_threshold() -> usize {
    1
}

fn default_amount() -> Amount {
    Amount::from_sat(100_000).expect("in range")
}

fn default_fee() -> Amount {
    Amount::from_sat(1_000).expect("in range")
}

/// Roles, policies and amounts of one protocol run.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProtocolSetup {
    /// Number of enforcers `n`.
    pub enforcers: usize,
    /// Enforcement threshold `m`.
    pub m: usize,
    pub custodians: usize,
    #[serde(default = "default_custody_threshold")]
    pub custody_threshold: usize,
    #[serde(default = "default_amount")]
    pub deposit_amount: Amount,
    /// Fee of the deposit transaction and of the covenant transaction.
    #[serde(default = "default_fee")]
    pub fee: Amount,
    /// Covenant outputs; defaults to one output paying the deposit less the fee.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub outputs: Option<Vec<ScenarioOutput>>,
    #[serde(default = "default_sighash")]
    pub sighash_type: SigHashType,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioOutput {
    pub amount: Amount,
    #[serde(with = "crate::hexser::bytes")]
    pub script: Vec<u8>,
}

impl ProtocolSetup {
    pub fn new(enforcers: usize, m: usize, custodians: usize) -> ProtocolSetup {
        ProtocolSetup {
            enforcers,
            m,
            custodians,
            custody_threshold: 1,
            deposit_amount: default_amount(),
            fee: default_fee(),
            outputs: None,
            sighash_type: SigHashType::ALL,
        }
    }

    /// Role-set checks made before anything runs.
    pub fn validate(&self) -> Result<(), ProtocolError> {
        let bad = |m: String| Err(ProtocolError::InvalidRoles(m));
        if !(1..=15).contains(&self.enforcers) || self.m == 0 || self.m > self.enforcers {
            return bad(format!("enforcement policy {}-of-{}", self.m, self.enforcers));
        }
        if !(1..=15).contains(&self.custodians)
            || self.custody_threshold == 0
            || self.custody_threshold > self.custodians
        {
            return bad(format!("custodial policy {}-of-{}", self.custody_threshold, self.custodians));
        }
        if self.sighash_type.noinput {
            return bad("deleted-key commitments cannot use NOINPUT".into());
        }
        if self.deposit_amount <= self.fee {
            return bad("deposit does not cover the fee".into());
        }
        if let Some(outs) = &self.outputs {
            let total = Amount::checked_sum(outs.iter().map(|o| o.amount))?;
            if outs.is_empty() || total > self.deposit_amount {
                return bad("covenant outputs do not fit the deposit".into());
            }
        }
        Ok(())
    }
}

/// A scenario file: setup, adversary and seed.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub format: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    pub seed: u64,
    #[serde(flatten)]
    pub setup: ProtocolSetup,
    #[serde(default)]
    pub adversary: AdversaryScript,
    #[serde(default)]
    pub config: SchedulerConfig,
}

pub const SCENARIO_FORMAT: u32 = 1;

impl Scenario {
    pub fn from_json(s: &str) -> Result<Scenario, String> {
        let scenario: Scenario = serde_json::from_str(s).map_err(|e| e.to_string())?;
        if scenario.format != SCENARIO_FORMAT {
            return Err(ProtocolError::Format(scenario.format).to_string());
        }
        Ok(scenario)
    }
}

/// Covenant template, deposit and commitment signatures, enough to spend the deposit
/// once custodial signatures are added.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CovenantPackage {
    pub template: CovenantTemplate,
    pub spec: DepositSpec,
    pub amount: Amount,
    pub signatures: Vec<CommitmentSignature>,
}

impl CovenantPackage {
    /// Valid signatures from distinct policy members, in policy order.
    pub fn valid_signatures(&self) -> Vec<CommitmentSignature> {
        let crate::covenant::Commitment::DeletedKey { enforcement } = &self.spec.commitment else {
            return Vec::new();
        };
        let Ok(ctx) = self.spec.spent_context(self.amount) else { return Vec::new() };
        let mut sigs: Vec<CommitmentSignature> = Vec::new();
        for s in &self.signatures {
            if enforcement.position(&s.signer).is_some()
                && !sigs.iter().any(|x| x.signer == s.signer)
                && s.verifies(&self.template.transaction, &ctx)
            {
                sigs.push(*s);
            }
        }
        sigs.sort_by_key(|s| enforcement.position(&s.signer));
        sigs
    }

    /// Whether a quorum of valid signatures is present.
    pub fn is_complete(&self) -> bool {
        match &self.spec.commitment {
            crate::covenant::Commitment::DeletedKey { enforcement } => self.valid_signatures().len() >= enforcement.m,
            _ => false,
        }
    }

    /// The covenant transaction with witnesses from `custody_keys`.
    pub fn finalize(&self, custody_keys: &[&PrivateKey]) -> Result<Transaction, CovenantError> {
        let crate::covenant::Commitment::DeletedKey { enforcement } = &self.spec.commitment else {
            return Err(CovenantError::InvalidPolicy("package is not deleted-key".into()));
        };
        let mut sigs = self.valid_signatures();
        if sigs.len() < enforcement.m {
            return Err(CovenantError::SignatureCount(format!(
                "{} valid commitment signatures, {} needed",
                sigs.len(),
                enforcement.m
            )));
        }
        sigs.truncate(enforcement.m);
        let tx = &self.template.transaction;
        let custody = self.spec.sign_custody(tx, 0, self.amount, custody_keys, SigHashType::ALL)?;
        let mut signed = tx.clone();
        signed.inputs[0].witness = self.spec.witness(SpendPath::Main(Satisfaction {
            branch: Branch::A,
            commitment: sigs.iter().map(CommitmentSignature::witness_bytes).collect(),
            custody,
        }))?;
        Ok(signed)
    }
}

/// Message payloads.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Payload {
    Pubkey { key: PublicKey },
    DepositDetails { txid: Txid, vout: u32, amount: Amount },
    EnforcementKeys { keys: Vec<PublicKey> },
    Commitment { signature: CommitmentSignature, attestation: DeletionAttestation },
    Package { package: CovenantPackage },
    Abort,
}

impl Payload {
    pub fn kind(&self) -> &'static str {
        match self {
            Payload::Pubkey { .. } => "pubkey",
            Payload::DepositDetails { .. } => "deposit-details",
            Payload::EnforcementKeys { .. } => "enforcement-keys",
            Payload::Commitment { .. } => "commitment",
            Payload::Package { .. } => "package",
            Payload::Abort => "abort",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Message {
    pub from: RoleId,
    pub to: RoleId,
    pub sent: u64,
    pub deliver: u64,
    pub payload: Payload,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "kebab-case")]
pub enum EventKind {
    KeyGenerated { fingerprint: String },
    KeyLeaked { fingerprint: String },
    Stalled { duration: Option<u64> },
    Send { to: RoleId, deliver: u64, payload: Payload },
    Deliver { from: RoleId, kind: String },
    DepositConstructed { txid: Txid, address: String },
    SignatureChecked { enforcer: usize, valid: bool },
    KeyDeleted { attestation: DeletionAttestation },
    DepositWithheld,
    DepositSubmitted { txid: Txid, accepted: bool, detail: Option<String> },
    PackageStored { source: RoleId },
    PackageIgnored { source: RoleId, reason: String },
    Aborted { reason: String },
    TheftAttempt { txid: Txid, keys: usize, accepted: bool, detail: Option<String> },
    Outcome { outcome: Outcome },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceEvent {
    pub index: u64,
    pub tick: u64,
    pub role: RoleId,
    #[serde(flatten)]
    pub kind: EventKind,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Outcome {
    CovenantActive,
    Aborted,
    FundsAtRisk,
}

impl fmt::Display for Outcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Outcome::CovenantActive => "covenant-active",
            Outcome::Aborted => "aborted",
            Outcome::FundsAtRisk => "funds-at-risk",
        })
    }
}

/// A custodian's stored package and who delivered it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StoredPackage {
    pub source: RoleId,
    pub package: CovenantPackage,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProtocolTrace {
    pub seed: u64,
    pub config: SchedulerConfig,
    pub events: Vec<TraceEvent>,
    pub outcome: Outcome,
    #[serde(with = "crate::hexser::option_transaction")]
    pub deposit: Option<Transaction>,
    pub deposit_spec: Option<DepositSpec>,
    pub deposit_confirmed: bool,
    /// Commitment signatures the depositor accepted, in arrival order.
    pub signatures: Vec<CommitmentSignature>,
    pub attestations: Vec<DeletionAttestation>,
    /// Package held by each custodian at the end of the run.
    pub packages: Vec<Option<StoredPackage>>,
    /// Enforcers whose keys escaped.
    pub leaked: Vec<usize>,
    pub end_tick: u64,
}

impl ProtocolTrace {
    /// One JSON object per event, newline separated.
    pub fn to_json_lines(&self) -> String {
        let mut out = String::new();
        for e in &self.events {
            out.push_str(&serde_json::to_string(e).expect("trace events serialize"));
            out.push('\n');
        }
        out
    }

    /// Custodians that ended without a package.
    pub fn custodians_without_package(&self) -> Vec<usize> {
        self.packages.iter().enumerate().filter(|(_, p)| p.is_none()).map(|(i, _)| i).collect()
    }
}

pub(crate) fn covenant_outputs(
    setup: &ProtocolSetup,
    destination: &crate::script::Script,
) -> Result<Vec<TxOutput>, ProtocolError> {
    match &setup.outputs {
        Some(outs) => Ok(outs
            .iter()
            .map(|o| TxOutput::new(o.amount, crate::script::Script::from_bytes(o.script.clone())))
            .collect()),
        None => {
            let value = setup
                .deposit_amount
                .checked_sub(setup.fee)
                .ok_or_else(|| ProtocolError::InvalidRoles("deposit does not cover the fee".into()))?;
            Ok(vec![TxOutput::new(value, destination.clone())])
        }
    }
}

pub(crate) fn custody_policy(setup: &ProtocolSetup, keys: &[PrivateKey]) -> Result<CustodialPolicy, ProtocolError> {
    Ok(CustodialPolicy::new(setup.custody_threshold, keys.iter().map(PrivateKey::public_key).collect())?)
}
