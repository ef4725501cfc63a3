// SPDX-License-Identifier: CC0-1.0

//! The deterministic scheduler and role state machines.

use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use serde::Serialize;

use super::{
    covenant_outputs, custody_policy, AdversaryScript, CovenantPackage, DeletionAttestation, EventKind, KeySlot,
    Message, Outcome, Payload, ProtocolError, ProtocolSetup, ProtocolTrace, RoleId, Scenario, SchedulerConfig,
    StoredPackage, TraceEvent,
};
use crate::compose::{wallet_locking_script, FundingSource};
use crate::covenant::{
    sign_commitment, Branch, Commitment, CommitmentSignature, CovenantTemplate, CustodialPolicy, DepositSpec,
    EnforcementPolicy, Mechanism, Satisfaction, SpendPath,
};
use crate::crypto::{sign, PrivateKey, PublicKey};
use crate::sighash::{sighash_digest, SigHashType};
use crate::tx::{Amount, OutPoint, Transaction, TxInput, TxOutput, Txid, SEQUENCE_NO_RBF};
use crate::validator::{ChainConfig, ChainState};

/// Result of a run: the trace plus the validator it ran against and the custodians'
/// keys, so callers can spend from stored packages.
#[derive(Debug, Clone)]
pub struct ProtocolRun {
    pub trace: ProtocolTrace,
    pub chain: ChainState,
    pub custody_keys: Vec<PrivateKey>,
}

/// Ticks from key generation to deletion (or to the end of the run).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct KeyLifetime {
    pub enforcer: usize,
    pub generated: u64,
    pub deleted: Option<u64>,
    pub span: u64,
    pub leaked: bool,
    pub exceeds_max: bool,
}

pub fn key_lifetime_report(trace: &ProtocolTrace) -> Vec<KeyLifetime> {
    let mut out: Vec<KeyLifetime> = Vec::new();
    for e in &trace.events {
        let RoleId::Enforcer(i) = e.role else { continue };
        match &e.kind {
            EventKind::KeyGenerated { .. } => out.push(KeyLifetime {
                enforcer: i,
                generated: e.tick,
                deleted: None,
                span: 0,
                leaked: trace.leaked.contains(&i),
                exceeds_max: false,
            }),
            EventKind::KeyDeleted { .. } => {
                if let Some(k) = out.iter_mut().find(|k| k.enforcer == i) {
                    k.deleted = Some(e.tick);
                }
            }
            _ => {}
        }
    }
    for k in &mut out {
        k.span = k.deleted.unwrap_or(trace.end_tick) - k.generated;
        k.exceeds_max = k.span > trace.config.max_key_lifetime;
    }
    out.sort_by_key(|k| k.enforcer);
    out
}

struct Depositor {
    funding: FundingSource,
    pubkeys: Vec<Option<PublicKey>>,
    spec: Option<DepositSpec>,
    deposit: Option<Transaction>,
    template: Option<CovenantTemplate>,
    valid: Vec<CommitmentSignature>,
    attestations: Vec<DeletionAttestation>,
    notified: BTreeSet<usize>,
    done: bool,
    confirmed: bool,
}

struct Enforcer {
    slot: KeySlot,
    public: PublicKey,
    details: Option<(Txid, u32, Amount)>,
    keys: Option<Vec<PublicKey>>,
    signed: bool,
}

struct Custodian {
    collected: Option<CovenantPackage>,
    stored: Option<StoredPackage>,
}

struct Sim<'a> {
    setup: &'a ProtocolSetup,
    adversary: &'a AdversaryScript,
    config: SchedulerConfig,
    custody: CustodialPolicy,
    base: Transaction,
    tick: u64,
    next_seq: u64,
    queue: Vec<(u64, u64, Message)>,
    events: Vec<TraceEvent>,
    depositor: Depositor,
    enforcers: Vec<Enforcer>,
    custodians: Vec<Custodian>,
    leaked: Vec<(usize, PrivateKey)>,
    custody_keys: Vec<PrivateKey>,
    chain: ChainState,
}

/// Runs the protocol for `setup` against a fresh validator.
pub fn run_protocol(
    setup: &ProtocolSetup,
    adversary: &AdversaryScript,
    seed: u64,
    config: SchedulerConfig,
) -> Result<ProtocolRun, ProtocolError> {
    setup.validate()?;
    adversary.validate(setup)?;
    if config.latency == 0 {
        return Err(ProtocolError::InvalidRoles("latency must be at least one tick".into()));
    }
    let mut keys_rng = ChaCha20Rng::seed_from_u64(seed);
    let mut order_rng = ChaCha20Rng::seed_from_u64(seed);
    order_rng.set_stream(1);

    let custody_keys: Vec<PrivateKey> = (0..setup.custodians).map(|_| PrivateKey::generate(&mut keys_rng)).collect();
    let custody = custody_policy(setup, &custody_keys)?;
    let funding_key = PrivateKey::generate(&mut keys_rng);
    let destination = wallet_locking_script(&PrivateKey::generate(&mut keys_rng).public_key());
    let thief = PrivateKey::generate(&mut keys_rng);

    let mut chain = ChainState::new(ChainConfig::default());
    let funding_amount = setup.deposit_amount.checked_add(setup.fee)?;
    let funding = FundingSource::mint(&mut chain, funding_key, funding_amount);
    let base = Transaction {
        version: 2,
        inputs: vec![TxInput::new(OutPoint::new(Txid::NULL, 0), SEQUENCE_NO_RBF)],
        outputs: covenant_outputs(setup, &destination)?,
        locktime: 0,
    };

    let mut sim = Sim {
        setup,
        adversary,
        config,
        custody,
        base,
        tick: 0,
        next_seq: 0,
        queue: Vec::new(),
        events: Vec::new(),
        depositor: Depositor {
            funding,
            pubkeys: vec![None; setup.enforcers],
            spec: None,
            deposit: None,
            template: None,
            valid: Vec::new(),
            attestations: Vec::new(),
            notified: BTreeSet::new(),
            done: false,
            confirmed: false,
        },
        enforcers: Vec::with_capacity(setup.enforcers),
        custodians: (0..setup.custodians).map(|_| Custodian { collected: None, stored: None }).collect(),
        leaked: Vec::new(),
        custody_keys: custody_keys.clone(),
        chain,
    };

    // step 1
    for e in 0..setup.enforcers {
        let key = PrivateKey::generate(&mut keys_rng);
        let public = key.public_key();
        sim.log(RoleId::Enforcer(e), EventKind::KeyGenerated { fingerprint: public.fingerprint() });
        if adversary.leaks(e) {
            sim.log(RoleId::Enforcer(e), EventKind::KeyLeaked { fingerprint: public.fingerprint() });
            sim.leaked.push((e, key.clone()));
        }
        sim.enforcers.push(Enforcer { slot: KeySlot::Present(key), public, details: None, keys: None, signed: false });
        match adversary.stall(e) {
            Some(None) => {
                sim.log(RoleId::Enforcer(e), EventKind::Stalled { duration: None });
            }
            stall => {
                let extra = stall.flatten().unwrap_or(0);
                if extra > 0 {
                    sim.log(RoleId::Enforcer(e), EventKind::Stalled { duration: Some(extra) });
                }
                sim.send(RoleId::Enforcer(e), RoleId::Depositor, Payload::Pubkey { key: public }, extra);
            }
        }
    }

    loop {
        let next_delivery = sim.queue.iter().map(|(t, _, _)| *t).min();
        let next = match (next_delivery, sim.depositor.done) {
            (None, true) => break,
            (None, false) => config.timeout.max(sim.tick + 1),
            (Some(t), true) => t,
            (Some(t), false) => t.min(config.timeout.max(sim.tick + 1)),
        };
        sim.tick = next;
        let mut due: Vec<Message> = Vec::new();
        sim.queue.retain(|(t, _, m)| {
            if *t == next {
                due.push(m.clone());
                false
            } else {
                true
            }
        });
        // queue order is send order; shuffle within the tick
        due.shuffle(&mut order_rng);
        for m in due {
            sim.deliver(m)?;
        }
        if !sim.depositor.done && sim.tick >= config.timeout {
            sim.abort("timed out waiting for enforcers");
        }
    }

    let outcome = sim.settle(&thief)?;
    sim.log(RoleId::Depositor, EventKind::Outcome { outcome });
    let mut leaked: Vec<usize> = sim.leaked.iter().map(|(e, _)| *e).collect();
    leaked.sort();
    let trace = ProtocolTrace {
        seed,
        config,
        events: sim.events,
        outcome,
        deposit: sim.depositor.deposit,
        deposit_spec: sim.depositor.spec,
        deposit_confirmed: sim.depositor.confirmed,
        signatures: sim.depositor.valid,
        attestations: sim.depositor.attestations,
        packages: sim.custodians.into_iter().map(|c| c.stored).collect(),
        leaked,
        end_tick: sim.tick,
    };
    Ok(ProtocolRun { trace, chain: sim.chain, custody_keys })
}

pub fn run_scenario(scenario: &Scenario) -> Result<ProtocolRun, ProtocolError> {
    if scenario.format != super::SCENARIO_FORMAT {
        return Err(ProtocolError::Format(scenario.format));
    }
    run_protocol(&scenario.setup, &scenario.adversary, scenario.seed, scenario.config)
}

impl Sim<'_> {
    fn log(&mut self, role: RoleId, kind: EventKind) -> u64 {
        let index = self.events.len() as u64;
        self.events.push(TraceEvent { index, tick: self.tick, role, kind });
        index
    }

    fn send(&mut self, from: RoleId, to: RoleId, payload: Payload, extra_delay: u64) {
        let deliver = self.tick.saturating_add(self.config.latency).saturating_add(extra_delay);
        self.log(from, EventKind::Send { to, deliver, payload: payload.clone() });
        let seq = self.next_seq;
        self.next_seq += 1;
        self.queue.push((deliver, seq, Message { from, to, sent: self.tick, deliver, payload }));
    }

    fn deliver(&mut self, m: Message) -> Result<(), ProtocolError> {
        self.log(m.to, EventKind::Deliver { from: m.from, kind: m.payload.kind().into() });
        match (m.to, m.payload) {
            (RoleId::Depositor, Payload::Pubkey { key }) => self.on_pubkey(m.from, key),
            (RoleId::Depositor, Payload::Commitment { signature, attestation }) => {
                self.on_commitment(m.from, signature, attestation)
            }
            (RoleId::Enforcer(e), Payload::DepositDetails { txid, vout, amount }) => {
                self.enforcers[e].details = Some((txid, vout, amount));
                self.enforcer_sign(e)
            }
            (RoleId::Enforcer(e), Payload::EnforcementKeys { keys }) => {
                self.enforcers[e].keys = Some(keys);
                self.enforcer_sign(e)
            }
            (RoleId::Enforcer(e), Payload::Abort) => {
                self.delete_key(e);
                Ok(())
            }
            (RoleId::Custodian(c), Payload::Package { package }) => {
                self.on_package(c, m.from, package);
                Ok(())
            }
            _ => Ok(()),
        }
    }

    fn on_pubkey(&mut self, from: RoleId, key: PublicKey) -> Result<(), ProtocolError> {
        let RoleId::Enforcer(e) = from else { return Ok(()) };
        if self.depositor.done || self.depositor.spec.is_some() {
            return Ok(());
        }
        self.depositor.pubkeys[e] = Some(key);
        if self.depositor.pubkeys.iter().any(Option::is_none) {
            return Ok(());
        }
        // step 2
        let keys: Vec<PublicKey> = self.depositor.pubkeys.iter().map(|k| k.expect("all present")).collect();
        let spec = DepositSpec::new(
            Commitment::DeletedKey { enforcement: EnforcementPolicy::new(self.setup.m, keys.clone())? },
            self.custody.clone(),
        );
        let deposit = self
            .depositor
            .funding
            .spend(vec![TxOutput::new(self.setup.deposit_amount, spec.locking_script()?)], SEQUENCE_NO_RBF)?;
        let txid = deposit.txid();
        let mut tx = self.base.clone();
        tx.inputs[0].previous = OutPoint::new(txid, 0);
        self.depositor.template = Some(CovenantTemplate::new(tx, self.setup.sighash_type, Mechanism::DeletedKey));
        self.log(RoleId::Depositor, EventKind::DepositConstructed { txid, address: spec.address()? });
        self.depositor.spec = Some(spec);
        self.depositor.deposit = Some(deposit);
        // step 3
        for e in 0..self.setup.enforcers {
            let details = Payload::DepositDetails { txid, vout: 0, amount: self.setup.deposit_amount };
            self.send(RoleId::Depositor, RoleId::Enforcer(e), details, 0);
            self.send(RoleId::Depositor, RoleId::Enforcer(e), Payload::EnforcementKeys { keys: keys.clone() }, 0);
        }
        Ok(())
    }

    fn delete_key(&mut self, e: usize) -> Option<DeletionAttestation> {
        let index = self.events.len() as u64;
        let attestation = DeletionAttestation::sign(e, self.enforcers[e].slot.key()?, index);
        self.enforcers[e].slot.destroy();
        self.log(RoleId::Enforcer(e), EventKind::KeyDeleted { attestation: attestation.clone() });
        Some(attestation)
    }

    /// Step 4 and step 6 for enforcer `e`, once both step-3 messages are in.
    fn enforcer_sign(&mut self, e: usize) -> Result<(), ProtocolError> {
        let enforcer = &self.enforcers[e];
        let (Some((txid, vout, amount)), Some(keys)) = (enforcer.details, enforcer.keys.clone()) else {
            return Ok(());
        };
        if enforcer.signed || !keys.contains(&enforcer.public) {
            return Ok(());
        }
        let Some(key) = enforcer.slot.key() else { return Ok(()) };
        let policy = EnforcementPolicy::new(self.setup.m, keys)?;
        let spec = DepositSpec::new(Commitment::DeletedKey { enforcement: policy.clone() }, self.custody.clone());
        let mut tx = self.base.clone();
        tx.inputs[0].previous = OutPoint::new(txid, vout);
        let template = CovenantTemplate::new(tx, self.setup.sighash_type, Mechanism::DeletedKey);
        let signature = sign_commitment(&template, 0, key, &spec.spent_context(amount)?, &policy)?;
        self.enforcers[e].signed = true;
        let attestation = self.delete_key(e).expect("key was present");
        self.send(RoleId::Enforcer(e), RoleId::Depositor, Payload::Commitment { signature, attestation }, 0);
        if !self.adversary.withholds_signature(e) {
            let package = CovenantPackage { template, spec, amount, signatures: vec![signature] };
            for c in 0..self.setup.custodians {
                self.send(RoleId::Enforcer(e), RoleId::Custodian(c), Payload::Package { package: package.clone() }, 0);
            }
        }
        Ok(())
    }

    fn on_commitment(
        &mut self,
        from: RoleId,
        signature: CommitmentSignature,
        attestation: DeletionAttestation,
    ) -> Result<(), ProtocolError> {
        let RoleId::Enforcer(e) = from else { return Ok(()) };
        if self.depositor.done {
            return Ok(());
        }
        let (Some(spec), Some(template)) = (&self.depositor.spec, &self.depositor.template) else { return Ok(()) };
        // step 5
        let ctx = spec.spent_context(self.setup.deposit_amount)?;
        let valid = signature.signer == self.enforcers[e].public && signature.verifies(&template.transaction, &ctx);
        self.log(RoleId::Depositor, EventKind::SignatureChecked { enforcer: e, valid });
        if valid && !self.depositor.valid.iter().any(|s| s.signer == signature.signer) {
            self.depositor.valid.push(signature);
        }
        if attestation.enforcer == e && self.depositor.notified.insert(e) {
            self.depositor.attestations.push(attestation);
        }
        if self.depositor.notified.len() < self.setup.enforcers {
            return Ok(());
        }
        if self.depositor.valid.len() < self.setup.m {
            self.abort("no quorum of valid commitment signatures");
            return Ok(());
        }
        self.depositor.done = true;
        if self.adversary.aborts_deposit() {
            self.log(RoleId::Depositor, EventKind::DepositWithheld);
            return Ok(());
        }
        let deposit = self.depositor.deposit.clone().expect("constructed");
        let txid = deposit.txid();
        match self.chain.accept_to_mempool(deposit) {
            Ok(_) => {
                self.chain.mine_block(usize::MAX);
                self.depositor.confirmed = true;
                self.log(RoleId::Depositor, EventKind::DepositSubmitted { txid, accepted: true, detail: None });
            }
            Err(r) => {
                self.log(
                    RoleId::Depositor,
                    EventKind::DepositSubmitted { txid, accepted: false, detail: Some(r.to_string()) },
                );
                return Ok(());
            }
        }
        // step 7
        let package = CovenantPackage {
            template: self.depositor.template.clone().expect("constructed"),
            spec: self.depositor.spec.clone().expect("constructed"),
            amount: self.setup.deposit_amount,
            signatures: self.depositor.valid.clone(),
        };
        for c in 0..self.setup.custodians {
            if !self.adversary.withholds_forwarding(c) {
                self.send(RoleId::Depositor, RoleId::Custodian(c), Payload::Package { package: package.clone() }, 0);
            }
        }
        Ok(())
    }

    fn abort(&mut self, reason: &str) {
        self.depositor.done = true;
        self.log(RoleId::Depositor, EventKind::Aborted { reason: reason.into() });
        for e in 0..self.setup.enforcers {
            self.send(RoleId::Depositor, RoleId::Enforcer(e), Payload::Abort, 0);
        }
    }

    /// Custodians keep the first complete, verified package; enforcer shares for the
    /// same template are merged until a quorum is reached.
    fn on_package(&mut self, c: usize, from: RoleId, package: CovenantPackage) {
        if self.custodians[c].stored.is_some() {
            self.log(
                RoleId::Custodian(c),
                EventKind::PackageIgnored { source: from, reason: "already holds a package".into() },
            );
            return;
        }
        if !self.package_matches_custody(&package) {
            self.log(
                RoleId::Custodian(c),
                EventKind::PackageIgnored { source: from, reason: "custodial policy mismatch".into() },
            );
            return;
        }
        let candidate = match (from, self.custodians[c].collected.take()) {
            (RoleId::Enforcer(_), Some(mut acc))
                if acc.template == package.template && acc.spec == package.spec && acc.amount == package.amount =>
            {
                acc.signatures.extend(package.signatures);
                acc.signatures = acc.valid_signatures();
                acc
            }
            (RoleId::Enforcer(_), _) => CovenantPackage { signatures: package.valid_signatures(), ..package },
            (_, prev) => {
                self.custodians[c].collected = prev;
                package
            }
        };
        if candidate.is_complete() {
            self.log(RoleId::Custodian(c), EventKind::PackageStored { source: from });
            self.custodians[c].stored = Some(StoredPackage { source: from, package: candidate });
        } else if let RoleId::Enforcer(_) = from {
            self.custodians[c].collected = Some(candidate);
        } else {
            self.log(
                RoleId::Custodian(c),
                EventKind::PackageIgnored { source: from, reason: "incomplete package".into() },
            );
        }
    }

    fn package_matches_custody(&self, package: &CovenantPackage) -> bool {
        package.spec.custody == self.custody
    }

    /// Classifies the run. When the deposit confirmed and keys leaked, the thief tries
    /// to move the deposit outside the covenant with the leaked keys, the custodians'
    /// keys, and its own keys in any remaining enforcement slots.
    fn settle(&mut self, thief: &PrivateKey) -> Result<Outcome, ProtocolError> {
        if !self.depositor.confirmed {
            return Ok(Outcome::Aborted);
        }
        if self.leaked.is_empty() {
            return Ok(Outcome::CovenantActive);
        }
        let spec = self.depositor.spec.clone().expect("confirmed deposit has a spec");
        let deposit = self.depositor.deposit.as_ref().expect("confirmed").txid();
        let Commitment::DeletedKey { enforcement } = &spec.commitment else { unreachable!("deleted-key deposit") };
        let amount = self.setup.deposit_amount;
        let value = amount.checked_sub(self.setup.fee).unwrap_or(Amount::ZERO);
        let mut tx = Transaction {
            version: 2,
            inputs: vec![TxInput::new(OutPoint::new(deposit, 0), SEQUENCE_NO_RBF)],
            outputs: vec![TxOutput::new(value, wallet_locking_script(&thief.public_key()))],
            locktime: 0,
        };
        let ctx = spec.spent_context(amount)?;
        let digest = sighash_digest(&tx, 0, &ctx, SigHashType::ALL).map_err(crate::covenant::CovenantError::from)?;
        let mut leaked: Vec<(usize, &PrivateKey)> =
            self.leaked.iter().filter_map(|(_, k)| enforcement.position(&k.public_key()).map(|p| (p, k))).collect();
        leaked.sort_by_key(|(p, _)| *p);
        let used = leaked.len().min(enforcement.m);
        let mut commitment: Vec<Vec<u8>> =
            leaked.iter().take(used).map(|(_, k)| sign(k, &digest).to_witness_bytes(SigHashType::ALL)).collect();
        while commitment.len() < enforcement.m {
            commitment.push(sign(thief, &digest).to_witness_bytes(SigHashType::ALL));
        }
        let custody = self.custody_signatures(&spec, &tx, amount)?;
        tx.inputs[0].witness =
            spec.witness(SpendPath::Main(Satisfaction { branch: Branch::A, commitment, custody }))?;
        let txid = tx.txid();
        let outcome = match self.chain.accept_to_mempool(tx) {
            Ok(_) => {
                self.chain.mine_block(usize::MAX);
                self.log(
                    RoleId::Enforcer(self.leaked[0].0),
                    EventKind::TheftAttempt { txid, keys: used, accepted: true, detail: None },
                );
                Outcome::FundsAtRisk
            }
            Err(r) => {
                self.log(
                    RoleId::Enforcer(self.leaked[0].0),
                    EventKind::TheftAttempt { txid, keys: used, accepted: false, detail: Some(r.to_string()) },
                );
                Outcome::CovenantActive
            }
        };
        Ok(outcome)
    }

    fn custody_signatures(
        &self,
        spec: &DepositSpec,
        tx: &Transaction,
        amount: Amount,
    ) -> Result<Vec<Vec<u8>>, ProtocolError> {
        let keys: Vec<&PrivateKey> = self.custody_keys.iter().take(self.setup.custody_threshold).collect();
        Ok(spec.sign_custody(tx, 0, amount, &keys, SigHashType::ALL)?)
    }
}
