// SPDX-License-Identifier: CC0-1.0

//! Acceptance checks. Prints one PASS or FAIL line per criterion with the measured
//! values. Exits non-zero when a criterion fails for a reason other than a documented
//! inconsistency in the reference figures (see criterion 1).

mod common;
mod oracle;

use std::collections::{BTreeMap, BTreeSet};
use std::process::ExitCode;
use std::time::Instant;

use common::{rng, sat, Setup};
use covenant_core::compose::{
    build_chain, build_disjoint, cpfp_child, enumerate_fee_variants, pinning_replay, wallet_locking_script,
    ChainParams, CovenantGraph, FundingSource, NodeInput, DEFAULT_VARIANT_CAP,
};
use covenant_core::covenant::{
    prove_covenant, prove_reserves, size_report, verify_proof, Commitment, CovenantEvidence, Evidence, Mechanism,
    ProofBundle, RecoveredStyle,
};
use covenant_core::crypto::{
    is_liftable, nums_signature, recover_pubkeys, seeded_signature, sign, EcdsaSignature, PrivateKey, SignatureSeeds,
};
use covenant_core::ctv::{ctv_hash, CtvTemplateHash};
use covenant_core::protocol::{
    run_protocol, run_scenario, AdversaryScript, Deviation, EventKind, Outcome, ProtocolSetup, Scenario,
    SchedulerConfig,
};
use covenant_core::sighash::SigHashType;
use covenant_core::tx::{Amount, OutPoint, Transaction, TxOutput, SEQUENCE_NO_RBF, SEQUENCE_RBF};
use covenant_core::validator::{MempoolAccept, RejectReason};
use num_bigint::BigUint;
use rand::RngCore;

struct Verdict {
    pass: bool,
    /// Failure explained by the reference figures themselves; does not fail the run.
    documented: bool,
    detail: Vec<String>,
}

impl Verdict {
    fn new() -> Verdict {
        Verdict { pass: true, documented: false, detail: Vec::new() }
    }

    fn check(&mut self, ok: bool, line: String) {
        self.pass &= ok;
        self.detail.push(format!("{} {line}", if ok { "ok  " } else { "FAIL" }));
    }

    fn note(&mut self, line: String) {
        self.detail.push(format!("     {line}"));
    }
}

// criterion 1

/// Minimal DER integer length: strip zero bytes, pad when the top bit is set.
fn der_int_len(be: &[u8; 32]) -> usize {
    let trimmed: Vec<u8> = be.iter().copied().skip_while(|b| *b == 0).collect();
    match trimmed.first() {
        None => 1,
        Some(b) if b & 0x80 != 0 => trimmed.len() + 1,
        Some(_) => trimmed.len(),
    }
}

fn der_len(sig: &EcdsaSignature) -> usize {
    2 + 2 + der_int_len(&sig.r_bytes()) + 2 + der_int_len(&sig.s_bytes())
}

fn range(values: &BTreeMap<usize, usize>) -> String {
    let parts: Vec<String> = values.iter().map(|(k, n)| format!("{k}x{n}")).collect();
    parts.join(" ")
}

fn sizes() -> Verdict {
    let mut v = Verdict::new();
    let mut r = rng(1001);
    // commitment portion = signature + push-free key (33) + CHECKSIG (1)
    let rest = 33 + 1;

    let mut deleted = (BTreeMap::new(), BTreeMap::new());
    let mut oracle_ok = true;
    for _ in 0..1_000 {
        let key = PrivateKey::generate(&mut r);
        let mut digest = [0u8; 32];
        r.fill_bytes(&mut digest);
        let sig = sign(&key, &digest);
        let rep = size_report(Mechanism::DeletedKey, Some(&sig)).unwrap();
        let der = der_len(&sig);
        oracle_ok &= sig.to_der().len() == der && rep.der_only == der + rest && rep.with_type_byte == der + 1 + rest;
        *deleted.0.entry(rep.der_only).or_insert(0) += 1;
        *deleted.1.entry(rep.with_type_byte).or_insert(0) += 1;
    }
    v.check(oracle_ok, "size report agrees with the DER length oracle on 1000 signatures".into());
    let spans = |m: &BTreeMap<usize, usize>| {
        let lo = *m.keys().next().unwrap();
        let hi = *m.keys().last().unwrap();
        lo >= 104 && hi <= 106 && m.contains_key(&104) && m.contains_key(&106)
    };
    let deleted_der = spans(&deleted.0);
    let deleted_typed = spans(&deleted.1);
    v.note(format!("deleted-key der-only:   {}", range(&deleted.0)));
    v.note(format!("deleted-key with type:  {}", range(&deleted.1)));

    let mut digest = [0u8; 32];
    r.fill_bytes(&mut digest);
    let (nums, _) = nums_signature(&digest).unwrap();
    let rep = size_report(Mechanism::RecoveredKey, Some(&nums)).unwrap();
    v.note(format!("recovered-key NUMS: der-only {} with type {}", rep.der_only, rep.with_type_byte));
    let nums_der = rep.der_only == 43;
    let nums_typed = rep.with_type_byte == 43;

    let mut seeded = (BTreeMap::new(), BTreeMap::new());
    let mut count = 0;
    while count < 1_000 {
        let mut seeds = SignatureSeeds { seed_r: vec![0; 16], seed_s: vec![0; 16] };
        r.fill_bytes(&mut seeds.seed_r);
        r.fill_bytes(&mut seeds.seed_s);
        let Ok((sig, _)) = seeded_signature(&seeds, &digest) else { continue };
        let rep = size_report(Mechanism::RecoveredKey, Some(&sig)).unwrap();
        *seeded.0.entry(rep.der_only).or_insert(0) += 1;
        *seeded.1.entry(rep.with_type_byte).or_insert(0) += 1;
        count += 1;
    }
    let within = |m: &BTreeMap<usize, usize>| m.keys().all(|k| (104..=106).contains(k));
    v.note(format!("recovered-key seeded der-only:  {}", range(&seeded.0)));
    v.note(format!("recovered-key seeded with type: {}", range(&seeded.1)));
    let seeded_der = within(&seeded.0);
    let seeded_typed = within(&seeded.1);

    let der_conv = deleted_der && nums_der && seeded_der;
    let typed_conv = deleted_typed && nums_typed && seeded_typed;
    v.note(format!("der-only convention: deleted-key {deleted_der}, NUMS 43 {nums_der}, seeded {seeded_der}"));
    v.note(format!("with-type convention: deleted-key {deleted_typed}, NUMS 43 {nums_typed}, seeded {seeded_typed}"));
    v.check(der_conv || typed_conv, "one byte convention reproduces every signature figure".into());

    let tx = oracle::contexts().remove(0);
    let h = ctv_hash(&tx, 0).unwrap().hash;
    let ctv = Commitment::Ctv { hashes: vec![CtvTemplateHash { hash: h, input_index: 0 }] }.script().unwrap();
    let mut expected = vec![0x20];
    expected.extend_from_slice(&h);
    expected.push(0xb3);
    let rep = size_report(Mechanism::Ctv, None).unwrap();
    v.check(
        ctv.as_bytes() == expected.as_slice() && rep.der_only == 34 && rep.with_type_byte == 34,
        format!("CTV core {} bytes", ctv.len()),
    );
    v.check(h.len() == 32 && rep.hash_bytes == 32, format!("commitment hash {} bytes", h.len()));
    let one = EcdsaSignature::from_u64(1, 1).unwrap();
    let wire = one.to_witness_bytes(SigHashType::ALL_NOINPUT);
    v.check(
        wire == [0x30, 0x06, 0x02, 0x01, 0x01, 0x02, 0x01, 0x01, 0x41] && nums == one,
        format!("NUMS (1,1) DER plus type byte {} bytes", wire.len()),
    );
    // every exact figure holds; only the mixed signature conventions disagree
    v.documented =
        !v.pass && deleted_typed && nums_typed && v.detail.iter().filter(|l| l.starts_with("FAIL")).count() == 1;
    v
}

// criterion 2

/// Static sig-op count: CHECKSIG(VERIFY) is 1, CHECKMULTISIG(VERIFY) is its `m`.
fn static_sigops(script: &[u8]) -> usize {
    let mut ops: Vec<Option<i64>> = Vec::new();
    let mut count = 0;
    let mut i = 0;
    while i < script.len() {
        let op = script[i];
        i += 1;
        match op {
            0x01..=0x4b => {
                i += op as usize;
                ops.push(None);
            }
            0x51..=0x60 => ops.push(Some((op - 0x50) as i64)),
            0xac | 0xad => {
                count += 1;
                ops.push(None);
            }
            0xae | 0xaf => {
                let n = ops.last().copied().flatten().expect("key count") as usize;
                let m = ops[ops.len() - 2 - n].expect("threshold") as usize;
                count += m;
                ops.push(None);
            }
            _ => ops.push(None),
        }
    }
    count
}

fn commitment_script(g: &CovenantGraph) -> Vec<u8> {
    match &g.nodes[0].inputs[0] {
        NodeInput::Covenant { spec, .. } => spec.commitment.script().unwrap().into_bytes(),
        NodeInput::Wallet { .. } => unreachable!("covenant input first"),
    }
}

fn sigops() -> Verdict {
    let mut v = Verdict::new();
    let mut cases: Vec<(Mechanism, usize, usize, usize)> =
        vec![(Mechanism::RecoveredKey, 0, 0, 1), (Mechanism::Ctv, 0, 0, 0)];
    for (m, n) in [(1, 1), (1, 2), (2, 3), (3, 3), (2, 4)] {
        cases.push((Mechanism::DeletedKey, m, n, m));
    }
    for (i, (mechanism, m, n, expected)) in cases.into_iter().enumerate() {
        let mut s = Setup::new(2000 + i as u64);
        let funding = s.fund(100_000);
        let mut p = ChainParams::new(mechanism, 1, s.custody.clone(), s.destination.clone());
        if mechanism == Mechanism::DeletedKey {
            (p.enforcement_m, p.enforcement_n) = (m, n);
        }
        let g = build_chain(&funding, &p, &mut s.rng).unwrap();
        let txs = g.finalized(&s.keys).unwrap();
        s.chain.submit_and_mine(txs[0].clone()).unwrap();
        // the 1-of-1 custodial clause contributes one check
        let measured = s.chain.check_tx(&txs[1]).unwrap().sigops - 1;
        let counted = static_sigops(&commitment_script(&g));
        let label =
            if mechanism == Mechanism::DeletedKey { format!("{mechanism} {m}-of-{n}") } else { mechanism.to_string() };
        v.check(
            measured == expected && counted == expected,
            format!("{label}: engine {measured}, static {counted}, expected {expected}"),
        );
    }
    v
}

// criterion 3

fn recovery() -> Verdict {
    let mut v = Verdict::new();
    let mut r = rng(3001);
    let mut found = 0;
    for _ in 0..1_000 {
        let key = PrivateKey::generate(&mut r);
        let mut digest = [0u8; 32];
        r.fill_bytes(&mut digest);
        let sig = sign(&key, &digest);
        found += usize::from(recover_pubkeys(&digest, &sig).contains(&key.public_key()));
    }
    v.check(found == 1_000, format!("signer recovered {found}/1000"));
    v
}

// criterion 4

fn lift_oracle(x: &[u8; 32], p: &BigUint) -> bool {
    let x = BigUint::from_bytes_be(x);
    if &x >= p {
        return false;
    }
    let rhs = (x.modpow(&BigUint::from(3u8), p) + 7u8) % p;
    let euler = rhs.modpow(&((p - 1u8) >> 1), p);
    euler == BigUint::from(1u8)
}

fn lift_rate() -> Verdict {
    let mut v = Verdict::new();
    let p = BigUint::parse_bytes(b"fffffffffffffffffffffffffffffffffffffffffffffffffffffffefffffc2f", 16).unwrap();
    let mut r = rng(4001);
    let (mut lifted, mut agree) = (0, 0);
    for _ in 0..10_000 {
        let mut x = [0u8; 32];
        r.fill_bytes(&mut x);
        let lib = is_liftable(&x);
        lifted += usize::from(lib);
        agree += usize::from(lib == lift_oracle(&x, &p));
    }
    let rate = lifted as f64 / 10_000.0;
    v.check((0.48..=0.52).contains(&rate), format!("lift rate {rate:.4} over 10000 candidates"));
    v.check(agree == 10_000, format!("Euler criterion oracle agrees {agree}/10000"));
    v
}

// criterion 5

fn deletion_sweep() -> Verdict {
    let mut v = Verdict::new();
    let (mut runs, mut wrong) = (0, Vec::new());
    for n in 1..=4usize {
        for m in 1..=n {
            for mask in 0u32..(1 << n) {
                let leaks: Vec<Deviation> =
                    (0..n).filter(|i| mask & (1 << i) != 0).map(|enforcer| Deviation::LeakKey { enforcer }).collect();
                let survivors = leaks.len();
                let deletions = n - survivors;
                let r = run_protocol(
                    &ProtocolSetup::new(n, m, 1),
                    &AdversaryScript::new(leaks),
                    500 + mask as u64,
                    SchedulerConfig::default(),
                )
                .unwrap();
                let theft = r.trace.events.iter().find_map(|e| match e.kind {
                    EventKind::TheftAttempt { accepted, txid, .. } => Some((accepted, txid)),
                    _ => None,
                });
                let stolen = theft.is_some_and(|(ok, txid)| ok && r.chain.confirmations(&txid).is_some());
                let enforced = r.trace.outcome == Outcome::CovenantActive;
                let ok =
                    stolen == (survivors >= m) && enforced == (deletions > n - m) && r.trace.attestations.len() == n;
                if !ok {
                    wrong.push(format!("m={m} n={n} leaks={mask:b} stolen={stolen} outcome={}", r.trace.outcome));
                }
                runs += 1;
            }
        }
    }
    v.check(
        wrong.is_empty(),
        format!("{runs} runs over every (m, n <= 4) and leak subset, {} mismatches", wrong.len()),
    );
    wrong.into_iter().for_each(|w| v.note(w));
    v
}

// criterion 6

fn scenarios() -> Verdict {
    let mut v = Verdict::new();
    let dir = concat!(env!("CARGO_MANIFEST_DIR"), "/../../scenarios");
    for (name, expected) in
        [("honest", Outcome::CovenantActive), ("key-leak", Outcome::FundsAtRisk), ("stall", Outcome::Aborted)]
    {
        let text = std::fs::read_to_string(format!("{dir}/{name}.json")).unwrap();
        let scenario = Scenario::from_json(&text).unwrap();
        let a = run_scenario(&scenario).unwrap().trace;
        let b = run_scenario(&scenario).unwrap().trace;
        v.check(
            a.outcome == expected && a == b,
            format!("{name}: {} (expected {expected}), repeat identical {}", a.outcome, a == b),
        );
    }
    v
}

// criterion 7

fn rbf_sweep() -> (usize, BTreeSet<(bool, bool, bool)>, Vec<String>) {
    let mut s = Setup::new(7100);
    let outputs = |s: &mut Setup, k: usize, total: u64| -> Vec<TxOutput> {
        (0..k)
            .map(|i| {
                let script = wallet_locking_script(&PrivateKey::generate(&mut s.rng).public_key());
                let each = total / k as u64;
                TxOutput::new(sat(if i == 0 { total - each * (k as u64 - 1) } else { each }), script)
            })
            .collect()
    };
    let (mut cases, mut seen, mut wrong) = (0, BTreeSet::new(), Vec::new());
    for signal in [false, true] {
        for first_outs in [1, 3] {
            for second_outs in [1, 3] {
                for second_fee in [900u64, 1_000, 1_001, 1_200, 3_000] {
                    let funding = s.fund(100_000);
                    let seq = if signal { SEQUENCE_RBF } else { SEQUENCE_NO_RBF };
                    let first_outputs = outputs(&mut s, first_outs, 100_000 - 1_000);
                    let first = funding.spend(first_outputs, seq).unwrap();
                    let second_outputs = outputs(&mut s, second_outs, 100_000 - second_fee);
                    let second = funding.spend(second_outputs, SEQUENCE_RBF).unwrap();
                    let mut chain = s.chain.clone();
                    chain.accept_to_mempool(first.clone()).unwrap();
                    let (s1, s2) = (oracle::serialize(&first, true).len(), oracle::serialize(&second, true).len());
                    let higher_rate = second_fee as u128 * s1 as u128 > 1_000u128 * s2 as u128;
                    let higher_fee = second_fee > 1_000;
                    let expected = signal && higher_rate && higher_fee;
                    let got = match chain.accept_to_mempool(second.clone()) {
                        Ok(MempoolAccept::Replaced { .. }) => true,
                        Ok(MempoolAccept::Accepted { .. }) => {
                            wrong.push("conflict accepted without replacement".into());
                            false
                        }
                        Err(e) if e.reason == RejectReason::DoubleSpend => false,
                        Err(e) => {
                            wrong.push(format!("unexpected rejection {e}"));
                            false
                        }
                    };
                    if got != expected {
                        wrong.push(format!("signal={signal} rate={higher_rate} fee={higher_fee}: replaced={got}"));
                    }
                    seen.insert((signal, higher_rate, higher_fee));
                    cases += 1;
                }
            }
        }
    }
    (cases, seen, wrong)
}

fn fees() -> Verdict {
    let mut v = Verdict::new();

    let mut s = Setup::new(7000);
    let funding = s.fund(1_000_000);
    let p = ChainParams::new(Mechanism::DeletedKey, 3, s.custody.clone(), s.destination.clone());
    let set = enumerate_fee_variants(&funding, &p, &[1, 4], DEFAULT_VARIANT_CAP, &mut s.rng).unwrap();
    let mut valid = 0;
    for variant in &set.variants {
        let mut fresh = s.chain.clone();
        let txs = variant.graph.finalized(&s.keys).unwrap();
        valid += usize::from(CovenantGraph::broadcast(&mut fresh, &txs).is_ok());
    }
    v.check(set.count() == 8 && valid == 8, format!("p=2 t=3: {} variant chains, {valid} valid alone", set.count()));

    let (cases, seen, wrong) = rbf_sweep();
    v.check(
        wrong.is_empty() && seen.len() == 8,
        format!(
            "RBF iff signalling and higher feerate and higher fee: {cases} cases, {} of 8 combinations",
            seen.len()
        ),
    );
    wrong.into_iter().for_each(|w| v.note(w));

    // CPFP: zero-fee covenant spend with an anchor output
    let mut s = Setup::new(7200);
    let funding = s.fund(100_000);
    let anchor_key = PrivateKey::generate(&mut s.rng);
    let mut p = ChainParams::new(Mechanism::Ctv, 1, s.custody.clone(), s.destination.clone());
    p.level_fees = vec![sat(0)];
    p.anchor = Some(TxOutput::new(sat(20_000), wallet_locking_script(&anchor_key.public_key())));
    let txs = build_chain(&funding, &p, &mut s.rng).unwrap().finalized(&s.keys).unwrap();
    s.chain.submit_and_mine(txs[0].clone()).unwrap();
    let parent = txs[1].clone();
    s.chain.accept_to_mempool(parent.clone()).unwrap();
    let other = s.fund(1_000_000);
    let filler = other.spend(vec![TxOutput::new(sat(999_600), s.destination.clone())], SEQUENCE_NO_RBF).unwrap();
    let wallet = FundingSource { outpoint: OutPoint::new(parent.txid(), 1), amount: sat(20_000), key: anchor_key };
    let child = cpfp_child(&parent, sat(0), 5, &wallet, s.destination.clone()).unwrap();
    s.chain.accept_to_mempool(filler.clone()).unwrap();
    s.chain.accept_to_mempool(child.clone()).unwrap();
    let block = s.chain.mine_block(parent.size() + filler.size() + 250);
    let ids = block.txids();
    let pos = |t| ids.iter().position(|x| *x == t);
    let together = matches!((pos(parent.txid()), pos(child.txid())), (Some(a), Some(b)) if a < b);
    v.check(together, format!("zero-fee parent mined with its child in one block of {} txs", ids.len()));

    // pinning: non-signalling SINGLE|ANYONECANPAY replay
    let mut s = Setup::new(7300);
    let funding = s.fund(100_000);
    let mut p = ChainParams::new(Mechanism::DeletedKey, 1, s.custody.clone(), s.destination.clone());
    p.commitment_type = Some(SigHashType::SINGLE_ANYONECANPAY);
    p.custody_type = SigHashType::SINGLE_ANYONECANPAY;
    p.sequence = SEQUENCE_NO_RBF;
    p.level_fees = vec![sat(2_000)];
    let txs = build_chain(&funding, &p, &mut s.rng).unwrap().finalized(&s.keys).unwrap();
    let honest = txs[1].clone();
    s.chain.submit_and_mine(txs[0].clone()).unwrap();
    let attacker = s.fund(5_000_000);
    let change = wallet_locking_script(&PrivateKey::generate(&mut s.rng).public_key());
    let pinned = pinning_replay(&honest, 0, &attacker, change, sat(10)).unwrap();
    s.chain.accept_to_mempool(pinned.clone()).unwrap();
    let blocked = s.chain.accept_to_mempool(honest.clone()).is_err();
    let mut capacity = 0;
    for _ in 0..4 {
        let f = s.fund(100_000);
        let t = f.spend(vec![TxOutput::new(sat(99_000), s.destination.clone())], SEQUENCE_NO_RBF).unwrap();
        capacity += t.size();
        s.chain.accept_to_mempool(t).unwrap();
    }
    let block = s.chain.mine_block(capacity);
    let excluded = !block.txids().contains(&pinned.txid()) && s.chain.mempool().contains(&pinned.txid());
    v.check(blocked && excluded, format!("pinned package excluded from a full block (honest spend blocked {blocked})"));
    v
}

// criterion 8

fn noinput_rebinding() -> Verdict {
    let mut v = Verdict::new();
    for mechanism in [Mechanism::RecoveredKey, Mechanism::DeletedKey] {
        let mut s = Setup::new(8000);
        let funding = s.fund(100_000);
        let mut p = ChainParams::new(mechanism, 3, s.custody.clone(), s.destination.clone());
        if mechanism == Mechanism::DeletedKey {
            // txid-committing, yet tolerant of the extra input on the mutated node itself
            p.commitment_type = Some(SigHashType::ALL_ANYONECANPAY);
        }
        let mut g = build_chain(&funding, &p, &mut s.rng).unwrap();
        let before = g.nodes[1].template.transaction.txid();
        let bump = s.fund(5_000);
        g.add_fee_input(1, bump.outpoint, bump.amount, bump.key.public_key()).unwrap();
        let after = g.nodes[1].template.transaction.txid();
        let txs = g.finalized(&s.keys).unwrap();
        let result = CovenantGraph::broadcast(&mut s.chain, &txs);
        match mechanism {
            Mechanism::RecoveredKey => v.check(
                after != before && result.is_ok(),
                format!("recovered-key length 3: intermediate txid changed, {} of 4 txs confirmed", txs.len()),
            ),
            _ => {
                let failed = result.as_ref().err().map(|(i, r)| (*i, r.reason));
                v.check(
                    failed == Some((3, RejectReason::BadSig)),
                    format!("deleted-key ALL|ANYONECANPAY length 3: first failure {failed:?}, expected the child of the mutated node"),
                );
            }
        }
    }
    v
}

// criterion 9

fn disjoint() -> Verdict {
    let mut v = Verdict::new();
    for (i, mechanism) in Mechanism::ALL.into_iter().enumerate() {
        let mut outcomes = Vec::new();
        for first in 0..2 {
            let mut s = Setup::new(9000 + i as u64);
            let funding = s.fund(100_000);
            let a = vec![TxOutput::new(sat(90_000), s.destination.clone())];
            let other = wallet_locking_script(&PrivateKey::generate(&mut s.rng).public_key());
            let b = vec![TxOutput::new(sat(95_000), other)];
            let p = ChainParams::new(mechanism, 1, s.custody.clone(), s.destination.clone());
            let txs = build_disjoint(&funding, &p, a, b, &mut s.rng).unwrap().finalized(&s.keys).unwrap();
            s.chain.submit_and_mine(txs[0].clone()).unwrap();
            let alone = s.chain.check_tx(&txs[2 - first]).is_ok();
            s.chain.submit_and_mine(txs[1 + first].clone()).unwrap();
            let reason = s.chain.accept_to_mempool(txs[2 - first].clone()).err().map(|r| r.reason);
            outcomes.push(alone && reason == Some(RejectReason::DoubleSpend));
        }
        v.check(outcomes.iter().all(|o| *o), format!("{mechanism}: either branch confirmed rejects the other"));
    }
    v
}

// criterion 10

fn bit_flips(bytes: &[u8]) -> Vec<Vec<u8>> {
    (0..bytes.len() * 8)
        .map(|bit| {
            let mut b = bytes.to_vec();
            b[bit / 8] ^= 1 << (bit % 8);
            b
        })
        .collect()
}

fn u64_flips(x: u64) -> Vec<u64> {
    (0..64).map(|b| x ^ (1 << b)).collect()
}

fn amount_flips(a: Amount) -> Vec<Amount> {
    u64_flips(a.to_sat()).into_iter().filter_map(|x| Amount::from_sat(x).ok()).collect()
}

fn string_flips(s: &str) -> Vec<String> {
    bit_flips(s.as_bytes()).into_iter().filter_map(|b| String::from_utf8(b).ok()).collect()
}

/// Every single-bit change of every evidence field that still forms a bundle.
fn tampered(bundle: &ProofBundle) -> Vec<(String, ProofBundle)> {
    let mut out = Vec::new();
    let mut push = |field: &str, evidence: Evidence| {
        out.push((field.to_string(), ProofBundle { evidence, ..bundle.clone() }));
    };
    match &bundle.evidence {
        Evidence::DeletedKey { input_index, amount, signatures, attestations } => {
            let base = |i, a, s: &Vec<_>, t: &Vec<_>| Evidence::DeletedKey {
                input_index: i,
                amount: a,
                signatures: s.clone(),
                attestations: t.clone(),
            };
            for i in u64_flips(*input_index as u64) {
                push("input_index", base(i as usize, *amount, signatures, attestations));
            }
            for a in amount_flips(*amount) {
                push("amount", base(*input_index, a, signatures, attestations));
            }
            for (k, sig) in signatures.iter().enumerate() {
                for b in bit_flips(&sig.signer) {
                    let mut s = signatures.clone();
                    s[k].signer = b;
                    push("signatures.signer", base(*input_index, *amount, &s, attestations));
                }
                for b in bit_flips(&sig.signature) {
                    let mut s = signatures.clone();
                    s[k].signature = b;
                    push("signatures.signature", base(*input_index, *amount, &s, attestations));
                }
            }
            for (k, att) in attestations.iter().enumerate() {
                let with = |f: &dyn Fn(&mut covenant_core::covenant::DeletionAttestation)| {
                    let mut t = attestations.clone();
                    f(&mut t[k]);
                    base(*input_index, *amount, signatures, &t)
                };
                for e in u64_flips(att.enforcer as u64) {
                    push("attestations.enforcer", with(&|a| a.enforcer = e as usize));
                }
                for e in u64_flips(att.event) {
                    push("attestations.event", with(&|a| a.event = e));
                }
                for f in string_flips(&att.key_fingerprint) {
                    push("attestations.key_fingerprint", with(&|a| a.key_fingerprint = f.clone()));
                }
                for b in bit_flips(&att.signature) {
                    push("attestations.signature", with(&|a| a.signature = b.clone()));
                }
            }
        }
        Evidence::RecoveredKey { input_index, signature, key, seeds } => {
            let base = |i, s: &[u8], k: &[u8], d: &Option<SignatureSeeds>| Evidence::RecoveredKey {
                input_index: i,
                signature: s.to_vec(),
                key: k.to_vec(),
                seeds: d.clone(),
            };
            for i in u64_flips(*input_index as u64) {
                push("input_index", base(i as usize, signature, key, seeds));
            }
            for b in bit_flips(signature) {
                push("signature", base(*input_index, &b, key, seeds));
            }
            for b in bit_flips(key) {
                push("key", base(*input_index, signature, &b, seeds));
            }
            if let Some(sd) = seeds {
                for b in bit_flips(&sd.seed_r) {
                    let d = Some(SignatureSeeds { seed_r: b, seed_s: sd.seed_s.clone() });
                    push("seeds.seed_r", base(*input_index, signature, key, &d));
                }
                for b in bit_flips(&sd.seed_s) {
                    let d = Some(SignatureSeeds { seed_r: sd.seed_r.clone(), seed_s: b });
                    push("seeds.seed_s", base(*input_index, signature, key, &d));
                }
            }
        }
        Evidence::Ctv { input_index } => {
            for b in 0..32 {
                push("input_index", Evidence::Ctv { input_index: input_index ^ (1 << b) });
            }
        }
        Evidence::Reserves { message, amount, signatures } => {
            let base =
                |m: &[u8], a, s: &Vec<_>| Evidence::Reserves { message: m.to_vec(), amount: a, signatures: s.clone() };
            for b in bit_flips(message) {
                push("message", base(&b, *amount, signatures));
            }
            for a in amount_flips(*amount) {
                push("amount", base(message, a, signatures));
            }
            for (k, sig) in signatures.iter().enumerate() {
                for b in bit_flips(&sig.signer) {
                    let mut s = signatures.clone();
                    s[k].signer = b;
                    push("signatures.signer", base(message, *amount, &s));
                }
                for b in bit_flips(&sig.signature) {
                    let mut s = signatures.clone();
                    s[k].signature = b;
                    push("signatures.signature", base(message, *amount, &s));
                }
            }
        }
    }
    out
}

/// Honest bundle accepted after a JSON round trip, every tampered copy rejected.
fn check_bundle(v: &mut Verdict, label: &str, bundle: &ProofBundle) {
    let back: ProofBundle = serde_json::from_str(&bundle.to_json()).unwrap();
    let honest = back == *bundle && verify_proof(&back).is_ok();
    let mut reasons: BTreeMap<&'static str, usize> = BTreeMap::new();
    let mut accepted = Vec::new();
    let cases = tampered(bundle);
    for (field, t) in &cases {
        match verify_proof(t) {
            Ok(_) => accepted.push(field.clone()),
            Err(r) => *reasons.entry(r.reason).or_insert(0) += 1,
        }
    }
    let named: Vec<String> = reasons.iter().map(|(r, n)| format!("{r} {n}")).collect();
    v.check(
        honest && accepted.is_empty(),
        format!(
            "{label}: honest accepted {honest}, {} single-bit tampers rejected ({})",
            cases.len() - accepted.len(),
            named.join(", ")
        ),
    );
    if !accepted.is_empty() {
        v.note(format!("{label}: accepted after tampering: {accepted:?}"));
    }
}

fn proofs() -> Verdict {
    let mut v = Verdict::new();

    // deleted-key, with attestations from a protocol run
    let r = run_protocol(&ProtocolSetup::new(3, 2, 1), &AdversaryScript::honest(), 10_001, SchedulerConfig::default())
        .unwrap();
    let t = &r.trace;
    let package = &t.packages[0].as_ref().unwrap().package;
    let bundle = prove_covenant(
        t.deposit_spec.as_ref().unwrap(),
        &package.template,
        CovenantEvidence::DeletedKey {
            amount: package.amount,
            signatures: &t.signatures,
            attestations: &t.attestations,
        },
    )
    .unwrap();
    check_bundle(&mut v, "deleted-key", &bundle);

    let mut seeds = SignatureSeeds { seed_r: b"covenant r".to_vec(), seed_s: b"covenant s".to_vec() };
    let mut r = rng(10_002);
    while !is_liftable(&covenant_core::tx::sha256(&seeds.seed_r)) {
        r.fill_bytes(&mut seeds.seed_r);
    }
    let styles = [("NUMS", RecoveredStyle::Nums), ("seeded", RecoveredStyle::Seeded(seeds))];
    let mut cases: Vec<(String, Mechanism, RecoveredStyle)> =
        styles.into_iter().map(|(l, st)| (format!("recovered-key {l}"), Mechanism::RecoveredKey, st)).collect();
    cases.push(("ctv".into(), Mechanism::Ctv, RecoveredStyle::Nums));
    for (i, (label, mechanism, style)) in cases.into_iter().enumerate() {
        let mut s = Setup::new(10_010 + i as u64);
        let funding = s.fund(100_000);
        let mut p = ChainParams::new(mechanism, 1, s.custody.clone(), s.destination.clone());
        p.style = style.clone();
        let g = build_chain(&funding, &p, &mut s.rng).unwrap();
        let node = &g.nodes[0];
        let NodeInput::Covenant { spec, commitments, .. } = &node.inputs[0] else { unreachable!() };
        let evidence = match mechanism {
            Mechanism::Ctv => CovenantEvidence::Ctv { input_index: 0 },
            _ => CovenantEvidence::RecoveredKey { signature: &commitments[0], style: &style },
        };
        check_bundle(&mut v, &label, &prove_covenant(spec, &node.template, evidence).unwrap());
    }

    // reserves proofs against confirmed deposits
    for (i, mechanism) in Mechanism::ALL.into_iter().enumerate() {
        let mut s = Setup::new(10_020 + i as u64);
        let funding = s.fund(100_000);
        let p = ChainParams::new(mechanism, 1, s.custody.clone(), s.destination.clone());
        let g = build_chain(&funding, &p, &mut s.rng).unwrap();
        let txs = g.finalized(&s.keys).unwrap();
        s.chain.submit_and_mine(txs[0].clone()).unwrap();
        let NodeInput::Covenant { spec, amount, .. } = &g.nodes[0].inputs[0] else { unreachable!() };
        let deposit = g.nodes[0].template.transaction.inputs[0].previous;
        let bundle = prove_reserves(spec, deposit, *amount, &[&s.custodian], b"reserves at height 1").unwrap();
        let tx = Transaction::deserialize(&bundle.transaction).unwrap();
        let verified = verify_proof(&bundle).is_ok();
        let rejected = s.chain.check_tx(&tx).err().map(|r| r.reason);
        v.check(
            verified && rejected == Some(RejectReason::MissingUtxo),
            format!("{mechanism} reserves: verify_proof accepts {verified}, validator rejects with {rejected:?}"),
        );
        check_bundle(&mut v, &format!("{mechanism} reserves"), &bundle);
    }
    v
}

// criterion 11

fn oracles() -> Verdict {
    let mut v = Verdict::new();
    let (agree, diffs) = oracle::engine_agreement(10_000, 11_001);
    v.check(agree == 10_000, format!("engine agrees with the reference interpreter on {agree}/10000 scripts"));
    diffs.into_iter().take(5).for_each(|d| v.note(d));
    let mut r = rng(11_002);
    let mut same = 0;
    for _ in 0..1_000 {
        let tx = oracle::random_tx(&mut r);
        same += usize::from(
            tx.serialize(true).unwrap() == oracle::serialize(&tx, true)
                && tx.serialize(false).unwrap() == oracle::serialize(&tx, false)
                && tx.txid().to_byte_array() == oracle::txid(&tx)
                && tx.wtxid().to_byte_array() == oracle::wtxid(&tx),
        );
    }
    v.check(same == 1_000, format!("serialization, txid and wtxid agree on {same}/1000 transactions"));
    v
}

fn main() -> ExitCode {
    let criteria: [(&str, fn() -> Verdict); 11] = [
        ("size accounting", sizes),
        ("sig-op counts", sigops),
        ("recovery round trip", recovery),
        ("curve-lift rate", lift_rate),
        ("deletion soundness sweep", deletion_sweep),
        ("protocol scenarios", scenarios),
        ("fee machinery", fees),
        ("NOINPUT rebinding", noinput_rebinding),
        ("disjoint branches", disjoint),
        ("proof bundles", proofs),
        ("oracle equivalence", oracles),
    ];
    let mut unexpected = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let v = f();
        let status = match (v.pass, v.documented) {
            (true, _) => "PASS",
            (false, true) => "FAIL (documented)",
            (false, false) => "FAIL",
        };
        println!("criterion {:>2}: {status} {name} [{:.2}s]", i + 1, start.elapsed().as_secs_f64());
        for line in &v.detail {
            println!("    {line}");
        }
        unexpected += usize::from(!v.pass && !v.documented);
    }
    if unexpected == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{unexpected} criteria failed");
        ExitCode::FAILURE
    }
}
