// SPDX-License-Identifier: CC0-1.0

//! Independent reimplementations used to cross-check the library: a naive script
//! interpreter, a transaction serializer with its own double-SHA256 txid, and the
//! random inputs fed to both.

#![allow(dead_code)]

use covenant_core::ctv::ctv_hash;
use covenant_core::script::Script;
use covenant_core::tx::{Amount, OutPoint, Transaction, TxInput, TxOutput, Txid};
use covenant_core::validator::{execute, EngineError, ExecContext};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use sha2::{Digest, Sha256};

/// Error classes shared by the interpreter and the engine.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Fail {
    Script,
    Sig,
    Ctv,
    Timelock,
}

fn num(item: &[u8], max: usize) -> Result<i64, Fail> {
    if item.len() > max {
        return Err(Fail::Script);
    }
    let Some(&last) = item.last() else { return Ok(0) };
    if last & 0x7f == 0 && (item.len() == 1 || item[item.len() - 2] & 0x80 == 0) {
        return Err(Fail::Script);
    }
    let mut mag: i64 = 0;
    for (i, &b) in item.iter().enumerate() {
        let b = if i == item.len() - 1 { b & 0x7f } else { b };
        mag += (b as i64) << (8 * i);
    }
    Ok(if last & 0x80 != 0 { -mag } else { mag })
}

fn small(n: i64) -> Vec<u8> {
    match n {
        0 => vec![],
        -1 => vec![0x81],
        1..=16 => vec![n as u8],
        _ => unreachable!(),
    }
}

fn truthy(v: &[u8]) -> bool {
    match v.split_last() {
        None => false,
        Some((&last, rest)) => rest.iter().any(|&b| b != 0) || (last != 0 && last != 0x80),
    }
}

/// Runs `script` byte by byte against `stack` for input `input` of `tx`.
/// `ctv` is the template hash of that input.
pub fn interpret(
    script: &[u8],
    mut stack: Vec<Vec<u8>>,
    tx: &Transaction,
    input: usize,
    ctv: [u8; 32],
) -> Result<Vec<Vec<u8>>, Fail> {
    if stack.len() > 1000 || stack.iter().any(|i| i.len() > 520) {
        return Err(Fail::Script);
    }
    let mut exec: Vec<bool> = vec![];
    let mut ops = 0;
    let mut pc = 0;
    while pc < script.len() {
        let op = script[pc];
        pc += 1;
        let running = !exec.contains(&false);
        if op <= 0x4e {
            let (len, hdr) = match op {
                0x00..=0x4b => (op as usize, 0),
                0x4c => (*script.get(pc).ok_or(Fail::Script)? as usize, 1),
                0x4d => {
                    let b = script.get(pc..pc + 2).ok_or(Fail::Script)?;
                    (b[0] as usize | (b[1] as usize) << 8, 2)
                }
                _ => {
                    let b = script.get(pc..pc + 4).ok_or(Fail::Script)?;
                    (u32::from_le_bytes([b[0], b[1], b[2], b[3]]) as usize, 4)
                }
            };
            let data = script.get(pc + hdr..pc + hdr + len).ok_or(Fail::Script)?;
            pc += hdr + len;
            if len > 520 {
                return Err(Fail::Script);
            }
            if running {
                if stack.len() >= 1000 {
                    return Err(Fail::Script);
                }
                stack.push(data.to_vec());
            }
            continue;
        }
        let known =
            matches!(op, 0x4f | 0x51..=0x60 | 0x63 | 0x67 | 0x68 | 0x75 | 0x87 | 0x88 | 0xac..=0xaf | 0xb1..=0xb3);
        if !known {
            return Err(Fail::Script);
        }
        if op > 0x60 {
            ops += 1;
            if ops > 201 {
                return Err(Fail::Script);
            }
        }
        match op {
            0x63 => {
                let mut taken = false;
                if running {
                    let v = stack.pop().ok_or(Fail::Script)?;
                    if !v.is_empty() && v != [1] {
                        return Err(Fail::Script);
                    }
                    taken = v == [1];
                }
                exec.push(taken);
                continue;
            }
            0x67 => {
                let top = exec.pop().ok_or(Fail::Script)?;
                exec.push(!top);
                continue;
            }
            0x68 => {
                exec.pop().ok_or(Fail::Script)?;
                continue;
            }
            _ => {}
        }
        if !running {
            continue;
        }
        let pushed: Option<Vec<u8>> = match op {
            0x4f => Some(small(-1)),
            0x51..=0x60 => Some(small((op - 0x50) as i64)),
            0x75 => {
                stack.pop().ok_or(Fail::Script)?;
                None
            }
            0x87 | 0x88 => {
                let a = stack.pop().ok_or(Fail::Script)?;
                let b = stack.pop().ok_or(Fail::Script)?;
                match (op, a == b) {
                    (0x88, false) => return Err(Fail::Script),
                    (0x88, true) => None,
                    (_, eq) => Some(if eq { vec![1] } else { vec![] }),
                }
            }
            0xac | 0xad => {
                stack.pop().ok_or(Fail::Script)?;
                let sig = stack.pop().ok_or(Fail::Script)?;
                // random signatures never verify
                match (sig.is_empty(), op) {
                    (false, _) | (true, 0xad) => return Err(Fail::Sig),
                    _ => Some(vec![]),
                }
            }
            0xae | 0xaf => return Err(Fail::Script), // not generated
            0xb1 => {
                let v = num(stack.last().ok_or(Fail::Script)?, 5)?;
                let lt = tx.locktime as i64;
                if v < 0 || v >= 500_000_000 || lt >= 500_000_000 || v > lt || tx.inputs[input].sequence == u32::MAX {
                    return Err(Fail::Timelock);
                }
                None
            }
            0xb2 => {
                let v = num(stack.last().ok_or(Fail::Script)?, 5)?;
                if v < 0 {
                    return Err(Fail::Timelock);
                }
                let (v, seq) = (v as u32, tx.inputs[input].sequence);
                if v & (1 << 31) == 0 {
                    let disabled = tx.version < 2 || seq & (1 << 31) != 0;
                    let by_time = (v | seq) & (1 << 22) != 0;
                    if disabled || by_time || v & 0xffff > seq & 0xffff {
                        return Err(Fail::Timelock);
                    }
                }
                None
            }
            _ => {
                let top = stack.last().ok_or(Fail::Script)?;
                if top.len() == 32 && top[..] != ctv {
                    return Err(Fail::Ctv);
                }
                None
            }
        };
        if let Some(item) = pushed {
            if stack.len() >= 1000 {
                return Err(Fail::Script);
            }
            stack.push(item);
        }
    }
    if !exec.is_empty() {
        return Err(Fail::Script);
    }
    Ok(stack)
}

/// Clean-stack verdict of an interpreter result.
pub fn clean(r: Result<Vec<Vec<u8>>, Fail>) -> Result<(), Fail> {
    match r?.as_slice() {
        [top] if truthy(top) => Ok(()),
        _ => Err(Fail::Script),
    }
}

fn compact(buf: &mut Vec<u8>, n: usize) {
    match n {
        0..=0xfc => buf.push(n as u8),
        0xfd..=0xffff => {
            buf.push(0xfd);
            buf.extend_from_slice(&(n as u16).to_le_bytes());
        }
        _ => {
            buf.push(0xfe);
            buf.extend_from_slice(&(n as u32).to_le_bytes());
        }
    }
}

/// Legacy or extended serialization, the latter only when a witness is present.
pub fn serialize(tx: &Transaction, with_witness: bool) -> Vec<u8> {
    let segwit = with_witness && tx.inputs.iter().any(|i| !i.witness.is_empty());
    let mut b = tx.version.to_le_bytes().to_vec();
    if segwit {
        b.extend_from_slice(&[0, 1]);
    }
    compact(&mut b, tx.inputs.len());
    for i in &tx.inputs {
        b.extend_from_slice(i.previous.txid.as_bytes());
        b.extend_from_slice(&i.previous.vout.to_le_bytes());
        b.push(0);
        b.extend_from_slice(&i.sequence.to_le_bytes());
    }
    compact(&mut b, tx.outputs.len());
    for o in &tx.outputs {
        b.extend_from_slice(&o.amount.to_sat().to_le_bytes());
        compact(&mut b, o.locking_script.len());
        b.extend_from_slice(o.locking_script.as_bytes());
    }
    if segwit {
        for i in &tx.inputs {
            compact(&mut b, i.witness.len());
            for w in &i.witness {
                compact(&mut b, w.len());
                b.extend_from_slice(w);
            }
        }
    }
    b.extend_from_slice(&tx.locktime.to_le_bytes());
    b
}

pub fn double_sha256(data: &[u8]) -> [u8; 32] {
    Sha256::digest(Sha256::digest(data)).into()
}

pub fn txid(tx: &Transaction) -> [u8; 32] {
    double_sha256(&serialize(tx, false))
}

pub fn wtxid(tx: &Transaction) -> [u8; 32] {
    double_sha256(&serialize(tx, true))
}

fn bytes<R: Rng>(rng: &mut R, max: usize) -> Vec<u8> {
    let n = if rng.gen_ratio(1, 20) { rng.gen_range(253..=max.max(253) + 60) } else { rng.gen_range(0..=max) };
    (0..n).map(|_| rng.gen()).collect()
}

/// A random transaction with at least one input.
pub fn random_tx<R: Rng>(rng: &mut R) -> Transaction {
    let segwit = rng.gen_bool(0.6);
    let inputs = (0..rng.gen_range(1..=4))
        .map(|_| {
            let mut i = TxInput::new(OutPoint::new(Txid::from_byte_array(rng.gen()), rng.gen()), rng.gen());
            if segwit && rng.gen_bool(0.7) {
                i.witness = (0..rng.gen_range(0..=3)).map(|_| bytes(rng, 80)).collect();
            }
            i
        })
        .collect();
    let outputs = (0..rng.gen_range(0..=4))
        .map(|_| {
            TxOutput::new(
                Amount::from_sat(rng.gen_range(0..=21_000_000 * 100_000_000)).unwrap(),
                Script::from_bytes(bytes(rng, 60)),
            )
        })
        .collect();
    Transaction { version: rng.gen(), inputs, outputs, locktime: rng.gen() }
}

/// A random script of at most `max_ops` elements drawn from the supported subset,
/// with occasional unsupported or truncated bytes.
pub fn random_script<R: Rng>(rng: &mut R, max_ops: usize, ctv: &[u8; 32], locktimes: &[i64]) -> Vec<u8> {
    let mut s = Vec::new();
    for _ in 0..rng.gen_range(1..=max_ops) {
        match rng.gen_range(0..100) {
            0..=14 => {
                let n = rng.gen_range(0..=4);
                s.push(n as u8);
                s.extend((0..n).map(|_| *[0u8, 1, 0x80, 2, 0xff].get(rng.gen_range(0..5)).unwrap()));
            }
            15..=24 => s.push(rng.gen_range(0x51..=0x53)),
            25..=26 => s.push(0x4f),
            27..=29 => s.push(0x00),
            30..=39 => s.push(0x63),
            40..=46 => s.push(0x67),
            47..=54 => s.push(0x68),
            55..=60 => s.push(0x75),
            61..=66 => s.push(0x87),
            67..=69 => s.push(0x88),
            70..=73 => s.push(*[0xac, 0xad].get(rng.gen_range(0..2)).unwrap()),
            74..=79 => {
                let v = locktimes[rng.gen_range(0..locktimes.len())];
                let enc = covenant_core::script::encode_scriptnum(v);
                s.push(enc.len() as u8);
                s.extend(enc);
                s.push(*[0xb1, 0xb2].get(rng.gen_range(0..2)).unwrap());
            }
            80..=85 => {
                s.push(32);
                if rng.gen_bool(0.5) {
                    s.extend_from_slice(ctv);
                } else {
                    s.extend((0..32).map(|_| rng.gen::<u8>()));
                }
                s.push(0xb3);
            }
            86..=88 => s.push(0x4c),
            89..=90 => s.push(*[0x76, 0x93, 0xba, 0x61].get(rng.gen_range(0..4)).unwrap()),
            91..=93 => {
                s.push(0x4c);
                s.push(2);
                s.extend([rng.gen::<u8>(), rng.gen::<u8>()]);
            }
            _ => s.push(0x51),
        }
    }
    s
}

pub fn random_stack<R: Rng>(rng: &mut R) -> Vec<Vec<u8>> {
    let pool: [&[u8]; 7] = [&[], &[1], &[0], &[0x80], &[2], &[0x30, 0x06], &[1, 0]];
    (0..rng.gen_range(0..=3)).map(|_| pool[rng.gen_range(0..pool.len())].to_vec()).collect()
}

pub fn class(e: &EngineError) -> Fail {
    match e {
        EngineError::BadScript(_) => Fail::Script,
        EngineError::BadSig(_) => Fail::Sig,
        EngineError::CtvMismatch => Fail::Ctv,
        EngineError::Timelock(_) => Fail::Timelock,
    }
}

pub fn contexts() -> Vec<Transaction> {
    let base = Transaction {
        version: 2,
        inputs: vec![TxInput::new(OutPoint::new(Txid::from_byte_array([3; 32]), 1), 10)],
        outputs: vec![TxOutput::new(Amount::from_sat(5_000).unwrap(), Script::from_bytes(vec![0x51]))],
        locktime: 100,
    };
    let mut v1 = base.clone();
    v1.version = 1;
    let mut fin = base.clone();
    fin.inputs[0].sequence = u32::MAX;
    let mut zero = base.clone();
    zero.locktime = 0;
    vec![base, v1, fin, zero]
}

/// Runs both interpreters on `n` random scripts and returns how many agreed.
pub fn engine_agreement(n: usize, seed: u64) -> (usize, Vec<String>) {
    let mut r = ChaCha20Rng::seed_from_u64(seed);
    let txs = contexts();
    let locktimes = [0, 1, 10, 11, 99, 100, 101, -1, 0x8000_0000, 1 << 22, 500_000_000];
    let mut agree = 0;
    let mut diffs = Vec::new();
    for _ in 0..n {
        let tx = &txs[r.gen_range(0..txs.len())];
        let ctv = ctv_hash(tx, 0).unwrap().hash;
        let script = random_script(&mut r, 12, &ctv, &locktimes);
        let stack = random_stack(&mut r);
        let expected = interpret(&script, stack.clone(), tx, 0, ctv);
        let ctx = ExecContext { tx, input_index: 0, amount: Amount::ZERO };
        let got = execute(&Script::from_bytes(script.clone()), stack, &ctx).map(|e| e.stack).map_err(|e| class(&e));
        if got == expected {
            agree += 1;
        } else if diffs.len() < 5 {
            diffs.push(format!("{}: engine {got:?}, reference {expected:?}", hex::encode(&script)));
        }
    }
    (agree, diffs)
}
