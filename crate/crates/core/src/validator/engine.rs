// SPDX-License-Identifier: CC0-1.0

//! Stack machine for the supported opcode subset.
//!
//! Rules enforced here and nowhere else:
//!
//! * the witness must leave exactly one element on the stack, and it must be true;
//! * `OP_IF` arguments must be empty or `0x01`;
//! * a non-empty signature that fails to verify aborts the script;
//! * `OP_CHECKMULTISIG` consumes no dummy element;
//! * `OP_CHECKTEMPLATEVERIFY` compares a 32-byte top element against the template
//!   hash of the spending transaction and leaves it on the stack; other sizes are a
//!   no-op.
//!
//! The signature-operation counter adds 1 per executed `CHECKSIG(VERIFY)` and `m` per
//! executed `m`-of-`n` `CHECKMULTISIG(VERIFY)`.

use crate::crypto::{decode_witness_signature, verify, PublicKey};
use crate::ctv::ctv_hash;
use crate::script::opcodes::*;
use crate::script::{decode_scriptnum, encode_scriptnum, Instruction, Script, MAX_MULTISIG_KEYS};
use crate::sighash::{sighash_digest, SpentOutputContext};
use crate::tx::{p2wsh_program, sha256, Amount, Transaction, TxOutput, MAX_WITNESS_SCRIPT_SIZE, SEQUENCE_FINAL};

pub const MAX_STACK_SIZE: usize = 1_000;
pub const MAX_OPS_PER_SCRIPT: usize = 201;
pub const MAX_ELEMENT_SIZE: usize = 520;
/// Locktime values at or above this are timestamps, which the simulator does not support.
pub const LOCKTIME_THRESHOLD: i64 = 500_000_000;
pub const SEQUENCE_LOCKTIME_DISABLE_FLAG: u32 = 1 << 31;
pub const SEQUENCE_LOCKTIME_TYPE_FLAG: u32 = 1 << 22;
pub const SEQUENCE_LOCKTIME_MASK: u32 = 0x0000_ffff;

/// Why a script failed, grouped by the rejection reason it maps to.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum EngineError {
    #[error("bad-script: {0}")]
    BadScript(&'static str),
    #[error("bad-sig: {0}")]
    BadSig(&'static str),
    #[error("ctv-mismatch")]
    CtvMismatch,
    #[error("timelock: {0}")]
    Timelock(&'static str),
}

/// The spending transaction and input being evaluated.
#[derive(Debug, Clone, Copy)]
pub struct ExecContext<'a> {
    pub tx: &'a Transaction,
    pub input_index: usize,
    pub amount: Amount,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Execution {
    pub stack: Vec<Vec<u8>>,
    pub sigops: usize,
}

pub fn cast_to_bool(v: &[u8]) -> bool {
    for (i, &b) in v.iter().enumerate() {
        if b != 0 {
            // negative zero
            return !(i == v.len() - 1 && b == 0x80);
        }
    }
    false
}

fn bool_item(b: bool) -> Vec<u8> {
    if b {
        vec![1]
    } else {
        Vec::new()
    }
}

struct Machine<'a, 'c> {
    stack: Vec<Vec<u8>>,
    sigops: usize,
    script: &'a Script,
    ctx: &'a ExecContext<'c>,
}

impl Machine<'_, '_> {
    fn pop(&mut self) -> Result<Vec<u8>, EngineError> {
        self.stack.pop().ok_or(EngineError::BadScript("stack underflow"))
    }

    fn top(&self) -> Result<&Vec<u8>, EngineError> {
        self.stack.last().ok_or(EngineError::BadScript("stack underflow"))
    }

    fn push(&mut self, item: Vec<u8>) -> Result<(), EngineError> {
        if self.stack.len() >= MAX_STACK_SIZE {
            return Err(EngineError::BadScript("stack size limit"));
        }
        self.stack.push(item);
        Ok(())
    }

    fn pop_small_int(&mut self) -> Result<i64, EngineError> {
        let item = self.pop()?;
        decode_scriptnum(&item, 4).ok_or(EngineError::BadScript("bad script number"))
    }

    fn check_sig(&self, sig: &[u8], key: &[u8]) -> Result<bool, EngineError> {
        if sig.is_empty() {
            return Ok(false);
        }
        let (sig, ty) = decode_witness_signature(sig).map_err(|_| EngineError::BadSig("malformed signature"))?;
        let key = PublicKey::from_slice(key).map_err(|_| EngineError::BadSig("malformed public key"))?;
        let spent = SpentOutputContext { script_code: self.script.clone(), amount: self.ctx.amount };
        let digest = sighash_digest(self.ctx.tx, self.ctx.input_index, &spent, ty)
            .map_err(|_| EngineError::BadSig("no digest for sighash type"))?;
        if verify(&key, &digest, &sig) {
            Ok(true)
        } else {
            Err(EngineError::BadSig("signature does not verify"))
        }
    }

    fn check_multisig(&mut self) -> Result<bool, EngineError> {
        let n = self.pop_small_int()?;
        if n < 1 || n as usize > MAX_MULTISIG_KEYS {
            return Err(EngineError::BadScript("multisig key count out of range"));
        }
        let mut keys = Vec::with_capacity(n as usize);
        for _ in 0..n {
            keys.push(self.pop()?);
        }
        keys.reverse();
        let m = self.pop_small_int()?;
        if m < 1 || m > n {
            return Err(EngineError::BadScript("multisig threshold out of range"));
        }
        let mut sigs = Vec::with_capacity(m as usize);
        for _ in 0..m {
            sigs.push(self.pop()?);
        }
        sigs.reverse();
        self.sigops += m as usize;
        if sigs.iter().any(|s| s.is_empty()) {
            if sigs.iter().any(|s| !s.is_empty()) {
                return Err(EngineError::BadSig("partial multisig"));
            }
            return Ok(false);
        }
        let keys = keys
            .iter()
            .map(|k| PublicKey::from_slice(k))
            .collect::<Result<Vec<_>, _>>()
            .map_err(|_| EngineError::BadSig("malformed public key"))?;
        let spent = SpentOutputContext { script_code: self.script.clone(), amount: self.ctx.amount };
        // signatures must appear in key order
        let mut remaining = keys.iter();
        for sig in &sigs {
            let (sig, ty) = decode_witness_signature(sig).map_err(|_| EngineError::BadSig("malformed signature"))?;
            let digest = sighash_digest(self.ctx.tx, self.ctx.input_index, &spent, ty)
                .map_err(|_| EngineError::BadSig("no digest for sighash type"))?;
            if !remaining.any(|key| verify(key, &digest, &sig)) {
                return Err(EngineError::BadSig("signature does not verify"));
            }
        }
        Ok(true)
    }

    fn check_locktime(&self) -> Result<(), EngineError> {
        let item = self.top()?;
        let value = decode_scriptnum(item, 5).ok_or(EngineError::BadScript("bad script number"))?;
        if value < 0 {
            return Err(EngineError::Timelock("negative locktime"));
        }
        if value >= LOCKTIME_THRESHOLD || self.ctx.tx.locktime as i64 >= LOCKTIME_THRESHOLD {
            return Err(EngineError::Timelock("time-based locktime unsupported"));
        }
        if value > self.ctx.tx.locktime as i64 {
            return Err(EngineError::Timelock("locktime not reached"));
        }
        if self.ctx.tx.inputs[self.ctx.input_index].sequence == SEQUENCE_FINAL {
            return Err(EngineError::Timelock("input sequence is final"));
        }
        Ok(())
    }

    fn check_sequence(&self) -> Result<(), EngineError> {
        let item = self.top()?;
        let value = decode_scriptnum(item, 5).ok_or(EngineError::BadScript("bad script number"))?;
        if value < 0 {
            return Err(EngineError::Timelock("negative sequence"));
        }
        let value = value as u32;
        if value & SEQUENCE_LOCKTIME_DISABLE_FLAG != 0 {
            return Ok(());
        }
        let sequence = self.ctx.tx.inputs[self.ctx.input_index].sequence;
        if self.ctx.tx.version < 2 || sequence & SEQUENCE_LOCKTIME_DISABLE_FLAG != 0 {
            return Err(EngineError::Timelock("relative lock disabled on input"));
        }
        if value & SEQUENCE_LOCKTIME_TYPE_FLAG != 0 || sequence & SEQUENCE_LOCKTIME_TYPE_FLAG != 0 {
            return Err(EngineError::Timelock("time-based relative lock unsupported"));
        }
        if value & SEQUENCE_LOCKTIME_MASK > sequence & SEQUENCE_LOCKTIME_MASK {
            return Err(EngineError::Timelock("relative locktime not reached"));
        }
        Ok(())
    }

    fn check_template(&self) -> Result<(), EngineError> {
        let item = self.top()?;
        if item.len() != 32 {
            return Ok(());
        }
        let expected = ctv_hash(self.ctx.tx, self.ctx.input_index as u32)
            .map_err(|_| EngineError::BadScript("input index out of range"))?;
        if item[..] == expected.hash {
            Ok(())
        } else {
            Err(EngineError::CtvMismatch)
        }
    }

    fn run(&mut self) -> Result<(), EngineError> {
        let mut conditions: Vec<bool> = Vec::new();
        let mut op_count = 0;
        for ins in self.script.instructions() {
            let ins = ins.map_err(|_| EngineError::BadScript("unparseable script"))?;
            let executing = conditions.iter().all(|&c| c);
            let op = match ins {
                Instruction::Push(data) => {
                    if data.len() > MAX_ELEMENT_SIZE {
                        return Err(EngineError::BadScript("push exceeds element size"));
                    }
                    if executing {
                        self.push(data.to_vec())?;
                    }
                    continue;
                }
                Instruction::Op(op) => op,
            };
            if op > OP_16 {
                op_count += 1;
                if op_count > MAX_OPS_PER_SCRIPT {
                    return Err(EngineError::BadScript("opcode count limit"));
                }
            }
            match op {
                OP_IF => {
                    let branch = if executing {
                        let v = self.pop()?;
                        if !(v.is_empty() || v == [1]) {
                            return Err(EngineError::BadScript("non-minimal if argument"));
                        }
                        !v.is_empty()
                    } else {
                        false
                    };
                    conditions.push(branch);
                    continue;
                }
                OP_ELSE => {
                    let last = conditions.last_mut().ok_or(EngineError::BadScript("unbalanced conditional"))?;
                    *last = !*last;
                    continue;
                }
                OP_ENDIF => {
                    conditions.pop().ok_or(EngineError::BadScript("unbalanced conditional"))?;
                    continue;
                }
                _ if !executing => continue,
                _ => {}
            }
            match op {
                OP_1NEGATE => self.push(encode_scriptnum(-1))?,
                OP_1..=OP_16 => self.push(encode_scriptnum((op - OP_1 + 1) as i64))?,
                OP_DROP => {
                    self.pop()?;
                }
                OP_EQUAL | OP_EQUALVERIFY => {
                    let a = self.pop()?;
                    let b = self.pop()?;
                    if op == OP_EQUALVERIFY {
                        if a != b {
                            return Err(EngineError::BadScript("equalverify failed"));
                        }
                    } else {
                        self.push(bool_item(a == b))?;
                    }
                }
                OP_CHECKSIG | OP_CHECKSIGVERIFY => {
                    let key = self.pop()?;
                    let sig = self.pop()?;
                    self.sigops += 1;
                    let ok = self.check_sig(&sig, &key)?;
                    if op == OP_CHECKSIGVERIFY {
                        if !ok {
                            return Err(EngineError::BadSig("missing signature"));
                        }
                    } else {
                        self.push(bool_item(ok))?;
                    }
                }
                OP_CHECKMULTISIG | OP_CHECKMULTISIGVERIFY => {
                    let ok = self.check_multisig()?;
                    if op == OP_CHECKMULTISIGVERIFY {
                        if !ok {
                            return Err(EngineError::BadSig("missing signature"));
                        }
                    } else {
                        self.push(bool_item(ok))?;
                    }
                }
                OP_CHECKLOCKTIMEVERIFY => self.check_locktime()?,
                OP_CHECKSEQUENCEVERIFY => self.check_sequence()?,
                OP_CHECKTEMPLATEVERIFY => self.check_template()?,
                _ => return Err(EngineError::BadScript("unsupported opcode")),
            }
        }
        if !conditions.is_empty() {
            return Err(EngineError::BadScript("unbalanced conditional"));
        }
        Ok(())
    }
}

/// Runs `script` on `stack` and returns the final stack. No clean-stack rule.
pub fn execute(script: &Script, stack: Vec<Vec<u8>>, ctx: &ExecContext<'_>) -> Result<Execution, EngineError> {
    if stack.len() > MAX_STACK_SIZE {
        return Err(EngineError::BadScript("stack size limit"));
    }
    if stack.iter().any(|item| item.len() > MAX_ELEMENT_SIZE) {
        return Err(EngineError::BadScript("witness element exceeds element size"));
    }
    let mut m = Machine { stack, sigops: 0, script, ctx };
    m.run()?;
    Ok(Execution { stack: m.stack, sigops: m.sigops })
}

/// Executes `script` and applies the clean-stack rule. Returns the sig-op count.
pub fn execute_clean(script: &Script, stack: Vec<Vec<u8>>, ctx: &ExecContext<'_>) -> Result<usize, EngineError> {
    let exec = execute(script, stack, ctx)?;
    match exec.stack.as_slice() {
        [top] if cast_to_bool(top) => Ok(exec.sigops),
        [_] => Err(EngineError::BadScript("script evaluated to false")),
        _ => Err(EngineError::BadScript("stack not clean")),
    }
}

/// Verifies input `input_index` of `tx` against the P2WSH output it spends.
pub fn verify_input(tx: &Transaction, input_index: usize, spent: &TxOutput) -> Result<usize, EngineError> {
    let program = p2wsh_program(&spent.locking_script).ok_or(EngineError::BadScript("spent output is not P2WSH"))?;
    let input = tx.inputs.get(input_index).ok_or(EngineError::BadScript("input index out of range"))?;
    let (script_bytes, items) = input.witness.split_last().ok_or(EngineError::BadScript("empty witness"))?;
    if script_bytes.len() > MAX_WITNESS_SCRIPT_SIZE {
        return Err(EngineError::BadScript("witness script too large"));
    }
    if sha256(script_bytes) != program {
        return Err(EngineError::BadScript("witness script hash mismatch"));
    }
    let script = Script::from_bytes(script_bytes.clone());
    let ctx = ExecContext { tx, input_index, amount: spent.amount };
    execute_clean(&script, items.to_vec(), &ctx)
}
