use std::collections::HashMap;
use std::rc::Rc;

use alloy_primitives::{keccak256, Address, Bytes, B256, U256};

use super::precompiles;
use super::state::{Journaled, WorldState};
use super::{
    intrinsic_gas, BlockEnv, ExitStatus, HaltReason, Log, SpecId, Transaction, TxError, TxKind,
    TxOutcome, MAX_CODE_SIZE, MAX_INITCODE_SIZE,
};

const STACK_LIMIT: usize = 1024;
const CALL_DEPTH_LIMIT: usize = 1024;

const COLD_ACCOUNT: u64 = 2_600;
const COLD_SLOAD: u64 = 2_100;
const WARM_READ: u64 = 100;
const SSTORE_SET: u64 = 20_000;
const SSTORE_RESET: u64 = 5_000 - COLD_SLOAD;
const SSTORE_CLEARS_REFUND: i64 = 4_800;
const CALL_VALUE: u64 = 9_000;
const NEW_ACCOUNT: u64 = 25_000;
const CALL_STIPEND: u64 = 2_300;
const CODE_DEPOSIT: u64 = 200;

pub(super) fn execute_transaction(
    spec: SpecId,
    block: &BlockEnv,
    world: &mut WorldState,
    tx: &Transaction,
) -> Result<TxOutcome, TxError> {
    if tx.gas_limit > block.gas_limit {
        return Err(TxError::GasLimitAboveBlock);
    }
    if tx.gas_price < block.basefee {
        return Err(TxError::GasPriceBelowBaseFee);
    }
    if tx.kind == TxKind::Create && spec >= SpecId::Shanghai && tx.data.len() > MAX_INITCODE_SIZE
    {
        return Err(TxError::InitCodeTooLarge(tx.data.len()));
    }
    let intrinsic = intrinsic_gas(spec, tx);
    if tx.gas_limit < intrinsic {
        return Err(TxError::IntrinsicGas {
            limit: tx.gas_limit,
            intrinsic,
        });
    }
    let upfront = U256::from(tx.gas_limit)
        .checked_mul(tx.gas_price)
        .ok_or(TxError::InsufficientFunds)?;
    let caller_balance = world
        .account(&tx.caller)
        .map(|a| a.balance)
        .unwrap_or_default();
    let needed = upfront
        .checked_add(tx.value)
        .ok_or(TxError::InsufficientFunds)?;
    if caller_balance < needed {
        return Err(TxError::InsufficientFunds);
    }

    let mut machine = Machine {
        spec,
        block,
        origin: tx.caller,
        gas_price: tx.gas_price,
        journal: Journaled::new(world),
        jump_tables: HashMap::new(),
    };
    let j = &mut machine.journal;
    j.set_balance(tx.caller, caller_balance - upfront);
    j.prewarm(tx.caller);
    for p in precompiles::addresses() {
        j.prewarm(p);
    }
    if spec >= SpecId::Shanghai {
        j.prewarm(block.coinbase);
    }
    let nonce = j.nonce(&tx.caller);
    j.set_nonce(tx.caller, nonce.wrapping_add(1));

    let gas = tx.gas_limit - intrinsic;
    let (result, created) = match &tx.kind {
        TxKind::Create => {
            let address = tx.caller.create(nonce);
            let r = machine.create_frame(tx.caller, address, tx.value, tx.data.clone(), gas, 0);
            let created = r.status.is_success().then_some(address);
            (r, created)
        }
        TxKind::Call(to) => {
            machine.journal.prewarm(*to);
            let r = machine.call_frame(CallParams {
                caller: tx.caller,
                target: *to,
                code_address: *to,
                value: tx.value,
                transfer: true,
                input: tx.data.clone(),
                gas_limit: gas,
                is_static: false,
                depth: 0,
            });
            (r, None)
        }
    };

    let spent = tx.gas_limit - result.gas_left;
    let refund = if result.status.is_success() {
        (result.refund.max(0) as u64).min(spent / 5)
    } else {
        0
    };
    let gas_used = spent - refund;

    let j = &mut machine.journal;
    let reimburse = U256::from(tx.gas_limit - gas_used) * tx.gas_price;
    let bal = j.balance(&tx.caller);
    j.set_balance(tx.caller, bal.saturating_add(reimburse));
    let tip = tx.gas_price.saturating_sub(block.basefee);
    if !tip.is_zero() {
        let cb = j.balance(&block.coinbase);
        j.set_balance(block.coinbase, cb.saturating_add(tip * U256::from(gas_used)));
    }
    let logs = if result.status.is_success() {
        std::mem::take(&mut j.logs)
    } else {
        Vec::new()
    };
    machine.journal.finalize();

    Ok(TxOutcome {
        status: result.status,
        gas_used,
        gas_refunded: refund,
        output: result.output,
        logs,
        created,
    })
}

struct FrameResult {
    status: ExitStatus,
    gas_left: u64,
    refund: i64,
    output: Bytes,
}

impl FrameResult {
    fn halt(reason: HaltReason) -> Self {
        Self {
            status: ExitStatus::Halt(reason),
            gas_left: 0,
            refund: 0,
            output: Bytes::new(),
        }
    }
}

struct CallParams {
    caller: Address,
    target: Address,
    code_address: Address,
    value: U256,
    transfer: bool,
    input: Bytes,
    gas_limit: u64,
    is_static: bool,
    depth: usize,
}

struct Machine<'a, 'w> {
    spec: SpecId,
    block: &'a BlockEnv,
    origin: Address,
    gas_price: U256,
    journal: Journaled<'w>,
    jump_tables: HashMap<B256, Rc<Vec<bool>>>,
}

struct Frame {
    code: Bytes,
    jumpdests: Rc<Vec<bool>>,
    pc: usize,
    stack: Vec<U256>,
    memory: Vec<u8>,
    gas_left: u64,
    refund: i64,
    return_data: Bytes,
    address: Address,
    caller: Address,
    value: U256,
    input: Bytes,
    is_static: bool,
    depth: usize,
}

enum Step {
    Continue,
    Exit(ExitStatus, Bytes),
}

type OpResult = Result<Step, HaltReason>;

fn analyze_jumpdests(code: &[u8]) -> Vec<bool> {
    let mut table = vec![false; code.len()];
    let mut i = 0;
    while i < code.len() {
        let op = code[i];
        if op == 0x5b {
            table[i] = true;
        } else if (0x60..=0x7f).contains(&op) {
            i += (op - 0x5f) as usize;
        }
        i += 1;
    }
    table
}

fn mem_cost(words: u64) -> u64 {
    3 * words + words * words / 512
}

fn copy_words(len: usize) -> u64 {
    (len as u64).div_ceil(32)
}

fn to_usize(v: U256) -> Result<usize, HaltReason> {
    if v > U256::from(u32::MAX) {
        Err(HaltReason::OutOfGas)
    } else {
        Ok(v.to::<usize>())
    }
}

fn to_usize_saturating(v: U256) -> usize {
    if v > U256::from(usize::MAX) {
        usize::MAX
    } else {
        v.to::<usize>()
    }
}

fn is_negative(v: U256) -> bool {
    v.bit(255)
}

fn abs(v: U256) -> U256 {
    if is_negative(v) {
        v.wrapping_neg()
    } else {
        v
    }
}

fn sdiv(a: U256, b: U256) -> U256 {
    if b.is_zero() {
        return U256::ZERO;
    }
    let min = U256::from(1u8) << 255;
    if a == min && b == U256::MAX {
        return min;
    }
    let q = abs(a) / abs(b);
    if is_negative(a) != is_negative(b) {
        q.wrapping_neg()
    } else {
        q
    }
}

fn smod(a: U256, b: U256) -> U256 {
    if b.is_zero() {
        return U256::ZERO;
    }
    let r = abs(a) % abs(b);
    if is_negative(a) {
        r.wrapping_neg()
    } else {
        r
    }
}

fn slt(a: U256, b: U256) -> bool {
    match (is_negative(a), is_negative(b)) {
        (true, false) => true,
        (false, true) => false,
        _ => a < b,
    }
}

fn sar(shift: U256, value: U256) -> U256 {
    let neg = is_negative(value);
    if shift >= U256::from(256) {
        return if neg { U256::MAX } else { U256::ZERO };
    }
    let s = shift.to::<usize>();
    if neg {
        !((!value) >> s)
    } else {
        value >> s
    }
}

fn signextend(b: U256, x: U256) -> U256 {
    if b >= U256::from(31) {
        return x;
    }
    let bit = b.to::<usize>() * 8 + 7;
    let mask = (U256::from(1u8) << (bit + 1)) - U256::from(1u8);
    if x.bit(bit) {
        x | !mask
    } else {
        x & mask
    }
}

fn address_from_word(w: U256) -> Address {
    let bytes = w.to_be_bytes::<32>();
    Address::from_slice(&bytes[12..])
}

fn word_from_address(a: Address) -> U256 {
    U256::from_be_slice(a.as_slice())
}

fn read_padded(src: &[u8], offset: U256, len: usize) -> Vec<u8> {
    let mut out = vec![0u8; len];
    if offset < U256::from(src.len()) {
        let start = offset.to::<usize>();
        let end = start.saturating_add(len).min(src.len());
        out[..end - start].copy_from_slice(&src[start..end]);
    }
    out
}

impl Frame {
    fn charge(&mut self, amount: u64) -> Result<(), HaltReason> {
        if self.gas_left < amount {
            self.gas_left = 0;
            return Err(HaltReason::OutOfGas);
        }
        self.gas_left -= amount;
        Ok(())
    }

    fn pop(&mut self) -> Result<U256, HaltReason> {
        self.stack.pop().ok_or(HaltReason::StackUnderflow)
    }

    fn push(&mut self, v: U256) -> Result<(), HaltReason> {
        if self.stack.len() >= STACK_LIMIT {
            return Err(HaltReason::StackOverflow);
        }
        self.stack.push(v);
        Ok(())
    }

    fn require(&self, n: usize) -> Result<(), HaltReason> {
        if self.stack.len() < n {
            Err(HaltReason::StackUnderflow)
        } else {
            Ok(())
        }
    }

    /// Charges expansion gas so that [offset, offset+len) is addressable.
    fn expand(&mut self, offset: U256, len: U256) -> Result<(usize, usize), HaltReason> {
        if len.is_zero() {
            return Ok((0, 0));
        }
        let offset = to_usize(offset)?;
        let len = to_usize(len)?;
        let end = offset.checked_add(len).ok_or(HaltReason::OutOfGas)?;
        let new_words = (end as u64).div_ceil(32);
        let cur_words = (self.memory.len() as u64) / 32;
        if new_words > cur_words {
            let cost = mem_cost(new_words) - mem_cost(cur_words);
            self.charge(cost)?;
            self.memory.resize((new_words * 32) as usize, 0);
        }
        Ok((offset, len))
    }

    fn mem_slice(&self, offset: usize, len: usize) -> &[u8] {
        if len == 0 {
            &[]
        } else {
            &self.memory[offset..offset + len]
        }
    }
}

impl<'a, 'w> Machine<'a, 'w> {
    fn jump_table(&mut self, code: &Bytes) -> Rc<Vec<bool>> {
        let hash = keccak256(code);
        self.jump_tables
            .entry(hash)
            .or_insert_with(|| Rc::new(analyze_jumpdests(code)))
            .clone()
    }

    fn call_frame(&mut self, p: CallParams) -> FrameResult {
        let checkpoint = self.journal.checkpoint();
        if p.transfer {
            if !self.journal.transfer(p.caller, p.target, p.value) {
                self.journal.revert_to(checkpoint);
                return FrameResult {
                    status: ExitStatus::Halt(HaltReason::InsufficientBalance),
                    gas_left: p.gas_limit,
                    refund: 0,
                    output: Bytes::new(),
                };
            }
        } else {
            self.journal.touch(p.target);
        }

        if precompiles::is_precompile(&p.code_address) {
            return match precompiles::run(&p.code_address, &p.input, p.gas_limit) {
                Ok((used, output)) => FrameResult {
                    status: ExitStatus::Success,
                    gas_left: p.gas_limit - used,
                    refund: 0,
                    output,
                },
                Err(reason) => {
                    self.journal.revert_to(checkpoint);
                    FrameResult::halt(reason)
                }
            };
        }

        let code = self.journal.code(&p.code_address);
        if code.is_empty() {
            return FrameResult {
                status: ExitStatus::Success,
                gas_left: p.gas_limit,
                refund: 0,
                output: Bytes::new(),
            };
        }
        let jumpdests = self.jump_table(&code);
        let mut frame = Frame {
            code,
            jumpdests,
            pc: 0,
            stack: Vec::with_capacity(64),
            memory: Vec::new(),
            gas_left: p.gas_limit,
            refund: 0,
            return_data: Bytes::new(),
            address: p.target,
            caller: p.caller,
            value: p.value,
            input: p.input,
            is_static: p.is_static,
            depth: p.depth,
        };
        let result = self.run(&mut frame);
        if !result.status.is_success() {
            self.journal.revert_to(checkpoint);
        }
        result
    }

    /// Runs init code for a new contract at `address`. Nonce bookkeeping of
    /// the creator is the caller's responsibility.
    fn create_frame(
        &mut self,
        caller: Address,
        address: Address,
        value: U256,
        init_code: Bytes,
        gas_limit: u64,
        depth: usize,
    ) -> FrameResult {
        self.journal.access_address(address);
        let checkpoint = self.journal.checkpoint();
        if !self.journal.code(&address).is_empty() || self.journal.nonce(&address) != 0 {
            return FrameResult::halt(HaltReason::CreateCollision);
        }
        self.journal.create_account(address, 1);
        if !self.journal.transfer(caller, address, value) {
            self.journal.revert_to(checkpoint);
            return FrameResult {
                status: ExitStatus::Halt(HaltReason::InsufficientBalance),
                gas_left: gas_limit,
                refund: 0,
                output: Bytes::new(),
            };
        }
        let jumpdests = self.jump_table(&init_code);
        let mut frame = Frame {
            code: init_code,
            jumpdests,
            pc: 0,
            stack: Vec::with_capacity(64),
            memory: Vec::new(),
            gas_left: gas_limit,
            refund: 0,
            return_data: Bytes::new(),
            address,
            caller,
            value,
            input: Bytes::new(),
            is_static: false,
            depth,
        };
        let mut result = if frame.code.is_empty() {
            FrameResult {
                status: ExitStatus::Success,
                gas_left: gas_limit,
                refund: 0,
                output: Bytes::new(),
            }
        } else {
            self.run(&mut frame)
        };
        if result.status.is_success() {
            let code = result.output.clone();
            let failure = if code.first() == Some(&0xef) {
                Some(HaltReason::InvalidCodePrefix)
            } else if code.len() > MAX_CODE_SIZE {
                Some(HaltReason::CodeSizeLimit)
            } else {
                let deposit = CODE_DEPOSIT * code.len() as u64;
                if result.gas_left < deposit {
                    Some(HaltReason::OutOfGas)
                } else {
                    result.gas_left -= deposit;
                    None
                }
            };
            if let Some(reason) = failure {
                self.journal.revert_to(checkpoint);
                return FrameResult::halt(reason);
            }
            self.journal.set_code(address, code);
        } else {
            self.journal.revert_to(checkpoint);
        }
        result
    }

    fn run(&mut self, f: &mut Frame) -> FrameResult {
        loop {
            match self.step(f) {
                Ok(Step::Continue) => {}
                Ok(Step::Exit(status, output)) => {
                    let refund = if status.is_success() { f.refund } else { 0 };
                    return FrameResult {
                        status,
                        gas_left: f.gas_left,
                        refund,
                        output,
                    };
                }
                Err(reason) => return FrameResult::halt(reason),
            }
        }
    }

    fn step(&mut self, f: &mut Frame) -> OpResult {
        let Some(&op) = f.code.get(f.pc) else {
            return Ok(Step::Exit(ExitStatus::Success, Bytes::new()));
        };
        f.pc += 1;
        let shanghai = self.spec >= SpecId::Shanghai;
        match op {
            0x00 => return Ok(Step::Exit(ExitStatus::Success, Bytes::new())),
            0x01..=0x0b => {
                let gas = match op {
                    0x01 | 0x03 => 3,
                    0x02 | 0x04..=0x07 | 0x0b => 5,
                    0x08 | 0x09 => 8,
                    _ => 10,
                };
                f.charge(gas)?;
                if op == 0x08 || op == 0x09 {
                    f.require(3)?;
                    let a = f.pop()?;
                    let b = f.pop()?;
                    let n = f.pop()?;
                    let r = if n.is_zero() {
                        U256::ZERO
                    } else if op == 0x08 {
                        a.add_mod(b, n)
                    } else {
                        a.mul_mod(b, n)
                    };
                    f.push(r)?;
                } else {
                    f.require(2)?;
                    let a = f.pop()?;
                    let b = f.pop()?;
                    let r = match op {
                        0x01 => a.wrapping_add(b),
                        0x02 => a.wrapping_mul(b),
                        0x03 => a.wrapping_sub(b),
                        0x04 => a.checked_div(b).unwrap_or_default(),
                        0x05 => sdiv(a, b),
                        0x06 => a.checked_rem(b).unwrap_or_default(),
                        0x07 => smod(a, b),
                        0x0a => {
                            let bytes = (256 - b.leading_zeros() as u64).div_ceil(8);
                            f.charge(50 * bytes)?;
                            a.wrapping_pow(b)
                        }
                        _ => signextend(a, b),
                    };
                    f.push(r)?;
                }
            }
            0x10..=0x1d => {
                f.charge(3)?;
                if op == 0x15 || op == 0x19 {
                    let a = f.pop()?;
                    let r = if op == 0x15 {
                        U256::from(a.is_zero() as u8)
                    } else {
                        !a
                    };
                    f.push(r)?;
                } else {
                    f.require(2)?;
                    let a = f.pop()?;
                    let b = f.pop()?;
                    let r = match op {
                        0x10 => U256::from((a < b) as u8),
                        0x11 => U256::from((a > b) as u8),
                        0x12 => U256::from(slt(a, b) as u8),
                        0x13 => U256::from(slt(b, a) as u8),
                        0x14 => U256::from((a == b) as u8),
                        0x16 => a & b,
                        0x17 => a | b,
                        0x18 => a ^ b,
                        0x1a => {
                            if a < U256::from(32) {
                                let i = a.to::<usize>();
                                U256::from(b.to_be_bytes::<32>()[i])
                            } else {
                                U256::ZERO
                            }
                        }
                        0x1b => {
                            if a >= U256::from(256) {
                                U256::ZERO
                            } else {
                                b << a.to::<usize>()
                            }
                        }
                        0x1c => {
                            if a >= U256::from(256) {
                                U256::ZERO
                            } else {
                                b >> a.to::<usize>()
                            }
                        }
                        0x1d => sar(a, b),
                        _ => return Err(HaltReason::InvalidOpcode),
                    };
                    f.push(r)?;
                }
            }
            0x20 => {
                f.charge(30)?;
                f.require(2)?;
                let offset = f.pop()?;
                let len = f.pop()?;
                let len_usize = to_usize(len)?;
                f.charge(6 * copy_words(len_usize))?;
                let (o, l) = f.expand(offset, len)?;
                let hash = keccak256(f.mem_slice(o, l));
                f.push(U256::from_be_bytes(hash.0))?;
            }
            0x30 => {
                f.charge(2)?;
                f.push(word_from_address(f.address))?;
            }
            0x31 => {
                let addr = address_from_word(f.pop()?);
                let cold = self.journal.access_address(addr);
                f.charge(if cold { COLD_ACCOUNT } else { WARM_READ })?;
                f.push(self.journal.balance(&addr))?;
            }
            0x32 => {
                f.charge(2)?;
                f.push(word_from_address(self.origin))?;
            }
            0x33 => {
                f.charge(2)?;
                f.push(word_from_address(f.caller))?;
            }
            0x34 => {
                f.charge(2)?;
                f.push(f.value)?;
            }
            0x35 => {
                f.charge(3)?;
                let offset = f.pop()?;
                let word = read_padded(&f.input, offset, 32);
                f.push(U256::from_be_slice(&word))?;
            }
            0x36 => {
                f.charge(2)?;
                f.push(U256::from(f.input.len()))?;
            }
            0x37 | 0x39 | 0x3e => {
                f.charge(3)?;
                f.require(3)?;
                let dest = f.pop()?;
                let src = f.pop()?;
                let len = f.pop()?;
                if op == 0x3e {
                    let end = src.checked_add(len);
                    match end {
                        Some(end) if end <= U256::from(f.return_data.len()) => {}
                        _ => return Err(HaltReason::ReturnDataOutOfBounds),
                    }
                }
                let len_usize = to_usize(len)?;
                f.charge(3 * copy_words(len_usize))?;
                let (d, l) = f.expand(dest, len)?;
                if l > 0 {
                    let data = match op {
                        0x37 => read_padded(&f.input, src, l),
                        0x39 => read_padded(&f.code, src, l),
                        _ => read_padded(&f.return_data, src, l),
                    };
                    f.memory[d..d + l].copy_from_slice(&data);
                }
            }
            0x38 => {
                f.charge(2)?;
                f.push(U256::from(f.code.len()))?;
            }
            0x3a => {
                f.charge(2)?;
                f.push(self.gas_price)?;
            }
            0x3b => {
                let addr = address_from_word(f.pop()?);
                let cold = self.journal.access_address(addr);
                f.charge(if cold { COLD_ACCOUNT } else { WARM_READ })?;
                f.push(U256::from(self.journal.code(&addr).len()))?;
            }
            0x3c => {
                f.require(4)?;
                let addr = address_from_word(f.pop()?);
                let dest = f.pop()?;
                let src = f.pop()?;
                let len = f.pop()?;
                let cold = self.journal.access_address(addr);
                f.charge(if cold { COLD_ACCOUNT } else { WARM_READ })?;
                let len_usize = to_usize(len)?;
                f.charge(3 * copy_words(len_usize))?;
                let (d, l) = f.expand(dest, len)?;
                if l > 0 {
                    let code = self.journal.code(&addr);
                    let data = read_padded(&code, src, l);
                    f.memory[d..d + l].copy_from_slice(&data);
                }
            }
            0x3d => {
                f.charge(2)?;
                f.push(U256::from(f.return_data.len()))?;
            }
            0x3f => {
                let addr = address_from_word(f.pop()?);
                let cold = self.journal.access_address(addr);
                f.charge(if cold { COLD_ACCOUNT } else { WARM_READ })?;
                let hash = self.journal.code_hash(&addr);
                f.push(U256::from_be_bytes(hash.0))?;
            }
            0x40 => {
                f.charge(20)?;
                let number = f.pop()?;
                let _ = number;
                f.push(U256::ZERO)?;
            }
            0x41 => {
                f.charge(2)?;
                f.push(word_from_address(self.block.coinbase))?;
            }
            0x42 => {
                f.charge(2)?;
                f.push(U256::from(self.block.timestamp))?;
            }
            0x43 => {
                f.charge(2)?;
                f.push(U256::from(self.block.number))?;
            }
            0x44 => {
                f.charge(2)?;
                f.push(U256::from_be_bytes(self.block.prevrandao.0))?;
            }
            0x45 => {
                f.charge(2)?;
                f.push(U256::from(self.block.gas_limit))?;
            }
            0x46 => {
                f.charge(2)?;
                f.push(U256::from(self.block.chain_id))?;
            }
            0x47 => {
                f.charge(5)?;
                f.push(self.journal.balance(&f.address))?;
            }
            0x48 => {
                f.charge(2)?;
                f.push(self.block.basefee)?;
            }
            0x50 => {
                f.charge(2)?;
                f.pop()?;
            }
            0x51 => {
                f.charge(3)?;
                let offset = f.pop()?;
                let (o, _) = f.expand(offset, U256::from(32))?;
                let w = U256::from_be_slice(&f.memory[o..o + 32]);
                f.push(w)?;
            }
            0x52 => {
                f.charge(3)?;
                f.require(2)?;
                let offset = f.pop()?;
                let value = f.pop()?;
                let (o, _) = f.expand(offset, U256::from(32))?;
                f.memory[o..o + 32].copy_from_slice(&value.to_be_bytes::<32>());
            }
            0x53 => {
                f.charge(3)?;
                f.require(2)?;
                let offset = f.pop()?;
                let value = f.pop()?;
                let (o, _) = f.expand(offset, U256::from(1))?;
                f.memory[o] = value.to_be_bytes::<32>()[31];
            }
            0x54 => {
                let key = f.pop()?;
                let cold = self.journal.access_slot(f.address, key);
                f.charge(if cold { COLD_SLOAD } else { WARM_READ })?;
                f.push(self.journal.sload(&f.address, key))?;
            }
            0x55 => {
                if f.is_static {
                    return Err(HaltReason::StateChangeDuringStaticCall);
                }
                f.require(2)?;
                let key = f.pop()?;
                let new = f.pop()?;
                if f.gas_left <= CALL_STIPEND {
                    return Err(HaltReason::OutOfGas);
                }
                let cold = self.journal.access_slot(f.address, key);
                let original = self.journal.original(f.address, key);
                let current = self.journal.sload(&f.address, key);
                let mut cost = if cold { COLD_SLOAD } else { 0 };
                cost += if current == new {
                    WARM_READ
                } else if original == current {
                    if original.is_zero() {
                        SSTORE_SET
                    } else {
                        SSTORE_RESET
                    }
                } else {
                    WARM_READ
                };
                f.charge(cost)?;
                if current != new {
                    if original == current {
                        if !original.is_zero() && new.is_zero() {
                            f.refund += SSTORE_CLEARS_REFUND;
                        }
                    } else {
                        if !original.is_zero() {
                            if current.is_zero() {
                                f.refund -= SSTORE_CLEARS_REFUND;
                            } else if new.is_zero() {
                                f.refund += SSTORE_CLEARS_REFUND;
                            }
                        }
                        if original == new {
                            if original.is_zero() {
                                f.refund += (SSTORE_SET - WARM_READ) as i64;
                            } else {
                                f.refund += (SSTORE_RESET - WARM_READ) as i64;
                            }
                        }
                    }
                }
                self.journal.sstore(f.address, key, new);
            }
            0x56 => {
                f.charge(8)?;
                let dest = f.pop()?;
                self.jump(f, dest)?;
            }
            0x57 => {
                f.charge(10)?;
                f.require(2)?;
                let dest = f.pop()?;
                let cond = f.pop()?;
                if !cond.is_zero() {
                    self.jump(f, dest)?;
                }
            }
            0x58 => {
                f.charge(2)?;
                f.push(U256::from(f.pc - 1))?;
            }
            0x59 => {
                f.charge(2)?;
                f.push(U256::from(f.memory.len()))?;
            }
            0x5a => {
                f.charge(2)?;
                f.push(U256::from(f.gas_left))?;
            }
            0x5b => {
                f.charge(1)?;
            }
            0x5f if shanghai => {
                f.charge(2)?;
                f.push(U256::ZERO)?;
            }
            0x60..=0x7f => {
                f.charge(3)?;
                let n = (op - 0x5f) as usize;
                let start = f.pc;
                let end = (start + n).min(f.code.len());
                let mut buf = [0u8; 32];
                let slice = &f.code[start..end];
                buf[32 - n..32 - n + slice.len()].copy_from_slice(slice);
                f.pc += n;
                f.push(U256::from_be_bytes(buf))?;
            }
            0x80..=0x8f => {
                f.charge(3)?;
                let n = (op - 0x7f) as usize;
                f.require(n)?;
                let v = f.stack[f.stack.len() - n];
                f.push(v)?;
            }
            0x90..=0x9f => {
                f.charge(3)?;
                let n = (op - 0x8f) as usize;
                f.require(n + 1)?;
                let top = f.stack.len() - 1;
                f.stack.swap(top, top - n);
            }
            0xa0..=0xa4 => {
                if f.is_static {
                    return Err(HaltReason::StateChangeDuringStaticCall);
                }
                let topics = (op - 0xa0) as usize;
                f.require(2 + topics)?;
                let offset = f.pop()?;
                let len = f.pop()?;
                let len_usize = to_usize(len)?;
                f.charge(375 + 375 * topics as u64 + 8 * len_usize as u64)?;
                let mut ts = Vec::with_capacity(topics);
                for _ in 0..topics {
                    ts.push(B256::from(f.pop()?.to_be_bytes::<32>()));
                }
                let (o, l) = f.expand(offset, len)?;
                let data = Bytes::copy_from_slice(f.mem_slice(o, l));
                self.journal.logs.push(Log {
                    address: f.address,
                    topics: ts,
                    data,
                });
            }
            0xf0 | 0xf5 => return self.op_create(f, op == 0xf5),
            0xf1 | 0xf2 | 0xf4 | 0xfa => return self.op_call(f, op),
            0xf3 | 0xfd => {
                f.require(2)?;
                let offset = f.pop()?;
                let len = f.pop()?;
                let (o, l) = f.expand(offset, len)?;
                let out = Bytes::copy_from_slice(f.mem_slice(o, l));
                let status = if op == 0xf3 {
                    ExitStatus::Success
                } else {
                    ExitStatus::Revert
                };
                return Ok(Step::Exit(status, out));
            }
            0xff => {
                if f.is_static {
                    return Err(HaltReason::StateChangeDuringStaticCall);
                }
                let beneficiary = address_from_word(f.pop()?);
                let cold = self.journal.access_address(beneficiary);
                let balance = self.journal.balance(&f.address);
                let mut cost = 5_000;
                if cold {
                    cost += COLD_ACCOUNT;
                }
                if !balance.is_zero() && self.journal.is_empty_account(&beneficiary) {
                    cost += NEW_ACCOUNT;
                }
                f.charge(cost)?;
                if beneficiary != f.address {
                    self.journal.transfer(f.address, beneficiary, balance);
                } else {
                    self.journal.touch(beneficiary);
                }
                self.journal.set_balance(f.address, U256::ZERO);
                self.journal.mark_destructed(f.address);
                return Ok(Step::Exit(ExitStatus::Success, Bytes::new()));
            }
            _ => return Err(HaltReason::InvalidOpcode),
        }
        Ok(Step::Continue)
    }

    fn jump(&self, f: &mut Frame, dest: U256) -> Result<(), HaltReason> {
        let d = to_usize_saturating(dest);
        if d < f.jumpdests.len() && f.jumpdests[d] {
            f.pc = d;
            Ok(())
        } else {
            Err(HaltReason::InvalidJump)
        }
    }

    fn op_create(&mut self, f: &mut Frame, is_create2: bool) -> OpResult {
        if f.is_static {
            return Err(HaltReason::StateChangeDuringStaticCall);
        }
        f.require(if is_create2 { 4 } else { 3 })?;
        let value = f.pop()?;
        let offset = f.pop()?;
        let len = f.pop()?;
        let salt = if is_create2 { Some(f.pop()?) } else { None };
        f.charge(32_000)?;
        let len_usize = to_usize(len)?;
        if self.spec >= SpecId::Shanghai {
            if len_usize > MAX_INITCODE_SIZE {
                return Err(HaltReason::InitCodeSizeLimit);
            }
            f.charge(2 * copy_words(len_usize))?;
        }
        if is_create2 {
            f.charge(6 * copy_words(len_usize))?;
        }
        let (o, l) = f.expand(offset, len)?;
        let init_code = Bytes::copy_from_slice(f.mem_slice(o, l));
        f.return_data = Bytes::new();

        let gas = f.gas_left - f.gas_left / 64;
        if f.depth + 1 > CALL_DEPTH_LIMIT || self.journal.balance(&f.address) < value {
            f.push(U256::ZERO)?;
            return Ok(Step::Continue);
        }
        let nonce = self.journal.nonce(&f.address);
        if nonce == u64::MAX {
            f.push(U256::ZERO)?;
            return Ok(Step::Continue);
        }
        self.journal.set_nonce(f.address, nonce + 1);
        let address = match salt {
            Some(salt) => f
                .address
                .create2(B256::from(salt.to_be_bytes::<32>()), keccak256(&init_code)),
            None => f.address.create(nonce),
        };
        f.gas_left -= gas;
        let result = self.create_frame(f.address, address, value, init_code, gas, f.depth + 1);
        f.gas_left += result.gas_left;
        match result.status {
            ExitStatus::Success => {
                f.refund += result.refund;
                f.push(word_from_address(address))?;
            }
            ExitStatus::Revert => {
                f.return_data = result.output;
                f.push(U256::ZERO)?;
            }
            ExitStatus::Halt(_) => {
                f.push(U256::ZERO)?;
            }
        }
        Ok(Step::Continue)
    }

    fn op_call(&mut self, f: &mut Frame, op: u8) -> OpResult {
        let has_value = op == 0xf1 || op == 0xf2;
        f.require(if has_value { 7 } else { 6 })?;
        let gas_req = f.pop()?;
        let to = address_from_word(f.pop()?);
        let value = if has_value { f.pop()? } else { U256::ZERO };
        let in_off = f.pop()?;
        let in_len = f.pop()?;
        let out_off = f.pop()?;
        let out_len = f.pop()?;

        if op == 0xf1 && f.is_static && !value.is_zero() {
            return Err(HaltReason::StateChangeDuringStaticCall);
        }

        let (io, il) = f.expand(in_off, in_len)?;
        let (oo, ol) = f.expand(out_off, out_len)?;

        let cold = self.journal.access_address(to);
        let mut cost = if cold { COLD_ACCOUNT } else { WARM_READ };
        if !value.is_zero() {
            cost += CALL_VALUE;
            if op == 0xf1 && self.journal.is_empty_account(&to) {
                cost += NEW_ACCOUNT;
            }
        }
        f.charge(cost)?;

        let available = f.gas_left - f.gas_left / 64;
        let forwarded = if gas_req > U256::from(available) {
            available
        } else {
            gas_req.to::<u64>()
        };
        f.gas_left -= forwarded;
        let gas = if value.is_zero() {
            forwarded
        } else {
            forwarded + CALL_STIPEND
        };

        let input = Bytes::copy_from_slice(f.mem_slice(io, il));
        f.return_data = Bytes::new();

        if f.depth + 1 > CALL_DEPTH_LIMIT
            || (has_value && !value.is_zero() && self.journal.balance(&f.address) < value)
        {
            f.gas_left += gas;
            f.push(U256::ZERO)?;
            return Ok(Step::Continue);
        }

        let params = match op {
            0xf1 => CallParams {
                caller: f.address,
                target: to,
                code_address: to,
                value,
                transfer: true,
                input,
                gas_limit: gas,
                is_static: f.is_static,
                depth: f.depth + 1,
            },
            0xf2 => CallParams {
                caller: f.address,
                target: f.address,
                code_address: to,
                value,
                transfer: true,
                input,
                gas_limit: gas,
                is_static: f.is_static,
                depth: f.depth + 1,
            },
            0xf4 => CallParams {
                caller: f.caller,
                target: f.address,
                code_address: to,
                value: f.value,
                transfer: false,
                input,
                gas_limit: gas,
                is_static: f.is_static,
                depth: f.depth + 1,
            },
            _ => CallParams {
                caller: f.address,
                target: to,
                code_address: to,
                value: U256::ZERO,
                transfer: true,
                input,
                gas_limit: gas,
                is_static: true,
                depth: f.depth + 1,
            },
        };
        let result = self.call_frame(params);
        f.gas_left += result.gas_left;
        let success = result.status.is_success();
        if success {
            f.refund += result.refund;
        }
        let n = ol.min(result.output.len());
        if n > 0 {
            f.memory[oo..oo + n].copy_from_slice(&result.output[..n]);
        }
        f.return_data = result.output;
        f.push(U256::from(success as u8))?;
        Ok(Step::Continue)
    }
}
