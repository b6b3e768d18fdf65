//! In-process EVM used as the embedded gas backend.
//!
//! Gas accounting follows the Paris and Shanghai schedules (EIP-2929 access
//! lists, EIP-2200/3529 storage pricing, EIP-3860 init-code metering, PUSH0).
//! Precompiles 0x01 through 0x04 are implemented; 0x05 through 0x09 are
//! recognised as warm precompile addresses but fail when called.

mod interpreter;
mod precompiles;
mod state;

use alloy_primitives::{Address, Bytes, B256, U256};
use serde::{Deserialize, Serialize};

pub use state::{Account, WorldState, KECCAK_EMPTY};

/// Fork rules the interpreter enforces.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SpecId {
    Paris,
    Shanghai,
}

impl SpecId {
    pub fn name(self) -> &'static str {
        match self {
            SpecId::Paris => "paris",
            SpecId::Shanghai => "shanghai",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s.to_ascii_lowercase().as_str() {
            "paris" | "merge" => Some(SpecId::Paris),
            "shanghai" => Some(SpecId::Shanghai),
            _ => None,
        }
    }

    fn is_shanghai(self) -> bool {
        self >= SpecId::Shanghai
    }
}

impl std::fmt::Display for SpecId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BlockEnv {
    pub number: u64,
    pub timestamp: u64,
    pub coinbase: Address,
    pub gas_limit: u64,
    pub basefee: U256,
    pub prevrandao: B256,
    pub chain_id: u64,
}

impl Default for BlockEnv {
    fn default() -> Self {
        Self {
            number: 1,
            timestamp: 1,
            coinbase: Address::ZERO,
            gas_limit: 30_000_000,
            basefee: U256::ZERO,
            prevrandao: B256::ZERO,
            chain_id: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TxKind {
    Create,
    Call(Address),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Transaction {
    pub caller: Address,
    pub kind: TxKind,
    pub data: Bytes,
    pub value: U256,
    pub gas_limit: u64,
    pub gas_price: U256,
}

impl Transaction {
    pub fn create(caller: Address, init_code: impl Into<Bytes>, gas_limit: u64) -> Self {
        Self {
            caller,
            kind: TxKind::Create,
            data: init_code.into(),
            value: U256::ZERO,
            gas_limit,
            gas_price: U256::ZERO,
        }
    }

    pub fn call(caller: Address, to: Address, data: impl Into<Bytes>, gas_limit: u64) -> Self {
        Self {
            caller,
            kind: TxKind::Call(to),
            data: data.into(),
            value: U256::ZERO,
            gas_limit,
            gas_price: U256::ZERO,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Log {
    pub address: Address,
    pub topics: Vec<B256>,
    pub data: Bytes,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HaltReason {
    OutOfGas,
    StackUnderflow,
    StackOverflow,
    InvalidJump,
    InvalidOpcode,
    StateChangeDuringStaticCall,
    ReturnDataOutOfBounds,
    CallDepthExceeded,
    CreateCollision,
    CodeSizeLimit,
    InitCodeSizeLimit,
    InvalidCodePrefix,
    InsufficientBalance,
    NonceOverflow,
    UnsupportedPrecompile,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", content = "reason")]
pub enum ExitStatus {
    Success,
    Revert,
    Halt(HaltReason),
}

impl ExitStatus {
    pub fn is_success(&self) -> bool {
        matches!(self, ExitStatus::Success)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TxOutcome {
    pub status: ExitStatus,
    /// Gas charged to the sender after refunds.
    pub gas_used: u64,
    pub gas_refunded: u64,
    pub output: Bytes,
    pub logs: Vec<Log>,
    pub created: Option<Address>,
}

/// Transaction rejected before execution.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum TxError {
    #[error("gas limit {limit} below intrinsic cost {intrinsic}")]
    IntrinsicGas { limit: u64, intrinsic: u64 },
    #[error("caller balance cannot cover gas and value")]
    InsufficientFunds,
    #[error("init code of {0} bytes exceeds the 49152-byte limit")]
    InitCodeTooLarge(usize),
    #[error("gas price below block base fee")]
    GasPriceBelowBaseFee,
    #[error("gas limit exceeds block gas limit")]
    GasLimitAboveBlock,
}

pub const MAX_CODE_SIZE: usize = 24_576;
pub const MAX_INITCODE_SIZE: usize = 2 * MAX_CODE_SIZE;

/// An EVM instance owning its world state.
#[derive(Debug, Clone)]
pub struct Evm {
    pub spec: SpecId,
    pub block: BlockEnv,
    pub state: WorldState,
}

impl Evm {
    pub fn new(spec: SpecId) -> Self {
        Self {
            spec,
            block: BlockEnv::default(),
            state: WorldState::new(),
        }
    }

    pub fn with_block(mut self, block: BlockEnv) -> Self {
        self.block = block;
        self
    }

    pub fn fund(&mut self, address: Address, balance: U256) {
        self.state.set_balance(address, balance);
    }

    /// Intrinsic gas of a transaction under this fork.
    pub fn intrinsic_gas(&self, tx: &Transaction) -> u64 {
        intrinsic_gas(self.spec, tx)
    }

    /// Executes and commits a transaction.
    pub fn transact(&mut self, tx: &Transaction) -> Result<TxOutcome, TxError> {
        interpreter::execute_transaction(self.spec, &self.block, &mut self.state, tx)
    }
}

pub fn intrinsic_gas(spec: SpecId, tx: &Transaction) -> u64 {
    let mut gas = 21_000u64;
    for b in tx.data.iter() {
        gas += if *b == 0 { 4 } else { 16 };
    }
    if tx.kind == TxKind::Create {
        gas += 32_000;
        if spec.is_shanghai() {
            gas += 2 * (tx.data.len() as u64).div_ceil(32);
        }
    }
    gas
}
