//! Reference EVM backed by revm, used to cross-check the embedded interpreter.

use alloy_primitives::{Address, Bytes, U256};
use revm::context::{BlockEnv, CfgEnv, TxEnv};
use revm::database::{CacheDB, EmptyDB};
use revm::handler::{MainnetContext, MainnetEvm};
use revm::primitives::hardfork::SpecId as RevmSpec;
use revm::primitives::TxKind;
use revm::state::AccountInfo;
use revm::{Context, ExecuteCommitEvm, MainBuilder, MainContext};

use crate::evm::{self, SpecId};

pub struct ReferenceEvm {
    evm: MainnetEvm<MainnetContext<CacheDB<EmptyDB>>>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReferenceOutcome {
    pub success: bool,
    pub reverted: bool,
    pub gas_used: u64,
    pub output: Bytes,
    pub created: Option<Address>,
    pub logs: Vec<evm::Log>,
}

fn revm_spec(spec: SpecId) -> RevmSpec {
    match spec {
        SpecId::Paris => RevmSpec::MERGE,
        SpecId::Shanghai => RevmSpec::SHANGHAI,
    }
}

impl ReferenceEvm {
    pub fn new(spec: SpecId, block: &evm::BlockEnv) -> Self {
        let mut cfg = CfgEnv::new_with_spec(revm_spec(spec));
        cfg.chain_id = block.chain_id;
        let block_env = BlockEnv {
            number: U256::from(block.number),
            beneficiary: block.coinbase,
            timestamp: U256::from(block.timestamp),
            gas_limit: block.gas_limit,
            basefee: block.basefee.to::<u64>(),
            difficulty: U256::ZERO,
            prevrandao: Some(block.prevrandao),
            ..Default::default()
        };
        let evm = Context::mainnet()
            .with_db(CacheDB::new(EmptyDB::default()))
            .with_cfg(cfg)
            .with_block(block_env)
            .build_mainnet();
        Self { evm }
    }

    pub fn fund(&mut self, address: Address, balance: U256) {
        let db = &mut self.evm.ctx.journaled_state.database;
        db.insert_account_info(
            address,
            AccountInfo {
                balance,
                ..Default::default()
            },
        );
    }

    fn nonce_of(&mut self, address: Address) -> u64 {
        let db = &self.evm.ctx.journaled_state.database;
        db.cache
            .accounts
            .get(&address)
            .map(|a| a.info.nonce)
            .unwrap_or_default()
    }

    pub fn transact(&mut self, tx: &evm::Transaction) -> Result<ReferenceOutcome, String> {
        let nonce = self.nonce_of(tx.caller);
        let kind = match tx.kind {
            evm::TxKind::Create => TxKind::Create,
            evm::TxKind::Call(to) => TxKind::Call(to),
        };
        let env = TxEnv::builder()
            .caller(tx.caller)
            .kind(kind)
            .data(tx.data.clone())
            .value(tx.value)
            .gas_limit(tx.gas_limit)
            .gas_price(tx.gas_price.to::<u128>())
            .nonce(nonce)
            .chain_id(Some(self.evm.ctx.cfg.chain_id))
            .build()
            .map_err(|e| format!("{e:?}"))?;
        let result = self.evm.transact_commit(env).map_err(|e| e.to_string())?;
        let logs = result
            .logs()
            .iter()
            .map(|l| evm::Log {
                address: l.address,
                topics: l.data.topics().to_vec(),
                data: l.data.data.clone(),
            })
            .collect();
        Ok(ReferenceOutcome {
            success: result.is_success(),
            reverted: matches!(result, revm::context::result::ExecutionResult::Revert { .. }),
            gas_used: result.tx_gas_used(),
            output: result.output().cloned().unwrap_or_default(),
            created: result.created_address(),
            logs,
        })
    }
}
