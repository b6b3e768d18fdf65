//! Deployment-gas measurement.
//!
//! The embedded interpreter is the primary backend. With the `native`
//! feature, revm and a JSON-RPC node can be used as additional backends to
//! cross-check measurements.

#[cfg(feature = "native")]
pub mod reference;
#[cfg(feature = "native")]
pub mod rpc;

use alloy_primitives::{address, keccak256, Address, Bytes, B256, U256};
use serde::{Deserialize, Serialize};

use crate::evm::{self, BlockEnv, Evm, ExitStatus, SpecId, Transaction};

/// Account that deploys everything the meter measures.
pub const DEPLOYER: Address = address!("f39fd6e51aad88f6f4ce6ab8827279cfffb92266");
pub const DEFAULT_GAS_LIMIT: u64 = 30_000_000;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GasMeasurement {
    pub gas: u64,
    pub backend: String,
    pub bytecode_hash: B256,
    pub constructor_args_hash: B256,
    pub evm_spec: SpecId,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GasDelta {
    pub before: GasMeasurement,
    pub after: GasMeasurement,
    /// before − after; positive means the change saved gas.
    pub absolute: i64,
    /// (before − after) / before.
    pub ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum GasError {
    #[error("empty creation bytecode")]
    EmptyBytecode,
    #[error("deployment reverted (data 0x{})", alloy_primitives::hex::encode(.0))]
    Reverted(Bytes),
    #[error("deployment ran out of gas under limit {0}")]
    OutOfGas(u64),
    #[error("deployment halted: {0}")]
    Halted(String),
    #[error("transaction rejected: {0}")]
    Rejected(String),
    #[error("backend {backend} unavailable: {reason}")]
    Unavailable { backend: String, reason: String },
    #[error("cannot compare measurements from {0} and {1}")]
    BackendMismatch(String, String),
    #[error("no gas backend configured")]
    NoBackends,
}

/// Something that can deploy init code and report the gas it used.
pub trait GasBackend: Send + Sync {
    fn id(&self) -> String;
    fn spec(&self) -> SpecId;
    fn deploy_gas(&self, init_code: &[u8]) -> Result<u64, GasError>;
}

/// The in-process interpreter.
#[derive(Debug, Clone)]
pub struct EmbeddedBackend {
    pub spec: SpecId,
    pub block: BlockEnv,
    pub gas_limit: u64,
}

impl Default for EmbeddedBackend {
    fn default() -> Self {
        Self::new(SpecId::Shanghai)
    }
}

impl EmbeddedBackend {
    pub fn new(spec: SpecId) -> Self {
        Self {
            spec,
            block: BlockEnv::default(),
            gas_limit: DEFAULT_GAS_LIMIT,
        }
    }

    /// A funded EVM with nothing deployed.
    pub fn fresh_evm(&self) -> Evm {
        let mut evm = Evm::new(self.spec).with_block(self.block.clone());
        evm.fund(DEPLOYER, U256::from(10u128.pow(27)));
        evm
    }

    /// Deploys and returns the EVM with the deployed contract, plus the outcome.
    pub fn deploy(&self, init_code: &[u8]) -> Result<(Evm, evm::TxOutcome), GasError> {
        let mut evm = self.fresh_evm();
        let tx = Transaction::create(DEPLOYER, Bytes::copy_from_slice(init_code), self.gas_limit);
        let outcome = evm.transact(&tx).map_err(|e| GasError::Rejected(e.to_string()))?;
        match &outcome.status {
            ExitStatus::Success => Ok((evm, outcome)),
            ExitStatus::Revert => Err(GasError::Reverted(outcome.output.clone())),
            ExitStatus::Halt(evm::HaltReason::OutOfGas) => Err(GasError::OutOfGas(self.gas_limit)),
            ExitStatus::Halt(r) => Err(GasError::Halted(format!("{r:?}"))),
        }
    }
}

impl GasBackend for EmbeddedBackend {
    fn id(&self) -> String {
        "embedded".to_string()
    }

    fn spec(&self) -> SpecId {
        self.spec
    }

    fn deploy_gas(&self, init_code: &[u8]) -> Result<u64, GasError> {
        self.deploy(init_code).map(|(_, o)| o.gas_used)
    }
}

/// revm as a backend, used as the reference implementation.
#[cfg(feature = "native")]
#[derive(Debug, Clone)]
pub struct RevmBackend {
    pub spec: SpecId,
    pub block: BlockEnv,
    pub gas_limit: u64,
}

#[cfg(feature = "native")]
impl RevmBackend {
    pub fn new(spec: SpecId) -> Self {
        Self {
            spec,
            block: BlockEnv::default(),
            gas_limit: DEFAULT_GAS_LIMIT,
        }
    }
}

#[cfg(feature = "native")]
impl GasBackend for RevmBackend {
    fn id(&self) -> String {
        "revm".to_string()
    }

    fn spec(&self) -> SpecId {
        self.spec
    }

    fn deploy_gas(&self, init_code: &[u8]) -> Result<u64, GasError> {
        let mut evm = reference::ReferenceEvm::new(self.spec, &self.block);
        evm.fund(DEPLOYER, U256::from(10u128.pow(27)));
        let tx = Transaction::create(DEPLOYER, Bytes::copy_from_slice(init_code), self.gas_limit);
        let out = evm.transact(&tx).map_err(GasError::Rejected)?;
        if out.success {
            Ok(out.gas_used)
        } else if out.reverted {
            Err(GasError::Reverted(out.output))
        } else {
            Err(GasError::Halted("reference EVM halted".into()))
        }
    }
}

/// Gas consumed by the creation transaction for `creation_bytecode`
/// followed by ABI-encoded `constructor_args`, including intrinsic and
/// code-deposit costs.
pub fn measure_deployment(
    creation_bytecode: &[u8],
    constructor_args: &[u8],
    backend: &dyn GasBackend,
) -> Result<GasMeasurement, GasError> {
    if creation_bytecode.is_empty() {
        return Err(GasError::EmptyBytecode);
    }
    let mut init = creation_bytecode.to_vec();
    init.extend_from_slice(constructor_args);
    let gas = backend.deploy_gas(&init)?;
    Ok(GasMeasurement {
        gas,
        backend: backend.id(),
        bytecode_hash: keccak256(creation_bytecode),
        constructor_args_hash: keccak256(constructor_args),
        evm_spec: backend.spec(),
    })
}

pub fn compare(before: &GasMeasurement, after: &GasMeasurement) -> Result<GasDelta, GasError> {
    if before.backend != after.backend || before.evm_spec != after.evm_spec {
        return Err(GasError::BackendMismatch(
            format!("{}/{}", before.backend, before.evm_spec),
            format!("{}/{}", after.backend, after.evm_spec),
        ));
    }
    let absolute = before.gas as i64 - after.gas as i64;
    let ratio = if before.gas == 0 {
        0.0
    } else {
        absolute as f64 / before.gas as f64
    };
    Ok(GasDelta {
        before: before.clone(),
        after: after.clone(),
        absolute,
        ratio,
    })
}

/// One backend's contribution to a cross-validation.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BackendValue {
    pub backend: String,
    pub evm_spec: SpecId,
    pub gas: Option<u64>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Discrepancy {
    pub values: Vec<BackendValue>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "result")]
pub enum CrossValidation {
    Agreed {
        measurement: GasMeasurement,
        backends: Vec<String>,
        warnings: Vec<String>,
    },
    Discrepancy {
        discrepancy: Discrepancy,
        warnings: Vec<String>,
    },
}

/// Measures on every backend; agreement means identical gas under identical
/// fork rules. Unavailable backends are skipped with a warning.
pub fn cross_validate(
    creation_bytecode: &[u8],
    constructor_args: &[u8],
    backends: &[&dyn GasBackend],
) -> Result<CrossValidation, GasError> {
    if backends.is_empty() {
        return Err(GasError::NoBackends);
    }
    let mut warnings = Vec::new();
    let mut results = Vec::new();
    for b in backends {
        match measure_deployment(creation_bytecode, constructor_args, *b) {
            Err(GasError::Unavailable { backend, reason }) => {
                tracing::warn!(%backend, %reason, "gas backend unavailable, skipping");
                warnings.push(format!("backend {backend} unavailable: {reason}"));
            }
            other => results.push((b.id(), b.spec(), other)),
        }
    }
    if results.is_empty() {
        return Err(GasError::NoBackends);
    }
    let first = match &results[0].2 {
        Ok(m) => Some(m.clone()),
        Err(_) => None,
    };
    let agreed = first.as_ref().is_some_and(|f| {
        results
            .iter()
            .all(|(_, _, r)| r.as_ref().is_ok_and(|m| m.gas == f.gas && m.evm_spec == f.evm_spec))
    });
    if agreed {
        if results.len() == 1 {
            warnings.push("only one backend produced a measurement".into());
        }
        return Ok(CrossValidation::Agreed {
            measurement: first.expect("agreement implies a measurement"),
            backends: results.iter().map(|(id, _, _)| id.clone()).collect(),
            warnings,
        });
    }
    let values = results
        .into_iter()
        .map(|(backend, evm_spec, r)| match r {
            Ok(m) => BackendValue {
                backend,
                evm_spec,
                gas: Some(m.gas),
                error: None,
            },
            Err(e) => BackendValue {
                backend,
                evm_spec,
                gas: None,
                error: Some(e.to_string()),
            },
        })
        .collect();
    Ok(CrossValidation::Discrepancy {
        discrepancy: Discrepancy { values },
        warnings,
    })
}
