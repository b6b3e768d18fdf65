//! Differential execution of a suite against two contract versions.
//!
//! Only externally observable behaviour is compared: whether a call
//! succeeds, its return values decoded with the original interface, and
//! the emitted events. Revert data is not compared, so replacing revert
//! strings with custom errors is not a divergence. After every case the
//! read-only probes run on both post-states, which exposes storage changes
//! that the call itself does not return.

use alloy_dyn_abi::{DecodedEvent, EventExt, FunctionExt};
use alloy_json_abi::JsonAbi;
use alloy_primitives::{Address, Bytes, LogData};
use serde::{Deserialize, Serialize};

use super::suite::{render_args, ConsistencySuite, TestCase};
use crate::evm::{Evm, Transaction};
use crate::frontend::CompilationResult;
use crate::gas::{EmbeddedBackend, GasError, DEPLOYER};

/// Gas limit for each test call.
const CALL_GAS: u64 = 10_000_000;
/// Divergences recorded before the run stops early.
const MAX_DIVERGENCES: usize = 10;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EventRecord {
    /// Event name with decoded arguments, or raw topics and data when the
    /// original interface does not declare the event.
    pub rendered: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Outcome {
    pub success: bool,
    /// Decoded return values, or hex when they do not decode.
    pub returned: String,
    pub events: Vec<EventRecord>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Divergence {
    pub function: String,
    pub inputs: String,
    pub caller: Address,
    /// `call`, `deployment`, or `probe <signature>`.
    pub observed_at: String,
    pub original: Outcome,
    pub candidate: Outcome,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConsistencyResult {
    pub seed: u64,
    pub constructor_args: Bytes,
    pub cases_run: usize,
    pub probes_run: usize,
    pub divergences: Vec<Divergence>,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ConsistencyError {
    #[error("original contract does not deploy with any synthesized constructor arguments: {0}")]
    BaseDeployment(String),
}

fn render_event(abi: &JsonAbi, log: &crate::evm::Log) -> EventRecord {
    let decoded = log.topics.first().and_then(|t0| {
        abi.events().find(|e| !e.anonymous && e.selector() == *t0).and_then(|e| {
            let data = LogData::new_unchecked(log.topics.clone(), log.data.clone());
            e.decode_log(&data).ok().map(|d: DecodedEvent| {
                let mut args = d.indexed;
                args.extend(d.body);
                format!("{}({})", e.name, render_args(&args))
            })
        })
    });
    let rendered = decoded.unwrap_or_else(|| {
        let topics: Vec<String> = log.topics.iter().map(|t| t.to_string()).collect();
        format!("[{}] 0x{}", topics.join(","), alloy_primitives::hex::encode(&log.data))
    });
    EventRecord { rendered }
}

fn outcome(abi: &JsonAbi, case: Option<&TestCase>, result: Result<crate::evm::TxOutcome, String>) -> Outcome {
    match result {
        Err(e) => Outcome {
            success: false,
            returned: format!("rejected: {e}"),
            events: Vec::new(),
        },
        Ok(o) if !o.status.is_success() => Outcome {
            success: false,
            returned: String::new(),
            events: Vec::new(),
        },
        Ok(o) => {
            let function = case.and_then(|c| abi.functions().find(|f| f.signature() == c.function));
            let returned = match function.map(|f| f.abi_decode_output(&o.output)) {
                Some(Ok(values)) => render_args(&values),
                _ if case.is_none() => String::new(),
                _ => format!("0x{}", alloy_primitives::hex::encode(&o.output)),
            };
            Outcome {
                success: true,
                returned,
                events: o.logs.iter().map(|l| render_event(abi, l)).collect(),
            }
        }
    }
}

fn call(evm: &mut Evm, to: Address, case: &TestCase) -> Result<crate::evm::TxOutcome, String> {
    let mut tx = Transaction::call(case.caller, to, case.calldata.clone(), CALL_GAS);
    tx.value = case.value;
    evm.transact(&tx).map_err(|e| e.to_string())
}

struct Deployed {
    evm: Evm,
    address: Address,
    outcome: Outcome,
}

fn deploy(backend: &EmbeddedBackend, abi: &JsonAbi, creation: &[u8], args: &[u8]) -> Result<Deployed, GasError> {
    let mut init = creation.to_vec();
    init.extend_from_slice(args);
    let (evm, o) = backend.deploy(&init)?;
    let address = o.created.expect("successful create has an address");
    let outcome = outcome(abi, None, Ok(o));
    Ok(Deployed { evm, address, outcome })
}

/// The first constructor argument set under which `base` deploys.
pub fn choose_constructor_args(suite: &ConsistencySuite, base: &CompilationResult, backend: &EmbeddedBackend) -> Result<Bytes, ConsistencyError> {
    let abi = base.abi();
    let mut last = String::from("no argument sets");
    for args in &suite.deployment_init {
        match deploy(backend, &abi, base.creation_bytecode(), args) {
            Ok(_) => return Ok(args.clone()),
            Err(e) => last = e.to_string(),
        }
    }
    Err(ConsistencyError::BaseDeployment(last))
}

pub fn run_consistency(
    suite: &ConsistencySuite,
    base: &CompilationResult,
    candidate: &CompilationResult,
    backend: &EmbeddedBackend,
) -> Result<ConsistencyResult, ConsistencyError> {
    let abi = base.abi();
    let args = choose_constructor_args(suite, base, backend)?;
    let mut result = ConsistencyResult {
        seed: suite.seed,
        constructor_args: args.clone(),
        cases_run: 0,
        probes_run: 0,
        divergences: Vec::new(),
        passed: false,
    };
    let original = deploy(backend, &abi, base.creation_bytecode(), &args).map_err(|e| ConsistencyError::BaseDeployment(e.to_string()))?;
    let refactored = match deploy(backend, &abi, candidate.creation_bytecode(), &args) {
        Ok(d) => d,
        Err(e) => {
            result.divergences.push(Divergence {
                function: "constructor".into(),
                inputs: format!("0x{}", alloy_primitives::hex::encode(&args)),
                caller: DEPLOYER,
                observed_at: "deployment".into(),
                original: original.outcome,
                candidate: Outcome {
                    success: false,
                    returned: e.to_string(),
                    events: Vec::new(),
                },
            });
            return Ok(result);
        }
    };
    if original.outcome != refactored.outcome {
        result.divergences.push(Divergence {
            function: "constructor".into(),
            inputs: format!("0x{}", alloy_primitives::hex::encode(&args)),
            caller: DEPLOYER,
            observed_at: "deployment".into(),
            original: original.outcome.clone(),
            candidate: refactored.outcome.clone(),
        });
    }

    for case in &suite.cases {
        if result.divergences.len() >= MAX_DIVERGENCES {
            break;
        }
        result.cases_run += 1;
        let mut a = original.evm.clone();
        let mut b = refactored.evm.clone();
        let oa = outcome(&abi, Some(case), call(&mut a, original.address, case));
        let ob = outcome(&abi, Some(case), call(&mut b, refactored.address, case));
        let mut divergence = (oa != ob).then(|| ("call".to_string(), oa, ob));
        if divergence.is_none() {
            for probe in &suite.probes {
                result.probes_run += 1;
                let pa = outcome(&abi, Some(probe), call(&mut a, original.address, probe));
                let pb = outcome(&abi, Some(probe), call(&mut b, refactored.address, probe));
                if pa != pb {
                    divergence = Some((format!("probe {} {}", probe.function, probe.inputs), pa, pb));
                    break;
                }
            }
        }
        if let Some((observed_at, original, candidate)) = divergence {
            result.divergences.push(Divergence {
                function: case.function.clone(),
                inputs: case.inputs.clone(),
                caller: case.caller,
                observed_at,
                original,
                candidate,
            });
        }
    }
    result.passed = result.divergences.is_empty();
    Ok(result)
}
