//! The Executor: refactor, then gate each candidate through a differential
//! security audit, a behavioural consistency check and a strict
//! deployment-gas comparison, in that order.

pub mod audit;
pub mod consistency;
pub mod refactor;
pub mod suite;

use serde::{Deserialize, Serialize};

use crate::frontend::CompilationResult;
use crate::gas::{measure_deployment, EmbeddedBackend, GasBackend, GasError, GasMeasurement};

pub use audit::{audit, AuditAdapter, AuditFinding, AuditPolicy, AuditResult, BuiltinChecker, Severity, SlitherAdapter, UnavailablePolicy};
pub use consistency::{run_consistency, ConsistencyError, ConsistencyResult, Divergence, Outcome};
pub use refactor::{apply_refactor, Instructions, RefactorCandidate, RefactorError, Refactored, Stage};
pub use suite::{build_suite, CaseKind, ConsistencySuite, SuiteLimits, TestCase, DEFAULT_SEED};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Gate {
    Refactor,
    Audit,
    Consistency,
    Gas,
}

impl std::fmt::Display for Gate {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Gate::Refactor => "refactor",
            Gate::Audit => "security audit",
            Gate::Consistency => "consistency check",
            Gate::Gas => "gas comparison",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerificationResult {
    pub candidate: RefactorCandidate,
    pub audit: AuditResult,
    pub consistency: Option<ConsistencyResult>,
    pub gas_before: Option<GasMeasurement>,
    pub gas_after: Option<GasMeasurement>,
    pub accepted: bool,
    pub rejected_at: Option<Gate>,
}

impl VerificationResult {
    /// before − after, when both were measured.
    pub fn saving(&self) -> Option<i64> {
        Some(self.gas_before.as_ref()?.gas as i64 - self.gas_after.as_ref()?.gas as i64)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum VerifyError {
    #[error(transparent)]
    Consistency(#[from] ConsistencyError),
    #[error("measuring the original contract failed: {0}")]
    BaseGas(GasError),
}

pub struct Verifier {
    pub adapter: Box<dyn AuditAdapter>,
    pub policy: AuditPolicy,
    /// Executes the consistency suite.
    pub evm: EmbeddedBackend,
    /// Measures deployment gas; the embedded interpreter unless configured.
    pub gas: Box<dyn GasBackend>,
    pub limits: SuiteLimits,
    pub seed: u64,
}

impl Default for Verifier {
    fn default() -> Self {
        Self {
            adapter: Box::new(BuiltinChecker),
            policy: AuditPolicy::default(),
            evm: EmbeddedBackend::default(),
            gas: Box::new(EmbeddedBackend::default()),
            limits: SuiteLimits::default(),
            seed: DEFAULT_SEED,
        }
    }
}

impl std::fmt::Debug for Verifier {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Verifier")
            .field("adapter", &self.adapter.name())
            .field("policy", &self.policy)
            .field("gas", &self.gas.id())
            .field("limits", &self.limits)
            .field("seed", &self.seed)
            .finish()
    }
}

impl Verifier {
    pub fn suite_for(&self, base: &CompilationResult) -> ConsistencySuite {
        build_suite(&base.abi(), self.limits, self.seed)
    }

    /// Runs the gates in order and stops at the first failure. Errors are
    /// environment failures (the original does not deploy or measure), not
    /// rejections of the candidate.
    pub fn verify(&self, base: &CompilationResult, candidate: RefactorCandidate, compiled: &CompilationResult) -> Result<VerificationResult, VerifyError> {
        let suite = self.suite_for(base);
        self.verify_with(base, candidate, compiled, &suite)
    }

    pub fn verify_with(
        &self,
        base: &CompilationResult,
        candidate: RefactorCandidate,
        compiled: &CompilationResult,
        suite: &ConsistencySuite,
    ) -> Result<VerificationResult, VerifyError> {
        let audit = audit(base, compiled, self.adapter.as_ref(), self.policy);
        let mut result = VerificationResult {
            candidate,
            audit,
            consistency: None,
            gas_before: None,
            gas_after: None,
            accepted: false,
            rejected_at: None,
        };
        if !result.audit.passed {
            result.rejected_at = Some(Gate::Audit);
            return Ok(result);
        }
        let consistency = run_consistency(suite, base, compiled, &self.evm)?;
        let passed = consistency.passed;
        let args = consistency.constructor_args.clone();
        result.consistency = Some(consistency);
        if !passed {
            result.rejected_at = Some(Gate::Consistency);
            return Ok(result);
        }
        let before = measure_deployment(base.creation_bytecode(), &args, self.gas.as_ref()).map_err(VerifyError::BaseGas)?;
        // The candidate deployed in the consistency run, so a failure here
        // is a property of the candidate under this backend.
        let after = measure_deployment(compiled.creation_bytecode(), &args, self.gas.as_ref()).ok();
        result.accepted = after.as_ref().is_some_and(|a| a.gas < before.gas);
        result.gas_before = Some(before);
        result.gas_after = after;
        if !result.accepted {
            result.rejected_at = Some(Gate::Gas);
        }
        Ok(result)
    }
}
