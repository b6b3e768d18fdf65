//! The Manager: one closed optimization loop per contract.
//!
//! Round 1 runs the Seeker stage once, then an Innovator stage. Every
//! accepted Innovator stage starts another round with a fresh proposal;
//! the loop ends at the first stage that produces no accepted rewrite or
//! at `max_rounds`. Each stage refactors the current working version, so a
//! rejected stage leaves its base in place for the next one.

pub mod report;

use serde::{Deserialize, Serialize};

use crate::clock::Clock;
use crate::detectors::DetectorRegistry;
use crate::frontend::{compile, CompilationResult, CompilerSettings};
use crate::gas::{measure_deployment, GasMeasurement};
use crate::gateway::Gateway;
use crate::innovator::{Innovator, NewPatternReport, ProposalStatus};
use crate::library::{Blacklist, GasEvidence, PatternLibrary, VerifiedPool, VerifiedPoolEntry};
use crate::seeker::{ExistingPatternReport, Seeker, DEFAULT_THRESHOLD};
use crate::verification::consistency::choose_constructor_args;
use crate::verification::{apply_refactor, ConsistencySuite, Gate, Instructions, RefactorError, Stage, VerificationResult, Verifier};

pub use report::{render_report, ConfigSnapshot, FinalReport, Outcome, ReportFormat, StageStatus, StageTrace, REPORT_SCHEMA};

pub const DEFAULT_MAX_ROUNDS: u32 = 8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoopConfig {
    pub threshold: f64,
    pub max_rounds: u32,
    pub seeker: bool,
    pub innovator: bool,
    pub compiler: CompilerSettings,
}

impl Default for LoopConfig {
    fn default() -> Self {
        Self {
            threshold: DEFAULT_THRESHOLD,
            max_rounds: DEFAULT_MAX_ROUNDS,
            seeker: true,
            innovator: true,
            compiler: CompilerSettings::default(),
        }
    }
}

impl LoopConfig {
    pub fn validate(&self) -> Result<(), OptimizeError> {
        if !self.seeker && !self.innovator {
            return Err(OptimizeError::Config("the Seeker and the Innovator cannot both be disabled".into()));
        }
        if !(0.0..=1.0).contains(&self.threshold) {
            return Err(OptimizeError::Config(format!("threshold {} is outside [0, 1]", self.threshold)));
        }
        if self.max_rounds == 0 {
            return Err(OptimizeError::Config("max rounds must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum OptimizeError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("input does not compile:\n{0}")]
    DoesNotCompile(String),
    #[error("environment error: {0}")]
    Environment(String),
}

fn env(e: impl std::fmt::Display) -> OptimizeError {
    OptimizeError::Environment(e.to_string())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoopState {
    pub round: u32,
    pub working_source: String,
    pub working_gas: GasMeasurement,
    /// Verification results of every stage that reached the gates.
    pub history: Vec<VerificationResult>,
    pub new_patterns_validated: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Decision {
    Continue,
    Stop,
}

/// Continue only after an accepted new-pattern stage and below the cap.
pub fn decide_continue(state: &LoopState, last: Option<&VerificationResult>, max_rounds: u32) -> Decision {
    match last {
        Some(v) if v.accepted && v.candidate.stage == Stage::NewPattern && state.round < max_rounds => Decision::Continue,
        _ => Decision::Stop,
    }
}

pub struct Orchestrator<'a> {
    pub library: &'a PatternLibrary,
    pub registry: &'a DetectorRegistry,
    pub gateway: &'a Gateway,
    pub verifier: &'a Verifier,
    pub clock: &'a dyn Clock,
    pub config: LoopConfig,
}

struct Working {
    state: LoopState,
    compiled: CompilationResult,
}

impl Working {
    fn accept(&mut self, v: &VerificationResult, compiled: CompilationResult) {
        self.state.working_source = v.candidate.candidate_source.clone();
        self.state.working_gas = v.gas_after.clone().expect("accepted stages are measured");
        self.compiled = compiled;
    }
}

impl<'a> Orchestrator<'a> {
    pub fn snapshot(&self) -> ConfigSnapshot {
        ConfigSnapshot {
            threshold: self.config.threshold,
            max_rounds: self.config.max_rounds,
            seeker: self.config.seeker,
            innovator: self.config.innovator,
            compiler: self.config.compiler.clone(),
            audit_tool: self.verifier.adapter.name(),
            audit_policy: self.verifier.policy,
            gas_backend: self.verifier.gas.id(),
            suite: self.verifier.limits,
            seed: self.verifier.seed,
            model: self.gateway.model().to_string(),
        }
    }

    /// Runs the loop on `source`. Rejected proposals go to `blacklist`,
    /// verified ones to `pool`.
    pub fn optimize(&self, source: &str, blacklist: &mut Blacklist, pool: &mut VerifiedPool) -> Result<FinalReport, OptimizeError> {
        self.config.validate()?;
        let base = compile(source, &self.config.compiler).map_err(env)?;
        if !base.is_success() {
            return Err(OptimizeError::DoesNotCompile(base.error_report()));
        }
        let contract_id = base.contract_id();

        // One suite and one constructor argument set for the whole run, so
        // every stage is measured the same way.
        let mut suite = self.verifier.suite_for(&base);
        let args = choose_constructor_args(&suite, &base, &self.verifier.evm).map_err(env)?;
        suite.deployment_init = vec![args.clone()];
        let original_gas = measure_deployment(base.creation_bytecode(), &args, self.verifier.gas.as_ref()).map_err(env)?;

        let mut w = Working {
            state: LoopState {
                round: 1,
                working_source: source.to_string(),
                working_gas: original_gas.clone(),
                history: Vec::new(),
                new_patterns_validated: 0,
            },
            compiled: base.clone(),
        };
        let mut stages = Vec::new();
        let mut warnings = Vec::new();
        let mut candidate_existed = false;
        let mut applied_existing = Vec::new();
        let mut validated_new = Vec::new();
        let mut context = ExistingPatternReport::empty(contract_id.clone(), 0);

        if self.config.seeker {
            let seeker = Seeker::new(self.library, self.registry, self.gateway);
            let report = seeker
                .seek(&w.compiled, self.config.threshold, self.clock)
                .map_err(|e| OptimizeError::Config(e.to_string()))?;
            warnings.extend(report.retrieval.warnings.iter().map(|m| format!("seeker: {m}")));
            let mut trace = StageTrace::new(1, Stage::ExistingPatterns);
            trace.patterns = report.hit_patterns().into_iter().collect();
            let mut accepted = false;
            if report.total_findings() == 0 {
                trace.reason = Some("no existing pattern matched".into());
            } else {
                candidate_existed = true;
                accepted = self.run_stage(&mut w, &suite, Instructions::Existing(&report), &mut trace)?;
                if accepted {
                    applied_existing = trace.patterns.clone();
                }
            }
            // Suggestions refer to the original text; once applied they
            // no longer describe the working version.
            if !accepted {
                context = report.clone();
            }
            trace.existing_report = Some(report);
            stages.push(trace);
        }

        if self.config.innovator {
            let innovator = Innovator::new(self.library, self.gateway);
            loop {
                let round = w.state.round;
                let npr = innovator.propose(&w.state.working_source, &context, blacklist, self.clock);
                let mut trace = StageTrace::new(round, Stage::NewPattern);
                trace.patterns = npr.proposal.iter().map(|p| p.proposed_name.clone()).collect();
                match npr.status {
                    ProposalStatus::Proposed => {
                        candidate_existed = true;
                        let before = w.state.working_gas.clone();
                        let accepted = self.run_stage(&mut w, &suite, Instructions::New(&npr), &mut trace)?;
                        let proposal = npr.proposal.clone().expect("proposed status carries a proposal");
                        if accepted {
                            let entry = VerifiedPoolEntry {
                                proposal: proposal.clone(),
                                evidence: GasEvidence {
                                    before,
                                    after: w.state.working_gas.clone(),
                                },
                                contract_id: contract_id.clone(),
                                verified_at: self.clock.now(),
                            };
                            pool.add(entry).map_err(env)?;
                            w.state.new_patterns_validated += 1;
                            validated_new.push(proposal.proposed_name.clone());
                            context = ExistingPatternReport::empty(contract_id.clone(), 0);
                        } else {
                            let reason = trace.reason.clone().unwrap_or_default();
                            trace.blacklisted = blacklist.add(&proposal, &reason, self.clock.now()).map_err(env)?;
                        }
                    }
                    ProposalStatus::Hallucinated => {
                        let p = npr.rejected.as_ref().expect("hallucinated status carries the proposal");
                        let reason = npr.note.clone().unwrap_or_else(|| "matched code not found in the contract".into());
                        trace.patterns = vec![p.proposed_name.clone()];
                        trace.blacklisted = blacklist.add(p, &reason, self.clock.now()).map_err(env)?;
                        trace.reason = Some(reason);
                    }
                    ProposalStatus::LlmError => {
                        warnings.push(format!("innovator: {}", npr.note.clone().unwrap_or_default()));
                        trace.reason = npr.note.clone();
                    }
                    status => trace.reason = Some(no_proposal_reason(status, &npr)),
                }
                trace.new_pattern_report = Some(npr);
                let decision = decide_continue(&w.state, trace.verification.as_ref(), self.config.max_rounds);
                stages.push(trace);
                if decision == Decision::Stop {
                    break;
                }
                w.state.round += 1;
            }
        }

        let final_gas = w.state.working_gas.clone();
        let saved = original_gas.gas.saturating_sub(final_gas.gas);
        let saving_ratio = saved as f64 / original_gas.gas as f64;
        let outcome = if saved > 0 {
            Outcome::Optimized
        } else if candidate_existed {
            Outcome::Fallback
        } else {
            Outcome::Unchanged
        };
        Ok(FinalReport {
            schema: REPORT_SCHEMA.to_string(),
            contract_id,
            contract_name: base.contract_name().to_string(),
            outcome,
            original_gas,
            final_gas,
            saving_ratio,
            rounds_used: w.state.round,
            applied_existing_patterns: applied_existing,
            validated_new_patterns: validated_new,
            new_patterns_validated: w.state.new_patterns_validated,
            stages,
            warnings,
            config: self.snapshot(),
            original_source: source.to_string(),
            final_source: w.state.working_source,
            generated_at: self.clock.now(),
        })
    }

    /// Refactors and verifies one stage; returns whether it was accepted.
    fn run_stage(&self, w: &mut Working, suite: &ConsistencySuite, instructions: Instructions<'_>, trace: &mut StageTrace) -> Result<bool, OptimizeError> {
        trace.gas_before = Some(w.state.working_gas.gas);
        let refactored = match apply_refactor(&w.compiled, instructions, self.gateway, &self.config.compiler) {
            Ok(r) => r,
            Err(e) if e.is_rejection() => {
                trace.status = StageStatus::Rejected;
                trace.rejected_at = Some(Gate::Refactor);
                trace.reason = Some(refactor_reason(&e));
                return Ok(false);
            }
            Err(e) => return Err(env(e)),
        };
        let v = self.verifier.verify_with(&w.compiled, refactored.candidate, &refactored.compiled, suite).map_err(env)?;
        trace.gas_after = v.gas_after.as_ref().map(|g| g.gas);
        if v.accepted {
            trace.status = StageStatus::Accepted;
            w.accept(&v, refactored.compiled);
        } else {
            trace.status = StageStatus::Rejected;
            trace.rejected_at = v.rejected_at;
            trace.reason = Some(rejection_reason(&v));
        }
        w.state.history.push(v.clone());
        trace.verification = Some(v);
        Ok(trace.status == StageStatus::Accepted)
    }
}

fn refactor_reason(e: &RefactorError) -> String {
    match e {
        RefactorError::DoesNotCompile { diagnostics, .. } => {
            let first = diagnostics.lines().find(|l| !l.trim().is_empty()).unwrap_or("");
            format!("rewrite does not compile after a repair round: {first}")
        }
        other => other.to_string(),
    }
}

fn rejection_reason(v: &VerificationResult) -> String {
    match v.rejected_at {
        Some(Gate::Audit) => {
            if let Some(w) = v.audit.warning.as_ref().filter(|_| v.audit.new_findings.is_empty()) {
                return w.clone();
            }
            let found: Vec<String> = v.audit.new_findings.iter().map(|f| format!("{} in {}", f.detector, f.location)).collect();
            format!("new security findings: {}", found.join(", "))
        }
        Some(Gate::Consistency) => match v.consistency.as_ref().and_then(|c| c.divergences.first()) {
            Some(d) => format!(
                "behaviour differs for {} with ({}) at {}: original {}, candidate {}",
                d.function,
                d.inputs,
                d.observed_at,
                report::describe_outcome(&d.original),
                report::describe_outcome(&d.candidate)
            ),
            None => "behaviour differs".into(),
        },
        Some(Gate::Gas) => match (&v.gas_before, &v.gas_after) {
            (Some(b), Some(a)) => format!("deployment gas not lower ({} before, {} after)", b.gas, a.gas),
            _ => "candidate could not be measured".into(),
        },
        _ => String::new(),
    }
}

fn no_proposal_reason(status: ProposalStatus, npr: &NewPatternReport) -> String {
    let base = match status {
        ProposalStatus::Declined => "no new pattern proposed",
        ProposalStatus::Unparsable => "proposal could not be parsed",
        ProposalStatus::Blacklisted => "proposal is blacklisted",
        ProposalStatus::DuplicateOfExisting => "proposal restates an existing pattern",
        _ => "no proposal",
    };
    match &npr.note {
        Some(n) => format!("{base}: {n}"),
        None => base.to_string(),
    }
}
