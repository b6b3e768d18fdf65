//! LLM-driven rewrites with one compile-repair round.

use serde::{Deserialize, Serialize};

use crate::frontend::{compile, CompilationResult, CompilerSettings, EnvironmentError};
use crate::gateway::{AgentRole, Gateway, GatewayError};
use crate::innovator::NewPatternReport;
use crate::library::NewPatternProposal;
use crate::seeker::ExistingPatternReport;

pub const EXECUTOR_SYSTEM_PROMPT: &str = "\
You are a Solidity engineer reducing the deployment gas of a contract.
Rewrite the contract by applying exactly the listed suggestions and nothing else.
Keep every external and public function, event and error with the same signature and the same observable behaviour.
Keep the contract name, the pragma and the licence line.
Reply with the complete rewritten source in a single ```solidity code block.";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    ExistingPatterns,
    NewPattern,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RefactorCandidate {
    pub stage: Stage,
    pub base_source: String,
    pub candidate_source: String,
    pub applied_patterns: Vec<String>,
    /// Raw Executor replies, the repair reply last.
    pub llm_transcript: Vec<String>,
    pub repaired: bool,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum RefactorError {
    #[error("nothing to apply: the report has no findings and no proposal")]
    EmptyReport,
    #[error("LLM request failed: {0}")]
    Llm(#[from] GatewayError),
    #[error("rewrite does not compile after a repair round:\n{diagnostics}")]
    DoesNotCompile { diagnostics: String, transcript: Vec<String> },
    #[error("rewrite no longer defines contract `{0}`")]
    MissingContract(String),
    #[error(transparent)]
    Environment(#[from] EnvironmentError),
}

impl RefactorError {
    /// Whether the error is a property of the candidate rather than of the
    /// environment.
    pub fn is_rejection(&self) -> bool {
        !matches!(self, RefactorError::Environment(_) | RefactorError::Llm(_))
    }
}

/// What the Executor is asked to apply.
#[derive(Debug, Clone, Copy)]
pub enum Instructions<'r> {
    Existing(&'r ExistingPatternReport),
    New(&'r NewPatternReport),
}

impl Instructions<'_> {
    fn stage(&self) -> Stage {
        match self {
            Instructions::Existing(_) => Stage::ExistingPatterns,
            Instructions::New(_) => Stage::NewPattern,
        }
    }

    fn patterns(&self) -> Vec<String> {
        match self {
            Instructions::Existing(r) => r.hit_patterns().into_iter().collect(),
            Instructions::New(r) => r.proposal.iter().map(|p| p.proposed_name.clone()).collect(),
        }
    }

    fn render(&self, source: &str) -> Option<String> {
        match self {
            Instructions::Existing(r) if r.total_findings() > 0 => Some(existing_instructions(r, source)),
            Instructions::New(r) => r.proposal.as_ref().map(new_instructions),
            _ => None,
        }
    }
}

fn existing_instructions(report: &ExistingPatternReport, source: &str) -> String {
    let mut out = String::new();
    for (name, findings) in report.findings.iter().filter(|(_, f)| !f.is_empty()) {
        out.push_str(&format!("Pattern {name}:\n"));
        for f in findings {
            out.push_str(&format!("- {}: {} Fix: {}.\n", f.location(source), f.evidence, f.suggested_rewrite.prose));
            if let Some(snippet) = &f.suggested_rewrite.snippet {
                out.push_str(&format!("  Suggested code:\n{}\n", indent(snippet, 4)));
            }
        }
    }
    out
}

fn new_instructions(p: &NewPatternProposal) -> String {
    let mut out = format!("Pattern {}:\n{}\nWhy it saves gas: {}\nApply it to:\n", p.proposed_name, p.description, p.rationale);
    for code in &p.matched_code {
        out.push_str(&format!("```solidity\n{code}\n```\n"));
    }
    out
}

fn indent(text: &str, n: usize) -> String {
    let pad = " ".repeat(n);
    text.lines().map(|l| format!("{pad}{l}")).collect::<Vec<_>>().join("\n")
}

pub fn refactor_prompt(source: &str, instructions: &str) -> String {
    format!("Contract:\n\n```solidity\n{source}\n```\n\nSuggestions to apply:\n\n{instructions}")
}

pub fn repair_prompt(previous: &str, diagnostics: &str) -> String {
    format!(
        "Your rewrite does not compile. Fix the errors below and reply with the complete corrected source in a single ```solidity code block.\n\nCompiler errors:\n{diagnostics}\n\nYour rewrite:\n\n```solidity\n{previous}\n```"
    )
}

/// Source code in a reply: the first fenced block that looks like
/// Solidity, or the whole reply if it has no fences.
pub fn extract_code(reply: &str) -> String {
    let mut blocks = Vec::new();
    let mut current: Option<Vec<&str>> = None;
    for line in reply.lines() {
        let fence = line.trim_start().starts_with("```");
        match (&mut current, fence) {
            (None, true) => current = Some(Vec::new()),
            (Some(lines), true) => {
                blocks.push(lines.join("\n"));
                current = None;
            }
            (Some(lines), false) => lines.push(line),
            (None, false) => {}
        }
    }
    if let Some(lines) = current {
        blocks.push(lines.join("\n"));
    }
    let code = blocks
        .iter()
        .find(|b| b.contains("contract ") || b.contains("pragma "))
        .or(blocks.first())
        .cloned()
        .unwrap_or_else(|| reply.to_string());
    let mut code = code.trim().to_string();
    code.push('\n');
    code
}

pub struct Refactored {
    pub candidate: RefactorCandidate,
    pub compiled: CompilationResult,
}

/// Asks the Executor to apply `instructions` to `base`, compiling the
/// result and allowing one repair round. The contract measured in `base`
/// must still exist in the rewrite and stays the measured contract.
pub fn apply_refactor(
    base: &CompilationResult,
    instructions: Instructions<'_>,
    gateway: &Gateway,
    settings: &CompilerSettings,
) -> Result<Refactored, RefactorError> {
    let text = instructions.render(&base.source).ok_or(RefactorError::EmptyReport)?;
    let reply = gateway.prompt(AgentRole::Executor, EXECUTOR_SYSTEM_PROMPT, &refactor_prompt(&base.source, &text))?;
    let mut transcript = vec![reply.text.clone()];
    let mut source = extract_code(&reply.text);
    let mut compiled = compile(&source, settings)?;
    let mut repaired = false;
    if !compiled.is_success() {
        let diagnostics = diagnostics_for(&compiled);
        let reply = gateway.prompt(AgentRole::Executor, EXECUTOR_SYSTEM_PROMPT, &repair_prompt(&source, &diagnostics))?;
        transcript.push(reply.text.clone());
        source = extract_code(&reply.text);
        compiled = compile(&source, settings)?;
        repaired = true;
        if !compiled.is_success() {
            return Err(RefactorError::DoesNotCompile {
                diagnostics: diagnostics_for(&compiled),
                transcript,
            });
        }
    }
    let name = base.contract_name().to_string();
    let compiled = compiled.select(&name).ok_or(RefactorError::MissingContract(name))?;
    Ok(Refactored {
        candidate: RefactorCandidate {
            stage: instructions.stage(),
            base_source: base.source.clone(),
            candidate_source: source,
            applied_patterns: instructions.patterns(),
            llm_transcript: transcript,
            repaired,
        },
        compiled,
    })
}

fn diagnostics_for(r: &CompilationResult) -> String {
    let report = r.error_report();
    if report.is_empty() {
        "no deployable contract in the output".to_string()
    } else {
        report
    }
}
