//! Pattern retrieval and the Existing Pattern Report.
//!
//! Two independent retrievals pick candidate patterns: embedding similarity
//! between the contract and each pattern's `codeBefore` examples, and an LLM
//! asked to name pattern ids from their descriptions. The union decides which
//! detectors run.

mod prompt;

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use crate::clock::Clock;
use crate::detectors::{DetectorRegistry, Finding};
use crate::frontend::CompilationResult;
use crate::gateway::{cosine_similarity, AgentRole, EmbeddingVector, Gateway, GatewayError};
use crate::library::PatternLibrary;

pub use prompt::{seeker_prompt, SEEKER_SYSTEM_PROMPT, SEEKER_USER_TEMPLATE};

pub const DEFAULT_THRESHOLD: f64 = 0.7;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RetrievalOutcome {
    /// Best example similarity for every pattern that was scored.
    pub code_scores: BTreeMap<String, f64>,
    pub code_selected: BTreeSet<String>,
    pub nl_selected: BTreeSet<String>,
    pub union: BTreeSet<String>,
    pub threshold_used: f64,
    pub detector_calls_made: usize,
    pub detector_calls_possible: usize,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExistingPatternReport {
    pub contract_id: String,
    pub retrieval: RetrievalOutcome,
    pub findings: BTreeMap<String, Vec<Finding>>,
    pub generated_at: u64,
}

impl ExistingPatternReport {
    /// A report with no retrieval and no findings.
    pub fn empty(contract_id: impl Into<String>, generated_at: u64) -> Self {
        Self {
            contract_id: contract_id.into(),
            retrieval: RetrievalOutcome::default(),
            findings: BTreeMap::new(),
            generated_at,
        }
    }

    pub fn total_findings(&self) -> usize {
        self.findings.values().map(Vec::len).sum()
    }

    pub fn hit_patterns(&self) -> BTreeSet<String> {
        self.findings.iter().filter(|(_, f)| !f.is_empty()).map(|(k, _)| k.clone()).collect()
    }

    /// The report as the Innovator sees it: one line per finding.
    pub fn suggestions(&self, source: &str) -> String {
        let lines: Vec<String> = self
            .findings
            .iter()
            .flat_map(|(name, fs)| {
                fs.iter().map(move |f| {
                    format!("- {name} at {}: {} Suggested fix: {}.", f.location(source), f.evidence, f.suggested_rewrite.prose)
                })
            })
            .collect();
        if lines.is_empty() {
            "None.".to_string()
        } else {
            lines.join("\n")
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum SeekError {
    #[error("contract does not compile:\n{0}")]
    NotCompiled(String),
    #[error("threshold {0} is outside [0, 1]")]
    BadThreshold(String),
}

/// Result of one code-similarity retrieval.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct CodeRetrieval {
    pub scores: BTreeMap<String, f64>,
    pub selected: BTreeSet<String>,
}

/// Result of one natural-language retrieval.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct NlRetrieval {
    pub selected: BTreeSet<String>,
    pub unknown: Vec<String>,
}

/// Texts compared against pattern examples: the whole source, then the
/// source text of every function and modifier with a body.
pub fn code_chunks(result: &CompilationResult) -> Vec<String> {
    let mut chunks = vec![result.source.clone()];
    if let Some(root) = result.ast_root() {
        for n in root.walk() {
            if (n.is("FunctionDefinition") || n.is("ModifierDefinition")) && n.child("body").is_some() {
                if let Some(text) = n.src().text(&result.source) {
                    chunks.push(text.to_string());
                }
            }
        }
    }
    chunks
}

/// Parses a comma-separated id list. Tolerates whitespace, newlines,
/// backticks, quotes, list bullets and a trailing period.
pub fn parse_pattern_ids(text: &str) -> Vec<String> {
    let mut seen = BTreeSet::new();
    text.split([',', '\n', ';'])
        .map(|t| {
            t.trim()
                .trim_start_matches(['-', '*', '•'])
                .trim()
                .trim_matches(|c: char| matches!(c, '`' | '"' | '\'' | '.' | '[' | ']'))
                .trim()
                .to_string()
        })
        .filter(|t| !t.is_empty())
        .filter(|t| seen.insert(t.clone()))
        .collect()
}

pub struct Seeker<'a> {
    library: &'a PatternLibrary,
    registry: &'a DetectorRegistry,
    gateway: &'a Gateway,
    /// Example embeddings, keyed by example text.
    cache: Mutex<HashMap<String, EmbeddingVector>>,
}

impl<'a> Seeker<'a> {
    pub fn new(library: &'a PatternLibrary, registry: &'a DetectorRegistry, gateway: &'a Gateway) -> Self {
        Self {
            library,
            registry,
            gateway,
            cache: Mutex::new(HashMap::new()),
        }
    }

    pub fn library(&self) -> &PatternLibrary {
        self.library
    }

    fn example_embeddings(&self) -> Result<Vec<(String, EmbeddingVector)>, GatewayError> {
        let mut cache = self.cache.lock().expect("embedding cache lock");
        let pending: Vec<String> = self
            .library
            .iter()
            .flat_map(|e| e.examples.iter().map(|x| x.code_before.clone()))
            .filter(|t| !cache.contains_key(t))
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect();
        for (text, v) in pending.iter().zip(self.gateway.embed(&pending)?) {
            cache.insert(text.clone(), v);
        }
        Ok(self
            .library
            .iter()
            .flat_map(|e| e.examples.iter().map(|x| (e.name.clone(), cache[&x.code_before].clone())))
            .collect())
    }

    /// Patterns whose best example similarity against any chunk strictly
    /// exceeds `threshold`.
    pub fn code_retrieve(&self, chunks: &[String], threshold: f64) -> Result<CodeRetrieval, GatewayError> {
        let examples = self.example_embeddings()?;
        let inputs = self.gateway.embed(chunks)?;
        let mut out = CodeRetrieval::default();
        for (name, example) in &examples {
            let best = inputs
                .iter()
                .filter_map(|c| cosine_similarity(c, example).ok())
                .fold(f64::NEG_INFINITY, f64::max);
            if best.is_finite() {
                let slot = out.scores.entry(name.clone()).or_insert(best);
                *slot = slot.max(best);
            }
        }
        out.selected = out.scores.iter().filter(|(_, s)| **s > threshold).map(|(n, _)| n.clone()).collect();
        Ok(out)
    }

    pub fn nl_retrieve(&self, source: &str) -> Result<NlRetrieval, GatewayError> {
        let (system, user) = seeker_prompt(source, self.library);
        let reply = self.gateway.prompt(AgentRole::Seeker, &system, &user)?;
        let mut out = NlRetrieval::default();
        for id in parse_pattern_ids(&reply.text) {
            if self.library.contains(&id) {
                out.selected.insert(id);
            } else {
                out.unknown.push(id);
            }
        }
        Ok(out)
    }

    pub fn seek(&self, result: &CompilationResult, threshold: f64, clock: &dyn Clock) -> Result<ExistingPatternReport, SeekError> {
        if !(0.0..=1.0).contains(&threshold) {
            return Err(SeekError::BadThreshold(threshold.to_string()));
        }
        if !result.is_success() {
            return Err(SeekError::NotCompiled(result.error_report()));
        }
        let mut warnings = Vec::new();
        let code = match self.code_retrieve(&code_chunks(result), threshold) {
            Ok(c) => c,
            Err(e) => {
                warnings.push(format!("code retrieval unavailable, using language retrieval only: {e}"));
                CodeRetrieval::default()
            }
        };
        let nl = match self.nl_retrieve(&result.source) {
            Ok(n) => n,
            Err(e) => {
                warnings.push(format!("language retrieval failed: {e}"));
                NlRetrieval::default()
            }
        };
        for id in &nl.unknown {
            warnings.push(format!("LLM named unknown pattern id `{id}`"));
        }
        let union: BTreeSet<String> = code.selected.union(&nl.selected).cloned().collect();
        let runnable: Vec<&str> = union.iter().map(String::as_str).filter(|n| self.registry.contains(n)).collect();
        for name in union.iter().filter(|n| !self.registry.contains(n)) {
            warnings.push(format!("pattern `{name}` has no registered detector"));
        }
        let run = self.registry.run_selected(runnable.iter().copied(), result);
        for (name, e) in &run.errors {
            warnings.push(format!("detector `{name}` failed: {e}"));
        }
        Ok(ExistingPatternReport {
            contract_id: result.contract_id(),
            retrieval: RetrievalOutcome {
                code_scores: code.scores,
                code_selected: code.selected,
                nl_selected: nl.selected,
                union,
                threshold_used: threshold,
                detector_calls_made: run.calls,
                detector_calls_possible: self.registry.len(),
                warnings,
            },
            findings: run.findings,
            generated_at: clock.now(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn id_parsing_is_tolerant() {
        assert_eq!(parse_pattern_ids("repeated_computation, state_variable_refactoring"), [
            "repeated_computation",
            "state_variable_refactoring"
        ]);
        assert_eq!(parse_pattern_ids(" `dead_code`.\n- storage_packing\n"), ["dead_code", "storage_packing"]);
        assert_eq!(parse_pattern_ids("a, a, b"), ["a", "b"]);
        assert!(parse_pattern_ids("").is_empty());
        assert!(parse_pattern_ids(" , ,").is_empty());
    }
}
