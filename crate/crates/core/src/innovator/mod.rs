//! Novel pattern proposals.
//!
//! The Innovator asks for at most one new pattern grounded in the current
//! contract, then filters the answer mechanically: blacklisted
//! fingerprints, matched code that does not occur in the contract, and
//! restatements of what the detectors already reported are all dropped
//! before any compilation work is spent on them.

mod parse;

use serde::{Deserialize, Serialize};

use crate::clock::Clock;
use crate::gateway::{AgentRole, Gateway};
use crate::library::{fingerprint, normalize_whitespace, Blacklist, NewPatternProposal, PatternLibrary};
use crate::seeker::ExistingPatternReport;

pub use parse::{parse_proposal, DECLINE_SENTINEL};

pub const INNOVATOR_SYSTEM_PROMPT: &str = "\
Please try to summarize a new Gas optimization pattern based on the current contract code and existing suggestions, with the main goal of reducing Gas fees.
Note: The suggestion should be different from the existing ones.
Do not repeat existing suggestions.
Please specify which parts of the current contract code match the new pattern.
The generated patterns must be reasonable; if none are found, it's okay not to generate any.
And if there are multiple patterns, please just generate the most important one.";

/// Output format appended to the system prompt so replies can be parsed.
pub const RESPONSE_TEMPLATE: &str = "\
Answer in exactly this format:

Pattern Name: <snake_case_identifier>
Description: <what the waste is, in one paragraph>
Tags: <comma-separated keywords>
Matched Code:
```solidity
<code copied verbatim from the current contract>
```
(one fenced block per matched location)
Rationale: <why the rewrite costs less gas>

If there is no new pattern, reply with exactly: no new pattern found";

pub const INNOVATOR_USER_TEMPLATE: &str = "\
Current contract code:

[Contract Source Code Here]

Existing suggestions:

[Seeker's Suggestions Here]";

pub fn innovator_prompt(source: &str, suggestions: &str) -> (String, String) {
    let system = format!("{INNOVATOR_SYSTEM_PROMPT}\n\n{RESPONSE_TEMPLATE}");
    let user = INNOVATOR_USER_TEMPLATE
        .replacen("[Seeker's Suggestions Here]", suggestions, 1)
        .replacen("[Contract Source Code Here]", source, 1);
    (system, user)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProposalStatus {
    Proposed,
    Declined,
    Unparsable,
    Blacklisted,
    Hallucinated,
    DuplicateOfExisting,
    LlmError,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NewPatternReport {
    pub contract_id: String,
    pub status: ProposalStatus,
    pub proposal: Option<NewPatternProposal>,
    /// Fingerprints of proposals filtered out by the blacklist.
    pub blacklist_hits: Vec<String>,
    /// The parsed but rejected proposal, when a filter other than the
    /// blacklist dropped it.
    pub rejected: Option<NewPatternProposal>,
    pub note: Option<String>,
    pub raw_llm_text: Option<String>,
    pub generated_at: u64,
}

/// Snippets of `matched` that do not occur in `source` once both are
/// whitespace-normalized.
pub fn hallucinated_snippets<'p>(source: &str, matched: &'p [String]) -> Vec<&'p str> {
    let haystack = normalize_whitespace(source);
    matched
        .iter()
        .filter(|m| {
            let needle = normalize_whitespace(m);
            needle.is_empty() || !haystack.contains(&needle)
        })
        .map(String::as_str)
        .collect()
}

fn canonical_name(name: &str) -> String {
    name.trim()
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() { c.to_ascii_lowercase() } else { '_' })
        .collect::<String>()
        .split('_')
        .filter(|s| !s.is_empty())
        .collect::<Vec<_>>()
        .join("_")
}

/// Name of the library pattern `p` restates, if any: same canonical name,
/// or every matched snippet is exactly the text of one of that pattern's
/// findings.
pub fn duplicate_of(p: &NewPatternProposal, library: &PatternLibrary, report: &ExistingPatternReport, source: &str) -> Option<String> {
    let name = canonical_name(&p.proposed_name);
    if let Some(existing) = library.names().find(|n| canonical_name(n) == name) {
        return Some(existing.to_string());
    }
    let matched: Vec<String> = p.matched_code.iter().map(|m| normalize_whitespace(m)).collect();
    report.findings.iter().find_map(|(pattern, findings)| {
        let spans: Vec<String> = findings
            .iter()
            .filter_map(|f| f.span.text(source))
            .map(normalize_whitespace)
            .collect();
        (!matched.is_empty() && matched.iter().all(|m| spans.contains(m))).then(|| pattern.clone())
    })
}

pub struct Innovator<'a> {
    library: &'a PatternLibrary,
    gateway: &'a Gateway,
}

impl<'a> Innovator<'a> {
    pub fn new(library: &'a PatternLibrary, gateway: &'a Gateway) -> Self {
        Self { library, gateway }
    }

    pub fn propose(&self, source: &str, existing: &ExistingPatternReport, blacklist: &Blacklist, clock: &dyn Clock) -> NewPatternReport {
        let mut report = NewPatternReport {
            contract_id: existing.contract_id.clone(),
            status: ProposalStatus::Declined,
            proposal: None,
            blacklist_hits: Vec::new(),
            rejected: None,
            note: None,
            raw_llm_text: None,
            generated_at: 0,
        };
        let (system, user) = innovator_prompt(source, &existing.suggestions(source));
        match self.gateway.prompt(AgentRole::Innovator, &system, &user) {
            Err(e) => {
                report.status = ProposalStatus::LlmError;
                report.note = Some(e.to_string());
            }
            Ok(reply) => {
                report.raw_llm_text = Some(reply.text.clone());
                self.filter(source, existing, blacklist, &reply.text, &mut report);
            }
        }
        report.generated_at = clock.now();
        report
    }

    fn filter(&self, source: &str, existing: &ExistingPatternReport, blacklist: &Blacklist, text: &str, report: &mut NewPatternReport) {
        let Some(p) = parse_proposal(text) else {
            report.status = if parse::is_decline(text) {
                ProposalStatus::Declined
            } else {
                ProposalStatus::Unparsable
            };
            return;
        };
        let fp = fingerprint(&p);
        if blacklist.contains_fingerprint(&fp) {
            report.status = ProposalStatus::Blacklisted;
            report.blacklist_hits.push(fp);
            return;
        }
        let missing = hallucinated_snippets(source, &p.matched_code);
        if !missing.is_empty() {
            report.status = ProposalStatus::Hallucinated;
            report.note = Some(format!("{} matched snippet(s) do not occur in the contract", missing.len()));
            report.rejected = Some(p);
            return;
        }
        if let Some(dup) = duplicate_of(&p, self.library, existing, source) {
            report.status = ProposalStatus::DuplicateOfExisting;
            report.note = Some(format!("restates existing pattern `{dup}`"));
            report.rejected = Some(p);
            return;
        }
        report.status = ProposalStatus::Proposed;
        report.proposal = Some(p);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn names_canonicalize() {
        assert_eq!(canonical_name("Bitmap Role-Management"), "bitmap_role_management");
        assert_eq!(canonical_name("  dead__code "), "dead_code");
    }

    #[test]
    fn hallucination_check_ignores_layout() {
        let src = "contract A {\n    uint256 x;\n    function f() external {\n        x = 1;\n    }\n}";
        let ok = vec!["function f() external {   x = 1; }".to_string()];
        assert!(hallucinated_snippets(src, &ok).is_empty());
        let bad = vec!["x = 2;".to_string(), String::new()];
        assert_eq!(hallucinated_snippets(src, &bad).len(), 2);
    }

    #[test]
    fn prompt_slots_are_filled() {
        let (system, user) = innovator_prompt("contract A {}", "None.");
        assert!(system.starts_with(INNOVATOR_SYSTEM_PROMPT));
        assert!(system.ends_with(DECLINE_SENTINEL));
        assert_eq!(user, "Current contract code:\n\ncontract A {}\n\nExisting suggestions:\n\nNone.");
    }
}
