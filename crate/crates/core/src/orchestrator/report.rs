use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::frontend::CompilerSettings;
use crate::gas::GasMeasurement;
use crate::innovator::NewPatternReport;
use crate::seeker::ExistingPatternReport;
use crate::verification::consistency::Outcome as CallOutcome;
use crate::verification::{AuditPolicy, Gate, Stage, SuiteLimits, VerificationResult};

/// Version tag of the machine-readable report. Bump on any breaking
/// change to field names or meaning.
pub const REPORT_SCHEMA: &str = "gasloop.report/1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    /// At least one stage was accepted and gas went down.
    Optimized,
    /// Nothing to apply: no findings and no proposal.
    Unchanged,
    /// Candidates existed but none passed verification.
    Fallback,
}

impl std::fmt::Display for Outcome {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Outcome::Optimized => "optimized",
            Outcome::Unchanged => "unchanged",
            Outcome::Fallback => "fallback",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StageStatus {
    Accepted,
    Rejected,
    /// The stage produced nothing to refactor.
    NoCandidate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageTrace {
    pub round: u32,
    pub stage: Stage,
    pub status: StageStatus,
    pub rejected_at: Option<Gate>,
    pub reason: Option<String>,
    /// Patterns applied or proposed in this stage.
    pub patterns: Vec<String>,
    pub gas_before: Option<u64>,
    pub gas_after: Option<u64>,
    /// Whether the stage's proposal was added to the blacklist.
    pub blacklisted: bool,
    pub existing_report: Option<ExistingPatternReport>,
    pub new_pattern_report: Option<NewPatternReport>,
    pub verification: Option<VerificationResult>,
}

impl StageTrace {
    pub fn new(round: u32, stage: Stage) -> Self {
        Self {
            round,
            stage,
            status: StageStatus::NoCandidate,
            rejected_at: None,
            reason: None,
            patterns: Vec::new(),
            gas_before: None,
            gas_after: None,
            blacklisted: false,
            existing_report: None,
            new_pattern_report: None,
            verification: None,
        }
    }

    pub fn delta(&self) -> Option<i64> {
        Some(self.gas_after? as i64 - self.gas_before? as i64)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfigSnapshot {
    pub threshold: f64,
    pub max_rounds: u32,
    pub seeker: bool,
    pub innovator: bool,
    pub compiler: CompilerSettings,
    pub audit_tool: String,
    pub audit_policy: AuditPolicy,
    pub gas_backend: String,
    pub suite: SuiteLimits,
    pub seed: u64,
    pub model: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FinalReport {
    pub schema: String,
    pub contract_id: String,
    pub contract_name: String,
    pub outcome: Outcome,
    pub original_gas: GasMeasurement,
    pub final_gas: GasMeasurement,
    /// (original − final) / original.
    pub saving_ratio: f64,
    pub rounds_used: u32,
    pub applied_existing_patterns: Vec<String>,
    pub validated_new_patterns: Vec<String>,
    pub new_patterns_validated: usize,
    pub stages: Vec<StageTrace>,
    pub warnings: Vec<String>,
    pub config: ConfigSnapshot,
    pub original_source: String,
    pub final_source: String,
    pub generated_at: u64,
}

impl FinalReport {
    pub fn saved(&self) -> i64 {
        self.original_gas.gas as i64 - self.final_gas.gas as i64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Machine,
    Human,
}

pub fn render_report(report: &FinalReport, format: ReportFormat) -> String {
    match format {
        ReportFormat::Machine => {
            let mut s = serde_json::to_string_pretty(report).expect("report serializes");
            s.push('\n');
            s
        }
        ReportFormat::Human => human(report),
    }
}

pub(crate) fn describe_outcome(o: &CallOutcome) -> String {
    let mut s = if o.success { "success".to_string() } else { "revert".to_string() };
    if !o.returned.is_empty() {
        let _ = write!(s, " returning {}", o.returned);
    }
    if !o.events.is_empty() {
        let events: Vec<&str> = o.events.iter().map(|e| e.rendered.as_str()).collect();
        let _ = write!(s, " emitting {}", events.join(", "));
    }
    s
}

fn stage_name(s: Stage) -> &'static str {
    match s {
        Stage::ExistingPatterns => "existing patterns",
        Stage::NewPattern => "new pattern",
    }
}

fn status_text(t: &StageTrace) -> String {
    match (t.status, t.rejected_at) {
        (StageStatus::Accepted, _) => "accepted".into(),
        (StageStatus::Rejected, Some(g)) => format!("rejected ({g})"),
        (StageStatus::Rejected, None) => "rejected".into(),
        (StageStatus::NoCandidate, _) => "no candidate".into(),
    }
}

fn opt(v: Option<u64>) -> String {
    v.map_or_else(|| "-".into(), |g| g.to_string())
}

fn human(r: &FinalReport) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "Gas optimization report for {} ({})", r.contract_name, r.contract_id);
    let _ = writeln!(out);
    let _ = writeln!(out, "Outcome: {}", r.outcome);
    let _ = writeln!(
        out,
        "Deployment gas: {} -> {} (saved {}, {:.2}%)",
        r.original_gas.gas,
        r.final_gas.gas,
        r.saved(),
        r.saving_ratio * 100.0
    );
    let _ = writeln!(out, "Rounds used: {} of {}", r.rounds_used, r.config.max_rounds);
    let _ = writeln!(out);

    match r.outcome {
        Outcome::Unchanged => {
            let _ = writeln!(out, "No changes were applied: no existing pattern matched and no new pattern was proposed.");
        }
        Outcome::Fallback => {
            let _ = writeln!(out, "No changes were applied: every candidate failed verification, so the original contract is kept.");
        }
        Outcome::Optimized => {
            let _ = writeln!(out, "Applied patterns:");
            for t in r.stages.iter().filter(|t| t.status == StageStatus::Accepted) {
                let kind = match t.stage {
                    Stage::ExistingPatterns => "existing",
                    Stage::NewPattern => "new",
                };
                let delta = t.delta().map_or_else(String::new, |d| format!(", {d:+} gas"));
                let _ = writeln!(out, "  - {} ({kind}, round {}{delta})", t.patterns.join(", "), t.round);
            }
        }
    }
    let _ = writeln!(out);

    let _ = writeln!(out, "Stages:");
    let rows: Vec<[String; 7]> = r
        .stages
        .iter()
        .map(|t| {
            [
                t.round.to_string(),
                stage_name(t.stage).to_string(),
                status_text(t),
                if t.patterns.is_empty() { "-".into() } else { t.patterns.join(", ") },
                opt(t.gas_before),
                opt(t.gas_after),
                t.delta().map_or_else(|| "-".into(), |d| format!("{d:+}")),
            ]
        })
        .collect();
    let header = ["Round", "Stage", "Result", "Patterns", "Gas before", "Gas after", "Delta"].map(String::from);
    let mut widths = header.clone().map(|h| h.len());
    for row in &rows {
        for (w, c) in widths.iter_mut().zip(row) {
            *w = (*w).max(c.chars().count());
        }
    }
    let line = |cells: &[String; 7]| {
        let padded: Vec<String> = cells.iter().zip(widths).map(|(c, w)| format!("{c:<w$}")).collect();
        format!("  {}", padded.join(" | ").trim_end())
    };
    let _ = writeln!(out, "{}", line(&header));
    let _ = writeln!(out, "  {}", widths.map(|w| "-".repeat(w)).join("-+-"));
    for row in &rows {
        let _ = writeln!(out, "{}", line(row));
    }

    let notes: Vec<&StageTrace> = r.stages.iter().filter(|t| t.reason.is_some()).collect();
    if !notes.is_empty() {
        let _ = writeln!(out);
        let _ = writeln!(out, "Notes:");
        for t in notes {
            let gate = t.rejected_at.map_or_else(String::new, |g| format!(" failed the {g}"));
            let bl = if t.blacklisted { " The proposal was blacklisted." } else { "" };
            let _ = writeln!(out, "  - Round {}, {}{gate}: {}.{bl}", t.round, stage_name(t.stage), t.reason.as_deref().unwrap_or_default());
        }
    }
    if !r.warnings.is_empty() {
        let _ = writeln!(out);
        let _ = writeln!(out, "Warnings:");
        for w in &r.warnings {
            let _ = writeln!(out, "  - {w}");
        }
    }
    out
}
