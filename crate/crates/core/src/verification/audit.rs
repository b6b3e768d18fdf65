//! Differential security audit.
//!
//! An analyzer runs on the base and on the candidate; only findings the
//! candidate adds count. Findings are keyed by detector, severity and
//! `Contract.function`, not by line, so moved code does not read as new.

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::process::Command;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::frontend::{ast, AstIndex, CompilationResult, Node};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Severity {
    Informational,
    Low,
    Medium,
    High,
}

impl Severity {
    pub fn parse(s: &str) -> Option<Self> {
        match s.to_ascii_lowercase().as_str() {
            "informational" | "optimization" | "info" => Some(Severity::Informational),
            "low" => Some(Severity::Low),
            "medium" => Some(Severity::Medium),
            "high" => Some(Severity::High),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct AuditFinding {
    pub detector: String,
    pub severity: Severity,
    /// `Contract.function`, or `Contract` for contract-level findings.
    pub location: String,
    pub description: String,
}

impl AuditFinding {
    fn key(&self) -> (&str, Severity, &str) {
        (&self.detector, self.severity, &self.location)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum AuditError {
    #[error("analyzer `{tool}` unavailable: {reason}")]
    Unavailable { tool: String, reason: String },
    #[error("analyzer `{tool}` produced unreadable output: {reason}")]
    BadOutput { tool: String, reason: String },
}

pub trait AuditAdapter: Send + Sync {
    fn name(&self) -> String;
    fn analyze(&self, compilation: &CompilationResult) -> Result<Vec<AuditFinding>, AuditError>;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UnavailablePolicy {
    /// Treat a missing analyzer as a failed audit.
    FailClosed,
    SkipWithWarning,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AuditPolicy {
    pub floor: Severity,
    pub on_unavailable: UnavailablePolicy,
}

impl Default for AuditPolicy {
    fn default() -> Self {
        Self {
            floor: Severity::Medium,
            on_unavailable: UnavailablePolicy::FailClosed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AuditResult {
    pub tool: String,
    pub baseline_findings: Vec<AuditFinding>,
    pub candidate_findings: Vec<AuditFinding>,
    pub new_findings: Vec<AuditFinding>,
    pub passed: bool,
    pub warning: Option<String>,
}

/// Candidate findings not matched one-for-one by a baseline finding.
pub fn subtract(candidate: &[AuditFinding], baseline: &[AuditFinding]) -> Vec<AuditFinding> {
    let mut remaining: BTreeMap<(&str, Severity, &str), usize> = BTreeMap::new();
    for f in baseline {
        *remaining.entry(f.key()).or_default() += 1;
    }
    candidate
        .iter()
        .filter(|f| match remaining.get_mut(&f.key()) {
            Some(n) if *n > 0 => {
                *n -= 1;
                false
            }
            _ => true,
        })
        .cloned()
        .collect()
}

pub fn audit(base: &CompilationResult, candidate: &CompilationResult, adapter: &dyn AuditAdapter, policy: AuditPolicy) -> AuditResult {
    let tool = adapter.name();
    match (adapter.analyze(base), adapter.analyze(candidate)) {
        (Ok(mut baseline), Ok(mut found)) => {
            baseline.sort();
            found.sort();
            let new_findings = subtract(&found, &baseline);
            let passed = !new_findings.iter().any(|f| f.severity >= policy.floor);
            AuditResult {
                tool,
                baseline_findings: baseline,
                candidate_findings: found,
                new_findings,
                passed,
                warning: None,
            }
        }
        (Err(e), _) | (_, Err(e)) => AuditResult {
            tool,
            baseline_findings: Vec::new(),
            candidate_findings: Vec::new(),
            new_findings: Vec::new(),
            passed: policy.on_unavailable == UnavailablePolicy::SkipWithWarning,
            warning: Some(e.to_string()),
        },
    }
}

/// Built-in checks needing no external tooling: `tx.origin`
/// authorization, ignored low-level call results, delegatecall to a
/// caller-controlled address, and state writes after a call that forwards
/// ether (reentrancy).
#[derive(Debug, Clone, Copy, Default)]
pub struct BuiltinChecker;

const LOW_LEVEL: [&str; 4] = ["call", "delegatecall", "staticcall", "send"];

struct Scan<'a> {
    index: AstIndex<'a>,
    out: Vec<AuditFinding>,
}

impl<'a> Scan<'a> {
    fn location(&self, n: &Node<'_>) -> String {
        let contract = self.index.enclosing_contract(n).map(|c| c.name()).unwrap_or_default();
        match self.index.enclosing_function(n) {
            Some(f) => {
                let name = match f.str("kind") {
                    Some("constructor") => "constructor",
                    Some("receive") => "receive",
                    Some("fallback") => "fallback",
                    _ => f.name(),
                };
                format!("{contract}.{name}")
            }
            None => contract.to_string(),
        }
    }

    fn push(&mut self, n: &Node<'_>, detector: &str, severity: Severity, description: String) {
        let location = self.location(n);
        self.out.push(AuditFinding {
            detector: detector.to_string(),
            severity,
            location,
            description,
        });
    }
}

/// Callee of a low-level call: the member access and whether `{value: ..}`
/// is attached.
fn low_level<'a>(call: &Node<'a>) -> Option<(Node<'a>, bool)> {
    let callee = call.child("expression")?;
    let (member, with_value) = if callee.is("FunctionCallOptions") {
        let names = callee.json().get("names").and_then(Value::as_array).cloned().unwrap_or_default();
        (callee.child("expression")?, names.iter().any(|n| n == "value"))
    } else {
        (callee, false)
    };
    let name = member.str("memberName")?;
    let base_is_address = member.child("expression").is_some_and(|b| b.type_string().starts_with("address"));
    (member.is("MemberAccess") && LOW_LEVEL.contains(&name) && base_is_address).then_some((member, with_value || name == "send"))
}

fn is_msg_sender(n: &Node<'_>) -> bool {
    n.is("MemberAccess")
        && n.str("memberName") == Some("sender")
        && n.child("expression").is_some_and(|e| e.name() == "msg" && e.is_builtin_ref())
}

impl BuiltinChecker {
    fn scan(result: &CompilationResult) -> Vec<AuditFinding> {
        let Some(index) = result.index() else {
            return Vec::new();
        };
        let mut scan = Scan { index, out: Vec::new() };
        let root = scan.index.root();
        for n in root.walk() {
            if n.is("MemberAccess")
                && n.str("memberName") == Some("origin")
                && n.child("expression").is_some_and(|e| e.name() == "tx" && e.is_builtin_ref())
            {
                let in_comparison = scan
                    .index
                    .parent(&n)
                    .is_some_and(|p| p.is("BinaryOperation") && matches!(p.str("operator"), Some("==" | "!=")));
                if in_comparison {
                    scan.push(&n, "tx-origin", Severity::Medium, "authorization compares against tx.origin".into());
                }
            }
            if !n.is("FunctionCall") {
                continue;
            }
            let Some((member, with_value)) = low_level(&n) else { continue };
            let name = member.str("memberName").unwrap_or_default();
            let discarded = scan.index.parent(&n).is_some_and(|p| p.is("ExpressionStatement"));
            if discarded {
                let detector = if name == "send" { "unchecked-send" } else { "unchecked-lowlevel" };
                scan.push(&n, detector, Severity::Medium, format!("result of low-level `{name}` is ignored"));
            }
            if name == "delegatecall" {
                let target = member.child("expression").expect("checked in low_level");
                let f = scan.index.enclosing_function(&n);
                let params: Vec<i64> = f.map(|f| ast::parameters(&f).iter().map(|p| p.id()).collect()).unwrap_or_default();
                let controlled = target
                    .walk()
                    .iter()
                    .any(|t| is_msg_sender(t) || t.referenced_declaration().is_some_and(|id| params.contains(&id)));
                if controlled {
                    scan.push(&n, "controlled-delegatecall", Severity::High, "delegatecall to a caller-controlled address".into());
                }
            }
            if with_value {
                if let Some(f) = scan.index.enclosing_function(&n) {
                    let after = n.src().end();
                    let writes_state = ast::writes(&f).iter().any(|w| {
                        w.node.src().offset >= after
                            && scan.index.get(w.target).is_some_and(|d| d.bool("stateVariable"))
                    });
                    if writes_state {
                        scan.push(&n, "reentrancy-eth", Severity::High, "state is written after an ether-forwarding call".into());
                    }
                }
            }
        }
        scan.out
    }
}

impl AuditAdapter for BuiltinChecker {
    fn name(&self) -> String {
        "builtin".to_string()
    }

    fn analyze(&self, compilation: &CompilationResult) -> Result<Vec<AuditFinding>, AuditError> {
        Ok(Self::scan(compilation))
    }
}

/// Slither run as a subprocess; `{file}` in the command is replaced by the
/// path of a temporary copy of the source.
#[derive(Debug, Clone)]
pub struct SlitherAdapter {
    pub command: Vec<String>,
    pub workdir: PathBuf,
}

impl Default for SlitherAdapter {
    fn default() -> Self {
        Self {
            command: ["slither", "{file}", "--json", "-"].map(String::from).to_vec(),
            workdir: std::env::temp_dir(),
        }
    }
}

impl AuditAdapter for SlitherAdapter {
    fn name(&self) -> String {
        "slither".to_string()
    }

    fn analyze(&self, compilation: &CompilationResult) -> Result<Vec<AuditFinding>, AuditError> {
        let unavailable = |reason: String| AuditError::Unavailable {
            tool: self.name(),
            reason,
        };
        let digest = crate::gateway::fnv1a(compilation.source.as_bytes());
        let dir = self.workdir.join(format!("gasloop-audit-{}-{digest:016x}", std::process::id()));
        std::fs::create_dir_all(&dir).map_err(|e| unavailable(e.to_string()))?;
        let file = dir.join(&compilation.file_name);
        std::fs::write(&file, &compilation.source).map_err(|e| unavailable(e.to_string()))?;
        let args: Vec<String> = self
            .command
            .iter()
            .map(|a| a.replace("{file}", &file.to_string_lossy()))
            .collect();
        let (program, rest) = args.split_first().ok_or_else(|| unavailable("empty command".into()))?;
        let output = Command::new(program).args(rest).current_dir(&dir).output();
        let _ = std::fs::remove_dir_all(&dir);
        let output = output.map_err(|e| unavailable(e.to_string()))?;
        // Slither exits non-zero when it reports findings; only the JSON matters.
        let stdout = String::from_utf8_lossy(&output.stdout);
        parse_slither_json(&stdout).map_err(|reason| AuditError::BadOutput {
            tool: self.name(),
            reason,
        })
    }
}

fn element_location(e: &Value) -> Option<String> {
    let name = e.get("name")?.as_str()?;
    let parent = &e["type_specific_fields"]["parent"];
    match e.get("type")?.as_str()? {
        "function" => {
            let contract = parent["name"].as_str().unwrap_or_default();
            Some(format!("{contract}.{}", name.split('(').next().unwrap_or(name)))
        }
        "contract" => Some(name.to_string()),
        "node" | "variable" => {
            if parent["type"] == "function" {
                element_location(parent)
            } else {
                parent["name"].as_str().map(String::from)
            }
        }
        _ => None,
    }
}

/// Findings from `slither --json` output.
pub fn parse_slither_json(text: &str) -> Result<Vec<AuditFinding>, String> {
    let v: Value = serde_json::from_str(text.trim()).map_err(|e| e.to_string())?;
    if v.get("success") == Some(&Value::Bool(false)) {
        return Err(v["error"].as_str().unwrap_or("analysis failed").to_string());
    }
    let detectors = v["results"]["detectors"].as_array().cloned().unwrap_or_default();
    let mut out = Vec::new();
    for d in detectors {
        let Some(check) = d["check"].as_str() else { continue };
        let severity = d["impact"].as_str().and_then(Severity::parse).unwrap_or(Severity::Informational);
        let elements = d["elements"].as_array().cloned().unwrap_or_default();
        let location = elements
            .iter()
            .filter(|e| e["type"] == "function")
            .chain(elements.iter())
            .find_map(element_location)
            .unwrap_or_default();
        out.push(AuditFinding {
            detector: check.to_string(),
            severity,
            location,
            description: d["description"].as_str().unwrap_or_default().trim().to_string(),
        });
    }
    out.sort();
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn f(detector: &str, severity: Severity, location: &str) -> AuditFinding {
        AuditFinding {
            detector: detector.into(),
            severity,
            location: location.into(),
            description: String::new(),
        }
    }

    #[test]
    fn subtraction_is_a_multiset_difference() {
        let base = [f("a", Severity::Low, "C.f"), f("b", Severity::High, "C.g")];
        let cand = [f("a", Severity::Low, "C.f"), f("a", Severity::Low, "C.f"), f("b", Severity::High, "C.h")];
        let new = subtract(&cand, &base);
        assert_eq!(new, [f("a", Severity::Low, "C.f"), f("b", Severity::High, "C.h")]);
        assert!(subtract(&base, &base).is_empty());
    }

    #[test]
    fn slither_output_is_parsed() {
        let json = r#"{"success": true, "error": null, "results": {"detectors": [
            {"check": "controlled-delegatecall", "impact": "High", "confidence": "Medium",
             "description": "Proxy.run(address) uses delegatecall to a input-controlled function id\n",
             "elements": [{"type": "function", "name": "run",
                           "type_specific_fields": {"parent": {"type": "contract", "name": "Proxy"},
                                                    "signature": "run(address)"}},
                          {"type": "node", "name": "target.delegatecall()",
                           "type_specific_fields": {"parent": {"type": "function", "name": "run",
                               "type_specific_fields": {"parent": {"type": "contract", "name": "Proxy"}}}}}]},
            {"check": "solc-version", "impact": "Informational", "elements": []}
        ]}}"#;
        let out = parse_slither_json(json).unwrap();
        assert_eq!(out.len(), 2);
        assert_eq!(out[0].detector, "controlled-delegatecall");
        assert_eq!(out[0].severity, Severity::High);
        assert_eq!(out[0].location, "Proxy.run");
        assert_eq!(out[1].location, "");
        assert!(parse_slither_json(r#"{"success": false, "error": "boom"}"#).is_err());
        assert!(parse_slither_json("not json").is_err());
    }

    #[test]
    fn missing_binary_is_unavailable() {
        let adapter = SlitherAdapter {
            command: vec!["/nonexistent/slither-binary".into(), "{file}".into()],
            ..SlitherAdapter::default()
        };
        let r = CompilationResult {
            source: "contract A {}".into(),
            file_name: "A.sol".into(),
            settings: Default::default(),
            compiler_version: String::new(),
            contracts: Vec::new(),
            primary: None,
            ast: None,
            diagnostics: Vec::new(),
        };
        assert!(matches!(adapter.analyze(&r), Err(AuditError::Unavailable { .. })));
    }
}
