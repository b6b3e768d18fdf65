//! Rule-based detectors, one per library pattern.
//!
//! Every detector is a pure function from a successful compilation to a
//! list of findings. Detectors err on the side of reporting with
//! `Confidence::Heuristic` when aliasing, assembly or external calls make
//! a rule uncertain; verification decides whether a rewrite is kept.

mod dataflow;
mod expressions;
mod loops;
mod reachability;
mod signatures;
mod storage;

use std::collections::{BTreeMap, BTreeSet};
use std::sync::atomic::{AtomicUsize, Ordering};

use serde::{Deserialize, Serialize};

use crate::frontend::{AstIndex, CompilationResult, Node, SourceSpan};
use crate::library::PatternLibrary;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Confidence {
    Certain,
    Heuristic,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SuggestedRewrite {
    pub prose: String,
    pub snippet: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Finding {
    pub pattern_name: String,
    pub contract: String,
    pub function: Option<String>,
    /// Identifier or construct the finding is about; always contained in
    /// the text under `span`.
    pub subject: String,
    pub span: SourceSpan,
    pub evidence: String,
    pub suggested_rewrite: SuggestedRewrite,
    pub confidence: Confidence,
}

impl Finding {
    /// `file:line` style location plus the subject, for terse listings.
    pub fn location(&self, source: &str) -> String {
        format!("line {} `{}`", self.span.line(source), self.subject)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum DetectorError {
    #[error("no detector registered for pattern `{0}`")]
    Unregistered(String),
    #[error("detectors need a successful compilation")]
    NotCompiled,
}

/// What every detector sees.
pub struct Context<'a> {
    pub result: &'a CompilationResult,
    pub source: &'a str,
    pub index: AstIndex<'a>,
}

impl<'a> Context<'a> {
    pub fn new(result: &'a CompilationResult) -> Result<Self, DetectorError> {
        if !result.is_success() {
            return Err(DetectorError::NotCompiled);
        }
        let index = result.index().ok_or(DetectorError::NotCompiled)?;
        Ok(Self {
            result,
            source: &result.source,
            index,
        })
    }

    pub fn text(&self, node: &Node<'_>) -> &'a str {
        node.src().text(self.source).unwrap_or_default()
    }

    /// Contracts whose code can be analysed (interfaces are skipped).
    pub fn contracts(&self) -> Vec<Node<'a>> {
        self.index
            .contracts()
            .into_iter()
            .filter(|c| c.str("contractKind") != Some("interface"))
            .collect()
    }

    /// Implemented functions and modifiers of every analysable contract.
    pub fn bodies(&self) -> Vec<Node<'a>> {
        self.contracts()
            .iter()
            .flat_map(|c| c.list("nodes"))
            .filter(|n| (n.is("FunctionDefinition") || n.is("ModifierDefinition")) && n.child("body").is_some())
            .collect()
    }

    pub fn finding(&self, pattern: &str, at: &Node<'_>, subject: impl Into<String>) -> Finding {
        self.finding_at(pattern, at.src(), at, subject)
    }

    /// A finding whose span is given explicitly; `anchor` locates the
    /// enclosing contract and function.
    pub fn finding_at(&self, pattern: &str, span: SourceSpan, anchor: &Node<'_>, subject: impl Into<String>) -> Finding {
        let function = if anchor.is("FunctionDefinition") || anchor.is("ModifierDefinition") {
            Some(*anchor)
        } else {
            self.index.enclosing_function(anchor)
        };
        let contract = if anchor.is("ContractDefinition") {
            Some(*anchor)
        } else {
            self.index.enclosing_contract(anchor)
        };
        Finding {
            pattern_name: pattern.to_string(),
            contract: contract.map(|c| c.name().to_string()).unwrap_or_default(),
            function: function.map(|f| function_label(&f)),
            subject: subject.into(),
            span,
            evidence: String::new(),
            suggested_rewrite: SuggestedRewrite {
                prose: String::new(),
                snippet: None,
            },
            confidence: Confidence::Certain,
        }
    }
}

fn function_label(f: &Node<'_>) -> String {
    match f.str("kind") {
        Some("constructor") => "constructor".into(),
        Some("receive") => "receive".into(),
        Some("fallback") => "fallback".into(),
        _ => f.name().to_string(),
    }
}

/// Small builder helpers so rule code reads as data.
impl Finding {
    pub(crate) fn because(mut self, evidence: impl Into<String>) -> Self {
        self.evidence = evidence.into();
        self
    }

    pub(crate) fn rewrite(mut self, prose: impl Into<String>, snippet: Option<String>) -> Self {
        self.suggested_rewrite = SuggestedRewrite {
            prose: prose.into(),
            snippet,
        };
        self
    }

    pub(crate) fn heuristic_if(mut self, cond: bool) -> Self {
        if cond {
            self.confidence = Confidence::Heuristic;
        }
        self
    }
}

pub type DetectorFn = fn(&Context<'_>) -> Vec<Finding>;

pub const MEMORY_TO_CALLDATA: &str = "memory_to_calldata";
pub const FUNCTION_VISIBILITY: &str = "function_visibility";
pub const IMMUTABLE_VARIABLE_USAGE: &str = "immutable_variable_usage";
pub const CONSTANT_VARIABLE_USAGE: &str = "constant_variable_usage";
pub const REPEATED_COMPUTATION: &str = "repeated_computation";
pub const STATE_VARIABLE_REFACTORING: &str = "state_variable_refactoring";
pub const DEAD_CODE: &str = "dead_code";
pub const LOOP_INVARIANT_CODE: &str = "loop_invariant_code";
pub const UNCHECKED_ARITHMETIC: &str = "unchecked_arithmetic";
pub const CUSTOM_ERRORS: &str = "custom_errors_over_require_strings";
pub const STORAGE_PACKING: &str = "storage_packing";
pub const ARRAY_LENGTH_CACHING: &str = "array_length_caching";

/// Findings from several detectors run over one compilation.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SelectedRun {
    pub findings: BTreeMap<String, Vec<Finding>>,
    pub errors: BTreeMap<String, DetectorError>,
    pub calls: usize,
}

impl SelectedRun {
    pub fn total(&self) -> usize {
        self.findings.values().map(Vec::len).sum()
    }

    /// Patterns with at least one finding.
    pub fn hit_patterns(&self) -> BTreeSet<String> {
        self.findings.iter().filter(|(_, f)| !f.is_empty()).map(|(k, _)| k.clone()).collect()
    }
}

#[derive(Debug)]
pub struct DetectorRegistry {
    detectors: BTreeMap<String, DetectorFn>,
    calls: AtomicUsize,
}

impl Default for DetectorRegistry {
    fn default() -> Self {
        Self::builtin()
    }
}

impl Clone for DetectorRegistry {
    fn clone(&self) -> Self {
        Self {
            detectors: self.detectors.clone(),
            calls: AtomicUsize::new(self.calls()),
        }
    }
}

impl DetectorRegistry {
    pub fn empty() -> Self {
        Self {
            detectors: BTreeMap::new(),
            calls: AtomicUsize::new(0),
        }
    }

    /// All twelve built-in detectors.
    pub fn builtin() -> Self {
        let mut r = Self::empty();
        r.register(MEMORY_TO_CALLDATA, signatures::memory_to_calldata);
        r.register(FUNCTION_VISIBILITY, signatures::function_visibility);
        r.register(IMMUTABLE_VARIABLE_USAGE, storage::immutable_variable_usage);
        r.register(CONSTANT_VARIABLE_USAGE, storage::constant_variable_usage);
        r.register(REPEATED_COMPUTATION, expressions::repeated_computation);
        r.register(STATE_VARIABLE_REFACTORING, dataflow::state_variable_refactoring);
        r.register(DEAD_CODE, reachability::dead_code);
        r.register(LOOP_INVARIANT_CODE, expressions::loop_invariant_code);
        r.register(UNCHECKED_ARITHMETIC, loops::unchecked_arithmetic);
        r.register(CUSTOM_ERRORS, signatures::custom_errors_over_require_strings);
        r.register(STORAGE_PACKING, storage::storage_packing);
        r.register(ARRAY_LENGTH_CACHING, loops::array_length_caching);
        r
    }

    pub fn register(&mut self, name: &str, f: DetectorFn) {
        self.detectors.insert(name.to_string(), f);
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.detectors.keys().map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.detectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.detectors.is_empty()
    }

    pub fn contains(&self, name: &str) -> bool {
        self.detectors.contains_key(name)
    }

    /// Registered detectors with no entry in `library`.
    pub fn missing_from(&self, library: &PatternLibrary) -> Vec<String> {
        self.names().filter(|n| !library.contains(n)).map(String::from).collect()
    }

    /// Detector invocations since construction.
    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::Relaxed)
    }

    pub fn run_detector(&self, name: &str, compilation: &CompilationResult) -> Result<Vec<Finding>, DetectorError> {
        let f = self
            .detectors
            .get(name)
            .ok_or_else(|| DetectorError::Unregistered(name.to_string()))?;
        let ctx = Context::new(compilation)?;
        self.calls.fetch_add(1, Ordering::Relaxed);
        Ok(run(*f, &ctx))
    }

    pub fn run_selected<'n>(&self, names: impl IntoIterator<Item = &'n str>, compilation: &CompilationResult) -> SelectedRun {
        let mut out = SelectedRun::default();
        let ctx = Context::new(compilation);
        let names: BTreeSet<&str> = names.into_iter().collect();
        for name in names {
            out.calls += 1;
            let result = match (self.detectors.get(name), &ctx) {
                (None, _) => Err(DetectorError::Unregistered(name.to_string())),
                (Some(_), Err(e)) => Err(e.clone()),
                (Some(f), Ok(ctx)) => {
                    self.calls.fetch_add(1, Ordering::Relaxed);
                    Ok(run(*f, ctx))
                }
            };
            match result {
                Ok(findings) => {
                    out.findings.insert(name.to_string(), findings);
                }
                Err(e) => {
                    out.errors.insert(name.to_string(), e);
                }
            }
        }
        out
    }

    pub fn run_all(&self, compilation: &CompilationResult) -> SelectedRun {
        let names: Vec<String> = self.names().map(String::from).collect();
        self.run_selected(names.iter().map(String::as_str), compilation)
    }
}

fn run(f: DetectorFn, ctx: &Context<'_>) -> Vec<Finding> {
    let mut findings = f(ctx);
    findings.sort_by(|a, b| (a.span.offset, a.span.length, &a.subject).cmp(&(b.span.offset, b.span.length, &b.subject)));
    findings.dedup();
    findings
}

/// Shared AST predicates used by several rules.
pub(crate) mod util {
    use crate::frontend::ast;
    use crate::frontend::{AstIndex, Node};
    use std::collections::BTreeSet;

    /// Types whose values fit in one word and may be declared
    /// `immutable`: elementary non-dynamic types, enums, contracts and
    /// user-defined value types.
    pub fn is_value_type(var: &Node<'_>, index: &AstIndex<'_>) -> bool {
        let Some(t) = var.child("typeName") else {
            return false;
        };
        match t.node_type() {
            "ElementaryTypeName" => !matches!(t.name(), "string" | "bytes"),
            "UserDefinedTypeName" => t
                .referenced_declaration()
                .and_then(|id| index.get(id))
                .is_some_and(|d| {
                    matches!(
                        d.node_type(),
                        "EnumDefinition" | "ContractDefinition" | "UserDefinedValueTypeDefinition"
                    )
                }),
            _ => false,
        }
    }

    pub fn is_string_or_bytes(var: &Node<'_>) -> bool {
        var.child("typeName")
            .is_some_and(|t| t.is("ElementaryTypeName") && matches!(t.name(), "string" | "bytes"))
    }

    /// Function and modifier definitions reachable from `scope` through
    /// internal references, including `scope`'s own declaration targets.
    pub fn internal_callees<'a>(scope: &Node<'a>, index: &AstIndex<'a>) -> Vec<Node<'a>> {
        let mut seen = BTreeSet::new();
        let mut out = Vec::new();
        let mut stack = vec![*scope];
        while let Some(n) = stack.pop() {
            for r in n.walk() {
                let Some(id) = r.referenced_declaration() else {
                    continue;
                };
                if let Some(d) = index.get(id) {
                    if (d.is("FunctionDefinition") || d.is("ModifierDefinition")) && d.child("body").is_some() && seen.insert(id) {
                        out.push(d);
                        stack.push(d);
                    }
                }
            }
        }
        out
    }

    /// Whether `scope` or an internal callee writes declaration `id`.
    pub fn written_in_closure(scope: &Node<'_>, index: &AstIndex<'_>, id: i64) -> bool {
        ast::writes(scope).iter().any(|w| w.target == id)
            || internal_callees(scope, index)
                .iter()
                .any(|f| ast::writes(f).iter().any(|w| w.target == id))
    }

    /// Calls that leave the contract: member calls on address or contract
    /// values, including `call`, `transfer` and `send`.
    pub fn has_external_call(scope: &Node<'_>) -> bool {
        scope.walk().iter().any(|n| {
            n.is("FunctionCall")
                && n.child("expression").is_some_and(|callee| {
                    callee.is("MemberAccess")
                        && callee.child("expression").is_some_and(|base| {
                            let t = base.type_string();
                            (t.starts_with("address") || t.starts_with("contract ")) && !t.starts_with("contract super")
                        })
                })
        })
    }

    /// Local variables and parameters declared anywhere under `scope`.
    pub fn declared_under(scope: &Node<'_>) -> BTreeSet<i64> {
        scope
            .walk()
            .iter()
            .filter(|n| n.is("VariableDeclaration"))
            .map(|n| n.id())
            .collect()
    }

    /// Strips parentheses.
    pub fn unparen<'a>(mut n: Node<'a>) -> Node<'a> {
        while n.is("TupleExpression") && !n.bool("isInlineArray") {
            let comps = n.list("components");
            if comps.len() != 1 {
                break;
            }
            n = comps[0];
        }
        n
    }

    /// The nearest ancestor that is not a parenthesis.
    pub fn expression_parent<'a>(n: &Node<'_>, index: &AstIndex<'a>) -> Option<Node<'a>> {
        let mut p = index.parent(n)?;
        while p.is("TupleExpression") && p.list("components").len() == 1 {
            p = index.parent(&p)?;
        }
        Some(p)
    }
}
