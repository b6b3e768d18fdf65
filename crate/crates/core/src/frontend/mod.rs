//! Solidity compilation through the standard-JSON interface, plus a
//! queryable view of the exported AST.

pub mod ast;
pub mod solc;

use std::collections::HashMap;
use std::sync::{Mutex, OnceLock};

use alloy_json_abi::JsonAbi;
use alloy_primitives::{hex, Bytes};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

pub use ast::{AstIndex, Node};
pub use solc::SolcBinary;

pub const PINNED_VERSION: &str = "0.8.20";
pub const DEFAULT_FILE: &str = "Contract.sol";

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum EnvironmentError {
    #[error("compiler unavailable: {0}")]
    CompilerMissing(String),
    #[error("compiler invocation failed: {0}")]
    CompilerFailed(String),
    #[error("compiler version {found} does not match pinned {expected}")]
    VersionMismatch { expected: String, found: String },
}

/// Byte range in one input file.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct SourceSpan {
    pub file_id: u32,
    pub offset: usize,
    pub length: usize,
}

impl SourceSpan {
    /// Parses the compiler's `offset:length:file` notation.
    pub fn parse(src: &str) -> Option<Self> {
        let mut it = src.split(':');
        let offset = it.next()?.parse().ok()?;
        let length = it.next()?.parse().ok()?;
        let file_id = it.next().map_or(Some(0), |f| f.parse().ok())?;
        Some(Self { file_id, offset, length })
    }

    pub fn end(&self) -> usize {
        self.offset + self.length
    }

    pub fn contains(&self, other: &SourceSpan) -> bool {
        self.file_id == other.file_id && self.offset <= other.offset && other.end() <= self.end()
    }

    pub fn is_within(&self, source: &str) -> bool {
        self.end() <= source.len()
    }

    pub fn text<'s>(&self, source: &'s str) -> Option<&'s str> {
        source.get(self.offset..self.end())
    }

    /// 1-based line of the span start.
    pub fn line(&self, source: &str) -> usize {
        source.as_bytes()[..self.offset.min(source.len())]
            .iter()
            .filter(|b| **b == b'\n')
            .count()
            + 1
    }
}

impl std::fmt::Display for SourceSpan {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}:{}:{}", self.offset, self.length, self.file_id)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct CompilerSettings {
    pub version: String,
    pub optimizer: bool,
    pub optimizer_runs: u32,
    pub evm_version: String,
}

impl Default for CompilerSettings {
    fn default() -> Self {
        Self {
            version: PINNED_VERSION.to_string(),
            optimizer: false,
            optimizer_runs: 200,
            evm_version: "shanghai".to_string(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DiagnosticSeverity {
    Error,
    Warning,
    Info,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Diagnostic {
    pub severity: DiagnosticSeverity,
    pub kind: String,
    pub message: String,
    pub formatted: String,
    pub span: Option<SourceSpan>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ContractKind {
    Contract,
    Abstract,
    Interface,
    Library,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CompiledContract {
    pub name: String,
    pub kind: ContractKind,
    pub creation_bytecode: Bytes,
    pub runtime_bytecode: Bytes,
    pub abi: JsonAbi,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CompilationResult {
    pub source: String,
    pub file_name: String,
    pub settings: CompilerSettings,
    pub compiler_version: String,
    /// Contracts in source order.
    pub contracts: Vec<CompiledContract>,
    /// Index of the contract that gets deployed and measured.
    pub primary: Option<usize>,
    pub ast: Option<Value>,
    pub diagnostics: Vec<Diagnostic>,
}

impl CompilationResult {
    pub fn is_success(&self) -> bool {
        !self.diagnostics.iter().any(|d| d.severity == DiagnosticSeverity::Error)
            && self.primary.is_some()
            && self.ast.is_some()
    }

    pub fn errors(&self) -> impl Iterator<Item = &Diagnostic> {
        self.diagnostics.iter().filter(|d| d.severity == DiagnosticSeverity::Error)
    }

    pub fn primary_contract(&self) -> Option<&CompiledContract> {
        self.primary.map(|i| &self.contracts[i])
    }

    pub fn contract(&self, name: &str) -> Option<&CompiledContract> {
        self.contracts.iter().find(|c| c.name == name)
    }

    /// Makes `name` the deployed contract.
    pub fn select(mut self, name: &str) -> Option<Self> {
        let idx = self.contracts.iter().position(|c| c.name == name)?;
        self.primary = Some(idx);
        Some(self)
    }

    pub fn contract_name(&self) -> &str {
        self.primary_contract().map_or("", |c| c.name.as_str())
    }

    /// `Name@` plus the first 12 hex digits of the source's SHA-256.
    pub fn contract_id(&self) -> String {
        contract_id(self.contract_name(), &self.source)
    }

    pub fn creation_bytecode(&self) -> &[u8] {
        self.primary_contract().map_or(&[], |c| &c.creation_bytecode)
    }

    pub fn runtime_bytecode(&self) -> &[u8] {
        self.primary_contract().map_or(&[], |c| &c.runtime_bytecode)
    }

    pub fn abi(&self) -> JsonAbi {
        self.primary_contract().map(|c| c.abi.clone()).unwrap_or_default()
    }

    pub fn ast_root(&self) -> Option<Node<'_>> {
        self.ast.as_ref().and_then(Node::new)
    }

    pub fn index(&self) -> Option<AstIndex<'_>> {
        self.ast_root().map(AstIndex::new)
    }

    /// Human-readable error summary used when feeding diagnostics back to a
    /// refactoring prompt.
    pub fn error_report(&self) -> String {
        self.errors().map(|d| d.formatted.trim().to_string()).collect::<Vec<_>>().join("\n")
    }
}

#[derive(Debug, Clone)]
pub struct Compiler {
    binary: SolcBinary,
    version: String,
}

impl Compiler {
    /// Discovers a compiler and checks it matches the pinned version.
    pub fn discover(expected_version: &str) -> Result<Self, EnvironmentError> {
        Self::with_binary(SolcBinary::discover()?, expected_version)
    }

    pub fn with_binary(binary: SolcBinary, expected_version: &str) -> Result<Self, EnvironmentError> {
        let version = cached_version(&binary)?;
        if version != expected_version {
            return Err(EnvironmentError::VersionMismatch {
                expected: expected_version.to_string(),
                found: version,
            });
        }
        Ok(Self { binary, version })
    }

    /// Process-wide compiler for the pinned version.
    pub fn shared() -> Result<&'static Compiler, EnvironmentError> {
        static SHARED: OnceLock<Result<Compiler, EnvironmentError>> = OnceLock::new();
        SHARED
            .get_or_init(|| Compiler::discover(PINNED_VERSION))
            .as_ref()
            .map_err(Clone::clone)
    }

    pub fn version(&self) -> &str {
        &self.version
    }

    pub fn binary(&self) -> &SolcBinary {
        &self.binary
    }

    pub fn compile(&self, source: &str, settings: &CompilerSettings) -> Result<CompilationResult, EnvironmentError> {
        let key = (self.binary.clone(), source.to_string(), settings.clone());
        if let Some(hit) = cache().lock().expect("compile cache").get(&key) {
            return Ok(hit.clone());
        }
        let output = self.compile_raw(source, settings)?;
        let result = parse_output(DEFAULT_FILE, source, settings, &self.version, &output)?;
        cache().lock().expect("compile cache").insert(key, result.clone());
        Ok(result)
    }

    /// The compiler's standard-JSON output for `source`, unparsed.
    pub fn compile_raw(&self, source: &str, settings: &CompilerSettings) -> Result<Value, EnvironmentError> {
        if settings.version != self.version {
            return Err(EnvironmentError::VersionMismatch {
                expected: settings.version.clone(),
                found: self.version.clone(),
            });
        }
        let input = standard_json_input(DEFAULT_FILE, source, settings);
        let raw = self.binary.run(&input.to_string())?;
        serde_json::from_str(&raw).map_err(|e| EnvironmentError::CompilerFailed(format!("unparsable compiler output: {e}")))
    }
}

/// Rebuilds a compilation from previously captured standard-JSON output,
/// for hosts that cannot run the compiler.
pub fn from_standard_json(source: &str, settings: &CompilerSettings, output: &Value) -> Result<CompilationResult, EnvironmentError> {
    parse_output(DEFAULT_FILE, source, settings, &settings.version, output)
}

type CacheKey = (SolcBinary, String, CompilerSettings);

fn cache() -> &'static Mutex<HashMap<CacheKey, CompilationResult>> {
    static CACHE: OnceLock<Mutex<HashMap<CacheKey, CompilationResult>>> = OnceLock::new();
    CACHE.get_or_init(|| Mutex::new(HashMap::new()))
}

fn cached_version(binary: &SolcBinary) -> Result<String, EnvironmentError> {
    static VERSIONS: OnceLock<Mutex<HashMap<SolcBinary, String>>> = OnceLock::new();
    let map = VERSIONS.get_or_init(|| Mutex::new(HashMap::new()));
    if let Some(v) = map.lock().expect("version cache").get(binary) {
        return Ok(v.clone());
    }
    let v = binary.version()?;
    map.lock().expect("version cache").insert(binary.clone(), v.clone());
    Ok(v)
}

/// Compiles with the shared pinned compiler.
pub fn compile(source: &str, settings: &CompilerSettings) -> Result<CompilationResult, EnvironmentError> {
    Compiler::shared()?.compile(source, settings)
}

pub fn standard_json_input(file: &str, source: &str, settings: &CompilerSettings) -> Value {
    json!({
        "language": "Solidity",
        "sources": { file: { "content": source } },
        "settings": {
            "optimizer": { "enabled": settings.optimizer, "runs": settings.optimizer_runs },
            "evmVersion": settings.evm_version,
            "outputSelection": {
                "*": {
                    "*": ["abi", "evm.bytecode.object", "evm.deployedBytecode.object"],
                    "": ["ast"]
                }
            }
        }
    })
}

fn parse_output(
    file: &str,
    source: &str,
    settings: &CompilerSettings,
    version: &str,
    output: &Value,
) -> Result<CompilationResult, EnvironmentError> {
    let mut diagnostics = Vec::new();
    for e in output.get("errors").and_then(Value::as_array).into_iter().flatten() {
        let severity = match e.get("severity").and_then(Value::as_str) {
            Some("error") => DiagnosticSeverity::Error,
            Some("warning") => DiagnosticSeverity::Warning,
            _ => DiagnosticSeverity::Info,
        };
        let span = e.get("sourceLocation").and_then(|loc| {
            Some(SourceSpan {
                file_id: 0,
                offset: loc.get("start")?.as_i64()?.max(0) as usize,
                length: (loc.get("end")?.as_i64()? - loc.get("start")?.as_i64()?).max(0) as usize,
            })
        });
        let kind = e.get("type").and_then(Value::as_str).unwrap_or("Error").to_string();
        if kind == "InternalCompilerError" && severity == DiagnosticSeverity::Error && span.is_none() {
            let message = e.get("message").and_then(Value::as_str).unwrap_or_default();
            if output.get("sources").is_none() {
                return Err(EnvironmentError::CompilerFailed(message.to_string()));
            }
        }
        diagnostics.push(Diagnostic {
            severity,
            kind,
            message: e.get("message").and_then(Value::as_str).unwrap_or_default().to_string(),
            formatted: e
                .get("formattedMessage")
                .and_then(Value::as_str)
                .unwrap_or_default()
                .to_string(),
            span,
        });
    }

    let ast = output
        .get("sources")
        .and_then(|s| s.get(file))
        .and_then(|s| s.get("ast"))
        .cloned();

    let mut contracts = Vec::new();
    if let (Some(ast), Some(compiled)) = (&ast, output.get("contracts").and_then(|c| c.get(file))) {
        let root = Node::new(ast).ok_or_else(|| EnvironmentError::CompilerFailed("AST root missing nodeType".into()))?;
        for def in root.list("nodes").into_iter().filter(|n| n.is("ContractDefinition")) {
            let name = def.name().to_string();
            let Some(entry) = compiled.get(&name) else { continue };
            let kind = match def.str("contractKind") {
                Some("interface") => ContractKind::Interface,
                Some("library") => ContractKind::Library,
                _ if def.bool("abstract") => ContractKind::Abstract,
                _ => ContractKind::Contract,
            };
            let bytes = |path: &[&str]| -> Bytes {
                let mut v = entry;
                for p in path {
                    v = &v[*p];
                }
                hex::decode(v.as_str().unwrap_or_default()).map(Bytes::from).unwrap_or_default()
            };
            let abi = serde_json::from_value(entry.get("abi").cloned().unwrap_or(json!([])))
                .map_err(|e| EnvironmentError::CompilerFailed(format!("bad ABI for {name}: {e}")))?;
            contracts.push(CompiledContract {
                name,
                kind,
                creation_bytecode: bytes(&["evm", "bytecode", "object"]),
                runtime_bytecode: bytes(&["evm", "deployedBytecode", "object"]),
                abi,
            });
        }
    }
    let primary = contracts
        .iter()
        .rposition(|c| c.kind == ContractKind::Contract && !c.creation_bytecode.is_empty());
    Ok(CompilationResult {
        source: source.to_string(),
        file_name: file.to_string(),
        settings: settings.clone(),
        compiler_version: version.to_string(),
        contracts,
        primary,
        ast,
        diagnostics,
    })
}

pub fn contract_id(name: &str, source: &str) -> String {
    use sha2::{Digest, Sha256};
    let digest = Sha256::digest(source.as_bytes());
    let hex: String = digest.iter().take(6).map(|b| format!("{b:02x}")).collect();
    format!("{name}@{hex}")
}

/// Structural AST queries.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Selector {
    StateVariables,
    Functions,
    Loops,
    ParameterLists,
    /// Left-hand sides of assignments and targets of `++`, `--`, `delete`.
    AssignmentTargets,
    /// Functions and modifiers containing a write to the named state variable.
    FunctionsWriting(String),
    NodeType(String),
}

/// Nodes matching `selector`, in document order.
pub fn query_ast<'a>(result: &'a CompilationResult, selector: &Selector) -> Vec<Node<'a>> {
    let Some(root) = result.ast_root() else {
        return Vec::new();
    };
    let all = root.walk();
    let mut out: Vec<Node<'a>> = match selector {
        Selector::StateVariables => all
            .into_iter()
            .filter(|n| n.is("VariableDeclaration") && n.bool("stateVariable"))
            .collect(),
        Selector::Functions => all.into_iter().filter(|n| n.is("FunctionDefinition")).collect(),
        Selector::Loops => all.into_iter().filter(ast::is_loop).collect(),
        Selector::ParameterLists => all.into_iter().filter(|n| n.is("ParameterList")).collect(),
        Selector::AssignmentTargets => all
            .into_iter()
            .filter_map(|n| match n.node_type() {
                "Assignment" => n.child("leftHandSide"),
                "UnaryOperation" if matches!(n.str("operator"), Some("++" | "--" | "delete")) => n.child("subExpression"),
                _ => None,
            })
            .collect(),
        Selector::FunctionsWriting(name) => {
            let vars: Vec<i64> = all
                .iter()
                .filter(|n| n.is("VariableDeclaration") && n.bool("stateVariable") && n.name() == name)
                .map(|n| n.id())
                .collect();
            all.into_iter()
                .filter(|n| n.is("FunctionDefinition") || n.is("ModifierDefinition"))
                .filter(|f| ast::writes(f).iter().any(|w| vars.contains(&w.target)))
                .collect()
        }
        Selector::NodeType(t) => all.into_iter().filter(|n| n.is(t)).collect(),
    };
    out.sort_by_key(|n| (n.src().offset, std::cmp::Reverse(n.src().length)));
    out
}
