//! Optional TOML configuration. Command-line flags override it.

use std::path::Path;

use gasloop_core::evm::SpecId;
use gasloop_core::frontend::CompilerSettings;
use gasloop_core::gateway::remote::RemoteConfig;
use gasloop_core::verification::{AuditPolicy, Severity, SuiteLimits, UnavailablePolicy, DEFAULT_SEED};
use serde::Deserialize;

use crate::CliError;

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub threshold: Option<f64>,
    pub max_rounds: Option<u32>,
    pub seed: Option<u64>,
    pub llm: RemoteConfig,
    pub compiler: CompilerSection,
    pub gas: GasSection,
    pub audit: AuditSection,
    pub suite: SuiteSection,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CompilerSection {
    pub optimizer: Option<bool>,
    pub optimizer_runs: Option<u32>,
    pub evm_version: Option<String>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GasSection {
    /// `embedded`, `revm` or `rpc`.
    pub backend: String,
    pub rpc_url: Option<String>,
    pub evm: String,
}

impl Default for GasSection {
    fn default() -> Self {
        Self {
            backend: "embedded".into(),
            rpc_url: None,
            evm: "shanghai".into(),
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AuditSection {
    /// `builtin` or `slither`.
    pub tool: String,
    pub severity_floor: String,
    /// `fail` or `skip`.
    pub on_unavailable: String,
    /// Slither command line; `{file}` is replaced by the source path.
    pub slither_command: Option<Vec<String>>,
}

impl Default for AuditSection {
    fn default() -> Self {
        Self {
            tool: "builtin".into(),
            severity_floor: "medium".into(),
            on_unavailable: "fail".into(),
            slither_command: None,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SuiteSection {
    pub combinations: usize,
    pub fuzz_runs: usize,
}

impl Default for SuiteSection {
    fn default() -> Self {
        let d = SuiteLimits::default();
        Self {
            combinations: d.combinations,
            fuzz_runs: d.fuzz_runs,
        }
    }
}

impl Config {
    pub fn load(path: Option<&Path>) -> Result<Self, CliError> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
        toml::from_str(&text).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))
    }

    pub fn compiler(&self) -> CompilerSettings {
        let mut s = CompilerSettings::default();
        if let Some(o) = self.compiler.optimizer {
            s.optimizer = o;
        }
        if let Some(r) = self.compiler.optimizer_runs {
            s.optimizer_runs = r;
        }
        if let Some(v) = &self.compiler.evm_version {
            s.evm_version = v.clone();
        }
        s
    }

    pub fn spec(&self) -> Result<SpecId, CliError> {
        SpecId::parse(&self.gas.evm).ok_or_else(|| CliError::Usage(format!("unknown EVM version `{}`", self.gas.evm)))
    }

    pub fn audit_policy(&self) -> Result<AuditPolicy, CliError> {
        let floor = Severity::parse(&self.audit.severity_floor)
            .ok_or_else(|| CliError::Usage(format!("unknown severity `{}`", self.audit.severity_floor)))?;
        let on_unavailable = match self.audit.on_unavailable.as_str() {
            "fail" => UnavailablePolicy::FailClosed,
            "skip" => UnavailablePolicy::SkipWithWarning,
            other => return Err(CliError::Usage(format!("on_unavailable must be `fail` or `skip`, not `{other}`"))),
        };
        Ok(AuditPolicy { floor, on_unavailable })
    }

    pub fn limits(&self) -> SuiteLimits {
        SuiteLimits {
            combinations: self.suite.combinations,
            fuzz_runs: self.suite.fuzz_runs,
            ..SuiteLimits::default()
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed.unwrap_or(DEFAULT_SEED)
    }
}
