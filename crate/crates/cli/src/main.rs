mod config;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use alloy_primitives::hex;
use clap::{Args, Parser, Subcommand, ValueEnum};
use gasloop_core::clock::{Clock, StepClock, SystemClock};
use gasloop_core::detectors::DetectorRegistry;
use gasloop_core::frontend::{compile, CompilationResult, CompilerSettings};
use gasloop_core::gas::{cross_validate, measure_deployment, CrossValidation, EmbeddedBackend, GasBackend, RevmBackend};
use gasloop_core::gas::rpc::RpcBackend;
use gasloop_core::gateway::remote::RemoteProvider;
use gasloop_core::gateway::{Gateway, ScriptedChat};
use gasloop_core::library::{load_library, Blacklist, PatternLibrary, StateDir, VerifiedPool};
use gasloop_core::orchestrator::{render_report, LoopConfig, OptimizeError, Orchestrator, ReportFormat};
use gasloop_core::verification::consistency::choose_constructor_args;
use gasloop_core::verification::{build_suite, AuditAdapter, BuiltinChecker, SlitherAdapter, SuiteLimits, Verifier};

use config::Config;

#[derive(Debug)]
pub enum CliError {
    /// Bad flags, unreadable input files, invalid configuration.
    Usage(String),
    /// Compiler, LLM provider, gas backend or state directory failures.
    Environment(String),
    /// The input contract does not compile.
    NotCompiled(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Environment(_) => 2,
            CliError::NotCompiled(_) => 3,
        }
    }

    fn message(&self) -> &str {
        match self {
            CliError::Usage(m) | CliError::Environment(m) | CliError::NotCompiled(m) => m,
        }
    }
}

impl From<OptimizeError> for CliError {
    fn from(e: OptimizeError) -> Self {
        match e {
            OptimizeError::Config(m) => CliError::Usage(m),
            OptimizeError::DoesNotCompile(m) => CliError::NotCompiled(m),
            OptimizeError::Environment(m) => CliError::Environment(m),
        }
    }
}

fn env_err(e: impl std::fmt::Display) -> CliError {
    CliError::Environment(e.to_string())
}

#[derive(Parser, Debug)]
#[command(name = "gasloop", version, about = "Find and apply deployment-gas optimizations in Solidity contracts")]
struct Cli {
    /// TOML configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run the full optimization loop on a contract.
    Optimize(OptimizeArgs),
    /// Run gas-waste detectors only.
    Detect(DetectArgs),
    /// Measure deployment gas.
    Gas(GasArgs),
    /// Inspect the pattern library.
    Library {
        #[command(subcommand)]
        action: LibraryAction,
        /// Pattern directory; the built-in library when omitted.
        #[arg(long, global = true)]
        library: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Format {
    Human,
    Json,
}

#[derive(Args, Debug)]
struct OptimizeArgs {
    file: PathBuf,
    /// Similarity threshold for code retrieval, in [0, 1].
    #[arg(long)]
    threshold: Option<f64>,
    #[arg(long)]
    max_rounds: Option<u32>,
    /// Replay LLM replies from a script or a recorded transcript.
    #[arg(long, value_name = "TRANSCRIPT")]
    mock: Option<PathBuf>,
    /// Pattern directory; the built-in library when omitted.
    #[arg(long)]
    library: Option<PathBuf>,
    /// State directory for the blacklist, pool and transcripts.
    #[arg(long, default_value = ".gasloop")]
    state: PathBuf,
    /// Write the machine-readable report here.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Skip the new-pattern stages.
    #[arg(long)]
    no_innovator: bool,
    /// Skip the existing-pattern stage.
    #[arg(long)]
    no_seeker: bool,
    #[arg(long, value_enum, default_value = "human")]
    format: Format,
}

#[derive(Args, Debug)]
struct DetectArgs {
    file: PathBuf,
    /// Comma-separated pattern names.
    #[arg(long, value_delimiter = ',', conflicts_with = "all")]
    patterns: Vec<String>,
    /// Run every registered detector (the default).
    #[arg(long)]
    all: bool,
    #[arg(long, value_enum, default_value = "json")]
    format: Format,
}

#[derive(Args, Debug)]
struct GasArgs {
    file: PathBuf,
    /// Backends to measure on; more than one cross-validates.
    #[arg(long, value_delimiter = ',')]
    backend: Vec<String>,
    #[arg(long)]
    rpc_url: Option<String>,
    /// Contract to measure when the file defines several.
    #[arg(long)]
    contract: Option<String>,
    /// ABI-encoded constructor arguments as hex; synthesized when omitted.
    #[arg(long)]
    args: Option<String>,
    #[arg(long, value_enum, default_value = "human")]
    format: Format,
}

#[derive(Subcommand, Debug)]
enum LibraryAction {
    /// List pattern names and tags.
    List,
    /// Validate every pattern document.
    Validate,
    /// Print one pattern.
    Show { name: String },
}

fn read_source(path: &Path) -> Result<String, CliError> {
    std::fs::read_to_string(path).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))
}

fn build(source: &str, settings: &CompilerSettings, contract: Option<&str>) -> Result<CompilationResult, CliError> {
    let r = compile(source, settings).map_err(env_err)?;
    if !r.is_success() {
        return Err(CliError::NotCompiled(r.error_report()));
    }
    match contract {
        None => Ok(r),
        Some(name) => r.select(name).ok_or_else(|| CliError::Usage(format!("no contract named `{name}` in the input"))),
    }
}

fn load_patterns(dir: Option<&Path>) -> Result<PatternLibrary, CliError> {
    let Some(dir) = dir else {
        return Ok(PatternLibrary::seed());
    };
    let loaded = load_library(dir).map_err(|e| CliError::Usage(e.to_string()))?;
    for d in &loaded.diagnostics {
        eprintln!("warning: {d}");
    }
    if loaded.library.is_empty() {
        return Err(CliError::Usage(format!("{}: no valid pattern documents", dir.display())));
    }
    Ok(loaded.library)
}

fn gas_backend(name: &str, rpc_url: Option<&str>, cfg: &Config) -> Result<Box<dyn GasBackend>, CliError> {
    let spec = cfg.spec()?;
    match name {
        "embedded" => Ok(Box::new(EmbeddedBackend::new(spec))),
        "revm" => Ok(Box::new(RevmBackend::new(spec))),
        "rpc" => {
            let url = rpc_url
                .or(cfg.gas.rpc_url.as_deref())
                .ok_or_else(|| CliError::Usage("the rpc backend needs --rpc-url or gas.rpc_url".into()))?;
            Ok(Box::new(RpcBackend::new(url, spec)))
        }
        other => Err(CliError::Usage(format!("unknown gas backend `{other}` (expected embedded, revm or rpc)"))),
    }
}

fn audit_adapter(cfg: &Config) -> Result<Box<dyn AuditAdapter>, CliError> {
    match cfg.audit.tool.as_str() {
        "builtin" => Ok(Box::new(BuiltinChecker)),
        "slither" => {
            let mut s = SlitherAdapter::default();
            if let Some(cmd) = &cfg.audit.slither_command {
                s.command = cmd.clone();
            }
            Ok(Box::new(s))
        }
        other => Err(CliError::Usage(format!("unknown audit tool `{other}` (expected builtin or slither)"))),
    }
}

fn write_file(path: &Path, text: &str) -> Result<(), CliError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| env_err(format!("{}: {e}", dir.display())))?;
    }
    std::fs::write(path, text).map_err(|e| env_err(format!("{}: {e}", path.display())))
}

fn optimize(cfg: &Config, a: &OptimizeArgs) -> Result<(), CliError> {
    if a.no_seeker && a.no_innovator {
        return Err(CliError::Usage("--no-seeker and --no-innovator cannot be combined".into()));
    }
    let loop_config = LoopConfig {
        threshold: a.threshold.or(cfg.threshold).unwrap_or(LoopConfig::default().threshold),
        max_rounds: a.max_rounds.or(cfg.max_rounds).unwrap_or(LoopConfig::default().max_rounds),
        seeker: !a.no_seeker,
        innovator: !a.no_innovator,
        compiler: cfg.compiler(),
    };
    loop_config.validate()?;
    let source = read_source(&a.file)?;
    let library = load_patterns(a.library.as_deref())?;
    let verifier = Verifier {
        adapter: audit_adapter(cfg)?,
        policy: cfg.audit_policy()?,
        evm: EmbeddedBackend::new(cfg.spec()?),
        gas: gas_backend(&cfg.gas.backend, None, cfg)?,
        limits: cfg.limits(),
        seed: cfg.seed(),
    };

    let (gateway, clock): (Gateway, Box<dyn Clock>) = match &a.mock {
        Some(path) => {
            let text = read_source(path)?;
            let chat = ScriptedChat::from_json(&text).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
            (Gateway::mock(chat), Box::new(StepClock::new(0)))
        }
        None => {
            let chat = RemoteProvider::from_env(cfg.llm.clone()).map_err(env_err)?;
            let embedder = chat.clone();
            let gw = Gateway::new(Box::new(chat), Box::new(embedder)).with_model(cfg.llm.chat_model.clone());
            (gw, Box::new(SystemClock))
        }
    };
    let stem = a.file.file_stem().map_or("contract".into(), |s| s.to_string_lossy().into_owned());
    let run_id = format!("{stem}-{}", clock.now());
    let gateway = gateway.with_run_id(run_id.clone());

    let state = StateDir::new(&a.state);
    let mut blacklist = Blacklist::open(state.blacklist_path()).map_err(env_err)?;
    let mut pool = VerifiedPool::open(state.pool_path()).map_err(env_err)?;
    let registry = DetectorRegistry::builtin();
    let orchestrator = Orchestrator {
        library: &library,
        registry: &registry,
        gateway: &gateway,
        verifier: &verifier,
        clock: clock.as_ref(),
        config: loop_config,
    };
    let result = orchestrator.optimize(&source, &mut blacklist, &mut pool);

    let transcript = gateway.transcript();
    if !transcript.entries.is_empty() {
        let path = state.transcripts_dir().join(format!("{run_id}.json"));
        write_file(&path, &serde_json::to_string_pretty(&transcript).expect("transcript serializes"))?;
        eprintln!("transcript: {}", path.display());
    }
    let report = result?;
    if let Some(out) = &a.out {
        write_file(out, &render_report(&report, ReportFormat::Machine))?;
    }
    let format = match a.format {
        Format::Human => ReportFormat::Human,
        Format::Json => ReportFormat::Machine,
    };
    print!("{}", render_report(&report, format));
    Ok(())
}

fn detect(cfg: &Config, a: &DetectArgs) -> Result<(), CliError> {
    let source = read_source(&a.file)?;
    let r = build(&source, &cfg.compiler(), None)?;
    let registry = DetectorRegistry::builtin();
    let unknown: Vec<&str> = a.patterns.iter().map(String::as_str).filter(|p| !registry.contains(p)).collect();
    if !unknown.is_empty() {
        return Err(CliError::Usage(format!("no detector for pattern(s): {}", unknown.join(", "))));
    }
    let run = if a.patterns.is_empty() {
        registry.run_all(&r)
    } else {
        registry.run_selected(a.patterns.iter().map(String::as_str), &r)
    };
    if let Some((name, e)) = run.errors.iter().next() {
        return Err(env_err(format!("detector {name} failed: {e}")));
    }
    match a.format {
        Format::Json => {
            let doc = serde_json::json!({
                "contract": r.contract_name(),
                "contractId": r.contract_id(),
                "detectorsRun": run.calls,
                "findings": run.findings.values().flatten().map(|f| {
                    let mut v = serde_json::to_value(f).expect("finding serializes");
                    v["location"] = f.location(&source).into();
                    v
                }).collect::<Vec<_>>(),
            });
            println!("{}", serde_json::to_string_pretty(&doc).expect("json"));
        }
        Format::Human => {
            println!("{}: {} finding(s) from {} detector(s)", r.contract_name(), run.total(), run.calls);
            for f in run.findings.values().flatten() {
                println!("  {} at {}: {}", f.pattern_name, f.location(&source), f.evidence);
                println!("    fix: {}", f.suggested_rewrite.prose);
            }
        }
    }
    Ok(())
}

fn gas(cfg: &Config, a: &GasArgs) -> Result<(), CliError> {
    let source = read_source(&a.file)?;
    let r = build(&source, &cfg.compiler(), a.contract.as_deref())?;
    let names = if a.backend.is_empty() { vec![cfg.gas.backend.clone()] } else { a.backend.clone() };
    let backends = names
        .iter()
        .map(|n| gas_backend(n, a.rpc_url.as_deref(), cfg))
        .collect::<Result<Vec<_>, _>>()?;
    let args = match &a.args {
        Some(h) => hex::decode(h.trim()).map_err(|e| CliError::Usage(format!("--args: {e}")))?,
        None => {
            let suite = build_suite(&r.abi(), SuiteLimits::default(), cfg.seed());
            choose_constructor_args(&suite, &r, &EmbeddedBackend::new(cfg.spec()?)).map_err(env_err)?.to_vec()
        }
    };
    if backends.len() == 1 {
        let m = measure_deployment(r.creation_bytecode(), &args, backends[0].as_ref()).map_err(env_err)?;
        match a.format {
            Format::Json => println!("{}", serde_json::to_string_pretty(&m).expect("json")),
            Format::Human => println!("{}: {} gas ({}, {})", r.contract_name(), m.gas, m.backend, m.evm_spec.name()),
        }
        return Ok(());
    }
    let refs: Vec<&dyn GasBackend> = backends.iter().map(|b| b.as_ref()).collect();
    let cv = cross_validate(r.creation_bytecode(), &args, &refs).map_err(env_err)?;
    match a.format {
        Format::Json => println!("{}", serde_json::to_string_pretty(&cv).expect("json")),
        Format::Human => match &cv {
            CrossValidation::Agreed { measurement, backends, warnings } => {
                println!("{}: {} gas (agreed by {})", r.contract_name(), measurement.gas, backends.join(", "));
                for w in warnings {
                    eprintln!("warning: {w}");
                }
            }
            CrossValidation::Discrepancy { discrepancy, .. } => {
                println!("{}: backends disagree", r.contract_name());
                for v in &discrepancy.values {
                    match (&v.gas, &v.error) {
                        (Some(g), _) => println!("  {}: {g}", v.backend),
                        (None, e) => println!("  {}: error {}", v.backend, e.as_deref().unwrap_or("")),
                    }
                }
            }
        },
    }
    if matches!(cv, CrossValidation::Discrepancy { .. }) {
        return Err(CliError::Environment("gas backends disagree".into()));
    }
    Ok(())
}

fn library(dir: Option<&Path>, action: &LibraryAction) -> Result<(), CliError> {
    match action {
        LibraryAction::List => {
            let lib = load_patterns(dir)?;
            for e in lib.iter() {
                println!("{}\t{}", e.name, e.tags.join(", "));
            }
        }
        LibraryAction::Validate => {
            let (count, diagnostics) = match dir {
                None => (PatternLibrary::seed().len(), Vec::new()),
                Some(d) => {
                    let loaded = load_library(d).map_err(|e| CliError::Usage(e.to_string()))?;
                    (loaded.library.len(), loaded.diagnostics)
                }
            };
            for d in &diagnostics {
                println!("invalid: {d}");
            }
            println!("{count} valid pattern(s), {} invalid document(s)", diagnostics.len());
            if !diagnostics.is_empty() {
                return Err(CliError::Usage("pattern library has invalid documents".into()));
            }
        }
        LibraryAction::Show { name } => {
            let lib = load_patterns(dir)?;
            let entry = lib.get(name).ok_or_else(|| CliError::Usage(format!("no pattern named `{name}`")))?;
            println!("{}", entry.to_json_pretty());
        }
    }
    Ok(())
}

fn run(cli: &Cli) -> Result<(), CliError> {
    let cfg = Config::load(cli.config.as_deref())?;
    match &cli.command {
        Command::Optimize(a) => optimize(&cfg, a),
        Command::Detect(a) => detect(&cfg, a),
        Command::Gas(a) => gas(&cfg, a),
        Command::Library { action, library: dir } => library(dir.as_deref(), action),
    }
}

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(tracing_subscriber::EnvFilter::from_env("GASLOOP_LOG"))
        .with_writer(std::io::stderr)
        .init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message());
            ExitCode::from(e.code())
        }
    }
}
