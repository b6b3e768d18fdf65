//! Acceptance suite. Runs every criterion, prints one line per criterion
//! and exits nonzero if any fails.

mod common;

use std::collections::BTreeMap;
use std::panic::{self, AssertUnwindSafe};
use std::path::Path;
use std::time::{Duration, Instant};

use common::*;
use gasloop_core::clock::StepClock;
use gasloop_core::detectors::DetectorRegistry;
use gasloop_core::evm::SpecId;
use gasloop_core::frontend::{compile, CompilationResult, CompilerSettings};
use gasloop_core::gas::{measure_deployment, EmbeddedBackend, GasBackend, RevmBackend};
use gasloop_core::gateway::{AgentRole, Gateway, MockScript, ScriptedChat};
use gasloop_core::library::{load_library, validate_entry, Blacklist, PatternLibrary, VerifiedPool, SEED_FILES};
use gasloop_core::orchestrator::{render_report, FinalReport, LoopConfig, Orchestrator, Outcome, ReportFormat, StageStatus, REPORT_SCHEMA};
use gasloop_core::seeker::Seeker;
use gasloop_core::verification::consistency::choose_constructor_args;
use gasloop_core::verification::{build_suite, Gate, RefactorCandidate, Stage, SuiteLimits, Verifier, DEFAULT_SEED};
use proptest::test_runner::{Config as PropConfig, TestCaseError, TestRunner};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::Value;

type Check = Result<String, String>;
type Criterion = (&'static str, fn() -> Check);

macro_rules! ensure {
    ($cond:expr, $($msg:tt)+) => {
        if !$cond {
            return Err(format!($($msg)+));
        }
    };
}

fn build(source: &str) -> Result<CompilationResult, String> {
    let r = compile(source, &CompilerSettings::default()).map_err(|e| e.to_string())?;
    if !r.is_success() {
        return Err(format!("does not compile:\n{}", r.error_report()));
    }
    Ok(r)
}

fn candidate(base: &str, source: &str) -> RefactorCandidate {
    RefactorCandidate {
        stage: Stage::NewPattern,
        base_source: base.to_string(),
        candidate_source: source.to_string(),
        applied_patterns: Vec::new(),
        llm_transcript: Vec::new(),
        repaired: false,
    }
}

/// Deployment arguments the verifier would pick for `r`.
fn deploy_args(r: &CompilationResult) -> Result<Vec<u8>, String> {
    let v = Verifier::default();
    let suite = build_suite(&r.abi(), v.limits, DEFAULT_SEED);
    choose_constructor_args(&suite, r, &v.evm).map(|b| b.to_vec()).map_err(|e| e.to_string())
}

fn corpus() -> Vec<(String, String)> {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/corpus");
    let mut files: Vec<_> = std::fs::read_dir(dir).unwrap().map(|e| e.unwrap().path()).collect();
    files.sort();
    files
        .into_iter()
        .map(|p| (p.file_stem().unwrap().to_string_lossy().into_owned(), std::fs::read_to_string(&p).unwrap()))
        .collect()
}

/// A contract of six literal-initialised state variables. The first `k`
/// are declared constant; every extra constant lowers deployment gas.
fn levels(k: usize) -> String {
    let mut s = String::from("// SPDX-License-Identifier: MIT\npragma solidity ^0.8.20;\n\ncontract Levels {\n");
    for n in 1..=6 {
        let kw = if n <= k { "constant " } else { "" };
        s.push_str(&format!("    uint256 public {kw}a{n} = {};\n", 10 + n));
    }
    s.push_str("\n    function total() external view returns (uint256) {\n        return a1 + a2 + a3 + a4 + a5 + a6;\n    }\n}\n");
    s
}

fn fold_proposal(n: usize) -> String {
    proposal(
        &format!("fold_level_a{n}"),
        "A state variable initialised from a literal is never written again.",
        "storage, constant",
        &[&format!("uint256 public a{n} = {};", 10 + n)],
        "Declaring it constant removes its storage slot and the constructor store.",
    )
}

fn c1_detector_corpus() -> Check {
    let start = Instant::now();
    let reg = DetectorRegistry::builtin();
    let lib = PatternLibrary::seed();
    let negatives = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/negatives");
    let mut checked = 0;
    for entry in lib.iter() {
        ensure!(reg.contains(&entry.name), "{} has no detector", entry.name);
        for ex in &entry.examples {
            let before = reg.run_detector(&entry.name, &build(&ex.code_before)?).map_err(|e| e.to_string())?;
            let after = reg.run_detector(&entry.name, &build(&ex.code_after)?).map_err(|e| e.to_string())?;
            ensure!(!before.is_empty(), "{}/{}: no finding on codeBefore", entry.name, ex.id);
            ensure!(after.is_empty(), "{}/{}: {} findings on codeAfter", entry.name, ex.id, after.len());
            checked += 2;
        }
        for i in 1..=2 {
            let src = std::fs::read_to_string(negatives.join(format!("{}_{i}.sol", entry.name))).map_err(|e| e.to_string())?;
            let found = reg.run_detector(&entry.name, &build(&src)?).map_err(|e| e.to_string())?;
            ensure!(found.is_empty(), "{}_{i}: {} findings on a negative", entry.name, found.len());
            checked += 1;
        }
    }
    ensure!(reg.len() == 12 && lib.len() == 12, "expected 12 detectors, got {}", reg.len());
    let elapsed = start.elapsed();
    ensure!(elapsed < Duration::from_secs(60), "took {elapsed:.1?}");
    Ok(format!("{checked} fixtures clean or flagged as expected in {elapsed:.1?}"))
}

fn c2_gas_oracle() -> Check {
    let embedded = EmbeddedBackend::new(SpecId::Shanghai);
    let revm = RevmBackend::new(embedded.spec());
    let mut seen = Vec::new();
    for name in ["listing1_bad.sol", "listing1_good.sol", "listing2_bad.sol", "listing2_good.sol", "treasury.sol"] {
        let r = build(&fixture(name))?;
        let args = deploy_args(&r)?;
        let ours = measure_deployment(r.creation_bytecode(), &args, &embedded).map_err(|e| e.to_string())?;
        let reference = measure_deployment(r.creation_bytecode(), &args, &revm).map_err(|e| e.to_string())?;
        ensure!(ours.gas == reference.gas, "{name}: embedded {} vs reference {}", ours.gas, reference.gas);
        for _ in 0..10 {
            let again = measure_deployment(r.creation_bytecode(), &args, &embedded).map_err(|e| e.to_string())?;
            ensure!(again == ours, "{name}: repeated measurement differs");
        }
        seen.push(format!("{}={}", name.trim_end_matches(".sol"), ours.gas));
    }
    Ok(format!("exact match, 10 repeats identical: {}", seen.join(" ")))
}

fn c3_listing_direction() -> Check {
    let embedded = EmbeddedBackend::new(SpecId::Shanghai);
    let mut out = Vec::new();
    for listing in ["listing1", "listing2"] {
        let bad = build(&fixture(&format!("{listing}_bad.sol")))?;
        let good = build(&fixture(&format!("{listing}_good.sol")))?;
        let args = deploy_args(&bad)?;
        if listing == "listing2" {
            ensure!(args.iter().any(|b| *b != 0), "listing2 deployed with all-zero arguments");
        }
        let b = measure_deployment(bad.creation_bytecode(), &args, &embedded).map_err(|e| e.to_string())?.gas;
        let g = measure_deployment(good.creation_bytecode(), &args, &embedded).map_err(|e| e.to_string())?.gas;
        ensure!(g < b, "{listing}: good {g} is not below bad {b}");
        out.push(format!("{listing} saves {} ({b} -> {g})", b - g));
    }
    Ok(out.join(", "))
}

fn c4_strict_gate() -> Check {
    // Level k sources plus a semantic mutation and an audit violation of each.
    let mut sources = Vec::new();
    for k in 0..=6 {
        let base = levels(k);
        sources.push((format!("level{k}"), base.clone()));
        sources.push((format!("level{k}+value"), base.replace("a3 = 13;", "a3 = 99;")));
        sources.push((
            format!("level{k}+delegatecall"),
            base.replace(
                "    function total()",
                "    function run(address t, bytes calldata d) external {\n        (bool ok, ) = t.delegatecall(d);\n        require(ok);\n    }\n\n    function total()",
            ),
        ));
    }
    let compiled: Vec<CompilationResult> = sources.iter().map(|(_, s)| build(s)).collect::<Result<_, _>>()?;
    let verifier = Verifier {
        limits: SuiteLimits { fuzz_runs: 10, ..SuiteLimits::default() },
        ..Verifier::default()
    };
    let n = sources.len();
    let mut runner = TestRunner::new(PropConfig { cases: 64, failure_persistence: None, ..PropConfig::default() });
    let mut accepted = 0;
    let mut identical = 0;
    let result = runner.run(&(0..n, 0..n), |(i, j)| {
        // Pure levels only: plain level candidates are consistent and
        // cheaper exactly when they fold more variables.
        let (bi, bj) = (i / 3, j / 3);
        let base_plain = i % 3 == 0;
        let v = verifier
            .verify(&compiled[i], candidate(&sources[i].1, &sources[j].1), &compiled[j])
            .map_err(|e| TestCaseError::fail(e.to_string()))?;
        let consistent = v.consistency.as_ref().is_some_and(|c| c.passed);
        let cheaper = matches!((&v.gas_before, &v.gas_after), (Some(x), Some(y)) if y.gas < x.gas);
        if v.accepted != (v.audit.passed && consistent && cheaper) {
            return Err(TestCaseError::fail(format!("{} -> {}: accepted={} disagrees with gates", sources[i].0, sources[j].0, v.accepted)));
        }
        if i == j && v.accepted {
            return Err(TestCaseError::fail(format!("{} accepted against itself", sources[i].0)));
        }
        if base_plain && j % 3 == 0 && v.accepted != (bj > bi) {
            return Err(TestCaseError::fail(format!("{} -> {}: accepted={}", sources[i].0, sources[j].0, v.accepted)));
        }
        if j % 3 == 2 && i % 3 != 2 && v.rejected_at != Some(Gate::Audit) {
            return Err(TestCaseError::fail(format!("{} -> {}: expected audit rejection, got {:?}", sources[i].0, sources[j].0, v.rejected_at)));
        }
        Ok(())
    });
    result.map_err(|e| e.to_string())?;
    // Every base against itself, outside the sampled pairs.
    for i in 0..n {
        let v = verifier
            .verify(&compiled[i], candidate(&sources[i].1, &sources[i].1), &compiled[i])
            .map_err(|e| e.to_string())?;
        ensure!(!v.accepted, "{} accepted against itself", sources[i].0);
        if v.rejected_at == Some(Gate::Gas) {
            identical += 1;
        }
        accepted += usize::from(v.accepted);
    }
    ensure!(accepted == 0, "identical candidates accepted");
    Ok(format!("64 sampled pairs hold the gate property; {n} identical candidates rejected ({identical} at the gas gate)"))
}

fn c5_consistency_sensitivity() -> Check {
    let roles = fixture("listing1_bad.sol");
    let payroll = fixture("seeded3.sol");
    let treasury = fixture("treasury.sol");
    let mutations: [(&str, &str, String); 10] = [
        ("roles", "negated admin check", roles.replacen("require(isAdmin[msg.sender]);", "require(!isAdmin[msg.sender]);", 1)),
        ("roles", "dropped MinterGranted", roles.replace("        emit MinterGranted(account);\n", "")),
        ("roles", "revoke stores true", roles.replace("isMinter[account] = false;", "isMinter[account] = true;")),
        ("payroll", "fee 25 -> 26", payroll.replace("feeBps = 25", "feeBps = 26")),
        ("payroll", "divisor 10000 -> 1000", payroll.replace("/ 10000", "/ 1000")),
        ("payroll", "owner check flipped", payroll.replace("msg.sender == owner", "msg.sender != owner")),
        ("payroll", "dropped Credited", payroll.replace("            emit Credited(accounts[i], net);\n", "")),
        ("treasury", "negated minter check", treasury.replace("require(isMinter[msg.sender]);", "require(!isMinter[msg.sender]);")),
        ("treasury", "deployer not admin", treasury.replacen("isAdmin[msg.sender] = true;", "isAdmin[msg.sender] = false;", 1)),
        ("treasury", "dropped MinterGranted", treasury.replace("        emit MinterGranted(account);\n", "")),
    ];
    let verifier = Verifier::default();
    let mut compiled: BTreeMap<&str, (String, CompilationResult)> = BTreeMap::new();
    for (name, src) in [("roles", &roles), ("payroll", &payroll), ("treasury", &treasury)] {
        compiled.insert(name, (src.clone(), build(src)?));
    }
    for (base, label, mutant) in &mutations {
        let (src, b) = &compiled[base];
        ensure!(mutant != src, "{base}/{label}: mutation did not apply");
        let c = build(mutant)?;
        let v = verifier.verify(b, candidate(src, mutant), &c).map_err(|e| e.to_string())?;
        ensure!(!v.accepted, "{base}/{label}: accepted");
        ensure!(v.rejected_at == Some(Gate::Consistency), "{base}/{label}: rejected at {:?}", v.rejected_at);
    }
    Ok("10/10 mutations rejected at the consistency gate, 0 false accepts".into())
}

fn c6_zero_threshold() -> Check {
    let lib = PatternLibrary::seed();
    let reg = DetectorRegistry::builtin();
    let mut made = Vec::new();
    for (name, src) in corpus() {
        let r = build(&src)?;
        let full = reg.run_all(&r);
        let exhaustive: BTreeMap<_, _> = full.findings.into_iter().filter(|(_, f)| !f.is_empty()).collect();
        for (threshold, check_findings) in [(0.0, true), (0.7, false)] {
            let chat = ScriptedChat::new();
            chat.push(AgentRole::Seeker, "None");
            let gw = Gateway::mock(chat);
            let rep = Seeker::new(&lib, &reg, &gw).seek(&r, threshold, &StepClock::new(0)).map_err(|e| e.to_string())?;
            let found: BTreeMap<_, _> = rep.findings.clone().into_iter().filter(|(_, f)| !f.is_empty()).collect();
            if check_findings {
                ensure!(found == exhaustive, "{name}: threshold 0 findings differ from the full registry run");
            } else {
                let (m, p) = (rep.retrieval.detector_calls_made, rep.retrieval.detector_calls_possible);
                ensure!(m < p, "{name}: {m} of {p} detector calls at 0.7");
                made.push(m);
            }
        }
    }
    Ok(format!("threshold 0 matches exhaustive runs; calls at 0.7 per contract {made:?} of 12"))
}

fn c7_end_to_end() -> Check {
    let src = fixture("treasury.sol");
    let first = run(&src, &treasury_script(DECLINE, None), LoopConfig::default());
    let r = first.result.as_ref().map_err(|e| e.to_string())?;
    ensure!(r.rounds_used == 3, "rounds_used {}", r.rounds_used);
    ensure!(r.outcome == Outcome::Optimized, "outcome {}", r.outcome);
    ensure!(r.final_gas.gas < r.original_gas.gas, "gas did not drop");
    ensure!(first.pool.len() == 2, "pool has {} entries", first.pool.len());
    ensure!(first.blacklist.is_empty(), "blacklist has {} entries", first.blacklist.len());

    let json = serde_json::to_string(&first.transcript).map_err(|e| e.to_string())?;
    let chat = ScriptedChat::from_json(&json).map_err(|e| e.to_string())?;
    let replay = run_with(&src, chat, LoopConfig::default(), &Verifier::default());
    let rr = replay.result.as_ref().map_err(|e| e.to_string())?;
    ensure!(render_report(r, ReportFormat::Machine) == render_report(rr, ReportFormat::Machine), "replayed report differs");

    let unchecked = fenced(&fixture("treasury_unchecked.sol"));
    let failing = run(&src, &treasury_script(&unchecked_fee_proposal(), Some(&unchecked)), LoopConfig::default());
    let fr = failing.result.as_ref().map_err(|e| e.to_string())?;
    ensure!(fr.rounds_used == 3 && fr.outcome == Outcome::Optimized, "failing variant: {} rounds, {}", fr.rounds_used, fr.outcome);
    ensure!(failing.pool.len() == 2, "failing variant pool {}", failing.pool.len());
    let names: Vec<&str> = failing.blacklist.records().iter().map(|b| b.proposal_name.as_str()).collect();
    ensure!(names == ["unchecked_fee_math"], "blacklist {names:?}");
    Ok(format!(
        "3 rounds, {} -> {} gas, pool +2, blacklist exactly the failing proposal, replay byte-identical",
        r.original_gas.gas, r.final_gas.gas
    ))
}

fn c8_fallback() -> Check {
    let treasury = fixture("treasury.sol");
    let roles = fixture("listing1_bad.sol");
    let metadata = fixture("listing2_bad.sol");
    let payroll = fixture("seeded3.sol");
    let mut cases: Vec<(&str, String, MockScript)> = Vec::new();

    let mut s = MockScript::default();
    let broken = fenced(&fixture("treasury_existing.sol").replace("uint256 net =", "uint256 net"));
    s.push(AgentRole::Seeker, TREASURY_SEEKER);
    s.push(AgentRole::Executor, broken.clone());
    s.push(AgentRole::Executor, broken);
    s.push(AgentRole::Innovator, bitmap_proposal());
    s.push(AgentRole::Executor, fenced(&fixture("treasury_bitmap.sol").replace("        emit MinterGranted(account);\n", "")));
    cases.push(("treasury: refactor + consistency", treasury, s));

    let mut s = MockScript::default();
    s.push(AgentRole::Seeker, "None");
    s.push(AgentRole::Innovator, bitmap_proposal());
    s.push(
        AgentRole::Executor,
        fenced(&fixture("listing1_good.sol").replace(
            "    function revokeMinter",
            "    function exec(address target, bytes calldata data) external {\n        (bool ok, ) = target.delegatecall(data);\n        require(ok);\n    }\n\n    function revokeMinter",
        )),
    );
    cases.push(("roles: audit", roles, s));

    let mut s = MockScript::default();
    s.push(AgentRole::Seeker, "immutable_variable_usage");
    s.push(AgentRole::Executor, fenced(&metadata));
    s.push(AgentRole::Innovator, DECLINE);
    cases.push(("metadata: gas", metadata.clone(), s));

    let mut s = MockScript::default();
    s.push(AgentRole::Seeker, "constant_variable_usage, memory_to_calldata");
    s.push(AgentRole::Executor, fenced(&payroll.replace("feeBps = 25", "constant feeBps = 26")));
    s.push(AgentRole::Innovator, element_cache_proposal());
    s.push(AgentRole::Executor, fenced(&payroll.replace("/ 10000", "/ 1000")));
    cases.push(("payroll: consistency twice", payroll, s));

    for (label, src, script) in &cases {
        let run = run(src, script, LoopConfig::default());
        let r = run.result.as_ref().map_err(|e| format!("{label}: {e}"))?;
        ensure!(r.outcome == Outcome::Fallback, "{label}: outcome {}", r.outcome);
        ensure!(&r.final_source == src, "{label}: final source differs from the original");
        ensure!(r.final_gas == r.original_gas, "{label}: final gas {} vs original {}", r.final_gas.gas, r.original_gas.gas);
        ensure!(run.pool.is_empty(), "{label}: pool gained entries");
        ensure!(r.stages.iter().all(|t| t.status != StageStatus::Accepted), "{label}: a stage was accepted");
    }
    Ok(format!("{} fixtures fall back to the original source and gas", cases.len()))
}

struct Trial {
    config: LoopConfig,
    script: MockScript,
}

fn random_trial(rng: &mut ChaCha8Rng) -> Trial {
    let max_rounds = rng.gen_range(1..=5);
    let (seeker, innovator) = match rng.gen_range(0..10) {
        0 => (true, false),
        1..=4 => (false, true),
        _ => (true, true),
    };
    let mut s = MockScript::default();
    let broken = fenced("contract Levels { uint256 x = ; }\n");
    let mut k = 0;
    if seeker {
        s.push(AgentRole::Seeker, "constant_variable_usage");
        if rng.gen_bool(0.5) {
            s.push(AgentRole::Executor, fenced(&levels(1)));
            k = 1;
        } else {
            s.push(AgentRole::Executor, broken.clone());
            s.push(AgentRole::Executor, broken.clone());
        }
    }
    for _ in 0..max_rounds {
        let roll = if k >= 6 { 99 } else { rng.gen_range(0..100) };
        match roll {
            0..=49 => {
                s.push(AgentRole::Innovator, fold_proposal(k + 1));
                s.push(AgentRole::Executor, fenced(&levels(k + 1)));
                k += 1;
                continue;
            }
            50..=59 => {
                s.push(AgentRole::Innovator, fold_proposal(k + 1));
                s.push(AgentRole::Executor, broken.clone());
                s.push(AgentRole::Executor, broken.clone());
            }
            60..=69 => {
                s.push(AgentRole::Innovator, fold_proposal(k + 1));
                s.push(AgentRole::Executor, fenced(&levels(k + 1).replace("a6 = 16;", "a6 = 61;")));
            }
            70..=79 => {
                s.push(AgentRole::Innovator, fold_proposal(k + 1));
                s.push(AgentRole::Executor, fenced(&levels(k)));
            }
            80..=84 => {
                s.push(AgentRole::Innovator, "I could not follow the instructions.");
            }
            85..=89 => {
                s.push(AgentRole::Innovator, proposal("phantom", "Not in the contract.", "storage", &["uint256 public zz = 1;"], "None."));
            }
            _ => {
                s.push(AgentRole::Innovator, DECLINE);
            }
        }
        break;
    }
    for _ in 0..8 {
        s.push(AgentRole::Innovator, DECLINE);
        s.push(AgentRole::Executor, broken.clone());
    }
    Trial {
        config: LoopConfig { max_rounds, seeker, innovator, ..LoopConfig::default() },
        script: s,
    }
}

fn well_formed(r: &FinalReport, original: &str, pool: usize) -> Result<(), String> {
    ensure!(r.schema == REPORT_SCHEMA, "schema {}", r.schema);
    ensure!(r.rounds_used >= 1 && r.rounds_used <= r.config.max_rounds, "rounds_used {} of {}", r.rounds_used, r.config.max_rounds);
    ensure!(!r.stages.is_empty(), "no stages");
    ensure!(r.stages.windows(2).all(|w| w[0].round <= w[1].round), "stage rounds out of order");
    ensure!(r.stages.iter().all(|t| t.round >= 1 && t.round <= r.rounds_used), "stage round outside 1..={}", r.rounds_used);
    for t in &r.stages {
        if t.status == StageStatus::Accepted {
            ensure!(matches!((t.gas_before, t.gas_after), (Some(b), Some(a)) if a < b), "accepted stage without a strict saving");
        } else {
            ensure!(t.status != StageStatus::Rejected || t.rejected_at.is_some(), "rejection without a gate");
        }
    }
    let new_accepted = r.stages.iter().filter(|t| t.stage == Stage::NewPattern && t.status == StageStatus::Accepted).count();
    ensure!(r.new_patterns_validated == new_accepted && new_accepted == pool, "validated count mismatch");
    ensure!(r.final_gas.gas <= r.original_gas.gas, "final gas above original");
    ensure!((r.outcome == Outcome::Optimized) == (r.saved() > 0), "outcome {} with saving {}", r.outcome, r.saved());
    if r.outcome != Outcome::Optimized {
        ensure!(r.final_source == original && r.final_gas == r.original_gas, "{} outcome changed the contract", r.outcome);
    }
    let machine = render_report(r, ReportFormat::Machine);
    let back: FinalReport = serde_json::from_str(&machine).map_err(|e| format!("report does not parse back: {e}"))?;
    if &back != r {
        let a = serde_json::to_value(r).unwrap();
        let b = serde_json::to_value(&back).unwrap();
        let diff: Vec<&String> = a.as_object().unwrap().keys().filter(|k| a[k.as_str()] != b[k.as_str()]).collect();
        return Err(format!("report does not round-trip: {diff:?}"));
    }
    ensure!(render_report(r, ReportFormat::Human).contains(&format!("Outcome: {}", r.outcome)), "human report lacks the outcome");
    Ok(())
}

fn c9_termination() -> Check {
    let src = levels(0);
    let verifier = Verifier {
        limits: SuiteLimits { fuzz_runs: 10, ..SuiteLimits::default() },
        ..Verifier::default()
    };
    let mut rounds = BTreeMap::<u32, usize>::new();
    let mut outcomes = BTreeMap::<String, usize>::new();
    for seed in 0..100u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let trial = random_trial(&mut rng);
        let run = run_with(&src, ScriptedChat::from_script(&trial.script), trial.config, &verifier);
        let r = run.result.as_ref().map_err(|e| format!("trial {seed}: {e}"))?;
        well_formed(r, &src, run.pool.len()).map_err(|e| format!("trial {seed}: {e}"))?;
        *rounds.entry(r.rounds_used).or_default() += 1;
        *outcomes.entry(r.outcome.to_string()).or_default() += 1;
    }
    Ok(format!("100 trials terminate within max_rounds; rounds {rounds:?}; outcomes {outcomes:?}"))
}

fn c10_schema_fidelity() -> Check {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    PatternLibrary::seed().write_to(dir.path()).map_err(|e| e.to_string())?;
    let loaded = load_library(dir.path()).map_err(|e| e.to_string())?;
    ensure!(loaded.diagnostics.is_empty(), "{} load diagnostics", loaded.diagnostics.len());
    ensure!(loaded.library.len() == SEED_FILES.len(), "loaded {} of {}", loaded.library.len(), SEED_FILES.len());
    let mut fields = 0;
    for (file, text) in SEED_FILES {
        let original: Value = serde_json::from_str(text).map_err(|e| format!("{file}: {e}"))?;
        let name = original["name"].as_str().ok_or_else(|| format!("{file}: no name"))?;
        let entry = loaded.library.get(name).ok_or_else(|| format!("{name} missing after reload"))?;
        let written = entry.to_json();
        ensure!(written == original, "{file}: serialized entry differs from the source document");
        let revalidated = validate_entry(&written).map_err(|e| format!("{file}: {e:?}"))?;
        ensure!(&revalidated == entry, "{file}: revalidated entry differs");
        fields += original.as_object().map_or(0, |o| o.len());
    }
    Ok(format!("{} entries, {fields} top-level fields preserved", SEED_FILES.len()))
}

fn c11_ablation() -> Check {
    let lib = PatternLibrary::seed();
    let broken = fenced("contract X { uint256 x = ; }\n");
    let verifier = Verifier::default();
    for (name, src) in corpus() {
        let mut s = MockScript::default();
        s.push(AgentRole::Seeker, "None");
        s.push(AgentRole::Executor, broken.clone());
        s.push(AgentRole::Executor, broken.clone());
        let run = run_with(&src, ScriptedChat::from_script(&s), LoopConfig { innovator: false, ..LoopConfig::default() }, &verifier);
        let r = run.result.as_ref().map_err(|e| format!("{name} no-innovator: {e}"))?;
        ensure!(r.rounds_used == 1, "{name} no-innovator: rounds_used {}", r.rounds_used);
        ensure!(r.stages.iter().all(|t| t.stage == Stage::ExistingPatterns), "{name} no-innovator: non-seeker stage");
        ensure!(run.transcript.entries.iter().all(|e| e.agent != AgentRole::Innovator), "{name} no-innovator: innovator called");

        let reg = DetectorRegistry::builtin();
        let chat = ScriptedChat::new();
        chat.push(AgentRole::Innovator, DECLINE);
        let gw = Gateway::mock(chat);
        let clock = StepClock::new(0);
        let o = Orchestrator {
            library: &lib,
            registry: &reg,
            gateway: &gw,
            verifier: &verifier,
            clock: &clock,
            config: LoopConfig { seeker: false, ..LoopConfig::default() },
        };
        let r = o
            .optimize(&src, &mut Blacklist::in_memory(), &mut VerifiedPool::in_memory())
            .map_err(|e| format!("{name} no-seeker: {e}"))?;
        ensure!(r.stages.iter().all(|t| t.stage == Stage::NewPattern && t.existing_report.is_none()), "{name} no-seeker: seeker stage present");
        ensure!(reg.calls() == 0, "{name} no-seeker: {} detector calls", reg.calls());
        ensure!(gw.transcript().entries.iter().all(|e| e.agent == AgentRole::Innovator), "{name} no-seeker: non-innovator LLM call");
    }
    Ok("10 corpus contracts: no-innovator stops after the seeker round, no-seeker runs no detector".into())
}

fn main() {
    let criteria: [Criterion; 11] = [
        ("detector corpus soundness", c1_detector_corpus),
        ("gas meter matches the reference EVM", c2_gas_oracle),
        ("listing fixtures save gas", c3_listing_direction),
        ("strict acceptance gate", c4_strict_gate),
        ("consistency sensitivity", c5_consistency_sensitivity),
        ("zero-threshold retrieval completeness", c6_zero_threshold),
        ("end-to-end scripted loop", c7_end_to_end),
        ("fallback safety", c8_fallback),
        ("termination", c9_termination),
        ("schema fidelity", c10_schema_fidelity),
        ("ablation parity", c11_ablation),
    ];
    let only: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let id = format!("C{}", i + 1);
        if !only.is_empty() && !only.iter().any(|o| o.eq_ignore_ascii_case(&id)) {
            continue;
        }
        let start = Instant::now();
        let result = panic::catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
            let msg = p.downcast_ref::<String>().cloned().or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()));
            Err(format!("panicked: {}", msg.unwrap_or_default()))
        });
        let secs = start.elapsed().as_secs_f64();
        match result {
            Ok(detail) => println!("[PASS] {id} {name} ({secs:.1}s): {detail}"),
            Err(detail) => {
                failed += 1;
                println!("[FAIL] {id} {name} ({secs:.1}s): {detail}");
            }
        }
    }
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}
