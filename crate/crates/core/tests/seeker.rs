use std::collections::{BTreeMap, BTreeSet};

use gasloop_core::clock::StepClock;
use gasloop_core::detectors::DetectorRegistry;
use gasloop_core::frontend::{compile, CompilationResult, CompilerSettings};
use gasloop_core::gateway::{
    cosine_similarity, AgentRole, Embedder, EmbeddingVector, Gateway, GatewayError, ScriptedChat, TokenHashEmbedder,
};
use gasloop_core::library::PatternLibrary;
use gasloop_core::seeker::{code_chunks, seeker_prompt, Seeker};
use proptest::prelude::*;

fn fixture(name: &str) -> String {
    std::fs::read_to_string(format!("{}/tests/fixtures/{name}", env!("CARGO_MANIFEST_DIR"))).unwrap()
}

fn build(source: &str) -> CompilationResult {
    let r = compile(source, &CompilerSettings::default()).expect("compiler available");
    assert!(r.is_success(), "{}", r.error_report());
    r
}

fn seeker_replies(replies: &[&str]) -> Gateway {
    let chat = ScriptedChat::new();
    for r in replies {
        chat.push(AgentRole::Seeker, *r);
    }
    Gateway::mock(chat)
}

const MINIMAL: &str = "// SPDX-License-Identifier: MIT\npragma solidity ^0.8.20;\n\ncontract A {}\n";

#[test]
fn cosine_examples() {
    let v = |c: &[f64]| EmbeddingVector::new(c.to_vec());
    assert!((cosine_similarity(&v(&[3.0, -1.0]), &v(&[3.0, -1.0])).unwrap() - 1.0).abs() < 1e-12);
    assert_eq!(cosine_similarity(&v(&[1.0, 0.0]), &v(&[0.0, 1.0])).unwrap(), 0.0);
    let expected = 32.0 / (14f64.sqrt() * 77f64.sqrt());
    assert!((cosine_similarity(&v(&[1.0, 2.0, 3.0]), &v(&[4.0, 5.0, 6.0])).unwrap() - expected).abs() < 1e-12);
    assert!((expected - 0.974631846).abs() < 1e-9);
    assert!(cosine_similarity(&v(&[1.0]), &v(&[1.0, 2.0])).is_err());
    assert!(cosine_similarity(&v(&[0.0, 0.0]), &v(&[1.0, 2.0])).is_err());
}

#[test]
fn threshold_bounds() {
    let lib = PatternLibrary::seed();
    let reg = DetectorRegistry::builtin();
    let gw = seeker_replies(&[]);
    let seeker = Seeker::new(&lib, &reg, &gw);
    let chunks = code_chunks(&build(&fixture("seeded3.sol")));
    let all = seeker.code_retrieve(&chunks, 0.0).unwrap();
    assert_eq!(all.selected, lib.names().map(String::from).collect::<BTreeSet<_>>());
    assert!(seeker.code_retrieve(&chunks, 1.0).unwrap().selected.is_empty());
}

/// Token-frequency hashing recomputed from scratch: FNV-1a 64 over each
/// lowercased identifier-like token, 64 buckets, header and numeric tokens
/// skipped.
fn oracle_counts(text: &str) -> Vec<f64> {
    let skip = ["spdx", "license", "identifier", "mit", "unlicensed", "pragma", "solidity"];
    let mut counts = vec![0.0; 64];
    for token in text.split(|c: char| !(c.is_ascii_alphanumeric() || c == '_')) {
        let t = token.to_ascii_lowercase();
        if t.is_empty() || t.chars().all(|c| c.is_ascii_digit()) || skip.contains(&t.as_str()) {
            continue;
        }
        let mut h: u64 = 0xcbf29ce484222325;
        for b in t.bytes() {
            h ^= b as u64;
            h = h.wrapping_mul(0x100000001b3);
        }
        counts[(h % 64) as usize] += 1.0;
    }
    counts
}

fn oracle_cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    dot / (na * nb)
}

#[test]
fn contract_containing_an_example_is_retrieved_at_default_threshold() {
    let lib = PatternLibrary::seed();
    let example = &lib.get("immutable_variable_usage").unwrap().examples[0].code_before;
    let source = format!(
        "{example}\ncontract Probe {{\n    function ping() external pure returns (bool) {{\n        return true;\n    }}\n}}\n"
    );
    let expected = oracle_cosine(&oracle_counts(&source), &oracle_counts(example));
    assert!(expected > 0.7, "fixture too dissimilar: {expected}");

    let reg = DetectorRegistry::builtin();
    let gw = seeker_replies(&[]);
    let seeker = Seeker::new(&lib, &reg, &gw);
    let r = build(&source).select("Metadata").unwrap();
    let got = seeker.code_retrieve(&code_chunks(&r), 0.7).unwrap();
    assert!(got.selected.contains("immutable_variable_usage"));
    assert!(got.scores["immutable_variable_usage"] >= expected - 1e-12);
}

#[test]
fn nl_retrieval_parses_ids() {
    let lib = PatternLibrary::seed();
    let reg = DetectorRegistry::builtin();
    let gw = seeker_replies(&[
        "repeated_computation, state_variable_refactoring",
        "",
        "repeated_computation, not_a_pattern, repeated_computation",
    ]);
    let seeker = Seeker::new(&lib, &reg, &gw);
    let two = seeker.nl_retrieve(MINIMAL).unwrap();
    assert_eq!(
        two.selected,
        BTreeSet::from(["repeated_computation".to_string(), "state_variable_refactoring".to_string()])
    );
    assert!(seeker.nl_retrieve(MINIMAL).unwrap().selected.is_empty());
    let noisy = seeker.nl_retrieve(MINIMAL).unwrap();
    assert_eq!(noisy.selected, BTreeSet::from(["repeated_computation".to_string()]));
    assert_eq!(noisy.unknown, ["not_a_pattern"]);
}

#[test]
fn prompt_is_fixed_text_with_slots() {
    let lib = PatternLibrary::seed();
    let (system, user) = seeker_prompt("contract A {}", &lib);
    assert_eq!(
        system,
        "You are a smart contract analysis expert.\n\
         Please analyze the given contract code and select relevant patterns from the provided optimization pattern list (no limit on quantity) to optimize the Gas Fee.\n\
         Only return pattern IDs, separated by commas, e.g., repeated_computation, state_variable_refactoring."
    );
    let expected_user = format!(
        "Please analyze the following smart contract and select the patterns that need optimization:\n\n\
         contract A {{}}\n\n\
         Below are the provided optimization patterns:\n\n\
         {}\n\n\
         Please only return pattern IDs, separated by commas.",
        lib.descriptions()
    );
    assert_eq!(user, expected_user);
    for name in lib.names() {
        assert!(user.contains(&format!("- {name}: ")));
    }
}

#[test]
fn prompt_is_recorded_in_transcript() {
    let lib = PatternLibrary::seed();
    let reg = DetectorRegistry::builtin();
    let gw = seeker_replies(&["dead_code"]);
    let seeker = Seeker::new(&lib, &reg, &gw);
    seeker.nl_retrieve(MINIMAL).unwrap();
    let t = gw.transcript();
    assert_eq!(t.entries.len(), 1);
    assert_eq!(t.entries[0].agent, AgentRole::Seeker);
    assert!(t.entries[0].request.messages[1].content.contains("contract A {}"));
}

#[test]
fn clean_contract_yields_empty_report() {
    let lib = PatternLibrary::seed();
    let reg = DetectorRegistry::builtin();
    let gw = seeker_replies(&[""]);
    let report = Seeker::new(&lib, &reg, &gw).seek(&build(MINIMAL), 1.0, &StepClock::new(0)).unwrap();
    assert!(report.retrieval.union.is_empty());
    assert!(report.findings.is_empty());
    assert_eq!(report.retrieval.detector_calls_made, 0);
    assert_eq!(report.retrieval.detector_calls_possible, reg.len());
    assert!(report.retrieval.warnings.is_empty());
}

#[test]
fn immutable_listing_is_reported() {
    let lib = PatternLibrary::seed();
    let reg = DetectorRegistry::builtin();
    let gw = seeker_replies(&[""]);
    let report = Seeker::new(&lib, &reg, &gw)
        .seek(&build(&fixture("listing2_bad.sol")), 0.7, &StepClock::new(0))
        .unwrap();
    assert!(report.retrieval.code_selected.contains("immutable_variable_usage"));
    let subjects: Vec<&str> = report.findings["immutable_variable_usage"].iter().map(|f| f.subject.as_str()).collect();
    assert_eq!(subjects, ["chainId", "launchTimestamp"]);
    assert!(report.retrieval.detector_calls_made < report.retrieval.detector_calls_possible);
}

#[test]
fn zero_threshold_matches_exhaustive_run() {
    let lib = PatternLibrary::seed();
    let reg = DetectorRegistry::builtin();
    let gw = seeker_replies(&[""]);
    let r = build(&fixture("seeded3.sol"));
    let report = Seeker::new(&lib, &reg, &gw).seek(&r, 0.0, &StepClock::new(0)).unwrap();
    let exhaustive = DetectorRegistry::builtin().run_all(&r);
    assert_eq!(report.findings, exhaustive.findings);
    assert_eq!(report.retrieval.detector_calls_made, report.retrieval.detector_calls_possible);
}

#[test]
fn report_keys_stay_inside_union() {
    let lib = PatternLibrary::seed();
    let reg = DetectorRegistry::builtin();
    let gw = seeker_replies(&["memory_to_calldata, dead_code"]);
    let report = Seeker::new(&lib, &reg, &gw)
        .seek(&build(&fixture("seeded3.sol")), 0.95, &StepClock::new(0))
        .unwrap();
    let r = &report.retrieval;
    assert!(r.code_selected.is_subset(&r.union));
    assert!(r.nl_selected.is_subset(&r.union));
    assert_eq!(r.union, r.code_selected.union(&r.nl_selected).cloned().collect());
    assert!(report.findings.keys().all(|k| r.union.contains(k)));
    assert_eq!(report.hit_patterns(), BTreeSet::from(["memory_to_calldata".to_string()]));
}

#[test]
fn uncompilable_contract_is_rejected_before_retrieval() {
    let lib = PatternLibrary::seed();
    let reg = DetectorRegistry::builtin();
    let gw = seeker_replies(&["dead_code"]);
    let bad = compile("contract A { function f() { x = 1; } }", &CompilerSettings::default()).unwrap();
    assert!(Seeker::new(&lib, &reg, &gw).seek(&bad, 0.7, &StepClock::new(0)).is_err());
    assert!(gw.transcript().entries.is_empty());
}

struct BrokenEmbedder;

impl Embedder for BrokenEmbedder {
    fn embed(&self, _: &[String]) -> Result<Vec<EmbeddingVector>, GatewayError> {
        Err(GatewayError::Auth("no key".into()))
    }
}

#[test]
fn embedder_failure_degrades_to_language_retrieval() {
    let lib = PatternLibrary::seed();
    let reg = DetectorRegistry::builtin();
    let chat = ScriptedChat::new();
    chat.push(AgentRole::Seeker, "memory_to_calldata");
    let gw = Gateway::new(Box::new(chat), Box::new(BrokenEmbedder));
    let report = Seeker::new(&lib, &reg, &gw)
        .seek(&build(&fixture("seeded3.sol")), 0.7, &StepClock::new(0))
        .unwrap();
    assert!(report.retrieval.code_selected.is_empty());
    assert_eq!(report.retrieval.union, BTreeSet::from(["memory_to_calldata".to_string()]));
    assert_eq!(report.retrieval.warnings.len(), 1);
}

#[test]
fn llm_failure_keeps_code_retrieval() {
    let lib = PatternLibrary::seed();
    let reg = DetectorRegistry::builtin();
    let gw = seeker_replies(&[]);
    let report = Seeker::new(&lib, &reg, &gw)
        .seek(&build(&fixture("listing2_bad.sol")), 0.7, &StepClock::new(0))
        .unwrap();
    assert!(report.retrieval.nl_selected.is_empty());
    assert!(report.retrieval.union.contains("immutable_variable_usage"));
    assert_eq!(report.retrieval.warnings.len(), 1);
}

/// Counts calls so memoization is observable.
struct CountingEmbedder(std::sync::Arc<std::sync::atomic::AtomicUsize>);

impl Embedder for CountingEmbedder {
    fn embed(&self, texts: &[String]) -> Result<Vec<EmbeddingVector>, GatewayError> {
        self.0.fetch_add(texts.len(), std::sync::atomic::Ordering::SeqCst);
        TokenHashEmbedder::default().embed(texts)
    }
}

#[test]
fn example_embeddings_are_memoized() {
    let lib = PatternLibrary::seed();
    let reg = DetectorRegistry::builtin();
    let count = std::sync::Arc::new(std::sync::atomic::AtomicUsize::new(0));
    let gw = Gateway::new(Box::new(ScriptedChat::new()), Box::new(CountingEmbedder(count.clone())));
    let seeker = Seeker::new(&lib, &reg, &gw);
    let examples: usize = lib.iter().map(|e| e.examples.len()).sum();
    seeker.code_retrieve(&["contract A {}".to_string()], 0.7).unwrap();
    assert_eq!(count.load(std::sync::atomic::Ordering::SeqCst), examples + 1);
    seeker.code_retrieve(&["contract B {}".to_string()], 0.7).unwrap();
    assert_eq!(count.load(std::sync::atomic::Ordering::SeqCst), examples + 2);
}

fn retrieval_scores() -> BTreeMap<String, f64> {
    let lib = PatternLibrary::seed();
    let reg = DetectorRegistry::builtin();
    let gw = seeker_replies(&[]);
    let chunks = code_chunks(&build(&fixture("listing1_bad.sol")));
    Seeker::new(&lib, &reg, &gw).code_retrieve(&chunks, 0.0).unwrap().scores
}

proptest! {
    #[test]
    fn retrieval_is_monotone_in_threshold(a in 0.0f64..=1.0, b in 0.0f64..=1.0) {
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        let lib = PatternLibrary::seed();
        let reg = DetectorRegistry::builtin();
        let gw = seeker_replies(&[]);
        let seeker = Seeker::new(&lib, &reg, &gw);
        let chunks = vec![fixture("listing1_bad.sol")];
        let at_hi = seeker.code_retrieve(&chunks, hi).unwrap().selected;
        let at_lo = seeker.code_retrieve(&chunks, lo).unwrap().selected;
        prop_assert!(at_hi.is_subset(&at_lo));
    }
}

#[test]
fn scores_are_valid_similarities() {
    for (name, s) in retrieval_scores() {
        assert!((0.0..=1.0 + 1e-12).contains(&s), "{name}: {s}");
    }
}
