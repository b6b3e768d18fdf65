use gasloop_core::detectors::{Confidence, DetectorRegistry, Finding};
use gasloop_core::frontend::{compile, CompilationResult, CompilerSettings};
use gasloop_core::library::PatternLibrary;

fn build(source: &str) -> CompilationResult {
    let r = compile(source, &CompilerSettings::default()).expect("compiler available");
    assert!(r.is_success(), "fixture does not compile:\n{}", r.error_report());
    r
}

fn show(findings: &[Finding]) -> String {
    findings
        .iter()
        .map(|f| format!("  {} {:?} `{}`: {}", f.span, f.confidence, f.subject, f.evidence))
        .collect::<Vec<_>>()
        .join("\n")
}

#[test]
fn every_seed_example_is_sound() {
    let reg = DetectorRegistry::builtin();
    let lib = PatternLibrary::seed();
    let mut failures = Vec::new();
    for entry in lib.iter() {
        for ex in &entry.examples {
            let before = reg.run_detector(&entry.name, &build(&ex.code_before)).unwrap();
            let after = reg.run_detector(&entry.name, &build(&ex.code_after)).unwrap();
            if before.is_empty() {
                failures.push(format!("{}/{}: no finding on codeBefore", entry.name, ex.id));
            }
            if !after.is_empty() {
                failures.push(format!("{}/{}: findings on codeAfter\n{}", entry.name, ex.id, show(&after)));
            }
            for f in &before {
                let text = f.span.text(&ex.code_before).unwrap();
                assert!(text.contains(&f.subject), "{}: span text {text:?} lacks subject {:?}", entry.name, f.subject);
            }
            eprintln!("{}/{}:\n{}", entry.name, ex.id, show(&before));
        }
    }
    assert!(failures.is_empty(), "{}", failures.join("\n"));
}

#[test]
fn listing_two_reports_both_fields() {
    let lib = PatternLibrary::seed();
    let ex = &lib.get("immutable_variable_usage").unwrap().examples[0];
    let reg = DetectorRegistry::builtin();
    let findings = reg.run_detector("immutable_variable_usage", &build(&ex.code_before)).unwrap();
    let subjects: Vec<_> = findings.iter().map(|f| f.subject.as_str()).collect();
    assert_eq!(subjects, ["chainId", "launchTimestamp"]);
    assert!(findings.iter().all(|f| f.confidence == Confidence::Certain));
}

const NEGATIVES: &str = concat!(env!("CARGO_MANIFEST_DIR"), "/tests/fixtures/negatives");

#[test]
fn hand_written_negatives_are_clean() {
    let reg = DetectorRegistry::builtin();
    let mut checked = 0;
    let mut failures = Vec::new();
    for name in reg.names() {
        for i in 1..=2 {
            let path = format!("{NEGATIVES}/{name}_{i}.sol");
            let source = std::fs::read_to_string(&path).unwrap_or_else(|e| panic!("{path}: {e}"));
            let findings = reg.run_detector(name, &build(&source)).unwrap();
            if !findings.is_empty() {
                failures.push(format!("{name}_{i}:\n{}", show(&findings)));
            }
            checked += 1;
        }
    }
    assert_eq!(checked, 24);
    assert!(failures.is_empty(), "{}", failures.join("\n"));
}

fn fixture(name: &str) -> String {
    std::fs::read_to_string(format!("{}/tests/fixtures/{name}", env!("CARGO_MANIFEST_DIR"))).unwrap()
}

#[test]
fn seeded_contract_hits_exactly_three_patterns() {
    let reg = DetectorRegistry::builtin();
    let run = reg.run_all(&build(&fixture("seeded3.sol")));
    assert!(run.errors.is_empty());
    let hits: Vec<String> = run.hit_patterns().into_iter().collect();
    assert_eq!(hits, ["constant_variable_usage", "immutable_variable_usage", "memory_to_calldata"]);
    assert_eq!(run.total(), 3);
}

#[test]
fn empty_selection_runs_nothing() {
    let reg = DetectorRegistry::builtin();
    let run = reg.run_selected([], &build(&fixture("seeded3.sol")));
    assert_eq!(run.total(), 0);
    assert_eq!(reg.calls(), 0);
}

#[test]
fn minimal_contract_is_clean() {
    let reg = DetectorRegistry::builtin();
    let run = reg.run_all(&build("// SPDX-License-Identifier: MIT\npragma solidity ^0.8.20;\ncontract A {}\n"));
    assert_eq!(run.total(), 0);
    assert_eq!(reg.calls(), reg.len());
}

#[test]
fn detection_is_deterministic() {
    let reg = DetectorRegistry::builtin();
    let r = build(&fixture("listing1_bad.sol"));
    let a = reg.run_all(&r);
    let b = reg.run_all(&r);
    assert_eq!(a.findings, b.findings);
}

#[test]
fn unregistered_detector_is_an_error() {
    let reg = DetectorRegistry::builtin();
    assert!(reg.run_detector("no_such_rule", &build(&fixture("seeded3.sol"))).is_err());
}
