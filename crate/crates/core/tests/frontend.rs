use std::collections::BTreeSet;

use gasloop_core::detectors::DetectorRegistry;
use gasloop_core::frontend::{compile, query_ast, CompilationResult, CompilerSettings, Selector};
use proptest::prelude::*;
use serde_json::Value;

fn fixture(name: &str) -> String {
    std::fs::read_to_string(format!("{}/tests/fixtures/{name}", env!("CARGO_MANIFEST_DIR"))).unwrap()
}

fn build(source: &str) -> CompilationResult {
    compile(source, &CompilerSettings::default()).expect("compiler available")
}

const HEADER: &str = "// SPDX-License-Identifier: MIT\npragma solidity ^0.8.20;\n\n";

#[test]
fn minimal_contract_compiles() {
    let r = build("contract A {}");
    assert!(r.is_success());
    assert!(!r.creation_bytecode().is_empty());
    assert_eq!(r.compiler_version.split('+').next(), Some("0.8.20"));
    assert!(query_ast(&r, &Selector::StateVariables).is_empty());
}

#[test]
fn immutable_listing_compiles() {
    let r = build(&fixture("listing2_good.sol"));
    assert!(r.is_success(), "{}", r.error_report());
}

#[test]
fn undeclared_identifier_is_one_spanned_error() {
    let src = format!("{HEADER}contract A {{ function f() external {{ missing = 1; }} }}");
    let r = build(&src);
    assert!(!r.is_success());
    let errors: Vec<_> = r.errors().collect();
    assert_eq!(errors.len(), 1);
    let span = errors[0].span.expect("error carries a span");
    assert_eq!(span.text(&src), Some("missing"));
    assert!(r.creation_bytecode().is_empty());
}

#[test]
fn bitmap_listing_state_variables() {
    let r = build(&fixture("listing1_bad.sol"));
    let names: Vec<_> = query_ast(&r, &Selector::StateVariables).iter().map(|n| n.name()).collect();
    assert_eq!(names, ["isAdmin", "isMinter"]);
}

#[test]
fn compilation_is_deterministic() {
    let src = fixture("seeded3.sol");
    let settings = CompilerSettings::default();
    let a = gasloop_core::frontend::Compiler::discover("0.8.20").unwrap().compile(&src, &settings).unwrap();
    let b = gasloop_core::frontend::Compiler::discover("0.8.20").unwrap().compile(&src, &settings).unwrap();
    assert_eq!(a.creation_bytecode(), b.creation_bytecode());
    assert_eq!(a.ast, b.ast);
}

#[test]
fn every_node_span_lies_within_the_source() {
    let src = fixture("listing1_good.sol");
    let r = build(&src);
    for n in r.ast_root().unwrap().walk() {
        assert!(n.src().is_within(&src), "{} {}", n.node_type(), n.src());
    }
}

// Independent walkers over the raw JSON, sharing no code with the crate.

fn each_node<'a>(v: &'a Value, f: &mut dyn FnMut(&'a Value)) {
    match v {
        Value::Object(m) => {
            if m.contains_key("nodeType") {
                f(v);
            }
            for (k, child) in m {
                if k != "typeDescriptions" {
                    each_node(child, f);
                }
            }
        }
        Value::Array(items) => items.iter().for_each(|c| each_node(c, f)),
        _ => {}
    }
}

fn root_decl(lhs: &Value) -> Option<i64> {
    match lhs["nodeType"].as_str()? {
        "Identifier" => lhs["referencedDeclaration"].as_i64(),
        "IndexAccess" => root_decl(&lhs["baseExpression"]),
        "MemberAccess" => root_decl(&lhs["expression"]),
        "TupleExpression" => lhs["components"].as_array()?.iter().find_map(root_decl),
        _ => None,
    }
}

fn written_ids(scope: &Value) -> BTreeSet<i64> {
    let mut out = BTreeSet::new();
    each_node(scope, &mut |n| match n["nodeType"].as_str() {
        Some("Assignment") => out.extend(root_decl(&n["leftHandSide"])),
        Some("UnaryOperation") if matches!(n["operator"].as_str(), Some("++" | "--" | "delete")) => {
            out.extend(root_decl(&n["subExpression"]))
        }
        _ => {}
    });
    out
}

fn functions(ast: &Value) -> Vec<&Value> {
    let mut out = Vec::new();
    each_node(ast, &mut |n| {
        if n["nodeType"] == "FunctionDefinition" {
            out.push(n);
        }
    });
    out
}

fn state_var_ids(ast: &Value) -> BTreeSet<(i64, String)> {
    let mut out = BTreeSet::new();
    each_node(ast, &mut |n| {
        if n["nodeType"] == "VariableDeclaration" && n["stateVariable"] == true {
            out.insert((n["id"].as_i64().unwrap(), n["name"].as_str().unwrap().to_string()));
        }
    });
    out
}

/// Oracle for `FunctionsWriting(var)`.
fn writers_oracle(ast: &Value, var: &str) -> Vec<String> {
    let ids: BTreeSet<i64> = state_var_ids(ast).into_iter().filter(|(_, n)| n == var).map(|(i, _)| i).collect();
    functions(ast)
        .into_iter()
        .filter(|f| !written_ids(f).is_disjoint(&ids))
        .map(|f| f["name"].as_str().unwrap_or_default().to_string())
        .collect()
}

/// Oracle for `state_variable_refactoring`: (function, variable) pairs
/// where the variable is never written in the function and is either read
/// inside a loop or read at least twice.
fn refactoring_oracle(ast: &Value) -> BTreeSet<(String, String)> {
    let vars = state_var_ids(ast);
    let mut out = BTreeSet::new();
    for f in functions(ast) {
        let written = written_ids(f);
        for (id, name) in &vars {
            if written.contains(id) {
                continue;
            }
            let (mut total, mut looped) = (0, 0);
            fn visit(v: &Value, id: i64, in_loop: bool, total: &mut usize, looped: &mut usize) {
                match v {
                    Value::Object(m) => {
                        let t = m.get("nodeType").and_then(Value::as_str).unwrap_or_default();
                        if t == "Identifier" && m.get("referencedDeclaration").and_then(Value::as_i64) == Some(id) {
                            *total += 1;
                            if in_loop {
                                *looped += 1;
                            }
                        }
                        let inner = in_loop || matches!(t, "ForStatement" | "WhileStatement" | "DoWhileStatement");
                        for child in m.values() {
                            visit(child, id, inner, total, looped);
                        }
                    }
                    Value::Array(items) => items.iter().for_each(|c| visit(c, id, in_loop, total, looped)),
                    _ => {}
                }
            }
            visit(&f["body"], *id, false, &mut total, &mut looped);
            if looped > 0 || total >= 2 {
                out.insert((f["name"].as_str().unwrap().to_string(), name.clone()));
            }
        }
    }
    out
}

#[derive(Debug, Clone)]
enum Stmt {
    Read(usize),
    Write(usize),
    Bump(usize),
}

fn render(stmt: &Stmt) -> String {
    const VARS: [&str; 3] = ["alpha", "beta", "gamma"];
    match stmt {
        Stmt::Read(v) => format!("acc += {};", VARS[*v]),
        Stmt::Write(v) => format!("{} = acc;", VARS[*v]),
        Stmt::Bump(v) => format!("{}++;", VARS[*v]),
    }
}

fn stmt() -> impl Strategy<Value = Stmt> {
    prop_oneof![
        3 => (0usize..3).prop_map(Stmt::Read),
        1 => (0usize..3).prop_map(Stmt::Write),
        1 => (0usize..3).prop_map(Stmt::Bump),
    ]
}

fn contract_source(funcs: &[(Vec<Stmt>, Vec<Stmt>)]) -> String {
    let mut s = format!("{HEADER}contract Gen {{\n    uint256 public alpha;\n    uint256 public beta;\n    uint256 public gamma;\n");
    for (i, (outside, inside)) in funcs.iter().enumerate() {
        s.push_str(&format!("\n    function f{i}(uint256 n) external returns (uint256 acc) {{\n"));
        for st in outside {
            s.push_str(&format!("        {}\n", render(st)));
        }
        s.push_str("        for (uint256 i = 0; i < n; i++) {\n");
        for st in inside {
            s.push_str(&format!("            {}\n", render(st)));
        }
        s.push_str("        }\n    }\n");
    }
    s.push_str("}\n");
    s
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 24, ..ProptestConfig::default() })]

    #[test]
    fn refactoring_detector_matches_def_use_oracle(
        funcs in prop::collection::vec((prop::collection::vec(stmt(), 0..4), prop::collection::vec(stmt(), 0..4)), 1..4)
    ) {
        let src = contract_source(&funcs);
        let r = build(&src);
        prop_assert!(r.is_success(), "{}", r.error_report());
        let expected = refactoring_oracle(r.ast.as_ref().unwrap());
        let got: BTreeSet<(String, String)> = DetectorRegistry::builtin()
            .run_detector("state_variable_refactoring", &r)
            .unwrap()
            .into_iter()
            .map(|f| (f.function.unwrap(), f.subject))
            .collect();
        prop_assert_eq!(got, expected);

        for var in ["alpha", "beta", "gamma"] {
            let got: Vec<String> = query_ast(&r, &Selector::FunctionsWriting(var.into()))
                .iter()
                .map(|n| n.name().to_string())
                .collect();
            prop_assert_eq!(got, writers_oracle(r.ast.as_ref().unwrap(), var));
        }
    }
}

#[test]
fn loop_read_without_writes_is_one_finding() {
    let src = fixture("../../patterns/state_variable_refactoring.json");
    let entry: Value = serde_json::from_str(&src).unwrap();
    let before = entry["examples"][0]["codeBefore"].as_str().unwrap();
    let r = build(before);
    let findings = DetectorRegistry::builtin().run_detector("state_variable_refactoring", &r).unwrap();
    assert_eq!(findings.len(), 1);
    let oracle = refactoring_oracle(r.ast.as_ref().unwrap());
    assert_eq!(oracle, BTreeSet::from([("total".to_string(), "rate".to_string())]));
}
