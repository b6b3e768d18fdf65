use gasloop_core::frontend::{Compiler, CompilerSettings, PINNED_VERSION};
use gasloop_demo::{detect_preset, load_presets, measure_preset, verify_presets, Preset};
use serde_json::Value;

const MANIFEST: &[(&str, &str)] = &[
    ("roles", "Roles: one bool mapping per role"),
    ("roles_bitmap", "Roles: bitmap of role flags"),
    ("roles_bitmap_exec", "Roles: bitmap plus an arbitrary delegatecall"),
    ("metadata", "Metadata: constructor-set storage"),
    ("metadata_immutable", "Metadata: immutable fields"),
    ("payroll", "Payroll: storage fee and memory array"),
    ("payroll_constant_fee", "Payroll: constant fee with a different value"),
];

fn regenerate() -> Vec<Preset> {
    let compiler = Compiler::discover(PINNED_VERSION).expect("compiler available");
    MANIFEST
        .iter()
        .map(|(id, label)| {
            let path = format!("{}/presets/{id}.sol", env!("CARGO_MANIFEST_DIR"));
            let source = std::fs::read_to_string(&path).unwrap();
            let output = compiler.compile_raw(&source, &CompilerSettings::default()).unwrap();
            Preset { id: id.to_string(), label: label.to_string(), source, output }
        })
        .collect()
}

/// Set GASLOOP_WRITE_PRESETS=1 to rewrite presets.json after editing a
/// preset source.
#[test]
fn presets_match_their_sources() {
    let fresh = regenerate();
    if std::env::var_os("GASLOOP_WRITE_PRESETS").is_some() {
        let text = serde_json::to_string(&fresh).unwrap() + "\n";
        std::fs::write(format!("{}/presets.json", env!("CARGO_MANIFEST_DIR")), text).unwrap();
        return;
    }
    assert_eq!(load_presets(), fresh.as_slice(), "presets.json is stale; rerun with GASLOOP_WRITE_PRESETS=1");
}

fn num(v: &Value, key: &str) -> u64 {
    v[key].as_u64().unwrap_or_else(|| panic!("{key} missing in {v}"))
}

#[test]
fn detect_flags_the_seeded_wastes() {
    let v = detect_preset("payroll").unwrap();
    assert_eq!(num(&v, "detectorsRun"), 12);
    let mut patterns: Vec<&str> = v["findings"].as_array().unwrap().iter().map(|f| f["pattern"].as_str().unwrap()).collect();
    patterns.dedup();
    assert_eq!(patterns, ["constant_variable_usage", "immutable_variable_usage", "memory_to_calldata"]);
    assert!(detect_preset("missing").is_err());
}

#[test]
fn measure_prefers_the_good_variant() {
    let bad = measure_preset("metadata").unwrap();
    let good = measure_preset("metadata_immutable").unwrap();
    assert!(num(&good, "gas") < num(&bad, "gas"));
    assert_ne!(bad["constructorArgs"], Value::from("0x"));
}

#[test]
fn verify_reports_each_gate() {
    let ok = verify_presets("roles", "roles_bitmap").unwrap();
    assert_eq!(ok["accepted"], true);
    assert!(ok["saved"].as_i64().unwrap() > 0);

    let audit = verify_presets("roles", "roles_bitmap_exec").unwrap();
    assert_eq!(audit["rejectedAt"], "security audit");

    let diverged = verify_presets("payroll", "payroll_constant_fee").unwrap();
    assert_eq!(diverged["rejectedAt"], "consistency check");
    assert!(!diverged["consistency"]["divergences"].as_array().unwrap().is_empty());

    let same = verify_presets("metadata", "metadata").unwrap();
    assert_eq!(same["rejectedAt"], "gas comparison");
}
