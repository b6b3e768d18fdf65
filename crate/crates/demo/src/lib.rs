//! Three operations over precompiled presets, exported to JavaScript:
//! detector scan, deployment gas, and candidate verification. The
//! presets carry the compiler's standard-JSON output so nothing here
//! needs solc.

use std::sync::OnceLock;

use gasloop_core::detectors::DetectorRegistry;
use gasloop_core::frontend::{from_standard_json, CompilationResult, CompilerSettings};
use gasloop_core::gas::{measure_deployment, EmbeddedBackend};
use gasloop_core::verification::consistency::choose_constructor_args;
use gasloop_core::verification::{build_suite, RefactorCandidate, Stage, SuiteLimits, Verifier, DEFAULT_SEED};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use wasm_bindgen::prelude::*;

pub const PRESETS_JSON: &str = include_str!("../presets.json");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Preset {
    pub id: String,
    pub label: String,
    pub source: String,
    /// Standard-JSON compiler output for `source`.
    pub output: Value,
}

pub fn load_presets() -> &'static [Preset] {
    static PRESETS: OnceLock<Vec<Preset>> = OnceLock::new();
    PRESETS.get_or_init(|| serde_json::from_str(PRESETS_JSON).expect("presets.json is valid"))
}

fn preset(id: &str) -> Result<&'static Preset, String> {
    load_presets().iter().find(|p| p.id == id).ok_or_else(|| format!("unknown preset `{id}`"))
}

pub fn compilation(p: &Preset) -> Result<CompilationResult, String> {
    let r = from_standard_json(&p.source, &CompilerSettings::default(), &p.output).map_err(|e| e.to_string())?;
    if !r.is_success() {
        return Err(format!("{}: {}", p.id, r.error_report()));
    }
    Ok(r)
}

/// Lighter than the CLI default so the page stays responsive.
fn verifier() -> Verifier {
    Verifier {
        limits: SuiteLimits { fuzz_runs: 25, ..SuiteLimits::default() },
        ..Verifier::default()
    }
}

pub fn preset_list() -> Value {
    load_presets()
        .iter()
        .map(|p| json!({ "id": p.id, "label": p.label, "source": p.source }))
        .collect()
}

pub fn detect_preset(id: &str) -> Result<Value, String> {
    let p = preset(id)?;
    let r = compilation(p)?;
    let run = DetectorRegistry::builtin().run_all(&r);
    let findings: Vec<Value> = run
        .findings
        .values()
        .flatten()
        .map(|f| {
            json!({
                "pattern": f.pattern_name,
                "subject": f.subject,
                "line": f.span.line(&p.source),
                "evidence": f.evidence,
            })
        })
        .collect();
    Ok(json!({ "contract": r.contract_name(), "detectorsRun": run.calls, "findings": findings }))
}

pub fn measure_preset(id: &str) -> Result<Value, String> {
    let r = compilation(preset(id)?)?;
    let v = verifier();
    let suite = build_suite(&r.abi(), v.limits, DEFAULT_SEED);
    let args = choose_constructor_args(&suite, &r, &v.evm).map_err(|e| e.to_string())?;
    let m = measure_deployment(r.creation_bytecode(), &args, &EmbeddedBackend::default()).map_err(|e| e.to_string())?;
    Ok(json!({
        "contract": r.contract_name(),
        "gas": m.gas,
        "constructorArgs": format!("0x{}", alloy_primitives::hex::encode(&args)),
        "bytecodeBytes": r.creation_bytecode().len(),
    }))
}

pub fn verify_presets(base_id: &str, candidate_id: &str) -> Result<Value, String> {
    let (bp, cp) = (preset(base_id)?, preset(candidate_id)?);
    let base = compilation(bp)?;
    let cand = compilation(cp)?;
    let candidate = RefactorCandidate {
        stage: Stage::NewPattern,
        base_source: bp.source.clone(),
        candidate_source: cp.source.clone(),
        applied_patterns: Vec::new(),
        llm_transcript: Vec::new(),
        repaired: false,
    };
    let v = verifier().verify(&base, candidate, &cand).map_err(|e| e.to_string())?;
    let consistency = v.consistency.as_ref().map(|c| {
        json!({
            "passed": c.passed,
            "casesRun": c.cases_run,
            "probesRun": c.probes_run,
            "divergences": c.divergences.iter().take(3).map(|d| json!({
                "function": d.function,
                "inputs": d.inputs,
                "observedAt": d.observed_at,
                "original": d.original,
                "candidate": d.candidate,
            })).collect::<Vec<_>>(),
        })
    });
    Ok(json!({
        "accepted": v.accepted,
        "rejectedAt": v.rejected_at.map(|g| g.to_string()),
        "audit": {
            "passed": v.audit.passed,
            "newFindings": v.audit.new_findings.iter().map(|f| format!("{} at {}: {}", f.detector, f.location, f.description)).collect::<Vec<_>>(),
        },
        "consistency": consistency,
        "gasBefore": v.gas_before.as_ref().map(|g| g.gas),
        "gasAfter": v.gas_after.as_ref().map(|g| g.gas),
        "saved": v.saving(),
    }))
}

fn to_js(r: Result<Value, String>) -> Result<String, JsError> {
    r.map(|v| v.to_string()).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub fn presets() -> String {
    preset_list().to_string()
}

#[wasm_bindgen]
pub fn detect(id: &str) -> Result<String, JsError> {
    to_js(detect_preset(id))
}

#[wasm_bindgen]
pub fn measure(id: &str) -> Result<String, JsError> {
    to_js(measure_preset(id))
}

#[wasm_bindgen]
pub fn verify(base: &str, candidate: &str) -> Result<String, JsError> {
    to_js(verify_presets(base, candidate))
}
