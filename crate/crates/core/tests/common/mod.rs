#![allow(dead_code)]

use gasloop_core::clock::StepClock;
use gasloop_core::detectors::DetectorRegistry;
use gasloop_core::gateway::{AgentRole, Gateway, MockScript, ScriptedChat, Transcript};
use gasloop_core::library::{Blacklist, PatternLibrary, VerifiedPool};
use gasloop_core::orchestrator::{FinalReport, LoopConfig, OptimizeError, Orchestrator};
use gasloop_core::verification::Verifier;

pub fn fixture(name: &str) -> String {
    std::fs::read_to_string(format!("{}/tests/fixtures/{name}", env!("CARGO_MANIFEST_DIR"))).unwrap()
}

pub fn fenced(source: &str) -> String {
    format!("Rewritten contract:\n\n```solidity\n{source}```\n")
}

pub fn proposal(name: &str, description: &str, tags: &str, code: &[&str], rationale: &str) -> String {
    let mut s = format!("Pattern Name: {name}\nDescription: {description}\nTags: {tags}\nMatched Code:\n");
    for c in code {
        s.push_str(&format!("```solidity\n{c}\n```\n"));
    }
    s.push_str(&format!("Rationale: {rationale}\n"));
    s
}

pub const DECLINE: &str = "no new pattern found";

pub fn bitmap_proposal() -> String {
    proposal(
        "bitmap_role_flags",
        "Each role is a separate bool mapping, so role data for one account spans several storage slots and getters.",
        "storage, mapping, access-control",
        &["mapping(address => bool) public isAdmin;", "mapping(address => bool) public isMinter;"],
        "One uint256 bitmap per account holds every role, which removes a mapping and its getter.",
    )
}

pub fn element_cache_proposal() -> String {
    proposal(
        "loop_element_caching",
        "The loop body indexes the same calldata array element more than once.",
        "loop, calldata, array",
        &["credit[accounts[i]] += net;\n            emit Credited(accounts[i], net);"],
        "Reading the element into a local once drops the repeated bounds check and offset computation.",
    )
}

pub fn unchecked_fee_proposal() -> String {
    proposal(
        "unchecked_fee_math",
        "The fee computation is checked for overflow although the operands look small.",
        "arithmetic, unchecked",
        &["uint256 net = amount - (amount * feeBps) / 10000;"],
        "Wrapping the fee computation in unchecked removes the overflow checks.",
    )
}

pub const TREASURY_SEEKER: &str = "immutable_variable_usage, constant_variable_usage, memory_to_calldata";

/// Seeker stage plus two accepted new patterns, then `last_innovator`.
pub fn treasury_script(last_innovator: &str, last_executor: Option<&str>) -> MockScript {
    let mut s = MockScript::default();
    s.push(AgentRole::Seeker, TREASURY_SEEKER);
    s.push(AgentRole::Executor, fenced(&fixture("treasury_existing.sol")));
    s.push(AgentRole::Innovator, bitmap_proposal());
    s.push(AgentRole::Executor, fenced(&fixture("treasury_bitmap.sol")));
    s.push(AgentRole::Innovator, element_cache_proposal());
    s.push(AgentRole::Executor, fenced(&fixture("treasury_cached.sol")));
    s.push(AgentRole::Innovator, last_innovator);
    if let Some(e) = last_executor {
        s.push(AgentRole::Executor, e);
    }
    s
}

pub struct Run {
    pub result: Result<FinalReport, OptimizeError>,
    pub transcript: Transcript,
    pub blacklist: Blacklist,
    pub pool: VerifiedPool,
}

impl Run {
    pub fn report(&self) -> &FinalReport {
        self.result.as_ref().expect("run succeeds")
    }
}

pub fn run_with(source: &str, chat: ScriptedChat, config: LoopConfig, verifier: &Verifier) -> Run {
    let lib = PatternLibrary::seed();
    let reg = DetectorRegistry::builtin();
    let gw = Gateway::mock(chat);
    let clock = StepClock::new(1_700_000_000);
    let mut blacklist = Blacklist::in_memory();
    let mut pool = VerifiedPool::in_memory();
    let o = Orchestrator {
        library: &lib,
        registry: &reg,
        gateway: &gw,
        verifier,
        clock: &clock,
        config,
    };
    let result = o.optimize(source, &mut blacklist, &mut pool);
    Run {
        result,
        transcript: gw.transcript(),
        blacklist,
        pool,
    }
}

pub fn run(source: &str, script: &MockScript, config: LoopConfig) -> Run {
    run_with(source, ScriptedChat::from_script(script), config, &Verifier::default())
}
