//! Deterministic differential test cases derived from an ABI.

use alloy_dyn_abi::{DynSolType, DynSolValue, JsonAbiExt, Specifier};
use alloy_json_abi::{Function, JsonAbi, Param, StateMutability};
use alloy_primitives::{address, Address, Bytes, FixedBytes, I256, U256};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::gas::DEPLOYER;

pub const DEFAULT_SEED: u64 = 0x0067_6173_6c6f_6f70;

/// Second externally owned account, used as an alternative caller and as
/// an address argument.
pub const ALICE: Address = address!("70997970c51812dc3a010c7d01b50e0d17dc79c8");
pub const BOB: Address = address!("3c44cdddb6a900fa2b585dd299e03d12fa4293bc");

/// Callers that every suite uses; also the address pool for fuzzing.
pub const ACCOUNTS: [Address; 3] = [DEPLOYER, ALICE, BOB];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SuiteLimits {
    pub combinations: usize,
    pub fuzz_runs: usize,
    /// Constructor argument sets tried before giving up on deployment.
    pub deployment_attempts: usize,
}

impl Default for SuiteLimits {
    fn default() -> Self {
        Self {
            combinations: 5,
            fuzz_runs: 100,
            deployment_attempts: 16,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CaseKind {
    Unit,
    Boundary,
    Fuzz,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TestCase {
    /// Canonical signature, e.g. `transfer(address,uint256)`.
    pub function: String,
    pub kind: CaseKind,
    pub caller: Address,
    pub value: U256,
    pub calldata: Bytes,
    /// Human-readable arguments.
    pub inputs: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConsistencySuite {
    pub seed: u64,
    pub limits: SuiteLimits,
    /// ABI-encoded constructor argument sets in the order they are tried.
    /// The first set that deploys both versions is used for both.
    pub deployment_init: Vec<Bytes>,
    pub cases: Vec<TestCase>,
    /// Read-only functions called after every case to expose state changes.
    pub probes: Vec<TestCase>,
    /// Functions left out, with the reason.
    pub skipped: Vec<(String, String)>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Combo {
    Zero,
    One,
    Max,
    Min,
    Mid,
}

const FUNCTION_COMBOS: [Combo; 5] = [Combo::Zero, Combo::One, Combo::Max, Combo::Min, Combo::Mid];
/// Deployment tries non-trivial values first: zero arguments turn storage
/// writes into no-ops and hide the cost of the code under test.
const DEPLOY_COMBOS: [Combo; 5] = [Combo::One, Combo::Zero, Combo::Max, Combo::Min, Combo::Mid];

fn int_bounds(bits: usize) -> (I256, I256) {
    let max = (I256::ONE << (bits - 1)) - I256::ONE;
    (max, -max - I256::ONE)
}

fn uint_max(bits: usize) -> U256 {
    if bits == 256 {
        U256::MAX
    } else {
        (U256::from(1) << bits) - U256::from(1)
    }
}

fn combo_value(ty: &DynSolType, combo: Combo) -> DynSolValue {
    match ty {
        DynSolType::Bool => DynSolValue::Bool(matches!(combo, Combo::One | Combo::Max | Combo::Mid)),
        DynSolType::Uint(bits) => {
            let max = uint_max(*bits);
            let v = match combo {
                Combo::Zero | Combo::Min => U256::ZERO,
                Combo::One => U256::from(1),
                Combo::Max => max,
                Combo::Mid => max >> 1,
            };
            DynSolValue::Uint(v, *bits)
        }
        DynSolType::Int(bits) => {
            let (max, min) = int_bounds(*bits);
            let v = match combo {
                Combo::Zero => I256::ZERO,
                Combo::One => I256::ONE,
                Combo::Max => max,
                Combo::Min => min,
                Combo::Mid => max.asr(1),
            };
            DynSolValue::Int(v, *bits)
        }
        DynSolType::Address => DynSolValue::Address(match combo {
            Combo::Zero | Combo::Min => Address::ZERO,
            Combo::One => ALICE,
            Combo::Max => Address::repeat_byte(0xff),
            Combo::Mid => DEPLOYER,
        }),
        DynSolType::FixedBytes(n) => {
            let mut word = [0u8; 32];
            match combo {
                Combo::Zero | Combo::Min => {}
                Combo::One => word[n - 1] = 1,
                Combo::Max => word[..*n].fill(0xff),
                Combo::Mid => word[..*n].fill(0x7f),
            }
            DynSolValue::FixedBytes(FixedBytes(word), *n)
        }
        DynSolType::Bytes => DynSolValue::Bytes(match combo {
            Combo::Zero | Combo::Min => Vec::new(),
            Combo::One => vec![1],
            Combo::Max => vec![0xff; 33],
            Combo::Mid => vec![0x7f; 4],
        }),
        DynSolType::String => DynSolValue::String(match combo {
            Combo::Zero | Combo::Min => String::new(),
            Combo::One => "a".into(),
            Combo::Max => "~".repeat(33),
            Combo::Mid => "gas".into(),
        }),
        DynSolType::Array(inner) => DynSolValue::Array(match combo {
            Combo::Zero | Combo::Min => Vec::new(),
            Combo::One => vec![combo_value(inner, Combo::One)],
            Combo::Max => vec![combo_value(inner, Combo::Max); 3],
            Combo::Mid => vec![combo_value(inner, Combo::One), combo_value(inner, Combo::Mid)],
        }),
        DynSolType::FixedArray(inner, n) => DynSolValue::FixedArray(vec![combo_value(inner, combo); *n]),
        DynSolType::Tuple(items) => DynSolValue::Tuple(items.iter().map(|t| combo_value(t, combo)).collect()),
        DynSolType::Function => DynSolValue::Function(alloy_primitives::Function::ZERO),
        #[allow(unreachable_patterns)]
        _ => DynSolValue::Bool(false),
    }
}

fn fuzz_value(ty: &DynSolType, rng: &mut ChaCha8Rng) -> DynSolValue {
    match ty {
        DynSolType::Bool => DynSolValue::Bool(rng.gen()),
        DynSolType::Uint(bits) => {
            let raw = U256::from_limbs(rng.gen::<[u64; 4]>());
            // Mix full-width values with small ones; loop bounds and
            // indices are usually small.
            let v = match rng.gen_range(0..4) {
                0 => raw,
                1 => raw >> 248,
                2 => raw >> 192,
                _ => raw >> 128,
            };
            DynSolValue::Uint(v & uint_max(*bits), *bits)
        }
        DynSolType::Int(bits) => {
            let raw = if rng.gen_bool(0.5) {
                I256::from_raw(U256::from_limbs(rng.gen::<[u64; 4]>()))
            } else {
                I256::try_from(rng.gen_range(-1000i64..1000)).expect("small")
            };
            // Sign-extend from the low `bits` bits.
            let shift = 256 - bits;
            DynSolValue::Int((raw << shift).asr(shift), *bits)
        }
        DynSolType::Address => DynSolValue::Address(if rng.gen_bool(0.75) {
            ACCOUNTS[rng.gen_range(0..ACCOUNTS.len())]
        } else {
            Address::from(rng.gen::<[u8; 20]>())
        }),
        DynSolType::FixedBytes(n) => {
            let mut word = [0u8; 32];
            rng.fill(&mut word[..*n]);
            DynSolValue::FixedBytes(FixedBytes(word), *n)
        }
        DynSolType::Bytes => {
            let len = rng.gen_range(0..70);
            DynSolValue::Bytes((0..len).map(|_| rng.gen()).collect())
        }
        DynSolType::String => {
            let len = rng.gen_range(0..40);
            DynSolValue::String((0..len).map(|_| rng.gen_range(b' '..=b'~') as char).collect())
        }
        DynSolType::Array(inner) => {
            let len = rng.gen_range(0..5);
            DynSolValue::Array((0..len).map(|_| fuzz_value(inner, rng)).collect())
        }
        DynSolType::FixedArray(inner, n) => DynSolValue::FixedArray((0..*n).map(|_| fuzz_value(inner, rng)).collect()),
        DynSolType::Tuple(items) => DynSolValue::Tuple(items.iter().map(|t| fuzz_value(t, rng)).collect()),
        DynSolType::Function => DynSolValue::Function(alloy_primitives::Function::ZERO),
        #[allow(unreachable_patterns)]
        _ => DynSolValue::Bool(false),
    }
}

pub fn render_value(v: &DynSolValue) -> String {
    match v {
        DynSolValue::Bool(b) => b.to_string(),
        DynSolValue::Uint(u, _) => u.to_string(),
        DynSolValue::Int(i, _) => i.to_string(),
        DynSolValue::Address(a) => a.to_checksum(None),
        DynSolValue::FixedBytes(w, n) => format!("0x{}", alloy_primitives::hex::encode(&w[..*n])),
        DynSolValue::Bytes(b) => format!("0x{}", alloy_primitives::hex::encode(b)),
        DynSolValue::String(s) => format!("{s:?}"),
        DynSolValue::Array(items) | DynSolValue::FixedArray(items) => {
            format!("[{}]", items.iter().map(render_value).collect::<Vec<_>>().join(", "))
        }
        DynSolValue::Tuple(items) => format!("({})", items.iter().map(render_value).collect::<Vec<_>>().join(", ")),
        other => format!("{other:?}"),
    }
}

pub fn render_args(values: &[DynSolValue]) -> String {
    values.iter().map(render_value).collect::<Vec<_>>().join(", ")
}

fn resolve(params: &[Param]) -> Result<Vec<DynSolType>, String> {
    params.iter().map(|p| p.resolve().map_err(|e| format!("{}: {e}", p.ty))).collect()
}

fn seed_for(seed: u64, label: &str) -> u64 {
    seed ^ crate::gateway::fnv1a(label.as_bytes())
}

fn is_read_only(f: &Function) -> bool {
    matches!(f.state_mutability, StateMutability::View | StateMutability::Pure)
}

fn case(f: &Function, kind: CaseKind, caller: Address, values: &[DynSolValue]) -> Option<TestCase> {
    let calldata = f.abi_encode_input(values).ok()?;
    Some(TestCase {
        function: f.signature(),
        kind,
        caller,
        value: U256::ZERO,
        calldata: calldata.into(),
        inputs: render_args(values),
    })
}

/// Cases for every externally callable function in `abi`: `limits.combinations`
/// deterministic argument combinations (zero, one, max, min, mid) and
/// `limits.fuzz_runs` seeded random inputs. Functions without parameters
/// have exactly one input, so they get one case and no fuzzing.
pub fn build_suite(abi: &JsonAbi, limits: SuiteLimits, seed: u64) -> ConsistencySuite {
    let mut suite = ConsistencySuite {
        seed,
        limits,
        deployment_init: deployment_candidates(abi, limits, seed),
        cases: Vec::new(),
        probes: Vec::new(),
        skipped: Vec::new(),
    };
    let mut functions: Vec<&Function> = abi.functions().collect();
    functions.sort_by_key(|f| f.signature());
    for f in functions {
        let types = match resolve(&f.inputs) {
            Ok(t) => t,
            Err(e) => {
                suite.skipped.push((f.signature(), e));
                continue;
            }
        };
        // Probes: getters with no arguments, or with address arguments only
        // (balances, roles), called for every known account.
        if is_read_only(f) {
            if types.is_empty() {
                suite.probes.extend(case(f, CaseKind::Unit, DEPLOYER, &[]));
            } else if types.len() == 1 && types[0] == DynSolType::Address {
                for a in ACCOUNTS {
                    suite.probes.extend(case(f, CaseKind::Unit, DEPLOYER, &[DynSolValue::Address(a)]));
                }
            }
        }
        if types.is_empty() {
            suite.cases.extend(case(f, CaseKind::Unit, DEPLOYER, &[]));
            continue;
        }
        for combo in FUNCTION_COMBOS.iter().take(limits.combinations) {
            let kind = match combo {
                Combo::One | Combo::Mid => CaseKind::Unit,
                _ => CaseKind::Boundary,
            };
            let values: Vec<DynSolValue> = types.iter().map(|t| combo_value(t, *combo)).collect();
            suite.cases.extend(case(f, kind, DEPLOYER, &values));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed_for(seed, &f.signature()));
        for _ in 0..limits.fuzz_runs {
            let values: Vec<DynSolValue> = types.iter().map(|t| fuzz_value(t, &mut rng)).collect();
            let caller = ACCOUNTS[rng.gen_range(0..2)];
            suite.cases.extend(case(f, CaseKind::Fuzz, caller, &values));
        }
    }
    suite
}

/// Encoded constructor argument sets, most useful first.
fn deployment_candidates(abi: &JsonAbi, limits: SuiteLimits, seed: u64) -> Vec<Bytes> {
    let Some(ctor) = &abi.constructor else {
        return vec![Bytes::new()];
    };
    let Ok(types) = resolve(&ctor.inputs) else {
        return vec![Bytes::new()];
    };
    if types.is_empty() {
        return vec![Bytes::new()];
    }
    let mut out: Vec<Bytes> = Vec::new();
    let mut push = |values: Vec<DynSolValue>| {
        if let Ok(enc) = ctor.abi_encode_input(&values) {
            let enc = Bytes::from(enc);
            if !out.contains(&enc) {
                out.push(enc);
            }
        }
    };
    for combo in DEPLOY_COMBOS {
        push(types.iter().map(|t| combo_value(t, combo)).collect());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed_for(seed, "constructor"));
    for _ in DEPLOY_COMBOS.len()..limits.deployment_attempts.max(DEPLOY_COMBOS.len()) {
        push(types.iter().map(|t| fuzz_value(t, &mut rng)).collect());
    }
    out.truncate(limits.deployment_attempts.max(1));
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn integer_bounds() {
        let (max, min) = int_bounds(8);
        assert_eq!(max, I256::try_from(127).unwrap());
        assert_eq!(min, I256::try_from(-128).unwrap());
        assert_eq!(uint_max(8), U256::from(255));
        assert_eq!(uint_max(256), U256::MAX);
    }

    #[test]
    fn fuzz_values_fit_their_type() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..200 {
            match fuzz_value(&DynSolType::Uint(16), &mut rng) {
                DynSolValue::Uint(v, 16) => assert!(v <= U256::from(u16::MAX)),
                other => panic!("{other:?}"),
            }
            match fuzz_value(&DynSolType::Int(8), &mut rng) {
                DynSolValue::Int(v, 8) => assert!(v >= I256::try_from(-128).unwrap() && v <= I256::try_from(127).unwrap()),
                other => panic!("{other:?}"),
            }
        }
    }
}
