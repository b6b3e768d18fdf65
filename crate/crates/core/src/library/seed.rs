//! Pattern documents bundled with the crate.

pub const SEED_FILES: &[(&str, &str)] = &[
    ("array_length_caching.json", include_str!("../../patterns/array_length_caching.json")),
    ("constant_variable_usage.json", include_str!("../../patterns/constant_variable_usage.json")),
    ("custom_errors_over_require_strings.json", include_str!("../../patterns/custom_errors_over_require_strings.json")),
    ("dead_code.json", include_str!("../../patterns/dead_code.json")),
    ("function_visibility.json", include_str!("../../patterns/function_visibility.json")),
    ("immutable_variable_usage.json", include_str!("../../patterns/immutable_variable_usage.json")),
    ("loop_invariant_code.json", include_str!("../../patterns/loop_invariant_code.json")),
    ("memory_to_calldata.json", include_str!("../../patterns/memory_to_calldata.json")),
    ("repeated_computation.json", include_str!("../../patterns/repeated_computation.json")),
    ("state_variable_refactoring.json", include_str!("../../patterns/state_variable_refactoring.json")),
    ("storage_packing.json", include_str!("../../patterns/storage_packing.json")),
    ("unchecked_arithmetic.json", include_str!("../../patterns/unchecked_arithmetic.json")),
];
