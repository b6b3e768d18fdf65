use crate::library::PatternLibrary;

pub const SEEKER_SYSTEM_PROMPT: &str = "\
You are a smart contract analysis expert.
Please analyze the given contract code and select relevant patterns from the provided optimization pattern list (no limit on quantity) to optimize the Gas Fee.
Only return pattern IDs, separated by commas, e.g., repeated_computation, state_variable_refactoring.";

pub const SEEKER_USER_TEMPLATE: &str = "\
Please analyze the following smart contract and select the patterns that need optimization:

[Contract Source Code Here]

Below are the provided optimization patterns:

[Pattern Descriptions Here]

Please only return pattern IDs, separated by commas.";

/// System and user messages for natural-language retrieval.
pub fn seeker_prompt(source: &str, library: &PatternLibrary) -> (String, String) {
    let user = SEEKER_USER_TEMPLATE
        .replacen("[Pattern Descriptions Here]", &library.descriptions(), 1)
        .replacen("[Contract Source Code Here]", source, 1);
    (SEEKER_SYSTEM_PROMPT.to_string(), user)
}
