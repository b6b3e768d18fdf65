use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

/// A candidate pattern suggested by the innovator.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NewPatternProposal {
    pub proposed_name: String,
    pub description: String,
    #[serde(default)]
    pub tags: Vec<String>,
    /// Snippets of the current contract the pattern applies to.
    pub matched_code: Vec<String>,
    pub rationale: String,
    #[serde(default)]
    pub raw_llm_text: String,
}

/// Collapses every whitespace run to one space and trims the ends.
pub fn normalize_whitespace(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// The proposal with every text field whitespace-normalized.
pub fn normalize_proposal(p: &NewPatternProposal) -> NewPatternProposal {
    NewPatternProposal {
        proposed_name: normalize_whitespace(&p.proposed_name),
        description: normalize_whitespace(&p.description),
        tags: p.tags.iter().map(|t| normalize_whitespace(t)).collect(),
        matched_code: p.matched_code.iter().map(|c| normalize_whitespace(c)).collect(),
        rationale: normalize_whitespace(&p.rationale),
        raw_llm_text: p.raw_llm_text.clone(),
    }
}

/// Identity of a proposal for blacklisting: lowercased name, sorted tags
/// and a digest of the normalized matched code. Description and rationale
/// are deliberately left out so rewording does not evade the blacklist.
pub fn fingerprint(p: &NewPatternProposal) -> String {
    let name = normalize_whitespace(&p.proposed_name).to_lowercase();
    let mut tags: Vec<String> = p
        .tags
        .iter()
        .map(|t| normalize_whitespace(t).to_lowercase())
        .filter(|t| !t.is_empty())
        .collect();
    tags.sort();
    tags.dedup();
    let code: Vec<String> = p.matched_code.iter().map(|c| normalize_whitespace(c)).collect();
    let digest = Sha256::digest(code.join("\n").as_bytes());
    format!("{name}|{}|{}", tags.join(","), alloy_primitives::hex::encode(digest))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn proposal(name: &str, code: &[&str]) -> NewPatternProposal {
        NewPatternProposal {
            proposed_name: name.into(),
            description: "Pack role flags into one word.".into(),
            tags: vec!["storage".into(), "mapping".into()],
            matched_code: code.iter().map(|s| s.to_string()).collect(),
            rationale: "one slot per address".into(),
            raw_llm_text: String::new(),
        }
    }

    #[test]
    fn whitespace_and_case_do_not_change_identity() {
        let a = proposal("bitmap_role_management", &["mapping(address => bool) public isAdmin;"]);
        let mut b = proposal("Bitmap_Role_Management ", &["mapping(address  =>\n bool) public isAdmin;"]);
        b.description = "  Pack role   flags into one word. ".into();
        b.tags.reverse();
        assert_eq!(fingerprint(&a), fingerprint(&b));
    }

    #[test]
    fn different_code_differs() {
        let a = proposal("x", &["uint256 a;"]);
        let b = proposal("x", &["uint256 b;"]);
        assert_ne!(fingerprint(&a), fingerprint(&b));
    }

    proptest! {
        #[test]
        fn fingerprint_is_normalization_invariant(
            name in "[A-Za-z_ ]{1,20}",
            tags in prop::collection::vec("[a-z \t]{0,8}", 0..4),
            code in prop::collection::vec("[a-z0-9;(){} \n\t]{1,40}", 1..3),
        ) {
            let p = NewPatternProposal {
                proposed_name: name,
                description: String::new(),
                tags,
                matched_code: code,
                rationale: String::new(),
                raw_llm_text: String::new(),
            };
            prop_assert_eq!(fingerprint(&p), fingerprint(&normalize_proposal(&p)));
            let twice = normalize_proposal(&normalize_proposal(&p));
            prop_assert_eq!(twice, normalize_proposal(&p));
        }
    }
}
