use crate::library::{normalize_whitespace, NewPatternProposal};

pub const DECLINE_SENTINEL: &str = "no new pattern found";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Section {
    Name,
    Description,
    Tags,
    Code,
    Rationale,
}

fn labels() -> [(&'static str, Section); 9] {
    [
        ("pattern name", Section::Name),
        ("proposed name", Section::Name),
        ("name", Section::Name),
        ("description", Section::Description),
        ("tags", Section::Tags),
        ("matched code", Section::Code),
        ("relevant code", Section::Code),
        ("rationale", Section::Rationale),
        ("explanation", Section::Rationale),
    ]
}

/// Recognises `Label: rest`, `**Label:** rest`, `## Label` and similar.
fn heading(line: &str) -> Option<(Section, &str)> {
    let stripped = line.trim_start().trim_start_matches(['#', '*', '-', ' ']);
    let lower = stripped.to_ascii_lowercase();
    for (label, section) in labels() {
        if !lower.starts_with(label) {
            continue;
        }
        let rest = stripped[label.len()..].trim_start_matches('*');
        let rest = match rest.trim_start().strip_prefix(':') {
            Some(r) => r,
            None if rest.trim_matches(['*', ' ']).is_empty() => "",
            None => continue,
        };
        return Some((section, rest.trim_start_matches('*').trim()));
    }
    None
}

pub(crate) fn is_decline(text: &str) -> bool {
    normalize_whitespace(text).to_ascii_lowercase().contains(DECLINE_SENTINEL)
}

fn strip_code_marks(s: &str) -> &str {
    s.trim().trim_matches('`').trim()
}

/// Extracts a proposal from a reply in the requested template. Returns
/// `None` for declines and for replies missing a name or matched code.
pub fn parse_proposal(raw: &str) -> Option<NewPatternProposal> {
    let mut name = String::new();
    let mut description = Vec::new();
    let mut tags = String::new();
    let mut code: Vec<String> = Vec::new();
    let mut loose_code: Vec<String> = Vec::new();
    let mut rationale = Vec::new();

    let mut section = None;
    let mut fence: Option<Vec<&str>> = None;
    for line in raw.lines() {
        if let Some(block) = fence.as_mut() {
            if line.trim_start().starts_with("```") {
                let text = block.join("\n");
                if !text.trim().is_empty() {
                    code.push(text.trim_end().to_string());
                }
                fence = None;
            } else {
                block.push(line);
            }
            continue;
        }
        if line.trim_start().starts_with("```") {
            if section == Some(Section::Code) {
                fence = Some(Vec::new());
            }
            continue;
        }
        if let Some((s, rest)) = heading(line) {
            section = Some(s);
            let rest = rest.to_string();
            match s {
                Section::Name => name = strip_code_marks(&rest).to_string(),
                Section::Description => description.push(rest),
                Section::Tags => tags = rest,
                Section::Code if !rest.is_empty() => loose_code.push(strip_code_marks(&rest).to_string()),
                Section::Code => {}
                Section::Rationale => rationale.push(rest),
            }
            continue;
        }
        match section {
            Some(Section::Description) => description.push(line.to_string()),
            Some(Section::Rationale) => rationale.push(line.to_string()),
            Some(Section::Tags) if tags.trim().is_empty() => tags = line.to_string(),
            Some(Section::Code) => {
                let item = line.trim_start().strip_prefix("- ").unwrap_or(line);
                let item = strip_code_marks(item);
                if !item.is_empty() && !item.starts_with('(') {
                    loose_code.push(item.to_string());
                }
            }
            _ => {}
        }
    }
    if let Some(block) = fence {
        // Unterminated fence at the end of the reply.
        let text = block.join("\n");
        if !text.trim().is_empty() {
            code.push(text.trim_end().to_string());
        }
    }
    if code.is_empty() {
        code = loose_code;
    }
    let name = name.trim().to_string();
    if name.is_empty() || code.is_empty() || name.eq_ignore_ascii_case(DECLINE_SENTINEL) {
        return None;
    }
    let tags = tags
        .split(',')
        .map(|t| strip_code_marks(t).to_string())
        .filter(|t| !t.is_empty())
        .collect();
    Some(NewPatternProposal {
        proposed_name: name,
        description: normalize_whitespace(&description.join(" ")),
        tags,
        matched_code: code,
        rationale: normalize_whitespace(&rationale.join(" ")),
        raw_llm_text: raw.to_string(),
    })
}
