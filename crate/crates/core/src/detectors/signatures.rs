//! Rules about function signatures and revert reasons.

use super::util::expression_parent;
use super::{Context, Finding, CUSTOM_ERRORS, FUNCTION_VISIBILITY, MEMORY_TO_CALLDATA};
use crate::frontend::{ast, Node};

/// Internal uses of function `id`: direct calls, `super.f`, and taking the
/// function as a value. `this.f` is an external call and not counted.
fn internal_references<'a>(ctx: &Context<'a>, id: i64) -> Vec<Node<'a>> {
    ctx.index
        .root()
        .walk()
        .into_iter()
        .filter(|n| (n.is("Identifier") || n.is("MemberAccess")) && n.referenced_declaration() == Some(id))
        .filter(|n| {
            !(n.is("MemberAccess") && n.child("expression").is_some_and(|e| e.is("Identifier") && e.name() == "this"))
        })
        .collect()
}

fn is_inherited_surface(f: &Node<'_>) -> bool {
    f.bool("virtual")
        || f.child("overrides").is_some()
        || f.json().get("baseFunctions").and_then(|b| b.as_array()).is_some_and(|b| !b.is_empty())
}

fn is_plain_function(f: &Node<'_>) -> bool {
    f.str("kind") == Some("function") && f.child("body").is_some()
}

pub fn memory_to_calldata(ctx: &Context<'_>) -> Vec<Finding> {
    let mut out = Vec::new();
    for contract in ctx.contracts() {
        for f in ast::functions(&contract) {
            let visibility = f.str("visibility").unwrap_or_default();
            if !is_plain_function(&f) || !matches!(visibility, "external" | "public") {
                continue;
            }
            if visibility == "public" && !internal_references(ctx, f.id()).is_empty() {
                // Internal callers pass memory values; calldata would not compile.
                continue;
            }
            let body = f.child("body").expect("checked above");
            let written: Vec<i64> = ast::writes(&body).iter().map(|w| w.target).collect();
            for p in ast::parameters(&f) {
                if p.str("storageLocation") != Some("memory") || written.contains(&p.id()) {
                    continue;
                }
                let uses = ast::references(&body, p.id());
                let escapes = uses.iter().any(|u| !is_element_read(ctx, u));
                let decl = ctx.text(&p);
                out.push(
                    ctx.finding(MEMORY_TO_CALLDATA, &p, p.name())
                        .because(format!(
                            "parameter `{}` of {} function `{}` is declared memory and never written",
                            p.name(),
                            visibility,
                            f.name()
                        ))
                        .rewrite(
                            "declare the parameter calldata so the decoder does not copy it into memory",
                            Some(decl.replacen("memory", "calldata", 1)),
                        )
                        .heuristic_if(escapes || is_inherited_surface(&f)),
                );
            }
        }
    }
    out
}

/// `x[i]`, `x.length`, `x.field`: reads that work the same on calldata.
fn is_element_read(ctx: &Context<'_>, use_: &Node<'_>) -> bool {
    let Some(parent) = expression_parent(use_, &ctx.index) else {
        return false;
    };
    match parent.node_type() {
        "IndexAccess" => parent.child("baseExpression").is_some_and(|b| b.contains(use_)),
        "MemberAccess" => parent.child("expression").is_some_and(|b| b.contains(use_)),
        _ => false,
    }
}

pub fn function_visibility(ctx: &Context<'_>) -> Vec<Finding> {
    let mut out = Vec::new();
    for contract in ctx.contracts() {
        if contract.str("contractKind") == Some("library") {
            continue;
        }
        for f in ast::functions(&contract) {
            if !is_plain_function(&f) || f.str("visibility") != Some("public") {
                continue;
            }
            if !internal_references(ctx, f.id()).is_empty() {
                continue;
            }
            out.push(
                ctx.finding(FUNCTION_VISIBILITY, &f, f.name())
                    .because(format!("public function `{}` has no internal callers", f.name()))
                    .rewrite("change the visibility to external", external_header(ctx, &f))
                    .heuristic_if(is_inherited_surface(&f)),
            );
        }
    }
    out
}

fn external_header(ctx: &Context<'_>, f: &Node<'_>) -> Option<String> {
    let start = f.src().offset;
    let body_start = f.child("body")?.src().offset;
    let params_end = f.child("parameters")?.src().end();
    let header = ctx.source.get(start..body_start)?.trim_end();
    let split = params_end.checked_sub(start)?.min(header.len());
    let (head, tail) = header.split_at(split);
    Some(format!("{head}{}", replace_word(tail, "public", "external")))
}

fn replace_word(text: &str, word: &str, with: &str) -> String {
    let boundary = |c: Option<char>| c.is_none_or(|c| !(c.is_ascii_alphanumeric() || c == '_'));
    let mut from = 0;
    while let Some(rel) = text[from..].find(word) {
        let at = from + rel;
        let before = text[..at].chars().next_back();
        let after = text[at + word.len()..].chars().next();
        if boundary(before) && boundary(after) {
            return format!("{}{with}{}", &text[..at], &text[at + word.len()..]);
        }
        from = at + word.len();
    }
    text.to_string()
}

/// CamelCase error name derived from a revert message.
pub(crate) fn error_name(message: &str) -> String {
    let tail = message.rsplit(':').next().unwrap_or(message);
    let name: String = tail
        .split(|c: char| !c.is_ascii_alphanumeric())
        .filter(|w| !w.is_empty())
        .take(4)
        .map(|w| {
            let mut cs = w.chars();
            let first = cs.next().expect("non-empty").to_ascii_uppercase();
            std::iter::once(first).chain(cs.map(|c| c.to_ascii_lowercase())).collect::<String>()
        })
        .collect();
    match name.chars().next() {
        Some(c) if c.is_ascii_alphabetic() => name,
        _ => "RequirementFailed".to_string(),
    }
}

pub fn custom_errors_over_require_strings(ctx: &Context<'_>) -> Vec<Finding> {
    let mut out = Vec::new();
    for call in ctx.index.root().descendants("FunctionCall") {
        let Some(callee) = call.child("expression") else {
            continue;
        };
        if !callee.is("Identifier") || !callee.is_builtin_ref() {
            continue;
        }
        let args = call.list("arguments");
        let (message, condition) = match (callee.name(), args.as_slice()) {
            ("require", [cond, msg]) if is_string_literal(msg) => (msg, Some(cond)),
            ("revert", [msg]) if is_string_literal(msg) => (msg, None),
            _ => continue,
        };
        let text = message.str("value").unwrap_or_default();
        let name = error_name(text);
        let snippet = match condition {
            Some(cond) => format!("error {name}();\n\nif (!({})) revert {name}();", ctx.text(cond)),
            None => format!("error {name}();\n\nrevert {name}();"),
        };
        out.push(
            ctx.finding(CUSTOM_ERRORS, &call, callee.name())
                .because(format!("`{}` carries the revert string \"{text}\"", callee.name()))
                .rewrite("declare a custom error and revert with it instead of the string", Some(snippet)),
        );
    }
    out
}

fn is_string_literal(n: &Node<'_>) -> bool {
    n.is("Literal") && matches!(n.str("kind"), Some("string" | "unicodeString"))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn error_names() {
        assert_eq!(error_name("Wallet: insufficient balance"), "InsufficientBalance");
        assert_eq!(error_name("not owner"), "NotOwner");
        assert_eq!(error_name("!!"), "RequirementFailed");
        assert_eq!(error_name("42 is bad"), "RequirementFailed");
    }

    #[test]
    fn word_replacement_respects_boundaries() {
        assert_eq!(replace_word(" publicKey public view", "public", "external"), " publicKey external view");
    }
}
