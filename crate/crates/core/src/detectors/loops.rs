//! Rules about loop headers: counter arithmetic and bound reads.

use std::collections::BTreeMap;

use super::util::{has_external_call, unparen, written_in_closure};
use super::{Context, Finding, ARRAY_LENGTH_CACHING, UNCHECKED_ARITHMETIC};
use crate::frontend::{ast, Node};

/// `(counter, +1)` for `i++`, `++i`, `i += 1`; `-1` for decrements.
fn counter_step(expr: &Node<'_>) -> Option<(i64, i8)> {
    match expr.node_type() {
        "UnaryOperation" => {
            let step = match expr.str("operator")? {
                "++" => 1,
                "--" => -1,
                _ => return None,
            };
            let sub = unparen(expr.child("subExpression")?);
            sub.is("Identifier").then(|| Some((sub.referenced_declaration()?, step))).flatten()
        }
        "Assignment" => {
            let step = match expr.str("operator")? {
                "+=" => 1,
                "-=" => -1,
                _ => return None,
            };
            let lhs = unparen(expr.child("leftHandSide")?);
            let rhs = unparen(expr.child("rightHandSide")?);
            let one = rhs.is("Literal") && rhs.str("value") == Some("1");
            (lhs.is("Identifier") && one).then(|| Some((lhs.referenced_declaration()?, step))).flatten()
        }
        _ => None,
    }
}

fn is_ident(n: Option<Node<'_>>, id: i64) -> bool {
    n.map(unparen).is_some_and(|n| n.is("Identifier") && n.referenced_declaration() == Some(id))
}

/// Whether the loop condition bounds the counter strictly on the side it
/// moves towards: `i < n` (or `n > i`) for increments, `i > n` (or
/// `n < i`) for decrements.
fn bounded(cond: &Node<'_>, id: i64, step: i8) -> bool {
    if !cond.is("BinaryOperation") {
        return false;
    }
    let (l, r) = (cond.child("leftExpression"), cond.child("rightExpression"));
    match (cond.str("operator"), step) {
        (Some("<"), 1) | (Some(">"), -1) => is_ident(l, id) && !is_ident(r, id),
        (Some(">"), 1) | (Some("<"), -1) => is_ident(r, id) && !is_ident(l, id),
        _ => false,
    }
}

/// `continue` statements that target `loop`.
fn continues_of(ctx: &Context<'_>, loop_: &Node<'_>) -> usize {
    let Some(body) = loop_.child("body") else { return 0 };
    body.descendants("Continue")
        .iter()
        .filter(|c| ctx.index.ancestors(c).into_iter().find(ast::is_loop) == Some(*loop_))
        .count()
}

pub fn unchecked_arithmetic(ctx: &Context<'_>) -> Vec<Finding> {
    let mut out = Vec::new();
    for contract in ctx.contracts() {
        for loop_ in contract.descendants("ForStatement") {
            if ctx.index.in_unchecked(&loop_) {
                continue;
            }
            let Some(step_expr) = loop_.child("loopExpression").and_then(|s| s.child("expression")) else {
                continue;
            };
            let Some((id, step)) = counter_step(&step_expr) else { continue };
            let Some(counter) = ctx.index.get(id) else { continue };
            if !counter.type_string().starts_with("uint") {
                continue;
            }
            let Some(cond) = loop_.child("condition").map(unparen) else { continue };
            if !bounded(&cond, id, step) {
                continue;
            }
            let body = loop_.child("body");
            if body.is_some_and(|b| ast::writes(&b).iter().any(|w| w.target == id)) {
                continue;
            }
            let name = counter.name();
            let op = if step == 1 { "++" } else { "--" };
            let init = loop_.child("initializationExpression").map(|i| ctx.text(&i)).unwrap_or_default();
            let init = init.trim_end_matches(';');
            let snippet = format!(
                "for ({init}; {}; ) {{\n    // loop body\n    unchecked {{\n        {op}{name};\n    }}\n}}",
                ctx.text(&cond)
            );
            let continues = continues_of(ctx, &loop_);
            out.push(
                ctx.finding(UNCHECKED_ARITHMETIC, &step_expr, name)
                    .because(format!(
                        "`{}` cannot {} because the condition `{}` bounds `{name}` first",
                        ctx.text(&step_expr),
                        if step == 1 { "overflow" } else { "underflow" },
                        ctx.text(&cond)
                    ))
                    .rewrite(
                        "move the counter update to the end of the body inside an unchecked block",
                        Some(snippet),
                    )
                    .heuristic_if(continues > 0),
            );
        }
    }
    out
}

fn is_storage_array(base: &Node<'_>) -> bool {
    let t = base.type_string();
    t.contains("storage") && (t.contains("[]") || t.starts_with("bytes storage"))
}

pub fn array_length_caching(ctx: &Context<'_>) -> Vec<Finding> {
    let mut groups: BTreeMap<(i64, i64), Node<'_>> = BTreeMap::new();
    let mut out = Vec::new();
    for f in ctx.bodies() {
        for m in f.descendants("MemberAccess") {
            if m.str("memberName") != Some("length") {
                continue;
            }
            let Some(base) = m.child("expression").map(unparen) else { continue };
            if !base.is("Identifier") || !is_storage_array(&base) {
                continue;
            }
            let Some(decl) = ctx.index.declaration(&base) else { continue };
            if !decl.bool("stateVariable") {
                continue;
            }
            let mut target = None;
            for l in ctx.index.ancestors(&m).into_iter().take_while(|a| *a != f).filter(ast::is_loop) {
                if l.child("initializationExpression").is_some_and(|i| i.contains(&m)) {
                    continue;
                }
                if written_in_closure(&l, &ctx.index, decl.id()) {
                    break;
                }
                target = Some(l);
            }
            if let Some(l) = target {
                groups.entry((l.id(), decl.id())).or_insert(m);
            }
        }
    }
    for ((loop_id, var), m) in groups {
        let l = ctx.index.get(loop_id).expect("indexed");
        let name = ctx.index.get(var).expect("indexed").name();
        out.push(
            ctx.finding(ARRAY_LENGTH_CACHING, &m, name)
                .because(format!("`{name}.length` is read from storage on every iteration and the loop never resizes `{name}`"))
                .rewrite(
                    "read the length into a local before the loop",
                    Some(format!("uint256 {name}Length = {name}.length;")),
                )
                .heuristic_if(has_external_call(&l)),
        );
    }
    out
}
