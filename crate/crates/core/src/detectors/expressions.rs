//! Rules about redundant evaluation of side-effect-free expressions.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use super::util::{declared_under, expression_parent, unparen};
use super::{Context, Finding, LOOP_INVARIANT_CODE, REPEATED_COMPUTATION};
use crate::frontend::{ast, AstIndex, Node};

/// Declarations read by `expr` if it is built only from arithmetic,
/// bitwise, comparison and boolean operators over literals, locals,
/// parameters, constants and immutables. `None` otherwise.
fn pure_operands(expr: &Node<'_>, index: &AstIndex<'_>) -> Option<BTreeSet<i64>> {
    match expr.node_type() {
        "BinaryOperation" => {
            if expr.json().get("function").is_some() {
                return None;
            }
            let mut l = pure_operands(&expr.child("leftExpression")?, index)?;
            l.extend(pure_operands(&expr.child("rightExpression")?, index)?);
            Some(l)
        }
        "UnaryOperation" => match expr.str("operator") {
            Some("-" | "~" | "!") if expr.json().get("function").is_none() => pure_operands(&expr.child("subExpression")?, index),
            _ => None,
        },
        "TupleExpression" if !expr.bool("isInlineArray") => match expr.list("components").as_slice() {
            [inner] => pure_operands(inner, index),
            _ => None,
        },
        "Literal" => Some(BTreeSet::new()),
        "Identifier" => {
            let decl = index.declaration(expr)?;
            if !decl.is("VariableDeclaration") {
                return None;
            }
            if decl.bool("stateVariable") && ast::mutability(&decl) == "mutable" {
                return None;
            }
            Some(BTreeSet::from([decl.id()]))
        }
        _ => None,
    }
}

fn is_candidate(n: &Node<'_>) -> bool {
    match n.node_type() {
        "BinaryOperation" => true,
        "UnaryOperation" => matches!(n.str("operator"), Some("-" | "~" | "!")),
        _ => false,
    }
}

/// Whether evaluating `expr` can revert: division and modulo always can,
/// and checked arithmetic outside `unchecked` can overflow.
fn can_revert(expr: &Node<'_>, index: &AstIndex<'_>) -> bool {
    let checked = !index.in_unchecked(expr);
    expr.walk().iter().any(|n| match (n.node_type(), n.str("operator")) {
        ("BinaryOperation", Some("/" | "%")) => true,
        ("BinaryOperation", Some("+" | "-" | "*" | "**")) => checked,
        ("UnaryOperation", Some("-")) => checked,
        _ => false,
    })
}

fn local_type(n: &Node<'_>) -> String {
    let t = n.type_string();
    if t.is_empty() || t.starts_with("int_const") || t.starts_with("rational_const") {
        "uint256".into()
    } else {
        t.to_string()
    }
}

pub fn repeated_computation(ctx: &Context<'_>) -> Vec<Finding> {
    let mut out = Vec::new();
    for f in ctx.bodies() {
        let body = f.child("body").expect("bodies() filters");
        let written: BTreeSet<i64> = ast::writes(&body).iter().map(|w| w.target).collect();
        let mut classes: BTreeMap<String, Vec<Node<'_>>> = BTreeMap::new();
        for n in body.walk() {
            if !is_candidate(&n) || n.bool("isPure") {
                continue;
            }
            let Some(ops) = pure_operands(&n, &ctx.index) else { continue };
            if ops.is_empty() || !ops.is_disjoint(&written) {
                continue;
            }
            classes.entry(ast::canonical(&n)).or_default().push(n);
        }
        classes.retain(|_, v| v.len() >= 2);
        let repeated: BTreeSet<i64> = classes.values().flatten().map(|n| n.id()).collect();
        for nodes in classes.values_mut() {
            nodes.retain(|n| {
                !ctx.index
                    .ancestors(n)
                    .iter()
                    .take_while(|a| **a != body)
                    .any(|a| repeated.contains(&a.id()))
            });
        }
        for nodes in classes.values() {
            if nodes.len() < 2 {
                continue;
            }
            let first = nodes[0];
            let text = ctx.text(&first);
            let mixed = nodes.iter().any(|n| ctx.index.in_unchecked(n) != ctx.index.in_unchecked(&first));
            out.push(
                ctx.finding(REPEATED_COMPUTATION, &first, text)
                    .because(format!(
                        "`{text}` is evaluated {} times in `{}` and none of its operands change",
                        nodes.len(),
                        f.name()
                    ))
                    .rewrite(
                        "compute the expression once into a local variable and reuse it",
                        Some(format!("{} cached = {text};", local_type(&first))),
                    )
                    .heuristic_if(mixed),
            );
        }
    }
    out
}

/// Loops enclosing `n` inside `func`, innermost first, skipping loops
/// for which `n` is part of the one-shot initialization.
fn enclosing_loops<'a>(ctx: &Context<'a>, n: &Node<'_>, func: &Node<'_>) -> Vec<Node<'a>> {
    ctx.index
        .ancestors(n)
        .into_iter()
        .take_while(|a| a != func)
        .filter(ast::is_loop)
        .filter(|l| !l.child("initializationExpression").is_some_and(|i| i.contains(n)))
        .collect()
}

pub fn loop_invariant_code(ctx: &Context<'_>) -> Vec<Finding> {
    let mut out = Vec::new();
    for f in ctx.bodies() {
        let body = f.child("body").expect("bodies() filters");
        let mut loop_deps: HashMap<i64, BTreeSet<i64>> = HashMap::new();
        let mut target: BTreeMap<i64, Node<'_>> = BTreeMap::new();
        let mut nodes: Vec<Node<'_>> = Vec::new();
        for n in body.walk() {
            if !is_candidate(&n) || n.bool("isPure") {
                continue;
            }
            let Some(ops) = pure_operands(&n, &ctx.index) else { continue };
            if ops.is_empty() {
                continue;
            }
            let loops = enclosing_loops(ctx, &n, &f);
            if loops.first().and_then(|l| l.child("condition")).is_some_and(|c| unparen(c) == n) {
                continue;
            }
            let mut outermost = None;
            for l in &loops {
                let deps = loop_deps.entry(l.id()).or_insert_with(|| {
                    let mut d: BTreeSet<i64> = ast::writes(l).iter().map(|w| w.target).collect();
                    d.extend(declared_under(l));
                    d
                });
                if !ops.is_disjoint(deps) {
                    break;
                }
                outermost = Some(*l);
            }
            if let Some(l) = outermost {
                target.insert(n.id(), l);
                nodes.push(n);
            }
        }
        for n in nodes {
            if expression_parent(&n, &ctx.index).is_some_and(|p| target.contains_key(&p.id())) {
                continue;
            }
            let l = target[&n.id()];
            let text = ctx.text(&n);
            let kind = match l.node_type() {
                "ForStatement" => "for",
                "WhileStatement" => "while",
                _ => "do-while",
            };
            out.push(
                ctx.finding(LOOP_INVARIANT_CODE, &n, text)
                    .because(format!(
                        "`{text}` inside the {kind} loop at line {} does not depend on anything the loop changes",
                        l.src().line(ctx.source)
                    ))
                    .rewrite(
                        "evaluate the expression once before the loop and use the local inside it",
                        Some(format!("{} hoisted = {text};", local_type(&n))),
                    )
                    .heuristic_if(can_revert(&n, &ctx.index)),
            );
        }
    }
    out
}
