//! Unreachable functions, branches and statements.

use std::collections::BTreeSet;

use super::{Context, Finding, DEAD_CODE};
use crate::frontend::{ast, Node};

/// Function and modifier ids reachable from external entry points.
fn reachable(ctx: &Context<'_>) -> BTreeSet<i64> {
    let mut seen = BTreeSet::new();
    let mut stack: Vec<Node<'_>> = Vec::new();
    for contract in ctx.index.contracts() {
        for n in contract.list("nodes") {
            let root = match n.node_type() {
                "FunctionDefinition" => {
                    matches!(n.str("visibility"), Some("public" | "external"))
                        || matches!(n.str("kind"), Some("constructor" | "receive" | "fallback"))
                        || n.bool("virtual")
                        || n.child("overrides").is_some()
                }
                "ModifierDefinition" => n.bool("virtual") || n.child("overrides").is_some(),
                // Initializers run at deployment.
                "VariableDeclaration" => true,
                _ => false,
            };
            if root && seen.insert(n.id()) {
                stack.push(n);
            }
        }
    }
    while let Some(n) = stack.pop() {
        for r in n.walk() {
            let mut targets: Vec<i64> = r.referenced_declaration().into_iter().collect();
            // User-defined operators and `using for` bindings.
            if let Some(id) = r.json().get("function").and_then(|f| f.as_i64()) {
                targets.push(id);
            }
            for id in targets {
                if let Some(d) = ctx.index.get(id) {
                    if (d.is("FunctionDefinition") || d.is("ModifierDefinition")) && seen.insert(id) {
                        stack.push(d);
                    }
                }
            }
        }
    }
    seen
}

/// Value of a boolean expression known at compile time.
fn const_bool(ctx: &Context<'_>, e: &Node<'_>) -> Option<bool> {
    match e.node_type() {
        "Literal" if e.str("kind") == Some("bool") => Some(e.str("value")? == "true"),
        "TupleExpression" => match e.list("components").as_slice() {
            [inner] => const_bool(ctx, inner),
            _ => None,
        },
        "UnaryOperation" if e.str("operator") == Some("!") => const_bool(ctx, &e.child("subExpression")?).map(|b| !b),
        "BinaryOperation" => {
            let l = const_bool(ctx, &e.child("leftExpression")?);
            let r = const_bool(ctx, &e.child("rightExpression")?);
            match (e.str("operator")?, l, r) {
                ("&&", Some(false), _) | ("&&", _, Some(false)) => Some(false),
                ("&&", Some(true), Some(true)) => Some(true),
                ("||", Some(true), _) | ("||", _, Some(true)) => Some(true),
                ("||", Some(false), Some(false)) => Some(false),
                ("==", Some(a), Some(b)) => Some(a == b),
                ("!=", Some(a), Some(b)) => Some(a != b),
                _ => None,
            }
        }
        "Identifier" => {
            let d = ctx.index.declaration(e)?;
            if d.is("VariableDeclaration") && ast::mutability(&d) == "constant" {
                const_bool(ctx, &d.child("value")?)
            } else {
                None
            }
        }
        _ => None,
    }
}

fn terminates(stmt: &Node<'_>) -> bool {
    match stmt.node_type() {
        "Return" | "Break" | "Continue" | "RevertStatement" | "Throw" => true,
        "ExpressionStatement" => stmt.child("expression").is_some_and(|e| {
            e.is("FunctionCall")
                && e.child("expression").is_some_and(|c| {
                    c.is("Identifier") && c.name() == "revert" && c.is_builtin_ref()
                })
        }),
        _ => false,
    }
}

fn first_line(text: &str) -> &str {
    text.lines().next().unwrap_or_default().trim_end()
}

pub fn dead_code(ctx: &Context<'_>) -> Vec<Finding> {
    let live = reachable(ctx);
    let mut out = Vec::new();
    for contract in ctx.contracts() {
        let kind = contract.str("contractKind").unwrap_or_default();
        if kind == "library" || contract.bool("abstract") {
            // Other source units may use these.
            continue;
        }
        for n in contract.list("nodes") {
            let callable = n.is("FunctionDefinition") || n.is("ModifierDefinition");
            if !callable || live.contains(&n.id()) || n.child("body").is_none() {
                continue;
            }
            let what = if n.is("ModifierDefinition") { "modifier" } else { "function" };
            out.push(
                ctx.finding(DEAD_CODE, &n, n.name())
                    .because(format!("{what} `{}` is not reachable from any external entry point", n.name()))
                    .rewrite(format!("delete the {what}"), None),
            );
        }
    }
    for f in ctx.bodies() {
        let body = f.child("body").expect("bodies() filters");
        for n in body.walk() {
            match n.node_type() {
                "IfStatement" | "WhileStatement" => {
                    let Some(cond) = n.child("condition") else { continue };
                    let Some(value) = const_bool(ctx, &cond) else { continue };
                    let dead_else = n.is("IfStatement") && value && n.child("falseBody").is_some();
                    if value && !dead_else {
                        continue;
                    }
                    let text = ctx.text(&cond);
                    let branch = if dead_else { "else branch" } else if n.is("IfStatement") { "branch" } else { "loop body" };
                    out.push(
                        ctx.finding(DEAD_CODE, &n, text)
                            .because(format!("the {branch} never runs because `{text}` is always {}", value))
                            .rewrite("remove the branch and the condition", None),
                    );
                }
                "Block" | "UncheckedBlock" => {
                    let stmts = n.list("statements");
                    if let Some(pos) = stmts.iter().position(terminates) {
                        if let Some(next) = stmts.get(pos + 1) {
                            let text = first_line(ctx.text(next));
                            out.push(
                                ctx.finding(DEAD_CODE, next, text)
                                    .because(format!("statement follows `{}` and can never execute", first_line(ctx.text(&stmts[pos]))))
                                    .rewrite("delete the statements after the terminating statement", None),
                            );
                        }
                    }
                }
                _ => {}
            }
        }
    }
    out
}
