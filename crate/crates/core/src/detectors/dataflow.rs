//! Repeated storage reads that a local variable could absorb.

use std::collections::BTreeMap;

use super::util::{has_external_call, is_value_type, written_in_closure};
use super::{Context, Finding, STATE_VARIABLE_REFACTORING};
use crate::frontend::{ast, Node};

pub fn state_variable_refactoring(ctx: &Context<'_>) -> Vec<Finding> {
    let mut out = Vec::new();
    for f in ctx.bodies() {
        if !f.is("FunctionDefinition") {
            // Modifier bodies wrap arbitrary function code at `_`.
            continue;
        }
        let body = f.child("body").expect("bodies() filters");
        let mut reads: BTreeMap<i64, Vec<Node<'_>>> = BTreeMap::new();
        for n in body.walk() {
            if !n.is("Identifier") {
                continue;
            }
            let Some(decl) = ctx.index.declaration(&n) else { continue };
            if decl.is("VariableDeclaration")
                && decl.bool("stateVariable")
                && ast::mutability(&decl) == "mutable"
                && is_value_type(&decl, &ctx.index)
            {
                reads.entry(decl.id()).or_default().push(n);
            }
        }
        let external = has_external_call(&body) || ast::has_inline_assembly(&body);
        for (var, uses) in reads {
            if written_in_closure(&body, &ctx.index, var) {
                continue;
            }
            let in_loop: Vec<&Node<'_>> = uses
                .iter()
                .filter(|u| ctx.index.ancestors(u).iter().take_while(|a| **a != f).any(ast::is_loop))
                .collect();
            if in_loop.is_empty() && uses.len() < 2 {
                continue;
            }
            let decl = ctx.index.get(var).expect("resolved above");
            let at = in_loop.first().copied().unwrap_or_else(|| &uses[1]);
            let why = if in_loop.is_empty() {
                format!("`{}` is read {} times from storage in `{}` with no write in between", decl.name(), uses.len(), f.name())
            } else {
                format!("`{}` is read from storage inside a loop in `{}` and the loop never writes it", decl.name(), f.name())
            };
            let local_ty = decl.child("typeName").map(|t| ctx.text(&t)).unwrap_or("uint256");
            out.push(
                ctx.finding(STATE_VARIABLE_REFACTORING, at, decl.name())
                    .because(why)
                    .rewrite(
                        "copy the variable into a local once and read the local afterwards",
                        Some(format!("{local_ty} {0}Cached = {0};", decl.name())),
                    )
                    .heuristic_if(external),
            );
        }
    }
    out
}
