//! Rules about how state variables are declared and laid out.

use super::util::{is_string_or_bytes, is_value_type};
use super::{Context, Finding, CONSTANT_VARIABLE_USAGE, IMMUTABLE_VARIABLE_USAGE, STORAGE_PACKING};
use crate::frontend::{ast, AstIndex, Node, SourceSpan};

/// Declaration text with `keyword` inserted before the variable name.
fn with_keyword(ctx: &Context<'_>, var: &Node<'_>, keyword: &str) -> Option<String> {
    let decl = ctx.text(var);
    let name_at = var.str("nameLocation").and_then(SourceSpan::parse)?.offset;
    let rel = name_at.checked_sub(var.src().offset)?;
    if rel > decl.len() {
        return None;
    }
    Some(format!("{}{keyword} {};", &decl[..rel], &decl[rel..]))
}

fn reads_state(expr: &Node<'_>, index: &AstIndex<'_>) -> bool {
    expr.walk().iter().any(|n| {
        n.is("FunctionCall") && n.str("kind") == Some("functionCall")
            || index
                .declaration(n)
                .is_some_and(|d| d.is("VariableDeclaration") && d.bool("stateVariable") && ast::mutability(&d) == "mutable")
    })
}

pub fn immutable_variable_usage(ctx: &Context<'_>) -> Vec<Finding> {
    let all_writes = ast::writes(&ctx.index.root());
    let mut out = Vec::new();
    for contract in ctx.contracts() {
        if contract.str("contractKind") == Some("library") {
            continue;
        }
        let ctor = ast::functions(&contract).into_iter().find(ast::is_constructor);
        let assembly = ast::has_inline_assembly(&contract);
        for var in ast::state_variables(&contract) {
            if ast::mutability(&var) != "mutable" || !is_value_type(&var, &ctx.index) {
                continue;
            }
            let writes: Vec<_> = all_writes.iter().filter(|w| w.target == var.id()).collect();
            let snippet = with_keyword(ctx, &var, "immutable");
            let rewrite = "declare the variable immutable so its value is embedded in the runtime code";

            if let Some(init) = var.child("value") {
                if init.bool("isPure") || !writes.is_empty() {
                    continue;
                }
                out.push(
                    ctx.finding(IMMUTABLE_VARIABLE_USAGE, &var, var.name())
                        .because(format!(
                            "`{}` is initialized at deployment from `{}` and never reassigned",
                            var.name(),
                            ctx.text(&init)
                        ))
                        .rewrite(rewrite, snippet)
                        .heuristic_if(assembly || reads_state(&init, &ctx.index)),
                );
                continue;
            }

            let Some(ctor) = ctor else { continue };
            if writes.is_empty() || !writes.iter().all(|w| ctx.index.enclosing_function(&w.node) == Some(ctor)) {
                continue;
            }
            let body = ctor.child("body").expect("constructors have bodies");
            let single_top_level = writes.len() == 1 && is_top_level_assignment(ctx, &writes[0].node, &body);
            let reads_in_ctor = ast::references(&body, var.id()).len() > writes.len();
            let ctor_delegates = !ast::calls(&body).is_empty() || !ctor.list("modifiers").is_empty();
            out.push(
                ctx.finding(IMMUTABLE_VARIABLE_USAGE, &var, var.name())
                    .because(format!("`{}` is assigned only in the constructor", var.name()))
                    .rewrite(rewrite, snippet)
                    .heuristic_if(assembly || !single_top_level || reads_in_ctor || ctor_delegates),
            );
        }
    }
    out
}

/// `x = e;` as a statement directly in the constructor body, the only
/// form every 0.8 compiler accepts for immutables.
fn is_top_level_assignment(ctx: &Context<'_>, write: &Node<'_>, body: &Node<'_>) -> bool {
    write.is("Assignment")
        && write.str("operator") == Some("=")
        && write
            .child("leftHandSide")
            .is_some_and(|l| super::util::unparen(l).is("Identifier"))
        && ctx
            .index
            .parent(write)
            .filter(|s| s.is("ExpressionStatement"))
            .and_then(|s| ctx.index.parent(&s))
            .is_some_and(|b| b == *body)
}

pub fn constant_variable_usage(ctx: &Context<'_>) -> Vec<Finding> {
    let all_writes = ast::writes(&ctx.index.root());
    let mut out = Vec::new();
    for contract in ctx.contracts() {
        for var in ast::state_variables(&contract) {
            if ast::mutability(&var) != "mutable" {
                continue;
            }
            if !(is_value_type(&var, &ctx.index) || is_string_or_bytes(&var)) {
                continue;
            }
            let Some(init) = var.child("value") else { continue };
            if !init.bool("isPure") || all_writes.iter().any(|w| w.target == var.id()) {
                continue;
            }
            out.push(
                ctx.finding(CONSTANT_VARIABLE_USAGE, &var, var.name())
                    .because(format!(
                        "`{}` is initialized with the compile-time value `{}` and never reassigned",
                        var.name(),
                        ctx.text(&init)
                    ))
                    .rewrite("declare the variable constant", with_keyword(ctx, &var, "constant"))
                    .heuristic_if(ast::has_inline_assembly(&contract)),
            );
        }
    }
    out
}

/// Storage footprint of one declaration.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Footprint {
    /// A value of this many bytes that can share a slot.
    Packed(usize),
    /// Starts a fresh slot, occupies this many, and ends its last slot.
    Whole(usize),
}

pub(crate) fn footprint(type_name: &Node<'_>, index: &AstIndex<'_>) -> Option<Footprint> {
    use Footprint::*;
    match type_name.node_type() {
        "ElementaryTypeName" => {
            let name = type_name.name();
            Some(match name {
                "bool" => Packed(1),
                "address" => Packed(20),
                "string" | "bytes" => Whole(1),
                "uint" | "int" => Packed(32),
                _ => {
                    let bits = name.strip_prefix("uint").or_else(|| name.strip_prefix("int"));
                    if let Some(bits) = bits {
                        Packed(bits.parse::<usize>().ok()? / 8)
                    } else {
                        Packed(name.strip_prefix("bytes")?.parse().ok()?)
                    }
                }
            })
        }
        "UserDefinedTypeName" => {
            let decl = index.get(type_name.referenced_declaration()?)?;
            match decl.node_type() {
                "EnumDefinition" => Some(Packed(1)),
                "ContractDefinition" => Some(Packed(20)),
                "UserDefinedValueTypeDefinition" => footprint(&decl.child("underlyingType")?, index),
                "StructDefinition" => {
                    let members: Option<Vec<_>> = decl
                        .list("members")
                        .iter()
                        .map(|m| footprint(&m.child("typeName")?, index))
                        .collect();
                    Some(Whole(slot_count(&members?)))
                }
                _ => None,
            }
        }
        "Mapping" => Some(Whole(1)),
        "ArrayTypeName" => {
            let Some(len) = type_name.child("length") else {
                return Some(Whole(1));
            };
            let k: usize = len.is("Literal").then(|| len.str("value")?.parse().ok()).flatten()?;
            Some(match footprint(&type_name.child("baseType")?, index)? {
                Packed(s) => Whole(k.div_ceil(32 / s)),
                Whole(n) => Whole(k * n),
            })
        }
        "FunctionTypeName" => Some(Packed(if type_name.str("visibility") == Some("external") { 24 } else { 8 })),
        _ => None,
    }
}

/// Slots used when laying out `items` in order.
pub(crate) fn slot_count(items: &[Footprint]) -> usize {
    let (mut slots, mut used) = (0, 0);
    for item in items {
        match *item {
            Footprint::Packed(s) => {
                if used > 0 && used + s > 32 {
                    slots += 1;
                    used = 0;
                }
                used += s;
            }
            Footprint::Whole(n) => {
                if used > 0 {
                    slots += 1;
                    used = 0;
                }
                slots += n;
            }
        }
    }
    slots + usize::from(used > 0)
}

/// First-fit-decreasing assignment of packed sizes to slots; returns the
/// item indices per slot.
pub(crate) fn first_fit_decreasing(sizes: &[(usize, usize)]) -> Vec<Vec<usize>> {
    let mut order: Vec<_> = sizes.to_vec();
    order.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
    let mut bins: Vec<(usize, Vec<usize>)> = Vec::new();
    for (idx, size) in order {
        match bins.iter_mut().find(|(used, _)| used + size <= 32) {
            Some((used, items)) => {
                *used += size;
                items.push(idx);
            }
            None => bins.push((size, vec![idx])),
        }
    }
    bins.into_iter().map(|(_, items)| items).collect()
}

pub fn storage_packing(ctx: &Context<'_>) -> Vec<Finding> {
    let mut out = Vec::new();
    for contract in ctx.contracts() {
        if contract.str("contractKind") == Some("library") {
            continue;
        }
        let vars: Vec<Node<'_>> = ast::state_variables(&contract)
            .into_iter()
            .filter(|v| ast::mutability(v) == "mutable")
            .collect();
        if vars.len() < 2 {
            continue;
        }
        let Some(prints) = vars
            .iter()
            .map(|v| footprint(&v.child("typeName")?, &ctx.index))
            .collect::<Option<Vec<_>>>()
        else {
            continue;
        };
        let current = slot_count(&prints);
        let packed: Vec<(usize, usize)> = prints
            .iter()
            .enumerate()
            .filter_map(|(i, p)| match p {
                Footprint::Packed(s) => Some((i, *s)),
                Footprint::Whole(_) => None,
            })
            .collect();
        let bins = first_fit_decreasing(&packed);
        let whole: usize = prints
            .iter()
            .map(|p| match p {
                Footprint::Whole(n) => *n,
                Footprint::Packed(_) => 0,
            })
            .sum();
        let best = whole + bins.len();
        if best >= current {
            continue;
        }

        let mut order: Vec<usize> = bins.concat();
        order.extend(prints.iter().enumerate().filter(|(_, p)| matches!(p, Footprint::Whole(_))).map(|(i, _)| i));
        let moved = order
            .iter()
            .enumerate()
            .find(|(pos, idx)| pos != *idx)
            .map_or(0, |(_, idx)| *idx);
        let snippet: Vec<String> = order.iter().map(|&i| format!("{};", ctx.text(&vars[i]))).collect();
        let first = vars[0].src();
        let last = vars[vars.len() - 1].src();
        let span = SourceSpan {
            file_id: first.file_id,
            offset: first.offset,
            length: last.end() - first.offset,
        };
        let inherits_storage = contract
            .json()
            .get("linearizedBaseContracts")
            .and_then(|b| b.as_array())
            .is_some_and(|bases| {
                bases
                    .iter()
                    .filter_map(|b| b.as_i64())
                    .filter(|id| *id != contract.id())
                    .filter_map(|id| ctx.index.get(id))
                    .any(|b| !ast::state_variables(&b).is_empty())
            });
        out.push(
            ctx.finding_at(STORAGE_PACKING, span, &contract, vars[moved].name())
                .because(format!(
                    "state variables of `{}` use {current} slots in declaration order; {best} suffice when small types are grouped",
                    contract.name()
                ))
                .rewrite("reorder the declarations so variables smaller than 32 bytes share slots", Some(snippet.join("\n")))
                .heuristic_if(inherits_storage || ast::has_inline_assembly(&contract)),
        );
    }
    out
}

#[cfg(test)]
mod tests {
    use super::Footprint::*;
    use super::*;

    #[test]
    fn slot_layout() {
        assert_eq!(slot_count(&[]), 0);
        assert_eq!(slot_count(&[Packed(16), Packed(32), Packed(16)]), 3);
        assert_eq!(slot_count(&[Packed(16), Packed(16), Packed(32)]), 2);
        assert_eq!(slot_count(&[Packed(20), Packed(1), Whole(1), Packed(1)]), 3);
    }

    #[test]
    fn ffd_groups_small_values() {
        let bins = first_fit_decreasing(&[(0, 16), (1, 32), (2, 16)]);
        assert_eq!(bins, vec![vec![1], vec![0, 2]]);
    }
}
