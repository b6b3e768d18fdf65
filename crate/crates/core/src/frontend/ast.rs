//! Read-only view over the compiler's exported JSON AST.

use std::collections::HashMap;

use serde_json::Value;

use super::SourceSpan;

#[derive(Debug, Clone, Copy)]
pub struct Node<'a> {
    value: &'a Value,
}

impl PartialEq for Node<'_> {
    fn eq(&self, other: &Self) -> bool {
        std::ptr::eq(self.value, other.value)
    }
}

impl<'a> Node<'a> {
    pub fn new(value: &'a Value) -> Option<Self> {
        value.get("nodeType").and_then(Value::as_str)?;
        Some(Self { value })
    }

    pub fn json(&self) -> &'a Value {
        self.value
    }

    pub fn node_type(&self) -> &'a str {
        self.value["nodeType"].as_str().unwrap_or_default()
    }

    pub fn is(&self, node_type: &str) -> bool {
        self.node_type() == node_type
    }

    pub fn id(&self) -> i64 {
        self.value.get("id").and_then(Value::as_i64).unwrap_or(-1)
    }

    pub fn src(&self) -> SourceSpan {
        self.str("src").and_then(SourceSpan::parse).unwrap_or_default()
    }

    pub fn str(&self, key: &str) -> Option<&'a str> {
        self.value.get(key).and_then(Value::as_str)
    }

    pub fn bool(&self, key: &str) -> bool {
        self.value.get(key).and_then(Value::as_bool).unwrap_or(false)
    }

    pub fn name(&self) -> &'a str {
        self.str("name").unwrap_or_default()
    }

    pub fn child(&self, key: &str) -> Option<Node<'a>> {
        self.value.get(key).and_then(Node::new)
    }

    pub fn list(&self, key: &str) -> Vec<Node<'a>> {
        self.value
            .get(key)
            .and_then(Value::as_array)
            .map(|items| items.iter().filter_map(Node::new).collect())
            .unwrap_or_default()
    }

    pub fn referenced_declaration(&self) -> Option<i64> {
        self.value.get("referencedDeclaration").and_then(Value::as_i64)
    }

    pub fn type_string(&self) -> &'a str {
        self.value
            .get("typeDescriptions")
            .and_then(|t| t.get("typeString"))
            .and_then(Value::as_str)
            .unwrap_or_default()
    }

    /// Direct child nodes in field order, including nodes inside arrays.
    pub fn children(&self) -> Vec<Node<'a>> {
        let mut out = Vec::new();
        if let Value::Object(map) = self.value {
            for (key, v) in map {
                if key == "typeDescriptions" {
                    continue;
                }
                collect_nodes(v, &mut out);
            }
        }
        out
    }

    /// Pre-order traversal starting at (and including) this node.
    pub fn walk(&self) -> Vec<Node<'a>> {
        let mut out = Vec::new();
        let mut stack = vec![*self];
        while let Some(n) = stack.pop() {
            out.push(n);
            let mut kids = n.children();
            kids.reverse();
            stack.extend(kids);
        }
        out
    }

    pub fn descendants(&self, node_type: &str) -> Vec<Node<'a>> {
        self.walk().into_iter().filter(|n| n.is(node_type)).collect()
    }

    pub fn contains(&self, other: &Node<'_>) -> bool {
        self.src().contains(&other.src())
    }
}

fn collect_nodes<'a>(v: &'a Value, out: &mut Vec<Node<'a>>) {
    match v {
        Value::Object(_) => {
            if let Some(n) = Node::new(v) {
                out.push(n);
            }
        }
        Value::Array(items) => {
            for item in items {
                collect_nodes(item, out);
            }
        }
        _ => {}
    }
}

/// Lookup tables over one source unit.
#[derive(Debug)]
pub struct AstIndex<'a> {
    root: Node<'a>,
    by_id: HashMap<i64, Node<'a>>,
    parent: HashMap<i64, i64>,
}

impl<'a> AstIndex<'a> {
    pub fn new(root: Node<'a>) -> Self {
        let mut by_id = HashMap::new();
        let mut parent = HashMap::new();
        let mut stack = vec![root];
        while let Some(n) = stack.pop() {
            by_id.insert(n.id(), n);
            for c in n.children() {
                parent.insert(c.id(), n.id());
                stack.push(c);
            }
        }
        Self { root, by_id, parent }
    }

    pub fn root(&self) -> Node<'a> {
        self.root
    }

    pub fn get(&self, id: i64) -> Option<Node<'a>> {
        self.by_id.get(&id).copied()
    }

    pub fn parent(&self, node: &Node<'_>) -> Option<Node<'a>> {
        self.parent.get(&node.id()).and_then(|p| self.get(*p))
    }

    pub fn ancestors(&self, node: &Node<'_>) -> Vec<Node<'a>> {
        let mut out = Vec::new();
        let mut cur = self.parent(node);
        while let Some(p) = cur {
            out.push(p);
            cur = self.parent(&p);
        }
        out
    }

    pub fn contracts(&self) -> Vec<Node<'a>> {
        self.root.list("nodes").into_iter().filter(|n| n.is("ContractDefinition")).collect()
    }

    /// Declaration referenced by an identifier-like node.
    pub fn declaration(&self, node: &Node<'_>) -> Option<Node<'a>> {
        node.referenced_declaration().and_then(|id| self.get(id))
    }

    pub fn enclosing(&self, node: &Node<'_>, node_type: &str) -> Option<Node<'a>> {
        self.ancestors(node).into_iter().find(|a| a.is(node_type))
    }

    pub fn enclosing_function(&self, node: &Node<'_>) -> Option<Node<'a>> {
        self.ancestors(node)
            .into_iter()
            .find(|a| a.is("FunctionDefinition") || a.is("ModifierDefinition"))
    }

    pub fn enclosing_contract(&self, node: &Node<'_>) -> Option<Node<'a>> {
        self.enclosing(node, "ContractDefinition")
    }

    pub fn in_unchecked(&self, node: &Node<'_>) -> bool {
        self.ancestors(node).iter().any(|a| a.is("UncheckedBlock"))
    }
}

/// Whether a `referencedDeclaration` names a compiler builtin (`require`,
/// `msg`, `abi`, ...). The compiler numbers these downwards from -1 and
/// exports them as unsigned 32-bit values.
pub fn is_builtin_declaration(id: i64) -> bool {
    id < 0 || (id > u32::MAX as i64 - 1024 && id <= u32::MAX as i64)
}

impl<'a> Node<'a> {
    /// True for identifiers that refer to a compiler builtin.
    pub fn is_builtin_ref(&self) -> bool {
        self.referenced_declaration().is_some_and(is_builtin_declaration)
    }
}

pub fn is_loop(node: &Node<'_>) -> bool {
    matches!(node.node_type(), "ForStatement" | "WhileStatement" | "DoWhileStatement")
}

/// State variables declared directly in a contract, in declaration order.
pub fn state_variables<'a>(contract: &Node<'a>) -> Vec<Node<'a>> {
    contract
        .list("nodes")
        .into_iter()
        .filter(|n| n.is("VariableDeclaration") && n.bool("stateVariable"))
        .collect()
}

pub fn functions<'a>(contract: &Node<'a>) -> Vec<Node<'a>> {
    contract.list("nodes").into_iter().filter(|n| n.is("FunctionDefinition")).collect()
}

pub fn modifiers<'a>(contract: &Node<'a>) -> Vec<Node<'a>> {
    contract.list("nodes").into_iter().filter(|n| n.is("ModifierDefinition")).collect()
}

pub fn parameters<'a>(function: &Node<'a>) -> Vec<Node<'a>> {
    function
        .child("parameters")
        .map(|p| p.list("parameters"))
        .unwrap_or_default()
}

pub fn is_constructor(function: &Node<'_>) -> bool {
    function.str("kind") == Some("constructor")
}

pub fn mutability(var: &Node<'_>) -> &'static str {
    match var.str("mutability") {
        Some("constant") => "constant",
        Some("immutable") => "immutable",
        _ if var.bool("constant") => "constant",
        _ => "mutable",
    }
}

/// The declaration a written lvalue ultimately refers to: `x`, `x[i]`,
/// `x.field`, `x[i].f[j]` all resolve to `x`.
pub fn lvalue_roots(expr: &Node<'_>) -> Vec<i64> {
    match expr.node_type() {
        "Identifier" => expr.referenced_declaration().into_iter().collect(),
        "IndexAccess" => expr.child("baseExpression").map(|b| lvalue_roots(&b)).unwrap_or_default(),
        "IndexRangeAccess" => expr.child("baseExpression").map(|b| lvalue_roots(&b)).unwrap_or_default(),
        "MemberAccess" => expr.child("expression").map(|b| lvalue_roots(&b)).unwrap_or_default(),
        "TupleExpression" => expr
            .list("components")
            .iter()
            .flat_map(lvalue_roots)
            .collect(),
        _ => Vec::new(),
    }
}

/// A write to some variable, found syntactically.
#[derive(Debug, Clone, Copy)]
pub struct Write<'a> {
    pub target: i64,
    pub node: Node<'a>,
}

/// Every write under `scope`: assignments, `++`/`--`, `delete`, and
/// `push`/`pop` on arrays.
pub fn writes<'a>(scope: &Node<'a>) -> Vec<Write<'a>> {
    let mut out = Vec::new();
    for n in scope.walk() {
        match n.node_type() {
            "Assignment" => {
                if let Some(lhs) = n.child("leftHandSide") {
                    for target in lvalue_roots(&lhs) {
                        out.push(Write { target, node: n });
                    }
                }
            }
            "UnaryOperation" => {
                if matches!(n.str("operator"), Some("++" | "--" | "delete")) {
                    if let Some(sub) = n.child("subExpression") {
                        for target in lvalue_roots(&sub) {
                            out.push(Write { target, node: n });
                        }
                    }
                }
            }
            "FunctionCall" => {
                if let Some(callee) = n.child("expression") {
                    if callee.is("MemberAccess") && matches!(callee.str("memberName"), Some("push" | "pop")) {
                        if let Some(base) = callee.child("expression") {
                            if base.type_string().contains("[]") || base.type_string().starts_with("bytes storage") {
                                for target in lvalue_roots(&base) {
                                    out.push(Write { target, node: n });
                                }
                            }
                        }
                    }
                }
            }
            _ => {}
        }
    }
    out
}

/// Identifier nodes under `scope` that reference declaration `id`.
pub fn references<'a>(scope: &Node<'a>, id: i64) -> Vec<Node<'a>> {
    scope
        .walk()
        .into_iter()
        .filter(|n| (n.is("Identifier") || n.is("MemberAccess")) && n.referenced_declaration() == Some(id))
        .collect()
}

pub fn has_inline_assembly(scope: &Node<'_>) -> bool {
    scope.walk().iter().any(|n| n.is("InlineAssembly"))
}

/// Function calls under `scope` that may transfer control to code other
/// than builtins and type conversions: internal and external calls.
pub fn calls<'a>(scope: &Node<'a>) -> Vec<Node<'a>> {
    scope
        .walk()
        .into_iter()
        .filter(|n| n.is("FunctionCall") && n.str("kind") == Some("functionCall") && !is_builtin_call(n))
        .collect()
}

fn is_builtin_call(call: &Node<'_>) -> bool {
    let Some(callee) = call.child("expression") else {
        return false;
    };
    match callee.node_type() {
        "Identifier" => callee.is_builtin_ref(),
        "MemberAccess" => {
            matches!(callee.str("memberName"), Some("push" | "pop"))
                || callee
                    .child("expression")
                    .is_some_and(|e| matches!(e.str("name"), Some("abi" | "block" | "msg" | "tx")) && e.is_builtin_ref())
        }
        _ => false,
    }
}

/// Structural rendering of an expression that ignores parentheses and
/// spacing, used to compare subexpressions for equality.
pub fn canonical(expr: &Node<'_>) -> String {
    match expr.node_type() {
        "Identifier" => format!("{}#{}", expr.name(), expr.referenced_declaration().unwrap_or_default()),
        "Literal" => format!(
            "lit:{}:{}",
            expr.str("kind").unwrap_or_default(),
            expr.str("value").or(expr.str("hexValue")).unwrap_or_default()
        ),
        "TupleExpression" => {
            let comps = expr.list("components");
            if comps.len() == 1 && !expr.bool("isInlineArray") {
                canonical(&comps[0])
            } else {
                format!("({})", comps.iter().map(canonical).collect::<Vec<_>>().join(","))
            }
        }
        "BinaryOperation" => format!(
            "({} {} {})",
            expr.child("leftExpression").map(|e| canonical(&e)).unwrap_or_default(),
            expr.str("operator").unwrap_or_default(),
            expr.child("rightExpression").map(|e| canonical(&e)).unwrap_or_default()
        ),
        "UnaryOperation" => format!(
            "({}{}{})",
            if expr.bool("prefix") { expr.str("operator").unwrap_or_default() } else { "" },
            expr.child("subExpression").map(|e| canonical(&e)).unwrap_or_default(),
            if expr.bool("prefix") { "" } else { expr.str("operator").unwrap_or_default() }
        ),
        "MemberAccess" => format!(
            "{}.{}",
            expr.child("expression").map(|e| canonical(&e)).unwrap_or_default(),
            expr.str("memberName").unwrap_or_default()
        ),
        "IndexAccess" => format!(
            "{}[{}]",
            expr.child("baseExpression").map(|e| canonical(&e)).unwrap_or_default(),
            expr.child("indexExpression").map(|e| canonical(&e)).unwrap_or_default()
        ),
        "FunctionCall" => format!(
            "{}({})",
            expr.child("expression").map(|e| canonical(&e)).unwrap_or_default(),
            expr.list("arguments").iter().map(canonical).collect::<Vec<_>>().join(",")
        ),
        "ElementaryTypeNameExpression" => expr
            .child("typeName")
            .and_then(|t| t.str("name"))
            .unwrap_or_default()
            .to_string(),
        other => format!("<{other}@{}>", expr.id()),
    }
}
