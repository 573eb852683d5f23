use serde::{Deserialize, Serialize};

use super::node::{AstNode, NodeKind};

/// Root namespace whose members are reported qualified (`ee.List`, `ee.Image`).
pub const ROOT_NAMESPACE: &str = "ee";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CallPair {
    pub caller: String,
    pub callee: String,
}

impl CallPair {
    pub fn new(caller: impl Into<String>, callee: impl Into<String>) -> Self {
        CallPair {
            caller: caller.into(),
            callee: callee.into(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CallLog {
    pub script_id: String,
    pub pairs: Vec<CallPair>,
}

/// One line of the call-log file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CallLogLine {
    pub script_id: String,
    pub caller: String,
    pub callee: String,
}

impl CallLog {
    pub fn to_lines(&self) -> impl Iterator<Item = CallLogLine> + '_ {
        self.pairs.iter().map(|p| CallLogLine {
            script_id: self.script_id.clone(),
            caller: p.caller.clone(),
            callee: p.callee.clone(),
        })
    }

    /// Regroups file lines into per-script logs, keeping first-seen script order.
    pub fn from_lines(lines: Vec<CallLogLine>) -> Vec<CallLog> {
        let mut out: Vec<CallLog> = Vec::new();
        let mut index = std::collections::HashMap::new();
        for l in lines {
            let i = *index.entry(l.script_id.clone()).or_insert_with(|| {
                out.push(CallLog {
                    script_id: l.script_id.clone(),
                    pairs: Vec::new(),
                });
                out.len() - 1
            });
            out[i].pairs.push(CallPair::new(l.caller, l.callee));
        }
        out
    }
}

/// Operator name for a call's callee: `ee.<prop>` when the receiver is the
/// bare root namespace, the property name for any other member access, the
/// identifier itself for a plain call, and `None` otherwise.
pub fn extract_function_name(callee: &AstNode) -> Option<String> {
    let name = match callee.kind {
        NodeKind::Identifier => callee.name.clone(),
        NodeKind::MemberExpression => {
            let prop = callee.property_name.as_ref()?;
            match callee.children.first() {
                Some(obj)
                    if obj.kind == NodeKind::Identifier && obj.name.as_deref() == Some(ROOT_NAMESPACE) =>
                {
                    Some(format!("{ROOT_NAMESPACE}.{prop}"))
                }
                _ => Some(prop.clone()),
            }
        }
        _ => None,
    };
    name.filter(|n| !n.is_empty())
}

/// Depth-first walk logging `(previous call, current call)` pairs.
///
/// The previous call name is threaded through sibling statements and through
/// method-chain receivers, so a chain `a().b().c()` logs `(a,b), (b,c)` and
/// consecutive statements link the last call of one to the first of the next.
/// Call arguments (including function bodies) start from the enclosing call.
pub fn traverse_ast(root: &AstNode, script_id: &str) -> CallLog {
    let mut pairs = Vec::new();
    walk(root, None, &mut pairs);
    CallLog {
        script_id: script_id.to_string(),
        pairs,
    }
}

/// Every resolvable operator name in the order the walk enters its call.
pub fn call_names(root: &AstNode) -> Vec<String> {
    fn go(node: &AstNode, out: &mut Vec<String>) {
        if node.kind == NodeKind::CallExpression {
            if let Some(callee) = node.children.first() {
                go(callee, out);
                out.extend(extract_function_name(callee));
            }
            node.children.iter().skip(1).for_each(|c| go(c, out));
        } else {
            node.children.iter().for_each(|c| go(c, out));
        }
    }
    let mut out = Vec::new();
    go(root, &mut out);
    out
}

fn walk(node: &AstNode, prev: Option<String>, log: &mut Vec<CallPair>) -> Option<String> {
    match node.kind {
        NodeKind::CallExpression => {
            let Some(callee) = node.children.first() else {
                return prev;
            };
            let before = walk(callee, prev, log);
            let current = match extract_function_name(callee) {
                Some(name) => {
                    if let Some(p) = before {
                        log.push(CallPair::new(p, name.clone()));
                    }
                    Some(name)
                }
                None => before,
            };
            for rest in &node.children[1..] {
                walk(rest, current.clone(), log);
            }
            current
        }
        NodeKind::ArgumentList => {
            for arg in &node.children {
                walk(arg, prev.clone(), log);
            }
            prev
        }
        NodeKind::Identifier | NodeKind::Literal => prev,
        NodeKind::Program | NodeKind::Statement | NodeKind::FunctionExpression | NodeKind::MemberExpression => {
            node.children.iter().fold(prev, |p, c| walk(c, p, log))
        }
    }
}
