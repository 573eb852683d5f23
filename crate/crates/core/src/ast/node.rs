use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum NodeKind {
    Program,
    Statement,
    CallExpression,
    MemberExpression,
    Identifier,
    Literal,
    ArgumentList,
    FunctionExpression,
}

/// Normalized syntax tree node.
///
/// Shapes produced by both the source parser and the ESTree loader:
///
/// * `CallExpression`: children `[callee, ArgumentList]`.
/// * `MemberExpression`: `property_name` set for `a.b`, children `[object]`;
///   computed access `a[k]` has no `property_name` and children `[object, k]`.
/// * `Identifier` / `Literal`: leaf, text in `name`.
/// * `FunctionExpression`: optional `name`, children are body statements
///   (parameters are dropped).
/// * `Statement`: passthrough for every other construct, children in source order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AstNode {
    pub kind: NodeKind,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub children: Vec<AstNode>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub property_name: Option<String>,
}

impl AstNode {
    pub fn new(kind: NodeKind, children: Vec<AstNode>) -> Self {
        AstNode {
            kind,
            children,
            name: None,
            property_name: None,
        }
    }

    pub fn program(children: Vec<AstNode>) -> Self {
        Self::new(NodeKind::Program, children)
    }

    pub fn statement(children: Vec<AstNode>) -> Self {
        Self::new(NodeKind::Statement, children)
    }

    pub fn identifier(name: impl Into<String>) -> Self {
        AstNode {
            name: Some(name.into()),
            ..Self::new(NodeKind::Identifier, Vec::new())
        }
    }

    pub fn literal(raw: impl Into<String>) -> Self {
        AstNode {
            name: Some(raw.into()),
            ..Self::new(NodeKind::Literal, Vec::new())
        }
    }

    pub fn member(object: AstNode, property: impl Into<String>) -> Self {
        AstNode {
            property_name: Some(property.into()),
            ..Self::new(NodeKind::MemberExpression, vec![object])
        }
    }

    pub fn computed_member(object: AstNode, key: AstNode) -> Self {
        Self::new(NodeKind::MemberExpression, vec![object, key])
    }

    pub fn call(callee: AstNode, args: Vec<AstNode>) -> Self {
        Self::new(
            NodeKind::CallExpression,
            vec![callee, Self::new(NodeKind::ArgumentList, args)],
        )
    }

    pub fn function(name: Option<String>, body: Vec<AstNode>) -> Self {
        AstNode {
            name,
            ..Self::new(NodeKind::FunctionExpression, body)
        }
    }

    pub fn count(&self, kind: NodeKind) -> usize {
        usize::from(self.kind == kind) + self.children.iter().map(|c| c.count(kind)).sum::<usize>()
    }
}

/// Result of lowering an expression: either a single node or a flattened
/// operand list from operator expressions (`a + f()`, `[x, y]`, `{k: v}`).
/// Groups are spliced into a passthrough parent, or wrapped in a `Statement`
/// when they land in a single-node slot such as a call argument.
#[derive(Debug, Clone, PartialEq, Eq)]
pub(crate) enum Lowered {
    Node(AstNode),
    Group(Vec<AstNode>),
}

impl Lowered {
    pub(crate) fn into_node(self) -> AstNode {
        match self {
            Lowered::Node(n) => n,
            Lowered::Group(g) => AstNode::statement(g),
        }
    }

    pub(crate) fn splice_into(self, out: &mut Vec<AstNode>) {
        match self {
            Lowered::Node(n) => out.push(n),
            Lowered::Group(g) => out.extend(g),
        }
    }
}
