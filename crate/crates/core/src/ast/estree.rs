//! Loader for pre-parsed ESTree JSON. Produces the same normalized tree the
//! source parser builds, so both routes yield identical call logs.

use std::path::Path;

use serde_json::{Map, Value};

use super::node::{AstNode, Lowered};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LoadedTree {
    pub root: AstNode,
    /// One entry per node of unknown kind that was passed through.
    pub warnings: Vec<String>,
}

pub fn load_pre_parsed(path: &Path) -> Result<LoadedTree> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let value: Value = serde_json::from_str(&text).map_err(|e| Error::parse(path.display().to_string(), e))?;
    from_estree(&value)
}

pub fn from_estree(value: &Value) -> Result<LoadedTree> {
    let mut lower = Lowerer { warnings: Vec::new() };
    let root = lower.node(value, "$")?;
    if root.kind != super::NodeKind::Program {
        return Err(Error::Schema {
            path: "$".into(),
            message: "root node must be a Program".into(),
        });
    }
    for w in &lower.warnings {
        log::warn!("{w}");
    }
    Ok(LoadedTree {
        root,
        warnings: lower.warnings,
    })
}

// Fields never holding child nodes, and fields whose nodes are deliberately
// dropped (binding names, parameters, property keys).
const SKIPPED_FIELDS: &[&str] = &[
    "type", "start", "end", "loc", "range", "raw", "value", "name", "computed", "operator", "prefix",
    "sourceType", "kind", "async", "generator", "expression", "optional", "shorthand", "method",
    "delegate", "regex", "bigint", "id", "params", "key",
];

fn schema(path: &str, message: impl Into<String>) -> Error {
    Error::Schema {
        path: path.to_string(),
        message: message.into(),
    }
}

struct Lowerer {
    warnings: Vec<String>,
}

impl Lowerer {
    fn node(&mut self, v: &Value, path: &str) -> Result<AstNode> {
        Ok(self.lower(v, path)?.into_node())
    }

    fn splice(&mut self, v: &Value, path: &str, out: &mut Vec<AstNode>) -> Result<()> {
        if !v.is_null() {
            self.lower(v, path)?.splice_into(out);
        }
        Ok(())
    }

    fn statements(&mut self, obj: &Map<String, Value>, field: &str, path: &str) -> Result<Vec<AstNode>> {
        let arr = array(obj, field, path)?;
        let mut out = Vec::with_capacity(arr.len());
        for (i, s) in arr.iter().enumerate() {
            if s.get("type").and_then(Value::as_str) == Some("EmptyStatement") {
                continue;
            }
            out.push(self.node(s, &format!("{path}.{field}[{i}]"))?);
        }
        Ok(out)
    }

    fn function(&mut self, obj: &Map<String, Value>, path: &str) -> Result<AstNode> {
        let name = obj
            .get("id")
            .and_then(|id| id.get("name"))
            .and_then(Value::as_str)
            .map(str::to_string);
        let body = field(obj, "body", path)?;
        let body_path = format!("{path}.body");
        let stmts = if body.get("type").and_then(Value::as_str) == Some("BlockStatement") {
            let b = body.as_object().expect("checked object");
            self.statements(b, "body", &body_path)?
        } else {
            let mut children = Vec::new();
            self.splice(body, &body_path, &mut children)?;
            vec![AstNode::statement(children)]
        };
        Ok(AstNode::function(name, stmts))
    }

    fn lower(&mut self, v: &Value, path: &str) -> Result<Lowered> {
        let obj = v
            .as_object()
            .ok_or_else(|| schema(path, format!("expected a node object, found {}", kind_of(v))))?;
        let ty = obj
            .get("type")
            .and_then(Value::as_str)
            .ok_or_else(|| schema(path, "node has no string `type` field"))?;
        let sub = |f: &str| format!("{path}.{f}");
        let opt = |f: &str| obj.get(f).filter(|x| !x.is_null());

        let mut children = Vec::new();
        let lowered = match ty {
            "Program" => Lowered::Node(AstNode::program(self.statements(obj, "body", path)?)),
            "BlockStatement" | "StaticBlock" => Lowered::Node(AstNode::statement(self.statements(obj, "body", path)?)),
            "EmptyStatement" | "BreakStatement" | "ContinueStatement" | "DebuggerStatement" => {
                Lowered::Node(AstNode::statement(Vec::new()))
            }
            "ExpressionStatement" => {
                self.splice(field(obj, "expression", path)?, &sub("expression"), &mut children)?;
                Lowered::Node(AstNode::statement(children))
            }
            "VariableDeclaration" => {
                for (i, d) in array(obj, "declarations", path)?.iter().enumerate() {
                    let dpath = format!("{path}.declarations[{i}]");
                    if let Some(init) = d.get("init") {
                        self.splice(init, &format!("{dpath}.init"), &mut children)?;
                    }
                }
                Lowered::Node(AstNode::statement(children))
            }
            "VariableDeclarator" => {
                if let Some(init) = opt("init") {
                    self.splice(init, &sub("init"), &mut children)?;
                }
                Lowered::Group(children)
            }
            "FunctionDeclaration" => Lowered::Node(AstNode::statement(vec![self.function(obj, path)?])),
            "FunctionExpression" | "ArrowFunctionExpression" => Lowered::Node(self.function(obj, path)?),
            "ReturnStatement" | "ThrowStatement" => {
                if let Some(arg) = opt("argument") {
                    self.splice(arg, &sub("argument"), &mut children)?;
                }
                Lowered::Node(AstNode::statement(children))
            }
            "IfStatement" => {
                self.splice(field(obj, "test", path)?, &sub("test"), &mut children)?;
                children.push(self.node(field(obj, "consequent", path)?, &sub("consequent"))?);
                if let Some(alt) = opt("alternate") {
                    children.push(self.node(alt, &sub("alternate"))?);
                }
                Lowered::Node(AstNode::statement(children))
            }
            "ForStatement" => {
                for f in ["init", "test", "update"] {
                    if let Some(x) = opt(f) {
                        self.splice(x, &sub(f), &mut children)?;
                    }
                }
                children.push(self.node(field(obj, "body", path)?, &sub("body"))?);
                Lowered::Node(AstNode::statement(children))
            }
            "ForInStatement" | "ForOfStatement" => {
                self.splice(field(obj, "left", path)?, &sub("left"), &mut children)?;
                self.splice(field(obj, "right", path)?, &sub("right"), &mut children)?;
                children.push(self.node(field(obj, "body", path)?, &sub("body"))?);
                Lowered::Node(AstNode::statement(children))
            }
            "WhileStatement" => {
                self.splice(field(obj, "test", path)?, &sub("test"), &mut children)?;
                children.push(self.node(field(obj, "body", path)?, &sub("body"))?);
                Lowered::Node(AstNode::statement(children))
            }
            "DoWhileStatement" => {
                children.push(self.node(field(obj, "body", path)?, &sub("body"))?);
                self.splice(field(obj, "test", path)?, &sub("test"), &mut children)?;
                Lowered::Node(AstNode::statement(children))
            }
            "SwitchStatement" => {
                self.splice(field(obj, "discriminant", path)?, &sub("discriminant"), &mut children)?;
                for (i, c) in array(obj, "cases", path)?.iter().enumerate() {
                    children.push(self.node(c, &format!("{path}.cases[{i}]"))?);
                }
                Lowered::Node(AstNode::statement(children))
            }
            "SwitchCase" => {
                if let Some(t) = opt("test") {
                    self.splice(t, &sub("test"), &mut children)?;
                }
                children.extend(self.statements(obj, "consequent", path)?);
                Lowered::Node(AstNode::statement(children))
            }
            "TryStatement" => {
                children.push(self.node(field(obj, "block", path)?, &sub("block"))?);
                if let Some(h) = opt("handler") {
                    children.push(self.node(h, &sub("handler"))?);
                }
                if let Some(f) = opt("finalizer") {
                    children.push(self.node(f, &sub("finalizer"))?);
                }
                Lowered::Node(AstNode::statement(children))
            }
            "CatchClause" => {
                children.push(self.node(field(obj, "body", path)?, &sub("body"))?);
                Lowered::Node(AstNode::statement(children))
            }
            "CallExpression" | "NewExpression" => {
                let callee = self.node(field(obj, "callee", path)?, &sub("callee"))?;
                let mut args = Vec::new();
                for (i, a) in array(obj, "arguments", path)?.iter().enumerate() {
                    args.push(self.node(a, &format!("{path}.arguments[{i}]"))?);
                }
                Lowered::Node(AstNode::call(callee, args))
            }
            "ChainExpression" | "ParenthesizedExpression" => self.lower(field(obj, "expression", path)?, &sub("expression"))?,
            "MemberExpression" => {
                let object = self.node(field(obj, "object", path)?, &sub("object"))?;
                let property = field(obj, "property", path)?;
                if obj.get("computed").and_then(Value::as_bool).unwrap_or(false) {
                    let key = self.node(property, &sub("property"))?;
                    Lowered::Node(AstNode::computed_member(object, key))
                } else {
                    let name = property
                        .get("name")
                        .and_then(Value::as_str)
                        .filter(|n| !n.is_empty())
                        .ok_or_else(|| schema(&sub("property"), "member property has no name"))?;
                    Lowered::Node(AstNode::member(object, name))
                }
            }
            "Identifier" | "PrivateIdentifier" => {
                let name = obj
                    .get("name")
                    .and_then(Value::as_str)
                    .ok_or_else(|| schema(path, "Identifier has no `name`"))?;
                Lowered::Node(AstNode::identifier(name))
            }
            "ThisExpression" => Lowered::Node(AstNode::identifier("this")),
            "Super" => Lowered::Node(AstNode::identifier("super")),
            "Literal" => {
                let raw = match (obj.get("raw").and_then(Value::as_str), obj.get("value")) {
                    (Some(r), _) => r.to_string(),
                    (None, Some(v)) => v.to_string(),
                    (None, None) => return Err(schema(path, "Literal has neither `raw` nor `value`")),
                };
                Lowered::Node(AstNode::literal(raw))
            }
            "TemplateLiteral" => {
                for (i, e) in array(obj, "expressions", path)?.iter().enumerate() {
                    self.splice(e, &format!("{path}.expressions[{i}]"), &mut children)?;
                }
                Lowered::Group(children)
            }
            "BinaryExpression" | "LogicalExpression" | "AssignmentExpression" => {
                self.splice(field(obj, "left", path)?, &sub("left"), &mut children)?;
                self.splice(field(obj, "right", path)?, &sub("right"), &mut children)?;
                Lowered::Group(children)
            }
            "UnaryExpression" | "UpdateExpression" | "SpreadElement" | "AwaitExpression" => {
                self.splice(field(obj, "argument", path)?, &sub("argument"), &mut children)?;
                Lowered::Group(children)
            }
            "ConditionalExpression" => {
                for f in ["test", "consequent", "alternate"] {
                    self.splice(field(obj, f, path)?, &sub(f), &mut children)?;
                }
                Lowered::Group(children)
            }
            "SequenceExpression" => {
                for (i, e) in array(obj, "expressions", path)?.iter().enumerate() {
                    self.splice(e, &format!("{path}.expressions[{i}]"), &mut children)?;
                }
                Lowered::Group(children)
            }
            "ArrayExpression" => {
                for (i, e) in array(obj, "elements", path)?.iter().enumerate() {
                    self.splice(e, &format!("{path}.elements[{i}]"), &mut children)?;
                }
                Lowered::Group(children)
            }
            "ObjectExpression" => {
                for (i, p) in array(obj, "properties", path)?.iter().enumerate() {
                    self.splice(p, &format!("{path}.properties[{i}]"), &mut children)?;
                }
                Lowered::Group(children)
            }
            "Property" => self.lower(field(obj, "value", path)?, &sub("value"))?,
            other => {
                self.warnings
                    .push(format!("unknown node kind `{other}` at {path}; passed through as Statement"));
                for (key, val) in obj {
                    if SKIPPED_FIELDS.contains(&key.as_str()) {
                        continue;
                    }
                    match val {
                        Value::Object(_) => self.splice(val, &sub(key), &mut children)?,
                        Value::Array(items) => {
                            for (i, item) in items.iter().enumerate() {
                                if item.is_object() {
                                    self.splice(item, &format!("{path}.{key}[{i}]"), &mut children)?;
                                }
                            }
                        }
                        _ => {}
                    }
                }
                Lowered::Node(AstNode::statement(children))
            }
        };
        Ok(lowered)
    }
}

fn field<'a>(obj: &'a Map<String, Value>, name: &str, path: &str) -> Result<&'a Value> {
    obj.get(name)
        .filter(|v| !v.is_null())
        .ok_or_else(|| schema(path, format!("missing required field `{name}`")))
}

fn array<'a>(obj: &'a Map<String, Value>, name: &str, path: &str) -> Result<&'a Vec<Value>> {
    field(obj, name, path)?
        .as_array()
        .ok_or_else(|| schema(&format!("{path}.{name}"), "expected an array"))
}

fn kind_of(v: &Value) -> &'static str {
    match v {
        Value::Null => "null",
        Value::Bool(_) => "boolean",
        Value::Number(_) => "number",
        Value::String(_) => "string",
        Value::Array(_) => "array",
        Value::Object(_) => "object",
    }
}
