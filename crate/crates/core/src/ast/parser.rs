//! Recursive-descent parser for the call-chain subset of the scripting
//! language. Operator precedence is not modelled: operator expressions are
//! lowered to a flat operand list, which is all call extraction needs.

use serde::{Deserialize, Serialize};

use super::lexer::{template_expressions, tokenize, Tok, Token};
use super::node::{AstNode, Lowered};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Diagnostic {
    pub line: usize,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParsedScript {
    pub root: AstNode,
    pub diagnostics: Vec<Diagnostic>,
    /// Set only when the input had content but not a single statement parsed.
    pub parse_failed: bool,
}

pub fn parse_script(source: &str) -> ParsedScript {
    let mut p = Parser::new(tokenize(source));
    let (body, parsed) = p.statement_list(false);
    let parse_failed = parsed == 0 && !p.diags.is_empty();
    ParsedScript {
        root: AstNode::program(body),
        diagnostics: p.diags,
        parse_failed,
    }
}

type PResult<T> = Result<T, String>;

const BINARY_OPS: &[&str] = &[
    "=", "+=", "-=", "*=", "/=", "%=", "**=", "<<=", ">>=", ">>>=", "&=", "|=", "^=", "&&=", "||=",
    "??=", "==", "!=", "===", "!==", "<", ">", "<=", ">=", "+", "-", "*", "/", "%", "**", "<<",
    ">>", ">>>", "&", "|", "^", "&&", "||", "??",
];
const PREFIX_OPS: &[&str] = &["!", "~", "+", "-", "++", "--", "..."];
const PREFIX_WORDS: &[&str] = &["typeof", "void", "delete", "await"];

struct Parser {
    toks: Vec<Token>,
    pos: usize,
    diags: Vec<Diagnostic>,
    /// Disables `in` as a binary operator while parsing a `for (...)` head.
    no_in: bool,
}

impl Parser {
    fn new(toks: Vec<Token>) -> Self {
        Parser {
            toks,
            pos: 0,
            diags: Vec::new(),
            no_in: false,
        }
    }

    fn peek(&self) -> &Tok {
        &self.toks[self.pos].tok
    }

    fn peek_at(&self, offset: usize) -> &Tok {
        let i = (self.pos + offset).min(self.toks.len() - 1);
        &self.toks[i].tok
    }

    fn line(&self) -> usize {
        self.toks[self.pos].line
    }

    fn advance(&mut self) -> Tok {
        let t = self.toks[self.pos].tok.clone();
        if self.pos < self.toks.len() - 1 {
            self.pos += 1;
        }
        t
    }

    fn is_punct(&self, p: &str) -> bool {
        matches!(self.peek(), Tok::Punct(q) if *q == p)
    }

    fn is_word(&self, w: &str) -> bool {
        matches!(self.peek(), Tok::Ident(s) if s == w)
    }

    fn eat_punct(&mut self, p: &str) -> bool {
        if self.is_punct(p) {
            self.advance();
            true
        } else {
            false
        }
    }

    fn expect(&mut self, p: &str) -> PResult<()> {
        if self.eat_punct(p) {
            Ok(())
        } else {
            Err(format!("expected `{p}`, found {}", describe(self.peek())))
        }
    }

    fn at_statement_end(&self) -> bool {
        matches!(self.peek(), Tok::Eof)
            || self.is_punct(";")
            || self.is_punct("}")
            || self.toks[self.pos].newline_before
    }

    fn consume_terminator(&mut self) -> PResult<()> {
        if self.eat_punct(";") || self.at_statement_end() {
            Ok(())
        } else {
            Err(format!("expected end of statement, found {}", describe(self.peek())))
        }
    }

    /// Returns the statements and the number that parsed cleanly.
    fn statement_list(&mut self, in_block: bool) -> (Vec<AstNode>, usize) {
        let mut out = Vec::new();
        let mut parsed = 0;
        loop {
            if matches!(self.peek(), Tok::Eof) || (in_block && self.is_punct("}")) {
                break;
            }
            let start = self.pos;
            let line = self.line();
            match self.statement() {
                Ok(Some(node)) => {
                    out.push(node);
                    parsed += 1;
                }
                Ok(None) => parsed += 1,
                Err(message) => {
                    self.diags.push(Diagnostic { line, message });
                    self.recover(start);
                }
            }
        }
        (out, parsed)
    }

    /// Skips to the next statement boundary: a `;` at bracket depth zero, a
    /// token starting a new line at depth zero, or an unmatched `}`.
    fn recover(&mut self, start: usize) {
        self.pos = start;
        let mut depth: i32 = 0;
        let mut first = true;
        loop {
            let t = &self.toks[self.pos];
            match &t.tok {
                Tok::Eof => return,
                Tok::Punct(";") if depth == 0 => {
                    self.advance();
                    return;
                }
                Tok::Punct("}") if depth == 0 => {
                    if first {
                        self.advance();
                    }
                    return;
                }
                _ if depth == 0 && t.newline_before && !first => return,
                Tok::Punct(")" | "]") if depth == 0 => {}
                Tok::Punct("(" | "[" | "{") => depth += 1,
                Tok::Punct(")" | "]" | "}") => depth -= 1,
                _ => {}
            }
            first = false;
            self.advance();
        }
    }

    fn statement(&mut self) -> PResult<Option<AstNode>> {
        let word = match self.peek() {
            Tok::Ident(w) => Some(w.clone()),
            Tok::Punct(";") => {
                self.advance();
                return Ok(None);
            }
            Tok::Punct("{") => return self.block().map(Some),
            _ => None,
        };
        let node = match word.as_deref() {
            Some("var" | "let" | "const") => {
                let n = self.declaration()?;
                self.consume_terminator()?;
                n
            }
            Some("function") => {
                let f = self.function_expr()?;
                AstNode::statement(vec![f])
            }
            Some("return" | "throw") => {
                self.advance();
                let mut children = Vec::new();
                if !self.at_statement_end() {
                    self.expr(true)?.splice_into(&mut children);
                }
                self.consume_terminator()?;
                AstNode::statement(children)
            }
            Some("break" | "continue") => {
                self.advance();
                if matches!(self.peek(), Tok::Ident(_)) && !self.toks[self.pos].newline_before {
                    self.advance();
                }
                self.consume_terminator()?;
                AstNode::statement(Vec::new())
            }
            Some("if") => self.if_statement()?,
            Some("for") => self.for_statement()?,
            Some("while") => {
                self.advance();
                let mut children = Vec::new();
                self.paren_expr()?.splice_into(&mut children);
                children.push(self.body_statement()?);
                AstNode::statement(children)
            }
            Some("do") => {
                self.advance();
                let mut children = vec![self.body_statement()?];
                if !self.is_word("while") {
                    return Err("expected `while` after do-body".into());
                }
                self.advance();
                self.paren_expr()?.splice_into(&mut children);
                self.eat_punct(";");
                AstNode::statement(children)
            }
            Some("switch") => self.switch_statement()?,
            Some("try") => self.try_statement()?,
            Some("class" | "import" | "export") => {
                return Err(format!("unsupported construct `{}`", word.unwrap_or_default()))
            }
            _ => {
                let mut children = Vec::new();
                self.expr(true)?.splice_into(&mut children);
                self.consume_terminator()?;
                AstNode::statement(children)
            }
        };
        Ok(Some(node))
    }

    fn block(&mut self) -> PResult<AstNode> {
        self.expect("{")?;
        let (body, _) = self.statement_list(true);
        self.expect("}")?;
        Ok(AstNode::statement(body))
    }

    fn body_statement(&mut self) -> PResult<AstNode> {
        Ok(self.statement()?.unwrap_or_else(|| AstNode::statement(Vec::new())))
    }

    fn paren_expr(&mut self) -> PResult<Lowered> {
        self.expect("(")?;
        let e = self.expr(true)?;
        self.expect(")")?;
        Ok(e)
    }

    fn declaration(&mut self) -> PResult<AstNode> {
        self.advance();
        let mut children = Vec::new();
        loop {
            match self.peek() {
                Tok::Ident(_) => {
                    self.advance();
                }
                Tok::Punct("{" | "[") => self.skip_balanced()?,
                other => return Err(format!("expected binding name, found {}", describe(other))),
            }
            if self.eat_punct("=") {
                self.expr(false)?.splice_into(&mut children);
            }
            if !self.eat_punct(",") {
                break;
            }
        }
        Ok(AstNode::statement(children))
    }

    fn if_statement(&mut self) -> PResult<AstNode> {
        self.advance();
        let mut children = Vec::new();
        self.paren_expr()?.splice_into(&mut children);
        children.push(self.body_statement()?);
        if self.is_word("else") {
            self.advance();
            children.push(self.body_statement()?);
        }
        Ok(AstNode::statement(children))
    }

    fn for_statement(&mut self) -> PResult<AstNode> {
        self.advance();
        self.expect("(")?;
        let mut children = Vec::new();
        let saved = self.no_in;
        self.no_in = true;
        let init = if self.is_punct(";") {
            None
        } else if self.is_word("var") || self.is_word("let") || self.is_word("const") {
            Some(Lowered::Node(self.declaration()?))
        } else {
            Some(self.expr(true)?)
        };
        self.no_in = saved;
        if self.is_word("in") || self.is_word("of") {
            self.advance();
            if let Some(init) = init {
                init.splice_into(&mut children);
            }
            self.expr(true)?.splice_into(&mut children);
            self.expect(")")?;
        } else {
            if let Some(init) = init {
                init.splice_into(&mut children);
            }
            self.expect(";")?;
            if !self.is_punct(";") {
                self.expr(true)?.splice_into(&mut children);
            }
            self.expect(";")?;
            if !self.is_punct(")") {
                self.expr(true)?.splice_into(&mut children);
            }
            self.expect(")")?;
        }
        children.push(self.body_statement()?);
        Ok(AstNode::statement(children))
    }

    fn switch_statement(&mut self) -> PResult<AstNode> {
        self.advance();
        let mut children = Vec::new();
        self.paren_expr()?.splice_into(&mut children);
        self.expect("{")?;
        while !self.is_punct("}") {
            let mut case = Vec::new();
            if self.is_word("case") {
                self.advance();
                self.expr(true)?.splice_into(&mut case);
            } else if self.is_word("default") {
                self.advance();
            } else {
                return Err(format!("expected `case` or `default`, found {}", describe(self.peek())));
            }
            self.expect(":")?;
            while !(self.is_word("case") || self.is_word("default") || self.is_punct("}")) {
                if matches!(self.peek(), Tok::Eof) {
                    return Err("unterminated switch".into());
                }
                if let Some(s) = self.statement()? {
                    case.push(s);
                }
            }
            children.push(AstNode::statement(case));
        }
        self.expect("}")?;
        Ok(AstNode::statement(children))
    }

    fn try_statement(&mut self) -> PResult<AstNode> {
        self.advance();
        let mut children = vec![self.block()?];
        if self.is_word("catch") {
            self.advance();
            if self.is_punct("(") {
                self.skip_balanced()?;
            }
            children.push(AstNode::statement(vec![self.block()?]));
        }
        if self.is_word("finally") {
            self.advance();
            children.push(self.block()?);
        }
        Ok(AstNode::statement(children))
    }

    /// Skips a balanced `(...)`, `[...]` or `{...}` group.
    fn skip_balanced(&mut self) -> PResult<()> {
        let mut depth = 0i32;
        loop {
            match self.advance() {
                Tok::Punct("(" | "[" | "{") => depth += 1,
                Tok::Punct(")" | "]" | "}") => {
                    depth -= 1;
                    if depth == 0 {
                        return Ok(());
                    }
                }
                Tok::Eof => return Err("unbalanced brackets".into()),
                _ => {}
            }
        }
    }

    fn expr(&mut self, allow_comma: bool) -> PResult<Lowered> {
        let mut parts = vec![self.operand()?];
        let mut grouped = false;
        loop {
            let op = match self.peek() {
                Tok::Punct(p) => *p,
                Tok::Ident(w) if w == "instanceof" => "instanceof",
                Tok::Ident(w) if w == "in" && !self.no_in => "in",
                _ => break,
            };
            if op == "?" {
                self.advance();
                let saved = self.no_in;
                self.no_in = false;
                parts.push(self.expr(false)?);
                self.no_in = saved;
                self.expect(":")?;
            } else if BINARY_OPS.contains(&op) || op == "instanceof" || op == "in" || (op == "," && allow_comma) {
                self.advance();
            } else {
                break;
            }
            parts.push(self.operand()?);
            grouped = true;
        }
        if !grouped {
            return Ok(parts.pop().expect("one operand"));
        }
        let mut flat = Vec::new();
        for p in parts {
            p.splice_into(&mut flat);
        }
        Ok(Lowered::Group(flat))
    }

    fn operand(&mut self) -> PResult<Lowered> {
        let prefix = match self.peek() {
            Tok::Punct(p) if PREFIX_OPS.contains(p) => true,
            Tok::Ident(w) if PREFIX_WORDS.contains(&w.as_str()) => true,
            _ => false,
        };
        if prefix {
            self.advance();
            let inner = self.operand()?;
            let mut g = Vec::new();
            inner.splice_into(&mut g);
            return Ok(Lowered::Group(g));
        }
        let base = self.primary()?;
        self.postfix(base)
    }

    fn postfix(&mut self, mut cur: Lowered) -> PResult<Lowered> {
        loop {
            match self.peek() {
                Tok::Punct("." | "?.") => {
                    self.advance();
                    match self.advance() {
                        Tok::Ident(name) => cur = Lowered::Node(AstNode::member(cur.into_node(), name)),
                        Tok::Punct("(") => {
                            self.pos -= 1;
                            let args = self.arguments()?;
                            cur = Lowered::Node(AstNode::call(cur.into_node(), args));
                        }
                        Tok::Punct("[") => {
                            let key = self.expr(true)?.into_node();
                            self.expect("]")?;
                            cur = Lowered::Node(AstNode::computed_member(cur.into_node(), key));
                        }
                        other => return Err(format!("expected property name, found {}", describe(&other))),
                    }
                }
                Tok::Punct("[") => {
                    self.advance();
                    let key = self.expr(true)?.into_node();
                    self.expect("]")?;
                    cur = Lowered::Node(AstNode::computed_member(cur.into_node(), key));
                }
                Tok::Punct("(") => {
                    let args = self.arguments()?;
                    cur = Lowered::Node(AstNode::call(cur.into_node(), args));
                }
                Tok::Punct("++" | "--") if !self.toks[self.pos].newline_before => {
                    self.advance();
                    let mut g = Vec::new();
                    cur.splice_into(&mut g);
                    return Ok(Lowered::Group(g));
                }
                _ => return Ok(cur),
            }
        }
    }

    fn arguments(&mut self) -> PResult<Vec<AstNode>> {
        self.expect("(")?;
        let mut args = Vec::new();
        while !self.is_punct(")") {
            let saved = self.no_in;
            self.no_in = false;
            let arg = self.expr(false);
            self.no_in = saved;
            args.push(arg?.into_node());
            if !self.eat_punct(",") {
                break;
            }
        }
        self.expect(")")?;
        Ok(args)
    }

    fn primary(&mut self) -> PResult<Lowered> {
        match self.peek().clone() {
            Tok::Ident(w) => match w.as_str() {
                "function" => self.function_expr().map(Lowered::Node),
                "new" => self.new_expr(),
                "true" | "false" | "null" => {
                    self.advance();
                    Ok(Lowered::Node(AstNode::literal(w)))
                }
                "async" if matches!(self.peek_at(1), Tok::Ident(f) if f == "function") => {
                    self.advance();
                    self.function_expr().map(Lowered::Node)
                }
                "class" => Err("unsupported construct `class`".into()),
                _ => {
                    self.advance();
                    if self.is_punct("=>") {
                        self.advance();
                        return self.arrow_body();
                    }
                    Ok(Lowered::Node(AstNode::identifier(w)))
                }
            },
            Tok::Number(raw) | Tok::Str(raw) | Tok::Regex(raw) => {
                self.advance();
                Ok(Lowered::Node(AstNode::literal(raw)))
            }
            Tok::Template(raw) => {
                self.advance();
                let mut parts = Vec::new();
                for src in template_expressions(&raw) {
                    let mut sub = Parser::new(tokenize(&src));
                    sub.expr(true)?.splice_into(&mut parts);
                }
                Ok(Lowered::Group(parts))
            }
            Tok::Punct("(") => {
                if self.arrow_ahead() {
                    self.skip_balanced()?;
                    self.expect("=>")?;
                    return self.arrow_body();
                }
                self.advance();
                let saved = self.no_in;
                self.no_in = false;
                let e = self.expr(true);
                self.no_in = saved;
                let e = e?;
                self.expect(")")?;
                Ok(e)
            }
            Tok::Punct("[") => {
                self.advance();
                let mut elems = Vec::new();
                while !self.is_punct("]") {
                    if self.eat_punct(",") {
                        continue;
                    }
                    self.expr(false)?.splice_into(&mut elems);
                    if !self.eat_punct(",") {
                        break;
                    }
                }
                self.expect("]")?;
                Ok(Lowered::Group(elems))
            }
            Tok::Punct("{") => self.object_literal(),
            other => Err(format!("unexpected {}", describe(&other))),
        }
    }

    fn arrow_ahead(&self) -> bool {
        let mut depth = 0i32;
        let mut i = self.pos;
        while i < self.toks.len() {
            match &self.toks[i].tok {
                Tok::Punct("(" | "[" | "{") => depth += 1,
                Tok::Punct(")" | "]" | "}") => {
                    depth -= 1;
                    if depth == 0 {
                        return matches!(self.toks.get(i + 1).map(|t| &t.tok), Some(Tok::Punct("=>")));
                    }
                }
                Tok::Eof => return false,
                _ => {}
            }
            i += 1;
        }
        false
    }

    fn arrow_body(&mut self) -> PResult<Lowered> {
        if self.is_punct("{") {
            self.advance();
            let (body, _) = self.statement_list(true);
            self.expect("}")?;
            return Ok(Lowered::Node(AstNode::function(None, body)));
        }
        let mut children = Vec::new();
        self.expr(false)?.splice_into(&mut children);
        Ok(Lowered::Node(AstNode::function(None, vec![AstNode::statement(children)])))
    }

    fn function_expr(&mut self) -> PResult<AstNode> {
        self.advance(); // `function`
        self.eat_punct("*");
        let name = match self.peek() {
            Tok::Ident(n) => {
                let n = n.clone();
                self.advance();
                Some(n)
            }
            _ => None,
        };
        if !self.is_punct("(") {
            return Err("expected parameter list".into());
        }
        self.skip_balanced()?;
        self.expect("{")?;
        let (body, _) = self.statement_list(true);
        self.expect("}")?;
        Ok(AstNode::function(name, body))
    }

    fn new_expr(&mut self) -> PResult<Lowered> {
        self.advance(); // `new`
        let mut callee = self.primary()?;
        loop {
            if self.is_punct(".") {
                self.advance();
                match self.advance() {
                    Tok::Ident(name) => callee = Lowered::Node(AstNode::member(callee.into_node(), name)),
                    other => return Err(format!("expected property name, found {}", describe(&other))),
                }
            } else if self.is_punct("[") {
                self.advance();
                let key = self.expr(true)?.into_node();
                self.expect("]")?;
                callee = Lowered::Node(AstNode::computed_member(callee.into_node(), key));
            } else {
                break;
            }
        }
        let args = if self.is_punct("(") { self.arguments()? } else { Vec::new() };
        Ok(Lowered::Node(AstNode::call(callee.into_node(), args)))
    }

    fn object_literal(&mut self) -> PResult<Lowered> {
        self.expect("{")?;
        let mut values = Vec::new();
        while !self.is_punct("}") {
            if self.eat_punct("...") {
                self.expr(false)?.splice_into(&mut values);
            } else {
                let shorthand = match self.advance() {
                    Tok::Ident(name) => Some(name),
                    Tok::Str(_) | Tok::Number(_) => None,
                    Tok::Punct("[") => {
                        // computed key; keys are not kept
                        self.expr(true)?;
                        self.expect("]")?;
                        None
                    }
                    other => return Err(format!("expected property key, found {}", describe(&other))),
                };
                if self.eat_punct(":") {
                    self.expr(false)?.splice_into(&mut values);
                } else if self.is_punct("(") {
                    self.skip_balanced()?;
                    self.expect("{")?;
                    let (body, _) = self.statement_list(true);
                    self.expect("}")?;
                    values.push(AstNode::function(None, body));
                } else if let Some(name) = shorthand {
                    values.push(AstNode::identifier(name));
                } else {
                    return Err("expected `:` after property key".into());
                }
            }
            if !self.eat_punct(",") {
                break;
            }
        }
        self.expect("}")?;
        Ok(Lowered::Group(values))
    }
}

fn describe(t: &Tok) -> String {
    match t {
        Tok::Ident(w) => format!("`{w}`"),
        Tok::Number(s) | Tok::Str(s) | Tok::Template(s) | Tok::Regex(s) => format!("literal {s}"),
        Tok::Punct(p) => format!("`{p}`"),
        Tok::Unknown(c) => format!("unexpected character `{c}`"),
        Tok::Eof => "end of input".to_string(),
    }
}
