#[derive(Debug, Clone, PartialEq, Eq)]
pub(crate) enum Tok {
    Ident(String),
    Number(String),
    Str(String),
    Template(String),
    Regex(String),
    Punct(&'static str),
    Unknown(char),
    Eof,
}

#[derive(Debug, Clone)]
pub(crate) struct Token {
    pub tok: Tok,
    pub line: usize,
    /// A line break separates this token from the previous one.
    pub newline_before: bool,
}

// Longest first so that `>>>=` wins over `>>`.
const PUNCTS: &[&str] = &[
    ">>>=", "...", "===", "!==", "**=", "<<=", ">>=", ">>>", "&&=", "||=", "??=", "=>", "==", "!=",
    "<=", ">=", "&&", "||", "??", "?.", "++", "--", "+=", "-=", "*=", "/=", "%=", "&=", "|=", "^=",
    "**", "<<", ">>", "{", "}", "(", ")", "[", "]", ";", ",", "<", ">", "+", "-", "*", "/", "%",
    "&", "|", "^", "!", "~", "?", ":", "=", ".",
];

const KEYWORDS_BEFORE_EXPR: &[&str] = &[
    "return", "typeof", "instanceof", "in", "of", "new", "delete", "void", "throw", "case", "do",
    "else",
];

pub(crate) fn tokenize(source: &str) -> Vec<Token> {
    let chars: Vec<char> = source.chars().collect();
    let mut out: Vec<Token> = Vec::new();
    let mut i = 0;
    let mut line = 1;
    let mut newline_before = false;
    while i < chars.len() {
        let c = chars[i];
        if c == '\n' {
            line += 1;
            newline_before = true;
            i += 1;
            continue;
        }
        if c.is_whitespace() {
            i += 1;
            continue;
        }
        // Comments are normally stripped upstream; skip any that remain.
        if c == '/' && chars.get(i + 1) == Some(&'/') {
            while i < chars.len() && chars[i] != '\n' {
                i += 1;
            }
            continue;
        }
        if c == '/' && chars.get(i + 1) == Some(&'*') {
            i += 2;
            while i < chars.len() && !(chars[i] == '*' && chars.get(i + 1) == Some(&'/')) {
                if chars[i] == '\n' {
                    line += 1;
                    newline_before = true;
                }
                i += 1;
            }
            i = (i + 2).min(chars.len());
            continue;
        }
        let start_line = line;
        let start = i;
        let tok = if c.is_alphabetic() || c == '_' || c == '$' {
            while i < chars.len() && (chars[i].is_alphanumeric() || chars[i] == '_' || chars[i] == '$') {
                i += 1;
            }
            Tok::Ident(chars[start..i].iter().collect())
        } else if c.is_ascii_digit() || (c == '.' && chars.get(i + 1).is_some_and(|d| d.is_ascii_digit())) {
            while i < chars.len()
                && (chars[i].is_ascii_alphanumeric()
                    || chars[i] == '.'
                    || chars[i] == '_'
                    || ((chars[i] == '+' || chars[i] == '-') && matches!(chars[i - 1], 'e' | 'E')))
            {
                i += 1;
            }
            Tok::Number(chars[start..i].iter().collect())
        } else if c == '"' || c == '\'' || c == '`' {
            i += 1;
            while i < chars.len() && chars[i] != c {
                if chars[i] == '\\' {
                    i += 1;
                } else if chars[i] == '\n' {
                    if c != '`' {
                        break;
                    }
                    line += 1;
                }
                i += 1;
            }
            i = (i + 1).min(chars.len());
            let raw: String = chars[start..i].iter().collect();
            if c == '`' {
                Tok::Template(raw)
            } else {
                Tok::Str(raw)
            }
        } else if c == '/' && regex_allowed(out.last()) {
            match scan_regex(&chars, i) {
                Some(end) => {
                    i = end;
                    Tok::Regex(chars[start..i].iter().collect())
                }
                None => {
                    i += 1;
                    Tok::Punct("/")
                }
            }
        } else if let Some(p) = PUNCTS.iter().find(|p| {
            let pc: Vec<char> = p.chars().collect();
            chars.len() >= i + pc.len() && chars[i..i + pc.len()] == pc[..]
        }) {
            i += p.chars().count();
            Tok::Punct(p)
        } else {
            i += 1;
            Tok::Unknown(c)
        };
        out.push(Token {
            tok,
            line: start_line,
            newline_before,
        });
        newline_before = false;
    }
    out.push(Token {
        tok: Tok::Eof,
        line,
        newline_before: true,
    });
    out
}

fn regex_allowed(prev: Option<&Token>) -> bool {
    match prev.map(|t| &t.tok) {
        None => true,
        Some(Tok::Punct(p)) => !matches!(*p, ")" | "]" | "}" | "++" | "--"),
        Some(Tok::Ident(w)) => KEYWORDS_BEFORE_EXPR.contains(&w.as_str()),
        Some(Tok::Unknown(_)) => true,
        _ => false,
    }
}

fn scan_regex(chars: &[char], start: usize) -> Option<usize> {
    let mut i = start + 1;
    let mut in_class = false;
    while i < chars.len() {
        match chars[i] {
            '\\' => i += 2,
            '[' => {
                in_class = true;
                i += 1;
            }
            ']' => {
                in_class = false;
                i += 1;
            }
            '/' if !in_class => {
                i += 1;
                while i < chars.len() && chars[i].is_ascii_alphabetic() {
                    i += 1;
                }
                return Some(i);
            }
            '\n' => return None,
            _ => i += 1,
        }
    }
    None
}

/// Splits the raw text of a template literal into its `${...}` expression sources.
pub(crate) fn template_expressions(raw: &str) -> Vec<String> {
    let chars: Vec<char> = raw.chars().collect();
    let mut out = Vec::new();
    let mut i = 1;
    while i + 1 < chars.len() {
        if chars[i] == '\\' {
            i += 2;
            continue;
        }
        if chars[i] == '$' && chars[i + 1] == '{' {
            let mut depth = 1;
            let mut j = i + 2;
            while j < chars.len() && depth > 0 {
                match chars[j] {
                    '{' => depth += 1,
                    '}' => depth -= 1,
                    _ => {}
                }
                j += 1;
            }
            let end = if depth == 0 { j - 1 } else { j };
            out.push(chars[i + 2..end].iter().collect());
            i = j;
            continue;
        }
        i += 1;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toks(s: &str) -> Vec<Tok> {
        tokenize(s).into_iter().map(|t| t.tok).collect()
    }

    #[test]
    fn member_call_tokens() {
        assert_eq!(
            toks("ee.Image(1);"),
            vec![
                Tok::Ident("ee".into()),
                Tok::Punct("."),
                Tok::Ident("Image".into()),
                Tok::Punct("("),
                Tok::Number("1".into()),
                Tok::Punct(")"),
                Tok::Punct(";"),
                Tok::Eof
            ]
        );
    }

    #[test]
    fn regex_versus_division() {
        assert_eq!(toks("a / b")[1], Tok::Punct("/"));
        assert_eq!(toks("x = /a+/g")[2], Tok::Regex("/a+/g".into()));
    }

    #[test]
    fn newline_flags_and_lines() {
        let t = tokenize("a\n.b()");
        assert!(!t[0].newline_before);
        assert!(t[1].newline_before);
        assert_eq!(t[1].line, 2);
    }

    #[test]
    fn template_parts() {
        assert_eq!(template_expressions("`a${f(1)}b${ {x:1}.x }`"), vec!["f(1)", " {x:1}.x "]);
        assert!(template_expressions("`plain`").is_empty());
    }
}
