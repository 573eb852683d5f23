//! Functional statement extraction: prompt rendering, reply parsing and the
//! per-corpus driver.

use std::collections::{BTreeMap, HashSet};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::corpus::ScriptRecord;
use crate::error::{Error, Result};
use crate::gateway::{ExchangeLog, Gateway};
use crate::io::{read_jsonl, write_jsonl};

pub const SCRIPT_BEGIN: &str = "<<<SCRIPT";
pub const SCRIPT_END: &str = "SCRIPT>>>";
pub const DEFAULT_BYTE_BUDGET: usize = 32 * 1024;

const DEFAULT_TEMPLATE: &str = include_str!("../assets/statement_prompt.toml");

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptTemplate {
    pub analysis_role: String,
    pub analysis_task: String,
    pub analysis_reply_example: String,
    pub analysis_requirement: String,
}

impl Default for PromptTemplate {
    fn default() -> Self {
        Self::from_toml(DEFAULT_TEMPLATE).expect("bundled template is valid")
    }
}

impl PromptTemplate {
    pub fn from_toml(text: &str) -> Result<Self> {
        let t: PromptTemplate = toml::from_str(text).map_err(|e| Error::parse("prompt template", e))?;
        t.validate()?;
        Ok(t)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, s) in self.sections() {
            if s.trim().is_empty() {
                return Err(Error::Validation(format!("prompt template section {name} is empty")));
            }
        }
        Ok(())
    }

    fn sections(&self) -> [(&'static str, &str); 4] {
        [
            ("Analysis_role", &self.analysis_role),
            ("Analysis_task", &self.analysis_task),
            ("Analysis_reply_example", &self.analysis_reply_example),
            ("Analysis_requirement", &self.analysis_requirement),
        ]
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RenderedPrompt {
    pub text: String,
    pub byte_len: usize,
    pub truncated: bool,
}

/// Role, task (with the delimited script body), reply example, requirement.
pub fn render_prompt(script: &ScriptRecord, template: &PromptTemplate, byte_budget: usize) -> RenderedPrompt {
    let mut body = script.source.as_str();
    let truncated = body.len() > byte_budget;
    if truncated {
        let mut cut = byte_budget;
        while !body.is_char_boundary(cut) {
            cut -= 1;
        }
        body = &body[..cut];
        log::warn!(
            "{}: script body truncated from {} to {cut} bytes",
            script.script_id,
            script.source.len()
        );
    }
    let mut text = String::new();
    for (name, section) in template.sections() {
        text.push_str(&format!("## {name}\n{}\n", section.trim()));
        if name == "Analysis_task" {
            text.push_str(&format!("\n{SCRIPT_BEGIN}\n{}\n{SCRIPT_END}\n", escape_body(body)));
        }
        text.push('\n');
    }
    RenderedPrompt {
        byte_len: text.len(),
        text,
        truncated,
    }
}

/// Adds one backslash before every occurrence of the end delimiter
/// (including any already backslash-prefixed one), so the escaped body never
/// contains a bare delimiter.
pub fn escape_body(body: &str) -> String {
    body.replace(SCRIPT_END, &format!("\\{SCRIPT_END}"))
}

/// Inverse of [`escape_body`].
pub fn unescape_body(body: &str) -> String {
    body.replace(&format!("\\{SCRIPT_END}"), SCRIPT_END)
}

/// The unescaped script body of a rendered prompt, if it has one.
pub fn extract_script_body(prompt: &str) -> Option<String> {
    let begin = format!("{SCRIPT_BEGIN}\n");
    let start = prompt.find(&begin)? + begin.len();
    let rest = &prompt[start..];
    let end = rest.find(&format!("\n{SCRIPT_END}"))?;
    Some(unescape_body(&rest[..end]))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FunctionalStatementSet {
    pub script_id: String,
    pub purpose: String,
    pub steps: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParsedReply {
    pub purpose: String,
    pub steps: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExtractionFailed {
    pub reason: String,
    pub raw: String,
}

/// Finds the first JSON object with an `operations` array, either inside a
/// fenced block or anywhere in the text.
pub fn parse_reply(reply: &str) -> std::result::Result<ParsedReply, ExtractionFailed> {
    let fail = |reason: &str| ExtractionFailed {
        reason: reason.to_string(),
        raw: reply.to_string(),
    };
    let block = fenced_blocks(reply)
        .into_iter()
        .filter_map(|b| serde_json::from_str::<Value>(b).ok())
        .chain(inline_objects(reply))
        .find(|v| v.get("operations").is_some_and(Value::is_array))
        .ok_or_else(|| fail("no structured block with an operations list"))?;
    let purpose = block.get("purpose").and_then(Value::as_str).map(one_line).unwrap_or_default();
    let mut seen = HashSet::new();
    let steps: Vec<String> = block["operations"]
        .as_array()
        .expect("checked above")
        .iter()
        .filter_map(|s| match s {
            Value::String(s) => Some(one_line(s)),
            Value::Object(o) => o.get("description").or_else(|| o.get("step")).and_then(Value::as_str).map(one_line),
            _ => None,
        })
        .filter(|s| !s.is_empty() && seen.insert(s.clone()))
        .collect();
    if steps.is_empty() {
        return Err(fail("operations list is empty"));
    }
    Ok(ParsedReply { purpose, steps })
}

fn one_line(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

fn fenced_blocks(text: &str) -> Vec<&str> {
    let mut out = Vec::new();
    let mut rest = text;
    while let Some(open) = rest.find("```") {
        let after = &rest[open + 3..];
        let Some(nl) = after.find('\n') else { break };
        let body = &after[nl + 1..];
        let Some(close) = body.find("```") else { break };
        out.push(&body[..close]);
        rest = &body[close + 3..];
    }
    out
}

fn inline_objects(text: &str) -> impl Iterator<Item = Value> + '_ {
    text.match_indices('{').filter_map(move |(i, _)| {
        serde_json::Deserializer::from_str(&text[i..]).into_iter::<Value>().next()?.ok()
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FailureKind {
    ExtractionFailed,
    LlmFailed,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StatementFailure {
    pub script_id: String,
    pub kind: FailureKind,
    pub detail: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub raw_reply: Option<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct StatementRun {
    pub sets: Vec<FunctionalStatementSet>,
    pub failures: Vec<StatementFailure>,
}

/// Runs every script through the gateway with the profile's concurrency
/// limit. Scripts must have their source loaded. Both outputs are sorted by
/// script id.
pub fn extract_corpus(
    scripts: &[ScriptRecord],
    gateway: &Gateway,
    template: &PromptTemplate,
    byte_budget: usize,
    log: Option<&ExchangeLog>,
) -> Result<StatementRun> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(gateway.profile().concurrency)
        .build()
        .map_err(|e| Error::Domain(format!("thread pool: {e}")))?;
    let outcomes: Vec<std::result::Result<FunctionalStatementSet, StatementFailure>> = pool.install(|| {
        scripts
            .par_iter()
            .map(|script| {
                let prompt = render_prompt(script, template, byte_budget);
                let failure = |kind, detail: String, raw_reply| StatementFailure {
                    script_id: script.script_id.clone(),
                    kind,
                    detail,
                    raw_reply,
                };
                let ex = gateway
                    .chat(&prompt.text, log)
                    .map_err(|e| failure(FailureKind::LlmFailed, e.to_string(), None))?;
                let parsed = parse_reply(&ex.response)
                    .map_err(|e| failure(FailureKind::ExtractionFailed, e.reason, Some(e.raw)))?;
                Ok(FunctionalStatementSet {
                    script_id: script.script_id.clone(),
                    purpose: parsed.purpose,
                    steps: parsed.steps,
                })
            })
            .collect()
    });
    let mut run = StatementRun::default();
    for o in outcomes {
        match o {
            Ok(s) => run.sets.push(s),
            Err(f) => run.failures.push(f),
        }
    }
    run.sets.sort_by(|a, b| a.script_id.cmp(&b.script_id));
    run.failures.sort_by(|a, b| a.script_id.cmp(&b.script_id));
    Ok(run)
}

/// `(step count, number of scripts)` rows.
pub fn step_histogram(sets: &[FunctionalStatementSet]) -> Vec<(usize, usize)> {
    let mut h = BTreeMap::new();
    for s in sets {
        *h.entry(s.steps.len()).or_insert(0) += 1;
    }
    h.into_iter().collect()
}

pub fn save_statements(path: &Path, sets: &[FunctionalStatementSet]) -> Result<()> {
    write_jsonl(path, sets)
}

pub fn load_statements(path: &Path) -> Result<Vec<FunctionalStatementSet>> {
    let sets: Vec<FunctionalStatementSet> = read_jsonl(path)?;
    let mut ids = HashSet::new();
    for s in &sets {
        if !ids.insert(&s.script_id) {
            return Err(Error::Validation(format!("duplicate statement set for {}", s.script_id)));
        }
        if s.steps.is_empty() {
            return Err(Error::Validation(format!("statement set {} has no steps", s.script_id)));
        }
    }
    Ok(sets)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn script(id: &str, src: &str) -> ScriptRecord {
        ScriptRecord::from_source(id, src)
    }

    #[test]
    fn rendered_sections_in_order() {
        let t = PromptTemplate::default();
        let p = render_prompt(&script("s", "print(1);"), &t, DEFAULT_BYTE_BUDGET);
        let pos: Vec<usize> = ["## Analysis_role", "## Analysis_task", SCRIPT_BEGIN, "## Analysis_reply_example", "## Analysis_requirement"]
            .iter()
            .map(|h| p.text.find(h).unwrap())
            .collect();
        assert!(pos.windows(2).all(|w| w[0] < w[1]));
        assert!(p.text.contains("print(1);"));
        assert_eq!(p.byte_len, p.text.len());
        assert_eq!(p, render_prompt(&script("s", "print(1);"), &t, DEFAULT_BYTE_BUDGET));
    }

    #[test]
    fn delimiter_inside_string_is_escaped() {
        let src = "var s = \"SCRIPT>>>\";\nvar t = '\\SCRIPT>>>';\nprint(s);";
        let p = render_prompt(&script("s", src), &PromptTemplate::default(), DEFAULT_BYTE_BUDGET);
        assert_eq!(extract_script_body(&p.text).unwrap(), src);
    }

    #[test]
    fn truncation_respects_char_boundary() {
        let p = render_prompt(&script("s", "éééé"), &PromptTemplate::default(), 3);
        assert!(p.truncated);
        assert_eq!(extract_script_body(&p.text).unwrap(), "é");
    }

    #[test]
    fn empty_section_is_rejected() {
        let mut t = PromptTemplate::default();
        t.analysis_task = "  ".into();
        assert!(t.validate().is_err());
    }

    #[test]
    fn reply_parsing() {
        let block = "```json\n{\"purpose\": \"p\", \"operations\": [\"a\", \"b\", \"c\"]}\n```";
        let r = parse_reply(block).unwrap();
        assert_eq!(r.steps, ["a", "b", "c"]);
        assert_eq!(parse_reply(&format!("Sure! Here you go.\n\n{block}\nHope it helps.")).unwrap(), r);
        assert!(parse_reply("```json\n{\"purpose\": \"p\", \"operations\": []}\n```").is_err());
        assert!(parse_reply("no block at all").is_err());
        let e = parse_reply("nothing").unwrap_err();
        assert_eq!(e.raw, "nothing");
    }

    #[test]
    fn reply_without_fence_and_with_duplicates() {
        let r = parse_reply("Result: {\"purpose\": \"p\", \"operations\": [\" a\\n b \", \"a b\", \"c\"]} done").unwrap();
        assert_eq!(r.steps, ["a b", "c"]);
    }

    #[test]
    fn histogram_sums_to_set_count() {
        let sets: Vec<_> = (0..5)
            .map(|i| FunctionalStatementSet {
                script_id: i.to_string(),
                purpose: String::new(),
                steps: vec!["x".into(); i % 3 + 1],
            })
            .collect();
        let h = step_histogram(&sets);
        assert_eq!(h.iter().map(|(_, c)| c).sum::<usize>(), 5);
    }

    proptest! {
        #[test]
        fn escape_round_trips(parts in prop::collection::vec(prop::sample::select(vec!["a", "\\", "SCRIPT>>>", "<<<SCRIPT", "\n", "\"", "x y"]), 0..20)) {
            let body: String = parts.concat();
            prop_assert_eq!(unescape_body(&escape_body(&body)), body.clone());
            let prompt = format!("head\n{SCRIPT_BEGIN}\n{}\n{SCRIPT_END}\ntail", escape_body(&body));
            prop_assert_eq!(extract_script_body(&prompt), Some(body));
        }
    }
}
