//! Call-chain syntax trees and operator call-pair extraction.

mod estree;
mod lexer;
mod node;
mod parser;
mod traverse;

use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use estree::{from_estree, load_pre_parsed, LoadedTree};
pub use node::{AstNode, NodeKind};
pub use parser::{parse_script, Diagnostic, ParsedScript};
pub use traverse::{call_names, extract_function_name, traverse_ast, CallLog, CallLogLine, CallPair, ROOT_NAMESPACE};

use crate::corpus::{strip_comments, CorpusManifest};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExtractStatus {
    Ok,
    ParseFailed,
    Unreadable,
}

/// Per-script outcome of call extraction, kept for the diagnostics report.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScriptExtraction {
    pub script_id: String,
    pub status: ExtractStatus,
    pub source: String,
    pub pair_count: usize,
    pub diagnostics: Vec<String>,
    #[serde(skip)]
    pub log: CallLog,
}

/// Extracts call logs for every script in the manifest. When `estree_dir`
/// holds `<script_id>.json`, the pre-parsed tree is used instead of the
/// source parser. Output is sorted by script id.
pub fn extract_corpus(manifest: &CorpusManifest, estree_dir: Option<&Path>) -> Vec<ScriptExtraction> {
    let mut out: Vec<ScriptExtraction> = manifest
        .entries
        .par_iter()
        .map(|entry| {
            let mut entry = entry.clone();
            let estree = estree_dir
                .map(|d| d.join(format!("{}.json", entry.script_id)))
                .filter(|p| p.is_file());
            if let Some(path) = estree {
                return match load_pre_parsed(&path) {
                    Ok(tree) => finish(&entry.script_id, "estree", &tree.root, tree.warnings, false),
                    Err(e) => failed(&entry.script_id, "estree", ExtractStatus::ParseFailed, e.to_string()),
                };
            }
            match entry.load_source() {
                Ok(src) => {
                    let parsed = parse_script(&strip_comments(src));
                    let diags = parsed
                        .diagnostics
                        .iter()
                        .map(|d| format!("line {}: {}", d.line, d.message))
                        .collect();
                    finish(&entry.script_id, "source", &parsed.root, diags, parsed.parse_failed)
                }
                Err(e) => failed(&entry.script_id, "source", ExtractStatus::Unreadable, e.to_string()),
            }
        })
        .collect();
    out.sort_by(|a, b| a.script_id.cmp(&b.script_id));
    out
}

fn finish(id: &str, source: &str, root: &AstNode, diagnostics: Vec<String>, parse_failed: bool) -> ScriptExtraction {
    let log = traverse_ast(root, id);
    ScriptExtraction {
        script_id: id.to_string(),
        status: if parse_failed { ExtractStatus::ParseFailed } else { ExtractStatus::Ok },
        source: source.to_string(),
        pair_count: log.pairs.len(),
        diagnostics,
        log,
    }
}

fn failed(id: &str, source: &str, status: ExtractStatus, message: String) -> ScriptExtraction {
    ScriptExtraction {
        script_id: id.to_string(),
        status,
        source: source.to_string(),
        pair_count: 0,
        diagnostics: vec![message],
        log: CallLog {
            script_id: id.to_string(),
            pairs: Vec::new(),
        },
    }
}
