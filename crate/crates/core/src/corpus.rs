//! Script ingestion and comment stripping.
//!
//! A corpus manifest lists every script found under a root directory, in
//! path order. The manifest file is line-delimited JSON with one
//! `{script_id, path, byte_size, sha256}` record per script; the skip list,
//! duplicate report and aggregate stats travel in a `.meta.json` sidecar.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use chrono::{DateTime, Utc};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use walkdir::WalkDir;

use crate::error::{Error, Result};
use crate::io::{read_jsonl, write_atomic, write_jsonl};

pub const DEFAULT_LANGUAGE_TAG: &str = "javascript-like";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScriptRecord {
    pub script_id: String,
    pub path: PathBuf,
    pub byte_size: u64,
    pub sha256: String,
    #[serde(default = "default_language_tag")]
    pub language_tag: String,
    #[serde(skip)]
    pub source: String,
}

fn default_language_tag() -> String {
    DEFAULT_LANGUAGE_TAG.to_string()
}

impl ScriptRecord {
    pub fn from_source(script_id: impl Into<String>, source: impl Into<String>) -> Self {
        let source = source.into();
        ScriptRecord {
            script_id: script_id.into(),
            path: PathBuf::new(),
            byte_size: source.len() as u64,
            sha256: sha256_hex(source.as_bytes()),
            language_tag: default_language_tag(),
            source,
        }
    }

    /// Re-reads the script body from disk if it was not kept in memory.
    pub fn load_source(&mut self) -> Result<&str> {
        if self.source.is_empty() {
            self.source = fs::read_to_string(&self.path).map_err(|e| Error::io(&self.path, e))?;
        }
        Ok(&self.source)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SkippedFile {
    pub path: PathBuf,
    pub reason: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorpusStats {
    pub count: usize,
    pub total_bytes: u64,
    pub skipped: usize,
    /// Groups of script ids sharing one sha256. Duplicates are kept.
    pub duplicate_groups: Vec<Vec<String>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusManifest {
    pub entries: Vec<ScriptRecord>,
    pub created_at: DateTime<Utc>,
    pub corpus_stats: CorpusStats,
    pub skipped: Vec<SkippedFile>,
}

#[derive(Serialize, Deserialize)]
struct ManifestMeta {
    created_at: DateTime<Utc>,
    corpus_stats: CorpusStats,
    skipped: Vec<SkippedFile>,
}

impl CorpusManifest {
    pub fn from_records(mut entries: Vec<ScriptRecord>, skipped: Vec<SkippedFile>) -> Self {
        entries.sort_by(|a, b| a.path.cmp(&b.path).then_with(|| a.script_id.cmp(&b.script_id)));
        let mut by_hash: BTreeMap<&str, Vec<String>> = BTreeMap::new();
        for e in &entries {
            by_hash.entry(&e.sha256).or_default().push(e.script_id.clone());
        }
        let duplicate_groups = by_hash.into_values().filter(|g| g.len() > 1).collect();
        let corpus_stats = CorpusStats {
            count: entries.len(),
            total_bytes: entries.iter().map(|e| e.byte_size).sum(),
            skipped: skipped.len(),
            duplicate_groups,
        };
        CorpusManifest {
            entries,
            created_at: Utc::now(),
            corpus_stats,
            skipped,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.entries.len() != self.corpus_stats.count {
            return Err(Error::Validation(format!(
                "manifest lists {} entries but stats count {}",
                self.entries.len(),
                self.corpus_stats.count
            )));
        }
        let mut seen = std::collections::HashSet::new();
        for e in &self.entries {
            if !seen.insert(e.script_id.as_str()) {
                return Err(Error::Validation(format!("duplicate script_id {}", e.script_id)));
            }
        }
        Ok(())
    }

    pub fn meta_path(manifest_path: &Path) -> PathBuf {
        let mut name = manifest_path.file_name().unwrap_or_default().to_os_string();
        name.push(".meta.json");
        manifest_path.with_file_name(name)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_jsonl(path, &self.entries)?;
        let meta = ManifestMeta {
            created_at: self.created_at,
            corpus_stats: self.corpus_stats.clone(),
            skipped: self.skipped.clone(),
        };
        let text = serde_json::to_string_pretty(&meta).map_err(|e| Error::parse("manifest meta", e))?;
        write_atomic(&Self::meta_path(path), text.as_bytes())
    }

    /// Loads entries (without source text) plus the sidecar if present.
    pub fn load(path: &Path) -> Result<Self> {
        let entries: Vec<ScriptRecord> = read_jsonl(path)?;
        let meta_path = Self::meta_path(path);
        let manifest = match fs::read_to_string(&meta_path) {
            Ok(text) => {
                let meta: ManifestMeta =
                    serde_json::from_str(&text).map_err(|e| Error::parse("manifest meta", e))?;
                CorpusManifest {
                    entries,
                    created_at: meta.created_at,
                    corpus_stats: meta.corpus_stats,
                    skipped: meta.skipped,
                }
            }
            Err(_) => CorpusManifest::from_records(entries, Vec::new()),
        };
        manifest.validate()?;
        Ok(manifest)
    }

    /// Fills in `source` for every entry from its recorded path.
    pub fn load_sources(&mut self) -> Result<()> {
        for e in &mut self.entries {
            e.load_source()?;
        }
        Ok(())
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Collects every file under `root` whose path relative to `root` matches
/// `glob` (a bare pattern such as `*.js` is matched against the file name).
/// Files that cannot be read are listed as skipped; the batch never aborts.
pub fn ingest(root: &Path, glob: &str) -> Result<CorpusManifest> {
    let pattern = glob::Pattern::new(glob).map_err(|e| Error::parse("glob pattern", e))?;
    let match_name_only = !glob.contains('/');
    if !root.is_dir() {
        return Err(Error::io(
            root,
            std::io::Error::new(std::io::ErrorKind::NotFound, "corpus root is not a readable directory"),
        ));
    }

    let mut candidates = Vec::new();
    let mut skipped = Vec::new();
    for entry in WalkDir::new(root).sort_by_file_name() {
        let entry = match entry {
            Ok(e) => e,
            Err(e) => {
                skipped.push(SkippedFile {
                    path: e.path().map(Path::to_path_buf).unwrap_or_default(),
                    reason: e.to_string(),
                });
                continue;
            }
        };
        if entry.file_type().is_dir() {
            continue;
        }
        let rel = entry.path().strip_prefix(root).unwrap_or(entry.path());
        let matched = if match_name_only {
            pattern.matches(&entry.file_name().to_string_lossy())
        } else {
            pattern.matches_path(rel)
        };
        if matched {
            candidates.push((entry.path().to_path_buf(), script_id_for(rel)));
        }
    }

    let outcomes: Vec<std::result::Result<ScriptRecord, SkippedFile>> = candidates
        .par_iter()
        .map(|(path, id)| read_record(path, id))
        .collect();
    let mut entries = Vec::with_capacity(outcomes.len());
    for outcome in outcomes {
        match outcome {
            Ok(r) => entries.push(r),
            Err(s) => {
                log::warn!("skipping {}: {}", s.path.display(), s.reason);
                skipped.push(s);
            }
        }
    }
    skipped.sort_by(|a, b| a.path.cmp(&b.path));
    Ok(CorpusManifest::from_records(entries, skipped))
}

fn script_id_for(rel: &Path) -> String {
    rel.components()
        .map(|c| c.as_os_str().to_string_lossy().into_owned())
        .collect::<Vec<_>>()
        .join("/")
}

fn read_record(path: &Path, id: &str) -> std::result::Result<ScriptRecord, SkippedFile> {
    let skip = |reason: String| SkippedFile {
        path: path.to_path_buf(),
        reason,
    };
    let bytes = fs::read(path).map_err(|e| skip(format!("unreadable: {e}")))?;
    if bytes.is_empty() {
        return Err(skip("empty file".to_string()));
    }
    let sha = sha256_hex(&bytes);
    let source = String::from_utf8(bytes).map_err(|e| skip(format!("not valid UTF-8: {e}")))?;
    Ok(ScriptRecord {
        script_id: id.to_string(),
        path: path.to_path_buf(),
        byte_size: source.len() as u64,
        sha256: sha,
        language_tag: default_language_tag(),
        source,
    })
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Stripped {
    pub text: String,
    pub unterminated_block: bool,
}

/// Removes `//` and `/* */` comments, leaving string, template and regex
/// literals untouched. Line comments keep their terminating newline; block
/// comments keep the newlines they span so line numbers stay stable.
pub fn strip_comments(source: &str) -> String {
    let out = strip_comments_report(source);
    if out.unterminated_block {
        log::warn!("unterminated block comment; stripped to end of input");
    }
    out.text
}

pub fn strip_comments_report(source: &str) -> Stripped {
    let chars: Vec<char> = source.chars().collect();
    let mut out = String::with_capacity(source.len());
    let mut unterminated_block = false;
    // Last significant (non-space, non-comment) char emitted; decides
    // whether a `/` opens a regex literal or is a division.
    let mut last_sig: Option<char> = None;
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        let next = chars.get(i + 1).copied();
        match c {
            '"' | '\'' | '`' => {
                let end = scan_quoted(&chars, i, c);
                out.extend(&chars[i..end]);
                last_sig = Some(c);
                i = end;
            }
            '/' if next == Some('/') => {
                while i < chars.len() && chars[i] != '\n' {
                    i += 1;
                }
            }
            '/' if next == Some('*') => {
                let mut j = i + 2;
                loop {
                    if j + 1 >= chars.len() {
                        unterminated_block = true;
                        for &ch in &chars[i + 2..] {
                            if ch == '\n' {
                                out.push('\n');
                            }
                        }
                        i = chars.len();
                        break;
                    }
                    if chars[j] == '*' && chars[j + 1] == '/' {
                        for &ch in &chars[i + 2..j] {
                            if ch == '\n' {
                                out.push('\n');
                            }
                        }
                        i = j + 2;
                        break;
                    }
                    j += 1;
                }
            }
            '/' if regex_allowed(last_sig) => {
                let end = scan_regex(&chars, i);
                out.extend(&chars[i..end]);
                last_sig = Some('/');
                i = end;
            }
            _ => {
                out.push(c);
                if !c.is_whitespace() {
                    last_sig = Some(c);
                }
                i += 1;
            }
        }
    }
    Stripped {
        text: out,
        unterminated_block,
    }
}

fn regex_allowed(last_sig: Option<char>) -> bool {
    match last_sig {
        None => true,
        Some(c) => "(,=:[!&|?{};+-*%<>~^".contains(c),
    }
}

/// Index one past the closing quote; an unterminated literal runs to the end
/// of its line (or input, for template literals).
fn scan_quoted(chars: &[char], start: usize, quote: char) -> usize {
    let mut i = start + 1;
    while i < chars.len() {
        match chars[i] {
            '\\' => i += 2,
            c if c == quote => return i + 1,
            '\n' if quote != '`' => return i,
            _ => i += 1,
        }
    }
    chars.len()
}

fn scan_regex(chars: &[char], start: usize) -> usize {
    let mut i = start + 1;
    let mut in_class = false;
    while i < chars.len() {
        match chars[i] {
            '\\' => i += 2,
            '[' => {
                in_class = true;
                i += 1
            }
            ']' => {
                in_class = false;
                i += 1
            }
            '/' if !in_class => {
                i += 1;
                while i < chars.len() && chars[i].is_ascii_alphabetic() {
                    i += 1;
                }
                return i;
            }
            // Not a regex after all; emit the slash as-is.
            '\n' => return start + 1,
            _ => i += 1,
        }
    }
    start + 1
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn strips_line_comment_keeping_prefix() {
        assert_eq!(strip_comments("var a=1; // note"), "var a=1; ");
        assert_eq!(strip_comments("a(); // x\nb();"), "a(); \nb();");
    }

    #[test]
    fn string_with_comment_marker_is_untouched() {
        let s = "var s=\"//not a comment\";";
        assert_eq!(strip_comments(s), s);
        let s = "var t='/* nor this */';";
        assert_eq!(strip_comments(s), s);
    }

    #[test]
    fn adjacent_block_comments() {
        assert_eq!(strip_comments("/*a*/x/*b*/"), "x");
    }

    #[test]
    fn block_comment_keeps_line_count() {
        let out = strip_comments("a();/* one\ntwo\n*/b();");
        assert_eq!(out, "a();\n\nb();");
    }

    #[test]
    fn unterminated_block_strips_to_end() {
        let r = strip_comments_report("a(); /* never closed\nfoo");
        assert!(r.unterminated_block);
        assert_eq!(r.text, "a(); \n");
    }

    #[test]
    fn regex_literal_is_preserved() {
        let s = "var r = /a\\/\\/b/g; f(r);";
        assert_eq!(strip_comments(s), s);
        assert_eq!(strip_comments("x = a / b; // c"), "x = a / b; ");
    }

    #[derive(Debug, Clone)]
    enum Seg {
        Code(String),
        Str(String),
        Line(String),
        Block(String),
    }

    fn seg() -> impl Strategy<Value = Seg> {
        prop_oneof![
            "[a-z0-9 ().;=,+]{0,8}".prop_map(Seg::Code),
            "[a-z/* ]{0,8}".prop_map(Seg::Str),
            "[a-z/* \"']{0,8}".prop_map(Seg::Line),
            "[a-z/ \n\"']{0,8}".prop_map(Seg::Block),
        ]
    }

    fn render(segs: &[Seg]) -> (String, String, Vec<String>) {
        let mut src = String::new();
        let mut expected = String::new();
        let mut literals = Vec::new();
        for s in segs {
            match s {
                Seg::Code(c) => {
                    // keep code from gluing with neighbours into `//` or `/*`
                    src.push_str(c);
                    src.push(' ');
                    expected.push_str(c);
                    expected.push(' ');
                }
                Seg::Str(body) => {
                    let lit = format!("\"{body}\"");
                    src.push_str(&lit);
                    expected.push_str(&lit);
                    literals.push(lit);
                }
                Seg::Line(body) => {
                    src.push_str(&format!("//{body}\n"));
                    expected.push('\n');
                }
                Seg::Block(body) => {
                    src.push_str(&format!("/*{body}*/"));
                    expected.extend(body.chars().filter(|&c| c == '\n'));
                }
            }
        }
        (src, expected, literals)
    }

    proptest! {
        #[test]
        fn strip_is_idempotent(segs in prop::collection::vec(seg(), 0..12)) {
            let (src, _, _) = render(&segs);
            let once = strip_comments(&src);
            prop_assert_eq!(strip_comments(&once), once.clone());
        }

        #[test]
        fn string_literals_survive(segs in prop::collection::vec(seg(), 0..12)) {
            let (src, expected, literals) = render(&segs);
            let out = strip_comments(&src);
            prop_assert_eq!(&out, &expected);
            for lit in literals {
                prop_assert!(out.contains(&lit));
            }
        }
    }

    #[test]
    fn ingest_counts_and_orders() {
        let dir = tempfile::tempdir().unwrap();
        for name in ["b.js", "a.js", "c.js", "notes.txt"] {
            fs::write(dir.path().join(name), "ee.Image(1);").unwrap();
        }
        let m = ingest(dir.path(), "*.js").unwrap();
        assert_eq!(m.entries.len(), 3);
        assert_eq!(m.corpus_stats.count, 3);
        let ids: Vec<_> = m.entries.iter().map(|e| e.script_id.as_str()).collect();
        assert_eq!(ids, ["a.js", "b.js", "c.js"]);
        assert_eq!(m.corpus_stats.duplicate_groups.len(), 1);
        m.validate().unwrap();
    }

    #[test]
    fn ingest_empty_dir() {
        let dir = tempfile::tempdir().unwrap();
        let m = ingest(dir.path(), "*.js").unwrap();
        assert!(m.entries.is_empty());
        assert_eq!(m.corpus_stats.count, 0);
        assert_eq!(m.corpus_stats.total_bytes, 0);
    }

    #[cfg(unix)]
    #[test]
    fn ingest_skips_unreadable_without_aborting() {
        let dir = tempfile::tempdir().unwrap();
        for i in 0..4 {
            fs::write(dir.path().join(format!("s{i}.js")), format!("f{i}();")).unwrap();
        }
        // A dangling symlink cannot be read even when running as root.
        std::os::unix::fs::symlink(dir.path().join("missing.js"), dir.path().join("s9.js")).unwrap();
        let m = ingest(dir.path(), "*.js").unwrap();
        assert_eq!(m.entries.len(), 4);
        assert_eq!(m.skipped.len(), 1);
        assert!(m.skipped[0].path.ends_with("s9.js"));
        assert!(m.skipped[0].reason.contains("unreadable"));
    }

    #[test]
    fn empty_file_is_skipped() {
        let dir = tempfile::tempdir().unwrap();
        fs::write(dir.path().join("a.js"), "").unwrap();
        fs::write(dir.path().join("b.js"), "x();").unwrap();
        let m = ingest(dir.path(), "*.js").unwrap();
        assert_eq!(m.entries.len(), 1);
        assert_eq!(m.skipped[0].reason, "empty file");
    }

    #[test]
    fn manifest_round_trips_through_disk() {
        let dir = tempfile::tempdir().unwrap();
        fs::create_dir(dir.path().join("sub")).unwrap();
        fs::write(dir.path().join("sub/x.js"), "a.b();").unwrap();
        let m = ingest(dir.path(), "*.js").unwrap();
        let out = dir.path().join("manifest.jsonl");
        m.save(&out).unwrap();
        let mut back = CorpusManifest::load(&out).unwrap();
        assert_eq!(back.entries[0].script_id, "sub/x.js");
        back.load_sources().unwrap();
        assert_eq!(back.entries[0].source, "a.b();");
        let line = fs::read_to_string(&out).unwrap();
        let v: serde_json::Value = serde_json::from_str(line.trim()).unwrap();
        for key in ["script_id", "path", "byte_size", "sha256"] {
            assert!(v.get(key).is_some(), "missing {key}");
        }
    }
}
