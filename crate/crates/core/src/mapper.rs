//! Frequent pattern semantic mapping.
//!
//! Frequent itemsets are put in a stable order, each configured model is
//! asked several times which framework leaf the combination serves, every
//! answer is checked against the framework (falling back to the closest leaf
//! label), and the pooled answers are decided by plurality vote.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::framework::{normalize_label, LabelPath, Leaf, SemanticFramework};
use crate::gateway::{ExchangeLog, Gateway};
use crate::io::{read_json, write_json};
use crate::miner::{FrequentItemset, Itemset};

pub const DEFAULT_ROUNDS: u32 = 5;
pub const DEFAULT_BAND_WIDTH: f64 = 0.05;
/// Fuzzy matches below this similarity are flagged.
pub const LOW_CONFIDENCE: f64 = 0.5;
/// Longest free-text reply still read as a bare function label.
const MAX_LABEL_WORDS: usize = 6;

const DEFAULT_TEMPLATE: &str = include_str!("../assets/mapping_prompt.toml");

/// `(k, support band rank, position in the band's chain)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct OrderKey {
    pub k: usize,
    pub band: usize,
    pub position: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MappingTask {
    pub itemset: FrequentItemset,
    pub order_key: OrderKey,
}

/// Orders itemsets by length, then by support band (highest first). Inside a
/// band the tasks form a greedy chain: it starts at the highest-support task
/// and each next task is the one sharing the most operators (Jaccard) with
/// the previous one. Ties prefer higher support, then the smaller operator
/// list. Repeated operator sets keep their first occurrence.
pub fn orchestrate(itemsets: &[FrequentItemset], band_width: f64) -> Vec<MappingTask> {
    let width = if band_width > 0.0 && band_width.is_finite() { band_width } else { DEFAULT_BAND_WIDTH };
    let mut seen = BTreeSet::new();
    let mut buckets: BTreeMap<(usize, std::cmp::Reverse<u64>), Vec<&FrequentItemset>> = BTreeMap::new();
    for it in itemsets {
        if !seen.insert(&it.operators) {
            continue;
        }
        let band = (it.support / width).floor().max(0.0) as u64;
        buckets.entry((it.operators.k(), std::cmp::Reverse(band))).or_default().push(it);
    }

    let mut tasks = Vec::with_capacity(seen.len());
    let mut band_rank = 0;
    let mut current_k = None;
    for ((k, _), mut members) in buckets {
        if current_k != Some(k) {
            current_k = Some(k);
            band_rank = 0;
        }
        members.sort_by(|a, b| b.support.total_cmp(&a.support).then_with(|| a.operators.cmp(&b.operators)));
        let mut chain = vec![members.remove(0)];
        while !members.is_empty() {
            let last = &chain[chain.len() - 1].operators;
            let mut best = 0;
            let mut best_j = last.jaccard(&members[0].operators);
            for (i, m) in members.iter().enumerate().skip(1) {
                let j = last.jaccard(&m.operators);
                if j > best_j {
                    best = i;
                    best_j = j;
                }
            }
            chain.push(members.remove(best));
        }
        for (position, it) in chain.into_iter().enumerate() {
            tasks.push(MappingTask {
                itemset: it.clone(),
                order_key: OrderKey { k, band: band_rank, position },
            });
        }
        band_rank += 1;
    }
    tasks
}

/// Compact listing of every leaf as `id | l1 > l2 > l3`, ordered by id.
pub fn index_framework(framework: &SemanticFramework) -> String {
    framework
        .leaves_by_id()
        .iter()
        .map(|l| format!("{} | {}", l.id, l.path))
        .collect::<Vec<_>>()
        .join("\n")
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MappingTemplate {
    pub template: String,
}

impl Default for MappingTemplate {
    fn default() -> Self {
        Self::from_toml(DEFAULT_TEMPLATE).expect("bundled mapping template is valid")
    }
}

impl MappingTemplate {
    pub fn from_toml(text: &str) -> Result<Self> {
        let t: MappingTemplate = toml::from_str(text).map_err(|e| Error::parse("mapping template", e))?;
        t.validate()?;
        Ok(t)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text)
    }

    pub fn validate(&self) -> Result<()> {
        for p in ["{framework}", "{operators}", "{round}"] {
            if !self.template.contains(p) {
                return Err(Error::Validation(format!("mapping template lacks the {p} placeholder")));
            }
        }
        Ok(())
    }

    pub fn render(&self, fragment: &str, operators: &Itemset, round: u32, rounds: u32) -> String {
        self.template
            .trim()
            .replace("{framework}", fragment)
            .replace("{operators}", &operators.operators().join(", "))
            .replace("{rounds}", &rounds.to_string())
            .replace("{round}", &round.to_string())
    }
}

/// Framework labels attributed to one answer, with how they were obtained.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelTriple {
    pub l1: String,
    pub l2: String,
    pub l3: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub leaf_id: Option<u32>,
    pub verified: bool,
    /// `1 - similarity`; 0 for an exact path.
    pub fuzzy_distance: f64,
    pub similarity: f64,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub low_confidence: bool,
}

impl LabelTriple {
    pub fn from_leaf(leaf: &Leaf) -> Self {
        LabelTriple {
            l1: leaf.path.l1.clone(),
            l2: leaf.path.l2.clone(),
            l3: leaf.path.l3.clone(),
            leaf_id: Some(leaf.id),
            verified: true,
            fuzzy_distance: 0.0,
            similarity: 1.0,
            low_confidence: false,
        }
    }

    pub fn unverified(path: LabelPath) -> Self {
        LabelTriple {
            l1: path.l1,
            l2: path.l2,
            l3: path.l3,
            leaf_id: None,
            verified: false,
            fuzzy_distance: 0.0,
            similarity: 0.0,
            low_confidence: false,
        }
    }

    /// Placeholder for a reply that names nothing recognisable.
    pub fn sentinel() -> Self {
        Self::unverified(LabelPath::new("", "", ""))
    }

    pub fn is_sentinel(&self) -> bool {
        self.l1.is_empty() && self.l2.is_empty() && self.l3.is_empty()
    }

    pub fn path(&self) -> LabelPath {
        LabelPath::new(&self.l1, &self.l2, &self.l3)
    }
}

/// Reads a reply as a full path, then as a leaf id, then as a bare label.
/// Anything else becomes the sentinel.
pub fn parse_mapping_reply(reply: &str, framework: &SemanticFramework) -> LabelTriple {
    for line in reply.lines() {
        let t = line.trim().trim_matches(|c: char| c == '`' || c == '"' || c == '*').trim_end_matches('.');
        if t.matches('>').count() == 2 {
            if let Some(path) = LabelPath::parse(t) {
                return match framework.leaf_by_path(&path) {
                    Some(leaf) => LabelTriple::from_leaf(&leaf),
                    None => LabelTriple::unverified(path),
                };
            }
        }
    }
    for tok in reply.split(|c: char| !c.is_ascii_digit()).filter(|t| !t.is_empty()) {
        if let Some(leaf) = tok.parse().ok().and_then(|id| framework.leaf(id)) {
            return LabelTriple::from_leaf(&leaf);
        }
    }
    let t = reply.trim().trim_matches(|c: char| c == '`' || c == '"' || c == '*').trim_end_matches('.').trim();
    let words = t.split_whitespace().count();
    if words > 0 && words <= MAX_LABEL_WORDS && t.chars().any(char::is_alphabetic) {
        return LabelTriple::unverified(LabelPath::new("", "", t));
    }
    LabelTriple::sentinel()
}

/// True iff the full path is a leaf path (case and whitespace insensitive).
pub fn verify_exists(triple: &LabelTriple, framework: &SemanticFramework) -> bool {
    !triple.is_sentinel() && framework.leaf_by_path(&triple.path()).is_some()
}

#[derive(Debug, Clone, PartialEq)]
pub struct FuzzyMatch {
    pub leaf: Leaf,
    pub similarity: f64,
    pub distance: f64,
}

/// Closest leaf by normalized Levenshtein similarity on the function label;
/// ties go to the smallest leaf id.
pub fn fuzzy_match(label: &str, framework: &SemanticFramework) -> FuzzyMatch {
    let want = normalize_label(label);
    let mut best: Option<(Leaf, f64)> = None;
    for leaf in framework.leaves_by_id() {
        let sim = strsim::normalized_levenshtein(&want, &normalize_label(&leaf.path.l3));
        if best.as_ref().is_none_or(|(_, b)| sim > *b) {
            best = Some((leaf, sim));
        }
    }
    let (leaf, similarity) = best.expect("framework has leaves");
    FuzzyMatch {
        leaf,
        similarity,
        distance: 1.0 - similarity,
    }
}

/// Turns a parsed answer into a verified leaf: the exact path if it exists,
/// otherwise the closest leaf label.
pub fn resolve(triple: &LabelTriple, framework: &SemanticFramework) -> LabelTriple {
    if verify_exists(triple, framework) {
        let leaf = framework.leaf_by_path(&triple.path()).expect("verified path");
        return LabelTriple::from_leaf(&leaf);
    }
    let m = fuzzy_match(&triple.l3, framework);
    LabelTriple {
        fuzzy_distance: m.distance,
        similarity: m.similarity,
        low_confidence: m.similarity < LOW_CONFIDENCE,
        ..LabelTriple::from_leaf(&m.leaf)
    }
}

pub fn tally(votes: &[u32]) -> BTreeMap<u32, usize> {
    let mut t = BTreeMap::new();
    for v in votes {
        *t.entry(*v).or_insert(0) += 1;
    }
    t
}

/// Plurality winner, ties to the smallest leaf id.
pub fn vote(votes: &[u32]) -> Option<u32> {
    let t = tally(votes);
    let top = *t.values().max()?;
    t.into_iter().find(|(_, c)| *c == top).map(|(id, _)| id)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MappingResponse {
    pub round: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reply: Option<String>,
    pub parsed: LabelTriple,
    /// Absent when the gateway failed for this round.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub resolved: Option<LabelTriple>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelResponses {
    pub profile_name: String,
    pub responses: Vec<MappingResponse>,
    pub winner: Option<u32>,
}

impl ModelResponses {
    pub fn votes(&self) -> Vec<u32> {
        self.responses.iter().filter_map(|r| r.resolved.as_ref()?.leaf_id).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VoteRecord {
    pub operators: Itemset,
    pub models: Vec<ModelResponses>,
    pub combination: Vec<String>,
    pub tally: BTreeMap<u32, usize>,
    pub winner: u32,
}

impl VoteRecord {
    /// Pools the answers of the named models. `None` when none of them
    /// produced a usable answer.
    pub fn decide(operators: Itemset, mut models: Vec<ModelResponses>, combination: &[String]) -> Option<Self> {
        let mut pooled = Vec::new();
        for m in &mut models {
            let votes = m.votes();
            m.winner = vote(&votes);
            if combination.contains(&m.profile_name) {
                pooled.extend(votes);
            }
        }
        let winner = vote(&pooled)?;
        Some(VoteRecord {
            operators,
            models,
            combination: combination.to_vec(),
            tally: tally(&pooled),
            winner,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KnowledgeBaseRecord {
    pub record_id: String,
    pub operators: Itemset,
    pub support: f64,
    pub label: LabelTriple,
    pub provenance: VoteRecord,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MappingFailure {
    pub operators: Itemset,
    pub support: f64,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KnowledgeBase {
    pub framework_sha256: String,
    pub profiles: Vec<String>,
    pub combination: Vec<String>,
    pub rounds: u32,
    pub records: Vec<KnowledgeBaseRecord>,
    #[serde(default)]
    pub failures: Vec<MappingFailure>,
}

impl KnowledgeBase {
    pub fn save(&self, path: &Path) -> Result<()> {
        write_json(path, self)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let kb: KnowledgeBase = read_json(path)?;
        for r in &kb.records {
            if !r.label.verified || r.label.leaf_id.is_none() {
                return Err(Error::Validation(format!("record {} has an unverified label", r.record_id)));
            }
        }
        Ok(kb)
    }

    /// Fails unless the knowledge base was built against `framework`.
    pub fn check_framework(&self, framework: &SemanticFramework) -> Result<()> {
        if self.framework_sha256 != framework.fingerprint() {
            return Err(Error::Validation(
                "knowledge base was built against a different framework".into(),
            ));
        }
        Ok(())
    }

    /// Re-decides every record from its provenance using only the named
    /// profiles. Records none of them answered move to the failure list.
    pub fn revote(&self, combination: &[String], framework: &SemanticFramework) -> Result<KnowledgeBase> {
        self.check_framework(framework)?;
        if combination.is_empty() {
            return Err(Error::Validation("empty model combination".into()));
        }
        for name in combination {
            if !self.profiles.contains(name) {
                return Err(Error::Validation(format!(
                    "profile {name:?} is not in the knowledge base (have {})",
                    self.profiles.join(", ")
                )));
            }
        }
        let mut out = KnowledgeBase {
            combination: combination.to_vec(),
            records: Vec::new(),
            ..self.clone()
        };
        for r in &self.records {
            match VoteRecord::decide(r.operators.clone(), r.provenance.models.clone(), combination) {
                Some(v) => out.records.push(record(&r.record_id, &r.operators, r.support, v, framework)?),
                None => out.failures.push(MappingFailure {
                    operators: r.operators.clone(),
                    support: r.support,
                    detail: format!("no usable answer from {}", combination.join("+")),
                }),
            }
        }
        Ok(out)
    }
}

/// Parses `m1+m3` into profile names.
pub fn parse_combination(text: &str) -> Vec<String> {
    text.split('+').map(str::trim).filter(|s| !s.is_empty()).map(String::from).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MapConfig {
    pub rounds: u32,
    pub band_width: f64,
}

impl Default for MapConfig {
    fn default() -> Self {
        MapConfig {
            rounds: DEFAULT_ROUNDS,
            band_width: DEFAULT_BAND_WIDTH,
        }
    }
}

/// One inquiry: render, ask, parse and resolve.
pub fn map_once(
    task: &MappingTask,
    fragment: &str,
    template: &MappingTemplate,
    framework: &SemanticFramework,
    gateway: &Gateway,
    round: u32,
    rounds: u32,
    log: Option<&ExchangeLog>,
) -> MappingResponse {
    let prompt = template.render(fragment, &task.itemset.operators, round, rounds);
    match gateway.chat(&prompt, log) {
        Ok(ex) => {
            let parsed = parse_mapping_reply(&ex.response, framework);
            let resolved = resolve(&parsed, framework);
            MappingResponse {
                round,
                reply: Some(ex.response),
                parsed,
                resolved: Some(resolved),
                error: None,
            }
        }
        Err(e) => MappingResponse {
            round,
            reply: None,
            parsed: LabelTriple::sentinel(),
            resolved: None,
            error: Some(e.to_string()),
        },
    }
}

fn record(id: &str, operators: &Itemset, support: f64, v: VoteRecord, framework: &SemanticFramework) -> Result<KnowledgeBaseRecord> {
    let leaf = framework
        .leaf(v.winner)
        .ok_or_else(|| Error::Validation(format!("vote winner {} is not a framework leaf", v.winner)))?;
    Ok(KnowledgeBaseRecord {
        record_id: id.to_string(),
        operators: operators.clone(),
        support,
        label: LabelTriple::from_leaf(&leaf),
        provenance: v,
    })
}

/// Maps every itemset with every gateway. Rounds for one (task, model) run
/// in sequence; tasks run in parallel up to the largest profile
/// concurrency. Tasks for which no round of any model succeeded are listed
/// as failures instead of records.
pub fn build_kb(
    itemsets: &[FrequentItemset],
    framework: &SemanticFramework,
    gateways: &[Gateway],
    template: &MappingTemplate,
    config: &MapConfig,
    log: Option<&ExchangeLog>,
) -> Result<KnowledgeBase> {
    if gateways.is_empty() {
        return Err(Error::Validation("mapping needs at least one gateway profile".into()));
    }
    if config.rounds == 0 {
        return Err(Error::Validation("mapping rounds must be at least 1".into()));
    }
    let profiles: Vec<String> = gateways.iter().map(|g| g.profile().profile_name.clone()).collect();
    let threads = gateways.iter().map(|g| g.profile().concurrency).max().unwrap_or(1).max(1);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::Domain(format!("thread pool: {e}")))?;
    let fragment = index_framework(framework);
    let tasks = orchestrate(itemsets, config.band_width);

    let outcomes: Vec<Result<std::result::Result<KnowledgeBaseRecord, MappingFailure>>> = pool.install(|| {
        tasks
            .par_iter()
            .enumerate()
            .map(|(i, task)| {
                let models: Vec<ModelResponses> = gateways
                    .iter()
                    .map(|g| ModelResponses {
                        profile_name: g.profile().profile_name.clone(),
                        responses: (1..=config.rounds)
                            .map(|round| map_once(task, &fragment, template, framework, g, round, config.rounds, log))
                            .collect(),
                        winner: None,
                    })
                    .collect();
                let it = &task.itemset;
                match VoteRecord::decide(it.operators.clone(), models.clone(), &profiles) {
                    Some(v) => Ok(Ok(record(&format!("kb-{:05}", i + 1), &it.operators, it.support, v, framework)?)),
                    None => {
                        let detail = models
                            .iter()
                            .flat_map(|m| m.responses.iter().filter_map(|r| r.error.clone()))
                            .next()
                            .unwrap_or_else(|| "no usable answer".into());
                        Ok(Err(MappingFailure {
                            operators: it.operators.clone(),
                            support: it.support,
                            detail: format!("llm_failed: {detail}"),
                        }))
                    }
                }
            })
            .collect()
    });

    let mut kb = KnowledgeBase {
        framework_sha256: framework.fingerprint(),
        combination: profiles.clone(),
        profiles,
        rounds: config.rounds,
        records: Vec::new(),
        failures: Vec::new(),
    };
    for o in outcomes {
        match o? {
            Ok(r) => kb.records.push(r),
            Err(f) => {
                log::warn!("mapping failed for {}: {}", f.operators, f.detail);
                kb.failures.push(f);
            }
        }
    }
    Ok(kb)
}

#[derive(Debug, Clone, PartialEq)]
pub struct LookupResult<'a> {
    pub leaf: Option<Leaf>,
    pub records: Vec<&'a KnowledgeBaseRecord>,
    /// Closest leaf label when the query names no leaf.
    pub suggestion: Option<String>,
}

/// Records whose label is the queried leaf (an id, a full path or a function
/// label), by support descending.
pub fn kb_lookup<'a>(kb: &'a KnowledgeBase, query: &str, framework: &SemanticFramework) -> LookupResult<'a> {
    let q = query.trim();
    let leaf = q
        .parse::<u32>()
        .ok()
        .and_then(|id| framework.leaf(id))
        .or_else(|| LabelPath::parse(q).and_then(|p| framework.leaf_by_path(&p)))
        .or_else(|| {
            let want = normalize_label(q);
            framework.leaves_by_id().into_iter().find(|l| normalize_label(&l.path.l3) == want)
        });
    let Some(leaf) = leaf else {
        let suggestion = (!q.is_empty()).then(|| {
            let label = LabelPath::parse(q).map_or_else(|| q.to_string(), |p| p.l3);
            fuzzy_match(&label, framework).leaf.path.l3
        });
        return LookupResult {
            leaf: None,
            records: Vec::new(),
            suggestion,
        };
    };
    let mut records: Vec<&KnowledgeBaseRecord> = kb.records.iter().filter(|r| r.label.leaf_id == Some(leaf.id)).collect();
    records.sort_by(|a, b| b.support.total_cmp(&a.support).then_with(|| a.record_id.cmp(&b.record_id)));
    LookupResult {
        leaf: Some(leaf),
        records,
        suggestion: None,
    }
}
