//! Scoring of knowledge base labels against expert annotations.
//!
//! Each prediction is compared with its gold path level by level. The
//! semantic score is full marks for a correct function and otherwise the
//! path similarity times 100; the structural score gives partial credit for
//! a correct subcategory (80/n) or category (20/m). The overall index is a
//! weighted sum of the two.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::framework::{normalize_label, LabelPath, SemanticFramework};
use crate::io::{read_jsonl, write_atomic, write_json};
use crate::mapper::{KnowledgeBase, KnowledgeBaseRecord};
use crate::miner::Itemset;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Weights {
    pub semantic: f64,
    pub structure: f64,
}

impl Default for Weights {
    fn default() -> Self {
        Weights {
            semantic: 0.6,
            structure: 0.4,
        }
    }
}

impl Weights {
    pub fn validate(&self) -> Result<()> {
        let ok = |w: f64| (0.0..=1.0).contains(&w);
        if !ok(self.semantic) || !ok(self.structure) || (self.semantic + self.structure - 1.0).abs() > 1e-9 {
            return Err(Error::Validation(format!(
                "weights must lie in [0, 1] and sum to 1, got {} + {}",
                self.semantic, self.structure
            )));
        }
        Ok(())
    }

    pub fn combine(&self, i_sem: f64, i_str: f64) -> f64 {
        self.semantic * i_sem + self.structure * i_str
    }
}

/// Similarity of two paths in `[0, 1]`.
pub type SimilarityFn = fn(&LabelPath, &LabelPath) -> f64;

fn path_tokens(p: &LabelPath) -> BTreeSet<String> {
    [&p.l1, &p.l2, &p.l3]
        .iter()
        .flat_map(|s| s.split(|c: char| !c.is_alphanumeric()))
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
        .collect()
}

/// Jaccard similarity of the lowercase token sets of the two full paths.
pub fn semantic_similarity(pred: &LabelPath, gold: &LabelPath) -> f64 {
    let (a, b) = (path_tokens(pred), path_tokens(gold));
    let union = a.union(&b).count();
    if union == 0 {
        return 1.0;
    }
    a.intersection(&b).count() as f64 / union as f64
}

/// Level-wise correctness under path identity: a level counts only if every
/// level above it is also correct.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LevelMatch {
    pub t1: bool,
    pub t2: bool,
    pub t3: bool,
}

pub fn level_match(pred: &LabelPath, gold: &LabelPath) -> LevelMatch {
    let eq = |a: &str, b: &str| normalize_label(a) == normalize_label(b);
    let t1 = eq(&pred.l1, &gold.l1);
    let t2 = t1 && eq(&pred.l2, &gold.l2);
    let t3 = t2 && eq(&pred.l3, &gold.l3);
    LevelMatch { t1, t2, t3 }
}

pub fn i_semantic(t3: bool, s: f64) -> f64 {
    if t3 {
        100.0
    } else {
        s * 100.0
    }
}

/// `(score, n, m)` where `n` counts the leaves under the gold subcategory and
/// `m` the subcategories under the gold category.
pub fn i_structure(pred: &LabelPath, gold: &LabelPath, framework: &SemanticFramework) -> (f64, usize, usize) {
    let n = framework.leaves_under(&gold.l1, &gold.l2);
    let m = framework.subcategories_under(&gold.l1);
    let t = level_match(pred, gold);
    let score = if t.t3 {
        100.0
    } else if t.t2 {
        80.0 / n as f64
    } else if t.t1 {
        20.0 / m as f64
    } else {
        0.0
    };
    (score, n, m)
}

pub fn i_geofub(i_sem: f64, i_str: f64) -> f64 {
    Weights::default().combine(i_sem, i_str)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GoldLabel {
    pub l1: String,
    pub l2: String,
    pub l3: String,
}

impl GoldLabel {
    pub fn path(&self) -> LabelPath {
        LabelPath::new(&self.l1, &self.l2, &self.l3)
    }
}

/// One line of the gold file. `annotators` optionally keeps the individual
/// expert labels behind the adjudicated `gold`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GoldAnnotation {
    pub operators: Itemset,
    pub gold: GoldLabel,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub annotators: Vec<GoldLabel>,
}

pub fn load_gold(path: &Path, framework: &SemanticFramework) -> Result<Vec<GoldAnnotation>> {
    let raw: Vec<GoldAnnotation> = read_jsonl(path)?;
    let gold: Vec<GoldAnnotation> = raw
        .into_iter()
        .map(|g| GoldAnnotation {
            operators: Itemset::new(g.operators.operators().iter().cloned()),
            ..g
        })
        .collect();
    check_gold(&gold, framework)?;
    Ok(gold)
}

fn check_gold(gold: &[GoldAnnotation], framework: &SemanticFramework) -> Result<()> {
    let mut seen = BTreeSet::new();
    for (i, g) in gold.iter().enumerate() {
        if framework.leaf_by_path(&g.gold.path()).is_none() {
            return Err(Error::Validation(format!(
                "gold entry {} ({}) has a path outside the framework: {}",
                i + 1,
                g.operators,
                g.gold.path()
            )));
        }
        if !seen.insert(&g.operators) {
            return Err(Error::Validation(format!("gold entry {} repeats {}", i + 1, g.operators)));
        }
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRecord {
    pub combination: String,
    pub record_id: String,
    pub operators: Itemset,
    pub gold: LabelPath,
    pub pred: LabelPath,
    pub t1: bool,
    pub t2: bool,
    pub t3: bool,
    pub s: f64,
    pub i_semantic: f64,
    pub i_structure: f64,
    pub i_geofub: f64,
    pub n: usize,
    pub m: usize,
}

pub fn score_record(
    combination: &str,
    record: &KnowledgeBaseRecord,
    gold: &LabelPath,
    framework: &SemanticFramework,
    weights: &Weights,
    similarity: SimilarityFn,
) -> EvalRecord {
    let pred = record.label.path();
    let t = level_match(&pred, gold);
    let s = similarity(&pred, gold);
    let i_sem = i_semantic(t.t3, s);
    let (i_str, n, m) = i_structure(&pred, gold, framework);
    EvalRecord {
        combination: combination.to_string(),
        record_id: record.record_id.clone(),
        operators: record.operators.clone(),
        gold: gold.clone(),
        pred,
        t1: t.t1,
        t2: t.t2,
        t3: t.t3,
        s,
        i_semantic: i_sem,
        i_structure: i_str,
        i_geofub: weights.combine(i_sem, i_str),
        n,
        m,
    }
}

/// Mean scores of one model combination, in the column order of the
/// published results table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CombinationScore {
    pub combination: String,
    pub scored: usize,
    pub missing: usize,
    pub i_structure: f64,
    pub i_semantic: f64,
    pub i_geofub: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub framework_sha256: String,
    pub weights: Weights,
    pub gold_count: usize,
    /// Gold combinations absent from the knowledge base.
    pub missing: Vec<Itemset>,
    pub rows: Vec<CombinationScore>,
    #[serde(skip)]
    pub records: Vec<EvalRecord>,
}

#[derive(Debug, Clone)]
pub struct EvalConfig {
    pub weights: Weights,
    pub similarity: SimilarityFn,
    /// Model combinations to score; all non-empty subsets of the knowledge
    /// base's profiles when `None`.
    pub combinations: Option<Vec<Vec<String>>>,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            weights: Weights::default(),
            similarity: semantic_similarity,
            combinations: None,
        }
    }
}

/// Largest profile count for which every subset is scored by default.
const MAX_SUBSET_PROFILES: usize = 8;

/// Non-empty subsets ordered by size, then by profile position.
pub fn all_combinations(profiles: &[String]) -> Vec<Vec<String>> {
    let n = profiles.len();
    let mut masks: Vec<u32> = (1..(1u32 << n)).collect();
    masks.sort_by_key(|m| {
        let bits: Vec<usize> = (0..n).filter(|i| m & (1 << i) != 0).collect();
        (bits.len(), bits)
    });
    masks
        .into_iter()
        .map(|m| (0..n).filter(|i| m & (1 << i) != 0).map(|i| profiles[i].clone()).collect())
        .collect()
}

pub fn evaluate(
    kb: &KnowledgeBase,
    gold: &[GoldAnnotation],
    framework: &SemanticFramework,
    config: &EvalConfig,
) -> Result<EvalReport> {
    config.weights.validate()?;
    kb.check_framework(framework)?;
    check_gold(gold, framework)?;
    let combinations = match &config.combinations {
        Some(c) => c.clone(),
        None if kb.profiles.len() <= MAX_SUBSET_PROFILES => all_combinations(&kb.profiles),
        None => vec![kb.combination.clone()],
    };
    let present: BTreeSet<&Itemset> = kb.records.iter().map(|r| &r.operators).collect();
    let missing: Vec<Itemset> = gold.iter().filter(|g| !present.contains(&g.operators)).map(|g| g.operators.clone()).collect();

    let mut rows = Vec::new();
    let mut records = Vec::new();
    for combo in &combinations {
        let name = combo.join("+");
        let voted = if *combo == kb.combination { kb.clone() } else { kb.revote(combo, framework)? };
        let by_ops: BTreeMap<&Itemset, &KnowledgeBaseRecord> = voted.records.iter().map(|r| (&r.operators, r)).collect();
        let scored: Vec<EvalRecord> = gold
            .iter()
            .filter_map(|g| {
                let r = by_ops.get(&g.operators)?;
                Some(score_record(&name, r, &g.gold.path(), framework, &config.weights, config.similarity))
            })
            .collect();
        let mean = |f: fn(&EvalRecord) -> f64| {
            if scored.is_empty() {
                0.0
            } else {
                scored.iter().map(f).sum::<f64>() / scored.len() as f64
            }
        };
        rows.push(CombinationScore {
            combination: name,
            scored: scored.len(),
            missing: gold.len() - scored.len(),
            i_structure: mean(|r| r.i_structure),
            i_semantic: mean(|r| r.i_semantic),
            i_geofub: mean(|r| r.i_geofub),
        });
        records.extend(scored);
    }
    Ok(EvalReport {
        framework_sha256: framework.fingerprint(),
        weights: config.weights,
        gold_count: gold.len(),
        missing,
        rows,
        records,
    })
}

impl EvalReport {
    pub fn save(&self, path: &Path) -> Result<()> {
        write_json(path, self)
    }

    /// Per-record scores of every combination.
    pub fn save_records_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record([
            "combination", "record_id", "operators", "gold", "pred", "t1", "t2", "t3", "s", "i_semantic",
            "i_structure", "i_geofub", "n", "m",
        ])
        .map_err(|e| Error::parse("csv", e))?;
        for r in &self.records {
            w.write_record([
                r.combination.clone(),
                r.record_id.clone(),
                r.operators.operators().join(" "),
                r.gold.to_string(),
                r.pred.to_string(),
                r.t1.to_string(),
                r.t2.to_string(),
                r.t3.to_string(),
                format!("{:.6}", r.s),
                format!("{:.6}", r.i_semantic),
                format!("{:.6}", r.i_structure),
                format!("{:.6}", r.i_geofub),
                r.n.to_string(),
                r.m.to_string(),
            ])
            .map_err(|e| Error::parse("csv", e))?;
        }
        let bytes = w.into_inner().map_err(|e| Error::parse("csv", e))?;
        write_atomic(path, &bytes)
    }

    /// Plain-text table with one row per combination.
    pub fn to_table(&self) -> String {
        let width = self.rows.iter().map(|r| r.combination.len()).max().unwrap_or(0).max("Model combination".len());
        let mut out = format!("{:<width$}  {:>11}  {:>10}  {:>9}\n", "Model combination", "I_structure", "I_semantic", "I_GeoFuB");
        for r in &self.rows {
            out.push_str(&format!(
                "{:<width$}  {:>11.3}  {:>10.3}  {:>9.3}\n",
                r.combination, r.i_structure, r.i_semantic, r.i_geofub
            ));
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SamplingStrategy {
    /// Size of the length-stratified part.
    pub size: usize,
    /// Pairs of combinations differing by exactly one operator.
    pub near_duplicate_pairs: usize,
    /// Combinations containing a rarely used operator.
    pub low_frequency: usize,
    pub seed: u64,
}

impl Default for SamplingStrategy {
    fn default() -> Self {
        SamplingStrategy {
            size: 100,
            near_duplicate_pairs: 15,
            low_frequency: 20,
            seed: 10,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SampleReason {
    Stratified,
    NearDuplicate,
    LowFrequency,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GoldCandidate {
    pub record_id: String,
    pub operators: Itemset,
    pub support: f64,
    pub reason: SampleReason,
}

/// Largest-remainder apportionment of `total` over `weights`; remainder
/// ties go to the earlier stratum.
fn apportion(weights: &[usize], total: usize) -> Vec<usize> {
    let sum: usize = weights.iter().sum();
    if sum == 0 {
        return vec![0; weights.len()];
    }
    let total = total.min(sum);
    let mut alloc: Vec<usize> = weights.iter().map(|w| w * total / sum).collect();
    let mut rem: Vec<(usize, usize)> = weights.iter().enumerate().map(|(i, w)| (w * total % sum, i)).collect();
    rem.sort_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(&b.1)));
    let mut left = total - alloc.iter().sum::<usize>();
    for (_, i) in rem {
        if left == 0 {
            break;
        }
        if alloc[i] < weights[i] {
            alloc[i] += 1;
            left -= 1;
        }
    }
    alloc
}

fn sorted_sym_diff(a: &[String], b: &[String]) -> usize {
    let (mut i, mut j, mut d) = (0, 0, 0);
    while i < a.len() && j < b.len() {
        match a[i].cmp(&b[j]) {
            std::cmp::Ordering::Equal => {
                i += 1;
                j += 1;
            }
            std::cmp::Ordering::Less => {
                d += 1;
                i += 1;
            }
            std::cmp::Ordering::Greater => {
                d += 1;
                j += 1;
            }
        }
    }
    d + (a.len() - i) + (b.len() - j)
}

/// Picks combinations for expert annotation: a sample stratified by
/// combination length, then pairs differing by one operator, then
/// combinations containing a rarely used operator. A combination is picked
/// at most once.
pub fn sample_gold_candidates(records: &[KnowledgeBaseRecord], strategy: &SamplingStrategy) -> Vec<GoldCandidate> {
    let mut rng = ChaCha8Rng::seed_from_u64(strategy.seed);
    let mut taken = vec![false; records.len()];
    let mut out = Vec::new();
    let take = |i: usize, reason, taken: &mut Vec<bool>, out: &mut Vec<GoldCandidate>| {
        taken[i] = true;
        out.push(GoldCandidate {
            record_id: records[i].record_id.clone(),
            operators: records[i].operators.clone(),
            support: records[i].support,
            reason,
        });
    };

    let mut strata: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (i, r) in records.iter().enumerate() {
        strata.entry(r.operators.k()).or_default().push(i);
    }
    let sizes: Vec<usize> = strata.values().map(Vec::len).collect();
    for (members, n) in strata.values().zip(apportion(&sizes, strategy.size)) {
        let mut chosen: Vec<usize> = members.choose_multiple(&mut rng, n).copied().collect();
        chosen.sort_unstable();
        for i in chosen {
            take(i, SampleReason::Stratified, &mut taken, &mut out);
        }
    }

    if strategy.near_duplicate_pairs > 0 {
        let mut pairs = Vec::new();
        for a in 0..records.len() {
            for b in a + 1..records.len() {
                let (x, y) = (records[a].operators.operators(), records[b].operators.operators());
                if x.len().abs_diff(y.len()) <= 1 && sorted_sym_diff(x, y) == 1 {
                    pairs.push((a, b));
                }
            }
        }
        pairs.shuffle(&mut rng);
        let mut got = 0;
        for (a, b) in pairs {
            if got == strategy.near_duplicate_pairs {
                break;
            }
            if taken[a] || taken[b] {
                continue;
            }
            take(a, SampleReason::NearDuplicate, &mut taken, &mut out);
            take(b, SampleReason::NearDuplicate, &mut taken, &mut out);
            got += 1;
        }
    }

    if strategy.low_frequency > 0 {
        let mut usage: BTreeMap<&str, usize> = BTreeMap::new();
        for r in records {
            for op in r.operators.operators() {
                *usage.entry(op.as_str()).or_insert(0) += 1;
            }
        }
        let mut counts: Vec<usize> = usage.values().copied().collect();
        counts.sort_unstable();
        if let Some(&cut) = counts.get(counts.len().saturating_sub(1) / 4) {
            let pool: Vec<usize> = (0..records.len())
                .filter(|&i| !taken[i] && records[i].operators.operators().iter().any(|o| usage[o.as_str()] <= cut))
                .collect();
            let mut chosen: Vec<usize> = pool.choose_multiple(&mut rng, strategy.low_frequency).copied().collect();
            chosen.sort_unstable();
            for i in chosen {
                take(i, SampleReason::LowFrequency, &mut taken, &mut out);
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn path(s: &str) -> LabelPath {
        LabelPath::parse(s).unwrap()
    }

    #[test]
    fn similarity_cases() {
        let a = path("Data Preprocessing > Image Processing > Clip Images");
        assert_eq!(semantic_similarity(&a, &a), 1.0);
        assert_eq!(semantic_similarity(&path("a > b > c"), &path("d > e > f")), 0.0);
        let b = path("Data Preprocessing > Image Processing > Image Masking");
        // {data, preprocessing, image, processing, clip, images} vs {..., image, masking}
        assert!((semantic_similarity(&a, &b) - 4.0 / 7.0).abs() < 1e-12);
    }

    #[test]
    fn semantic_rule() {
        assert_eq!(i_semantic(true, 0.1), 100.0);
        assert_eq!(i_semantic(false, 0.0), 0.0);
        assert!((i_semantic(false, 0.4) - 40.0).abs() < 1e-12);
    }

    #[test]
    fn structure_rule() {
        let fw = SemanticFramework::default();
        let gold = path("Data Preprocessing > Data Preparation > Data Import");
        let (s, n, _) = i_structure(&path("Data Preprocessing > Data Preparation > Data Filtering"), &gold, &fw);
        assert_eq!((s, n), (40.0, 2));
        let (s, _, m) = i_structure(&path("Data Preprocessing > Image Processing > Clip Images"), &gold, &fw);
        assert_eq!((s, m), (10.0, 2));
        let (s, _, _) = i_structure(&path("Data Post-Processing > Data Export > Export Data"), &gold, &fw);
        assert_eq!(s, 0.0);
        let (s, _, _) = i_structure(&gold, &gold, &fw);
        assert_eq!(s, 100.0);
    }

    #[test]
    fn weighted_sum() {
        assert!((i_geofub(86.792, 92.034) - 88.889).abs() < 1e-3);
        assert!((i_geofub(83.231, 85.297) - 84.057).abs() < 1e-3);
        assert_eq!(i_geofub(100.0, 100.0), 100.0);
        assert!(Weights { semantic: 0.5, structure: 0.4 }.validate().is_err());
    }

    #[test]
    fn apportionment() {
        assert_eq!(apportion(&[60, 40], 10), [6, 4]);
        assert_eq!(apportion(&[1, 1, 1], 2), [1, 1, 0]);
        assert_eq!(apportion(&[2, 1], 10), [2, 1]);
        assert_eq!(apportion(&[], 3), Vec::<usize>::new());
    }

    #[test]
    fn combinations_by_size() {
        let p: Vec<String> = ["a", "b", "c"].iter().map(|s| s.to_string()).collect();
        let c: Vec<String> = all_combinations(&p).iter().map(|c| c.join("+")).collect();
        assert_eq!(c, ["a", "b", "c", "a+b", "a+c", "b+c", "a+b+c"]);
        assert_eq!(all_combinations(&[p[0].clone(), p[1].clone(), p[2].clone(), "d".into()]).len(), 15);
    }

    #[test]
    fn sym_diff_merge() {
        let s = |v: &[&str]| v.iter().map(|x| x.to_string()).collect::<Vec<_>>();
        assert_eq!(sorted_sym_diff(&s(&["a", "b"]), &s(&["a", "c"])), 2);
        assert_eq!(sorted_sym_diff(&s(&["a", "b"]), &s(&["a", "b", "c"])), 1);
        assert_eq!(sorted_sym_diff(&s(&[]), &s(&["x"])), 1);
    }
}
