//! Pair frequency statistics and frequent operator combination mining.
//!
//! Support of an itemset `X` is `raw(X) / N`, with `N` the total number of
//! pair occurrences in the table and `raw` defined by size:
//!
//! * `k = 1`: marginal count of the operator over all pairs containing it;
//! * `k = 2`: `count(a,b) + count(b,a)`;
//! * `k >= 3`: the sum of `raw` over the `k` subsets of size `k - 1`.
//!
//! Unrolling the `k >= 3` recursion, each unordered pair inside `X` is
//! counted `(k-2)!` times, which is how [`raw_frequency`] evaluates it. The
//! rule is not anti-monotone, so supports above 1 are possible and are
//! reported unclamped with [`FrequentItemset::exceeds_unity`] set.
//!
//! Level 1 comes from marginals, level 2 directly from the pair table, and
//! every later level from expanding the previous level's frequent itemsets by
//! one operator of the table's universe.

mod table;

use std::collections::{BTreeSet, HashMap};
use std::fmt;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use table::{calculate_frequencies, PairFrequencyTable};

use crate::error::{Error, Result};
use crate::io::{read_json, write_json};

pub const DEFAULT_MIN_SUPPORT: f64 = 0.05;
pub const DEFAULT_MAX_K: usize = 10;
/// Upper bound on candidates evaluated in a single level.
pub const DEFAULT_MAX_CANDIDATES: usize = 2_000_000;

/// Unordered operator set, stored sorted and de-duplicated.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Itemset(Vec<String>);

impl Itemset {
    pub fn new<S: Into<String>>(ops: impl IntoIterator<Item = S>) -> Self {
        let set: BTreeSet<String> = ops.into_iter().map(Into::into).collect();
        Itemset(set.into_iter().collect())
    }

    pub fn operators(&self) -> &[String] {
        &self.0
    }

    pub fn k(&self) -> usize {
        self.0.len()
    }

    pub fn contains(&self, op: &str) -> bool {
        self.0.binary_search_by(|o| o.as_str().cmp(op)).is_ok()
    }

    pub fn symmetric_difference_len(&self, other: &Itemset) -> usize {
        let a: BTreeSet<&String> = self.0.iter().collect();
        let b: BTreeSet<&String> = other.0.iter().collect();
        a.symmetric_difference(&b).count()
    }

    pub fn jaccard(&self, other: &Itemset) -> f64 {
        let a: BTreeSet<&String> = self.0.iter().collect();
        let b: BTreeSet<&String> = other.0.iter().collect();
        let union = a.union(&b).count();
        if union == 0 {
            return 1.0;
        }
        a.intersection(&b).count() as f64 / union as f64
    }
}

impl fmt::Display for Itemset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{{{}}}", self.0.join(", "))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrequentItemset {
    pub operators: Itemset,
    pub support: f64,
    pub raw_frequency: u64,
    pub k: usize,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub exceeds_unity: bool,
}

impl FrequentItemset {
    fn new(operators: Itemset, raw_frequency: u64, total_n: u64) -> Self {
        let support = raw_frequency as f64 / total_n as f64;
        FrequentItemset {
            k: operators.k(),
            operators,
            support,
            raw_frequency,
            exceeds_unity: support > 1.0,
        }
    }
}

/// Output of a mining run as written to the itemset file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ItemsetFile {
    pub total_n: u64,
    pub min_support: f64,
    pub max_k: usize,
    pub itemsets: Vec<FrequentItemset>,
}

impl ItemsetFile {
    pub fn mine(table: &PairFrequencyTable, min_support: f64, max_k: usize) -> Result<Self> {
        Ok(ItemsetFile {
            total_n: table.total_n(),
            min_support,
            max_k,
            itemsets: apriori(table, min_support, max_k)?,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_json(path, self)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file: ItemsetFile = read_json(path)?;
        file.validate().map_err(|message| Error::Schema { path: path.display().to_string(), message })?;
        Ok(file)
    }

    fn validate(&self) -> std::result::Result<(), String> {
        for it in &self.itemsets {
            if it.k != it.operators.k() || it.k == 0 {
                return Err(format!("itemset {} declares k = {}", it.operators, it.k));
            }
            if self.total_n > 0 {
                let expected = it.raw_frequency as f64 / self.total_n as f64;
                if (expected - it.support).abs() > 1e-12 {
                    return Err(format!("itemset {} support {} != raw/total_N", it.operators, it.support));
                }
            }
        }
        Ok(())
    }

    /// `(k, count)` rows for every size present.
    pub fn size_histogram(&self) -> Vec<(usize, usize)> {
        let mut h = std::collections::BTreeMap::new();
        for it in &self.itemsets {
            *h.entry(it.k).or_insert(0) += 1;
        }
        h.into_iter().collect()
    }
}

/// All `(k-1)`-element subsets; empty for `k < 2`.
pub fn subsets(itemset: &Itemset) -> Vec<Itemset> {
    let ops = itemset.operators();
    if ops.len() < 2 {
        return Vec::new();
    }
    (0..ops.len())
        .map(|skip| {
            Itemset(
                ops.iter()
                    .enumerate()
                    .filter(|(i, _)| *i != skip)
                    .map(|(_, o)| o.clone())
                    .collect(),
            )
        })
        .collect()
}

/// One `(k+1)`-itemset per universe operator not already in `itemset`.
pub fn expand(itemset: &Itemset, universe: &BTreeSet<String>) -> Vec<Itemset> {
    universe
        .iter()
        .filter(|op| !itemset.contains(op))
        .map(|op| Itemset::new(itemset.operators().iter().cloned().chain([op.clone()])))
        .collect()
}

/// Expands a whole generation, de-duplicating across it.
pub fn expand_generation(generation: &[Itemset], universe: &BTreeSet<String>) -> Vec<Itemset> {
    let set: BTreeSet<Itemset> = generation.iter().flat_map(|it| expand(it, universe)).collect();
    set.into_iter().collect()
}

pub fn raw_frequency(itemset: &Itemset, table: &PairFrequencyTable) -> u64 {
    let ops = itemset.operators();
    match ops.len() {
        0 => 0,
        1 => table.marginal(&ops[0]),
        k => {
            let mut pair_sum = 0u64;
            for i in 0..k {
                for j in i + 1..k {
                    pair_sum += table.unordered_count(&ops[i], &ops[j]);
                }
            }
            pair_sum * factorial(k - 2)
        }
    }
}

fn factorial(n: usize) -> u64 {
    (1..=n as u64).product()
}

pub fn support(itemset: &Itemset, table: &PairFrequencyTable) -> Result<f64> {
    if table.total_n() == 0 {
        return Err(Error::Domain("support is undefined for a table with total_N = 0".into()));
    }
    Ok(raw_frequency(itemset, table) as f64 / table.total_n() as f64)
}

pub fn apriori(table: &PairFrequencyTable, min_support: f64, max_k: usize) -> Result<Vec<FrequentItemset>> {
    apriori_with_limit(table, min_support, max_k, DEFAULT_MAX_CANDIDATES)
}

pub fn apriori_with_limit(
    table: &PairFrequencyTable,
    min_support: f64,
    max_k: usize,
    max_candidates: usize,
) -> Result<Vec<FrequentItemset>> {
    if !(min_support > 0.0) || !min_support.is_finite() {
        return Err(Error::Validation(format!("min_support must be positive, got {min_support}")));
    }
    if max_k < 1 {
        return Err(Error::Validation("max_k must be at least 1".into()));
    }
    if table.is_empty() {
        return Ok(Vec::new());
    }
    let n = table.total_n();
    let universe = table.universe();
    let index = PairIndex::new(table);
    let threshold = |raw: u64| raw as f64 / n as f64 >= min_support;

    let mut out = Vec::new();
    for op in universe {
        let raw = table.marginal(op);
        if threshold(raw) {
            out.push(FrequentItemset::new(Itemset::new([op.clone()]), raw, n));
        }
    }
    if max_k < 2 {
        return Ok(sorted(out));
    }

    let pairs: BTreeSet<Itemset> = table
        .iter()
        .filter(|(a, b, _)| a != b)
        .map(|(a, b, _)| Itemset::new([a, b]))
        .collect();
    let mut level: Vec<FrequentItemset> = pairs
        .into_iter()
        .filter_map(|it| {
            let raw = table.unordered_count(&it.0[0], &it.0[1]);
            threshold(raw).then(|| FrequentItemset::new(it, raw, n))
        })
        .collect();

    for k in 3..=max_k {
        out.extend(level.iter().cloned());
        if level.is_empty() {
            break;
        }
        let generation: Vec<Itemset> = level.iter().map(|f| f.operators.clone()).collect();
        let candidates = expand_generation(&generation, universe);
        if candidates.len() > max_candidates {
            return Err(Error::Domain(format!(
                "level {k} has {} candidates (limit {max_candidates}); lower max_k or raise min_support",
                candidates.len()
            )));
        }
        level = candidates
            .into_par_iter()
            .filter_map(|it| {
                let raw = index.raw(&it);
                threshold(raw).then(|| FrequentItemset::new(it, raw, n))
            })
            .collect();
    }
    if max_k >= 2 {
        out.extend(level);
    }
    Ok(sorted(out))
}

fn sorted(mut v: Vec<FrequentItemset>) -> Vec<FrequentItemset> {
    v.sort_by(|a, b| {
        a.k.cmp(&b.k)
            .then_with(|| b.raw_frequency.cmp(&a.raw_frequency))
            .then_with(|| a.operators.cmp(&b.operators))
    });
    v.dedup_by(|a, b| a.operators == b.operators);
    v
}

/// Unordered pair counts keyed by operator name, for fast inner loops.
struct PairIndex<'a> {
    counts: HashMap<(&'a str, &'a str), u64>,
}

impl<'a> PairIndex<'a> {
    fn new(table: &'a PairFrequencyTable) -> Self {
        let mut counts = HashMap::new();
        for (a, b, n) in table.iter() {
            if a == b {
                continue;
            }
            let key = if a < b { (a, b) } else { (b, a) };
            *counts.entry(key).or_insert(0) += n;
        }
        PairIndex { counts }
    }

    fn raw(&self, it: &Itemset) -> u64 {
        let ops = it.operators();
        let mut sum = 0;
        for i in 0..ops.len() {
            for j in i + 1..ops.len() {
                sum += self.counts.get(&(ops[i].as_str(), ops[j].as_str())).copied().unwrap_or(0);
            }
        }
        sum * factorial(ops.len().saturating_sub(2))
    }
}
