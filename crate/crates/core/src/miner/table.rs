use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::ast::CallLog;
use crate::error::{Error, Result};
use crate::io::write_atomic;

/// Ordered `(caller, callee)` pair counts merged across scripts.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct PairFrequencyTable {
    counts: BTreeMap<(String, String), u64>,
    total_n: u64,
    universe: BTreeSet<String>,
}

#[derive(Debug, Serialize, Deserialize)]
struct PairRow {
    caller: String,
    callee: String,
    frequency: u64,
}

impl PairFrequencyTable {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, caller: &str, callee: &str, n: u64) {
        if n == 0 {
            return;
        }
        *self.counts.entry((caller.to_string(), callee.to_string())).or_insert(0) += n;
        self.total_n += n;
        self.universe.insert(caller.to_string());
        self.universe.insert(callee.to_string());
    }

    pub fn from_counts<'a>(rows: impl IntoIterator<Item = (&'a str, &'a str, u64)>) -> Self {
        let mut t = Self::new();
        for (a, b, n) in rows {
            t.add(a, b, n);
        }
        t
    }

    pub fn count(&self, caller: &str, callee: &str) -> u64 {
        self.counts
            .get(&(caller.to_string(), callee.to_string()))
            .copied()
            .unwrap_or(0)
    }

    /// `count(a,b) + count(b,a)`; a self-pair is counted once.
    pub fn unordered_count(&self, a: &str, b: &str) -> u64 {
        if a == b {
            self.count(a, a)
        } else {
            self.count(a, b) + self.count(b, a)
        }
    }

    /// Sum of counts of every pair containing `op`; a self-pair counts once
    /// per occurrence.
    pub fn marginal(&self, op: &str) -> u64 {
        self.counts
            .iter()
            .filter(|((a, b), _)| a == op || b == op)
            .map(|(_, n)| n)
            .sum()
    }

    pub fn total_n(&self) -> u64 {
        self.total_n
    }

    pub fn universe(&self) -> &BTreeSet<String> {
        &self.universe
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }

    pub fn len(&self) -> usize {
        self.counts.len()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &str, u64)> {
        self.counts.iter().map(|((a, b), n)| (a.as_str(), b.as_str(), *n))
    }

    /// Rows by frequency descending, then caller and callee ascending.
    pub fn rows_by_frequency(&self) -> Vec<(&str, &str, u64)> {
        let mut rows: Vec<_> = self.iter().collect();
        rows.sort_by(|x, y| y.2.cmp(&x.2).then_with(|| (x.0, x.1).cmp(&(y.0, y.1))));
        rows
    }

    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        for (caller, callee, frequency) in self.rows_by_frequency() {
            w.serialize(PairRow {
                caller: caller.to_string(),
                callee: callee.to_string(),
                frequency,
            })
            .map_err(|e| Error::parse("pair table", e))?;
        }
        let bytes = w.into_inner().map_err(|e| Error::parse("pair table", e))?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut r = csv::Reader::from_reader(text.as_bytes());
        let headers = r.headers().map_err(|e| Error::parse("pair table", e))?.clone();
        if headers.iter().collect::<Vec<_>>() != ["caller", "callee", "frequency"] {
            return Err(Error::parse(
                "pair table",
                format!("expected header caller,callee,frequency, found {}", headers.iter().collect::<Vec<_>>().join(",")),
            ));
        }
        let mut t = Self::new();
        for row in r.deserialize::<PairRow>() {
            let row = row.map_err(|e| Error::parse("pair table", e))?;
            if row.caller.is_empty() || row.callee.is_empty() {
                return Err(Error::Validation("pair table row with empty operator name".into()));
            }
            if t.counts.contains_key(&(row.caller.clone(), row.callee.clone())) {
                return Err(Error::Validation(format!("duplicate pair row {} -> {}", row.caller, row.callee)));
            }
            t.add(&row.caller, &row.callee, row.frequency);
        }
        t.check()?;
        Ok(t)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_atomic(path, self.to_csv()?.as_bytes())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_csv(&text)
    }

    fn check(&self) -> Result<()> {
        let sum: u64 = self.counts.values().sum();
        if sum != self.total_n {
            return Err(Error::Validation(format!("total_N {} != sum of counts {sum}", self.total_n)));
        }
        for (a, b) in self.counts.keys() {
            if !self.universe.contains(a) || !self.universe.contains(b) {
                return Err(Error::Validation(format!("pair {a} -> {b} outside operator universe")));
            }
        }
        Ok(())
    }
}

/// Sums pair occurrences across all scripts' call logs.
pub fn calculate_frequencies(logs: &[CallLog]) -> PairFrequencyTable {
    let mut t = PairFrequencyTable::new();
    for log in logs {
        for p in &log.pairs {
            t.add(&p.caller, &p.callee, 1);
        }
    }
    t
}
