//! Brute-force reference implementations used by the integration and
//! acceptance tests.

use std::collections::{BTreeMap, BTreeSet};

use opfunkb_core::miner::PairFrequencyTable;

/// Raw frequency by literal recursion over `(k-1)`-subsets, memoized.
pub fn raw_recursive(ops: &[String], table: &PairFrequencyTable, memo: &mut BTreeMap<Vec<String>, u64>) -> u64 {
    if let Some(v) = memo.get(ops) {
        return *v;
    }
    let v = match ops.len() {
        1 => table.iter().filter(|(a, b, _)| *a == ops[0] || *b == ops[0]).map(|(_, _, n)| n).sum(),
        2 => table.count(&ops[0], &ops[1]) + table.count(&ops[1], &ops[0]),
        k => (0..k)
            .map(|skip| {
                let sub: Vec<String> = ops.iter().enumerate().filter(|(i, _)| *i != skip).map(|(_, o)| o.clone()).collect();
                raw_recursive(&sub, table, memo)
            })
            .sum(),
    };
    memo.insert(ops.to_vec(), v);
    v
}

fn combinations(universe: &[String], k: usize) -> Vec<Vec<String>> {
    fn go(u: &[String], k: usize, start: usize, cur: &mut Vec<String>, out: &mut Vec<Vec<String>>) {
        if cur.len() == k {
            out.push(cur.clone());
            return;
        }
        for i in start..u.len() {
            cur.push(u[i].clone());
            go(u, k, i + 1, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    go(universe, k, 0, &mut Vec::new(), &mut out);
    out
}

/// Every frequent itemset with its raw frequency: size 1 and 2 by threshold
/// alone, larger sizes only when some `(k-1)`-subset was frequent.
pub fn brute_force(table: &PairFrequencyTable, min_support: f64, max_k: usize) -> BTreeMap<Vec<String>, u64> {
    let n = table.total_n();
    let mut out = BTreeMap::new();
    if n == 0 {
        return out;
    }
    let universe: Vec<String> = table.universe().iter().cloned().collect();
    let mut memo = BTreeMap::new();
    let mut prev: BTreeSet<Vec<String>> = BTreeSet::new();
    for k in 1..=max_k.min(universe.len()) {
        let mut level = BTreeSet::new();
        for c in combinations(&universe, k) {
            let reachable = k <= 2
                || (0..k).any(|skip| {
                    let sub: Vec<String> = c.iter().enumerate().filter(|(i, _)| *i != skip).map(|(_, o)| o.clone()).collect();
                    prev.contains(&sub)
                });
            if !reachable {
                continue;
            }
            let raw = raw_recursive(&c, table, &mut memo);
            if raw as f64 / n as f64 >= min_support {
                out.insert(c.clone(), raw);
                level.insert(c);
            }
        }
        prev = level;
    }
    out
}
