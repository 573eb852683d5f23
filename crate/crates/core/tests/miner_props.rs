mod common;

use std::collections::BTreeMap;

use opfunkb_core::miner::{apriori, subsets, ItemsetFile, PairFrequencyTable};
use proptest::prelude::*;

fn table_strategy(max_ops: usize) -> impl Strategy<Value = PairFrequencyTable> {
    (2..=max_ops).prop_flat_map(|n_ops| {
        prop::collection::vec((0..n_ops, 0..n_ops, 1u64..50), 1..20).prop_map(|rows| {
            let mut t = PairFrequencyTable::new();
            for (a, b, n) in rows {
                t.add(&format!("op{a}"), &format!("op{b}"), n);
            }
            t
        })
    })
}

fn mined(t: &PairFrequencyTable, min_support: f64, max_k: usize) -> BTreeMap<Vec<String>, u64> {
    apriori(t, min_support, max_k)
        .unwrap()
        .into_iter()
        .map(|f| (f.operators.operators().to_vec(), f.raw_frequency))
        .collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn equals_brute_force(t in table_strategy(8), ms in prop::sample::select(vec![0.01, 0.05, 0.2])) {
        prop_assert_eq!(mined(&t, ms, 8), common::oracle::brute_force(&t, ms, 8));
    }

    #[test]
    fn supports_match_raw_over_total(t in table_strategy(6)) {
        for f in apriori(&t, 0.05, 6).unwrap() {
            prop_assert!((f.support - f.raw_frequency as f64 / t.total_n() as f64).abs() <= 1e-12);
            prop_assert!(f.support >= 0.05);
            prop_assert_eq!(f.exceeds_unity, f.support > 1.0);
        }
    }

    #[test]
    fn every_frequent_triple_has_a_frequent_pair(t in table_strategy(7), ms in prop::sample::select(vec![0.01, 0.05, 0.2])) {
        let all = apriori(&t, ms, 3).unwrap();
        let pairs: Vec<_> = all.iter().filter(|f| f.k == 2).map(|f| f.operators.clone()).collect();
        for f in all.iter().filter(|f| f.k == 3) {
            prop_assert!(subsets(&f.operators).iter().any(|s| pairs.contains(s)));
        }
    }

    #[test]
    fn deterministic_serialization(t in table_strategy(6)) {
        let a = serde_json::to_string(&ItemsetFile::mine(&t, 0.05, 6).unwrap()).unwrap();
        let b = serde_json::to_string(&ItemsetFile::mine(&t.clone(), 0.05, 6).unwrap()).unwrap();
        prop_assert_eq!(a, b);
    }

    #[test]
    fn output_is_sorted(t in table_strategy(6)) {
        let all = apriori(&t, 0.01, 6).unwrap();
        for w in all.windows(2) {
            let key = |f: &opfunkb_core::miner::FrequentItemset| (f.k, std::cmp::Reverse(f.raw_frequency), f.operators.clone());
            prop_assert!(key(&w[0]) < key(&w[1]));
        }
    }

    #[test]
    fn tail_never_exceeds_peak(t in table_strategy(7)) {
        let file = ItemsetFile::mine(&t, 0.05, 7).unwrap();
        let hist = file.size_histogram();
        if let Some(peak) = hist.iter().map(|(_, c)| *c).max() {
            let last = hist.last().unwrap().1;
            prop_assert!(last <= peak);
        }
    }

    #[test]
    fn csv_round_trip(t in table_strategy(6)) {
        let csv = t.to_csv().unwrap();
        let back = PairFrequencyTable::from_csv(&csv).unwrap();
        prop_assert_eq!(back.to_csv().unwrap(), csv);
        prop_assert_eq!(back, t);
    }
}

#[test]
fn five_operator_table_matches_oracle() {
    let t = PairFrequencyTable::from_counts([
        ("a", "b", 40),
        ("b", "c", 25),
        ("c", "d", 12),
        ("d", "e", 6),
        ("a", "e", 3),
        ("b", "b", 9),
        ("e", "a", 5),
    ]);
    assert_eq!(mined(&t, 0.05, 5), common::oracle::brute_force(&t, 0.05, 5));
}

#[test]
fn itemset_file_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let t = PairFrequencyTable::from_counts([("f", "g", 3), ("g", "h", 1)]);
    let file = ItemsetFile::mine(&t, 0.05, 3).unwrap();
    let path = dir.path().join("itemsets.json");
    file.save(&path).unwrap();
    assert_eq!(ItemsetFile::load(&path).unwrap(), file);
}
