use std::collections::BTreeMap;

use opfunkb_core::eval::{
    evaluate, load_gold, sample_gold_candidates, EvalConfig, GoldAnnotation, GoldLabel, SampleReason,
    SamplingStrategy,
};
use opfunkb_core::framework::{LabelPath, SemanticFramework};
use opfunkb_core::mapper::{KnowledgeBase, KnowledgeBaseRecord, LabelTriple, MappingResponse, ModelResponses, VoteRecord};
use opfunkb_core::miner::Itemset;

/// A knowledge base whose single profile answered `leaf` five times for
/// each combination.
fn kb_with(fw: &SemanticFramework, entries: &[(&[&str], u32, f64)]) -> KnowledgeBase {
    let records = entries
        .iter()
        .enumerate()
        .map(|(i, (ops, leaf, support))| {
            let operators = Itemset::new(ops.iter().copied());
            let triple = LabelTriple::from_leaf(&fw.leaf(*leaf).unwrap());
            let responses = (1..=5)
                .map(|round| MappingResponse {
                    round,
                    reply: Some(leaf.to_string()),
                    parsed: triple.clone(),
                    resolved: Some(triple.clone()),
                    error: None,
                })
                .collect();
            KnowledgeBaseRecord {
                record_id: format!("kb-{:05}", i + 1),
                operators: operators.clone(),
                support: *support,
                label: triple,
                provenance: VoteRecord {
                    operators,
                    models: vec![ModelResponses {
                        profile_name: "m".into(),
                        responses,
                        winner: Some(*leaf),
                    }],
                    combination: vec!["m".into()],
                    tally: BTreeMap::from([(*leaf, 5)]),
                    winner: *leaf,
                },
            }
        })
        .collect();
    KnowledgeBase {
        framework_sha256: fw.fingerprint(),
        profiles: vec!["m".into()],
        combination: vec!["m".into()],
        rounds: 5,
        records,
        failures: vec![],
    }
}

fn gold(fw: &SemanticFramework, ops: &[&str], leaf: u32) -> GoldAnnotation {
    let p = fw.leaf(leaf).unwrap().path;
    GoldAnnotation {
        operators: Itemset::new(ops.iter().copied()),
        gold: GoldLabel { l1: p.l1, l2: p.l2, l3: p.l3 },
        annotators: vec![],
    }
}

#[test]
fn perfect_agreement_scores_full_marks() {
    let fw = SemanticFramework::default();
    let kb = kb_with(&fw, &[(&["a", "b"], 1, 0.5), (&["c", "d"], 21, 0.4), (&["e", "f", "g"], 10, 0.2)]);
    let g = vec![gold(&fw, &["a", "b"], 1), gold(&fw, &["d", "c"], 21), gold(&fw, &["e", "f", "g"], 10)];
    let r = evaluate(&kb, &g, &fw, &EvalConfig::default()).unwrap();
    assert_eq!(r.rows.len(), 1);
    let row = &r.rows[0];
    assert_eq!((row.i_structure, row.i_semantic, row.i_geofub), (100.0, 100.0, 100.0));
    assert_eq!(row.scored, 3);
    assert!(r.missing.is_empty());
}

#[test]
fn subcategory_only_match_with_half_similarity() {
    let fw = SemanticFramework::default();
    let kb = kb_with(&fw, &[(&["a", "b"], 2, 0.5)]);
    let g = vec![gold(&fw, &["a", "b"], 1)];
    let cfg = EvalConfig {
        similarity: |_: &LabelPath, _: &LabelPath| 0.5,
        ..EvalConfig::default()
    };
    let r = evaluate(&kb, &g, &fw, &cfg).unwrap();
    let row = &r.rows[0];
    assert!((row.i_structure - 40.0).abs() < 1e-12);
    assert!((row.i_semantic - 50.0).abs() < 1e-12);
    assert!((row.i_geofub - 46.0).abs() < 1e-12);
    let rec = &r.records[0];
    assert!(rec.t1 && rec.t2 && !rec.t3);
    assert_eq!(rec.n, 2);
    assert!((rec.i_geofub - (0.6 * rec.i_semantic + 0.4 * rec.i_structure)).abs() < 1e-9);
}

#[test]
fn missing_gold_is_reported_not_scored() {
    let fw = SemanticFramework::default();
    let kb = kb_with(&fw, &[(&["a", "b"], 1, 0.5)]);
    let g = vec![gold(&fw, &["a", "b"], 1), gold(&fw, &["x", "y"], 3)];
    let r = evaluate(&kb, &g, &fw, &EvalConfig::default()).unwrap();
    assert_eq!(r.missing, vec![Itemset::new(["x", "y"])]);
    assert_eq!((r.rows[0].scored, r.rows[0].missing), (1, 1));
}

#[test]
fn framework_mismatch_is_a_hard_error() {
    let fw = SemanticFramework::default();
    let kb = kb_with(&fw, &[(&["a", "b"], 1, 0.5)]);
    let small = SemanticFramework::from_leaves(&fw.leaves()[..3]).unwrap();
    assert!(evaluate(&kb, &[gold(&fw, &["a", "b"], 1)], &small, &EvalConfig::default()).is_err());
    let mut bad = gold(&fw, &["a", "b"], 1);
    bad.gold.l2 = "Image Processing".into();
    assert!(evaluate(&kb, &[bad], &fw, &EvalConfig::default()).is_err());
}

#[test]
fn record_order_does_not_matter() {
    let fw = SemanticFramework::default();
    let entries: Vec<(&[&str], u32, f64)> = vec![(&["a", "b"], 2, 0.5), (&["c", "d"], 7, 0.4), (&["e", "f"], 20, 0.3)];
    let g = vec![gold(&fw, &["a", "b"], 1), gold(&fw, &["c", "d"], 5), gold(&fw, &["e", "f"], 21)];
    let a = evaluate(&kb_with(&fw, &entries), &g, &fw, &EvalConfig::default()).unwrap();
    let rev: Vec<_> = entries.iter().rev().cloned().collect();
    let mut g_rev = g.clone();
    g_rev.reverse();
    let b = evaluate(&kb_with(&fw, &rev), &g_rev, &fw, &EvalConfig::default()).unwrap();
    assert!((a.rows[0].i_geofub - b.rows[0].i_geofub).abs() < 1e-9);
    assert!((a.rows[0].i_structure - b.rows[0].i_structure).abs() < 1e-9);
}

#[test]
fn gold_file_round_trip_and_report_files() {
    let fw = SemanticFramework::default();
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("gold.jsonl");
    std::fs::write(
        &p,
        "{\"operators\":[\"filterDate\",\"ee.ImageCollection\"],\"gold\":{\"l1\":\"Data Preprocessing\",\"l2\":\"Data Preparation\",\"l3\":\"Data Filtering\"}}\n\n",
    )
    .unwrap();
    let g = load_gold(&p, &fw).unwrap();
    assert_eq!(g[0].operators.operators(), ["ee.ImageCollection", "filterDate"]);
    let kb = kb_with(&fw, &[(&["ee.ImageCollection", "filterDate"], 2, 0.5)]);
    let r = evaluate(&kb, &g, &fw, &EvalConfig::default()).unwrap();
    r.save(&dir.path().join("report.json")).unwrap();
    r.save_records_csv(&dir.path().join("records.csv")).unwrap();
    let csv = std::fs::read_to_string(dir.path().join("records.csv")).unwrap();
    assert!(csv.starts_with("combination,record_id,"));
    assert_eq!(csv.lines().count(), 2);
    assert!(r.to_table().contains("I_GeoFuB"));
}

#[test]
fn sampling_is_stratified_and_seeded() {
    let fw = SemanticFramework::default();
    let names: Vec<String> = (0..20).map(|i| format!("op{i:02}")).collect();
    let mut entries: Vec<(Vec<&str>, u32, f64)> = Vec::new();
    for i in 0..6 {
        entries.push((vec![&names[2 * i], &names[2 * i + 1]], 1, 0.5));
    }
    for i in 0..4 {
        entries.push((vec![&names[i], &names[i + 5], &names[i + 10]], 1, 0.3));
    }
    let refs: Vec<(&[&str], u32, f64)> = entries.iter().map(|(o, l, s)| (o.as_slice(), *l, *s)).collect();
    let kb = kb_with(&fw, &refs);
    let strat = SamplingStrategy { size: 10, near_duplicate_pairs: 0, low_frequency: 0, seed: 3 };
    let s = sample_gold_candidates(&kb.records, &strat);
    assert_eq!(s.iter().filter(|c| c.operators.k() == 2).count(), 6);
    assert_eq!(s.iter().filter(|c| c.operators.k() == 3).count(), 4);
    let strat = SamplingStrategy { size: 5, ..strat };
    let s = sample_gold_candidates(&kb.records, &strat);
    assert_eq!((s.iter().filter(|c| c.operators.k() == 2).count(), s.len()), (3, 5));
    assert_eq!(s, sample_gold_candidates(&kb.records, &strat));
}

#[test]
fn near_duplicate_quota() {
    let fw = SemanticFramework::default();
    let kb = kb_with(
        &fw,
        &[
            (&["a", "b"], 1, 0.5),
            (&["a", "b", "c"], 1, 0.4),
            (&["d", "e"], 1, 0.4),
            (&["d", "e", "f"], 1, 0.3),
            (&["g", "h"], 1, 0.3),
            (&["g", "i"], 1, 0.2),
            (&["x", "y"], 1, 0.1),
        ],
    );
    let strat = SamplingStrategy { size: 0, near_duplicate_pairs: 2, low_frequency: 0, seed: 1 };
    let s = sample_gold_candidates(&kb.records, &strat);
    assert_eq!(s.len(), 4);
    assert!(s.iter().all(|c| c.reason == SampleReason::NearDuplicate));
    for pair in s.chunks(2) {
        assert_eq!(pair[0].operators.symmetric_difference_len(&pair[1].operators), 1);
    }
    let strat = SamplingStrategy { size: 0, near_duplicate_pairs: 0, low_frequency: 2, seed: 1 };
    let s = sample_gold_candidates(&kb.records, &strat);
    assert_eq!(s.len(), 2);
    assert!(s.iter().all(|c| c.reason == SampleReason::LowFrequency));
}
