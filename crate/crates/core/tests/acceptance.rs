//! Acceptance suite: one pass/fail line per criterion.

mod common;

use std::collections::BTreeMap;
use std::panic::{self, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use opfunkb_core::ast::{load_pre_parsed, parse_script, traverse_ast};
use opfunkb_core::cluster::{
    bic, build_feature_matrix, gmm_fit, joint_probabilities, kl_divergence, kl_gradient, param_count, select_k, tsne_embed,
    TsneConfig,
};
use opfunkb_core::corpus::strip_comments;
use opfunkb_core::eval::{i_geofub, i_semantic, i_structure, level_match, semantic_similarity};
use opfunkb_core::framework::SemanticFramework;
use opfunkb_core::mapper::{tally, vote, KnowledgeBase};
use opfunkb_core::miner::{apriori, support, Itemset, PairFrequencyTable};
use opfunkb_core::pipeline::{Pipeline, PipelineConfig};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

fn manifest_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
}

fn check(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn within(limit: Duration, start: Instant) -> Result<(), String> {
    let t = start.elapsed();
    check(t < limit, || format!("took {t:?}, limit {limit:?}"))
}

/// (combination, I_structure, I_semantic, I_GeoFuB)
const TABLE_9: [(&str, f64, f64, f64); 15] = [
    ("GPT-4", 85.297, 83.231, 84.057),
    ("Llama 3-8B", 82.654, 82.094, 82.318),
    ("ERNIE-4.0-8K", 84.135, 82.489, 83.147),
    ("ERNIE-Speed-128K", 80.328, 80.187, 80.243),
    ("GPT-4 + Llama", 87.472, 83.721, 85.221),
    ("GPT-4 + ERNIE-4.0", 88.297, 84.378, 85.946),
    ("GPT-4 + Speed", 86.519, 83.129, 84.485),
    ("Llama + ERNIE-4.0", 84.835, 83.504, 84.036),
    ("Llama + Speed", 82.479, 81.768, 82.052),
    ("ERNIE-4.0 + Speed", 81.326, 80.538, 80.853),
    ("GPT-4 + Llama + ERNIE-4.0", 90.517, 85.724, 87.641),
    ("GPT-4 + Llama + Speed", 89.218, 85.182, 86.796),
    ("GPT-4 + ERNIE-4.0 + Speed", 89.764, 85.348, 87.114),
    ("Llama + ERNIE-4.0 + Speed", 86.047, 83.214, 84.347),
    ("all four", 92.034, 86.792, 88.889),
];

fn weighted_sum_oracle() -> Result<(), String> {
    let start = Instant::now();
    for (name, s, m, g) in TABLE_9 {
        let got = i_geofub(m, s);
        check((got - g).abs() <= 1e-3, || format!("{name}: {got:.4} vs {g}"))?;
    }
    within(Duration::from_secs(1), start)
}

fn random_table(rng: &mut ChaCha8Rng) -> PairFrequencyTable {
    let n_ops = rng.random_range(2..=8);
    let rows = rng.random_range(1..25);
    let mut t = PairFrequencyTable::new();
    for _ in 0..rows {
        let (a, b) = (rng.random_range(0..n_ops), rng.random_range(0..n_ops));
        t.add(&format!("op{a}"), &format!("op{b}"), rng.random_range(1..60));
    }
    t
}

fn apriori_equals_brute_force() -> Result<(), String> {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut tables = 0;
    for i in 0..240 {
        let t = random_table(&mut rng);
        let ms = [0.01, 0.05, 0.2][i % 3];
        let mined = apriori(&t, ms, 8).map_err(|e| e.to_string())?;
        let oracle = common::oracle::brute_force(&t, ms, 8);
        let got: BTreeMap<Vec<String>, u64> = mined.iter().map(|f| (f.operators.operators().to_vec(), f.raw_frequency)).collect();
        check(got == oracle, || format!("table {i} at min_support {ms}: {got:?} vs {oracle:?}"))?;
        for f in &mined {
            let expect = oracle[f.operators.operators()] as f64 / t.total_n() as f64;
            check((f.support - expect).abs() <= 1e-12, || format!("support {} vs {expect}", f.support))?;
        }
        tables += 1;
    }
    check(tables >= 200, || format!("only {tables} tables"))?;
    within(Duration::from_secs(30), start)
}

fn top_pairs_round_trip() -> Result<(), String> {
    let path = manifest_dir().join("tests/fixtures/top_pairs.csv");
    let original = std::fs::read(&path).map_err(|e| e.to_string())?;
    let t = PairFrequencyTable::load(&path).map_err(|e| e.to_string())?;
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let out = dir.path().join("pairs.csv");
    t.save(&out).map_err(|e| e.to_string())?;
    check(std::fs::read(&out).map_err(|e| e.to_string())? == original, || "saved bytes differ".into())?;
    let expected = [
        ("where", "gt", 131434u64),
        ("ee.List", "get", 121122),
        ("updateMask", "gt", 115347),
        ("multiply", "subtract", 106367),
        ("addBands", "addBands", 105120),
    ];
    let total: u64 = expected.iter().map(|r| r.2).sum();
    check(t.total_n() == total, || format!("total_N {}", t.total_n()))?;
    for (a, b, f) in expected {
        check(t.count(a, b) == f, || format!("{a}->{b} count {}", t.count(a, b)))?;
        let s = support(&Itemset::new([a, b]), &t).map_err(|e| e.to_string())?;
        let want = f as f64 / total as f64;
        check((s - want).abs() <= 1e-12, || format!("{a}->{b}: {s} vs {want}"))?;
    }
    Ok(())
}

fn tfidf_hand_check() -> Result<(), String> {
    let docs: Vec<Vec<String>> = [vec!["ndvi", "ndvi", "export", "map"], vec!["map", "clip"], vec!["clip", "reduce"]]
        .iter()
        .map(|d| d.iter().map(|s| s.to_string()).collect())
        .collect();
    let m = build_feature_matrix(&docs).map_err(|e| e.to_string())?;
    let col = |t: &str| m.vocabulary.iter().position(|v| v == t).unwrap();
    let ln15 = 1.5f64.ln();
    check((m.idf(col("ndvi")) - ln15).abs() < 1e-9, || "idf(ndvi)".into())?;
    check(m.idf(col("map")).abs() < 1e-9, || "idf(map)".into())?;
    // Row 0 before scaling: ndvi 2/4 ln1.5, export 1/4 ln1.5, map 0.
    let r0 = &m.values[0];
    let hand = [(col("ndvi"), 2.0 / 5f64.sqrt()), (col("export"), 1.0 / 5f64.sqrt()), (col("map"), 0.0)];
    for (c, v) in hand {
        check((r0[c] - v).abs() < 1e-9, || format!("row 0 col {c}: {} vs {v}", r0[c]))?;
    }
    check(m.values[1].iter().all(|v| *v == 0.0), || "row 1 should be all zero".into())?;
    check((m.values[2][col("reduce")] - 1.0).abs() < 1e-9, || "row 2 reduce".into())?;
    for (i, row) in m.values.iter().enumerate() {
        let norm = row.iter().map(|v| v * v).sum::<f64>().sqrt();
        check(norm == 0.0 || (norm - 1.0).abs() < 1e-9, || format!("row {i} norm {norm}"))?;
    }
    Ok(())
}

fn random_points(n: usize, d: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| (0..d).map(|_| rng.random_range(-1.0..1.0)).collect()).collect()
}

fn tsne_correctness() -> Result<(), String> {
    let x = random_points(40, 6, 3);
    let a = joint_probabilities(&x, 10.0).map_err(|e| e.to_string())?;
    check((a.p.iter().sum::<f64>() - 1.0).abs() < 1e-9, || "sum p != 1".into())?;
    for i in 0..a.n {
        for j in 0..a.n {
            check((a.get(i, j) - a.get(j, i)).abs() < 1e-9, || format!("p not symmetric at {i},{j}"))?;
        }
        check((a.row_perplexity[i] - 10.0).abs() < 1e-3, || format!("row {i} perplexity {}", a.row_perplexity[i]))?;
    }

    let x6 = random_points(6, 3, 4);
    let p = joint_probabilities(&x6, 2.0).map_err(|e| e.to_string())?.p;
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let y: Vec<[f64; 2]> = (0..6).map(|_| [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)]).collect();
    let g = kl_gradient(&p, &y);
    let h = 1e-6;
    for i in 0..6 {
        for d in 0..2 {
            let (mut up, mut down) = (y.clone(), y.clone());
            up[i][d] += h;
            down[i][d] -= h;
            let fd = (kl_divergence(&p, &up) - kl_divergence(&p, &down)) / (2.0 * h);
            let rel = (g[i][d] - fd).abs() / fd.abs().max(1e-8);
            check(rel < 1e-4, || format!("gradient {i},{d}: {} vs {fd}", g[i][d]))?;
        }
    }

    let start = Instant::now();
    let x200 = random_points(200, 10, 6);
    let cfg = TsneConfig {
        n_iter: 1000,
        ..TsneConfig::default()
    };
    let e1 = tsne_embed(&x200, &cfg).map_err(|e| e.to_string())?;
    within(Duration::from_secs(60), start)?;
    let e2 = tsne_embed(&x200, &cfg).map_err(|e| e.to_string())?;
    let bytes = |e: &opfunkb_core::cluster::TsneEmbedding| serde_json::to_vec(&e.points).unwrap();
    check(bytes(&e1) == bytes(&e2), || "embeddings differ between runs".into())
}

fn blobs(centers: &[[f64; 2]], per: usize, sd: f64, seed: u64) -> Vec<[f64; 2]> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let nd = Normal::new(0.0, sd).unwrap();
    centers
        .iter()
        .flat_map(|c| (0..per).map(|_| [c[0] + nd.sample(&mut rng), c[1] + nd.sample(&mut rng)]).collect::<Vec<_>>())
        .collect()
}

fn gmm_and_bic() -> Result<(), String> {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let random: Vec<[f64; 2]> = (0..120).map(|_| [rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0)]).collect();
    for k in 1..=6 {
        let m = gmm_fit(&random, k, k as u64).map_err(|e| e.to_string())?;
        for w in m.trace.windows(2) {
            check(w[1] >= w[0] - 1e-8, || format!("K={k}: lnL fell from {} to {}", w[0], w[1]))?;
        }
        check(m.param_count == 6 * k - 1 && param_count(k) == 6 * k - 1, || format!("K={k}: p = {}", m.param_count))?;
        let again = bic(m.log_likelihood, k, random.len());
        let direct = -2.0 * m.log_likelihood + (6 * k - 1) as f64 * (random.len() as f64).ln();
        check((m.bic - again).abs() <= 1e-9 * again.abs() && (again - direct).abs() <= 1e-9 * direct.abs(), || {
            format!("K={k}: bic {} vs {again}", m.bic)
        })?;
    }

    let one = blobs(&[[2.0, -1.0]], 80, 1.3, 9);
    let m = gmm_fit(&one, 1, 0).map_err(|e| e.to_string())?;
    let n = one.len() as f64;
    let mean = [one.iter().map(|p| p[0]).sum::<f64>() / n, one.iter().map(|p| p[1]).sum::<f64>() / n];
    for d in 0..2 {
        check((m.means[0][d] - mean[d]).abs() < 1e-9, || format!("mean[{d}]"))?;
    }
    for a in 0..2 {
        for b in 0..2 {
            let c = one.iter().map(|p| (p[a] - mean[a]) * (p[b] - mean[b])).sum::<f64>() / n;
            let reg = if a == b { opfunkb_core::cluster::REGULARIZATION } else { 0.0 };
            check((m.covariances[0][a][b] - c - reg).abs() < 1e-9, || format!("cov[{a}][{b}]"))?;
        }
    }

    let centers = [[0.0, 0.0], [12.0, 0.0], [6.0, 11.0]];
    let hits = (0..20u64)
        .filter(|t| {
            let pts = blobs(&centers, 50, 1.0, 100 + t);
            select_k(&pts, 1..=8, 5, *t).is_ok_and(|s| s.best_k == 3)
        })
        .count();
    check(hits >= 18, || format!("K*=3 in only {hits} of 20 trials"))
}

fn metric_units() -> Result<(), String> {
    let fw = SemanticFramework::default();
    let asset: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(manifest_dir().join("assets/framework.json")).unwrap()).unwrap();
    let mut n_of: BTreeMap<(String, String), usize> = BTreeMap::new();
    let mut m_of: BTreeMap<String, usize> = BTreeMap::new();
    for c in asset["categories"].as_array().unwrap() {
        let l1 = c["label"].as_str().unwrap().to_string();
        let subs = c["subcategories"].as_array().unwrap();
        m_of.insert(l1.clone(), subs.len());
        for s in subs {
            n_of.insert((l1.clone(), s["label"].as_str().unwrap().to_string()), s["functions"].as_array().unwrap().len());
        }
    }
    let leaves = fw.leaves();
    check(leaves.len() == 21, || format!("{} leaves", leaves.len()))?;
    for pred in &leaves {
        for gold in &leaves {
            let (score, _, _) = i_structure(&pred.path, &gold.path, &fw);
            let n = n_of[&(gold.path.l1.clone(), gold.path.l2.clone())] as f64;
            let m = m_of[&gold.path.l1] as f64;
            let allowed = [100.0, 80.0 / n, 20.0 / m, 0.0];
            check(allowed.iter().any(|a| (score - a).abs() < 1e-12), || {
                format!("{} vs {}: {score} not in {allowed:?}", pred.path, gold.path)
            })?;
            if pred.id == gold.id {
                let sem = i_semantic(level_match(&pred.path, &gold.path).t3, semantic_similarity(&pred.path, &gold.path));
                let geo = i_geofub(sem, score);
                check(score == 100.0 && sem == 100.0 && geo == 100.0, || format!("{}: {score} {sem} {geo}", pred.path))?;
            }
        }
    }
    Ok(())
}

fn ast_fidelity() -> Result<(), String> {
    let dir = manifest_dir().join("tests/fixtures/ast");
    let gold: BTreeMap<String, Vec<(String, String)>> =
        serde_json::from_str(&std::fs::read_to_string(dir.join("gold.json")).unwrap()).unwrap();
    check(gold.len() == 10, || format!("{} fixtures", gold.len()))?;
    for (name, expected) in gold {
        let src = std::fs::read_to_string(dir.join(format!("{name}.js"))).map_err(|e| e.to_string())?;
        let parsed = traverse_ast(&parse_script(&strip_comments(&src)).root, &name);
        let loaded = load_pre_parsed(&dir.join(format!("{name}.estree.json"))).map_err(|e| e.to_string())?;
        let from_tree = traverse_ast(&loaded.root, &name);
        check(parsed == from_tree, || format!("{name}: source and ESTree logs differ"))?;
        let got: Vec<(String, String)> = parsed.pairs.into_iter().map(|p| (p.caller, p.callee)).collect();
        check(got == expected, || format!("{name}: {got:?} vs {expected:?}"))?;
    }
    Ok(())
}

fn run_bundled(workdir: &Path) -> Result<(), String> {
    let cfg = PipelineConfig::load(&manifest_dir().join("../../data/pipeline.toml")).map_err(|e| e.to_string())?;
    Pipeline::new(cfg, workdir).run_all().map_err(|e| e.to_string())?;
    Ok(())
}

fn end_to_end_determinism() -> Result<(), String> {
    let dirs = [tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap()];
    let start = Instant::now();
    run_bundled(dirs[0].path())?;
    within(Duration::from_secs(60), start)?;
    run_bundled(dirs[1].path())?;
    for f in ["kb.json", "report.json"] {
        let a = std::fs::read(dirs[0].path().join(f)).map_err(|e| e.to_string())?;
        let b = std::fs::read(dirs[1].path().join(f)).map_err(|e| e.to_string())?;
        check(a == b, || format!("{f} differs between runs"))?;
    }
    let fw = SemanticFramework::load(&dirs[0].path().join("framework.json")).map_err(|e| e.to_string())?;
    let kb = KnowledgeBase::load(&dirs[0].path().join("kb.json")).map_err(|e| e.to_string())?;
    check(!kb.records.is_empty(), || "empty knowledge base".into())?;
    for r in &kb.records {
        check(fw.leaf_by_path(&r.label.path()).is_some(), || format!("{}: {} not in framework", r.record_id, r.label.path()))?;
    }
    Ok(())
}

fn voting_properties() -> Result<(), String> {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for _ in 0..500 {
        let len = rng.random_range(1..40);
        let votes: Vec<u32> = (0..len).map(|_| rng.random_range(1..=21)).collect();
        let w = vote(&votes);
        let mut shuffled = votes.clone();
        for _ in 0..5 {
            shuffled.shuffle(&mut rng);
            check(vote(&shuffled) == w, || format!("{votes:?} changed winner under permutation"))?;
        }
        let t = tally(&votes);
        let top = *t.values().max().unwrap();
        let first = t.iter().find(|(_, c)| **c == top).map(|(id, _)| *id);
        check(w == first, || format!("{votes:?}: {w:?} vs {first:?}"))?;
    }
    let ties: [(&[u32], u32); 4] = [(&[3, 5, 5, 3], 3), (&[7, 2, 7, 2, 9], 2), (&[21, 1], 1), (&[4, 9, 9, 4, 4, 9, 11], 4)];
    for (votes, want) in ties {
        check(vote(votes) == Some(want), || format!("{votes:?} -> {:?}, want {want}", vote(votes)))?;
    }
    check(vote(&[]).is_none(), || "empty vote".into())
}

fn main() {
    let criteria: [(&str, fn() -> Result<(), String>); 10] = [
        ("weighted-sum oracle over the 15 printed combinations", weighted_sum_oracle),
        ("apriori equals brute-force enumeration", apriori_equals_brute_force),
        ("top pair table round-trips with support = freq / total_N", top_pairs_round_trip),
        ("TF-IDF hand check and unit rows", tfidf_hand_check),
        ("t-SNE affinities, perplexity, gradient, determinism, runtime", tsne_correctness),
        ("GMM monotone EM, K=1 MLE, BIC selection, p = 6K-1", gmm_and_bic),
        ("metric unit values over all leaf pairs", metric_units),
        ("AST extraction matches gold and ESTree input", ast_fidelity),
        ("end-to-end determinism and label existence", end_to_end_determinism),
        ("vote permutation invariance and smallest-id tie-break", voting_properties),
    ];
    panic::set_hook(Box::new(|_| {}));
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let outcome = match panic::catch_unwind(AssertUnwindSafe(f)) {
            Ok(r) => r,
            Err(p) => Err(p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panicked".into())),
        };
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(()) => println!("criterion {:>2}: PASS  {name} ({secs:.2}s)", i + 1),
            Err(e) => {
                failed += 1;
                println!("criterion {:>2}: FAIL  {name} ({secs:.2}s): {e}", i + 1);
            }
        }
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
