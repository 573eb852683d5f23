//! Source parser and ESTree loader agree on every fixture, and both match
//! the hand-derived call pairs.

use std::collections::BTreeMap;
use std::fs;
use std::path::PathBuf;

use opfunkb_core::ast::{load_pre_parsed, parse_script, traverse_ast};
use opfunkb_core::corpus::strip_comments;

fn fixture_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/ast")
}

fn gold() -> BTreeMap<String, Vec<(String, String)>> {
    serde_json::from_str(&fs::read_to_string(fixture_dir().join("gold.json")).unwrap()).unwrap()
}

#[test]
fn parser_and_estree_agree_with_gold() {
    let gold = gold();
    assert_eq!(gold.len(), 10);
    for (name, expected) in gold {
        let src = fs::read_to_string(fixture_dir().join(format!("{name}.js"))).unwrap();
        let parsed = parse_script(&strip_comments(&src));
        assert!(parsed.diagnostics.is_empty(), "{name}: {:?}", parsed.diagnostics);
        let loaded = load_pre_parsed(&fixture_dir().join(format!("{name}.estree.json"))).unwrap();
        assert!(loaded.warnings.is_empty(), "{name}: {:?}", loaded.warnings);

        assert_eq!(parsed.root, loaded.root, "{name}: normalized trees differ");

        let from_src = traverse_ast(&parsed.root, &name);
        let from_estree = traverse_ast(&loaded.root, &name);
        assert_eq!(from_src, from_estree, "{name}");
        let got: Vec<(String, String)> = from_src.pairs.into_iter().map(|p| (p.caller, p.callee)).collect();
        assert_eq!(got, expected, "{name}");
    }
}

#[test]
fn no_pair_has_an_empty_name() {
    for entry in fs::read_dir(fixture_dir()).unwrap() {
        let path = entry.unwrap().path();
        if path.extension().is_some_and(|e| e == "js") {
            let src = fs::read_to_string(&path).unwrap();
            let log = traverse_ast(&parse_script(&strip_comments(&src)).root, "x");
            assert!(log.pairs.iter().all(|p| !p.caller.is_empty() && !p.callee.is_empty()));
        }
    }
}
