use opfunkb_core::corpus::ScriptRecord;
use opfunkb_core::gateway::{ExchangeLog, Gateway, GatewayProfile};
use opfunkb_core::statements::{
    extract_corpus, load_statements, save_statements, FailureKind, PromptTemplate, DEFAULT_BYTE_BUDGET,
};

fn corpus() -> Vec<ScriptRecord> {
    vec![
        ScriptRecord::from_source(
            "a",
            "var c = ee.ImageCollection('X').filterDate('2020-01-01', '2020-12-31').filterBounds(roi);\nvar n = c.median().normalizedDifference(['B8', 'B4']);\nExport.image.toDrive(n);",
        ),
        ScriptRecord::from_source("b", "var i = ee.Image('Y').clip(roi);\nMap.addLayer(i.gt(0.3));"),
        ScriptRecord::from_source("c", "var t = ee.FeatureCollection('Z').filter(f);\nprint(t.size()); // MOCK_FAIL"),
    ]
}

#[test]
fn three_scripts_three_sets_deterministic() {
    let g = Gateway::connect(&GatewayProfile::mock("m")).unwrap();
    let t = PromptTemplate::default();
    let scripts = corpus();
    let run = extract_corpus(&scripts, &g, &t, DEFAULT_BYTE_BUDGET, None).unwrap();
    assert_eq!(run.sets.len(), 3);
    assert!(run.failures.is_empty());
    assert!(run.sets.iter().all(|s| !s.steps.is_empty()));
    let again = extract_corpus(&scripts, &g, &t, DEFAULT_BYTE_BUDGET, None).unwrap();
    assert_eq!(run, again);

    let dir = tempfile::tempdir().unwrap();
    let (p1, p2) = (dir.path().join("s1.jsonl"), dir.path().join("s2.jsonl"));
    save_statements(&p1, &run.sets).unwrap();
    save_statements(&p2, &again.sets).unwrap();
    assert_eq!(std::fs::read(&p1).unwrap(), std::fs::read(&p2).unwrap());
    assert_eq!(load_statements(&p1).unwrap(), run.sets);
}

#[test]
fn injected_failure_marks_one_script_llm_failed() {
    let mut p = GatewayProfile::mock("m");
    p.max_retries = 1;
    p.mock.fail_when_prompt_contains = vec!["MOCK_FAIL".into()];
    let g = Gateway::connect(&p).unwrap();
    let log = ExchangeLog::new();
    let run = extract_corpus(&corpus(), &g, &PromptTemplate::default(), DEFAULT_BYTE_BUDGET, Some(&log)).unwrap();
    assert_eq!(run.sets.len(), 2);
    assert_eq!(run.failures.len(), 1);
    assert_eq!(run.failures[0].script_id, "c");
    assert_eq!(run.failures[0].kind, FailureKind::LlmFailed);
    let failed: Vec<_> = log.entries().into_iter().filter(|e| e.error.is_some()).collect();
    assert_eq!(failed.len(), 1);
    assert_eq!(failed[0].attempts, 2);
}

#[test]
fn mock_statements_follow_the_chain() {
    let g = Gateway::connect(&GatewayProfile::mock("m")).unwrap();
    let run = extract_corpus(&corpus()[..1], &g, &PromptTemplate::default(), DEFAULT_BYTE_BUDGET, None).unwrap();
    let steps = &run.sets[0].steps;
    // import, filter, mosaic, index, export
    assert_eq!(steps.len(), 5, "{steps:?}");
}
