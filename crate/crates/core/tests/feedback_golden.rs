//! Rendered feedback for one mapper per enhancer rule, produced by the
//! whole check, bind, simulate and enhance pipeline. Set UPDATE_GOLDEN=1
//! to rewrite the expected files.

use std::fs;
use std::path::{Path, PathBuf};

use mapforge::binder::resolve;
use mapforge::dsl;
use mapforge::feedback::{classify, enhance, render, FeedbackKind, FeedbackLevel, FeedbackReport, Outcome, RuleSet};
use mapforge::sim::{load_app, load_costs, load_machine, simulate};

fn root() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).to_path_buf()
}

fn corpus(rel: &str) -> PathBuf {
    root().join("../../corpus").join(rel)
}

fn evaluate(app_path: &Path, source: &str) -> FeedbackReport {
    let app = load_app(app_path).unwrap();
    let machine = load_machine(&corpus("config/p100-cluster.machine")).unwrap();
    let costs = load_costs(&corpus("config/default.costs")).unwrap();
    let program = match dsl::check(source) {
        Ok(p) => p,
        Err(d) => return classify(Outcome::Diagnostics(&d)),
    };
    let resolved = match resolve(&program, &app, &machine) {
        Ok(r) => r,
        Err(d) => return classify(Outcome::Diagnostics(&d)),
    };
    match simulate(&app, &resolved.table, &resolved.library, &machine, &costs) {
        Ok(r) => classify(Outcome::Ran(&r)),
        Err(e) => classify(Outcome::Failed(&e)),
    }
}

const CASES: [(&str, FeedbackKind); 9] = [
    ("colon", FeedbackKind::CompileError),
    ("undefined_function", FeedbackKind::CompileError),
    ("missing_machine", FeedbackKind::CompileError),
    ("stride", FeedbackKind::ExecutionError),
    ("dgemm", FeedbackKind::ExecutionError),
    ("slice_out_of_bound", FeedbackKind::ExecutionError),
    ("instance_limit", FeedbackKind::ExecutionError),
    ("execution_time", FeedbackKind::PerformanceMetric),
    ("throughput", FeedbackKind::PerformanceMetric),
];

// (name, app, mapper source, expected kind); each fixture names its app
// on the first line.
fn cases() -> Vec<(&'static str, PathBuf, String, FeedbackKind)> {
    CASES
        .iter()
        .map(|&(name, kind)| {
            let source = fs::read_to_string(corpus(&format!("feedback/{name}.dsl"))).unwrap();
            let app = source
                .lines()
                .next()
                .unwrap()
                .strip_prefix("# app: ")
                .unwrap()
                .to_string();
            (name, corpus(&app), source, kind)
        })
        .collect()
}

#[test]
fn every_rule_fires_on_a_real_mapper() {
    let rules = RuleSet::bundled();
    let update = std::env::var_os("UPDATE_GOLDEN").is_some();
    let mut used = Vec::new();
    for (name, app, source, kind) in cases() {
        let report = evaluate(&app, &source);
        assert_eq!(report.kind, kind, "{name}: {}", report.system_message);
        let rule = rules
            .find(&report.system_message)
            .unwrap_or_else(|| panic!("{name}: no rule for {}", report.system_message));
        used.push(rule.keyword.clone());
        let full = render(&enhance(&report, &rules, FeedbackLevel::SystemExplainSuggest));
        let path = root().join(format!("tests/golden/{name}.txt"));
        if update {
            fs::write(&path, format!("{full}\n")).unwrap();
        }
        let expected = fs::read_to_string(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
        assert_eq!(full, expected.trim_end_matches('\n'), "{name}");
    }
    used.sort();
    used.dedup();
    assert_eq!(used.len(), rules.rules.len(), "every rule is exercised once");
}

#[test]
fn higher_levels_only_add_lines() {
    let rules = RuleSet::bundled();
    for (name, app, source, _) in cases() {
        let report = evaluate(&app, &source);
        let rendered: Vec<String> = FeedbackLevel::ALL
            .iter()
            .map(|&l| render(&enhance(&report, &rules, l)))
            .collect();
        assert_eq!(rendered[0].lines().count(), 1, "{name}");
        for pair in rendered.windows(2) {
            assert!(pair[1].starts_with(&pair[0]), "{name}");
            assert!(pair[1].len() >= pair[0].len());
        }
        assert!(rendered[2].contains("\nSuggestion: "), "{name}");
    }
}
