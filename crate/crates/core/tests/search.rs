use std::collections::{BTreeMap, HashSet};
use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpListener;
use std::path::{Path, PathBuf};

use itertools::Itertools;
use mapforge::binder::DecisionSpace;
use mapforge::eval::builtin_library;
use mapforge::feedback::{FeedbackKind, FeedbackLevel, FeedbackReport, RuleSet};
use mapforge::machine::MachineModel;
use mapforge::search::adapter::{Adapter, Request, PROTOCOL};
use mapforge::search::aggregate::aggregate;
use mapforge::search::trajectory::{to_csv, CSV_HEADER};
use mapforge::search::{
    run, run_loop, AppEvaluator, Candidate, Exhaustive, HillClimb, IterationRecord, LoopConfig, Proposal, RandomAgent,
    RunSpec, Strategy, Trajectory,
};
use mapforge::sim::{load_app, load_costs, load_machine, simulate, AppDescriptor, CostParams};

fn corpus() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../corpus")
}

fn app(name: &str) -> AppDescriptor {
    load_app(&corpus().join("apps").join(format!("{name}.app"))).unwrap()
}

fn machine() -> MachineModel {
    load_machine(&corpus().join("config/p100-cluster.machine")).unwrap()
}

fn costs() -> CostParams {
    load_costs(&corpus().join("config/default.costs")).unwrap()
}

fn spec<'a>(
    app: &'a AppDescriptor,
    m: &'a MachineModel,
    c: &'a CostParams,
    space: &'a DecisionSpace,
    rules: &'a RuleSet,
    budget: usize,
) -> RunSpec<'a> {
    RunSpec {
        app,
        machine: m,
        costs: c,
        space,
        budget,
        level: FeedbackLevel::SystemExplainSuggest,
        rules,
    }
}

fn performance(score: f64) -> FeedbackReport {
    FeedbackReport {
        kind: FeedbackKind::PerformanceMetric,
        system_message: format!("Achieved throughput = {score} GFLOPS"),
        explain: None,
        suggest: None,
        score: Some(score),
    }
}

#[test]
fn random_agent_is_uniform_per_dimension() {
    let a = app("toy/toy256");
    let space = DecisionSpace::new(&a, &machine()).unwrap();
    let sizes = space.domain_sizes();
    let mut counts: Vec<Vec<u32>> = sizes.iter().map(|&n| vec![0; n]).collect();
    let mut agent = RandomAgent::new(3);
    let draws = 8000;
    for _ in 0..draws {
        let ctx = mapforge::search::Context {
            app: "toy256",
            space: &space,
            history: &[],
        };
        let Proposal::Vector(v) = agent.propose(&ctx) else {
            panic!()
        };
        for (d, &x) in v.iter().enumerate() {
            counts[d][x] += 1;
        }
    }
    for c in counts {
        let expected = draws as f64 / c.len() as f64;
        let chi2: f64 = c.iter().map(|&o| (o as f64 - expected).powi(2) / expected).sum();
        // 0.1% critical values for 1 and 3 degrees of freedom
        let critical = if c.len() == 2 { 10.83 } else { 16.27 };
        assert!(chi2 < critical, "{c:?} chi2 {chi2}");
    }
}

// Score is a sum of one term per coordinate, so the optimum is the
// per-coordinate argmax.
fn separable(weights: &[Vec<f64>], v: &[usize]) -> f64 {
    v.iter().zip(weights).map(|(&x, w)| w[x]).sum()
}

#[test]
fn hill_climb_finds_separable_optimum() {
    let a = app("toy/toy4096");
    let space = DecisionSpace::new(&a, &machine()).unwrap();
    let sizes = space.domain_sizes();
    let weights: Vec<Vec<f64>> = sizes
        .iter()
        .enumerate()
        .map(|(d, &n)| (0..n).map(|k| ((d * 7 + k * 13) % 11) as f64 + 1.0).collect())
        .collect();
    let optimum: f64 = weights.iter().map(|w| w.iter().copied().fold(f64::MIN, f64::max)).sum();
    let rules = RuleSet::bundled();
    let config = LoopConfig {
        budget: 400,
        level: FeedbackLevel::System,
        rules: &rules,
    };
    for seed in 0..10 {
        let mut climber = HillClimb::new(seed, 10_000);
        let records = run_loop("separable", &space, &mut climber, &config, |p, _| match p {
            Proposal::Vector(v) => (
                Candidate {
                    vector: Some(v.clone()),
                    blocks: vec![],
                },
                performance(separable(&weights, v)),
            ),
            _ => unreachable!(),
        });
        assert_eq!(records.last().unwrap().best_so_far, Some(optimum), "seed {seed}");
    }
}

#[test]
fn hill_climb_only_moves_one_coordinate_between_restarts() {
    let a = app("toy/toy4096");
    let space = DecisionSpace::new(&a, &machine()).unwrap();
    let rules = RuleSet::bundled();
    let config = LoopConfig {
        budget: 60,
        level: FeedbackLevel::System,
        rules: &rules,
    };
    let mut climber = HillClimb::new(5, 1000);
    // every proposal scores the same, so the incumbent never changes
    let records = run_loop("flat", &space, &mut climber, &config, |p, _| match p {
        Proposal::Vector(v) => (
            Candidate {
                vector: Some(v.clone()),
                blocks: vec![],
            },
            performance(1.0),
        ),
        _ => unreachable!(),
    });
    let first = records[0].candidate.vector.clone().unwrap();
    for r in &records[1..] {
        let v = r.candidate.vector.as_ref().unwrap();
        assert_eq!(v.iter().zip(&first).filter(|(a, b)| a != b).count(), 1);
    }
}

fn brute_force_best(a: &AppDescriptor, space: &DecisionSpace, m: &MachineModel, c: &CostParams) -> (f64, usize) {
    let library = builtin_library();
    let mut best = f64::MIN;
    let mut count = 0;
    for v in space.domain_sizes().iter().map(|&n| 0..n).multi_cartesian_product() {
        count += 1;
        if let Ok(r) = simulate(a, &space.table(a, &v).unwrap(), &library, m, c) {
            best = best.max(r.throughput);
        }
    }
    (best, count)
}

#[test]
fn exhaustive_matches_brute_force_on_toys() {
    let m = machine();
    let c = costs();
    let rules = RuleSet::bundled();
    for name in ["toy/toy16", "toy/toy256", "toy/toy4096"] {
        let a = app(name);
        let space = DecisionSpace::new(&a, &m).unwrap();
        let (best, count) = brute_force_best(&a, &space, &m, &c);
        let t = run(&spec(&a, &m, &c, &space, &rules, count), &mut Exhaustive::new(), 0);
        let visited: HashSet<Vec<usize>> = t.records.iter().map(|r| r.candidate.vector.clone().unwrap()).collect();
        assert_eq!(visited.len(), count, "{name}");
        assert_eq!(t.best().unwrap().score, Some(best), "{name}");
    }
}

#[test]
fn failures_do_not_stop_the_loop() {
    let a = app("cannon");
    let m = machine();
    let c = costs();
    let rules = RuleSet::bundled();
    let space = DecisionSpace::new(&a, &m).unwrap();
    let t = run(&spec(&a, &m, &c, &space, &rules, 30), &mut RandomAgent::new(1), 1);
    assert_eq!(t.records.len(), 30);
    assert!(t.records.iter().any(|r| r.score.is_none()));
    let mut running: Option<f64> = None;
    for (i, r) in t.records.iter().enumerate() {
        assert_eq!(r.iteration, i + 1);
        assert_eq!(r.score.is_some(), r.feedback.kind == FeedbackKind::PerformanceMetric);
        if let Some(s) = r.score {
            running = Some(running.map_or(s, |b: f64| b.max(s)));
        }
        assert_eq!(r.best_so_far, running);
    }
}

#[test]
fn seeded_runs_repeat() {
    let a = app("circuit");
    let m = machine();
    let c = costs();
    let rules = RuleSet::bundled();
    let space = DecisionSpace::new(&a, &m).unwrap();
    let s = spec(&a, &m, &c, &space, &rules, 12);
    let once = run(&s, &mut HillClimb::new(4, 24), 4);
    let again = run(&s, &mut HillClimb::new(4, 24), 4);
    assert_eq!(once, again);
    let other = run(&s, &mut HillClimb::new(5, 24), 5);
    assert_ne!(
        once.records.iter().map(|r| &r.candidate).collect::<Vec<_>>(),
        other.records.iter().map(|r| &r.candidate).collect::<Vec<_>>()
    );
}

#[test]
fn invalid_block_text_is_a_compile_error() {
    let a = app("stencil");
    let m = machine();
    let c = costs();
    let space = DecisionSpace::new(&a, &m).unwrap();
    let mut ev = AppEvaluator::new(&a, &m, &c, &space);
    let bad = BTreeMap::from([("task_decision".to_string(), "Task * GPU".to_string())]);
    let (_, report) = ev.evaluate(&Proposal::Blocks(bad), &[]);
    assert_eq!(report.kind, FeedbackKind::CompileError);
    let unknown = BTreeMap::from([("colour_decision".to_string(), String::new())]);
    let (_, report) = ev.evaluate(&Proposal::Blocks(unknown), &[]);
    assert!(report.system_message.starts_with("unknown block colour_decision"));
    let good = BTreeMap::from([
        ("task_decision".to_string(), "Task * CPU;".to_string()),
        ("region_decision".to_string(), "Region * * CPU SYSMEM;".to_string()),
    ]);
    let (candidate, report) = ev.evaluate(&Proposal::Blocks(good), &[]);
    assert_eq!(
        report.kind,
        FeedbackKind::PerformanceMetric,
        "{}",
        report.system_message
    );
    assert!(candidate.program().contains("Task * CPU;"));
}

#[test]
fn http_adapter_round_trip() {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let url = format!("http://{}/propose", listener.local_addr().unwrap());
    let server = std::thread::spawn(move || {
        let mut requests = Vec::new();
        for _ in 0..3 {
            let (stream, _) = listener.accept().unwrap();
            let mut reader = BufReader::new(stream.try_clone().unwrap());
            let mut length = 0;
            loop {
                let mut line = String::new();
                reader.read_line(&mut line).unwrap();
                if line == "\r\n" {
                    break;
                }
                if let Some(v) = line.to_ascii_lowercase().strip_prefix("content-length:") {
                    length = v.trim().parse().unwrap();
                }
            }
            let mut body = vec![0; length];
            reader.read_exact(&mut body).unwrap();
            let req: Request = serde_json::from_slice(&body).unwrap();
            // answer with the iteration number on the layout axis
            let reply = format!("{{\"vector\": [0, 0, {}]}}\n", (req.iteration - 1) % 4);
            let mut stream = stream;
            write!(
                stream,
                "HTTP/1.1 200 OK\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{reply}",
                reply.len()
            )
            .unwrap();
            requests.push(req);
        }
        requests
    });

    let a = app("toy/toy16");
    let m = machine();
    let c = costs();
    let rules = RuleSet::bundled();
    let space = DecisionSpace::new(&a, &m).unwrap();
    let t = run(&spec(&a, &m, &c, &space, &rules, 3), &mut Adapter::new(&url), 0);
    let requests = server.join().unwrap();
    let vectors: Vec<Vec<usize>> = t.records.iter().map(|r| r.candidate.vector.clone().unwrap()).collect();
    assert_eq!(vectors, vec![vec![0, 0, 0], vec![0, 0, 1], vec![0, 0, 2]]);
    assert_eq!(requests[0].protocol, PROTOCOL);
    assert_eq!(requests[0].domains.len(), 3);
    assert!(requests[0].history.is_empty());
    assert_eq!(requests[2].history.len(), 2);
    assert_eq!(requests[2].history[1].feedback, t.records[1].rendered);
    assert!(requests[2].best_so_far.is_some());
}

#[test]
fn subprocess_adapter_replays_answers() {
    let dir = tempdir();
    let replay = dir.join("answers.jsonl");
    std::fs::write(
        &replay,
        "{\"vector\": [1, 1, 3]}\nnot json\n{\"blocks\": {\"task_decision\": \"Task * CPU;\"}}\n",
    )
    .unwrap();
    let cmd = format!(
        "exec:exec 3<'{}'; while read -r request; do read -r answer <&3 || exit 0; echo \"$answer\"; done",
        replay.display()
    );
    let a = app("toy/toy16");
    let m = machine();
    let c = costs();
    let rules = RuleSet::bundled();
    let space = DecisionSpace::new(&a, &m).unwrap();
    let t = run(&spec(&a, &m, &c, &space, &rules, 4), &mut Adapter::new(&cmd), 0);
    let kinds: Vec<FeedbackKind> = t.records.iter().map(|r| r.feedback.kind).collect();
    assert_eq!(t.records[0].candidate.vector, Some(vec![1, 1, 3]));
    assert_eq!(kinds[0], FeedbackKind::PerformanceMetric);
    assert_eq!(kinds[1], FeedbackKind::CompileError);
    assert!(t.records[1]
        .feedback
        .system_message
        .starts_with("malformed adapter response"));
    assert_eq!(kinds[2], FeedbackKind::PerformanceMetric);
    assert!(t.records[2].candidate.program().contains("Task * CPU;"));
    // the replay ran dry and the adapter exited
    assert_eq!(kinds[3], FeedbackKind::CompileError);
    std::fs::remove_dir_all(dir).unwrap();
}

fn tempdir() -> PathBuf {
    let dir = std::env::temp_dir().join(format!("mapforge-search-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

fn fixture(seed: u64, scores: &[Option<f64>]) -> Trajectory {
    let mut best: Option<f64> = None;
    let records = scores
        .iter()
        .enumerate()
        .map(|(i, &score)| {
            if let Some(s) = score {
                best = Some(best.map_or(s, |b: f64| b.max(s)));
            }
            IterationRecord {
                iteration: i + 1,
                candidate: Candidate::default(),
                feedback: match score {
                    Some(s) => performance(s),
                    None => FeedbackReport::compile_error("x"),
                },
                rendered: String::new(),
                score,
                best_so_far: best,
            }
        })
        .collect();
    Trajectory {
        strategy: "fixture".into(),
        seed,
        app: "a".into(),
        machine: "m".into(),
        records,
    }
}

#[test]
fn aggregate_averages_normalized_best() {
    let t = vec![
        fixture(0, &[None, Some(2.0), Some(1.0)]),
        fixture(1, &[Some(4.0), Some(3.0), Some(8.0)]),
    ];
    let s = aggregate(&t, 4.0).unwrap();
    let means: Vec<f64> = s.rows.iter().map(|r| r.mean_normalized).collect();
    // (0 + 1) / 2, (0.5 + 1) / 2, (0.5 + 2) / 2
    assert_eq!(means, vec![0.5, 0.75, 1.25]);
    assert!(s.rows.iter().all(|r| r.seeds == 2));
    let best = s.best.unwrap();
    assert_eq!((best.seed, best.iteration, best.normalized), (1, 3, 2.0));
    assert!(aggregate(&t, 0.0).is_err());
    assert!(aggregate(&t, f64::NAN).is_err());
    assert!(aggregate(&[], 1.0).is_err());

    let csv = to_csv(&t, Some(4.0));
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], CSV_HEADER);
    assert_eq!(lines.len(), 7);
    assert_eq!(lines[1], "0,1,,,,compile_error");
    assert_eq!(lines[6], "1,3,8,8,2,performance");
}
