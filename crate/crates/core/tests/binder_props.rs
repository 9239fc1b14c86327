use std::fs;
use std::path::{Path, PathBuf};

use mapforge::binder::{emit, resolve, DecisionSpace, DimKind};
use mapforge::dsl;
use mapforge::eval::builtin_library;
use mapforge::machine::MachineModel;
use mapforge::sim::{load_app, load_machine, AppDescriptor};
use mapforge::{MemKind, ProcKind};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn corpus() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../corpus")
}

fn app(name: &str) -> AppDescriptor {
    load_app(&corpus().join("apps").join(format!("{name}.app"))).unwrap()
}

fn machine() -> MachineModel {
    load_machine(&corpus().join("config/p100-cluster.machine")).unwrap()
}

// A Region statement as the oracle sees it: None is a wildcard.
#[derive(Debug, Clone)]
struct RegionStmt {
    task: Option<String>,
    region: Option<RegionSlot>,
    proc: Option<ProcKind>,
    mem: MemKind,
}

#[derive(Debug, Clone)]
enum RegionSlot {
    Name(String),
    Position(usize),
}

impl RegionStmt {
    fn text(&self) -> String {
        let region = match &self.region {
            None => "*".to_string(),
            Some(RegionSlot::Name(n)) => n.clone(),
            Some(RegionSlot::Position(i)) => i.to_string(),
        };
        format!(
            "Region {} {} {} {};",
            self.task.as_deref().unwrap_or("*"),
            region,
            self.proc.map(|p| p.to_string()).unwrap_or("*".into()),
            self.mem
        )
    }

    fn applies(&self, task: &str, region: &str, position: usize, proc: ProcKind) -> bool {
        self.task.as_deref().is_none_or(|t| t == task)
            && match &self.region {
                None => true,
                Some(RegionSlot::Name(n)) => n == region,
                Some(RegionSlot::Position(i)) => *i == position,
            }
            && self.proc.is_none_or(|p| p == proc)
    }

    fn specificity(&self) -> usize {
        [self.task.is_some(), self.region.is_some(), self.proc.is_some()]
            .iter()
            .filter(|&&b| b)
            .count()
    }
}

// Most specific applicable statement; among equals the later one.
fn oracle(stmts: &[RegionStmt], task: &str, region: &str, position: usize, proc: ProcKind) -> Option<MemKind> {
    let mut best: Option<&RegionStmt> = None;
    for s in stmts.iter().filter(|s| s.applies(task, region, position, proc)) {
        if best.is_none_or(|b| s.specificity() >= b.specificity()) {
            best = Some(s);
        }
    }
    best.map(|s| s.mem)
}

fn region_stmt(tasks: Vec<String>, regions: Vec<String>) -> impl Strategy<Value = RegionStmt> {
    let slot = prop_oneof![
        Just(None),
        prop::sample::select(regions).prop_map(|r| Some(RegionSlot::Name(r))),
        (0usize..6).prop_map(|i| Some(RegionSlot::Position(i))),
    ];
    (
        prop::option::of(prop::sample::select(tasks)),
        slot,
        prop::option::of(prop::sample::select(vec![ProcKind::Gpu, ProcKind::Cpu])),
        prop::sample::select(vec![MemKind::Fbmem, MemKind::Zcmem, MemKind::Sysmem]),
    )
        .prop_map(|(task, region, proc, mem)| RegionStmt {
            task,
            region,
            proc,
            mem,
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn most_specific_then_last_statement_wins(
        procs in prop::sample::select(vec!["GPU", "CPU", "GPU,CPU", "CPU,GPU"]),
        stmts in prop::collection::vec(
            region_stmt(
                vec!["stencil".into(), "increment".into()],
                vec!["private_in".into(), "ghost_left".into(), "ghost_down".into()],
            ),
            1..12,
        ),
    ) {
        let app = app("stencil");
        let m = machine();
        let mut text = format!("Task * {procs};\n");
        for s in &stmts {
            text.push_str(&s.text());
            text.push('\n');
        }
        let program = dsl::check(&text).unwrap();
        let first = if procs.starts_with("GPU") { ProcKind::Gpu } else { ProcKind::Cpu };

        let mut expected_ok = true;
        for t in &app.tasks {
            for (i, a) in t.args.iter().enumerate() {
                expected_ok &= oracle(&stmts, &t.name, &a.region, i, first).is_some();
            }
        }
        match resolve(&program, &app, &m) {
            Ok(r) => {
                prop_assert!(expected_ok);
                for (t, d) in app.tasks.iter().zip(&r.table.tasks) {
                    prop_assert_eq!(d.proc, first);
                    for (i, (a, ad)) in t.args.iter().zip(&d.args).enumerate() {
                        let want = oracle(&stmts, &t.name, &a.region, i, first).unwrap();
                        prop_assert_eq!(&ad.memories, &vec![want]);
                    }
                }
            }
            Err(diags) => {
                prop_assert!(!expected_ok, "{:?}", diags);
                prop_assert!(diags[0].message.starts_with("no Region statement applies"));
            }
        }
    }
}

fn random_vector(rng: &mut ChaCha8Rng, space: &DecisionSpace) -> Vec<usize> {
    space.domain_sizes().iter().map(|&n| rng.gen_range(0..n)).collect()
}

#[test]
fn emitted_programs_resolve_to_their_tables() {
    let m = machine();
    let library = builtin_library();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for name in ["stencil", "circuit"] {
        let app = app(name);
        let space = DecisionSpace::new(&app, &m).unwrap();
        for _ in 0..500 {
            let v = random_vector(&mut rng, &space);
            let table = space.table(&app, &v).unwrap();
            let text = dsl::print(&emit(&table, &library));
            let program = dsl::check(&text).unwrap_or_else(|e| panic!("{e:?}\n{text}"));
            let back = resolve(&program, &app, &m).unwrap_or_else(|e| panic!("{e:?}\n{text}"));
            assert_eq!(back.table, table, "{text}");
            assert_eq!(space.vector(&back.table).unwrap(), v);
        }
    }
}

#[test]
fn vectors_round_trip_through_tables() {
    let m = machine();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for name in ["stencil", "circuit", "pennant", "cannon", "johnson"] {
        let app = app(name);
        let space = DecisionSpace::new(&app, &m).unwrap();
        for _ in 0..200 {
            let v = random_vector(&mut rng, &space);
            assert_eq!(space.vector(&space.table(&app, &v).unwrap()).unwrap(), v);
        }
        assert!(space.table(&app, &vec![0; space.len() + 1]).is_err());
    }
}

#[test]
fn stencil_space_shape() {
    let app = app("stencil");
    let space = DecisionSpace::new(&app, &machine()).unwrap();
    assert_eq!(space.len(), 26);
    for d in &space.dims {
        let expected = match d.kind {
            DimKind::Proc { .. } => 2,
            DimKind::Memory { .. } => 2,
            DimKind::Layout { .. } => 4,
            DimKind::IndexMap { .. } => panic!("stencil lists no index maps"),
        };
        assert_eq!(d.domain.len(), expected, "{}", d.id);
    }
    assert_eq!(space.size(), num_bigint::BigUint::from(1u64 << 38));
}

#[test]
fn matmul_space_counts_index_map_candidates() {
    let m = machine();
    for name in ["cannon", "summa", "pumma", "johnson", "solomonik", "cosma"] {
        let app = app(name);
        let space = DecisionSpace::new(&app, &m).unwrap();
        let k: usize = app.tasks.iter().map(|t| t.index_map_candidates.len()).sum();
        assert_eq!(k, 4, "{name}");
        let product: u128 = space.domain_sizes().iter().map(|&n| n as u128).product();
        assert_eq!(space.size().to_string(), product.to_string());
        let map_dim = space
            .dims
            .iter()
            .find(|d| matches!(d.kind, DimKind::IndexMap { .. }))
            .unwrap();
        assert_eq!(map_dim.domain.len(), 4);
        assert_eq!(product % 4, 0);
    }
}

#[test]
fn sample_strategies_resolve_against_circuit() {
    let app = app("circuit");
    let m = machine();
    for i in 1..=10 {
        let path = corpus().join(format!("strategies/{i:02}.dsl"));
        let program = dsl::check(&fs::read_to_string(&path).unwrap()).unwrap();
        let r = resolve(&program, &app, &m).unwrap_or_else(|e| panic!("{}: {e:?}", path.display()));
        assert_eq!(r.table.tasks.len(), app.tasks.len());
    }
}

#[test]
fn last_index_task_map_wins() {
    let app = app("cannon");
    let m = machine();
    let cands = &app.tasks[0].index_map_candidates;
    let mut text = fs::read_to_string(corpus().join("builtins/common.dsl")).unwrap();
    text.push_str("\nTask * GPU;\nRegion * * * SYSMEM;\n");
    text.push_str(&format!("IndexTaskMap {} {};\n", app.tasks[0].name, cands[0]));
    text.push_str(&format!("IndexTaskMap {} {};\n", app.tasks[0].name, cands[1]));
    let program = dsl::check(&text).unwrap();
    let r = resolve(&program, &app, &m).unwrap();
    assert_eq!(r.table.tasks[0].index_map.as_deref(), Some(cands[1].as_str()));
}

#[test]
fn unmatched_task_is_reported() {
    let program = dsl::check("Task stencil GPU;\nRegion * * * FBMEM;\n").unwrap();
    let errs = resolve(&program, &app("stencil"), &machine()).unwrap_err();
    assert_eq!(errs[0].message, "no Task statement applies to task increment");
}
