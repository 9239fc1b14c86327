use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use mapforge::dsl;
use mapforge::eval::{builtin_library, Evaluator, FunctionLibrary, TaskHandle};
use mapforge::machine::{MachineModel, ProcIndex};
use mapforge::ProcKind;

fn gpus(nodes: u32, per_node: u32) -> MachineModel {
    MachineModel::uniform(ProcKind::Gpu, nodes, per_node)
}

fn corpus_lib(rel: &str) -> FunctionLibrary {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../corpus").join(rel);
    FunctionLibrary::from_program(&dsl::parse(&fs::read_to_string(path).unwrap()).unwrap())
}

fn map(ev: &Evaluator, func: &str, ipoint: &[i64], ispace: &[i64]) -> ProcIndex {
    let (kind, p) = ev
        .map_point(func, &TaskHandle::point("t", ipoint.to_vec(), ispace.to_vec()))
        .unwrap();
    assert_eq!(kind, ProcKind::Gpu);
    p
}

fn grid(ispace: &[i64]) -> Vec<Vec<i64>> {
    let mut out = vec![vec![]];
    for &e in ispace {
        out = out
            .into_iter()
            .flat_map(|p| {
                (0..e).map(move |i| {
                    let mut q = p.clone();
                    q.push(i);
                    q
                })
            })
            .collect();
    }
    out
}

#[test]
fn basic_cyclic_function() {
    let lib = corpus_lib("basic/cyclic.dsl");
    let m = gpus(2, 2);
    let ev = Evaluator::new(&lib, &m);
    assert_eq!(map(&ev, "cyclic", &[3], &[8]), ProcIndex { node: 1, local: 1 });
}

#[test]
fn strategy_cyclic1d() {
    let lib = corpus_lib("strategies/10.dsl");
    let m = gpus(2, 4);
    let ev = Evaluator::new(&lib, &m);
    assert_eq!(map(&ev, "cyclic1d", &[5], &[16]), ProcIndex { node: 1, local: 2 });
    for i in 0..16 {
        let want = ProcIndex {
            node: (i % 2) as u32,
            local: ((i / 2) % 4) as u32,
        };
        assert_eq!(map(&ev, "cyclic1d", &[i], &[16]), want);
    }
}

#[test]
fn block2d_gives_contiguous_quadrants() {
    let lib = builtin_library();
    let m = gpus(2, 2);
    let ev = Evaluator::new(&lib, &m);
    let mut owned: BTreeMap<ProcIndex, Vec<Vec<i64>>> = BTreeMap::new();
    for p in grid(&[4, 4]) {
        owned.entry(map(&ev, "block2D", &p, &[4, 4])).or_default().push(p);
    }
    assert_eq!(owned.len(), 4);
    for (proc, points) in owned {
        let (r, c) = (proc.node as i64 * 2, proc.local as i64 * 2);
        let want: Vec<Vec<i64>> = grid(&[2, 2]).iter().map(|q| vec![r + q[0], c + q[1]]).collect();
        assert_eq!(points, want);
    }
}

#[test]
fn cyclic_and_block_cyclic() {
    let lib = builtin_library();
    let m = gpus(2, 2);
    let ev = Evaluator::new(&lib, &m);
    assert_eq!(map(&ev, "cyclic2D", &[3, 3], &[4, 4]), ProcIndex { node: 1, local: 1 });
    assert_eq!(map(&ev, "blockcyclic", &[5, 0], &[8, 8]).node, 0);
    for p in grid(&[8, 8]) {
        let got = map(&ev, "blockcyclic", &p, &[8, 8]);
        let want = ProcIndex {
            node: ((p[0] / 2) % 2) as u32,
            local: ((p[1] / 2) % 2) as u32,
        };
        assert_eq!(got, want);
    }
}

#[test]
fn origin_maps_to_first_processor() {
    let lib = builtin_library();
    let m = gpus(2, 4);
    let ev = Evaluator::new(&lib, &m);
    for f in ["block2D", "cyclic2D", "blockcyclic"] {
        assert_eq!(map(&ev, f, &[0, 0], &[8, 8]), ProcIndex { node: 0, local: 0 }, "{f}");
    }
    for f in ["block1D_x", "cyclic1D_x", "block1D_y", "cyclic1D_y"] {
        assert_eq!(map(&ev, f, &[0, 0], &[4, 2]), ProcIndex { node: 0, local: 0 }, "{f}");
    }
    for f in [
        "hierarchical_block3D",
        "linearize_cyclic",
        "special_linearize3D",
        "conditional_linearize3D",
    ] {
        assert_eq!(
            map(&ev, f, &[0, 0, 0], &[4, 4, 4]),
            ProcIndex { node: 0, local: 0 },
            "{f}"
        );
    }
    assert_eq!(
        map(&ev, "hierarchical_block2D", &[0, 0], &[4, 4]),
        ProcIndex { node: 0, local: 0 }
    );
}

#[test]
fn solomonik_hierarchical_split() {
    // Each node owns half of the x axis; within a node the four GPUs are
    // laid out over the y-z plane as a 2 x 2 grid.
    let lib = builtin_library();
    let m = gpus(2, 4);
    let ev = Evaluator::new(&lib, &m);
    let mut counts: BTreeMap<ProcIndex, usize> = BTreeMap::new();
    for p in grid(&[4, 4, 4]) {
        let got = map(&ev, "hierarchical_block3D", &p, &[4, 4, 4]);
        let want = ProcIndex {
            node: (p[0] / 2) as u32,
            local: ((p[1] % 2) + 2 * (p[2] % 2)) as u32,
        };
        assert_eq!(got, want, "{p:?}");
        *counts.entry(got).or_default() += 1;
    }
    assert_eq!(counts.len(), 8);
    assert!(counts.values().all(|&c| c == 8));
}

#[test]
fn parent_processor_lookup() {
    let lib = corpus_lib("generated/circuit_iter02.dsl");
    let m = gpus(2, 4);
    let ev = Evaluator::new(&lib, &m);
    let mut child = TaskHandle::point("child", vec![0], vec![1]);
    let mut parent = TaskHandle::point("parent", vec![0], vec![1]);
    parent.placed = Some((ProcKind::Gpu, ProcIndex { node: 1, local: 2 }));
    child.parent = Some(Box::new(parent));
    let (_, p) = ev.map_point("same_point", &child).unwrap();
    assert_eq!(p, ProcIndex { node: 1, local: 2 });
}

#[test]
fn unbound_index_is_reported() {
    let src = "mgpu = Machine(GPU);\ndef f(Task t) { return mgpu[t.ipoint[0], 0]; }";
    let lib = FunctionLibrary::from_program(&dsl::parse(src).unwrap());
    let m = gpus(2, 2);
    let ev = Evaluator::new(&lib, &m);
    let e = ev
        .map_point("f", &TaskHandle::point("t", vec![5], vec![8]))
        .unwrap_err();
    assert!(e.0.contains("Slice processor index out of bound"), "{e}");
}
