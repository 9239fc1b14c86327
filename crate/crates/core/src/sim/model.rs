//! Bulk-synchronous cost model. An iteration lasts as long as the busiest
//! processor computes plus the busiest link transfers.

use std::collections::{BTreeMap, BTreeSet};

use thiserror::Error;

use super::app::{AccessOrder, AppDescriptor, LayoutRequirement, Metric, MismatchKind, RegionDesc, TaskDesc};
use super::config::CostParams;
use crate::binder::{DecisionTable, LayoutChoice, Order, Packing, TaskDecision};
use crate::dsl::AlignOp;
use crate::eval::{Evaluator, FunctionLibrary, TaskHandle};
use crate::kinds::{MemKind, ProcKind};
use crate::machine::{MachineModel, ProcIndex};

/// A memory instance: a node's shared memory or one GPU's framebuffer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Location {
    pub node: u32,
    pub mem: MemKind,
    pub gpu: Option<u32>,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimError {
    #[error(
        "Out of memory: task {task} needs {requested} bytes of {mem} for region {region} on node {node}, \
         {available} of {capacity} bytes free"
    )]
    OutOfMemory {
        task: String,
        region: String,
        mem: MemKind,
        node: u32,
        requested: u64,
        available: u64,
        capacity: u64,
    },
    #[error("{}", match kind {
        MismatchKind::Stride => "Assertion failed: stride does not match expected value.",
        MismatchKind::Dgemm => "DGEMM parameter number 8 had an illegal value",
    })]
    LayoutMismatch {
        task: String,
        region: String,
        kind: MismatchKind,
    },
    #[error("Assertion 'event.exists()' failed")]
    InstanceLimit { task: String, limit: u64, points: u64 },
    #[error("{message}")]
    Mapping { task: String, message: String },
    #[error("None of the memories for region {region} of task {task} is visible to {proc} processors")]
    Inaccessible {
        task: String,
        region: String,
        proc: ProcKind,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimResult {
    pub metric: Metric,
    /// Seconds for all iterations.
    pub wall_time: f64,
    pub total_flops: f64,
    /// Floating-point operations per second.
    pub throughput: f64,
    /// Per task, seconds its slowest processor spent computing.
    pub compute_time: BTreeMap<String, f64>,
    /// Seconds the busiest link spends transferring, over all iterations.
    pub comm_time: f64,
    pub inter_node_bytes: u64,
    pub intra_node_bytes: u64,
    /// Highest number of bytes resident per node and memory kind.
    pub peak_memory: BTreeMap<(u32, MemKind), u64>,
    /// Launch points per processor, per task.
    pub assignments: BTreeMap<String, BTreeMap<(ProcKind, ProcIndex), u64>>,
}

impl SimResult {
    pub fn gflops(&self) -> f64 {
        self.throughput / 1e9
    }
}

struct Placed {
    point: Vec<i64>,
    proc: ProcKind,
    at: ProcIndex,
}

/// Points of a domain in lexicographic order, last axis fastest.
pub fn domain_points(domain: &[i64]) -> Vec<Vec<i64>> {
    let mut out = Vec::new();
    if domain.iter().any(|&e| e <= 0) {
        return out;
    }
    let mut p = vec![0i64; domain.len()];
    loop {
        out.push(p.clone());
        let mut d = domain.len();
        loop {
            if d == 0 {
                return out;
            }
            d -= 1;
            p[d] += 1;
            if p[d] < domain[d] {
                break;
            }
            p[d] = 0;
        }
    }
}

/// Linear ids of the tiles one point touches.
fn tiles_of(region: &RegionDesc, axes: &[usize], point: &[i64], domain: &[i64]) -> Vec<u64> {
    let mut ranges = Vec::with_capacity(region.tiles.len());
    for (d, &t) in region.tiles.iter().enumerate() {
        match axes.get(d) {
            Some(&ax) => {
                let l = domain[ax] as u64;
                let i = point[ax] as u64;
                let lo = i * t / l;
                let hi = ((i + 1) * t).div_ceil(l).max(lo + 1);
                ranges.push(lo..hi);
            }
            None => ranges.push(0..t),
        }
    }
    let mut ids = vec![0u64];
    for (d, r) in ranges.into_iter().enumerate() {
        let t = region.tiles[d];
        ids = ids
            .iter()
            .flat_map(|&base| r.clone().map(move |x| base * t + x))
            .collect();
    }
    ids
}

fn satisfies(req: LayoutRequirement, layout: &LayoutChoice) -> bool {
    match req {
        LayoutRequirement::Soa => layout.packing == Packing::Soa,
        LayoutRequirement::Aos => layout.packing == Packing::Aos,
        LayoutRequirement::COrder => layout.order == Order::C,
        LayoutRequirement::FOrder => layout.order == Order::F,
    }
}

fn misaligned(align: Option<(AlignOp, u64)>, natural: u64) -> bool {
    match align {
        None => false,
        Some((AlignOp::Eq, b)) => b < natural || b % natural != 0,
        Some((AlignOp::Le, b)) => b < natural,
        Some((AlignOp::Ge, _)) => false,
    }
}

fn penalty(costs: &CostParams, proc: ProcKind, layout: &LayoutChoice, order: AccessOrder, mem: MemKind) -> f64 {
    let mut f = 1.0;
    if proc == ProcKind::Gpu && layout.packing == Packing::Aos {
        f *= costs.aos_gpu_penalty;
    }
    let wanted = match order {
        AccessOrder::C => Order::C,
        AccessOrder::F => Order::F,
    };
    if layout.order != wanted {
        f *= costs.order_mismatch_penalty;
    }
    if misaligned(layout.align, costs.alignment_bytes) {
        f *= costs.misalignment_penalty;
    }
    if proc == ProcKind::Gpu && mem == MemKind::Zcmem {
        f *= costs.zcmem_gpu_penalty;
    }
    f
}

fn decision<'t>(table: &'t DecisionTable, task: &TaskDesc) -> Result<&'t TaskDecision, SimError> {
    let d = table.task(&task.name).ok_or_else(|| SimError::Mapping {
        task: task.name.clone(),
        message: format!("no mapping decision for task {}", task.name),
    })?;
    if d.args.len() != task.args.len() {
        return Err(SimError::Mapping {
            task: task.name.clone(),
            message: format!("decision for task {} has the wrong number of arguments", task.name),
        });
    }
    Ok(d)
}

fn place(
    eval: &Evaluator,
    machine: &MachineModel,
    task: &TaskDesc,
    d: &TaskDecision,
    placed: &BTreeMap<String, Vec<Placed>>,
) -> Result<Vec<Placed>, SimError> {
    let domain = task.domain();
    let points = domain_points(&domain);
    let n = points.len() as u128;
    let count = machine.count(d.proc);
    let total = machine.total(d.proc) as u128;
    if count == 0 {
        return Err(SimError::Mapping {
            task: task.name.clone(),
            message: format!("no processors of kind {}", d.proc),
        });
    }
    let mapping_err = |message: String| SimError::Mapping {
        task: task.name.clone(),
        message,
    };
    let mut out = Vec::with_capacity(points.len());
    for (lin, p) in points.into_iter().enumerate() {
        let parent = task.parent.as_ref().map(|pn| {
            let here = placed
                .get(pn)
                .and_then(|ps| ps.iter().find(|q| q.point == p).or(ps.first()));
            let mut h = match here {
                Some(q) => TaskHandle::point(pn, q.point.clone(), Vec::new()),
                None => TaskHandle::point(pn, vec![0], vec![1]),
            };
            if let Some(q) = here {
                h.ispace = placed[pn]
                    .last()
                    .map(|l| l.point.iter().map(|x| x + 1).collect())
                    .unwrap_or_default();
                h.placed = Some((q.proc, q.at));
            }
            Box::new(h)
        });
        let (ipoint, ispace) = if task.is_index() {
            (p.clone(), domain.clone())
        } else {
            (vec![0], vec![1])
        };
        let handle = TaskHandle {
            name: task.name.clone(),
            ipoint,
            ispace,
            parent,
            placed: None,
        };
        let func = if task.is_index() { &d.index_map } else { &d.single_map };
        let (kind, at) = match func {
            Some(f) => eval.map_point(f, &handle).map_err(|e| mapping_err(e.0))?,
            None if task.is_index() => {
                let q = (lin as u128 * total / n) as u32;
                (
                    d.proc,
                    ProcIndex {
                        node: q / count,
                        local: q % count,
                    },
                )
            }
            None => (d.proc, ProcIndex { node: 0, local: 0 }),
        };
        // A function returning another kind of processor keeps the node
        // and lands on the task's own kind there.
        let at = if kind == d.proc && at.node < machine.nodes && at.local < count {
            at
        } else {
            ProcIndex {
                node: at.node % machine.nodes,
                local: at.local % count,
            }
        };
        out.push(Placed {
            point: p,
            proc: d.proc,
            at,
        });
    }
    Ok(out)
}

#[derive(Default)]
struct Memory {
    resident: BTreeMap<Location, BTreeMap<(usize, u64), u64>>,
    usage: BTreeMap<Location, u64>,
    peak: BTreeMap<(u32, MemKind), u64>,
}

impl Memory {
    fn record_peak(&mut self) {
        let mut now: BTreeMap<(u32, MemKind), u64> = BTreeMap::new();
        for (loc, used) in &self.usage {
            *now.entry((loc.node, loc.mem)).or_default() += used;
        }
        for (k, v) in now {
            let e = self.peak.entry(k).or_default();
            *e = (*e).max(v);
        }
    }

    fn free(&mut self, loc: Location, tile: (usize, u64)) {
        if let Some(bytes) = self.resident.get_mut(&loc).and_then(|m| m.remove(&tile)) {
            *self.usage.entry(loc).or_default() -= bytes;
        }
    }
}

#[derive(Default)]
struct Phase {
    compute: BTreeMap<(ProcKind, ProcIndex), f64>,
    links: BTreeMap<(u32, u32, MemKind, MemKind), f64>,
    inter: f64,
    intra: f64,
}

impl Phase {
    fn send(&mut self, from: Location, to: Location, bytes: f64) {
        if from == to || bytes <= 0.0 {
            return;
        }
        *self.links.entry((from.node, to.node, from.mem, to.mem)).or_default() += bytes;
        if from.node == to.node {
            self.intra += bytes;
        } else {
            self.inter += bytes;
        }
    }

    fn comm_seconds(&self, machine: &MachineModel) -> f64 {
        self.links
            .iter()
            .map(|(&(a, b, ma, mb), &bytes)| bytes / machine.bandwidth(ma, mb, a == b))
            .fold(0.0, f64::max)
    }
}

struct Run<'a> {
    app: &'a AppDescriptor,
    machine: &'a MachineModel,
    costs: &'a CostParams,
    memory: Memory,
    latest: BTreeMap<(usize, u64), Location>,
}

impl Run<'_> {
    fn choose(
        &mut self,
        task: &TaskDesc,
        region: &RegionDesc,
        tile: (usize, u64),
        memories: &[MemKind],
        p: &Placed,
    ) -> Result<Location, SimError> {
        let bytes = region.tile_bytes();
        let mut first_visible = None;
        for &mem in memories {
            if !p.proc.can_access(mem) {
                continue;
            }
            let loc = Location {
                node: p.at.node,
                mem,
                gpu: if mem.is_per_processor() { Some(p.at.local) } else { None },
            };
            first_visible.get_or_insert(loc);
            if self.memory.resident.get(&loc).is_some_and(|m| m.contains_key(&tile)) {
                return Ok(loc);
            }
            let used = self.memory.usage.get(&loc).copied().unwrap_or(0);
            if used.saturating_add(bytes) <= self.machine.capacity(mem) {
                self.memory.resident.entry(loc).or_default().insert(tile, bytes);
                *self.memory.usage.entry(loc).or_default() += bytes;
                return Ok(loc);
            }
        }
        match first_visible {
            None => Err(SimError::Inaccessible {
                task: task.name.clone(),
                region: region.name.clone(),
                proc: p.proc,
            }),
            Some(loc) => {
                let capacity = self.machine.capacity(loc.mem);
                let used = self.memory.usage.get(&loc).copied().unwrap_or(0);
                Err(SimError::OutOfMemory {
                    task: task.name.clone(),
                    region: region.name.clone(),
                    mem: loc.mem,
                    node: loc.node,
                    requested: bytes,
                    available: capacity.saturating_sub(used),
                    capacity,
                })
            }
        }
    }

    fn phase(&mut self, task: &TaskDesc, d: &TaskDecision, placed: &[Placed]) -> Result<Phase, SimError> {
        let app = self.app;
        let domain = task.domain();
        let mut phase = Phase::default();
        // (tile, location, write) in access order
        let mut accesses: Vec<((usize, u64), Location, bool)> = Vec::new();
        let mut arg_loc: Vec<BTreeMap<Vec<i64>, Location>> = vec![BTreeMap::new(); task.args.len()];
        let mut per_proc_points: BTreeMap<(ProcKind, ProcIndex), u64> = BTreeMap::new();
        let mut point_times: BTreeMap<(ProcKind, ProcIndex), Vec<f64>> = BTreeMap::new();

        for p in placed {
            let mut weighted = 0.0;
            let mut weight = 0.0;
            for (a, (arg, ad)) in task.args.iter().zip(&d.args).enumerate() {
                let ri = app
                    .regions
                    .iter()
                    .position(|r| r.name == arg.region)
                    .expect("checked region");
                let region = &app.regions[ri];
                let axes = app.tile_axes(task, arg);
                let tiles = tiles_of(region, &axes, &p.point, &domain);
                let mut first = None;
                for t in &tiles {
                    let loc = self.choose(task, region, (ri, *t), &ad.memories, p)?;
                    first.get_or_insert(loc);
                    accesses.push(((ri, *t), loc, arg.write));
                }
                let loc = first.expect("at least one tile");
                arg_loc[a].insert(p.point.clone(), loc);
                let w = (region.tile_bytes() * tiles.len() as u64) as f64;
                weighted += w * penalty(self.costs, p.proc, &ad.layout, arg.access_order, loc.mem);
                weight += w;
            }
            let factor = if weight > 0.0 { weighted / weight } else { 1.0 };
            let secs = self.machine.overhead(p.proc) + task.flops_per_point / self.machine.rate(p.proc) * factor;
            *per_proc_points.entry((p.proc, p.at)).or_default() += 1;
            point_times.entry((p.proc, p.at)).or_default().push(secs);
        }
        self.memory.record_peak();

        for (key, times) in point_times {
            let n = times.len() as u64;
            let mut secs: f64 = times.iter().sum();
            if let Some(limit) = d.instance_limit {
                if task.concurrent && limit < n {
                    return Err(SimError::InstanceLimit {
                        task: task.name.clone(),
                        limit,
                        points: n,
                    });
                }
                let waves = n.div_ceil(limit.max(1));
                secs += (waves.saturating_sub(1)) as f64 * self.machine.overhead(key.0);
            }
            phase.compute.insert(key, secs);
        }

        let mut sent: BTreeSet<((usize, u64), Location)> = BTreeSet::new();
        for &(tile, loc, _) in &accesses {
            if let Some(&home) = self.latest.get(&tile) {
                if home != loc && sent.insert((tile, loc)) {
                    let bytes = app.regions[tile.0].tile_bytes() as f64;
                    phase.send(home, loc, bytes);
                }
            }
        }

        for (a, arg) in task.args.iter().enumerate() {
            let region = app.region(&arg.region).expect("checked region");
            let axes = app.tile_axes(task, arg);
            let locs = &arg_loc[a];
            for p in placed {
                let here = locs[&p.point];
                let bytes = (region.tile_bytes() * tiles_of(region, &axes, &p.point, &domain).len() as u64) as f64;
                for ex in &arg.exchanges {
                    for off in &ex.offsets {
                        let mut q = p.point.clone();
                        let mut inside = true;
                        for (k, o) in off.iter().enumerate() {
                            let v = q[k] + o;
                            if ex.periodic {
                                q[k] = v.rem_euclid(domain[k]);
                            } else if v < 0 || v >= domain[k] {
                                inside = false;
                            } else {
                                q[k] = v;
                            }
                        }
                        if inside && q != p.point {
                            phase.send(locs[&q], here, ex.fraction * bytes);
                        }
                    }
                }
                if let Some(axis) = arg.all_to_all_axis {
                    for v in 0..domain[axis] {
                        if v == p.point[axis] {
                            continue;
                        }
                        let mut q = p.point.clone();
                        q[axis] = v;
                        phase.send(locs[&q], here, arg.all_to_all_fraction * bytes);
                    }
                }
            }
        }

        let mut writes: BTreeSet<(usize, u64)> = BTreeSet::new();
        let mut seen: BTreeSet<(usize, u64)> = BTreeSet::new();
        for &(tile, loc, write) in &accesses {
            if write && writes.insert(tile) {
                self.latest.insert(tile, loc);
                seen.insert(tile);
            } else if seen.insert(tile) {
                self.latest.insert(tile, loc);
            }
        }

        for (arg, ad) in task.args.iter().zip(&d.args) {
            if !ad.collect {
                continue;
            }
            let ri = app
                .regions
                .iter()
                .position(|r| r.name == arg.region)
                .expect("checked region");
            for &(tile, loc, _) in &accesses {
                if tile.0 == ri && self.latest.get(&tile) != Some(&loc) {
                    self.memory.free(loc, tile);
                }
            }
        }
        Ok(phase)
    }
}

/// Simulates `app` under the decisions in `table`, using `library` for
/// mapping functions.
pub fn simulate(
    app: &AppDescriptor,
    table: &DecisionTable,
    library: &FunctionLibrary,
    machine: &MachineModel,
    costs: &CostParams,
) -> Result<SimResult, SimError> {
    let eval = Evaluator::new(library, machine);
    let mut placed: BTreeMap<String, Vec<Placed>> = BTreeMap::new();
    let mut assignments = BTreeMap::new();
    for task in &app.tasks {
        let d = decision(table, task)?;
        let variant = task.variant(d.proc).ok_or_else(|| SimError::Mapping {
            task: task.name.clone(),
            message: format!("task {} has no {} variant", task.name, d.proc),
        })?;
        let points = place(&eval, machine, task, d, &placed)?;
        for (arg, ad) in task.args.iter().zip(&d.args) {
            if let Some(_req) = variant.require.iter().find(|r| !satisfies(**r, &ad.layout)) {
                return Err(SimError::LayoutMismatch {
                    task: task.name.clone(),
                    region: arg.region.clone(),
                    kind: variant.on_mismatch,
                });
            }
        }
        let mut per: BTreeMap<(ProcKind, ProcIndex), u64> = BTreeMap::new();
        for p in &points {
            *per.entry((p.proc, p.at)).or_default() += 1;
        }
        assignments.insert(task.name.clone(), per);
        placed.insert(task.name.clone(), points);
    }

    let mut run = Run {
        app,
        machine,
        costs,
        memory: Memory::default(),
        latest: BTreeMap::new(),
    };
    // The first pass warms up data placement; the second is measured and
    // stands for every iteration.
    let mut wall = 0.0;
    let mut comm = 0.0;
    let mut inter = 0.0;
    let mut intra = 0.0;
    let mut compute_time = BTreeMap::new();
    for pass in 0..2 {
        let mut busy: BTreeMap<(ProcKind, ProcIndex), f64> = BTreeMap::new();
        let mut iteration = Phase::default();
        for task in &app.tasks {
            let d = decision(table, task)?;
            let phase = run.phase(task, d, &placed[&task.name])?;
            if pass == 0 {
                continue;
            }
            let busiest = phase.compute.values().copied().fold(0.0, f64::max);
            compute_time.insert(task.name.clone(), busiest);
            for (k, v) in phase.compute {
                *busy.entry(k).or_default() += v;
            }
            for (k, v) in phase.links {
                *iteration.links.entry(k).or_default() += v;
            }
            iteration.inter += phase.inter;
            iteration.intra += phase.intra;
        }
        if pass == 1 {
            comm = iteration.comm_seconds(machine);
            wall = busy.values().copied().fold(0.0, f64::max) + comm;
            inter = iteration.inter;
            intra = iteration.intra;
        }
    }
    let iters = f64::from(app.iterations);
    let wall_time = (wall * iters).max(1e-12);
    let total_flops: f64 = app
        .tasks
        .iter()
        .map(|t| t.flops_per_point * t.points() as f64)
        .sum::<f64>()
        * iters;
    for v in compute_time.values_mut() {
        *v *= iters;
    }
    Ok(SimResult {
        metric: app.metric,
        wall_time,
        total_flops,
        throughput: total_flops / wall_time,
        compute_time,
        comm_time: comm * iters,
        inter_node_bytes: (inter * iters).round() as u64,
        intra_node_bytes: (intra * iters).round() as u64,
        peak_memory: run.memory.peak,
        assignments,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn points_are_lexicographic() {
        assert_eq!(
            domain_points(&[2, 2]),
            vec![vec![0, 0], vec![0, 1], vec![1, 0], vec![1, 1]]
        );
        assert_eq!(domain_points(&[3]).len(), 3);
    }

    #[test]
    fn tiles_scale_with_launch() {
        let r = RegionDesc {
            name: "r".into(),
            element_size: 8,
            extent: vec![64, 64],
            tiles: vec![4, 4],
        };
        assert_eq!(tiles_of(&r, &[0, 1], &[1, 2], &[4, 4]), vec![6]);
        // two launch points share each tile when the launch is finer
        assert_eq!(tiles_of(&r, &[0], &[3], &[8]), vec![4, 5, 6, 7]);
        // unlisted dimensions are read whole
        assert_eq!(tiles_of(&r, &[], &[0], &[1]).len(), 16);
    }

    #[test]
    fn alignment_rules() {
        assert!(!misaligned(None, 64));
        assert!(misaligned(Some((AlignOp::Eq, 32)), 64));
        assert!(!misaligned(Some((AlignOp::Eq, 128)), 64));
        assert!(misaligned(Some((AlignOp::Le, 16)), 64));
        assert!(!misaligned(Some((AlignOp::Ge, 256)), 64));
    }
}
