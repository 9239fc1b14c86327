//! Turns a mapper program into concrete per-task decisions for one
//! application and machine, and back.
//!
//! For every decision the most specific matching statement applies: each
//! slot written as a name, index or kind instead of `*` counts once, and
//! among equally specific statements the last one in the program wins.

use std::collections::BTreeMap;
use std::fmt;

use num_bigint::BigUint;

use crate::dsl::{
    self, AlignOp, Diagnostic, LayoutConstraint, MapperProgram, Pattern, ProcPattern, RegionPattern, Span, Spanned,
    Statement,
};
use crate::eval::FunctionLibrary;
use crate::kinds::{MemKind, ProcKind};
use crate::machine::MachineModel;
use crate::sim::app::{AppDescriptor, TaskDesc};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Packing {
    Soa,
    Aos,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Order {
    C,
    F,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct LayoutChoice {
    pub packing: Packing,
    pub order: Order,
    pub align: Option<(AlignOp, u64)>,
}

impl LayoutChoice {
    pub const DEFAULT: LayoutChoice = LayoutChoice {
        packing: Packing::Soa,
        order: Order::C,
        align: None,
    };

    /// The four layouts a search chooses between, default first.
    pub const OPTIONS: [LayoutChoice; 4] = [
        LayoutChoice::DEFAULT,
        LayoutChoice {
            packing: Packing::Soa,
            order: Order::F,
            align: None,
        },
        LayoutChoice {
            packing: Packing::Aos,
            order: Order::C,
            align: None,
        },
        LayoutChoice {
            packing: Packing::Aos,
            order: Order::F,
            align: None,
        },
    ];

    /// Applies a statement's constraints on top of the defaults.
    pub fn from_constraints(constraints: &[LayoutConstraint]) -> Self {
        let mut l = LayoutChoice::DEFAULT;
        for c in constraints {
            match *c {
                LayoutConstraint::Soa => l.packing = Packing::Soa,
                LayoutConstraint::Aos => l.packing = Packing::Aos,
                LayoutConstraint::COrder => l.order = Order::C,
                LayoutConstraint::FOrder => l.order = Order::F,
                LayoutConstraint::Align { op, bytes } => l.align = Some((op, bytes)),
                LayoutConstraint::NoAlign => l.align = None,
            }
        }
        l
    }

    pub fn constraints(&self) -> Vec<LayoutConstraint> {
        let mut cs = vec![
            match self.packing {
                Packing::Soa => LayoutConstraint::Soa,
                Packing::Aos => LayoutConstraint::Aos,
            },
            match self.order {
                Order::C => LayoutConstraint::COrder,
                Order::F => LayoutConstraint::FOrder,
            },
        ];
        if let Some((op, bytes)) = self.align {
            cs.push(LayoutConstraint::Align { op, bytes });
        }
        cs
    }
}

impl fmt::Display for LayoutChoice {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.constraints().iter().map(|c| c.to_string()).collect();
        f.write_str(&parts.join(" "))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ArgDecision {
    pub region: String,
    /// Preference order; the simulator takes the first that fits.
    pub memories: Vec<MemKind>,
    pub layout: LayoutChoice,
    pub collect: bool,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TaskDecision {
    pub task: String,
    pub proc: ProcKind,
    pub args: Vec<ArgDecision>,
    pub index_map: Option<String>,
    pub single_map: Option<String>,
    pub instance_limit: Option<u64>,
}

/// Fully resolved decisions, one entry per task in application order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DecisionTable {
    pub tasks: Vec<TaskDecision>,
}

impl DecisionTable {
    pub fn task(&self, name: &str) -> Option<&TaskDecision> {
        self.tasks.iter().find(|t| t.task == name)
    }
}

/// A resolved table with the functions and globals it refers to.
#[derive(Debug, Clone)]
pub struct Resolved {
    pub table: DecisionTable,
    pub library: FunctionLibrary,
}

fn program_span() -> Span {
    Span::new(1, 1)
}

/// Picks the winning statement among `(specificity, span, payload)`
/// candidates listed in program order.
fn winner<T>(candidates: Vec<(usize, Span, T)>) -> Option<(Span, T)> {
    let mut best: Option<(usize, Span, T)> = None;
    for c in candidates {
        if best.as_ref().is_none_or(|b| c.0 >= b.0) {
            best = Some(c);
        }
    }
    best.map(|(_, s, t)| (s, t))
}

fn exact(flags: &[bool]) -> usize {
    flags.iter().filter(|&&b| b).count()
}

pub fn resolve(
    program: &MapperProgram,
    app: &AppDescriptor,
    machine: &MachineModel,
) -> Result<Resolved, Vec<Diagnostic>> {
    let mut diags = Vec::new();
    let mut tasks = Vec::new();
    for t in &app.tasks {
        match resolve_task(program, t, machine) {
            Ok(d) => tasks.push(d),
            Err(mut e) => diags.append(&mut e),
        }
    }
    if diags.is_empty() {
        Ok(Resolved {
            table: DecisionTable { tasks },
            library: FunctionLibrary::from_program(program),
        })
    } else {
        Err(diags)
    }
}

fn stmts(program: &MapperProgram) -> impl Iterator<Item = (&Statement, Span)> {
    program
        .statements
        .iter()
        .map(|s: &Spanned<Statement>| (&s.node, s.span))
}

fn resolve_task(
    program: &MapperProgram,
    task: &TaskDesc,
    machine: &MachineModel,
) -> Result<TaskDecision, Vec<Diagnostic>> {
    let name = task.name.as_str();
    let task_stmts = stmts(program)
        .filter_map(|(s, span)| match s {
            Statement::Task { task: pat, procs } if pat.matches(name) => Some((exact(&[pat.is_exact()]), span, procs)),
            _ => None,
        })
        .collect();
    let Some((span, procs)) = winner(task_stmts) else {
        return Err(vec![Diagnostic::error(
            program_span(),
            format!("no Task statement applies to task {name}"),
        )]);
    };
    let Some(proc) = procs.iter().copied().find(|&k| machine.has(k) && task.supports(k)) else {
        return Err(vec![Diagnostic::error(
            span,
            format!("no viable processor for task {name}"),
        )]);
    };

    let mut diags = Vec::new();
    let mut args = Vec::new();
    for (i, arg) in task.args.iter().enumerate() {
        let region = arg.region.as_str();
        let mem_stmts = stmts(program)
            .filter_map(|(s, span)| match s {
                Statement::Region {
                    task: tp,
                    region: rp,
                    proc: pp,
                    memories,
                } if tp.matches(name) && rp.matches(region, i) && pp.matches(proc) => {
                    Some((exact(&[tp.is_exact(), rp.is_exact(), pp.is_exact()]), span, memories))
                }
                _ => None,
            })
            .collect();
        let memories = match winner(mem_stmts) {
            Some((_, m)) => m.clone(),
            None => {
                diags.push(Diagnostic::error(
                    program_span(),
                    format!("no Region statement applies to region {region} of task {name} on {proc}"),
                ));
                continue;
            }
        };
        let layout_stmts = stmts(program)
            .filter_map(|(s, span)| match s {
                Statement::Layout {
                    task: tp,
                    region: rp,
                    proc: pp,
                    constraints,
                } if tp.matches(name) && rp.matches(region, i) && pp.matches(proc) => {
                    Some((exact(&[tp.is_exact(), rp.is_exact(), pp.is_exact()]), span, constraints))
                }
                _ => None,
            })
            .collect();
        let layout = winner(layout_stmts)
            .map(|(_, cs)| LayoutChoice::from_constraints(cs))
            .unwrap_or(LayoutChoice::DEFAULT);
        let collect = stmts(program).any(
            |(s, _)| matches!(s, Statement::Collect { task: t, region: rp } if t == name && rp.matches(region, i)),
        );
        args.push(ArgDecision {
            region: region.to_string(),
            memories,
            layout,
            collect,
        });
    }
    if !diags.is_empty() {
        return Err(diags);
    }

    let mut index_map = None;
    let mut single_map = None;
    let mut instance_limit = None;
    for (s, _) in stmts(program) {
        match s {
            Statement::IndexTaskMap { tasks, func } if tasks.iter().any(|t| t == name) => {
                index_map = Some(func.clone())
            }
            Statement::SingleTaskMap { tasks, func } if tasks.iter().any(|t| t == name) => {
                single_map = Some(func.clone())
            }
            Statement::InstanceLimit { task: t, limit } if t == name => instance_limit = Some(*limit),
            _ => {}
        }
    }
    Ok(TaskDecision {
        task: name.to_string(),
        proc,
        args,
        index_map: if task.is_index() { index_map } else { None },
        single_map: if task.is_index() { None } else { single_map },
        instance_limit,
    })
}

/// One coordinate of the search space.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Dimension {
    pub id: String,
    pub kind: DimKind,
    pub domain: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum DimKind {
    Proc { task: usize, options: Vec<ProcKind> },
    Memory { task: usize, arg: usize },
    Layout { task: usize, arg: usize },
    IndexMap { task: usize, options: Vec<String> },
}

/// The decisions a search varies for one application on one machine:
/// processor per task, memory and layout per region argument, and index
/// mapping function per index task that lists candidates.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DecisionSpace {
    pub dims: Vec<Dimension>,
    memory_options: BTreeMap<ProcKind, Vec<MemKind>>,
}

impl DecisionSpace {
    pub fn new(app: &AppDescriptor, machine: &MachineModel) -> Result<Self, String> {
        let mut dims = Vec::new();
        let width = app.memory_options.values().map(Vec::len).max().unwrap_or(0);
        for (ti, t) in app.tasks.iter().enumerate() {
            let procs: Vec<ProcKind> = t.variants.iter().map(|v| v.proc).filter(|&p| machine.has(p)).collect();
            if procs.is_empty() {
                return Err(format!("no viable processor for task {}", t.name));
            }
            dims.push(Dimension {
                id: format!("{}.proc", t.name),
                kind: DimKind::Proc {
                    task: ti,
                    options: procs.clone(),
                },
                domain: procs.iter().map(|p| p.to_string()).collect(),
            });
            for (ai, a) in t.args.iter().enumerate() {
                let domain = (0..width)
                    .map(|k| {
                        procs
                            .iter()
                            .map(|p| format!("{p}:{}", app.memory_options[p][k]))
                            .collect::<Vec<_>>()
                            .join(",")
                    })
                    .collect();
                dims.push(Dimension {
                    id: format!("{}.arg{ai}.{}.memory", t.name, a.region),
                    kind: DimKind::Memory { task: ti, arg: ai },
                    domain,
                });
                dims.push(Dimension {
                    id: format!("{}.arg{ai}.{}.layout", t.name, a.region),
                    kind: DimKind::Layout { task: ti, arg: ai },
                    domain: LayoutChoice::OPTIONS.iter().map(|l| l.to_string()).collect(),
                });
            }
            if !t.index_map_candidates.is_empty() {
                dims.push(Dimension {
                    id: format!("{}.index_map", t.name),
                    kind: DimKind::IndexMap {
                        task: ti,
                        options: t.index_map_candidates.clone(),
                    },
                    domain: t.index_map_candidates.clone(),
                });
            }
        }
        Ok(DecisionSpace {
            dims,
            memory_options: app.memory_options.clone(),
        })
    }

    pub fn len(&self) -> usize {
        self.dims.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dims.is_empty()
    }

    pub fn domain_sizes(&self) -> Vec<usize> {
        self.dims.iter().map(|d| d.domain.len()).collect()
    }

    pub fn size(&self) -> BigUint {
        self.dims
            .iter()
            .fold(BigUint::from(1u32), |acc, d| acc * BigUint::from(d.domain.len()))
    }

    pub fn contains(&self, vector: &[usize]) -> bool {
        vector.len() == self.dims.len() && vector.iter().zip(&self.dims).all(|(&v, d)| v < d.domain.len())
    }

    /// Builds the table a vector stands for. Fields the vector does not
    /// cover take their defaults.
    pub fn table(&self, app: &AppDescriptor, vector: &[usize]) -> Result<DecisionTable, String> {
        if !self.contains(vector) {
            return Err(format!(
                "decision vector {vector:?} is outside the domains {:?}",
                self.domain_sizes()
            ));
        }
        let mut tasks: Vec<TaskDecision> = app
            .tasks
            .iter()
            .map(|t| TaskDecision {
                task: t.name.clone(),
                proc: t.variants[0].proc,
                args: t
                    .args
                    .iter()
                    .map(|a| ArgDecision {
                        region: a.region.clone(),
                        memories: Vec::new(),
                        layout: LayoutChoice::DEFAULT,
                        collect: false,
                    })
                    .collect(),
                index_map: None,
                single_map: None,
                instance_limit: None,
            })
            .collect();
        // Processor dimensions come before the memory dimensions of the
        // same task, so the memory options can use the chosen processor.
        for (d, &v) in self.dims.iter().zip(vector) {
            match &d.kind {
                DimKind::Proc { task, options } => tasks[*task].proc = options[v],
                DimKind::Memory { task, arg } => {
                    let proc = tasks[*task].proc;
                    tasks[*task].args[*arg].memories = vec![self.memory_options[&proc][v]];
                }
                DimKind::Layout { task, arg } => tasks[*task].args[*arg].layout = LayoutChoice::OPTIONS[v],
                DimKind::IndexMap { task, options } => tasks[*task].index_map = Some(options[v].clone()),
            }
        }
        Ok(DecisionTable { tasks })
    }

    /// Encodes a table as a vector, or says why it cannot be encoded.
    pub fn vector(&self, table: &DecisionTable) -> Result<Vec<usize>, String> {
        let mut out = Vec::with_capacity(self.dims.len());
        for d in &self.dims {
            let v = match &d.kind {
                DimKind::Proc { task, options } => {
                    let p = table.tasks[*task].proc;
                    options
                        .iter()
                        .position(|&o| o == p)
                        .ok_or_else(|| format!("{}: {p} is not an option", d.id))?
                }
                DimKind::Memory { task, arg } => {
                    let t = &table.tasks[*task];
                    let a = &t.args[*arg];
                    if a.collect {
                        return Err(format!("{}: collection is not part of the search space", d.id));
                    }
                    let options = &self.memory_options[&t.proc];
                    match a.memories.as_slice() {
                        [m] => options
                            .iter()
                            .position(|o| o == m)
                            .ok_or_else(|| format!("{}: {m} is not an option on {}", d.id, t.proc))?,
                        _ => return Err(format!("{}: memory list {:?} is not a single option", d.id, a.memories)),
                    }
                }
                DimKind::Layout { task, arg } => {
                    let l = table.tasks[*task].args[*arg].layout;
                    LayoutChoice::OPTIONS
                        .iter()
                        .position(|&o| o == l)
                        .ok_or_else(|| format!("{}: layout {l} is not an option", d.id))?
                }
                DimKind::IndexMap { task, options } => {
                    let f = table.tasks[*task].index_map.as_deref().unwrap_or("");
                    options
                        .iter()
                        .position(|o| o == f)
                        .ok_or_else(|| format!("{}: index map {f:?} is not an option", d.id))?
                }
            };
            out.push(v);
        }
        for (i, t) in table.tasks.iter().enumerate() {
            if t.instance_limit.is_some() || t.single_map.is_some() {
                return Err(format!(
                    "{}: limits and single-task maps are not part of the search space",
                    t.task
                ));
            }
            let has_dim = self
                .dims
                .iter()
                .any(|d| matches!(d.kind, DimKind::IndexMap { task, .. } if task == i));
            if !has_dim && t.index_map.is_some() {
                return Err(format!("{}: index map without candidates", t.task));
            }
        }
        Ok(out)
    }

    /// `(dimension id, chosen option, domain)` for each coordinate.
    pub fn describe(&self, vector: &[usize]) -> Vec<(String, String, Vec<String>)> {
        self.dims
            .iter()
            .zip(vector)
            .map(|(d, &v)| (d.id.clone(), d.domain[v].clone(), d.domain.clone()))
            .collect()
    }
}

/// Exact size with `(2^k)` appended when it is a power of two.
pub fn format_space_size(size: &BigUint) -> String {
    let bits = size.bits();
    if bits > 0 && *size == BigUint::from(1u32) << (bits - 1) {
        format!("{size} (2^{})", bits - 1)
    } else {
        size.to_string()
    }
}

/// Names of the statement groups produced by [`emit_blocks`].
pub const BLOCKS: [&str; 6] = [
    "task_decision",
    "region_decision",
    "layout_decision",
    "instance_limit_decision",
    "index_task_map_decision",
    "single_task_map_decision",
];

/// Most frequent value, ties going to the first seen.
fn most_common<T: Clone + PartialEq>(items: impl Iterator<Item = T>) -> Option<T> {
    let mut counts: Vec<(T, usize)> = Vec::new();
    for it in items {
        match counts.iter_mut().find(|(v, _)| *v == it) {
            Some((_, c)) => *c += 1,
            None => counts.push((it, 1)),
        }
    }
    let mut best: Option<(T, usize)> = None;
    for (v, c) in counts {
        if best.as_ref().is_none_or(|b| c > b.1) {
            best = Some((v, c));
        }
    }
    best.map(|(v, _)| v)
}

fn name(s: &str) -> Pattern {
    Pattern::Name(s.to_string())
}

/// Statements reproducing `table`, grouped into named blocks. The
/// functions named by index and single-task maps are copied, with what
/// they depend on, from `library`.
pub fn emit_blocks(table: &DecisionTable, library: &FunctionLibrary) -> Vec<(&'static str, Vec<Statement>)> {
    let mut task_block = Vec::new();
    if let Some(common) = most_common(table.tasks.iter().map(|t| t.proc)) {
        task_block.push(Statement::Task {
            task: Pattern::Any,
            procs: vec![common],
        });
        for t in table.tasks.iter().filter(|t| t.proc != common) {
            task_block.push(Statement::Task {
                task: name(&t.task),
                procs: vec![t.proc],
            });
        }
    }

    let mut region_block = Vec::new();
    let mut procs: Vec<ProcKind> = table.tasks.iter().map(|t| t.proc).collect();
    procs.sort();
    procs.dedup();
    for proc in procs {
        let on_proc = || table.tasks.iter().filter(move |t| t.proc == proc);
        let Some(common) = most_common(on_proc().flat_map(|t| t.args.iter().map(|a| a.memories.clone()))) else {
            continue;
        };
        region_block.push(Statement::Region {
            task: Pattern::Any,
            region: RegionPattern::Any,
            proc: ProcPattern::Kind(proc),
            memories: common.clone(),
        });
        for t in on_proc() {
            for (i, a) in t.args.iter().enumerate() {
                if a.memories != common {
                    region_block.push(Statement::Region {
                        task: name(&t.task),
                        region: RegionPattern::Index(i as u32),
                        proc: ProcPattern::Kind(proc),
                        memories: a.memories.clone(),
                    });
                }
            }
        }
    }

    let mut layout_block = Vec::new();
    let common =
        most_common(table.tasks.iter().flat_map(|t| t.args.iter().map(|a| a.layout))).unwrap_or(LayoutChoice::DEFAULT);
    layout_block.push(Statement::Layout {
        task: Pattern::Any,
        region: RegionPattern::Any,
        proc: ProcPattern::Any,
        constraints: common.constraints(),
    });
    for t in &table.tasks {
        for (i, a) in t.args.iter().enumerate() {
            if a.layout != common {
                layout_block.push(Statement::Layout {
                    task: name(&t.task),
                    region: RegionPattern::Index(i as u32),
                    proc: ProcPattern::Any,
                    constraints: a.layout.constraints(),
                });
            }
        }
    }

    let mut limit_block = Vec::new();
    for t in &table.tasks {
        if let Some(limit) = t.instance_limit {
            limit_block.push(Statement::InstanceLimit {
                task: t.task.clone(),
                limit,
            });
        }
        for (i, a) in t.args.iter().enumerate() {
            if a.collect {
                limit_block.push(Statement::Collect {
                    task: t.task.clone(),
                    region: RegionPattern::Index(i as u32),
                });
            }
        }
    }

    let map_block = |pick: fn(&TaskDecision) -> Option<&String>, index: bool| {
        let mut funcs: Vec<&str> = Vec::new();
        for t in &table.tasks {
            if let Some(f) = pick(t) {
                if !funcs.contains(&f.as_str()) {
                    funcs.push(f);
                }
            }
        }
        let mut block = library.closure_of(&funcs);
        for f in funcs {
            let tasks: Vec<String> = table
                .tasks
                .iter()
                .filter(|t| pick(t).map(String::as_str) == Some(f))
                .map(|t| t.task.clone())
                .collect();
            block.push(if index {
                Statement::IndexTaskMap {
                    tasks,
                    func: f.to_string(),
                }
            } else {
                Statement::SingleTaskMap {
                    tasks,
                    func: f.to_string(),
                }
            });
        }
        block
    };
    let index_block = map_block(|t| t.index_map.as_ref(), true);
    let mut single_block = map_block(|t| t.single_map.as_ref(), false);
    // Definitions already emitted for index maps are not repeated.
    single_block.retain(|s| match s {
        Statement::Global { name, .. } => !index_block
            .iter()
            .any(|x| matches!(x, Statement::Global { name: n, .. } if n == name)),
        Statement::FuncDef(f) => !index_block
            .iter()
            .any(|x| matches!(x, Statement::FuncDef(g) if g.name == f.name)),
        _ => true,
    });

    BLOCKS
        .into_iter()
        .zip([
            task_block,
            region_block,
            layout_block,
            limit_block,
            index_block,
            single_block,
        ])
        .collect()
}

pub fn emit(table: &DecisionTable, library: &FunctionLibrary) -> MapperProgram {
    let statements = emit_blocks(table, library)
        .into_iter()
        .flat_map(|(_, b)| b)
        .map(|s| Spanned::new(s, Span::default()))
        .collect();
    MapperProgram { statements }
}

/// Emitted blocks as DSL text, keyed by block name.
pub fn emit_text_blocks(table: &DecisionTable, library: &FunctionLibrary) -> Vec<(String, String)> {
    emit_blocks(table, library)
        .into_iter()
        .map(|(n, stmts)| {
            let program = MapperProgram {
                statements: stmts.into_iter().map(|s| Spanned::new(s, Span::default())).collect(),
            };
            (n.to_string(), dsl::print(&program))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn app() -> AppDescriptor {
        toml::from_str(
            r#"
            name = "tiny"
            [[region]]
            name = "a"
            element_size = 8
            extent = [64]
            [[region]]
            name = "ghost"
            element_size = 8
            extent = [8]
            [[task]]
            name = "work"
            launch = [4]
            flops_per_point = 1.0
            index_map_candidates = ["cyclic2D", "block2D"]
            [[task.variant]]
            proc = "GPU"
            [[task.variant]]
            proc = "CPU"
            [[task.arg]]
            region = "a"
            [[task.arg]]
            region = "ghost"
            [[task]]
            name = "io"
            flops_per_point = 1.0
            [[task.variant]]
            proc = "CPU"
            [[task.arg]]
            region = "a"
            "#,
        )
        .unwrap()
    }

    fn machine() -> MachineModel {
        let mut m = MachineModel::uniform(ProcKind::Gpu, 2, 4);
        m.processors.insert(ProcKind::Cpu, 1);
        m
    }

    fn table(src: &str) -> DecisionTable {
        resolve(&dsl::parse(src).unwrap(), &app(), &machine()).unwrap().table
    }

    #[test]
    fn first_supported_processor_wins() {
        let t = table("Task * GPU,CPU;\nRegion * * * SYSMEM;");
        assert_eq!(t.task("work").unwrap().proc, ProcKind::Gpu);
        assert_eq!(t.task("io").unwrap().proc, ProcKind::Cpu);
    }

    #[test]
    fn specific_statements_beat_wildcards_in_any_order() {
        let a = table("Region * ghost GPU ZCMEM;\nRegion * * GPU FBMEM;\nRegion * * CPU SYSMEM;\nTask * GPU,CPU;");
        assert_eq!(a.task("work").unwrap().args[1].memories, vec![MemKind::Zcmem]);
        assert_eq!(a.task("work").unwrap().args[0].memories, vec![MemKind::Fbmem]);
    }

    #[test]
    fn equal_specificity_last_wins() {
        let t = table("Task * GPU,CPU;\nRegion * * * FBMEM;\nRegion * * * ZCMEM;");
        assert_eq!(t.task("work").unwrap().args[0].memories, vec![MemKind::Zcmem]);
    }

    #[test]
    fn region_proc_slot_is_a_guard() {
        let t = table("Task * GPU,CPU;\nRegion * * GPU FBMEM;\nRegion * * CPU SYSMEM;");
        assert_eq!(t.task("io").unwrap().args[0].memories, vec![MemKind::Sysmem]);
    }

    #[test]
    fn missing_decisions_are_diagnosed() {
        let p = dsl::parse("Task * GPU;\nRegion * * GPU FBMEM;").unwrap();
        let errs = resolve(&p, &app(), &machine()).unwrap_err();
        assert_eq!(errs.len(), 1);
        assert_eq!(errs[0].message, "no viable processor for task io");
        let p = dsl::parse("Region * * * FBMEM;").unwrap();
        assert!(resolve(&p, &app(), &machine()).is_err());
    }

    #[test]
    fn layout_defaults_and_overrides() {
        let t = table("Task * GPU,CPU;\nRegion * * * SYSMEM;\nLayout * * * AOS;\nLayout work 1 GPU F_order;");
        let w = t.task("work").unwrap();
        assert_eq!(w.args[0].layout.packing, Packing::Aos);
        // The winning statement alone decides; unspecified fields default.
        assert_eq!(
            w.args[1].layout,
            LayoutChoice {
                order: Order::F,
                ..LayoutChoice::DEFAULT
            }
        );
    }

    #[test]
    fn last_index_map_wins() {
        let t = table(
            "Task * GPU,CPU;\nRegion * * * SYSMEM;\nIndexTaskMap work f;\nIndexTaskMap work g;\nInstanceLimit work 4;",
        );
        let w = t.task("work").unwrap();
        assert_eq!(w.index_map.as_deref(), Some("g"));
        assert_eq!(w.instance_limit, Some(4));
    }

    #[test]
    fn space_size_and_vector_round_trip() {
        let space = DecisionSpace::new(&app(), &machine()).unwrap();
        // work: proc 2, 2 args x (2 x 4), index map 2; io: proc 1, 1 arg x (2 x 4)
        assert_eq!(space.size(), BigUint::from(2u32 * 64 * 2 * 8));
        let v: Vec<usize> = space.domain_sizes().iter().map(|s| s - 1).collect();
        let t = space.table(&app(), &v).unwrap();
        assert_eq!(space.vector(&t).unwrap(), v);
    }

    #[test]
    fn emit_then_resolve_is_identity() {
        let space = DecisionSpace::new(&app(), &machine()).unwrap();
        let lib = crate::eval::builtin_library();
        for v in [vec![0; space.len()], vec![1, 1, 3, 0, 2, 1, 0, 1, 1]] {
            let t = space.table(&app(), &v).unwrap();
            let program = emit(&t, &lib);
            let text = dsl::print(&program);
            let reparsed = dsl::check(&text).unwrap();
            let back = resolve(&reparsed, &app(), &machine()).unwrap().table;
            assert_eq!(back, t, "{text}");
        }
    }

    #[test]
    fn power_of_two_formatting() {
        assert_eq!(format_space_size(&(BigUint::from(1u32) << 38)), "274877906944 (2^38)");
        assert_eq!(format_space_size(&BigUint::from(2u32)), "2 (2^1)");
        assert_eq!(format_space_size(&BigUint::from(12u32)), "12");
    }
}
