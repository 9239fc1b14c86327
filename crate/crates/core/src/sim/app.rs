//! Application descriptors: tasks, their region arguments and launch
//! domains, and how data moves between launch points.

use std::collections::BTreeMap;

use serde::Deserialize;

use crate::kinds::{MemKind, ProcKind};

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AppDescriptor {
    pub name: String,
    #[serde(default)]
    pub metric: Metric,
    #[serde(default = "one")]
    pub iterations: u32,
    /// Memories a region argument may be placed in, per processor kind.
    /// Position `k` of every list is option `k` of a memory decision.
    #[serde(default = "default_memory_options")]
    pub memory_options: BTreeMap<ProcKind, Vec<MemKind>>,
    #[serde(rename = "region", default)]
    pub regions: Vec<RegionDesc>,
    #[serde(rename = "task")]
    pub tasks: Vec<TaskDesc>,
}

fn one() -> u32 {
    1
}

fn unit() -> f64 {
    1.0
}

pub fn default_memory_options() -> BTreeMap<ProcKind, Vec<MemKind>> {
    BTreeMap::from([
        (ProcKind::Gpu, vec![MemKind::Fbmem, MemKind::Zcmem]),
        (ProcKind::Cpu, vec![MemKind::Sysmem, MemKind::Zcmem]),
        (ProcKind::Omp, vec![MemKind::Sysmem, MemKind::Zcmem]),
    ])
}

/// How performance is reported: elapsed time or floating-point throughput.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Metric {
    #[default]
    Time,
    Gflops,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegionDesc {
    pub name: String,
    /// Bytes per element.
    pub element_size: u64,
    /// Elements along each dimension.
    pub extent: Vec<u64>,
    /// Number of tiles along each tiled dimension. Empty means the region
    /// is one piece.
    #[serde(default)]
    pub tiles: Vec<u64>,
}

impl RegionDesc {
    pub fn footprint(&self) -> u64 {
        self.element_size * self.extent.iter().product::<u64>()
    }

    pub fn tile_count(&self) -> u64 {
        self.tiles.iter().product::<u64>().max(1)
    }

    pub fn tile_bytes(&self) -> u64 {
        self.footprint().div_ceil(self.tile_count())
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TaskDesc {
    pub name: String,
    /// Extents of the launch domain. Empty for a single (non-index) task.
    #[serde(default)]
    pub launch: Vec<i64>,
    pub flops_per_point: f64,
    /// Index mapping functions a search may choose between.
    #[serde(default)]
    pub index_map_candidates: Vec<String>,
    /// Task that launches this one, for `task.parent`.
    #[serde(default)]
    pub parent: Option<String>,
    /// All points must be resident at once; an instance limit below the
    /// points per processor makes the run fail.
    #[serde(default)]
    pub concurrent: bool,
    #[serde(rename = "variant")]
    pub variants: Vec<VariantDesc>,
    #[serde(rename = "arg", default)]
    pub args: Vec<ArgDesc>,
}

impl TaskDesc {
    pub fn is_index(&self) -> bool {
        !self.launch.is_empty()
    }

    /// Launch domain; a single task is a one-point domain.
    pub fn domain(&self) -> Vec<i64> {
        if self.launch.is_empty() {
            vec![1]
        } else {
            self.launch.clone()
        }
    }

    pub fn points(&self) -> i64 {
        self.domain().iter().product()
    }

    pub fn variant(&self, proc: ProcKind) -> Option<&VariantDesc> {
        self.variants.iter().find(|v| v.proc == proc)
    }

    pub fn supports(&self, proc: ProcKind) -> bool {
        self.variant(proc).is_some()
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VariantDesc {
    pub proc: ProcKind,
    /// Layout the variant's kernel was written for, e.g. `["SOA"]`.
    #[serde(default)]
    pub require: Vec<LayoutRequirement>,
    /// Which runtime failure a layout mismatch produces.
    #[serde(default)]
    pub on_mismatch: MismatchKind,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
pub enum LayoutRequirement {
    #[serde(rename = "SOA")]
    Soa,
    #[serde(rename = "AOS")]
    Aos,
    #[serde(rename = "C_order")]
    COrder,
    #[serde(rename = "F_order")]
    FOrder,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MismatchKind {
    #[default]
    Stride,
    Dgemm,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Deserialize)]
pub enum AccessOrder {
    #[default]
    C,
    F,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArgDesc {
    pub region: String,
    /// Launch axes selecting this point's tile, one per leading tiled
    /// region dimension; dimensions past the list are read whole.
    /// Defaults to the leading launch axes.
    #[serde(default)]
    pub tile_axes: Option<Vec<usize>>,
    /// The point writes its tile.
    #[serde(default)]
    pub write: bool,
    /// Traversal order of the kernel over this argument.
    #[serde(default)]
    pub access_order: AccessOrder,
    /// Neighbour reads: each point also reads part of the tile held by the
    /// points at these offsets.
    #[serde(rename = "exchange", default)]
    pub exchanges: Vec<Exchange>,
    /// Each point reads the tiles of every point that differs from it only
    /// along this launch axis.
    #[serde(default)]
    pub all_to_all_axis: Option<usize>,
    #[serde(default = "unit")]
    pub all_to_all_fraction: f64,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Exchange {
    pub offsets: Vec<Vec<i64>>,
    #[serde(default)]
    pub periodic: bool,
    /// Share of the neighbour's tile that is read.
    #[serde(default = "unit")]
    pub fraction: f64,
}

impl AppDescriptor {
    pub fn task(&self, name: &str) -> Option<&TaskDesc> {
        self.tasks.iter().find(|t| t.name == name)
    }

    pub fn region(&self, name: &str) -> Option<&RegionDesc> {
        self.regions.iter().find(|r| r.name == name)
    }

    pub fn arg_count(&self) -> usize {
        self.tasks.iter().map(|t| t.args.len()).sum()
    }

    /// Tile axes of an argument after applying the default.
    pub fn tile_axes(&self, task: &TaskDesc, arg: &ArgDesc) -> Vec<usize> {
        match &arg.tile_axes {
            Some(axes) => axes.clone(),
            None => {
                let rank = self.region(&arg.region).map_or(0, |r| r.tiles.len());
                (0..rank.min(task.launch.len())).collect()
            }
        }
    }

    /// Every consistency problem, each prefixed with its field path.
    // written as !(x > 0) so NaN fails too
    #[allow(clippy::neg_cmp_op_on_partial_ord)]
    pub fn check(&self) -> Vec<String> {
        let mut problems = Vec::new();
        if self.name.trim().is_empty() {
            problems.push("name: must not be empty".to_string());
        }
        if self.iterations == 0 {
            problems.push("iterations: must be positive".to_string());
        }
        let lens: Vec<usize> = self.memory_options.values().map(Vec::len).collect();
        if lens.windows(2).any(|w| w[0] != w[1]) || lens.contains(&0) {
            problems.push("memory_options: every list must be nonempty and of the same length".into());
        }
        for (proc, mems) in &self.memory_options {
            for m in mems {
                if !proc.can_access(*m) {
                    problems.push(format!("memory_options.{proc}: {proc} cannot access {m}"));
                }
            }
        }
        let mut seen = std::collections::HashSet::new();
        for (i, r) in self.regions.iter().enumerate() {
            let at = format!("region[{i}]");
            if !seen.insert(r.name.as_str()) {
                problems.push(format!("{at}.name: duplicate region {}", r.name));
            }
            if r.element_size == 0 {
                problems.push(format!("{at}.element_size: must be positive"));
            }
            if r.extent.is_empty() || r.extent.contains(&0) {
                problems.push(format!("{at}.extent: non-positive extent"));
            }
            if r.tiles.contains(&0) {
                problems.push(format!("{at}.tiles: must be positive"));
            }
        }
        if self.tasks.is_empty() {
            problems.push("task: at least one task is required".into());
        }
        let mut seen = std::collections::HashSet::new();
        for (i, t) in self.tasks.iter().enumerate() {
            let at = format!("task[{i}]");
            if !seen.insert(t.name.as_str()) {
                problems.push(format!("{at}.name: duplicate task {}", t.name));
            }
            if t.launch.iter().any(|&e| e <= 0) {
                problems.push(format!("{at}.launch: non-positive extent"));
            }
            if !(t.flops_per_point >= 0.0) {
                problems.push(format!("{at}.flops_per_point: must not be negative"));
            }
            if t.variants.is_empty() {
                problems.push(format!("{at}.variant: at least one variant is required"));
            }
            let mut procs = std::collections::HashSet::new();
            for v in &t.variants {
                if !procs.insert(v.proc) {
                    problems.push(format!("{at}.variant: duplicate variant for {}", v.proc));
                }
                if !self.memory_options.contains_key(&v.proc) {
                    problems.push(format!("{at}.variant: no memory_options for {}", v.proc));
                }
            }
            if let Some(p) = &t.parent {
                if self.task(p).is_none() {
                    problems.push(format!("{at}.parent: unknown task {p}"));
                }
            }
            if !t.index_map_candidates.is_empty() && !t.is_index() {
                problems.push(format!("{at}.index_map_candidates: only index tasks have index maps"));
            }
            let rank = t.launch.len();
            for (j, a) in t.args.iter().enumerate() {
                let at = format!("{at}.arg[{j}]");
                let Some(region) = self.region(&a.region) else {
                    problems.push(format!("{at}.region: unknown region {}", a.region));
                    continue;
                };
                let axes = self.tile_axes(t, a);
                if axes.len() > region.tiles.len() {
                    problems.push(format!(
                        "{at}.tile_axes: region {} has {} tiled dimensions",
                        region.name,
                        region.tiles.len()
                    ));
                }
                if axes.iter().any(|&x| x >= rank) {
                    problems.push(format!("{at}.tile_axes: axis outside the launch domain"));
                }
                for (k, ex) in a.exchanges.iter().enumerate() {
                    if ex.offsets.iter().any(|o| o.len() != rank) {
                        problems.push(format!("{at}.exchange[{k}].offsets: must have {rank} entries"));
                    }
                    if !(ex.fraction >= 0.0) {
                        problems.push(format!("{at}.exchange[{k}].fraction: must not be negative"));
                    }
                }
                if a.all_to_all_axis.is_some_and(|x| x >= rank) {
                    problems.push(format!("{at}.all_to_all_axis: axis outside the launch domain"));
                }
            }
        }
        problems
    }
}
