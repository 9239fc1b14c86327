//! Machine description and processor spaces.
//!
//! A processor space starts as the 2-D grid `(nodes, processors per node)`
//! for one processor kind. `split`, `merge`, `swap` and `slice` reshape it;
//! the steps are kept symbolically and undone one by one when an index is
//! looked up.

use std::collections::BTreeMap;
use std::fmt;

use serde::Deserialize;
use thiserror::Error;

use crate::kinds::{MemKind, ProcKind};

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MachineModel {
    pub name: String,
    pub nodes: u32,
    /// Processors of each kind on every node. Missing kinds have none.
    pub processors: BTreeMap<ProcKind, u32>,
    /// Capacity in bytes of one memory of each kind. Framebuffer memory is
    /// per GPU; the other kinds are per node.
    pub memory: BTreeMap<MemKind, u64>,
    /// Floating-point operations per second of one processor.
    pub compute_rate: BTreeMap<ProcKind, f64>,
    /// Seconds of fixed cost for launching one point task.
    pub launch_overhead: BTreeMap<ProcKind, f64>,
    pub bandwidth: Bandwidth,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Bandwidth {
    /// Bytes per second between two memories on the same node.
    pub same_node: f64,
    /// Bytes per second between memories on different nodes.
    pub cross_node: f64,
    /// Overrides for particular memory pairs. Symmetric in `a` and `b`.
    #[serde(default)]
    pub links: Vec<Link>,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Link {
    pub a: MemKind,
    pub b: MemKind,
    pub same_node: bool,
    pub bytes_per_second: f64,
}

impl MachineModel {
    pub fn count(&self, kind: ProcKind) -> u32 {
        self.processors.get(&kind).copied().unwrap_or(0)
    }

    pub fn has(&self, kind: ProcKind) -> bool {
        self.count(kind) > 0
    }

    pub fn total(&self, kind: ProcKind) -> u32 {
        self.nodes * self.count(kind)
    }

    pub fn capacity(&self, mem: MemKind) -> u64 {
        self.memory.get(&mem).copied().unwrap_or(0)
    }

    pub fn rate(&self, kind: ProcKind) -> f64 {
        self.compute_rate.get(&kind).copied().unwrap_or(0.0)
    }

    pub fn overhead(&self, kind: ProcKind) -> f64 {
        self.launch_overhead.get(&kind).copied().unwrap_or(0.0)
    }

    pub fn bandwidth(&self, a: MemKind, b: MemKind, same_node: bool) -> f64 {
        self.bandwidth
            .links
            .iter()
            .find(|l| l.same_node == same_node && ((l.a == a && l.b == b) || (l.a == b && l.b == a)))
            .map(|l| l.bytes_per_second)
            .unwrap_or(if same_node {
                self.bandwidth.same_node
            } else {
                self.bandwidth.cross_node
            })
    }

    /// Every problem with the numbers in this description.
    // written as !(x > 0) so NaN fails too
    #[allow(clippy::neg_cmp_op_on_partial_ord)]
    pub fn check(&self) -> Vec<String> {
        let mut problems = Vec::new();
        if self.nodes == 0 {
            problems.push("nodes: must be positive".to_string());
        }
        if self.processors.values().all(|&c| c == 0) {
            problems.push("processors: machine has no processors".to_string());
        }
        for (&kind, &count) in &self.processors {
            if count == 0 {
                continue;
            }
            if !(self.rate(kind) > 0.0) {
                problems.push(format!("compute_rate.{kind}: must be positive"));
            }
            if !(self.overhead(kind) >= 0.0) {
                problems.push(format!("launch_overhead.{kind}: must not be negative"));
            }
        }
        for (mem, &cap) in &self.memory {
            if cap == 0 {
                problems.push(format!("memory.{mem}: must be positive"));
            }
        }
        let bws = [
            ("bandwidth.same_node", self.bandwidth.same_node),
            ("bandwidth.cross_node", self.bandwidth.cross_node),
        ];
        for (path, bw) in bws {
            if !(bw > 0.0) {
                problems.push(format!("{path}: must be positive"));
            }
        }
        for (i, l) in self.bandwidth.links.iter().enumerate() {
            if !(l.bytes_per_second > 0.0) {
                problems.push(format!("bandwidth.links[{i}].bytes_per_second: must be positive"));
            }
        }
        problems
    }

    /// A small machine with `nodes` nodes and `per_node` processors of
    /// `kind`, mainly for tests.
    pub fn uniform(kind: ProcKind, nodes: u32, per_node: u32) -> MachineModel {
        MachineModel {
            name: format!("{nodes}x{per_node}-{kind}"),
            nodes,
            processors: BTreeMap::from([(kind, per_node)]),
            memory: BTreeMap::new(),
            compute_rate: BTreeMap::from([(kind, 1e9)]),
            launch_overhead: BTreeMap::from([(kind, 0.0)]),
            bandwidth: Bandwidth {
                same_node: 1e9,
                cross_node: 1e9,
                links: Vec::new(),
            },
        }
    }
}

/// A processor identified by node and position among the node's
/// processors of its kind.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ProcIndex {
    pub node: u32,
    pub local: u32,
}

impl fmt::Display for ProcIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {})", self.node, self.local)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum TransformStep {
    Split { dim: usize, factor: i64 },
    Merge { p: usize, q: usize },
    Swap { p: usize, q: usize },
    Slice { dim: usize, low: i64, high: i64 },
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SpaceError {
    #[error("no processors of kind {0}")]
    NoProcessors(ProcKind),
    #[error("dimension {dim} out of range for processor space of rank {rank}")]
    BadDim { dim: usize, rank: usize },
    #[error("split factor does not divide extent: {factor} into {extent}")]
    SplitFactor { factor: i64, extent: i64 },
    #[error("merge requires p < q, got p = {p}, q = {q}")]
    MergeOrder { p: usize, q: usize },
    #[error("slice bounds out of range: [{low}, {high}] on extent {extent}")]
    SliceBounds { low: i64, high: i64, extent: i64 },
    #[error("decompose needs a nonempty shape of positive entries")]
    DecomposeShape,
    #[error("processor space of rank {rank} indexed with {got} subscripts")]
    Arity { rank: usize, got: usize },
    #[error("Slice processor index out of bound: index {index} on space of size {dims}")]
    OutOfBound { index: String, dims: String },
}

fn tuple_text(v: &[i64]) -> String {
    let items: Vec<String> = v.iter().map(|x| x.to_string()).collect();
    format!("({})", items.join(", "))
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct ProcessorSpace {
    kind: ProcKind,
    base: [i64; 2],
    dims: Vec<i64>,
    /// Each step together with the extents it was applied to.
    chain: Vec<(TransformStep, Vec<i64>)>,
}

impl ProcessorSpace {
    pub fn machine(model: &MachineModel, kind: ProcKind) -> Result<Self, SpaceError> {
        Self::base(kind, model.nodes, model.count(kind))
    }

    pub fn base(kind: ProcKind, nodes: u32, per_node: u32) -> Result<Self, SpaceError> {
        if nodes == 0 || per_node == 0 {
            return Err(SpaceError::NoProcessors(kind));
        }
        let base = [nodes as i64, per_node as i64];
        Ok(ProcessorSpace {
            kind,
            base,
            dims: base.to_vec(),
            chain: Vec::new(),
        })
    }

    pub fn kind(&self) -> ProcKind {
        self.kind
    }

    pub fn dims(&self) -> &[i64] {
        &self.dims
    }

    pub fn rank(&self) -> usize {
        self.dims.len()
    }

    pub fn volume(&self) -> i64 {
        self.dims.iter().product()
    }

    pub fn chain(&self) -> impl Iterator<Item = &TransformStep> {
        self.chain.iter().map(|(s, _)| s)
    }

    fn check_dim(&self, dim: usize) -> Result<(), SpaceError> {
        if dim < self.rank() {
            Ok(())
        } else {
            Err(SpaceError::BadDim { dim, rank: self.rank() })
        }
    }

    fn push(&self, step: TransformStep, dims: Vec<i64>) -> Self {
        let mut next = self.clone();
        next.chain.push((step, self.dims.clone()));
        next.dims = dims;
        next
    }

    pub fn split(&self, dim: usize, factor: i64) -> Result<Self, SpaceError> {
        self.check_dim(dim)?;
        let extent = self.dims[dim];
        if factor <= 0 || extent % factor != 0 {
            return Err(SpaceError::SplitFactor { factor, extent });
        }
        let mut dims = self.dims.clone();
        dims[dim] = factor;
        dims.insert(dim + 1, extent / factor);
        Ok(self.push(TransformStep::Split { dim, factor }, dims))
    }

    pub fn merge(&self, p: usize, q: usize) -> Result<Self, SpaceError> {
        self.check_dim(p)?;
        self.check_dim(q)?;
        if p >= q {
            return Err(SpaceError::MergeOrder { p, q });
        }
        let mut dims = self.dims.clone();
        dims[p] *= dims[q];
        dims.remove(q);
        Ok(self.push(TransformStep::Merge { p, q }, dims))
    }

    pub fn swap(&self, p: usize, q: usize) -> Result<Self, SpaceError> {
        self.check_dim(p)?;
        self.check_dim(q)?;
        let mut dims = self.dims.clone();
        dims.swap(p, q);
        Ok(self.push(TransformStep::Swap { p, q }, dims))
    }

    pub fn slice(&self, dim: usize, low: i64, high: i64) -> Result<Self, SpaceError> {
        self.check_dim(dim)?;
        let extent = self.dims[dim];
        if low < 0 || low > high || high >= extent {
            return Err(SpaceError::SliceBounds { low, high, extent });
        }
        let mut dims = self.dims.clone();
        dims[dim] = high - low + 1;
        Ok(self.push(TransformStep::Slice { dim, low, high }, dims))
    }

    /// Replaces dimension `dim` by `shape.len()` dimensions whose extents
    /// multiply to the old extent. Prime factors of the extent, largest
    /// first, go one at a time to the dimension whose `shape` entry is
    /// least covered so far (ties to the lowest position). The new extents
    /// are produced by a chain of splits, so the first new dimension varies
    /// fastest.
    pub fn decompose(&self, dim: usize, shape: &[i64]) -> Result<Self, SpaceError> {
        self.check_dim(dim)?;
        if shape.is_empty() || shape.iter().any(|&s| s <= 0) {
            return Err(SpaceError::DecomposeShape);
        }
        let parts = decompose_extent(self.dims[dim], shape);
        let mut space = self.clone();
        for (k, &part) in parts.iter().enumerate().take(parts.len() - 1) {
            space = space.split(dim + k, part)?;
        }
        Ok(space)
    }

    /// Maps an index of this space back to the processor it names.
    pub fn lookup(&self, index: &[i64]) -> Result<ProcIndex, SpaceError> {
        self.check_index(index)?;
        let mut idx = index.to_vec();
        for (step, before) in self.chain.iter().rev() {
            idx = undo(step, before, &idx);
        }
        debug_assert!(idx[0] < self.base[0] && idx[1] < self.base[1]);
        Ok(ProcIndex {
            node: idx[0] as u32,
            local: idx[1] as u32,
        })
    }

    pub fn check_index(&self, index: &[i64]) -> Result<(), SpaceError> {
        if index.len() != self.rank() {
            return Err(SpaceError::Arity {
                rank: self.rank(),
                got: index.len(),
            });
        }
        if index.iter().zip(&self.dims).any(|(&a, &d)| a < 0 || a >= d) {
            return Err(SpaceError::OutOfBound {
                index: tuple_text(index),
                dims: tuple_text(&self.dims),
            });
        }
        Ok(())
    }

    /// All indices in lexicographic order (last dimension fastest).
    pub fn indices(&self) -> impl Iterator<Item = Vec<i64>> + '_ {
        let total = self.volume();
        (0..total).map(move |mut flat| {
            let mut idx = vec![0; self.rank()];
            for k in (0..self.rank()).rev() {
                idx[k] = flat % self.dims[k];
                flat /= self.dims[k];
            }
            idx
        })
    }

    /// The index of this space that names `proc`, if any.
    pub fn position_of(&self, proc: ProcIndex) -> Option<Vec<i64>> {
        self.indices().find(|idx| self.lookup(idx).ok() == Some(proc))
    }
}

/// Extents assigned to each shape entry by `decompose`.
pub fn decompose_extent(extent: i64, shape: &[i64]) -> Vec<i64> {
    let mut parts = vec![1i64; shape.len()];
    for f in prime_factors_desc(extent) {
        let mut best = 0;
        for j in 1..shape.len() {
            // shape[j] / parts[j] > shape[best] / parts[best]
            if shape[j] * parts[best] > shape[best] * parts[j] {
                best = j;
            }
        }
        parts[best] *= f;
    }
    parts
}

fn prime_factors_desc(mut n: i64) -> Vec<i64> {
    let mut out = Vec::new();
    let mut p = 2;
    while p * p <= n {
        while n % p == 0 {
            out.push(p);
            n /= p;
        }
        p += 1;
    }
    if n > 1 {
        out.push(n);
    }
    out.reverse();
    out
}

/// Index in the space before `step` for index `a` in the space after it.
fn undo(step: &TransformStep, before: &[i64], a: &[i64]) -> Vec<i64> {
    match *step {
        TransformStep::Split { dim, factor } => {
            let mut b = Vec::with_capacity(a.len() - 1);
            b.extend_from_slice(&a[..dim]);
            b.push(a[dim] + a[dim + 1] * factor);
            b.extend_from_slice(&a[dim + 2..]);
            b
        }
        TransformStep::Merge { p, q } => {
            let size_p = before[p];
            let mut b = Vec::with_capacity(a.len() + 1);
            for t in 0..before.len() {
                b.push(if t == p {
                    a[p] % size_p
                } else if t == q {
                    a[p] / size_p
                } else if t < q {
                    a[t]
                } else {
                    a[t - 1]
                });
            }
            b
        }
        TransformStep::Swap { p, q } => {
            let mut b = a.to_vec();
            b.swap(p, q);
            b
        }
        TransformStep::Slice { dim, low, .. } => {
            let mut b = a.to_vec();
            b[dim] += low;
            b
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn space(n: u32, c: u32) -> ProcessorSpace {
        ProcessorSpace::base(ProcKind::Gpu, n, c).unwrap()
    }

    fn at(node: u32, local: u32) -> ProcIndex {
        ProcIndex { node, local }
    }

    #[test]
    fn machine_space_has_node_and_local_dims() {
        let m = MachineModel::uniform(ProcKind::Gpu, 2, 4);
        assert_eq!(ProcessorSpace::machine(&m, ProcKind::Gpu).unwrap().dims(), &[2, 4]);
        assert_eq!(
            ProcessorSpace::machine(&m, ProcKind::Cpu).unwrap_err().to_string(),
            "no processors of kind CPU"
        );
    }

    #[test]
    fn split_then_merge_reshapes_back() {
        let s = space(8, 8).split(0, 2).unwrap();
        assert_eq!(s.dims(), &[2, 4, 8]);
        assert_eq!(s.lookup(&[1, 3, 5]).unwrap(), at(7, 5));
        let m = s.merge(0, 1).unwrap();
        assert_eq!(m.dims(), &[8, 8]);
        assert_eq!(m.lookup(&[5, 3]).unwrap(), at(5, 3));
    }

    #[test]
    fn merge_lookup_uses_modulo_and_quotient() {
        // Merge directly on a 3-d space: (5, 3) -> (5 % 2, 5 / 2, 3).
        let s = space(8, 8).split(0, 2).unwrap();
        let before = s.dims().to_vec();
        assert_eq!(
            undo(&TransformStep::Merge { p: 0, q: 1 }, &before, &[5, 3]),
            vec![1, 2, 3]
        );
        let m = space(2, 2).merge(0, 1).unwrap();
        assert_eq!(m.lookup(&[3]).unwrap(), at(1, 1));
    }

    #[test]
    fn swap_and_slice() {
        let s = space(2, 4).swap(0, 1).unwrap();
        assert_eq!(s.dims(), &[4, 2]);
        assert_eq!(s.lookup(&[3, 1]).unwrap(), at(1, 3));
        let sl = space(8, 8).slice(0, 2, 5).unwrap();
        assert_eq!(sl.dims(), &[4, 8]);
        assert_eq!(sl.lookup(&[0, 6]).unwrap(), at(2, 6));
    }

    #[test]
    fn transform_errors() {
        assert!(space(8, 8)
            .split(0, 3)
            .unwrap_err()
            .to_string()
            .contains("split factor does not divide extent"));
        assert!(space(8, 8)
            .merge(1, 0)
            .unwrap_err()
            .to_string()
            .contains("merge requires p < q"));
        assert!(space(8, 8)
            .slice(0, 3, 8)
            .unwrap_err()
            .to_string()
            .contains("slice bounds out of range"));
    }

    #[test]
    fn out_of_bound_lookup() {
        let err = space(8, 8).lookup(&[8, 0]).unwrap_err().to_string();
        assert!(err.contains("Slice processor index out of bound"), "{err}");
    }

    #[test]
    fn decompose_follows_shape_hint() {
        // Two nodes spread over a 3-d iteration space go to the first axis;
        // four GPUs split over the remaining two.
        assert_eq!(decompose_extent(2, &[4, 4, 4]), vec![2, 1, 1]);
        assert_eq!(decompose_extent(4, &[2, 4, 4]), vec![1, 2, 2]);
        assert_eq!(decompose_extent(8, &[1, 1, 1]), vec![2, 2, 2]);
        let s = space(2, 4).decompose(0, &[4, 4, 4]).unwrap();
        assert_eq!(s.dims(), &[2, 1, 1, 4]);
        let s = s.decompose(3, &[2, 4, 4]).unwrap();
        assert_eq!(s.dims(), &[2, 1, 1, 1, 2, 2]);
        assert_eq!(s.lookup(&[1, 0, 0, 0, 1, 1]).unwrap(), at(1, 3));
    }

    #[test]
    fn position_of_inverts_lookup() {
        let s = space(2, 4).swap(0, 1).unwrap();
        for idx in s.indices() {
            assert_eq!(s.position_of(s.lookup(&idx).unwrap()), Some(idx));
        }
    }
}
