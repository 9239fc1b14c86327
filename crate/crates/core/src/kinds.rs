//! Processor and memory kinds shared by every layer.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum ProcKind {
    #[serde(rename = "CPU")]
    Cpu,
    #[serde(rename = "GPU")]
    Gpu,
    #[serde(rename = "OMP")]
    Omp,
}

impl ProcKind {
    pub const ALL: [ProcKind; 3] = [ProcKind::Cpu, ProcKind::Gpu, ProcKind::Omp];

    pub fn as_str(self) -> &'static str {
        match self {
            ProcKind::Cpu => "CPU",
            ProcKind::Gpu => "GPU",
            ProcKind::Omp => "OMP",
        }
    }

    /// Memories a processor of this kind can address directly.
    pub fn can_access(self, mem: MemKind) -> bool {
        match self {
            ProcKind::Gpu => matches!(mem, MemKind::Fbmem | MemKind::Zcmem),
            ProcKind::Cpu | ProcKind::Omp => !matches!(mem, MemKind::Fbmem),
        }
    }
}

impl fmt::Display for ProcKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ProcKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "CPU" => Ok(ProcKind::Cpu),
            "GPU" => Ok(ProcKind::Gpu),
            "OMP" => Ok(ProcKind::Omp),
            _ => Err(format!("unknown processor kind `{s}`")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum MemKind {
    #[serde(rename = "SYSMEM")]
    Sysmem,
    #[serde(rename = "FBMEM")]
    Fbmem,
    #[serde(rename = "ZCMEM")]
    Zcmem,
    #[serde(rename = "RDMEM")]
    Rdmem,
    #[serde(rename = "SOCKMEM")]
    Sockmem,
}

impl MemKind {
    pub const ALL: [MemKind; 5] = [
        MemKind::Sysmem,
        MemKind::Fbmem,
        MemKind::Zcmem,
        MemKind::Rdmem,
        MemKind::Sockmem,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            MemKind::Sysmem => "SYSMEM",
            MemKind::Fbmem => "FBMEM",
            MemKind::Zcmem => "ZCMEM",
            MemKind::Rdmem => "RDMEM",
            MemKind::Sockmem => "SOCKMEM",
        }
    }

    /// Framebuffer memory belongs to a single GPU; every other kind is
    /// shared by all processors of a node.
    pub fn is_per_processor(self) -> bool {
        matches!(self, MemKind::Fbmem)
    }

    /// Parses a memory name, accepting the misspellings found in
    /// hand-written and generated mappers (`SYMEM`, `SYSEM`, `SYSTEMEM`,
    /// `SYSTEM`) as system memory.
    pub fn from_dsl(s: &str) -> Option<MemKind> {
        match s {
            "SYSMEM" | "SYMEM" | "SYSEM" | "SYSTEMEM" | "SYSTEM" => Some(MemKind::Sysmem),
            "FBMEM" => Some(MemKind::Fbmem),
            "ZCMEM" => Some(MemKind::Zcmem),
            "RDMEM" => Some(MemKind::Rdmem),
            "SOCKMEM" => Some(MemKind::Sockmem),
            _ => None,
        }
    }
}

impl fmt::Display for MemKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for MemKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        MemKind::from_dsl(s).ok_or_else(|| format!("unknown memory kind `{s}`"))
    }
}
