//! Syntax tree for mapper programs.
//!
//! Source positions are carried alongside nodes but never take part in
//! equality: two programs are equal when they say the same thing, wherever
//! it was written.

use std::collections::BTreeMap;
use std::fmt;

use crate::kinds::{MemKind, ProcKind};

/// 1-based source position.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Span {
    pub line: u32,
    pub column: u32,
}

impl Span {
    pub fn new(line: u32, column: u32) -> Self {
        Span { line, column }
    }
}

/// A node with the position it was parsed from. Equality ignores the span.
#[derive(Debug, Clone)]
pub struct Spanned<T> {
    pub node: T,
    pub span: Span,
}

impl<T> Spanned<T> {
    pub fn new(node: T, span: Span) -> Self {
        Spanned { node, span }
    }
}

impl<T: PartialEq> PartialEq for Spanned<T> {
    fn eq(&self, other: &Self) -> bool {
        self.node == other.node
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct MapperProgram {
    pub statements: Vec<Spanned<Statement>>,
}

impl MapperProgram {
    /// Function definitions by name. When a name is defined twice the later
    /// definition is returned; `validate` reports the duplicate.
    pub fn functions(&self) -> BTreeMap<&str, &FuncDef> {
        self.statements
            .iter()
            .filter_map(|s| match &s.node {
                Statement::FuncDef(f) => Some((f.name.as_str(), f)),
                _ => None,
            })
            .collect()
    }

    pub fn function(&self, name: &str) -> Option<&FuncDef> {
        self.functions().get(name).copied()
    }

    /// Top-level `name = expr;` bindings in program order.
    pub fn globals(&self) -> impl Iterator<Item = (&str, &Expr)> {
        self.statements.iter().filter_map(|s| match &s.node {
            Statement::Global { name, value } => Some((name.as_str(), value)),
            _ => None,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Pattern {
    Any,
    Name(String),
}

impl Pattern {
    pub fn matches(&self, name: &str) -> bool {
        match self {
            Pattern::Any => true,
            Pattern::Name(n) => n == name,
        }
    }

    pub fn is_exact(&self) -> bool {
        !matches!(self, Pattern::Any)
    }
}

/// Region slot of a `Region`, `Layout` or collect statement: a region name,
/// a zero-based argument position, or `*`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum RegionPattern {
    Any,
    Name(String),
    Index(u32),
}

impl RegionPattern {
    pub fn matches(&self, name: &str, position: usize) -> bool {
        match self {
            RegionPattern::Any => true,
            RegionPattern::Name(n) => n == name,
            RegionPattern::Index(i) => *i as usize == position,
        }
    }

    pub fn is_exact(&self) -> bool {
        !matches!(self, RegionPattern::Any)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ProcPattern {
    Any,
    Kind(ProcKind),
}

impl ProcPattern {
    pub fn matches(&self, kind: ProcKind) -> bool {
        match self {
            ProcPattern::Any => true,
            ProcPattern::Kind(k) => *k == kind,
        }
    }

    pub fn is_exact(&self) -> bool {
        !matches!(self, ProcPattern::Any)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum AlignOp {
    Eq,
    Le,
    Ge,
}

impl AlignOp {
    pub fn as_str(self) -> &'static str {
        match self {
            AlignOp::Eq => "==",
            AlignOp::Le => "<=",
            AlignOp::Ge => ">=",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum LayoutConstraint {
    Soa,
    Aos,
    COrder,
    FOrder,
    Align {
        op: AlignOp,
        bytes: u64,
    },
    /// Explicitly no alignment requirement.
    NoAlign,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ParamKind {
    Task,
    Tuple,
    Int,
}

impl ParamKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ParamKind::Task => "Task",
            ParamKind::Tuple => "Tuple",
            ParamKind::Int => "int",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Param {
    pub name: String,
    pub kind: ParamKind,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FuncDef {
    pub name: String,
    pub params: Vec<Param>,
    pub body: Vec<Spanned<FuncStmt>>,
}

impl FuncDef {
    /// `(Task t)`: called with the task handle.
    pub fn takes_task(&self) -> bool {
        self.params.len() == 1 && self.params[0].kind == ParamKind::Task
    }

    /// `(Tuple ipoint, Tuple ispace)`: called with the launch point and domain.
    pub fn takes_point_and_space(&self) -> bool {
        self.params.len() == 2 && self.params.iter().all(|p| p.kind == ParamKind::Tuple)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum FuncStmt {
    Assign { name: String, value: Expr },
    Return(Expr),
}

#[derive(Debug, Clone, PartialEq)]
pub enum Statement {
    Task {
        task: Pattern,
        procs: Vec<ProcKind>,
    },
    Region {
        task: Pattern,
        region: RegionPattern,
        proc: ProcPattern,
        memories: Vec<MemKind>,
    },
    Layout {
        task: Pattern,
        region: RegionPattern,
        proc: ProcPattern,
        constraints: Vec<LayoutConstraint>,
    },
    IndexTaskMap {
        tasks: Vec<String>,
        func: String,
    },
    SingleTaskMap {
        tasks: Vec<String>,
        func: String,
    },
    InstanceLimit {
        task: String,
        limit: u64,
    },
    /// `GarbageCollect` and `CollectMemory` are the same statement.
    Collect {
        task: String,
        region: RegionPattern,
    },
    Global {
        name: String,
        value: Expr,
    },
    FuncDef(FuncDef),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
    Rem,
    Lt,
    Le,
    Gt,
    Ge,
    Eq,
    Ne,
}

impl BinOp {
    pub fn as_str(self) -> &'static str {
        match self {
            BinOp::Add => "+",
            BinOp::Sub => "-",
            BinOp::Mul => "*",
            BinOp::Div => "/",
            BinOp::Rem => "%",
            BinOp::Lt => "<",
            BinOp::Le => "<=",
            BinOp::Gt => ">",
            BinOp::Ge => ">=",
            BinOp::Eq => "==",
            BinOp::Ne => "!=",
        }
    }

    /// Binding strength; larger binds tighter.
    pub fn precedence(self) -> u8 {
        match self {
            BinOp::Lt | BinOp::Le | BinOp::Gt | BinOp::Ge | BinOp::Eq | BinOp::Ne => 1,
            BinOp::Add | BinOp::Sub => 2,
            BinOp::Mul | BinOp::Div | BinOp::Rem => 3,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Expr {
    pub kind: ExprKind,
    pub span: Span,
}

impl PartialEq for Expr {
    fn eq(&self, other: &Self) -> bool {
        self.kind == other.kind
    }
}

impl Expr {
    pub fn new(kind: ExprKind, span: Span) -> Self {
        Expr { kind, span }
    }

    /// Visits this expression and every sub-expression, parents first.
    pub fn walk<'a>(&'a self, f: &mut impl FnMut(&'a Expr)) {
        f(self);
        match &self.kind {
            ExprKind::Int(_) | ExprKind::Var(_) | ExprKind::Machine(_) => {}
            ExprKind::Call { args, .. } | ExprKind::Tuple(args) => {
                args.iter().for_each(|a| a.walk(f));
            }
            ExprKind::Field { base, .. } => base.walk(f),
            ExprKind::Method { base, args, .. } => {
                base.walk(f);
                args.iter().for_each(|a| a.walk(f));
            }
            ExprKind::Neg(e) | ExprKind::Paren(e) => e.walk(f),
            ExprKind::Binary { lhs, rhs, .. } => {
                lhs.walk(f);
                rhs.walk(f);
            }
            ExprKind::Index { base, args } => {
                base.walk(f);
                args.iter().for_each(|a| a.expr.walk(f));
            }
            ExprKind::Ternary { cond, then, otherwise } => {
                cond.walk(f);
                then.walk(f);
                otherwise.walk(f);
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IndexArg {
    pub splat: bool,
    pub expr: Expr,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ExprKind {
    Int(i64),
    Var(String),
    Machine(ProcKind),
    Call {
        name: String,
        args: Vec<Expr>,
    },
    Field {
        base: Box<Expr>,
        field: String,
    },
    Method {
        base: Box<Expr>,
        method: String,
        args: Vec<Expr>,
    },
    Neg(Box<Expr>),
    Binary {
        op: BinOp,
        lhs: Box<Expr>,
        rhs: Box<Expr>,
    },
    Paren(Box<Expr>),
    /// `(a, b, ...)` with at least two elements.
    Tuple(Vec<Expr>),
    Index {
        base: Box<Expr>,
        args: Vec<IndexArg>,
    },
    Ternary {
        cond: Box<Expr>,
        then: Box<Expr>,
        otherwise: Box<Expr>,
    },
}

pub const FIELDS: [&str; 4] = ["size", "ipoint", "ispace", "parent"];
pub const METHODS: [&str; 6] = ["split", "merge", "swap", "slice", "decompose", "processor"];

impl fmt::Display for Pattern {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Pattern::Any => f.write_str("*"),
            Pattern::Name(n) => f.write_str(n),
        }
    }
}

impl fmt::Display for RegionPattern {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RegionPattern::Any => f.write_str("*"),
            RegionPattern::Name(n) => f.write_str(n),
            RegionPattern::Index(i) => write!(f, "{i}"),
        }
    }
}

impl fmt::Display for ProcPattern {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ProcPattern::Any => f.write_str("*"),
            ProcPattern::Kind(k) => f.write_str(k.as_str()),
        }
    }
}

impl fmt::Display for LayoutConstraint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LayoutConstraint::Soa => f.write_str("SOA"),
            LayoutConstraint::Aos => f.write_str("AOS"),
            LayoutConstraint::COrder => f.write_str("C_order"),
            LayoutConstraint::FOrder => f.write_str("F_order"),
            LayoutConstraint::Align { op, bytes } => write!(f, "Align{}{bytes}", op.as_str()),
            LayoutConstraint::NoAlign => f.write_str("No_Align"),
        }
    }
}
