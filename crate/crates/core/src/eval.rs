//! Interpreter for index-mapping functions.

use std::collections::{BTreeMap, HashMap};
use std::fmt;

use thiserror::Error;

use crate::dsl::{self, BinOp, Expr, ExprKind, FuncDef, FuncStmt, MapperProgram, ParamKind, Statement};
use crate::kinds::ProcKind;
use crate::machine::{MachineModel, ProcIndex, ProcessorSpace, SpaceError};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TaskHandle {
    pub name: String,
    pub ipoint: Vec<i64>,
    pub ispace: Vec<i64>,
    pub parent: Option<Box<TaskHandle>>,
    /// Where this task runs, when known. Needed for `.processor(space)`.
    pub placed: Option<(ProcKind, ProcIndex)>,
}

impl TaskHandle {
    pub fn point(name: &str, ipoint: Vec<i64>, ispace: Vec<i64>) -> Self {
        TaskHandle {
            name: name.to_string(),
            ipoint,
            ispace,
            parent: None,
            placed: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Value {
    Int(i64),
    Tuple(Vec<i64>),
    Space(ProcessorSpace),
    Proc(ProcKind, ProcIndex),
    Task(TaskHandle),
}

impl Value {
    fn type_name(&self) -> &'static str {
        match self {
            Value::Int(_) => "int",
            Value::Tuple(_) => "Tuple",
            Value::Space(_) => "processor space",
            Value::Proc(..) => "processor",
            Value::Task(_) => "Task",
        }
    }
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Int(v) => write!(f, "{v}"),
            Value::Tuple(t) => {
                let items: Vec<String> = t.iter().map(|x| x.to_string()).collect();
                write!(f, "({})", items.join(", "))
            }
            Value::Space(s) => write!(f, "{} space {:?}", s.kind(), s.dims()),
            Value::Proc(k, p) => write!(f, "{k} {p}"),
            Value::Task(t) => write!(f, "task {}", t.name),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("{0}")]
pub struct EvalError(pub String);

impl From<SpaceError> for EvalError {
    fn from(e: SpaceError) -> Self {
        EvalError(e.to_string())
    }
}

fn err<T>(msg: impl Into<String>) -> Result<T, EvalError> {
    Err(EvalError(msg.into()))
}

/// Top-level bindings and function definitions of a mapper program.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct FunctionLibrary {
    pub globals: Vec<(String, Expr)>,
    pub functions: BTreeMap<String, FuncDef>,
}

impl FunctionLibrary {
    pub fn from_program(program: &MapperProgram) -> Self {
        let mut lib = FunctionLibrary::default();
        lib.extend(program);
        lib
    }

    /// Adds the program's bindings after the existing ones. Functions with
    /// the same name are replaced.
    pub fn extend(&mut self, program: &MapperProgram) {
        for stmt in &program.statements {
            match &stmt.node {
                Statement::Global { name, value } => self.globals.push((name.clone(), value.clone())),
                Statement::FuncDef(f) => {
                    self.functions.insert(f.name.clone(), f.clone());
                }
                _ => {}
            }
        }
    }

    /// Statements defining `func` and everything it depends on, in the
    /// order they appear in this library (globals first).
    pub fn closure(&self, func: &str) -> Vec<Statement> {
        self.closure_of(&[func])
    }

    pub fn closure_of(&self, roots: &[&str]) -> Vec<Statement> {
        let mut funcs: Vec<&str> = Vec::new();
        let mut globals: Vec<&str> = Vec::new();
        let mut pending_f: Vec<&str> = roots.to_vec();
        let mut pending_g: Vec<&str> = Vec::new();
        while !pending_f.is_empty() || !pending_g.is_empty() {
            if let Some(name) = pending_f.pop() {
                let Some(f) = self.functions.get(name) else { continue };
                if funcs.contains(&f.name.as_str()) {
                    continue;
                }
                funcs.push(&f.name);
                let locals: Vec<&str> = f
                    .params
                    .iter()
                    .map(|p| p.name.as_str())
                    .chain(f.body.iter().filter_map(|s| match &s.node {
                        FuncStmt::Assign { name, .. } => Some(name.as_str()),
                        _ => None,
                    }))
                    .collect();
                for s in &f.body {
                    let e = match &s.node {
                        FuncStmt::Assign { value, .. } => value,
                        FuncStmt::Return(e) => e,
                    };
                    self.references(e, &locals, &mut pending_f, &mut pending_g);
                }
            } else if let Some(name) = pending_g.pop() {
                if globals.contains(&name) {
                    continue;
                }
                let mut defined = false;
                for (g, value) in &self.globals {
                    if g == name {
                        defined = true;
                        self.references(value, &[], &mut pending_f, &mut pending_g);
                    }
                }
                if defined {
                    globals.push(self.globals.iter().find(|(g, _)| g == name).unwrap().0.as_str());
                }
            }
        }
        let mut out = Vec::new();
        for (g, value) in &self.globals {
            if globals.contains(&g.as_str()) {
                out.push(Statement::Global {
                    name: g.clone(),
                    value: value.clone(),
                });
            }
        }
        for (name, f) in &self.functions {
            if funcs.contains(&name.as_str()) {
                out.push(Statement::FuncDef(f.clone()));
            }
        }
        out
    }

    fn references<'a>(&'a self, e: &'a Expr, locals: &[&str], funcs: &mut Vec<&'a str>, globals: &mut Vec<&'a str>) {
        e.walk(&mut |sub| match &sub.kind {
            ExprKind::Var(v) if !locals.contains(&v.as_str()) => globals.push(v),
            ExprKind::Call { name, .. } => funcs.push(name),
            _ => {}
        });
    }
}

/// The common mapping functions and the matrix-multiplication mapping
/// functions, with the globals they rely on.
pub fn builtin_library() -> FunctionLibrary {
    let mut lib = FunctionLibrary::default();
    for src in [BUILTIN_COMMON, BUILTIN_MATMUL] {
        let program = dsl::parse(src).expect("bundled builtins parse");
        lib.extend(&program);
    }
    lib
}

pub const BUILTIN_COMMON: &str = include_str!("../../../corpus/builtins/common.dsl");
pub const BUILTIN_MATMUL: &str = include_str!("../../../corpus/builtins/matmul.dsl");

/// Evaluates expressions and functions of one library against one
/// machine. Globals are computed once, in program order; a global whose
/// expression fails only reports the failure when it is used.
pub struct Evaluator<'a> {
    lib: &'a FunctionLibrary,
    machine: &'a MachineModel,
    globals: HashMap<String, Result<Value, EvalError>>,
}

type Scope = HashMap<String, Value>;

impl<'a> Evaluator<'a> {
    pub fn new(lib: &'a FunctionLibrary, machine: &'a MachineModel) -> Self {
        let mut ev = Evaluator {
            lib,
            machine,
            globals: HashMap::new(),
        };
        for (name, value) in &lib.globals {
            let result = ev.eval(value, &Scope::new(), 0);
            ev.globals.insert(name.clone(), result);
        }
        ev
    }

    pub fn global(&self, name: &str) -> Option<&Result<Value, EvalError>> {
        self.globals.get(name)
    }

    pub fn eval_expr(&self, e: &Expr, locals: &HashMap<String, Value>) -> Result<Value, EvalError> {
        self.eval(e, locals, 0)
    }

    /// Runs a mapping function for one launch point.
    pub fn map_point(&self, func: &str, task: &TaskHandle) -> Result<(ProcKind, ProcIndex), EvalError> {
        let Some(f) = self.lib.functions.get(func) else {
            return err(format!("{func} not found"));
        };
        let args = if f.takes_task() {
            vec![Value::Task(task.clone())]
        } else if f.takes_point_and_space() {
            vec![Value::Tuple(task.ipoint.clone()), Value::Tuple(task.ispace.clone())]
        } else {
            return err(format!("{func} must take (Task) or (Tuple, Tuple)"));
        };
        match self.call(f, args, 0)? {
            Value::Proc(kind, p) => Ok((kind, p)),
            other => err(format!("{func} returned {} instead of a processor", other.type_name())),
        }
    }

    pub fn call_function(&self, name: &str, args: Vec<Value>) -> Result<Value, EvalError> {
        match self.lib.functions.get(name) {
            Some(f) => self.call(f, args, 0),
            None => err(format!("{name} not found")),
        }
    }

    fn call(&self, f: &FuncDef, args: Vec<Value>, depth: usize) -> Result<Value, EvalError> {
        if depth > 64 {
            return err(format!("call depth exceeded in {}", f.name));
        }
        if args.len() != f.params.len() {
            return err(format!(
                "{} expects {} arguments, got {}",
                f.name,
                f.params.len(),
                args.len()
            ));
        }
        let mut scope = Scope::new();
        for (p, a) in f.params.iter().zip(args) {
            let ok = matches!(
                (p.kind, &a),
                (ParamKind::Task, Value::Task(_))
                    | (ParamKind::Tuple, Value::Tuple(_))
                    | (ParamKind::Int, Value::Int(_))
            );
            if !ok {
                return err(format!(
                    "{}: parameter {} expects {}, got {}",
                    f.name,
                    p.name,
                    p.kind.as_str(),
                    a.type_name()
                ));
            }
            scope.insert(p.name.clone(), a);
        }
        for s in &f.body {
            match &s.node {
                FuncStmt::Assign { name, value } => {
                    let v = self.eval(value, &scope, depth)?;
                    scope.insert(name.clone(), v);
                }
                FuncStmt::Return(e) => return self.eval(e, &scope, depth),
            }
        }
        err(format!("function {} has no return statement", f.name))
    }

    fn lookup_var(&self, name: &str, scope: &Scope) -> Result<Value, EvalError> {
        if let Some(v) = scope.get(name) {
            return Ok(v.clone());
        }
        match self.globals.get(name) {
            Some(r) => r.clone(),
            None => err(format!("{name} not found")),
        }
    }

    fn eval(&self, e: &Expr, scope: &Scope, depth: usize) -> Result<Value, EvalError> {
        match &e.kind {
            ExprKind::Int(v) => Ok(Value::Int(*v)),
            ExprKind::Var(name) => self.lookup_var(name, scope),
            ExprKind::Machine(kind) => Ok(Value::Space(ProcessorSpace::machine(self.machine, *kind)?)),
            ExprKind::Call { name, args } => {
                let Some(f) = self.lib.functions.get(name) else {
                    return err(format!("{name} not found"));
                };
                let vals = args
                    .iter()
                    .map(|a| self.eval(a, scope, depth))
                    .collect::<Result<Vec<_>, _>>()?;
                self.call(f, vals, depth + 1)
            }
            ExprKind::Field { base, field } => {
                let b = self.eval(base, scope, depth)?;
                field_of(b, field)
            }
            ExprKind::Method { base, method, args } => {
                let b = self.eval(base, scope, depth)?;
                let vals = args
                    .iter()
                    .map(|a| self.eval(a, scope, depth))
                    .collect::<Result<Vec<_>, _>>()?;
                method_of(b, method, vals)
            }
            ExprKind::Neg(inner) => match self.eval(inner, scope, depth)? {
                Value::Int(v) => v.checked_neg().map(Value::Int).ok_or_else(overflow),
                Value::Tuple(t) => t
                    .iter()
                    .map(|x| x.checked_neg().ok_or_else(overflow))
                    .collect::<Result<_, _>>()
                    .map(Value::Tuple),
                other => err(format!("cannot negate {}", other.type_name())),
            },
            ExprKind::Binary { op, lhs, rhs } => {
                let l = self.eval(lhs, scope, depth)?;
                let r = self.eval(rhs, scope, depth)?;
                binary(*op, l, r)
            }
            ExprKind::Paren(inner) => self.eval(inner, scope, depth),
            ExprKind::Tuple(items) => {
                let mut out = Vec::with_capacity(items.len());
                for item in items {
                    match self.eval(item, scope, depth)? {
                        Value::Int(v) => out.push(v),
                        other => return err(format!("tuple elements must be int, got {}", other.type_name())),
                    }
                }
                Ok(Value::Tuple(out))
            }
            ExprKind::Index { base, args } => {
                let b = self.eval(base, scope, depth)?;
                let mut subs = Vec::new();
                for a in args {
                    match (a.splat, self.eval(&a.expr, scope, depth)?) {
                        (false, Value::Int(v)) => subs.push(v),
                        (true, Value::Tuple(t)) => subs.extend(t),
                        (true, other) => return err(format!("cannot unpack {} with *", other.type_name())),
                        (false, other) => return err(format!("subscript must be int, got {}", other.type_name())),
                    }
                }
                index(b, &subs)
            }
            ExprKind::Ternary { cond, then, otherwise } => match self.eval(cond, scope, depth)? {
                Value::Int(c) => {
                    if c != 0 {
                        self.eval(then, scope, depth)
                    } else {
                        self.eval(otherwise, scope, depth)
                    }
                }
                other => err(format!("condition must be int, got {}", other.type_name())),
            },
        }
    }
}

fn overflow() -> EvalError {
    EvalError("integer overflow".into())
}

fn field_of(b: Value, field: &str) -> Result<Value, EvalError> {
    match (b, field) {
        (Value::Space(s), "size") => Ok(Value::Tuple(s.dims().to_vec())),
        (Value::Tuple(t), "size") => Ok(Value::Int(t.len() as i64)),
        (Value::Task(t), "ipoint") => Ok(Value::Tuple(t.ipoint)),
        (Value::Task(t), "ispace") => Ok(Value::Tuple(t.ispace)),
        (Value::Task(t), "parent") => match t.parent {
            Some(p) => Ok(Value::Task(*p)),
            None => err(format!("task {} has no parent", t.name)),
        },
        (b, _) => err(format!("{} has no field {field}", b.type_name())),
    }
}

fn int_arg(args: &[Value], i: usize, method: &str) -> Result<i64, EvalError> {
    match args.get(i) {
        Some(Value::Int(v)) => Ok(*v),
        Some(other) => err(format!(
            "{method}: argument {} must be int, got {}",
            i + 1,
            other.type_name()
        )),
        None => err(format!("{method}: missing argument {}", i + 1)),
    }
}

fn dim_arg(args: &[Value], i: usize, method: &str) -> Result<usize, EvalError> {
    let v = int_arg(args, i, method)?;
    usize::try_from(v).map_err(|_| EvalError(format!("{method}: dimension {v} is negative")))
}

fn method_of(b: Value, method: &str, args: Vec<Value>) -> Result<Value, EvalError> {
    let expect = |n: usize| -> Result<(), EvalError> {
        if args.len() == n {
            Ok(())
        } else {
            err(format!("{method} expects {n} arguments, got {}", args.len()))
        }
    };
    match (b, method) {
        (Value::Space(s), "split") => {
            expect(2)?;
            Ok(Value::Space(
                s.split(dim_arg(&args, 0, method)?, int_arg(&args, 1, method)?)?,
            ))
        }
        (Value::Space(s), "merge") => {
            expect(2)?;
            Ok(Value::Space(
                s.merge(dim_arg(&args, 0, method)?, dim_arg(&args, 1, method)?)?,
            ))
        }
        (Value::Space(s), "swap") => {
            expect(2)?;
            Ok(Value::Space(
                s.swap(dim_arg(&args, 0, method)?, dim_arg(&args, 1, method)?)?,
            ))
        }
        (Value::Space(s), "slice") => {
            expect(3)?;
            Ok(Value::Space(s.slice(
                dim_arg(&args, 0, method)?,
                int_arg(&args, 1, method)?,
                int_arg(&args, 2, method)?,
            )?))
        }
        (Value::Space(s), "decompose") => {
            expect(2)?;
            let dim = dim_arg(&args, 0, method)?;
            let shape = match &args[1] {
                Value::Tuple(t) => t.clone(),
                Value::Int(v) => vec![*v],
                other => return err(format!("decompose: shape must be a Tuple, got {}", other.type_name())),
            };
            Ok(Value::Space(s.decompose(dim, &shape)?))
        }
        (Value::Task(t), "processor") => {
            expect(1)?;
            let Value::Space(space) = &args[0] else {
                return err(format!(
                    "processor expects a processor space, got {}",
                    args[0].type_name()
                ));
            };
            let Some((kind, proc)) = t.placed else {
                return err(format!("task {} has not been placed on a processor", t.name));
            };
            if kind != space.kind() {
                return err(format!(
                    "task {} runs on {kind}, not on a {} space",
                    t.name,
                    space.kind()
                ));
            }
            match space.position_of(proc) {
                Some(idx) => Ok(Value::Tuple(idx)),
                None => err(format!("processor {proc} is not in the space")),
            }
        }
        (b, _) => err(format!("{} has no method {method}", b.type_name())),
    }
}

fn index(b: Value, subs: &[i64]) -> Result<Value, EvalError> {
    match b {
        Value::Space(s) => Ok(Value::Proc(s.kind(), s.lookup(subs)?)),
        Value::Tuple(t) => {
            if subs.len() != 1 {
                return err(format!("Tuple indexed with {} subscripts", subs.len()));
            }
            let i = subs[0];
            usize::try_from(i)
                .ok()
                .and_then(|i| t.get(i).copied())
                .map(Value::Int)
                .ok_or_else(|| EvalError(format!("tuple index {i} out of range for length {}", t.len())))
        }
        other => err(format!("cannot index {}", other.type_name())),
    }
}

fn int_op(op: BinOp, a: i64, b: i64) -> Result<i64, EvalError> {
    let r = match op {
        BinOp::Add => a.checked_add(b),
        BinOp::Sub => a.checked_sub(b),
        BinOp::Mul => a.checked_mul(b),
        BinOp::Div | BinOp::Rem if b == 0 => return err("division by zero"),
        // Rust's `/` and `%` truncate toward zero.
        BinOp::Div => a.checked_div(b),
        BinOp::Rem => a.checked_rem(b),
        BinOp::Lt => Some((a < b) as i64),
        BinOp::Le => Some((a <= b) as i64),
        BinOp::Gt => Some((a > b) as i64),
        BinOp::Ge => Some((a >= b) as i64),
        BinOp::Eq => Some((a == b) as i64),
        BinOp::Ne => Some((a != b) as i64),
    };
    r.ok_or_else(overflow)
}

fn binary(op: BinOp, l: Value, r: Value) -> Result<Value, EvalError> {
    let is_cmp = op.precedence() == 1;
    match (l, r) {
        (Value::Int(a), Value::Int(b)) => int_op(op, a, b).map(Value::Int),
        (Value::Tuple(a), Value::Tuple(b)) if is_cmp => {
            if op == BinOp::Eq || op == BinOp::Ne {
                Ok(Value::Int(((a == b) == (op == BinOp::Eq)) as i64))
            } else {
                err(format!("cannot compare tuples with {}", op.as_str()))
            }
        }
        (Value::Tuple(a), Value::Tuple(b)) => {
            if a.len() != b.len() {
                return err(format!(
                    "tuple length mismatch: {} vs {} in {}",
                    a.len(),
                    b.len(),
                    op.as_str()
                ));
            }
            a.iter()
                .zip(&b)
                .map(|(&x, &y)| int_op(op, x, y))
                .collect::<Result<_, _>>()
                .map(Value::Tuple)
        }
        (Value::Tuple(a), Value::Int(b)) if !is_cmp => a
            .iter()
            .map(|&x| int_op(op, x, b))
            .collect::<Result<_, _>>()
            .map(Value::Tuple),
        (Value::Int(a), Value::Tuple(b)) if !is_cmp => b
            .iter()
            .map(|&y| int_op(op, a, y))
            .collect::<Result<_, _>>()
            .map(Value::Tuple),
        (l, r) => err(format!(
            "unsupported operands for {}: {} and {}",
            op.as_str(),
            l.type_name(),
            r.type_name()
        )),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsl::parse_expr;

    fn eval_str(src: &str) -> Result<Value, EvalError> {
        let lib = FunctionLibrary::default();
        let machine = MachineModel::uniform(ProcKind::Gpu, 2, 2);
        let ev = Evaluator::new(&lib, &machine);
        let mut locals = HashMap::new();
        locals.insert("x".to_string(), Value::Int(1));
        ev.eval_expr(&parse_expr(src).unwrap(), &locals)
    }

    #[test]
    fn elementwise_and_broadcast() {
        assert_eq!(eval_str("(3, 1) * (2, 2) / (4, 4)"), Ok(Value::Tuple(vec![1, 0])));
        assert_eq!(eval_str("(3, 5) % 2"), Ok(Value::Tuple(vec![1, 1])));
        assert!(eval_str("(1, 2) + (1, 2, 3)")
            .unwrap_err()
            .0
            .contains("length mismatch"));
    }

    #[test]
    fn integer_division_truncates() {
        assert_eq!(eval_str("5 / 2"), Ok(Value::Int(2)));
        assert_eq!(eval_str("-7 / 2"), Ok(Value::Int(-3)));
        assert_eq!(eval_str("-7 % 2"), Ok(Value::Int(-1)));
        assert_eq!(eval_str("1 / 0").unwrap_err().0, "division by zero");
    }

    #[test]
    fn ternary_only_evaluates_taken_branch() {
        assert_eq!(eval_str("x ? 3 : 0 / 0"), Ok(Value::Int(3)));
        assert!(eval_str("x - 1 ? 3 : 0 / 0").is_err());
    }

    #[test]
    fn machine_indexing() {
        assert_eq!(
            eval_str("Machine(GPU)[1, 0]"),
            Ok(Value::Proc(ProcKind::Gpu, ProcIndex { node: 1, local: 0 }))
        );
        assert!(eval_str("Machine(GPU)[2, 0]")
            .unwrap_err()
            .0
            .contains("Slice processor index out of bound"));
        assert!(eval_str("Machine(GPU)[1]").is_err());
        assert_eq!(eval_str("Machine(GPU).size"), Ok(Value::Tuple(vec![2, 2])));
    }

    #[test]
    fn overflow_is_an_error() {
        assert_eq!(eval_str("9223372036854775807 + 1").unwrap_err().0, "integer overflow");
    }

    #[test]
    fn failing_global_reports_on_use() {
        let program = dsl::parse("mcpu = Machine(CPU);\ng = Machine(GPU);").unwrap();
        let lib = FunctionLibrary::from_program(&program);
        let machine = MachineModel::uniform(ProcKind::Gpu, 2, 2);
        let ev = Evaluator::new(&lib, &machine);
        assert!(ev.global("g").unwrap().is_ok());
        let e = parse_expr("mcpu[0, 0]").unwrap();
        assert_eq!(
            ev.eval_expr(&e, &HashMap::new()).unwrap_err().0,
            "no processors of kind CPU"
        );
    }

    #[test]
    fn closure_collects_dependencies() {
        let lib = builtin_library();
        let names: Vec<String> = lib
            .closure("block1D_x")
            .iter()
            .map(|s| match s {
                Statement::Global { name, .. } => name.clone(),
                Statement::FuncDef(f) => format!("def {}", f.name),
                _ => unreachable!(),
            })
            .collect();
        assert_eq!(names, vec!["m", "m1", "def block1D_x"]);
        let names: Vec<String> = lib
            .closure("hierarchical_block2D")
            .iter()
            .filter_map(|s| match s {
                Statement::FuncDef(f) => Some(f.name.clone()),
                _ => None,
            })
            .collect();
        assert_eq!(
            names,
            vec!["block_primitive", "cyclic_primitive", "hierarchical_block2D"]
        );
    }
}
