//! Semantic checks over a parsed mapper program.

use std::collections::{BTreeMap, BTreeSet, HashSet};

use super::ast::*;
use super::diag::Diagnostic;

pub fn validate(program: &MapperProgram) -> Vec<Diagnostic> {
    let mut v = Validator {
        program,
        diags: Vec::new(),
        functions: BTreeMap::new(),
        all_globals: program.globals().map(|(n, _)| n.to_string()).collect(),
    };
    v.run();
    v.diags
}

struct Validator<'a> {
    program: &'a MapperProgram,
    diags: Vec<Diagnostic>,
    functions: BTreeMap<&'a str, &'a FuncDef>,
    all_globals: HashSet<String>,
}

impl<'a> Validator<'a> {
    fn error(&mut self, span: Span, msg: impl Into<String>) {
        self.diags.push(Diagnostic::error(span, msg));
    }

    fn run(&mut self) {
        for stmt in &self.program.statements {
            if let Statement::FuncDef(f) = &stmt.node {
                if self.functions.insert(f.name.as_str(), f).is_some() {
                    self.error(stmt.span, format!("function {} is defined more than once", f.name));
                }
            }
        }

        let mut globals_so_far: HashSet<String> = HashSet::new();
        for stmt in &self.program.statements {
            let span = stmt.span;
            match &stmt.node {
                Statement::Task { procs, .. } => {
                    if has_duplicates(procs) {
                        self.error(span, "processor kind listed more than once");
                    }
                }
                Statement::Region { memories, .. } => {
                    if has_duplicates(memories) {
                        self.error(span, "memory kind listed more than once");
                    }
                }
                Statement::Layout { constraints, .. } => self.check_layout(span, constraints),
                Statement::IndexTaskMap { func, .. } => self.check_mapping_target(span, func, "IndexTaskMap"),
                Statement::SingleTaskMap { func, .. } => self.check_mapping_target(span, func, "SingleTaskMap"),
                Statement::InstanceLimit { limit, .. } => {
                    if *limit == 0 {
                        self.error(span, "InstanceLimit must be at least 1");
                    }
                }
                Statement::Collect { .. } => {}
                Statement::Global { name, value } => {
                    let scope = globals_so_far.clone();
                    self.check_expr(value, &scope);
                    globals_so_far.insert(name.clone());
                }
                Statement::FuncDef(f) => self.check_function(span, f),
            }
        }
        self.check_recursion();
    }

    fn check_layout(&mut self, span: Span, constraints: &[LayoutConstraint]) {
        use LayoutConstraint::*;
        let count = |pred: fn(&LayoutConstraint) -> bool| constraints.iter().filter(|c| pred(c)).count();
        if count(|c| matches!(c, Soa | Aos)) > 1 {
            self.error(span, "Layout may specify at most one of SOA, AOS");
        }
        if count(|c| matches!(c, COrder | FOrder)) > 1 {
            self.error(span, "Layout may specify at most one of C_order, F_order");
        }
        if count(|c| matches!(c, Align { .. } | NoAlign)) > 1 {
            self.error(span, "Layout may specify at most one alignment");
        }
        for c in constraints {
            if let Align { bytes, .. } = c {
                if !bytes.is_power_of_two() {
                    self.error(span, format!("Align bytes must be a power of two, got {bytes}"));
                }
            }
        }
    }

    fn check_mapping_target(&mut self, span: Span, func: &str, stmt: &str) {
        let Some(f) = self.functions.get(func).copied() else {
            self.error(span, format!("{stmt}'s function undefined"));
            return;
        };
        if !f.takes_task() && !f.takes_point_and_space() {
            self.error(
                span,
                format!("{stmt} function {func} must take (Task) or (Tuple, Tuple)"),
            );
        }
        for s in &f.body {
            if let FuncStmt::Return(e) = &s.node {
                if !is_index_access(e) {
                    self.error(s.span, format!("{func} must return a processor space index access"));
                }
            }
        }
    }

    fn check_function(&mut self, span: Span, f: &FuncDef) {
        let mut scope: HashSet<String> = self.all_globals.clone();
        let mut seen_params = HashSet::new();
        for p in &f.params {
            if !seen_params.insert(p.name.as_str()) {
                self.error(span, format!("parameter {} declared twice in {}", p.name, f.name));
            }
            scope.insert(p.name.clone());
        }
        let mut returned = false;
        for s in &f.body {
            match &s.node {
                FuncStmt::Assign { name, value } => {
                    self.check_expr(value, &scope);
                    scope.insert(name.clone());
                }
                FuncStmt::Return(e) => {
                    self.check_expr(e, &scope);
                    returned = true;
                }
            }
        }
        if !returned {
            self.error(span, format!("function {} has no return statement", f.name));
        }
    }

    fn check_expr(&mut self, e: &Expr, scope: &HashSet<String>) {
        let mut found = Vec::new();
        e.walk(&mut |sub| found.push(sub));
        for sub in found {
            match &sub.kind {
                ExprKind::Var(name) if !scope.contains(name) => {
                    self.error(sub.span, format!("{name} not found"));
                }
                ExprKind::Call { name, args } => match self.functions.get(name.as_str()) {
                    None => self.error(sub.span, format!("{name} not found")),
                    Some(f) if f.params.len() != args.len() => {
                        let msg = format!("{name} expects {} arguments, got {}", f.params.len(), args.len());
                        self.error(sub.span, msg);
                    }
                    Some(_) => {}
                },
                ExprKind::Field { field, .. } if !FIELDS.contains(&field.as_str()) => {
                    self.error(sub.span, format!("unknown field {field}"));
                }
                ExprKind::Method { method, .. } if !METHODS.contains(&method.as_str()) => {
                    self.error(sub.span, format!("unknown method {method}"));
                }
                _ => {}
            }
        }
    }

    fn check_recursion(&mut self) {
        let mut calls: BTreeMap<&str, BTreeSet<&str>> = BTreeMap::new();
        for (name, f) in &self.functions {
            let entry = calls.entry(name).or_default();
            for s in &f.body {
                let e = match &s.node {
                    FuncStmt::Assign { value, .. } => value,
                    FuncStmt::Return(e) => e,
                };
                e.walk(&mut |sub| {
                    if let ExprKind::Call { name: callee, .. } = &sub.kind {
                        entry.insert(callee.as_str());
                    }
                });
            }
        }
        // Depth-first search for a cycle from each function.
        for &start in calls.keys() {
            let mut stack: Vec<&str> = calls[start].iter().copied().collect();
            let mut visited = HashSet::new();
            while let Some(n) = stack.pop() {
                if n == start {
                    let span = self
                        .program
                        .statements
                        .iter()
                        .find(|s| matches!(&s.node, Statement::FuncDef(f) if f.name == start))
                        .map(|s| s.span)
                        .unwrap_or_default();
                    self.error(span, format!("function {start} is recursive"));
                    break;
                }
                if visited.insert(n) {
                    if let Some(next) = calls.get(n) {
                        stack.extend(next.iter().copied());
                    }
                }
            }
        }
    }
}

fn has_duplicates<T: Eq + std::hash::Hash>(items: &[T]) -> bool {
    let mut seen = HashSet::new();
    !items.iter().all(|x| seen.insert(x))
}

fn is_index_access(e: &Expr) -> bool {
    match &e.kind {
        ExprKind::Index { .. } => true,
        ExprKind::Paren(inner) => is_index_access(inner),
        ExprKind::Ternary { then, otherwise, .. } => is_index_access(then) && is_index_access(otherwise),
        _ => false,
    }
}
