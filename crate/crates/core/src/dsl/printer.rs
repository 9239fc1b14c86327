//! Canonical text form of a mapper program.
//!
//! Comments and original spacing are not kept. Parentheses written in the
//! source are kept as `Paren` nodes; extra ones are inserted only where the
//! tree shape would otherwise be lost.

use std::fmt::Write;

use super::ast::*;

pub fn print(program: &MapperProgram) -> String {
    let mut out = String::new();
    let mut prev_was_func = false;
    for (i, stmt) in program.statements.iter().enumerate() {
        let is_func = matches!(stmt.node, Statement::FuncDef(_));
        if i > 0 && (is_func || prev_was_func) {
            out.push('\n');
        }
        print_statement(&mut out, &stmt.node);
        prev_was_func = is_func;
    }
    out
}

fn join<T: std::fmt::Display>(items: &[T]) -> String {
    items.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",")
}

fn print_statement(out: &mut String, stmt: &Statement) {
    match stmt {
        Statement::Task { task, procs } => {
            let _ = writeln!(out, "Task {task} {};", join(procs));
        }
        Statement::Region {
            task,
            region,
            proc,
            memories,
        } => {
            let _ = writeln!(out, "Region {task} {region} {proc} {};", join(memories));
        }
        Statement::Layout {
            task,
            region,
            proc,
            constraints,
        } => {
            let cs: Vec<String> = constraints.iter().map(|c| c.to_string()).collect();
            let _ = writeln!(out, "Layout {task} {region} {proc} {};", cs.join(" "));
        }
        Statement::IndexTaskMap { tasks, func } => {
            let _ = writeln!(out, "IndexTaskMap {} {func};", tasks.join(", "));
        }
        Statement::SingleTaskMap { tasks, func } => {
            let _ = writeln!(out, "SingleTaskMap {} {func};", tasks.join(", "));
        }
        Statement::InstanceLimit { task, limit } => {
            let _ = writeln!(out, "InstanceLimit {task} {limit};");
        }
        Statement::Collect { task, region } => {
            let _ = writeln!(out, "GarbageCollect {task} {region};");
        }
        Statement::Global { name, value } => {
            let _ = writeln!(out, "{name} = {};", expr_to_string(value));
        }
        Statement::FuncDef(f) => print_funcdef(out, f),
    }
}

pub fn print_funcdef(out: &mut String, f: &FuncDef) {
    let params: Vec<String> = f
        .params
        .iter()
        .map(|p| format!("{} {}", p.kind.as_str(), p.name))
        .collect();
    let _ = writeln!(out, "def {}({}) {{", f.name, params.join(", "));
    for stmt in &f.body {
        match &stmt.node {
            FuncStmt::Assign { name, value } => {
                let _ = writeln!(out, "    {name} = {};", expr_to_string(value));
            }
            FuncStmt::Return(e) => {
                let _ = writeln!(out, "    return {};", expr_to_string(e));
            }
        }
    }
    out.push_str("}\n");
}

pub fn expr_to_string(e: &Expr) -> String {
    let mut s = String::new();
    write_expr(&mut s, e);
    s
}

// Binding strength of the expression's top-level form.
// 0 ternary, 1-3 binary levels, 4 unary, 5 postfix/primary.
fn strength(e: &Expr) -> u8 {
    match &e.kind {
        ExprKind::Ternary { .. } => 0,
        ExprKind::Binary { op, .. } => op.precedence(),
        ExprKind::Neg(_) => 4,
        _ => 5,
    }
}

fn write_at_least(out: &mut String, e: &Expr, min: u8) {
    if strength(e) < min {
        out.push('(');
        write_expr(out, e);
        out.push(')');
    } else {
        write_expr(out, e);
    }
}

fn write_list(out: &mut String, items: &[Expr]) {
    for (i, a) in items.iter().enumerate() {
        if i > 0 {
            out.push_str(", ");
        }
        write_expr(out, a);
    }
}

fn write_expr(out: &mut String, e: &Expr) {
    match &e.kind {
        ExprKind::Int(v) => {
            let _ = write!(out, "{v}");
        }
        ExprKind::Var(name) => out.push_str(name),
        ExprKind::Machine(kind) => {
            let _ = write!(out, "Machine({kind})");
        }
        ExprKind::Call { name, args } => {
            out.push_str(name);
            out.push('(');
            write_list(out, args);
            out.push(')');
        }
        ExprKind::Field { base, field } => {
            write_at_least(out, base, 5);
            out.push('.');
            out.push_str(field);
        }
        ExprKind::Method { base, method, args } => {
            write_at_least(out, base, 5);
            out.push('.');
            out.push_str(method);
            out.push('(');
            write_list(out, args);
            out.push(')');
        }
        ExprKind::Neg(inner) => {
            out.push('-');
            write_at_least(out, inner, 4);
        }
        ExprKind::Binary { op, lhs, rhs } => {
            // Left-associative: the right operand needs strictly tighter binding.
            let p = op.precedence();
            write_at_least(out, lhs, p);
            let _ = write!(out, " {} ", op.as_str());
            write_at_least(out, rhs, p + 1);
        }
        ExprKind::Paren(inner) => {
            out.push('(');
            write_expr(out, inner);
            out.push(')');
        }
        ExprKind::Tuple(items) => {
            out.push('(');
            write_list(out, items);
            out.push(')');
        }
        ExprKind::Index { base, args } => {
            write_at_least(out, base, 5);
            out.push('[');
            for (i, a) in args.iter().enumerate() {
                if i > 0 {
                    out.push_str(", ");
                }
                if a.splat {
                    out.push('*');
                }
                write_expr(out, &a.expr);
            }
            out.push(']');
        }
        ExprKind::Ternary { cond, then, otherwise } => {
            write_at_least(out, cond, 1);
            out.push_str(" ? ");
            write_expr(out, then);
            out.push_str(" : ");
            write_expr(out, otherwise);
        }
    }
}
