//! The mapping language: syntax tree, parser, printer and validator.

pub mod ast;
pub mod diag;
pub mod lexer;
pub mod parser;
pub mod printer;
pub mod validate;

pub use ast::*;
pub use diag::{Diagnostic, Severity};
pub use parser::{parse, parse_expr};
pub use printer::print;
pub use validate::validate;

/// Parses and validates in one step. Returns the program only when there
/// are no error diagnostics.
pub fn check(source: &str) -> Result<MapperProgram, Vec<Diagnostic>> {
    let program = parse(source)?;
    let diags: Vec<Diagnostic> = validate(&program).into_iter().filter(Diagnostic::is_error).collect();
    if diags.is_empty() {
        Ok(program)
    } else {
        Err(diags)
    }
}
