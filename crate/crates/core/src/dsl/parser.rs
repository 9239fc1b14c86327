//! Recursive-descent parser for mapper programs.
//!
//! Parsing stops at the first syntax error. Error text follows the
//! `Syntax error, unexpected X, expecting Y` shape that optimizers are
//! trained to read.

use super::ast::*;
use super::diag::Diagnostic;
use super::lexer::{tokenize, Tok, Token};
use crate::kinds::{MemKind, ProcKind};

pub fn parse(source: &str) -> Result<MapperProgram, Vec<Diagnostic>> {
    let tokens = tokenize(source).map_err(|d| vec![d])?;
    let mut parser = Parser { tokens, pos: 0 };
    parser.program().map_err(|d| vec![d])
}

/// Parses a single expression, e.g. for tests or interactive evaluation.
pub fn parse_expr(source: &str) -> Result<Expr, Vec<Diagnostic>> {
    let tokens = tokenize(source).map_err(|d| vec![d])?;
    let mut parser = Parser { tokens, pos: 0 };
    let e = parser.expr().map_err(|d| vec![d])?;
    parser.expect(&Tok::Eof, "end of input").map_err(|d| vec![d])?;
    Ok(e)
}

type PResult<T> = Result<T, Diagnostic>;

struct Parser {
    tokens: Vec<Token>,
    pos: usize,
}

impl Parser {
    fn peek(&self) -> &Tok {
        &self.tokens[self.pos].tok
    }

    fn peek_at(&self, offset: usize) -> &Tok {
        let idx = (self.pos + offset).min(self.tokens.len() - 1);
        &self.tokens[idx].tok
    }

    fn span(&self) -> Span {
        self.tokens[self.pos].span
    }

    fn bump(&mut self) -> Token {
        let t = self.tokens[self.pos].clone();
        if self.pos + 1 < self.tokens.len() {
            self.pos += 1;
        }
        t
    }

    fn unexpected(&self, expecting: &str) -> Diagnostic {
        Diagnostic::error(
            self.span(),
            format!("Syntax error, unexpected {}, expecting {}", self.peek(), expecting),
        )
    }

    fn expect(&mut self, tok: &Tok, expecting: &str) -> PResult<Span> {
        if self.peek() == tok {
            Ok(self.bump().span)
        } else {
            Err(self.unexpected(expecting))
        }
    }

    fn eat(&mut self, tok: &Tok) -> bool {
        if self.peek() == tok {
            self.bump();
            true
        } else {
            false
        }
    }

    fn ident(&mut self, expecting: &str) -> PResult<(String, Span)> {
        match self.peek().clone() {
            Tok::Ident(name) => {
                let span = self.bump().span;
                Ok((name, span))
            }
            _ => Err(self.unexpected(expecting)),
        }
    }

    fn peek_ident(&self) -> Option<&str> {
        match self.peek() {
            Tok::Ident(s) => Some(s),
            _ => None,
        }
    }

    fn program(&mut self) -> PResult<MapperProgram> {
        let mut statements = Vec::new();
        while *self.peek() != Tok::Eof {
            statements.push(self.statement()?);
        }
        Ok(MapperProgram { statements })
    }

    fn statement(&mut self) -> PResult<Spanned<Statement>> {
        let span = self.span();
        let keyword = match self.peek() {
            Tok::Ident(k) => k.clone(),
            _ => return Err(self.unexpected("statement")),
        };
        if *self.peek_at(1) == Tok::Assign {
            self.bump();
            self.bump();
            let value = self.expr()?;
            self.expect(&Tok::Semi, ";")?;
            return Ok(Spanned::new(Statement::Global { name: keyword, value }, span));
        }
        let stmt = match keyword.as_str() {
            "Task" => {
                self.bump();
                let task = self.task_pattern()?;
                let procs = self.kind_list("processor kind", parse_proc)?;
                Statement::Task { task, procs }
            }
            "Region" => {
                self.bump();
                let task = self.task_pattern()?;
                let region = self.region_pattern()?;
                let proc = self.proc_pattern()?;
                let memories = self.kind_list("memory kind", MemKind::from_dsl)?;
                Statement::Region {
                    task,
                    region,
                    proc,
                    memories,
                }
            }
            "Layout" => {
                self.bump();
                let task = self.task_pattern()?;
                let region = self.region_pattern()?;
                let proc = self.proc_pattern()?;
                let mut constraints = vec![self.constraint()?];
                while *self.peek() != Tok::Semi {
                    constraints.push(self.constraint()?);
                }
                Statement::Layout {
                    task,
                    region,
                    proc,
                    constraints,
                }
            }
            "IndexTaskMap" | "SingleTaskMap" => {
                self.bump();
                let (tasks, func) = self.task_map_targets()?;
                if keyword == "IndexTaskMap" {
                    Statement::IndexTaskMap { tasks, func }
                } else {
                    Statement::SingleTaskMap { tasks, func }
                }
            }
            "InstanceLimit" | "Instancelimit" => {
                self.bump();
                let (task, _) = self.ident("task name")?;
                let limit = match *self.peek() {
                    Tok::Int(v) => {
                        self.bump();
                        v as u64
                    }
                    _ => return Err(self.unexpected("integer")),
                };
                Statement::InstanceLimit { task, limit }
            }
            "GarbageCollect" | "CollectMemory" => {
                self.bump();
                let (task, _) = self.ident("task name")?;
                let region = self.region_pattern()?;
                Statement::Collect { task, region }
            }
            "def" => {
                self.bump();
                return Ok(Spanned::new(Statement::FuncDef(self.funcdef()?), span));
            }
            _ => return Err(self.unexpected("statement")),
        };
        self.expect(&Tok::Semi, ";")?;
        Ok(Spanned::new(stmt, span))
    }

    fn task_pattern(&mut self) -> PResult<Pattern> {
        if self.eat(&Tok::Star) {
            return Ok(Pattern::Any);
        }
        match self.peek() {
            Tok::Ident(_) => Ok(Pattern::Name(self.ident("task name")?.0)),
            _ => Err(self.unexpected("task name or *")),
        }
    }

    fn region_pattern(&mut self) -> PResult<RegionPattern> {
        match self.peek().clone() {
            Tok::Star => {
                self.bump();
                Ok(RegionPattern::Any)
            }
            Tok::Int(v) => {
                self.bump();
                u32::try_from(v)
                    .map(RegionPattern::Index)
                    .map_err(|_| self.unexpected("region argument index"))
            }
            Tok::Ident(name) => {
                self.bump();
                Ok(RegionPattern::Name(name))
            }
            _ => Err(self.unexpected("region name, index or *")),
        }
    }

    fn proc_pattern(&mut self) -> PResult<ProcPattern> {
        if self.eat(&Tok::Star) {
            return Ok(ProcPattern::Any);
        }
        match self.peek_ident().and_then(parse_proc) {
            Some(kind) => {
                self.bump();
                Ok(ProcPattern::Kind(kind))
            }
            None => Err(self.unexpected("processor kind or *")),
        }
    }

    /// One or more kinds, separated by commas or whitespace.
    fn kind_list<K>(&mut self, what: &str, parse_kind: fn(&str) -> Option<K>) -> PResult<Vec<K>> {
        let mut out = Vec::new();
        loop {
            match self.peek_ident().and_then(parse_kind) {
                Some(kind) => {
                    self.bump();
                    out.push(kind);
                }
                None => return Err(self.unexpected(what)),
            }
            if self.eat(&Tok::Comma) {
                continue;
            }
            if self.peek_ident().and_then(parse_kind).is_none() {
                return Ok(out);
            }
        }
    }

    fn constraint(&mut self) -> PResult<LayoutConstraint> {
        let word = match self.peek_ident() {
            Some(w) => w.to_string(),
            None => return Err(self.unexpected("layout constraint")),
        };
        let c = match word.as_str() {
            "SOA" => LayoutConstraint::Soa,
            "AOS" => LayoutConstraint::Aos,
            "C_order" => LayoutConstraint::COrder,
            "F_order" => LayoutConstraint::FOrder,
            "No_Align" => LayoutConstraint::NoAlign,
            "Align" => {
                self.bump();
                let op = match self.peek() {
                    Tok::EqEq => AlignOp::Eq,
                    Tok::Le => AlignOp::Le,
                    Tok::Ge => AlignOp::Ge,
                    _ => return Err(self.unexpected("== or <= or >=")),
                };
                self.bump();
                let bytes = match *self.peek() {
                    Tok::Int(v) => v as u64,
                    _ => return Err(self.unexpected("integer")),
                };
                self.bump();
                return Ok(LayoutConstraint::Align { op, bytes });
            }
            _ => return Err(self.unexpected("layout constraint")),
        };
        self.bump();
        Ok(c)
    }

    /// `a, b, c func`: comma-separated task names followed by the function.
    fn task_map_targets(&mut self) -> PResult<(Vec<String>, String)> {
        let mut tasks = vec![self.ident("task name")?.0];
        while self.eat(&Tok::Comma) {
            tasks.push(self.ident("task name")?.0);
        }
        let (func, _) = self.ident("function name")?;
        Ok((tasks, func))
    }

    fn funcdef(&mut self) -> PResult<FuncDef> {
        let (name, _) = self.ident("function name")?;
        self.expect(&Tok::LParen, "(")?;
        let mut params = Vec::new();
        if *self.peek() != Tok::RParen {
            loop {
                let kind = match self.peek_ident() {
                    Some("Task") => ParamKind::Task,
                    Some("Tuple") => ParamKind::Tuple,
                    Some("int") => ParamKind::Int,
                    _ => return Err(self.unexpected("Task or Tuple or int")),
                };
                self.bump();
                let (pname, _) = self.ident("parameter name")?;
                params.push(Param { name: pname, kind });
                if !self.eat(&Tok::Comma) {
                    break;
                }
            }
        }
        self.expect(&Tok::RParen, ")")?;
        self.expect(&Tok::LBrace, "{")?;
        let mut body = Vec::new();
        while *self.peek() != Tok::RBrace {
            if *self.peek() == Tok::Eof {
                return Err(self.unexpected("}"));
            }
            body.push(self.func_stmt()?);
        }
        self.bump();
        Ok(FuncDef { name, params, body })
    }

    fn func_stmt(&mut self) -> PResult<Spanned<FuncStmt>> {
        let span = self.span();
        let stmt = if self.peek_ident() == Some("return") {
            self.bump();
            FuncStmt::Return(self.expr()?)
        } else {
            let (name, _) = self.ident("statement")?;
            self.expect(&Tok::Assign, "=")?;
            FuncStmt::Assign {
                name,
                value: self.expr()?,
            }
        };
        self.expect(&Tok::Semi, ";")?;
        Ok(Spanned::new(stmt, span))
    }

    pub fn expr(&mut self) -> PResult<Expr> {
        let cond = self.comparison()?;
        if *self.peek() == Tok::Question {
            self.bump();
            let then = self.expr()?;
            self.expect(&Tok::Colon, ":")?;
            let otherwise = self.expr()?;
            let span = cond.span;
            return Ok(Expr::new(
                ExprKind::Ternary {
                    cond: Box::new(cond),
                    then: Box::new(then),
                    otherwise: Box::new(otherwise),
                },
                span,
            ));
        }
        Ok(cond)
    }

    fn binary_level(
        &mut self,
        next: fn(&mut Self) -> PResult<Expr>,
        op_for: fn(&Tok) -> Option<BinOp>,
    ) -> PResult<Expr> {
        let mut lhs = next(self)?;
        while let Some(op) = op_for(self.peek()) {
            self.bump();
            let rhs = next(self)?;
            let span = lhs.span;
            lhs = Expr::new(
                ExprKind::Binary {
                    op,
                    lhs: Box::new(lhs),
                    rhs: Box::new(rhs),
                },
                span,
            );
        }
        Ok(lhs)
    }

    fn comparison(&mut self) -> PResult<Expr> {
        self.binary_level(Self::additive, |t| match t {
            Tok::Lt => Some(BinOp::Lt),
            Tok::Le => Some(BinOp::Le),
            Tok::Gt => Some(BinOp::Gt),
            Tok::Ge => Some(BinOp::Ge),
            Tok::EqEq => Some(BinOp::Eq),
            Tok::Ne => Some(BinOp::Ne),
            _ => None,
        })
    }

    fn additive(&mut self) -> PResult<Expr> {
        self.binary_level(Self::multiplicative, |t| match t {
            Tok::Plus => Some(BinOp::Add),
            Tok::Minus => Some(BinOp::Sub),
            _ => None,
        })
    }

    fn multiplicative(&mut self) -> PResult<Expr> {
        self.binary_level(Self::unary, |t| match t {
            Tok::Star => Some(BinOp::Mul),
            Tok::Slash => Some(BinOp::Div),
            Tok::Percent => Some(BinOp::Rem),
            _ => None,
        })
    }

    fn unary(&mut self) -> PResult<Expr> {
        if *self.peek() == Tok::Minus {
            let span = self.bump().span;
            let operand = self.unary()?;
            return Ok(Expr::new(ExprKind::Neg(Box::new(operand)), span));
        }
        self.postfix()
    }

    fn postfix(&mut self) -> PResult<Expr> {
        let mut e = self.primary()?;
        loop {
            match self.peek() {
                Tok::Dot => {
                    self.bump();
                    let (name, _) = self.ident("field or method name")?;
                    let span = e.span;
                    if *self.peek() == Tok::LParen {
                        let args = self.call_args()?;
                        e = Expr::new(
                            ExprKind::Method {
                                base: Box::new(e),
                                method: name,
                                args,
                            },
                            span,
                        );
                    } else {
                        e = Expr::new(
                            ExprKind::Field {
                                base: Box::new(e),
                                field: name,
                            },
                            span,
                        );
                    }
                }
                Tok::LBracket => {
                    self.bump();
                    let mut args = Vec::new();
                    loop {
                        let splat = self.eat(&Tok::Star);
                        args.push(IndexArg {
                            splat,
                            expr: self.expr()?,
                        });
                        if !self.eat(&Tok::Comma) {
                            break;
                        }
                    }
                    self.expect(&Tok::RBracket, "]")?;
                    let span = e.span;
                    e = Expr::new(
                        ExprKind::Index {
                            base: Box::new(e),
                            args,
                        },
                        span,
                    );
                }
                _ => return Ok(e),
            }
        }
    }

    fn call_args(&mut self) -> PResult<Vec<Expr>> {
        self.expect(&Tok::LParen, "(")?;
        let mut args = Vec::new();
        if *self.peek() != Tok::RParen {
            loop {
                args.push(self.expr()?);
                if !self.eat(&Tok::Comma) {
                    break;
                }
            }
        }
        self.expect(&Tok::RParen, ")")?;
        Ok(args)
    }

    fn primary(&mut self) -> PResult<Expr> {
        let span = self.span();
        match self.peek().clone() {
            Tok::Int(v) => {
                self.bump();
                Ok(Expr::new(ExprKind::Int(v), span))
            }
            Tok::Ident(name) => {
                self.bump();
                if *self.peek() != Tok::LParen {
                    return Ok(Expr::new(ExprKind::Var(name), span));
                }
                if name == "Machine" {
                    self.bump();
                    let kind = match self.peek_ident().and_then(parse_proc) {
                        Some(k) => k,
                        None => return Err(self.unexpected("processor kind")),
                    };
                    self.bump();
                    self.expect(&Tok::RParen, ")")?;
                    return Ok(Expr::new(ExprKind::Machine(kind), span));
                }
                let args = self.call_args()?;
                Ok(Expr::new(ExprKind::Call { name, args }, span))
            }
            Tok::LParen => {
                self.bump();
                let first = self.expr()?;
                if self.eat(&Tok::Comma) {
                    let mut items = vec![first];
                    loop {
                        items.push(self.expr()?);
                        if !self.eat(&Tok::Comma) {
                            break;
                        }
                    }
                    self.expect(&Tok::RParen, ")")?;
                    return Ok(Expr::new(ExprKind::Tuple(items), span));
                }
                self.expect(&Tok::RParen, ")")?;
                Ok(Expr::new(ExprKind::Paren(Box::new(first)), span))
            }
            _ => Err(self.unexpected("expression")),
        }
    }
}

fn parse_proc(s: &str) -> Option<ProcKind> {
    s.parse().ok()
}
