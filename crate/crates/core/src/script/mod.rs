//! The sandboxed callback language.
//!
//! Every callback in a bundle is written in this small expression/statement
//! language. A script sees only the bindings it is handed (`state`, `self`,
//! `suggestion`, declared arguments) plus the builtins; the only source of
//! time is the injected clock behind `now()`. Execution is bounded by a
//! per-invocation statement budget.
//!
//! ```text
//! recent = tail(state.interactions, 3)
//! if len(recent) == 3 {
//!     for e in recent { if e.kind != "month" { return false } }
//!     return true
//! }
//! return false
//! ```

pub mod ast;
mod builtins;
mod eval;
mod lexer;
mod parser;

use std::collections::BTreeSet;
use std::fmt;
use std::sync::Arc;

use thiserror::Error;

pub use builtins::{is_builtin, BUILTINS};
pub use lexer::is_keyword;
pub use eval::{evaluate, Env, DEFAULT_STEP_BUDGET, MAX_COLLECTION_LEN};

use ast::{Expr, Stmt};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("syntax error at line {line}, column {col}: found {found}, expected {expected}")]
pub struct SyntaxError {
    pub line: u32,
    pub col: u32,
    pub found: String,
    pub expected: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum RuntimeErrorKind {
    UnknownIdentifier(String),
    TypeMismatch(String),
    DivisionByZero,
    IndexOutOfRange(String),
    MissingKey(String),
    UnknownBuiltin(String),
    Arity(String),
    InvalidArgument(String),
    ReadOnlyBinding(String),
    NonFinite,
    TooLarge,
}

impl RuntimeErrorKind {
    /// Stable name of the error kind.
    pub fn name(&self) -> &'static str {
        match self {
            RuntimeErrorKind::UnknownIdentifier(_) => "UnknownIdentifier",
            RuntimeErrorKind::TypeMismatch(_) => "TypeMismatch",
            RuntimeErrorKind::DivisionByZero => "DivisionByZero",
            RuntimeErrorKind::IndexOutOfRange(_) => "IndexOutOfRange",
            RuntimeErrorKind::MissingKey(_) => "MissingKey",
            RuntimeErrorKind::UnknownBuiltin(_) => "UnknownBuiltin",
            RuntimeErrorKind::Arity(_) => "Arity",
            RuntimeErrorKind::InvalidArgument(_) => "InvalidArgument",
            RuntimeErrorKind::ReadOnlyBinding(_) => "ReadOnlyBinding",
            RuntimeErrorKind::NonFinite => "NonFinite",
            RuntimeErrorKind::TooLarge => "TooLarge",
        }
    }
}

impl fmt::Display for RuntimeErrorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RuntimeErrorKind::UnknownIdentifier(n) => write!(f, "unknown identifier '{n}'"),
            RuntimeErrorKind::TypeMismatch(m) => write!(f, "type mismatch: {m}"),
            RuntimeErrorKind::DivisionByZero => f.write_str("division by zero"),
            RuntimeErrorKind::IndexOutOfRange(m) => write!(f, "index out of range: {m}"),
            RuntimeErrorKind::MissingKey(k) => write!(f, "missing key '{k}'"),
            RuntimeErrorKind::UnknownBuiltin(n) => write!(f, "unknown builtin '{n}'"),
            RuntimeErrorKind::Arity(m) => f.write_str(m),
            RuntimeErrorKind::InvalidArgument(m) => f.write_str(m),
            RuntimeErrorKind::ReadOnlyBinding(n) => write!(f, "binding '{n}' is read-only"),
            RuntimeErrorKind::NonFinite => f.write_str("arithmetic produced a non-finite number"),
            RuntimeErrorKind::TooLarge => write!(
                f,
                "collection exceeds {MAX_COLLECTION_LEN} elements"
            ),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EvalError {
    #[error("runtime error at line {line}, column {col}: {kind}")]
    Runtime {
        kind: RuntimeErrorKind,
        line: u32,
        col: u32,
    },
    #[error("step budget of {budget} exceeded at line {line}, column {col}")]
    BudgetExceeded { budget: u64, line: u32, col: u32 },
}

impl EvalError {
    pub fn kind(&self) -> Option<&RuntimeErrorKind> {
        match self {
            EvalError::Runtime { kind, .. } => Some(kind),
            EvalError::BudgetExceeded { .. } => None,
        }
    }

    /// The error kind's name, or `BudgetExceeded`.
    pub fn name(&self) -> &'static str {
        match self {
            EvalError::Runtime { kind, .. } => kind.name(),
            EvalError::BudgetExceeded { .. } => "BudgetExceeded",
        }
    }

    pub fn position(&self) -> (u32, u32) {
        match self {
            EvalError::Runtime { line, col, .. } | EvalError::BudgetExceeded { line, col, .. } => {
                (*line, *col)
            }
        }
    }
}

/// A parsed callback. Cheap to clone; the tree is shared and never mutated.
#[derive(Debug, Clone)]
pub struct Script {
    source: Arc<str>,
    ast: Arc<[Stmt]>,
    declared_args: Arc<[String]>,
}

impl PartialEq for Script {
    fn eq(&self, other: &Self) -> bool {
        self.ast == other.ast && self.declared_args == other.declared_args
    }
}

impl Script {
    pub fn source(&self) -> &str {
        &self.source
    }

    pub fn ast(&self) -> &[Stmt] {
        &self.ast
    }

    pub fn declared_args(&self) -> &[String] {
        &self.declared_args
    }

    /// Canonical source text for the parsed tree.
    pub fn pretty(&self) -> String {
        ast::pretty(&self.ast)
    }

    pub fn eval(&self, env: &mut Env) -> Result<crate::Value, EvalError> {
        evaluate(self, env)
    }

    /// Names of all builtins the script calls, known or not.
    pub fn called_functions(&self) -> BTreeSet<String> {
        let mut out = BTreeSet::new();
        for s in self.ast.iter() {
            walk_stmt_calls(s, &mut out);
        }
        out
    }

    /// True when no executed `return` can produce a map: there is no
    /// `return` at all, or every one returns a non-map literal.
    pub fn provably_not_map(&self) -> bool {
        let mut returns = Vec::new();
        collect_returns(&self.ast, &mut returns);
        returns.iter().all(|r| match r {
            None => true,
            Some(Expr::Literal(..)) | Some(Expr::List(..)) => true,
            Some(_) => false,
        })
    }
}

pub fn parse_script(source: &str, declared_args: &[String]) -> Result<Script, SyntaxError> {
    let ast = parser::parse_program(source)?;
    Ok(Script {
        source: Arc::from(source),
        ast: Arc::from(ast),
        declared_args: declared_args.into(),
    })
}

fn collect_returns<'a>(body: &'a [Stmt], out: &mut Vec<Option<&'a Expr>>) {
    for s in body {
        match s {
            Stmt::Return(e, _) => out.push(e.as_ref()),
            Stmt::If {
                then_body,
                else_body,
                ..
            } => {
                collect_returns(then_body, out);
                if let Some(b) = else_body {
                    collect_returns(b, out);
                }
            }
            Stmt::For { body, .. } => collect_returns(body, out),
            _ => {}
        }
    }
}

fn walk_stmt_calls(s: &Stmt, out: &mut BTreeSet<String>) {
    match s {
        Stmt::Assign { target, value, .. } => {
            walk_expr_calls(target, out);
            walk_expr_calls(value, out);
        }
        Stmt::If {
            cond,
            then_body,
            else_body,
            ..
        } => {
            walk_expr_calls(cond, out);
            then_body.iter().for_each(|s| walk_stmt_calls(s, out));
            if let Some(b) = else_body {
                b.iter().for_each(|s| walk_stmt_calls(s, out));
            }
        }
        Stmt::For { iter, body, .. } => {
            walk_expr_calls(iter, out);
            body.iter().for_each(|s| walk_stmt_calls(s, out));
        }
        Stmt::Return(Some(e), _) | Stmt::Expr(e, _) => walk_expr_calls(e, out),
        Stmt::Return(None, _) => {}
    }
}

fn walk_expr_calls(e: &Expr, out: &mut BTreeSet<String>) {
    match e {
        Expr::Literal(..) | Expr::Ident(..) => {}
        Expr::List(items, _) => items.iter().for_each(|e| walk_expr_calls(e, out)),
        Expr::Map(entries, _) => entries.iter().for_each(|(_, e)| walk_expr_calls(e, out)),
        Expr::Field(b, _, _) | Expr::Unary(_, b, _) => walk_expr_calls(b, out),
        Expr::Index(a, b, _) | Expr::Binary(_, a, b, _) => {
            walk_expr_calls(a, out);
            walk_expr_calls(b, out);
        }
        Expr::Cond {
            cond,
            then,
            otherwise,
            ..
        } => {
            walk_expr_calls(cond, out);
            walk_expr_calls(then, out);
            walk_expr_calls(otherwise, out);
        }
        Expr::Call(name, args, _) => {
            out.insert(name.clone());
            args.iter().for_each(|e| walk_expr_calls(e, out));
        }
    }
}

/// Root names the script reads or writes that it does not itself define.
///
/// Locals (names first bound by a plain assignment or a `for` loop, in
/// source order) are excluded; a name read before its first local
/// definition is reported. Builtin call names are never identifiers.
pub fn free_identifiers(script: &Script) -> Vec<String> {
    let mut scan = FreeScan::default();
    scan.block(script.ast());
    scan.free.into_iter().collect()
}

#[derive(Default)]
struct FreeScan {
    defined: BTreeSet<String>,
    free: BTreeSet<String>,
}

impl FreeScan {
    fn use_name(&mut self, name: &str) {
        if !self.defined.contains(name) {
            self.free.insert(name.to_string());
        }
    }

    fn block(&mut self, body: &[Stmt]) {
        for s in body {
            self.stmt(s);
        }
    }

    fn stmt(&mut self, s: &Stmt) {
        match s {
            Stmt::Assign { target, value, .. } => {
                self.expr(value);
                match target {
                    Expr::Ident(name, _) => {
                        if !self.free.contains(name) {
                            self.defined.insert(name.clone());
                        }
                    }
                    other => self.place(other),
                }
            }
            Stmt::If {
                cond,
                then_body,
                else_body,
                ..
            } => {
                self.expr(cond);
                self.block(then_body);
                if let Some(b) = else_body {
                    self.block(b);
                }
            }
            Stmt::For {
                var, iter, body, ..
            } => {
                self.expr(iter);
                if !self.free.contains(var) {
                    self.defined.insert(var.clone());
                }
                self.block(body);
            }
            Stmt::Return(Some(e), _) | Stmt::Expr(e, _) => self.expr(e),
            Stmt::Return(None, _) => {}
        }
    }

    fn place(&mut self, e: &Expr) {
        match e {
            Expr::Ident(name, _) => self.use_name(name),
            Expr::Field(base, _, _) => self.place(base),
            Expr::Index(base, idx, _) => {
                self.place(base);
                self.expr(idx);
            }
            other => self.expr(other),
        }
    }

    fn expr(&mut self, e: &Expr) {
        match e {
            Expr::Literal(..) => {}
            Expr::Ident(name, _) => self.use_name(name),
            Expr::List(items, _) => items.iter().for_each(|e| self.expr(e)),
            Expr::Map(entries, _) => entries.iter().for_each(|(_, e)| self.expr(e)),
            Expr::Field(b, _, _) | Expr::Unary(_, b, _) => self.expr(b),
            Expr::Index(a, b, _) | Expr::Binary(_, a, b, _) => {
                self.expr(a);
                self.expr(b);
            }
            Expr::Cond {
                cond,
                then,
                otherwise,
                ..
            } => {
                self.expr(cond);
                self.expr(then);
                self.expr(otherwise);
            }
            Expr::Call(_, args, _) => args.iter().for_each(|e| self.expr(e)),
        }
    }
}
