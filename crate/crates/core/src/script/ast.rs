use std::fmt::{self, Write as _};

use crate::value::format_number;

/// 1-based source position. Spans never take part in equality, so two trees
/// parsed from differently formatted sources compare equal.
#[derive(Debug, Clone, Copy, Default, Eq)]
pub struct Span {
    pub line: u32,
    pub col: u32,
}

impl Span {
    pub fn new(line: u32, col: u32) -> Self {
        Span { line, col }
    }
}

impl PartialEq for Span {
    fn eq(&self, _: &Span) -> bool {
        true
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Literal {
    Null,
    Bool(bool),
    Number(f64),
    String(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UnaryOp {
    Neg,
    Not,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinaryOp {
    Add,
    Sub,
    Mul,
    Div,
    Rem,
    Eq,
    Ne,
    Lt,
    Le,
    Gt,
    Ge,
    And,
    Or,
}

impl BinaryOp {
    pub fn symbol(self) -> &'static str {
        match self {
            BinaryOp::Add => "+",
            BinaryOp::Sub => "-",
            BinaryOp::Mul => "*",
            BinaryOp::Div => "/",
            BinaryOp::Rem => "%",
            BinaryOp::Eq => "==",
            BinaryOp::Ne => "!=",
            BinaryOp::Lt => "<",
            BinaryOp::Le => "<=",
            BinaryOp::Gt => ">",
            BinaryOp::Ge => ">=",
            BinaryOp::And => "and",
            BinaryOp::Or => "or",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Literal(Literal, Span),
    List(Vec<Expr>, Span),
    Map(Vec<(String, Expr)>, Span),
    Ident(String, Span),
    Field(Box<Expr>, String, Span),
    Index(Box<Expr>, Box<Expr>, Span),
    Unary(UnaryOp, Box<Expr>, Span),
    Binary(BinaryOp, Box<Expr>, Box<Expr>, Span),
    Cond {
        cond: Box<Expr>,
        then: Box<Expr>,
        otherwise: Box<Expr>,
        span: Span,
    },
    Call(String, Vec<Expr>, Span),
}

impl Expr {
    pub fn span(&self) -> Span {
        match self {
            Expr::Literal(_, s)
            | Expr::List(_, s)
            | Expr::Map(_, s)
            | Expr::Ident(_, s)
            | Expr::Field(_, _, s)
            | Expr::Index(_, _, s)
            | Expr::Unary(_, _, s)
            | Expr::Binary(_, _, _, s)
            | Expr::Call(_, _, s) => *s,
            Expr::Cond { span, .. } => *span,
        }
    }

    /// Root identifier of a place expression (`state` for `state.a[0].b`).
    pub fn root_name(&self) -> Option<&str> {
        match self {
            Expr::Ident(name, _) => Some(name),
            Expr::Field(base, _, _) | Expr::Index(base, _, _) => base.root_name(),
            _ => None,
        }
    }

    pub fn is_place(&self) -> bool {
        match self {
            Expr::Ident(..) => true,
            Expr::Field(base, _, _) | Expr::Index(base, _, _) => base.is_place(),
            _ => false,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Stmt {
    Assign {
        target: Expr,
        value: Expr,
        span: Span,
    },
    If {
        cond: Expr,
        then_body: Vec<Stmt>,
        else_body: Option<Vec<Stmt>>,
        span: Span,
    },
    For {
        var: String,
        iter: Expr,
        body: Vec<Stmt>,
        span: Span,
    },
    Return(Option<Expr>, Span),
    Expr(Expr, Span),
}

impl Stmt {
    pub fn span(&self) -> Span {
        match self {
            Stmt::Assign { span, .. } | Stmt::If { span, .. } | Stmt::For { span, .. } => *span,
            Stmt::Return(_, s) | Stmt::Expr(_, s) => *s,
        }
    }
}

pub(crate) fn quote(s: &str) -> String {
    let mut out = String::with_capacity(s.len() + 2);
    out.push('"');
    for c in s.chars() {
        match c {
            '"' => out.push_str("\\\""),
            '\\' => out.push_str("\\\\"),
            '\n' => out.push_str("\\n"),
            '\t' => out.push_str("\\t"),
            '\r' => out.push_str("\\r"),
            '\0' => out.push_str("\\0"),
            c if (c as u32) < 0x20 => {
                let _ = write!(out, "\\u{:04x}", c as u32);
            }
            c => out.push(c),
        }
    }
    out.push('"');
    out
}

// Printing fully parenthesizes operators so that re-parsing the output
// reproduces the same tree.
impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Literal(lit, _) => match lit {
                Literal::Null => f.write_str("null"),
                Literal::Bool(b) => write!(f, "{b}"),
                Literal::Number(n) => {
                    if n.is_sign_negative() {
                        write!(f, "(-{})", format_number(-n))
                    } else {
                        f.write_str(&format_number(*n))
                    }
                }
                Literal::String(s) => f.write_str(&quote(s)),
            },
            Expr::List(items, _) => {
                f.write_str("[")?;
                for (i, item) in items.iter().enumerate() {
                    if i > 0 {
                        f.write_str(", ")?;
                    }
                    write!(f, "{item}")?;
                }
                f.write_str("]")
            }
            Expr::Map(entries, _) => {
                f.write_str("{")?;
                for (i, (k, v)) in entries.iter().enumerate() {
                    if i > 0 {
                        f.write_str(", ")?;
                    }
                    write!(f, "{}: {v}", quote(k))?;
                }
                f.write_str("}")
            }
            Expr::Ident(name, _) => f.write_str(name),
            Expr::Field(base, name, _) => write!(f, "{base}.{name}"),
            Expr::Index(base, idx, _) => write!(f, "{base}[{idx}]"),
            Expr::Unary(UnaryOp::Neg, e, _) => write!(f, "(-{e})"),
            Expr::Unary(UnaryOp::Not, e, _) => write!(f, "(not {e})"),
            Expr::Binary(op, l, r, _) => write!(f, "({l} {} {r})", op.symbol()),
            Expr::Cond {
                cond,
                then,
                otherwise,
                ..
            } => write!(f, "(if {cond} then {then} else {otherwise})"),
            Expr::Call(name, args, _) => {
                write!(f, "{name}(")?;
                for (i, a) in args.iter().enumerate() {
                    if i > 0 {
                        f.write_str(", ")?;
                    }
                    write!(f, "{a}")?;
                }
                f.write_str(")")
            }
        }
    }
}

fn write_block(out: &mut String, body: &[Stmt], depth: usize) {
    for stmt in body {
        write_stmt(out, stmt, depth);
    }
}

fn write_stmt(out: &mut String, stmt: &Stmt, depth: usize) {
    let pad = "    ".repeat(depth);
    match stmt {
        Stmt::Assign { target, value, .. } => {
            let _ = writeln!(out, "{pad}{target} = {value}");
        }
        Stmt::Return(Some(e), _) => {
            let _ = writeln!(out, "{pad}return {e}");
        }
        Stmt::Return(None, _) => {
            let _ = writeln!(out, "{pad}return");
        }
        Stmt::Expr(e, _) => {
            let _ = writeln!(out, "{pad}{e}");
        }
        Stmt::For {
            var, iter, body, ..
        } => {
            let _ = writeln!(out, "{pad}for {var} in {iter} {{");
            write_block(out, body, depth + 1);
            let _ = writeln!(out, "{pad}}}");
        }
        Stmt::If {
            cond,
            then_body,
            else_body,
            ..
        } => {
            let _ = writeln!(out, "{pad}if {cond} {{");
            write_block(out, then_body, depth + 1);
            match else_body {
                Some(body) => {
                    let _ = writeln!(out, "{pad}}} else {{");
                    write_block(out, body, depth + 1);
                    let _ = writeln!(out, "{pad}}}");
                }
                None => {
                    let _ = writeln!(out, "{pad}}}");
                }
            }
        }
    }
}

/// Renders a statement list as canonical source text.
pub fn pretty(body: &[Stmt]) -> String {
    let mut out = String::new();
    write_block(&mut out, body, 0);
    out
}
