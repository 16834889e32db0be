use std::borrow::Cow;
use std::collections::BTreeMap;

use super::ast::{BinaryOp, Expr, Literal, Span, Stmt, UnaryOp};
use super::builtins;
use super::{EvalError, RuntimeErrorKind, Script};
use crate::value::{Map, Value};

/// Upper bound on list and string lengths produced by scripts.
pub const MAX_COLLECTION_LEN: usize = 1 << 24;

pub const DEFAULT_STEP_BUDGET: u64 = 1_000_000;

#[derive(Debug, Clone)]
struct Binding {
    value: Value,
    writable: bool,
}

/// Bindings for one evaluation. Only bindings added with [`Env::bind_mut`]
/// (by convention `state` and `self`) can be modified by the script; names
/// first assigned inside the script become locals.
#[derive(Debug, Clone)]
pub struct Env {
    vars: BTreeMap<String, Binding>,
    now: f64,
    step_budget: u64,
}

impl Env {
    pub fn new(now: f64, step_budget: u64) -> Self {
        Env {
            vars: BTreeMap::new(),
            now,
            step_budget: step_budget.max(1),
        }
    }

    pub fn with(mut self, name: &str, value: Value) -> Self {
        self.bind(name, value);
        self
    }

    pub fn with_mut(mut self, name: &str, value: Value) -> Self {
        self.bind_mut(name, value);
        self
    }

    /// Read-only binding.
    pub fn bind(&mut self, name: &str, value: Value) {
        self.vars.insert(
            name.to_string(),
            Binding {
                value,
                writable: false,
            },
        );
    }

    /// Binding the script may mutate.
    pub fn bind_mut(&mut self, name: &str, value: Value) {
        self.vars.insert(
            name.to_string(),
            Binding {
                value,
                writable: true,
            },
        );
    }

    pub fn get(&self, name: &str) -> Option<&Value> {
        self.vars.get(name).map(|b| &b.value)
    }

    pub fn take(&mut self, name: &str) -> Option<Value> {
        self.vars.remove(name).map(|b| b.value)
    }

    pub fn now(&self) -> f64 {
        self.now
    }

    pub fn step_budget(&self) -> u64 {
        self.step_budget
    }
}

enum Flow {
    Normal,
    Return(Value),
}

enum Segment {
    Field(String),
    Index(Value),
}

struct Interp {
    steps: u64,
    budget: u64,
}

type EResult<T> = Result<T, EvalError>;

pub(crate) fn rt(kind: RuntimeErrorKind, span: Span) -> EvalError {
    EvalError::Runtime {
        kind,
        line: span.line,
        col: span.col,
    }
}

fn type_err(msg: impl Into<String>, span: Span) -> EvalError {
    rt(RuntimeErrorKind::TypeMismatch(msg.into()), span)
}

pub(crate) fn finite(n: f64, span: Span) -> EResult<Value> {
    if n.is_finite() {
        Ok(Value::Number(n))
    } else {
        Err(rt(RuntimeErrorKind::NonFinite, span))
    }
}

/// Resolves a possibly negative list index.
fn list_index(len: usize, idx: &Value, span: Span) -> EResult<usize> {
    let Value::Number(n) = idx else {
        return Err(type_err(
            format!("list index must be a number, not {}", idx.type_name()),
            span,
        ));
    };
    if n.fract() != 0.0 {
        return Err(type_err(format!("list index must be an integer, got {n}"), span));
    }
    let i = if *n < 0.0 { len as f64 + n } else { *n };
    if i < 0.0 || i >= len as f64 {
        return Err(rt(
            RuntimeErrorKind::IndexOutOfRange(format!("index {n} for length {len}")),
            span,
        ));
    }
    Ok(i as usize)
}

fn index_value<'v>(base: Cow<'v, Value>, idx: &Value, span: Span) -> EResult<Cow<'v, Value>> {
    match base {
        Cow::Borrowed(v) => index_ref(v, idx, span).map(Cow::Borrowed),
        Cow::Owned(v) => index_ref(&v, idx, span).map(|x| Cow::Owned(x.clone())),
    }
}

fn index_ref<'v>(base: &'v Value, idx: &Value, span: Span) -> EResult<&'v Value> {
    match base {
        Value::List(items) => Ok(&items[list_index(items.len(), idx, span)?]),
        Value::Map(m) => {
            let Value::String(key) = idx else {
                return Err(type_err(
                    format!("map key must be a string, not {}", idx.type_name()),
                    span,
                ));
            };
            m.get(key)
                .ok_or_else(|| rt(RuntimeErrorKind::MissingKey(key.clone()), span))
        }
        other => Err(type_err(format!("cannot index into {}", other.type_name()), span)),
    }
}

fn field_ref<'v>(base: &'v Value, name: &str, span: Span) -> EResult<&'v Value> {
    match base {
        Value::Map(m) => m
            .get(name)
            .ok_or_else(|| rt(RuntimeErrorKind::MissingKey(name.to_string()), span)),
        other => Err(type_err(
            format!("cannot read field '{name}' of {}", other.type_name()),
            span,
        )),
    }
}

fn string_index(s: &str, idx: &Value, span: Span) -> EResult<Value> {
    let chars: Vec<char> = s.chars().collect();
    let i = list_index(chars.len(), idx, span)?;
    Ok(Value::String(chars[i].to_string()))
}

impl Interp {
    fn step(&mut self, span: Span) -> EResult<()> {
        self.steps += 1;
        if self.steps > self.budget {
            return Err(EvalError::BudgetExceeded {
                budget: self.budget,
                line: span.line,
                col: span.col,
            });
        }
        Ok(())
    }

    fn block(&mut self, env: &mut Env, body: &[Stmt]) -> EResult<Flow> {
        for stmt in body {
            if let Flow::Return(v) = self.stmt(env, stmt)? {
                return Ok(Flow::Return(v));
            }
        }
        Ok(Flow::Normal)
    }

    fn stmt(&mut self, env: &mut Env, stmt: &Stmt) -> EResult<Flow> {
        self.step(stmt.span())?;
        match stmt {
            Stmt::Return(expr, _) => {
                let v = match expr {
                    Some(e) => eval(env, e)?.into_owned(),
                    None => Value::Null,
                };
                Ok(Flow::Return(v))
            }
            Stmt::Expr(e, _) => {
                eval(env, e)?;
                Ok(Flow::Normal)
            }
            Stmt::If {
                cond,
                then_body,
                else_body,
                ..
            } => {
                if eval(env, cond)?.truthy() {
                    self.block(env, then_body)
                } else if let Some(body) = else_body {
                    self.block(env, body)
                } else {
                    Ok(Flow::Normal)
                }
            }
            Stmt::For {
                var,
                iter,
                body,
                span,
            } => {
                let items: Vec<Value> = match eval(env, iter)?.into_owned() {
                    Value::List(items) => items,
                    Value::Map(m) => m.into_keys().map(Value::String).collect(),
                    other => {
                        return Err(type_err(
                            format!("cannot iterate over {}", other.type_name()),
                            iter.span(),
                        ))
                    }
                };
                if let Some(b) = env.vars.get(var) {
                    if !b.writable || var == "state" || var == "self" {
                        return Err(rt(RuntimeErrorKind::ReadOnlyBinding(var.clone()), *span));
                    }
                }
                for item in items {
                    self.step(*span)?;
                    env.bind_mut(var, item);
                    if let Flow::Return(v) = self.block(env, body)? {
                        return Ok(Flow::Return(v));
                    }
                }
                Ok(Flow::Normal)
            }
            Stmt::Assign {
                target,
                value,
                span,
            } => {
                let value = eval(env, value)?.into_owned();
                assign(env, target, value, *span)?;
                Ok(Flow::Normal)
            }
        }
    }
}

fn collect_path(env: &Env, e: &Expr, out: &mut Vec<Segment>) -> EResult<String> {
    match e {
        Expr::Ident(name, _) => Ok(name.clone()),
        Expr::Field(base, name, _) => {
            let root = collect_path(env, base, out)?;
            out.push(Segment::Field(name.clone()));
            Ok(root)
        }
        Expr::Index(base, idx, _) => {
            let root = collect_path(env, base, out)?;
            let idx = eval(env, idx)?.into_owned();
            out.push(Segment::Index(idx));
            Ok(root)
        }
        other => Err(type_err("assignment target is not a path", other.span())),
    }
}

fn assign(env: &mut Env, target: &Expr, value: Value, span: Span) -> EResult<()> {
    let mut path = Vec::new();
    let root = collect_path(env, target, &mut path)?;
    let is_root_binding = root == "state" || root == "self";
    match env.vars.get_mut(&root) {
        None if path.is_empty() => {
            env.bind_mut(&root, value);
            Ok(())
        }
        None => Err(rt(RuntimeErrorKind::UnknownIdentifier(root), target.span())),
        Some(b) if !b.writable => Err(rt(RuntimeErrorKind::ReadOnlyBinding(root), span)),
        Some(b) => {
            if path.is_empty() {
                if is_root_binding && !matches!(value, Value::Map(_)) {
                    return Err(type_err(
                        format!("'{root}' must remain a map, not {}", value.type_name()),
                        span,
                    ));
                }
                b.value = value;
                return Ok(());
            }
            let mut slot = &mut b.value;
            let last = path.len() - 1;
            for (i, seg) in path.into_iter().enumerate() {
                slot = match (seg, slot) {
                    (Segment::Field(name), Value::Map(m)) => {
                        if i == last {
                            m.insert(name, value);
                            return Ok(());
                        }
                        m.get_mut(&name)
                            .ok_or_else(|| rt(RuntimeErrorKind::MissingKey(name), span))?
                    }
                    (Segment::Index(Value::String(key)), Value::Map(m)) => {
                        if i == last {
                            m.insert(key, value);
                            return Ok(());
                        }
                        m.get_mut(&key)
                            .ok_or_else(|| rt(RuntimeErrorKind::MissingKey(key), span))?
                    }
                    (Segment::Index(idx), Value::List(items)) => {
                        let at = list_index(items.len(), &idx, span)?;
                        if i == last {
                            items[at] = value;
                            return Ok(());
                        }
                        &mut items[at]
                    }
                    (Segment::Field(name), other) => {
                        return Err(type_err(
                            format!("cannot set field '{name}' on {}", other.type_name()),
                            span,
                        ))
                    }
                    (Segment::Index(idx), other) => {
                        return Err(type_err(
                            format!(
                                "cannot assign index {} on {}",
                                idx.type_name(),
                                other.type_name()
                            ),
                            span,
                        ))
                    }
                };
            }
            unreachable!("path is non-empty")
        }
    }
}

fn compare(op: BinaryOp, l: &Value, r: &Value, span: Span) -> EResult<Value> {
    let ord = match (l, r) {
        (Value::Number(a), Value::Number(b)) => a.partial_cmp(b),
        (Value::String(a), Value::String(b)) => Some(a.cmp(b)),
        _ => {
            return Err(type_err(
                format!(
                    "cannot compare {} {} {}",
                    l.type_name(),
                    op.symbol(),
                    r.type_name()
                ),
                span,
            ))
        }
    };
    let ord = ord.ok_or_else(|| rt(RuntimeErrorKind::NonFinite, span))?;
    use std::cmp::Ordering::*;
    let b = match op {
        BinaryOp::Lt => ord == Less,
        BinaryOp::Le => ord != Greater,
        BinaryOp::Gt => ord == Greater,
        BinaryOp::Ge => ord != Less,
        _ => unreachable!(),
    };
    Ok(Value::Bool(b))
}

fn arith(op: BinaryOp, l: Value, r: &Value, span: Span) -> EResult<Value> {
    match (op, l, r) {
        (BinaryOp::Add, Value::Number(a), Value::Number(b)) => finite(a + b, span),
        (BinaryOp::Sub, Value::Number(a), Value::Number(b)) => finite(a - b, span),
        (BinaryOp::Mul, Value::Number(a), Value::Number(b)) => finite(a * b, span),
        (BinaryOp::Div, Value::Number(_), Value::Number(b)) if *b == 0.0 => {
            Err(rt(RuntimeErrorKind::DivisionByZero, span))
        }
        (BinaryOp::Div, Value::Number(a), Value::Number(b)) => finite(a / b, span),
        (BinaryOp::Rem, Value::Number(_), Value::Number(b)) if *b == 0.0 => {
            Err(rt(RuntimeErrorKind::DivisionByZero, span))
        }
        // floored modulo: the result takes the sign of the divisor
        (BinaryOp::Rem, Value::Number(a), Value::Number(b)) => {
            let m = a % b;
            let m = if m != 0.0 && (m < 0.0) != (*b < 0.0) { m + b } else { m };
            finite(m, span)
        }
        (BinaryOp::Add, Value::String(mut a), Value::String(b)) => {
            if a.len() + b.len() > MAX_COLLECTION_LEN {
                return Err(rt(RuntimeErrorKind::TooLarge, span));
            }
            a.push_str(b);
            Ok(Value::String(a))
        }
        (BinaryOp::Add, Value::List(mut a), Value::List(b)) => {
            if a.len() + b.len() > MAX_COLLECTION_LEN {
                return Err(rt(RuntimeErrorKind::TooLarge, span));
            }
            a.extend(b.iter().cloned());
            Ok(Value::List(a))
        }
        (op, l, r) => Err(type_err(
            format!(
                "unsupported operands {} {} {}",
                l.type_name(),
                op.symbol(),
                r.type_name()
            ),
            span,
        )),
    }
}

pub(crate) fn eval<'e>(env: &'e Env, e: &Expr) -> EResult<Cow<'e, Value>> {
    Ok(match e {
        Expr::Literal(lit, _) => Cow::Owned(match lit {
            Literal::Null => Value::Null,
            Literal::Bool(b) => Value::Bool(*b),
            Literal::Number(n) => Value::Number(*n),
            Literal::String(s) => Value::String(s.clone()),
        }),
        Expr::Ident(name, span) => match env.vars.get(name) {
            Some(b) => Cow::Borrowed(&b.value),
            None => return Err(rt(RuntimeErrorKind::UnknownIdentifier(name.clone()), *span)),
        },
        Expr::Field(base, name, span) => match eval(env, base)? {
            Cow::Borrowed(v) => Cow::Borrowed(field_ref(v, name, *span)?),
            Cow::Owned(v) => Cow::Owned(field_ref(&v, name, *span)?.clone()),
        },
        Expr::Index(base, idx, span) => {
            let base = eval(env, base)?;
            let idx = eval(env, idx)?;
            if let Value::String(s) = base.as_ref() {
                Cow::Owned(string_index(s, &idx, *span)?)
            } else {
                index_value(base, &idx, *span)?
            }
        }
        Expr::List(items, span) => {
            if items.len() > MAX_COLLECTION_LEN {
                return Err(rt(RuntimeErrorKind::TooLarge, *span));
            }
            let mut out = Vec::with_capacity(items.len());
            for item in items {
                out.push(eval(env, item)?.into_owned());
            }
            Cow::Owned(Value::List(out))
        }
        Expr::Map(entries, _) => {
            let mut out = Map::new();
            for (k, v) in entries {
                out.insert(k.clone(), eval(env, v)?.into_owned());
            }
            Cow::Owned(Value::Map(out))
        }
        Expr::Unary(UnaryOp::Not, inner, _) => Cow::Owned(Value::Bool(!eval(env, inner)?.truthy())),
        Expr::Unary(UnaryOp::Neg, inner, span) => match eval(env, inner)?.as_ref() {
            Value::Number(n) => Cow::Owned(Value::Number(-n)),
            other => {
                return Err(type_err(
                    format!("cannot negate {}", other.type_name()),
                    *span,
                ))
            }
        },
        Expr::Binary(BinaryOp::And, l, r, _) => {
            let v = eval(env, l)?.truthy() && eval(env, r)?.truthy();
            Cow::Owned(Value::Bool(v))
        }
        Expr::Binary(BinaryOp::Or, l, r, _) => {
            let v = eval(env, l)?.truthy() || eval(env, r)?.truthy();
            Cow::Owned(Value::Bool(v))
        }
        Expr::Binary(op, l, r, span) => {
            let lv = eval(env, l)?;
            let rv = eval(env, r)?;
            Cow::Owned(match op {
                BinaryOp::Eq => Value::Bool(lv == rv),
                BinaryOp::Ne => Value::Bool(lv != rv),
                BinaryOp::Lt | BinaryOp::Le | BinaryOp::Gt | BinaryOp::Ge => {
                    compare(*op, &lv, &rv, *span)?
                }
                _ => arith(*op, lv.into_owned(), &rv, *span)?,
            })
        }
        Expr::Cond {
            cond,
            then,
            otherwise,
            ..
        } => {
            if eval(env, cond)?.truthy() {
                eval(env, then)?
            } else {
                eval(env, otherwise)?
            }
        }
        Expr::Call(name, args, span) => {
            let mut vals = Vec::with_capacity(args.len());
            for a in args {
                vals.push(eval(env, a)?);
            }
            Cow::Owned(builtins::call(name, &vals, env.now, *span)?)
        }
    })
}

/// Runs `script` against `env`. A script that finishes without an executed
/// `return` yields null.
pub fn evaluate(script: &Script, env: &mut Env) -> Result<Value, EvalError> {
    let mut interp = Interp {
        steps: 0,
        budget: env.step_budget,
    };
    match interp.block(env, script.ast())? {
        Flow::Return(v) => Ok(v),
        Flow::Normal => Ok(Value::Null),
    }
}
