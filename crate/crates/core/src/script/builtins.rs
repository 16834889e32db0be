use std::borrow::Cow;

use super::ast::Span;
use super::eval::{finite, rt, MAX_COLLECTION_LEN};
use super::{EvalError, RuntimeErrorKind};
use crate::value::{format_number, Value};

pub const BUILTINS: &[&str] = &[
    "len", "tail", "head", "append", "contains", "keys", "has", "abs", "min", "max", "clamp",
    "sqrt", "floor", "round", "now", "str", "num",
];

pub fn is_builtin(name: &str) -> bool {
    BUILTINS.contains(&name)
}

type Args<'a, 'e> = &'a [Cow<'e, Value>];

fn arity(name: &str, args: Args, n: usize, span: Span) -> Result<(), EvalError> {
    if args.len() != n {
        return Err(rt(
            RuntimeErrorKind::Arity(format!(
                "{name}() takes {n} argument{}, got {}",
                if n == 1 { "" } else { "s" },
                args.len()
            )),
            span,
        ));
    }
    Ok(())
}

fn bad(name: &str, what: &str, got: &Value, span: Span) -> EvalError {
    rt(
        RuntimeErrorKind::TypeMismatch(format!(
            "{name}() expects {what}, got {}",
            got.type_name()
        )),
        span,
    )
}

fn number(name: &str, v: &Value, span: Span) -> Result<f64, EvalError> {
    v.as_f64().ok_or_else(|| bad(name, "a number", v, span))
}

fn count(name: &str, v: &Value, span: Span) -> Result<usize, EvalError> {
    let n = number(name, v, span)?;
    if n < 0.0 || n.fract() != 0.0 {
        return Err(rt(
            RuntimeErrorKind::InvalidArgument(format!(
                "{name}() count must be a non-negative integer, got {}",
                format_number(n)
            )),
            span,
        ));
    }
    Ok(n as usize)
}

fn list<'v>(name: &str, v: &'v Value, span: Span) -> Result<&'v [Value], EvalError> {
    v.as_list().ok_or_else(|| bad(name, "a list", v, span))
}

fn extremum(name: &str, args: Args, span: Span, pick_max: bool) -> Result<Value, EvalError> {
    let nums: Vec<f64> = match args {
        [single] if single.as_list().is_some() => single
            .as_list()
            .unwrap()
            .iter()
            .map(|v| number(name, v, span))
            .collect::<Result<_, _>>()?,
        _ => args
            .iter()
            .map(|v| number(name, v, span))
            .collect::<Result<_, _>>()?,
    };
    let mut it = nums.into_iter();
    let first = it.next().ok_or_else(|| {
        rt(
            RuntimeErrorKind::InvalidArgument(format!("{name}() of an empty sequence")),
            span,
        )
    })?;
    Ok(Value::Number(it.fold(first, |acc, x| {
        if pick_max {
            acc.max(x)
        } else {
            acc.min(x)
        }
    })))
}

pub fn call(name: &str, args: Args, now: f64, span: Span) -> Result<Value, EvalError> {
    match name {
        "len" => {
            arity(name, args, 1, span)?;
            let n = match args[0].as_ref() {
                Value::List(l) => l.len(),
                Value::String(s) => s.chars().count(),
                Value::Map(m) => m.len(),
                other => return Err(bad(name, "a list, string, or map", other, span)),
            };
            Ok(Value::Number(n as f64))
        }
        "tail" | "head" => {
            arity(name, args, 2, span)?;
            let items = list(name, &args[0], span)?;
            let n = count(name, &args[1], span)?.min(items.len());
            let slice = if name == "tail" {
                &items[items.len() - n..]
            } else {
                &items[..n]
            };
            Ok(Value::List(slice.to_vec()))
        }
        "append" => {
            arity(name, args, 2, span)?;
            let items = list(name, &args[0], span)?;
            if items.len() + 1 > MAX_COLLECTION_LEN {
                return Err(rt(RuntimeErrorKind::TooLarge, span));
            }
            let mut out = Vec::with_capacity(items.len() + 1);
            out.extend_from_slice(items);
            out.push(args[1].as_ref().clone());
            Ok(Value::List(out))
        }
        "contains" => {
            arity(name, args, 2, span)?;
            match (args[0].as_ref(), args[1].as_ref()) {
                (Value::List(l), needle) => Ok(Value::Bool(l.contains(needle))),
                (Value::String(s), Value::String(sub)) => Ok(Value::Bool(s.contains(sub.as_str()))),
                (Value::String(_), other) => Err(bad(name, "a string to search for", other, span)),
                (other, _) => Err(bad(name, "a list or string", other, span)),
            }
        }
        "keys" => {
            arity(name, args, 1, span)?;
            match args[0].as_ref() {
                Value::Map(m) => Ok(Value::List(
                    m.keys().map(|k| Value::String(k.clone())).collect(),
                )),
                other => Err(bad(name, "a map", other, span)),
            }
        }
        "has" => {
            arity(name, args, 2, span)?;
            match (args[0].as_ref(), args[1].as_ref()) {
                (Value::Map(m), Value::String(k)) => Ok(Value::Bool(m.contains_key(k))),
                (Value::Map(_), other) => Err(bad(name, "a string key", other, span)),
                (other, _) => Err(bad(name, "a map", other, span)),
            }
        }
        "abs" => {
            arity(name, args, 1, span)?;
            Ok(Value::Number(number(name, &args[0], span)?.abs()))
        }
        "min" => extremum(name, args, span, false),
        "max" => extremum(name, args, span, true),
        "clamp" => {
            arity(name, args, 3, span)?;
            let v = number(name, &args[0], span)?;
            let lo = number(name, &args[1], span)?;
            let hi = number(name, &args[2], span)?;
            if lo > hi {
                return Err(rt(
                    RuntimeErrorKind::InvalidArgument(format!(
                        "clamp() bounds reversed: {} > {}",
                        format_number(lo),
                        format_number(hi)
                    )),
                    span,
                ));
            }
            Ok(Value::Number(v.clamp(lo, hi)))
        }
        "sqrt" => {
            arity(name, args, 1, span)?;
            let v = number(name, &args[0], span)?;
            if v < 0.0 {
                return Err(rt(
                    RuntimeErrorKind::InvalidArgument(format!(
                        "sqrt() of negative number {}",
                        format_number(v)
                    )),
                    span,
                ));
            }
            Ok(Value::Number(v.sqrt()))
        }
        "floor" => {
            arity(name, args, 1, span)?;
            Ok(Value::Number(number(name, &args[0], span)?.floor()))
        }
        "round" => {
            arity(name, args, 1, span)?;
            Ok(Value::Number(number(name, &args[0], span)?.round()))
        }
        "now" => {
            arity(name, args, 0, span)?;
            Ok(Value::Number(now))
        }
        "str" => {
            arity(name, args, 1, span)?;
            Ok(Value::String(args[0].to_string()))
        }
        "num" => {
            arity(name, args, 1, span)?;
            match args[0].as_ref() {
                Value::Number(n) => Ok(Value::Number(*n)),
                Value::Bool(b) => Ok(Value::Number(if *b { 1.0 } else { 0.0 })),
                Value::String(s) => match s.trim().parse::<f64>() {
                    Ok(n) => finite(n, span),
                    Err(_) => Err(rt(
                        RuntimeErrorKind::InvalidArgument(format!("num() cannot parse {s:?}")),
                        span,
                    )),
                },
                other => Err(bad(name, "a number, boolean, or string", other, span)),
            }
        }
        _ => Err(rt(RuntimeErrorKind::UnknownBuiltin(name.to_string()), span)),
    }
}
