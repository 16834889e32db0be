//! Narrows a guidance tick's candidate batch through the optional
//! meta-strategy. Without one every candidate passes. Any failure of the
//! filter lets the whole batch through and reports a diagnostic.

use std::collections::BTreeSet;

use crate::engine::Suggestion;
use crate::script::Env;
use crate::spec::MetaStrategySpec;
use crate::value::{Map, Value};

#[derive(Debug, Default)]
pub struct FilterOutcome {
    pub emitted: Vec<Suggestion>,
    pub diagnostics: Vec<String>,
}

/// The meta-strategy together with its persistent `self` store.
pub struct Meta<'a> {
    pub spec: &'a MetaStrategySpec,
    pub store: &'a mut Map,
}

pub fn filter(
    candidates: Vec<Suggestion>,
    pending: &[&Suggestion],
    meta: Option<Meta<'_>>,
    state: &Value,
    now: f64,
    step_budget: u64,
) -> FilterOutcome {
    let Some(meta) = meta else {
        return FilterOutcome {
            emitted: candidates,
            diagnostics: Vec::new(),
        };
    };
    if candidates.is_empty() {
        return FilterOutcome::default();
    }
    let mut env = Env::new(now, step_budget)
        .with_mut("state", state.clone())
        .with_mut("self", Value::Map(meta.store.clone()))
        .with(
            "candidates",
            Value::List(candidates.iter().map(Suggestion::to_value).collect()),
        )
        .with(
            "pending",
            Value::List(pending.iter().map(|s| s.to_value()).collect()),
        );
    let result = match meta.spec.filter_suggestions.script.eval(&mut env) {
        Ok(v) => v,
        Err(e) => return fail_open(candidates, format!("filter_suggestions failed: {e}")),
    };
    if let Some(Value::Map(m)) = env.take("self") {
        *meta.store = m;
    }
    let Value::List(picked) = result else {
        return fail_open(
            candidates,
            format!(
                "filter_suggestions returned {}, expected a list",
                result.type_name()
            ),
        );
    };

    let mut diagnostics = Vec::new();
    let mut keep = BTreeSet::new();
    for item in &picked {
        let id = match item {
            Value::String(s) => Some(s.as_str()),
            Value::Map(m) => m.get("suggestion_id").and_then(Value::as_str),
            _ => None,
        };
        match id {
            Some(id) if candidates.iter().any(|c| c.suggestion_id == id) => {
                keep.insert(id.to_string());
            }
            Some(id) => diagnostics.push(format!(
                "filter_suggestions returned unknown suggestion '{id}'; ignored"
            )),
            None => diagnostics.push(format!(
                "filter_suggestions returned a {} that names no suggestion; ignored",
                item.type_name()
            )),
        }
    }
    // original production order, never the filter's order
    let emitted = candidates
        .into_iter()
        .filter(|c| keep.contains(&c.suggestion_id))
        .collect();
    FilterOutcome {
        emitted,
        diagnostics,
    }
}

fn fail_open(candidates: Vec<Suggestion>, message: String) -> FilterOutcome {
    FilterOutcome {
        emitted: candidates,
        diagnostics: vec![format!("{message}; passing all candidates")],
    }
}
