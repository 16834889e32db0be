//! The analysis state: a revisioned map of values.
//!
//! Every committed update bumps the revision by exactly one. Readers work on
//! [`StateSnapshot`]s, which are immutable and unaffected by later commits.

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::Arc;

use serde::Serialize;
use thiserror::Error;

use crate::script::{Env, EvalError};
use crate::spec::{DataSource, SourceKind, StateSpec};
use crate::value::{Map, Value};

/// Key under which scripts see the per-key last-changed revisions.
pub const LAST_CHANGED_KEY: &str = "__last_changed";

#[derive(Debug, Error)]
pub enum StateError {
    #[error("data source '{target}' ({source_ref}): {message}")]
    Source {
        target: String,
        source_ref: String,
        message: String,
    },
    #[error("initialize callback failed: {0}")]
    Initialize(EvalError),
    #[error("patch must contain at least one property")]
    EmptyPatch,
    #[error("unknown update callback '{0}'")]
    UnknownCallback(String),
    #[error("callback '{callback}' argument mismatch: missing [{}], unexpected [{}]", missing.join(", "), extra.join(", "))]
    ArgumentMismatch {
        callback: String,
        missing: Vec<String>,
        extra: Vec<String>,
    },
    #[error("callback '{callback}' failed: {error}")]
    Script { callback: String, error: EvalError },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ChangeEvent {
    pub revision: u64,
    pub changed_keys: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StateSnapshot {
    revision: u64,
    value: Arc<Value>,
}

impl StateSnapshot {
    pub fn revision(&self) -> u64 {
        self.revision
    }

    /// The state as scripts see it, including the last-changed map.
    pub fn value(&self) -> &Value {
        &self.value
    }

    pub fn get(&self, key: &str) -> Option<&Value> {
        self.value.get(key)
    }
}

/// Reads the external data a [`StateSpec`] points at.
pub trait DataLoader: Send + Sync {
    fn load(&self, root: &Path, source: &DataSource) -> Result<Value, String>;
}

type Fetcher = dyn Fn(&str) -> Result<String, String> + Send + Sync;

/// Loads CSV files relative to the bundle root. URL sources are handed to
/// the optional fetcher; `file://` URLs and bare paths are read directly.
#[derive(Default)]
pub struct FsLoader {
    fetcher: Option<Box<Fetcher>>,
}

impl FsLoader {
    pub fn new() -> Self {
        FsLoader::default()
    }

    pub fn with_fetcher(
        fetcher: impl Fn(&str) -> Result<String, String> + Send + Sync + 'static,
    ) -> Self {
        FsLoader {
            fetcher: Some(Box::new(fetcher)),
        }
    }
}

impl DataLoader for FsLoader {
    fn load(&self, root: &Path, source: &DataSource) -> Result<Value, String> {
        match source.kind {
            SourceKind::Csv => {
                let text = std::fs::read_to_string(root.join(&source.source))
                    .map_err(|e| e.to_string())?;
                parse_csv(&text)
            }
            SourceKind::Url => {
                let body = if let Some(path) = source.source.strip_prefix("file://") {
                    std::fs::read_to_string(path).map_err(|e| e.to_string())?
                } else if source.source.contains("://") {
                    match &self.fetcher {
                        Some(fetch) => fetch(&source.source)?,
                        None => return Err("no URL fetcher configured".into()),
                    }
                } else {
                    std::fs::read_to_string(root.join(&source.source))
                        .map_err(|e| e.to_string())?
                };
                serde_json::from_str::<Value>(&body).map_err(|e| format!("invalid JSON: {e}"))
            }
        }
    }
}

/// First row is the header; cells that parse as finite numbers become numbers.
pub fn parse_csv(text: &str) -> Result<Value, String> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let headers = reader.headers().map_err(|e| e.to_string())?.clone();
    let mut rows = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| e.to_string())?;
        let mut row = Map::new();
        for (h, cell) in headers.iter().zip(record.iter()) {
            let v = match cell.parse::<f64>() {
                Ok(n) if n.is_finite() => Value::Number(n),
                _ => Value::String(cell.to_string()),
            };
            row.insert(h.to_string(), v);
        }
        rows.push(Value::Map(row));
    }
    Ok(Value::List(rows))
}

#[derive(Debug, Clone, PartialEq)]
pub struct AnalysisState {
    values: Map,
    revision: u64,
    updated_at: f64,
    last_changed: BTreeMap<String, u64>,
}

fn state_value(values: &Map, last_changed: &BTreeMap<String, u64>) -> Value {
    let mut m = values.clone();
    m.insert(
        LAST_CHANGED_KEY.to_string(),
        Value::Map(
            last_changed
                .iter()
                .map(|(k, r)| (k.clone(), Value::Number(*r as f64)))
                .collect(),
        ),
    );
    Value::Map(m)
}

impl AnalysisState {
    /// A state at revision 0 holding `values`, without running any callback.
    pub fn from_values(values: Map, now: f64) -> Self {
        AnalysisState {
            values,
            revision: 0,
            updated_at: now,
            last_changed: BTreeMap::new(),
        }
    }

    /// Literal fields, then data sources, then the `initialize` callback.
    pub fn initialize(
        spec: &StateSpec,
        root: &Path,
        loader: &dyn DataLoader,
        now: f64,
        step_budget: u64,
    ) -> Result<Self, StateError> {
        let mut values = spec.fields.clone();
        for source in &spec.data_sources {
            let v = loader
                .load(root, source)
                .map_err(|message| StateError::Source {
                    target: source.target.clone(),
                    source_ref: source.source.clone(),
                    message,
                })?;
            values.insert(source.target.clone(), v);
        }
        let mut state = AnalysisState::from_values(values, now);
        if let Some(init) = &spec.initialize {
            let mut env = Env::new(now, step_budget).with_mut("state", state.script_value());
            init.script.eval(&mut env).map_err(StateError::Initialize)?;
            state.values = strip(env.take("state"));
        }
        Ok(state)
    }

    pub fn revision(&self) -> u64 {
        self.revision
    }

    pub fn updated_at(&self) -> f64 {
        self.updated_at
    }

    pub fn values(&self) -> &Map {
        &self.values
    }

    pub fn get(&self, key: &str) -> Option<&Value> {
        self.values.get(key)
    }

    pub fn last_changed(&self) -> &BTreeMap<String, u64> {
        &self.last_changed
    }

    /// The map bound to `state` in scripts.
    pub fn script_value(&self) -> Value {
        state_value(&self.values, &self.last_changed)
    }

    pub fn snapshot(&self) -> StateSnapshot {
        StateSnapshot {
            revision: self.revision,
            value: Arc::new(self.script_value()),
        }
    }

    /// Assigns every key of `patch` in one commit.
    pub fn set_properties(&mut self, patch: Map, now: f64) -> Result<ChangeEvent, StateError> {
        if patch.is_empty() {
            return Err(StateError::EmptyPatch);
        }
        let keys: Vec<String> = patch.keys().cloned().collect();
        self.values.extend(patch);
        Ok(self.commit_keys(keys, now))
    }

    /// Runs a named update callback. On failure nothing is committed.
    pub fn invoke_update_callback(
        &mut self,
        spec: &StateSpec,
        name: &str,
        args: &Map,
        now: f64,
        step_budget: u64,
    ) -> Result<ChangeEvent, StateError> {
        let cb = spec
            .update_callbacks
            .get(name)
            .ok_or_else(|| StateError::UnknownCallback(name.to_string()))?;
        let missing: Vec<String> = cb
            .args
            .iter()
            .filter(|a| !args.contains_key(*a))
            .cloned()
            .collect();
        let extra: Vec<String> = args
            .keys()
            .filter(|k| !cb.args.contains(k))
            .cloned()
            .collect();
        if !missing.is_empty() || !extra.is_empty() {
            return Err(StateError::ArgumentMismatch {
                callback: name.to_string(),
                missing,
                extra,
            });
        }
        let mut env = Env::new(now, step_budget).with_mut("state", self.script_value());
        for (k, v) in args {
            env.bind(k, v.clone());
        }
        cb.script
            .eval(&mut env)
            .map_err(|error| StateError::Script {
                callback: name.to_string(),
                error,
            })?;
        let next = strip(env.take("state"));
        // invocations always commit, even when nothing changed
        Ok(self.replace_values(next, now))
    }

    /// Commits `next` as the new value map, recording which keys differ.
    pub fn replace_values(&mut self, next: Map, now: f64) -> ChangeEvent {
        let changed = diff_keys(&self.values, &next);
        self.values = next;
        self.commit_keys(changed, now)
    }

    /// Like [`replace_values`](Self::replace_values) but commits only when
    /// something actually changed.
    pub fn replace_if_changed(&mut self, next: Map, now: f64) -> Option<ChangeEvent> {
        if next == self.values {
            return None;
        }
        Some(self.replace_values(next, now))
    }

    fn commit_keys(&mut self, keys: Vec<String>, now: f64) -> ChangeEvent {
        self.revision += 1;
        self.updated_at = now;
        for k in &keys {
            self.last_changed.insert(k.clone(), self.revision);
        }
        ChangeEvent {
            revision: self.revision,
            changed_keys: keys,
        }
    }
}

/// Unwraps the `state` binding after a script run, dropping the derived
/// last-changed map.
pub(crate) fn strip(v: Option<Value>) -> Map {
    match v {
        Some(Value::Map(mut m)) => {
            m.remove(LAST_CHANGED_KEY);
            m
        }
        _ => Map::new(),
    }
}

fn diff_keys(before: &Map, after: &Map) -> Vec<String> {
    let mut keys: Vec<String> = after
        .iter()
        .filter(|(k, v)| before.get(*k) != Some(*v))
        .map(|(k, _)| k.clone())
        .collect();
    keys.extend(before.keys().filter(|k| !after.contains_key(*k)).cloned());
    keys.sort();
    keys
}
