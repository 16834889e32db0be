//! The guidance engine: strategy activation (inference), suggestion
//! production and retraction (guidance), and user interactions.
//!
//! The engine is clock-free. Every operation takes the current time in
//! seconds; [`crate::scheduler::Scheduler`] decides when ticks happen.

pub mod events;
pub mod suggestion;

use std::collections::HashMap;
use std::sync::Arc;

use thiserror::Error;

pub use events::{
    render_trace, EngineEvent, InteractionKind, RetractReason, Trigger,
};
pub use suggestion::{Status, Suggestion};

use crate::config::{DedupPolicy, EngineConfig};
use crate::par::map_ordered;
use crate::orchestrator::{self, Meta};
use crate::script::{Env, EvalError};
use crate::spec::{validate_bundle, Bundle, CallbackDef, ValidationReport};
use crate::state::{strip, AnalysisState, ChangeEvent, DataLoader, StateError, StateSnapshot};
use crate::value::{Map, Value};

/// How suggestion ids are minted.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum IdScheme {
    /// `1`, `2`, ... (replay traces)
    Counter,
    /// `<prefix>-1`, `<prefix>-2`, ... (live sessions)
    Prefixed(String),
}

impl IdScheme {
    fn make(&self, n: u64) -> String {
        match self {
            IdScheme::Counter => n.to_string(),
            IdScheme::Prefixed(p) => format!("{p}-{n}"),
        }
    }
}

#[derive(Debug, Error)]
pub enum EngineError {
    #[error("bundle is invalid:\n{0}")]
    Invalid(ValidationReport),
    #[error(transparent)]
    State(#[from] StateError),
}

#[derive(Debug, Error, PartialEq)]
pub enum InteractionError {
    #[error("unknown suggestion '{0}'")]
    UnknownSuggestion(String),
    #[error("suggestion '{id}' is {}, cannot {}", status.as_str(), kind.as_str())]
    InvalidTransition {
        id: String,
        status: Status,
        kind: InteractionKind,
    },
}

#[derive(Debug, Clone)]
pub struct InteractionOutcome {
    pub suggestion: Suggestion,
    /// Set when the hook committed a state change.
    pub change: Option<ChangeEvent>,
}

/// Per-strategy runtime: the action it drives and the shared `self` store.
#[derive(Debug, Clone)]
struct Slot {
    action: usize,
    store: Map,
}

struct Candidate {
    slot: usize,
    content: Value,
    title: String,
    description: String,
}

struct GuidanceJob {
    slot: usize,
    store: Map,
    pending: Vec<Suggestion>,
    active: bool,
}

#[derive(Default)]
struct GuidanceResult {
    store: Map,
    retract: Vec<String>,
    candidate: Option<Candidate>,
    diagnostics: Vec<(String, String)>,
}

pub struct Engine {
    bundle: Arc<Bundle>,
    config: EngineConfig,
    state: AnalysisState,
    slots: Vec<Slot>,
    meta_store: Map,
    active: Vec<bool>,
    suggestions: Vec<Suggestion>,
    by_id: HashMap<String, usize>,
    ids: IdScheme,
    next_id: u64,
    events: Vec<EngineEvent>,
}

/// Evaluates one callback with `state` and `self` bound. On success the
/// mutated `self` replaces `store`; the returned map is the script's view
/// of `state` afterwards.
fn call(
    cb: &CallbackDef,
    state: Value,
    store: &mut Map,
    suggestion: Option<Value>,
    now: f64,
    budget: u64,
) -> Result<(Value, Map), EvalError> {
    let mut env = Env::new(now, budget)
        .with_mut("state", state)
        .with_mut("self", Value::Map(store.clone()));
    if let Some(s) = suggestion {
        env.bind("suggestion", s);
    }
    let result = cb.script.eval(&mut env)?;
    if let Some(Value::Map(m)) = env.take("self") {
        *store = m;
    }
    Ok((result, strip(env.take("state"))))
}

fn content_of(v: Value) -> Result<(Value, String, String), String> {
    let Value::Map(mut m) = v else {
        return Err(format!("returned {}, expected a map", v.type_name()));
    };
    let content = m
        .remove("content")
        .ok_or_else(|| "result has no 'content'".to_string())?;
    let mut text = |key: &str| match m.remove(key) {
        Some(Value::String(s)) => Ok(s),
        Some(other) => Err(format!("'{key}' must be a string, got {}", other.type_name())),
        None => Err(format!("result has no '{key}'")),
    };
    let title = text("title")?;
    let description = text("description")?;
    Ok((content, title, description))
}

impl Engine {
    /// Validates the bundle and initializes the analysis state at `now`.
    pub fn new(
        bundle: Arc<Bundle>,
        config: EngineConfig,
        loader: &dyn DataLoader,
        now: f64,
        ids: IdScheme,
    ) -> Result<Engine, EngineError> {
        let report = validate_bundle(&bundle);
        if !report.is_ok() {
            return Err(EngineError::Invalid(report));
        }
        let state = AnalysisState::initialize(
            &bundle.state,
            &bundle.root,
            loader,
            now,
            config.step_budget,
        )?;
        let slots = bundle
            .strategies
            .iter()
            .map(|s| {
                let action = bundle
                    .action_index_for(s)
                    .expect("validated bundles resolve every action");
                let mut store = s.extra_fields.clone();
                store.extend(bundle.actions[action].extra_fields.clone());
                Slot { action, store }
            })
            .collect::<Vec<_>>();
        let meta_store = bundle
            .meta
            .as_ref()
            .map(|m| m.extra_fields.clone())
            .unwrap_or_default();
        Ok(Engine {
            active: vec![false; slots.len()],
            slots,
            meta_store,
            bundle,
            config,
            state,
            suggestions: Vec::new(),
            by_id: HashMap::new(),
            ids,
            next_id: 1,
            events: Vec::new(),
        })
    }

    pub fn bundle(&self) -> &Bundle {
        &self.bundle
    }

    pub fn config(&self) -> &EngineConfig {
        &self.config
    }

    pub fn state(&self) -> &AnalysisState {
        &self.state
    }

    pub fn snapshot(&self) -> StateSnapshot {
        self.state.snapshot()
    }

    pub fn revision(&self) -> u64 {
        self.state.revision()
    }

    /// Effective ids of the currently active strategies, in bundle order.
    pub fn active_strategies(&self) -> Vec<String> {
        self.bundle
            .strategies
            .iter()
            .zip(&self.active)
            .filter(|(_, a)| **a)
            .map(|(s, _)| s.id().to_string())
            .collect()
    }

    /// Every suggestion ever emitted, in emission order.
    pub fn suggestions(&self) -> &[Suggestion] {
        &self.suggestions
    }

    pub fn pending(&self) -> Vec<&Suggestion> {
        self.suggestions.iter().filter(|s| s.is_pending()).collect()
    }

    pub fn suggestion(&self, id: &str) -> Option<&Suggestion> {
        self.by_id.get(id).map(|i| &self.suggestions[*i])
    }

    /// Suggestions of one action in emission order.
    pub fn suggestions_of(&self, action_id: &str) -> Vec<&Suggestion> {
        self.suggestions
            .iter()
            .filter(|s| s.action_id == action_id)
            .collect()
    }

    /// The `self` store of a strategy, looked up by name or id.
    pub fn self_store(&self, strategy: &str) -> Option<&Map> {
        self.bundle
            .strategies
            .iter()
            .position(|s| s.strategy == strategy || s.id() == strategy)
            .map(|i| &self.slots[i].store)
    }

    pub fn meta_store(&self) -> &Map {
        &self.meta_store
    }

    pub fn events(&self) -> &[EngineEvent] {
        &self.events
    }

    pub fn drain_events(&mut self) -> Vec<EngineEvent> {
        std::mem::take(&mut self.events)
    }

    fn diagnostic(&mut self, at: f64, source: impl Into<String>, message: impl Into<String>) {
        self.events.push(EngineEvent::Diagnostic {
            at,
            source: source.into(),
            message: message.into(),
        });
    }

    fn commit_event(&mut self, at: f64, change: &ChangeEvent, source: String) {
        let values = change
            .changed_keys
            .iter()
            .map(|k| (k.clone(), self.state.get(k).cloned().unwrap_or(Value::Null)))
            .collect();
        self.events.push(EngineEvent::Commit {
            at,
            revision: change.revision,
            source,
            changed: change.changed_keys.clone(),
            values,
        });
    }

    /// Assigns properties in a single commit.
    pub fn set_properties(&mut self, patch: Map, now: f64) -> Result<ChangeEvent, StateError> {
        match self.state.set_properties(patch, now) {
            Ok(change) => {
                self.commit_event(now, &change, "set_properties".into());
                Ok(change)
            }
            Err(e) => {
                self.diagnostic(now, "set_properties", e.to_string());
                Err(e)
            }
        }
    }

    /// Runs a named update callback from the state file.
    pub fn invoke_callback(
        &mut self,
        name: &str,
        args: &Map,
        now: f64,
    ) -> Result<ChangeEvent, StateError> {
        let bundle = Arc::clone(&self.bundle);
        let result =
            self.state
                .invoke_update_callback(&bundle.state, name, args, now, self.config.step_budget);
        match result {
            Ok(change) => {
                self.commit_event(now, &change, format!("callback:{name}"));
                Ok(change)
            }
            Err(e) => {
                self.diagnostic(now, format!("callback:{name}"), e.to_string());
                Err(e)
            }
        }
    }

    fn retract(&mut self, at: f64, id: &str, reason: RetractReason) {
        let Some(&idx) = self.by_id.get(id) else { return };
        let s = &mut self.suggestions[idx];
        if !s.is_pending() {
            return;
        }
        s.status = Status::Retracted;
        self.events.push(EngineEvent::Retraction {
            at,
            suggestion_id: s.suggestion_id.clone(),
            action_id: s.action_id.clone(),
            reason,
        });
    }

    /// Re-evaluates `determine_applicability` for every strategy against
    /// one snapshot. A failing callback counts as inactive.
    pub fn run_inference_tick(&mut self, now: f64) {
        let snapshot = self.state.snapshot();
        let bundle = Arc::clone(&self.bundle);
        let budget = self.config.step_budget;
        let jobs: Vec<(usize, Map)> = self
            .slots
            .iter()
            .enumerate()
            .map(|(i, s)| (i, s.store.clone()))
            .collect();
        let results = map_ordered(self.config.exec, jobs, |(i, mut store)| {
            let cb = &bundle.strategies[i].determine_applicability;
            let r = call(cb, snapshot.value().clone(), &mut store, None, now, budget);
            (r.map(|(v, _)| v.truthy()), store)
        });

        let mut activated = Vec::new();
        let mut deactivated = Vec::new();
        for (i, (result, store)) in results.into_iter().enumerate() {
            let strategy = &bundle.strategies[i];
            let now_active = match result {
                Ok(active) => {
                    self.slots[i].store = store;
                    active
                }
                Err(e) => {
                    self.diagnostic(
                        now,
                        format!("{}.determine_applicability", strategy.id()),
                        e.to_string(),
                    );
                    false
                }
            };
            if now_active != self.active[i] {
                if now_active {
                    activated.push(strategy.id().to_string());
                } else {
                    deactivated.push(i);
                }
            }
            self.active[i] = now_active;
        }

        let deactivated_ids = deactivated
            .iter()
            .map(|i| bundle.strategies[*i].id().to_string())
            .collect();
        self.events.push(EngineEvent::InferenceTick {
            at: now,
            revision: snapshot.revision(),
            active: self.active_strategies(),
            activated,
            deactivated: deactivated_ids,
        });
        if self.config.retract_on_deactivate {
            for i in deactivated {
                let ids: Vec<String> = self
                    .suggestions
                    .iter()
                    .filter(|s| s.origin == i && s.is_pending())
                    .map(|s| s.suggestion_id.clone())
                    .collect();
                for id in ids {
                    self.retract(now, &id, RetractReason::Deactivated);
                }
            }
        }
    }

    /// One guidance pass: retraction checks for pending suggestions, then
    /// candidate production for active strategies, deduplication, and the
    /// meta filter.
    pub fn run_guidance_tick(&mut self, now: f64, trigger: Trigger) {
        let snapshot = self.state.snapshot();
        self.events.push(EngineEvent::GuidanceTick {
            at: now,
            revision: snapshot.revision(),
            trigger,
        });
        let bundle = Arc::clone(&self.bundle);
        let budget = self.config.step_budget;

        let jobs: Vec<GuidanceJob> = (0..self.slots.len())
            .map(|i| GuidanceJob {
                slot: i,
                store: self.slots[i].store.clone(),
                pending: self
                    .suggestions
                    .iter()
                    .filter(|s| s.origin == i && s.is_pending())
                    .cloned()
                    .collect(),
                active: self.active[i],
            })
            .filter(|j| j.active || !j.pending.is_empty())
            .collect();
        let slots = &self.slots;
        let results = map_ordered(self.config.exec, jobs, |job| {
            let action = &bundle.actions[slots[job.slot].action];
            guidance_job(job, action, snapshot.value(), now, budget)
        });

        let mut candidates = Vec::new();
        for (slot, result) in results {
            self.slots[slot].store = result.store;
            for (source, message) in result.diagnostics {
                self.diagnostic(now, source, message);
            }
            for id in result.retract {
                self.retract(now, &id, RetractReason::ShouldRetract);
            }
            candidates.extend(result.candidate);
        }

        if self.config.dedup == DedupPolicy::PerActionContent {
            candidates.retain(|c| {
                let action_id = &bundle.actions[self.slots[c.slot].action].action_id;
                !self.suggestions.iter().any(|s| {
                    s.is_pending() && &s.action_id == action_id && s.content == c.content
                })
            });
        }

        let batch: Vec<Suggestion> = candidates
            .into_iter()
            .map(|c| {
                let strategy = &bundle.strategies[c.slot];
                let id = self.ids.make(self.next_id);
                self.next_id += 1;
                Suggestion {
                    suggestion_id: id,
                    strategy: strategy.strategy.clone(),
                    strategy_id: strategy.id().to_string(),
                    action_id: bundle.actions[self.slots[c.slot].action].action_id.clone(),
                    degree: strategy.degree.clone(),
                    content: c.content,
                    title: c.title,
                    description: c.description,
                    created_revision: snapshot.revision(),
                    created_at: now,
                    status: Status::Pending,
                    origin: c.slot,
                }
            })
            .collect();

        let pending: Vec<&Suggestion> =
            self.suggestions.iter().filter(|s| s.is_pending()).collect();
        let meta = bundle.meta.as_ref().map(|spec| Meta {
            spec,
            store: &mut self.meta_store,
        });
        let outcome = orchestrator::filter(batch, &pending, meta, snapshot.value(), now, budget);
        for message in outcome.diagnostics {
            self.diagnostic(now, "filter_suggestions", message);
        }
        for s in outcome.emitted {
            self.by_id.insert(s.suggestion_id.clone(), self.suggestions.len());
            self.events.push(EngineEvent::Suggestion {
                at: now,
                suggestion: s.clone(),
            });
            self.suggestions.push(s);
        }
    }

    /// Applies a user interaction and runs the matching hook. Accept and
    /// reject are terminal; previews leave the status unchanged.
    pub fn record_interaction(
        &mut self,
        id: &str,
        kind: InteractionKind,
        now: f64,
    ) -> Result<InteractionOutcome, InteractionError> {
        let Some(&idx) = self.by_id.get(id) else {
            let err = InteractionError::UnknownSuggestion(id.to_string());
            self.diagnostic(now, format!("interaction:{}", kind.as_str()), err.to_string());
            return Err(err);
        };
        let status = self.suggestions[idx].status;
        // a late preview_end after accept/reject still runs its hook
        if status != Status::Pending && kind != InteractionKind::PreviewEnd {
            let err = InteractionError::InvalidTransition {
                id: id.to_string(),
                status,
                kind,
            };
            self.diagnostic(now, format!("interaction:{}", kind.as_str()), err.to_string());
            return Err(err);
        }
        match kind {
            InteractionKind::Accept => self.suggestions[idx].status = Status::Accepted,
            InteractionKind::Reject => self.suggestions[idx].status = Status::Rejected,
            _ => {}
        }
        let suggestion = self.suggestions[idx].clone();
        self.events.push(EngineEvent::Interaction {
            at: now,
            suggestion_id: suggestion.suggestion_id.clone(),
            kind,
            status: suggestion.status,
        });

        let bundle = Arc::clone(&self.bundle);
        let slot = suggestion.origin;
        let action = &bundle.actions[self.slots[slot].action];
        let hook = match kind {
            InteractionKind::Accept => &action.hooks.accept,
            InteractionKind::Reject => &action.hooks.reject,
            InteractionKind::PreviewStart => &action.hooks.preview_start,
            InteractionKind::PreviewEnd => &action.hooks.preview_end,
        };
        let mut change = None;
        if let Some(cb) = hook {
            let mut store = self.slots[slot].store.clone();
            match call(
                cb,
                self.state.script_value(),
                &mut store,
                Some(suggestion.to_value()),
                now,
                self.config.step_budget,
            ) {
                Ok((_, next)) => {
                    self.slots[slot].store = store;
                    if let Some(c) = self.state.replace_if_changed(next, now) {
                        self.commit_event(
                            now,
                            &c,
                            format!("hook:{}.{}", action.action_id, kind.as_str()),
                        );
                        change = Some(c);
                    }
                }
                Err(e) => self.diagnostic(
                    now,
                    format!("{}.{}", action.action_id, cb.name),
                    e.to_string(),
                ),
            }
        }
        Ok(InteractionOutcome { suggestion, change })
    }
}

fn guidance_job(
    job: GuidanceJob,
    action: &crate::spec::ActionSpec,
    state: &Value,
    now: f64,
    budget: u64,
) -> (usize, GuidanceResult) {
    let mut out = GuidanceResult {
        store: job.store,
        ..GuidanceResult::default()
    };
    let source = |cb: &str| format!("{}.{cb}", action.action_id);

    if let Some(cb) = &action.should_retract {
        for s in &job.pending {
            match call(cb, state.clone(), &mut out.store, Some(s.to_value()), now, budget) {
                Ok((v, _)) if v.truthy() => out.retract.push(s.suggestion_id.clone()),
                Ok(_) => {}
                Err(e) => out
                    .diagnostics
                    .push((source("should_retract"), e.to_string())),
            }
        }
    }
    if !job.active {
        return (job.slot, out);
    }
    match call(&action.is_applicable, state.clone(), &mut out.store, None, now, budget) {
        Ok((v, _)) if v.truthy() => {}
        Ok(_) => return (job.slot, out),
        Err(e) => {
            out.diagnostics.push((source("is_applicable"), e.to_string()));
            return (job.slot, out);
        }
    }
    let generated = call(
        &action.generate_suggestion_content,
        state.clone(),
        &mut out.store,
        None,
        now,
        budget,
    )
    .map_err(|e| e.to_string())
    .and_then(|(v, _)| content_of(v));
    match generated {
        Ok((content, title, description)) => {
            out.candidate = Some(Candidate {
                slot: job.slot,
                content,
                title,
                description,
            })
        }
        Err(message) => out
            .diagnostics
            .push((source("generate_suggestion_content"), message)),
    }
    (job.slot, out)
}
