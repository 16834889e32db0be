//! Deterministic replay of a timeline against a bundle on a virtual clock.
//!
//! A timeline is a JSON list of events, or an object
//! `{"until": seconds, "events": [...]}`. Each event has an `at` time in
//! seconds and a `type`:
//!
//! ```json
//! {"at": 1.5, "type": "set_properties", "properties": {"month": "2022-04"}}
//! {"at": 2, "type": "invoke_callback", "name": "point_hovered", "args": {"point_id": "a"}}
//! {"at": 3, "type": "accept", "suggestion_id": "1"}
//! {"at": 4, "type": "reject", "action_id": "zoom", "ordinal": 0}
//! ```
//!
//! Interactions name their suggestion either by id or by the n-th (0-based)
//! suggestion emitted for an action. Events sharing an `at` run in file
//! order, before any tick scheduled for that instant.

use std::sync::Arc;

use thiserror::Error;

use crate::config::EngineConfig;
use crate::engine::{Engine, EngineError, EngineEvent, IdScheme, InteractionKind};
use crate::par::map_ordered;
use crate::scheduler::{Scheduler, Tick};
use crate::spec::Bundle;
use crate::state::DataLoader;
use crate::value::{Map, Value};

#[derive(Debug, Error, PartialEq)]
#[error("timeline event {index}: {message}")]
pub struct TimelineError {
    pub index: usize,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Target {
    Id(String),
    Ordinal { action_id: String, ordinal: usize },
}

impl std::fmt::Display for Target {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Target::Id(id) => write!(f, "id '{id}'"),
            Target::Ordinal { action_id, ordinal } => write!(f, "{action_id}#{ordinal}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum TimelineAction {
    SetProperties(Map),
    InvokeCallback { name: String, args: Map },
    Interaction { kind: InteractionKind, target: Target },
}

#[derive(Debug, Clone, PartialEq)]
pub struct TimelineEvent {
    pub at: f64,
    pub action: TimelineAction,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Timeline {
    pub until: Option<f64>,
    pub events: Vec<TimelineEvent>,
}

fn parse_event(index: usize, v: &Value) -> Result<TimelineEvent, TimelineError> {
    let err = |message: String| TimelineError { index, message };
    let m = v
        .as_map()
        .ok_or_else(|| err(format!("expected an object, got {}", v.type_name())))?;
    let at = m
        .get("at")
        .and_then(Value::as_f64)
        .ok_or_else(|| err("missing numeric 'at'".into()))?;
    if at.is_nan() || at < 0.0 {
        return Err(err(format!("'at' must be >= 0, got {at}")));
    }
    let kind = m
        .get("type")
        .and_then(Value::as_str)
        .ok_or_else(|| err("missing 'type'".into()))?;
    let map_field = |key: &str| match m.get(key) {
        Some(Value::Map(p)) => Ok(p.clone()),
        None => Ok(Map::new()),
        Some(other) => Err(err(format!(
            "'{key}' must be an object, got {}",
            other.type_name()
        ))),
    };
    let action = match kind {
        "set_properties" => TimelineAction::SetProperties(map_field("properties")?),
        "invoke_callback" => TimelineAction::InvokeCallback {
            name: m
                .get("name")
                .and_then(Value::as_str)
                .ok_or_else(|| err("invoke_callback needs a 'name'".into()))?
                .to_string(),
            args: map_field("args")?,
        },
        other => {
            let kind = InteractionKind::parse(other)
                .ok_or_else(|| err(format!("unknown event type '{other}'")))?;
            let target = match (m.get("suggestion_id"), m.get("action_id")) {
                (Some(id), None) => Target::Id(match id {
                    Value::String(s) => s.clone(),
                    Value::Number(_) => id.to_string(),
                    _ => return Err(err("'suggestion_id' must be a string".into())),
                }),
                (None, Some(Value::String(action_id))) => {
                    let ordinal = match m.get("ordinal") {
                        None => 0,
                        Some(v) => match v.as_f64() {
                            Some(n) if n >= 0.0 && n.fract() == 0.0 => n as usize,
                            _ => return Err(err("'ordinal' must be a non-negative integer".into())),
                        },
                    };
                    Target::Ordinal {
                        action_id: action_id.clone(),
                        ordinal,
                    }
                }
                _ => {
                    return Err(err(
                        "interactions need exactly one of 'suggestion_id' or 'action_id'".into(),
                    ))
                }
            };
            TimelineAction::Interaction { kind, target }
        }
    };
    Ok(TimelineEvent { at, action })
}

impl Timeline {
    pub fn parse(json: &str) -> Result<Timeline, TimelineError> {
        let root: Value = serde_json::from_str(json).map_err(|e| TimelineError {
            index: 0,
            message: format!("invalid JSON: {e}"),
        })?;
        let (until, raw) = match &root {
            Value::List(items) => (None, items.as_slice()),
            Value::Map(m) => {
                let until = match m.get("until") {
                    None | Some(Value::Null) => None,
                    Some(v) => Some(v.as_f64().ok_or_else(|| TimelineError {
                        index: 0,
                        message: "'until' must be a number".into(),
                    })?),
                };
                let events = m
                    .get("events")
                    .and_then(Value::as_list)
                    .unwrap_or_default();
                (until, events)
            }
            other => {
                return Err(TimelineError {
                    index: 0,
                    message: format!("expected a list or object, got {}", other.type_name()),
                })
            }
        };
        let events = raw
            .iter()
            .enumerate()
            .map(|(i, v)| parse_event(i, v))
            .collect::<Result<Vec<_>, _>>()?;
        for (i, pair) in events.windows(2).enumerate() {
            if pair[1].at < pair[0].at {
                return Err(TimelineError {
                    index: i + 1,
                    message: "events must be ordered by 'at'".into(),
                });
            }
        }
        Ok(Timeline { until, events })
    }

    /// `until` when given, otherwise the time of the last event.
    pub fn end(&self) -> f64 {
        self.until
            .unwrap_or_else(|| self.events.last().map_or(0.0, |e| e.at))
    }
}

/// Steps an engine through a timeline. Time starts at 0.
pub struct Replayer {
    engine: Engine,
    scheduler: Scheduler,
    trace: Vec<EngineEvent>,
}

impl Replayer {
    pub fn new(
        bundle: Arc<Bundle>,
        config: EngineConfig,
        loader: &dyn DataLoader,
    ) -> Result<Replayer, EngineError> {
        let scheduler = Scheduler::new(&config, 0.0);
        let engine = Engine::new(bundle, config, loader, 0.0, IdScheme::Counter)?;
        Ok(Replayer {
            engine,
            scheduler,
            trace: Vec::new(),
        })
    }

    pub fn engine(&self) -> &Engine {
        &self.engine
    }

    pub fn trace(&self) -> &[EngineEvent] {
        &self.trace
    }

    fn collect(&mut self) {
        self.trace.extend(self.engine.drain_events());
    }

    /// Runs every tick scheduled before `t` (or at `t` when inclusive).
    pub fn advance(&mut self, t: f64, inclusive: bool) {
        while let Some((at, tick)) = self.scheduler.pop_due(t, inclusive) {
            match tick {
                Tick::Inference => self.engine.run_inference_tick(at),
                Tick::Guidance(trigger) => self.engine.run_guidance_tick(at, trigger),
            }
        }
        self.collect();
    }

    /// Applies one event at its time without running any ticks.
    pub fn apply(&mut self, event: &TimelineEvent) {
        let at = event.at;
        let changed = match &event.action {
            TimelineAction::SetProperties(patch) => {
                self.engine.set_properties(patch.clone(), at).is_ok()
            }
            TimelineAction::InvokeCallback { name, args } => {
                self.engine.invoke_callback(name, args, at).is_ok()
            }
            TimelineAction::Interaction { kind, target } => {
                let id = match target {
                    Target::Id(id) => Some(id.clone()),
                    Target::Ordinal { action_id, ordinal } => self
                        .engine
                        .suggestions_of(action_id)
                        .get(*ordinal)
                        .map(|s| s.suggestion_id.clone()),
                };
                match id {
                    Some(id) => self
                        .engine
                        .record_interaction(&id, *kind, at)
                        .map(|o| o.change.is_some())
                        .unwrap_or(false),
                    None => {
                        self.trace.extend(self.engine.drain_events());
                        self.trace.push(EngineEvent::Diagnostic {
                            at,
                            source: format!("interaction:{}", kind.as_str()),
                            message: format!("no suggestion matches {target}"),
                        });
                        false
                    }
                }
            }
        };
        if changed {
            self.scheduler.notify_change(at);
        }
        self.collect();
    }

    /// Runs the ticks due before the event, then the event itself.
    pub fn step(&mut self, event: &TimelineEvent) {
        self.advance(event.at, false);
        self.apply(event);
    }

    /// Runs the ticks up to and including `until` and returns the trace.
    pub fn finish(mut self, until: f64) -> Vec<EngineEvent> {
        self.advance(until, true);
        self.trace
    }

    pub fn into_parts(self) -> (Engine, Vec<EngineEvent>) {
        (self.engine, self.trace)
    }
}

/// Replays one timeline from a fresh engine.
pub fn replay(
    bundle: Arc<Bundle>,
    config: EngineConfig,
    loader: &dyn DataLoader,
    timeline: &Timeline,
) -> Result<Vec<EngineEvent>, EngineError> {
    let mut r = Replayer::new(bundle, config, loader)?;
    for ev in &timeline.events {
        r.step(ev);
    }
    Ok(r.finish(timeline.end()))
}

/// Replays many timelines independently; parallel across timelines when
/// `config.exec` allows. Results are in input order.
pub fn replay_many(
    bundle: Arc<Bundle>,
    config: EngineConfig,
    loader: &dyn DataLoader,
    timelines: &[Timeline],
) -> Vec<Result<Vec<EngineEvent>, EngineError>> {
    map_ordered(config.exec, timelines.iter().collect(), |t| {
        replay(Arc::clone(&bundle), config.clone(), loader, t)
    })
}
