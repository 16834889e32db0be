//! Trace-level lifecycle invariants, checked from the event log alone.

use std::collections::{BTreeMap, BTreeSet};

use proptest::prelude::*;
use waymark_core::engine::{EngineEvent, InteractionKind, Status, Suggestion};
use waymark_core::replay::{Target, Timeline, TimelineAction, TimelineEvent};
use waymark_core::value::Map;
use waymark_core::Value;

/// Expected pending content for a strategy, derived from the current state.
pub type Containment<'a> = (&'a str, &'a dyn Fn(&Map) -> Value);

#[derive(Default)]
struct Tracker {
    state: Map,
    active: BTreeSet<String>,
    seen: BTreeSet<String>,
    pending: BTreeMap<String, Suggestion>,
    terminal: BTreeMap<String, Status>,
    in_guidance: Option<f64>,
}

impl Tracker {
    fn dedup(&self) -> Result<(), String> {
        let all: Vec<&Suggestion> = self.pending.values().collect();
        for (i, a) in all.iter().enumerate() {
            for b in &all[i + 1..] {
                if a.action_id == b.action_id && a.content == b.content {
                    return Err(format!(
                        "pending {} and {} share action and content",
                        a.suggestion_id, b.suggestion_id
                    ));
                }
            }
        }
        Ok(())
    }

    fn end_guidance(&mut self, containment: Option<Containment>) -> Result<(), String> {
        let Some(at) = self.in_guidance.take() else {
            return Ok(());
        };
        self.dedup()?;
        if let Some((strategy, expected)) = containment {
            if self.active.contains(strategy) {
                let want = expected(&self.state);
                if !self
                    .pending
                    .values()
                    .any(|s| s.strategy_id == strategy && s.content == want)
                {
                    return Err(format!(
                        "after guidance tick at {at}: no pending {strategy} suggestion with {}",
                        want.to_json()
                    ));
                }
            }
        }
        Ok(())
    }
}

/// Checks unique ids, pending-to-terminal transitions only, the dedup
/// invariant after every guidance tick, no emission from inactive
/// strategies and, optionally, containment for one strategy.
pub fn check(trace: &[EngineEvent], initial: &Map, containment: Option<Containment>) -> Result<(), String> {
    let mut t = Tracker {
        state: initial.clone(),
        ..Tracker::default()
    };
    for (i, ev) in trace.iter().enumerate() {
        let within_tick = matches!(
            ev,
            EngineEvent::Suggestion { .. } | EngineEvent::Retraction { .. } | EngineEvent::Diagnostic { .. }
        );
        if !within_tick {
            t.end_guidance(containment).map_err(|e| format!("event {i}: {e}"))?;
        }
        let fail = |m: String| Err(format!("event {i} at {}: {m}", ev.at()));
        match ev {
            EngineEvent::InferenceTick { active, .. } => {
                t.active = active.iter().cloned().collect();
            }
            EngineEvent::GuidanceTick { at, .. } => t.in_guidance = Some(*at),
            EngineEvent::Suggestion { suggestion, .. } => {
                if t.in_guidance.is_none() {
                    return fail("suggestion outside a guidance tick".into());
                }
                if !t.seen.insert(suggestion.suggestion_id.clone()) {
                    return fail(format!("id {} emitted twice", suggestion.suggestion_id));
                }
                if !t.active.contains(&suggestion.strategy_id) {
                    return fail(format!("inactive strategy {} emitted", suggestion.strategy_id));
                }
                if suggestion.status != Status::Pending {
                    return fail("new suggestion is not pending".into());
                }
                t.pending.insert(suggestion.suggestion_id.clone(), suggestion.clone());
            }
            EngineEvent::Retraction { suggestion_id, .. } => {
                if t.pending.remove(suggestion_id).is_none() {
                    return fail(format!("retracted non-pending {suggestion_id}"));
                }
                t.terminal.insert(suggestion_id.clone(), Status::Retracted);
            }
            EngineEvent::Interaction { suggestion_id, kind, status, .. } => {
                let pending = t.pending.contains_key(suggestion_id);
                match kind {
                    InteractionKind::Accept | InteractionKind::Reject => {
                        if !pending {
                            return fail(format!("{} on non-pending {suggestion_id}", kind.as_str()));
                        }
                        let want = if *kind == InteractionKind::Accept { Status::Accepted } else { Status::Rejected };
                        if *status != want {
                            return fail(format!("{} left status {}", kind.as_str(), status.as_str()));
                        }
                        t.pending.remove(suggestion_id);
                        t.terminal.insert(suggestion_id.clone(), want);
                    }
                    InteractionKind::PreviewStart => {
                        if !pending || *status != Status::Pending {
                            return fail(format!("preview_start on non-pending {suggestion_id}"));
                        }
                    }
                    InteractionKind::PreviewEnd => {
                        let known = if pending { Some(Status::Pending) } else { t.terminal.get(suggestion_id).copied() };
                        if known != Some(*status) {
                            return fail(format!("preview_end changed status of {suggestion_id}"));
                        }
                    }
                }
            }
            EngineEvent::Commit { values, .. } => {
                for (k, v) in values {
                    t.state.insert(k.clone(), v.clone());
                }
            }
            EngineEvent::Diagnostic { .. } => {}
        }
    }
    t.end_guidance(containment)
}

// Generators for the two-strategy fixture in `tests/fixtures/lifecycle`:
// `alpha` fails while `divisor` is 0, `beta` proposes `floor(level / 2)`.

/// Content `beta` must have pending for a given state.
pub fn bucket(state: &Map) -> Value {
    let level = state["level"].as_f64().unwrap();
    let mut m = Map::new();
    m.insert("bucket".into(), Value::Number((level / 2.0).floor()));
    Value::Map(m)
}

fn one(key: &str, v: Value) -> Map {
    Map::from([(key.to_string(), v)])
}

fn action() -> impl Strategy<Value = TimelineAction> {
    let kind = prop::sample::select(vec![
        InteractionKind::Accept,
        InteractionKind::Reject,
        InteractionKind::PreviewStart,
        InteractionKind::PreviewEnd,
    ]);
    let target = prop_oneof![
        (prop::sample::select(vec!["alpha", "beta"]), 0usize..6).prop_map(|(a, n)| Target::Ordinal {
            action_id: a.to_string(),
            ordinal: n
        }),
        (1u32..30).prop_map(|n| Target::Id(n.to_string())),
    ];
    prop_oneof![
        3 => (-3i32..12).prop_map(|n| TimelineAction::SetProperties(one("level", Value::Number(n as f64)))),
        1 => (0i32..3).prop_map(|n| TimelineAction::SetProperties(one("divisor", Value::Number(n as f64)))),
        1 => any::<bool>().prop_map(|b| TimelineAction::SetProperties(one("gate", Value::Bool(b)))),
        1 => (-3i32..12).prop_map(|n| TimelineAction::InvokeCallback {
            name: "set_level".into(),
            args: one("value", Value::Number(n as f64)),
        }),
        5 => (kind, target).prop_map(|(kind, target)| TimelineAction::Interaction { kind, target }),
    ]
}

pub fn timeline() -> impl Strategy<Value = Timeline> {
    prop::collection::vec((0u32..120, action()), 0..30).prop_map(|mut evs| {
        evs.sort_by_key(|(q, _)| *q);
        Timeline {
            until: Some(30.0),
            events: evs
                .into_iter()
                .map(|(q, action)| TimelineEvent { at: q as f64 / 4.0, action })
                .collect(),
        }
    })
}

