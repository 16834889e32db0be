//! The structured engine log. One JSON object per line; replay traces and
//! live logs use the same format.

use serde::{Serialize, Serializer};

use super::suggestion::{Status, Suggestion};
use crate::value::{format_number, Map};

/// Serializes integral seconds without a fractional part, like all other
/// numbers on the wire.
pub(crate) fn number<S: Serializer>(n: &f64, s: S) -> Result<S::Ok, S::Error> {
    if n.fract() == 0.0 && n.abs() < 9_007_199_254_740_992.0 {
        s.serialize_i64(*n as i64)
    } else {
        s.serialize_f64(*n)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Trigger {
    Periodic,
    Immediate,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum RetractReason {
    ShouldRetract,
    Deactivated,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InteractionKind {
    Accept,
    Reject,
    PreviewStart,
    PreviewEnd,
}

impl InteractionKind {
    pub fn as_str(self) -> &'static str {
        match self {
            InteractionKind::Accept => "accept",
            InteractionKind::Reject => "reject",
            InteractionKind::PreviewStart => "preview_start",
            InteractionKind::PreviewEnd => "preview_end",
        }
    }

    /// Accepts both `preview_start` and the URL form `preview-start`.
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "accept" => Some(InteractionKind::Accept),
            "reject" => Some(InteractionKind::Reject),
            "preview_start" | "preview-start" => Some(InteractionKind::PreviewStart),
            "preview_end" | "preview-end" => Some(InteractionKind::PreviewEnd),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum EngineEvent {
    InferenceTick {
        #[serde(serialize_with = "number")]
        at: f64,
        revision: u64,
        active: Vec<String>,
        activated: Vec<String>,
        deactivated: Vec<String>,
    },
    GuidanceTick {
        #[serde(serialize_with = "number")]
        at: f64,
        revision: u64,
        trigger: Trigger,
    },
    Suggestion {
        #[serde(serialize_with = "number")]
        at: f64,
        suggestion: Suggestion,
    },
    Retraction {
        #[serde(serialize_with = "number")]
        at: f64,
        suggestion_id: String,
        action_id: String,
        reason: RetractReason,
    },
    Interaction {
        #[serde(serialize_with = "number")]
        at: f64,
        suggestion_id: String,
        kind: InteractionKind,
        status: Status,
    },
    Commit {
        #[serde(serialize_with = "number")]
        at: f64,
        revision: u64,
        source: String,
        changed: Vec<String>,
        values: Map,
    },
    Diagnostic {
        #[serde(serialize_with = "number")]
        at: f64,
        source: String,
        message: String,
    },
}

impl EngineEvent {
    pub fn at(&self) -> f64 {
        match self {
            EngineEvent::InferenceTick { at, .. }
            | EngineEvent::GuidanceTick { at, .. }
            | EngineEvent::Suggestion { at, .. }
            | EngineEvent::Retraction { at, .. }
            | EngineEvent::Interaction { at, .. }
            | EngineEvent::Commit { at, .. }
            | EngineEvent::Diagnostic { at, .. } => *at,
        }
    }

    pub fn to_json_line(&self) -> String {
        serde_json::to_string(self).expect("events always serialize")
    }

    /// Whether the event is pushed to socket subscribers.
    pub fn is_push(&self) -> bool {
        matches!(
            self,
            EngineEvent::Suggestion { .. } | EngineEvent::Retraction { .. }
        )
    }
}

/// Renders events as newline-terminated JSON lines.
pub fn render_trace(events: &[EngineEvent]) -> String {
    let mut out = String::new();
    for e in events {
        out.push_str(&e.to_json_line());
        out.push('\n');
    }
    out
}

/// Seconds as printed in the log.
pub fn format_seconds(at: f64) -> String {
    format_number(at)
}
