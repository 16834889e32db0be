use serde::{Deserialize, Serialize};

use crate::value::{Map, Value};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Status {
    Pending,
    Accepted,
    Rejected,
    Retracted,
}

impl Status {
    pub fn as_str(self) -> &'static str {
        match self {
            Status::Pending => "pending",
            Status::Accepted => "accepted",
            Status::Rejected => "rejected",
            Status::Retracted => "retracted",
        }
    }

    pub fn is_terminal(self) -> bool {
        self != Status::Pending
    }
}

/// A guidance proposal as delivered to frontends.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Suggestion {
    pub suggestion_id: String,
    /// Strategy name.
    pub strategy: String,
    /// Effective strategy id (`strategy_id`, or the name).
    pub strategy_id: String,
    pub action_id: String,
    pub degree: String,
    pub content: Value,
    pub title: String,
    pub description: String,
    pub created_revision: u64,
    #[serde(serialize_with = "crate::engine::events::number")]
    pub created_at: f64,
    pub status: Status,
    /// Index of the producing strategy in the bundle.
    #[serde(skip)]
    pub(crate) origin: usize,
}

impl Suggestion {
    /// The map bound as `suggestion` (and inside `candidates`/`pending`) in
    /// scripts.
    pub fn to_value(&self) -> Value {
        let mut m = Map::new();
        m.insert("suggestion_id".into(), self.suggestion_id.clone().into());
        m.insert("strategy".into(), self.strategy.clone().into());
        m.insert("strategy_id".into(), self.strategy_id.clone().into());
        m.insert("action_id".into(), self.action_id.clone().into());
        m.insert("degree".into(), self.degree.clone().into());
        m.insert("content".into(), self.content.clone());
        m.insert("title".into(), self.title.clone().into());
        m.insert("description".into(), self.description.clone().into());
        m.insert(
            "created_revision".into(),
            Value::Number(self.created_revision as f64),
        );
        m.insert("created_at".into(), Value::Number(self.created_at));
        m.insert("status".into(), self.status.as_str().into());
        Value::Map(m)
    }

    pub fn is_pending(&self) -> bool {
        self.status == Status::Pending
    }
}
