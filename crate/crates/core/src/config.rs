use serde::{Deserialize, Serialize};

use crate::script::DEFAULT_STEP_BUDGET;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum DedupPolicy {
    /// Drop a candidate when a pending suggestion from the same action has
    /// deep-equal content.
    #[serde(rename = "per-action-content")]
    PerActionContent,
    #[serde(rename = "off")]
    Off,
}

impl DedupPolicy {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "per-action-content" => Some(DedupPolicy::PerActionContent),
            "off" => Some(DedupPolicy::Off),
            _ => None,
        }
    }
}

/// How tick callbacks are spread across threads. Results are merged in
/// bundle order either way, so the choice never changes the event log.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ExecMode {
    #[default]
    Parallel,
    Sequential,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EngineConfig {
    pub guidance_interval_s: f64,
    pub inference_interval_s: f64,
    pub step_budget: u64,
    pub dedup: DedupPolicy,
    pub retract_on_deactivate: bool,
    pub exec: ExecMode,
}

impl Default for EngineConfig {
    fn default() -> Self {
        EngineConfig {
            guidance_interval_s: 1.0,
            inference_interval_s: 30.0,
            step_budget: DEFAULT_STEP_BUDGET,
            dedup: DedupPolicy::PerActionContent,
            retract_on_deactivate: true,
            exec: ExecMode::default(),
        }
    }
}

/// Values from a bundle's `engine.yaml`; unset keys keep the defaults.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ConfigOverrides {
    pub guidance_interval: Option<f64>,
    pub inference_interval: Option<f64>,
    pub step_budget: Option<u64>,
    pub dedup: Option<DedupPolicy>,
    pub retract_on_deactivate: Option<bool>,
}

impl EngineConfig {
    pub fn with_overrides(mut self, o: &ConfigOverrides) -> Self {
        if let Some(v) = o.guidance_interval {
            self.guidance_interval_s = v;
        }
        if let Some(v) = o.inference_interval {
            self.inference_interval_s = v;
        }
        if let Some(v) = o.step_budget {
            self.step_budget = v;
        }
        if let Some(v) = o.dedup {
            self.dedup = v;
        }
        if let Some(v) = o.retract_on_deactivate {
            self.retract_on_deactivate = v;
        }
        self
    }

    /// Problems with the interval/budget settings, empty when usable.
    pub fn problems(&self) -> Vec<String> {
        let mut out = Vec::new();
        if !(self.guidance_interval_s.is_finite() && self.guidance_interval_s > 0.0) {
            out.push(format!(
                "guidance_interval must be > 0, got {}",
                self.guidance_interval_s
            ));
        }
        if !(self.inference_interval_s.is_finite() && self.inference_interval_s > 0.0) {
            out.push(format!(
                "inference_interval must be > 0, got {}",
                self.inference_interval_s
            ));
        }
        if self.guidance_interval_s > self.inference_interval_s {
            out.push(format!(
                "guidance_interval ({}) must not exceed inference_interval ({})",
                self.guidance_interval_s, self.inference_interval_s
            ));
        }
        if self.step_budget == 0 {
            out.push("step_budget must be positive".to_string());
        }
        out
    }
}
