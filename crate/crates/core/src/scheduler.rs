//! Tick timing shared by replay and live sessions.
//!
//! Guidance ticks fall on `anchor + k * interval` (k >= 1); the anchor
//! starts at the session start and moves to every immediate tick. Inference
//! ticks fall on `start + k * interval` (k >= 0). A state change requests an
//! immediate guidance tick; further changes before it runs are coalesced.

use crate::config::EngineConfig;
use crate::engine::Trigger;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Tick {
    Inference,
    Guidance(Trigger),
}

#[derive(Debug, Clone)]
pub struct Scheduler {
    start: f64,
    guidance_interval: f64,
    inference_interval: f64,
    anchor: f64,
    guidance_k: u64,
    inference_k: u64,
    immediate: Option<f64>,
}

impl Scheduler {
    pub fn new(config: &EngineConfig, start: f64) -> Self {
        Scheduler {
            start,
            guidance_interval: config.guidance_interval_s,
            inference_interval: config.inference_interval_s,
            anchor: start,
            guidance_k: 1,
            inference_k: 0,
            immediate: None,
        }
    }

    pub fn next_inference(&self) -> f64 {
        self.start + self.inference_k as f64 * self.inference_interval
    }

    pub fn next_periodic_guidance(&self) -> f64 {
        self.anchor + self.guidance_k as f64 * self.guidance_interval
    }

    fn next_guidance(&self) -> (f64, Trigger) {
        let periodic = self.next_periodic_guidance();
        match self.immediate {
            Some(t) if t <= periodic => (t, Trigger::Immediate),
            _ => (periodic, Trigger::Periodic),
        }
    }

    /// Requests an immediate guidance tick at `at`. No-op when one is
    /// already waiting.
    pub fn notify_change(&mut self, at: f64) {
        if self.immediate.is_none() {
            self.immediate = Some(at);
        }
    }

    pub fn has_immediate(&self) -> bool {
        self.immediate.is_some()
    }

    /// Time of the next tick of any kind.
    pub fn next_due(&self) -> f64 {
        self.next_inference().min(self.next_guidance().0)
    }

    /// Pops the earliest tick due at or before `now` (strictly before when
    /// `inclusive` is false). Inference wins ties.
    pub fn pop_due(&mut self, now: f64, inclusive: bool) -> Option<(f64, Tick)> {
        let due = |t: f64| if inclusive { t <= now } else { t < now };
        let inference = self.next_inference();
        let (guidance, trigger) = self.next_guidance();
        if due(inference) && inference <= guidance {
            self.inference_k += 1;
            return Some((inference, Tick::Inference));
        }
        if due(guidance) {
            self.immediate = None;
            match trigger {
                Trigger::Immediate => {
                    self.anchor = guidance;
                    self.guidance_k = 1;
                }
                Trigger::Periodic => self.guidance_k += 1,
            }
            return Some((guidance, Tick::Guidance(trigger)));
        }
        None
    }
}
