//! The live engine task. One tokio task owns the [`Engine`]; everything
//! else talks to it through [`EngineHandle`]. Ticks follow the shared
//! [`Scheduler`] on tokio's clock, so tests can run on paused time.

use std::io::Write;
use std::time::Duration;

use serde_json::{json, Value as Json};
use tokio::sync::{broadcast, mpsc, oneshot};
use tokio::task::JoinHandle;
use tokio::time::{sleep_until, Instant};
use waymark_core::engine::{EngineEvent, InteractionError, InteractionKind};
use waymark_core::scheduler::{Scheduler, Tick};
use waymark_core::state::{ChangeEvent, StateError};
use waymark_core::value::Map;
use waymark_core::{Engine, Suggestion};

/// Queued commands handled before the next tick gets a chance to run.
const MAX_BATCH: usize = 1024;
const PUSH_CAPACITY: usize = 4096;

#[derive(Debug, Clone)]
pub struct Health {
    pub revision: u64,
    pub active_strategies: Vec<String>,
    pub pending: usize,
}

/// What a new socket subscriber gets: the current pending set, plus a
/// receiver that sees every push after it.
pub struct Subscription {
    pub hello: Json,
    pub pushes: broadcast::Receiver<Json>,
}

enum Command {
    SetProperties(Map, oneshot::Sender<Result<ChangeEvent, StateError>>),
    InvokeCallback {
        name: String,
        args: Map,
        reply: oneshot::Sender<Result<ChangeEvent, StateError>>,
    },
    Interaction {
        id: String,
        kind: InteractionKind,
        reply: oneshot::Sender<Result<Suggestion, InteractionError>>,
    },
    Pending(oneshot::Sender<Vec<Suggestion>>),
    State(oneshot::Sender<Json>),
    Health(oneshot::Sender<Health>),
    Subscribe(oneshot::Sender<Subscription>),
    Shutdown,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EngineGone;

impl std::fmt::Display for EngineGone {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str("engine task has stopped")
    }
}

impl std::error::Error for EngineGone {}

#[derive(Clone)]
pub struct EngineHandle {
    tx: mpsc::UnboundedSender<Command>,
}

impl EngineHandle {
    async fn ask<T>(&self, make: impl FnOnce(oneshot::Sender<T>) -> Command) -> Result<T, EngineGone> {
        let (tx, rx) = oneshot::channel();
        self.tx.send(make(tx)).map_err(|_| EngineGone)?;
        rx.await.map_err(|_| EngineGone)
    }

    pub async fn set_properties(&self, patch: Map) -> Result<Result<ChangeEvent, StateError>, EngineGone> {
        self.ask(|r| Command::SetProperties(patch, r)).await
    }

    pub async fn invoke_callback(
        &self,
        name: String,
        args: Map,
    ) -> Result<Result<ChangeEvent, StateError>, EngineGone> {
        self.ask(|reply| Command::InvokeCallback { name, args, reply })
            .await
    }

    pub async fn interact(
        &self,
        id: String,
        kind: InteractionKind,
    ) -> Result<Result<Suggestion, InteractionError>, EngineGone> {
        self.ask(|reply| Command::Interaction { id, kind, reply })
            .await
    }

    pub async fn pending(&self) -> Result<Vec<Suggestion>, EngineGone> {
        self.ask(Command::Pending).await
    }

    pub async fn state(&self) -> Result<Json, EngineGone> {
        self.ask(Command::State).await
    }

    pub async fn health(&self) -> Result<Health, EngineGone> {
        self.ask(Command::Health).await
    }

    pub async fn subscribe(&self) -> Result<Subscription, EngineGone> {
        self.ask(Command::Subscribe).await
    }

    pub fn shutdown(&self) {
        let _ = self.tx.send(Command::Shutdown);
    }
}

/// Socket message for an engine event, if it is pushed at all.
pub fn push_message(event: &EngineEvent) -> Option<Json> {
    match event {
        EngineEvent::Suggestion { suggestion, .. } => Some(json!({
            "type": "suggestion",
            "payload": suggestion,
        })),
        EngineEvent::Retraction {
            suggestion_id,
            action_id,
            reason,
            ..
        } => Some(json!({
            "type": "retraction",
            "payload": {"suggestion_id": suggestion_id, "action_id": action_id, "reason": reason},
        })),
        _ => None,
    }
}

struct Task {
    engine: Engine,
    scheduler: Scheduler,
    start: Instant,
    pushes: broadcast::Sender<Json>,
    log: Option<Box<dyn Write + Send>>,
}

impl Task {
    fn now(&self) -> f64 {
        self.start.elapsed().as_secs_f64()
    }

    fn hello(&self) -> Json {
        json!({
            "type": "hello",
            "payload": {
                "engine": "waymark",
                "version": env!("CARGO_PKG_VERSION"),
                "revision": self.engine.revision(),
                "active_strategies": self.engine.active_strategies(),
                "pending": self.engine.pending(),
            },
        })
    }

    fn flush(&mut self) {
        for event in self.engine.drain_events() {
            if let Some(log) = self.log.as_mut() {
                // a broken log sink must not stop guidance
                let _ = writeln!(log, "{}", event.to_json_line());
            }
            if let Some(msg) = push_message(&event) {
                let _ = self.pushes.send(msg);
            }
        }
        if let Some(log) = self.log.as_mut() {
            let _ = log.flush();
        }
    }

    fn changed(&mut self, now: f64, ok: bool) {
        if ok {
            self.scheduler.notify_change(now);
        }
    }

    /// Returns false on shutdown.
    fn handle(&mut self, cmd: Command) -> bool {
        let now = self.now();
        match cmd {
            Command::SetProperties(patch, reply) => {
                let r = self.engine.set_properties(patch, now);
                self.changed(now, r.is_ok());
                let _ = reply.send(r);
            }
            Command::InvokeCallback { name, args, reply } => {
                let r = self.engine.invoke_callback(&name, &args, now);
                self.changed(now, r.is_ok());
                let _ = reply.send(r);
            }
            Command::Interaction { id, kind, reply } => {
                let r = self.engine.record_interaction(&id, kind, now);
                let changed = matches!(&r, Ok(o) if o.change.is_some());
                self.changed(now, changed);
                let _ = reply.send(r.map(|o| o.suggestion));
            }
            Command::Pending(reply) => {
                let _ = reply.send(self.engine.pending().into_iter().cloned().collect());
            }
            Command::State(reply) => {
                let state = self.engine.state();
                let _ = reply.send(json!({
                    "revision": state.revision(),
                    "updated_at": state.updated_at(),
                    "values": state.values(),
                }));
            }
            Command::Health(reply) => {
                let _ = reply.send(Health {
                    revision: self.engine.revision(),
                    active_strategies: self.engine.active_strategies(),
                    pending: self.engine.pending().len(),
                });
            }
            Command::Subscribe(reply) => {
                // flushed before subscribing, so the hello and the stream
                // never overlap or leave a gap
                self.flush();
                let _ = reply.send(Subscription {
                    hello: self.hello(),
                    pushes: self.pushes.subscribe(),
                });
            }
            Command::Shutdown => return false,
        }
        true
    }

    fn run_due(&mut self) {
        let now = self.now();
        while let Some((_, tick)) = self.scheduler.pop_due(now, true) {
            match tick {
                Tick::Inference => self.engine.run_inference_tick(now),
                Tick::Guidance(trigger) => self.engine.run_guidance_tick(now, trigger),
            }
        }
    }

    async fn run(mut self, mut rx: mpsc::UnboundedReceiver<Command>) {
        loop {
            let deadline = self.start + Duration::from_secs_f64(self.scheduler.next_due().max(0.0));
            tokio::select! {
                cmd = rx.recv() => {
                    let Some(cmd) = cmd else { break };
                    if !self.handle(cmd) {
                        break;
                    }
                    // drain what is already queued so bursts share one
                    // immediate tick
                    let mut stop = false;
                    for _ in 0..MAX_BATCH {
                        match rx.try_recv() {
                            Ok(cmd) => {
                                if !self.handle(cmd) {
                                    stop = true;
                                    break;
                                }
                            }
                            Err(_) => break,
                        }
                    }
                    if stop {
                        break;
                    }
                }
                _ = sleep_until(deadline) => self.run_due(),
            }
            self.flush();
        }
        self.flush();
    }
}

/// Starts the engine task. The engine's clock is seconds since this call;
/// construct the engine with `now = 0`.
pub fn spawn_engine(engine: Engine, log: Option<Box<dyn Write + Send>>) -> (EngineHandle, JoinHandle<()>) {
    let (tx, rx) = mpsc::unbounded_channel();
    let (pushes, _) = broadcast::channel(PUSH_CAPACITY);
    let task = Task {
        scheduler: Scheduler::new(engine.config(), 0.0),
        engine,
        start: Instant::now(),
        pushes,
        log,
    };
    let join = tokio::spawn(task.run(rx));
    (EngineHandle { tx }, join)
}
