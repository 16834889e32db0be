#![allow(dead_code)]

use std::io::Write;
use std::path::Path;
use std::sync::{Arc, Mutex};

use serde_json::Value as Json;
use waymark_core::engine::IdScheme;
use waymark_core::spec::load_bundle;
use waymark_core::state::FsLoader;
use waymark_core::{Engine, EngineConfig};
use waymark_server::{spawn_engine, EngineHandle};

/// Log sink the test can read back.
#[derive(Clone, Default)]
pub struct SharedLog(Arc<Mutex<Vec<u8>>>);

impl Write for SharedLog {
    fn write(&mut self, buf: &[u8]) -> std::io::Result<usize> {
        self.0.lock().unwrap().extend_from_slice(buf);
        Ok(buf.len())
    }
    fn flush(&mut self) -> std::io::Result<()> {
        Ok(())
    }
}

impl SharedLog {
    pub fn events(&self) -> Vec<Json> {
        let text = String::from_utf8(self.0.lock().unwrap().clone()).unwrap();
        text.lines().map(|l| serde_json::from_str(l).unwrap()).collect()
    }

    pub fn of_type(&self, kind: &str) -> Vec<Json> {
        self.events().into_iter().filter(|e| e["type"] == kind).collect()
    }

    /// The socket messages the log implies, in log order.
    pub fn pushes(&self) -> Vec<Json> {
        self.events()
            .into_iter()
            .filter_map(|e| match e["type"].as_str() {
                Some("suggestion") => Some(serde_json::json!({"type": "suggestion", "payload": e["suggestion"]})),
                Some("retraction") => Some(serde_json::json!({
                    "type": "retraction",
                    "payload": {
                        "suggestion_id": e["suggestion_id"],
                        "action_id": e["action_id"],
                        "reason": e["reason"],
                    },
                })),
                _ => None,
            })
            .collect()
    }
}

pub fn fixture(name: &str) -> std::path::PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

/// Periodic ticks far apart unless the test overrides them, so only
/// state changes drive guidance.
pub fn quiet() -> EngineConfig {
    EngineConfig {
        guidance_interval_s: 3600.0,
        inference_interval_s: 3600.0,
        ..EngineConfig::default()
    }
}

pub fn start(dir: &Path, config: EngineConfig) -> (EngineHandle, SharedLog, tokio::task::JoinHandle<()>) {
    let bundle = Arc::new(load_bundle(dir).unwrap());
    let engine = Engine::new(bundle, config, &FsLoader::new(), 0.0, IdScheme::Counter).unwrap();
    let log = SharedLog::default();
    let (handle, join) = spawn_engine(engine, Some(Box::new(log.clone())));
    (handle, log, join)
}
