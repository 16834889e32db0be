#![allow(dead_code)]

//! Builds throwaway bundles in a temp dir.

use std::sync::Arc;

use tempfile::TempDir;
use waymark_core::engine::{Engine, IdScheme};
use waymark_core::spec::{load_bundle, Bundle};
use waymark_core::state::FsLoader;
use waymark_core::EngineConfig;

pub fn write(files: &[(&str, &str)]) -> TempDir {
    let dir = tempfile::tempdir().unwrap();
    for (path, text) in files {
        let p = dir.path().join(path);
        std::fs::create_dir_all(p.parent().unwrap()).unwrap();
        std::fs::write(p, text).unwrap();
    }
    dir
}

pub fn load(files: &[(&str, &str)]) -> (TempDir, Arc<Bundle>) {
    let dir = write(files);
    let bundle = load_bundle(dir.path()).unwrap();
    (dir, Arc::new(bundle))
}

/// One strategy `s` (always applicable unless overridden) bound to action `a`.
pub fn single(state: &str, strategy_extra: &str, action: &str) -> (TempDir, Arc<Bundle>) {
    let strategy = format!(
        "strategy: s\ndegree: orienting\ndescription: test\naction: actions/a.yaml\n{strategy_extra}"
    );
    let strategy = if strategy.contains("determine_applicability") {
        strategy
    } else {
        strategy + "determine_applicability:\n  type: function\n  load: return true\n"
    };
    load(&[
        ("state.yaml", state),
        ("strategies/s.yaml", &strategy),
        ("actions/a.yaml", &format!("action_id: a\n{action}")),
    ])
}

pub fn engine(bundle: &Arc<Bundle>, config: EngineConfig) -> Engine {
    Engine::new(Arc::clone(bundle), config, &FsLoader::new(), 0.0, IdScheme::Counter).unwrap()
}
