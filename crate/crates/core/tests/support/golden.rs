//! Runner for the DSL golden cases in `tests/data/dsl_golden.json`.

use std::collections::BTreeMap;

use serde::Deserialize;
use waymark_core::script::{parse_script, Env, DEFAULT_STEP_BUDGET};
use waymark_core::Value;

#[derive(Debug, Deserialize)]
pub struct Case {
    pub name: String,
    pub script: String,
    #[serde(default)]
    pub bindings: BTreeMap<String, serde_json::Value>,
    #[serde(default)]
    pub mutable: BTreeMap<String, serde_json::Value>,
    #[serde(default)]
    pub now: f64,
    pub budget: Option<u64>,
    #[serde(default, deserialize_with = "present")]
    pub expect: Option<serde_json::Value>,
    pub error: Option<String>,
    pub line: Option<u32>,
    pub col: Option<u32>,
    #[serde(default)]
    pub expect_mutable: BTreeMap<String, serde_json::Value>,
}

// `"expect": null` must stay distinguishable from a missing key.
fn present<'de, D: serde::Deserializer<'de>>(d: D) -> Result<Option<serde_json::Value>, D::Error> {
    serde_json::Value::deserialize(d).map(Some)
}

pub fn load(path: &std::path::Path) -> Vec<Case> {
    let text = std::fs::read_to_string(path).expect("golden file");
    serde_json::from_str(&text).expect("golden json")
}

/// Runs one case; `Err` carries a human-readable mismatch.
pub fn run(case: &Case) -> Result<(), String> {
    let script = match parse_script(&case.script, &[]) {
        Ok(s) => s,
        Err(e) => {
            return match case.error.as_deref() {
                Some("Syntax") => {
                    check_pos(case, e.line, e.col)?;
                    Ok(())
                }
                _ => Err(format!("unexpected syntax error: {e}")),
            };
        }
    };
    let mut env = Env::new(case.now, case.budget.unwrap_or(DEFAULT_STEP_BUDGET));
    for (k, v) in &case.bindings {
        env.bind(k, Value::from(v.clone()));
    }
    for (k, v) in &case.mutable {
        env.bind_mut(k, Value::from(v.clone()));
    }
    match (script.eval(&mut env), &case.error) {
        (Ok(got), None) => {
            let want = Value::from(case.expect.clone().unwrap_or(serde_json::Value::Null));
            if got != want {
                return Err(format!("got {}, want {}", got.to_json(), want.to_json()));
            }
            for (k, v) in &case.expect_mutable {
                let want = Value::from(v.clone());
                match env.get(k) {
                    Some(got) if *got == want => {}
                    got => {
                        return Err(format!(
                            "binding {k}: got {:?}, want {}",
                            got.map(|g| g.to_json()),
                            want.to_json()
                        ))
                    }
                }
            }
            Ok(())
        }
        (Ok(got), Some(kind)) => Err(format!("expected {kind}, got value {}", got.to_json())),
        (Err(e), None) => Err(format!("unexpected error: {e}")),
        (Err(e), Some(kind)) => {
            if e.name() != kind {
                return Err(format!("expected {kind}, got {e}"));
            }
            let (line, col) = e.position();
            check_pos(case, line, col)
        }
    }
}

fn check_pos(case: &Case, line: u32, col: u32) -> Result<(), String> {
    if case.line.is_some_and(|l| l != line) || case.col.is_some_and(|c| c != col) {
        return Err(format!(
            "position {line}:{col}, want {:?}:{:?}",
            case.line, case.col
        ));
    }
    Ok(())
}
