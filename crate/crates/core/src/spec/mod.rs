//! Loading of guidance bundles.
//!
//! A bundle is a directory:
//!
//! ```text
//! state.yaml        analysis-state fields, data sources, callbacks
//! strategies/*.yaml one strategy per file
//! actions/*.yaml    one action per file
//! meta.yaml         optional meta-strategy (suggestion filter)
//! engine.yaml       optional loop/budget overrides
//! ```
//!
//! Callbacks everywhere share one form:
//!
//! ```yaml
//! point_hovered:
//!   type: function
//!   args: [point_id]
//!   load: |
//!     state.interactions = append(state.interactions, {"kind": "hover", "id": point_id})
//! ```
//!
//! Keys that are not reserved for the file kind are kept as `extra_fields`
//! and become visible to that entity's callbacks under `self`.

mod validate;

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::config::{ConfigOverrides, DedupPolicy};
use crate::script::{parse_script, Script, SyntaxError};
use crate::value::{Map, Value};

pub use validate::{validate_bundle, Finding, ValidationReport};

pub const STRATEGY_KEYS: &[&str] = &[
    "strategy",
    "strategy_id",
    "degree",
    "description",
    "level",
    "goal",
    "dynamic",
    "knowledge_gap",
    "action",
    "determine_applicability",
];

pub const ACTION_KEYS: &[&str] = &[
    "action_id",
    "is_applicable",
    "generate_suggestion_content",
    "should_retract",
    "accept",
    "reject",
    "preview_start",
    "preview_end",
];

pub const META_KEYS: &[&str] = &["filter_suggestions"];

pub const ENGINE_KEYS: &[&str] = &[
    "guidance_interval",
    "inference_interval",
    "step_budget",
    "dedup",
    "retract_on_deactivate",
];

#[derive(Debug, Error)]
pub enum SpecError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{file}{}: {message}", line.map(|l| format!(":{l}")).unwrap_or_default())]
    Format {
        file: PathBuf,
        line: Option<usize>,
        message: String,
    },
    #[error("{file}: callback '{callback}': {error}")]
    Syntax {
        file: PathBuf,
        callback: String,
        error: SyntaxError,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct CallbackDef {
    pub name: String,
    pub args: Vec<String>,
    pub script: Script,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SourceKind {
    Csv,
    Url,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DataSource {
    pub target: String,
    pub source: String,
    pub kind: SourceKind,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct StateSpec {
    pub file: PathBuf,
    pub fields: Map,
    pub data_sources: Vec<DataSource>,
    pub initialize: Option<CallbackDef>,
    pub update_callbacks: BTreeMap<String, CallbackDef>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Degree {
    Orienting,
    Directing,
    Prescribing,
}

impl Degree {
    pub const ALL: [&'static str; 3] = ["orienting", "directing", "prescribing"];

    pub fn parse(s: &str) -> Option<Degree> {
        match s {
            "orienting" => Some(Degree::Orienting),
            "directing" => Some(Degree::Directing),
            "prescribing" => Some(Degree::Prescribing),
            _ => None,
        }
    }
}

impl fmt::Display for Degree {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Degree::Orienting => "orienting",
            Degree::Directing => "directing",
            Degree::Prescribing => "prescribing",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StrategySpec {
    pub file: PathBuf,
    pub strategy: String,
    pub strategy_id: Option<String>,
    /// Raw degree text; checked by the validator.
    pub degree: String,
    pub description: String,
    pub level: Option<String>,
    pub goal: Option<String>,
    pub dynamic: Option<String>,
    pub knowledge_gaps: Vec<String>,
    /// The `action:` entry. Exactly one is valid.
    pub action_refs: Vec<String>,
    pub determine_applicability: CallbackDef,
    pub extra_fields: Map,
}

impl StrategySpec {
    /// `strategy_id` if given, else the strategy name.
    pub fn id(&self) -> &str {
        self.strategy_id.as_deref().unwrap_or(&self.strategy)
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Hooks {
    pub accept: Option<CallbackDef>,
    pub reject: Option<CallbackDef>,
    pub preview_start: Option<CallbackDef>,
    pub preview_end: Option<CallbackDef>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ActionSpec {
    pub file: PathBuf,
    pub action_id: String,
    pub is_applicable: CallbackDef,
    pub generate_suggestion_content: CallbackDef,
    pub should_retract: Option<CallbackDef>,
    pub hooks: Hooks,
    pub extra_fields: Map,
}

impl ActionSpec {
    /// File name without extension, used to resolve `action:` references.
    pub fn file_stem(&self) -> &str {
        self.file
            .file_stem()
            .and_then(|s| s.to_str())
            .unwrap_or_default()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetaStrategySpec {
    pub file: PathBuf,
    pub filter_suggestions: CallbackDef,
    pub extra_fields: Map,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Bundle {
    pub root: PathBuf,
    pub state: StateSpec,
    pub strategies: Vec<StrategySpec>,
    pub actions: Vec<ActionSpec>,
    pub meta: Option<MetaStrategySpec>,
    pub config: ConfigOverrides,
}

impl Bundle {
    /// Indices of all actions an `action:` reference could mean: a file
    /// stem (with or without `actions/` prefix and yaml extension) or an
    /// action_id.
    pub fn resolve_action_ref(&self, reference: &str) -> Vec<usize> {
        let stem = normalize_ref(reference);
        let by_file: Vec<usize> = self
            .actions
            .iter()
            .enumerate()
            .filter(|(_, a)| a.file_stem() == stem)
            .map(|(i, _)| i)
            .collect();
        if !by_file.is_empty() {
            return by_file;
        }
        self.actions
            .iter()
            .enumerate()
            .filter(|(_, a)| a.action_id == reference || a.action_id == stem)
            .map(|(i, _)| i)
            .collect()
    }

    /// The single action a strategy drives, if its reference resolves
    /// unambiguously.
    pub fn action_index_for(&self, strategy: &StrategySpec) -> Option<usize> {
        match strategy.action_refs.as_slice() {
            [one] => match self.resolve_action_ref(one).as_slice() {
                [idx] => Some(*idx),
                _ => None,
            },
            _ => None,
        }
    }
}

fn normalize_ref(reference: &str) -> &str {
    let mut s = reference.trim();
    for prefix in ["../actions/", "./actions/", "actions/", "./"] {
        if let Some(rest) = s.strip_prefix(prefix) {
            s = rest;
            break;
        }
    }
    for ext in [".yaml", ".yml"] {
        if let Some(rest) = s.strip_suffix(ext) {
            return rest;
        }
    }
    s
}

fn read(path: &Path) -> Result<String, SpecError> {
    fs::read_to_string(path).map_err(|source| SpecError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn format_err(file: &Path, message: impl Into<String>) -> SpecError {
    SpecError::Format {
        file: file.to_path_buf(),
        line: None,
        message: message.into(),
    }
}

/// Parses a YAML document into a top-level map. An empty document is an
/// empty map.
fn parse_document(file: &Path, text: &str) -> Result<Map, SpecError> {
    let doc: Value = serde_yaml::from_str(text).map_err(|e| SpecError::Format {
        file: file.to_path_buf(),
        line: e.location().map(|l| l.line()),
        message: e.to_string(),
    })?;
    match doc {
        Value::Map(m) => Ok(m),
        Value::Null => Ok(Map::new()),
        other => Err(format_err(
            file,
            format!("top level must be a mapping, found {}", other.type_name()),
        )),
    }
}

fn is_callback_form(v: &Value) -> bool {
    v.get("type").and_then(Value::as_str) == Some("function")
}

fn parse_callback(file: &Path, name: &str, v: &Value) -> Result<CallbackDef, SpecError> {
    let Some(m) = v.as_map() else {
        return Err(format_err(
            file,
            format!("'{name}' must be a callback (`type: function` with `load`)"),
        ));
    };
    match m.get("type").and_then(Value::as_str) {
        Some("function") => {}
        _ => {
            return Err(format_err(
                file,
                format!("'{name}' must declare `type: function`"),
            ))
        }
    }
    for key in m.keys() {
        if !matches!(key.as_str(), "type" | "args" | "load") {
            return Err(format_err(
                file,
                format!("callback '{name}' has unknown key '{key}'"),
            ));
        }
    }
    let args = match m.get("args") {
        None | Some(Value::Null) => Vec::new(),
        Some(Value::List(items)) => items
            .iter()
            .map(|a| {
                a.as_str().map(str::to_owned).ok_or_else(|| {
                    format_err(file, format!("callback '{name}': args must be strings"))
                })
            })
            .collect::<Result<_, _>>()?,
        Some(_) => {
            return Err(format_err(
                file,
                format!("callback '{name}': args must be a list"),
            ))
        }
    };
    let source = match m.get("load") {
        Some(Value::String(s)) => s.as_str(),
        Some(_) => {
            return Err(format_err(
                file,
                format!("callback '{name}': load must be a string"),
            ))
        }
        None => return Err(format_err(file, format!("callback '{name}' is missing 'load'"))),
    };
    let script = parse_script(source, &args).map_err(|error| SpecError::Syntax {
        file: file.to_path_buf(),
        callback: name.to_string(),
        error,
    })?;
    Ok(CallbackDef {
        name: name.to_string(),
        args,
        script,
    })
}

fn required<'a>(file: &Path, doc: &'a Map, key: &str) -> Result<&'a Value, SpecError> {
    doc.get(key)
        .ok_or_else(|| format_err(file, format!("missing required key '{key}'")))
}

fn string_field(file: &Path, doc: &Map, key: &str) -> Result<Option<String>, SpecError> {
    match doc.get(key) {
        None | Some(Value::Null) => Ok(None),
        Some(Value::String(s)) => Ok(Some(s.clone())),
        Some(Value::Number(n)) => Ok(Some(crate::value::format_number(*n))),
        Some(other) => Err(format_err(
            file,
            format!("'{key}' must be a string, found {}", other.type_name()),
        )),
    }
}

fn optional_callback(file: &Path, doc: &Map, key: &str) -> Result<Option<CallbackDef>, SpecError> {
    doc.get(key).map(|v| parse_callback(file, key, v)).transpose()
}

fn extra_fields(doc: &Map, reserved: &[&str]) -> Map {
    doc.iter()
        .filter(|(k, _)| !reserved.contains(&k.as_str()))
        .map(|(k, v)| (k.clone(), v.clone()))
        .collect()
}

pub fn parse_state(file: &Path, text: &str) -> Result<StateSpec, SpecError> {
    let doc = parse_document(file, text)?;
    let mut spec = StateSpec {
        file: file.to_path_buf(),
        ..Default::default()
    };
    for (key, value) in &doc {
        if key == "initialize" {
            spec.initialize = Some(parse_callback(file, key, value)?);
        } else if is_callback_form(value) {
            spec.update_callbacks
                .insert(key.clone(), parse_callback(file, key, value)?);
        } else if let Some(source) = data_source(file, key, value)? {
            spec.data_sources.push(source);
        } else {
            spec.fields.insert(key.clone(), value.clone());
        }
    }
    Ok(spec)
}

fn data_source(file: &Path, key: &str, value: &Value) -> Result<Option<DataSource>, SpecError> {
    let Some(m) = value.as_map() else {
        return Ok(None);
    };
    let (Some(source), Some(load)) = (m.get("source"), m.get("load")) else {
        return Ok(None);
    };
    let kind = match load.as_str() {
        Some("csv") => SourceKind::Csv,
        Some("url") => SourceKind::Url,
        // a map that merely happens to have these keys is a literal field
        _ => return Ok(None),
    };
    let source = source
        .as_str()
        .ok_or_else(|| format_err(file, format!("'{key}.source' must be a string")))?;
    Ok(Some(DataSource {
        target: key.to_string(),
        source: source.to_string(),
        kind,
    }))
}

pub fn parse_strategy(file: &Path, text: &str) -> Result<StrategySpec, SpecError> {
    let doc = parse_document(file, text)?;
    let strategy = string_field(file, &doc, "strategy")?
        .ok_or_else(|| format_err(file, "missing required key 'strategy'"))?;
    let degree = string_field(file, &doc, "degree")?
        .ok_or_else(|| format_err(file, "missing required key 'degree'"))?;
    let action_refs = match required(file, &doc, "action")? {
        Value::String(s) => vec![s.clone()],
        Value::List(items) => items
            .iter()
            .map(|v| {
                v.as_str()
                    .map(str::to_owned)
                    .ok_or_else(|| format_err(file, "'action' entries must be strings"))
            })
            .collect::<Result<_, _>>()?,
        other => {
            return Err(format_err(
                file,
                format!("'action' must be a string, found {}", other.type_name()),
            ))
        }
    };
    let knowledge_gaps = match doc.get("knowledge_gap") {
        None | Some(Value::Null) => Vec::new(),
        Some(Value::String(s)) => vec![s.clone()],
        Some(Value::List(items)) => items.iter().map(|v| v.to_string()).collect(),
        Some(other) => vec![other.to_string()],
    };
    Ok(StrategySpec {
        file: file.to_path_buf(),
        strategy,
        strategy_id: string_field(file, &doc, "strategy_id")?,
        degree,
        description: string_field(file, &doc, "description")?.unwrap_or_default(),
        level: string_field(file, &doc, "level")?,
        goal: string_field(file, &doc, "goal")?,
        dynamic: string_field(file, &doc, "dynamic")?,
        knowledge_gaps,
        action_refs,
        determine_applicability: parse_callback(
            file,
            "determine_applicability",
            required(file, &doc, "determine_applicability")?,
        )?,
        extra_fields: extra_fields(&doc, STRATEGY_KEYS),
    })
}

pub fn parse_action(file: &Path, text: &str) -> Result<ActionSpec, SpecError> {
    let doc = parse_document(file, text)?;
    let action_id = string_field(file, &doc, "action_id")?
        .ok_or_else(|| format_err(file, "missing required key 'action_id'"))?;
    let is_applicable = parse_callback(
        file,
        "is_applicable",
        required(file, &doc, "is_applicable")?,
    )?;
    let generate_suggestion_content = parse_callback(
        file,
        "generate_suggestion_content",
        required(file, &doc, "generate_suggestion_content")?,
    )?;
    Ok(ActionSpec {
        file: file.to_path_buf(),
        action_id,
        is_applicable,
        generate_suggestion_content,
        should_retract: optional_callback(file, &doc, "should_retract")?,
        hooks: Hooks {
            accept: optional_callback(file, &doc, "accept")?,
            reject: optional_callback(file, &doc, "reject")?,
            preview_start: optional_callback(file, &doc, "preview_start")?,
            preview_end: optional_callback(file, &doc, "preview_end")?,
        },
        extra_fields: extra_fields(&doc, ACTION_KEYS),
    })
}

pub fn parse_meta(file: &Path, text: &str) -> Result<MetaStrategySpec, SpecError> {
    let doc = parse_document(file, text)?;
    Ok(MetaStrategySpec {
        file: file.to_path_buf(),
        filter_suggestions: parse_callback(
            file,
            "filter_suggestions",
            required(file, &doc, "filter_suggestions")?,
        )?,
        extra_fields: extra_fields(&doc, META_KEYS),
    })
}

pub fn parse_engine_config(file: &Path, text: &str) -> Result<ConfigOverrides, SpecError> {
    let doc = parse_document(file, text)?;
    let mut out = ConfigOverrides::default();
    for (key, value) in &doc {
        let bad = |what: &str| format_err(file, format!("'{key}' must be {what}"));
        match key.as_str() {
            "guidance_interval" => {
                out.guidance_interval = Some(value.as_f64().ok_or_else(|| bad("a number"))?)
            }
            "inference_interval" => {
                out.inference_interval = Some(value.as_f64().ok_or_else(|| bad("a number"))?)
            }
            "step_budget" => {
                let n = value.as_f64().ok_or_else(|| bad("a positive integer"))?;
                if n < 1.0 || n.fract() != 0.0 {
                    return Err(bad("a positive integer"));
                }
                out.step_budget = Some(n as u64);
            }
            "dedup" => {
                out.dedup = Some(
                    value
                        .as_str()
                        .and_then(DedupPolicy::parse)
                        .ok_or_else(|| bad("\"per-action-content\" or \"off\""))?,
                )
            }
            "retract_on_deactivate" => match value {
                Value::Bool(b) => out.retract_on_deactivate = Some(*b),
                _ => return Err(bad("a boolean")),
            },
            other => {
                return Err(format_err(
                    file,
                    format!(
                        "unknown key '{other}' (allowed: {})",
                        ENGINE_KEYS.join(", ")
                    ),
                ))
            }
        }
    }
    Ok(out)
}

fn yaml_files(dir: &Path) -> Result<Vec<PathBuf>, SpecError> {
    let entries = fs::read_dir(dir).map_err(|source| SpecError::Io {
        path: dir.to_path_buf(),
        source,
    })?;
    let mut files = Vec::new();
    for entry in entries {
        let entry = entry.map_err(|source| SpecError::Io {
            path: dir.to_path_buf(),
            source,
        })?;
        let path = entry.path();
        let is_yaml = path
            .extension()
            .and_then(|e| e.to_str())
            .is_some_and(|e| e == "yaml" || e == "yml");
        if is_yaml && path.is_file() {
            files.push(path);
        }
    }
    files.sort();
    Ok(files)
}

/// Loads and compiles every file of the bundle rooted at `root`.
pub fn load_bundle(root: impl AsRef<Path>) -> Result<Bundle, SpecError> {
    let root = root.as_ref();
    let state_file = root.join("state.yaml");
    let state = parse_state(&state_file, &read(&state_file)?)?;

    let mut strategies = Vec::new();
    for file in yaml_files(&root.join("strategies"))? {
        strategies.push(parse_strategy(&file, &read(&file)?)?);
    }
    let mut actions = Vec::new();
    for file in yaml_files(&root.join("actions"))? {
        actions.push(parse_action(&file, &read(&file)?)?);
    }

    let meta_file = root.join("meta.yaml");
    let meta = if meta_file.exists() {
        Some(parse_meta(&meta_file, &read(&meta_file)?)?)
    } else {
        None
    };
    let engine_file = root.join("engine.yaml");
    let config = if engine_file.exists() {
        parse_engine_config(&engine_file, &read(&engine_file)?)?
    } else {
        ConfigOverrides::default()
    };

    Ok(Bundle {
        root: root.to_path_buf(),
        state,
        strategies,
        actions,
        meta,
        config,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p() -> PathBuf {
        PathBuf::from("x.yaml")
    }

    #[test]
    fn state_sections_are_classified() {
        let spec = parse_state(
            &p(),
            r#"
month: "2022-03"
data:
  source: weather.csv
  load: csv
initialize:
  type: function
  load: state.started = now()
point_hovered:
  type: function
  args: [point_id]
  load: |
    state.interactions = append(state.interactions, point_id)
"#,
        )
        .unwrap();
        assert_eq!(spec.fields.get("month"), Some(&Value::from("2022-03")));
        assert_eq!(spec.data_sources.len(), 1);
        assert_eq!(spec.data_sources[0].target, "data");
        assert_eq!(spec.data_sources[0].kind, SourceKind::Csv);
        assert!(spec.initialize.is_some());
        assert_eq!(spec.update_callbacks["point_hovered"].args, vec!["point_id"]);
    }

    #[test]
    fn missing_generate_is_a_format_error() {
        let err = parse_action(
            Path::new("actions/a.yaml"),
            "action_id: a\nis_applicable:\n  type: function\n  load: return true\n",
        )
        .unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("actions/a.yaml"), "{msg}");
        assert!(msg.contains("generate_suggestion_content"), "{msg}");
    }

    #[test]
    fn malformed_yaml_carries_line() {
        let err = parse_action(Path::new("a.yaml"), "action_id: a\n  bad: [\n").unwrap_err();
        match err {
            SpecError::Format { line, .. } => assert!(line.is_some()),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn script_errors_name_the_callback() {
        let err = parse_meta(
            Path::new("meta.yaml"),
            "filter_suggestions:\n  type: function\n  args: [candidates]\n  load: return (\n",
        )
        .unwrap_err();
        match err {
            SpecError::Syntax { callback, .. } => assert_eq!(callback, "filter_suggestions"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn reference_normalization() {
        assert_eq!(normalize_ref("actions/next_month.yaml"), "next_month");
        assert_eq!(normalize_ref("../actions/next_month.yml"), "next_month");
        assert_eq!(normalize_ref("next_month"), "next_month");
    }

    #[test]
    fn engine_overrides() {
        let o = parse_engine_config(
            &p(),
            "guidance_interval: 0.5\ndedup: \"off\"\nretract_on_deactivate: false\n",
        )
        .unwrap();
        assert_eq!(o.guidance_interval, Some(0.5));
        assert_eq!(o.dedup, Some(DedupPolicy::Off));
        assert_eq!(o.retract_on_deactivate, Some(false));
        assert!(parse_engine_config(&p(), "tick: 3\n").is_err());
    }
}
