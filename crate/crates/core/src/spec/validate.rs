use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::Path;

use serde::Serialize;

use super::{Bundle, CallbackDef, Degree};
use crate::config::EngineConfig;
use crate::script::{free_identifiers, is_builtin};

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Finding {
    pub file: String,
    pub message: String,
}

impl fmt::Display for Finding {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.file, self.message)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct ValidationReport {
    pub errors: Vec<Finding>,
    pub warnings: Vec<Finding>,
}

impl ValidationReport {
    pub fn is_ok(&self) -> bool {
        self.errors.is_empty()
    }

    fn error(&mut self, file: &Path, message: impl Into<String>) {
        self.errors.push(Finding {
            file: file.display().to_string(),
            message: message.into(),
        });
    }

    fn warn(&mut self, file: &Path, message: impl Into<String>) {
        self.warnings.push(Finding {
            file: file.display().to_string(),
            message: message.into(),
        });
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for e in &self.errors {
            writeln!(f, "error: {e}")?;
        }
        for w in &self.warnings {
            writeln!(f, "warning: {w}")?;
        }
        write!(
            f,
            "{} error(s), {} warning(s)",
            self.errors.len(),
            self.warnings.len()
        )
    }
}

/// What a callback kind gets bound at runtime.
#[derive(Clone, Copy)]
enum Kind {
    Initialize,
    Update,
    /// determine_applicability, is_applicable, generate_suggestion_content
    Loop,
    /// should_retract and interaction hooks
    WithSuggestion,
    Filter,
}

impl Kind {
    fn bindings(self) -> &'static [&'static str] {
        match self {
            Kind::Initialize | Kind::Update => &["state"],
            Kind::Loop => &["state", "self"],
            Kind::WithSuggestion => &["state", "self", "suggestion"],
            Kind::Filter => &["state", "self", "candidates", "pending"],
        }
    }
}

const RESERVED: &[&str] = &["state", "self", "suggestion", "candidates", "pending"];

fn check_callback(report: &mut ValidationReport, file: &Path, cb: &CallbackDef, kind: Kind) {
    let bound = kind.bindings();
    let mut allowed: BTreeSet<&str> = bound.iter().copied().collect();
    match kind {
        Kind::Update => {
            for arg in &cb.args {
                if RESERVED.contains(&arg.as_str()) {
                    report.error(
                        file,
                        format!("callback '{}': argument name '{arg}' is reserved", cb.name),
                    );
                }
                allowed.insert(arg);
            }
        }
        _ => {
            for arg in &cb.args {
                if !bound.contains(&arg.as_str()) {
                    report.error(
                        file,
                        format!(
                            "callback '{}': argument '{arg}' is never supplied (available: {})",
                            cb.name,
                            bound.join(", ")
                        ),
                    );
                }
            }
        }
    }
    for name in free_identifiers(&cb.script) {
        if !allowed.contains(name.as_str()) {
            report.error(
                file,
                format!("callback '{}': unknown root identifier '{name}'", cb.name),
            );
        }
    }
    for func in cb.script.called_functions() {
        if !is_builtin(&func) {
            report.error(
                file,
                format!("callback '{}': unknown builtin '{func}'", cb.name),
            );
        }
    }
}

/// Static checks over a loaded bundle. An empty error list means the bundle
/// can be run.
pub fn validate_bundle(bundle: &Bundle) -> ValidationReport {
    let mut report = ValidationReport::default();

    let state = &bundle.state;
    if let Some(init) = &state.initialize {
        check_callback(&mut report, &state.file, init, Kind::Initialize);
    }
    for cb in state.update_callbacks.values() {
        check_callback(&mut report, &state.file, cb, Kind::Update);
    }

    let mut action_ids: BTreeMap<&str, &Path> = BTreeMap::new();
    for action in &bundle.actions {
        if let Some(first) = action_ids.insert(&action.action_id, &action.file) {
            report.error(
                &action.file,
                format!(
                    "duplicate action_id '{}' (also defined in {})",
                    action.action_id,
                    first.display()
                ),
            );
        }
        check_callback(&mut report, &action.file, &action.is_applicable, Kind::Loop);
        check_callback(
            &mut report,
            &action.file,
            &action.generate_suggestion_content,
            Kind::Loop,
        );
        if action.generate_suggestion_content.script.provably_not_map() {
            report.warn(
                &action.file,
                "generate_suggestion_content never returns a map with content, title, description",
            );
        }
        let hooks = [
            &action.should_retract,
            &action.hooks.accept,
            &action.hooks.reject,
            &action.hooks.preview_start,
            &action.hooks.preview_end,
        ];
        for cb in hooks.into_iter().flatten() {
            check_callback(&mut report, &action.file, cb, Kind::WithSuggestion);
        }
    }

    let mut strategy_ids: BTreeMap<&str, &Path> = BTreeMap::new();
    let mut strategy_names: BTreeMap<&str, &Path> = BTreeMap::new();
    let mut referenced: BTreeMap<usize, Vec<&str>> = BTreeMap::new();
    for strategy in &bundle.strategies {
        let file = &strategy.file;
        if let Some(first) = strategy_names.insert(&strategy.strategy, file) {
            report.error(
                file,
                format!(
                    "duplicate strategy name '{}' (also in {})",
                    strategy.strategy,
                    first.display()
                ),
            );
        }
        if strategy.id() != strategy.strategy {
            if let Some(first) = strategy_ids.insert(strategy.id(), file) {
                report.error(
                    file,
                    format!(
                        "duplicate strategy_id '{}' (also in {})",
                        strategy.id(),
                        first.display()
                    ),
                );
            }
        }
        if Degree::parse(&strategy.degree).is_none() {
            report.error(
                file,
                format!(
                    "invalid degree '{}' (allowed: {})",
                    strategy.degree,
                    Degree::ALL.join(", ")
                ),
            );
        }
        check_callback(&mut report, file, &strategy.determine_applicability, Kind::Loop);

        match strategy.action_refs.as_slice() {
            [one] => match bundle.resolve_action_ref(one).as_slice() {
                [] => report.error(file, format!("action '{one}' does not resolve to any action")),
                [idx] => {
                    referenced.entry(*idx).or_default().push(&strategy.strategy);
                    let action = &bundle.actions[*idx];
                    for key in strategy.extra_fields.keys() {
                        if action.extra_fields.contains_key(key) {
                            report.warn(
                                file,
                                format!(
                                    "field '{key}' is also set by action '{}'; the action's value wins under self",
                                    action.action_id
                                ),
                            );
                        }
                    }
                }
                _ => report.error(file, format!("action '{one}' is ambiguous")),
            },
            refs => report.error(
                file,
                format!(
                    "a strategy must reference exactly one action, found {}",
                    refs.len()
                ),
            ),
        }
    }
    for (idx, users) in &referenced {
        if users.len() > 1 {
            report.error(
                &bundle.actions[*idx].file,
                format!(
                    "action '{}' is referenced by several strategies: {}",
                    bundle.actions[*idx].action_id,
                    users.join(", ")
                ),
            );
        }
    }
    for (idx, action) in bundle.actions.iter().enumerate() {
        if !referenced.contains_key(&idx) {
            report.warn(
                &action.file,
                format!("action '{}' is not used by any strategy", action.action_id),
            );
        }
    }

    if let Some(meta) = &bundle.meta {
        let cb = &meta.filter_suggestions;
        if !cb.args.iter().any(|a| a == "candidates") {
            report.error(
                &meta.file,
                "filter_suggestions must declare a `candidates` argument",
            );
        }
        check_callback(&mut report, &meta.file, cb, Kind::Filter);
    }

    let config = EngineConfig::default().with_overrides(&bundle.config);
    for problem in config.problems() {
        report.error(&bundle.root.join("engine.yaml"), problem);
    }

    report
}
