//! Command implementations behind the `waymark` binary.

use std::fs;
use std::io::Write;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::{SystemTime, UNIX_EPOCH};

use waymark_core::config::{ConfigOverrides, EngineConfig, ExecMode};
use waymark_core::engine::{render_trace, EngineError, IdScheme};
use waymark_core::replay::{replay, Timeline, TimelineError};
use waymark_core::spec::{load_bundle, validate_bundle, Bundle, SpecError, ValidationReport};
use waymark_core::state::FsLoader;
use waymark_core::Engine;

/// Exit code for invalid bundles and inputs.
pub const EXIT_INVALID: i32 = 2;
/// Exit code for failures at runtime.
pub const EXIT_FAILURE: i32 = 1;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error(transparent)]
    Spec(#[from] SpecError),
    #[error("{0}")]
    Invalid(ValidationReport),
    #[error("{path}: {source}")]
    Timeline {
        path: PathBuf,
        source: TimelineError,
    },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error(transparent)]
    Engine(EngineError),
    #[error("server error: {0}")]
    Server(std::io::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Spec(_) | CliError::Invalid(_) | CliError::Timeline { .. } => EXIT_INVALID,
            CliError::Engine(EngineError::Invalid(_)) => EXIT_INVALID,
            _ => EXIT_FAILURE,
        }
    }
}

impl From<EngineError> for CliError {
    fn from(e: EngineError) -> Self {
        match e {
            EngineError::Invalid(report) => CliError::Invalid(report),
            other => CliError::Engine(other),
        }
    }
}

/// Command-line settings that override `engine.yaml`.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub guidance_interval: Option<f64>,
    pub inference_interval: Option<f64>,
    pub sequential: bool,
}

/// Loads CSV and local files directly, and http(s) sources through ureq.
pub fn loader() -> FsLoader {
    FsLoader::with_fetcher(|url| {
        ureq::get(url)
            .call()
            .map_err(|e| e.to_string())?
            .body_mut()
            .read_to_string()
            .map_err(|e| e.to_string())
    })
}

pub fn engine_config(bundle: &Bundle, o: &Overrides) -> EngineConfig {
    let cli = ConfigOverrides {
        guidance_interval: o.guidance_interval,
        inference_interval: o.inference_interval,
        ..ConfigOverrides::default()
    };
    let mut config = EngineConfig::default()
        .with_overrides(&bundle.config)
        .with_overrides(&cli);
    if o.sequential {
        config.exec = ExecMode::Sequential;
    }
    config
}

fn checked_bundle(dir: &Path, o: &Overrides) -> Result<(Arc<Bundle>, EngineConfig), CliError> {
    let bundle = load_bundle(dir)?;
    let report = validate_bundle(&bundle);
    if !report.is_ok() {
        return Err(CliError::Invalid(report));
    }
    let config = engine_config(&bundle, o);
    let problems = config.problems();
    if !problems.is_empty() {
        return Err(CliError::Invalid(ValidationReport {
            errors: problems
                .into_iter()
                .map(|message| waymark_core::spec::Finding {
                    file: "command line".into(),
                    message,
                })
                .collect(),
            warnings: Vec::new(),
        }));
    }
    Ok((Arc::new(bundle), config))
}

/// Loads and validates a bundle. Load failures are errors; findings are
/// in the report.
pub fn cmd_validate(dir: &Path) -> Result<ValidationReport, CliError> {
    let bundle = load_bundle(dir)?;
    Ok(validate_bundle(&bundle))
}

pub fn read_timeline(path: &Path) -> Result<Timeline, CliError> {
    let text = fs::read_to_string(path).map_err(|source| CliError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    Timeline::parse(&text).map_err(|source| CliError::Timeline {
        path: path.to_path_buf(),
        source,
    })
}

/// Replays a timeline file and returns the trace as JSON lines.
pub fn cmd_replay(dir: &Path, timeline: &Path, o: &Overrides) -> Result<String, CliError> {
    let (bundle, config) = checked_bundle(dir, o)?;
    let timeline = read_timeline(timeline)?;
    let trace = replay(bundle, config, &loader(), &timeline)?;
    Ok(render_trace(&trace))
}

#[derive(Debug, Clone)]
pub struct RunOptions {
    pub addr: SocketAddr,
    pub log: Option<PathBuf>,
    pub overrides: Overrides,
}

/// Validates, starts the engine task, and serves until ctrl-c.
pub async fn cmd_run(dir: &Path, opts: RunOptions) -> Result<(), CliError> {
    let (bundle, config) = checked_bundle(dir, &opts.overrides)?;
    let prefix = SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| format!("{:x}", d.as_millis()))
        .unwrap_or_else(|_| "run".into());
    let engine = Engine::new(bundle, config, &loader(), 0.0, IdScheme::Prefixed(prefix))?;
    let log: Box<dyn Write + Send> = match &opts.log {
        Some(path) => Box::new(fs::File::create(path).map_err(|source| CliError::Io {
            path: path.clone(),
            source,
        })?),
        None => Box::new(std::io::stdout()),
    };
    let listener = waymark_server::bind(opts.addr)
        .await
        .map_err(CliError::Server)?;
    let (handle, engine_task) = waymark_server::spawn_engine(engine, Some(log));
    eprintln!(
        "waymark: serving {} on http://{}",
        dir.display(),
        listener.local_addr().map_err(CliError::Server)?
    );
    tokio::select! {
        r = waymark_server::serve(listener, handle.clone()) => r.map_err(CliError::Server)?,
        _ = tokio::signal::ctrl_c() => {}
    }
    handle.shutdown();
    let _ = engine_task.await;
    Ok(())
}
