//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any
//! failure.

#[path = "../../core/tests/support/golden.rs"]
mod golden;
#[path = "../../core/tests/support/lifecycle.rs"]
mod lifecycle;

use std::collections::{BTreeMap, BTreeSet};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

use futures_util::StreamExt;
use proptest::test_runner::{Config, TestCaseError, TestRunner};
use serde_json::{json, Value as Json};
use waymark_cli::{cmd_replay, engine_config, Overrides};
use waymark_core::engine::{EngineEvent, IdScheme, InteractionKind, Trigger};
use waymark_core::replay::{replay, Replayer, Timeline};
use waymark_core::spec::{load_bundle, Bundle};
use waymark_core::state::FsLoader;
use waymark_core::value::Map;
use waymark_core::{Engine, EngineConfig, Value};

type Check = fn() -> Result<String, String>;

fn workspace() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..")
}

fn bundle_dir(name: &str) -> PathBuf {
    workspace().join("bundles").join(name)
}

fn bundle(name: &str) -> Arc<Bundle> {
    Arc::new(load_bundle(bundle_dir(name)).expect("bundle loads"))
}

fn timeline(bundle: &str, file: &str) -> Timeline {
    let text = std::fs::read_to_string(bundle_dir(bundle).join("timelines").join(file)).unwrap();
    Timeline::parse(&text).unwrap()
}

fn run(b: &Arc<Bundle>, config: EngineConfig, tl: &Timeline) -> Vec<EngineEvent> {
    replay(Arc::clone(b), config, &FsLoader::new(), tl).expect("replay")
}

fn bundle_config(b: &Bundle) -> EngineConfig {
    EngineConfig::default().with_overrides(&b.config)
}

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn ticks(trace: &[EngineEvent]) -> (Vec<f64>, Vec<(f64, Trigger)>) {
    let mut inference = Vec::new();
    let mut guidance = Vec::new();
    for ev in trace {
        match ev {
            EngineEvent::InferenceTick { at, .. } => inference.push(*at),
            EngineEvent::GuidanceTick { at, trigger, .. } => guidance.push((*at, *trigger)),
            _ => {}
        }
    }
    (inference, guidance)
}

fn emitted<'a>(trace: &'a [EngineEvent], action: &str) -> Vec<(f64, &'a waymark_core::Suggestion)> {
    trace
        .iter()
        .filter_map(|ev| match ev {
            EngineEvent::Suggestion { at, suggestion } if suggestion.action_id == action => Some((*at, suggestion)),
            _ => None,
        })
        .collect()
}

fn no_diagnostics(trace: &[EngineEvent]) -> Result<(), String> {
    match trace.iter().find(|e| matches!(e, EngineEvent::Diagnostic { .. })) {
        Some(d) => Err(format!("unexpected diagnostic {}", d.to_json_line())),
        None => Ok(()),
    }
}

fn loop_timing() -> Result<String, String> {
    let b = bundle("scenario1");
    let empty = Timeline { until: Some(61.0), events: Vec::new() };
    let started = Instant::now();
    let trace = run(&b, EngineConfig::default(), &empty);
    let (inference, guidance) = ticks(&trace);
    ensure(inference == [0.0, 30.0, 60.0], || format!("inference ticks at {inference:?}"))?;
    let want: Vec<(f64, Trigger)> = (1..=61).map(|k| (k as f64, Trigger::Periodic)).collect();
    ensure(guidance == want, || format!("{} guidance ticks: {guidance:?}", guidance.len()))?;

    let half = EngineConfig { guidance_interval_s: 0.5, ..EngineConfig::default() };
    let (_, g_half) = ticks(&run(&b, half, &empty));
    let elapsed = started.elapsed();
    ensure(g_half.len() == 122, || format!("{} guidance ticks at 0.5s", g_half.len()))?;
    ensure(elapsed < Duration::from_secs(1), || format!("took {elapsed:?}"))?;

    // the live loop on a paused clock, configured like `run --guidance-interval 0.5`
    let live = |guidance_interval: Option<f64>| {
        let config = engine_config(&b, &Overrides { guidance_interval, ..Overrides::default() });
        live_ticks(&b, config, 10.0)
    };
    let (default_live, half_live) = (live(None), live(Some(0.5)));
    ensure(default_live == 10 && half_live == 20, || {
        format!("live loop: {default_live} ticks by default, {half_live} at 0.5s over 10s")
    })?;
    Ok(format!(
        "3 inference + 61 guidance ticks over 61s, 122 at 0.5s, replays took {:.0}ms; live loop 10 -> 20 ticks per 10s",
        elapsed.as_secs_f64() * 1000.0
    ))
}

#[derive(Clone, Default)]
struct SharedLog(Arc<Mutex<Vec<u8>>>);

impl std::io::Write for SharedLog {
    fn write(&mut self, buf: &[u8]) -> std::io::Result<usize> {
        self.0.lock().unwrap().extend_from_slice(buf);
        Ok(buf.len())
    }
    fn flush(&mut self) -> std::io::Result<()> {
        Ok(())
    }
}

impl SharedLog {
    fn events(&self) -> Vec<Json> {
        let text = String::from_utf8(self.0.lock().unwrap().clone()).unwrap();
        text.lines().map(|l| serde_json::from_str(l).unwrap()).collect()
    }
}

/// Guidance ticks logged by the live engine over `secs` of paused time.
fn live_ticks(b: &Arc<Bundle>, config: EngineConfig, secs: f64) -> usize {
    let rt = tokio::runtime::Builder::new_current_thread()
        .enable_all()
        .start_paused(true)
        .build()
        .unwrap();
    rt.block_on(async {
        let engine = Engine::new(Arc::clone(b), config, &FsLoader::new(), 0.0, IdScheme::Counter).unwrap();
        let log = SharedLog::default();
        let (handle, _join) = waymark_server::spawn_engine(engine, Some(Box::new(log.clone())));
        tokio::time::sleep(Duration::from_secs_f64(secs)).await;
        handle.health().await.unwrap();
        handle.shutdown();
        log.events().iter().filter(|e| e["type"] == "guidance_tick").count()
    })
}

fn immediate_restart() -> Result<String, String> {
    let b = bundle("scenario1");
    let tl = Timeline::parse(
        r#"{"until": 3, "events": [{"at": 0.2, "type": "set_properties", "properties": {"month": 4}}]}"#,
    )
    .unwrap();
    let (_, guidance) = ticks(&run(&b, EngineConfig::default(), &tl));
    let want = [(0.2, Trigger::Immediate), (1.2, Trigger::Periodic), (2.2, Trigger::Periodic)];
    ensure(guidance == want, || format!("guidance ticks {guidance:?}"))?;
    Ok("update at 0.2s -> ticks at 0.2 (immediate), 1.2, 2.2".into())
}

fn scenario_one() -> Result<String, String> {
    let b = bundle("scenario1");
    let config = bundle_config(&b);
    let months = run(&b, config.clone(), &timeline("scenario1", "month_changes.json"));
    no_diagnostics(&months)?;
    let line = emitted(&months, "suggest_line_chart");
    ensure(line.len() == 1 && emitted(&months, "suggest_zoom").is_empty(), || {
        format!("month changes: {} line-chart suggestions", line.len())
    })?;

    let hovers = run(&b, config.clone(), &timeline("scenario1", "point_hovers.json"));
    no_diagnostics(&hovers)?;
    let zoom = emitted(&hovers, "suggest_zoom");
    ensure(zoom.len() == 1 && emitted(&hovers, "suggest_line_chart").is_empty(), || {
        format!("point hovers: {} zoom suggestions", zoom.len())
    })?;
    let summary = zoom[0].1.content.as_map().and_then(|m| m.get("summary"));
    ensure(summary.is_some(), || "zoom content lacks a data summary".into())?;

    let mixed = run(&b, config, &timeline("scenario1", "interleaved.json"));
    no_diagnostics(&mixed)?;
    let total = mixed.iter().filter(|e| matches!(e, EngineEvent::Suggestion { .. })).count();
    ensure(total == 0, || format!("interleaved: {total} suggestions"))?;
    Ok("3 month changes -> 1 line chart; 6 hovers -> 1 zoom with summary; interleaved -> 0".into())
}

/// Weather rows parsed independently of the engine's CSV loader.
fn weather() -> BTreeMap<(String, u32), BTreeMap<String, f64>> {
    let text = std::fs::read_to_string(bundle_dir("scenario2").join("data/weather.csv")).unwrap();
    let mut lines = text.lines();
    let header: Vec<&str> = lines.next().unwrap().split(',').collect();
    let mut out = BTreeMap::new();
    for line in lines.filter(|l| !l.trim().is_empty()) {
        let cells: Vec<&str> = line.split(',').collect();
        let dims = header[2..]
            .iter()
            .zip(&cells[2..])
            .map(|(h, c)| (h.to_string(), c.parse::<f64>().unwrap()))
            .collect();
        out.insert((cells[0].to_string(), cells[1].parse().unwrap()), dims);
    }
    out
}

fn number_map(v: &Value) -> BTreeMap<String, f64> {
    v.as_map()
        .unwrap()
        .iter()
        .map(|(k, v)| (k.clone(), v.as_f64().unwrap()))
        .collect()
}

fn strings(v: &Value) -> Vec<String> {
    v.as_list().unwrap().iter().map(|x| x.as_str().unwrap().to_string()).collect()
}

fn scenario_two() -> Result<String, String> {
    let b = bundle("scenario2");
    let tl = timeline("scenario2", "adaptation.json");
    ensure(tl.events.len() == 20, || format!("{} timeline events", tl.events.len()))?;
    let trace = run(&b, bundle_config(&b), &tl);
    no_diagnostics(&trace)?;

    let rows = weather();
    let mut state: Map = b.state.fields.clone();
    let band = number_map(&state["band"]);
    let mut suggestions = BTreeMap::new();
    let mut checked = 0;
    let mut moved = 0;
    let mut i = 0;
    while i < trace.len() {
        match &trace[i] {
            EngineEvent::Suggestion { suggestion, .. } => {
                suggestions.insert(suggestion.suggestion_id.clone(), suggestion.clone());
            }
            EngineEvent::Interaction { suggestion_id, kind, .. }
                if matches!(kind, InteractionKind::Accept | InteractionKind::Reject)
                    && suggestions[suggestion_id].action_id == "highlight_similar" =>
            {
                let content = suggestions[suggestion_id].content.as_map().unwrap().clone();
                let city = content["city"].as_str().unwrap().to_string();
                let month = content["month"].as_f64().unwrap() as u32;
                let favorites = strings(&state["favorites"]);
                let before = number_map(&state["weights"]);
                let mut matched = BTreeSet::new();
                for (dim, width) in &band {
                    let mean = favorites.iter().map(|f| rows[&(f.clone(), month)][dim]).sum::<f64>()
                        / favorites.len() as f64;
                    if (rows[&(city.clone(), month)][dim] - mean).abs() <= *width {
                        matched.insert(dim.clone());
                    }
                }
                let after = match trace.get(i + 1) {
                    Some(EngineEvent::Commit { source, values, .. }) if source.starts_with("hook:highlight_similar") => {
                        values.get("weights").map(number_map).unwrap_or_else(|| before.clone())
                    }
                    _ => before.clone(),
                };
                for dim in band.keys() {
                    let (old, new) = (before[dim], after[dim]);
                    let ok = match (matched.contains(dim), kind) {
                        (true, InteractionKind::Accept) => new > old,
                        (true, _) => new < old,
                        (false, _) => new == old,
                    };
                    ensure(ok, || {
                        format!(
                            "{} on {suggestion_id} ({city}, month {month}): {dim} {old} -> {new}, matched={}",
                            kind.as_str(),
                            matched.contains(dim)
                        )
                    })?;
                }
                checked += 1;
                moved += usize::from(!matched.is_empty());
            }
            EngineEvent::Commit { source, values, .. } => {
                if values.contains_key("weights") && !source.starts_with("hook:highlight_similar") {
                    return Err(format!("weights changed by {source}"));
                }
                state.extend(values.clone());
            }
            _ => {}
        }
        i += 1;
    }
    ensure(checked >= 6 && moved >= 4, || format!("only {checked} answered highlights, {moved} moved weights"))?;

    let per_tick = |trace: &[EngineEvent]| {
        let mut both = 0;
        let mut current: Option<BTreeSet<String>> = None;
        for ev in trace.iter().chain([&EngineEvent::GuidanceTick { at: -1.0, revision: 0, trigger: Trigger::Periodic }]) {
            match ev {
                EngineEvent::GuidanceTick { .. } => {
                    if let Some(actions) = current.take() {
                        if actions.contains("suggest_month") && actions.contains("highlight_similar") {
                            both += 1;
                        }
                    }
                    current = Some(BTreeSet::new());
                }
                EngineEvent::Suggestion { suggestion, .. } => {
                    if let Some(c) = current.as_mut() {
                        c.insert(suggestion.action_id.clone());
                    }
                }
                _ => {}
            }
        }
        both
    };
    ensure(per_tick(&trace) == 0, || "a tick emitted both a month switch and a highlight".into())?;

    // the same timeline without the meta-strategy does produce mixed ticks,
    // so the check above is not vacuous
    let mut unfiltered = (*b).clone();
    unfiltered.meta = None;
    let unfiltered = Arc::new(unfiltered);
    let mixed = per_tick(&run(&unfiltered, bundle_config(&b), &tl));
    ensure(mixed > 0, || "without the meta-strategy no tick mixes both kinds".into())?;
    Ok(format!(
        "{checked} answered highlights checked per event ({moved} moved weights); 0 mixed ticks with meta, {mixed} without"
    ))
}

fn relevance_threshold() -> Result<String, String> {
    let b = bundle("corpusvis");
    let tl = timeline("corpusvis", "relevance.json");
    let mut r = Replayer::new(Arc::clone(&b), bundle_config(&b), &FsLoader::new()).unwrap();
    let store = |r: &Replayer| r.engine().self_store("remove_duplicates").unwrap().clone();
    let mut rejects = 0;
    let mut after_third = None;
    for ev in &tl.events {
        r.step(ev);
        if matches!(ev.action, waymark_core::replay::TimelineAction::Interaction { kind: InteractionKind::Reject, .. }) {
            rejects += 1;
            if rejects == 3 {
                after_third = Some((ev.at, store(&r)));
                // 30 quiet seconds follow the third rejection
                r.advance(ev.at + 30.0, true);
            }
        }
    }
    let (t3, s3) = after_third.ok_or("fewer than three rejections")?;
    let relevance = s3["relevance"].as_f64().unwrap();
    let threshold = s3["relevance_threshold"].as_f64().unwrap();
    let expected = 1.0 - 0.2 - 0.2 - 0.2;
    ensure(relevance == expected && relevance < threshold, || {
        format!("relevance {relevance} after three rejections (threshold {threshold})")
    })?;
    let trace = r.finish(tl.end());
    no_diagnostics(&trace)?;
    let emissions: Vec<f64> = emitted(&trace, "remove_duplicates").iter().map(|(at, _)| *at).collect();
    let silent = emissions.iter().filter(|at| **at > t3 && **at <= t3 + 30.0).count();
    ensure(silent == 0, || format!("emissions within 30s of disabling: {emissions:?}"))?;
    let deactivated = trace.iter().any(|e| matches!(
        e,
        EngineEvent::InferenceTick { deactivated, .. } if deactivated.iter().any(|d| d == "remove_duplicates")
    ));
    ensure(deactivated, || "strategy never deactivated".into())?;
    let resumed: Vec<f64> = emissions.iter().copied().filter(|at| *at > t3 + 30.0).collect();
    ensure(!resumed.is_empty(), || "no emission after reactivation".into())?;
    Ok(format!(
        "relevance {relevance:.1} < {threshold} after rejections; silent {t3}-{}s; resumed at {resumed:?}",
        t3 + 30.0
    ))
}

fn determinism() -> Result<String, String> {
    let mut n = 0;
    for name in ["scenario1", "scenario2", "corpusvis"] {
        let mut files: Vec<PathBuf> = std::fs::read_dir(bundle_dir(name).join("timelines"))
            .unwrap()
            .map(|e| e.unwrap().path())
            .collect();
        files.sort();
        for file in files {
            let dir = bundle_dir(name);
            let first = cmd_replay(&dir, &file, &Overrides::default()).map_err(|e| e.to_string())?;
            let second = cmd_replay(&dir, &file, &Overrides::default()).map_err(|e| e.to_string())?;
            let sequential = cmd_replay(&dir, &file, &Overrides { sequential: true, ..Overrides::default() })
                .map_err(|e| e.to_string())?;
            ensure(first == second && first == sequential, || format!("{} differs between runs", file.display()))?;
            n += 1;
        }
    }
    Ok(format!("{n} bundled timelines byte-identical across 2 runs and both execution modes"))
}

fn lifecycle_invariants() -> Result<String, String> {
    let dir = workspace().join("crates/core/tests/fixtures/lifecycle");
    let b = Arc::new(load_bundle(dir).unwrap());
    let initial = b.state.fields.clone();
    let config = bundle_config(&b);
    let expected: &dyn Fn(&Map) -> Value = &lifecycle::bucket;
    let cases = 1000;
    let failing_ticks = std::cell::Cell::new(0usize);
    let mut runner = TestRunner::new(Config { cases, failure_persistence: None, ..Config::default() });
    runner
        .run(&lifecycle::timeline(), |tl| {
            let trace = run(&b, config.clone(), &tl);
            lifecycle::check(&trace, &initial, Some(("beta", expected))).map_err(TestCaseError::fail)?;
            let failing = trace.iter().filter(|e| matches!(
                e,
                EngineEvent::Diagnostic { source, .. } if source.contains("is_applicable")
            ));
            failing_ticks.set(failing_ticks.get() + failing.count());
            Ok(())
        })
        .map_err(|e| e.to_string())?;
    ensure(failing_ticks.get() > 0, || "no timeline exercised a failing callback".into())?;
    Ok(format!(
        "{cases} random timelines; {} failing is_applicable calls, every tick completed",
        failing_ticks.get()
    ))
}

fn dsl_conformance() -> Result<String, String> {
    let cases = golden::load(&workspace().join("crates/core/tests/data/dsl_golden.json"));
    let failures: Vec<String> = cases
        .iter()
        .filter_map(|c| golden::run(c).err().map(|e| format!("{}: {e}", c.name)))
        .collect();
    ensure(failures.is_empty(), || failures.join("; "))?;
    ensure(cases.len() >= 50, || format!("only {} cases", cases.len()))?;
    let names: Vec<&str> = cases.iter().filter_map(|c| c.error.as_deref()).collect();
    let builtins_missing: Vec<&str> = waymark_core::script::BUILTINS
        .iter()
        .copied()
        .filter(|b| !cases.iter().any(|c| c.script.contains(&format!("{b}("))))
        .collect();
    ensure(builtins_missing.is_empty(), || format!("builtins without a case: {builtins_missing:?}"))?;
    ensure(names.contains(&"BudgetExceeded"), || "no BudgetExceeded case".into())?;
    let kinds: BTreeSet<&str> = names.into_iter().collect();
    Ok(format!("{} cases exact, {} error kinds", cases.len(), kinds.len()))
}

fn protocol_conformance() -> Result<String, String> {
    let rt = tokio::runtime::Builder::new_multi_thread().enable_all().build().unwrap();
    rt.block_on(protocol())
}

async fn protocol() -> Result<String, String> {
    type Socket = tokio_tungstenite::WebSocketStream<tokio_tungstenite::MaybeTlsStream<tokio::net::TcpStream>>;

    let dir = workspace().join("crates/server/tests/fixtures/live");
    let b = Arc::new(load_bundle(dir).unwrap());
    let config = EngineConfig { guidance_interval_s: 3600.0, inference_interval_s: 3600.0, ..EngineConfig::default() };
    let engine = Engine::new(b, config, &FsLoader::new(), 0.0, IdScheme::Counter).unwrap();
    let log = SharedLog::default();
    let (handle, _join) = waymark_server::spawn_engine(engine, Some(Box::new(log.clone())));
    let listener = waymark_server::bind("127.0.0.1:0".parse().unwrap()).await.unwrap();
    let addr = listener.local_addr().unwrap();
    tokio::spawn(waymark_server::serve(listener, handle.clone()));
    let base = format!("http://{addr}");
    let http = reqwest::Client::new();

    let call = |method: &'static str, path: &'static str, body: Json| {
        let req = if method == "GET" {
            http.get(format!("{base}{path}"))
        } else {
            http.post(format!("{base}{path}")).json(&body)
        };
        async move {
            let r = req.send().await.map_err(|e| e.to_string())?;
            let status = r.status().as_u16();
            let body: Json = r.json().await.map_err(|e| e.to_string())?;
            Ok::<_, String>((status, body))
        }
    };
    async fn next(socket: &mut Socket) -> Result<Json, String> {
        let msg = tokio::time::timeout(Duration::from_secs(5), socket.next())
            .await
            .map_err(|_| "socket timed out".to_string())?
            .ok_or("socket closed")?
            .map_err(|e| e.to_string())?;
        serde_json::from_str(msg.to_text().map_err(|e| e.to_string())?).map_err(|e| e.to_string())
    }
    let connect = || async {
        tokio_tungstenite::connect_async(format!("ws://{addr}/ws"))
            .await
            .map(|(s, _)| s)
            .map_err(|e| e.to_string())
    };
    let wait_pending = |n: usize| {
        let call = &call;
        async move {
            for _ in 0..500 {
                let (_, list) = call("GET", "/api/suggestions", Json::Null).await?;
                if list.as_array().map(Vec::len) == Some(n) {
                    return Ok(list);
                }
                tokio::time::sleep(Duration::from_millis(10)).await;
            }
            Err(format!("pending set never reached {n}"))
        }
    };

    let expect = |got: (u16, Json), status: u16, what: &str| {
        ensure(got.0 == status, || format!("{what}: {} {}", got.0, got.1)).map(|_| got.1)
    };

    let health = expect(call("GET", "/api/health", Json::Null).await?, 200, "health")?;
    ensure(health["status"] == "ok" && health["active_strategies"] == json!(["track"]), || health.to_string())?;
    expect(call("GET", "/api/state", Json::Null).await?, 200, "state")?;
    ensure(wait_pending(0).await? == json!([]), || "fresh start is not empty".into())?;

    let mut a = connect().await?;
    let mut b = connect().await?;
    let hello = next(&mut a).await?;
    ensure(hello["type"] == "hello" && hello == next(&mut b).await?, || hello.to_string())?;

    expect(call("POST", "/api/state/properties", json!({"level": 1})).await?, 200, "set level")?;
    let first = wait_pending(1).await?[0].clone();
    expect(call("POST", "/api/state/properties", json!({})).await?, 400, "empty patch")?;
    expect(call("POST", "/api/state/callbacks/bump", json!({"by": 1})).await?, 200, "callback")?;
    expect(call("POST", "/api/state/callbacks/nope", json!({})).await?, 404, "unknown callback")?;
    expect(call("POST", "/api/state/callbacks/bump", json!({})).await?, 400, "missing arg")?;
    let second = loop {
        let list = wait_pending(1).await?;
        if list[0]["content"]["level"] == 2 {
            break list[0].clone();
        }
    };
    expect(call("POST", "/api/suggestions/preview-start", second.clone()).await?, 200, "preview-start")?;
    expect(call("POST", "/api/suggestions/preview-end", second.clone()).await?, 200, "preview-end")?;
    let accepted = expect(call("POST", "/api/suggestions/accept", second.clone()).await?, 200, "accept")?;
    ensure(accepted["status"] == "accepted", || accepted.to_string())?;
    expect(call("POST", "/api/suggestions/reject", second.clone()).await?, 409, "reject after accept")?;
    expect(call("POST", "/api/suggestions/accept", json!({"suggestion_id": "zzz"})).await?, 404, "unknown id")?;
    // the accept hook raised the level to 12, producing a follow-up
    let third = wait_pending(1).await?[0].clone();
    ensure(third["content"]["level"] == 12, || third.to_string())?;
    expect(call("POST", "/api/suggestions/reject", third.clone()).await?, 200, "reject")?;

    // suggestion 1, retraction 1, suggestion 2, suggestion 3
    let mut stream_a = Vec::new();
    let mut stream_b = Vec::new();
    for _ in 0..4 {
        stream_a.push(next(&mut a).await?);
        stream_b.push(next(&mut b).await?);
    }
    let logged: Vec<Json> = log
        .events()
        .into_iter()
        .filter_map(|e| {
            match e["type"].as_str() {
                Some("suggestion") => Some(json!({"type": "suggestion", "payload": e["suggestion"]})),
                Some("retraction") => Some(json!({"type": "retraction", "payload": {
                    "suggestion_id": e["suggestion_id"], "action_id": e["action_id"], "reason": e["reason"]}})),
                _ => None,
            }
        })
        .collect();
    ensure(stream_a == logged, || format!("socket {stream_a:?} vs log {logged:?}"))?;
    ensure(stream_a == stream_b, || "subscribers diverged".into())?;
    ensure(stream_a[0]["payload"]["suggestion_id"] == first["suggestion_id"], || "first push".into())?;

    // forced disconnect, changes while away, then resync
    drop(a);
    expect(call("POST", "/api/state/properties", json!({"level": 3})).await?, 200, "set level")?;
    let pending = wait_pending(1).await?;
    let mut again = connect().await?;
    let hello = next(&mut again).await?;
    let engine_pending = serde_json::to_value(handle.pending().await.map_err(|e| e.to_string())?).unwrap();
    ensure(hello["payload"]["pending"] == pending && pending == engine_pending, || {
        format!("resync {} vs {pending} vs {engine_pending}", hello["payload"]["pending"])
    })?;
    handle.shutdown();
    Ok("7 REST endpoints incl. error codes; 2 subscribers match the event log; resync restores the pending set".into())
}

fn main() -> ExitCode {
    let checks: [(&str, Check); 9] = [
        ("loop timing", loop_timing),
        ("immediate restart", immediate_restart),
        ("scenario 1 replication", scenario_one),
        ("scenario 2 adaptation", scenario_two),
        ("relevance threshold", relevance_threshold),
        ("determinism", determinism),
        ("lifecycle invariants", lifecycle_invariants),
        ("DSL conformance", dsl_conformance),
        ("protocol conformance", protocol_conformance),
    ];
    std::panic::set_hook(Box::new(|_| {}));
    let mut failed = 0;
    for (name, check) in checks {
        let outcome = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|p| {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        match outcome {
            Ok(detail) => println!("PASS {name}: {detail}"),
            Err(why) => {
                failed += 1;
                println!("FAIL {name}: {why}");
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", checks.len() - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
