//! HTTP/JSON front end.
//!
//! Request bodies are JSON objects; unknown fields are rejected. Errors come
//! back as `{"error": "<Kind>", "message": "..."}` with a matching status
//! code. `GET /events` streams newline-delimited JSON trace records; a
//! client that falls more than [`super::EVENT_BUFFER`] events behind is
//! disconnected and can resume with `?from=<index>`.

use std::convert::Infallible;
use std::io;
use std::net::SocketAddr;
use std::path::PathBuf;
use std::str::FromStr;
use std::time::{Duration, Instant};

use axum::body::{Body, Bytes};
use axum::extract::{FromRequest, FromRequestParts, Path, Query, Request, State};
use axum::http::request::Parts;
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::Router;
use serde::de::DeserializeOwned;
use serde::Deserialize;
use serde_json::{json, Value};
use tokio::sync::{broadcast, oneshot};

use super::service::{CommitHook, EventRecord, Service};
use super::{BuildRequest, Reply, TransmitRequest, Verb};
use crate::adversary::{AttackBook, AttackSpec, InjectionSpec};
use crate::registry::{NodeRecord, Registry};
use crate::testbed::{Testbed, TestbedConfig, TestbedError};
use crate::traffic::FlowSpec;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TickPolicy {
    /// Virtual time follows wall-clock time one to one.
    Realtime,
    /// Virtual time moves only through `POST /tick`.
    Manual,
}

impl TickPolicy {
    pub fn as_str(self) -> &'static str {
        match self {
            TickPolicy::Realtime => "realtime",
            TickPolicy::Manual => "manual",
        }
    }
}

impl FromStr for TickPolicy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "realtime" => Ok(TickPolicy::Realtime),
            "manual" => Ok(TickPolicy::Manual),
            _ => Err(format!("unknown tick policy `{s}` (expected realtime or manual)")),
        }
    }
}

#[derive(Debug, Clone)]
pub struct ServeConfig {
    pub listen: SocketAddr,
    pub registry_path: PathBuf,
    /// Saved-attack list; loaded at start if present, rewritten on save.
    pub attacks_path: Option<PathBuf>,
    pub testbed: TestbedConfig,
    pub tick: TickPolicy,
}

#[derive(Debug, thiserror::Error)]
pub enum ServeError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("cannot listen on {addr}: {source}")]
    Bind { addr: SocketAddr, source: io::Error },
    #[error(transparent)]
    Io(#[from] io::Error),
}

#[derive(Clone)]
struct AppState {
    service: Service,
    tick: TickPolicy,
}

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    body: Value,
}

impl ApiError {
    fn new(status: StatusCode, kind: &str, message: impl Into<String>) -> Self {
        Self { status, body: json!({ "error": kind, "message": message.into() }) }
    }

    fn malformed(message: impl Into<String>) -> Self {
        Self::new(StatusCode::BAD_REQUEST, "MalformedRequest", message)
    }
}

impl From<TestbedError> for ApiError {
    fn from(e: TestbedError) -> Self {
        let status = StatusCode::from_u16(e.http_status()).unwrap_or(StatusCode::INTERNAL_SERVER_ERROR);
        let mut err = Self::new(status, e.kind(), e.to_string());
        match &e {
            TestbedError::CommandFailed { exit_code, output } => {
                err.body["exit_code"] = json!(exit_code);
                err.body["output"] = json!(output);
            }
            TestbedError::Busy { node, command } => {
                err.body["node"] = json!(node);
                err.body["command"] = json!(command);
            }
            _ => {}
        }
        err
    }
}

fn json_response(status: StatusCode, value: &Value) -> Response {
    let mut text = serde_json::to_string(value).expect("JSON value serializes");
    text.push('\n');
    (status, [(header::CONTENT_TYPE, "application/json")], text).into_response()
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        json_response(self.status, &self.body)
    }
}

fn reply_response(reply: Reply) -> Response {
    match reply {
        Reply::Json(v) => json_response(StatusCode::OK, &v),
        Reply::Text(t) => (StatusCode::OK, [(header::CONTENT_TYPE, "text/plain; charset=utf-8")], t).into_response(),
    }
}

/// JSON body extractor with the API's error shape.
struct JsonBody<T>(T);

impl<S: Send + Sync, T: DeserializeOwned> FromRequest<S> for JsonBody<T> {
    type Rejection = ApiError;

    async fn from_request(req: Request, state: &S) -> Result<Self, Self::Rejection> {
        let bytes = Bytes::from_request(req, state).await.map_err(|e| ApiError::malformed(e.body_text()))?;
        serde_json::from_slice(&bytes).map(JsonBody).map_err(|e| ApiError::malformed(e.to_string()))
    }
}

struct PathArgs<T>(T);

impl<S: Send + Sync, T: DeserializeOwned + Send> FromRequestParts<S> for PathArgs<T> {
    type Rejection = ApiError;

    async fn from_request_parts(parts: &mut Parts, state: &S) -> Result<Self, Self::Rejection> {
        Path::<T>::from_request_parts(parts, state)
            .await
            .map(|Path(t)| PathArgs(t))
            .map_err(|e| ApiError::malformed(e.body_text()))
    }
}

struct QueryArgs<T>(T);

impl<S: Send + Sync, T: DeserializeOwned> FromRequestParts<S> for QueryArgs<T> {
    type Rejection = ApiError;

    async fn from_request_parts(parts: &mut Parts, state: &S) -> Result<Self, Self::Rejection> {
        Query::<T>::from_request_parts(parts, state)
            .await
            .map(|Query(t)| QueryArgs(t))
            .map_err(|e| ApiError::malformed(e.body_text()))
    }
}

type Handled = Result<Response, ApiError>;

async fn call(state: &AppState, verb: Verb) -> Handled {
    Ok(reply_response(state.service.call(verb).await?))
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct NameBody {
    name: String,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct IdBody {
    id: u64,
}

#[derive(Deserialize)]
#[serde(untagged)]
enum ScenarioBody {
    File(FileBody),
    Build(BuildRequest),
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct FileBody {
    file: String,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct PlayBody {
    from: u32,
    to: u32,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ApplyQuery {
    #[serde(default)]
    force: bool,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct PingBody {
    src: String,
    dst: String,
    #[serde(default)]
    count: Option<u32>,
    #[serde(default)]
    timeout_ms: Option<u64>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ExecBody {
    node: String,
    command: String,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct TickBody {
    #[serde(default)]
    us: u64,
    #[serde(default)]
    seconds: u64,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct EventsQuery {
    #[serde(default)]
    from: usize,
    #[serde(default = "yes")]
    follow: bool,
}

fn yes() -> bool {
    true
}

async fn health(State(s): State<AppState>) -> Handled {
    let Reply::Json(mut v) = s.service.call(Verb::Health).await? else { unreachable!("health is JSON") };
    v["tick"] = json!(s.tick.as_str());
    Ok(json_response(StatusCode::OK, &v))
}

async fn list_nodes(State(s): State<AppState>) -> Handled {
    call(&s, Verb::ListNodes).await
}

async fn add_node(State(s): State<AppState>, JsonBody(node): JsonBody<NodeRecord>) -> Handled {
    call(&s, Verb::AddNode { node }).await
}

async fn remove_node(State(s): State<AppState>, JsonBody(b): JsonBody<NameBody>) -> Handled {
    call(&s, Verb::RemoveNode { name: b.name }).await
}

async fn post_scenario(State(s): State<AppState>, JsonBody(b): JsonBody<ScenarioBody>) -> Handled {
    match b {
        ScenarioBody::File(f) => call(&s, Verb::LoadScenario { file: f.file }).await,
        ScenarioBody::Build(build) => call(&s, Verb::BuildScenario { build }).await,
    }
}

async fn list_scenarios(State(s): State<AppState>) -> Handled {
    call(&s, Verb::ListScenarios).await
}

async fn get_scenario(State(s): State<AppState>, PathArgs(name): PathArgs<String>) -> Handled {
    call(&s, Verb::GetScenario { name }).await
}

async fn scenario_file(State(s): State<AppState>, PathArgs(name): PathArgs<String>) -> Handled {
    call(&s, Verb::ScenarioFile { name }).await
}

async fn scenario_dot(State(s): State<AppState>, PathArgs((name, seq)): PathArgs<(String, u32)>) -> Handled {
    call(&s, Verb::ScenarioDot { name, seq }).await
}

async fn apply(
    State(s): State<AppState>,
    PathArgs((name, seq)): PathArgs<(String, u32)>,
    QueryArgs(q): QueryArgs<ApplyQuery>,
) -> Handled {
    call(&s, Verb::Apply { name, seq, force: q.force }).await
}

async fn play(State(s): State<AppState>, PathArgs(name): PathArgs<String>, JsonBody(b): JsonBody<PlayBody>) -> Handled {
    call(&s, Verb::Play { name, from: b.from, to: b.to }).await
}

async fn stop_play(State(s): State<AppState>, PathArgs(name): PathArgs<String>) -> Handled {
    call(&s, Verb::StopPlay { name: Some(name) }).await
}

async fn current_dot(State(s): State<AppState>) -> Handled {
    call(&s, Verb::CurrentDot).await
}

async fn launch_attack(State(s): State<AppState>, JsonBody(attack): JsonBody<AttackSpec>) -> Handled {
    call(&s, Verb::LaunchAttack { attack }).await
}

async fn list_attacks(State(s): State<AppState>) -> Handled {
    call(&s, Verb::ListAttacks).await
}

async fn stop_attack(State(s): State<AppState>, JsonBody(b): JsonBody<IdBody>) -> Handled {
    call(&s, Verb::StopAttack { id: b.id }).await
}

async fn save_attack(State(s): State<AppState>, JsonBody(attack): JsonBody<AttackSpec>) -> Handled {
    call(&s, Verb::SaveAttack { attack }).await
}

async fn replay_attack(State(s): State<AppState>, PathArgs(name): PathArgs<String>) -> Handled {
    call(&s, Verb::ReplayAttack { name }).await
}

async fn inject(State(s): State<AppState>, JsonBody(injection): JsonBody<InjectionSpec>) -> Handled {
    call(&s, Verb::Inject { injection }).await
}

async fn start_flow(State(s): State<AppState>, JsonBody(flow): JsonBody<FlowSpec>) -> Handled {
    call(&s, Verb::StartFlow { flow }).await
}

async fn list_flows(State(s): State<AppState>) -> Handled {
    call(&s, Verb::ListFlows).await
}

async fn flow_stats(State(s): State<AppState>, PathArgs(id): PathArgs<u64>) -> Handled {
    call(&s, Verb::FlowStats { id }).await
}

async fn stop_flow(State(s): State<AppState>, JsonBody(b): JsonBody<IdBody>) -> Handled {
    call(&s, Verb::StopFlow { id: b.id }).await
}

async fn ping(State(s): State<AppState>, JsonBody(b): JsonBody<PingBody>) -> Handled {
    call(&s, Verb::Ping { src: b.src, dst: b.dst, count: b.count, timeout_ms: b.timeout_ms }).await
}

async fn transmit(State(s): State<AppState>, JsonBody(frame): JsonBody<TransmitRequest>) -> Handled {
    call(&s, Verb::Transmit { frame }).await
}

async fn exec(State(s): State<AppState>, JsonBody(b): JsonBody<ExecBody>) -> Handled {
    call(&s, Verb::Exec { node: b.node, command: b.command }).await
}

async fn tick(State(s): State<AppState>, JsonBody(b): JsonBody<TickBody>) -> Handled {
    if s.tick != TickPolicy::Manual {
        return Err(ApiError::new(
            StatusCode::CONFLICT,
            "ManualTickOnly",
            "the clock follows wall time; /tick needs the manual tick policy",
        ));
    }
    let us = b.seconds.checked_mul(1_000_000).and_then(|s| s.checked_add(b.us));
    let us = us.ok_or_else(|| ApiError::malformed("tick too large"))?;
    call(&s, Verb::Tick { us }).await
}

async fn trace(State(s): State<AppState>) -> Handled {
    call(&s, Verb::Trace).await
}

fn event_line(e: &EventRecord) -> Result<String, Infallible> {
    let mut line = serde_json::to_string(e).expect("event serializes");
    line.push('\n');
    Ok(line)
}

async fn events(State(s): State<AppState>, QueryArgs(q): QueryArgs<EventsQuery>) -> Handled {
    use futures::StreamExt;

    // Subscribe before reading history so nothing falls in between.
    let live = s.service.subscribe();
    let history = s.service.history(q.from).await?;
    let next = history.last().map_or(q.from, |e| e.index + 1);
    let past = futures::stream::iter(history.iter().map(event_line).collect::<Vec<_>>());
    let body = if q.follow {
        let future = futures::stream::unfold((live, next), |(mut rx, next)| async move {
            loop {
                match rx.recv().await {
                    Ok(e) if e.index < next => continue,
                    Ok(e) => {
                        let n = e.index + 1;
                        return Some((event_line(&e), (rx, n)));
                    }
                    Err(broadcast::error::RecvError::Lagged(n)) => {
                        log::warn!("event subscriber dropped after lagging {n} events");
                        return None;
                    }
                    Err(broadcast::error::RecvError::Closed) => return None,
                }
            }
        });
        Body::from_stream(past.chain(future))
    } else {
        Body::from_stream(past)
    };
    Ok(([(header::CONTENT_TYPE, "application/x-ndjson")], body).into_response())
}

async fn not_found() -> ApiError {
    ApiError::new(StatusCode::NOT_FOUND, "NotFound", "no such endpoint")
}

/// Routes of the control API over a running service.
pub fn router(service: Service, policy: TickPolicy) -> Router {
    Router::new()
        .route("/health", get(health))
        .route("/nodes", get(list_nodes).post(add_node).delete(remove_node))
        .route("/scenarios", get(list_scenarios).post(post_scenario))
        .route("/scenarios/{name}", get(get_scenario))
        .route("/scenarios/{name}/file", get(scenario_file))
        .route("/scenarios/{name}/topology/{seq}", get(scenario_dot))
        .route("/scenarios/{name}/apply/{seq}", post(apply))
        .route("/scenarios/{name}/play", post(play).delete(stop_play))
        .route("/topology/current.dot", get(current_dot))
        .route("/attacks", get(list_attacks).post(launch_attack).delete(stop_attack))
        .route("/attacks/saved", post(save_attack))
        .route("/attacks/replay/{name}", post(replay_attack))
        .route("/inject", post(inject))
        .route("/flows", get(list_flows).post(start_flow).delete(stop_flow))
        .route("/flows/{id}", get(flow_stats))
        .route("/probe/ping", post(ping))
        .route("/transmit", post(transmit))
        .route("/exec", post(exec))
        .route("/tick", post(tick))
        .route("/trace", get(trace))
        .route("/events", get(events))
        .fallback(not_found)
        .with_state(AppState { service, tick: policy })
}

fn persistence_hook(registry_path: PathBuf, attacks_path: Option<PathBuf>) -> CommitHook {
    Box::new(move |command, tb: &Testbed| {
        let write = |path: &PathBuf, text: String| {
            if let Err(e) = std::fs::write(path, text) {
                log::warn!("cannot write {}: {e}", path.display());
            }
        };
        match &command.verb {
            Verb::AddNode { .. } | Verb::RemoveNode { .. } => write(&registry_path, tb.registry().save()),
            Verb::SaveAttack { .. } => {
                if let Some(p) = &attacks_path {
                    write(p, tb.attack_book().to_text());
                }
            }
            _ => {}
        }
    })
}

async fn prepare(config: &ServeConfig) -> Result<(Router, tokio::net::TcpListener), ServeError> {
    let text = std::fs::read_to_string(&config.registry_path)
        .map_err(|e| ServeError::Config(format!("registry file {}: {e}", config.registry_path.display())))?;
    let registry = Registry::load(&text)
        .map_err(|e| ServeError::Config(format!("registry file {}: {e}", config.registry_path.display())))?;
    let mut tb = Testbed::with_registry(config.testbed.clone(), registry);
    if let Some(path) = config.attacks_path.as_ref().filter(|p| p.exists()) {
        let text = std::fs::read_to_string(path)?;
        let book = AttackBook::from_text(&text)
            .map_err(|e| ServeError::Config(format!("attack file {}: {e}", path.display())))?;
        tb.load_attack_book(book).expect("fresh testbed is idle");
    }
    let listener = tokio::net::TcpListener::bind(config.listen)
        .await
        .map_err(|source| ServeError::Bind { addr: config.listen, source })?;
    let hook = persistence_hook(config.registry_path.clone(), config.attacks_path.clone());
    let service = Service::start(tb, Some(hook));
    if config.tick == TickPolicy::Realtime {
        tokio::spawn(realtime_clock(service.clone()));
    }
    Ok((router(service, config.tick), listener))
}

/// Drives the virtual clock from wall time. Commands that jump the clock
/// ahead (a ping) simply make it wait until wall time catches up.
async fn realtime_clock(service: Service) {
    let start = Instant::now();
    let base = match service.call(Verb::Health).await {
        Ok(Reply::Json(v)) => v["virtual_us"].as_u64().unwrap_or(0),
        _ => return,
    };
    let mut interval = tokio::time::interval(Duration::from_millis(100));
    loop {
        interval.tick().await;
        let us = base + u64::try_from(start.elapsed().as_micros()).unwrap_or(u64::MAX);
        match service.call(Verb::AdvanceTo { us }).await {
            Ok(_) => {}
            Err(e) if matches!(e.kind(), "Busy" | "ClockRewind") => {}
            Err(e) => {
                log::error!("realtime clock stopped: {e}");
                return;
            }
        }
    }
}

/// Runs the service until the process ends.
pub async fn serve(config: ServeConfig) -> Result<(), ServeError> {
    let (app, listener) = prepare(&config).await?;
    log::info!(
        "listening on {} ({} backend, {} ticks)",
        listener.local_addr()?,
        config.testbed.backend.name(),
        config.tick.as_str()
    );
    axum::serve(listener, app).await?;
    Ok(())
}

/// A service running on a background thread; stopped on drop.
pub struct RunningServer {
    pub addr: SocketAddr,
    shutdown: Option<oneshot::Sender<()>>,
    thread: Option<std::thread::JoinHandle<()>>,
}

impl RunningServer {
    pub fn url(&self) -> String {
        format!("http://{}", self.addr)
    }
}

impl Drop for RunningServer {
    fn drop(&mut self) {
        if let Some(tx) = self.shutdown.take() {
            let _ = tx.send(());
        }
        if let Some(t) = self.thread.take() {
            let _ = t.join();
        }
    }
}

/// Starts the service on its own runtime thread. Configuration and bind
/// errors are reported before this returns.
pub fn spawn(config: ServeConfig) -> Result<RunningServer, ServeError> {
    let rt = tokio::runtime::Builder::new_multi_thread().worker_threads(2).enable_all().build()?;
    let (app, listener) = rt.block_on(prepare(&config))?;
    let addr = listener.local_addr()?;
    let (tx, rx) = oneshot::channel::<()>();
    let thread = std::thread::spawn(move || {
        rt.block_on(async move {
            tokio::select! {
                r = axum::serve(listener, app) => if let Err(e) = r { log::error!("server failed: {e}") },
                _ = rx => {}
            }
        });
        rt.shutdown_background();
    });
    Ok(RunningServer { addr, shutdown: Some(tx), thread: Some(thread) })
}
