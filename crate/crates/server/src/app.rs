//! Shared server state, HTTP routes, and the WebSocket session loop.

use std::io;
use std::net::SocketAddr;
use std::path::{Component, Path, PathBuf};
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::{Arc, Mutex, MutexGuard};

use axum::body::Bytes;
use axum::extract::ws::{Message, WebSocket, WebSocketUpgrade};
use axum::extract::{Query, State};
use axum::http::{header, StatusCode};
use axum::response::{Html, IntoResponse, Response};
use axum::routing::get;
use axum::{Json, Router};
use futures::{SinkExt, StreamExt};
use serde::{Deserialize, Serialize};
use tokio::net::TcpListener;
use tokio::sync::{broadcast, mpsc};
use ulca::backward::{Gesture, RunControl};
use ulca::dataset::Dataset;
use ulca::error::UlcaError;
use ulca::model::UlcaParams;
use ulca::session::{Session, Snapshot};
use ulca::solvers::SolverConfig;

use crate::protocol::{
    parse_client, ClientMessage, ErrorPayload, ParamsPatch, ProgressPayload, ServerMessage,
    StatePayload, PROTOCOL_VERSION,
};

/// Pushes a client may fall behind by before it is disconnected.
pub const BROADCAST_BACKLOG: usize = 64;
pub const SNAPSHOT_FILE: &str = "snapshots.json";
const SNAPSHOT_FILE_FORMAT: &str = "ulca-snapshots";

const PLACEHOLDER_PAGE: &str = include_str!("placeholder.html");

#[derive(Debug, Clone, Default)]
pub struct ServerConfig {
    pub dataset_path: Option<PathBuf>,
    pub label_col: String,
    pub standardize: bool,
    pub snapshot_dir: Option<PathBuf>,
    pub static_dir: Option<PathBuf>,
}

#[derive(Debug, thiserror::Error)]
pub enum ServeError {
    #[error("address {0} is already in use")]
    PortInUse(SocketAddr),
    #[error("cannot load dataset: {0}")]
    Dataset(#[from] UlcaError),
    #[error(transparent)]
    Io(#[from] io::Error),
}

struct InFlight {
    generation: u64,
    cancel: Arc<AtomicBool>,
}

struct Inner {
    config: ServerConfig,
    session: Mutex<Option<Session>>,
    revision: AtomicU64,
    generation: AtomicU64,
    inflight: Mutex<Option<InFlight>>,
    tx: broadcast::Sender<Arc<ServerMessage>>,
}

/// Cheaply clonable handle to the running service.
#[derive(Clone)]
pub struct AppState {
    inner: Arc<Inner>,
}

fn lock<T>(m: &Mutex<T>) -> MutexGuard<'_, T> {
    // A panicked writer leaves the session as it was before the failing call.
    m.lock().unwrap_or_else(|e| e.into_inner())
}

#[derive(Debug, Serialize, Deserialize)]
struct SnapshotEntry {
    name: String,
    snapshot: Snapshot,
}

#[derive(Debug, Serialize, Deserialize)]
struct SnapshotFile {
    format: String,
    version: u32,
    entries: Vec<SnapshotEntry>,
}

impl AppState {
    /// Builds the state, loading the configured dataset (if any) with the
    /// LDA preset and any saved snapshots for it.
    pub fn new(config: ServerConfig) -> Result<Self, ServeError> {
        let (tx, _) = broadcast::channel(BROADCAST_BACKLOG);
        let state = AppState {
            inner: Arc::new(Inner {
                session: Mutex::new(None),
                revision: AtomicU64::new(0),
                generation: AtomicU64::new(0),
                inflight: Mutex::new(None),
                tx,
                config,
            }),
        };
        if let Some(path) = state.inner.config.dataset_path.clone() {
            let data = Dataset::from_csv_path(&path, &state.inner.config.label_col)?;
            let standardize = state.inner.config.standardize;
            state.install_dataset(data, Some(path.display().to_string()), standardize)?;
        }
        Ok(state)
    }

    pub fn config(&self) -> &ServerConfig {
        &self.inner.config
    }

    pub fn subscribe(&self) -> broadcast::Receiver<Arc<ServerMessage>> {
        self.inner.tx.subscribe()
    }

    /// Runs `f` on the session, if one is loaded.
    pub fn with_session<R>(&self, f: impl FnOnce(&mut Session) -> R) -> Option<R> {
        lock(&self.inner.session).as_mut().map(f)
    }

    fn state_message(&self, session: &Session) -> ServerMessage {
        ServerMessage::State(StatePayload {
            revision: self.inner.revision.load(Ordering::SeqCst),
            view: session.view(),
        })
    }

    /// Bumps the revision and broadcasts while the session lock is held, so
    /// push order equals commit order.
    fn publish(&self, session: &Session) {
        self.inner.revision.fetch_add(1, Ordering::SeqCst);
        let _ = self.inner.tx.send(Arc::new(self.state_message(session)));
    }

    fn install_dataset(
        &self,
        data: Dataset,
        path: Option<String>,
        standardize: bool,
    ) -> Result<(), UlcaError> {
        let data = if standardize {
            data.standardized()
        } else {
            data
        };
        let params = UlcaParams::lda(data.c());
        let mut session = Session::new(data, path, params, SolverConfig::default())?;
        if let Some(file) = self.read_snapshot_file() {
            let store = ulca::session::SnapshotStore {
                snapshots: file
                    .entries
                    .into_iter()
                    .map(|e| (e.name, e.snapshot))
                    .collect(),
            };
            session.load_snapshots(store);
        }
        self.cancel_inflight();
        let mut guard = lock(&self.inner.session);
        self.publish(&session);
        *guard = Some(session);
        Ok(())
    }

    fn snapshot_path(&self) -> Option<PathBuf> {
        self.inner
            .config
            .snapshot_dir
            .as_ref()
            .map(|d| d.join(SNAPSHOT_FILE))
    }

    fn read_snapshot_file(&self) -> Option<SnapshotFile> {
        let text = std::fs::read_to_string(self.snapshot_path()?).ok()?;
        serde_json::from_str::<SnapshotFile>(&text)
            .ok()
            .filter(|f| f.format == SNAPSHOT_FILE_FORMAT)
    }

    /// Writes the current session's snapshots, keeping entries that belong
    /// to other datasets.
    pub fn flush_snapshots(&self) -> io::Result<()> {
        match lock(&self.inner.session).as_ref() {
            Some(session) => self.flush_session(session),
            None => Ok(()),
        }
    }

    fn flush_session(&self, session: &Session) -> io::Result<()> {
        let Some(path) = self.snapshot_path() else {
            return Ok(());
        };
        let hash = session.dataset().content_hash();
        let store = session.snapshot_store();
        let mut entries: Vec<SnapshotEntry> = self
            .read_snapshot_file()
            .map(|f| f.entries)
            .unwrap_or_default()
            .into_iter()
            .filter(|e| e.snapshot.dataset.content_hash != hash)
            .collect();
        entries.extend(
            store
                .snapshots
                .into_iter()
                .map(|(name, snapshot)| SnapshotEntry { name, snapshot }),
        );
        let file = SnapshotFile {
            format: SNAPSHOT_FILE_FORMAT.into(),
            version: 1,
            entries,
        };
        if let Some(dir) = path.parent() {
            std::fs::create_dir_all(dir)?;
        }
        let tmp = path.with_extension("json.tmp");
        std::fs::write(
            &tmp,
            serde_json::to_string_pretty(&file).map_err(io::Error::other)?,
        )?;
        std::fs::rename(tmp, path)
    }

    fn cancel_inflight(&self) {
        if let Some(run) = lock(&self.inner.inflight).take() {
            run.cancel.store(true, Ordering::SeqCst);
        }
    }
}

fn error_message(seq: Option<u64>, e: &UlcaError) -> ServerMessage {
    ServerMessage::error(seq, e.code(), e.to_string())
}

fn no_dataset(seq: Option<u64>) -> ServerMessage {
    ServerMessage::error(
        seq,
        "NO_DATASET",
        "no dataset loaded; POST a CSV to /api/dataset",
    )
}

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/", get(index))
        .route("/assets/{*path}", get(asset))
        .route("/api/state", get(get_state))
        .route("/api/dataset", axum::routing::post(post_dataset))
        .route("/api/snapshots", get(get_snapshots).post(post_snapshot))
        .route("/ws", get(ws_upgrade))
        .with_state(state)
}

struct ApiError(StatusCode, ErrorPayload);

impl From<UlcaError> for ApiError {
    fn from(e: UlcaError) -> Self {
        let status = match e {
            UlcaError::UnknownSnapshot(_) => StatusCode::NOT_FOUND,
            UlcaError::DuplicateName(_) => StatusCode::CONFLICT,
            UlcaError::Io(_) => StatusCode::INTERNAL_SERVER_ERROR,
            _ => StatusCode::BAD_REQUEST,
        };
        ApiError(
            status,
            ErrorPayload {
                seq: None,
                code: e.code().into(),
                message: e.to_string(),
            },
        )
    }
}

impl ApiError {
    fn no_dataset() -> Self {
        ApiError(
            StatusCode::CONFLICT,
            ErrorPayload {
                seq: None,
                code: "NO_DATASET".into(),
                message: "no dataset loaded".into(),
            },
        )
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.0, Json(self.1)).into_response()
    }
}

async fn index(State(state): State<AppState>) -> Response {
    if let Some(dir) = &state.config().static_dir {
        if let Ok(body) = tokio::fs::read_to_string(dir.join("index.html")).await {
            return Html(body).into_response();
        }
    }
    Html(PLACEHOLDER_PAGE).into_response()
}

fn content_type(path: &Path) -> &'static str {
    match path.extension().and_then(|e| e.to_str()) {
        Some("html") => "text/html; charset=utf-8",
        Some("js" | "mjs") => "text/javascript",
        Some("css") => "text/css",
        Some("json") => "application/json",
        Some("svg") => "image/svg+xml",
        Some("png") => "image/png",
        _ => "application/octet-stream",
    }
}

async fn asset(
    State(state): State<AppState>,
    axum::extract::Path(rel): axum::extract::Path<String>,
) -> Response {
    let rel = PathBuf::from(rel);
    let Some(dir) = &state.config().static_dir else {
        return StatusCode::NOT_FOUND.into_response();
    };
    if !rel.components().all(|c| matches!(c, Component::Normal(_))) {
        return StatusCode::NOT_FOUND.into_response();
    }
    let path = dir.join(&rel);
    match tokio::fs::read(&path).await {
        Ok(bytes) => ([(header::CONTENT_TYPE, content_type(&path))], bytes).into_response(),
        Err(_) => StatusCode::NOT_FOUND.into_response(),
    }
}

#[derive(Serialize)]
#[serde(tag = "status", rename_all = "snake_case")]
enum ApiState {
    NoDataset,
    Ready { state: StatePayload },
}

async fn get_state(State(state): State<AppState>) -> Json<ApiState> {
    let body = state
        .with_session(|s| match state.state_message(s) {
            ServerMessage::State(p) => ApiState::Ready { state: p },
            _ => unreachable!(),
        })
        .unwrap_or(ApiState::NoDataset);
    Json(body)
}

#[derive(Debug, Deserialize)]
struct DatasetQuery {
    label_col: Option<String>,
    standardize: Option<bool>,
}

async fn post_dataset(
    State(state): State<AppState>,
    Query(q): Query<DatasetQuery>,
    body: Bytes,
) -> Result<Json<ApiState>, ApiError> {
    let label = q
        .label_col
        .unwrap_or_else(|| state.config().label_col.clone());
    let standardize = q.standardize.unwrap_or(state.config().standardize);
    let st = state.clone();
    tokio::task::spawn_blocking(move || -> Result<(), UlcaError> {
        let data = Dataset::from_csv_reader(body.as_ref(), &label)?;
        st.install_dataset(data, None, standardize)
    })
    .await
    .map_err(|e| UlcaError::Io(io::Error::other(e)))??;
    Ok(get_state(State(state)).await)
}

#[derive(Serialize)]
struct SnapshotList {
    names: Vec<String>,
    snapshots: Vec<SnapshotEntry>,
}

async fn get_snapshots(State(state): State<AppState>) -> Result<Json<SnapshotList>, ApiError> {
    state
        .with_session(|s| {
            let store = s.snapshot_store();
            Json(SnapshotList {
                names: s.list_snapshots(),
                snapshots: store
                    .snapshots
                    .into_iter()
                    .map(|(name, snapshot)| SnapshotEntry { name, snapshot })
                    .collect(),
            })
        })
        .ok_or_else(ApiError::no_dataset)
}

#[derive(Deserialize)]
struct SaveRequest {
    name: String,
    #[serde(default)]
    overwrite: bool,
}

async fn post_snapshot(
    State(state): State<AppState>,
    Json(req): Json<SaveRequest>,
) -> Result<Json<Vec<String>>, ApiError> {
    let names = state
        .with_session(|s| -> Result<Vec<String>, UlcaError> {
            s.save_snapshot(&req.name, req.overwrite)?;
            state.flush_session(s)?;
            state.publish(s);
            Ok(s.list_snapshots())
        })
        .ok_or_else(ApiError::no_dataset)??;
    Ok(Json(names))
}

async fn ws_upgrade(State(state): State<AppState>, ws: WebSocketUpgrade) -> Response {
    ws.on_upgrade(move |socket| connection(state, socket))
}

/// Outgoing traffic for one connection: direct replies and broadcast pushes.
type Direct = mpsc::UnboundedSender<Arc<ServerMessage>>;

async fn connection(state: AppState, socket: WebSocket) {
    let (mut sink, mut stream) = socket.split();
    let (direct_tx, mut direct_rx) = mpsc::unbounded_channel::<Arc<ServerMessage>>();
    let mut pushes = state.subscribe();

    let writer = tokio::spawn(async move {
        let mut seq = 0u64;
        let mut send = |msg: &ServerMessage| {
            let frame = msg.to_frame(seq);
            seq += 1;
            Message::Text(frame.into())
        };
        if sink
            .send(send(&ServerMessage::Hello {
                protocol: PROTOCOL_VERSION,
            }))
            .await
            .is_err()
        {
            return;
        }
        loop {
            let msg = tokio::select! {
                m = direct_rx.recv() => match m {
                    Some(m) => m,
                    None => break,
                },
                m = pushes.recv() => match m {
                    Ok(m) => m,
                    // Too far behind: drop the client rather than block others.
                    Err(broadcast::error::RecvError::Lagged(_)) => break,
                    Err(broadcast::error::RecvError::Closed) => break,
                },
            };
            if sink.send(send(&msg)).await.is_err() {
                break;
            }
        }
        let _ = sink.close().await;
    });

    while let Some(Ok(frame)) = stream.next().await {
        let text = match frame {
            Message::Text(t) => t.to_string(),
            Message::Binary(_) => {
                let _ = direct_tx.send(Arc::new(ServerMessage::error(
                    None,
                    "BAD_MESSAGE",
                    "binary frames are not supported",
                )));
                continue;
            }
            Message::Close(_) => break,
            _ => continue,
        };
        match parse_client(&text) {
            Ok((seq, msg)) => handle(&state, &direct_tx, seq, msg).await,
            Err(bad) => {
                let _ = direct_tx.send(Arc::new(ServerMessage::error(
                    bad.seq,
                    "BAD_MESSAGE",
                    bad.message,
                )));
            }
        }
        if writer.is_finished() {
            break;
        }
    }
    drop(direct_tx);
    let _ = writer.await;
}

fn apply_patch(current: &UlcaParams, patch: &ParamsPatch) -> UlcaParams {
    let mut p = current.clone();
    if let Some(w) = &patch.w_tg {
        p.w_tg = w.clone();
    }
    if let Some(w) = &patch.w_bg {
        p.w_bg = w.clone();
    }
    if let Some(w) = &patch.w_bw {
        p.w_bw = w.clone();
    }
    if let Some(a) = patch.alpha {
        p.alpha = a;
    }
    if let Some(g) = patch.gamma0 {
        p.gamma0 = g;
    }
    if let Some(g) = patch.gamma1 {
        p.gamma1 = g;
    }
    if let Some(k) = patch.dprime {
        p.dprime = k;
    }
    p
}

/// Runs a session mutation off the async runtime and publishes on success.
async fn mutate(
    state: &AppState,
    direct: &Direct,
    seq: u64,
    f: impl FnOnce(&AppState, &mut Session) -> Result<(), UlcaError> + Send + 'static,
) {
    let st = state.clone();
    let outcome = tokio::task::spawn_blocking(move || {
        let mut guard = lock(&st.inner.session);
        let Some(session) = guard.as_mut() else {
            return Err(None);
        };
        f(&st, session).map_err(Some)?;
        st.publish(session);
        Ok(())
    })
    .await
    .unwrap_or_else(|e| Err(Some(UlcaError::Io(io::Error::other(e)))));
    match outcome {
        Ok(()) => {}
        Err(None) => {
            let _ = direct.send(Arc::new(no_dataset(Some(seq))));
        }
        Err(Some(e)) => {
            let _ = direct.send(Arc::new(error_message(Some(seq), &e)));
        }
    }
}

async fn handle(state: &AppState, direct: &Direct, seq: u64, msg: ClientMessage) {
    match msg {
        ClientMessage::SetParams(patch) => {
            state.cancel_inflight();
            mutate(state, direct, seq, move |_, s| {
                if let Some(backend) = patch.backend {
                    if backend != s.solver().backend {
                        let mut cfg = s.solver().clone();
                        cfg.backend = backend;
                        s.set_solver(cfg)?;
                    }
                }
                let params = apply_patch(s.params(), &patch);
                s.update_params(params).map(|_| ())
            })
            .await
        }
        ClientMessage::GestureMove(m) => start_gesture(
            state,
            direct,
            seq,
            Gesture::Move {
                group: m.group,
                x: m.x,
                y: m.y,
            },
        ),
        ClientMessage::GestureScale(m) => start_gesture(
            state,
            direct,
            seq,
            Gesture::Scale {
                group: m.group,
                factor: m.factor,
            },
        ),
        ClientMessage::DrawAxis(a) => {
            mutate(state, direct, seq, move |_, s| {
                s.draw_axis([a.vx, a.vy]).map(|_| ())
            })
            .await
        }
        ClientMessage::Save(p) => {
            mutate(state, direct, seq, move |st, s| {
                s.save_snapshot(&p.name, p.overwrite)?;
                st.flush_session(s).map_err(UlcaError::Io)
            })
            .await
        }
        ClientMessage::Restore(p) => {
            state.cancel_inflight();
            mutate(state, direct, seq, move |_, s| s.restore_snapshot(&p.name)).await
        }
        ClientMessage::Cancel => {
            state.cancel_inflight();
            reply_state(state, direct, seq);
        }
        ClientMessage::ListSnapshots | ClientMessage::GetState => reply_state(state, direct, seq),
    }
}

fn reply_state(state: &AppState, direct: &Direct, seq: u64) {
    let msg = state
        .with_session(|s| state.state_message(s))
        .unwrap_or_else(|| no_dataset(Some(seq)));
    let _ = direct.send(Arc::new(msg));
}

fn start_gesture(state: &AppState, direct: &Direct, seq: u64, gesture: Gesture) {
    let cancel = Arc::new(AtomicBool::new(false));
    // Prepare and register under the session lock so no earlier run can
    // commit in between.
    let prepared = {
        let guard = lock(&state.inner.session);
        guard.as_ref().map(|s| {
            s.prepare_gesture(gesture).map(|job| {
                let generation = state.inner.generation.fetch_add(1, Ordering::SeqCst) + 1;
                let previous = lock(&state.inner.inflight).replace(InFlight {
                    generation,
                    cancel: Arc::clone(&cancel),
                });
                if let Some(prev) = previous {
                    prev.cancel.store(true, Ordering::SeqCst);
                }
                (job, generation)
            })
        })
    };
    let (job, generation) = match prepared {
        None => {
            let _ = direct.send(Arc::new(no_dataset(Some(seq))));
            return;
        }
        Some(Err(e)) => {
            let _ = direct.send(Arc::new(error_message(Some(seq), &e)));
            return;
        }
        Some(Ok(prepared)) => prepared,
    };

    let st = state.clone();
    let direct = direct.clone();
    tokio::task::spawn_blocking(move || {
        let tx = st.inner.tx.clone();
        let mut control = RunControl {
            cancel: Some(&cancel),
            progress: Some(Box::new(move |p| {
                let _ = tx.send(Arc::new(ServerMessage::Progress(ProgressPayload {
                    seq,
                    progress: p,
                })));
            })),
        };
        let result = job.run(&mut control);
        drop(control);

        let mut guard = lock(&st.inner.session);
        let current = {
            let mut inflight = lock(&st.inner.inflight);
            let current = inflight
                .as_ref()
                .is_some_and(|r| r.generation == generation);
            if current {
                *inflight = None;
            }
            current
        };
        let outcome = match (result, guard.as_mut()) {
            (_, None) => Err(UlcaError::DatasetMismatch),
            (Err(e), _) => Err(e),
            (Ok(res), Some(session)) => {
                if !current || cancel.load(Ordering::SeqCst) {
                    Err(UlcaError::Cancelled)
                } else {
                    session
                        .commit_backward(&job, &res)
                        .map(|_| st.publish(session))
                }
            }
        };
        if let Err(e) = outcome {
            let _ = direct.send(Arc::new(error_message(Some(seq), &e)));
        }
    });
}

/// Binds the listener, mapping an occupied port to [`ServeError::PortInUse`].
pub async fn bind(addr: SocketAddr) -> Result<TcpListener, ServeError> {
    TcpListener::bind(addr).await.map_err(|e| {
        if e.kind() == io::ErrorKind::AddrInUse {
            ServeError::PortInUse(addr)
        } else {
            ServeError::Io(e)
        }
    })
}

/// Serves until `shutdown` resolves, then flushes snapshots to disk.
pub async fn serve(
    listener: TcpListener,
    state: AppState,
    shutdown: impl std::future::Future<Output = ()> + Send + 'static,
) -> io::Result<()> {
    axum::serve(listener, router(state.clone()))
        .with_graceful_shutdown(shutdown)
        .await?;
    state.cancel_inflight();
    state.flush_snapshots()
}
