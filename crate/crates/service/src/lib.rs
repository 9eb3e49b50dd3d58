//! Local HTTP API over analysis sessions.
//!
//! Each uploaded alignment becomes a session holding the pristine matrix, the
//! current (possibly realigned) matrix, its metagraph and a revision counter.
//! Mutations on one session are applied one at a time in arrival order;
//! readers see a consistent revision. A mutation may carry the revision it
//! was prepared against and is refused with 409 when that is stale.

use std::collections::{BTreeMap, HashMap};
use std::net::{IpAddr, Ipv4Addr, SocketAddr};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, RwLock as StdRwLock};

use axum::body::Bytes;
use axum::extract::{DefaultBodyLimit, Path, Query, State};
use axum::http::{header, HeaderValue, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post, put};
use axum::Router;
use serde_json::{json, Map, Value};
use tokio::sync::RwLock;

use depnet_core::artifacts::{self, FilterOverrides};
use depnet_core::crf::DEFAULT_KAPPA;
use depnet_core::layout::LayoutParams;
use depnet_core::metagraph::{document_string, EditAction};
use depnet_core::realign::{phi, realign_manual};
use depnet_core::{
    detect_echoes, marginals, realign_iterate, AlignmentMatrix, CrfModel, EchoParams, EdgeKey, Error,
    Format, Metagraph, Selection,
};

pub const DEFAULT_PORT: u16 = 8787;
pub const DEFAULT_MAX_UPLOAD_BYTES: usize = 64 << 20;
pub const DEFAULT_MAX_EDGES: u64 = 20_000_000;
pub const DEFAULT_MAX_ROUNDS: usize = 5;
pub const REVISION_HEADER: &str = "x-revision";

#[derive(Clone, Debug, PartialEq)]
pub struct Config {
    pub bind: IpAddr,
    pub port: u16,
    /// Request bodies above this size are refused with 413.
    pub max_upload_bytes: usize,
    /// Alignments whose full scan would exceed this many edges are refused.
    pub max_edges: u64,
}

impl Default for Config {
    fn default() -> Self {
        Self {
            bind: IpAddr::V4(Ipv4Addr::LOCALHOST),
            port: DEFAULT_PORT,
            max_upload_bytes: DEFAULT_MAX_UPLOAD_BYTES,
            max_edges: DEFAULT_MAX_EDGES,
        }
    }
}

impl Config {
    pub fn addr(&self) -> SocketAddr {
        SocketAddr::new(self.bind, self.port)
    }
}

#[derive(Debug)]
pub struct ApiError {
    pub status: StatusCode,
    pub message: String,
    pub revision: Option<u64>,
}

impl ApiError {
    fn new(status: StatusCode, message: impl Into<String>) -> Self {
        Self {
            status,
            message: message.into(),
            revision: None,
        }
    }

    fn bad_request(message: impl Into<String>) -> Self {
        Self::new(StatusCode::BAD_REQUEST, message)
    }

    fn not_found(what: &str, id: &str) -> Self {
        Self::new(StatusCode::NOT_FOUND, format!("unknown {what} {id:?}"))
    }
}

impl From<Error> for ApiError {
    fn from(e: Error) -> Self {
        let status = match e {
            Error::UnknownEdge(_) => StatusCode::NOT_FOUND,
            _ => StatusCode::BAD_REQUEST,
        };
        Self::new(status, e.to_string())
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let mut body = json!({"error": self.message, "status": self.status.as_u16()});
        if let Some(r) = self.revision {
            body["revision"] = json!(r);
        }
        (self.status, json_headers(), document_string(&body)).into_response()
    }
}

type ApiResult<T> = std::result::Result<T, ApiError>;

struct SessionState {
    current: AlignmentMatrix,
    graph: Metagraph,
    revision: u64,
}

struct Session {
    pristine: AlignmentMatrix,
    state: Arc<RwLock<SessionState>>,
}

struct ModelEntry {
    dataset: String,
    revision: u64,
    model: CrfModel,
}

struct Inner {
    config: Config,
    datasets: StdRwLock<HashMap<String, Arc<Session>>>,
    models: StdRwLock<HashMap<String, Arc<ModelEntry>>>,
    next_dataset: AtomicU64,
    next_model: AtomicU64,
}

#[derive(Clone)]
pub struct AppState {
    inner: Arc<Inner>,
}

impl AppState {
    pub fn new(config: Config) -> Self {
        Self {
            inner: Arc::new(Inner {
                config,
                datasets: StdRwLock::new(HashMap::new()),
                models: StdRwLock::new(HashMap::new()),
                next_dataset: AtomicU64::new(1),
                next_model: AtomicU64::new(1),
            }),
        }
    }

    fn session(&self, id: &str) -> ApiResult<Arc<Session>> {
        self.inner
            .datasets
            .read()
            .expect("dataset map lock")
            .get(id)
            .cloned()
            .ok_or_else(|| ApiError::not_found("dataset", id))
    }

    fn model(&self, id: &str) -> ApiResult<Arc<ModelEntry>> {
        self.inner
            .models
            .read()
            .expect("model map lock")
            .get(id)
            .cloned()
            .ok_or_else(|| ApiError::not_found("model", id))
    }
}

pub fn router(state: AppState) -> Router {
    let limit = state.inner.config.max_upload_bytes;
    Router::new()
        .route("/datasets", post(upload).get(list_datasets))
        .route("/datasets/{id}", get(dataset_info))
        .route("/datasets/{id}/graph", get(graph))
        .route("/datasets/{id}/filter", put(set_filter))
        .route("/datasets/{id}/edges/{edit}", post(edit_edge))
        .route("/datasets/{id}/model", post(create_model))
        .route("/datasets/{id}/realign", post(realign))
        .route("/datasets/{id}/echoes", get(echoes))
        .route("/datasets/{id}/scene", get(scene))
        .route("/datasets/{id}/export/{artifact}", get(export))
        .route("/models/{id}", get(model_json))
        .route("/models/{id}/score", post(score))
        .layer(DefaultBodyLimit::max(limit))
        .with_state(state)
}

/// Binds the configured address and serves until the process ends.
pub async fn serve(config: Config) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(config.addr()).await?;
    serve_on(listener, config).await
}

pub async fn serve_on(listener: tokio::net::TcpListener, config: Config) -> std::io::Result<()> {
    axum::serve(listener, router(AppState::new(config))).await
}

fn json_headers() -> [(header::HeaderName, HeaderValue); 1] {
    [(header::CONTENT_TYPE, HeaderValue::from_static("application/json"))]
}

/// A response body tagged with the revision it reflects.
fn with_revision(status: StatusCode, content_type: &'static str, revision: u64, body: String) -> Response {
    (
        status,
        [
            (header::CONTENT_TYPE, HeaderValue::from_static(content_type)),
            (
                header::HeaderName::from_static(REVISION_HEADER),
                HeaderValue::from(revision),
            ),
        ],
        body,
    )
        .into_response()
}

fn json_response(status: StatusCode, revision: u64, doc: &Value) -> Response {
    with_revision(status, "application/json", revision, document_string(doc))
}

async fn blocking<T, F>(f: F) -> ApiResult<T>
where
    F: FnOnce() -> ApiResult<T> + Send + 'static,
    T: Send + 'static,
{
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()))?
}

/// Named parameters from a query string or a JSON object body. Every key
/// must be consumed; leftovers are reported as schema errors.
struct Params {
    map: Map<String, Value>,
}

impl Params {
    fn from_query(q: BTreeMap<String, String>) -> Self {
        Self {
            map: q.into_iter().map(|(k, v)| (k, Value::String(v))).collect(),
        }
    }

    fn from_body(body: &Bytes) -> ApiResult<Self> {
        if body.iter().all(u8::is_ascii_whitespace) {
            return Ok(Self { map: Map::new() });
        }
        match serde_json::from_slice::<Value>(body) {
            Ok(Value::Object(map)) => Ok(Self { map }),
            Ok(_) => Err(ApiError::bad_request("request body must be a JSON object")),
            Err(e) => Err(ApiError::bad_request(format!("malformed JSON body: {e}"))),
        }
    }

    fn take(&mut self, key: &str) -> Option<Value> {
        self.map.remove(key)
    }

    fn f64(&mut self, key: &str) -> ApiResult<Option<f64>> {
        let bad = || ApiError::bad_request(format!("{key} must be a number"));
        match self.take(key) {
            None | Some(Value::Null) => Ok(None),
            Some(Value::Number(n)) => n.as_f64().map(Some).ok_or_else(bad),
            Some(Value::String(s)) => s.trim().parse().map(Some).map_err(|_| bad()),
            Some(_) => Err(bad()),
        }
    }

    fn u64(&mut self, key: &str) -> ApiResult<Option<u64>> {
        let bad = || ApiError::bad_request(format!("{key} must be a non-negative integer"));
        match self.take(key) {
            None | Some(Value::Null) => Ok(None),
            Some(Value::Number(n)) => n.as_u64().map(Some).ok_or_else(bad),
            Some(Value::String(s)) => s.trim().parse().map(Some).map_err(|_| bad()),
            Some(_) => Err(bad()),
        }
    }

    fn string(&mut self, key: &str) -> ApiResult<Option<String>> {
        match self.take(key) {
            None | Some(Value::Null) => Ok(None),
            Some(Value::String(s)) => Ok(Some(s)),
            Some(_) => Err(ApiError::bad_request(format!("{key} must be a string"))),
        }
    }

    fn filter(&mut self) -> ApiResult<FilterOverrides> {
        Ok(FilterOverrides {
            min_z: self.f64("min_z")?,
            max_p: self.f64("max_p")?,
            min_raw: self.f64("min_raw")?,
            sign: self.string("sign")?,
        })
    }

    /// Filter overrides given as a nested `filter` object.
    fn nested_filter(&mut self) -> ApiResult<FilterOverrides> {
        match self.take("filter") {
            None | Some(Value::Null) => Ok(FilterOverrides::default()),
            Some(Value::Object(map)) => {
                let mut inner = Params { map };
                let f = inner.filter()?;
                inner.finish()?;
                Ok(f)
            }
            Some(_) => Err(ApiError::bad_request("filter must be an object")),
        }
    }

    fn layout(&mut self) -> ApiResult<LayoutParams> {
        let d = LayoutParams::default();
        let p = LayoutParams {
            radius: self.f64("radius")?.unwrap_or(d.radius),
            height_step: self.f64("height_step")?.unwrap_or(d.height_step),
            glyph_scale: self.f64("glyph_scale")?.unwrap_or(d.glyph_scale),
        };
        p.validate()?;
        Ok(p)
    }

    fn echo_params(&mut self) -> ApiResult<EchoParams> {
        let d = EchoParams::default();
        Ok(EchoParams {
            s_max: self.u64("s_max")?.map_or(d.s_max, |v| v as usize),
            member_max_p: self.f64("member_max_p")?.unwrap_or(d.member_max_p),
            min_echo_mass: self.f64("min_echo_mass")?.unwrap_or(d.min_echo_mass),
        })
    }

    fn finish(self) -> ApiResult<()> {
        match self.map.keys().next() {
            None => Ok(()),
            Some(k) => Err(ApiError::bad_request(format!("unknown parameter {k:?}"))),
        }
    }
}

fn check_revision(expected: Option<u64>, current: u64) -> ApiResult<()> {
    match expected {
        Some(r) if r != current => Err(ApiError {
            status: StatusCode::CONFLICT,
            message: format!("stale revision {r}; session is at revision {current}"),
            revision: Some(current),
        }),
        _ => Ok(()),
    }
}

fn alphabet_doc(matrix: &AlignmentMatrix) -> Value {
    let a = matrix.alphabet();
    json!({"symbols": a.symbols_string(), "gap": a.gap().map(String::from)})
}

fn summary(id: &str, s: &SessionState) -> Value {
    json!({
        "id": id,
        "revision": s.revision,
        "n_rows": s.current.n_rows(),
        "n_cols": s.current.n_cols(),
        "alphabet": alphabet_doc(&s.current),
        "n_edges": s.graph.edges().len(),
        "n_tables": s.current.n_cols() * (s.current.n_cols() - 1) / 2,
        "filter": s.graph.filter(),
        "n_edits": s.graph.edit_log().len(),
    })
}

fn parse_upload(body: &Bytes) -> ApiResult<AlignmentMatrix> {
    let text = std::str::from_utf8(body).map_err(|_| ApiError::bad_request("body must be UTF-8 text"))?;
    if !text.trim_start().starts_with('{') {
        return Ok(AlignmentMatrix::parse_auto(text)?);
    }
    let doc: Value =
        serde_json::from_str(text).map_err(|e| ApiError::bad_request(format!("malformed JSON body: {e}")))?;
    let Some(Value::String(alignment)) = doc.get("alignment") else {
        // A serialized alignment document.
        return Ok(AlignmentMatrix::from_json(text)?);
    };
    let Value::Object(map) = doc.clone() else { unreachable!() };
    let mut p = Params { map };
    p.take("alignment");
    let format = p.string("format")?;
    p.finish()?;
    Ok(match format.as_deref() {
        None | Some("auto") => AlignmentMatrix::parse_auto(alignment)?,
        Some(f) => AlignmentMatrix::parse(alignment, f.parse::<Format>()?)?,
    })
}

async fn upload(State(app): State<AppState>, body: Bytes) -> ApiResult<Response> {
    let max_edges = app.inner.config.max_edges;
    let (matrix, graph) = blocking(move || {
        let matrix = parse_upload(&body)?;
        let n_edges = artifacts::edge_count(&marginals(&matrix));
        if n_edges > max_edges as u128 {
            return Err(ApiError::new(
                StatusCode::PAYLOAD_TOO_LARGE,
                format!("alignment would produce {n_edges} edges; the limit is {max_edges}"),
            ));
        }
        let graph = artifacts::build_graph(&matrix)?;
        Ok((matrix, graph))
    })
    .await?;
    let id = format!("d{}", app.inner.next_dataset.fetch_add(1, Ordering::Relaxed));
    let state = SessionState {
        current: matrix.clone(),
        graph,
        revision: 0,
    };
    let doc = summary(&id, &state);
    let session = Session {
        pristine: matrix,
        state: Arc::new(RwLock::new(state)),
    };
    app.inner
        .datasets
        .write()
        .expect("dataset map lock")
        .insert(id, Arc::new(session));
    Ok(json_response(StatusCode::CREATED, 0, &doc))
}

async fn list_datasets(State(app): State<AppState>) -> Response {
    let mut ids: Vec<String> = app.inner.datasets.read().expect("dataset map lock").keys().cloned().collect();
    ids.sort_by_key(|id| id[1..].parse::<u64>().unwrap_or(u64::MAX));
    (StatusCode::OK, json_headers(), document_string(&json!({"datasets": ids}))).into_response()
}

async fn dataset_info(State(app): State<AppState>, Path(id): Path<String>) -> ApiResult<Response> {
    let session = app.session(&id)?;
    let s = session.state.read().await;
    let mut doc = summary(&id, &s);
    doc["pristine"] = json!({
        "n_rows": session.pristine.n_rows(),
        "n_cols": session.pristine.n_cols(),
        "alphabet": alphabet_doc(&session.pristine),
    });
    doc["realigned"] = json!(s.current != session.pristine);
    Ok(json_response(StatusCode::OK, s.revision, &doc))
}

async fn graph(
    State(app): State<AppState>,
    Path(id): Path<String>,
    Query(q): Query<BTreeMap<String, String>>,
) -> ApiResult<Response> {
    let session = app.session(&id)?;
    let mut p = Params::from_query(q);
    let overrides = p.filter()?;
    p.finish()?;
    let s = session.state.clone().read_owned().await;
    blocking(move || {
        let spec = overrides.apply(s.graph.filter())?;
        let sub = s.graph.apply_filter(&spec);
        let mut doc = sub.to_document(&s.graph);
        doc["dataset"] = json!(id);
        doc["revision"] = json!(s.revision);
        doc["n_nodes"] = json!(s.graph.n_nodes());
        doc["n_edges"] = json!(s.graph.edges().len());
        Ok(json_response(StatusCode::OK, s.revision, &doc))
    })
    .await
}

async fn set_filter(State(app): State<AppState>, Path(id): Path<String>, body: Bytes) -> ApiResult<Response> {
    let session = app.session(&id)?;
    let mut p = Params::from_body(&body)?;
    let expected = p.u64("revision")?;
    let overrides = p.filter()?;
    p.finish()?;
    let mut s = session.state.write().await;
    check_revision(expected, s.revision)?;
    let spec = overrides.apply(s.graph.filter())?;
    s.graph.set_filter(spec)?;
    s.revision += 1;
    let doc = json!({
        "dataset": id,
        "revision": s.revision,
        "filter": spec,
        "n_visible": s.graph.visible().len(),
    });
    Ok(json_response(StatusCode::OK, s.revision, &doc))
}

async fn edit_edge(
    State(app): State<AppState>,
    Path((id, edit)): Path<(String, String)>,
    Query(q): Query<BTreeMap<String, String>>,
    body: Bytes,
) -> ApiResult<Response> {
    let session = app.session(&id)?;
    let (label, action) = edit
        .rsplit_once(':')
        .ok_or_else(|| ApiError::bad_request("edge path must be KEY:ACTION"))?;
    let action = EditAction::parse(action)?;
    let mut qp = Params::from_query(q);
    let mut bp = Params::from_body(&body)?;
    let expected = match (qp.u64("revision")?, bp.u64("revision")?) {
        (Some(a), Some(b)) if a != b => {
            return Err(ApiError::bad_request("query and body revisions disagree"));
        }
        (a, b) => a.or(b),
    };
    qp.finish()?;
    bp.finish()?;
    let mut s = session.state.write().await;
    check_revision(expected, s.revision)?;
    let key = EdgeKey::parse_label(label, s.graph.alphabet())?;
    s.graph.edit_edge(key, action)?;
    s.revision += 1;
    let e = s.graph.edge(&key).expect("edited edge exists");
    let doc = json!({
        "dataset": id,
        "revision": s.revision,
        "key": key.label(s.graph.alphabet()),
        "state": e.state.as_str(),
        "visible": s.graph.is_visible(e, s.graph.filter()),
    });
    Ok(json_response(StatusCode::OK, s.revision, &doc))
}

async fn create_model(State(app): State<AppState>, Path(id): Path<String>, body: Bytes) -> ApiResult<Response> {
    let session = app.session(&id)?;
    let mut p = Params::from_body(&body)?;
    let expected = p.u64("revision")?;
    let kappa = p.f64("kappa")?.unwrap_or(DEFAULT_KAPPA);
    let selection = p.take("selection").unwrap_or_else(|| json!("visible"));
    let overrides = p.nested_filter()?;
    p.finish()?;
    let s = session.state.clone().read_owned().await;
    check_revision(expected, s.revision)?;
    let revision = s.revision;
    let model = blocking(move || {
        let selection = Selection::from_json(&selection, s.graph.alphabet())?;
        let model = if overrides.is_empty() {
            CrfModel::build(&s.graph, &selection, kappa)?
        } else {
            let mut g = s.graph.clone();
            g.set_filter(overrides.apply(s.graph.filter())?)?;
            CrfModel::build(&g, &selection, kappa)?
        };
        Ok(model)
    })
    .await?;
    let model_id = format!("m{}", app.inner.next_model.fetch_add(1, Ordering::Relaxed));
    let doc = json!({
        "model_id": model_id,
        "dataset": id,
        "revision": revision,
        "selection": model.to_document()["selection"],
        "kappa": model.kappa(),
        "n_edge_terms": model.edge_terms().len(),
        "n_column_pairs": model.selected_pairs().len(),
    });
    app.inner.models.write().expect("model map lock").insert(
        model_id,
        Arc::new(ModelEntry {
            dataset: id,
            revision,
            model,
        }),
    );
    Ok(json_response(StatusCode::CREATED, revision, &doc))
}

async fn model_json(State(app): State<AppState>, Path(id): Path<String>) -> ApiResult<Response> {
    let entry = app.model(&id)?;
    Ok(with_revision(
        StatusCode::OK,
        "application/json",
        entry.revision,
        artifacts::model_json(&entry.model),
    ))
}

async fn score(State(app): State<AppState>, Path(id): Path<String>, body: Bytes) -> ApiResult<Response> {
    let entry = app.model(&id)?;
    let mut p = Params::from_body(&body)?;
    let sequences = p
        .take("sequences")
        .ok_or_else(|| ApiError::bad_request("sequences missing"))?;
    let reference = p.string("reference")?;
    p.finish()?;
    let revision = entry.revision;
    let text = blocking(move || {
        let seqs = artifacts::sequences_from_json(&sequences)?;
        Ok(artifacts::score_json(&entry.model, &seqs, reference.as_deref())?)
    })
    .await?;
    Ok(with_revision(StatusCode::OK, "application/json", revision, text))
}

/// Graph for a realigned matrix, keeping the filter and replaying every edit
/// whose edge still exists.
fn rebuild_graph(old: &Metagraph, matrix: &AlignmentMatrix) -> depnet_core::Result<Metagraph> {
    let mut graph = artifacts::build_graph(matrix)?;
    graph.set_filter(*old.filter())?;
    let alphabet = graph.alphabet().clone();
    for rec in old.edit_log() {
        let label = rec.key.label(old.alphabet());
        if let Ok(key) = EdgeKey::parse_label(&label, &alphabet) {
            if graph.edge(&key).is_some() {
                graph.edit_edge(key, rec.action)?;
            }
        }
    }
    Ok(graph)
}

async fn realign(State(app): State<AppState>, Path(id): Path<String>, body: Bytes) -> ApiResult<Response> {
    let session = app.session(&id)?;
    let mut p = Params::from_body(&body)?;
    let expected = p.u64("revision")?;
    let params = p.echo_params()?;
    let max_rounds = p.u64("max_rounds")?.map_or(DEFAULT_MAX_ROUNDS, |v| v as usize);
    let manual = match p.take("manual_shifts") {
        None | Some(Value::Null) => None,
        Some(v) => Some(
            serde_json::from_value::<Vec<i32>>(v)
                .map_err(|_| ApiError::bad_request("manual_shifts must be an array of integers"))?,
        ),
    };
    let overrides = p.nested_filter()?;
    p.finish()?;
    let mut s = session.state.clone().write_owned().await;
    check_revision(expected, s.revision)?;
    blocking(move || {
        let spec = overrides.apply(s.graph.filter())?;
        let (next, report) = match manual {
            Some(shifts) => realign_manual(&s.current, &spec, shifts, params.s_max)?,
            None => realign_iterate(&s.current, &spec, &params, max_rounds)?,
        };
        let body = artifacts::realign_json(&report, &next);
        if next != s.current {
            s.graph = rebuild_graph(&s.graph, &next)?;
            s.current = next;
        }
        s.revision += 1;
        Ok(with_revision(StatusCode::OK, "application/json", s.revision, body))
    })
    .await
}

async fn echoes(
    State(app): State<AppState>,
    Path(id): Path<String>,
    Query(q): Query<BTreeMap<String, String>>,
) -> ApiResult<Response> {
    let session = app.session(&id)?;
    let mut p = Params::from_query(q);
    let overrides = p.filter()?;
    let params = p.echo_params()?;
    p.finish()?;
    let s = session.state.clone().read_owned().await;
    blocking(move || {
        let spec = overrides.apply(s.graph.filter())?;
        let groups = detect_echoes(&s.graph, &spec, &params)?;
        let alphabet = s.graph.alphabet();
        let doc = json!({
            "dataset": id,
            "revision": s.revision,
            "filter": spec,
            "phi": phi(&s.current, &spec),
            "echoes": groups.iter().map(|g| g.to_document(alphabet)).collect::<Vec<_>>(),
        });
        Ok(json_response(StatusCode::OK, s.revision, &doc))
    })
    .await
}

async fn scene(
    State(app): State<AppState>,
    Path(id): Path<String>,
    Query(q): Query<BTreeMap<String, String>>,
) -> ApiResult<Response> {
    let session = app.session(&id)?;
    let mut p = Params::from_query(q);
    let overrides = p.filter()?;
    let layout = p.layout()?;
    p.finish()?;
    let s = session.state.clone().read_owned().await;
    blocking(move || {
        let spec = overrides.apply(s.graph.filter())?;
        let text = artifacts::scene_json(&s.graph, &spec, &layout)?;
        Ok(with_revision(StatusCode::OK, "application/json", s.revision, text))
    })
    .await
}

async fn export(
    State(app): State<AppState>,
    Path((id, artifact)): Path<(String, String)>,
    Query(q): Query<BTreeMap<String, String>>,
) -> ApiResult<Response> {
    let session = app.session(&id)?;
    let mut p = Params::from_query(q);
    if artifact == "model.json" {
        let model_id = p
            .string("model")?
            .ok_or_else(|| ApiError::bad_request("model.json export needs ?model=ID"))?;
        p.finish()?;
        let entry = app.model(&model_id)?;
        if entry.dataset != id {
            return Err(ApiError::not_found("model", &model_id));
        }
        return Ok(with_revision(
            StatusCode::OK,
            "application/json",
            entry.revision,
            artifacts::model_json(&entry.model),
        ));
    }
    let overrides = if artifact == "graph.json" { p.filter()? } else { FilterOverrides::default() };
    p.finish()?;
    let s = session.state.clone().read_owned().await;
    blocking(move || {
        let (content_type, text) = match artifact.as_str() {
            "edges.csv" => ("text/csv", artifacts::edges_csv(&s.graph)),
            "graph.json" => {
                let spec = overrides.apply(s.graph.filter())?;
                ("application/json", artifacts::graph_json(&s.graph, &spec))
            }
            "alignment.txt" => ("text/plain", artifacts::alignment_text(&s.current, "txt")?),
            "alignment.fasta" => ("text/plain", artifacts::alignment_text(&s.current, "fasta")?),
            "alignment.json" => ("application/json", artifacts::alignment_text(&s.current, "json")?),
            other => return Err(ApiError::not_found("artifact", other)),
        };
        Ok(with_revision(StatusCode::OK, content_type, s.revision, text))
    })
    .await
}
