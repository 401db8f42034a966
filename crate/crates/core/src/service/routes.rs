use std::collections::{BTreeMap, HashMap};
use std::path::Path as FsPath;

use axum::body::Bytes;
use axum::extract::multipart::MultipartRejection;
use axum::extract::rejection::BytesRejection;
use axum::extract::{DefaultBodyLimit, Extension, MatchedPath, Multipart, Path, Query, Request, State};
use axum::http::{header, StatusCode};
use axum::middleware::{self, Next};
use axum::response::{Html, IntoResponse, Redirect, Response};
use axum::routing::{get, post, put, MethodRouter};
use axum::{Json, Router};
use serde::de::DeserializeOwned;
use serde::Deserialize;
use serde_json::{json, Value};
use tower_http::services::ServeDir;

use super::endpoints::{self, Access, ENDPOINTS};
use super::{ApiError, AppState, Role, Session};
use crate::engine::{AdminAction, Caller, DeploymentSummary, TypedValue};
use crate::repository::{detect_mime, Condition, DatastreamProps, DsState, FieldSearchQuery, Payload};

type ApiResult<T> = Result<T, ApiError>;

pub(crate) fn router(state: AppState, ui_dir: Option<&FsPath>) -> Router {
    let mut api: Router<AppState> = Router::new();
    for ep in ENDPOINTS {
        api = api.route(&endpoints::route_path(ep.path), handler(ep.name));
    }
    let body_limit = (state.upload_limit as usize).saturating_mul(2).saturating_add(1 << 20).max(16 << 20);
    let api = api
        .route_layer(middleware::from_fn_with_state(state.clone(), guard))
        .layer(DefaultBodyLimit::max(body_limit))
        .fallback(|| async { ApiError::new("NOT_FOUND", "no such endpoint") });
    let ui = match ui_dir {
        Some(dir) => Router::new().nest_service("/ui", ServeDir::new(dir)),
        None => Router::new()
            .route("/ui/", get(|| async { Html(PLACEHOLDER_UI) }))
            .route("/ui", get(|| async { Redirect::permanent("/ui/") })),
    };
    api.with_state(state).merge(ui)
}

const PLACEHOLDER_UI: &str = "<!doctype html><title>pubflow</title>\
<p>The web UI bundle is not installed. Set <code>uiDir</code> in the server configuration.\
<p>The API is described at <a href=\"/api/description\">/api/description</a>.";

fn handler(name: &str) -> MethodRouter<AppState> {
    match name {
        "login" => post(login),
        "logout" => post(logout),
        "description" => get(description),
        "listTasks" => get(list_tasks),
        "getTask" => get(get_task),
        "completeTask" => post(complete_task),
        "latestDefinitions" => get(latest_definitions),
        "deploy" => post(deploy),
        "startProcess" => post(start_process),
        "listInstances" => get(list_instances),
        "getInstance" => get(get_instance),
        "getVariables" => get(get_variables),
        "setVariable" => put(set_variable),
        "adminInstance" => post(admin_instance),
        "graph" => get(graph),
        "uploadStaging" => post(upload_staging),
        "getStaging" => get(get_staging),
        "ingest" => post(ingest),
        "getObject" => get(get_object),
        "addDatastream" => post(add_datastream),
        "modifyDatastream" => put(modify_datastream),
        "getDatastream" => get(get_datastream),
        "getDatastreamContent" => get(get_datastream_content),
        "findObjects" => post(find_objects),
        other => unreachable!("endpoint '{other}' has no handler"),
    }
}

fn bearer(req: &Request) -> Option<&str> {
    let value = req.headers().get(header::AUTHORIZATION)?.to_str().ok()?;
    let (scheme, token) = value.split_once(' ')?;
    scheme.eq_ignore_ascii_case("bearer").then(|| token.trim())
}

/// Role check, run after routing and before any body is read.
async fn guard(State(st): State<AppState>, matched: MatchedPath, mut req: Request, next: Next) -> Response {
    let method = if req.method() == axum::http::Method::HEAD { "GET" } else { req.method().as_str() };
    let Some(ep) = endpoints::find(method, matched.as_str()) else {
        return ApiError::new("INTERNAL", "route missing from the endpoint table").into_response();
    };
    let session = bearer(&req).and_then(|t| st.sessions.lookup(t));
    if ep.access != Access::Public {
        let Some(session) = session else {
            return ApiError::new("UNAUTHENTICATED", "missing, unknown or expired token").into_response();
        };
        if !ep.access.allows(Some(&session.roles)) {
            return ApiError::new("FORBIDDEN", format!("'{}' requires another role", ep.name)).into_response();
        }
        req.extensions_mut().insert(session);
    }
    next.run(req).await
}

async fn blocking<T: Send + 'static>(f: impl FnOnce() -> ApiResult<T> + Send + 'static) -> ApiResult<T> {
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| ApiError::new("INTERNAL", e.to_string()))?
}

fn body_bytes(body: Result<Bytes, BytesRejection>) -> ApiResult<Bytes> {
    body.map_err(|e| {
        if e.status() == StatusCode::PAYLOAD_TOO_LARGE {
            ApiError::new("PAYLOAD_TOO_LARGE", e.body_text())
        } else {
            ApiError::bad_request(e.body_text())
        }
    })
}

fn parse_json<T: DeserializeOwned>(body: &[u8]) -> ApiResult<T> {
    serde_json::from_slice(body).map_err(|e| ApiError::bad_request(format!("invalid JSON body: {e}")))
}

/// Like `parse_json`, but an empty body means the default.
fn parse_json_or_default<T: DeserializeOwned + Default>(body: &[u8]) -> ApiResult<T> {
    if body.iter().all(u8::is_ascii_whitespace) {
        Ok(T::default())
    } else {
        parse_json(body)
    }
}

fn caller(session: &Session) -> Caller {
    Caller {
        actor: session.actor_id.clone(),
        admin: session.has(Role::Admin),
    }
}

/// Accepts the tagged form `{type, value}` or a bare JSON scalar.
fn typed(name: &str, value: Value) -> ApiResult<TypedValue> {
    let bad = || ApiError::new("INVALID_VALUE", format!("unsupported value for '{name}'"));
    match value {
        Value::String(s) => Ok(TypedValue::String(s)),
        Value::Bool(b) => Ok(TypedValue::Boolean(b)),
        Value::Number(n) => match n.as_i64() {
            Some(i) => Ok(TypedValue::Integer(i)),
            None => n.as_f64().map(TypedValue::Float).ok_or_else(bad),
        },
        v @ Value::Object(_) => serde_json::from_value(v).map_err(|_| bad()),
        _ => Err(bad()),
    }
}

fn typed_map(vars: BTreeMap<String, Value>) -> ApiResult<BTreeMap<String, TypedValue>> {
    vars.into_iter().map(|(k, v)| Ok((k.clone(), typed(&k, v)?))).collect()
}

#[derive(Deserialize)]
struct LoginRequest {
    username: String,
    password: String,
}

async fn login(State(st): State<AppState>, body: Result<Bytes, BytesRejection>) -> ApiResult<Json<Session>> {
    let req: LoginRequest = parse_json(&body_bytes(body)?)?;
    blocking(move || {
        st.sessions
            .login(&req.username, &req.password)
            .map(Json)
            .ok_or_else(|| ApiError::new("BAD_CREDENTIALS", "unknown user or wrong password"))
    })
    .await
}

async fn logout(State(st): State<AppState>, Extension(session): Extension<Session>) -> StatusCode {
    st.sessions.logout(&session.token);
    StatusCode::NO_CONTENT
}

async fn description(State(st): State<AppState>) -> Response {
    ([(header::CONTENT_TYPE, "application/json")], st.description.as_ref().clone()).into_response()
}

async fn list_tasks(State(st): State<AppState>, Extension(s): Extension<Session>) -> ApiResult<Response> {
    blocking(move || Ok(Json(st.engine.find_task_instances(&s.actor_id)).into_response())).await
}

async fn get_task(
    State(st): State<AppState>,
    Extension(s): Extension<Session>,
    Path(id): Path<String>,
) -> ApiResult<Response> {
    blocking(move || {
        let task = st
            .engine
            .task(&id)
            .ok_or_else(|| ApiError::new("UNKNOWN_TASK", format!("unknown task '{id}'")))?;
        if task.actor_id != s.actor_id && !s.has(Role::Admin) {
            return Err(ApiError::new("FORBIDDEN_ACTOR", format!("task '{id}' belongs to another actor")));
        }
        Ok(Json(task).into_response())
    })
    .await
}

#[derive(Deserialize, Default)]
#[serde(default)]
struct CompleteRequest {
    transition: Option<String>,
    variables: BTreeMap<String, Value>,
}

async fn complete_task(
    State(st): State<AppState>,
    Extension(s): Extension<Session>,
    Path(id): Path<String>,
    body: Result<Bytes, BytesRejection>,
) -> ApiResult<Response> {
    let req: CompleteRequest = parse_json_or_default(&body_bytes(body)?)?;
    let vars = typed_map(req.variables)?;
    blocking(move || {
        let instance = st.engine.complete_task(&id, req.transition.as_deref(), vars, &caller(&s))?;
        Ok(Json(instance).into_response())
    })
    .await
}

async fn latest_definitions(State(st): State<AppState>) -> ApiResult<Response> {
    blocking(move || {
        let latest: Vec<DeploymentSummary> = st.engine.latest_definitions().iter().map(Into::into).collect();
        Ok(Json(latest).into_response())
    })
    .await
}

async fn multipart_file(multipart: Result<Multipart, MultipartRejection>, limit: u64) -> ApiResult<(String, Vec<u8>)> {
    let mut multipart = multipart.map_err(|e| ApiError::bad_request(e.body_text()))?;
    let too_large = || ApiError::new("PAYLOAD_TOO_LARGE", format!("uploads are limited to {limit} bytes"));
    let part_error = |e: axum::extract::multipart::MultipartError| {
        if e.status() == StatusCode::PAYLOAD_TOO_LARGE {
            too_large()
        } else {
            ApiError::bad_request(e.body_text())
        }
    };
    while let Some(mut field) = multipart.next_field().await.map_err(part_error)? {
        let Some(filename) = field.file_name().map(str::to_owned) else { continue };
        let mut bytes = Vec::new();
        while let Some(chunk) = field.chunk().await.map_err(part_error)? {
            if (bytes.len() + chunk.len()) as u64 > limit {
                return Err(too_large());
            }
            bytes.extend_from_slice(&chunk);
        }
        return Ok((filename, bytes));
    }
    Err(ApiError::bad_request("multipart body carries no file part"))
}

async fn deploy(State(st): State<AppState>, multipart: Result<Multipart, MultipartRejection>) -> ApiResult<Response> {
    let (_, archive) = multipart_file(multipart, u64::MAX).await?;
    blocking(move || {
        let record = st.engine.deploy_archive(&archive)?;
        Ok((StatusCode::CREATED, Json(DeploymentSummary::from(&record))).into_response())
    })
    .await
}

#[derive(Deserialize, Default)]
#[serde(default)]
struct StartRequest {
    variables: BTreeMap<String, Value>,
}

async fn start_process(
    State(st): State<AppState>,
    Extension(s): Extension<Session>,
    Path(definition_id): Path<String>,
    body: Result<Bytes, BytesRejection>,
) -> ApiResult<Response> {
    let req: StartRequest = parse_json_or_default(&body_bytes(body)?)?;
    let vars = typed_map(req.variables)?;
    blocking(move || {
        let (instance, task) = st.engine.start_instance(&definition_id, &s.actor_id, vars)?;
        Ok((StatusCode::CREATED, Json(json!({"instance": instance, "task": task}))).into_response())
    })
    .await
}

async fn list_instances(State(st): State<AppState>) -> ApiResult<Response> {
    blocking(move || Ok(Json(st.engine.instances()).into_response())).await
}

async fn get_instance(State(st): State<AppState>, Path(id): Path<String>) -> ApiResult<Response> {
    blocking(move || Ok(Json(st.engine.instance(&id)?).into_response())).await
}

async fn get_variables(State(st): State<AppState>, Path(id): Path<String>) -> ApiResult<Response> {
    blocking(move || Ok(Json(st.engine.variables(&id)?).into_response())).await
}

async fn set_variable(
    State(st): State<AppState>,
    Path((id, name)): Path<(String, String)>,
    body: Result<Bytes, BytesRejection>,
) -> ApiResult<StatusCode> {
    let value = typed(&name, parse_json(&body_bytes(body)?)?)?;
    blocking(move || {
        st.engine.set_variable(&id, &name, value)?;
        Ok(StatusCode::NO_CONTENT)
    })
    .await
}

#[derive(Deserialize)]
struct AdminRequest {
    action: AdminAction,
}

async fn admin_instance(
    State(st): State<AppState>,
    Extension(s): Extension<Session>,
    Path(id): Path<String>,
    body: Result<Bytes, BytesRejection>,
) -> ApiResult<Response> {
    let req: AdminRequest = parse_json(&body_bytes(body)?)?;
    blocking(move || Ok(Json(st.engine.administer_instance(&id, req.action, &caller(&s))?).into_response())).await
}

async fn graph(State(st): State<AppState>, Path(id): Path<String>) -> ApiResult<Response> {
    blocking(move || Ok(Json(st.engine.render_graph_state(&id)?).into_response())).await
}

async fn upload_staging(
    State(st): State<AppState>,
    Extension(s): Extension<Session>,
    multipart: Result<Multipart, MultipartRejection>,
) -> ApiResult<Response> {
    let (filename, bytes) = multipart_file(multipart, st.upload_limit).await?;
    blocking(move || {
        let staged = st
            .staging
            .store(&filename, &bytes, &s.actor_id)
            .map_err(|e| ApiError::new("STORAGE_ERROR", e.to_string()))?;
        Ok((StatusCode::CREATED, Json(staged)).into_response())
    })
    .await
}

async fn get_staging(State(st): State<AppState>, Path(name): Path<String>) -> ApiResult<Response> {
    blocking(move || {
        let bytes = st
            .staging
            .read(&name)
            .ok_or_else(|| ApiError::new("UNKNOWN_STAGING_FILE", format!("no staged file '{name}'")))?;
        Ok(([(header::CONTENT_TYPE, detect_mime(&name))], bytes).into_response())
    })
    .await
}

async fn ingest(
    State(st): State<AppState>,
    Query(q): Query<HashMap<String, String>>,
    body: Result<Bytes, BytesRejection>,
) -> ApiResult<Response> {
    let body = body_bytes(body)?;
    blocking(move || {
        let format = q.get("format").map(String::as_str).unwrap_or_default();
        let log_message = q.get("logMessage").map(String::as_str).unwrap_or_default();
        let pid = st.repo.ingest(&body, format, log_message)?;
        Ok((StatusCode::CREATED, Json(json!({"pid": pid}))).into_response())
    })
    .await
}

async fn get_object(State(st): State<AppState>, Path(pid): Path<String>) -> ApiResult<Response> {
    blocking(move || Ok(Json(st.repo.get_object(&pid)?).into_response())).await
}

#[derive(Deserialize, Clone, Copy, PartialEq, Eq)]
#[serde(rename_all = "camelCase")]
enum Mode {
    ByValue,
    ByReference,
}

fn yes() -> bool {
    true
}

#[derive(Deserialize)]
#[serde(rename_all = "camelCase")]
struct DatastreamRequest {
    mode: Mode,
    #[serde(default)]
    alt_ids: Option<Vec<String>>,
    #[serde(default)]
    ds_label: Option<String>,
    #[serde(default = "yes")]
    versionable: bool,
    #[serde(default)]
    mime_type: Option<String>,
    #[serde(default, rename = "formatURI")]
    format_uri: Option<String>,
    #[serde(default)]
    content: Option<String>,
    #[serde(default)]
    location: Option<String>,
    #[serde(default)]
    ds_state: Option<DsState>,
    #[serde(default)]
    log_message: String,
    #[serde(default)]
    force: bool,
}

impl DatastreamRequest {
    fn split(self) -> ApiResult<(DatastreamProps, Payload)> {
        let payload = match (self.mode, self.content, self.location) {
            (Mode::ByValue, Some(content), None) => Payload::Value(
                crate::b64::decode(&content).map_err(|e| ApiError::bad_request(format!("content is not base64: {e}")))?,
            ),
            (Mode::ByReference, None, Some(location)) => Payload::Reference(location),
            (Mode::ByValue, _, _) => return Err(ApiError::bad_request("byValue needs content and no location")),
            (Mode::ByReference, _, _) => return Err(ApiError::bad_request("byReference needs location and no content")),
        };
        let props = DatastreamProps {
            alt_ids: self.alt_ids,
            label: self.ds_label,
            versionable: self.versionable,
            mime_type: self.mime_type,
            format_uri: self.format_uri,
            state: self.ds_state,
            log_message: self.log_message,
            force: self.force,
        };
        Ok((props, payload))
    }
}

async fn write_datastream(
    st: AppState,
    pid: String,
    ds_id: String,
    body: Result<Bytes, BytesRejection>,
    create: bool,
) -> ApiResult<Response> {
    let req: DatastreamRequest = parse_json(&body_bytes(body)?)?;
    let (props, payload) = req.split()?;
    blocking(move || {
        let staged = match &payload {
            Payload::Reference(location) => st.staging.name_of(location),
            Payload::Value(_) => None,
        };
        let version_no = if create {
            st.repo.add_datastream(&pid, &ds_id, props, payload)?
        } else {
            st.repo.modify_datastream(&pid, &ds_id, props, payload)?
        };
        if let Some(name) = staged {
            st.staging.consume(&name);
        }
        let status = if create { StatusCode::CREATED } else { StatusCode::OK };
        Ok((status, Json(json!({"versionNo": version_no}))).into_response())
    })
    .await
}

async fn add_datastream(
    State(st): State<AppState>,
    Path((pid, ds_id)): Path<(String, String)>,
    body: Result<Bytes, BytesRejection>,
) -> ApiResult<Response> {
    write_datastream(st, pid, ds_id, body, true).await
}

async fn modify_datastream(
    State(st): State<AppState>,
    Path((pid, ds_id)): Path<(String, String)>,
    body: Result<Bytes, BytesRejection>,
) -> ApiResult<Response> {
    write_datastream(st, pid, ds_id, body, false).await
}

#[derive(Deserialize)]
struct VersionQuery {
    version: Option<u32>,
}

async fn get_datastream(
    State(st): State<AppState>,
    Path((pid, ds_id)): Path<(String, String)>,
    Query(q): Query<VersionQuery>,
) -> ApiResult<Response> {
    blocking(move || Ok(Json(st.repo.get_datastream(&pid, &ds_id, q.version)?).into_response())).await
}

async fn get_datastream_content(
    State(st): State<AppState>,
    Path((pid, ds_id)): Path<(String, String)>,
    Query(q): Query<VersionQuery>,
) -> ApiResult<Response> {
    blocking(move || {
        let v = st.repo.get_datastream(&pid, &ds_id, q.version)?;
        Ok(([(header::CONTENT_TYPE, v.info.mime_type)], v.content).into_response())
    })
    .await
}

fn hundred() -> usize {
    100
}

#[derive(Deserialize)]
#[serde(rename_all = "camelCase")]
struct SearchRequest {
    conditions: Vec<Condition>,
    #[serde(default = "hundred")]
    max_results: usize,
}

async fn find_objects(State(st): State<AppState>, body: Result<Bytes, BytesRejection>) -> ApiResult<Response> {
    let req: SearchRequest = parse_json(&body_bytes(body)?)?;
    blocking(move || {
        let query = FieldSearchQuery {
            conditions: req.conditions,
        };
        Ok(Json(st.repo.find_objects(&query, req.max_results)?).into_response())
    })
    .await
}
