//! C ABI over the pubflow process-definition, engine and repository APIs.
//!
//! Every call returns a [`PubflowStatus`]. On failure the thread's last
//! error holds the domain code (`UNKNOWN_TASK`, `STATE_CONFLICT`, ...), a
//! message and, for refused deployments, the violation list as JSON.
//! Strings handed out by the library are freed with
//! [`pubflow_string_free`], byte buffers with [`pubflow_bytes_free`] and
//! handles with their own `_free` function.

use std::cell::RefCell;
use std::collections::{BTreeMap, BTreeSet};
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use pubflow::engine::{AdminAction, Caller, Engine, EngineError, EngineOptions, TypedValue};
use pubflow::procdef::{check_soundness, parse_definition, ProcdefError, ProcessDefinition};
use pubflow::repository::{
    DatastreamProps, FieldSearchQuery, Payload, Repository, RepositoryError, RepositoryOptions,
};
use serde::Deserialize;
use serde::Serialize;

/// Result of every call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PubflowStatus {
    Ok = 0,
    /// A required pointer was null.
    NullArgument = 1,
    /// A string argument was not UTF-8.
    InvalidUtf8 = 2,
    /// A JSON argument did not parse or had the wrong shape.
    InvalidJson = 3,
    /// Definition XML or archive could not be read.
    DefinitionError = 4,
    /// Deployment refused; the detail JSON lists the violations.
    Unsound = 5,
    EngineError = 6,
    RepositoryError = 7,
    /// A Rust panic was caught at the boundary.
    Panic = 8,
}

/// A parsed process definition.
pub struct PubflowDefinition {
    inner: ProcessDefinition,
}

/// An open workflow engine rooted at one directory.
pub struct PubflowEngine {
    inner: Engine,
}

/// An open object repository rooted at one directory.
pub struct PubflowRepository {
    inner: Repository,
}

struct LastError {
    code: CString,
    message: CString,
    detail: CString,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<LastError>> = const { RefCell::new(None) };
}

struct Failure {
    status: PubflowStatus,
    code: String,
    message: String,
    detail: String,
}

impl Failure {
    fn new(status: PubflowStatus, code: &str, message: impl Into<String>) -> Failure {
        Failure {
            status,
            code: code.to_owned(),
            message: message.into(),
            detail: "[]".into(),
        }
    }
}

impl From<ProcdefError> for Failure {
    fn from(e: ProcdefError) -> Failure {
        Failure::new(PubflowStatus::DefinitionError, e.code(), e.to_string())
    }
}

impl From<EngineError> for Failure {
    fn from(e: EngineError) -> Failure {
        let violations = e.violations();
        let mut f = Failure::new(
            if violations.is_empty() { PubflowStatus::EngineError } else { PubflowStatus::Unsound },
            e.code(),
            e.to_string(),
        );
        if !violations.is_empty() {
            f.detail = serde_json::to_string(violations).unwrap_or_else(|_| "[]".into());
        }
        f
    }
}

impl From<RepositoryError> for Failure {
    fn from(e: RepositoryError) -> Failure {
        Failure::new(PubflowStatus::RepositoryError, e.code(), e.to_string())
    }
}

fn c_string(s: String) -> CString {
    CString::new(s).unwrap_or_else(|e| {
        let mut bytes = e.into_vec();
        bytes.retain(|b| *b != 0);
        CString::new(bytes).expect("NULs removed")
    })
}

fn record(f: Failure) -> PubflowStatus {
    LAST_ERROR.with(|slot| {
        *slot.borrow_mut() = Some(LastError {
            code: c_string(f.code),
            message: c_string(f.message),
            detail: c_string(f.detail),
        })
    });
    f.status
}

/// Runs `body`, clearing the last error first and translating failures and
/// panics into a status.
fn guard(body: impl FnOnce() -> Result<(), Failure>) -> PubflowStatus {
    LAST_ERROR.with(|slot| *slot.borrow_mut() = None);
    match catch_unwind(AssertUnwindSafe(body)) {
        Ok(Ok(())) => PubflowStatus::Ok,
        Ok(Err(f)) => record(f),
        Err(_) => record(Failure::new(PubflowStatus::Panic, "PANIC", "internal error")),
    }
}

unsafe fn text<'a>(p: *const c_char, name: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(Failure::new(PubflowStatus::NullArgument, "NULL_ARGUMENT", format!("{name} is null")));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Failure::new(PubflowStatus::InvalidUtf8, "INVALID_UTF8", format!("{name} is not UTF-8")))
}

unsafe fn optional_text<'a>(p: *const c_char, name: &str) -> Result<Option<&'a str>, Failure> {
    if p.is_null() {
        Ok(None)
    } else {
        text(p, name).map(Some)
    }
}

unsafe fn bytes<'a>(p: *const u8, len: usize, name: &str) -> Result<&'a [u8], Failure> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(Failure::new(PubflowStatus::NullArgument, "NULL_ARGUMENT", format!("{name} is null")));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn handle<'a, T>(p: *const T, name: &str) -> Result<&'a T, Failure> {
    p.as_ref()
        .ok_or_else(|| Failure::new(PubflowStatus::NullArgument, "NULL_ARGUMENT", format!("{name} is null")))
}

fn out_check<T>(p: *mut T, name: &str) -> Result<(), Failure> {
    if p.is_null() {
        Err(Failure::new(PubflowStatus::NullArgument, "NULL_ARGUMENT", format!("{name} is null")))
    } else {
        Ok(())
    }
}

/// Null or empty JSON counts as the type's default.
unsafe fn json_arg<T: for<'de> Deserialize<'de> + Default>(p: *const c_char, name: &str) -> Result<T, Failure> {
    match optional_text(p, name)? {
        None => Ok(T::default()),
        Some(s) if s.trim().is_empty() => Ok(T::default()),
        Some(s) => serde_json::from_str(s)
            .map_err(|e| Failure::new(PubflowStatus::InvalidJson, "INVALID_JSON", format!("{name}: {e}"))),
    }
}

unsafe fn put_json(out: *mut *mut c_char, value: &impl Serialize) -> Result<(), Failure> {
    let s = serde_json::to_string(value).map_err(|e| Failure::new(PubflowStatus::Panic, "PANIC", e.to_string()))?;
    *out = c_string(s).into_raw();
    Ok(())
}

unsafe fn put_handle<T>(out: *mut *mut T, value: T) {
    *out = Box::into_raw(Box::new(value));
}

// ------------------------------------------------------------------ errors

fn last<F: Fn(&LastError) -> *const c_char>(pick: F) -> *const c_char {
    LAST_ERROR.with(|slot| slot.borrow().as_ref().map_or(ptr::null(), pick))
}

/// Code of the last failure on this thread, or null after a success. Valid
/// until the next call on the same thread.
#[no_mangle]
pub extern "C" fn pubflow_last_error_code() -> *const c_char {
    last(|e| e.code.as_ptr())
}

/// Human-readable message of the last failure, or null.
#[no_mangle]
pub extern "C" fn pubflow_last_error_message() -> *const c_char {
    last(|e| e.message.as_ptr())
}

/// JSON array of `{code, subject, message}` violations for a refused
/// deployment; `[]` for other failures; null after a success.
#[no_mangle]
pub extern "C" fn pubflow_last_error_detail() -> *const c_char {
    last(|e| e.detail.as_ptr())
}

/// Library version as a static string.
#[no_mangle]
pub extern "C" fn pubflow_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// # Safety
/// `s` must come from this library or be null.
#[no_mangle]
pub unsafe extern "C" fn pubflow_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// # Safety
/// `data` and `len` must be a buffer returned by this library, or null.
#[no_mangle]
pub unsafe extern "C" fn pubflow_bytes_free(data: *mut u8, len: usize) {
    if !data.is_null() {
        drop(Box::from_raw(ptr::slice_from_raw_parts_mut(data, len)));
    }
}

// ------------------------------------------------------------------ definitions

/// Parses definition XML.
///
/// # Safety
/// `xml` must point to `len` readable bytes; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn pubflow_definition_parse(
    xml: *const u8,
    len: usize,
    out: *mut *mut PubflowDefinition,
) -> PubflowStatus {
    guard(|| {
        out_check(out, "out")?;
        let def = parse_definition(bytes(xml, len, "xml")?)?;
        put_handle(out, PubflowDefinition { inner: def });
        Ok(())
    })
}

/// Soundness report as JSON: `{"sound": bool, "violations": [...]}`.
///
/// # Safety
/// `def` must be a live handle; `out_json` must be writable.
#[no_mangle]
pub unsafe extern "C" fn pubflow_definition_check(
    def: *const PubflowDefinition,
    out_json: *mut *mut c_char,
) -> PubflowStatus {
    guard(|| {
        out_check(out_json, "out_json")?;
        let report = check_soundness(&handle(def, "def")?.inner);
        put_json(out_json, &report)
    })
}

/// The definition's name, as an owned string.
///
/// # Safety
/// `def` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn pubflow_definition_name(def: *const PubflowDefinition, out: *mut *mut c_char) -> PubflowStatus {
    guard(|| {
        out_check(out, "out")?;
        *out = c_string(handle(def, "def")?.inner.name.clone()).into_raw();
        Ok(())
    })
}

/// # Safety
/// `def` must come from [`pubflow_definition_parse`] or be null.
#[no_mangle]
pub unsafe extern "C" fn pubflow_definition_free(def: *mut PubflowDefinition) {
    if !def.is_null() {
        drop(Box::from_raw(def));
    }
}

// ------------------------------------------------------------------ engine

#[derive(Default, Deserialize)]
#[serde(default, rename_all = "camelCase", deny_unknown_fields)]
struct EngineConfig {
    /// Role name to actor ids.
    directory: BTreeMap<String, BTreeSet<String>>,
    roles: Option<Vec<String>>,
    snapshot_every: Option<u64>,
    fsync: Option<bool>,
}

/// Opens (or creates) an engine journal in `dir`. `options_json` may be
/// null or `{"directory": {"qa": ["quinn"]}, "roles": [...],
/// "snapshotEvery": 1000, "fsync": true}`.
///
/// # Safety
/// String arguments must be NUL-terminated; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn pubflow_engine_open(
    dir: *const c_char,
    options_json: *const c_char,
    out: *mut *mut PubflowEngine,
) -> PubflowStatus {
    guard(|| {
        out_check(out, "out")?;
        let dir = text(dir, "dir")?;
        let config: EngineConfig = json_arg(options_json, "options_json")?;
        let defaults = EngineOptions::default();
        let options = EngineOptions {
            directory: config.directory,
            roles: config.roles.unwrap_or(defaults.roles.clone()),
            snapshot_every: config.snapshot_every.unwrap_or(defaults.snapshot_every),
            fsync: config.fsync.unwrap_or(defaults.fsync),
            ..defaults
        };
        let engine = Engine::open(Path::new(dir), options)?;
        put_handle(out, PubflowEngine { inner: engine });
        Ok(())
    })
}

/// Deploys a process archive (zip). Writes the deployment record as JSON.
///
/// # Safety
/// `archive` must point to `len` bytes; `out_json` must be writable.
#[no_mangle]
pub unsafe extern "C" fn pubflow_engine_deploy_archive(
    engine: *const PubflowEngine,
    archive: *const u8,
    len: usize,
    out_json: *mut *mut c_char,
) -> PubflowStatus {
    guard(|| {
        out_check(out_json, "out_json")?;
        let record = handle(engine, "engine")?.inner.deploy_archive(bytes(archive, len, "archive")?)?;
        put_json(out_json, &record)
    })
}

/// Deploys an already parsed definition.
///
/// # Safety
/// Handles must be live; `out_json` must be writable.
#[no_mangle]
pub unsafe extern "C" fn pubflow_engine_deploy(
    engine: *const PubflowEngine,
    def: *const PubflowDefinition,
    out_json: *mut *mut c_char,
) -> PubflowStatus {
    guard(|| {
        out_check(out_json, "out_json")?;
        let def = handle(def, "def")?.inner.clone();
        let record = handle(engine, "engine")?.inner.deploy(def, None, None)?;
        put_json(out_json, &record)
    })
}

/// Latest version of every deployed definition, as a JSON array.
///
/// # Safety
/// `engine` must be live; `out_json` must be writable.
#[no_mangle]
pub unsafe extern "C" fn pubflow_engine_latest_definitions(
    engine: *const PubflowEngine,
    out_json: *mut *mut c_char,
) -> PubflowStatus {
    guard(|| {
        out_check(out_json, "out_json")?;
        put_json(out_json, &handle(engine, "engine")?.inner.latest_definitions())
    })
}

/// Starts an instance. `variables_json` is null or an object of typed
/// values (`{"pid": {"type": "string", "value": "escipub:1"}}`). Writes
/// `{"instance": ..., "task": ...}`.
///
/// # Safety
/// String arguments must be NUL-terminated; `out_json` must be writable.
#[no_mangle]
pub unsafe extern "C" fn pubflow_engine_start(
    engine: *const PubflowEngine,
    definition_id: *const c_char,
    initiator: *const c_char,
    variables_json: *const c_char,
    out_json: *mut *mut c_char,
) -> PubflowStatus {
    guard(|| {
        out_check(out_json, "out_json")?;
        let vars: BTreeMap<String, TypedValue> = json_arg(variables_json, "variables_json")?;
        let (instance, task) = handle(engine, "engine")?.inner.start_instance(
            text(definition_id, "definition_id")?,
            text(initiator, "initiator")?,
            vars,
        )?;
        put_json(out_json, &serde_json::json!({"instance": instance, "task": task}))
    })
}

/// Open tasks of one actor, newest first, as a JSON array.
///
/// # Safety
/// `actor` must be NUL-terminated; `out_json` must be writable.
#[no_mangle]
pub unsafe extern "C" fn pubflow_engine_tasks(
    engine: *const PubflowEngine,
    actor: *const c_char,
    out_json: *mut *mut c_char,
) -> PubflowStatus {
    guard(|| {
        out_check(out_json, "out_json")?;
        put_json(out_json, &handle(engine, "engine")?.inner.find_task_instances(text(actor, "actor")?))
    })
}

/// Completes a task as `actor`. A null `transition` takes the default one.
/// Writes the updated instance as JSON.
///
/// # Safety
/// String arguments must be NUL-terminated or null where allowed.
#[no_mangle]
pub unsafe extern "C" fn pubflow_engine_complete(
    engine: *const PubflowEngine,
    task_id: *const c_char,
    transition: *const c_char,
    variables_json: *const c_char,
    actor: *const c_char,
    out_json: *mut *mut c_char,
) -> PubflowStatus {
    guard(|| {
        out_check(out_json, "out_json")?;
        let vars: BTreeMap<String, TypedValue> = json_arg(variables_json, "variables_json")?;
        let instance = handle(engine, "engine")?.inner.complete_task(
            text(task_id, "task_id")?,
            optional_text(transition, "transition")?,
            vars,
            &Caller::actor(text(actor, "actor")?),
        )?;
        put_json(out_json, &instance)
    })
}

/// Administers an instance: `action` is `advance` or `stop`.
///
/// # Safety
/// String arguments must be NUL-terminated; `out_json` must be writable.
#[no_mangle]
pub unsafe extern "C" fn pubflow_engine_admin(
    engine: *const PubflowEngine,
    instance_id: *const c_char,
    action: *const c_char,
    admin: *const c_char,
    out_json: *mut *mut c_char,
) -> PubflowStatus {
    guard(|| {
        out_check(out_json, "out_json")?;
        let action = match text(action, "action")? {
            "advance" => AdminAction::Advance,
            "stop" => AdminAction::Stop,
            other => {
                return Err(Failure::new(
                    PubflowStatus::InvalidJson,
                    "UNKNOWN_ACTION",
                    format!("unknown action {other}"),
                ))
            }
        };
        let instance = handle(engine, "engine")?.inner.administer_instance(
            text(instance_id, "instance_id")?,
            action,
            &Caller::admin(text(admin, "admin")?),
        )?;
        put_json(out_json, &instance)
    })
}

/// # Safety
/// `engine` must come from [`pubflow_engine_open`] or be null.
#[no_mangle]
pub unsafe extern "C" fn pubflow_engine_free(engine: *mut PubflowEngine) {
    if !engine.is_null() {
        drop(Box::from_raw(engine));
    }
}

// ------------------------------------------------------------------ repository

/// Opens (or creates) a repository in `dir` minting PIDs in `namespace`.
/// Only `file://` locations resolve for by-reference content.
///
/// # Safety
/// String arguments must be NUL-terminated; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn pubflow_repository_open(
    dir: *const c_char,
    namespace: *const c_char,
    fsync: bool,
    out: *mut *mut PubflowRepository,
) -> PubflowStatus {
    guard(|| {
        out_check(out, "out")?;
        let options = RepositoryOptions {
            fsync,
            ..RepositoryOptions::new(text(namespace, "namespace")?)
        };
        let repo = Repository::open(Path::new(text(dir, "dir")?), options)?;
        put_handle(out, PubflowRepository { inner: repo });
        Ok(())
    })
}

/// Ingests an object document and writes its new PID.
///
/// # Safety
/// `xml` must point to `len` bytes; strings must be NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn pubflow_repository_ingest(
    repo: *const PubflowRepository,
    xml: *const u8,
    len: usize,
    format: *const c_char,
    log_message: *const c_char,
    out_pid: *mut *mut c_char,
) -> PubflowStatus {
    guard(|| {
        out_check(out_pid, "out_pid")?;
        let pid = handle(repo, "repo")?.inner.ingest(
            bytes(xml, len, "xml")?,
            text(format, "format")?,
            optional_text(log_message, "log_message")?.unwrap_or(""),
        )?;
        *out_pid = c_string(pid.to_string()).into_raw();
        Ok(())
    })
}

#[allow(clippy::too_many_arguments)]
unsafe fn write_datastream(
    repo: *const PubflowRepository,
    pid: *const c_char,
    ds_id: *const c_char,
    props_json: *const c_char,
    content: *const u8,
    len: usize,
    location: *const c_char,
    out_version: *mut u32,
    add: bool,
) -> PubflowStatus {
    guard(|| {
        out_check(out_version, "out_version")?;
        let repo = &handle(repo, "repo")?.inner;
        let props: DatastreamProps = json_arg(props_json, "props_json")?;
        let payload = match optional_text(location, "location")? {
            Some(url) => Payload::Reference(url.to_owned()),
            None => Payload::Value(bytes(content, len, "content")?.to_vec()),
        };
        let (pid, ds_id) = (text(pid, "pid")?, text(ds_id, "ds_id")?);
        *out_version = if add {
            repo.add_datastream(pid, ds_id, props, payload)?
        } else {
            repo.modify_datastream(pid, ds_id, props, payload)?
        };
        Ok(())
    })
}

/// Adds a datastream. Content is taken from `location` when it is not
/// null, otherwise from the `len` bytes at `content`. `props_json` is null
/// or `{"label", "mimeType", "formatURI", "versionable", "logMessage", ...}`.
///
/// # Safety
/// Pointers must be valid for their stated lengths.
#[no_mangle]
pub unsafe extern "C" fn pubflow_repository_add_datastream(
    repo: *const PubflowRepository,
    pid: *const c_char,
    ds_id: *const c_char,
    props_json: *const c_char,
    content: *const u8,
    len: usize,
    location: *const c_char,
    out_version: *mut u32,
) -> PubflowStatus {
    write_datastream(repo, pid, ds_id, props_json, content, len, location, out_version, true)
}

/// Writes a new version of an existing datastream; arguments as for
/// [`pubflow_repository_add_datastream`].
///
/// # Safety
/// Pointers must be valid for their stated lengths.
#[no_mangle]
pub unsafe extern "C" fn pubflow_repository_modify_datastream(
    repo: *const PubflowRepository,
    pid: *const c_char,
    ds_id: *const c_char,
    props_json: *const c_char,
    content: *const u8,
    len: usize,
    location: *const c_char,
    out_version: *mut u32,
) -> PubflowStatus {
    write_datastream(repo, pid, ds_id, props_json, content, len, location, out_version, false)
}

/// Content of one datastream version; `version` 0 means the latest. Free
/// the buffer with [`pubflow_bytes_free`].
///
/// # Safety
/// Strings must be NUL-terminated; out pointers must be writable.
#[no_mangle]
pub unsafe extern "C" fn pubflow_repository_get_datastream(
    repo: *const PubflowRepository,
    pid: *const c_char,
    ds_id: *const c_char,
    version: u32,
    out_data: *mut *mut u8,
    out_len: *mut usize,
) -> PubflowStatus {
    guard(|| {
        out_check(out_data, "out_data")?;
        out_check(out_len, "out_len")?;
        let v = handle(repo, "repo")?.inner.get_datastream(
            text(pid, "pid")?,
            text(ds_id, "ds_id")?,
            (version != 0).then_some(version),
        )?;
        let boxed = v.content.into_boxed_slice();
        *out_len = boxed.len();
        *out_data = Box::into_raw(boxed).cast();
        Ok(())
    })
}

/// Whole object record (properties, datastream history, DC) as JSON.
///
/// # Safety
/// `pid` must be NUL-terminated; `out_json` must be writable.
#[no_mangle]
pub unsafe extern "C" fn pubflow_repository_get_object(
    repo: *const PubflowRepository,
    pid: *const c_char,
    out_json: *mut *mut c_char,
) -> PubflowStatus {
    guard(|| {
        out_check(out_json, "out_json")?;
        put_json(out_json, &handle(repo, "repo")?.inner.get_object(text(pid, "pid")?)?)
    })
}

/// Field search. `query_json` is `{"conditions": [{"field", "operator",
/// "value"}]}`; writes `{"rows": [...], "complete": bool}`.
///
/// # Safety
/// `query_json` must be NUL-terminated; `out_json` must be writable.
#[no_mangle]
pub unsafe extern "C" fn pubflow_repository_find_objects(
    repo: *const PubflowRepository,
    query_json: *const c_char,
    max_results: usize,
    out_json: *mut *mut c_char,
) -> PubflowStatus {
    guard(|| {
        out_check(out_json, "out_json")?;
        let query: FieldSearchQuery = serde_json::from_str(text(query_json, "query_json")?)
            .map_err(|e| Failure::new(PubflowStatus::InvalidJson, "INVALID_JSON", e.to_string()))?;
        put_json(out_json, &handle(repo, "repo")?.inner.find_objects(&query, max_results)?)
    })
}

/// # Safety
/// `repo` must come from [`pubflow_repository_open`] or be null.
#[no_mangle]
pub unsafe extern "C" fn pubflow_repository_free(repo: *mut PubflowRepository) {
    if !repo.is_null() {
        drop(Box::from_raw(repo));
    }
}
