//! PID-addressed object store with versioned datastreams.
//!
//! Content lives in a directory of blobs named by their SHA-256; everything
//! else is recorded in a journal of applied changes. By-reference content is
//! fetched before any lock is taken, written as a blob, and only then is the
//! change journaled and made visible.

mod dc;
mod mime;
mod resolve;
mod search;

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::{Arc, Mutex, RwLock};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use serde_json::json;
use sha2::{Digest, Sha256};
use thiserror::Error;

pub use dc::{build_dc, parse_dc, DcElement, DublinCoreRecord, DC_NAMESPACE, OAI_DC_NAMESPACE};
pub use mime::{detect_mime, FALLBACK_MIME, MIME_TABLE};
pub use resolve::{essence, DefaultResolver, Fetched, LocationResolver};
pub use search::{Condition, FieldSearchQuery, FieldSearchResult, ObjectFields, Operator, SearchField};

use crate::journal::{Journal, JournalError, Record};
use crate::xml::{parse_document, XmlError};

pub const INGEST_FORMAT: &str = "pubfoxml-1.0";
pub const FOXML_NAMESPACE: &str = "urn:pubflow:foxml-1";
pub const DC_ID: &str = "DC";
const TIMESTAMP_FORMAT: &str = "%Y-%m-%dT%H:%M:%S%.3fZ";

#[derive(Debug, Error)]
pub enum RepositoryError {
    #[error("unsupported ingest format '{0}'")]
    UnsupportedFormat(String),
    #[error("XML syntax error at line {line}, column {column}: {message}")]
    XmlSyntax {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("schema violation at {path}: {message}")]
    SchemaViolation { path: String, message: String },
    #[error("unknown object '{0}'")]
    UnknownPid(String),
    #[error("object has no datastream '{0}'")]
    UnknownDatastream(String),
    #[error("datastream has no version {0}")]
    UnknownVersion(u32),
    #[error("datastream '{0}' already exists")]
    DatastreamExists(String),
    #[error("cannot resolve '{location}': {reason}")]
    UnresolvableLocation { location: String, reason: String },
    #[error("datastream '{0}' is or would become deleted; pass force to proceed")]
    StateConflict(String),
    #[error("unknown search field '{0}'")]
    UnknownField(String),
    #[error("unsupported operator '{0}'")]
    UnsupportedOperator(String),
    #[error("invalid query: {0}")]
    InvalidQuery(String),
    #[error("invalid PID namespace '{0}'")]
    InvalidNamespace(String),
    #[error("storage error: {0}")]
    Storage(String),
}

impl RepositoryError {
    pub fn code(&self) -> &'static str {
        match self {
            RepositoryError::UnsupportedFormat(_) => "UNSUPPORTED_FORMAT",
            RepositoryError::XmlSyntax { .. } => "XML_SYNTAX",
            RepositoryError::SchemaViolation { .. } => "SCHEMA_VIOLATION",
            RepositoryError::UnknownPid(_) => "UNKNOWN_PID",
            RepositoryError::UnknownDatastream(_) => "UNKNOWN_DATASTREAM",
            RepositoryError::UnknownVersion(_) => "UNKNOWN_VERSION",
            RepositoryError::DatastreamExists(_) => "DATASTREAM_EXISTS",
            RepositoryError::UnresolvableLocation { .. } => "UNRESOLVABLE_LOCATION",
            RepositoryError::StateConflict(_) => "STATE_CONFLICT",
            RepositoryError::UnknownField(_) => "UNKNOWN_FIELD",
            RepositoryError::UnsupportedOperator(_) => "UNSUPPORTED_OPERATOR",
            RepositoryError::InvalidQuery(_) => "INVALID_QUERY",
            RepositoryError::InvalidNamespace(_) => "INVALID_NAMESPACE",
            RepositoryError::Storage(_) => "STORAGE_ERROR",
        }
    }
}

impl From<XmlError> for RepositoryError {
    fn from(e: XmlError) -> Self {
        match e {
            XmlError::Syntax { line, column, message } => RepositoryError::XmlSyntax { line, column, message },
            XmlError::Schema { path, message } => RepositoryError::SchemaViolation { path, message },
        }
    }
}

impl From<JournalError> for RepositoryError {
    fn from(e: JournalError) -> Self {
        RepositoryError::Storage(e.to_string())
    }
}

impl From<std::io::Error> for RepositoryError {
    fn from(e: std::io::Error) -> Self {
        RepositoryError::Storage(e.to_string())
    }
}

fn schema(path: &str, message: impl Into<String>) -> RepositoryError {
    RepositoryError::SchemaViolation {
        path: path.to_owned(),
        message: message.into(),
    }
}

/// Persistent identifier `namespace:serial`. Ordered by serial first.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Pid {
    pub namespace: String,
    pub serial: u64,
}

pub fn valid_namespace(ns: &str) -> bool {
    let mut chars = ns.chars();
    chars.next().is_some_and(|c| c.is_ascii_lowercase())
        && chars.all(|c| c.is_ascii_lowercase() || c.is_ascii_digit())
}

impl fmt::Display for Pid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.namespace, self.serial)
    }
}

impl FromStr for Pid {
    type Err = RepositoryError;

    fn from_str(s: &str) -> Result<Self, RepositoryError> {
        let unknown = || RepositoryError::UnknownPid(s.to_owned());
        let (ns, serial) = s.split_once(':').ok_or_else(unknown)?;
        if !valid_namespace(ns) || serial.starts_with('0') || serial.starts_with('+') {
            return Err(unknown());
        }
        let serial: u64 = serial.parse().map_err(|_| unknown())?;
        Ok(Pid {
            namespace: ns.to_owned(),
            serial,
        })
    }
}

impl Ord for Pid {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        (self.serial, &self.namespace).cmp(&(other.serial, &other.namespace))
    }
}

impl PartialOrd for Pid {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl Serialize for Pid {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Pid {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        String::deserialize(d)?.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ObjectState {
    Active,
    Inactive,
    Deleted,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum DsState {
    A,
    I,
    D,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ControlMode {
    Inline,
    Referenced,
}

/// Metadata of one stored datastream version. Referenced versions carry
/// the original location and are served from the copy fetched at the time.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct VersionInfo {
    pub version_no: u32,
    pub label: Option<String>,
    pub mime_type: String,
    #[serde(rename = "formatURI")]
    pub format_uri: Option<String>,
    pub control_mode: ControlMode,
    pub location: Option<String>,
    pub alt_ids: Vec<String>,
    pub log_message: String,
    pub size: u64,
    pub digest: String,
    pub created_at: DateTime<Utc>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct DatastreamVersion {
    #[serde(flatten)]
    pub info: VersionInfo,
    #[serde(with = "crate::b64")]
    pub content: Vec<u8>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Datastream {
    pub ds_id: String,
    pub state: DsState,
    pub versions: Vec<VersionInfo>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct DigitalObject {
    pub pid: Pid,
    pub label: String,
    pub content_model: String,
    pub state: ObjectState,
    pub created_at: DateTime<Utc>,
    pub modified_at: DateTime<Utc>,
    pub datastreams: BTreeMap<String, Datastream>,
    /// Parsed latest DC version, the basis of field search.
    pub dc: DublinCoreRecord,
}

impl DigitalObject {
    fn fields(&self) -> ObjectFields {
        ObjectFields {
            pid: self.pid.to_string(),
            label: self.label.clone(),
            c_date: self.created_at.format(TIMESTAMP_FORMAT).to_string(),
            m_date: self.modified_at.format(TIMESTAMP_FORMAT).to_string(),
            dc: self.dc.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Payload {
    Value(Vec<u8>),
    Reference(String),
}

/// Optional properties left `None` keep the previous version's value.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", default)]
pub struct DatastreamProps {
    pub alt_ids: Option<Vec<String>>,
    pub label: Option<String>,
    pub versionable: bool,
    pub mime_type: Option<String>,
    #[serde(rename = "formatURI")]
    pub format_uri: Option<String>,
    pub state: Option<DsState>,
    pub log_message: String,
    pub force: bool,
}

impl Default for DatastreamProps {
    fn default() -> Self {
        DatastreamProps {
            alt_ids: None,
            label: None,
            versionable: true,
            mime_type: None,
            format_uri: None,
            state: None,
            log_message: String::new(),
            force: false,
        }
    }
}

/// Journaled changes; replay applies them verbatim.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", content = "payload", rename_all = "kebab-case")]
enum Change {
    PidMinted {
        pid: Pid,
    },
    ObjectCreated {
        object: DigitalObject,
    },
    #[serde(rename_all = "camelCase")]
    DatastreamWritten {
        pid: Pid,
        ds_id: String,
        state: DsState,
        version: VersionInfo,
        dc: Option<DublinCoreRecord>,
        at: DateTime<Utc>,
    },
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
struct State {
    /// Last serial minted per namespace.
    serials: BTreeMap<String, u64>,
    objects: BTreeMap<Pid, DigitalObject>,
}

impl State {
    fn apply(&mut self, change: &Change) {
        match change {
            Change::PidMinted { pid } => self.bump(pid),
            Change::ObjectCreated { object } => {
                self.bump(&object.pid);
                self.objects.insert(object.pid.clone(), object.clone());
            }
            Change::DatastreamWritten {
                pid,
                ds_id,
                state,
                version,
                dc,
                at,
            } => {
                let Some(obj) = self.objects.get_mut(pid) else { return };
                let ds = obj.datastreams.entry(ds_id.clone()).or_insert_with(|| Datastream {
                    ds_id: ds_id.clone(),
                    state: *state,
                    versions: Vec::new(),
                });
                ds.state = *state;
                match ds.versions.last_mut() {
                    Some(last) if last.version_no == version.version_no => *last = version.clone(),
                    _ => ds.versions.push(version.clone()),
                }
                if let Some(dc) = dc {
                    obj.dc = dc.clone();
                }
                obj.modified_at = *at;
            }
        }
    }

    fn bump(&mut self, pid: &Pid) {
        let s = self.serials.entry(pid.namespace.clone()).or_insert(0);
        *s = (*s).max(pid.serial);
    }

    fn object(&self, pid: &str) -> Result<&DigitalObject, RepositoryError> {
        let parsed: Pid = pid.parse()?;
        self.objects.get(&parsed).ok_or_else(|| RepositoryError::UnknownPid(pid.to_owned()))
    }
}

pub type Clock = Arc<dyn Fn() -> DateTime<Utc> + Send + Sync>;

#[derive(Clone)]
pub struct RepositoryOptions {
    pub namespace: String,
    pub resolver: Arc<dyn LocationResolver>,
    pub snapshot_every: u64,
    pub fsync: bool,
    pub clock: Clock,
}

impl RepositoryOptions {
    pub fn new(namespace: &str) -> Self {
        RepositoryOptions {
            namespace: namespace.to_owned(),
            resolver: Arc::new(DefaultResolver::default()),
            snapshot_every: 1000,
            fsync: true,
            clock: Arc::new(|| {
                let now = Utc::now();
                DateTime::from_timestamp_millis(now.timestamp_millis()).unwrap_or(now)
            }),
        }
    }
}

pub struct Repository {
    state: RwLock<State>,
    journal: Mutex<Journal>,
    blobs: PathBuf,
    options: RepositoryOptions,
}

impl Repository {
    pub fn open(dir: &Path, options: RepositoryOptions) -> Result<Repository, RepositoryError> {
        if !valid_namespace(&options.namespace) {
            return Err(RepositoryError::InvalidNamespace(options.namespace.clone()));
        }
        let blobs = dir.join("blobs");
        fs::create_dir_all(&blobs)?;
        let (mut journal, recovered) = Journal::open(&dir.join("journal"))?;
        journal.set_sync(options.fsync);
        let mut state: State = match recovered.snapshot {
            Some((_, v)) => serde_json::from_value(v).map_err(|e| RepositoryError::Storage(e.to_string()))?,
            None => State::default(),
        };
        for record in &recovered.records {
            state.apply(&decode(record)?);
        }
        Ok(Repository {
            state: RwLock::new(state),
            journal: Mutex::new(journal),
            blobs,
            options,
        })
    }

    pub fn namespace(&self) -> &str {
        &self.options.namespace
    }

    fn now(&self) -> DateTime<Utc> {
        (self.options.clock)()
    }

    fn read(&self) -> std::sync::RwLockReadGuard<'_, State> {
        self.state.read().expect("repository lock poisoned")
    }

    /// Journals `changes` and applies them. The journal lock is held by the
    /// caller from validation through commit so writers stay serialized.
    fn commit(&self, journal: &mut Journal, changes: &[Change]) -> Result<(), RepositoryError> {
        let ts = self.now();
        for change in changes {
            let v = serde_json::to_value(change).map_err(|e| RepositoryError::Storage(e.to_string()))?;
            journal.append(ts, v["kind"].as_str().unwrap_or_default(), v["payload"].clone())?;
        }
        let mut state = self.state.write().expect("repository lock poisoned");
        for change in changes {
            state.apply(change);
        }
        if self.options.snapshot_every > 0 && journal.records_since_snapshot() >= self.options.snapshot_every {
            let value = serde_json::to_value(&*state).map_err(|e| RepositoryError::Storage(e.to_string()))?;
            if let Err(e) = journal.write_snapshot(&value) {
                log::warn!("repository snapshot failed: {e}");
            }
        }
        Ok(())
    }

    fn lock_journal(&self) -> std::sync::MutexGuard<'_, Journal> {
        self.journal.lock().expect("repository journal lock poisoned")
    }

    fn next_pid(&self) -> Pid {
        let serial = self.read().serials.get(&self.options.namespace).copied().unwrap_or(0) + 1;
        Pid {
            namespace: self.options.namespace.clone(),
            serial,
        }
    }

    /// Mints a fresh PID. It is journaled, so it is never handed out again.
    pub fn generate_pid(&self) -> Result<Pid, RepositoryError> {
        let mut journal = self.lock_journal();
        let pid = self.next_pid();
        self.commit(&mut journal, &[Change::PidMinted { pid: pid.clone() }])?;
        Ok(pid)
    }

    fn put_blob(&self, bytes: &[u8]) -> Result<String, RepositoryError> {
        let digest = hex::encode(Sha256::digest(bytes));
        let path = self.blobs.join(&digest);
        if !path.exists() {
            let tmp = self.blobs.join(format!("{digest}.tmp"));
            let mut f = fs::File::create(&tmp)?;
            f.write_all(bytes)?;
            if self.options.fsync {
                f.sync_all()?;
            }
            fs::rename(&tmp, &path)?;
        }
        Ok(digest)
    }

    fn get_blob(&self, digest: &str) -> Result<Vec<u8>, RepositoryError> {
        fs::read(self.blobs.join(digest)).map_err(|e| RepositoryError::Storage(format!("blob {digest}: {e}")))
    }

    /// Creates an object from a `pubfoxml-1.0` document and returns its PID.
    pub fn ingest(&self, object_xml: &[u8], format: &str, log_message: &str) -> Result<Pid, RepositoryError> {
        if format != INGEST_FORMAT {
            return Err(RepositoryError::UnsupportedFormat(format.to_owned()));
        }
        let doc = parse_ingest(object_xml)?;
        let mut journal = self.lock_journal();
        let pid = self.next_pid();
        let ts = self.now();
        let mut datastreams = BTreeMap::new();
        let mut dc = DublinCoreRecord::default();
        let mut supplied_dc = false;
        for ds in doc.datastreams {
            let mut content = ds.content;
            if ds.id == DC_ID {
                let (record, rewritten) = normalize_dc(&content, &pid)?;
                dc = record;
                content = rewritten;
                supplied_dc = true;
            }
            let mime = ds.mime_type.unwrap_or_else(|| default_mime(&ds.id));
            datastreams.insert(
                ds.id.clone(),
                Datastream {
                    ds_id: ds.id,
                    state: DsState::A,
                    versions: vec![self.version(1, &content, mime, ds.label, ds.format_uri, None, Vec::new(), log_message, ts)?],
                },
            );
        }
        if !supplied_dc {
            dc.identifier = vec![pid.to_string()];
            let content = build_dc(&dc).into_bytes();
            let v = self.version(1, &content, "text/xml".into(), Some("Dublin Core Record".into()), None, None, Vec::new(), log_message, ts)?;
            datastreams.insert(
                DC_ID.to_owned(),
                Datastream {
                    ds_id: DC_ID.to_owned(),
                    state: DsState::A,
                    versions: vec![v],
                },
            );
        }
        let object = DigitalObject {
            pid: pid.clone(),
            label: doc.label,
            content_model: doc.content_model,
            state: ObjectState::Active,
            created_at: ts,
            modified_at: ts,
            datastreams,
            dc,
        };
        self.commit(&mut journal, &[Change::ObjectCreated { object }])?;
        Ok(pid)
    }

    #[allow(clippy::too_many_arguments)]
    fn version(
        &self,
        version_no: u32,
        content: &[u8],
        mime_type: String,
        label: Option<String>,
        format_uri: Option<String>,
        location: Option<String>,
        alt_ids: Vec<String>,
        log_message: &str,
        ts: DateTime<Utc>,
    ) -> Result<VersionInfo, RepositoryError> {
        let digest = self.put_blob(content)?;
        Ok(VersionInfo {
            version_no,
            label,
            mime_type,
            format_uri,
            control_mode: if location.is_some() { ControlMode::Referenced } else { ControlMode::Inline },
            location,
            alt_ids,
            log_message: log_message.to_owned(),
            size: content.len() as u64,
            digest,
            created_at: ts,
        })
    }

    fn fetch(&self, payload: Payload) -> Result<(Vec<u8>, Option<String>, Option<String>), RepositoryError> {
        match payload {
            Payload::Value(bytes) => Ok((bytes, None, None)),
            Payload::Reference(location) => {
                let fetched = self
                    .options
                    .resolver
                    .fetch(&location)
                    .map_err(|reason| RepositoryError::UnresolvableLocation {
                        location: location.clone(),
                        reason,
                    })?;
                let mime = fetched
                    .content_type
                    .filter(|t| !t.is_empty())
                    .unwrap_or_else(|| detect_mime(&location).to_owned());
                Ok((fetched.bytes, Some(mime), Some(location)))
            }
        }
    }

    pub fn add_datastream(
        &self,
        pid: &str,
        ds_id: &str,
        props: DatastreamProps,
        source: Payload,
    ) -> Result<u32, RepositoryError> {
        if !valid_ds_id(ds_id) {
            return Err(schema("dsId", format!("invalid datastream id '{ds_id}'")));
        }
        {
            let state = self.read();
            if state.object(pid)?.datastreams.contains_key(ds_id) {
                return Err(RepositoryError::DatastreamExists(ds_id.to_owned()));
            }
        }
        self.write_datastream(pid, ds_id, props, source, true)
    }

    pub fn modify_datastream(
        &self,
        pid: &str,
        ds_id: &str,
        props: DatastreamProps,
        source: Payload,
    ) -> Result<u32, RepositoryError> {
        {
            let state = self.read();
            if !state.object(pid)?.datastreams.contains_key(ds_id) {
                return Err(RepositoryError::UnknownDatastream(ds_id.to_owned()));
            }
        }
        self.write_datastream(pid, ds_id, props, source, false)
    }

    fn write_datastream(
        &self,
        pid: &str,
        ds_id: &str,
        props: DatastreamProps,
        source: Payload,
        create: bool,
    ) -> Result<u32, RepositoryError> {
        let (mut content, fetched_mime, location) = self.fetch(source)?;
        let mut journal = self.lock_journal();
        let state = self.read();
        let obj = state.object(pid)?;
        let existing = obj.datastreams.get(ds_id);
        match (create, existing) {
            (true, Some(_)) => return Err(RepositoryError::DatastreamExists(ds_id.to_owned())),
            (false, None) => return Err(RepositoryError::UnknownDatastream(ds_id.to_owned())),
            _ => {}
        }
        let previous = existing.and_then(|d| d.versions.last());
        let current_state = existing.map_or(DsState::A, |d| d.state);
        let new_state = props.state.unwrap_or(current_state);
        if !props.force && (new_state == DsState::D || current_state == DsState::D) {
            return Err(RepositoryError::StateConflict(ds_id.to_owned()));
        }
        let mut dc = None;
        if ds_id == DC_ID {
            let (record, rewritten) = normalize_dc(&content, &obj.pid)?;
            dc = Some(record);
            content = rewritten;
        }
        let mime_type = props
            .mime_type
            .or(fetched_mime)
            .or_else(|| previous.map(|p| p.mime_type.clone()))
            .unwrap_or_else(|| default_mime(ds_id));
        let version_no = match previous {
            Some(p) if props.versionable => p.version_no + 1,
            Some(p) => p.version_no,
            None => 1,
        };
        let ts = self.now();
        let version = self.version(
            version_no,
            &content,
            mime_type,
            props.label.or_else(|| previous.and_then(|p| p.label.clone())),
            props.format_uri.or_else(|| previous.and_then(|p| p.format_uri.clone())),
            location,
            props
                .alt_ids
                .or_else(|| previous.map(|p| p.alt_ids.clone()))
                .unwrap_or_default(),
            &props.log_message,
            ts,
        )?;
        let change = Change::DatastreamWritten {
            pid: obj.pid.clone(),
            ds_id: ds_id.to_owned(),
            state: new_state,
            version,
            dc,
            at: ts,
        };
        drop(state);
        self.commit(&mut journal, &[change])?;
        Ok(version_no)
    }

    /// True when the datastream exists and is not marked deleted.
    pub fn ds_exists(&self, pid: &str, ds_id: &str) -> Result<bool, RepositoryError> {
        let state = self.read();
        Ok(state
            .object(pid)?
            .datastreams
            .get(ds_id)
            .is_some_and(|d| d.state != DsState::D))
    }

    pub fn get_datastream(
        &self,
        pid: &str,
        ds_id: &str,
        version_no: Option<u32>,
    ) -> Result<DatastreamVersion, RepositoryError> {
        let info = {
            let state = self.read();
            let ds = state
                .object(pid)?
                .datastreams
                .get(ds_id)
                .ok_or_else(|| RepositoryError::UnknownDatastream(ds_id.to_owned()))?;
            match version_no {
                None => ds.versions.last().cloned(),
                Some(n) => ds.versions.iter().find(|v| v.version_no == n).cloned(),
            }
            .ok_or(RepositoryError::UnknownVersion(version_no.unwrap_or(0)))?
        };
        let content = self.get_blob(&info.digest)?;
        Ok(DatastreamVersion { info, content })
    }

    pub fn get_object(&self, pid: &str) -> Result<DigitalObject, RepositoryError> {
        self.read().object(pid).cloned()
    }

    pub fn find_objects(&self, query: &FieldSearchQuery, max_results: usize) -> Result<FieldSearchResult, RepositoryError> {
        if max_results == 0 {
            return Err(RepositoryError::InvalidQuery("maxResults must be positive".into()));
        }
        let conditions = search::compile(query)?;
        let state = self.read();
        let mut rows = Vec::new();
        let mut complete = true;
        for obj in state.objects.values() {
            let row = obj.fields();
            if search::matches(&row, &conditions) {
                if rows.len() == max_results {
                    complete = false;
                    break;
                }
                rows.push(row);
            }
        }
        Ok(FieldSearchResult { rows, complete })
    }

    pub fn snapshot(&self) -> Result<u64, RepositoryError> {
        let mut journal = self.lock_journal();
        let value = serde_json::to_value(&*self.read()).map_err(|e| RepositoryError::Storage(e.to_string()))?;
        Ok(journal.write_snapshot(&value)?)
    }

    /// Canonical serialization of all object metadata.
    pub fn state_bytes(&self) -> Vec<u8> {
        serde_json::to_vec(&*self.read()).expect("state is always serializable")
    }
}

fn decode(record: &Record) -> Result<Change, RepositoryError> {
    serde_json::from_value(json!({"kind": record.kind, "payload": record.payload}))
        .map_err(|e| RepositoryError::Storage(format!("journal record {}: {e}", record.seq)))
}

fn default_mime(ds_id: &str) -> String {
    if ds_id == DC_ID { "text/xml" } else { FALLBACK_MIME }.to_owned()
}

fn valid_ds_id(id: &str) -> bool {
    !id.is_empty()
        && id.len() <= 64
        && id.chars().all(|c| c.is_ascii_alphanumeric() || matches!(c, '.' | '_' | '-'))
}

/// Parses DC content and makes sure the identifier list names the object.
/// Content that already does is stored byte for byte.
fn normalize_dc(content: &[u8], pid: &Pid) -> Result<(DublinCoreRecord, Vec<u8>), RepositoryError> {
    let mut record = parse_dc(content)?;
    let rendered = pid.to_string();
    if record.identifier.contains(&rendered) {
        return Ok((record, content.to_vec()));
    }
    record.identifier.push(rendered);
    let rebuilt = build_dc(&record).into_bytes();
    Ok((record, rebuilt))
}

struct IngestDatastream {
    id: String,
    mime_type: Option<String>,
    label: Option<String>,
    format_uri: Option<String>,
    content: Vec<u8>,
}

struct IngestDocument {
    label: String,
    content_model: String,
    datastreams: Vec<IngestDatastream>,
}

fn parse_ingest(bytes: &[u8]) -> Result<IngestDocument, RepositoryError> {
    let root = parse_document(bytes)?;
    if !root.is(FOXML_NAMESPACE, "object") {
        return Err(schema(&root.path, format!("root must be object in namespace {FOXML_NAMESPACE}")));
    }
    if root.attr("pid").is_some() {
        return Err(schema(&format!("{}@pid", root.path), "the server assigns PIDs; remove the pid attribute"));
    }
    root.only_attrs(&["label", "contentModel"])?;
    let label = root.required_attr("label")?.to_owned();
    let content_model = root.required_attr("contentModel")?.to_owned();
    let mut datastreams: Vec<IngestDatastream> = Vec::new();
    for child in &root.children {
        if !child.is(FOXML_NAMESPACE, "datastream") {
            return Err(schema(&child.path, "only datastream elements may appear here"));
        }
        child.only_attrs(&["id", "mimeType", "label", "formatURI"])?;
        let id = child.required_attr("id")?;
        if !valid_ds_id(id) {
            return Err(schema(&format!("{}@id", child.path), format!("invalid datastream id '{id}'")));
        }
        if datastreams.iter().any(|d| d.id == id) {
            return Err(schema(&format!("{}@id", child.path), format!("duplicate datastream '{id}'")));
        }
        let compact: String = child.text.chars().filter(|c| !c.is_whitespace()).collect();
        let content = crate::b64::decode(&compact).map_err(|e| schema(&child.path, format!("content is not base64: {e}")))?;
        datastreams.push(IngestDatastream {
            id: id.to_owned(),
            mime_type: child.attr("mimeType").map(str::to_owned),
            label: child.attr("label").map(str::to_owned),
            format_uri: child.attr("formatURI").map(str::to_owned),
            content,
        });
    }
    Ok(IngestDocument {
        label,
        content_model,
        datastreams,
    })
}

/// The smallest valid ingest document.
pub fn minimal_object_xml(label: &str, content_model: &str) -> String {
    format!(
        "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n<object xmlns=\"{FOXML_NAMESPACE}\" label=\"{}\" contentModel=\"{}\"/>\n",
        crate::xml::escape(label),
        crate::xml::escape(content_model)
    )
}
