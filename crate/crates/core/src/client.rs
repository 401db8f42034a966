//! Minimal binding stub for the HTTP service.
//!
//! It knows only the operations listed in [`ROUTES`] and the handful of
//! wire shapes they exchange. Nothing here depends on the server's own
//! types, so the two sides can evolve independently.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Mutex;
use std::time::Duration;

use reqwest::blocking::{multipart, Client as Http, RequestBuilder, Response};
use reqwest::Method;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

/// Description operations this stub calls: (name, method, path).
pub const ROUTES: &[(&str, &str, &str)] = &[
    ("login", "POST", "/auth/login"),
    ("ingest", "POST", "/repo/objects"),
    ("getObject", "GET", "/repo/objects/{pid}"),
    ("addDatastream", "POST", "/repo/objects/{pid}/datastreams/{dsId}"),
    ("modifyDatastream", "PUT", "/repo/objects/{pid}/datastreams/{dsId}"),
    ("findObjects", "POST", "/repo/search"),
    ("deploy", "POST", "/api/definitions"),
    ("latestDefinitions", "GET", "/api/definitions/latest"),
    ("uploadStaging", "POST", "/staging"),
    ("startProcess", "POST", "/api/processes/{definitionId}/start"),
    ("listTasks", "GET", "/api/tasks"),
    ("completeTask", "POST", "/api/tasks/{id}/complete"),
    ("adminInstance", "POST", "/api/instances/{id}/admin"),
];

pub const INGEST_FORMAT: &str = "pubfoxml-1.0";
pub const DEFAULT_MAX_RESULTS: usize = 100;

const DC_ELEMENTS: [&str; 12] = [
    "title",
    "creator",
    "subject",
    "description",
    "publisher",
    "contributor",
    "date",
    "type",
    "language",
    "coverage",
    "rights",
    "identifier",
];

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StubConfig {
    pub base_url: String,
    pub username: String,
    pub password: String,
    pub timeout_seconds: u64,
}

#[derive(Debug, Error)]
pub enum ClientError {
    #[error("transport: {0}")]
    Transport(String),
    #[error("server answered {status} {code}: {message}")]
    Server {
        status: u16,
        code: String,
        message: String,
        detail: Option<Value>,
    },
    #[error("file not found: {}", .0.display())]
    FileNotFound(PathBuf),
    #[error("usage: {0}")]
    Usage(String),
}

impl ClientError {
    /// Process exit status for the CLI.
    pub fn exit_code(&self) -> i32 {
        match self {
            ClientError::Usage(_) | ClientError::FileNotFound(_) => 2,
            ClientError::Transport(_) => 3,
            ClientError::Server { .. } => 4,
        }
    }

    pub fn server_code(&self) -> Option<&str> {
        match self {
            ClientError::Server { code, .. } => Some(code),
            _ => None,
        }
    }
}

#[derive(Deserialize)]
struct ErrorBody {
    code: String,
    message: String,
    #[serde(default)]
    detail: Option<Value>,
}

#[derive(Serialize)]
struct LoginRequest<'a> {
    username: &'a str,
    password: &'a str,
}

#[derive(Deserialize)]
struct LoginResponse {
    token: String,
}

#[derive(Deserialize)]
struct IngestResponse {
    pid: String,
}

#[derive(Deserialize)]
struct DatastreamState {
    state: String,
}

#[derive(Deserialize)]
struct ObjectSummary {
    datastreams: BTreeMap<String, DatastreamState>,
}

#[derive(Serialize)]
#[serde(rename_all = "camelCase")]
struct DatastreamRequest<'a> {
    mode: &'a str,
    #[serde(skip_serializing_if = "Option::is_none")]
    content: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    location: Option<&'a str>,
    versionable: bool,
    mime_type: &'a str,
    #[serde(rename = "formatURI", skip_serializing_if = "Option::is_none")]
    format_uri: Option<&'a str>,
    #[serde(skip_serializing_if = "Option::is_none")]
    ds_label: Option<&'a str>,
    log_message: &'a str,
}

#[derive(Deserialize)]
#[serde(rename_all = "camelCase")]
struct VersionResponse {
    version_no: u32,
}

#[derive(Serialize)]
struct SearchCondition<'a> {
    field: &'a str,
    operator: &'a str,
    value: &'a str,
}

#[derive(Serialize)]
#[serde(rename_all = "camelCase")]
struct SearchRequest<'a> {
    conditions: Vec<SearchCondition<'a>>,
    max_results: usize,
}

#[derive(Deserialize)]
struct SearchResponse {
    rows: Vec<ObjectRow>,
}

/// One search hit: object properties plus every DC list.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ObjectRow {
    pub pid: String,
    pub label: String,
    pub c_date: String,
    pub m_date: String,
    #[serde(flatten)]
    pub dc: BTreeMap<String, Vec<String>>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Deployed {
    pub definition_id: String,
    pub name: String,
    pub version: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct StagedFile {
    pub name: String,
    pub url: String,
    pub size: u64,
    pub mime_type: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct TaskRef {
    pub task_instance_id: String,
    pub instance_id: String,
    pub node_name: String,
    pub task_name: String,
    pub actor_id: String,
    pub state: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct InstanceRef {
    pub instance_id: String,
    pub definition_id: String,
    pub state: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Started {
    pub instance: InstanceRef,
    pub task: TaskRef,
}

#[derive(Serialize)]
struct VariablesRequest<'a> {
    #[serde(skip_serializing_if = "Option::is_none")]
    transition: Option<&'a str>,
    variables: &'a BTreeMap<String, String>,
}

#[derive(Serialize)]
struct AdminRequest<'a> {
    action: &'a str,
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

/// `oai_dc` XML for the given element lists, in canonical element order.
pub fn dc_xml(fields: &BTreeMap<String, Vec<String>>) -> Result<String, ClientError> {
    if let Some(bad) = fields.keys().find(|k| !DC_ELEMENTS.contains(&k.as_str())) {
        return Err(ClientError::Usage(format!("'{bad}' is not a Dublin Core element")));
    }
    let mut xml = String::from(
        "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n<oai_dc:dc xmlns:oai_dc=\"http://www.openarchives.org/OAI/2.0/oai_dc/\" xmlns:dc=\"http://purl.org/dc/elements/1.1/\">\n",
    );
    for element in DC_ELEMENTS {
        for value in fields.get(element).into_iter().flatten() {
            xml.push_str(&format!("  <dc:{element}>{}</dc:{element}>\n", escape(value)));
        }
    }
    xml.push_str("</oai_dc:dc>\n");
    Ok(xml)
}

fn route(name: &str) -> (&'static str, &'static str) {
    let (_, method, path) = ROUTES
        .iter()
        .find(|(n, _, _)| *n == name)
        .unwrap_or_else(|| panic!("route '{name}' is not declared"));
    (method, path)
}

/// Percent-encodes one path segment.
fn segment(s: &str) -> String {
    let mut out = String::new();
    for b in s.bytes() {
        if b.is_ascii_alphanumeric() || matches!(b, b'-' | b'.' | b'_' | b'~' | b':') {
            out.push(b as char);
        } else {
            out.push_str(&format!("%{b:02X}"));
        }
    }
    out
}

pub struct Client {
    config: StubConfig,
    http: Http,
    token: Mutex<Option<String>>,
}

impl Client {
    pub fn new(config: StubConfig) -> Result<Client, ClientError> {
        if !(config.base_url.starts_with("http://") || config.base_url.starts_with("https://")) {
            return Err(ClientError::Usage(format!("server URL '{}' is not absolute", config.base_url)));
        }
        if config.timeout_seconds == 0 {
            return Err(ClientError::Usage("timeout must be positive".into()));
        }
        let http = Http::builder()
            .timeout(Duration::from_secs(config.timeout_seconds))
            .build()
            .map_err(|e| ClientError::Transport(e.to_string()))?;
        Ok(Client {
            config,
            http,
            token: Mutex::new(None),
        })
    }

    fn request(&self, name: &str, params: &[&str]) -> RequestBuilder {
        let (method, template) = route(name);
        let mut path = String::new();
        let mut params = params.iter();
        let mut rest = template;
        while let Some(open) = rest.find('{') {
            let close = rest[open..].find('}').expect("balanced template") + open;
            path.push_str(&rest[..open]);
            path.push_str(&segment(params.next().expect("one value per placeholder")));
            rest = &rest[close + 1..];
        }
        path.push_str(rest);
        let url = format!("{}{}", self.config.base_url.trim_end_matches('/'), path);
        let method = Method::from_bytes(method.as_bytes()).expect("valid method");
        self.http.request(method, url)
    }

    fn send(&self, builder: RequestBuilder) -> Result<Response, ClientError> {
        let response = builder.send().map_err(|e| ClientError::Transport(e.to_string()))?;
        if response.status().is_success() {
            return Ok(response);
        }
        let status = response.status().as_u16();
        let text = response.text().unwrap_or_default();
        Err(match serde_json::from_str::<ErrorBody>(&text) {
            Ok(body) => ClientError::Server {
                status,
                code: body.code,
                message: body.message,
                detail: body.detail,
            },
            Err(_) => ClientError::Server {
                status,
                code: "HTTP_ERROR".into(),
                message: text,
                detail: None,
            },
        })
    }

    fn json<T: DeserializeOwned>(&self, response: Response) -> Result<T, ClientError> {
        response
            .json()
            .map_err(|e| ClientError::Transport(format!("unexpected response: {e}")))
    }

    /// Logs in on first use and reuses the token.
    pub fn login(&self) -> Result<String, ClientError> {
        let mut token = self.token.lock().expect("token lock poisoned");
        if let Some(t) = token.as_ref() {
            return Ok(t.clone());
        }
        let body = LoginRequest {
            username: &self.config.username,
            password: &self.config.password,
        };
        let response = self.send(self.request("login", &[]).json(&body))?;
        let fresh = self.json::<LoginResponse>(response)?.token;
        *token = Some(fresh.clone());
        Ok(fresh)
    }

    fn authed(&self, name: &str, params: &[&str]) -> Result<RequestBuilder, ClientError> {
        let token = self.login()?;
        Ok(self.request(name, params).bearer_auth(token))
    }

    /// Creates an empty article object and returns its PID.
    pub fn ingest_new_object(&self) -> Result<String, ClientError> {
        let xml = "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n<object xmlns=\"urn:pubflow:foxml-1\" label=\"ESCIPUB\" contentModel=\"article\"/>\n";
        let request = self
            .authed("ingest", &[])?
            .query(&[("format", INGEST_FORMAT), ("logMessage", "initial creation")])
            .header(reqwest::header::CONTENT_TYPE, "text/xml")
            .body(xml);
        Ok(self.json::<IngestResponse>(self.send(request)?)?.pid)
    }

    /// Replaces the object's DC record. Server-side rejections yield
    /// `Ok(false)`.
    pub fn change_dc(&self, pid: &str, fields: &BTreeMap<String, Vec<String>>) -> Result<bool, ClientError> {
        let xml = dc_xml(fields)?;
        let body = DatastreamRequest {
            mode: "byValue",
            content: Some(crate::b64::encode(xml.as_bytes())),
            location: None,
            versionable: true,
            mime_type: "text/xml",
            format_uri: None,
            ds_label: None,
            log_message: "update",
        };
        match self.send(self.authed("modifyDatastream", &[pid, "DC"])?.json(&body)) {
            Ok(_) => Ok(true),
            Err(ClientError::Server { .. }) => Ok(false),
            Err(e) => Err(e),
        }
    }

    pub fn upload_staging(&self, path: &Path) -> Result<StagedFile, ClientError> {
        let bytes = std::fs::read(path).map_err(|_| ClientError::FileNotFound(path.to_owned()))?;
        let filename = path
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_else(|| "upload".into());
        let form = multipart::Form::new().part("file", multipart::Part::bytes(bytes).file_name(filename));
        self.json(self.send(self.authed("uploadStaging", &[])?.multipart(form))?)
    }

    fn ds_exists(&self, pid: &str, ds_id: &str) -> Result<bool, ClientError> {
        let object: ObjectSummary = self.json(self.send(self.authed("getObject", &[pid])?)?)?;
        Ok(object.datastreams.get(ds_id).is_some_and(|d| d.state != "D"))
    }

    /// Stores a staged file as the ARTICLE datastream, adding it on the
    /// first save and versioning it afterwards.
    pub fn save_article(&self, pid: &str, staged: &StagedFile, creator: &str) -> Result<u32, ClientError> {
        let exists = self.ds_exists(pid, "ARTICLE")?;
        let body = DatastreamRequest {
            mode: "byReference",
            content: None,
            location: Some(&staged.url),
            versionable: true,
            mime_type: &staged.mime_type,
            format_uri: Some(creator),
            ds_label: Some("ARTICLE"),
            log_message: if exists { "article revised" } else { "article added" },
        };
        let op = if exists { "modifyDatastream" } else { "addDatastream" };
        let response = self.send(self.authed(op, &[pid, "ARTICLE"])?.json(&body))?;
        Ok(self.json::<VersionResponse>(response)?.version_no)
    }

    /// Single-condition field search.
    pub fn do_query(&self, field: &str, operator: &str, value: &str, max_results: usize) -> Result<Vec<ObjectRow>, ClientError> {
        let body = SearchRequest {
            conditions: vec![SearchCondition { field, operator, value }],
            max_results,
        };
        Ok(self.json::<SearchResponse>(self.send(self.authed("findObjects", &[])?.json(&body))?)?.rows)
    }

    pub fn deploy_archive(&self, path: &Path) -> Result<Deployed, ClientError> {
        let bytes = std::fs::read(path).map_err(|_| ClientError::FileNotFound(path.to_owned()))?;
        let filename = path
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_else(|| "archive.zip".into());
        let part = multipart::Part::bytes(bytes)
            .file_name(filename)
            .mime_str("application/zip")
            .map_err(|e| ClientError::Usage(e.to_string()))?;
        let form = multipart::Form::new().part("archive", part);
        self.json(self.send(self.authed("deploy", &[])?.multipart(form))?)
    }

    pub fn latest_definitions(&self) -> Result<Vec<Deployed>, ClientError> {
        self.json(self.send(self.authed("latestDefinitions", &[])?)?)
    }

    pub fn start(&self, definition_id: &str, variables: &BTreeMap<String, String>) -> Result<Started, ClientError> {
        let body = VariablesRequest {
            transition: None,
            variables,
        };
        self.json(self.send(self.authed("startProcess", &[definition_id])?.json(&body))?)
    }

    pub fn tasks(&self) -> Result<Vec<TaskRef>, ClientError> {
        self.json(self.send(self.authed("listTasks", &[])?)?)
    }

    pub fn complete(
        &self,
        task_id: &str,
        transition: Option<&str>,
        variables: &BTreeMap<String, String>,
    ) -> Result<InstanceRef, ClientError> {
        let body = VariablesRequest { transition, variables };
        self.json(self.send(self.authed("completeTask", &[task_id])?.json(&body))?)
    }

    /// `action` is `advance` or `stop`.
    pub fn admin(&self, instance_id: &str, action: &str) -> Result<InstanceRef, ClientError> {
        self.json(self.send(self.authed("adminInstance", &[instance_id])?.json(&AdminRequest { action }))?)
    }
}
