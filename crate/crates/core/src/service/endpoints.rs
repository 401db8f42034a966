//! The endpoint table. Routing, role checks and the service description
//! are all driven from it.

use serde_json::{json, Map, Value};

use super::config::Role;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Access {
    Public,
    Authenticated,
    AnyOf(&'static [Role]),
}

impl Access {
    pub fn allows(self, roles: Option<&[Role]>) -> bool {
        match (self, roles) {
            (Access::Public, _) => true,
            (_, None) => false,
            (Access::Authenticated, Some(_)) => true,
            (Access::AnyOf(needed), Some(held)) => needed.iter().any(|r| held.contains(r)),
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct Endpoint {
    pub name: &'static str,
    pub method: &'static str,
    /// Path template with `{param}` placeholders.
    pub path: &'static str,
    pub access: Access,
    pub request: &'static str,
    pub response: &'static str,
    pub summary: &'static str,
}

const AUTHORS: &[Role] = &[Role::Author, Role::Admin];
const ADMINS: &[Role] = &[Role::Admin];

const fn ep(
    name: &'static str,
    method: &'static str,
    path: &'static str,
    access: Access,
    request: &'static str,
    response: &'static str,
    summary: &'static str,
) -> Endpoint {
    Endpoint {
        name,
        method,
        path,
        access,
        request,
        response,
        summary,
    }
}

use Access::{AnyOf, Authenticated, Public};

pub const ENDPOINTS: &[Endpoint] = &[
    ep("login", "POST", "/auth/login", Public, "LoginRequest", "Session", "Exchange credentials for a bearer token."),
    ep("logout", "POST", "/auth/logout", Authenticated, "-", "-", "Invalidate the caller's token."),
    ep("description", "GET", "/api/description", Public, "-", "ServiceDescription", "This document."),
    ep("listTasks", "GET", "/api/tasks", Authenticated, "-", "TaskInstance[]", "The caller's open tasks, newest first."),
    ep("getTask", "GET", "/api/tasks/{id}", Authenticated, "-", "TaskInstance", "One task instance."),
    ep("completeTask", "POST", "/api/tasks/{id}/complete", Authenticated, "CompleteRequest", "ProcessInstance", "Complete an open task, optionally naming the transition."),
    ep("latestDefinitions", "GET", "/api/definitions/latest", Authenticated, "-", "DeploymentSummary[]", "Latest version of every definition."),
    ep("deploy", "POST", "/api/definitions", AnyOf(ADMINS), "multipart: archive", "DeploymentSummary", "Deploy a process archive (zip)."),
    ep("startProcess", "POST", "/api/processes/{definitionId}/start", AnyOf(AUTHORS), "StartRequest", "StartResponse", "Start an instance of a deployed definition."),
    ep("listInstances", "GET", "/api/instances", AnyOf(ADMINS), "-", "ProcessInstance[]", "All process instances."),
    ep("getInstance", "GET", "/api/instances/{id}", Authenticated, "-", "ProcessInstance", "One process instance."),
    ep("getVariables", "GET", "/api/instances/{id}/variables", Authenticated, "-", "Variables", "All variables of an instance."),
    ep("setVariable", "PUT", "/api/instances/{id}/variables/{name}", Authenticated, "Value", "-", "Write one variable without completing anything."),
    ep("adminInstance", "POST", "/api/instances/{id}/admin", AnyOf(ADMINS), "AdminRequest", "ProcessInstance", "Advance or stop an instance."),
    ep("graph", "GET", "/api/instances/{id}/graph", Authenticated, "-", "GraphState", "Process graph with current nodes; id may be a task id."),
    ep("uploadStaging", "POST", "/staging", Authenticated, "multipart: file", "StagingRef", "Upload a file to the staging area."),
    ep("getStaging", "GET", "/staging/{name}", Public, "-", "bytes", "Fetch a staged file."),
    ep("ingest", "POST", "/repo/objects", AnyOf(AUTHORS), "xml: pubfoxml-1.0 (query: format, logMessage)", "IngestResponse", "Create an object; the server mints the PID."),
    ep("getObject", "GET", "/repo/objects/{pid}", Authenticated, "-", "DigitalObject", "Object properties, datastream versions and DC."),
    ep("addDatastream", "POST", "/repo/objects/{pid}/datastreams/{dsId}", AnyOf(AUTHORS), "DatastreamRequest", "VersionResponse", "Create a datastream."),
    ep("modifyDatastream", "PUT", "/repo/objects/{pid}/datastreams/{dsId}", AnyOf(AUTHORS), "DatastreamRequest", "VersionResponse", "Add or overwrite a datastream version."),
    ep("getDatastream", "GET", "/repo/objects/{pid}/datastreams/{dsId}", Authenticated, "- (query: version)", "DatastreamVersion", "Version metadata and base64 content."),
    ep("getDatastreamContent", "GET", "/repo/objects/{pid}/datastreams/{dsId}/content", Authenticated, "- (query: version)", "bytes", "Raw content with its MIME type."),
    ep("findObjects", "POST", "/repo/search", Authenticated, "SearchRequest", "FieldSearchResult", "Conjunctive field search."),
];

/// `{param}` to the router's `:param` syntax.
pub fn route_path(template: &str) -> String {
    template.replace('{', ":").replace('}', "")
}

pub fn find(method: &str, matched_route: &str) -> Option<&'static Endpoint> {
    ENDPOINTS
        .iter()
        .find(|e| e.method == method && route_path(e.path) == matched_route)
}

fn access_json(access: Access) -> Value {
    match access {
        Access::Public => json!("public"),
        Access::Authenticated => json!("authenticated"),
        Access::AnyOf(roles) => json!(roles.iter().map(|r| r.as_str()).collect::<Vec<_>>()),
    }
}

fn types() -> Value {
    let value = json!({"oneOf": [
        {"type": "object", "properties": {"type": {"enum": ["string", "integer", "float", "boolean", "bytes"]}, "value": {}}},
        {"type": ["string", "number", "boolean"]}
    ]});
    json!({
        "Error": {"code": "string", "message": "string", "detail": "any?"},
        "LoginRequest": {"username": "string", "password": "string"},
        "Session": {"token": "string", "actorId": "string", "roles": "string[]", "expiresAt": "timestamp"},
        "Value": value,
        "Variables": {"<name>": "Value"},
        "StartRequest": {"variables": "Variables?"},
        "StartResponse": {"instance": "ProcessInstance", "task": "TaskInstance"},
        "CompleteRequest": {"transition": "string?", "variables": "Variables?"},
        "AdminRequest": {"action": "advance | stop"},
        "DeploymentSummary": {"definitionId": "string", "name": "string", "version": "integer", "deployedAt": "timestamp"},
        "ProcessInstance": {"instanceId": "string", "definitionId": "string", "state": "running | ended | stopped", "initiator": "string", "swimlaneBindings": {"<swimlane>": "string"}, "variables": "Variables", "tokens": "Token[]", "createdAt": "timestamp", "endedAt": "timestamp?"},
        "Token": {"tokenId": "string", "currentNode": "string", "parent": "string?", "status": "active | forked | atJoin | merged | ended"},
        "TaskInstance": {"taskInstanceId": "string", "instanceId": "string", "tokenId": "string", "nodeName": "string", "taskName": "string", "swimlane": "string", "actorId": "string", "state": "open | completed", "createdAt": "timestamp", "completedAt": "timestamp?"},
        "GraphState": {"definitionId": "string", "nodes": [{"name": "string", "kind": "string", "x": "integer", "y": "integer", "width": "integer", "height": "integer"}], "transitions": [{"from": "string", "to": "string", "name": "string?"}], "currentNodes": "string[]"},
        "StagingRef": {"name": "string", "url": "string", "size": "integer", "mimeType": "string", "uploadedBy": "string"},
        "IngestResponse": {"pid": "string"},
        "DigitalObject": {"pid": "string", "label": "string", "contentModel": "string", "state": "active | inactive | deleted", "createdAt": "timestamp", "modifiedAt": "timestamp", "datastreams": {"<dsId>": {"dsId": "string", "state": "A | I | D", "versions": "VersionInfo[]"}}, "dc": "DublinCoreRecord"},
        "VersionInfo": {"versionNo": "integer", "label": "string?", "mimeType": "string", "formatURI": "string?", "controlMode": "inline | referenced", "location": "string?", "altIds": "string[]", "logMessage": "string", "size": "integer", "digest": "string", "createdAt": "timestamp"},
        "DatastreamVersion": {"...": "VersionInfo", "content": "base64"},
        "DatastreamRequest": {"mode": "byValue | byReference", "content": "base64 (byValue)", "location": "string (byReference)", "altIds": "string[]?", "dsLabel": "string?", "versionable": "boolean = true", "mimeType": "string?", "formatURI": "string?", "dsState": "A | I | D ?", "logMessage": "string = \"\"", "force": "boolean = false"},
        "VersionResponse": {"versionNo": "integer"},
        "DublinCoreRecord": {"title": "string[]", "creator": "string[]", "subject": "string[]", "description": "string[]", "publisher": "string[]", "contributor": "string[]", "date": "string[]", "type": "string[]", "language": "string[]", "coverage": "string[]", "rights": "string[]", "identifier": "string[]"},
        "SearchRequest": {"conditions": [{"field": "string", "operator": "eq | has | gt | ge | lt | le", "value": "string"}], "maxResults": "integer = 100"},
        "FieldSearchResult": {"rows": "ObjectFields[]", "complete": "boolean"},
        "ObjectFields": {"pid": "string", "label": "string", "cDate": "timestamp", "mDate": "timestamp", "...": "DublinCoreRecord"},
        "ServiceDescription": {"service": "string", "version": "string", "operations": "Operation[]", "types": "object"}
    })
}

/// The machine-readable description; identical for every call of a build.
pub fn description() -> Value {
    let operations: Vec<Value> = ENDPOINTS
        .iter()
        .map(|e| {
            let mut m = Map::new();
            m.insert("name".into(), json!(e.name));
            m.insert("method".into(), json!(e.method));
            m.insert("path".into(), json!(e.path));
            m.insert("access".into(), access_json(e.access));
            m.insert("request".into(), json!(e.request));
            m.insert("response".into(), json!(e.response));
            m.insert("summary".into(), json!(e.summary));
            Value::Object(m)
        })
        .collect();
    json!({
        "service": "pubflow",
        "version": env!("CARGO_PKG_VERSION"),
        "auth": "Authorization: Bearer <token> from POST /auth/login",
        "operations": operations,
        "types": types(),
    })
}
