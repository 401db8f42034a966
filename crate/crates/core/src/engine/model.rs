use std::collections::BTreeMap;
use std::fmt;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::procdef::{LayoutMetadata, NodeKind, ProcessDefinition};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct DeploymentRecord {
    pub definition_id: String,
    pub name: String,
    pub version: u32,
    pub deployed_at: DateTime<Utc>,
    pub definition: ProcessDefinition,
    pub layout: Option<LayoutMetadata>,
    #[serde(with = "crate::b64::option", default)]
    pub image_bytes: Option<Vec<u8>>,
}

/// Deployment listing without the definition body.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct DeploymentSummary {
    pub definition_id: String,
    pub name: String,
    pub version: u32,
    pub deployed_at: DateTime<Utc>,
}

impl From<&DeploymentRecord> for DeploymentSummary {
    fn from(r: &DeploymentRecord) -> Self {
        DeploymentSummary {
            definition_id: r.definition_id.clone(),
            name: r.name.clone(),
            version: r.version,
            deployed_at: r.deployed_at,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InstanceState {
    Running,
    Ended,
    Stopped,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TokenStatus {
    /// Resting on a node, or stalled there.
    Active,
    /// Parked at a fork while its children run.
    Forked,
    /// A child waiting for its siblings at a join.
    AtJoin,
    /// Consumed by a join.
    Merged,
    Ended,
}

impl TokenStatus {
    pub fn alive(self) -> bool {
        matches!(self, TokenStatus::Active | TokenStatus::AtJoin)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Token {
    pub token_id: String,
    pub current_node: String,
    pub parent: Option<String>,
    pub status: TokenStatus,
}

impl Token {
    pub fn alive(&self) -> bool {
        self.status.alive()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ProcessInstance {
    pub instance_id: String,
    pub definition_id: String,
    pub state: InstanceState,
    pub initiator: String,
    pub swimlane_bindings: BTreeMap<String, String>,
    pub variables: BTreeMap<String, TypedValue>,
    pub tokens: Vec<Token>,
    pub created_at: DateTime<Utc>,
    pub ended_at: Option<DateTime<Utc>>,
}

impl ProcessInstance {
    pub fn token(&self, id: &str) -> Option<&Token> {
        self.tokens.iter().find(|t| t.token_id == id)
    }

    pub(crate) fn token_mut(&mut self, id: &str) -> Option<&mut Token> {
        self.tokens.iter_mut().find(|t| t.token_id == id)
    }

    /// Nodes holding a live token, first occurrence order, no repeats.
    pub fn current_nodes(&self) -> Vec<String> {
        let mut out: Vec<String> = Vec::new();
        for t in self.tokens.iter().filter(|t| t.alive()) {
            if !out.contains(&t.current_node) {
                out.push(t.current_node.clone());
            }
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TaskState {
    Open,
    Completed,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct TaskInstance {
    pub task_instance_id: String,
    pub instance_id: String,
    pub token_id: String,
    pub node_name: String,
    pub task_name: String,
    pub swimlane: String,
    pub actor_id: String,
    pub state: TaskState,
    pub created_at: DateTime<Utc>,
    pub completed_at: Option<DateTime<Utc>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", content = "value", rename_all = "lowercase")]
pub enum TypedValue {
    String(String),
    Integer(i64),
    Float(f64),
    Boolean(bool),
    Bytes(#[serde(with = "crate::b64")] Vec<u8>),
}

impl TypedValue {
    /// Text form used by decision rules and log templates.
    pub fn render(&self) -> String {
        match self {
            TypedValue::String(s) => s.clone(),
            TypedValue::Integer(i) => i.to_string(),
            TypedValue::Float(f) => f.to_string(),
            TypedValue::Boolean(b) => b.to_string(),
            TypedValue::Bytes(b) => crate::b64::encode(b),
        }
    }
}

impl From<&str> for TypedValue {
    fn from(s: &str) -> Self {
        TypedValue::String(s.to_owned())
    }
}

impl From<String> for TypedValue {
    fn from(s: String) -> Self {
        TypedValue::String(s)
    }
}

impl fmt::Display for TypedValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.render())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct GraphNode {
    pub name: String,
    pub kind: NodeKind,
    pub x: u32,
    pub y: u32,
    pub width: u32,
    pub height: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct GraphTransition {
    pub from: String,
    pub to: String,
    pub name: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct GraphState {
    pub definition_id: String,
    pub nodes: Vec<GraphNode>,
    pub transitions: Vec<GraphTransition>,
    pub current_nodes: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AdminAction {
    Advance,
    Stop,
}

/// Who is asking. Admins may complete any task and administer instances.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Caller {
    pub actor: String,
    pub admin: bool,
}

impl Caller {
    pub fn actor(actor: impl Into<String>) -> Self {
        Caller {
            actor: actor.into(),
            admin: false,
        }
    }

    pub fn admin(actor: impl Into<String>) -> Self {
        Caller {
            actor: actor.into(),
            admin: true,
        }
    }
}
