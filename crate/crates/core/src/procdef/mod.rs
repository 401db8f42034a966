//! Process definitions: the graph model, its XML form, process archives,
//! schema validation and static soundness analysis.

mod archive;
mod format;
mod soundness;
mod validate;

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use archive::{parse_archive, ParsedArchive, ProcessArchive, DEFINITION_ENTRY, IMAGE_ENTRY, LAYOUT_ENTRY};
pub use format::{definition_to_xml, layout_to_xml, parse_definition, parse_layout, PROCDEF_NAMESPACE};
pub use soundness::{check_soundness, SoundnessReport};
pub use validate::{validate_definition, validate_definition_with_roles, DEFAULT_ROLES};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ProcdefError {
    #[error("archive is not a readable zip container: {0}")]
    MalformedZip(String),
    #[error("archive has no processdefinition.xml entry")]
    MissingDefinition,
    #[error("XML syntax error at line {line}, column {column}: {message}")]
    XmlSyntax {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("schema violation at {path}: {message}")]
    SchemaViolation { path: String, message: String },
}

impl ProcdefError {
    pub fn code(&self) -> &'static str {
        match self {
            ProcdefError::MalformedZip(_) => "MALFORMED_ZIP",
            ProcdefError::MissingDefinition => "MISSING_DEFINITION",
            ProcdefError::XmlSyntax { .. } => "XML_SYNTAX",
            ProcdefError::SchemaViolation { .. } => "SCHEMA_VIOLATION",
        }
    }
}

impl From<crate::xml::XmlError> for ProcdefError {
    fn from(e: crate::xml::XmlError) -> Self {
        match e {
            crate::xml::XmlError::Syntax {
                line,
                column,
                message,
            } => ProcdefError::XmlSyntax {
                line,
                column,
                message,
            },
            crate::xml::XmlError::Schema { path, message } => {
                ProcdefError::SchemaViolation { path, message }
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NodeKind {
    Start,
    Task,
    Decision,
    Fork,
    Join,
    End,
}

impl NodeKind {
    /// Start and task nodes hold the token until a human completes the task.
    pub fn is_wait_state(self) -> bool {
        matches!(self, NodeKind::Start | NodeKind::Task)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            NodeKind::Start => "start",
            NodeKind::Task => "task",
            NodeKind::Decision => "decision",
            NodeKind::Fork => "fork",
            NodeKind::Join => "join",
            NodeKind::End => "end",
        }
    }
}

impl fmt::Display for NodeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FieldKind {
    Text,
    Textarea,
    File,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FormField {
    pub name: String,
    pub label: String,
    pub kind: FieldKind,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct TaskSpec {
    pub task_name: String,
    pub swimlane: String,
    pub form_fields: Vec<FormField>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", content = "value", rename_all = "camelCase")]
pub enum Assignment {
    /// Bound to whoever started the instance.
    Initiator,
    /// Bound to an actor holding the role when the swimlane's first task is created.
    Role(String),
    FixedActor(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Swimlane {
    pub name: String,
    pub assignment: Assignment,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EventKind {
    NodeEnter,
    NodeLeave,
    TransitionTaken,
}

impl EventKind {
    pub fn as_str(self) -> &'static str {
        match self {
            EventKind::NodeEnter => "node-enter",
            EventKind::NodeLeave => "node-leave",
            EventKind::TransitionTaken => "transition-taken",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "camelCase")]
pub enum Effect {
    SetVariable { name: String, value: String },
    /// `${name}` placeholders are replaced with the variable's string form.
    Log { message: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ActionBinding {
    pub event: EventKind,
    pub effect: Effect,
}

/// First-match rule of a decision node: string equality on one variable.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DecisionRule {
    pub variable: String,
    pub equals: String,
    pub transition: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Node {
    pub name: String,
    pub kind: NodeKind,
    pub task: Option<TaskSpec>,
    #[serde(default)]
    pub decision_rules: Vec<DecisionRule>,
    #[serde(default)]
    pub actions: Vec<ActionBinding>,
}

impl Node {
    pub fn new(name: impl Into<String>, kind: NodeKind) -> Self {
        Node {
            name: name.into(),
            kind,
            task: None,
            decision_rules: Vec::new(),
            actions: Vec::new(),
        }
    }

    pub fn with_task(mut self, task_name: impl Into<String>, swimlane: impl Into<String>) -> Self {
        self.task = Some(TaskSpec {
            task_name: task_name.into(),
            swimlane: swimlane.into(),
            form_fields: Vec::new(),
        });
        self
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Transition {
    pub name: Option<String>,
    pub from: String,
    pub to: String,
    #[serde(default)]
    pub actions: Vec<ActionBinding>,
}

impl Transition {
    pub fn new(name: Option<&str>, from: &str, to: &str) -> Self {
        Transition {
            name: name.map(str::to_owned),
            from: from.to_owned(),
            to: to.to_owned(),
            actions: Vec::new(),
        }
    }

    pub fn is_default(&self) -> bool {
        self.name.is_none()
    }

    pub fn display_name(&self) -> String {
        match &self.name {
            Some(n) => format!("{}--{}-->{}", self.from, n, self.to),
            None => format!("{}-->{}", self.from, self.to),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProcessDefinition {
    pub name: String,
    pub nodes: Vec<Node>,
    pub transitions: Vec<Transition>,
    pub swimlanes: Vec<Swimlane>,
    pub variables: Vec<String>,
}

impl ProcessDefinition {
    pub fn node(&self, name: &str) -> Option<&Node> {
        self.nodes.iter().find(|n| n.name == name)
    }

    pub fn swimlane(&self, name: &str) -> Option<&Swimlane> {
        self.swimlanes.iter().find(|s| s.name == name)
    }

    pub fn start_node(&self) -> Option<&Node> {
        self.nodes.iter().find(|n| n.kind == NodeKind::Start)
    }

    pub fn outgoing<'a>(&'a self, node: &'a str) -> impl Iterator<Item = &'a Transition> + 'a {
        self.transitions.iter().filter(move |t| t.from == node)
    }

    pub fn default_transition(&self, node: &str) -> Option<&Transition> {
        self.transitions.iter().find(|t| t.from == node && t.is_default())
    }

    pub fn named_transition(&self, node: &str, name: &str) -> Option<&Transition> {
        self.transitions
            .iter()
            .find(|t| t.from == node && t.name.as_deref() == Some(name))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Geometry {
    pub x: u32,
    pub y: u32,
    pub width: u32,
    pub height: u32,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct LayoutMetadata {
    pub per_node: BTreeMap<String, Geometry>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum ViolationCode {
    // soundness
    NoStart,
    MultipleStart,
    NoEnd,
    UnreachableNode,
    DeadEnd,
    DanglingTransition,
    UnknownSwimlane,
    DecisionRuleGap,
    ForkJoinMismatch,
    // schema only
    EmptyName,
    DuplicateNode,
    DuplicateSwimlane,
    DuplicateVariable,
    UnknownRole,
    MissingTask,
    UnexpectedTask,
    StartHasIncoming,
    EndHasOutgoing,
    JoinMultipleOutgoing,
    DuplicateTransitionName,
    MultipleDefaultTransitions,
    RulesOnNonDecision,
    InvalidActionEvent,
}

impl ViolationCode {
    pub fn as_str(self) -> &'static str {
        match self {
            ViolationCode::NoStart => "NO_START",
            ViolationCode::MultipleStart => "MULTIPLE_START",
            ViolationCode::NoEnd => "NO_END",
            ViolationCode::UnreachableNode => "UNREACHABLE_NODE",
            ViolationCode::DeadEnd => "DEAD_END",
            ViolationCode::DanglingTransition => "DANGLING_TRANSITION",
            ViolationCode::UnknownSwimlane => "UNKNOWN_SWIMLANE",
            ViolationCode::DecisionRuleGap => "DECISION_RULE_GAP",
            ViolationCode::ForkJoinMismatch => "FORK_JOIN_MISMATCH",
            ViolationCode::EmptyName => "EMPTY_NAME",
            ViolationCode::DuplicateNode => "DUPLICATE_NODE",
            ViolationCode::DuplicateSwimlane => "DUPLICATE_SWIMLANE",
            ViolationCode::DuplicateVariable => "DUPLICATE_VARIABLE",
            ViolationCode::UnknownRole => "UNKNOWN_ROLE",
            ViolationCode::MissingTask => "MISSING_TASK",
            ViolationCode::UnexpectedTask => "UNEXPECTED_TASK",
            ViolationCode::StartHasIncoming => "START_HAS_INCOMING",
            ViolationCode::EndHasOutgoing => "END_HAS_OUTGOING",
            ViolationCode::JoinMultipleOutgoing => "JOIN_MULTIPLE_OUTGOING",
            ViolationCode::DuplicateTransitionName => "DUPLICATE_TRANSITION_NAME",
            ViolationCode::MultipleDefaultTransitions => "MULTIPLE_DEFAULT_TRANSITIONS",
            ViolationCode::RulesOnNonDecision => "RULES_ON_NON_DECISION",
            ViolationCode::InvalidActionEvent => "INVALID_ACTION_EVENT",
        }
    }
}

impl fmt::Display for ViolationCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One broken rule, named by the node or transition it concerns.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    pub code: ViolationCode,
    pub subject: String,
    pub message: String,
}

impl Violation {
    pub fn new(code: ViolationCode, subject: impl Into<String>, message: impl Into<String>) -> Self {
        Violation {
            code,
            subject: subject.into(),
            message: message.into(),
        }
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} ({}): {}", self.code, self.subject, self.message)
    }
}
