//! Workflow execution: versioned deployments, instances, tokens and task
//! lists, persisted as a journal of commands.
//!
//! Every mutating call is executed against a copy of the affected state,
//! appended to the journal, and only then committed. Replaying the journal
//! runs the same code with the recorded timestamps and role resolutions, so
//! a recovered engine is byte-identical to the one that wrote it.

mod exec;
mod graph;
mod model;

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::path::{Path, PathBuf};
use std::sync::{Arc, RwLock};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use serde_json::json;
use thiserror::Error;

pub use exec::{fire_event, render_template, ExecutedEffect, Site};
pub use graph::{auto_layout, AUTO_HEIGHT, AUTO_WIDTH};
pub use model::{
    AdminAction, Caller, DeploymentRecord, DeploymentSummary, GraphNode, GraphState, GraphTransition, InstanceState,
    ProcessInstance, TaskInstance, TaskState, Token, TokenStatus, TypedValue,
};

use crate::journal::{Journal, JournalError, Record};
use crate::procdef::{
    check_soundness, parse_archive, validate_definition_with_roles, LayoutMetadata, ProcdefError, ProcessDefinition,
    Violation, DEFAULT_ROLES,
};
use exec::{Counters, RoleAssignment, Roles, Txn};

#[derive(Debug, Error)]
pub enum EngineError {
    #[error("unknown definition '{0}'")]
    UnknownDefinition(String),
    #[error("unknown instance '{0}'")]
    UnknownInstance(String),
    #[error("unknown task '{0}'")]
    UnknownTask(String),
    #[error("variable '{0}' has never been set")]
    UnknownVariable(String),
    #[error("no task or instance '{0}'")]
    UnknownReferent(String),
    #[error("definition failed validation")]
    ValidationFailed(Vec<Violation>),
    #[error("definition is not sound")]
    UnsoundDefinition(Vec<Violation>),
    #[error(transparent)]
    Archive(#[from] ProcdefError),
    #[error("task '{0}' is not open")]
    TaskNotOpen(String),
    #[error("actor '{0}' may not act on this task or instance")]
    ForbiddenActor(String),
    #[error("node '{node}' has no outgoing transition '{name}'")]
    UnknownTransition { node: String, name: String },
    #[error("node '{0}' has no default transition")]
    NoDefaultTransition(String),
    #[error("instance '{0}' is not running")]
    InstanceNotRunning(String),
    #[error("instance '{0}' has no open task")]
    NoOpenTask(String),
    #[error("no actor holds role '{0}'")]
    NoActorForRole(String),
    #[error("invalid value for '{0}': floats must be finite")]
    InvalidValue(String),
    #[error("automatic execution did not come to rest (last at node '{0}')")]
    Livelock(String),
    #[error("journal replay diverged: {0}")]
    ReplayDiverged(String),
    #[error(transparent)]
    Journal(#[from] JournalError),
}

impl EngineError {
    pub fn code(&self) -> &'static str {
        match self {
            EngineError::UnknownDefinition(_) => "UNKNOWN_DEFINITION",
            EngineError::UnknownInstance(_) => "UNKNOWN_INSTANCE",
            EngineError::UnknownTask(_) => "UNKNOWN_TASK",
            EngineError::UnknownVariable(_) => "UNKNOWN_VARIABLE",
            EngineError::UnknownReferent(_) => "UNKNOWN_REFERENT",
            EngineError::ValidationFailed(_) => "VALIDATION_FAILED",
            EngineError::UnsoundDefinition(_) => "UNSOUND_DEFINITION",
            EngineError::Archive(e) => e.code(),
            EngineError::TaskNotOpen(_) => "TASK_NOT_OPEN",
            EngineError::ForbiddenActor(_) => "FORBIDDEN_ACTOR",
            EngineError::UnknownTransition { .. } => "UNKNOWN_TRANSITION",
            EngineError::NoDefaultTransition(_) => "NO_DEFAULT_TRANSITION",
            EngineError::InstanceNotRunning(_) => "INSTANCE_NOT_RUNNING",
            EngineError::NoOpenTask(_) => "NO_OPEN_TASK",
            EngineError::NoActorForRole(_) => "NO_ACTOR_FOR_ROLE",
            EngineError::InvalidValue(_) => "INVALID_VALUE",
            EngineError::Livelock(_) => "LIVELOCK",
            EngineError::ReplayDiverged(_) => "REPLAY_DIVERGED",
            EngineError::Journal(_) => "STORAGE_ERROR",
        }
    }

    /// Violations carried by a refused deployment.
    pub fn violations(&self) -> &[Violation] {
        match self {
            EngineError::ValidationFailed(v) | EngineError::UnsoundDefinition(v) => v,
            _ => &[],
        }
    }
}

pub type Clock = Arc<dyn Fn() -> DateTime<Utc> + Send + Sync>;

pub fn system_clock() -> Clock {
    Arc::new(|| {
        let now = Utc::now();
        DateTime::from_timestamp_millis(now.timestamp_millis()).unwrap_or(now)
    })
}

#[derive(Clone)]
pub struct EngineOptions {
    /// Actors per role, used when a role swimlane needs an actor.
    pub directory: BTreeMap<String, BTreeSet<String>>,
    /// Role names a definition's swimlanes may reference.
    pub roles: Vec<String>,
    /// Write a snapshot after this many journal records (0 disables).
    pub snapshot_every: u64,
    pub fsync: bool,
    pub clock: Clock,
}

impl Default for EngineOptions {
    fn default() -> Self {
        EngineOptions {
            directory: BTreeMap::new(),
            roles: DEFAULT_ROLES.iter().map(|r| r.to_string()).collect(),
            snapshot_every: 1000,
            fsync: true,
            clock: system_clock(),
        }
    }
}

impl EngineOptions {
    pub fn with_actor(mut self, role: &str, actor: &str) -> Self {
        self.directory.entry(role.to_owned()).or_default().insert(actor.to_owned());
        self
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
struct State {
    counters: Counters,
    deployments: BTreeMap<u64, DeploymentRecord>,
    instances: BTreeMap<u64, ProcessInstance>,
    tasks: BTreeMap<u64, TaskInstance>,
}

impl State {
    fn instance(&self, id: &str) -> Result<&ProcessInstance, EngineError> {
        parse_id("inst-", id)
            .and_then(|n| self.instances.get(&n))
            .ok_or_else(|| EngineError::UnknownInstance(id.to_owned()))
    }

    fn deployment(&self, id: &str) -> Option<&DeploymentRecord> {
        parse_id("def-", id).and_then(|n| self.deployments.get(&n))
    }
}

fn parse_id(prefix: &str, id: &str) -> Option<u64> {
    id.strip_prefix(prefix)?.parse().ok()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", content = "payload", rename_all = "kebab-case")]
enum Command {
    #[serde(rename_all = "camelCase")]
    Deploy {
        definition: ProcessDefinition,
        layout: Option<LayoutMetadata>,
        #[serde(with = "crate::b64::option", default)]
        image: Option<Vec<u8>>,
    },
    #[serde(rename_all = "camelCase")]
    Start {
        definition_id: String,
        initiator: String,
        variables: BTreeMap<String, TypedValue>,
        assignments: Vec<RoleAssignment>,
    },
    #[serde(rename_all = "camelCase")]
    Complete {
        task_id: String,
        transition: Option<String>,
        variables: BTreeMap<String, TypedValue>,
        actor: String,
        admin: bool,
        assignments: Vec<RoleAssignment>,
    },
    #[serde(rename_all = "camelCase")]
    SetVariable {
        instance_id: String,
        name: String,
        value: TypedValue,
    },
    #[serde(rename_all = "camelCase")]
    Admin {
        instance_id: String,
        action: AdminAction,
        actor: String,
        admin: bool,
        assignments: Vec<RoleAssignment>,
    },
}

impl Command {
    fn assignments_mut(&mut self) -> Option<&mut Vec<RoleAssignment>> {
        match self {
            Command::Start { assignments, .. }
            | Command::Complete { assignments, .. }
            | Command::Admin { assignments, .. } => Some(assignments),
            _ => None,
        }
    }
}

/// The effect of one command, applied to the state only after it is journaled.
#[derive(Default)]
struct Change {
    counters: Counters,
    deployment: Option<DeploymentRecord>,
    instance: Option<ProcessInstance>,
    tasks: BTreeMap<u64, TaskInstance>,
    effects: Vec<ExecutedEffect>,
    assignments: Vec<RoleAssignment>,
    /// Task id produced for the caller, e.g. the start task.
    created_task: Option<u64>,
}

struct Inner {
    state: State,
    journal: Journal,
}

pub struct Engine {
    inner: RwLock<Inner>,
    options: EngineOptions,
}

fn check_values(vars: &BTreeMap<String, TypedValue>) -> Result<(), EngineError> {
    for (name, v) in vars {
        if let TypedValue::Float(f) = v {
            if !f.is_finite() {
                return Err(EngineError::InvalidValue(name.clone()));
            }
        }
    }
    Ok(())
}

impl Engine {
    /// Opens the engine stored in `dir`, replaying its journal.
    pub fn open(dir: &Path, options: EngineOptions) -> Result<Engine, EngineError> {
        let (mut journal, recovered) = Journal::open(dir)?;
        journal.set_sync(options.fsync);
        let mut state = match recovered.snapshot {
            Some((seq, value)) => serde_json::from_value(value)
                .map_err(|e| EngineError::ReplayDiverged(format!("snapshot {seq}: {e}")))?,
            None => State::default(),
        };
        for record in &recovered.records {
            replay(&mut state, record, &options)?;
        }
        Ok(Engine {
            inner: RwLock::new(Inner { state, journal }),
            options,
        })
    }

    pub fn journal_dir(&self) -> PathBuf {
        self.read().journal.dir().to_path_buf()
    }

    fn read(&self) -> std::sync::RwLockReadGuard<'_, Inner> {
        self.inner.read().expect("engine lock poisoned")
    }

    fn write(&self) -> std::sync::RwLockWriteGuard<'_, Inner> {
        self.inner.write().expect("engine lock poisoned")
    }

    fn lookup_role(&self) -> impl Fn(&str) -> Option<String> + '_ {
        |role| self.options.directory.get(role).and_then(|a| a.iter().next().cloned())
    }

    /// Executes, journals and commits one command.
    fn submit(&self, mut cmd: Command) -> Result<Change, EngineError> {
        let ts = (self.options.clock)();
        let mut inner = self.write();
        let lookup = self.lookup_role();
        let change = execute(&inner.state, &cmd, ts, Roles::Live { lookup: &lookup, made: Vec::new() }, &self.options)?;
        if let Some(a) = cmd.assignments_mut() {
            *a = change.assignments.clone();
        }
        let encoded = serde_json::to_value(&cmd).map_err(JournalError::from)?;
        inner.journal.append(ts, encoded["kind"].as_str().unwrap_or_default(), encoded["payload"].clone())?;
        let instance_id = change.instance.as_ref().map(|i| i.instance_id.clone());
        let logged: Vec<String> = change
            .effects
            .iter()
            .filter_map(|e| match e {
                ExecutedEffect::Logged { message } => Some(message.clone()),
                _ => None,
            })
            .collect();
        commit(&mut inner.state, &change);
        for message in logged {
            log::info!("{}: {message}", instance_id.as_deref().unwrap_or("-"));
            if let Err(e) = inner.journal.append(ts, "log", json!({"instanceId": instance_id, "message": message})) {
                log::warn!("could not journal log effect: {e}");
            }
        }
        if self.options.snapshot_every > 0 && inner.journal.records_since_snapshot() >= self.options.snapshot_every {
            let value = serde_json::to_value(&inner.state).map_err(JournalError::from)?;
            if let Err(e) = inner.journal.write_snapshot(&value) {
                log::warn!("snapshot failed: {e}");
            }
        }
        Ok(change)
    }

    /// Writes a snapshot of the current state and returns its sequence number.
    pub fn snapshot(&self) -> Result<u64, EngineError> {
        let mut inner = self.write();
        let value = serde_json::to_value(&inner.state).map_err(JournalError::from)?;
        Ok(inner.journal.write_snapshot(&value)?)
    }

    /// Canonical serialization of the complete engine state.
    pub fn state_bytes(&self) -> Vec<u8> {
        serde_json::to_vec(&self.read().state).expect("state is always serializable")
    }

    pub fn deploy(
        &self,
        definition: ProcessDefinition,
        layout: Option<LayoutMetadata>,
        image: Option<Vec<u8>>,
    ) -> Result<DeploymentRecord, EngineError> {
        let change = self.submit(Command::Deploy {
            definition,
            layout,
            image,
        })?;
        Ok(change.deployment.expect("deploy yields a record"))
    }

    /// Parses a process archive and deploys it.
    pub fn deploy_archive(&self, archive: &[u8]) -> Result<DeploymentRecord, EngineError> {
        let parsed = parse_archive(archive)?;
        self.deploy(parsed.definition, parsed.layout, parsed.image)
    }

    pub fn deployment(&self, definition_id: &str) -> Option<DeploymentRecord> {
        self.read().state.deployment(definition_id).cloned()
    }

    pub fn deployments(&self) -> Vec<DeploymentSummary> {
        self.read().state.deployments.values().map(DeploymentSummary::from).collect()
    }

    /// The highest version of every definition name, sorted by name.
    pub fn latest_definitions(&self) -> Vec<DeploymentRecord> {
        let inner = self.read();
        let mut latest: BTreeMap<&str, &DeploymentRecord> = BTreeMap::new();
        for r in inner.state.deployments.values() {
            match latest.get(r.name.as_str()) {
                Some(cur) if cur.version >= r.version => {}
                _ => {
                    latest.insert(&r.name, r);
                }
            }
        }
        latest.into_values().cloned().collect()
    }

    pub fn start_instance(
        &self,
        definition_id: &str,
        initiator: &str,
        variables: BTreeMap<String, TypedValue>,
    ) -> Result<(ProcessInstance, TaskInstance), EngineError> {
        let change = self.submit(Command::Start {
            definition_id: definition_id.to_owned(),
            initiator: initiator.to_owned(),
            variables,
            assignments: Vec::new(),
        })?;
        let task = change
            .created_task
            .and_then(|n| change.tasks.get(&n).cloned())
            .expect("start node always carries a task");
        Ok((change.instance.expect("start yields an instance"), task))
    }

    /// Open tasks assigned to `actor`, newest first.
    pub fn find_task_instances(&self, actor: &str) -> Vec<TaskInstance> {
        self.read()
            .state
            .tasks
            .values()
            .rev()
            .filter(|t| t.state == TaskState::Open && t.actor_id == actor)
            .cloned()
            .collect()
    }

    pub fn task(&self, task_id: &str) -> Option<TaskInstance> {
        parse_id("task-", task_id).and_then(|n| self.read().state.tasks.get(&n).cloned())
    }

    /// Every task of one instance in creation order.
    pub fn instance_tasks(&self, instance_id: &str) -> Vec<TaskInstance> {
        self.read()
            .state
            .tasks
            .values()
            .filter(|t| t.instance_id == instance_id)
            .cloned()
            .collect()
    }

    pub fn instance(&self, instance_id: &str) -> Result<ProcessInstance, EngineError> {
        self.read().state.instance(instance_id).cloned()
    }

    pub fn instances(&self) -> Vec<ProcessInstance> {
        self.read().state.instances.values().cloned().collect()
    }

    pub fn complete_task(
        &self,
        task_id: &str,
        transition: Option<&str>,
        variables: BTreeMap<String, TypedValue>,
        caller: &Caller,
    ) -> Result<ProcessInstance, EngineError> {
        let change = self.submit(Command::Complete {
            task_id: task_id.to_owned(),
            transition: transition.map(str::to_owned),
            variables,
            actor: caller.actor.clone(),
            admin: caller.admin,
            assignments: Vec::new(),
        })?;
        Ok(change.instance.expect("completion touches an instance"))
    }

    pub fn set_variable(&self, instance_id: &str, name: &str, value: TypedValue) -> Result<(), EngineError> {
        self.submit(Command::SetVariable {
            instance_id: instance_id.to_owned(),
            name: name.to_owned(),
            value,
        })?;
        Ok(())
    }

    pub fn get_variable(&self, instance_id: &str, name: &str) -> Result<TypedValue, EngineError> {
        let inner = self.read();
        inner
            .state
            .instance(instance_id)?
            .variables
            .get(name)
            .cloned()
            .ok_or_else(|| EngineError::UnknownVariable(name.to_owned()))
    }

    pub fn variables(&self, instance_id: &str) -> Result<BTreeMap<String, TypedValue>, EngineError> {
        Ok(self.read().state.instance(instance_id)?.variables.clone())
    }

    pub fn administer_instance(
        &self,
        instance_id: &str,
        action: AdminAction,
        caller: &Caller,
    ) -> Result<ProcessInstance, EngineError> {
        let change = self.submit(Command::Admin {
            instance_id: instance_id.to_owned(),
            action,
            actor: caller.actor.clone(),
            admin: caller.admin,
            assignments: Vec::new(),
        })?;
        Ok(change.instance.expect("admin action touches an instance"))
    }

    /// Graph of the instance's own definition version. `referent` is a task
    /// id or an instance id.
    pub fn render_graph_state(&self, referent: &str) -> Result<GraphState, EngineError> {
        let inner = self.read();
        let state = &inner.state;
        let unknown = || EngineError::UnknownReferent(referent.to_owned());
        let instance = if let Some(n) = parse_id("task-", referent) {
            let task = state.tasks.get(&n).ok_or_else(unknown)?;
            state.instance(&task.instance_id).map_err(|_| unknown())?
        } else {
            state.instance(referent).map_err(|_| unknown())?
        };
        let record = state.deployment(&instance.definition_id).ok_or_else(unknown)?;
        Ok(graph::graph_state(record, instance.current_nodes()))
    }
}

fn replay(state: &mut State, record: &Record, options: &EngineOptions) -> Result<(), EngineError> {
    if record.kind == "log" {
        return Ok(());
    }
    let cmd: Command = serde_json::from_value(json!({"kind": record.kind, "payload": record.payload}))
        .map_err(|e| EngineError::ReplayDiverged(format!("record {}: {e}", record.seq)))?;
    let recorded = match &cmd {
        Command::Start { assignments, .. } | Command::Complete { assignments, .. } | Command::Admin { assignments, .. } => {
            assignments.iter().cloned().collect()
        }
        _ => VecDeque::new(),
    };
    let change = execute(state, &cmd, record.ts, Roles::Replay(recorded), options)
        .map_err(|e| EngineError::ReplayDiverged(format!("record {}: {e}", record.seq)))?;
    commit(state, &change);
    Ok(())
}

fn commit(state: &mut State, change: &Change) {
    state.counters = change.counters.clone();
    if let Some(d) = &change.deployment {
        if let Some(n) = parse_id("def-", &d.definition_id) {
            state.deployments.insert(n, d.clone());
        }
    }
    if let Some(i) = &change.instance {
        if let Some(n) = parse_id("inst-", &i.instance_id) {
            state.instances.insert(n, i.clone());
        }
    }
    for (n, t) in &change.tasks {
        state.tasks.insert(*n, t.clone());
    }
}

fn execute(
    state: &State,
    cmd: &Command,
    ts: DateTime<Utc>,
    roles: Roles<'_>,
    options: &EngineOptions,
) -> Result<Change, EngineError> {
    match cmd {
        Command::Deploy {
            definition,
            layout,
            image,
        } => {
            let role_names: Vec<&str> = options.roles.iter().map(String::as_str).collect();
            let violations = validate_definition_with_roles(definition, &role_names);
            if !violations.is_empty() {
                return Err(EngineError::ValidationFailed(violations));
            }
            let report = check_soundness(definition);
            if !report.sound {
                return Err(EngineError::UnsoundDefinition(report.violations));
            }
            if let Some(layout) = layout {
                if let Some(name) = layout.per_node.keys().find(|n| definition.node(n).is_none()) {
                    return Err(ProcdefError::SchemaViolation {
                        path: "/layout".into(),
                        message: format!("layout places unknown node '{name}'"),
                    }
                    .into());
                }
            }
            let version = state
                .deployments
                .values()
                .filter(|d| d.name == definition.name)
                .map(|d| d.version)
                .max()
                .unwrap_or(0)
                + 1;
            let mut counters = state.counters.clone();
            counters.definitions += 1;
            let record = DeploymentRecord {
                definition_id: format!("def-{}", counters.definitions),
                name: definition.name.clone(),
                version,
                deployed_at: ts,
                definition: definition.clone(),
                layout: layout.clone(),
                image_bytes: image.clone(),
            };
            Ok(Change {
                counters,
                deployment: Some(record),
                ..Change::default()
            })
        }
        Command::Start {
            definition_id,
            initiator,
            variables,
            ..
        } => {
            check_values(variables)?;
            let record = state
                .deployment(definition_id)
                .ok_or_else(|| EngineError::UnknownDefinition(definition_id.clone()))?;
            let def = &record.definition;
            let start = def
                .start_node()
                .ok_or_else(|| EngineError::UnknownDefinition(definition_id.clone()))?;
            let mut counters = state.counters.clone();
            counters.instances += 1;
            let instance = ProcessInstance {
                instance_id: format!("inst-{}", counters.instances),
                definition_id: definition_id.clone(),
                state: InstanceState::Running,
                initiator: initiator.clone(),
                swimlane_bindings: BTreeMap::new(),
                variables: variables.clone(),
                tokens: Vec::new(),
                created_at: ts,
                ended_at: None,
            };
            let mut txn = Txn::new(def, instance, counters, ts, roles);
            let root = txn.new_token(&start.name, None);
            txn.enter(&root, &start.name)?;
            let created_task = txn.tasks.keys().next().copied();
            Ok(finish_txn(state, txn, created_task))
        }
        Command::Complete {
            task_id,
            transition,
            variables,
            actor,
            admin,
            ..
        } => {
            check_values(variables)?;
            let n = parse_id("task-", task_id).ok_or_else(|| EngineError::UnknownTask(task_id.clone()))?;
            let task = state.tasks.get(&n).ok_or_else(|| EngineError::UnknownTask(task_id.clone()))?;
            if task.state != TaskState::Open {
                return Err(EngineError::TaskNotOpen(task_id.clone()));
            }
            if !admin && task.actor_id != *actor {
                return Err(EngineError::ForbiddenActor(actor.clone()));
            }
            complete_in(state, n, task, transition.as_deref(), variables, ts, roles)
        }
        Command::SetVariable {
            instance_id,
            name,
            value,
        } => {
            let mut single = BTreeMap::new();
            single.insert(name.clone(), value.clone());
            check_values(&single)?;
            let mut instance = state.instance(instance_id)?.clone();
            instance.variables.insert(name.clone(), value.clone());
            Ok(Change {
                counters: state.counters.clone(),
                instance: Some(instance),
                ..Change::default()
            })
        }
        Command::Admin {
            instance_id,
            action,
            actor,
            admin,
            ..
        } => {
            if !admin {
                return Err(EngineError::ForbiddenActor(actor.clone()));
            }
            let instance = state.instance(instance_id)?;
            if instance.state != InstanceState::Running {
                return Err(EngineError::InstanceNotRunning(instance_id.clone()));
            }
            match action {
                AdminAction::Stop => {
                    let record = state
                        .deployment(&instance.definition_id)
                        .ok_or_else(|| EngineError::UnknownDefinition(instance.definition_id.clone()))?;
                    let mut txn = Txn::new(&record.definition, instance.clone(), state.counters.clone(), ts, roles);
                    txn.finish(InstanceState::Stopped);
                    Ok(finish_txn(state, txn, None))
                }
                AdminAction::Advance => {
                    let (n, task) = state
                        .tasks
                        .iter()
                        .find(|(_, t)| t.instance_id == *instance_id && t.state == TaskState::Open)
                        .ok_or_else(|| EngineError::NoOpenTask(instance_id.clone()))?;
                    complete_in(state, *n, task, None, &BTreeMap::new(), ts, roles)
                }
            }
        }
    }
}

fn complete_in(
    state: &State,
    n: u64,
    task: &TaskInstance,
    transition: Option<&str>,
    variables: &BTreeMap<String, TypedValue>,
    ts: DateTime<Utc>,
    roles: Roles<'_>,
) -> Result<Change, EngineError> {
    let instance = state.instance(&task.instance_id)?;
    if instance.state != InstanceState::Running {
        return Err(EngineError::InstanceNotRunning(task.instance_id.clone()));
    }
    let record = state
        .deployment(&instance.definition_id)
        .ok_or_else(|| EngineError::UnknownDefinition(instance.definition_id.clone()))?;
    let def = &record.definition;
    let chosen = match transition {
        Some(name) => def
            .named_transition(&task.node_name, name)
            .ok_or_else(|| EngineError::UnknownTransition {
                node: task.node_name.clone(),
                name: name.to_owned(),
            })?,
        None => def
            .default_transition(&task.node_name)
            .ok_or_else(|| EngineError::NoDefaultTransition(task.node_name.clone()))?,
    };
    let mut txn = Txn::new(def, instance.clone(), state.counters.clone(), ts, roles);
    txn.inst.variables.extend(variables.iter().map(|(k, v)| (k.clone(), v.clone())));
    txn.close_task(n, task);
    txn.leave(&task.token_id, chosen)?;
    Ok(finish_txn(state, txn, None))
}

/// Turns a finished transaction into a change, closing tasks left open in
/// the committed table when the instance is no longer running.
fn finish_txn(state: &State, mut txn: Txn<'_>, created_task: Option<u64>) -> Change {
    if txn.inst.state != InstanceState::Running {
        for (n, t) in &state.tasks {
            if t.instance_id == txn.inst.instance_id && t.state == TaskState::Open && !txn.tasks.contains_key(n) {
                txn.close_task(*n, t);
            }
        }
    }
    Change {
        counters: txn.counters,
        deployment: None,
        instance: Some(txn.inst),
        tasks: txn.tasks,
        effects: txn.effects,
        assignments: txn.roles.into_made(),
        created_task,
    }
}
