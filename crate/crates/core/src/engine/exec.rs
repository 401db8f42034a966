//! Token movement over one instance, run inside a transaction so a failed
//! operation leaves no trace.

use std::collections::{BTreeMap, VecDeque};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use super::model::{InstanceState, ProcessInstance, TaskInstance, TaskState, Token, TokenStatus, TypedValue};
use super::EngineError;
use crate::procdef::{Assignment, Effect, EventKind, NodeKind, ProcessDefinition, Transition};

/// Automatic steps allowed in one operation before a decision cycle is
/// declared a livelock.
const STEP_LIMIT: usize = 10_000;

/// Where an event fires.
#[derive(Debug, Clone, Copy)]
pub enum Site<'a> {
    Node(&'a str),
    Transition(&'a Transition),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "camelCase")]
pub enum ExecutedEffect {
    VariableSet { name: String, value: TypedValue },
    Logged { message: String },
}

/// Runs the action bindings registered for `event` at `site`, in declaration
/// order. Variable writes are visible to later bindings immediately.
pub fn fire_event(
    def: &ProcessDefinition,
    instance: &mut ProcessInstance,
    event: EventKind,
    site: Site<'_>,
) -> Vec<ExecutedEffect> {
    let bindings = match site {
        Site::Node(name) => def.node(name).map(|n| n.actions.as_slice()).unwrap_or(&[]),
        Site::Transition(t) => t.actions.as_slice(),
    };
    let mut executed = Vec::new();
    for binding in bindings.iter().filter(|b| b.event == event) {
        match &binding.effect {
            Effect::SetVariable { name, value } => {
                let value = TypedValue::String(value.clone());
                instance.variables.insert(name.clone(), value.clone());
                executed.push(ExecutedEffect::VariableSet {
                    name: name.clone(),
                    value,
                });
            }
            Effect::Log { message } => executed.push(ExecutedEffect::Logged {
                message: render_template(message, &instance.variables),
            }),
        }
    }
    executed
}

/// Replaces `${name}` with the variable's text; unknown names stay verbatim.
pub fn render_template(template: &str, vars: &BTreeMap<String, TypedValue>) -> String {
    let mut out = String::with_capacity(template.len());
    let mut rest = template;
    while let Some(start) = rest.find("${") {
        out.push_str(&rest[..start]);
        let after = &rest[start + 2..];
        match after.find('}') {
            Some(end) => {
                let name = &after[..end];
                match vars.get(name) {
                    Some(v) => out.push_str(&v.render()),
                    None => out.push_str(&rest[start..start + 3 + end]),
                }
                rest = &after[end + 1..];
            }
            None => {
                out.push_str(&rest[start..]);
                rest = "";
            }
        }
    }
    out.push_str(rest);
    out
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub(crate) struct Counters {
    pub definitions: u64,
    pub instances: u64,
    pub tokens: u64,
    pub tasks: u64,
}

/// A role resolution made while executing, kept so replay is independent of
/// the user directory.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub(crate) struct RoleAssignment {
    pub role: String,
    pub actor: String,
}

pub(crate) enum Roles<'a> {
    Live {
        lookup: &'a dyn Fn(&str) -> Option<String>,
        made: Vec<RoleAssignment>,
    },
    Replay(VecDeque<RoleAssignment>),
}

impl Roles<'_> {
    fn resolve(&mut self, role: &str) -> Result<String, EngineError> {
        match self {
            Roles::Live { lookup, made } => {
                let actor = lookup(role).ok_or_else(|| EngineError::NoActorForRole(role.to_owned()))?;
                made.push(RoleAssignment {
                    role: role.to_owned(),
                    actor: actor.clone(),
                });
                Ok(actor)
            }
            Roles::Replay(queue) => match queue.pop_front() {
                Some(a) if a.role == role => Ok(a.actor),
                _ => Err(EngineError::ReplayDiverged(format!("unexpected resolution of role '{role}'"))),
            },
        }
    }

    pub fn into_made(self) -> Vec<RoleAssignment> {
        match self {
            Roles::Live { made, .. } => made,
            Roles::Replay(_) => Vec::new(),
        }
    }
}

pub(crate) struct Txn<'a> {
    pub def: &'a ProcessDefinition,
    pub inst: ProcessInstance,
    /// Tasks created or changed by this transaction.
    pub tasks: BTreeMap<u64, TaskInstance>,
    pub counters: Counters,
    pub ts: DateTime<Utc>,
    pub roles: Roles<'a>,
    pub effects: Vec<ExecutedEffect>,
    queue: VecDeque<(String, String)>,
}

impl<'a> Txn<'a> {
    pub fn new(def: &'a ProcessDefinition, inst: ProcessInstance, counters: Counters, ts: DateTime<Utc>, roles: Roles<'a>) -> Self {
        Txn {
            def,
            inst,
            tasks: BTreeMap::new(),
            counters,
            ts,
            roles,
            effects: Vec::new(),
            queue: VecDeque::new(),
        }
    }

    fn fire(&mut self, event: EventKind, site: Site<'_>) {
        let effects = fire_event(self.def, &mut self.inst, event, site);
        self.effects.extend(effects);
    }

    pub fn new_token(&mut self, node: &str, parent: Option<String>) -> String {
        self.counters.tokens += 1;
        let token_id = format!("tok-{}", self.counters.tokens);
        self.inst.tokens.push(Token {
            token_id: token_id.clone(),
            current_node: node.to_owned(),
            parent,
            status: TokenStatus::Active,
        });
        token_id
    }

    /// Moves `token` out of its node along `transition` and runs until every
    /// token rests.
    pub fn leave(&mut self, token: &str, transition: &Transition) -> Result<(), EngineError> {
        self.fire(EventKind::NodeLeave, Site::Node(&transition.from));
        self.take(token, transition);
        self.run()
    }

    fn take(&mut self, token: &str, transition: &Transition) {
        self.fire(EventKind::TransitionTaken, Site::Transition(transition));
        if let Some(t) = self.inst.token_mut(token) {
            t.current_node = transition.to.clone();
        }
        self.queue.push_back((token.to_owned(), transition.to.clone()));
    }

    pub fn enter(&mut self, token: &str, node: &str) -> Result<(), EngineError> {
        self.queue.push_back((token.to_owned(), node.to_owned()));
        self.run()
    }

    fn run(&mut self) -> Result<(), EngineError> {
        let mut steps = 0usize;
        while let Some((token, node)) = self.queue.pop_front() {
            steps += 1;
            if steps > STEP_LIMIT {
                return Err(EngineError::Livelock(node));
            }
            self.arrive(&token, &node)?;
        }
        Ok(())
    }

    fn arrive(&mut self, token: &str, node_name: &str) -> Result<(), EngineError> {
        let def = self.def;
        let node = def
            .node(node_name)
            .ok_or_else(|| EngineError::ReplayDiverged(format!("node '{node_name}' missing from definition")))?;
        self.fire(EventKind::NodeEnter, Site::Node(node_name));
        match node.kind {
            NodeKind::Start | NodeKind::Task => self.create_task(token, node_name),
            NodeKind::End => {
                let is_root = self.inst.token(token).is_some_and(|t| t.parent.is_none());
                if let Some(t) = self.inst.token_mut(token) {
                    t.status = TokenStatus::Ended;
                }
                if is_root {
                    self.finish(InstanceState::Ended);
                }
                Ok(())
            }
            NodeKind::Decision => {
                let chosen = node
                    .decision_rules
                    .iter()
                    .find(|r| self.inst.variables.get(&r.variable).is_some_and(|v| v.render() == r.equals))
                    .and_then(|r| def.named_transition(node_name, &r.transition))
                    .or_else(|| def.default_transition(node_name));
                // Without a match or default the token stalls here.
                if let Some(t) = chosen {
                    self.fire(EventKind::NodeLeave, Site::Node(node_name));
                    self.take(token, t);
                }
                Ok(())
            }
            NodeKind::Fork => {
                if let Some(t) = self.inst.token_mut(token) {
                    t.status = TokenStatus::Forked;
                }
                self.fire(EventKind::NodeLeave, Site::Node(node_name));
                for t in def.outgoing(node_name) {
                    let child = self.new_token(node_name, Some(token.to_owned()));
                    self.take(&child, t);
                }
                Ok(())
            }
            NodeKind::Join => {
                let parent = self.inst.token(token).and_then(|t| t.parent.clone());
                let Some(parent) = parent else {
                    // A root token has nothing to wait for; it stays put.
                    return Ok(());
                };
                if let Some(t) = self.inst.token_mut(token) {
                    t.status = TokenStatus::AtJoin;
                }
                let siblings: Vec<&Token> = self
                    .inst
                    .tokens
                    .iter()
                    .filter(|t| t.parent.as_deref() == Some(parent.as_str()) && t.status != TokenStatus::Merged)
                    .collect();
                let complete = siblings
                    .iter()
                    .all(|t| t.status == TokenStatus::AtJoin && t.current_node == node_name);
                if !complete {
                    return Ok(());
                }
                for t in self.inst.tokens.iter_mut() {
                    if t.parent.as_deref() == Some(parent.as_str()) && t.status == TokenStatus::AtJoin {
                        t.status = TokenStatus::Merged;
                    }
                }
                if let Some(p) = self.inst.token_mut(&parent) {
                    p.status = TokenStatus::Active;
                    p.current_node = node_name.to_owned();
                }
                if let Some(t) = def.outgoing(node_name).next() {
                    self.fire(EventKind::NodeLeave, Site::Node(node_name));
                    self.take(&parent, t);
                }
                Ok(())
            }
        }
    }

    fn create_task(&mut self, token: &str, node_name: &str) -> Result<(), EngineError> {
        let Some(spec) = self.def.node(node_name).and_then(|n| n.task.as_ref()) else {
            return Ok(());
        };
        let actor = match self.inst.swimlane_bindings.get(&spec.swimlane) {
            Some(a) => a.clone(),
            None => {
                let lane = self
                    .def
                    .swimlane(&spec.swimlane)
                    .ok_or_else(|| EngineError::ReplayDiverged(format!("swimlane '{}' missing", spec.swimlane)))?;
                let actor = match &lane.assignment {
                    Assignment::Initiator => self.inst.initiator.clone(),
                    Assignment::FixedActor(a) => a.clone(),
                    Assignment::Role(role) => self.roles.resolve(role)?,
                };
                self.inst.swimlane_bindings.insert(spec.swimlane.clone(), actor.clone());
                actor
            }
        };
        self.counters.tasks += 1;
        let n = self.counters.tasks;
        self.tasks.insert(
            n,
            TaskInstance {
                task_instance_id: format!("task-{n}"),
                instance_id: self.inst.instance_id.clone(),
                token_id: token.to_owned(),
                node_name: node_name.to_owned(),
                task_name: spec.task_name.clone(),
                swimlane: spec.swimlane.clone(),
                actor_id: actor,
                state: TaskState::Open,
                created_at: self.ts,
                completed_at: None,
            },
        );
        Ok(())
    }

    pub fn close_task(&mut self, n: u64, task: &TaskInstance) {
        let mut task = self.tasks.get(&n).cloned().unwrap_or_else(|| task.clone());
        task.state = TaskState::Completed;
        task.completed_at = Some(self.ts);
        self.tasks.insert(n, task);
    }

    /// Ends or stops the instance. Open tasks are closed by the caller, who
    /// can see the committed task table.
    pub fn finish(&mut self, state: InstanceState) {
        self.inst.state = state;
        self.inst.ended_at = Some(self.ts);
        for t in self.inst.tokens.iter_mut() {
            if t.alive() || t.status == TokenStatus::Forked {
                t.status = TokenStatus::Ended;
            }
        }
        for task in self.tasks.values_mut() {
            if task.state == TaskState::Open {
                task.state = TaskState::Completed;
                task.completed_at = Some(self.ts);
            }
        }
    }
}
