use std::collections::{BTreeMap, BTreeSet};

use super::{Assignment, EventKind, NodeKind, ProcessDefinition, Violation, ViolationCode};

/// Role names a `role` swimlane may reference unless configured otherwise.
pub const DEFAULT_ROLES: &[&str] = &["author", "qa", "admin"];

/// Schema check against [`DEFAULT_ROLES`].
pub fn validate_definition(def: &ProcessDefinition) -> Vec<Violation> {
    validate_definition_with_roles(def, DEFAULT_ROLES)
}

/// Returns every structural invariant the definition breaks. An empty list
/// means the definition is well-formed, not that it is sound.
pub fn validate_definition_with_roles(def: &ProcessDefinition, roles: &[&str]) -> Vec<Violation> {
    use ViolationCode::*;
    let mut out = Vec::new();

    if def.name.trim().is_empty() {
        out.push(Violation::new(EmptyName, "process-definition", "definition name is empty"));
    }

    let mut seen = BTreeSet::new();
    for s in &def.swimlanes {
        if !seen.insert(s.name.as_str()) {
            out.push(Violation::new(DuplicateSwimlane, &s.name, "swimlane name used twice"));
        }
        if let Assignment::Role(role) = &s.assignment {
            if !roles.contains(&role.as_str()) {
                out.push(Violation::new(
                    UnknownRole,
                    &s.name,
                    format!("role '{role}' is not one of {roles:?}"),
                ));
            }
        }
    }

    let mut seen = BTreeSet::new();
    for v in &def.variables {
        if !seen.insert(v.as_str()) {
            out.push(Violation::new(DuplicateVariable, v, "variable declared twice"));
        }
    }

    let mut seen = BTreeSet::new();
    for n in &def.nodes {
        if n.name.is_empty() {
            out.push(Violation::new(EmptyName, "node", "node name is empty"));
        } else if !seen.insert(n.name.as_str()) {
            out.push(Violation::new(DuplicateNode, &n.name, "node name used twice"));
        }
    }

    let starts: Vec<_> = def.nodes.iter().filter(|n| n.kind == NodeKind::Start).collect();
    match starts.len() {
        0 => out.push(Violation::new(NoStart, &def.name, "definition has no start-state")),
        1 => {}
        _ => {
            for s in &starts[1..] {
                out.push(Violation::new(MultipleStart, &s.name, "second start-state"));
            }
        }
    }

    for n in &def.nodes {
        match (&n.task, n.kind.is_wait_state()) {
            (None, true) => out.push(Violation::new(MissingTask, &n.name, format!("{} node needs a task", n.kind))),
            (Some(_), false) => out.push(Violation::new(UnexpectedTask, &n.name, format!("{} node cannot carry a task", n.kind))),
            (Some(task), true) => {
                if def.swimlane(&task.swimlane).is_none() {
                    out.push(Violation::new(
                        UnknownSwimlane,
                        &n.name,
                        format!("task '{}' uses unknown swimlane '{}'", task.task_name, task.swimlane),
                    ));
                }
            }
            (None, false) => {}
        }
        if n.kind != NodeKind::Decision && !n.decision_rules.is_empty() {
            out.push(Violation::new(RulesOnNonDecision, &n.name, "only decision nodes have rules"));
        }
        for a in &n.actions {
            if a.event == EventKind::TransitionTaken {
                out.push(Violation::new(
                    InvalidActionEvent,
                    &n.name,
                    "transition-taken actions belong on transitions",
                ));
            }
        }
    }

    let known: BTreeSet<&str> = def.nodes.iter().map(|n| n.name.as_str()).collect();
    let mut per_node: BTreeMap<&str, (BTreeSet<&str>, usize)> = BTreeMap::new();
    for t in &def.transitions {
        for end in [&t.from, &t.to] {
            if !known.contains(end.as_str()) {
                out.push(Violation::new(
                    DanglingTransition,
                    t.display_name(),
                    format!("transition refers to unknown node '{end}'"),
                ));
            }
        }
        let entry = per_node.entry(t.from.as_str()).or_default();
        match &t.name {
            Some(name) => {
                if !entry.0.insert(name.as_str()) {
                    out.push(Violation::new(
                        DuplicateTransitionName,
                        t.display_name(),
                        format!("'{}' has two transitions named '{name}'", t.from),
                    ));
                }
            }
            None => {
                entry.1 += 1;
                if entry.1 == 2 {
                    out.push(Violation::new(
                        MultipleDefaultTransitions,
                        &t.from,
                        "more than one unnamed transition",
                    ));
                }
            }
        }
        for a in &t.actions {
            if a.event != EventKind::TransitionTaken {
                out.push(Violation::new(
                    InvalidActionEvent,
                    t.display_name(),
                    "transitions only carry transition-taken actions",
                ));
            }
        }
    }

    for n in &def.nodes {
        let outgoing = def.outgoing(&n.name).count();
        match n.kind {
            NodeKind::Start => {
                if def.transitions.iter().any(|t| t.to == n.name) {
                    out.push(Violation::new(StartHasIncoming, &n.name, "start-state has incoming transitions"));
                }
            }
            NodeKind::End if outgoing > 0 => {
                out.push(Violation::new(EndHasOutgoing, &n.name, "end-state has outgoing transitions"));
            }
            NodeKind::Join if outgoing > 1 => {
                out.push(Violation::new(JoinMultipleOutgoing, &n.name, "join has more than one outgoing transition"));
            }
            NodeKind::Decision => {
                for r in &n.decision_rules {
                    if def.named_transition(&n.name, &r.transition).is_none() {
                        out.push(Violation::new(
                            DecisionRuleGap,
                            &n.name,
                            format!("rule selects '{}', which is not an outgoing transition", r.transition),
                        ));
                    }
                }
            }
            _ => {}
        }
    }
    out
}
