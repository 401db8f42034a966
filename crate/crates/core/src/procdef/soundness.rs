//! Static soundness analysis.
//!
//! Execution model checked here (the engine implements the same one):
//!
//! * start and task nodes wait for a human, who may leave along any outgoing
//!   transition;
//! * a decision leaves along the first matching rule or its unnamed default;
//!   without a default, a value matching no rule stalls the token;
//! * a fork parks its token and spawns one child per outgoing transition;
//! * a child reaching a join waits there; once every child of the same parent
//!   waits at the same join, the children are consumed and the parent resumes
//!   from that join;
//! * a token reaching an end node terminates. The instance completes when the
//!   root token terminates.
//!
//! A definition is sound when every node can be visited, and from every
//! reachable state the instance can still complete. Siblings never interact
//! before their join, so this decomposes per token: a fork is *paired* with a
//! join when every child, whatever choices it makes, can only end up waiting
//! at that join and can always still get there. Pairing is computed as a
//! least fixed point, because children may pass through other forks (or, in
//! loops, the same fork) whose pairing is needed first.

use std::collections::{BTreeMap, VecDeque};

use serde::{Deserialize, Serialize};

use super::{NodeKind, ProcessDefinition, Violation, ViolationCode};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SoundnessReport {
    pub sound: bool,
    pub violations: Vec<Violation>,
}

/// What a single token is required to end with.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Goal {
    End,
    Join(usize),
}

struct Graph<'a> {
    def: &'a ProcessDefinition,
    kinds: Vec<NodeKind>,
    /// Targets a token at the node may move to, per the execution model.
    succ: Vec<Vec<usize>>,
    /// Decision nodes that can stall (no default transition).
    stalls: Vec<bool>,
}

impl<'a> Graph<'a> {
    fn name(&self, i: usize) -> &'a str {
        &self.def.nodes[i].name
    }
}

fn reachable(start: usize, succ: &[Vec<usize>]) -> Vec<bool> {
    let mut seen = vec![false; succ.len()];
    let mut queue = VecDeque::from([start]);
    seen[start] = true;
    while let Some(n) = queue.pop_front() {
        for &m in &succ[n] {
            if !seen[m] {
                seen[m] = true;
                queue.push_back(m);
            }
        }
    }
    seen
}

/// Nodes from which some node in `targets` is reachable along `succ`.
fn co_reachable(targets: &[usize], succ: &[Vec<usize>]) -> Vec<bool> {
    let mut pred = vec![Vec::new(); succ.len()];
    for (n, ms) in succ.iter().enumerate() {
        for &m in ms {
            pred[m].push(n);
        }
    }
    let mut seen = vec![false; succ.len()];
    let mut queue: VecDeque<usize> = targets.iter().copied().collect();
    for &t in targets {
        seen[t] = true;
    }
    while let Some(n) = queue.pop_front() {
        for &p in &pred[n] {
            if !seen[p] {
                seen[p] = true;
                queue.push_back(p);
            }
        }
    }
    seen
}

/// Local movement of one token: joins and ends are terminal, a paired fork
/// is a single step to whatever follows its join.
enum Local {
    Terminal(Goal),
    Stuck,
    Next(Vec<usize>),
}

fn local_step(g: &Graph<'_>, n: usize, paired: &BTreeMap<usize, usize>) -> Local {
    match g.kinds[n] {
        NodeKind::End => Local::Terminal(Goal::End),
        NodeKind::Join => Local::Terminal(Goal::Join(n)),
        NodeKind::Fork => match paired.get(&n) {
            Some(&join) if !g.succ[join].is_empty() => Local::Next(g.succ[join].clone()),
            _ => Local::Stuck,
        },
        NodeKind::Decision if g.stalls[n] => Local::Stuck,
        _ if g.succ[n].is_empty() => Local::Stuck,
        _ => Local::Next(g.succ[n].clone()),
    }
}

/// Why a token entering `from` may fail to reach `goal`.
#[derive(Debug, Default)]
struct LocalProblems {
    stuck: Vec<usize>,
    wrong_terminal: Vec<usize>,
    trapped: Vec<usize>,
}

impl LocalProblems {
    fn is_empty(&self) -> bool {
        self.stuck.is_empty() && self.wrong_terminal.is_empty() && self.trapped.is_empty()
    }
}

fn local_problems(
    g: &Graph<'_>,
    from: usize,
    goal: Goal,
    paired: &BTreeMap<usize, usize>,
) -> LocalProblems {
    let n = g.kinds.len();
    let mut local_succ = vec![Vec::new(); n];
    let mut seen = vec![false; n];
    let mut order = Vec::new();
    let mut queue = VecDeque::from([from]);
    seen[from] = true;
    let mut problems = LocalProblems::default();
    let mut good_terminals = Vec::new();
    while let Some(x) = queue.pop_front() {
        order.push(x);
        match local_step(g, x, paired) {
            Local::Terminal(t) if t == goal => good_terminals.push(x),
            Local::Terminal(_) => problems.wrong_terminal.push(x),
            Local::Stuck => problems.stuck.push(x),
            Local::Next(next) => {
                for m in next {
                    local_succ[x].push(m);
                    if !seen[m] {
                        seen[m] = true;
                        queue.push_back(m);
                    }
                }
            }
        }
    }
    let can_finish = co_reachable(&good_terminals, &local_succ);
    problems.trapped = order
        .into_iter()
        .filter(|&x| !can_finish[x] && !problems.stuck.contains(&x) && !problems.wrong_terminal.contains(&x))
        .collect();
    problems
}

/// Pairs forks with joins as a least fixed point.
fn pair_forks(g: &Graph<'_>) -> BTreeMap<usize, usize> {
    let forks: Vec<usize> = (0..g.kinds.len()).filter(|&i| g.kinds[i] == NodeKind::Fork).collect();
    let joins: Vec<usize> = (0..g.kinds.len()).filter(|&i| g.kinds[i] == NodeKind::Join).collect();
    let mut paired = BTreeMap::new();
    loop {
        let mut changed = false;
        for &f in &forks {
            if paired.contains_key(&f) || g.succ[f].is_empty() {
                continue;
            }
            let found = joins.iter().copied().find(|&j| {
                g.succ[f]
                    .iter()
                    .all(|&child| local_problems(g, child, Goal::Join(j), &paired).is_empty())
            });
            if let Some(j) = found {
                paired.insert(f, j);
                changed = true;
            }
        }
        if !changed {
            return paired;
        }
    }
}

/// Decides whether every run of `def` can complete with all tokens consumed.
///
/// Expects a definition without schema violations, but never panics on
/// other input; broken references are reported as violations instead.
pub fn check_soundness(def: &ProcessDefinition) -> SoundnessReport {
    use ViolationCode::*;
    let mut violations = Vec::new();
    let mut index: BTreeMap<&str, usize> = BTreeMap::new();
    for (i, n) in def.nodes.iter().enumerate() {
        index.entry(n.name.as_str()).or_insert(i);
    }
    let count = def.nodes.len();

    for n in &def.nodes {
        if let Some(task) = &n.task {
            if def.swimlane(&task.swimlane).is_none() {
                violations.push(Violation::new(
                    UnknownSwimlane,
                    &n.name,
                    format!("swimlane '{}' is not declared", task.swimlane),
                ));
            }
        }
    }

    let mut succ = vec![Vec::new(); count];
    let mut has_default = vec![false; count];
    for t in &def.transitions {
        let (Some(&from), Some(&to)) = (index.get(t.from.as_str()), index.get(t.to.as_str())) else {
            violations.push(Violation::new(
                DanglingTransition,
                t.display_name(),
                "transition refers to an unknown node",
            ));
            continue;
        };
        let node = &def.nodes[from];
        let selectable = match node.kind {
            NodeKind::End => false,
            NodeKind::Decision => {
                t.is_default()
                    || node
                        .decision_rules
                        .iter()
                        .any(|r| Some(r.transition.as_str()) == t.name.as_deref())
            }
            _ => true,
        };
        if t.is_default() {
            has_default[from] = true;
        }
        if selectable && !succ[from].contains(&to) {
            succ[from].push(to);
        }
    }

    let mut stalls = vec![false; count];
    for (i, n) in def.nodes.iter().enumerate() {
        if n.kind != NodeKind::Decision {
            continue;
        }
        for r in &n.decision_rules {
            if def.named_transition(&n.name, &r.transition).is_none() {
                violations.push(Violation::new(
                    DecisionRuleGap,
                    &n.name,
                    format!("rule selects missing transition '{}'", r.transition),
                ));
            }
        }
        if !has_default[i] {
            stalls[i] = true;
            violations.push(Violation::new(
                DecisionRuleGap,
                &n.name,
                "no default transition: a value matching no rule stalls the token",
            ));
        }
    }

    let starts: Vec<usize> = (0..count).filter(|&i| def.nodes[i].kind == NodeKind::Start).collect();
    let ends: Vec<usize> = (0..count).filter(|&i| def.nodes[i].kind == NodeKind::End).collect();
    if ends.is_empty() {
        violations.push(Violation::new(NoEnd, &def.name, "definition has no end-state"));
    }
    let start = match starts.as_slice() {
        [] => {
            violations.push(Violation::new(NoStart, &def.name, "definition has no start-state"));
            return finish(violations);
        }
        [s, rest @ ..] => {
            for &r in rest {
                violations.push(Violation::new(MultipleStart, &def.nodes[r].name, "second start-state"));
            }
            *s
        }
    };

    let g = Graph {
        def,
        kinds: def.nodes.iter().map(|n| n.kind).collect(),
        succ,
        stalls,
    };

    let seen = reachable(start, &g.succ);
    for i in 0..count {
        if !seen[i] {
            violations.push(Violation::new(
                UnreachableNode,
                g.name(i),
                "no path from the start-state reaches this node",
            ));
        }
    }
    let finishes = co_reachable(&ends, &g.succ);
    for i in 0..count {
        if seen[i] && !finishes[i] {
            violations.push(Violation::new(DeadEnd, g.name(i), "no end-state is reachable from here"));
        }
    }

    let paired = pair_forks(&g);
    for i in 0..count {
        if seen[i] && g.kinds[i] == NodeKind::Fork && !paired.contains_key(&i) {
            violations.push(Violation::new(
                ForkJoinMismatch,
                g.name(i),
                "the fork's branches do not all reach one common join",
            ));
        }
    }

    let root = local_problems(&g, start, Goal::End, &paired);
    for &j in &root.wrong_terminal {
        violations.push(Violation::new(
            ForkJoinMismatch,
            g.name(j),
            "join is reachable by a token that belongs to no fork",
        ));
    }
    // every way the root can fail is normally explained above; this keeps the
    // verdict tied to the local analysis if it is not
    if violations.is_empty() && !root.is_empty() {
        let x = root.stuck.iter().chain(&root.trapped).copied().next().unwrap_or(start);
        violations.push(Violation::new(
            DeadEnd,
            g.name(x),
            "the instance cannot complete once it reaches this node",
        ));
    }
    finish(violations)
}

fn finish(violations: Vec<Violation>) -> SoundnessReport {
    SoundnessReport {
        sound: violations.is_empty(),
        violations,
    }
}
