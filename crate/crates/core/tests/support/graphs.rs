//! Random schema-valid process definitions with at most eight nodes.
//!
//! Half are unconstrained random graphs; the other half are block-structured
//! workflows (sequence, choice, parallel, loop), optionally mutated once, so
//! that both verdicts show up in quantity.

use pubflow::procdef::{
    validate_definition, Assignment, DecisionRule, Node, NodeKind, ProcessDefinition, Swimlane,
    Transition,
};
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

pub const MAX_NODES: usize = 8;

struct Builder {
    nodes: Vec<Node>,
    edges: Vec<(usize, usize)>,
}

impl Builder {
    fn add(&mut self, kind: NodeKind) -> usize {
        let i = self.nodes.len();
        let node = Node::new(format!("n{i}"), kind);
        self.nodes.push(if kind.is_wait_state() { node.with_task(format!("task{i}"), "lane") } else { node });
        i
    }

    fn finish(self, rng: &mut StdRng) -> ProcessDefinition {
        let mut def = ProcessDefinition {
            name: "random".into(),
            nodes: self.nodes,
            transitions: Vec::new(),
            swimlanes: vec![Swimlane { name: "lane".into(), assignment: Assignment::Initiator }],
            variables: vec!["v".into()],
        };
        for i in 0..def.nodes.len() {
            let outs: Vec<usize> = self.edges.iter().filter(|e| e.0 == i).map(|e| e.1).collect();
            for (k, to) in outs.iter().enumerate() {
                // first transition is the unnamed default, except that decisions
                // sometimes get none
                let unnamed = k == 0 && !(def.nodes[i].kind == NodeKind::Decision && rng.gen_bool(0.15));
                let name = if unnamed { None } else { Some(format!("t{k}")) };
                if let (NodeKind::Decision, Some(n)) = (def.nodes[i].kind, &name) {
                    if rng.gen_bool(0.85) {
                        def.nodes[i].decision_rules.push(DecisionRule {
                            variable: "v".into(),
                            equals: format!("{k}"),
                            transition: n.clone(),
                        });
                    }
                }
                let from = def.nodes[i].name.clone();
                let to = def.nodes[*to].name.clone();
                def.transitions.push(Transition::new(name.as_deref(), &from, &to));
            }
        }
        def
    }
}

fn random_graph(rng: &mut StdRng) -> ProcessDefinition {
    let n = rng.gen_range(2..=MAX_NODES);
    let mut b = Builder { nodes: Vec::new(), edges: Vec::new() };
    b.add(NodeKind::Start);
    for _ in 1..n {
        let kind = match rng.gen_range(0..100) {
            0..=29 => NodeKind::Task,
            30..=46 => NodeKind::Fork,
            47..=64 => NodeKind::Join,
            65..=76 => NodeKind::Decision,
            _ => NodeKind::End,
        };
        b.add(kind);
    }
    for i in 0..n {
        let outs = match b.nodes[i].kind {
            NodeKind::End => 0,
            NodeKind::Join => usize::from(!rng.gen_bool(0.05)),
            NodeKind::Fork => rng.gen_range(1..=3),
            _ => {
                if rng.gen_bool(0.05) { 0 } else { rng.gen_range(1..=2) }
            }
        };
        for _ in 0..outs {
            // mostly forward, never into the start-state
            let to = if i + 1 < n && rng.gen_bool(0.75) {
                rng.gen_range(i + 1..n)
            } else {
                rng.gen_range(1..n)
            };
            b.edges.push((i, to));
        }
    }
    b.finish(rng)
}

/// Block: entry node, and exit nodes that each get one edge to the follower.
struct Block {
    entry: usize,
    exits: Vec<usize>,
}

fn block(b: &mut Builder, rng: &mut StdRng, budget: usize) -> Block {
    let choice = if budget < 3 { 0 } else { rng.gen_range(0..5) };
    match choice {
        1 => {
            // sequence
            let first_budget = rng.gen_range(1..budget);
            let a = block(b, rng, first_budget);
            let c = block(b, rng, budget - first_budget);
            for &x in &a.exits {
                b.edges.push((x, c.entry));
            }
            Block { entry: a.entry, exits: c.exits }
        }
        2 => {
            // parallel: fork, two branches, join
            let f = b.add(NodeKind::Fork);
            let inner = budget - 2;
            let left_budget = if inner > 1 { rng.gen_range(1..inner) } else { 1 };
            let l = block(b, rng, left_budget);
            let r = block(b, rng, inner.saturating_sub(left_budget).max(1));
            let j = b.add(NodeKind::Join);
            b.edges.push((f, l.entry));
            b.edges.push((f, r.entry));
            for &x in l.exits.iter().chain(&r.exits) {
                b.edges.push((x, j));
            }
            Block { entry: f, exits: vec![j] }
        }
        3 => {
            // exclusive choice through a decision
            let d = b.add(NodeKind::Decision);
            let inner = budget - 1;
            let left_budget = if inner > 1 { rng.gen_range(1..inner) } else { 1 };
            let l = block(b, rng, left_budget);
            let r = block(b, rng, inner.saturating_sub(left_budget).max(1));
            b.edges.push((d, r.entry));
            b.edges.push((d, l.entry));
            Block { entry: d, exits: l.exits.into_iter().chain(r.exits).collect() }
        }
        4 => {
            // loop with a rework task choosing to repeat or continue
            let body = block(b, rng, budget - 1);
            let again = b.add(NodeKind::Task);
            for &x in &body.exits {
                b.edges.push((x, again));
            }
            b.edges.push((again, body.entry));
            Block { entry: body.entry, exits: vec![again] }
        }
        _ => {
            let t = b.add(NodeKind::Task);
            Block { entry: t, exits: vec![t] }
        }
    }
}

fn structured(rng: &mut StdRng) -> ProcessDefinition {
    let mut b = Builder { nodes: Vec::new(), edges: Vec::new() };
    let s = b.add(NodeKind::Start);
    let budget = rng.gen_range(1..=MAX_NODES - 2);
    let body = block(&mut b, rng, budget);
    let e = b.add(NodeKind::End);
    b.edges.push((s, body.entry));
    for &x in &body.exits {
        b.edges.push((x, e));
    }
    // loop blocks put the "again" edge after the exit edge; move defaults first
    b.edges.sort_by_key(|e| e.0);
    if rng.gen_bool(0.5) && !b.edges.is_empty() {
        let k = rng.gen_range(0..b.edges.len());
        match rng.gen_range(0..3) {
            0 => {
                b.edges.remove(k);
            }
            1 => {
                let n = b.nodes.len();
                b.edges[k].1 = rng.gen_range(1..n);
            }
            _ => {
                let from = rng.gen_range(0..b.nodes.len());
                let to = rng.gen_range(1..b.nodes.len());
                b.edges.push((from, to));
            }
        }
    }
    b.finish(rng)
}

/// Deterministic per seed; retries internally until the result is schema-valid.
pub fn random_definition(seed: u64) -> ProcessDefinition {
    let mut rng = StdRng::seed_from_u64(seed);
    loop {
        let def = if rng.gen_bool(0.5) { random_graph(&mut rng) } else { structured(&mut rng) };
        if def.nodes.len() <= MAX_NODES && validate_definition(&def).is_empty() {
            return def;
        }
    }
}
