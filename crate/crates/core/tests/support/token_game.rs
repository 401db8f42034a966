//! Exhaustive token game over a process definition.
//!
//! Explores every interleaving of every token's moves and every human or
//! decision choice, then checks that each reachable state can still reach a
//! state where the root token has terminated, and that every node is visited.

use std::collections::{BTreeSet, HashMap, VecDeque};

use pubflow::procdef::{NodeKind, ProcessDefinition};

const MAX_STATES: usize = 2_000;
/// Nesting deeper than the number of forks means some fork was re-entered
/// inside its own branches; allow a little beyond that before giving up.
const EXTRA_DEPTH: usize = 2;

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
enum Tok {
    /// Token has arrived at (or waits at a wait-state) node.
    At(usize),
    /// Child waiting at a join.
    Waiting(usize),
    /// Decision matched no rule and has no default.
    Stalled(usize),
    /// Parent whose children were all consumed at this join, about to leave it.
    Leave(usize),
    Forked(usize, Vec<Tok>),
    Done,
}

struct Net {
    kinds: Vec<NodeKind>,
    /// (target) per outgoing transition that a token may take
    moves: Vec<Vec<usize>>,
    stalls: Vec<bool>,
    start: usize,
}

fn build(def: &ProcessDefinition) -> Net {
    let idx = |name: &str| def.nodes.iter().position(|n| n.name == name).unwrap();
    let count = def.nodes.len();
    let mut moves = vec![Vec::new(); count];
    let mut stalls = vec![false; count];
    for (i, node) in def.nodes.iter().enumerate() {
        let out: Vec<_> = def.transitions.iter().filter(|t| t.from == node.name).collect();
        match node.kind {
            NodeKind::Decision => {
                for t in &out {
                    let chosen_by_rule = node
                        .decision_rules
                        .iter()
                        .any(|r| Some(r.transition.as_str()) == t.name.as_deref());
                    if t.name.is_none() || chosen_by_rule {
                        moves[i].push(idx(&t.to));
                    }
                }
                stalls[i] = !out.iter().any(|t| t.name.is_none());
            }
            _ => moves[i] = out.iter().map(|t| idx(&t.to)).collect(),
        }
    }
    Net {
        kinds: def.nodes.iter().map(|n| n.kind).collect(),
        moves,
        stalls,
        start: def.nodes.iter().position(|n| n.kind == NodeKind::Start).unwrap(),
    }
}

fn depth(t: &Tok) -> usize {
    match t {
        Tok::Forked(_, kids) => 1 + kids.iter().map(depth).max().unwrap_or(0),
        _ => 0,
    }
}

fn visit(t: &Tok, seen: &mut BTreeSet<usize>) {
    match t {
        Tok::At(n) => {
            seen.insert(*n);
        }
        Tok::Forked(_, kids) => kids.iter().for_each(|k| visit(k, seen)),
        _ => {}
    }
}

fn successors(net: &Net, t: &Tok) -> Vec<Tok> {
    match t {
        Tok::At(n) => {
            let n = *n;
            match net.kinds[n] {
                NodeKind::End => vec![Tok::Done],
                NodeKind::Join => vec![Tok::Waiting(n)],
                NodeKind::Fork => {
                    if net.moves[n].is_empty() {
                        return vec![];
                    }
                    let mut kids: Vec<Tok> = net.moves[n].iter().map(|&m| Tok::At(m)).collect();
                    kids.sort();
                    vec![Tok::Forked(n, kids)]
                }
                NodeKind::Decision => {
                    let mut v: Vec<Tok> = net.moves[n].iter().map(|&m| Tok::At(m)).collect();
                    if net.stalls[n] {
                        v.push(Tok::Stalled(n));
                    }
                    v
                }
                NodeKind::Start | NodeKind::Task => net.moves[n].iter().map(|&m| Tok::At(m)).collect(),
            }
        }
        Tok::Leave(j) => net.moves[*j].iter().map(|&m| Tok::At(m)).collect(),
        Tok::Forked(f, kids) => {
            let mut out = Vec::new();
            if let Some(Tok::Waiting(j)) = kids.first() {
                if kids.iter().all(|k| *k == Tok::Waiting(*j)) {
                    out.push(Tok::Leave(*j));
                }
            }
            for i in 0..kids.len() {
                for next in successors(net, &kids[i]) {
                    let mut k2 = kids.clone();
                    k2[i] = next;
                    k2.sort();
                    out.push(Tok::Forked(*f, k2));
                }
            }
            out
        }
        Tok::Waiting(_) | Tok::Stalled(_) | Tok::Done => vec![],
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Verdict {
    pub sound: bool,
    pub states: usize,
    /// Exploration hit the state or nesting bound (unbounded token growth).
    pub unbounded: bool,
}

/// Expects a schema-valid definition.
pub fn explore(def: &ProcessDefinition) -> Verdict {
    let net = build(def);
    let max_depth = net.kinds.iter().filter(|k| **k == NodeKind::Fork).count() + EXTRA_DEPTH;
    let init = Tok::At(net.start);
    let mut ids: HashMap<Tok, usize> = HashMap::new();
    let mut states = vec![init.clone()];
    let mut edges: Vec<Vec<usize>> = vec![Vec::new()];
    ids.insert(init, 0);
    let mut queue = VecDeque::from([0usize]);
    let mut visited = BTreeSet::new();
    let mut unbounded = false;
    while let Some(s) = queue.pop_front() {
        let state = states[s].clone();
        visit(&state, &mut visited);
        for next in successors(&net, &state) {
            if depth(&next) > max_depth {
                unbounded = true;
                continue;
            }
            let id = match ids.get(&next) {
                Some(&id) => id,
                None => {
                    if states.len() >= MAX_STATES {
                        unbounded = true;
                        continue;
                    }
                    let id = states.len();
                    ids.insert(next.clone(), id);
                    states.push(next);
                    edges.push(Vec::new());
                    queue.push_back(id);
                    id
                }
            };
            edges[s].push(id);
        }
    }
    // backwards from completed states
    let mut pred = vec![Vec::new(); states.len()];
    for (s, outs) in edges.iter().enumerate() {
        for &t in outs {
            pred[t].push(s);
        }
    }
    let mut ok = vec![false; states.len()];
    let mut queue: VecDeque<usize> = (0..states.len()).filter(|&s| states[s] == Tok::Done).collect();
    for &s in &queue {
        ok[s] = true;
    }
    while let Some(s) = queue.pop_front() {
        for &p in &pred[s] {
            if !ok[p] {
                ok[p] = true;
                queue.push_back(p);
            }
        }
    }
    let all_complete = ok.iter().all(|&b| b);
    let all_visited = visited.len() == def.nodes.len();
    Verdict {
        sound: !unbounded && all_complete && all_visited,
        states: states.len(),
        unbounded,
    }
}
