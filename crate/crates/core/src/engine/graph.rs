use std::collections::{BTreeMap, VecDeque};

use super::model::{DeploymentRecord, GraphNode, GraphState, GraphTransition};
use crate::procdef::{NodeKind, ProcessDefinition};

pub const AUTO_WIDTH: u32 = 140;
pub const AUTO_HEIGHT: u32 = 50;

/// Layered left-to-right placement: the layer is the breadth-first distance
/// from the start node, and nodes share a layer in declaration order.
/// Unreachable nodes go one layer past the deepest reachable one.
pub fn auto_layout(def: &ProcessDefinition) -> BTreeMap<String, (u32, u32)> {
    let mut depth: BTreeMap<&str, u32> = BTreeMap::new();
    let mut queue = VecDeque::new();
    if let Some(start) = def.nodes.iter().find(|n| n.kind == NodeKind::Start) {
        depth.insert(&start.name, 0);
        queue.push_back(start.name.as_str());
    }
    while let Some(node) = queue.pop_front() {
        let d = depth[node];
        for t in def.outgoing(node) {
            if def.node(&t.to).is_some() && !depth.contains_key(t.to.as_str()) {
                depth.insert(&t.to, d + 1);
                queue.push_back(&t.to);
            }
        }
    }
    let overflow = depth.values().max().map_or(0, |m| m + 1);
    let mut per_layer: BTreeMap<u32, u32> = BTreeMap::new();
    let mut out = BTreeMap::new();
    for node in &def.nodes {
        let layer = depth.get(node.name.as_str()).copied().unwrap_or(overflow);
        let idx = per_layer.entry(layer).or_insert(0);
        out.insert(node.name.clone(), (40 + layer * 180, 40 + *idx * 100));
        *idx += 1;
    }
    out
}

pub fn graph_state(record: &DeploymentRecord, current_nodes: Vec<String>) -> GraphState {
    let def = &record.definition;
    let auto = auto_layout(def);
    let nodes = def
        .nodes
        .iter()
        .map(|n| {
            let placed = record.layout.as_ref().and_then(|l| l.per_node.get(&n.name));
            let (x, y, width, height) = match placed {
                Some(g) => (g.x, g.y, g.width, g.height),
                None => {
                    let (x, y) = auto[&n.name];
                    (x, y, AUTO_WIDTH, AUTO_HEIGHT)
                }
            };
            GraphNode {
                name: n.name.clone(),
                kind: n.kind,
                x,
                y,
                width,
                height,
            }
        })
        .collect();
    let transitions = def
        .transitions
        .iter()
        .map(|t| GraphTransition {
            from: t.from.clone(),
            to: t.to.clone(),
            name: t.name.clone(),
        })
        .collect();
    GraphState {
        definition_id: record.definition_id.clone(),
        nodes,
        transitions,
        current_nodes,
    }
}
