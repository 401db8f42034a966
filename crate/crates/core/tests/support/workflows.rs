//! Hand-built publication workflows shared by the integration suites.

use pubflow::procdef::{
    definition_to_xml, Assignment, Node, NodeKind, ProcessArchive, ProcessDefinition, Swimlane, Transition,
    DEFINITION_ENTRY,
};

fn lanes() -> Vec<Swimlane> {
    vec![
        Swimlane {
            name: "author".into(),
            assignment: Assignment::Initiator,
        },
        Swimlane {
            name: "qa".into(),
            assignment: Assignment::Role("qa".into()),
        },
    ]
}

/// submit -> review, with approve to the end and rework back to the author.
pub fn publication_v1() -> ProcessDefinition {
    ProcessDefinition {
        name: "publication".into(),
        nodes: vec![
            Node::new("submit", NodeKind::Start).with_task("submit_article", "author"),
            Node::new("review", NodeKind::Task).with_task("review", "qa"),
            Node::new("revise", NodeKind::Task).with_task("rework_article", "author"),
            Node::new("published", NodeKind::End),
        ],
        transitions: vec![
            Transition::new(Some("to_qa"), "submit", "review"),
            Transition::new(Some("approve"), "review", "published"),
            Transition::new(Some("rework"), "review", "revise"),
            Transition::new(Some("to_qa"), "revise", "review"),
        ],
        swimlanes: lanes(),
        variables: vec!["pid".into()],
    }
}

/// v1 with a second QA step between approval and publication.
pub fn publication_v2() -> ProcessDefinition {
    let mut def = publication_v1();
    def.nodes.insert(3, Node::new("final_check", NodeKind::Task).with_task("final_check", "qa"));
    def.transitions[1] = Transition::new(Some("approve"), "review", "final_check");
    def.transitions.push(Transition::new(None, "final_check", "published"));
    def
}

/// submit, then a fork into parallel author and QA tasks that join before
/// the end.
pub fn parallel() -> ProcessDefinition {
    ProcessDefinition {
        name: "parallel".into(),
        nodes: vec![
            Node::new("submit", NodeKind::Start).with_task("submit_article", "author"),
            Node::new("split", NodeKind::Fork),
            Node::new("copyedit", NodeKind::Task).with_task("copyedit", "author"),
            Node::new("check", NodeKind::Task).with_task("check", "qa"),
            Node::new("merge", NodeKind::Join),
            Node::new("done", NodeKind::End),
        ],
        transitions: vec![
            Transition::new(None, "submit", "split"),
            Transition::new(Some("left"), "split", "copyedit"),
            Transition::new(Some("right"), "split", "check"),
            Transition::new(None, "copyedit", "merge"),
            Transition::new(None, "check", "merge"),
            Transition::new(None, "merge", "done"),
        ],
        swimlanes: lanes(),
        variables: Vec::new(),
    }
}

/// v1 plus a task node nothing leads to.
pub fn with_orphan() -> ProcessDefinition {
    let mut def = publication_v1();
    def.nodes.push(Node::new("orphan", NodeKind::Task).with_task("orphan", "qa"));
    def.transitions.push(Transition::new(None, "orphan", "published"));
    def
}

pub fn archive(def: &ProcessDefinition) -> Vec<u8> {
    ProcessArchive::new()
        .with_entry(DEFINITION_ENTRY, definition_to_xml(def))
        .to_zip()
}
