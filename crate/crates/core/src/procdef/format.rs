use std::fmt::Write as _;

use crate::xml::{escape, parse_document, Element, XmlError};

use super::{
    ActionBinding, Assignment, DecisionRule, Effect, EventKind, FieldKind, FormField, Geometry,
    LayoutMetadata, Node, NodeKind, ProcdefError, ProcessDefinition, Swimlane, TaskSpec,
    Transition,
};

pub const PROCDEF_NAMESPACE: &str = "urn:pubflow:procdef-1";

fn node_kind_for(element: &str) -> Option<NodeKind> {
    Some(match element {
        "start-state" => NodeKind::Start,
        "task-node" => NodeKind::Task,
        "decision" => NodeKind::Decision,
        "fork" => NodeKind::Fork,
        "join" => NodeKind::Join,
        "end-state" => NodeKind::End,
        _ => return None,
    })
}

fn element_for(kind: NodeKind) -> &'static str {
    match kind {
        NodeKind::Start => "start-state",
        NodeKind::Task => "task-node",
        NodeKind::Decision => "decision",
        NodeKind::Fork => "fork",
        NodeKind::Join => "join",
        NodeKind::End => "end-state",
    }
}

fn expect_ns(el: &Element) -> Result<(), XmlError> {
    if el.namespace.as_deref() != Some(PROCDEF_NAMESPACE) {
        return Err(XmlError::schema(
            &el.path,
            format!("element must be in namespace {PROCDEF_NAMESPACE}"),
        ));
    }
    Ok(())
}

fn parse_effect(el: &Element) -> Result<Effect, XmlError> {
    expect_ns(el)?;
    match el.name.as_str() {
        "set-variable" => {
            el.only_attrs(&["name", "value"])?;
            Ok(Effect::SetVariable {
                name: el.required_attr("name")?.to_owned(),
                value: el.required_attr("value")?.to_owned(),
            })
        }
        "log" => {
            el.only_attrs(&["message"])?;
            Ok(Effect::Log {
                message: el.required_attr("message")?.to_owned(),
            })
        }
        other => Err(XmlError::schema(&el.path, format!("unknown action '{other}'"))),
    }
}

fn parse_event(el: &Element) -> Result<Vec<ActionBinding>, XmlError> {
    el.only_attrs(&["type"])?;
    let event = match el.required_attr("type")? {
        "node-enter" => EventKind::NodeEnter,
        "node-leave" => EventKind::NodeLeave,
        "transition-taken" => EventKind::TransitionTaken,
        other => {
            return Err(XmlError::schema(
                format!("{}@type", el.path),
                format!("unknown event type '{other}'"),
            ))
        }
    };
    el.children
        .iter()
        .map(|c| Ok(ActionBinding { event, effect: parse_effect(c)? }))
        .collect()
}

fn parse_task(el: &Element) -> Result<TaskSpec, XmlError> {
    el.only_attrs(&["name", "swimlane"])?;
    let mut form_fields = Vec::new();
    for f in &el.children {
        expect_ns(f)?;
        if f.name != "field" {
            return Err(XmlError::schema(&f.path, "only <field> is allowed inside <task>"));
        }
        f.only_attrs(&["name", "label", "kind"])?;
        let kind = match f.attr("kind").unwrap_or("text") {
            "text" => FieldKind::Text,
            "textarea" => FieldKind::Textarea,
            "file" => FieldKind::File,
            other => {
                return Err(XmlError::schema(
                    format!("{}@kind", f.path),
                    format!("unknown field kind '{other}'"),
                ))
            }
        };
        let name = f.required_attr("name")?.to_owned();
        form_fields.push(FormField {
            label: f.attr("label").unwrap_or(&name).to_owned(),
            name,
            kind,
        });
    }
    Ok(TaskSpec {
        task_name: el.required_attr("name")?.to_owned(),
        swimlane: el.required_attr("swimlane")?.to_owned(),
        form_fields,
    })
}

fn parse_swimlane(el: &Element) -> Result<Swimlane, XmlError> {
    el.only_attrs(&["name", "assignment", "role", "actor"])?;
    let assignment = match el.required_attr("assignment")? {
        "initiator" => Assignment::Initiator,
        "role" => Assignment::Role(el.required_attr("role")?.to_owned()),
        "actor" => Assignment::FixedActor(el.required_attr("actor")?.to_owned()),
        other => {
            return Err(XmlError::schema(
                format!("{}@assignment", el.path),
                format!("unknown assignment '{other}'"),
            ))
        }
    };
    Ok(Swimlane {
        name: el.required_attr("name")?.to_owned(),
        assignment,
    })
}

fn parse_node(
    el: &Element,
    kind: NodeKind,
    transitions: &mut Vec<Transition>,
) -> Result<Node, XmlError> {
    el.only_attrs(&["name"])?;
    let mut node = Node::new(el.required_attr("name")?, kind);
    for child in &el.children {
        expect_ns(child)?;
        match child.name.as_str() {
            "task" => {
                if node.task.is_some() {
                    return Err(XmlError::schema(&child.path, "at most one <task> per node"));
                }
                node.task = Some(parse_task(child)?);
            }
            "event" => node.actions.extend(parse_event(child)?),
            "rule" => {
                child.only_attrs(&["variable", "equals", "transition"])?;
                node.decision_rules.push(DecisionRule {
                    variable: child.required_attr("variable")?.to_owned(),
                    equals: child.required_attr("equals")?.to_owned(),
                    transition: child.required_attr("transition")?.to_owned(),
                });
            }
            "transition" => {
                child.only_attrs(&["name", "to"])?;
                let actions = child
                    .children
                    .iter()
                    .map(|a| {
                        Ok(ActionBinding {
                            event: EventKind::TransitionTaken,
                            effect: parse_effect(a)?,
                        })
                    })
                    .collect::<Result<Vec<_>, XmlError>>()?;
                transitions.push(Transition {
                    name: child.attr("name").map(str::to_owned),
                    from: node.name.clone(),
                    to: child.required_attr("to")?.to_owned(),
                    actions,
                });
            }
            other => {
                return Err(XmlError::schema(
                    &child.path,
                    format!("unexpected element '{other}' inside node"),
                ))
            }
        }
    }
    Ok(node)
}

/// Parses `processdefinition.xml` content.
pub fn parse_definition(bytes: &[u8]) -> Result<ProcessDefinition, ProcdefError> {
    let root = parse_document(bytes)?;
    if !root.is(PROCDEF_NAMESPACE, "process-definition") {
        return Err(XmlError::schema(
            &root.path,
            format!("root must be <process-definition xmlns=\"{PROCDEF_NAMESPACE}\">"),
        )
        .into());
    }
    root.only_attrs(&["name"])?;
    let mut def = ProcessDefinition {
        name: root.required_attr("name")?.to_owned(),
        nodes: Vec::new(),
        transitions: Vec::new(),
        swimlanes: Vec::new(),
        variables: Vec::new(),
    };
    for child in &root.children {
        expect_ns(child)?;
        match child.name.as_str() {
            "swimlane" => def.swimlanes.push(parse_swimlane(child)?),
            "variable" => {
                child.only_attrs(&["name"])?;
                def.variables.push(child.required_attr("name")?.to_owned());
            }
            name => match node_kind_for(name) {
                Some(kind) => {
                    let node = parse_node(child, kind, &mut def.transitions)?;
                    def.nodes.push(node);
                }
                None => {
                    return Err(XmlError::schema(
                        &child.path,
                        format!("unknown element '{name}'"),
                    )
                    .into())
                }
            },
        }
    }
    Ok(def)
}

fn write_effect(out: &mut String, indent: &str, effect: &Effect) {
    match effect {
        Effect::SetVariable { name, value } => {
            let _ = writeln!(
                out,
                "{indent}<set-variable name=\"{}\" value=\"{}\"/>",
                escape(name),
                escape(value)
            );
        }
        Effect::Log { message } => {
            let _ = writeln!(out, "{indent}<log message=\"{}\"/>", escape(message));
        }
    }
}

/// Serializes a definition to the XML accepted by [`parse_definition`].
///
/// Transitions are written under their source node, so a definition whose
/// transitions are grouped by source in node order round-trips exactly.
pub fn definition_to_xml(def: &ProcessDefinition) -> String {
    let mut out = String::new();
    out.push_str("<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n");
    let _ = writeln!(
        out,
        "<process-definition xmlns=\"{PROCDEF_NAMESPACE}\" name=\"{}\">",
        escape(&def.name)
    );
    for s in &def.swimlanes {
        let assignment = match &s.assignment {
            Assignment::Initiator => "assignment=\"initiator\"".to_owned(),
            Assignment::Role(r) => format!("assignment=\"role\" role=\"{}\"", escape(r)),
            Assignment::FixedActor(a) => format!("assignment=\"actor\" actor=\"{}\"", escape(a)),
        };
        let _ = writeln!(out, "  <swimlane name=\"{}\" {assignment}/>", escape(&s.name));
    }
    for v in &def.variables {
        let _ = writeln!(out, "  <variable name=\"{}\"/>", escape(v));
    }
    for node in &def.nodes {
        let tag = element_for(node.kind);
        let bare = node.task.is_none()
            && node.actions.is_empty()
            && node.decision_rules.is_empty()
            && def.outgoing(&node.name).next().is_none();
        if bare {
            let _ = writeln!(out, "  <{tag} name=\"{}\"/>", escape(&node.name));
            continue;
        }
        let _ = writeln!(out, "  <{tag} name=\"{}\">", escape(&node.name));
        if let Some(task) = &node.task {
            let _ = write!(
                out,
                "    <task name=\"{}\" swimlane=\"{}\"",
                escape(&task.task_name),
                escape(&task.swimlane)
            );
            if task.form_fields.is_empty() {
                out.push_str("/>\n");
            } else {
                out.push_str(">\n");
                for f in &task.form_fields {
                    let kind = match f.kind {
                        FieldKind::Text => "text",
                        FieldKind::Textarea => "textarea",
                        FieldKind::File => "file",
                    };
                    let _ = writeln!(
                        out,
                        "      <field name=\"{}\" label=\"{}\" kind=\"{kind}\"/>",
                        escape(&f.name),
                        escape(&f.label)
                    );
                }
                out.push_str("    </task>\n");
            }
        }
        // consecutive bindings of one event share an <event> element
        let mut i = 0;
        while i < node.actions.len() {
            let event = node.actions[i].event;
            let _ = writeln!(out, "    <event type=\"{}\">", event.as_str());
            while i < node.actions.len() && node.actions[i].event == event {
                write_effect(&mut out, "      ", &node.actions[i].effect);
                i += 1;
            }
            out.push_str("    </event>\n");
        }
        for r in &node.decision_rules {
            let _ = writeln!(
                out,
                "    <rule variable=\"{}\" equals=\"{}\" transition=\"{}\"/>",
                escape(&r.variable),
                escape(&r.equals),
                escape(&r.transition)
            );
        }
        for t in def.outgoing(&node.name) {
            out.push_str("    <transition");
            if let Some(n) = &t.name {
                let _ = write!(out, " name=\"{}\"", escape(n));
            }
            let _ = write!(out, " to=\"{}\"", escape(&t.to));
            if t.actions.is_empty() {
                out.push_str("/>\n");
            } else {
                out.push_str(">\n");
                for a in &t.actions {
                    write_effect(&mut out, "      ", &a.effect);
                }
                out.push_str("    </transition>\n");
            }
        }
        let _ = writeln!(out, "  </{tag}>");
    }
    out.push_str("</process-definition>\n");
    out
}

/// Parses `layout.xml`: one `<node name x y width height/>` per placed node.
pub fn parse_layout(bytes: &[u8]) -> Result<LayoutMetadata, ProcdefError> {
    let root = parse_document(bytes)?;
    if !root.is(PROCDEF_NAMESPACE, "layout") {
        return Err(XmlError::schema(
            &root.path,
            format!("root must be <layout xmlns=\"{PROCDEF_NAMESPACE}\">"),
        )
        .into());
    }
    let mut layout = LayoutMetadata::default();
    for child in &root.children {
        expect_ns(child)?;
        if child.name != "node" {
            return Err(XmlError::schema(&child.path, "only <node> is allowed in a layout").into());
        }
        child.only_attrs(&["name", "x", "y", "width", "height"])?;
        let num = |attr: &str| -> Result<u32, XmlError> {
            let raw = child.required_attr(attr)?;
            raw.parse::<u32>().map_err(|_| {
                XmlError::schema(
                    format!("{}@{attr}", child.path),
                    format!("'{raw}' is not a non-negative integer"),
                )
            })
        };
        let geometry = Geometry {
            x: num("x")?,
            y: num("y")?,
            width: num("width")?,
            height: num("height")?,
        };
        let name = child.required_attr("name")?.to_owned();
        if layout.per_node.insert(name, geometry).is_some() {
            return Err(XmlError::schema(&child.path, "node placed twice").into());
        }
    }
    Ok(layout)
}

pub fn layout_to_xml(layout: &LayoutMetadata) -> String {
    let mut out = String::new();
    out.push_str("<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n");
    let _ = writeln!(out, "<layout xmlns=\"{PROCDEF_NAMESPACE}\">");
    for (name, g) in &layout.per_node {
        let _ = writeln!(
            out,
            "  <node name=\"{}\" x=\"{}\" y=\"{}\" width=\"{}\" height=\"{}\"/>",
            escape(name),
            g.x,
            g.y,
            g.width,
            g.height
        );
    }
    out.push_str("</layout>\n");
    out
}
