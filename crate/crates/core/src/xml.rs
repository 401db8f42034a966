//! Small namespace-aware element tree on top of `quick-xml`.
//!
//! The process-definition, layout, ingest and Dublin Core formats are all
//! small documents, so they are read into an owned tree first and then
//! interpreted by their own modules.

use quick_xml::events::{BytesStart, Event};
use quick_xml::name::ResolveResult;
use quick_xml::NsReader;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum XmlError {
    #[error("XML syntax error at line {line}, column {column}: {message}")]
    Syntax {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("schema violation at {path}: {message}")]
    Schema { path: String, message: String },
}

impl XmlError {
    pub fn schema(path: impl Into<String>, message: impl Into<String>) -> Self {
        XmlError::Schema {
            path: path.into(),
            message: message.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Attribute {
    pub namespace: Option<String>,
    pub name: String,
    pub value: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Element {
    pub namespace: Option<String>,
    pub name: String,
    pub attributes: Vec<Attribute>,
    pub children: Vec<Element>,
    pub text: String,
    /// Slash-separated location used in schema diagnostics.
    pub path: String,
}

impl Element {
    /// Unqualified attribute lookup.
    pub fn attr(&self, name: &str) -> Option<&str> {
        self.attributes
            .iter()
            .find(|a| a.namespace.is_none() && a.name == name)
            .map(|a| a.value.as_str())
    }

    pub fn required_attr(&self, name: &str) -> Result<&str, XmlError> {
        self.attr(name)
            .ok_or_else(|| XmlError::schema(format!("{}@{}", self.path, name), "missing attribute"))
    }

    pub fn is(&self, namespace: &str, name: &str) -> bool {
        self.namespace.as_deref() == Some(namespace) && self.name == name
    }

    /// Rejects unqualified attributes not in `allowed`.
    pub fn only_attrs(&self, allowed: &[&str]) -> Result<(), XmlError> {
        for a in &self.attributes {
            if a.namespace.is_none() && !allowed.contains(&a.name.as_str()) {
                return Err(XmlError::schema(
                    format!("{}@{}", self.path, a.name),
                    "unexpected attribute",
                ));
            }
        }
        Ok(())
    }
}

fn line_col(input: &[u8], offset: usize) -> (usize, usize) {
    let upto = &input[..offset.min(input.len())];
    let line = upto.iter().filter(|&&b| b == b'\n').count() + 1;
    let column = match upto.iter().rposition(|&b| b == b'\n') {
        Some(nl) => upto.len() - nl,
        None => upto.len() + 1,
    };
    (line, column)
}

fn syntax_at(input: &[u8], offset: usize, message: impl ToString) -> XmlError {
    let (line, column) = line_col(input, offset);
    XmlError::Syntax {
        line,
        column,
        message: message.to_string(),
    }
}

fn open_element(
    reader: &NsReader<&[u8]>,
    input: &[u8],
    start: &BytesStart<'_>,
    parent_path: &str,
    sibling_index: usize,
) -> Result<Element, XmlError> {
    let pos = reader.buffer_position() as usize;
    let (ns, local) = reader.resolve_element(start.name());
    let namespace = match ns {
        ResolveResult::Bound(ns) => Some(String::from_utf8_lossy(ns.as_ref()).into_owned()),
        ResolveResult::Unbound => None,
        ResolveResult::Unknown(p) => {
            return Err(syntax_at(
                input,
                pos,
                format!("unknown namespace prefix '{}'", String::from_utf8_lossy(&p)),
            ))
        }
    };
    let name = String::from_utf8_lossy(local.as_ref()).into_owned();
    let mut attributes = Vec::new();
    for attr in start.attributes() {
        let attr = attr.map_err(|e| syntax_at(input, pos, e))?;
        let key = attr.key;
        if key.as_ref() == b"xmlns" || key.as_ref().starts_with(b"xmlns:") {
            continue;
        }
        let (ans, alocal) = reader.resolve_attribute(key);
        let anamespace = match ans {
            ResolveResult::Bound(ns) => Some(String::from_utf8_lossy(ns.as_ref()).into_owned()),
            _ => None,
        };
        let value = attr
            .unescape_value()
            .map_err(|e| syntax_at(input, pos, e))?
            .into_owned();
        attributes.push(Attribute {
            namespace: anamespace,
            name: String::from_utf8_lossy(alocal.as_ref()).into_owned(),
            value,
        });
    }
    let path = if parent_path.is_empty() {
        format!("/{name}")
    } else {
        format!("{parent_path}/{name}[{sibling_index}]")
    };
    Ok(Element {
        namespace,
        name,
        attributes,
        children: Vec::new(),
        text: String::new(),
        path,
    })
}

/// Parses a whole document into its root element.
pub fn parse_document(input: &[u8]) -> Result<Element, XmlError> {
    let text = std::str::from_utf8(input).map_err(|e| {
        let (line, column) = line_col(input, e.valid_up_to());
        XmlError::Syntax {
            line,
            column,
            message: "invalid UTF-8".into(),
        }
    })?;
    let mut reader = NsReader::from_str(text);
    let bytes = text.as_bytes();
    let mut stack: Vec<Element> = Vec::new();
    let mut root: Option<Element> = None;
    loop {
        let event = reader
            .read_event()
            .map_err(|e| syntax_at(bytes, reader.error_position() as usize, e))?;
        match event {
            Event::Start(start) => open(&reader, bytes, &start, &mut stack, &root)?,
            Event::Empty(start) => {
                open(&reader, bytes, &start, &mut stack, &root)?;
                close(&mut stack, &mut root);
            }
            Event::End(_) => close(&mut stack, &mut root),
            Event::Text(t) => {
                let s = t
                    .unescape()
                    .map_err(|e| syntax_at(bytes, reader.buffer_position() as usize, e))?;
                match stack.last_mut() {
                    Some(el) => el.text.push_str(&s),
                    None if s.trim().is_empty() => {}
                    None => {
                        return Err(syntax_at(bytes, reader.buffer_position() as usize, "text outside root element"))
                    }
                }
            }
            Event::CData(c) => {
                if let Some(el) = stack.last_mut() {
                    el.text.push_str(&String::from_utf8_lossy(&c.into_inner()));
                }
            }
            Event::Eof => break,
            _ => {}
        }
    }
    if !stack.is_empty() {
        return Err(syntax_at(bytes, bytes.len(), "unexpected end of document"));
    }
    root.ok_or_else(|| syntax_at(bytes, bytes.len(), "document has no root element"))
}

fn open(
    reader: &NsReader<&[u8]>,
    bytes: &[u8],
    start: &BytesStart<'_>,
    stack: &mut Vec<Element>,
    root: &Option<Element>,
) -> Result<(), XmlError> {
    if root.is_some() {
        return Err(syntax_at(bytes, reader.buffer_position() as usize, "content after root element"));
    }
    let (parent_path, idx) = match stack.last() {
        Some(p) => (p.path.clone(), p.children.len() + 1),
        None => (String::new(), 0),
    };
    let el = open_element(reader, bytes, start, &parent_path, idx)?;
    stack.push(el);
    Ok(())
}

fn close(stack: &mut Vec<Element>, root: &mut Option<Element>) {
    if let Some(el) = stack.pop() {
        match stack.last_mut() {
            Some(parent) => parent.children.push(el),
            None => *root = Some(el),
        }
    }
}

/// Escapes text for element content and attribute values.
pub fn escape(s: &str) -> String {
    quick_xml::escape::escape(s).into_owned()
}
