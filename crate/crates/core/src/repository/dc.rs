//! Dublin Core records and their `oai_dc` XML form.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::xml::{escape, parse_document, XmlError};

pub const OAI_DC_NAMESPACE: &str = "http://www.openarchives.org/OAI/2.0/oai_dc/";
pub const DC_NAMESPACE: &str = "http://purl.org/dc/elements/1.1/";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DcElement {
    Title,
    Creator,
    Subject,
    Description,
    Publisher,
    Contributor,
    Date,
    Type,
    Language,
    Coverage,
    Rights,
    Identifier,
}

impl DcElement {
    /// Serialization order.
    pub const ALL: [DcElement; 12] = [
        DcElement::Title,
        DcElement::Creator,
        DcElement::Subject,
        DcElement::Description,
        DcElement::Publisher,
        DcElement::Contributor,
        DcElement::Date,
        DcElement::Type,
        DcElement::Language,
        DcElement::Coverage,
        DcElement::Rights,
        DcElement::Identifier,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            DcElement::Title => "title",
            DcElement::Creator => "creator",
            DcElement::Subject => "subject",
            DcElement::Description => "description",
            DcElement::Publisher => "publisher",
            DcElement::Contributor => "contributor",
            DcElement::Date => "date",
            DcElement::Type => "type",
            DcElement::Language => "language",
            DcElement::Coverage => "coverage",
            DcElement::Rights => "rights",
            DcElement::Identifier => "identifier",
        }
    }
}

impl FromStr for DcElement {
    type Err = ();

    fn from_str(s: &str) -> Result<Self, ()> {
        DcElement::ALL.into_iter().find(|e| e.as_str() == s).ok_or(())
    }
}

impl fmt::Display for DcElement {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Twelve repeatable Dublin Core elements.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct DublinCoreRecord {
    pub title: Vec<String>,
    pub creator: Vec<String>,
    pub subject: Vec<String>,
    pub description: Vec<String>,
    pub publisher: Vec<String>,
    pub contributor: Vec<String>,
    pub date: Vec<String>,
    #[serde(rename = "type")]
    pub type_: Vec<String>,
    pub language: Vec<String>,
    pub coverage: Vec<String>,
    pub rights: Vec<String>,
    pub identifier: Vec<String>,
}

impl DublinCoreRecord {
    pub fn get(&self, e: DcElement) -> &Vec<String> {
        match e {
            DcElement::Title => &self.title,
            DcElement::Creator => &self.creator,
            DcElement::Subject => &self.subject,
            DcElement::Description => &self.description,
            DcElement::Publisher => &self.publisher,
            DcElement::Contributor => &self.contributor,
            DcElement::Date => &self.date,
            DcElement::Type => &self.type_,
            DcElement::Language => &self.language,
            DcElement::Coverage => &self.coverage,
            DcElement::Rights => &self.rights,
            DcElement::Identifier => &self.identifier,
        }
    }

    pub fn get_mut(&mut self, e: DcElement) -> &mut Vec<String> {
        match e {
            DcElement::Title => &mut self.title,
            DcElement::Creator => &mut self.creator,
            DcElement::Subject => &mut self.subject,
            DcElement::Description => &mut self.description,
            DcElement::Publisher => &mut self.publisher,
            DcElement::Contributor => &mut self.contributor,
            DcElement::Date => &mut self.date,
            DcElement::Type => &mut self.type_,
            DcElement::Language => &mut self.language,
            DcElement::Coverage => &mut self.coverage,
            DcElement::Rights => &mut self.rights,
            DcElement::Identifier => &mut self.identifier,
        }
    }
}

pub fn build_dc(record: &DublinCoreRecord) -> String {
    let mut out = String::new();
    out.push_str("<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n");
    out.push_str(&format!(
        "<oai_dc:dc xmlns:oai_dc=\"{OAI_DC_NAMESPACE}\" xmlns:dc=\"{DC_NAMESPACE}\">\n"
    ));
    for e in DcElement::ALL {
        for value in record.get(e) {
            out.push_str(&format!("  <dc:{0}>{1}</dc:{0}>\n", e.as_str(), escape(value)));
        }
    }
    out.push_str("</oai_dc:dc>\n");
    out
}

pub fn parse_dc(bytes: &[u8]) -> Result<DublinCoreRecord, XmlError> {
    let root = parse_document(bytes)?;
    if !root.is(OAI_DC_NAMESPACE, "dc") {
        return Err(XmlError::schema(&root.path, "root must be oai_dc:dc"));
    }
    let mut record = DublinCoreRecord::default();
    for child in &root.children {
        if child.namespace.as_deref() != Some(DC_NAMESPACE) {
            return Err(XmlError::schema(&child.path, "only Dublin Core elements are allowed"));
        }
        let element: DcElement = child
            .name
            .parse()
            .map_err(|_| XmlError::schema(&child.path, format!("unsupported element dc:{}", child.name)))?;
        if !child.children.is_empty() {
            return Err(XmlError::schema(&child.path, "Dublin Core values are plain text"));
        }
        record.get_mut(element).push(child.text.clone());
    }
    Ok(record)
}
