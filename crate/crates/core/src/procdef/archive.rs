use std::collections::BTreeMap;
use std::io::{Cursor, Read, Write};

use zip::write::SimpleFileOptions;
use zip::{ZipArchive, ZipWriter};

use super::format::{parse_definition, parse_layout};
use super::{LayoutMetadata, ProcdefError, ProcessDefinition};
use crate::xml::XmlError;

pub const DEFINITION_ENTRY: &str = "processdefinition.xml";
pub const LAYOUT_ENTRY: &str = "layout.xml";
pub const IMAGE_ENTRY: &str = "processimage.png";

/// Zip container: entry name (`/`-separated) to raw bytes.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ProcessArchive {
    pub entries: BTreeMap<String, Vec<u8>>,
}

impl ProcessArchive {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_entry(mut self, name: impl Into<String>, bytes: impl Into<Vec<u8>>) -> Self {
        self.entries.insert(name.into(), bytes.into());
        self
    }

    pub fn from_zip(bytes: &[u8]) -> Result<Self, ProcdefError> {
        let malformed = |e: zip::result::ZipError| ProcdefError::MalformedZip(e.to_string());
        let mut zip = ZipArchive::new(Cursor::new(bytes)).map_err(malformed)?;
        let mut entries = BTreeMap::new();
        for i in 0..zip.len() {
            let mut file = zip.by_index(i).map_err(malformed)?;
            if file.is_dir() {
                continue;
            }
            let name = file.name().to_owned();
            let mut buf = Vec::with_capacity(file.size() as usize);
            file.read_to_end(&mut buf)
                .map_err(|e| ProcdefError::MalformedZip(e.to_string()))?;
            if entries.insert(name.clone(), buf).is_some() {
                return Err(ProcdefError::MalformedZip(format!("duplicate entry '{name}'")));
            }
        }
        Ok(ProcessArchive { entries })
    }

    pub fn to_zip(&self) -> Vec<u8> {
        let mut writer = ZipWriter::new(Cursor::new(Vec::new()));
        let options = SimpleFileOptions::default();
        for (name, bytes) in &self.entries {
            writer
                .start_file(name.as_str(), options)
                .and_then(|_| writer.write_all(bytes).map_err(Into::into))
                .expect("writing to an in-memory zip");
        }
        writer.finish().expect("finishing an in-memory zip").into_inner()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParsedArchive {
    pub definition: ProcessDefinition,
    pub layout: Option<LayoutMetadata>,
    pub image: Option<Vec<u8>>,
    /// Every entry other than the definition, layout and image, untouched.
    pub attachments: BTreeMap<String, Vec<u8>>,
}

/// Reads a process archive: definition, optional layout and image, and the
/// remaining entries as opaque attachments.
pub fn parse_archive(archive_bytes: &[u8]) -> Result<ParsedArchive, ProcdefError> {
    let mut archive = ProcessArchive::from_zip(archive_bytes)?;
    let definition_bytes = archive
        .entries
        .remove(DEFINITION_ENTRY)
        .ok_or(ProcdefError::MissingDefinition)?;
    let definition = parse_definition(&definition_bytes)?;
    let layout = match archive.entries.remove(LAYOUT_ENTRY) {
        Some(bytes) => {
            let layout = parse_layout(&bytes)?;
            for (i, name) in layout.per_node.keys().enumerate() {
                if definition.node(name).is_none() {
                    return Err(XmlError::schema(
                        format!("/layout/node[{}]@name", i + 1),
                        format!("layout places unknown node '{name}'"),
                    )
                    .into());
                }
            }
            Some(layout)
        }
        None => None,
    };
    let image = archive.entries.remove(IMAGE_ENTRY);
    Ok(ParsedArchive {
        definition,
        layout,
        image,
        attachments: archive.entries,
    })
}
