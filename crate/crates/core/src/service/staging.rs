use std::fs;
use std::io::Write;
use std::path::PathBuf;
use std::sync::Arc;
use std::time::{Duration, SystemTime};

use rand::RngCore;
use serde::{Deserialize, Serialize};

use crate::repository::{detect_mime, DefaultResolver, Fetched, LocationResolver};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct StagingRef {
    pub name: String,
    pub url: String,
    pub size: u64,
    pub mime_type: String,
    pub uploaded_by: String,
}

/// Upload directory whose files are served at `<base>/staging/<name>`
/// until consumed or older than the TTL.
pub struct Staging {
    dir: PathBuf,
    base_url: String,
    ttl: Duration,
}

impl Staging {
    pub fn open(dir: PathBuf, base_url: &str, ttl: Duration) -> std::io::Result<Staging> {
        fs::create_dir_all(&dir)?;
        Ok(Staging {
            dir,
            base_url: base_url.trim_end_matches('/').to_owned(),
            ttl,
        })
    }

    pub fn dir(&self) -> &PathBuf {
        &self.dir
    }

    pub fn store(&self, filename: &str, bytes: &[u8], uploaded_by: &str) -> std::io::Result<StagingRef> {
        let mut prefix = [0u8; 8];
        rand::thread_rng().fill_bytes(&mut prefix);
        let name = format!("{}-{}", hex::encode(prefix), sanitize(filename));
        let tmp = self.dir.join(format!(".{name}.part"));
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
        fs::rename(&tmp, self.dir.join(&name))?;
        Ok(StagingRef {
            url: self.url(&name),
            mime_type: detect_mime(filename).to_owned(),
            size: bytes.len() as u64,
            uploaded_by: uploaded_by.to_owned(),
            name,
        })
    }

    pub fn url(&self, name: &str) -> String {
        format!("{}/staging/{}", self.base_url, name)
    }

    /// Maps one of our own URLs back to a staging name.
    pub fn name_of(&self, location: &str) -> Option<String> {
        let name = location.strip_prefix(&self.base_url)?.strip_prefix("/staging/")?;
        valid_name(name).then(|| name.to_owned())
    }

    fn expired(&self, modified: SystemTime) -> bool {
        SystemTime::now().duration_since(modified).unwrap_or_default() > self.ttl
    }

    /// Contents of a live staging file.
    pub fn read(&self, name: &str) -> Option<Vec<u8>> {
        if !valid_name(name) {
            return None;
        }
        let path = self.dir.join(name);
        let modified = fs::metadata(&path).and_then(|m| m.modified()).ok()?;
        if self.expired(modified) {
            let _ = fs::remove_file(&path);
            return None;
        }
        fs::read(path).ok()
    }

    pub fn consume(&self, name: &str) {
        if valid_name(name) {
            if let Err(e) = fs::remove_file(self.dir.join(name)) {
                log::warn!("could not remove staging file {name}: {e}");
            }
        }
    }

    /// Deletes expired files and leftovers of interrupted uploads.
    pub fn sweep(&self) -> usize {
        let Ok(entries) = fs::read_dir(&self.dir) else { return 0 };
        let mut removed = 0;
        for entry in entries.flatten() {
            let stale = entry
                .metadata()
                .and_then(|m| m.modified())
                .map(|t| self.expired(t))
                .unwrap_or(false);
            if stale && fs::remove_file(entry.path()).is_ok() {
                removed += 1;
            }
        }
        removed
    }

    /// Names of the files currently on disk, sorted.
    pub fn list(&self) -> Vec<String> {
        let mut names: Vec<String> = fs::read_dir(&self.dir)
            .map(|it| {
                it.flatten()
                    .map(|e| e.file_name().to_string_lossy().into_owned())
                    .filter(|n| !n.starts_with('.'))
                    .collect()
            })
            .unwrap_or_default();
        names.sort();
        names
    }
}

fn sanitize(filename: &str) -> String {
    let base = filename.rsplit(['/', '\\']).next().unwrap_or_default();
    let clean: String = base
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || matches!(c, '.' | '_' | '-') { c } else { '_' })
        .collect();
    let clean = clean.trim_start_matches('.');
    if clean.is_empty() { "upload".to_owned() } else { clean.chars().take(100).collect() }
}

fn valid_name(name: &str) -> bool {
    !name.is_empty()
        && !name.starts_with('.')
        && name.chars().all(|c| c.is_ascii_alphanumeric() || matches!(c, '.' | '_' | '-'))
}

/// Reads the server's own staging URLs from disk; everything else goes to
/// the default resolver.
pub struct StagingResolver {
    pub staging: Arc<Staging>,
    pub fallback: DefaultResolver,
}

impl LocationResolver for StagingResolver {
    fn fetch(&self, location: &str) -> Result<Fetched, String> {
        match self.staging.name_of(location) {
            Some(name) => self
                .staging
                .read(&name)
                .map(|bytes| Fetched {
                    bytes,
                    content_type: None,
                })
                .ok_or_else(|| format!("staging file '{name}' is gone")),
            None => self.fallback.fetch(location),
        }
    }
}
