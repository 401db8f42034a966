use std::time::Duration;

/// Bytes fetched from a location, with the content type the transport
/// reported, if any.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Fetched {
    pub bytes: Vec<u8>,
    pub content_type: Option<String>,
}

/// Fetches by-reference content. Called outside any repository lock.
pub trait LocationResolver: Send + Sync {
    fn fetch(&self, location: &str) -> Result<Fetched, String>;
}

/// Resolves `file://` paths from disk and `http(s)://` URLs over the network.
#[derive(Debug, Clone)]
pub struct DefaultResolver {
    pub timeout: Duration,
}

impl Default for DefaultResolver {
    fn default() -> Self {
        DefaultResolver {
            timeout: Duration::from_secs(30),
        }
    }
}

impl LocationResolver for DefaultResolver {
    fn fetch(&self, location: &str) -> Result<Fetched, String> {
        if let Some(path) = location.strip_prefix("file://") {
            let bytes = std::fs::read(path).map_err(|e| e.to_string())?;
            return Ok(Fetched {
                bytes,
                content_type: None,
            });
        }
        if !(location.starts_with("http://") || location.starts_with("https://")) {
            return Err("only file, http and https locations are supported".into());
        }
        let client = reqwest::blocking::Client::builder()
            .timeout(self.timeout)
            .build()
            .map_err(|e| e.to_string())?;
        let response = client.get(location).send().map_err(|e| e.to_string())?;
        if !response.status().is_success() {
            return Err(format!("server answered {}", response.status()));
        }
        let content_type = response
            .headers()
            .get(reqwest::header::CONTENT_TYPE)
            .and_then(|v| v.to_str().ok())
            .map(essence);
        let bytes = response.bytes().map_err(|e| e.to_string())?.to_vec();
        Ok(Fetched { bytes, content_type })
    }
}

/// `text/xml; charset=utf-8` -> `text/xml`
pub fn essence(content_type: &str) -> String {
    content_type
        .split(';')
        .next()
        .unwrap_or_default()
        .trim()
        .to_ascii_lowercase()
}
