pub const FALLBACK_MIME: &str = "application/octet-stream";

/// Extension (lowercase, without dot) to MIME type.
pub const MIME_TABLE: &[(&str, &str)] = &[
    ("csv", "text/csv"),
    ("doc", "application/msword"),
    ("docx", "application/vnd.openxmlformats-officedocument.wordprocessingml.document"),
    ("gif", "image/gif"),
    ("htm", "text/html"),
    ("html", "text/html"),
    ("jpeg", "image/jpeg"),
    ("jpg", "image/jpeg"),
    ("json", "application/json"),
    ("md", "text/markdown"),
    ("odt", "application/vnd.oasis.opendocument.text"),
    ("pdf", "application/pdf"),
    ("png", "image/png"),
    ("ps", "application/postscript"),
    ("rtf", "application/rtf"),
    ("svg", "image/svg+xml"),
    ("tex", "application/x-tex"),
    ("tif", "image/tiff"),
    ("tiff", "image/tiff"),
    ("txt", "text/plain"),
    ("xml", "text/xml"),
    ("zip", "application/zip"),
];

/// MIME type from the extension of a filename or of a URL's last path
/// segment; query strings and fragments are ignored.
pub fn detect_mime(location_or_filename: &str) -> &'static str {
    let path = location_or_filename
        .split(['?', '#'])
        .next()
        .unwrap_or_default();
    let last = path.rsplit('/').next().unwrap_or_default();
    let Some((stem, ext)) = last.rsplit_once('.') else {
        return FALLBACK_MIME;
    };
    if stem.is_empty() {
        return FALLBACK_MIME;
    }
    let ext = ext.to_ascii_lowercase();
    MIME_TABLE
        .binary_search_by(|(e, _)| (*e).cmp(ext.as_str()))
        .map(|i| MIME_TABLE[i].1)
        .unwrap_or(FALLBACK_MIME)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn table_is_sorted_for_lookup() {
        assert!(MIME_TABLE.windows(2).all(|w| w[0].0 < w[1].0));
    }

    #[test]
    fn urls_and_odd_names() {
        assert_eq!(detect_mime("paper.pdf"), "application/pdf");
        assert_eq!(detect_mime("PAPER.PDF"), "application/pdf");
        assert_eq!(detect_mime("http://host/staging/ab12-a.pdf?x=1#y"), "application/pdf");
        assert_eq!(detect_mime("http://host.org/dir.d/readme"), FALLBACK_MIME);
        assert_eq!(detect_mime(".pdf"), FALLBACK_MIME);
        assert_eq!(detect_mime("data.xyz"), FALLBACK_MIME);
        assert_eq!(detect_mime(""), FALLBACK_MIME);
    }
}
