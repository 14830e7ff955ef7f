use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ExtractError {
    #[error("bytes are not decodable as UTF-8 or Latin-1 text (binary content at offset {0})")]
    UndecodableBytes(usize),
}

const BLOCK_TAGS: &[&str] = &[
    "address", "article", "aside", "blockquote", "br", "caption", "dd", "div", "dl", "dt",
    "document", "fieldset", "figcaption", "figure", "footer", "form", "h1", "h2", "h3", "h4",
    "h5", "h6", "header", "hr", "li", "main", "nav", "ol", "p", "page", "pre", "section",
    "table", "tbody", "td", "text", "tfoot", "th", "thead", "title", "tr", "type", "ul",
];

const SKIP_TAGS: &[&str] = &["script", "style", "head"];

/// Decode as UTF-8, falling back to Latin-1. NUL bytes mark binary payloads
/// (embedded images, PDFs) and are rejected.
fn decode(bytes: &[u8]) -> Result<String, ExtractError> {
    if let Some(pos) = bytes.iter().position(|&b| b == 0) {
        return Err(ExtractError::UndecodableBytes(pos));
    }
    match std::str::from_utf8(bytes) {
        Ok(s) => Ok(s.strip_prefix('\u{feff}').unwrap_or(s).to_string()),
        Err(_) => Ok(bytes.iter().map(|&b| b as char).collect()),
    }
}

fn looks_like_markup(s: &str) -> bool {
    let b = s.as_bytes();
    b.windows(2)
        .any(|w| w[0] == b'<' && (w[1].is_ascii_alphabetic() || w[1] == b'/' || w[1] == b'!'))
}

/// Lowercase tag name and whether it is a closing tag.
fn tag_name(inner: &str) -> (String, bool) {
    let inner = inner.trim_start();
    let (closing, rest) = match inner.strip_prefix('/') {
        Some(r) => (true, r),
        None => (false, inner),
    };
    let name: String = rest
        .chars()
        .take_while(|c| c.is_ascii_alphanumeric())
        .map(|c| c.to_ascii_lowercase())
        .collect();
    (name, closing)
}

fn find_ci(haystack: &str, needle: &str, from: usize) -> Option<usize> {
    let h = haystack.as_bytes();
    let n = needle.as_bytes();
    if n.len() > h.len() {
        return None;
    }
    (from..=h.len() - n.len()).find(|&i| h[i..i + n.len()].eq_ignore_ascii_case(n))
}

fn clean_lines(raw: &str) -> String {
    let mut out = String::with_capacity(raw.len());
    for line in raw.lines() {
        let collapsed = line.split_whitespace().collect::<Vec<_>>().join(" ");
        if collapsed.is_empty() {
            continue;
        }
        if !out.is_empty() {
            out.push('\n');
        }
        out.push_str(&collapsed);
    }
    out
}

/// Neutralize any `<letter` a decoded entity such as `&lt;p` may have produced,
/// so extracted text never contains tag-like sequences.
fn defuse_angles(s: String) -> String {
    if !looks_like_markup(&s) {
        return s;
    }
    let mut out = String::with_capacity(s.len() + 8);
    let mut chars = s.chars().peekable();
    while let Some(c) = chars.next() {
        out.push(c);
        if c == '<' {
            if let Some(&n) = chars.peek() {
                if n.is_ascii_alphabetic() || n == '/' || n == '!' {
                    out.push(' ');
                }
            }
        }
    }
    out
}

/// Extract plain text from an HTML (or SGML-wrapped) filing.
///
/// Script, style and head blocks and comments are dropped; tags are stripped;
/// entities are decoded; block-level elements end a line. Input without any
/// markup is returned as decoded, unchanged.
pub fn extract_text(bytes: &[u8]) -> Result<String, ExtractError> {
    let src = decode(bytes)?;
    if !looks_like_markup(&src) {
        return Ok(src);
    }

    let mut raw = String::with_capacity(src.len() / 2);
    let mut i = 0;
    let b = src.as_bytes();
    while i < b.len() {
        if b[i] != b'<' {
            let next = src[i..].find('<').map_or(b.len(), |p| i + p);
            raw.push_str(&src[i..next]);
            i = next;
            continue;
        }
        if src[i..].starts_with("<!--") {
            i = src[i + 4..].find("-->").map_or(b.len(), |p| i + 4 + p + 3);
            continue;
        }
        let opens_tag = b
            .get(i + 1)
            .is_some_and(|&c| c.is_ascii_alphabetic() || c == b'/' || c == b'!' || c == b'?');
        if !opens_tag {
            raw.push('<');
            i += 1;
            continue;
        }
        let Some(end) = src[i..].find('>').map(|p| i + p) else {
            // Unterminated tag: drop the remainder.
            break;
        };
        let (name, closing) = tag_name(&src[i + 1..end]);
        i = end + 1;
        if !closing && SKIP_TAGS.contains(&name.as_str()) {
            let close = format!("</{name}");
            i = match find_ci(&src, &close, i) {
                Some(p) => src[p..].find('>').map_or(b.len(), |q| p + q + 1),
                None => b.len(),
            };
            continue;
        }
        if BLOCK_TAGS.contains(&name.as_str()) {
            raw.push('\n');
        } else {
            raw.push(' ');
        }
    }

    let decoded = html_escape::decode_html_entities(&raw).replace('\u{a0}', " ");
    Ok(defuse_angles(clean_lines(&decoded)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn entity_and_tags() {
        assert_eq!(extract_text(b"<p>Risk&amp;Co</p>").unwrap(), "Risk&Co");
    }

    #[test]
    fn script_removed() {
        assert_eq!(extract_text(b"<script>x=1</script><div>ok</div>").unwrap(), "ok");
        assert_eq!(
            extract_text(b"<html><head><title>t</title><style>p{}</style></head><body>b</body></html>").unwrap(),
            "b"
        );
    }

    #[test]
    fn plain_text_passthrough() {
        assert_eq!(extract_text(b"hello").unwrap(), "hello");
        assert_eq!(extract_text(b"a < b and  c\n\nd").unwrap(), "a < b and  c\n\nd");
    }

    #[test]
    fn block_boundaries_become_lines() {
        let t = extract_text(b"<div>Item 1A.</div><p>Risk <b>factors</b></p><br>next").unwrap();
        assert_eq!(t, "Item 1A.\nRisk factors\nnext");
    }

    #[test]
    fn comments_and_numeric_entities() {
        let t = extract_text(b"<p>a<!-- <p>hidden</p> -->&#8217;s &#x41; &nbsp;x</p>").unwrap();
        assert_eq!(t, "a\u{2019}s A x");
    }

    #[test]
    fn latin1_fallback() {
        let t = extract_text(b"<p>caf\xe9</p>").unwrap();
        assert_eq!(t, "caf\u{e9}");
    }

    #[test]
    fn nul_bytes_rejected() {
        assert_eq!(extract_text(b"<p>x\0y</p>"), Err(ExtractError::UndecodableBytes(4)));
    }

    #[test]
    fn escaped_markup_is_defused() {
        let t = extract_text(b"<p>&lt;script&gt; tag</p>").unwrap();
        assert!(!looks_like_markup(&t));
        assert!(t.contains("script"));
    }

    proptest! {
        #[test]
        fn output_has_no_tag_openers(s in "[<>a-zA-Z/!&;# \n-]{0,80}") {
            if let Ok(t) = extract_text(s.as_bytes()) {
                let bytes = t.as_bytes();
                prop_assert!(!bytes.windows(2).any(|w| w[0] == b'<' && w[1].is_ascii_alphabetic()), "{:?} -> {:?}", s, t);
            }
        }
    }
}
