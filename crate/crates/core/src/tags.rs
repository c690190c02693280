//! Extraction of `<tag>...</tag>` spans from raw model output.

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TagError {
    Missing,
    Multiple,
}

/// Returns the content of the single `<tag>...</tag>` span in `text`.
///
/// More than one opening or closing tag is rejected rather than resolved to
/// the first occurrence.
pub fn extract_single<'a>(text: &'a str, tag: &str) -> Result<&'a str, TagError> {
    let open = format!("<{tag}>");
    let close = format!("</{tag}>");
    let opens = text.matches(&open).count();
    let closes = text.matches(&close).count();
    if opens > 1 || closes > 1 {
        return Err(TagError::Multiple);
    }
    let start = text.find(&open).ok_or(TagError::Missing)? + open.len();
    let end = text[start..].find(&close).ok_or(TagError::Missing)? + start;
    Ok(&text[start..end])
}

/// All `<q{n}>...</q{n}>` spans in document order as `(n, content)`.
///
/// Returns `None` when an opening tag has no matching close.
pub fn numbered_spans(text: &str, prefix: &str) -> Option<Vec<(u32, String)>> {
    let mut out = Vec::new();
    let mut rest = text;
    let head = format!("<{prefix}");
    while let Some(pos) = rest.find(&head) {
        let after = &rest[pos + head.len()..];
        let digits: String = after.chars().take_while(|c| c.is_ascii_digit()).collect();
        if digits.is_empty() || !after[digits.len()..].starts_with('>') {
            rest = &rest[pos + head.len()..];
            continue;
        }
        let n: u32 = digits.parse().ok()?;
        let body_start = digits.len() + 1;
        let close = format!("</{prefix}{digits}>");
        let body_end = after[body_start..].find(&close)? + body_start;
        out.push((n, after[body_start..body_end].to_string()));
        rest = &after[body_end + close.len()..];
    }
    Some(out)
}
