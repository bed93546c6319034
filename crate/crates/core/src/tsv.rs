//! Field escaping for the tab-separated file formats.
//!
//! N-grams may contain any character, including tabs and newlines, so fields
//! are escaped as `\t`, `\n` and `\\` before they are written to a TSV row.

use crate::error::{Error, Result};

/// Escapes tabs, newlines and backslashes in a field.
pub fn escape_field(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for ch in s.chars() {
        match ch {
            '\t' => out.push_str("\\t"),
            '\n' => out.push_str("\\n"),
            '\\' => out.push_str("\\\\"),
            _ => out.push(ch),
        }
    }
    out
}

/// Reverses [`escape_field`]. Rejects unknown or dangling escapes.
pub fn unescape_field(s: &str) -> Result<String> {
    let mut out = String::with_capacity(s.len());
    let mut chars = s.chars();
    while let Some(ch) = chars.next() {
        if ch != '\\' {
            out.push(ch);
            continue;
        }
        match chars.next() {
            Some('t') => out.push('\t'),
            Some('n') => out.push('\n'),
            Some('\\') => out.push('\\'),
            Some(other) => {
                return Err(Error::Format(format!("unknown escape `\\{other}`")));
            }
            None => return Err(Error::Format("dangling backslash".into())),
        }
    }
    Ok(out)
}
