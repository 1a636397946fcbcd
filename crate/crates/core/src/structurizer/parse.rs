//! Response parsing: the strict single-shot format first, then a tolerant scan.

use serde::{Deserialize, Serialize};

use super::schema::CategoryKey;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ParseStatus {
    Strict,
    Tolerant,
    Fallback,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParseFailure {
    pub raw: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Parsed {
    pub code: u8,
    pub status: ParseStatus,
}

fn skip_ws(s: &str) -> &str {
    s.trim_start_matches(|c: char| c.is_whitespace())
}

/// Leading ASCII digits as a code; `None` when absent or out of range.
fn leading_integer(s: &str) -> Option<(u8, &str)> {
    let n = s.bytes().take_while(u8::is_ascii_digit).count();
    if n == 0 {
        return None;
    }
    let code = s[..n].parse::<u8>().ok()?;
    Some((code, &s[n..]))
}

/// `{` ws `"` key `=` integer `"` ws `}`, with surrounding whitespace trimmed.
pub fn parse_strict(key: CategoryKey, raw: &str) -> Option<u8> {
    let s = raw.trim();
    let s = skip_ws(s.strip_prefix('{')?);
    let s = s.strip_prefix('"')?;
    let s = s.strip_prefix(key.as_str())?;
    let s = s.strip_prefix('=')?;
    let (code, s) = leading_integer(s)?;
    let s = skip_ws(s.strip_prefix('"')?);
    (s == "}").then_some(code)
}

/// First `key=<integer>` anywhere in the text.
pub fn parse_tolerant(key: CategoryKey, raw: &str) -> Option<u8> {
    let needle = format!("{}=", key.as_str());
    let at = raw.find(&needle)?;
    let rest = &raw[at + needle.len()..];
    if !rest.starts_with(|c: char| c.is_ascii_digit()) {
        return None;
    }
    leading_integer(rest).map(|(c, _)| c)
}

/// Strict, then tolerant. The code must belong to the category's schema.
pub fn parse_response(key: CategoryKey, raw: &str) -> Result<Parsed, ParseFailure> {
    let schema = key.schema();
    let attempt = parse_strict(key, raw)
        .map(|code| (code, ParseStatus::Strict))
        .or_else(|| parse_tolerant(key, raw).map(|code| (code, ParseStatus::Tolerant)));
    match attempt {
        Some((code, status)) if schema.allows(code) => Ok(Parsed { code, status }),
        _ => Err(ParseFailure { raw: raw.to_string() }),
    }
}
