//! CAA record parsing, validation, and issuer matching.

mod iodef;
mod mapping;
mod matcher;
mod value;

pub use iodef::{validate_iodef, IodefVerdict};
pub use mapping::{load_ca_mapping, CaMapping, MappingError};
pub use matcher::{
    explain_caa, match_caa, relevant_caa_set, CaIdentity, CaaMatchState, CaaOutcome, NameKind,
    RelevantCaaSet,
};
pub use value::{parse_issue_value, IssueValue, IssueValueKind};

use serde::{Deserialize, Serialize};

/// Tags a CA is expected to honor per RFC 8659.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum CaaTagKind {
    Issue,
    IssueWild,
    Iodef,
    Unknown,
}

/// Triage for tags outside RFC 8659, mirroring how non-standard tags fall
/// into recognized-elsewhere extensions, typos, and formatting junk.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum UnknownTagKind {
    /// Defined outside RFC 8659 (CA/B Baseline Requirements contact tags,
    /// S/MIME issuemail).
    UnrecognizedKnownElsewhere,
    /// Within edit distance 2 of a standard tag.
    Misspelling,
    /// Contains characters outside `[a-z0-9]`.
    MalformedFormat,
    /// Well-formed but matching nothing we know.
    Novel,
}

/// Tags defined by documents other than RFC 8659 that CAs may recognize.
const KNOWN_ELSEWHERE_TAGS: [&str; 3] = ["contactemail", "contactphone", "issuemail"];

/// Reference set for misspelling detection.
const STANDARD_TAGS: [&str; 5] = ["issue", "issuewild", "iodef", "contactemail", "contactphone"];

/// One parsed CAA resource record. Malformation never fails the parse; it is
/// captured in the record itself.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CaaRecord {
    pub flags: u8,
    pub tag: String,
    pub value: Vec<u8>,
    pub tag_kind: CaaTagKind,
    pub unknown_kind: Option<UnknownTagKind>,
    /// Parsed issue-value, present iff the tag is issue/issuewild.
    pub issue_value: Option<IssueValue>,
}

impl CaaRecord {
    pub fn issuer_critical(&self) -> bool {
        self.flags & 0x80 != 0
    }

    pub fn value_text(&self) -> String {
        String::from_utf8_lossy(&self.value).into_owned()
    }

    /// Canonical presentation format, `<flags> <tag> "<value>"`, with RFC 1035
    /// character-string escaping in the value.
    pub fn to_presentation(&self) -> String {
        let mut out = format!("{} {} \"", self.flags, self.tag);
        for &b in &self.value {
            match b {
                b'"' => out.push_str("\\\""),
                b'\\' => out.push_str("\\\\"),
                0x20..=0x7e => out.push(b as char),
                other => out.push_str(&format!("\\{other:03}")),
            }
        }
        out.push('"');
        out
    }
}

/// Classifies a raw record. Total: every input yields a record.
pub fn parse_caa_record(flags: u8, tag: &str, value: &[u8]) -> CaaRecord {
    let lower = tag.to_ascii_lowercase();
    let (tag_kind, unknown_kind) = match lower.as_str() {
        "issue" => (CaaTagKind::Issue, None),
        "issuewild" => (CaaTagKind::IssueWild, None),
        "iodef" => (CaaTagKind::Iodef, None),
        _ => (CaaTagKind::Unknown, Some(classify_unknown_tag(&lower))),
    };
    let issue_value = matches!(tag_kind, CaaTagKind::Issue | CaaTagKind::IssueWild)
        .then(|| parse_issue_value(value));
    CaaRecord {
        flags,
        tag: tag.to_string(),
        value: value.to_vec(),
        tag_kind,
        unknown_kind,
        issue_value,
    }
}

fn classify_unknown_tag(lower: &str) -> UnknownTagKind {
    if KNOWN_ELSEWHERE_TAGS.contains(&lower) {
        return UnknownTagKind::UnrecognizedKnownElsewhere;
    }
    // Formatting junk (quotes, spaces, punctuation) is malformed even when it
    // sits close to a standard tag in edit distance.
    if lower.is_empty() || !lower.bytes().all(|b| b.is_ascii_lowercase() || b.is_ascii_digit()) {
        return UnknownTagKind::MalformedFormat;
    }
    if STANDARD_TAGS
        .iter()
        .any(|standard| strsim::levenshtein(lower, standard) <= 2)
    {
        return UnknownTagKind::Misspelling;
    }
    UnknownTagKind::Novel
}

#[derive(Debug, thiserror::Error)]
pub enum CaaPresentationError {
    #[error("CAA presentation line {0:?}: {1}")]
    Invalid(String, String),
}

/// Parses the presentation format `<flags> <tag> <value>` where the value may
/// be a quoted character-string with escapes or a bare token.
pub fn parse_presentation(line: &str) -> Result<CaaRecord, CaaPresentationError> {
    let invalid = |detail: &str| CaaPresentationError::Invalid(line.to_string(), detail.into());
    let trimmed = line.trim();
    let mut parts = trimmed.splitn(3, char::is_whitespace);
    let flags_text = parts.next().ok_or_else(|| invalid("missing flags"))?;
    let tag = parts.next().ok_or_else(|| invalid("missing tag"))?;
    let value_text = parts.next().unwrap_or("").trim_start();
    let flags: u8 = flags_text
        .parse()
        .map_err(|_| invalid("flags must be an integer 0-255"))?;
    let value = unescape_char_string(value_text).map_err(|e| invalid(&e))?;
    Ok(parse_caa_record(flags, tag, &value))
}

fn unescape_char_string(text: &str) -> Result<Vec<u8>, String> {
    let bytes = text.as_bytes();
    let inner = if bytes.len() >= 2 && bytes[0] == b'"' && bytes[bytes.len() - 1] == b'"' {
        &bytes[1..bytes.len() - 1]
    } else {
        bytes
    };
    let mut out = Vec::with_capacity(inner.len());
    let mut i = 0;
    while i < inner.len() {
        match inner[i] {
            b'\\' => {
                let rest = &inner[i + 1..];
                if rest.len() >= 3 && rest[..3].iter().all(u8::is_ascii_digit) {
                    let code: u32 = std::str::from_utf8(&rest[..3]).unwrap().parse().unwrap();
                    if code > 255 {
                        return Err(format!("escape \\{code} out of range"));
                    }
                    out.push(code as u8);
                    i += 4;
                } else if !rest.is_empty() {
                    out.push(rest[0]);
                    i += 2;
                } else {
                    return Err("dangling backslash".into());
                }
            }
            b => {
                out.push(b);
                i += 1;
            }
        }
    }
    Ok(out)
}
