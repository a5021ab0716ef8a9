//! iodef value validation and triage.

use serde::{Deserialize, Serialize};

/// Verdict for an iodef value: either a usable report target or a triage of
/// what the operator probably meant.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum IodefVerdict {
    /// Well-formed URL with a scheme CAs will act on.
    Valid { scheme: String },
    /// URL-shaped with a scheme nothing will deliver to (mailinto:, mail:, ...).
    InvalidScheme { scheme: String },
    /// A bare email address without the mailto: scheme.
    LikelyEmail,
    /// A bare host/path without the http(s): scheme.
    LikelyHttp,
    /// Nothing recognizable.
    Garbage,
}

const VALID_SCHEMES: [&str; 3] = ["mailto", "http", "https"];

/// Validates an iodef record value. Total over arbitrary text.
pub fn validate_iodef(value: &str) -> IodefVerdict {
    let trimmed = value.trim();
    if let Ok(parsed) = url::Url::parse(trimmed) {
        let scheme = parsed.scheme().to_ascii_lowercase();
        if VALID_SCHEMES.contains(&scheme.as_str()) {
            return IodefVerdict::Valid { scheme };
        }
    }
    let scheme_prefix = scheme_prefix(trimmed);
    if scheme_prefix.is_none() && trimmed.contains('@') {
        return IodefVerdict::LikelyEmail;
    }
    if trimmed.starts_with("//") || looks_like_bare_host(trimmed) {
        return IodefVerdict::LikelyHttp;
    }
    match scheme_prefix {
        Some(scheme) => IodefVerdict::InvalidScheme { scheme },
        None => IodefVerdict::Garbage,
    }
}

/// Leading `scheme:` token per RFC 3986 (`ALPHA *( ALPHA / DIGIT / "+" / "-" / "." )`).
fn scheme_prefix(value: &str) -> Option<String> {
    let bytes = value.as_bytes();
    if !bytes.first()?.is_ascii_alphabetic() {
        return None;
    }
    for (i, &b) in bytes.iter().enumerate().skip(1) {
        match b {
            b':' => return Some(value[..i].to_ascii_lowercase()),
            b if b.is_ascii_alphanumeric() || b == b'+' || b == b'-' || b == b'.' => {}
            _ => return None,
        }
    }
    None
}

/// `host.tld[:port][/...]` shapes that the URL parser would misread as an
/// opaque scheme (dots are legal in schemes).
fn looks_like_bare_host(value: &str) -> bool {
    let head = value
        .split(|c| c == '/' || c == ':')
        .next()
        .unwrap_or_default();
    let mut labels = head.split('.');
    let Some(last) = head.rsplit('.').next() else {
        return false;
    };
    head.contains('.')
        && !head.contains('@')
        && labels.all(|l| !l.is_empty() && l.bytes().all(|b| b.is_ascii_alphanumeric() || b == b'-'))
        && last.len() >= 2
        && last.bytes().all(|b| b.is_ascii_alphabetic())
}
