//! issue/issuewild value parsing.
//!
//! Grammar per RFC 8659 section 4.2:
//!
//! ```text
//! issue-value = *WSP [issuer-domain-name *WSP] [";" *WSP [parameters *WSP]]
//! issuer-domain-name = label *("." label)
//! label = (ALPHA / DIGIT) *( *("-") (ALPHA / DIGIT))
//! parameters = (parameter *WSP ";" *WSP parameters) / parameter
//! parameter = tag *WSP "=" *WSP value
//! tag = (ALPHA / DIGIT) *( *("-") (ALPHA / DIGIT))
//! value = *(%x21-3A / %x3C-7E)
//! ```
//!
//! Grammar violations never fail the parse: the result is `Malformed`, which
//! downstream matching treats exactly like an explicit-empty value.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum IssueValueKind {
    /// Names a CA that may issue.
    Issuer,
    /// No issuer named: issuance forbidden. Covers `";"` and the empty value.
    ExplicitEmpty,
    /// Grammar violation; semantically equivalent to an empty value.
    Malformed,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IssueValue {
    pub kind: IssueValueKind,
    /// Lowercased issuer domain, present iff kind is `Issuer`.
    pub issuer_domain: Option<String>,
    pub parameters: Vec<(String, String)>,
}

impl IssueValue {
    fn malformed() -> Self {
        Self {
            kind: IssueValueKind::Malformed,
            issuer_domain: None,
            parameters: Vec::new(),
        }
    }

    /// The value forbids issuance when taken on its own (empty or malformed).
    pub fn is_empty_equivalent(&self) -> bool {
        self.kind != IssueValueKind::Issuer
    }
}

/// Total parse of a raw issue/issuewild value.
pub fn parse_issue_value(value: &[u8]) -> IssueValue {
    Parser { input: value, pos: 0 }
        .issue_value()
        .unwrap_or_else(IssueValue::malformed)
}

struct Parser<'a> {
    input: &'a [u8],
    pos: usize,
}

impl<'a> Parser<'a> {
    fn peek(&self) -> Option<u8> {
        self.input.get(self.pos).copied()
    }

    fn bump(&mut self) -> Option<u8> {
        let b = self.peek()?;
        self.pos += 1;
        Some(b)
    }

    fn skip_wsp(&mut self) {
        while matches!(self.peek(), Some(b' ') | Some(b'\t')) {
            self.pos += 1;
        }
    }

    fn at_end(&self) -> bool {
        self.pos == self.input.len()
    }

    fn issue_value(&mut self) -> Option<IssueValue> {
        self.skip_wsp();
        let issuer_domain = if self.peek().map(|b| b.is_ascii_alphanumeric()) == Some(true) {
            let domain = self.issuer_domain_name()?;
            self.skip_wsp();
            Some(domain)
        } else {
            None
        };
        let mut parameters = Vec::new();
        if self.peek() == Some(b';') {
            self.bump();
            self.skip_wsp();
            if self.peek().map(|b| b.is_ascii_alphanumeric()) == Some(true) {
                parameters = self.parameters()?;
                self.skip_wsp();
            }
        }
        if !self.at_end() {
            return None;
        }
        Some(match issuer_domain {
            Some(domain) => IssueValue {
                kind: IssueValueKind::Issuer,
                issuer_domain: Some(domain),
                parameters,
            },
            None => IssueValue {
                kind: IssueValueKind::ExplicitEmpty,
                issuer_domain: None,
                parameters,
            },
        })
    }

    fn issuer_domain_name(&mut self) -> Option<String> {
        let mut name = self.label()?;
        while self.peek() == Some(b'.') {
            self.bump();
            name.push('.');
            name.push_str(&self.label()?);
        }
        Some(name)
    }

    /// label = (ALPHA / DIGIT) *( *("-") (ALPHA / DIGIT))
    fn label(&mut self) -> Option<String> {
        let mut out = String::new();
        let first = self.bump()?;
        if !first.is_ascii_alphanumeric() {
            return None;
        }
        out.push(first.to_ascii_lowercase() as char);
        loop {
            let mut hyphens = 0;
            while self.peek() == Some(b'-') {
                self.bump();
                hyphens += 1;
            }
            match self.peek() {
                Some(b) if b.is_ascii_alphanumeric() => {
                    self.bump();
                    for _ in 0..hyphens {
                        out.push('-');
                    }
                    out.push(b.to_ascii_lowercase() as char);
                }
                // A label cannot end in a hyphen.
                _ if hyphens > 0 => return None,
                _ => return Some(out),
            }
        }
    }

    fn parameters(&mut self) -> Option<Vec<(String, String)>> {
        let mut out = vec![self.parameter()?];
        loop {
            let checkpoint = self.pos;
            self.skip_wsp();
            if self.peek() != Some(b';') {
                self.pos = checkpoint;
                return Some(out);
            }
            self.bump();
            self.skip_wsp();
            out.push(self.parameter()?);
        }
    }

    fn parameter(&mut self) -> Option<(String, String)> {
        let tag = self.label()?;
        self.skip_wsp();
        if self.bump() != Some(b'=') {
            return None;
        }
        self.skip_wsp();
        let mut value = String::new();
        while let Some(b) = self.peek() {
            if (0x21..=0x3a).contains(&b) || (0x3c..=0x7e).contains(&b) {
                value.push(b as char);
                self.bump();
            } else {
                break;
            }
        }
        Some((tag, value))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn issuer(value: &str) -> Option<String> {
        let parsed = parse_issue_value(value.as_bytes());
        assert_eq!(parsed.kind, IssueValueKind::Issuer, "{value:?}");
        parsed.issuer_domain
    }

    fn kind(value: &str) -> IssueValueKind {
        parse_issue_value(value.as_bytes()).kind
    }

    #[test]
    fn plain_issuer() {
        assert_eq!(issuer("letsencrypt.org").unwrap(), "letsencrypt.org");
        assert_eq!(issuer("  LetsEncrypt.ORG  ").unwrap(), "letsencrypt.org");
        assert_eq!(issuer("a-b.c--d.org").unwrap(), "a-b.c--d.org");
    }

    #[test]
    fn explicit_empty() {
        assert_eq!(kind(";"), IssueValueKind::ExplicitEmpty);
        assert_eq!(kind(" ; "), IssueValueKind::ExplicitEmpty);
        // Zero-length and all-whitespace values contain no issuer either.
        assert_eq!(kind(""), IssueValueKind::ExplicitEmpty);
        assert_eq!(kind("   "), IssueValueKind::ExplicitEmpty);
    }

    #[test]
    fn parameters_after_issuer() {
        let parsed = parse_issue_value(b"sectigo.com; accounturi=https://a/b");
        assert_eq!(parsed.kind, IssueValueKind::Issuer);
        assert_eq!(parsed.issuer_domain.as_deref(), Some("sectigo.com"));
        assert_eq!(
            parsed.parameters,
            vec![("accounturi".to_string(), "https://a/b".to_string())]
        );

        let multi = parse_issue_value(b"ca.example ; a=1; b = 2x");
        assert_eq!(multi.parameters.len(), 2);
        assert_eq!(multi.parameters[1], ("b".to_string(), "2x".to_string()));
    }

    #[test]
    fn parameters_without_issuer() {
        let parsed = parse_issue_value(b"; policy=ev");
        assert_eq!(parsed.kind, IssueValueKind::ExplicitEmpty);
        assert_eq!(parsed.parameters.len(), 1);
    }

    #[test]
    fn malformed_values() {
        assert_eq!(kind("letsencrypt .org"), IssueValueKind::Malformed);
        assert_eq!(kind(".example.org"), IssueValueKind::Malformed);
        assert_eq!(kind("example..org"), IssueValueKind::Malformed);
        assert_eq!(kind("example.org."), IssueValueKind::Malformed);
        assert_eq!(kind("-bad.example"), IssueValueKind::Malformed);
        assert_eq!(kind("bad-.example"), IssueValueKind::Malformed);
        assert_eq!(kind("ca.example; x"), IssueValueKind::Malformed);
        assert_eq!(kind("ca.example; x=1;"), IssueValueKind::Malformed);
        assert_eq!(kind("ca.example; =1"), IssueValueKind::Malformed);
        assert_eq!(kind("ca.example;; x=1"), IssueValueKind::Malformed);
        assert_eq!(kind("ca.example extra"), IssueValueKind::Malformed);
        assert_eq!(
            parse_issue_value(b"ex\xc3\xa4mple.org").kind,
            IssueValueKind::Malformed
        );
        assert_eq!(kind("\"letsencrypt.org\""), IssueValueKind::Malformed);
    }

    #[test]
    fn semicolon_then_nothing_is_empty() {
        let parsed = parse_issue_value(b"ca.example;");
        assert_eq!(parsed.kind, IssueValueKind::Issuer);
        assert!(parsed.parameters.is_empty());
    }

    #[test]
    fn parameter_value_may_be_empty() {
        let parsed = parse_issue_value(b"ca.example; k=");
        assert_eq!(parsed.parameters, vec![("k".to_string(), String::new())]);
    }
}
