//! Chain validation against a configurable trust store, SAN matching, and
//! issuer-identity extraction.

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use x509_parser::prelude::{FromDer, X509Certificate};

use crate::caa::CaIdentity;

use super::{parse_certificate, pem_to_ders, CertError, Certificate, CertificateChain};

/// How the certificate covers (or fails to cover) the audited name.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum NameMatch {
    ExactSan,
    WildcardSan,
    NoMatch,
}

impl NameMatch {
    pub fn matches(&self) -> bool {
        !matches!(self, NameMatch::NoMatch)
    }
}

/// SAN-only name matching. A wildcard SAN covers exactly one additional
/// leftmost label, and only when `*` is the entire leftmost label.
pub fn name_matches(cert: &Certificate, name: &str) -> NameMatch {
    let name = name.to_ascii_lowercase();
    for san in &cert.san {
        if san.eq_ignore_ascii_case(&name) {
            return NameMatch::ExactSan;
        }
    }
    for san in &cert.san {
        if let Some(parent) = san.strip_prefix("*.") {
            if parent.contains('*') {
                continue;
            }
            if let Some(label) = name
                .strip_suffix(parent)
                .and_then(|head| head.strip_suffix('.'))
            {
                if !label.is_empty() && !label.contains('.') && !label.contains('*') {
                    return NameMatch::WildcardSan;
                }
            }
        }
    }
    NameMatch::NoMatch
}

/// Chain validation outcome.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ChainVerdict {
    Valid,
    Expired,
    Untrusted,
    Malformed,
}

impl ChainVerdict {
    pub fn as_str(&self) -> &'static str {
        match self {
            ChainVerdict::Valid => "Valid",
            ChainVerdict::Expired => "Expired",
            ChainVerdict::Untrusted => "Untrusted",
            ChainVerdict::Malformed => "Malformed",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChainStatus {
    pub verdict: ChainVerdict,
    pub detail: String,
}

impl ChainStatus {
    pub fn is_valid(&self) -> bool {
        self.verdict == ChainVerdict::Valid
    }
}

/// The set of trusted roots, loaded from a concatenated PEM bundle.
#[derive(Debug, Clone, Default)]
pub struct TrustStore {
    roots: Vec<Certificate>,
}

impl TrustStore {
    pub fn empty() -> Self {
        Self::default()
    }

    pub fn from_pem(pem: &[u8]) -> Result<Self, CertError> {
        let mut roots = Vec::new();
        for der in pem_to_ders(pem)? {
            roots.push(parse_certificate(&der)?);
        }
        Ok(Self { roots })
    }

    pub fn from_pem_file(path: &std::path::Path) -> Result<Self, CertError> {
        Self::from_pem(&std::fs::read(path)?)
    }

    pub fn len(&self) -> usize {
        self.roots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.roots.is_empty()
    }

    fn roots_for<'a>(&'a self, issuer_raw: &'a [u8]) -> impl Iterator<Item = &'a Certificate> {
        self.roots
            .iter()
            .filter(move |r| r.subject.raw == issuer_raw)
    }

    fn contains(&self, cert: &Certificate) -> bool {
        self.roots.iter().any(|r| r.der == cert.der)
    }
}

fn signature_checks_out(cert: &Certificate, issuer: &Certificate) -> bool {
    let Ok((_, view)) = X509Certificate::from_der(&cert.der) else {
        return false;
    };
    let Ok((_, issuer_view)) = X509Certificate::from_der(&issuer.der) else {
        return false;
    };
    view.verify_signature(Some(issuer_view.public_key()))
        .is_ok()
}

/// Builds and checks a path from the leaf to a trust-store root at time `at`.
///
/// Any path reaching a trusted root is acceptable; the anchoring root is
/// named in the status detail. Expired is reported only when a
/// signature-valid path exists and validity windows are the sole failure.
pub fn validate_chain(
    chain: &CertificateChain,
    store: &TrustStore,
    at: DateTime<Utc>,
) -> ChainStatus {
    if !chain.unparsed.is_empty() {
        return ChainStatus {
            verdict: ChainVerdict::Malformed,
            detail: format!(
                "{} chain element(s) failed to parse",
                chain.unparsed.len()
            ),
        };
    }

    // Depth-first search over served intermediates toward the store.
    let mut best_expired: Option<String> = None;
    let mut stack: Vec<Vec<&Certificate>> = vec![vec![&chain.leaf]];
    while let Some(path) = stack.pop() {
        let current = *path.last().unwrap();

        // Anchored directly: a self-signed element present in the store.
        if current.is_self_signed() && store.contains(current) {
            match window_failure(&path, at, None) {
                None => {
                    return ChainStatus {
                        verdict: ChainVerdict::Valid,
                        detail: format!("anchored at {}", current.subject.display),
                    }
                }
                Some(failure) => {
                    best_expired.get_or_insert(failure);
                    continue;
                }
            }
        }

        for root in store.roots_for(&current.issuer.raw) {
            if !signature_checks_out(current, root) {
                continue;
            }
            match window_failure(&path, at, Some(root)) {
                None => {
                    return ChainStatus {
                        verdict: ChainVerdict::Valid,
                        detail: format!("anchored at {}", root.subject.display),
                    }
                }
                Some(failure) => {
                    best_expired.get_or_insert(failure);
                }
            }
        }

        for intermediate in &chain.intermediates {
            if intermediate.subject.raw != current.issuer.raw
                || !intermediate.is_ca
                || path.iter().any(|c| c.der == intermediate.der)
            {
                continue;
            }
            if signature_checks_out(current, intermediate) {
                let mut next = path.clone();
                next.push(intermediate);
                stack.push(next);
            }
        }
    }

    match best_expired {
        Some(detail) => ChainStatus {
            verdict: ChainVerdict::Expired,
            detail,
        },
        None => ChainStatus {
            verdict: ChainVerdict::Untrusted,
            detail: "no signature-valid path to a trusted root".into(),
        },
    }
}

fn window_failure(
    path: &[&Certificate],
    at: DateTime<Utc>,
    root: Option<&Certificate>,
) -> Option<String> {
    for cert in path.iter().copied().chain(root) {
        if !cert.valid_at(at) {
            return Some(format!(
                "{} outside validity window ({} .. {})",
                cert.subject.display, cert.not_before, cert.not_after
            ));
        }
    }
    None
}

/// Extracts a domain-shaped string usable as a CAA issuer-domain fallback.
fn domain_hint(text: &str) -> Option<String> {
    let lower = text.trim().to_ascii_lowercase();
    let mut labels = lower.split('.');
    let plausible = lower.contains('.')
        && labels.all(|l| {
            !l.is_empty() && l.bytes().all(|b| b.is_ascii_alphanumeric() || b == b'-')
        });
    plausible.then_some(lower)
}

/// The identity of the CA that signed the leaf: the signer's subject
/// organization when the signer was served, otherwise the leaf's issuer
/// fields. Domain-shaped common names become fallback hints for unmapped CAA
/// strings.
pub fn issuer_identity(chain: &CertificateChain) -> CaIdentity {
    let (organization, common_name) = match chain.leaf_signer() {
        Some(signer) => (
            signer.subject.organization.clone(),
            signer.subject.common_name.clone(),
        ),
        None => (
            chain.leaf.issuer.organization.clone(),
            chain.leaf.issuer.common_name.clone(),
        ),
    };
    let mut hints = Vec::new();
    for candidate in [common_name.as_deref(), organization.as_deref()] {
        if let Some(hint) = candidate.and_then(domain_hint) {
            if !hints.contains(&hint) {
                hints.push(hint);
            }
        }
    }
    CaIdentity {
        organization: organization.unwrap_or_default(),
        domain_hints: hints,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::TimeZone;

    fn cert_with_san(san: &[&str]) -> Certificate {
        Certificate {
            der: Vec::new(),
            subject: blank_dn("leaf"),
            issuer: blank_dn("issuer"),
            san: san.iter().map(|s| s.to_ascii_lowercase()).collect(),
            not_before: Utc.timestamp_opt(0, 0).unwrap(),
            not_after: Utc.timestamp_opt(4102444800, 0).unwrap(),
            spki_der: Vec::new(),
            serial: "01".into(),
            is_ca: false,
            embedded_scts: Vec::new(),
            is_precert: false,
        }
    }

    fn blank_dn(cn: &str) -> super::super::DnSummary {
        super::super::DnSummary {
            display: format!("CN={cn}"),
            common_name: Some(cn.to_string()),
            organization: None,
            raw: cn.as_bytes().to_vec(),
        }
    }

    #[test]
    fn exact_and_wildcard_san_matching() {
        let cert = cert_with_san(&["example.com"]);
        assert_eq!(name_matches(&cert, "example.com"), NameMatch::ExactSan);
        assert_eq!(name_matches(&cert, "EXAMPLE.COM"), NameMatch::ExactSan);

        let wild = cert_with_san(&["*.example.com"]);
        assert_eq!(name_matches(&wild, "www.example.com"), NameMatch::WildcardSan);
        assert_eq!(name_matches(&wild, "a.b.example.com"), NameMatch::NoMatch);
        assert_eq!(name_matches(&wild, "example.com"), NameMatch::NoMatch);
    }

    #[test]
    fn wildcard_must_be_entire_leftmost_label() {
        let partial = cert_with_san(&["f*o.example.com", "*.*.example.org"]);
        assert_eq!(name_matches(&partial, "foo.example.com"), NameMatch::NoMatch);
        assert_eq!(name_matches(&partial, "a.b.example.org"), NameMatch::NoMatch);
    }

    #[test]
    fn case_changes_never_affect_matching() {
        let cert = cert_with_san(&["*.Example.COM"]);
        assert_eq!(
            name_matches(&cert, "WWW.example.com"),
            NameMatch::WildcardSan
        );
    }

    #[test]
    fn suffix_overlap_without_label_boundary_is_no_match() {
        let wild = cert_with_san(&["*.example.com"]);
        // "wwwexample.com" ends with "example.com" but lacks the dot boundary.
        assert_eq!(name_matches(&wild, "wwwexample.com"), NameMatch::NoMatch);
    }

    #[test]
    fn domain_hints_are_filtered() {
        assert_eq!(domain_hint("CA.Example.ORG"), Some("ca.example.org".into()));
        assert_eq!(domain_hint("Let's Encrypt"), None);
        assert_eq!(domain_hint("R11"), None);
        assert_eq!(domain_hint("bad..name"), None);
    }
}
