//! DNS record collection.
//!
//! One bundle per audited domain: SOA, A, CAA along the ancestor chain, TLSA
//! under the port-443/TCP service prefix, and the two domain-validation
//! contact TXT records. All queries request DNSSEC validation from the
//! recursive resolver; we store its authenticated-data signal and never
//! validate signatures ourselves.

mod backend;

pub use backend::{DnsBackend, DohBackend, FixtureDnsBackend, FixtureEntry};

use std::fmt;
use std::sync::Arc;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Service prefix for HTTPS TLSA lookups.
pub const TLSA_443_PREFIX: &str = "_443._tcp";
/// Prefix for the domain-validation e-mail contact TXT record.
pub const CONTACT_EMAIL_PREFIX: &str = "_validation-contactemail";
/// Prefix for the domain-validation phone contact TXT record.
pub const CONTACT_PHONE_PREFIX: &str = "_validation-contactphone";

/// Backoff schedule applied before the second and third attempt.
const RETRY_BACKOFF: [Duration; 2] = [Duration::from_millis(500), Duration::from_secs(2)];

#[derive(Debug, Error)]
pub enum DnsError {
    #[error("invalid domain name {0:?}: {1}")]
    InvalidName(String, String),
    #[error("transport failure: {0}")]
    Transport(String),
    #[error("malformed backend payload: {0}")]
    Payload(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum RecordType {
    Soa,
    A,
    Caa,
    Tlsa,
    Txt,
}

impl RecordType {
    pub fn as_str(&self) -> &'static str {
        match self {
            RecordType::Soa => "SOA",
            RecordType::A => "A",
            RecordType::Caa => "CAA",
            RecordType::Tlsa => "TLSA",
            RecordType::Txt => "TXT",
        }
    }

    /// Numeric RR type as used by the DoH JSON API.
    pub fn code(&self) -> u16 {
        match self {
            RecordType::A => 1,
            RecordType::Soa => 6,
            RecordType::Txt => 16,
            RecordType::Tlsa => 52,
            RecordType::Caa => 257,
        }
    }
}

impl fmt::Display for RecordType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Resolver response code, reduced to the cases the pipeline distinguishes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum DnsStatus {
    NoError,
    NxDomain,
    ServFail,
    Timeout,
}

impl DnsStatus {
    pub fn as_str(&self) -> &'static str {
        match self {
            DnsStatus::NoError => "NOERROR",
            DnsStatus::NxDomain => "NXDOMAIN",
            DnsStatus::ServFail => "SERVFAIL",
            DnsStatus::Timeout => "TIMEOUT",
        }
    }
}

/// One resource record payload in presentation format.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RawRecord {
    pub rrtype: RecordType,
    pub ttl: u32,
    pub data: String,
}

/// A single query: optional label prefix, owner name, record type.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DnsQuery {
    name: String,
    rrtype: RecordType,
    prefix: Option<String>,
}

impl DnsQuery {
    pub fn new(name: &str, rrtype: RecordType) -> Result<Self, DnsError> {
        Ok(Self {
            name: normalize_name(name)?,
            rrtype,
            prefix: None,
        })
    }

    pub fn with_prefix(name: &str, rrtype: RecordType, prefix: &str) -> Result<Self, DnsError> {
        let q = Self::new(name, rrtype)?;
        for label in prefix.split('.') {
            if label.is_empty() || label.len() > 63 {
                return Err(DnsError::InvalidName(
                    prefix.to_string(),
                    "prefix contains an empty or oversized label".into(),
                ));
            }
        }
        Ok(Self {
            prefix: Some(prefix.to_ascii_lowercase()),
            ..q
        })
    }

    pub fn rrtype(&self) -> RecordType {
        self.rrtype
    }

    /// Final name sent to the resolver, prefix labels included.
    pub fn query_name(&self) -> String {
        match &self.prefix {
            Some(p) => format!("{}.{}", p, self.name),
            None => self.name.clone(),
        }
    }
}

/// What the resolver said, normalized so that the invariants hold by
/// construction: no records and no authenticated flag outside NOERROR.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DnsResponse {
    pub status: DnsStatus,
    pub records: Vec<RawRecord>,
    pub authenticated: bool,
    pub queried_name: String,
}

impl DnsResponse {
    pub fn new(
        status: DnsStatus,
        records: Vec<RawRecord>,
        authenticated: bool,
        queried_name: String,
    ) -> Self {
        let noerror = status == DnsStatus::NoError;
        Self {
            status,
            records: if noerror { records } else { Vec::new() },
            authenticated: authenticated && noerror,
            queried_name,
        }
    }

    pub fn timeout(queried_name: String) -> Self {
        Self::new(DnsStatus::Timeout, Vec::new(), false, queried_name)
    }

    pub fn has_records(&self) -> bool {
        !self.records.is_empty()
    }
}

/// Everything collected from the DNS for one domain.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DomainDnsBundle {
    pub soa: DnsResponse,
    pub a: DnsResponse,
    pub tlsa_443: DnsResponse,
    pub contact_email_txt: DnsResponse,
    pub contact_phone_txt: DnsResponse,
    /// CAA responses for the name itself and every ancestor, self first.
    pub caa_by_ancestor: Vec<(String, DnsResponse)>,
}

impl DomainDnsBundle {
    /// The zone is DNSSEC-signed as far as the resolver is concerned.
    pub fn dnssec_secure(&self) -> bool {
        self.soa.authenticated || self.a.authenticated
    }

    pub fn has_any_caa(&self) -> bool {
        self.caa_by_ancestor.iter().any(|(_, r)| r.has_records())
    }

    pub fn has_tlsa(&self) -> bool {
        self.tlsa_443.has_records()
    }
}

/// A query that failed with a backend error during bundle collection.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CollectError {
    pub queried_name: String,
    pub rrtype: RecordType,
    pub detail: String,
}

/// Lowercases and validates a domain name. Names must already be
/// punycode-encoded; a trailing root dot is tolerated and removed.
pub fn normalize_name(name: &str) -> Result<String, DnsError> {
    let trimmed = name.strip_suffix('.').unwrap_or(name);
    if trimmed.is_empty() {
        return Err(DnsError::InvalidName(name.into(), "empty name".into()));
    }
    if !trimmed.is_ascii() {
        return Err(DnsError::InvalidName(
            name.into(),
            "non-ASCII name; punycode-encode it first".into(),
        ));
    }
    let lower = trimmed.to_ascii_lowercase();
    if lower.len() > 253 {
        return Err(DnsError::InvalidName(
            name.into(),
            "name exceeds 253 octets".into(),
        ));
    }
    for label in lower.split('.') {
        if label.is_empty() || label.len() > 63 {
            return Err(DnsError::InvalidName(
                name.into(),
                "empty or oversized label".into(),
            ));
        }
        if !label
            .bytes()
            .all(|b| b.is_ascii_alphanumeric() || b == b'-' || b == b'_')
        {
            return Err(DnsError::InvalidName(
                name.into(),
                format!("label {label:?} contains invalid characters"),
            ));
        }
    }
    Ok(lower)
}

/// The CAA lookup chain: the name itself, then each ancestor produced by
/// stripping the leftmost label, down to the final label.
///
/// This is plain label stripping; no public-suffix list is consulted, so the
/// chain for `www.example.co.uk` ends `co.uk`, `uk`.
pub fn caa_ancestor_walk(name: &str) -> Result<Vec<String>, DnsError> {
    let normalized = normalize_name(name)?;
    let labels: Vec<&str> = normalized.split('.').collect();
    Ok((0..labels.len()).map(|i| labels[i..].join(".")).collect())
}

/// Issues one query with the bounded retry policy: transport failures are
/// retried twice with backoff, then surface as a TIMEOUT response. Payload
/// errors are not retried.
pub async fn query_records(
    query: &DnsQuery,
    backend: &Arc<dyn DnsBackend>,
) -> Result<DnsResponse, DnsError> {
    let mut attempt = 0;
    loop {
        match backend.query(query).await {
            Ok(response) => return Ok(response),
            Err(DnsError::Transport(_)) if attempt < RETRY_BACKOFF.len() => {
                tokio::time::sleep(RETRY_BACKOFF[attempt]).await;
                attempt += 1;
            }
            Err(DnsError::Transport(_)) => return Ok(DnsResponse::timeout(query.query_name())),
            Err(other) => return Err(other),
        }
    }
}

/// Collects the full per-domain bundle. Individual failures become part of
/// the result (TIMEOUT responses or the error list); collection never aborts.
pub async fn collect_domain_dns(
    name: &str,
    backend: &Arc<dyn DnsBackend>,
) -> Result<(DomainDnsBundle, Vec<CollectError>), DnsError> {
    let normalized = normalize_name(name)?;
    let mut errors = Vec::new();

    let run = |query: DnsQuery| {
        let backend = Arc::clone(backend);
        async move {
            let queried_name = query.query_name();
            match query_records(&query, &backend).await {
                Ok(response) => (response, None),
                Err(err) => (
                    DnsResponse::new(DnsStatus::ServFail, Vec::new(), false, queried_name.clone()),
                    Some(CollectError {
                        queried_name,
                        rrtype: query.rrtype(),
                        detail: err.to_string(),
                    }),
                ),
            }
        }
    };

    let mut collect = |(response, error): (DnsResponse, Option<CollectError>)| {
        if let Some(e) = error {
            errors.push(e);
        }
        response
    };

    let soa = collect(run(DnsQuery::new(&normalized, RecordType::Soa)?).await);
    let a = collect(run(DnsQuery::new(&normalized, RecordType::A)?).await);

    let mut caa_by_ancestor = Vec::new();
    for ancestor in caa_ancestor_walk(&normalized)? {
        let response = collect(run(DnsQuery::new(&ancestor, RecordType::Caa)?).await);
        caa_by_ancestor.push((ancestor, response));
    }

    let tlsa_443 = collect(
        run(DnsQuery::with_prefix(
            &normalized,
            RecordType::Tlsa,
            TLSA_443_PREFIX,
        )?)
        .await,
    );
    let contact_email_txt = collect(
        run(DnsQuery::with_prefix(
            &normalized,
            RecordType::Txt,
            CONTACT_EMAIL_PREFIX,
        )?)
        .await,
    );
    let contact_phone_txt = collect(
        run(DnsQuery::with_prefix(
            &normalized,
            RecordType::Txt,
            CONTACT_PHONE_PREFIX,
        )?)
        .await,
    );

    Ok((
        DomainDnsBundle {
            soa,
            a,
            tlsa_443,
            contact_email_txt,
            contact_phone_txt,
            caa_by_ancestor,
        },
        errors,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn walk_strips_leftmost_label() {
        assert_eq!(
            caa_ancestor_walk("a.b.c.example.org").unwrap(),
            vec![
                "a.b.c.example.org",
                "b.c.example.org",
                "c.example.org",
                "example.org",
                "org"
            ]
        );
        assert_eq!(
            caa_ancestor_walk("example.com").unwrap(),
            vec!["example.com", "com"]
        );
        // Plain stripping: the multi-label public suffix is not special-cased.
        assert_eq!(
            caa_ancestor_walk("www.example.co.uk").unwrap(),
            vec!["www.example.co.uk", "example.co.uk", "co.uk", "uk"]
        );
    }

    #[test]
    fn walk_rejects_invalid_names() {
        assert!(caa_ancestor_walk("").is_err());
        assert!(caa_ancestor_walk("exämple.com").is_err());
        assert!(caa_ancestor_walk("bad..name").is_err());
        assert!(caa_ancestor_walk(&"a".repeat(64)).is_err());
    }

    #[test]
    fn walk_normalizes_case_and_root_dot() {
        assert_eq!(
            caa_ancestor_walk("WWW.Example.COM.").unwrap(),
            vec!["www.example.com", "example.com", "com"]
        );
    }

    #[test]
    fn query_name_applies_prefix() {
        let q = DnsQuery::with_prefix("example.com", RecordType::Tlsa, TLSA_443_PREFIX).unwrap();
        assert_eq!(q.query_name(), "_443._tcp.example.com");
    }

    #[test]
    fn response_normalization_enforces_invariants() {
        let r = DnsResponse::new(
            DnsStatus::NxDomain,
            vec![RawRecord {
                rrtype: RecordType::A,
                ttl: 60,
                data: "192.0.2.1".into(),
            }],
            true,
            "x.test".into(),
        );
        assert!(r.records.is_empty());
        assert!(!r.authenticated);
    }

    fn label_strategy() -> impl Strategy<Value = String> {
        "[a-z0-9]{1,10}"
    }

    proptest! {
        #[test]
        fn walk_matches_brute_force_suffix_oracle(
            labels in prop::collection::vec(label_strategy(), 1..6)
        ) {
            let name = labels.join(".");
            let walk = caa_ancestor_walk(&name).unwrap();
            // Oracle: all suffixes obtained by splitting on dots.
            let expected: Vec<String> =
                (0..labels.len()).map(|i| labels[i..].join(".")).collect();
            prop_assert_eq!(&walk, &expected);
            prop_assert_eq!(walk.len(), labels.len());
            for pair in walk.windows(2) {
                let previous = pair[0].splitn(2, '.').nth(1).unwrap_or("");
                prop_assert_eq!(previous, pair[1].as_str());
            }
        }

        #[test]
        fn response_invariant_holds_for_all_inputs(
            status_pick in 0usize..4,
            authenticated in any::<bool>(),
            n_records in 0usize..4,
        ) {
            let status = [
                DnsStatus::NoError,
                DnsStatus::NxDomain,
                DnsStatus::ServFail,
                DnsStatus::Timeout,
            ][status_pick];
            let records = (0..n_records)
                .map(|i| RawRecord { rrtype: RecordType::Txt, ttl: 60, data: format!("r{i}") })
                .collect();
            let r = DnsResponse::new(status, records, authenticated, "x.test".into());
            prop_assert!(!(r.authenticated && r.status != DnsStatus::NoError));
            prop_assert!(r.status == DnsStatus::NoError || r.records.is_empty());
        }
    }
}
