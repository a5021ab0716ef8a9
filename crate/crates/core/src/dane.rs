//! TLSA record parsing, RFC 6698 conformance checks, and matching against
//! served chains.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256, Sha512};

use crate::certs::{CertificateChain, ChainStatus, Certificate};

/// Certificate usages. 0/1 pin within the Web PKI (chain validity required),
/// 2/3 pin without it.
pub const USAGE_PKIX_TA: u8 = 0;
pub const USAGE_PKIX_EE: u8 = 1;
pub const USAGE_DANE_TA: u8 = 2;
pub const USAGE_DANE_EE: u8 = 3;

/// One TLSA record. Range and digest-length violations never reject the
/// record; they are captured in the conformance flags so the record still
/// shows up in reports.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TlsaRecord {
    pub usage: u8,
    pub selector: u8,
    pub matching_type: u8,
    #[serde(with = "hex_bytes")]
    pub data: Vec<u8>,
    pub conformant: bool,
    pub conformance_errors: Vec<String>,
}

mod hex_bytes {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(data: &[u8], s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&hex::encode(data))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<u8>, D::Error> {
        let text = String::deserialize(d)?;
        hex::decode(text).map_err(serde::de::Error::custom)
    }
}

impl TlsaRecord {
    pub fn new(usage: u8, selector: u8, matching_type: u8, data: Vec<u8>) -> Self {
        let mut errors = Vec::new();
        if usage > 3 {
            errors.push(format!("usage {usage} out of range 0-3"));
        }
        if selector > 1 {
            errors.push(format!("selector {selector} out of range 0-1"));
        }
        if matching_type > 2 {
            errors.push(format!("matching type {matching_type} out of range 0-2"));
        }
        match matching_type {
            1 if data.len() != 32 => {
                errors.push(format!("SHA-256 digest must be 32 octets, got {}", data.len()))
            }
            2 if data.len() != 64 => {
                errors.push(format!("SHA-512 digest must be 64 octets, got {}", data.len()))
            }
            0 if data.is_empty() => errors.push("exact-match data must be non-empty".into()),
            _ => {}
        }
        Self {
            usage,
            selector,
            matching_type,
            data,
            conformant: errors.is_empty(),
            conformance_errors: errors,
        }
    }

    /// An undecodable payload, retained for reporting.
    pub fn undecodable(detail: &str) -> Self {
        Self {
            usage: 255,
            selector: 255,
            matching_type: 255,
            data: Vec::new(),
            conformant: false,
            conformance_errors: vec![format!("undecodable payload: {detail}")],
        }
    }

    pub fn is_end_entity(&self) -> bool {
        matches!(self.usage, USAGE_PKIX_EE | USAGE_DANE_EE)
    }

    pub fn is_trust_anchor(&self) -> bool {
        matches!(self.usage, USAGE_PKIX_TA | USAGE_DANE_TA)
    }

    /// Whether the usage requires Web PKI chain validity on top of the match.
    pub fn requires_webpki(&self) -> bool {
        matches!(self.usage, USAGE_PKIX_TA | USAGE_PKIX_EE)
    }

    /// Association data for a candidate certificate under this record's
    /// selector and matching type.
    pub fn association_matches(&self, cert: &Certificate) -> bool {
        let association: &[u8] = match self.selector {
            0 => &cert.der,
            1 => &cert.spki_der,
            _ => return false,
        };
        match self.matching_type {
            0 => self.data == association,
            1 => self.data[..] == Sha256::digest(association)[..],
            2 => self.data[..] == Sha512::digest(association)[..],
            _ => false,
        }
    }
}

/// Parses the presentation format `usage selector matching-type hexdata`.
/// Whitespace inside the hex data is tolerated. Total: failures produce a
/// non-conformant placeholder.
pub fn parse_tlsa(payload: &str) -> TlsaRecord {
    let mut parts = payload.split_whitespace();
    let mut field = |name: &str| -> Result<u8, String> {
        parts
            .next()
            .ok_or_else(|| format!("missing {name}"))?
            .parse::<u8>()
            .map_err(|_| format!("{name} is not an integer 0-255"))
    };
    let usage = match field("usage") {
        Ok(v) => v,
        Err(e) => return TlsaRecord::undecodable(&e),
    };
    let selector = match field("selector") {
        Ok(v) => v,
        Err(e) => return TlsaRecord::undecodable(&e),
    };
    let matching_type = match field("matching type") {
        Ok(v) => v,
        Err(e) => return TlsaRecord::undecodable(&e),
    };
    let hex_text: String = parts.collect();
    let data = match hex::decode(&hex_text) {
        Ok(d) => d,
        Err(e) => return TlsaRecord::undecodable(&format!("bad hex data: {e}")),
    };
    TlsaRecord::new(usage, selector, matching_type, data)
}

/// Finds the first chain element the record authenticates. End-entity usages
/// only ever see the leaf; trust-anchor usages only the served non-leaf
/// elements.
pub fn tlsa_match(record: &TlsaRecord, chain: &CertificateChain) -> Option<usize> {
    if !record.conformant {
        return None;
    }
    let candidates: Vec<usize> = if record.is_end_entity() {
        vec![0]
    } else {
        (1..1 + chain.intermediates.len()).collect()
    };
    candidates
        .into_iter()
        .find(|&i| chain.element(i).is_some_and(|c| record.association_matches(c)))
}

/// Which kinds of constraints the record set expresses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ConstraintClass {
    EndEntityOnly,
    TrustAnchorOnly,
    Both,
    None,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum DaneFlag {
    /// Conformant TLSA records delivered over DNS the resolver could not
    /// authenticate; spoofable, defeating the point of DANE.
    TlsaWithoutDnssec,
    /// A DANE-TA/DANE-EE record matches the served chain while the chain
    /// fails Web PKI validation. Legal under DANE, worth surfacing.
    MatchedWithInvalidCertificate,
}

/// The DANE verdict for one domain.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DaneAssessment {
    pub records: Vec<TlsaRecord>,
    /// First match in record order: (record index, chain index).
    pub matched: Option<(usize, usize)>,
    /// Every match, for reporting.
    pub all_matches: Vec<(usize, usize)>,
    pub constraint_class: ConstraintClass,
    pub dnssec_secure: bool,
    /// True iff any matching record has a PKIX usage (0/1).
    pub requires_webpki: bool,
    /// The served certificate satisfies at least one record, including the
    /// chain-validity requirement for PKIX usages.
    pub authenticated: bool,
    pub flags: Vec<DaneFlag>,
}

impl DaneAssessment {
    pub fn has_conformant_records(&self) -> bool {
        self.records.iter().any(|r| r.conformant)
    }
}

/// Matches every record against the served chain and folds in DNSSEC and
/// chain-validity status.
pub fn evaluate_dane(
    records: Vec<TlsaRecord>,
    chain: Option<&CertificateChain>,
    dnssec_secure: bool,
    chain_status: Option<&ChainStatus>,
) -> DaneAssessment {
    let chain_valid = chain_status.map(ChainStatus::is_valid).unwrap_or(false);

    let mut all_matches = Vec::new();
    if let Some(chain) = chain {
        for (index, record) in records.iter().enumerate() {
            if let Some(chain_index) = tlsa_match(record, chain) {
                all_matches.push((index, chain_index));
            }
        }
    }
    let matched = all_matches.first().copied();

    let usages: Vec<u8> = records
        .iter()
        .filter(|r| r.conformant)
        .map(|r| r.usage)
        .collect();
    let has_ee = usages.iter().any(|&u| u == USAGE_PKIX_EE || u == USAGE_DANE_EE);
    let has_ta = usages.iter().any(|&u| u == USAGE_PKIX_TA || u == USAGE_DANE_TA);
    let constraint_class = match (has_ee, has_ta) {
        (true, true) => ConstraintClass::Both,
        (true, false) => ConstraintClass::EndEntityOnly,
        (false, true) => ConstraintClass::TrustAnchorOnly,
        (false, false) => ConstraintClass::None,
    };

    let requires_webpki = all_matches
        .iter()
        .any(|&(i, _)| records[i].requires_webpki());
    let authenticated = all_matches
        .iter()
        .any(|&(i, _)| !records[i].requires_webpki() || chain_valid);

    let mut flags = Vec::new();
    if !dnssec_secure && records.iter().any(|r| r.conformant) {
        flags.push(DaneFlag::TlsaWithoutDnssec);
    }
    if !chain_valid
        && all_matches
            .iter()
            .any(|&(i, _)| !records[i].requires_webpki())
        && chain_status.is_some()
    {
        flags.push(DaneFlag::MatchedWithInvalidCertificate);
    }

    DaneAssessment {
        records,
        matched,
        all_matches,
        constraint_class,
        dnssec_secure,
        requires_webpki,
        authenticated,
        flags,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::certs::DnSummary;
    use chrono::{TimeZone, Utc};

    fn fake_cert(tag: &str, is_ca: bool) -> Certificate {
        Certificate {
            der: format!("der-of-{tag}").into_bytes(),
            subject: dn(tag),
            issuer: dn("issuer"),
            san: vec![],
            not_before: Utc.timestamp_opt(0, 0).unwrap(),
            not_after: Utc.timestamp_opt(4102444800, 0).unwrap(),
            spki_der: format!("spki-of-{tag}").into_bytes(),
            serial: "01".into(),
            is_ca,
            embedded_scts: vec![],
            is_precert: false,
        }
    }

    fn dn(cn: &str) -> DnSummary {
        DnSummary {
            display: format!("CN={cn}"),
            common_name: Some(cn.into()),
            organization: None,
            raw: cn.as_bytes().to_vec(),
        }
    }

    fn fake_chain() -> CertificateChain {
        CertificateChain {
            leaf: fake_cert("leaf", false),
            intermediates: vec![fake_cert("intermediate", true)],
            unparsed: vec![],
            fetched_at: Utc.timestamp_opt(0, 0).unwrap(),
            sni_used: "example.test".into(),
            tls_errors_suppressed: true,
        }
    }

    fn status(verdict: crate::certs::ChainVerdict) -> ChainStatus {
        ChainStatus {
            verdict,
            detail: String::new(),
        }
    }

    #[test]
    fn presentation_parsing() {
        let digest = hex::encode([0xabu8; 32]);
        let record = parse_tlsa(&format!("3 1 1 {digest}"));
        assert_eq!((record.usage, record.selector, record.matching_type), (3, 1, 1));
        assert_eq!(record.data.len(), 32);
        assert!(record.conformant);

        let short = parse_tlsa(&format!("3 1 1 {}", hex::encode([0u8; 15])));
        assert!(!short.conformant);

        let bad_usage = parse_tlsa(&format!("9 1 1 {digest}"));
        assert!(!bad_usage.conformant);

        let undecodable = parse_tlsa("3 1 1 zz");
        assert!(!undecodable.conformant);
        let empty = parse_tlsa("");
        assert!(!empty.conformant);
    }

    #[test]
    fn hex_data_may_contain_whitespace() {
        let digest = hex::encode([0xcdu8; 32]);
        let (head, tail) = digest.split_at(20);
        let record = parse_tlsa(&format!("3 1 1 {head} {tail}"));
        assert!(record.conformant);
        assert_eq!(record.data, vec![0xcdu8; 32]);
    }

    #[test]
    fn matching_respects_usage_discipline() {
        let chain = fake_chain();
        let leaf_spki = TlsaRecord::new(3, 1, 1, Sha256::digest(&chain.leaf.spki_der).to_vec());
        assert_eq!(tlsa_match(&leaf_spki, &chain), Some(0));

        // The same data under a trust-anchor usage must not match the leaf.
        let ta_record = TlsaRecord::new(2, 1, 1, Sha256::digest(&chain.leaf.spki_der).to_vec());
        assert_eq!(tlsa_match(&ta_record, &chain), None);

        let inter_full = TlsaRecord::new(2, 0, 0, chain.intermediates[0].der.clone());
        assert_eq!(tlsa_match(&inter_full, &chain), Some(1));

        let ee_full = TlsaRecord::new(1, 0, 0, chain.intermediates[0].der.clone());
        assert_eq!(tlsa_match(&ee_full, &chain), None);

        let random = TlsaRecord::new(3, 1, 1, vec![0x42; 32]);
        assert_eq!(tlsa_match(&random, &chain), None);

        let nonconformant = TlsaRecord::new(3, 1, 1, vec![0x42; 10]);
        assert_eq!(tlsa_match(&nonconformant, &chain), None);
    }

    #[test]
    fn sha512_matching() {
        let chain = fake_chain();
        let record = TlsaRecord::new(3, 0, 2, Sha512::digest(&chain.leaf.der).to_vec());
        assert_eq!(tlsa_match(&record, &chain), Some(0));
    }

    #[test]
    fn dane_ee_matches_without_webpki_validity() {
        let chain = fake_chain();
        let record = TlsaRecord::new(3, 1, 1, Sha256::digest(&chain.leaf.spki_der).to_vec());
        let assessment = evaluate_dane(
            vec![record],
            Some(&chain),
            true,
            Some(&status(crate::certs::ChainVerdict::Expired)),
        );
        assert!(assessment.authenticated);
        assert!(!assessment.requires_webpki);
        assert!(assessment
            .flags
            .contains(&DaneFlag::MatchedWithInvalidCertificate));
    }

    #[test]
    fn pkix_usages_require_chain_validity() {
        let chain = fake_chain();
        let record = TlsaRecord::new(1, 1, 1, Sha256::digest(&chain.leaf.spki_der).to_vec());
        let invalid = evaluate_dane(
            vec![record.clone()],
            Some(&chain),
            true,
            Some(&status(crate::certs::ChainVerdict::Untrusted)),
        );
        assert!(!invalid.authenticated);
        assert!(invalid.requires_webpki);
        // PKIX mismatch against an invalid chain is not the DANE-specific flag.
        assert!(!invalid
            .flags
            .contains(&DaneFlag::MatchedWithInvalidCertificate));

        let valid = evaluate_dane(
            vec![record],
            Some(&chain),
            true,
            Some(&status(crate::certs::ChainVerdict::Valid)),
        );
        assert!(valid.authenticated);
    }

    #[test]
    fn insecure_dns_is_flagged() {
        let chain = fake_chain();
        let record = TlsaRecord::new(3, 1, 1, Sha256::digest(&chain.leaf.spki_der).to_vec());
        let assessment = evaluate_dane(
            vec![record],
            Some(&chain),
            false,
            Some(&status(crate::certs::ChainVerdict::Valid)),
        );
        assert!(assessment.flags.contains(&DaneFlag::TlsaWithoutDnssec));
        assert!(assessment.authenticated);
    }

    #[test]
    fn constraint_class_derivation() {
        let ee = TlsaRecord::new(3, 1, 1, vec![0; 32]);
        let ta = TlsaRecord::new(0, 1, 1, vec![0; 32]);
        let class = |records: Vec<TlsaRecord>| {
            evaluate_dane(records, None, true, None).constraint_class
        };
        assert_eq!(class(vec![ee.clone()]), ConstraintClass::EndEntityOnly);
        assert_eq!(class(vec![ta.clone()]), ConstraintClass::TrustAnchorOnly);
        assert_eq!(class(vec![ee, ta]), ConstraintClass::Both);
        assert_eq!(class(vec![]), ConstraintClass::None);
    }

    #[test]
    fn no_match_leaves_assessment_unauthenticated() {
        let chain = fake_chain();
        let record = TlsaRecord::new(3, 1, 1, vec![0x42; 32]);
        let assessment = evaluate_dane(
            vec![record],
            Some(&chain),
            true,
            Some(&status(crate::certs::ChainVerdict::Valid)),
        );
        assert!(assessment.matched.is_none());
        assert!(!assessment.authenticated);
    }
}
