//! X.509 material: parsing, chain validation, name matching, SCT checking.

pub mod der;
mod fetch;
mod sct;
mod verify;

pub use fetch::{FixtureTlsSource, LiveTlsSource, TlsSource};
pub use sct::{verify_scts, verify_single, KnownLogs, Sct, SctVerdict, SignedEntry};
pub use verify::{
    issuer_identity, name_matches, validate_chain, ChainStatus, ChainVerdict, NameMatch,
    TrustStore,
};

use chrono::{DateTime, TimeZone, Utc};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;
use x509_parser::prelude::{FromDer, X509Certificate};

#[derive(Debug, Error)]
pub enum CertError {
    #[error("certificate parse error: {0}")]
    Parse(String),
    #[error("PEM error: {0}")]
    Pem(String),
    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),
    #[error("connection error: {0}")]
    Connection(String),
}

/// Distinguished-name fields the pipeline cares about, plus the raw DER for
/// exact issuer/subject chaining.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DnSummary {
    pub display: String,
    pub common_name: Option<String>,
    pub organization: Option<String>,
    #[serde(skip)]
    pub raw: Vec<u8>,
}

/// One parsed certificate. The original DER is kept verbatim; every derived
/// field comes from it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Certificate {
    #[serde(skip)]
    pub der: Vec<u8>,
    pub subject: DnSummary,
    pub issuer: DnSummary,
    pub san: Vec<String>,
    pub not_before: DateTime<Utc>,
    pub not_after: DateTime<Utc>,
    #[serde(skip)]
    pub spki_der: Vec<u8>,
    /// Serial number, uppercase hex without leading zeros.
    pub serial: String,
    pub is_ca: bool,
    #[serde(skip)]
    pub embedded_scts: Vec<Vec<u8>>,
    pub is_precert: bool,
}

impl Certificate {
    /// SHA-256 over the DER, the usual certificate fingerprint.
    pub fn fingerprint_sha256(&self) -> String {
        hex::encode(Sha256::digest(&self.der))
    }

    /// SHA-256 over the SubjectPublicKeyInfo, as TLSA selector 1 sees it.
    pub fn spki_sha256(&self) -> Vec<u8> {
        Sha256::digest(&self.spki_der).to_vec()
    }

    pub fn valid_at(&self, at: DateTime<Utc>) -> bool {
        self.not_before <= at && at <= self.not_after
    }

    pub fn is_self_signed(&self) -> bool {
        self.subject.raw == self.issuer.raw
    }

    /// Key identifying a logged certificate across precert/final duplicates.
    pub fn dedup_key(&self) -> (String, String) {
        (self.issuer.display.clone(), self.serial.clone())
    }
}

/// The chain exactly as the server presented it: leaf first, then whatever
/// intermediates came along. Elements that failed to parse are retained as
/// raw DER so validation can call the chain malformed.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CertificateChain {
    pub leaf: Certificate,
    pub intermediates: Vec<Certificate>,
    #[serde(skip)]
    pub unparsed: Vec<Vec<u8>>,
    pub fetched_at: DateTime<Utc>,
    pub sni_used: String,
    pub tls_errors_suppressed: bool,
}

impl CertificateChain {
    pub fn len(&self) -> usize {
        1 + self.intermediates.len() + self.unparsed.len()
    }

    /// Chain element by served position: 0 is the leaf.
    pub fn element(&self, index: usize) -> Option<&Certificate> {
        if index == 0 {
            Some(&self.leaf)
        } else {
            self.intermediates.get(index - 1)
        }
    }

    /// The chain element that signed the leaf, when it was served.
    pub fn leaf_signer(&self) -> Option<&Certificate> {
        if self.leaf.is_self_signed() {
            return Some(&self.leaf);
        }
        self.intermediates
            .iter()
            .find(|c| c.subject.raw == self.leaf.issuer.raw)
    }
}

fn dn_summary(name: &x509_parser::x509::X509Name<'_>) -> DnSummary {
    let organization = name
        .iter_organization()
        .next()
        .and_then(|a| a.as_str().ok())
        .map(str::to_string);
    let common_name = name
        .iter_common_name()
        .next()
        .and_then(|a| a.as_str().ok())
        .map(str::to_string);
    DnSummary {
        display: name.to_string(),
        common_name,
        organization,
        raw: name.as_raw().to_vec(),
    }
}

fn asn1_time_to_utc(t: &x509_parser::time::ASN1Time) -> DateTime<Utc> {
    Utc.timestamp_opt(t.timestamp(), 0)
        .single()
        .unwrap_or_else(|| Utc.timestamp_opt(0, 0).single().unwrap())
}

/// Parses one DER certificate into the summary the pipeline works with.
pub fn parse_certificate(cert_der: &[u8]) -> Result<Certificate, CertError> {
    let (rest, parsed) =
        X509Certificate::from_der(cert_der).map_err(|e| CertError::Parse(e.to_string()))?;
    if !rest.is_empty() {
        return Err(CertError::Parse("trailing bytes after certificate".into()));
    }

    let tbs = &parsed.tbs_certificate;
    let san = parsed
        .subject_alternative_name()
        .ok()
        .flatten()
        .map(|ext| {
            ext.value
                .general_names
                .iter()
                .filter_map(|n| match n {
                    x509_parser::extensions::GeneralName::DNSName(d) => {
                        Some(d.to_ascii_lowercase())
                    }
                    _ => None,
                })
                .collect()
        })
        .unwrap_or_default();
    let is_ca = parsed
        .basic_constraints()
        .ok()
        .flatten()
        .map(|bc| bc.value.ca)
        .unwrap_or(false);

    let embedded_scts = sct::extract_sct_list(cert_der).unwrap_or_default();
    let is_precert = der::has_extension(cert_der, &der::OID_PRECERT_POISON).unwrap_or(false);

    Ok(Certificate {
        der: cert_der.to_vec(),
        subject: dn_summary(tbs.subject()),
        issuer: dn_summary(tbs.issuer()),
        san,
        not_before: asn1_time_to_utc(&tbs.validity().not_before),
        not_after: asn1_time_to_utc(&tbs.validity().not_after),
        spki_der: tbs.subject_pki.raw.to_vec(),
        serial: serial_hex(tbs.raw_serial()),
        is_ca,
        embedded_scts,
        is_precert,
    })
}

fn serial_hex(raw: &[u8]) -> String {
    let trimmed: Vec<u8> = raw.iter().copied().skip_while(|&b| b == 0).collect();
    if trimmed.is_empty() {
        "00".to_string()
    } else {
        hex::encode_upper(trimmed)
    }
}

/// Splits a concatenated PEM bundle into DER blocks, in order.
pub fn pem_to_ders(pem: &[u8]) -> Result<Vec<Vec<u8>>, CertError> {
    let mut out = Vec::new();
    for item in x509_parser::pem::Pem::iter_from_buffer(pem) {
        let pem = item.map_err(|e| CertError::Pem(e.to_string()))?;
        if pem.label == "CERTIFICATE" {
            out.push(pem.contents);
        }
    }
    Ok(out)
}

/// Renders DER certificates as a concatenated PEM bundle.
pub fn ders_to_pem(ders: &[Vec<u8>]) -> String {
    use base64::Engine as _;
    let engine = base64::engine::general_purpose::STANDARD;
    let mut out = String::new();
    for der in ders {
        out.push_str("-----BEGIN CERTIFICATE-----\n");
        let encoded = engine.encode(der);
        for chunk in encoded.as_bytes().chunks(64) {
            out.push_str(std::str::from_utf8(chunk).unwrap());
            out.push('\n');
        }
        out.push_str("-----END CERTIFICATE-----\n");
    }
    out
}

/// Builds a chain from served DER blocks, leaf first. Intermediates that do
/// not parse are kept for the Malformed verdict; a leaf that does not parse
/// fails the whole capture.
pub fn chain_from_ders(
    ders: Vec<Vec<u8>>,
    sni_used: &str,
    fetched_at: DateTime<Utc>,
    tls_errors_suppressed: bool,
) -> Result<CertificateChain, CertError> {
    let mut iter = ders.into_iter();
    let leaf_der = iter
        .next()
        .ok_or_else(|| CertError::Connection("server presented no certificates".into()))?;
    let leaf = parse_certificate(&leaf_der)?;
    let mut intermediates = Vec::new();
    let mut unparsed = Vec::new();
    for der in iter {
        match parse_certificate(&der) {
            Ok(cert) => intermediates.push(cert),
            Err(_) => unparsed.push(der),
        }
    }
    Ok(CertificateChain {
        leaf,
        intermediates,
        unparsed,
        fetched_at,
        sni_used: sni_used.to_string(),
        tls_errors_suppressed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn serial_hex_trims_leading_zeros() {
        assert_eq!(serial_hex(&[0x00, 0x01, 0xab]), "01AB");
        assert_eq!(serial_hex(&[0x00]), "00");
        assert_eq!(serial_hex(&[]), "00");
    }

    #[test]
    fn pem_round_trip() {
        let ders = vec![vec![1u8, 2, 3], vec![4u8; 100]];
        let pem = ders_to_pem(&ders);
        let parsed = pem_to_ders(pem.as_bytes()).unwrap();
        assert_eq!(parsed, ders);
    }
}
