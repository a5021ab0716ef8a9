//! Signed Certificate Timestamp checking (RFC 6962, v1).
//!
//! Embedded SCTs are signed over the precertificate form of the leaf: the
//! TBSCertificate with the SCT-list extension removed, prefixed with the
//! SHA-256 hash of the issuer's SubjectPublicKeyInfo.

use std::collections::HashMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use super::der;
use super::Certificate;

#[derive(Debug, Error)]
pub enum SctError {
    #[error("malformed SCT: {0}")]
    Malformed(String),
    #[error("unsupported SCT version {0}")]
    UnsupportedVersion(u8),
    #[error("log list error: {0}")]
    LogList(String),
}

/// One parsed v1 SCT.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Sct {
    pub log_id: [u8; 32],
    pub timestamp_ms: u64,
    pub extensions: Vec<u8>,
    pub hash_alg: u8,
    pub sig_alg: u8,
    pub signature: Vec<u8>,
}

/// What an SCT signs: a served certificate or the precert reconstruction.
pub enum SignedEntry<'a> {
    X509(&'a [u8]),
    Precert {
        issuer_key_hash: [u8; 32],
        tbs: &'a [u8],
    },
}

/// Verification outcome for one SCT.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SctVerdict {
    /// Hex-encoded 32-octet log id.
    pub log_id: String,
    pub known_log: bool,
    pub signature_ok: bool,
    pub log_operator: Option<String>,
}

struct Cursor<'a> {
    data: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], SctError> {
        if self.pos + n > self.data.len() {
            return Err(SctError::Malformed("truncated".into()));
        }
        let slice = &self.data[self.pos..self.pos + n];
        self.pos += n;
        Ok(slice)
    }

    fn u8(&mut self) -> Result<u8, SctError> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<u16, SctError> {
        let b = self.take(2)?;
        Ok(u16::from_be_bytes([b[0], b[1]]))
    }

    fn u64(&mut self) -> Result<u64, SctError> {
        let b = self.take(8)?;
        Ok(u64::from_be_bytes(b.try_into().unwrap()))
    }

    fn done(&self) -> bool {
        self.pos == self.data.len()
    }
}

impl Sct {
    /// Parses the TLS-encoded SCT structure.
    pub fn parse(raw: &[u8]) -> Result<Self, SctError> {
        let mut cur = Cursor { data: raw, pos: 0 };
        let version = cur.u8()?;
        if version != 0 {
            return Err(SctError::UnsupportedVersion(version));
        }
        let log_id: [u8; 32] = cur.take(32)?.try_into().unwrap();
        let timestamp_ms = cur.u64()?;
        let ext_len = cur.u16()? as usize;
        let extensions = cur.take(ext_len)?.to_vec();
        let hash_alg = cur.u8()?;
        let sig_alg = cur.u8()?;
        let sig_len = cur.u16()? as usize;
        let signature = cur.take(sig_len)?.to_vec();
        if !cur.done() {
            return Err(SctError::Malformed("trailing bytes".into()));
        }
        Ok(Sct {
            log_id,
            timestamp_ms,
            extensions,
            hash_alg,
            sig_alg,
            signature,
        })
    }

    /// The `digitally-signed` input covering this SCT and the given entry.
    fn signed_input(&self, entry: &SignedEntry<'_>) -> Vec<u8> {
        let mut out = Vec::new();
        out.push(0); // v1
        out.push(0); // signature_type = certificate_timestamp
        out.extend_from_slice(&self.timestamp_ms.to_be_bytes());
        match entry {
            SignedEntry::X509(cert) => {
                out.extend_from_slice(&0u16.to_be_bytes());
                push_u24_prefixed(&mut out, cert);
            }
            SignedEntry::Precert {
                issuer_key_hash,
                tbs,
            } => {
                out.extend_from_slice(&1u16.to_be_bytes());
                out.extend_from_slice(issuer_key_hash);
                push_u24_prefixed(&mut out, tbs);
            }
        }
        out.extend_from_slice(&(self.extensions.len() as u16).to_be_bytes());
        out.extend_from_slice(&self.extensions);
        out
    }
}

fn push_u24_prefixed(out: &mut Vec<u8>, data: &[u8]) {
    let len = data.len() as u32;
    out.extend_from_slice(&len.to_be_bytes()[1..]);
    out.extend_from_slice(data);
}

/// SHA-256 hash algorithm id, per the TLS SignatureAndHashAlgorithm registry.
const HASH_SHA256: u8 = 4;
const SIG_RSA: u8 = 1;
const SIG_ECDSA: u8 = 3;

fn verify_signature(sct: &Sct, key_spki: &[u8], message: &[u8]) -> bool {
    let Ok(key_bytes) = der::spki_key_bytes(key_spki) else {
        return false;
    };
    let algorithm: &dyn ring::signature::VerificationAlgorithm =
        match (sct.hash_alg, sct.sig_alg) {
            (HASH_SHA256, SIG_ECDSA) => &ring::signature::ECDSA_P256_SHA256_ASN1,
            (HASH_SHA256, SIG_RSA) => &ring::signature::RSA_PKCS1_2048_8192_SHA256,
            _ => return false,
        };
    ring::signature::UnparsedPublicKey::new(algorithm, &key_bytes)
        .verify(message, &sct.signature)
        .is_ok()
}

/// A CT log we accept signatures from.
#[derive(Debug, Clone)]
pub struct LogInfo {
    pub description: String,
    pub operator: String,
    pub key_spki: Vec<u8>,
}

/// The known-logs list, indexed by log id. Logs in a rejected state are
/// dropped at load time: their SCTs count as coming from unknown logs.
#[derive(Debug, Clone, Default)]
pub struct KnownLogs {
    logs: HashMap<[u8; 32], LogInfo>,
}

#[derive(Debug, Deserialize)]
struct LogListFile {
    operators: Vec<OperatorEntry>,
}

#[derive(Debug, Deserialize)]
struct OperatorEntry {
    name: String,
    logs: Vec<LogEntry>,
}

#[derive(Debug, Deserialize)]
struct LogEntry {
    #[serde(default)]
    description: String,
    log_id: String,
    key: String,
    #[serde(default)]
    state: Option<serde_json::Value>,
}

impl KnownLogs {
    pub fn empty() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.logs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.logs.is_empty()
    }

    pub fn get(&self, log_id: &[u8; 32]) -> Option<&LogInfo> {
        self.logs.get(log_id)
    }

    pub fn from_json(text: &str) -> Result<Self, SctError> {
        use base64::Engine as _;
        let engine = base64::engine::general_purpose::STANDARD;
        let parsed: LogListFile =
            serde_json::from_str(text).map_err(|e| SctError::LogList(e.to_string()))?;
        let mut logs = HashMap::new();
        for operator in parsed.operators {
            for log in operator.logs {
                if log_state_rejected(&log.state) {
                    continue;
                }
                let id_bytes = engine
                    .decode(&log.log_id)
                    .map_err(|e| SctError::LogList(format!("log_id: {e}")))?;
                let id: [u8; 32] = id_bytes
                    .try_into()
                    .map_err(|_| SctError::LogList("log_id must be 32 octets".into()))?;
                let key_spki = engine
                    .decode(&log.key)
                    .map_err(|e| SctError::LogList(format!("key: {e}")))?;
                logs.insert(
                    id,
                    LogInfo {
                        description: log.description,
                        operator: operator.name.clone(),
                        key_spki,
                    },
                );
            }
        }
        Ok(Self { logs })
    }

    pub fn from_file(path: &Path) -> Result<Self, SctError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| SctError::LogList(format!("reading {}: {e}", path.display())))?;
        Self::from_json(&text)
    }
}

fn log_state_rejected(state: &Option<serde_json::Value>) -> bool {
    state
        .as_ref()
        .and_then(|s| s.as_object())
        .map(|o| o.contains_key("rejected"))
        .unwrap_or(false)
}

/// Verifies one raw SCT against an explicit entry.
pub fn verify_single(raw_sct: &[u8], entry: &SignedEntry<'_>, logs: &KnownLogs) -> SctVerdict {
    let sct = match Sct::parse(raw_sct) {
        Ok(sct) => sct,
        Err(_) => {
            return SctVerdict {
                log_id: String::new(),
                known_log: false,
                signature_ok: false,
                log_operator: None,
            }
        }
    };
    let log_id = hex::encode(sct.log_id);
    match logs.get(&sct.log_id) {
        Some(info) => {
            let message = sct.signed_input(entry);
            SctVerdict {
                log_id,
                known_log: true,
                signature_ok: verify_signature(&sct, &info.key_spki, &message),
                log_operator: Some(info.operator.clone()),
            }
        }
        None => SctVerdict {
            log_id,
            known_log: false,
            signature_ok: false,
            log_operator: None,
        },
    }
}

/// Checks every SCT embedded in `leaf` via the precertificate reconstruction,
/// hashing `issuer`'s public key. Unknown logs are reported, not attempted.
pub fn verify_scts(leaf: &Certificate, issuer: &Certificate, logs: &KnownLogs) -> Vec<SctVerdict> {
    let Ok(tbs) = der::tbs_without_sct_extension(&leaf.der) else {
        return leaf
            .embedded_scts
            .iter()
            .map(|_| SctVerdict {
                log_id: String::new(),
                known_log: false,
                signature_ok: false,
                log_operator: None,
            })
            .collect();
    };
    let issuer_key_hash: [u8; 32] = Sha256::digest(&issuer.spki_der).into();
    let entry = SignedEntry::Precert {
        issuer_key_hash,
        tbs: &tbs,
    };
    leaf.embedded_scts
        .iter()
        .map(|raw| verify_single(raw, &entry, logs))
        .collect()
}

/// Pulls the raw SCTs out of a certificate's SCT-list extension.
pub(super) fn extract_sct_list(cert_der: &[u8]) -> Result<Vec<Vec<u8>>, SctError> {
    let to_err = |e: der::DerError| SctError::Malformed(e.to_string());
    let tbs = der::tbs_of(cert_der).map_err(to_err)?;
    let (tbs_tlv, _) = der::expect_tlv(tbs, der::TAG_SEQUENCE).map_err(to_err)?;
    for field in der::children(tbs_tlv).map_err(to_err)? {
        if field.tag != der::TAG_CTX_3 {
            continue;
        }
        let (extensions, _) = der::expect_tlv(field.content, der::TAG_SEQUENCE).map_err(to_err)?;
        for extension in der::children(extensions).map_err(to_err)? {
            let kids = der::children(extension).map_err(to_err)?;
            let Some(first) = kids.first() else { continue };
            if first.tag != der::TAG_OID || first.content != der::OID_SCT_LIST {
                continue;
            }
            let value = kids
                .last()
                .filter(|v| v.tag == der::TAG_OCTET_STRING)
                .ok_or_else(|| SctError::Malformed("extension without value".into()))?;
            // extnValue wraps another OCTET STRING holding the TLS list.
            let (inner, _) =
                der::expect_tlv(value.content, der::TAG_OCTET_STRING).map_err(to_err)?;
            return parse_tls_sct_list(inner.content);
        }
    }
    Ok(Vec::new())
}

fn parse_tls_sct_list(data: &[u8]) -> Result<Vec<Vec<u8>>, SctError> {
    let mut cur = Cursor { data, pos: 0 };
    let total = cur.u16()? as usize;
    let mut list = Cursor {
        data: cur.take(total)?,
        pos: 0,
    };
    if !cur.done() {
        return Err(SctError::Malformed("trailing bytes after SCT list".into()));
    }
    let mut out = Vec::new();
    while !list.done() {
        let len = list.u16()? as usize;
        out.push(list.take(len)?.to_vec());
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample_sct_bytes() -> Vec<u8> {
        let mut raw = vec![0u8]; // v1
        raw.extend_from_slice(&[7u8; 32]); // log id
        raw.extend_from_slice(&1_700_000_000_000u64.to_be_bytes());
        raw.extend_from_slice(&0u16.to_be_bytes()); // no extensions
        raw.push(HASH_SHA256);
        raw.push(SIG_ECDSA);
        raw.extend_from_slice(&3u16.to_be_bytes());
        raw.extend_from_slice(&[1, 2, 3]);
        raw
    }

    #[test]
    fn sct_parse_round_trip_fields() {
        let sct = Sct::parse(&sample_sct_bytes()).unwrap();
        assert_eq!(sct.log_id, [7u8; 32]);
        assert_eq!(sct.timestamp_ms, 1_700_000_000_000);
        assert_eq!(sct.signature, vec![1, 2, 3]);
    }

    #[test]
    fn sct_parse_rejects_garbage() {
        assert!(Sct::parse(&[]).is_err());
        assert!(matches!(
            Sct::parse(&[1u8; 50]),
            Err(SctError::UnsupportedVersion(1))
        ));
        let mut trailing = sample_sct_bytes();
        trailing.push(0);
        assert!(Sct::parse(&trailing).is_err());
    }

    #[test]
    fn unknown_log_is_reported_not_attempted() {
        let verdict = verify_single(
            &sample_sct_bytes(),
            &SignedEntry::X509(b"cert"),
            &KnownLogs::empty(),
        );
        assert!(!verdict.known_log);
        assert!(!verdict.signature_ok);
        assert_eq!(verdict.log_id, hex::encode([7u8; 32]));
    }

    #[test]
    fn log_list_parsing_and_rejected_state() {
        use base64::Engine as _;
        let engine = base64::engine::general_purpose::STANDARD;
        let id_ok = engine.encode([1u8; 32]);
        let id_rejected = engine.encode([2u8; 32]);
        let key = engine.encode(b"fake-spki");
        let json = format!(
            r#"{{"operators":[{{"name":"Op","logs":[
                {{"description":"good","log_id":"{id_ok}","key":"{key}","state":{{"usable":{{}}}}}},
                {{"description":"bad","log_id":"{id_rejected}","key":"{key}","state":{{"rejected":{{}}}}}}
            ]}}]}}"#
        );
        let logs = KnownLogs::from_json(&json).unwrap();
        assert_eq!(logs.len(), 1);
        assert!(logs.get(&[1u8; 32]).is_some());
        assert!(logs.get(&[2u8; 32]).is_none());
        assert_eq!(logs.get(&[1u8; 32]).unwrap().operator, "Op");
    }

    #[test]
    fn log_list_rejects_bad_documents() {
        assert!(KnownLogs::from_json("{}").is_err());
        assert!(KnownLogs::from_json(
            r#"{"operators":[{"name":"x","logs":[{"log_id":"short","key":"aGk="}]}]}"#
        )
        .is_err());
    }

    #[test]
    fn tls_sct_list_parses() {
        // Two SCTs of 3 and 2 bytes.
        let mut list = Vec::new();
        list.extend_from_slice(&9u16.to_be_bytes());
        list.extend_from_slice(&3u16.to_be_bytes());
        list.extend_from_slice(&[0xa, 0xb, 0xc]);
        list.extend_from_slice(&2u16.to_be_bytes());
        list.extend_from_slice(&[0xd, 0xe]);
        let parsed = parse_tls_sct_list(&list).unwrap();
        assert_eq!(parsed, vec![vec![0xa, 0xb, 0xc], vec![0xd, 0xe]]);
    }
}
