//! Test and fixture builders: CA hierarchies, leaves with embedded SCTs, CT
//! log keys, and the synthetic audit corpus.
//!
//! The SCT encoder here is written from the RFC structures independently of
//! the verifying side, so round-trip tests actually cross two
//! implementations.

pub mod corpus;

use chrono::{DateTime, Utc};
use rcgen::{
    BasicConstraints, CertificateParams, CustomExtension, DistinguishedName, DnType, IsCa,
    Issuer, KeyPair, PublicKeyData, SanType, SerialNumber,
};
use sha2::{Digest, Sha256};

/// 1.3.6.1.4.1.11129.2.4.2 as rcgen wants it.
const SCT_LIST_OID: &[u64] = &[1, 3, 6, 1, 4, 1, 11129, 2, 4, 2];
/// 1.3.6.1.4.1.11129.2.4.3, the precertificate poison.
const POISON_OID: &[u64] = &[1, 3, 6, 1, 4, 1, 11129, 2, 4, 3];

/// A CA (root or intermediate) able to sign children.
pub struct TestCa {
    pub params: CertificateParams,
    pub key: KeyPair,
    pub der: Vec<u8>,
}

impl TestCa {
    /// Self-signed root.
    pub fn root(org: &str, cn: &str, not_before: DateTime<Utc>, not_after: DateTime<Utc>) -> Self {
        let key = KeyPair::generate().expect("keygen");
        let mut params = CertificateParams::default();
        params.distinguished_name = dn(org, cn);
        params.is_ca = IsCa::Ca(BasicConstraints::Unconstrained);
        params.not_before = odt(not_before);
        params.not_after = odt(not_after);
        params.serial_number = Some(SerialNumber::from_slice(&next_serial()));
        let cert = params.self_signed(&key).expect("self-sign");
        let der = cert.der().to_vec();
        Self { params, key, der }
    }

    /// Intermediate signed by `parent`.
    pub fn intermediate(
        org: &str,
        cn: &str,
        parent: &TestCa,
        not_before: DateTime<Utc>,
        not_after: DateTime<Utc>,
    ) -> Self {
        let key = KeyPair::generate().expect("keygen");
        let mut params = CertificateParams::default();
        params.distinguished_name = dn(org, cn);
        params.is_ca = IsCa::Ca(BasicConstraints::Unconstrained);
        params.not_before = odt(not_before);
        params.not_after = odt(not_after);
        params.serial_number = Some(SerialNumber::from_slice(&next_serial()));
        let issuer = Issuer::from_params(&parent.params, &parent.key);
        let cert = params.signed_by(&key, &issuer).expect("sign intermediate");
        let der = cert.der().to_vec();
        Self { params, key, der }
    }

    pub fn spki_der(&self) -> Vec<u8> {
        self.key.subject_public_key_info()
    }

    fn issuer(&self) -> Issuer<'_, &KeyPair> {
        Issuer::from_params(&self.params, &self.key)
    }
}

/// What a leaf certificate should look like.
pub struct LeafSpec {
    pub sans: Vec<String>,
    pub org: Option<String>,
    pub cn: String,
    pub not_before: DateTime<Utc>,
    pub not_after: DateTime<Utc>,
    /// Reuse an existing key (same-SPKI renewals); otherwise generated.
    pub key: Option<KeyPair>,
}

impl LeafSpec {
    pub fn new(name: &str, not_before: DateTime<Utc>, not_after: DateTime<Utc>) -> Self {
        Self {
            sans: vec![name.to_string()],
            org: None,
            cn: name.to_string(),
            not_before,
            not_after,
            key: None,
        }
    }

    pub fn with_sans(mut self, sans: &[&str]) -> Self {
        self.sans = sans.iter().map(|s| s.to_string()).collect();
        self
    }

    pub fn with_org(mut self, org: &str) -> Self {
        self.org = Some(org.to_string());
        self
    }

    pub fn with_key(mut self, key: KeyPair) -> Self {
        self.key = Some(key);
        self
    }

    fn params(&self) -> CertificateParams {
        let mut params = CertificateParams::default();
        params.distinguished_name = DistinguishedName::new();
        if let Some(org) = &self.org {
            params
                .distinguished_name
                .push(DnType::OrganizationName, org.as_str());
        }
        params
            .distinguished_name
            .push(DnType::CommonName, self.cn.as_str());
        params.subject_alt_names = self
            .sans
            .iter()
            .map(|s| SanType::DnsName(s.clone().try_into().expect("valid SAN")))
            .collect();
        params.not_before = odt(self.not_before);
        params.not_after = odt(self.not_after);
        params.serial_number = Some(SerialNumber::from_slice(&next_serial()));
        params
    }
}

/// A signed leaf plus the material tests need to mutate it.
pub struct IssuedLeaf {
    pub der: Vec<u8>,
    pub key: KeyPair,
    /// Raw SCTs embedded in the certificate, in order.
    pub scts: Vec<Vec<u8>>,
}

fn spec_key(spec: &LeafSpec) -> KeyPair {
    spec.key
        .as_ref()
        .map(clone_key)
        .unwrap_or_else(|| KeyPair::generate().expect("keygen"))
}

/// Signs a plain leaf (no CT extensions).
pub fn issue_leaf(spec: LeafSpec, ca: &TestCa) -> IssuedLeaf {
    let key = spec_key(&spec);
    let params = spec.params();
    let cert = params.signed_by(&key, &ca.issuer()).expect("sign leaf");
    IssuedLeaf {
        der: cert.der().to_vec(),
        key,
        scts: Vec::new(),
    }
}

/// Signs a self-signed leaf (default server certificates).
pub fn issue_self_signed(spec: LeafSpec) -> IssuedLeaf {
    let key = spec_key(&spec);
    let params = spec.params();
    let cert = params.self_signed(&key).expect("self-sign leaf");
    IssuedLeaf {
        der: cert.der().to_vec(),
        key,
        scts: Vec::new(),
    }
}

/// Signs a leaf carrying SCTs from the given logs, following the real
/// issuance flow: the SCTs sign the precertificate form (TBS without the SCT
/// extension) bound to the issuer key, then the final certificate embeds
/// them.
pub fn issue_leaf_with_scts(
    spec: LeafSpec,
    ca: &TestCa,
    logs: &[&CtLogSigner],
    sct_timestamp: DateTime<Utc>,
) -> IssuedLeaf {
    let key = spec_key(&spec);
    let params = spec.params();

    // First signing pass fixes the TBS bytes the SCTs must cover.
    let without = params.signed_by(&key, &ca.issuer()).expect("sign pass 1");
    let tbs = tbs_bytes(without.der());
    let issuer_key_hash: [u8; 32] = Sha256::digest(ca.spki_der()).into();

    let timestamp_ms = sct_timestamp.timestamp_millis() as u64;
    let scts: Vec<Vec<u8>> = logs
        .iter()
        .map(|log| log.sign_precert_sct(timestamp_ms, issuer_key_hash, &tbs))
        .collect();

    let mut with_ext = params;
    with_ext
        .custom_extensions
        .push(CustomExtension::from_oid_content(
            SCT_LIST_OID,
            wrap_octet_string(&encode_tls_sct_list(&scts)),
        ));
    let cert = with_ext.signed_by(&key, &ca.issuer()).expect("sign pass 2");

    // The rebuild the verifier performs must land exactly on the bytes the
    // logs signed.
    let reconstructed = certaudit::certs::der::tbs_without_sct_extension(cert.der())
        .expect("reconstruct TBS");
    assert_eq!(reconstructed, tbs, "SCT TBS reconstruction diverged");

    IssuedLeaf {
        der: cert.der().to_vec(),
        key,
        scts,
    }
}

/// Signs a precertificate: identical parameters plus the critical poison
/// extension. Pass the same serial to pair it with a final certificate.
pub fn issue_precert(spec: &LeafSpec, serial: &[u8], ca: &TestCa) -> Vec<u8> {
    let key = spec_key(spec);
    let mut params = spec.params();
    params.serial_number = Some(SerialNumber::from_slice(serial));
    let mut poison = CustomExtension::from_oid_content(POISON_OID, vec![0x05, 0x00]);
    poison.set_criticality(true);
    params.custom_extensions.push(poison);
    params
        .signed_by(&key, &ca.issuer())
        .expect("sign precert")
        .der()
        .to_vec()
}

/// Signs a final certificate with a pinned serial, for precert/final pairs.
pub fn issue_leaf_with_serial(spec: &LeafSpec, serial: &[u8], ca: &TestCa) -> IssuedLeaf {
    let key = spec_key(spec);
    let mut params = spec.params();
    params.serial_number = Some(SerialNumber::from_slice(serial));
    let cert = params.signed_by(&key, &ca.issuer()).expect("sign leaf");
    IssuedLeaf {
        der: cert.der().to_vec(),
        key,
        scts: Vec::new(),
    }
}

/// A CT log able to issue SCTs: an ECDSA P-256 key with the conventional
/// log id (SHA-256 over the public key SPKI).
pub struct CtLogSigner {
    pub description: String,
    pub operator: String,
    key: ring::signature::EcdsaKeyPair,
    pub spki: Vec<u8>,
    pub id: [u8; 32],
}

impl CtLogSigner {
    pub fn new(description: &str, operator: &str) -> Self {
        let rng = ring::rand::SystemRandom::new();
        let pkcs8 = ring::signature::EcdsaKeyPair::generate_pkcs8(
            &ring::signature::ECDSA_P256_SHA256_ASN1_SIGNING,
            &rng,
        )
        .expect("log keygen");
        let key = ring::signature::EcdsaKeyPair::from_pkcs8(
            &ring::signature::ECDSA_P256_SHA256_ASN1_SIGNING,
            pkcs8.as_ref(),
            &rng,
        )
        .expect("log key load");
        let spki = p256_spki(ring::signature::KeyPair::public_key(&key).as_ref());
        let id: [u8; 32] = Sha256::digest(&spki).into();
        Self {
            description: description.to_string(),
            operator: operator.to_string(),
            key,
            spki,
            id,
        }
    }

    /// Issues a v1 SCT over a precert entry. This is the reference signing
    /// oracle: the byte layout is written out here explicitly.
    pub fn sign_precert_sct(
        &self,
        timestamp_ms: u64,
        issuer_key_hash: [u8; 32],
        tbs: &[u8],
    ) -> Vec<u8> {
        // digitally-signed input
        let mut message = Vec::new();
        message.push(0); // sct_version v1
        message.push(0); // signature_type certificate_timestamp
        message.extend_from_slice(&timestamp_ms.to_be_bytes());
        message.extend_from_slice(&1u16.to_be_bytes()); // precert_entry
        message.extend_from_slice(&issuer_key_hash);
        message.extend_from_slice(&(tbs.len() as u32).to_be_bytes()[1..]); // uint24
        message.extend_from_slice(tbs);
        message.extend_from_slice(&0u16.to_be_bytes()); // no extensions

        let rng = ring::rand::SystemRandom::new();
        let signature = self.key.sign(&rng, &message).expect("sign SCT");

        // SCT wire structure
        let mut sct = Vec::new();
        sct.push(0); // v1
        sct.extend_from_slice(&self.id);
        sct.extend_from_slice(&timestamp_ms.to_be_bytes());
        sct.extend_from_slice(&0u16.to_be_bytes()); // extensions
        sct.push(4); // sha256
        sct.push(3); // ecdsa
        sct.extend_from_slice(&(signature.as_ref().len() as u16).to_be_bytes());
        sct.extend_from_slice(signature.as_ref());
        sct
    }

    /// Log-list JSON fragment for this log.
    pub fn log_list_entry(&self, state: &str) -> serde_json::Value {
        use base64::Engine as _;
        let engine = base64::engine::general_purpose::STANDARD;
        serde_json::json!({
            "description": self.description,
            "log_id": engine.encode(self.id),
            "key": engine.encode(&self.spki),
            "url": format!("https://{}.ct.test/", self.description.to_ascii_lowercase().replace(' ', "-")),
            "mmd": 86400,
            "state": { state: {} }
        })
    }
}

/// Builds the known-logs document for a set of logs grouped by operator.
pub fn log_list_json(entries: &[(&CtLogSigner, &str)]) -> String {
    use std::collections::BTreeMap;
    let mut by_operator: BTreeMap<String, Vec<serde_json::Value>> = BTreeMap::new();
    for (log, state) in entries {
        by_operator
            .entry(log.operator.clone())
            .or_default()
            .push(log.log_list_entry(state));
    }
    let operators: Vec<serde_json::Value> = by_operator
        .into_iter()
        .map(|(name, logs)| serde_json::json!({ "name": name, "logs": logs }))
        .collect();
    serde_json::to_string_pretty(&serde_json::json!({ "operators": operators })).unwrap()
}

/// Wraps an EC P-256 public point into SubjectPublicKeyInfo DER.
fn p256_spki(point: &[u8]) -> Vec<u8> {
    // SEQ { SEQ { OID ecPublicKey, OID prime256v1 }, BIT STRING point }
    let alg: &[u8] = &[
        0x30, 0x13, 0x06, 0x07, 0x2a, 0x86, 0x48, 0xce, 0x3d, 0x02, 0x01, 0x06, 0x08, 0x2a, 0x86,
        0x48, 0xce, 0x3d, 0x03, 0x01, 0x07,
    ];
    let mut bits = vec![0x03, (point.len() + 1) as u8, 0x00];
    bits.extend_from_slice(point);
    let mut body = alg.to_vec();
    body.extend_from_slice(&bits);
    let mut out = vec![0x30, body.len() as u8];
    out.extend_from_slice(&body);
    out
}

/// TLS-encodes a SignedCertificateTimestampList.
pub fn encode_tls_sct_list(scts: &[Vec<u8>]) -> Vec<u8> {
    let mut inner = Vec::new();
    for sct in scts {
        inner.extend_from_slice(&(sct.len() as u16).to_be_bytes());
        inner.extend_from_slice(sct);
    }
    let mut out = Vec::with_capacity(inner.len() + 2);
    out.extend_from_slice(&(inner.len() as u16).to_be_bytes());
    out.extend_from_slice(&inner);
    out
}

/// DER OCTET STRING wrapper (extension values nest one inside extnValue).
pub fn wrap_octet_string(content: &[u8]) -> Vec<u8> {
    let mut out = Vec::with_capacity(content.len() + 4);
    out.push(0x04);
    if content.len() < 0x80 {
        out.push(content.len() as u8);
    } else {
        let bytes = (content.len() as u32).to_be_bytes();
        let skip = bytes.iter().take_while(|&&b| b == 0).count();
        out.push(0x80 | (bytes.len() - skip) as u8);
        out.extend_from_slice(&bytes[skip..]);
    }
    out.extend_from_slice(content);
    out
}

/// TBS bytes of a DER certificate (outer SEQUENCE, first child).
fn tbs_bytes(cert_der: &[u8]) -> Vec<u8> {
    certaudit::certs::der::tbs_of(cert_der)
        .expect("certificate DER")
        .to_vec()
}

fn dn(org: &str, cn: &str) -> DistinguishedName {
    let mut dn = DistinguishedName::new();
    dn.push(DnType::OrganizationName, org);
    dn.push(DnType::CommonName, cn);
    dn
}

fn odt(t: DateTime<Utc>) -> time::OffsetDateTime {
    time::OffsetDateTime::from_unix_timestamp(t.timestamp()).expect("timestamp in range")
}

/// rcgen KeyPairs are not Clone; round-trip through the serialized form.
fn clone_key(key: &KeyPair) -> KeyPair {
    KeyPair::try_from(key.serialize_der().as_slice()).expect("key round-trip")
}

/// Monotonic serial source so that every generated certificate is distinct.
fn next_serial() -> Vec<u8> {
    use std::sync::atomic::{AtomicU64, Ordering};
    static COUNTER: AtomicU64 = AtomicU64::new(0x1000);
    let n = COUNTER.fetch_add(1, Ordering::SeqCst);
    n.to_be_bytes().to_vec()
}
