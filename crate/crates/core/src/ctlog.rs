//! CT-log retrieval: certificates logged for a name or referenced by a TLSA
//! record, with local filtering, validity windows, and precert deduplication.
//!
//! Backends return candidate sets; the filter predicates (SAN coverage,
//! validity at the reference time, TLSA association equality) are always
//! re-evaluated locally so results never depend on backend search semantics.

use std::collections::HashMap;
use std::path::Path;
use std::sync::Arc;

use async_trait::async_trait;
use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::certs::{name_matches, parse_certificate, Certificate};
use crate::dane::TlsaRecord;
use crate::limiter::RateLimiter;

#[derive(Debug, Error)]
pub enum CtError {
    #[error("CT backend failure: {0}")]
    Backend(String),
    #[error("malformed CT payload: {0}")]
    Payload(String),
    #[error("query not supported by this backend: {0}")]
    Unsupported(String),
}

/// One logged certificate.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CtEntry {
    pub certificate: Certificate,
    pub entry_id: String,
    pub logged_at: Option<DateTime<Utc>>,
    pub is_precert: bool,
}

/// Result of one CT query after filtering and deduplication.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CtQueryResult {
    pub name: String,
    pub entries: Vec<CtEntry>,
    pub deduplicated: bool,
}

#[async_trait]
pub trait CtBackend: Send + Sync {
    /// Candidate entries that may cover `name`. Over-approximation is fine.
    async fn candidates_by_name(&self, name: &str) -> Result<Vec<CtEntry>, CtError>;
    /// Candidate entries for a TLSA reference, or `Unsupported` when the
    /// selector/matching combination cannot be queried.
    async fn candidates_by_tlsa(&self, record: &TlsaRecord) -> Result<Vec<CtEntry>, CtError>;
}

/// Logged certificates covering `name` (exact or wildcard SAN) and valid at
/// `at`, deduplicated.
pub async fn fetch_certs_by_name(
    name: &str,
    at: DateTime<Utc>,
    backend: &Arc<dyn CtBackend>,
) -> Result<CtQueryResult, CtError> {
    let candidates = backend.candidates_by_name(name).await?;
    let filtered = candidates
        .into_iter()
        .filter(|e| name_matches(&e.certificate, name).matches() && e.certificate.valid_at(at))
        .collect();
    Ok(CtQueryResult {
        name: name.to_string(),
        entries: dedupe(filtered),
        deduplicated: true,
    })
}

/// Logged certificates whose association data equals the TLSA record's.
pub async fn fetch_certs_by_tlsa(
    record: &TlsaRecord,
    backend: &Arc<dyn CtBackend>,
) -> Result<CtQueryResult, CtError> {
    if !record.conformant {
        return Err(CtError::Unsupported(
            "non-conformant TLSA records are not queryable".into(),
        ));
    }
    let candidates = backend.candidates_by_tlsa(record).await?;
    let filtered = candidates
        .into_iter()
        .filter(|e| record.association_matches(&e.certificate))
        .collect();
    Ok(CtQueryResult {
        name: format!(
            "tlsa:{} {} {} {}",
            record.usage,
            record.selector,
            record.matching_type,
            hex::encode(&record.data)
        ),
        entries: dedupe(filtered),
        deduplicated: true,
    })
}

/// One entry per (issuer, serial); final certificates win over precerts.
/// First-occurrence order is preserved, which makes this idempotent.
pub fn dedupe(entries: Vec<CtEntry>) -> Vec<CtEntry> {
    let mut out: Vec<CtEntry> = Vec::with_capacity(entries.len());
    let mut index: HashMap<(String, String), usize> = HashMap::new();
    for entry in entries {
        let key = entry.certificate.dedup_key();
        match index.get(&key) {
            Some(&i) => {
                if out[i].is_precert && !entry.is_precert {
                    out[i] = entry;
                }
            }
            None => {
                index.insert(key, out.len());
                out.push(entry);
            }
        }
    }
    out
}

/// Fixture store: a JSON array of logged certificates.
#[derive(Debug, Deserialize, Serialize)]
pub struct FixtureCtRecord {
    pub der_base64: String,
    pub logged_at: Option<DateTime<Utc>>,
    #[serde(default)]
    pub is_precert: bool,
}

#[derive(Debug, Default)]
pub struct FixtureCtBackend {
    entries: Vec<CtEntry>,
}

impl FixtureCtBackend {
    pub fn from_records(records: Vec<FixtureCtRecord>) -> Result<Self, CtError> {
        use base64::Engine as _;
        let engine = base64::engine::general_purpose::STANDARD;
        let mut entries = Vec::with_capacity(records.len());
        for record in records {
            let der = engine
                .decode(&record.der_base64)
                .map_err(|e| CtError::Payload(format!("der_base64: {e}")))?;
            let certificate =
                parse_certificate(&der).map_err(|e| CtError::Payload(e.to_string()))?;
            let entry_id = certificate.fingerprint_sha256()[..16].to_string();
            entries.push(CtEntry {
                certificate,
                entry_id,
                logged_at: record.logged_at,
                is_precert: record.is_precert,
            });
        }
        Ok(Self { entries })
    }

    pub fn load(path: &Path) -> Result<Self, CtError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CtError::Backend(format!("reading {}: {e}", path.display())))?;
        let records: Vec<FixtureCtRecord> =
            serde_json::from_str(&text).map_err(|e| CtError::Payload(e.to_string()))?;
        Self::from_records(records)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }
}

#[async_trait]
impl CtBackend for FixtureCtBackend {
    async fn candidates_by_name(&self, _name: &str) -> Result<Vec<CtEntry>, CtError> {
        Ok(self.entries.clone())
    }

    async fn candidates_by_tlsa(&self, _record: &TlsaRecord) -> Result<Vec<CtEntry>, CtError> {
        Ok(self.entries.clone())
    }
}

/// crt.sh-style live backend: JSON listing queries plus per-certificate DER
/// downloads. Only digest lookups the service understands are supported:
/// SHA-256 of the certificate (selector 0) or of the SPKI (selector 1).
pub struct CrtShBackend {
    base: String,
    client: reqwest::Client,
    limiter: Arc<RateLimiter>,
}

#[derive(Debug, Deserialize)]
struct CrtShRow {
    id: u64,
    #[serde(default)]
    entry_timestamp: Option<String>,
}

impl CrtShBackend {
    pub fn new(base: &str, limiter: Arc<RateLimiter>) -> Result<Self, CtError> {
        let client = reqwest::Client::builder()
            .timeout(std::time::Duration::from_secs(30))
            .build()
            .map_err(|e| CtError::Backend(e.to_string()))?;
        Ok(Self {
            base: base.trim_end_matches('/').to_string(),
            client,
            limiter,
        })
    }

    async fn listing(&self, query: &[(&str, String)]) -> Result<Vec<CrtShRow>, CtError> {
        self.limiter.acquire().await;
        let response = self
            .client
            .get(&self.base)
            .query(query)
            .query(&[("output", "json")])
            .send()
            .await
            .map_err(|e| CtError::Backend(e.to_string()))?;
        if response.status() == reqwest::StatusCode::NOT_FOUND {
            return Ok(Vec::new());
        }
        if !response.status().is_success() {
            return Err(CtError::Backend(format!("HTTP {}", response.status())));
        }
        response
            .json()
            .await
            .map_err(|e| CtError::Payload(e.to_string()))
    }

    async fn download(&self, rows: Vec<CrtShRow>) -> Result<Vec<CtEntry>, CtError> {
        let mut entries = Vec::with_capacity(rows.len());
        for row in rows {
            self.limiter.acquire().await;
            let response = self
                .client
                .get(format!("{}/?d={}", self.base, row.id))
                .send()
                .await
                .map_err(|e| CtError::Backend(e.to_string()))?;
            if !response.status().is_success() {
                return Err(CtError::Backend(format!(
                    "certificate download HTTP {}",
                    response.status()
                )));
            }
            let body = response
                .bytes()
                .await
                .map_err(|e| CtError::Backend(e.to_string()))?;
            // crt.sh serves PEM for ?d=; tolerate raw DER too.
            let ders = if body.starts_with(b"-----BEGIN") {
                super::certs::pem_to_ders(&body).map_err(|e| CtError::Payload(e.to_string()))?
            } else {
                vec![body.to_vec()]
            };
            let Some(der) = ders.into_iter().next() else {
                return Err(CtError::Payload("empty certificate download".into()));
            };
            let certificate =
                parse_certificate(&der).map_err(|e| CtError::Payload(e.to_string()))?;
            let is_precert = certificate.is_precert;
            entries.push(CtEntry {
                certificate,
                entry_id: row.id.to_string(),
                logged_at: row
                    .entry_timestamp
                    .as_deref()
                    .and_then(parse_crtsh_timestamp),
                is_precert,
            });
        }
        Ok(entries)
    }
}

fn parse_crtsh_timestamp(text: &str) -> Option<DateTime<Utc>> {
    chrono::NaiveDateTime::parse_from_str(text, "%Y-%m-%dT%H:%M:%S%.f")
        .ok()
        .map(|naive| naive.and_utc())
}

#[async_trait]
impl CtBackend for CrtShBackend {
    async fn candidates_by_name(&self, name: &str) -> Result<Vec<CtEntry>, CtError> {
        // Exact matches plus wildcards that could cover the name.
        let mut rows = self.listing(&[("q", name.to_string())]).await?;
        if let Some((_, parent)) = name.split_once('.') {
            if parent.contains('.') {
                rows.extend(self.listing(&[("q", format!("*.{parent}"))]).await?);
            }
        }
        rows.sort_by_key(|r| r.id);
        rows.dedup_by_key(|r| r.id);
        self.download(rows).await
    }

    async fn candidates_by_tlsa(&self, record: &TlsaRecord) -> Result<Vec<CtEntry>, CtError> {
        let digest = hex::encode(&record.data);
        let rows = match (record.selector, record.matching_type) {
            (0, 1) => self.listing(&[("q", digest)]).await?,
            (1, 1) => self.listing(&[("spkisha256", digest)]).await?,
            (selector, matching) => {
                return Err(CtError::Unsupported(format!(
                    "crt.sh cannot search selector {selector} / matching type {matching}"
                )))
            }
        };
        self.download(rows).await
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::certs::DnSummary;
    use chrono::TimeZone;

    fn entry(issuer: &str, serial: &str, precert: bool, tag: &str) -> CtEntry {
        CtEntry {
            certificate: Certificate {
                der: tag.as_bytes().to_vec(),
                subject: dn("subject"),
                issuer: dn(issuer),
                san: vec![],
                not_before: Utc.timestamp_opt(0, 0).unwrap(),
                not_after: Utc.timestamp_opt(4102444800, 0).unwrap(),
                spki_der: b"shared-spki".to_vec(),
                serial: serial.into(),
                is_ca: false,
                embedded_scts: vec![],
                is_precert: precert,
            },
            entry_id: tag.into(),
            logged_at: None,
            is_precert: precert,
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

    #[test]
    fn dedupe_prefers_final_over_precert() {
        let result = dedupe(vec![
            entry("ca", "01", true, "pre"),
            entry("ca", "01", false, "final"),
        ]);
        assert_eq!(result.len(), 1);
        assert_eq!(result[0].entry_id, "final");

        // Reversed input keeps the final cert too.
        let result = dedupe(vec![
            entry("ca", "01", false, "final"),
            entry("ca", "01", true, "pre"),
        ]);
        assert_eq!(result.len(), 1);
        assert_eq!(result[0].entry_id, "final");
    }

    #[test]
    fn dedupe_is_idempotent_and_total() {
        assert!(dedupe(vec![]).is_empty());
        let input = vec![
            entry("ca", "01", true, "a"),
            entry("ca", "02", false, "b"),
            entry("other", "01", false, "c"),
            entry("ca", "01", false, "d"),
        ];
        let once = dedupe(input);
        let twice = dedupe(once.clone());
        assert_eq!(
            once.iter().map(|e| e.entry_id.clone()).collect::<Vec<_>>(),
            twice.iter().map(|e| e.entry_id.clone()).collect::<Vec<_>>()
        );
        assert_eq!(once.len(), 3);
    }

    #[test]
    fn distinct_serials_share_spki_and_both_survive() {
        let result = dedupe(vec![
            entry("ca", "01", false, "a"),
            entry("ca", "02", false, "b"),
        ]);
        assert_eq!(result.len(), 2);
    }

    #[tokio::test]
    async fn fetch_by_tlsa_rejects_nonconformant_records() {
        let backend: Arc<dyn CtBackend> = Arc::new(FixtureCtBackend::default());
        let bad = TlsaRecord::new(9, 1, 1, vec![0; 32]);
        assert!(matches!(
            fetch_certs_by_tlsa(&bad, &backend).await,
            Err(CtError::Unsupported(_))
        ));
    }

    #[test]
    fn crtsh_timestamps_parse() {
        assert!(parse_crtsh_timestamp("2024-04-12T10:20:30.123").is_some());
        assert!(parse_crtsh_timestamp("2024-04-12T10:20:30").is_some());
        assert!(parse_crtsh_timestamp("bogus").is_none());
    }
}
