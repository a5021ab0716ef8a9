//! Orchestration: target preparation, per-domain audits, aggregation, and
//! report emission.

mod aggregate;
mod report;
mod target;

pub use aggregate::{aggregate, AgeBucketCounts, CaStringStats, SummaryReport, TlsaCtMatrixRow};
pub use report::{emit_report, OutputFormat};
pub use target::{prepare_targets, DroppedTarget, LiveProber, OfflineProber, Target, TargetProber};

use std::net::IpAddr;
use std::sync::Arc;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::caa::{
    self, match_caa, relevant_caa_set, validate_iodef, CaIdentity, CaaMatchState, CaaOutcome,
    CaaRecord, CaaTagKind, CaMapping, IodefVerdict, NameKind, RelevantCaaSet, UnknownTagKind,
};
use crate::certs::{
    chain_from_ders, issuer_identity, name_matches, validate_chain, verify_scts, Certificate,
    CertificateChain, ChainStatus, ChainVerdict, KnownLogs, NameMatch, SctVerdict, TlsSource,
    TrustStore,
};
use crate::consistency::{
    self, compare_caa_server_vs_ct, partial_caa_check, tlsa_mismatch_forensics, tlsa_vs_caa,
    CaaCtComparison, PartialCaaFinding, ReferencedCert, ServerCertState, TlsaCaaFinding,
    TlsaCtKey, TlsaForensicFinding,
};
use crate::ctlog::{fetch_certs_by_name, fetch_certs_by_tlsa, CtBackend, CtEntry};
use crate::dane::{evaluate_dane, parse_tlsa, DaneAssessment, TlsaRecord};
use crate::dns::{collect_domain_dns, DnsBackend, DomainDnsBundle};

/// Everything an audit run needs besides the targets.
pub struct AuditConfig {
    /// Single reference timestamp for the whole run; all validity decisions
    /// use it, which keeps reruns byte-identical.
    pub reference_time: DateTime<Utc>,
    pub concurrency: usize,
    pub redirect_cap: u32,
    pub trust_store: TrustStore,
    pub known_logs: KnownLogs,
    pub mapping: CaMapping,
}

impl AuditConfig {
    pub fn new(reference_time: DateTime<Utc>) -> Self {
        Self {
            reference_time,
            concurrency: 16,
            redirect_cap: 10,
            trust_store: TrustStore::empty(),
            known_logs: KnownLogs::empty(),
            mapping: CaMapping::builtin(),
        }
    }
}

/// The collection backends, live or fixture-backed.
#[derive(Clone)]
pub struct Backends {
    pub dns: Arc<dyn DnsBackend>,
    pub tls: Arc<dyn TlsSource>,
    pub ct: Arc<dyn CtBackend>,
    pub prober: Arc<dyn TargetProber>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Stage {
    Dns,
    Tls,
    Validate,
    Ct,
    Consistency,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageError {
    pub stage: Stage,
    pub detail: String,
}

/// Served-chain summary carried in the per-domain record.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ChainSummary {
    pub leaf_fingerprint_sha256: String,
    pub leaf_subject: String,
    pub leaf_issuer: String,
    pub leaf_san: Vec<String>,
    pub leaf_serial: String,
    pub not_before: DateTime<Utc>,
    pub not_after: DateTime<Utc>,
    pub chain_length: usize,
    pub embedded_sct_count: usize,
    pub sct_verdicts: Vec<SctVerdict>,
    pub sni_used: String,
}

/// CAA findings for one domain.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct CaaSection {
    pub relevant: Option<RelevantCaaSet>,
    pub server_fqdn: Option<CaaOutcome>,
    pub server_wildcard: Option<CaaOutcome>,
    pub iodef_verdicts: Vec<(String, IodefVerdict)>,
    pub unknown_tags: Vec<(String, UnknownTagKind)>,
}

/// One CT entry as recorded per domain.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CtEntrySummary {
    pub entry_id: String,
    pub fingerprint_sha256: String,
    pub issuer_organization: Option<String>,
    pub not_before: DateTime<Utc>,
    pub not_after: DateTime<Utc>,
    pub is_precert: bool,
    pub caa_state: CaaMatchState,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct CtSection {
    pub fetched: bool,
    pub entries: Vec<CtEntrySummary>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct ConsistencySection {
    pub caa_ct: Option<CaaCtComparison>,
    pub partial_caa: Option<PartialCaaFinding>,
    pub tlsa_ct_rows: Vec<TlsaCtKey>,
    pub tlsa_caa_findings: Vec<TlsaCaaFinding>,
    pub tlsa_forensics: Vec<TlsaForensicFinding>,
}

/// Everything collected and derived for one domain. Every populated field is
/// traceable to a completed stage; failed stages leave typed errors behind.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AuditRecord {
    pub schema_version: u32,
    pub audited_name: String,
    pub target: Target,
    pub reference_time: DateTime<Utc>,
    pub dns: Option<DomainDnsBundle>,
    pub chain: Option<ChainSummary>,
    pub chain_status: Option<ChainStatus>,
    pub name_match: Option<NameMatch>,
    pub issuer: Option<CaIdentity>,
    pub caa: CaaSection,
    pub dane: Option<DaneAssessment>,
    pub ct: CtSection,
    pub consistency: ConsistencySection,
    pub errors: Vec<StageError>,
}

impl AuditRecord {
    /// The CI failure signal: forbidden-by-CAA configurations that still
    /// carry certificates, or partial CAA matches.
    pub fn has_audit_failure(&self) -> bool {
        let bad = |outcome: &Option<CaaOutcome>| {
            outcome.as_ref().is_some_and(|o| {
                matches!(
                    o.state,
                    CaaMatchState::MalformedMismatch | CaaMatchState::EmptyMismatch
                )
            })
        };
        bad(&self.caa.server_fqdn)
            || bad(&self.caa.server_wildcard)
            || self.consistency.partial_caa.is_some()
    }

    pub fn dnssec_secure(&self) -> bool {
        self.dns.as_ref().is_some_and(DomainDnsBundle::dnssec_secure)
    }

    pub fn has_caa(&self) -> bool {
        self.caa.relevant.is_some()
    }

    pub fn has_tlsa(&self) -> bool {
        self.dane.is_some()
    }
}

/// The identity of the CA that signed a CT-logged leaf, taken from the leaf's
/// issuer fields (logs do not hand us the signer certificate).
fn ct_issuer_identity(cert: &Certificate) -> CaIdentity {
    let mut identity = CaIdentity::new(cert.issuer.organization.as_deref().unwrap_or_default());
    for candidate in [
        cert.issuer.common_name.as_deref(),
        cert.issuer.organization.as_deref(),
    ]
    .into_iter()
    .flatten()
    {
        let lower = candidate.to_ascii_lowercase();
        let domain_shaped = lower.contains('.')
            && lower
                .split('.')
                .all(|l| !l.is_empty() && l.bytes().all(|b| b.is_ascii_alphanumeric() || b == b'-'));
        if domain_shaped && !identity.domain_hints.contains(&lower) {
            identity.domain_hints.push(lower);
        }
    }
    identity
}

/// How a logged certificate covers the audited name decides which CAA check
/// applies to it.
fn coverage_kind(cert: &Certificate, name: &str) -> NameKind {
    match name_matches(cert, name) {
        NameMatch::WildcardSan => NameKind::Wildcard,
        _ => NameKind::Fqdn,
    }
}

fn caa_state_of_entry(
    entry: &CtEntry,
    name: &str,
    relevant: Option<&RelevantCaaSet>,
    mapping: &CaMapping,
) -> CaaMatchState {
    let identity = ct_issuer_identity(&entry.certificate);
    match_caa(
        &identity,
        coverage_kind(&entry.certificate, name),
        relevant,
        mapping,
    )
    .state
}

fn parse_caa_walk(
    bundle: &DomainDnsBundle,
    errors: &mut Vec<StageError>,
) -> Vec<(String, Vec<CaaRecord>)> {
    let mut walk = Vec::with_capacity(bundle.caa_by_ancestor.len());
    for (ancestor, response) in &bundle.caa_by_ancestor {
        let mut records = Vec::new();
        for raw in &response.records {
            match caa::parse_presentation(&raw.data) {
                Ok(record) => records.push(record),
                Err(e) => errors.push(StageError {
                    stage: Stage::Dns,
                    detail: format!("CAA record at {ancestor}: {e}"),
                }),
            }
        }
        walk.push((ancestor.clone(), records));
    }
    walk
}

fn summarize_chain(chain: &CertificateChain, sct_verdicts: Vec<SctVerdict>) -> ChainSummary {
    ChainSummary {
        leaf_fingerprint_sha256: chain.leaf.fingerprint_sha256(),
        leaf_subject: chain.leaf.subject.display.clone(),
        leaf_issuer: chain.leaf.issuer.display.clone(),
        leaf_san: chain.leaf.san.clone(),
        leaf_serial: chain.leaf.serial.clone(),
        not_before: chain.leaf.not_before,
        not_after: chain.leaf.not_after,
        chain_length: chain.len(),
        embedded_sct_count: chain.leaf.embedded_scts.len(),
        sct_verdicts,
        sni_used: chain.sni_used.clone(),
    }
}

/// Validates one logged certificate as its own chain against the trust
/// store; CT hands out leaves only, so intermediates come from the store or
/// nowhere.
fn ct_entry_verdict(
    entry: &CtEntry,
    config: &AuditConfig,
) -> ChainVerdict {
    let chain = CertificateChain {
        leaf: entry.certificate.clone(),
        intermediates: Vec::new(),
        unparsed: Vec::new(),
        fetched_at: config.reference_time,
        sni_used: String::new(),
        tls_errors_suppressed: false,
    };
    validate_chain(&chain, &config.trust_store, config.reference_time).verdict
}

/// Runs the full per-domain audit: DNS, TLS, parsing and validation, the
/// conditional CT stage, and the consistency checks. Failures degrade the
/// record, never abort it.
pub async fn audit_domain(
    target: &Target,
    config: &AuditConfig,
    backends: &Backends,
) -> AuditRecord {
    let name = target.final_name.clone();
    let at = config.reference_time;
    let mut errors = Vec::new();

    // DNS collection.
    let dns = match collect_domain_dns(&name, &backends.dns).await {
        Ok((bundle, collect_errors)) => {
            errors.extend(collect_errors.into_iter().map(|e| StageError {
                stage: Stage::Dns,
                detail: format!("{} {}: {}", e.queried_name, e.rrtype, e.detail),
            }));
            Some(bundle)
        }
        Err(e) => {
            errors.push(StageError {
                stage: Stage::Dns,
                detail: e.to_string(),
            });
            None
        }
    };

    // TLS capture.
    let first_ip: Option<IpAddr> = target.resolved_ips.first().and_then(|s| s.parse().ok());
    let chain = match backends.tls.fetch(&name, first_ip).await {
        Ok(ders) => match chain_from_ders(ders, &name, at, true) {
            Ok(chain) => Some(chain),
            Err(e) => {
                errors.push(StageError {
                    stage: Stage::Validate,
                    detail: format!("leaf certificate unusable: {e}"),
                });
                None
            }
        },
        Err(e) => {
            errors.push(StageError {
                stage: Stage::Tls,
                detail: e.to_string(),
            });
            None
        }
    };

    // Parse and validate.
    let chain_status = chain
        .as_ref()
        .map(|c| validate_chain(c, &config.trust_store, at));
    let name_match = chain.as_ref().map(|c| name_matches(&c.leaf, &name));
    let issuer = chain.as_ref().map(|c| {
        let identity = issuer_identity(c);
        if identity.organization.is_empty() {
            errors.push(StageError {
                stage: Stage::Validate,
                detail: "no subject organization anywhere in the chain".into(),
            });
        }
        identity
    });
    let sct_verdicts = chain
        .as_ref()
        .map(|c| {
            let signer = c.leaf_signer().unwrap_or(&c.leaf);
            verify_scts(&c.leaf, signer, &config.known_logs)
        })
        .unwrap_or_default();
    let chain_summary = chain.as_ref().map(|c| summarize_chain(c, sct_verdicts));

    // CAA resolution and matching.
    let mut caa_section = CaaSection::default();
    if let Some(bundle) = &dns {
        let walk = parse_caa_walk(bundle, &mut errors);
        caa_section.relevant = relevant_caa_set(&walk);
        if let Some(relevant) = &caa_section.relevant {
            for record in &relevant.records {
                match record.tag_kind {
                    CaaTagKind::Iodef => {
                        let value = record.value_text();
                        let verdict = validate_iodef(&value);
                        caa_section.iodef_verdicts.push((value, verdict));
                    }
                    CaaTagKind::Unknown => {
                        if let Some(kind) = record.unknown_kind {
                            caa_section.unknown_tags.push((record.tag.clone(), kind));
                        }
                    }
                    _ => {}
                }
            }
        }
    }
    if let (Some(chain), Some(identity)) = (&chain, &issuer) {
        let relevant = caa_section.relevant.as_ref();
        caa_section.server_fqdn = Some(match_caa(
            identity,
            NameKind::Fqdn,
            relevant,
            &config.mapping,
        ));
        if chain.leaf.san.iter().any(|s| s.starts_with("*.")) {
            caa_section.server_wildcard = Some(match_caa(
                identity,
                NameKind::Wildcard,
                relevant,
                &config.mapping,
            ));
        }
    }

    // DANE evaluation.
    let tlsa_records: Vec<TlsaRecord> = dns
        .as_ref()
        .map(|b| b.tlsa_443.records.iter().map(|r| parse_tlsa(&r.data)).collect())
        .unwrap_or_default();
    let dane = (!tlsa_records.is_empty()).then(|| {
        evaluate_dane(
            tlsa_records,
            chain.as_ref(),
            dns.as_ref().is_some_and(|b| b.tlsa_443.authenticated),
            chain_status.as_ref(),
        )
    });

    // CT stage, only for domains with CAA or TLSA records.
    let mut ct_section = CtSection::default();
    let mut consistency_section = ConsistencySection::default();
    let wants_ct = caa_section.relevant.is_some() || dane.is_some();
    if wants_ct {
        match fetch_certs_by_name(&name, at, &backends.ct).await {
            Ok(result) => {
                ct_section.fetched = true;
                let relevant = caa_section.relevant.as_ref();
                for entry in &result.entries {
                    ct_section.entries.push(CtEntrySummary {
                        entry_id: entry.entry_id.clone(),
                        fingerprint_sha256: entry.certificate.fingerprint_sha256(),
                        issuer_organization: entry.certificate.issuer.organization.clone(),
                        not_before: entry.certificate.not_before,
                        not_after: entry.certificate.not_after,
                        is_precert: entry.is_precert,
                        caa_state: caa_state_of_entry(entry, &name, relevant, &config.mapping),
                    });
                }

                // Server vs CT comparison needs a served certificate.
                if let (Some(outcome), Some(nm)) = (&caa_section.server_fqdn, name_match) {
                    let ct_states: Vec<(String, CaaMatchState)> = ct_section
                        .entries
                        .iter()
                        .map(|e| (e.entry_id.clone(), e.caa_state))
                        .collect();
                    consistency_section.caa_ct =
                        Some(compare_caa_server_vs_ct(outcome.state, nm, ct_states));
                }

                // TLSA vs CT matrix and forensics.
                if let Some(assessment) = &dane {
                    let server_auth = assessment.authenticated;
                    let server_org = issuer
                        .as_ref()
                        .map(|i| i.organization.clone())
                        .unwrap_or_default();
                    for entry in &result.entries {
                        let ct_auth = assessment
                            .records
                            .iter()
                            .any(|r| {
                                r.conformant
                                    && r.is_end_entity()
                                    && r.association_matches(&entry.certificate)
                            });
                        let same_issuer = entry
                            .certificate
                            .issuer
                            .organization
                            .as_deref()
                            .map(|o| !server_org.is_empty() && o.eq_ignore_ascii_case(&server_org))
                            .unwrap_or(false);
                        consistency_section.tlsa_ct_rows.push(
                            consistency::classify_tlsa_ct(server_auth, ct_auth, same_issuer),
                        );
                    }

                    // Per-record reference lookups for EE records.
                    let matched_records: Vec<usize> =
                        assessment.all_matches.iter().map(|&(i, _)| i).collect();
                    let mut unmatched: Vec<(usize, Vec<ReferencedCert>)> = Vec::new();
                    let mut referenced_states: Vec<(String, CaaMatchState)> = Vec::new();
                    for (index, record) in assessment.records.iter().enumerate() {
                        if !record.conformant || !record.is_end_entity() {
                            if record.conformant && !matched_records.contains(&index) {
                                // Trust-anchor records cannot be looked up in
                                // leaf-only logs; leave them unexplained.
                                unmatched.push((index, Vec::new()));
                            }
                            continue;
                        }
                        match fetch_certs_by_tlsa(record, &backends.ct).await {
                            Ok(by_record) => {
                                for entry in &by_record.entries {
                                    referenced_states.push((
                                        entry.entry_id.clone(),
                                        caa_state_of_entry(entry, &name, relevant, &config.mapping),
                                    ));
                                }
                                if !matched_records.contains(&index) {
                                    let referenced: Vec<ReferencedCert> = by_record
                                        .entries
                                        .iter()
                                        .map(|entry| ReferencedCert {
                                            entry_id: entry.entry_id.clone(),
                                            verdict: ct_entry_verdict(entry, config),
                                            not_after: entry.certificate.not_after,
                                        })
                                        .collect();
                                    unmatched.push((index, referenced));
                                }
                            }
                            Err(e) => errors.push(StageError {
                                stage: Stage::Ct,
                                detail: format!("TLSA reference lookup: {e}"),
                            }),
                        }
                    }

                    if let (Some(outcome), Some(nm)) = (&caa_section.server_fqdn, name_match) {
                        let server = ServerCertState::from_parts(outcome.state, nm);
                        consistency_section.tlsa_caa_findings =
                            tlsa_vs_caa(server, &referenced_states);
                    }
                    consistency_section.tlsa_forensics =
                        tlsa_mismatch_forensics(&unmatched, at);
                }
            }
            Err(e) => errors.push(StageError {
                stage: Stage::Ct,
                detail: e.to_string(),
            }),
        }
    }

    // Partial CAA matches need both states.
    if let (Some(chain), Some(fqdn), Some(wildcard)) = (
        &chain,
        &caa_section.server_fqdn,
        &caa_section.server_wildcard,
    ) {
        consistency_section.partial_caa =
            partial_caa_check(&chain.leaf.san, fqdn.state, wildcard.state);
    }

    AuditRecord {
        schema_version: 1,
        audited_name: name,
        target: target.clone(),
        reference_time: at,
        dns,
        chain: chain_summary,
        chain_status,
        name_match,
        issuer,
        caa: caa_section,
        dane,
        ct: ct_section,
        consistency: consistency_section,
        errors,
    }
}

/// Audits all targets with bounded concurrency, preserving input order.
pub async fn run_audit(
    targets: Vec<Target>,
    config: Arc<AuditConfig>,
    backends: Backends,
) -> Vec<AuditRecord> {
    let semaphore = Arc::new(tokio::sync::Semaphore::new(config.concurrency.max(1)));
    let mut handles = Vec::with_capacity(targets.len());
    for target in targets {
        let semaphore = Arc::clone(&semaphore);
        let config = Arc::clone(&config);
        let backends = backends.clone();
        handles.push(tokio::spawn(async move {
            let _permit = semaphore.acquire_owned().await.expect("semaphore open");
            audit_domain(&target, &config, &backends).await
        }));
    }
    let mut records = Vec::with_capacity(handles.len());
    for handle in handles {
        records.push(handle.await.expect("audit task never panics"));
    }
    records
}
