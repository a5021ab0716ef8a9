//! Run-level aggregation: deployment overlap, state histograms, CA-string
//! shares, triage counts, and the TLSA/CT authentication matrix.

use std::collections::BTreeMap;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::caa::{CaaMatchState, CaaTagKind, IodefVerdict, IssueValueKind, UnknownTagKind};
use crate::consistency::TLSA_CT_ROWS;

use super::AuditRecord;

const ALL_STATES: [CaaMatchState; 6] = [
    CaaMatchState::NoCaa,
    CaaMatchState::ImplicitMatch,
    CaaMatchState::IssuerMatch,
    CaaMatchState::IssuerMismatch,
    CaaMatchState::MalformedMismatch,
    CaaMatchState::EmptyMismatch,
];

/// Certificates at most this old count as "young" in the age split.
const THREE_MONTHS_DAYS: i64 = 90;

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CaStringStats {
    pub issue_overall: u64,
    pub issue_single: u64,
    pub issuewild_overall: u64,
    pub issuewild_single: u64,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AgeBucketCounts {
    pub within_3_months: u64,
    pub older: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TlsaCtMatrixRow {
    pub server_authenticated: bool,
    pub ct_authenticated: bool,
    pub same_issuer: bool,
    pub count: u64,
}

/// The run summary. Histogram keys are fixed and complete so that reruns are
/// byte-identical regardless of which states actually occurred.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SummaryReport {
    pub schema_version: u32,
    pub reference_time: DateTime<Utc>,
    pub domains_total: u64,
    pub domains_with_chain: u64,
    /// Exclusive deployment overlap among domains deploying at least one of
    /// DNSSEC, CAA, TLSA. The seven keys partition that population.
    pub overlap_counts: BTreeMap<String, u64>,
    /// Server-certificate CAA state, one contribution per audited domain
    /// with a served certificate.
    pub caa_state_histogram: BTreeMap<String, u64>,
    /// Per CAA string: how many domains carry it at all, and for how many it
    /// is the only string (per tag).
    pub ca_string_shares: BTreeMap<String, CaStringStats>,
    pub iodef_triage_counts: BTreeMap<String, u64>,
    pub unknown_tag_triage: BTreeMap<String, u64>,
    /// All eight (server, ct, same-issuer) rows, fixed order.
    pub tlsa_ct_matrix: Vec<TlsaCtMatrixRow>,
    /// Inconsistent (server state, CT state) pairs.
    pub caa_ct_pair_counts: BTreeMap<String, u64>,
    /// Certificate age split per CAA state, for domains whose certificate
    /// covers the audited name.
    pub age_buckets: BTreeMap<String, AgeBucketCounts>,
}

/// Folds completed records into the run summary.
pub fn aggregate(records: &[AuditRecord], at: DateTime<Utc>) -> SummaryReport {
    let mut overlap_counts: BTreeMap<String, u64> = BTreeMap::new();
    for subset in [
        "CAA",
        "DNSSEC",
        "TLSA",
        "CAA+DNSSEC",
        "CAA+TLSA",
        "DNSSEC+TLSA",
        "CAA+DNSSEC+TLSA",
    ] {
        overlap_counts.insert(subset.to_string(), 0);
    }
    let mut caa_state_histogram: BTreeMap<String, u64> = ALL_STATES
        .iter()
        .map(|s| (s.as_str().to_string(), 0))
        .collect();
    let mut age_buckets: BTreeMap<String, AgeBucketCounts> = ALL_STATES
        .iter()
        .map(|s| (s.as_str().to_string(), AgeBucketCounts::default()))
        .collect();
    let mut ca_string_shares: BTreeMap<String, CaStringStats> = BTreeMap::new();
    let mut iodef_triage_counts: BTreeMap<String, u64> = BTreeMap::new();
    let mut unknown_tag_triage: BTreeMap<String, u64> = [
        "unrecognized_known_elsewhere",
        "misspelling",
        "malformed_format",
        "novel",
    ]
    .iter()
    .map(|k| (k.to_string(), 0))
    .collect();
    let mut matrix_counts: BTreeMap<(bool, bool, bool), u64> = BTreeMap::new();
    let mut caa_ct_pair_counts: BTreeMap<String, u64> = BTreeMap::new();
    let mut domains_with_chain = 0u64;

    for record in records {
        // Deployment overlap.
        let dnssec = record.dnssec_secure();
        let caa = record.has_caa();
        let tlsa = record.has_tlsa();
        if dnssec || caa || tlsa {
            let mut parts = Vec::new();
            if caa {
                parts.push("CAA");
            }
            if dnssec {
                parts.push("DNSSEC");
            }
            if tlsa {
                parts.push("TLSA");
            }
            *overlap_counts.entry(parts.join("+")).or_default() += 1;
        }

        // Server-state histogram and age split.
        if let Some(outcome) = &record.caa.server_fqdn {
            *caa_state_histogram
                .entry(outcome.state.as_str().to_string())
                .or_default() += 1;
            if let (Some(chain), Some(nm)) = (&record.chain, record.name_match) {
                if nm.matches() {
                    let age_days = at.signed_duration_since(chain.not_before).num_days();
                    let bucket = age_buckets
                        .entry(outcome.state.as_str().to_string())
                        .or_default();
                    if age_days <= THREE_MONTHS_DAYS {
                        bucket.within_3_months += 1;
                    } else {
                        bucket.older += 1;
                    }
                }
            }
        }
        if record.chain.is_some() {
            domains_with_chain += 1;
        }

        // CA-string shares over the relevant set.
        if let Some(relevant) = &record.caa.relevant {
            for tag in [CaaTagKind::Issue, CaaTagKind::IssueWild] {
                let mut strings: Vec<String> = relevant
                    .records
                    .iter()
                    .filter(|r| r.tag_kind == tag)
                    .filter_map(|r| r.issue_value.as_ref())
                    .filter(|v| v.kind == IssueValueKind::Issuer)
                    .filter_map(|v| v.issuer_domain.clone())
                    .collect();
                strings.sort();
                strings.dedup();
                let single = strings.len() == 1;
                for string in &strings {
                    let stats = ca_string_shares.entry(string.clone()).or_default();
                    match tag {
                        CaaTagKind::Issue => {
                            stats.issue_overall += 1;
                            if single {
                                stats.issue_single += 1;
                            }
                        }
                        CaaTagKind::IssueWild => {
                            stats.issuewild_overall += 1;
                            if single {
                                stats.issuewild_single += 1;
                            }
                        }
                        _ => unreachable!(),
                    }
                }
            }
        }

        // iodef and unknown-tag triage.
        for (_, verdict) in &record.caa.iodef_verdicts {
            let key = match verdict {
                IodefVerdict::Valid { scheme } => format!("valid_{scheme}"),
                IodefVerdict::InvalidScheme { .. } => "invalid_scheme".to_string(),
                IodefVerdict::LikelyEmail => "likely_email".to_string(),
                IodefVerdict::LikelyHttp => "likely_http".to_string(),
                IodefVerdict::Garbage => "garbage".to_string(),
            };
            *iodef_triage_counts.entry(key).or_default() += 1;
        }
        for (_, kind) in &record.caa.unknown_tags {
            let key = match kind {
                UnknownTagKind::UnrecognizedKnownElsewhere => "unrecognized_known_elsewhere",
                UnknownTagKind::Misspelling => "misspelling",
                UnknownTagKind::MalformedFormat => "malformed_format",
                UnknownTagKind::Novel => "novel",
            };
            *unknown_tag_triage.entry(key.to_string()).or_default() += 1;
        }

        // TLSA/CT matrix rows.
        for row in &record.consistency.tlsa_ct_rows {
            *matrix_counts
                .entry((
                    row.server_authenticated,
                    row.ct_authenticated,
                    row.same_issuer,
                ))
                .or_default() += 1;
        }

        // CAA/CT inconsistency pairs.
        if let Some(comparison) = &record.consistency.caa_ct {
            for pair in &comparison.inconsistency_pairs {
                let key = format!("{}->{}", pair.server.label(), pair.ct.as_str());
                *caa_ct_pair_counts.entry(key).or_default() += 1;
            }
        }
    }

    let tlsa_ct_matrix = TLSA_CT_ROWS
        .iter()
        .map(|key| TlsaCtMatrixRow {
            server_authenticated: key.server_authenticated,
            ct_authenticated: key.ct_authenticated,
            same_issuer: key.same_issuer,
            count: matrix_counts
                .get(&(
                    key.server_authenticated,
                    key.ct_authenticated,
                    key.same_issuer,
                ))
                .copied()
                .unwrap_or(0),
        })
        .collect();

    SummaryReport {
        schema_version: 1,
        reference_time: at,
        domains_total: records.len() as u64,
        domains_with_chain,
        overlap_counts,
        caa_state_histogram,
        ca_string_shares,
        iodef_triage_counts,
        unknown_tag_triage,
        tlsa_ct_matrix,
        caa_ct_pair_counts,
        age_buckets,
    }
}
