//! Cross-source consistency checks: served certificate vs CT log entries vs
//! TLSA references vs CAA policy. All functions here are pure.

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::caa::CaaMatchState;
use crate::certs::{ChainVerdict, NameMatch};

/// The server side of a comparison: its CAA state, or the fact that the
/// served certificate does not even cover the audited name.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ServerCertState {
    Caa(CaaMatchState),
    NameMismatch,
}

impl ServerCertState {
    pub fn from_parts(state: CaaMatchState, name_match: NameMatch) -> Self {
        if name_match.matches() {
            ServerCertState::Caa(state)
        } else {
            ServerCertState::NameMismatch
        }
    }

    pub fn label(&self) -> String {
        match self {
            ServerCertState::Caa(state) => state.as_str().to_string(),
            ServerCertState::NameMismatch => "NameMismatch".to_string(),
        }
    }
}

/// One disagreeing (server, CT) pair.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CaaCtPair {
    pub entry_id: String,
    pub server: ServerCertState,
    pub ct: CaaMatchState,
}

/// Server CAA state against every CT-logged certificate of the domain.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CaaCtComparison {
    pub server_state: CaaMatchState,
    pub server_name_matches: bool,
    pub ct_states: Vec<(String, CaaMatchState)>,
    pub consistent: bool,
    pub inconsistency_pairs: Vec<CaaCtPair>,
}

/// Consistent iff every CT entry carries the same state the server does. A
/// server certificate failing the name match disagrees with every entry by
/// definition.
pub fn compare_caa_server_vs_ct(
    server_state: CaaMatchState,
    server_name_match: NameMatch,
    ct_states: Vec<(String, CaaMatchState)>,
) -> CaaCtComparison {
    let server = ServerCertState::from_parts(server_state, server_name_match);
    let inconsistency_pairs: Vec<CaaCtPair> = ct_states
        .iter()
        .filter(|(_, ct)| ServerCertState::Caa(*ct) != server)
        .map(|(entry_id, ct)| CaaCtPair {
            entry_id: entry_id.clone(),
            server,
            ct: *ct,
        })
        .collect();
    CaaCtComparison {
        server_state,
        server_name_matches: server_name_match.matches(),
        consistent: inconsistency_pairs.is_empty(),
        ct_states,
        inconsistency_pairs,
    }
}

/// Row key of the TLSA/CT authentication matrix: does the TLSA record set
/// authenticate the served certificate, the CT-logged one, and do the two
/// certificates share an issuer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct TlsaCtKey {
    pub server_authenticated: bool,
    pub ct_authenticated: bool,
    pub same_issuer: bool,
}

/// All eight triples in fixed reporting order.
pub const TLSA_CT_ROWS: [TlsaCtKey; 8] = [
    TlsaCtKey { server_authenticated: true, ct_authenticated: true, same_issuer: true },
    TlsaCtKey { server_authenticated: true, ct_authenticated: true, same_issuer: false },
    TlsaCtKey { server_authenticated: true, ct_authenticated: false, same_issuer: true },
    TlsaCtKey { server_authenticated: true, ct_authenticated: false, same_issuer: false },
    TlsaCtKey { server_authenticated: false, ct_authenticated: true, same_issuer: true },
    TlsaCtKey { server_authenticated: false, ct_authenticated: true, same_issuer: false },
    TlsaCtKey { server_authenticated: false, ct_authenticated: false, same_issuer: true },
    TlsaCtKey { server_authenticated: false, ct_authenticated: false, same_issuer: false },
];

impl TlsaCtKey {
    pub fn label(&self) -> String {
        let yn = |b: bool| if b { "yes" } else { "no" };
        format!(
            "server={} ct={} same_issuer={}",
            yn(self.server_authenticated),
            yn(self.ct_authenticated),
            yn(self.same_issuer)
        )
    }
}

/// Maps the three booleans onto the row key. The bijection is the point:
/// every (server, ct, issuer) combination lands in exactly one row.
pub fn classify_tlsa_ct(server_auth: bool, ct_auth: bool, same_issuer: bool) -> TlsaCtKey {
    TlsaCtKey {
        server_authenticated: server_auth,
        ct_authenticated: ct_auth,
        same_issuer,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PartialCaaKind {
    /// The issuer satisfies the issue records but not the issuewild ones.
    IssueMatchesWildMismatch,
    /// The issuer satisfies the issuewild records but not the issue ones.
    WildMatchesIssueMismatch,
}

/// A certificate carrying both an exact and a wildcard name where only one
/// of the two CAA checks passes.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PartialCaaFinding {
    pub fqdn_state: CaaMatchState,
    pub wildcard_state: CaaMatchState,
    pub kind: PartialCaaKind,
}

/// Emits a finding when the certificate lists both an FQDN and a wildcard
/// SAN and exactly one of the two states is IssuerMatch.
pub fn partial_caa_check(
    san: &[String],
    fqdn_state: CaaMatchState,
    wildcard_state: CaaMatchState,
) -> Option<PartialCaaFinding> {
    let has_wildcard = san.iter().any(|s| s.starts_with("*."));
    let has_fqdn = san.iter().any(|s| !s.starts_with("*."));
    if !has_wildcard || !has_fqdn {
        return None;
    }
    let kind = match (
        fqdn_state == CaaMatchState::IssuerMatch,
        wildcard_state == CaaMatchState::IssuerMatch,
    ) {
        (true, false) => PartialCaaKind::IssueMatchesWildMismatch,
        (false, true) => PartialCaaKind::WildMatchesIssueMismatch,
        _ => return None,
    };
    Some(PartialCaaFinding {
        fqdn_state,
        wildcard_state,
        kind,
    })
}

/// A TLSA-referenced logged certificate whose CAA state disagrees with the
/// served certificate's.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TlsaCaaFinding {
    pub entry_id: String,
    pub server: ServerCertState,
    pub referenced: CaaMatchState,
}

/// Compares the CAA state of every TLSA-referenced certificate against the
/// server certificate's state.
pub fn tlsa_vs_caa(
    server: ServerCertState,
    referenced: &[(String, CaaMatchState)],
) -> Vec<TlsaCaaFinding> {
    referenced
        .iter()
        .filter(|(_, state)| ServerCertState::Caa(*state) != server)
        .map(|(entry_id, state)| TlsaCaaFinding {
            entry_id: entry_id.clone(),
            server,
            referenced: *state,
        })
        .collect()
}

/// Relative-expiration buckets around the reference time.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ExpiryBucket {
    /// Expired more than 90 days ago.
    LongExpired,
    /// Expired within the last 90 days.
    RecentlyExpired,
    /// Valid, expiring within 90 days.
    ExpiringSoon,
    /// Valid for more than 90 days.
    ValidLong,
}

impl ExpiryBucket {
    pub fn for_days(days: i64) -> Self {
        if days < -90 {
            ExpiryBucket::LongExpired
        } else if days < 0 {
            ExpiryBucket::RecentlyExpired
        } else if days <= 90 {
            ExpiryBucket::ExpiringSoon
        } else {
            ExpiryBucket::ValidLong
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            ExpiryBucket::LongExpired => "expired>90d",
            ExpiryBucket::RecentlyExpired => "expired<=90d",
            ExpiryBucket::ExpiringSoon => "valid<=90d",
            ExpiryBucket::ValidLong => "valid>90d",
        }
    }
}

/// Why a TLSA record matches nothing the server serves.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ForensicExplanation {
    /// The record points at an expired or untrusted logged certificate; it
    /// was never updated after a rollover.
    StaleRecord,
    /// The record points at a currently valid logged certificate that simply
    /// is not deployed.
    UndeployedValid,
    /// Nothing in the logs matches the record.
    Unexplained,
}

/// A CT-logged certificate as seen by the forensics: its validation verdict
/// and when it expires relative to the reference time.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ReferencedCert {
    pub entry_id: String,
    pub verdict: ChainVerdict,
    pub not_after: DateTime<Utc>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TlsaForensicFinding {
    pub record_index: usize,
    pub entry_id: Option<String>,
    pub verdict: Option<ChainVerdict>,
    pub expiry_bucket: Option<ExpiryBucket>,
    pub relative_expiry_days: Option<i64>,
    pub explanation: ForensicExplanation,
}

/// Explains TLSA records that do not match the served certificate using what
/// the logs know: one finding per (record, logged certificate) pair, or an
/// unexplained finding when the logs have nothing.
pub fn tlsa_mismatch_forensics(
    unmatched: &[(usize, Vec<ReferencedCert>)],
    at: DateTime<Utc>,
) -> Vec<TlsaForensicFinding> {
    let mut findings = Vec::new();
    for (record_index, certs) in unmatched {
        if certs.is_empty() {
            findings.push(TlsaForensicFinding {
                record_index: *record_index,
                entry_id: None,
                verdict: None,
                expiry_bucket: None,
                relative_expiry_days: None,
                explanation: ForensicExplanation::Unexplained,
            });
            continue;
        }
        for cert in certs {
            let days = cert.not_after.signed_duration_since(at).num_days();
            let explanation = if cert.verdict == ChainVerdict::Valid && days >= 0 {
                ForensicExplanation::UndeployedValid
            } else {
                ForensicExplanation::StaleRecord
            };
            findings.push(TlsaForensicFinding {
                record_index: *record_index,
                entry_id: Some(cert.entry_id.clone()),
                verdict: Some(cert.verdict),
                expiry_bucket: Some(ExpiryBucket::for_days(days)),
                relative_expiry_days: Some(days),
                explanation,
            });
        }
    }
    findings
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::TimeZone;
    use proptest::prelude::*;

    const STATES: [CaaMatchState; 6] = [
        CaaMatchState::NoCaa,
        CaaMatchState::ImplicitMatch,
        CaaMatchState::IssuerMatch,
        CaaMatchState::IssuerMismatch,
        CaaMatchState::MalformedMismatch,
        CaaMatchState::EmptyMismatch,
    ];

    #[test]
    fn consistent_when_all_states_equal() {
        let result = compare_caa_server_vs_ct(
            CaaMatchState::IssuerMatch,
            NameMatch::ExactSan,
            vec![
                ("a".into(), CaaMatchState::IssuerMatch),
                ("b".into(), CaaMatchState::IssuerMatch),
            ],
        );
        assert!(result.consistent);
        assert!(result.inconsistency_pairs.is_empty());
    }

    #[test]
    fn ct_mismatch_is_recorded_as_pair() {
        let result = compare_caa_server_vs_ct(
            CaaMatchState::IssuerMatch,
            NameMatch::ExactSan,
            vec![("a".into(), CaaMatchState::IssuerMismatch)],
        );
        assert!(!result.consistent);
        assert_eq!(result.inconsistency_pairs.len(), 1);
        assert_eq!(
            result.inconsistency_pairs[0].server,
            ServerCertState::Caa(CaaMatchState::IssuerMatch)
        );
        assert_eq!(result.inconsistency_pairs[0].ct, CaaMatchState::IssuerMismatch);
    }

    #[test]
    fn server_name_mismatch_disagrees_with_every_entry() {
        let result = compare_caa_server_vs_ct(
            CaaMatchState::IssuerMatch,
            NameMatch::NoMatch,
            vec![("a".into(), CaaMatchState::IssuerMatch)],
        );
        assert!(!result.consistent);
        assert_eq!(result.inconsistency_pairs[0].server, ServerCertState::NameMismatch);
    }

    #[test]
    fn tlsa_ct_rows_are_distinct_and_exhaustive() {
        for (i, a) in TLSA_CT_ROWS.iter().enumerate() {
            for b in &TLSA_CT_ROWS[i + 1..] {
                assert_ne!(a, b);
            }
        }
        for server in [true, false] {
            for ct in [true, false] {
                for same in [true, false] {
                    let key = classify_tlsa_ct(server, ct, same);
                    assert!(TLSA_CT_ROWS.contains(&key));
                }
            }
        }
    }

    #[test]
    fn partial_check_requires_both_name_kinds() {
        let both = vec!["example.com".to_string(), "*.example.com".to_string()];
        let finding = partial_caa_check(
            &both,
            CaaMatchState::IssuerMatch,
            CaaMatchState::IssuerMismatch,
        )
        .unwrap();
        assert_eq!(finding.kind, PartialCaaKind::IssueMatchesWildMismatch);

        let reverse = partial_caa_check(
            &both,
            CaaMatchState::IssuerMismatch,
            CaaMatchState::IssuerMatch,
        )
        .unwrap();
        assert_eq!(reverse.kind, PartialCaaKind::WildMatchesIssueMismatch);

        assert!(partial_caa_check(
            &both,
            CaaMatchState::IssuerMatch,
            CaaMatchState::IssuerMatch
        )
        .is_none());

        let fqdn_only = vec!["example.com".to_string()];
        assert!(partial_caa_check(
            &fqdn_only,
            CaaMatchState::IssuerMatch,
            CaaMatchState::IssuerMismatch
        )
        .is_none());
        let wild_only = vec!["*.example.com".to_string()];
        assert!(partial_caa_check(
            &wild_only,
            CaaMatchState::IssuerMatch,
            CaaMatchState::IssuerMismatch
        )
        .is_none());
    }

    #[test]
    fn tlsa_vs_caa_emits_only_differences() {
        let server = ServerCertState::Caa(CaaMatchState::IssuerMatch);
        let refs = vec![
            ("same".to_string(), CaaMatchState::IssuerMatch),
            ("diff".to_string(), CaaMatchState::IssuerMismatch),
        ];
        let findings = tlsa_vs_caa(server, &refs);
        assert_eq!(findings.len(), 1);
        assert_eq!(findings[0].entry_id, "diff");

        let name_mismatch = tlsa_vs_caa(ServerCertState::NameMismatch, &refs);
        assert_eq!(name_mismatch.len(), 2);
    }

    #[test]
    fn forensics_buckets() {
        let at = Utc.with_ymd_and_hms(2024, 4, 12, 0, 0, 0).unwrap();
        let old = ReferencedCert {
            entry_id: "old".into(),
            verdict: ChainVerdict::Expired,
            not_after: at - chrono::Duration::days(400),
        };
        let fresh = ReferencedCert {
            entry_id: "fresh".into(),
            verdict: ChainVerdict::Valid,
            not_after: at + chrono::Duration::days(200),
        };
        let findings = tlsa_mismatch_forensics(
            &[(0, vec![old, fresh]), (1, vec![])],
            at,
        );
        assert_eq!(findings.len(), 3);
        assert_eq!(findings[0].explanation, ForensicExplanation::StaleRecord);
        assert_eq!(findings[0].expiry_bucket, Some(ExpiryBucket::LongExpired));
        assert_eq!(findings[1].explanation, ForensicExplanation::UndeployedValid);
        assert_eq!(findings[1].expiry_bucket, Some(ExpiryBucket::ValidLong));
        assert_eq!(findings[2].explanation, ForensicExplanation::Unexplained);
        assert_eq!(findings[2].entry_id, None);
    }

    #[test]
    fn expiry_bucket_edges() {
        assert_eq!(ExpiryBucket::for_days(-91), ExpiryBucket::LongExpired);
        assert_eq!(ExpiryBucket::for_days(-90), ExpiryBucket::RecentlyExpired);
        assert_eq!(ExpiryBucket::for_days(-1), ExpiryBucket::RecentlyExpired);
        assert_eq!(ExpiryBucket::for_days(0), ExpiryBucket::ExpiringSoon);
        assert_eq!(ExpiryBucket::for_days(90), ExpiryBucket::ExpiringSoon);
        assert_eq!(ExpiryBucket::for_days(91), ExpiryBucket::ValidLong);
    }

    proptest! {
        // consistent is true exactly when the pair list is empty.
        #[test]
        fn consistency_iff_no_pairs(
            server_idx in 0usize..6,
            name_matches in any::<bool>(),
            ct in prop::collection::vec((0usize..6, "[a-z]{1,4}"), 0..5),
        ) {
            let ct_states: Vec<(String, CaaMatchState)> = ct
                .into_iter()
                .enumerate()
                .map(|(i, (s, id))| (format!("{id}{i}"), STATES[s]))
                .collect();
            let name_match = if name_matches { NameMatch::ExactSan } else { NameMatch::NoMatch };
            let result =
                compare_caa_server_vs_ct(STATES[server_idx], name_match, ct_states);
            prop_assert_eq!(result.consistent, result.inconsistency_pairs.is_empty());
        }

        // Aggregating rows over any multiset preserves the total count.
        #[test]
        fn row_counts_sum_to_input_size(
            triples in prop::collection::vec((any::<bool>(), any::<bool>(), any::<bool>()), 0..40),
        ) {
            use std::collections::BTreeMap;
            let mut counts: BTreeMap<TlsaCtKey, usize> = BTreeMap::new();
            for (a, b, c) in &triples {
                *counts.entry(classify_tlsa_ct(*a, *b, *c)).or_default() += 1;
            }
            prop_assert_eq!(counts.values().sum::<usize>(), triples.len());
        }
    }
}
