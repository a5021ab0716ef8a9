//! Relevant-set resolution and the six-state issuer matching algorithm.

use serde::{Deserialize, Serialize};

use super::{validate_iodef, CaMapping, CaaRecord, CaaTagKind, IssueValueKind, UnknownTagKind};

/// The six-way consistency classification of a certificate against the
/// relevant CAA record set.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum CaaMatchState {
    /// No applicable CAA RR set exists anywhere along the ancestor chain.
    NoCaa,
    /// A relevant set exists but contains no record constraining this kind of
    /// issuance.
    ImplicitMatch,
    /// At least one governing record names the certificate's issuer.
    IssuerMatch,
    /// Governing records name issuers, none of which is the certificate's.
    IssuerMismatch,
    /// Every governing record is malformed (malformed values forbid issuance).
    MalformedMismatch,
    /// Governing records are empty (`";"`) and forbid issuance outright.
    EmptyMismatch,
}

impl CaaMatchState {
    pub fn as_str(&self) -> &'static str {
        match self {
            CaaMatchState::NoCaa => "NoCaa",
            CaaMatchState::ImplicitMatch => "ImplicitMatch",
            CaaMatchState::IssuerMatch => "IssuerMatch",
            CaaMatchState::IssuerMismatch => "IssuerMismatch",
            CaaMatchState::MalformedMismatch => "MalformedMismatch",
            CaaMatchState::EmptyMismatch => "EmptyMismatch",
        }
    }

    pub fn is_mismatch(&self) -> bool {
        matches!(
            self,
            CaaMatchState::IssuerMismatch
                | CaaMatchState::MalformedMismatch
                | CaaMatchState::EmptyMismatch
        )
    }
}

/// Whether the certificate name being checked is exact or a wildcard.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum NameKind {
    Fqdn,
    Wildcard,
}

/// The identity of the CA that signed a leaf: its subject organization plus
/// any domain-shaped names found in its subject, used as a fallback when the
/// mapping has no entry for a CAA string.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CaIdentity {
    pub organization: String,
    pub domain_hints: Vec<String>,
}

impl CaIdentity {
    pub fn new(organization: &str) -> Self {
        Self {
            organization: organization.to_string(),
            domain_hints: Vec::new(),
        }
    }

    pub fn with_hints(organization: &str, hints: &[&str]) -> Self {
        Self {
            organization: organization.to_string(),
            domain_hints: hints.iter().map(|h| h.to_ascii_lowercase()).collect(),
        }
    }
}

/// Match result: the state plus which tag kind decided an issuer outcome.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CaaOutcome {
    pub state: CaaMatchState,
    /// Present only for IssuerMatch/IssuerMismatch decided by issue/issuewild.
    pub deciding_tag: Option<CaaTagKind>,
}

impl CaaOutcome {
    fn plain(state: CaaMatchState) -> Self {
        Self {
            state,
            deciding_tag: None,
        }
    }
}

/// The record set of the closest ancestor with a non-empty CAA RRset.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RelevantCaaSet {
    pub source_name: String,
    /// Hops above the queried name; 0 means the name itself.
    pub depth: usize,
    pub records: Vec<CaaRecord>,
}

/// Walks the self-first ancestor responses and picks the first non-empty
/// RRset. `None` means the NoCaa classification applies.
pub fn relevant_caa_set(walk: &[(String, Vec<CaaRecord>)]) -> Option<RelevantCaaSet> {
    walk.iter()
        .enumerate()
        .find(|(_, (_, records))| !records.is_empty())
        .map(|(depth, (name, records))| RelevantCaaSet {
            source_name: name.clone(),
            depth,
            records: records.clone(),
        })
}

/// Classifies a certificate issuer against the relevant CAA set.
///
/// Issue records govern exact names; for wildcard names they are superseded
/// by issuewild records whenever at least one is present. A governing record
/// matches when its issuer domain maps to the CA's organization, or, failing
/// a mapping entry, equals one of the CA's domain hints. Unknown tags with
/// the issuer-critical flag forbid issuance outright.
pub fn match_caa(
    issuer: &CaIdentity,
    name_kind: NameKind,
    relevant: Option<&RelevantCaaSet>,
    mapping: &CaMapping,
) -> CaaOutcome {
    let Some(relevant) = relevant else {
        return CaaOutcome::plain(CaaMatchState::NoCaa);
    };

    if relevant
        .records
        .iter()
        .any(|r| r.tag_kind == CaaTagKind::Unknown && r.issuer_critical())
    {
        return CaaOutcome::plain(CaaMatchState::IssuerMismatch);
    }

    let issue: Vec<&CaaRecord> = records_of(relevant, CaaTagKind::Issue);
    let issuewild: Vec<&CaaRecord> = records_of(relevant, CaaTagKind::IssueWild);
    let (governing, deciding_tag) = match name_kind {
        NameKind::Wildcard if !issuewild.is_empty() => (issuewild, CaaTagKind::IssueWild),
        NameKind::Wildcard => (issue, CaaTagKind::Issue),
        NameKind::Fqdn => (issue, CaaTagKind::Issue),
    };

    if governing.is_empty() {
        return CaaOutcome::plain(CaaMatchState::ImplicitMatch);
    }

    let mut saw_issuer_entry = false;
    let mut saw_empty = false;
    for record in &governing {
        let value = record
            .issue_value
            .as_ref()
            .expect("issue/issuewild records carry a parsed value");
        match value.kind {
            IssueValueKind::Issuer => {
                saw_issuer_entry = true;
                let domain = value
                    .issuer_domain
                    .as_deref()
                    .expect("issuer kind carries a domain");
                if issuer_matches(issuer, domain, mapping) {
                    return CaaOutcome {
                        state: CaaMatchState::IssuerMatch,
                        deciding_tag: Some(deciding_tag),
                    };
                }
            }
            IssueValueKind::ExplicitEmpty => saw_empty = true,
            IssueValueKind::Malformed => {}
        }
    }

    if saw_issuer_entry {
        CaaOutcome {
            state: CaaMatchState::IssuerMismatch,
            deciding_tag: Some(deciding_tag),
        }
    } else if saw_empty {
        CaaOutcome::plain(CaaMatchState::EmptyMismatch)
    } else {
        CaaOutcome::plain(CaaMatchState::MalformedMismatch)
    }
}

fn records_of<'a>(relevant: &'a RelevantCaaSet, kind: CaaTagKind) -> Vec<&'a CaaRecord> {
    relevant
        .records
        .iter()
        .filter(|r| r.tag_kind == kind)
        .collect()
}

fn issuer_matches(issuer: &CaIdentity, caa_domain: &str, mapping: &CaMapping) -> bool {
    if let Some(identities) = mapping.identities_for(caa_domain) {
        return identities
            .iter()
            .any(|o| o.eq_ignore_ascii_case(&issuer.organization));
    }
    issuer
        .domain_hints
        .iter()
        .any(|hint| hint.eq_ignore_ascii_case(caa_domain))
}

/// Renders one line per record describing its effect. Ordering is
/// deterministic: issue, issuewild, iodef, unknown, each sorted by value.
pub fn explain_caa(relevant: &RelevantCaaSet, mapping: &CaMapping) -> Vec<String> {
    let has_issuewild = relevant
        .records
        .iter()
        .any(|r| r.tag_kind == CaaTagKind::IssueWild);

    let mut ordered: Vec<&CaaRecord> = relevant.records.iter().collect();
    ordered.sort_by_key(|r| (r.tag_kind, r.value.clone()));

    let mut lines = Vec::with_capacity(ordered.len());
    for record in ordered {
        let value = record.value_text();
        let line = match record.tag_kind {
            CaaTagKind::Issue => {
                let parsed = record.issue_value.as_ref().unwrap();
                match parsed.kind {
                    IssueValueKind::Issuer => {
                        let domain = parsed.issuer_domain.as_deref().unwrap();
                        let scope = if has_issuewild {
                            "certificates for the exact name (wildcards are governed by the issuewild records)"
                        } else {
                            "certificates for the exact name and for wildcards (no issuewild record present)"
                        };
                        format!(
                            "issue \"{domain}\": permits {} to issue {scope}",
                            describe_identities(domain, mapping)
                        )
                    }
                    IssueValueKind::ExplicitEmpty => {
                        let scope = if has_issuewild {
                            "for the exact name"
                        } else {
                            "for the exact name and for wildcards"
                        };
                        format!("issue \";\": forbids all issuance {scope}")
                    }
                    IssueValueKind::Malformed => format!(
                        "issue \"{value}\": malformed value, treated as empty; forbids issuance"
                    ),
                }
            }
            CaaTagKind::IssueWild => {
                let parsed = record.issue_value.as_ref().unwrap();
                match parsed.kind {
                    IssueValueKind::Issuer => {
                        let domain = parsed.issuer_domain.as_deref().unwrap();
                        format!(
                            "issuewild \"{domain}\": permits {} to issue wildcard certificates",
                            describe_identities(domain, mapping)
                        )
                    }
                    IssueValueKind::ExplicitEmpty => {
                        "issuewild \";\": forbids wildcard issuance".to_string()
                    }
                    IssueValueKind::Malformed => format!(
                        "issuewild \"{value}\": malformed value, treated as empty; forbids wildcard issuance"
                    ),
                }
            }
            CaaTagKind::Iodef => match validate_iodef(&value) {
                super::IodefVerdict::Valid { scheme } => {
                    format!("iodef \"{value}\": policy violations are reported via {scheme}")
                }
                other => format!(
                    "iodef \"{value}\": invalid report target ({}), CAs cannot deliver reports",
                    describe_iodef(&other)
                ),
            },
            CaaTagKind::Unknown => {
                let triage = match record.unknown_kind {
                    Some(UnknownTagKind::UnrecognizedKnownElsewhere) => {
                        "defined outside RFC 8659; most CAs ignore it"
                    }
                    Some(UnknownTagKind::Misspelling) => "likely a misspelled standard tag",
                    Some(UnknownTagKind::MalformedFormat) => "malformed tag format",
                    Some(UnknownTagKind::Novel) | None => "not a known tag",
                };
                if record.issuer_critical() {
                    format!(
                        "tag \"{}\" (critical): unknown critical tag, CAs must refuse issuance ({triage})",
                        record.tag
                    )
                } else {
                    format!(
                        "tag \"{}\": unknown tag with no effect on issuance ({triage})",
                        record.tag
                    )
                }
            }
        };
        lines.push(line);
    }
    lines
}

fn describe_identities(domain: &str, mapping: &CaMapping) -> String {
    match mapping.identities_for(domain) {
        Some(identities) => {
            let names: Vec<&str> = identities.iter().map(String::as_str).collect();
            format!("{domain} ({})", names.join(", "))
        }
        None => format!("{domain} (no known CA organization for this string)"),
    }
}

fn describe_iodef(verdict: &super::IodefVerdict) -> String {
    match verdict {
        super::IodefVerdict::Valid { scheme } => scheme.clone(),
        super::IodefVerdict::InvalidScheme { scheme } => {
            format!("unknown scheme \"{scheme}:\"")
        }
        super::IodefVerdict::LikelyEmail => "bare email address, missing mailto:".into(),
        super::IodefVerdict::LikelyHttp => "bare URL, missing http(s)://".into(),
        super::IodefVerdict::Garbage => "unrecognizable value".into(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::caa::parse_caa_record;
    use proptest::prelude::*;

    fn record(tag: &str, value: &str) -> CaaRecord {
        parse_caa_record(0, tag, value.as_bytes())
    }

    fn set(records: Vec<CaaRecord>) -> RelevantCaaSet {
        RelevantCaaSet {
            source_name: "example.test".into(),
            depth: 0,
            records,
        }
    }

    fn mapping() -> CaMapping {
        super::super::load_ca_mapping(
            r#"{
                "web.com": ["Network Solutions L.L.C."],
                "letsencrypt.org": ["Let's Encrypt"],
                "other-ca.example": ["Other CA Corp"]
            }"#,
        )
        .unwrap()
    }

    #[test]
    fn relevant_set_picks_closest_ancestor() {
        let caa = vec![record("issue", "letsencrypt.org")];
        let walk = vec![
            ("www.example.com".to_string(), Vec::new()),
            ("example.com".to_string(), caa.clone()),
            ("com".to_string(), Vec::new()),
        ];
        let relevant = relevant_caa_set(&walk).unwrap();
        assert_eq!(relevant.depth, 1);
        assert_eq!(relevant.source_name, "example.com");

        let walk_self = vec![
            ("www.example.com".to_string(), caa.clone()),
            ("example.com".to_string(), caa),
        ];
        assert_eq!(relevant_caa_set(&walk_self).unwrap().depth, 0);

        let empty_walk = vec![("a.test".to_string(), Vec::new())];
        assert!(relevant_caa_set(&empty_walk).is_none());
    }

    #[test]
    fn paper_worked_example_web_com() {
        let relevant = set(vec![record("issue", "web.com")]);
        let outcome = match_caa(
            &CaIdentity::new("Network Solutions L.L.C."),
            NameKind::Fqdn,
            Some(&relevant),
            &mapping(),
        );
        assert_eq!(outcome.state, CaaMatchState::IssuerMatch);
        assert_eq!(outcome.deciding_tag, Some(CaaTagKind::Issue));
    }

    #[test]
    fn absent_relevant_set_is_no_caa() {
        let outcome = match_caa(
            &CaIdentity::new("Let's Encrypt"),
            NameKind::Fqdn,
            None,
            &mapping(),
        );
        assert_eq!(outcome.state, CaaMatchState::NoCaa);
    }

    #[test]
    fn issuewild_only_set_is_implicit_for_fqdn() {
        let relevant = set(vec![record("issuewild", "letsencrypt.org")]);
        let outcome = match_caa(
            &CaIdentity::new("Let's Encrypt"),
            NameKind::Fqdn,
            Some(&relevant),
            &mapping(),
        );
        assert_eq!(outcome.state, CaaMatchState::ImplicitMatch);
    }

    #[test]
    fn empty_and_malformed_refinements() {
        let empty = set(vec![record("issue", ";")]);
        assert_eq!(
            match_caa(
                &CaIdentity::new("Let's Encrypt"),
                NameKind::Fqdn,
                Some(&empty),
                &mapping()
            )
            .state,
            CaaMatchState::EmptyMismatch
        );

        let malformed = set(vec![record("issue", "not valid !"), record("issue", "..")]);
        assert_eq!(
            match_caa(
                &CaIdentity::new("Let's Encrypt"),
                NameKind::Fqdn,
                Some(&malformed),
                &mapping()
            )
            .state,
            CaaMatchState::MalformedMismatch
        );

        // Mixed empty and malformed resolves to EmptyMismatch.
        let mixed = set(vec![record("issue", "bad value"), record("issue", ";")]);
        assert_eq!(
            match_caa(
                &CaIdentity::new("Let's Encrypt"),
                NameKind::Fqdn,
                Some(&mixed),
                &mapping()
            )
            .state,
            CaaMatchState::EmptyMismatch
        );
    }

    #[test]
    fn wildcard_supersession() {
        let relevant = set(vec![
            record("issue", "letsencrypt.org"),
            record("issuewild", "other-ca.example"),
        ]);
        let le = CaIdentity::new("Let's Encrypt");
        let wildcard = match_caa(&le, NameKind::Wildcard, Some(&relevant), &mapping());
        assert_eq!(wildcard.state, CaaMatchState::IssuerMismatch);
        assert_eq!(wildcard.deciding_tag, Some(CaaTagKind::IssueWild));
        // The exact-name check still passes via the issue record.
        let fqdn = match_caa(&le, NameKind::Fqdn, Some(&relevant), &mapping());
        assert_eq!(fqdn.state, CaaMatchState::IssuerMatch);
    }

    #[test]
    fn critical_unknown_tag_forces_mismatch() {
        let mut unknown = parse_caa_record(128, "futuretag", b"x");
        assert!(unknown.issuer_critical());
        let relevant = set(vec![record("issue", "letsencrypt.org"), unknown.clone()]);
        let outcome = match_caa(
            &CaIdentity::new("Let's Encrypt"),
            NameKind::Fqdn,
            Some(&relevant),
            &mapping(),
        );
        assert_eq!(outcome.state, CaaMatchState::IssuerMismatch);
        assert_eq!(outcome.deciding_tag, None);

        // Without the critical bit the unknown tag is inert.
        unknown.flags = 0;
        let relevant = set(vec![record("issue", "letsencrypt.org"), unknown]);
        assert_eq!(
            match_caa(
                &CaIdentity::new("Let's Encrypt"),
                NameKind::Fqdn,
                Some(&relevant),
                &mapping()
            )
            .state,
            CaaMatchState::IssuerMatch
        );
    }

    #[test]
    fn unknown_only_set_is_implicit() {
        let relevant = set(vec![parse_caa_record(0, "futuretag", b"x")]);
        assert_eq!(
            match_caa(
                &CaIdentity::new("Let's Encrypt"),
                NameKind::Fqdn,
                Some(&relevant),
                &mapping()
            )
            .state,
            CaaMatchState::ImplicitMatch
        );
    }

    #[test]
    fn domain_hint_fallback_applies_only_on_mapping_miss() {
        let relevant = set(vec![record("issue", "homebrew-ca.test")]);
        let identity = CaIdentity::with_hints("Homebrew CA", &["homebrew-ca.test"]);
        assert_eq!(
            match_caa(&identity, NameKind::Fqdn, Some(&relevant), &mapping()).state,
            CaaMatchState::IssuerMatch
        );

        // A mapping hit for the string disables the hint fallback.
        let mapped = set(vec![record("issue", "web.com")]);
        let spoofer = CaIdentity::with_hints("Homebrew CA", &["web.com"]);
        assert_eq!(
            match_caa(&spoofer, NameKind::Fqdn, Some(&mapped), &mapping()).state,
            CaaMatchState::IssuerMismatch
        );
    }

    #[test]
    fn explain_basic_sets() {
        let m = mapping();
        let lines = explain_caa(&set(vec![record("issue", "letsencrypt.org")]), &m);
        assert_eq!(lines.len(), 1);
        assert!(lines[0].contains("exact name and for wildcards"));

        let lines = explain_caa(
            &set(vec![record("issue", "a.example"), record("issuewild", ";")]),
            &m,
        );
        assert!(lines[0].contains("wildcards are governed"));
        assert!(lines[1].contains("forbids wildcard issuance"));

        let lines = explain_caa(&set(vec![record("iodef", "mailto:x@y.example")]), &m);
        assert!(lines[0].contains("reported via mailto"));
    }

    #[test]
    fn explain_is_deterministic_and_ordered() {
        let records = vec![
            record("iodef", "mailto:x@y.example"),
            record("issuewild", "b.example"),
            record("issue", "z.example"),
            record("issue", "a.example"),
            parse_caa_record(0, "weird", b"1"),
        ];
        let relevant = set(records);
        let m = mapping();
        let first = explain_caa(&relevant, &m);
        assert_eq!(first, explain_caa(&relevant, &m));
        assert!(first[0].starts_with("issue \"a.example\""));
        assert!(first[1].starts_with("issue \"z.example\""));
        assert!(first[2].starts_with("issuewild"));
        assert!(first[3].starts_with("iodef"));
        assert!(first[4].starts_with("tag \"weird\""));
    }

    // Strategies for the property tests: governing sets built from atoms.
    #[derive(Debug, Clone, Copy)]
    enum Atom {
        Hit,
        Miss,
        Empty,
        Malformed,
    }

    fn atom_record(tag: &str, atom: Atom) -> CaaRecord {
        match atom {
            Atom::Hit => record(tag, "letsencrypt.org"),
            Atom::Miss => record(tag, "other-ca.example"),
            Atom::Empty => record(tag, ";"),
            Atom::Malformed => record(tag, "bad value"),
        }
    }

    fn atom_strategy() -> impl Strategy<Value = Atom> {
        prop_oneof![
            Just(Atom::Hit),
            Just(Atom::Miss),
            Just(Atom::Empty),
            Just(Atom::Malformed),
        ]
    }

    proptest! {
        // Replacing malformed values with ";" never flips issuer outcomes.
        #[test]
        fn malformed_is_equivalent_to_empty(
            atoms in prop::collection::vec(atom_strategy(), 1..6),
        ) {
            let m = mapping();
            let issuer = CaIdentity::new("Let's Encrypt");
            let original = set(atoms.iter().map(|a| atom_record("issue", *a)).collect());
            let replaced = set(
                atoms
                    .iter()
                    .map(|a| match a {
                        Atom::Malformed => record("issue", ";"),
                        other => atom_record("issue", *other),
                    })
                    .collect(),
            );
            let before = match_caa(&issuer, NameKind::Fqdn, Some(&original), &m).state;
            let after = match_caa(&issuer, NameKind::Fqdn, Some(&replaced), &m).state;
            let issuer_outcome = |s: CaaMatchState| {
                matches!(s, CaaMatchState::IssuerMatch | CaaMatchState::IssuerMismatch)
                    .then_some(s)
            };
            prop_assert_eq!(issuer_outcome(before), issuer_outcome(after));
        }

        // For wildcard names, issue records are inert once any issuewild exists.
        #[test]
        fn issuewild_supersedes_issue_for_wildcards(
            issue_atoms in prop::collection::vec(atom_strategy(), 0..4),
            wild_atoms in prop::collection::vec(atom_strategy(), 1..4),
        ) {
            let m = mapping();
            let issuer = CaIdentity::new("Let's Encrypt");
            let mut records: Vec<CaaRecord> =
                issue_atoms.iter().map(|a| atom_record("issue", *a)).collect();
            records.extend(wild_atoms.iter().map(|a| atom_record("issuewild", *a)));
            let with_issue = set(records);
            let without_issue = set(
                wild_atoms.iter().map(|a| atom_record("issuewild", *a)).collect(),
            );
            prop_assert_eq!(
                match_caa(&issuer, NameKind::Wildcard, Some(&with_issue), &m),
                match_caa(&issuer, NameKind::Wildcard, Some(&without_issue), &m)
            );
        }

        // Adding a governing record that names the issuer always yields a match.
        #[test]
        fn adding_matching_record_yields_issuer_match(
            atoms in prop::collection::vec(atom_strategy(), 0..5),
        ) {
            let m = mapping();
            let issuer = CaIdentity::new("Let's Encrypt");
            let mut records: Vec<CaaRecord> =
                atoms.iter().map(|a| atom_record("issue", *a)).collect();
            records.push(record("issue", "letsencrypt.org"));
            let relevant = set(records);
            prop_assert_eq!(
                match_caa(&issuer, NameKind::Fqdn, Some(&relevant), &m).state,
                CaaMatchState::IssuerMatch
            );
        }

        // Exactly one of the six states, for every combination the atoms span.
        #[test]
        fn matcher_is_total(
            issue_atoms in prop::collection::vec(atom_strategy(), 0..4),
            wild_atoms in prop::collection::vec(atom_strategy(), 0..4),
            has_iodef in any::<bool>(),
            wildcard in any::<bool>(),
            present in any::<bool>(),
        ) {
            let m = mapping();
            let issuer = CaIdentity::new("Let's Encrypt");
            let mut records: Vec<CaaRecord> =
                issue_atoms.iter().map(|a| atom_record("issue", *a)).collect();
            records.extend(wild_atoms.iter().map(|a| atom_record("issuewild", *a)));
            if has_iodef {
                records.push(record("iodef", "mailto:x@y.example"));
            }
            let relevant = (present && !records.is_empty()).then(|| set(records));
            let kind = if wildcard { NameKind::Wildcard } else { NameKind::Fqdn };
            let outcome = match_caa(&issuer, kind, relevant.as_ref(), &m);
            // The state is one of the six by construction; check the
            // deciding-tag invariant instead.
            match outcome.state {
                CaaMatchState::IssuerMatch | CaaMatchState::IssuerMismatch => {}
                _ => prop_assert_eq!(outcome.deciding_tag, None),
            }
        }
    }
}
