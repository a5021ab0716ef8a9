//! The synthetic 50-domain audit corpus.
//!
//! Builds a complete offline fixture set: DNS store, served chains, CT log
//! contents, trust store, known-logs list, CA mapping, and the target list.
//! Every classification state, DANE flag, authentication-matrix row, and
//! consistency pair the auditor can produce appears at least once.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use base64::Engine as _;
use chrono::{DateTime, Duration, TimeZone, Utc};
use sha2::{Digest, Sha256};

use certaudit::certs::{ders_to_pem, parse_certificate};
use certaudit::ctlog::FixtureCtRecord;
use certaudit::dns::FixtureEntry;

use crate::{
    issue_leaf, issue_leaf_with_scts, issue_leaf_with_serial, issue_precert, log_list_json,
    CtLogSigner, LeafSpec, TestCa,
};

/// The fixed reference timestamp all fixtures are built around.
pub fn reference_time() -> DateTime<Utc> {
    Utc.with_ymd_and_hms(2024, 4, 12, 0, 0, 0).unwrap()
}

struct Builder {
    dns: BTreeMap<String, FixtureEntry>,
    ct: Vec<FixtureCtRecord>,
    chains: Vec<(String, Vec<Vec<u8>>)>,
    targets: Vec<String>,
    next_ip: u8,
}

impl Builder {
    fn new() -> Self {
        Self {
            dns: BTreeMap::new(),
            ct: Vec::new(),
            chains: Vec::new(),
            targets: Vec::new(),
            next_ip: 0,
        }
    }

    fn entry(&mut self, key: &str, status: &str, ad: bool, records: &[String]) {
        self.dns.insert(
            key.to_string(),
            FixtureEntry {
                status: status.to_string(),
                ad,
                records: records.to_vec(),
            },
        );
    }

    /// Registers a target with SOA and A records and returns its rank.
    fn domain(&mut self, name: &str, dnssec: bool) {
        self.next_ip += 1;
        let ip = format!("192.0.2.{}", self.next_ip);
        let soa = format!("ns1.{name}. hostmaster.{name}. 2024041201 7200 3600 1209600 300");
        self.entry(&format!("{name}|SOA"), "NOERROR", dnssec, &[soa]);
        self.entry(&format!("{name}|A"), "NOERROR", dnssec, &[ip]);
        self.targets.push(name.to_string());
    }

    fn caa(&mut self, owner: &str, ad: bool, records: &[&str]) {
        let records: Vec<String> = records.iter().map(|r| r.to_string()).collect();
        self.entry(&format!("{owner}|CAA"), "NOERROR", ad, &records);
    }

    fn tlsa(&mut self, name: &str, ad: bool, records: &[String]) {
        self.entry(&format!("_443._tcp.{name}|TLSA"), "NOERROR", ad, records);
    }

    fn txt(&mut self, prefix: &str, name: &str, value: &str) {
        self.entry(
            &format!("{prefix}.{name}|TXT"),
            "NOERROR",
            false,
            &[value.to_string()],
        );
    }

    fn serve(&mut self, name: &str, chain: Vec<Vec<u8>>) {
        self.chains.push((name.to_string(), chain));
    }

    fn log_ct(&mut self, der: &[u8], logged_at: DateTime<Utc>, is_precert: bool) {
        let engine = base64::engine::general_purpose::STANDARD;
        self.ct.push(FixtureCtRecord {
            der_base64: engine.encode(der),
            logged_at: Some(logged_at),
            is_precert,
        });
    }
}

fn tlsa_presentation(usage: u8, selector: u8, matching: u8, data: &[u8]) -> String {
    format!("{usage} {selector} {matching} {}", hex::encode_upper(data))
}

fn spki_sha256(der: &[u8]) -> Vec<u8> {
    let cert = parse_certificate(der).expect("fixture cert parses");
    Sha256::digest(&cert.spki_der).to_vec()
}

fn cert_sha256(der: &[u8]) -> Vec<u8> {
    Sha256::digest(der).to_vec()
}

/// Builds the whole corpus under `dir`. Returns the number of targets.
pub fn build(dir: &Path) -> std::io::Result<usize> {
    let at = reference_time();
    let mut b = Builder::new();

    // Certificate authorities. Aurora and Borealis are trusted; Meridian is
    // not; the homebrew CA is a trusted one-cert shop without a mapping
    // entry.
    let ca_nb = at - Duration::days(3 * 365);
    let ca_na = at + Duration::days(10 * 365);
    let aurora = TestCa::root("Aurora Trust Services", "Aurora Root CA", ca_nb, ca_na);
    let aurora_inter = TestCa::intermediate(
        "Aurora Trust Services",
        "Aurora TLS Issuing CA 1",
        &aurora,
        ca_nb,
        ca_na,
    );
    let borealis = TestCa::root("Borealis PKI Ltd", "Borealis Root CA", ca_nb, ca_na);
    let meridian = TestCa::root("Meridian Certification", "Meridian Root", ca_nb, ca_na);
    let meridian_inter = TestCa::intermediate(
        "Meridian Certification",
        "Meridian Issuing CA",
        &meridian,
        ca_nb,
        ca_na,
    );
    let homebrew = TestCa::root("Homebrew PKI Collective", "homebrew-ca.test", ca_nb, ca_na);

    // CT logs: two known, one unknown to the log list, one rejected.
    let log1 = CtLogSigner::new("Lumen Log One", "Lumen Logs");
    let log2 = CtLogSigner::new("Lumen Log Two", "Lumen Logs");
    let shadow_log = CtLogSigner::new("Shadow Log", "Shadow Op");
    let rejected_log = CtLogSigner::new("Lumen Log Retired", "Lumen Logs");

    // Validity windows.
    let fresh = (at - Duration::days(10), at + Duration::days(80));
    let older = (at - Duration::days(200), at + Duration::days(165));
    let expired = (at - Duration::days(400), at - Duration::days(35));
    let long_expired = (at - Duration::days(800), at - Duration::days(400));
    let backup_window = (at - Duration::days(10), at + Duration::days(200));
    let logged_fresh = at - Duration::days(9);
    let logged_old = at - Duration::days(399);

    let issue_aurora = r#"0 issue "aurora-ca.test""#;
    let issue_borealis = r#"0 issue "borealis-pki.test""#;

    // --- Six served-certificate CAA states -------------------------------

    // 1: no CAA anywhere, DNSSEC-only deployment.
    b.domain("no-caa.test", true);
    let leaf = issue_leaf(LeafSpec::new("no-caa.test", fresh.0, fresh.1), &aurora);
    b.serve("no-caa.test", vec![leaf.der]);
    b.entry(
        "_validation-contactphone.no-caa.test|TXT",
        "TIMEOUT",
        false,
        &[],
    );

    // 2: iodef-only relevant set.
    b.domain("implicit-iodef.test", false);
    b.caa(
        "implicit-iodef.test",
        false,
        &[r#"0 iodef "mailto:sec@implicit-iodef.test""#],
    );
    let leaf = issue_leaf(LeafSpec::new("implicit-iodef.test", fresh.0, fresh.1), &aurora);
    b.log_ct(&leaf.der, logged_fresh, false);
    b.serve("implicit-iodef.test", vec![leaf.der]);

    // 3: issuer match with two CA strings and DNSSEC, plus a contact record.
    b.domain("match.test", true);
    b.caa("match.test", true, &[issue_aurora, issue_borealis]);
    b.txt("_validation-contactemail", "match.test", "admin@match.test");
    let leaf = issue_leaf(LeafSpec::new("match.test", fresh.0, fresh.1), &aurora);
    b.log_ct(&leaf.der, logged_fresh, false);
    b.serve("match.test", vec![leaf.der]);

    // 4: issuer mismatch on an older certificate.
    b.domain("mismatch.test", false);
    b.caa("mismatch.test", false, &[issue_borealis]);
    let leaf = issue_leaf(LeafSpec::new("mismatch.test", older.0, older.1), &aurora);
    b.serve("mismatch.test", vec![leaf.der]);

    // 5: only malformed records.
    b.domain("malformed-caa.test", false);
    b.caa("malformed-caa.test", false, &[r#"0 issue "bad value!""#]);
    let leaf = issue_leaf(LeafSpec::new("malformed-caa.test", fresh.0, fresh.1), &aurora);
    b.serve("malformed-caa.test", vec![leaf.der]);

    // 6: explicit-empty records.
    b.domain("empty-caa.test", false);
    b.caa("empty-caa.test", false, &[r#"0 issue ";""#]);
    let leaf = issue_leaf(LeafSpec::new("empty-caa.test", fresh.0, fresh.1), &aurora);
    b.serve("empty-caa.test", vec![leaf.der]);

    // --- Relevant-set depth ----------------------------------------------

    // 7: record one level up.
    b.domain("www.parent-caa.test", false);
    b.caa("parent-caa.test", false, &[issue_aurora]);
    let leaf = issue_leaf(LeafSpec::new("www.parent-caa.test", fresh.0, fresh.1), &aurora);
    b.log_ct(&leaf.der, logged_fresh, false);
    b.serve("www.parent-caa.test", vec![leaf.der]);

    // 8: record two levels up, with a SERVFAIL ancestor in between.
    b.domain("deep.sub.zone-caa.test", false);
    b.entry("sub.zone-caa.test|CAA", "SERVFAIL", false, &[]);
    b.caa("zone-caa.test", false, &[issue_aurora]);
    let leaf = issue_leaf(
        LeafSpec::new("deep.sub.zone-caa.test", fresh.0, fresh.1),
        &aurora,
    );
    b.log_ct(&leaf.der, logged_fresh, false);
    b.serve("deep.sub.zone-caa.test", vec![leaf.der]);

    // --- issuewild and partial matches -----------------------------------

    // 9: both tags satisfied.
    b.domain("wild-ok.test", false);
    b.caa(
        "wild-ok.test",
        false,
        &[issue_aurora, r#"0 issuewild "aurora-ca.test""#],
    );
    let leaf = issue_leaf(
        LeafSpec::new("wild-ok.test", fresh.0, fresh.1).with_sans(&["wild-ok.test", "*.wild-ok.test"]),
        &aurora,
    );
    b.serve("wild-ok.test", vec![leaf.der]);

    // 10: issue matches, issuewild does not.
    b.domain("partial-issue.test", false);
    b.caa(
        "partial-issue.test",
        false,
        &[issue_aurora, r#"0 issuewild "borealis-pki.test""#],
    );
    let leaf = issue_leaf(
        LeafSpec::new("partial-issue.test", fresh.0, fresh.1)
            .with_sans(&["partial-issue.test", "*.partial-issue.test"]),
        &aurora,
    );
    b.serve("partial-issue.test", vec![leaf.der]);

    // 11: issuewild matches, issue does not.
    b.domain("partial-wild.test", false);
    b.caa(
        "partial-wild.test",
        false,
        &[issue_borealis, r#"0 issuewild "aurora-ca.test""#],
    );
    let leaf = issue_leaf(
        LeafSpec::new("partial-wild.test", fresh.0, fresh.1)
            .with_sans(&["partial-wild.test", "*.partial-wild.test"]),
        &aurora,
    );
    b.serve("partial-wild.test", vec![leaf.der]);

    // 12: wildcard issuance forbidden while a wildcard certificate exists.
    b.domain("wild-forbidden.test", false);
    b.caa(
        "wild-forbidden.test",
        false,
        &[issue_aurora, r#"0 issuewild ";""#],
    );
    let leaf = issue_leaf(
        LeafSpec::new("wild-forbidden.test", fresh.0, fresh.1)
            .with_sans(&["wild-forbidden.test", "*.wild-forbidden.test"]),
        &aurora,
    );
    b.serve("wild-forbidden.test", vec![leaf.der]);

    // 13: issuewild-only set, FQDN certificate: implicit match.
    b.domain("implicit-wild.test", false);
    b.caa(
        "implicit-wild.test",
        false,
        &[r#"0 issuewild "aurora-ca.test""#],
    );
    let leaf = issue_leaf(LeafSpec::new("implicit-wild.test", fresh.0, fresh.1), &aurora);
    b.serve("implicit-wild.test", vec![leaf.der]);

    // --- iodef triage ------------------------------------------------------

    let iodef_cases = [
        ("iodef-valid-mail.test", r#"0 iodef "mailto:hostmaster@iodef-valid-mail.test""#),
        ("iodef-valid-https.test", r#"0 iodef "https://reports.iodef-valid-https.test/caa""#),
        ("iodef-invalid-scheme.test", r#"0 iodef "mailinto:x@iodef-invalid-scheme.test""#),
        ("iodef-bare-email.test", r#"0 iodef "hostmaster@iodef-bare-email.test""#),
        ("iodef-bare-http.test", r#"0 iodef "reports.iodef-bare-http.test/caa""#),
        ("iodef-garbage.test", r#"0 iodef "123456789012345678901234567""#),
    ];
    // 14..19
    for (name, iodef) in iodef_cases {
        b.domain(name, false);
        b.caa(name, false, &[issue_aurora, iodef]);
        let leaf = issue_leaf(LeafSpec::new(name, fresh.0, fresh.1), &aurora);
        b.serve(name, vec![leaf.der]);
    }

    // --- non-standard tags -------------------------------------------------

    // 20: defined outside RFC 8659.
    b.domain("unknown-contact.test", false);
    b.caa(
        "unknown-contact.test",
        false,
        &[issue_aurora, r#"0 contactemail "admin@unknown-contact.test""#],
    );
    let leaf = issue_leaf(LeafSpec::new("unknown-contact.test", fresh.0, fresh.1), &aurora);
    b.serve("unknown-contact.test", vec![leaf.der]);

    // 21: misspelled tag.
    b.domain("unknown-misspelled.test", false);
    b.caa(
        "unknown-misspelled.test",
        false,
        &[issue_aurora, r#"0 issuee "aurora-ca.test""#],
    );
    let leaf = issue_leaf(
        LeafSpec::new("unknown-misspelled.test", fresh.0, fresh.1),
        &aurora,
    );
    b.serve("unknown-misspelled.test", vec![leaf.der]);

    // 22: tag with formatting junk.
    b.domain("unknown-malformed.test", false);
    b.caa(
        "unknown-malformed.test",
        false,
        &[issue_aurora, r#"0 "issue" "aurora-ca.test""#],
    );
    let leaf = issue_leaf(
        LeafSpec::new("unknown-malformed.test", fresh.0, fresh.1),
        &aurora,
    );
    b.serve("unknown-malformed.test", vec![leaf.der]);

    // 23: unknown critical tag forbids issuance outright.
    b.domain("unknown-critical.test", false);
    b.caa(
        "unknown-critical.test",
        false,
        &[issue_aurora, r#"128 tbsrevocation "on""#],
    );
    let leaf = issue_leaf(
        LeafSpec::new("unknown-critical.test", fresh.0, fresh.1),
        &aurora,
    );
    b.serve("unknown-critical.test", vec![leaf.der]);

    // 24: well-formed but unknown tag.
    b.domain("unknown-novel.test", false);
    b.caa(
        "unknown-novel.test",
        false,
        &[issue_aurora, r#"0 zzpolicy9 "on""#],
    );
    let leaf = issue_leaf(LeafSpec::new("unknown-novel.test", fresh.0, fresh.1), &aurora);
    b.serve("unknown-novel.test", vec![leaf.der]);

    // --- DANE --------------------------------------------------------------

    // 25: DANE-EE over secure DNS, certificate in CT too.
    b.domain("dane-ee-ok.test", true);
    let leaf = issue_leaf(LeafSpec::new("dane-ee-ok.test", fresh.0, fresh.1), &aurora);
    b.tlsa(
        "dane-ee-ok.test",
        true,
        &[tlsa_presentation(3, 1, 1, &spki_sha256(&leaf.der))],
    );
    b.txt("_validation-contactphone", "dane-ee-ok.test", "+1.5551234567");
    b.log_ct(&leaf.der, logged_fresh, false);
    b.serve("dane-ee-ok.test", vec![leaf.der]);

    // 26: the same configuration without DNSSEC.
    b.domain("dane-ee-insecure.test", false);
    let leaf = issue_leaf(LeafSpec::new("dane-ee-insecure.test", fresh.0, fresh.1), &aurora);
    b.tlsa(
        "dane-ee-insecure.test",
        false,
        &[tlsa_presentation(3, 1, 1, &spki_sha256(&leaf.der))],
    );
    b.log_ct(&leaf.der, logged_fresh, false);
    b.serve("dane-ee-insecure.test", vec![leaf.der]);

    // 27: matching DANE-EE record, expired certificate.
    b.domain("dane-ee-expired.test", true);
    let leaf = issue_leaf(LeafSpec::new("dane-ee-expired.test", expired.0, expired.1), &aurora);
    b.tlsa(
        "dane-ee-expired.test",
        true,
        &[tlsa_presentation(3, 1, 1, &spki_sha256(&leaf.der))],
    );
    b.serve("dane-ee-expired.test", vec![leaf.der]);

    // 28: PKIX-EE with a valid chain.
    b.domain("pkix-ee-ok.test", true);
    let leaf = issue_leaf(LeafSpec::new("pkix-ee-ok.test", fresh.0, fresh.1), &aurora);
    b.tlsa(
        "pkix-ee-ok.test",
        true,
        &[tlsa_presentation(1, 1, 1, &spki_sha256(&leaf.der))],
    );
    b.log_ct(&leaf.der, logged_fresh, false);
    b.serve("pkix-ee-ok.test", vec![leaf.der]);

    // 29: PKIX-EE matching an untrusted chain: association holds, PKIX fails.
    b.domain("pkix-ee-invalid.test", true);
    let leaf = issue_leaf(
        LeafSpec::new("pkix-ee-invalid.test", fresh.0, fresh.1),
        &meridian_inter,
    );
    b.tlsa(
        "pkix-ee-invalid.test",
        true,
        &[tlsa_presentation(1, 1, 1, &spki_sha256(&leaf.der))],
    );
    b.log_ct(&leaf.der, logged_fresh, false);
    b.serve("pkix-ee-invalid.test", vec![leaf.der, meridian_inter.der.clone()]);

    // 30: DANE-TA pinning the served intermediate by full DER.
    b.domain("dane-ta-ok.test", true);
    let leaf = issue_leaf(LeafSpec::new("dane-ta-ok.test", fresh.0, fresh.1), &aurora_inter);
    b.tlsa(
        "dane-ta-ok.test",
        true,
        &[tlsa_presentation(2, 0, 0, &aurora_inter.der)],
    );
    b.serve("dane-ta-ok.test", vec![leaf.der, aurora_inter.der.clone()]);

    // 31: DANE-TA via SPKI digest, with CAA and DNSSEC on top.
    b.domain("dane-ta-spki.test", true);
    b.caa("dane-ta-spki.test", true, &[issue_aurora]);
    let leaf = issue_leaf(LeafSpec::new("dane-ta-spki.test", fresh.0, fresh.1), &aurora_inter);
    b.tlsa(
        "dane-ta-spki.test",
        true,
        &[tlsa_presentation(
            2,
            1,
            1,
            &Sha256::digest(parse_certificate(&aurora_inter.der).unwrap().spki_der),
        )],
    );
    b.log_ct(&leaf.der, logged_fresh, false);
    b.serve("dane-ta-spki.test", vec![leaf.der, aurora_inter.der.clone()]);

    // 32: non-conformant and undecodable records are kept, never matched.
    b.domain("tlsa-nonconformant.test", true);
    let leaf = issue_leaf(LeafSpec::new("tlsa-nonconformant.test", fresh.0, fresh.1), &aurora);
    b.tlsa(
        "tlsa-nonconformant.test",
        true,
        &[
            tlsa_presentation(3, 1, 1, &[0xab; 15]),
            tlsa_presentation(9, 1, 1, &[0xcd; 32]),
            "banana".to_string(),
        ],
    );
    b.serve("tlsa-nonconformant.test", vec![leaf.der]);

    // --- TLSA forensics ------------------------------------------------------

    // 33: record pins a long-expired logged certificate by fingerprint.
    b.domain("tlsa-stale.test", true);
    let old = issue_leaf(
        LeafSpec::new("tlsa-stale.test", long_expired.0, long_expired.1),
        &aurora,
    );
    let new = issue_leaf(LeafSpec::new("tlsa-stale.test", fresh.0, fresh.1), &aurora);
    b.tlsa(
        "tlsa-stale.test",
        true,
        &[tlsa_presentation(3, 0, 1, &cert_sha256(&old.der))],
    );
    b.log_ct(&old.der, logged_old, false);
    b.log_ct(&new.der, logged_fresh, false);
    b.serve("tlsa-stale.test", vec![new.der]);

    // 34: record pins a valid, undeployed backup key. CAA without DNSSEC.
    b.domain("tlsa-undeployed.test", false);
    b.caa("tlsa-undeployed.test", false, &[issue_aurora]);
    let backup = issue_leaf(
        LeafSpec::new("tlsa-undeployed.test", backup_window.0, backup_window.1),
        &aurora,
    );
    let served = issue_leaf(LeafSpec::new("tlsa-undeployed.test", fresh.0, fresh.1), &aurora);
    b.tlsa(
        "tlsa-undeployed.test",
        false,
        &[tlsa_presentation(3, 1, 1, &spki_sha256(&backup.der))],
    );
    b.log_ct(&backup.der, logged_fresh, false);
    b.log_ct(&served.der, logged_fresh, false);
    b.serve("tlsa-undeployed.test", vec![served.der]);

    // 35: record matching nothing anywhere.
    b.domain("tlsa-unexplained.test", true);
    let leaf = issue_leaf(LeafSpec::new("tlsa-unexplained.test", fresh.0, fresh.1), &aurora);
    b.tlsa(
        "tlsa-unexplained.test",
        true,
        &[tlsa_presentation(3, 1, 1, &[0x42; 32])],
    );
    b.log_ct(&leaf.der, logged_fresh, false);
    b.serve("tlsa-unexplained.test", vec![leaf.der]);

    // --- Remaining TLSA/CT matrix rows ---------------------------------------

    // 36: server authenticated; CT twin from another CA shares the key.
    b.domain("row-ttf.test", true);
    let leaf = issue_leaf(LeafSpec::new("row-ttf.test", fresh.0, fresh.1), &aurora);
    let twin_key = crate::clone_key(&leaf.key);
    let twin = issue_leaf(
        LeafSpec::new("row-ttf.test", fresh.0, fresh.1).with_key(twin_key),
        &borealis,
    );
    b.tlsa(
        "row-ttf.test",
        true,
        &[tlsa_presentation(3, 1, 1, &spki_sha256(&leaf.der))],
    );
    b.log_ct(&twin.der, logged_fresh, false);
    b.serve("row-ttf.test", vec![leaf.der]);

    // 37: server authenticated; same CA logged a different-key certificate.
    b.domain("row-tft.test", true);
    let leaf = issue_leaf(LeafSpec::new("row-tft.test", fresh.0, fresh.1), &aurora);
    let other = issue_leaf(LeafSpec::new("row-tft.test", fresh.0, fresh.1), &aurora);
    b.tlsa(
        "row-tft.test",
        true,
        &[tlsa_presentation(3, 1, 1, &spki_sha256(&leaf.der))],
    );
    b.log_ct(&other.der, logged_fresh, false);
    b.serve("row-tft.test", vec![leaf.der]);

    // 38: server authenticated; another CA logged a different-key certificate.
    b.domain("row-tff.test", true);
    let leaf = issue_leaf(LeafSpec::new("row-tff.test", fresh.0, fresh.1), &aurora);
    let other = issue_leaf(LeafSpec::new("row-tff.test", fresh.0, fresh.1), &borealis);
    b.tlsa(
        "row-tff.test",
        true,
        &[tlsa_presentation(3, 1, 1, &spki_sha256(&leaf.der))],
    );
    b.log_ct(&other.der, logged_fresh, false);
    b.serve("row-tff.test", vec![leaf.der]);

    // 39: record references a valid undeployed cross-CA certificate; the CAA
    // states of server and referenced certificate disagree.
    b.domain("row-ftf.test", false);
    b.caa("row-ftf.test", false, &[issue_aurora]);
    let leaf = issue_leaf(LeafSpec::new("row-ftf.test", fresh.0, fresh.1), &aurora);
    let foreign = issue_leaf(
        LeafSpec::new("row-ftf.test", backup_window.0, backup_window.1),
        &borealis,
    );
    b.tlsa(
        "row-ftf.test",
        false,
        &[tlsa_presentation(3, 1, 1, &spki_sha256(&foreign.der))],
    );
    b.log_ct(&foreign.der, logged_fresh, false);
    b.serve("row-ftf.test", vec![leaf.der]);

    // 40: record matches nothing; CT knows a cross-CA certificate.
    b.domain("row-fff.test", true);
    let leaf = issue_leaf(LeafSpec::new("row-fff.test", fresh.0, fresh.1), &aurora);
    let other = issue_leaf(LeafSpec::new("row-fff.test", fresh.0, fresh.1), &borealis);
    b.tlsa(
        "row-fff.test",
        true,
        &[tlsa_presentation(3, 1, 1, &[0x24; 32])],
    );
    b.log_ct(&other.der, logged_fresh, false);
    b.serve("row-fff.test", vec![leaf.der]);

    // --- CAA vs CT inconsistencies -------------------------------------------

    // 41: server satisfies CAA; the logs also hold a forbidden-issuer cert.
    b.domain("ct-extra-mismatch.test", false);
    b.caa("ct-extra-mismatch.test", false, &[issue_aurora]);
    let leaf = issue_leaf(LeafSpec::new("ct-extra-mismatch.test", fresh.0, fresh.1), &aurora);
    let rogue = issue_leaf(LeafSpec::new("ct-extra-mismatch.test", fresh.0, fresh.1), &borealis);
    b.log_ct(&leaf.der, logged_fresh, false);
    b.log_ct(&rogue.der, logged_fresh, false);
    b.serve("ct-extra-mismatch.test", vec![leaf.der]);

    // 42: server presents a certificate for the wrong name while a proper
    // one sits in the logs.
    b.domain("name-mismatch-ct-ok.test", false);
    b.caa("name-mismatch-ct-ok.test", false, &[issue_aurora]);
    let parked = issue_leaf(
        LeafSpec::new("parked.hosting-panel.test", fresh.0, fresh.1),
        &aurora,
    );
    let proper = issue_leaf(
        LeafSpec::new("name-mismatch-ct-ok.test", fresh.0, fresh.1),
        &aurora,
    );
    b.log_ct(&proper.der, logged_fresh, false);
    b.serve("name-mismatch-ct-ok.test", vec![parked.der]);

    // 43: precert and final of the same issuance collapse to one entry.
    b.domain("ct-precert-dedup.test", false);
    b.caa("ct-precert-dedup.test", false, &[issue_aurora]);
    let spec = LeafSpec::new("ct-precert-dedup.test", fresh.0, fresh.1);
    let serial = [0x1f, 0x2e, 0x3d, 0x4c];
    let precert = issue_precert(&spec, &serial, &aurora);
    let final_leaf = issue_leaf_with_serial(&spec, &serial, &aurora);
    b.log_ct(&precert, logged_fresh, true);
    b.log_ct(&final_leaf.der, logged_fresh, false);
    b.serve("ct-precert-dedup.test", vec![final_leaf.der]);

    // --- SCTs -----------------------------------------------------------------

    // 44: two SCTs from known logs.
    b.domain("sct-ok.test", false);
    b.caa("sct-ok.test", false, &[issue_aurora]);
    let leaf = issue_leaf_with_scts(
        LeafSpec::new("sct-ok.test", fresh.0, fresh.1),
        &aurora_inter,
        &[&log1, &log2],
        logged_fresh,
    );
    b.log_ct(&leaf.der, logged_fresh, false);
    b.serve("sct-ok.test", vec![leaf.der, aurora_inter.der.clone()]);

    // 45: an SCT from a log the list does not know.
    b.domain("sct-unknown-log.test", false);
    b.caa("sct-unknown-log.test", false, &[issue_aurora]);
    let leaf = issue_leaf_with_scts(
        LeafSpec::new("sct-unknown-log.test", fresh.0, fresh.1),
        &aurora_inter,
        &[&shadow_log],
        logged_fresh,
    );
    b.serve("sct-unknown-log.test", vec![leaf.der, aurora_inter.der.clone()]);

    // --- Chain verdict variety --------------------------------------------------

    // 46: expired certificate, CAA otherwise satisfied.
    b.domain("expired.test", false);
    b.caa("expired.test", false, &[issue_aurora]);
    let leaf = issue_leaf(LeafSpec::new("expired.test", expired.0, expired.1), &aurora);
    b.serve("expired.test", vec![leaf.der]);

    // 47: chain anchored outside the trust store.
    b.domain("untrusted.test", false);
    b.caa("untrusted.test", false, &[issue_aurora]);
    let leaf = issue_leaf(LeafSpec::new("untrusted.test", fresh.0, fresh.1), &meridian_inter);
    b.serve("untrusted.test", vec![leaf.der, meridian_inter.der.clone()]);

    // 48: self-signed appliance certificate, nothing else deployed.
    b.domain("selfsigned.test", false);
    let leaf = crate::issue_self_signed(
        LeafSpec::new("selfsigned.test", fresh.0, fresh.1).with_org("Selfhosted Appliance"),
    );
    b.serve("selfsigned.test", vec![leaf.der]);

    // 49: a served chain with an undecodable element.
    b.domain("malformed-chain.test", false);
    b.caa("malformed-chain.test", false, &[issue_aurora]);
    let leaf = issue_leaf(LeafSpec::new("malformed-chain.test", fresh.0, fresh.1), &aurora);
    b.serve(
        "malformed-chain.test",
        vec![leaf.der, vec![0xde, 0xad, 0xbe, 0xef, 0x42, 0x42]],
    );

    // 50: unmapped CAA string resolved through the issuer's domain-shaped
    // common name.
    b.domain("fallback-ca.test", false);
    b.caa("fallback-ca.test", false, &[r#"0 issue "homebrew-ca.test""#]);
    let leaf = issue_leaf(LeafSpec::new("fallback-ca.test", fresh.0, fresh.1), &homebrew);
    b.serve("fallback-ca.test", vec![leaf.der, homebrew.der.clone()]);

    assert_eq!(b.targets.len(), 50, "corpus must hold exactly 50 targets");

    // --- write everything out ---------------------------------------------------

    std::fs::create_dir_all(dir)?;
    let certs_dir = dir.join("certs");
    std::fs::create_dir_all(&certs_dir)?;

    let dns_json = serde_json::to_string_pretty(&b.dns).expect("dns.json");
    std::fs::write(dir.join("dns.json"), dns_json)?;

    let ct_json = serde_json::to_string_pretty(&b.ct).expect("ct.json");
    std::fs::write(dir.join("ct.json"), ct_json)?;

    for (name, chain) in &b.chains {
        std::fs::write(certs_dir.join(format!("{name}.pem")), ders_to_pem(chain))?;
    }

    let roots = ders_to_pem(&[aurora.der.clone(), borealis.der.clone(), homebrew.der.clone()]);
    std::fs::write(dir.join("roots.pem"), roots)?;

    let logs = log_list_json(&[
        (&log1, "usable"),
        (&log2, "qualified"),
        (&rejected_log, "rejected"),
    ]);
    std::fs::write(dir.join("known-logs.json"), logs)?;

    let mapping = serde_json::json!({
        "aurora-ca.test": ["Aurora Trust Services"],
        "borealis-pki.test": ["Borealis PKI Ltd"],
        "web.com": ["Network Solutions L.L.C."]
    });
    std::fs::write(
        dir.join("ca-mapping.json"),
        serde_json::to_string_pretty(&mapping).expect("mapping"),
    )?;

    let mut targets = std::fs::File::create(dir.join("targets.csv"))?;
    for (i, name) in b.targets.iter().enumerate() {
        writeln!(targets, "{},{}", i + 1, name)?;
    }

    Ok(b.targets.len())
}
