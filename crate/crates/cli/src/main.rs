//! Command-line interface for the Web PKI consistency auditor.

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use chrono::{DateTime, Utc};
use clap::{Args, Parser, Subcommand};

use certaudit::caa::{self, CaMapping};
use certaudit::certs::{
    chain_from_ders, validate_chain, FixtureTlsSource, KnownLogs, LiveTlsSource, TlsSource,
    TrustStore,
};
use certaudit::ctlog::{fetch_certs_by_name, CrtShBackend, CtBackend, FixtureCtBackend};
use certaudit::dane::{evaluate_dane, parse_tlsa};
use certaudit::dns::{
    collect_domain_dns, DnsBackend, DohBackend, FixtureDnsBackend,
};
use certaudit::limiter::RateLimiter;
use certaudit::pipeline::{
    aggregate, audit_domain, emit_report, prepare_targets, run_audit, AuditConfig, AuditRecord,
    Backends, LiveProber, OfflineProber, OutputFormat, Target,
};

const DEFAULT_DOH_URL: &str = "https://dns.google/resolve";
const DEFAULT_CT_URL: &str = "https://crt.sh/";
const SYSTEM_TRUST_STORE: &str = "/etc/ssl/certs/ca-certificates.crt";

#[derive(Parser)]
#[command(
    name = "certaudit",
    about = "Audits CAA, DANE/TLSA, DNSSEC, CT logs, and served X.509 chains for consistency",
    version
)]
struct Cli {
    #[command(flatten)]
    common: CommonArgs,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct CommonArgs {
    /// Offline mode: directory with dns.json, certs/, ct.json
    #[arg(long, global = true)]
    fixtures: Option<PathBuf>,
    /// DNS-over-HTTPS JSON endpoint
    #[arg(long, global = true, default_value = DEFAULT_DOH_URL)]
    doh_url: String,
    /// crt.sh-compatible CT query endpoint
    #[arg(long, global = true, default_value = DEFAULT_CT_URL)]
    ct_url: String,
    /// Trusted roots (concatenated PEM)
    #[arg(long, global = true)]
    trust_store: Option<PathBuf>,
    /// Known CT logs (log-list JSON)
    #[arg(long, global = true)]
    log_list: Option<PathBuf>,
    /// CAA string to CA organization mapping (JSON)
    #[arg(long, global = true)]
    ca_mapping: Option<PathBuf>,
    /// Concurrent per-domain audits
    #[arg(long, global = true, default_value_t = 16)]
    concurrency: usize,
    /// Queries per second per backend
    #[arg(long, global = true, default_value_t = 10.0)]
    rate_limit: f64,
    /// Reference timestamp (RFC 3339); defaults to now
    #[arg(long, global = true)]
    at: Option<String>,
    /// Output directory
    #[arg(long, global = true, default_value = "audit-out")]
    output: PathBuf,
    /// Output format for reports
    #[arg(long, global = true, default_value = "jsonl")]
    format: String,
}

#[derive(Subcommand)]
enum Command {
    /// Run the full pipeline over a target list
    Audit {
        /// Lines of `domain` or `rank,domain` (Tranco CSV compatible)
        #[arg(long)]
        input: PathBuf,
    },
    /// CAA tooling
    #[command(subcommand)]
    Caa(CaaCommand),
    /// DANE tooling
    #[command(subcommand)]
    Dane(DaneCommand),
    /// CT-log tooling
    #[command(subcommand)]
    Ct(CtCommand),
    /// Re-aggregate a records file into a summary
    Report {
        /// A records.jsonl produced by `audit`
        records: PathBuf,
    },
}

#[derive(Subcommand)]
enum CaaCommand {
    /// Parse, classify, and explain the CAA policy of a name or zone file
    Check { name_or_file: String },
}

#[derive(Subcommand)]
enum DaneCommand {
    /// Evaluate the TLSA records of a name against its served chain
    Check { name: String },
}

#[derive(Subcommand)]
enum CtCommand {
    /// List logged certificates covering a name, valid at the reference time
    Fetch { name: String },
}

struct Setup {
    config: Arc<AuditConfig>,
    backends: Backends,
}

fn reference_time(common: &CommonArgs) -> Result<DateTime<Utc>> {
    match &common.at {
        Some(text) => Ok(DateTime::parse_from_rfc3339(text)
            .with_context(|| format!("--at {text:?} is not RFC 3339"))?
            .with_timezone(&Utc)),
        None => Ok(Utc::now()),
    }
}

fn build_setup(common: &CommonArgs) -> Result<Setup> {
    let at = reference_time(common)?;
    let mut config = AuditConfig::new(at);
    config.concurrency = common.concurrency;

    let fixture_default = |file: &str| -> Option<PathBuf> {
        common
            .fixtures
            .as_ref()
            .map(|d| d.join(file))
            .filter(|p| p.exists())
    };

    let trust_path = common
        .trust_store
        .clone()
        .or_else(|| fixture_default("roots.pem"))
        .or_else(|| {
            let system = PathBuf::from(SYSTEM_TRUST_STORE);
            (common.fixtures.is_none() && system.exists()).then_some(system)
        });
    config.trust_store = match trust_path {
        Some(path) => TrustStore::from_pem_file(&path)
            .with_context(|| format!("loading trust store {}", path.display()))?,
        None => TrustStore::empty(),
    };

    if let Some(path) = common.log_list.clone().or_else(|| fixture_default("known-logs.json")) {
        config.known_logs =
            KnownLogs::from_file(&path).with_context(|| format!("loading {}", path.display()))?;
    }

    if let Some(path) = common.ca_mapping.clone().or_else(|| fixture_default("ca-mapping.json")) {
        config.mapping = CaMapping::from_file(&path)
            .with_context(|| format!("loading {}", path.display()))?;
    }

    let backends = match &common.fixtures {
        Some(dir) => {
            if !dir.is_dir() {
                bail!("--fixtures {} is not a directory", dir.display());
            }
            let dns: Arc<dyn DnsBackend> = Arc::new(
                FixtureDnsBackend::load(&dir.join("dns.json"))
                    .context("loading fixture dns.json")?,
            );
            let ct: Arc<dyn CtBackend> = Arc::new(
                FixtureCtBackend::load(&dir.join("ct.json")).context("loading fixture ct.json")?,
            );
            let certs_dir = dir.join("certs");
            let tls: Arc<dyn TlsSource> = Arc::new(FixtureTlsSource::new(&certs_dir));
            let prober = Arc::new(OfflineProber::new(&certs_dir));
            Backends {
                dns,
                tls,
                ct,
                prober,
            }
        }
        None => {
            let dns_limiter = RateLimiter::new(common.rate_limit);
            let ct_limiter = RateLimiter::new(common.rate_limit);
            let tls_limiter = RateLimiter::new(common.rate_limit);
            let probe_limiter = RateLimiter::new(common.rate_limit);
            let dns: Arc<dyn DnsBackend> =
                Arc::new(DohBackend::new(&common.doh_url, dns_limiter).context("DoH backend")?);
            let ct: Arc<dyn CtBackend> =
                Arc::new(CrtShBackend::new(&common.ct_url, ct_limiter).context("CT backend")?);
            let tls: Arc<dyn TlsSource> = Arc::new(LiveTlsSource::new(tls_limiter));
            let prober = Arc::new(LiveProber::new(probe_limiter));
            Backends {
                dns,
                tls,
                ct,
                prober,
            }
        }
    };

    Ok(Setup {
        config: Arc::new(config),
        backends,
    })
}

async fn single_target(name: &str, setup: &Setup) -> Target {
    // Single-name subcommands skip list preparation; resolve what we can.
    let input = format!("{name}\n");
    let (mut targets, _) = prepare_targets(
        &input,
        &setup.backends.dns,
        &setup.backends.prober,
        setup.config.redirect_cap,
    )
    .await;
    targets.pop().unwrap_or(Target {
        rank: None,
        name: name.to_string(),
        resolved_ips: Vec::new(),
        port80_open: false,
        port443_open: false,
        final_name: name.to_string(),
        redirect_hops: 0,
    })
}

async fn cmd_audit(common: &CommonArgs, input: &Path) -> Result<ExitCode> {
    let setup = build_setup(common)?;
    let format: OutputFormat = common.format.parse().map_err(anyhow::Error::msg)?;
    let text = std::fs::read_to_string(input)
        .with_context(|| format!("reading input {}", input.display()))?;

    let (targets, dropped) = prepare_targets(
        &text,
        &setup.backends.dns,
        &setup.backends.prober,
        setup.config.redirect_cap,
    )
    .await;
    for drop in &dropped {
        eprintln!("dropped {}: {}", drop.name, drop.reason);
    }

    let records = run_audit(targets, Arc::clone(&setup.config), setup.backends.clone()).await;
    let summary = aggregate(&records, setup.config.reference_time);
    let written = emit_report(&records, &summary, format, &common.output)?;

    println!(
        "audited {} domains ({} dropped); chain present for {}",
        records.len(),
        dropped.len(),
        summary.domains_with_chain
    );
    for path in &written {
        println!("wrote {}", path.display());
    }

    Ok(exit_for_records(&records))
}

fn exit_for_records(records: &[AuditRecord]) -> ExitCode {
    if records.iter().any(AuditRecord::has_audit_failure) {
        ExitCode::from(2)
    } else {
        ExitCode::SUCCESS
    }
}

async fn cmd_caa_check(common: &CommonArgs, name_or_file: &str) -> Result<ExitCode> {
    let setup = build_setup(common)?;
    let path = Path::new(name_or_file);
    if path.exists() {
        let text = std::fs::read_to_string(path)?;
        let mut records = Vec::new();
        for line in text.lines() {
            let line = line.trim();
            if line.is_empty() || line.starts_with(';') || line.starts_with('#') {
                continue;
            }
            // Zone-file style lines keep everything after the CAA type token.
            let payload = match line.split_once(" CAA ").or_else(|| line.split_once("\tCAA\t")) {
                Some((_, rest)) => rest.trim(),
                None => line,
            };
            match caa::parse_presentation(payload) {
                Ok(record) => records.push(record),
                Err(e) => eprintln!("skipping line: {e}"),
            }
        }
        if records.is_empty() {
            bail!("no CAA records found in {}", path.display());
        }
        let relevant = caa::RelevantCaaSet {
            source_name: path.display().to_string(),
            depth: 0,
            records,
        };
        for line in caa::explain_caa(&relevant, &setup.config.mapping) {
            println!("{line}");
        }
        return Ok(ExitCode::SUCCESS);
    }

    let target = single_target(name_or_file, &setup).await;
    let record = audit_domain(&target, &setup.config, &setup.backends).await;
    match &record.caa.relevant {
        None => println!("{}: no relevant CAA record set (NoCaa)", record.audited_name),
        Some(relevant) => {
            println!(
                "{}: relevant CAA set at {} (depth {}), {} record(s)",
                record.audited_name,
                relevant.source_name,
                relevant.depth,
                relevant.records.len()
            );
            for line in caa::explain_caa(relevant, &setup.config.mapping) {
                println!("  {line}");
            }
        }
    }
    if let (Some(outcome), Some(issuer)) = (&record.caa.server_fqdn, &record.issuer) {
        println!(
            "served certificate issuer {:?} -> {}",
            issuer.organization,
            outcome.state.as_str()
        );
    }
    if let Some(outcome) = &record.caa.server_wildcard {
        println!("wildcard check -> {}", outcome.state.as_str());
    }
    Ok(exit_for_records(std::slice::from_ref(&record)))
}

async fn cmd_dane_check(common: &CommonArgs, name: &str) -> Result<ExitCode> {
    let setup = build_setup(common)?;
    let (bundle, _) = collect_domain_dns(name, &setup.backends.dns).await?;
    let records: Vec<_> = bundle
        .tlsa_443
        .records
        .iter()
        .map(|r| parse_tlsa(&r.data))
        .collect();
    if records.is_empty() {
        println!("{name}: no TLSA records at _443._tcp");
        return Ok(ExitCode::SUCCESS);
    }

    let target = single_target(name, &setup).await;
    let first_ip = target.resolved_ips.first().and_then(|s| s.parse().ok());
    let chain = match setup.backends.tls.fetch(name, first_ip).await {
        Ok(ders) => Some(chain_from_ders(
            ders,
            name,
            setup.config.reference_time,
            true,
        )?),
        Err(e) => {
            eprintln!("no served chain: {e}");
            None
        }
    };
    let status = chain
        .as_ref()
        .map(|c| validate_chain(c, &setup.config.trust_store, setup.config.reference_time));
    let assessment = evaluate_dane(
        records,
        chain.as_ref(),
        bundle.tlsa_443.authenticated,
        status.as_ref(),
    );

    for (i, record) in assessment.records.iter().enumerate() {
        let conformance = if record.conformant {
            "conformant".to_string()
        } else {
            format!("non-conformant: {}", record.conformance_errors.join("; "))
        };
        println!(
            "record {i}: usage={} selector={} matching={} ({conformance})",
            record.usage, record.selector, record.matching_type
        );
    }
    match assessment.matched {
        Some((record, element)) => {
            println!("match: record {record} authenticates chain element {element}")
        }
        None => println!("no record matches the served chain"),
    }
    println!(
        "dnssec_secure={} authenticated={} constraint_class={:?} flags={:?}",
        assessment.dnssec_secure,
        assessment.authenticated,
        assessment.constraint_class,
        assessment.flags
    );
    Ok(ExitCode::SUCCESS)
}

async fn cmd_ct_fetch(common: &CommonArgs, name: &str) -> Result<ExitCode> {
    let setup = build_setup(common)?;
    let result = fetch_certs_by_name(name, setup.config.reference_time, &setup.backends.ct)
        .await
        .context("CT query")?;
    println!(
        "{}: {} logged certificate(s) valid at {}",
        name,
        result.entries.len(),
        setup.config.reference_time.to_rfc3339()
    );
    for entry in &result.entries {
        println!(
            "  {} issuer={:?} serial={} window={}..{}{}",
            entry.entry_id,
            entry
                .certificate
                .issuer
                .organization
                .as_deref()
                .unwrap_or("-"),
            entry.certificate.serial,
            entry.certificate.not_before.to_rfc3339(),
            entry.certificate.not_after.to_rfc3339(),
            if entry.is_precert { " (precert)" } else { "" }
        );
    }
    Ok(ExitCode::SUCCESS)
}

async fn cmd_report(common: &CommonArgs, records_path: &Path) -> Result<ExitCode> {
    let format: OutputFormat = common.format.parse().map_err(anyhow::Error::msg)?;
    let text = std::fs::read_to_string(records_path)
        .with_context(|| format!("reading {}", records_path.display()))?;
    let mut records = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let record: AuditRecord = serde_json::from_str(line)
            .with_context(|| format!("{}:{}", records_path.display(), i + 1))?;
        records.push(record);
    }
    let at = reference_time(common).ok().and_then(|given| {
        common.at.as_ref().map(|_| given)
    });
    let at = at
        .or_else(|| records.first().map(|r| r.reference_time))
        .unwrap_or_else(Utc::now);
    let summary = aggregate(&records, at);
    let written = emit_report(&records, &summary, format, &common.output)?;
    for path in &written {
        println!("wrote {}", path.display());
    }
    Ok(exit_for_records(&records))
}

#[tokio::main]
async fn main() -> ExitCode {
    env_logger::init();
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Audit { input } => cmd_audit(&cli.common, input).await,
        Command::Caa(CaaCommand::Check { name_or_file }) => {
            cmd_caa_check(&cli.common, name_or_file).await
        }
        Command::Dane(DaneCommand::Check { name }) => cmd_dane_check(&cli.common, name).await,
        Command::Ct(CtCommand::Fetch { name }) => cmd_ct_fetch(&cli.common, name).await,
        Command::Report { records } => cmd_report(&cli.common, records).await,
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
