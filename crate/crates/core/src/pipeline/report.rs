//! Report emission: per-domain JSONL, a summary JSON document, and an
//! optional CSV flattening of the summary histograms. Outputs are
//! byte-stable for identical inputs.

use std::io::Write;
use std::path::{Path, PathBuf};

use thiserror::Error;

use super::{AuditRecord, SummaryReport};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OutputFormat {
    Jsonl,
    Csv,
}

impl std::str::FromStr for OutputFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "jsonl" => Ok(OutputFormat::Jsonl),
            "csv" => Ok(OutputFormat::Csv),
            other => Err(format!("unknown format {other:?}, expected jsonl or csv")),
        }
    }
}

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("writing report: {0}")]
    Io(#[from] std::io::Error),
    #[error("serializing report: {0}")]
    Json(#[from] serde_json::Error),
    #[error("writing CSV: {0}")]
    Csv(#[from] csv::Error),
}

/// Writes `records.jsonl` and `summary.json` into `output_dir`, plus
/// `summary.csv` for the CSV format. Returns the paths written.
pub fn emit_report(
    records: &[AuditRecord],
    summary: &SummaryReport,
    format: OutputFormat,
    output_dir: &Path,
) -> Result<Vec<PathBuf>, ReportError> {
    std::fs::create_dir_all(output_dir)?;
    let mut written = Vec::new();

    let records_path = output_dir.join("records.jsonl");
    let mut file = std::fs::File::create(&records_path)?;
    for record in records {
        serde_json::to_writer(&mut file, record)?;
        file.write_all(b"\n")?;
    }
    written.push(records_path);

    let summary_path = output_dir.join("summary.json");
    let mut pretty = serde_json::to_string_pretty(summary)?;
    pretty.push('\n');
    std::fs::write(&summary_path, pretty)?;
    written.push(summary_path);

    if format == OutputFormat::Csv {
        let csv_path = output_dir.join("summary.csv");
        let mut writer = csv::Writer::from_path(&csv_path)?;
        writer.write_record(["section", "key", "value"])?;
        write_summary_rows(&mut writer, summary)?;
        writer.flush()?;
        written.push(csv_path);
    }

    Ok(written)
}

fn write_summary_rows<W: Write>(
    writer: &mut csv::Writer<W>,
    summary: &SummaryReport,
) -> Result<(), ReportError> {
    let mut row = |section: &str, key: &str, value: String| {
        writer
            .write_record([section, key, &value])
            .map_err(ReportError::from)
    };

    row("run", "domains_total", summary.domains_total.to_string())?;
    row(
        "run",
        "domains_with_chain",
        summary.domains_with_chain.to_string(),
    )?;
    row("run", "reference_time", summary.reference_time.to_rfc3339())?;
    for (key, value) in &summary.overlap_counts {
        row("overlap", key, value.to_string())?;
    }
    for (key, value) in &summary.caa_state_histogram {
        row("caa_state", key, value.to_string())?;
    }
    for (key, stats) in &summary.ca_string_shares {
        row(
            "ca_string",
            key,
            format!(
                "issue_overall={} issue_single={} issuewild_overall={} issuewild_single={}",
                stats.issue_overall,
                stats.issue_single,
                stats.issuewild_overall,
                stats.issuewild_single
            ),
        )?;
    }
    for (key, value) in &summary.iodef_triage_counts {
        row("iodef", key, value.to_string())?;
    }
    for (key, value) in &summary.unknown_tag_triage {
        row("unknown_tag", key, value.to_string())?;
    }
    for matrix_row in &summary.tlsa_ct_matrix {
        let yn = |b: bool| if b { "yes" } else { "no" };
        row(
            "tlsa_ct",
            &format!(
                "server={} ct={} same_issuer={}",
                yn(matrix_row.server_authenticated),
                yn(matrix_row.ct_authenticated),
                yn(matrix_row.same_issuer)
            ),
            matrix_row.count.to_string(),
        )?;
    }
    for (key, value) in &summary.caa_ct_pair_counts {
        row("caa_ct_pair", key, value.to_string())?;
    }
    for (key, buckets) in &summary.age_buckets {
        row(
            "age",
            key,
            format!(
                "within_3_months={} older={}",
                buckets.within_3_months, buckets.older
            ),
        )?;
    }
    Ok(())
}
