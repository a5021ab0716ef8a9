//! Web PKI consistency auditing.
//!
//! Collects CAA/TLSA/DNSSEC records, served certificate chains, and CT log
//! entries for a set of domains, then classifies how well the pieces agree:
//! does the served certificate satisfy the CAA policy, do TLSA records match
//! anything real, and do CT logs know about certificates the CAA policy would
//! forbid.

pub mod caa;
pub mod certs;
pub mod consistency;
pub mod ctlog;
pub mod dane;
pub mod dns;
pub mod limiter;
pub mod pipeline;

pub use pipeline::{AuditConfig, AuditRecord, SummaryReport};
