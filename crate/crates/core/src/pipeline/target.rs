//! Target-list preparation: input parsing, A-record resolution, port checks,
//! and HTTP redirect following.

use std::collections::HashSet;
use std::net::{IpAddr, SocketAddr};
use std::path::PathBuf;
use std::sync::Arc;
use std::time::Duration;

use async_trait::async_trait;
use serde::{Deserialize, Serialize};

use crate::dns::{query_records, DnsBackend, DnsQuery, DnsStatus, RecordType};
use crate::limiter::RateLimiter;

/// One prepared audit target.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Target {
    pub rank: Option<u64>,
    /// The input name.
    pub name: String,
    pub resolved_ips: Vec<String>,
    pub port80_open: bool,
    pub port443_open: bool,
    /// Where HTTP redirects ended up; this is the name that gets audited.
    pub final_name: String,
    pub redirect_hops: u32,
}

/// A name that never made it into the target list, and why.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DroppedTarget {
    pub name: String,
    pub reason: String,
}

/// Result of probing one resolved name.
#[derive(Debug, Clone)]
pub struct ProbeOutcome {
    pub port80_open: bool,
    pub port443_open: bool,
    pub final_name: String,
    pub redirect_hops: u32,
}

#[async_trait]
pub trait TargetProber: Send + Sync {
    async fn probe(&self, name: &str, ips: &[IpAddr], redirect_cap: u32) -> ProbeOutcome;
}

/// Live prober: TCP connects for the port checks and a no-redirect HTTP
/// client walking `3xx` responses manually up to the hop cap.
pub struct LiveProber {
    client: reqwest::Client,
    limiter: Arc<RateLimiter>,
}

impl LiveProber {
    pub fn new(limiter: Arc<RateLimiter>) -> Self {
        let client = reqwest::Client::builder()
            .redirect(reqwest::redirect::Policy::none())
            .timeout(Duration::from_secs(10))
            .build()
            .expect("reqwest client");
        Self { client, limiter }
    }

    async fn port_open(&self, ip: IpAddr, port: u16) -> bool {
        self.limiter.acquire().await;
        matches!(
            tokio::time::timeout(
                Duration::from_secs(5),
                tokio::net::TcpStream::connect(SocketAddr::new(ip, port)),
            )
            .await,
            Ok(Ok(_))
        )
    }

    /// Follows `3xx` redirects host to host. Loops are caught by the visited
    /// set; anything else (errors, non-redirect responses) ends the walk.
    async fn follow_redirects(&self, name: &str, https: bool, cap: u32) -> (String, u32) {
        let mut current = if https {
            format!("https://{name}/")
        } else {
            format!("http://{name}/")
        };
        let mut host = name.to_string();
        let mut visited: HashSet<String> = HashSet::from([current.clone()]);
        let mut hops = 0;
        while hops < cap {
            self.limiter.acquire().await;
            let response = match self.client.get(&current).send().await {
                Ok(r) => r,
                Err(_) => break,
            };
            if !response.status().is_redirection() {
                break;
            }
            let Some(location) = response
                .headers()
                .get(reqwest::header::LOCATION)
                .and_then(|v| v.to_str().ok())
            else {
                break;
            };
            let Ok(next) = reqwest::Url::parse(&current).and_then(|base| base.join(location))
            else {
                break;
            };
            let next = next.to_string();
            if !visited.insert(next.clone()) {
                break;
            }
            if let Ok(parsed) = reqwest::Url::parse(&next) {
                if let Some(h) = parsed.host_str() {
                    host = h.to_ascii_lowercase();
                }
            }
            current = next;
            hops += 1;
        }
        (host, hops)
    }
}

#[async_trait]
impl TargetProber for LiveProber {
    async fn probe(&self, name: &str, ips: &[IpAddr], redirect_cap: u32) -> ProbeOutcome {
        let Some(&ip) = ips.first() else {
            return ProbeOutcome {
                port80_open: false,
                port443_open: false,
                final_name: name.to_string(),
                redirect_hops: 0,
            };
        };
        let port80_open = self.port_open(ip, 80).await;
        let port443_open = self.port_open(ip, 443).await;
        let (final_name, redirect_hops) = if port443_open {
            self.follow_redirects(name, true, redirect_cap).await
        } else if port80_open {
            self.follow_redirects(name, false, redirect_cap).await
        } else {
            (name.to_string(), 0)
        };
        ProbeOutcome {
            port80_open,
            port443_open,
            final_name,
            redirect_hops,
        }
    }
}

/// Offline prober: port 443 counts as open when a chain fixture exists, and
/// redirects are not simulated.
pub struct OfflineProber {
    tls_fixture_dir: PathBuf,
}

impl OfflineProber {
    pub fn new(tls_fixture_dir: impl Into<PathBuf>) -> Self {
        Self {
            tls_fixture_dir: tls_fixture_dir.into(),
        }
    }
}

#[async_trait]
impl TargetProber for OfflineProber {
    async fn probe(&self, name: &str, _ips: &[IpAddr], _cap: u32) -> ProbeOutcome {
        let pem = self
            .tls_fixture_dir
            .join(format!("{}.pem", name.to_ascii_lowercase()));
        ProbeOutcome {
            port80_open: false,
            port443_open: pem.exists(),
            final_name: name.to_string(),
            redirect_hops: 0,
        }
    }
}

/// Parses one input line: `domain` or `rank,domain` (Tranco CSV).
fn parse_input_line(line: &str) -> Option<(Option<u64>, String)> {
    let trimmed = line.trim().trim_start_matches('\u{feff}');
    if trimmed.is_empty() || trimmed.starts_with('#') {
        return None;
    }
    match trimmed.split_once(',') {
        Some((rank, name)) => {
            let rank = rank.trim().parse::<u64>().ok();
            Some((rank, name.trim().to_string()))
        }
        None => Some((None, trimmed.to_string())),
    }
}

/// Resolves, probes, and follows redirects for every input line. Final names
/// are deduplicated: the first target to reach a name keeps it. Unresolvable
/// names are dropped with a reason.
pub async fn prepare_targets(
    input: &str,
    dns: &Arc<dyn DnsBackend>,
    prober: &Arc<dyn TargetProber>,
    redirect_cap: u32,
) -> (Vec<Target>, Vec<DroppedTarget>) {
    let mut targets = Vec::new();
    let mut dropped = Vec::new();
    let mut seen_finals: HashSet<String> = HashSet::new();

    for line in input.lines() {
        let Some((rank, name)) = parse_input_line(line) else {
            continue;
        };
        let query = match DnsQuery::new(&name, RecordType::A) {
            Ok(q) => q,
            Err(e) => {
                dropped.push(DroppedTarget {
                    name,
                    reason: e.to_string(),
                });
                continue;
            }
        };
        let response = match query_records(&query, dns).await {
            Ok(r) => r,
            Err(e) => {
                dropped.push(DroppedTarget {
                    name,
                    reason: e.to_string(),
                });
                continue;
            }
        };
        if response.status != DnsStatus::NoError || response.records.is_empty() {
            dropped.push(DroppedTarget {
                name,
                reason: format!("no A record ({})", response.status.as_str()),
            });
            continue;
        }
        let resolved_ips: Vec<String> = response
            .records
            .iter()
            .map(|r| r.data.clone())
            .filter(|d| d.parse::<IpAddr>().is_ok())
            .collect();
        if resolved_ips.is_empty() {
            dropped.push(DroppedTarget {
                name,
                reason: "A response carried no parseable addresses".into(),
            });
            continue;
        }
        let ips: Vec<IpAddr> = resolved_ips.iter().map(|s| s.parse().unwrap()).collect();
        let outcome = prober.probe(&name, &ips, redirect_cap).await;
        if !seen_finals.insert(outcome.final_name.clone()) {
            dropped.push(DroppedTarget {
                name,
                reason: format!("duplicate final name {}", outcome.final_name),
            });
            continue;
        }
        targets.push(Target {
            rank,
            name: name.clone(),
            resolved_ips,
            port80_open: outcome.port80_open,
            port443_open: outcome.port443_open,
            final_name: outcome.final_name,
            redirect_hops: outcome.redirect_hops,
        });
    }
    (targets, dropped)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dns::{FixtureDnsBackend, FixtureEntry};
    use std::collections::HashMap;

    struct NullProber;

    #[async_trait]
    impl TargetProber for NullProber {
        async fn probe(&self, name: &str, _ips: &[IpAddr], _cap: u32) -> ProbeOutcome {
            ProbeOutcome {
                port80_open: true,
                port443_open: true,
                final_name: name.to_string(),
                redirect_hops: 0,
            }
        }
    }

    fn dns_with_a(entries: &[(&str, &str)]) -> Arc<dyn DnsBackend> {
        let map: HashMap<String, FixtureEntry> = entries
            .iter()
            .map(|(name, ip)| {
                (
                    format!("{name}|A"),
                    FixtureEntry {
                        status: "NOERROR".into(),
                        ad: false,
                        records: vec![ip.to_string()],
                    },
                )
            })
            .collect();
        Arc::new(FixtureDnsBackend::from_map(map))
    }

    #[test]
    fn input_line_parsing() {
        assert_eq!(parse_input_line("example.com"), Some((None, "example.com".into())));
        assert_eq!(
            parse_input_line("1,example.com"),
            Some((Some(1), "example.com".into()))
        );
        assert_eq!(parse_input_line("  # comment"), None);
        assert_eq!(parse_input_line(""), None);
    }

    #[tokio::test]
    async fn unresolvable_names_are_dropped_with_reason() {
        let dns = dns_with_a(&[("good.test", "192.0.2.1")]);
        let prober: Arc<dyn TargetProber> = Arc::new(NullProber);
        let (targets, dropped) =
            prepare_targets("1,good.test\n2,missing.test\nbad domain!\n", &dns, &prober, 10)
                .await;
        assert_eq!(targets.len(), 1);
        assert_eq!(targets[0].name, "good.test");
        assert_eq!(targets[0].rank, Some(1));
        assert_eq!(targets[0].resolved_ips, vec!["192.0.2.1"]);
        assert_eq!(dropped.len(), 2);
        assert!(dropped[0].reason.contains("NXDOMAIN"));
    }

    #[tokio::test]
    async fn duplicate_final_names_collapse() {
        let dns = dns_with_a(&[("a.test", "192.0.2.1"), ("b.test", "192.0.2.2")]);
        struct RedirectProber;
        #[async_trait]
        impl TargetProber for RedirectProber {
            async fn probe(&self, _name: &str, _ips: &[IpAddr], _cap: u32) -> ProbeOutcome {
                ProbeOutcome {
                    port80_open: false,
                    port443_open: true,
                    final_name: "final.test".into(),
                    redirect_hops: 1,
                }
            }
        }
        let prober: Arc<dyn TargetProber> = Arc::new(RedirectProber);
        let (targets, dropped) = prepare_targets("a.test\nb.test\n", &dns, &prober, 10).await;
        assert_eq!(targets.len(), 1);
        assert_eq!(targets[0].final_name, "final.test");
        assert_eq!(targets[0].redirect_hops, 1);
        assert_eq!(dropped.len(), 1);
        assert!(dropped[0].reason.contains("duplicate final name"));
    }
}
