//! Served-chain capture: a live TLS client that records whatever the server
//! presents (validation and weak-cipher errors suppressed), and a PEM fixture
//! source for offline runs.

use std::collections::HashMap;
use std::net::{IpAddr, SocketAddr, TcpStream};
use std::path::PathBuf;
use std::sync::Arc;
use std::time::Duration;

use async_trait::async_trait;
use openssl::ssl::{SslConnector, SslMethod, SslVerifyMode};
use tokio::sync::Mutex;

use crate::limiter::RateLimiter;

use super::CertError;

const TLS_PORT: u16 = 443;
const HANDSHAKE_TIMEOUT: Duration = Duration::from_secs(10);
const RETRY_DELAY: Duration = Duration::from_millis(500);

#[async_trait]
pub trait TlsSource: Send + Sync {
    /// Captures the presented chain as raw DER blocks, leaf first.
    async fn fetch(&self, name: &str, ip: Option<IpAddr>) -> Result<Vec<Vec<u8>>, CertError>;
}

/// Reads `<dir>/<name>.pem`; a missing file means the host serves no TLS.
#[derive(Debug, Clone)]
pub struct FixtureTlsSource {
    dir: PathBuf,
}

impl FixtureTlsSource {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        Self { dir: dir.into() }
    }
}

#[async_trait]
impl TlsSource for FixtureTlsSource {
    async fn fetch(&self, name: &str, _ip: Option<IpAddr>) -> Result<Vec<Vec<u8>>, CertError> {
        let path = self.dir.join(format!("{}.pem", name.to_ascii_lowercase()));
        if !path.exists() {
            return Err(CertError::Connection(format!(
                "no TLS fixture for {name}; host treated as offering no HTTPS"
            )));
        }
        super::pem_to_ders(&std::fs::read(&path)?)
    }
}

/// Live capture over port 443 with SNI set to the audited name. Certificate
/// verification is disabled and the security level dropped to 0 so that weak
/// deployments still hand us their chain. At most one handshake per host runs
/// at a time, and the shared limiter paces connection attempts.
pub struct LiveTlsSource {
    limiter: Arc<RateLimiter>,
    host_locks: Mutex<HashMap<String, Arc<Mutex<()>>>>,
}

impl LiveTlsSource {
    pub fn new(limiter: Arc<RateLimiter>) -> Self {
        Self {
            limiter,
            host_locks: Mutex::new(HashMap::new()),
        }
    }

    async fn host_lock(&self, name: &str) -> Arc<Mutex<()>> {
        let mut locks = self.host_locks.lock().await;
        locks.entry(name.to_string()).or_default().clone()
    }
}

fn capture_blocking(name: &str, addr: SocketAddr) -> Result<Vec<Vec<u8>>, CertError> {
    let conn = |e: String| CertError::Connection(e);
    let mut builder =
        SslConnector::builder(SslMethod::tls()).map_err(|e| conn(e.to_string()))?;
    builder.set_verify(SslVerifyMode::NONE);
    builder.set_security_level(0);
    let connector = builder.build();

    let stream =
        TcpStream::connect_timeout(&addr, HANDSHAKE_TIMEOUT).map_err(|e| conn(e.to_string()))?;
    stream
        .set_read_timeout(Some(HANDSHAKE_TIMEOUT))
        .map_err(|e| conn(e.to_string()))?;
    stream
        .set_write_timeout(Some(HANDSHAKE_TIMEOUT))
        .map_err(|e| conn(e.to_string()))?;

    let config = connector
        .configure()
        .map_err(|e| conn(e.to_string()))?
        .use_server_name_indication(true)
        .verify_hostname(false);
    let tls = config
        .connect(name, stream)
        .map_err(|e| conn(format!("TLS handshake with {name}: {e}")))?;

    let chain = tls
        .ssl()
        .peer_cert_chain()
        .ok_or_else(|| conn("server presented no certificate chain".into()))?;
    chain
        .iter()
        .map(|cert| cert.to_der().map_err(|e| conn(e.to_string())))
        .collect()
}

#[async_trait]
impl TlsSource for LiveTlsSource {
    async fn fetch(&self, name: &str, ip: Option<IpAddr>) -> Result<Vec<Vec<u8>>, CertError> {
        let ip = ip.ok_or_else(|| {
            CertError::Connection(format!("no resolved address for {name}"))
        })?;
        let addr = SocketAddr::new(ip, TLS_PORT);
        let lock = self.host_lock(name).await;
        let _guard = lock.lock().await;

        let mut last = None;
        for attempt in 0..2 {
            if attempt > 0 {
                tokio::time::sleep(RETRY_DELAY).await;
            }
            self.limiter.acquire().await;
            let owned_name = name.to_string();
            let result =
                tokio::task::spawn_blocking(move || capture_blocking(&owned_name, addr))
                    .await
                    .map_err(|e| CertError::Connection(e.to_string()))?;
            match result {
                Ok(ders) => return Ok(ders),
                Err(e) => last = Some(e),
            }
        }
        Err(last.unwrap())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[tokio::test]
    async fn fixture_fetch_reads_pem_bundles() {
        let dir = tempfile::tempdir().unwrap();
        let pem = super::super::ders_to_pem(&[vec![1, 2, 3], vec![4, 5]]);
        std::fs::write(dir.path().join("example.test.pem"), pem).unwrap();

        let source = FixtureTlsSource::new(dir.path());
        let ders = source.fetch("EXAMPLE.TEST", None).await.unwrap();
        assert_eq!(ders.len(), 2);

        let err = source.fetch("missing.test", None).await.unwrap_err();
        assert!(matches!(err, CertError::Connection(_)));
    }
}
