//! Token-bucket rate limiting shared by all live backends.

use std::sync::Arc;
use std::time::Duration;

use tokio::sync::Mutex;
use tokio::time::Instant;

/// Token bucket with a configurable sustained rate. One instance is shared
/// per backend across all concurrent audit tasks; `acquire` suspends the
/// caller until a token is available.
#[derive(Debug)]
pub struct RateLimiter {
    state: Mutex<BucketState>,
    rate_per_sec: f64,
    capacity: f64,
}

#[derive(Debug)]
struct BucketState {
    tokens: f64,
    refilled_at: Instant,
}

impl RateLimiter {
    /// A limiter allowing `rate_per_sec` sustained queries per second with a
    /// burst of up to one second's worth of tokens.
    pub fn new(rate_per_sec: f64) -> Arc<Self> {
        let rate = rate_per_sec.max(0.01);
        Arc::new(Self {
            state: Mutex::new(BucketState {
                tokens: rate.max(1.0),
                refilled_at: Instant::now(),
            }),
            rate_per_sec: rate,
            capacity: rate.max(1.0),
        })
    }

    /// Take one token, sleeping until the bucket can supply it.
    pub async fn acquire(&self) {
        loop {
            let wait = {
                let mut state = self.state.lock().await;
                let now = Instant::now();
                let elapsed = now.duration_since(state.refilled_at).as_secs_f64();
                state.tokens = (state.tokens + elapsed * self.rate_per_sec).min(self.capacity);
                state.refilled_at = now;
                if state.tokens >= 1.0 {
                    state.tokens -= 1.0;
                    None
                } else {
                    Some(Duration::from_secs_f64(
                        (1.0 - state.tokens) / self.rate_per_sec,
                    ))
                }
            };
            match wait {
                None => return,
                Some(d) => tokio::time::sleep(d).await,
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[tokio::test(start_paused = true)]
    async fn burst_then_throttle() {
        let limiter = RateLimiter::new(10.0);
        // Burst capacity covers the first batch without sleeping.
        let start = Instant::now();
        for _ in 0..10 {
            limiter.acquire().await;
        }
        assert_eq!(start.elapsed().as_millis(), 0);
        // The next token requires a refill at 10 qps.
        limiter.acquire().await;
        assert!(start.elapsed() >= Duration::from_millis(90));
    }

    #[tokio::test(start_paused = true)]
    async fn sustained_rate_is_bounded() {
        let limiter = RateLimiter::new(5.0);
        let start = Instant::now();
        for _ in 0..20 {
            limiter.acquire().await;
        }
        // 20 tokens at 5 qps with 5 burst: at least 3 seconds.
        assert!(start.elapsed() >= Duration::from_secs(3));
    }
}
