//! Token-bucket rate limiting and the in-flight request bound.

use std::sync::{Condvar, Mutex};
use std::time::{Duration, Instant};

/// Token bucket: `rate` requests per second with a burst of `burst`.
/// A rate of 0 disables limiting.
pub struct TokenBucket {
    rate: f64,
    burst: f64,
    state: Mutex<BucketState>,
}

struct BucketState {
    tokens: f64,
    last_refill: Instant,
}

impl TokenBucket {
    pub fn new(rate: f64, burst: f64) -> Self {
        TokenBucket {
            rate,
            burst: burst.max(1.0),
            state: Mutex::new(BucketState {
                tokens: burst.max(1.0),
                last_refill: Instant::now(),
            }),
        }
    }

    /// Blocks until a token is available.
    pub fn acquire(&self) {
        if self.rate <= 0.0 {
            return;
        }
        loop {
            let wait = {
                let mut st = self.state.lock().expect("bucket lock");
                let now = Instant::now();
                let elapsed = now.duration_since(st.last_refill).as_secs_f64();
                st.tokens = (st.tokens + elapsed * self.rate).min(self.burst);
                st.last_refill = now;
                if st.tokens >= 1.0 {
                    st.tokens -= 1.0;
                    return;
                }
                (1.0 - st.tokens) / self.rate
            };
            std::thread::sleep(Duration::from_secs_f64(wait.min(0.25)));
        }
    }
}

/// Counting semaphore bounding concurrent requests, with a high-water
/// mark so the bound is observable from tests and gateway stats.
pub struct InFlightGauge {
    limit: usize,
    state: Mutex<GaugeState>,
    cv: Condvar,
}

#[derive(Default)]
struct GaugeState {
    current: usize,
    high_water: usize,
}

impl InFlightGauge {
    pub fn new(limit: usize) -> Self {
        InFlightGauge {
            limit: limit.max(1),
            state: Mutex::new(GaugeState::default()),
            cv: Condvar::new(),
        }
    }

    pub fn acquire(&self) -> InFlightGuard<'_> {
        let mut st = self.state.lock().expect("gauge lock");
        while st.current >= self.limit {
            st = self.cv.wait(st).expect("gauge wait");
        }
        st.current += 1;
        st.high_water = st.high_water.max(st.current);
        InFlightGuard { gauge: self }
    }

    pub fn current(&self) -> usize {
        self.state.lock().expect("gauge lock").current
    }

    pub fn high_water(&self) -> usize {
        self.state.lock().expect("gauge lock").high_water
    }
}

pub struct InFlightGuard<'a> {
    gauge: &'a InFlightGauge,
}

impl Drop for InFlightGuard<'_> {
    fn drop(&mut self) {
        let mut st = self.gauge.state.lock().expect("gauge lock");
        st.current -= 1;
        drop(st);
        self.gauge.cv.notify_one();
    }
}

/// Exponential backoff delay before retry attempt `attempt` (1-based).
/// Nondecreasing in the attempt number.
pub fn backoff_delay(base_ms: u64, attempt: u32) -> Duration {
    let factor = 2u64.saturating_pow(attempt.saturating_sub(1));
    Duration::from_millis(base_ms.saturating_mul(factor))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::Arc;

    #[test]
    fn bucket_throttles() {
        let bucket = TokenBucket::new(100.0, 1.0);
        let start = Instant::now();
        for _ in 0..5 {
            bucket.acquire();
        }
        // 4 refills at 100/s after the initial burst token
        assert!(start.elapsed() >= Duration::from_millis(30));
    }

    #[test]
    fn bucket_zero_rate_is_unlimited() {
        let bucket = TokenBucket::new(0.0, 1.0);
        let start = Instant::now();
        for _ in 0..1000 {
            bucket.acquire();
        }
        assert!(start.elapsed() < Duration::from_secs(1));
    }

    #[test]
    fn gauge_bounds_concurrency() {
        let gauge = Arc::new(InFlightGauge::new(3));
        std::thread::scope(|s| {
            for _ in 0..12 {
                let g = Arc::clone(&gauge);
                s.spawn(move || {
                    let _guard = g.acquire();
                    std::thread::sleep(Duration::from_millis(10));
                });
            }
        });
        assert_eq!(gauge.current(), 0);
        assert!(gauge.high_water() <= 3);
        assert!(gauge.high_water() >= 1);
    }

    #[test]
    fn backoff_is_nondecreasing() {
        let mut prev = Duration::ZERO;
        for attempt in 1..=10 {
            let d = backoff_delay(50, attempt);
            assert!(d >= prev);
            prev = d;
        }
        assert_eq!(backoff_delay(50, 1), Duration::from_millis(50));
        assert_eq!(backoff_delay(50, 3), Duration::from_millis(200));
    }
}
