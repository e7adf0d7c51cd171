//! Bounded exponential backoff and a shared request pacer.

use std::sync::Mutex;
use std::thread;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RetryPolicy {
    /// Retries after the first attempt; total attempts are `max_retries + 1`.
    pub max_retries: u32,
    pub base_delay_ms: u64,
    pub factor: f64,
    pub max_delay_ms: u64,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy {
            max_retries: 5,
            base_delay_ms: 250,
            factor: 2.0,
            max_delay_ms: 8_000,
        }
    }
}

impl RetryPolicy {
    /// No waiting between attempts. Used by tests and in-process backends.
    pub fn immediate(max_retries: u32) -> Self {
        RetryPolicy {
            max_retries,
            base_delay_ms: 0,
            factor: 1.0,
            max_delay_ms: 0,
        }
    }

    /// Delay before retry number `attempt` (0-based).
    pub fn delay(&self, attempt: u32) -> Duration {
        let ms = self.base_delay_ms as f64 * self.factor.powi(attempt as i32);
        Duration::from_millis(ms.min(self.max_delay_ms as f64) as u64)
    }
}

/// Spaces request starts at least `min_interval` apart and supports a global
/// pause (e.g. after a quota response) that every caller honours.
#[derive(Debug)]
pub struct Pacer {
    min_interval: Duration,
    state: Mutex<PacerState>,
}

#[derive(Debug)]
struct PacerState {
    next_slot: Instant,
    paused_until: Option<Instant>,
}

impl Pacer {
    pub fn new(min_interval: Duration) -> Self {
        Pacer {
            min_interval,
            state: Mutex::new(PacerState {
                next_slot: Instant::now(),
                paused_until: None,
            }),
        }
    }

    pub fn unlimited() -> Self {
        Self::new(Duration::ZERO)
    }

    /// Requests per second to minimum spacing; zero or negative means unlimited.
    pub fn per_second(rate: f64) -> Self {
        if rate > 0.0 {
            Self::new(Duration::from_secs_f64(1.0 / rate))
        } else {
            Self::unlimited()
        }
    }

    /// Blocks until the caller may start a request.
    pub fn acquire(&self) {
        let wait_until = {
            let mut st = self.state.lock().expect("pacer lock");
            let now = Instant::now();
            let mut start = st.next_slot.max(now);
            if let Some(p) = st.paused_until {
                start = start.max(p);
            }
            st.next_slot = start + self.min_interval;
            start
        };
        let now = Instant::now();
        if wait_until > now {
            thread::sleep(wait_until - now);
        }
    }

    pub fn pause(&self, duration: Duration) {
        let mut st = self.state.lock().expect("pacer lock");
        let until = Instant::now() + duration;
        st.paused_until = Some(st.paused_until.map_or(until, |p| p.max(until)));
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn delays_grow_then_cap() {
        let p = RetryPolicy {
            max_retries: 5,
            base_delay_ms: 100,
            factor: 2.0,
            max_delay_ms: 500,
        };
        let got: Vec<u64> = (0..5).map(|a| p.delay(a).as_millis() as u64).collect();
        assert_eq!(got, vec![100, 200, 400, 500, 500]);
        assert_eq!(RetryPolicy::immediate(3).delay(2), Duration::ZERO);
    }

    #[test]
    fn pacer_spaces_requests() {
        let pacer = Pacer::new(Duration::from_millis(20));
        let start = Instant::now();
        for _ in 0..4 {
            pacer.acquire();
        }
        assert!(start.elapsed() >= Duration::from_millis(60));
    }

    #[test]
    fn pause_delays_next_acquire() {
        let pacer = Pacer::unlimited();
        pacer.pause(Duration::from_millis(30));
        let start = Instant::now();
        pacer.acquire();
        assert!(start.elapsed() >= Duration::from_millis(25));
    }
}
