use std::time::Duration;

use super::BackendError;

/// Exponential backoff: `base * 2^attempt`, capped at `max_delay_ms`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RetryPolicy {
    /// Retries after the first attempt.
    pub max_retries: u32,
    pub base_delay_ms: u64,
    pub max_delay_ms: u64,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy {
            max_retries: 2,
            base_delay_ms: 200,
            max_delay_ms: 5_000,
        }
    }
}

impl RetryPolicy {
    pub fn none() -> Self {
        RetryPolicy {
            max_retries: 0,
            ..Default::default()
        }
    }

    /// Delay before retry number `retry` (0-based).
    pub fn delay(&self, retry: u32) -> Duration {
        let factor = 1u64.checked_shl(retry.min(32)).unwrap_or(u64::MAX);
        Duration::from_millis(self.base_delay_ms.saturating_mul(factor).min(self.max_delay_ms))
    }

    pub fn delays(&self) -> impl Iterator<Item = Duration> + '_ {
        (0..self.max_retries).map(|r| self.delay(r))
    }

    /// Runs `op` until it succeeds, fails permanently, or retries run out.
    /// `sleep` is injected so tests can observe the schedule.
    pub fn run_with<T>(
        &self,
        mut op: impl FnMut() -> Result<T, BackendError>,
        mut sleep: impl FnMut(Duration),
    ) -> Result<T, BackendError> {
        let mut retry = 0;
        loop {
            match op() {
                Ok(v) => return Ok(v),
                Err(e) if e.is_retryable() && retry < self.max_retries => {
                    log::debug!("retrying after error: {e}");
                    sleep(self.delay(retry));
                    retry += 1;
                }
                Err(e) => return Err(e),
            }
        }
    }

    pub fn run<T>(&self, op: impl FnMut() -> Result<T, BackendError>) -> Result<T, BackendError> {
        self.run_with(op, std::thread::sleep)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn delays_are_monotone_and_capped() {
        let p = RetryPolicy {
            max_retries: 10,
            base_delay_ms: 100,
            max_delay_ms: 1_000,
        };
        let d: Vec<_> = p.delays().collect();
        assert_eq!(d.len(), 10);
        assert!(d.windows(2).all(|w| w[0] <= w[1]));
        assert_eq!(d[0], Duration::from_millis(100));
        assert_eq!(d[9], Duration::from_millis(1_000));
    }

    #[test]
    fn never_exceeds_max_retries() {
        let p = RetryPolicy {
            max_retries: 3,
            base_delay_ms: 1,
            max_delay_ms: 10,
        };
        let mut calls = 0;
        let mut slept = Vec::new();
        let r: Result<(), _> = p.run_with(
            || {
                calls += 1;
                Err(BackendError::Timeout("x".into()))
            },
            |d| slept.push(d),
        );
        assert!(matches!(r, Err(BackendError::Timeout(_))));
        assert_eq!(calls, 4);
        assert_eq!(slept.len(), 3);
        assert!(slept.windows(2).all(|w| w[0] <= w[1]));
    }

    #[test]
    fn permanent_errors_are_not_retried() {
        let p = RetryPolicy::default();
        let mut calls = 0;
        let r: Result<(), _> = p.run_with(
            || {
                calls += 1;
                Err(BackendError::BadStatus {
                    status: 404,
                    detail: "nope".into(),
                })
            },
            |_| {},
        );
        assert!(r.is_err());
        assert_eq!(calls, 1);
    }
}
