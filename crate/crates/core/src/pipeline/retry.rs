use std::time::Duration;

use super::BackendError;

/// Exponential backoff: attempt `k` (from 0) waits `base * 2^(k-1)` before
/// running, so three attempts wait 0, `base`, `2 * base`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RetryPolicy {
    pub attempts: u32,
    pub base: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy { attempts: 3, base: Duration::from_millis(500) }
    }
}

/// Outcome of one attempt.
pub(crate) enum Attempt<T> {
    Done(T),
    /// Transient failure (connection, timeout, 5xx, 429).
    Retry(String),
    Fatal(BackendError),
}

impl RetryPolicy {
    pub fn delay(&self, attempt: u32) -> Duration {
        if attempt == 0 {
            Duration::ZERO
        } else {
            self.base.saturating_mul(1 << (attempt - 1).min(20))
        }
    }

    pub(crate) fn run<T>(&self, what: &str, mut f: impl FnMut() -> Attempt<T>) -> Result<T, BackendError> {
        let attempts = self.attempts.max(1);
        let mut last = String::new();
        for k in 0..attempts {
            std::thread::sleep(self.delay(k));
            match f() {
                Attempt::Done(v) => return Ok(v),
                Attempt::Fatal(e) => return Err(e),
                Attempt::Retry(msg) => {
                    tracing::warn!(backend = what, attempt = k + 1, error = %msg, "retrying");
                    last = msg;
                }
            }
        }
        Err(BackendError::Unavailable(format!("{what}: {last} (after {attempts} attempts)")))
    }
}
