//! Retry with exponential backoff for idempotent HTTP requests.

use std::thread;
use std::time::Duration;

use log::debug;
use rand::Rng;
use reqwest::blocking::{RequestBuilder, Response};
use serde::Deserialize;

/// When and how often a failed request is re-issued.
///
/// Only server errors (5xx), timeouts and connection failures are retried.
/// Client errors (4xx) are returned to the caller on the first attempt.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RetryPolicy {
    pub max_attempts: u32,
    pub base_delay: Duration,
    pub jitter: bool,
}

impl RetryPolicy {
    /// Source listing and fetch: 3 attempts, backoff from 500 ms.
    pub fn source_default() -> Self {
        Self {
            max_attempts: 3,
            base_delay: Duration::from_millis(500),
            jitter: false,
        }
    }

    /// Hub traffic: 5 attempts, backoff from 500 ms with jitter.
    pub fn hub_default() -> Self {
        Self {
            max_attempts: 5,
            base_delay: Duration::from_millis(500),
            jitter: true,
        }
    }

    pub fn with_base_delay(mut self, base_delay: Duration) -> Self {
        self.base_delay = base_delay;
        self
    }

    /// Delay before attempt `attempt + 1`, where `attempt` counts from 1.
    pub fn delay_after(&self, attempt: u32) -> Duration {
        let exp = self
            .base_delay
            .saturating_mul(1u32 << (attempt.saturating_sub(1)).min(16));
        if self.jitter && !exp.is_zero() {
            let extra = rand::rng().random_range(0..=exp.as_micros() as u64 / 2);
            exp + Duration::from_micros(extra)
        } else {
            exp
        }
    }

    /// Send the request built by `make`, re-building it for each attempt.
    ///
    /// Returns the last response even when it is a 5xx, so the caller can
    /// report the status; transport errors are returned once attempts run out.
    pub fn send<F>(&self, mut make: F) -> Result<Response, reqwest::Error>
    where
        F: FnMut() -> RequestBuilder,
    {
        let attempts = self.max_attempts.max(1);
        let mut attempt = 1;
        loop {
            let result = make().send();
            let retryable = match &result {
                Ok(resp) => resp.status().is_server_error(),
                Err(err) => err.is_timeout() || err.is_connect(),
            };
            if !retryable || attempt >= attempts {
                return result;
            }
            let delay = self.delay_after(attempt);
            match &result {
                Ok(resp) => debug!("retrying after status {} in {:?}", resp.status(), delay),
                Err(err) => debug!("retrying after transport error {err} in {:?}", delay),
            }
            thread::sleep(delay);
            attempt += 1;
        }
    }
}

/// Millisecond overrides for the retry base delays, as read from config.
#[derive(Clone, Debug, Default, Deserialize, PartialEq, Eq)]
#[serde(deny_unknown_fields)]
pub struct RetryOverrides {
    pub source_base_delay_ms: Option<u64>,
    pub hub_base_delay_ms: Option<u64>,
    pub hub_max_attempts: Option<u32>,
}

impl RetryOverrides {
    pub fn source_policy(&self) -> RetryPolicy {
        let mut policy = RetryPolicy::source_default();
        if let Some(ms) = self.source_base_delay_ms {
            policy.base_delay = Duration::from_millis(ms);
        }
        policy
    }

    pub fn hub_policy(&self) -> RetryPolicy {
        let mut policy = RetryPolicy::hub_default();
        if let Some(ms) = self.hub_base_delay_ms {
            policy.base_delay = Duration::from_millis(ms);
        }
        if let Some(n) = self.hub_max_attempts {
            policy.max_attempts = n.max(1);
        }
        policy
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn backoff_doubles_without_jitter() {
        let p = RetryPolicy::source_default();
        assert_eq!(p.delay_after(1), Duration::from_millis(500));
        assert_eq!(p.delay_after(2), Duration::from_millis(1000));
        assert_eq!(p.delay_after(3), Duration::from_millis(2000));
    }

    #[test]
    fn jitter_stays_within_half_of_step() {
        let p = RetryPolicy::hub_default();
        for attempt in 1..5 {
            let base = Duration::from_millis(500) * (1 << (attempt - 1));
            let d = p.delay_after(attempt);
            assert!(d >= base && d <= base + base / 2, "{d:?}");
        }
    }

    #[test]
    fn defaults_match_documented_attempts() {
        assert_eq!(RetryPolicy::source_default().max_attempts, 3);
        assert_eq!(RetryPolicy::hub_default().max_attempts, 5);
    }
}
