//! Sliding-window rate limiter with an injectable clock so the budget can
//! be verified under a mock clock.

use std::collections::VecDeque;
use std::sync::Mutex;
use std::time::Duration;

/// Time source abstraction. `now` is elapsed time since an arbitrary epoch.
pub trait Clock: Send + Sync {
    fn now(&self) -> Duration;
    fn sleep(&self, duration: Duration);
}

/// Wall-clock implementation.
pub struct SystemClock {
    start: std::time::Instant,
}

impl SystemClock {
    pub fn new() -> Self {
        SystemClock {
            start: std::time::Instant::now(),
        }
    }
}

impl Default for SystemClock {
    fn default() -> Self {
        Self::new()
    }
}

impl Clock for SystemClock {
    fn now(&self) -> Duration {
        self.start.elapsed()
    }

    fn sleep(&self, duration: Duration) {
        std::thread::sleep(duration);
    }
}

/// Never admits more than `max_per_second` acquisitions within any sliding
/// one-second window.
pub struct RateLimiter<C: Clock> {
    clock: C,
    max_per_second: usize,
    window: Mutex<VecDeque<Duration>>,
}

const WINDOW: Duration = Duration::from_secs(1);

impl<C: Clock> RateLimiter<C> {
    pub fn new(max_per_second: usize, clock: C) -> Self {
        assert!(max_per_second > 0);
        RateLimiter {
            clock,
            max_per_second,
            window: Mutex::new(VecDeque::new()),
        }
    }

    /// Block until a request slot is available, then claim it.
    pub fn acquire(&self) {
        loop {
            let wait = {
                let mut window = self.window.lock().unwrap();
                let now = self.clock.now();
                while let Some(&front) = window.front() {
                    if now.saturating_sub(front) >= WINDOW {
                        window.pop_front();
                    } else {
                        break;
                    }
                }
                if window.len() < self.max_per_second {
                    window.push_back(now);
                    return;
                }
                WINDOW - now.saturating_sub(*window.front().unwrap())
            };
            self.clock.sleep(wait);
        }
    }

    pub fn clock(&self) -> &C {
        &self.clock
    }
}

pub mod testing {
    use super::*;
    use std::sync::atomic::{AtomicU64, Ordering};

    /// Deterministic clock where `sleep` advances time instantly.
    pub struct MockClock {
        nanos: AtomicU64,
    }

    impl MockClock {
        pub fn new() -> Self {
            MockClock {
                nanos: AtomicU64::new(0),
            }
        }
    }

    impl Default for MockClock {
        fn default() -> Self {
            Self::new()
        }
    }

    impl Clock for MockClock {
        fn now(&self) -> Duration {
            Duration::from_nanos(self.nanos.load(Ordering::SeqCst))
        }

        fn sleep(&self, duration: Duration) {
            self.nanos
                .fetch_add(duration.as_nanos() as u64, Ordering::SeqCst);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::testing::MockClock;
    use super::*;

    #[test]
    fn limiter_never_exceeds_budget_in_any_window() {
        let limiter = RateLimiter::new(10, MockClock::new());
        let mut timestamps = Vec::new();
        for _ in 0..300 {
            limiter.acquire();
            timestamps.push(limiter.clock().now());
        }
        for (i, &start) in timestamps.iter().enumerate() {
            let in_window = timestamps[i..]
                .iter()
                .take_while(|&&t| t - start < WINDOW)
                .count();
            assert!(in_window <= 10, "window starting at {start:?} saw {in_window}");
        }
    }

    #[test]
    fn limiter_admits_burst_up_to_budget() {
        let limiter = RateLimiter::new(5, MockClock::new());
        for _ in 0..5 {
            limiter.acquire();
        }
        assert_eq!(limiter.clock().now(), Duration::ZERO);
        limiter.acquire();
        assert!(limiter.clock().now() >= WINDOW);
    }
}
