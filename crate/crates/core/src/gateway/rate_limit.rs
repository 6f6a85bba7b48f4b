use std::collections::VecDeque;
use std::sync::{Arc, Mutex};
use std::time::Duration;

use super::clock::Clock;

const WINDOW: Duration = Duration::from_secs(60);

/// Sliding-window requests-per-minute limiter shared by every caller of a
/// gateway. `None` disables limiting.
pub struct RateLimiter {
    rpm: Option<u32>,
    granted: Mutex<VecDeque<Duration>>,
    clock: Arc<dyn Clock>,
}

impl RateLimiter {
    pub fn new(rpm: Option<u32>, clock: Arc<dyn Clock>) -> Self {
        Self { rpm: rpm.filter(|&r| r > 0), granted: Mutex::new(VecDeque::new()), clock }
    }

    pub fn rpm(&self) -> Option<u32> {
        self.rpm
    }

    /// Block until a request slot is free; returns the grant time.
    pub fn acquire(&self) -> Duration {
        let Some(rpm) = self.rpm else {
            return self.clock.now();
        };
        loop {
            let wait = {
                let mut granted = self.granted.lock().unwrap();
                let now = self.clock.now();
                while granted.front().is_some_and(|&t| now >= t + WINDOW) {
                    granted.pop_front();
                }
                if granted.len() < rpm as usize {
                    granted.push_back(now);
                    return now;
                }
                (granted[0] + WINDOW) - now
            };
            self.clock.sleep(wait);
        }
    }
}
