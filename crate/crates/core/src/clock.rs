//! Wall-clock source. Mock runs pin it so run directories stay byte-identical.

use std::time::{SystemTime, UNIX_EPOCH};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Clock {
    #[default]
    System,
    /// Always reports this many seconds since the Unix epoch.
    Fixed(u64),
}

impl Clock {
    pub fn now_unix(&self) -> u64 {
        match self {
            Clock::System => SystemTime::now()
                .duration_since(UNIX_EPOCH)
                .map(|d| d.as_secs())
                .unwrap_or(0),
            Clock::Fixed(t) => *t,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fixed_clock_is_fixed() {
        assert_eq!(Clock::Fixed(7).now_unix(), 7);
        assert!(Clock::System.now_unix() > 1_600_000_000);
    }
}
