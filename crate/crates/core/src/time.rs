//! Integer-microsecond simulation time.

use std::fmt;

pub const US_PER_S: u64 = 1_000_000;

/// Rounds non-negative seconds to whole microseconds.
pub fn seconds_to_us(s: f64) -> u64 {
    if s <= 0.0 || !s.is_finite() {
        0
    } else {
        (s * US_PER_S as f64).round() as u64
    }
}

pub fn us_to_seconds(us: u64) -> f64 {
    us as f64 / US_PER_S as f64
}

/// Shared simulation clock. `now_us` is always a multiple of `step_us`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SimClock {
    now_us: u64,
    step_us: u32,
}

impl SimClock {
    /// Panics if `step_us` is zero.
    pub fn new(step_us: u32) -> Self {
        assert!(step_us > 0, "step length must be positive");
        Self { now_us: 0, step_us }
    }

    pub fn now_us(&self) -> u64 {
        self.now_us
    }

    pub fn step_us(&self) -> u32 {
        self.step_us
    }

    pub fn now_s(&self) -> f64 {
        us_to_seconds(self.now_us)
    }

    pub fn step_s(&self) -> f64 {
        us_to_seconds(u64::from(self.step_us))
    }

    /// Number of completed steps.
    pub fn step_index(&self) -> u64 {
        self.now_us / u64::from(self.step_us)
    }

    pub fn next_us(&self) -> u64 {
        self.now_us + u64::from(self.step_us)
    }

    pub fn advance(&mut self) {
        self.now_us += u64::from(self.step_us);
    }
}

/// Exact decimal rendering of a microsecond timestamp, e.g. `5.100000`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Seconds(pub u64);

impl fmt::Display for Seconds {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}.{:06}", self.0 / US_PER_S, self.0 % US_PER_S)
    }
}
