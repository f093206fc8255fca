//! Time intervals in seconds.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::IntervalError;

/// A closed `[start, end]` span of a video, in seconds.
///
/// Constructed through [`TimeInterval::new`], which enforces
/// `0 <= start <= end` with both endpoints finite. Degenerate point
/// intervals (`start == end`) are representable; whether they are usable
/// depends on the consumer (ground truth must have positive length).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "[f64; 2]", into = "[f64; 2]")]
pub struct TimeInterval {
    start: f64,
    end: f64,
}

impl TimeInterval {
    pub fn new(start: f64, end: f64) -> Result<Self, IntervalError> {
        if !start.is_finite() || !end.is_finite() {
            return Err(IntervalError::NonFinite);
        }
        if start < 0.0 {
            return Err(IntervalError::Negative { start });
        }
        if end < start {
            return Err(IntervalError::Reversed { start, end });
        }
        Ok(Self { start, end })
    }

    #[inline]
    pub fn start(&self) -> f64 {
        self.start
    }

    #[inline]
    pub fn end(&self) -> f64 {
        self.end
    }

    #[inline]
    pub fn length(&self) -> f64 {
        self.end - self.start
    }

    /// Whether `self` lies inside `[0, duration]`.
    pub fn within(&self, duration: f64) -> bool {
        self.end <= duration
    }
}

impl TryFrom<[f64; 2]> for TimeInterval {
    type Error = IntervalError;

    fn try_from(value: [f64; 2]) -> Result<Self, Self::Error> {
        TimeInterval::new(value[0], value[1])
    }
}

impl From<TimeInterval> for [f64; 2] {
    fn from(value: TimeInterval) -> Self {
        [value.start, value.end]
    }
}

impl fmt::Display for TimeInterval {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}s to {}s",
            format_seconds(self.start),
            format_seconds(self.end)
        )
    }
}

/// Renders seconds with the shortest representation that parses back to the
/// same `f64`, always carrying at least one decimal place.
pub(crate) fn format_seconds(value: f64) -> String {
    let mut text = format!("{value}");
    if !text.contains('.') {
        text.push_str(".0");
    }
    text
}
