//! Timestamped frequency/voltage measurements from a single monitor.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Slack applied to window edges so decimal timestamps such as `0.1 * k`
/// land on the intended side of a boundary.
pub const TIME_EPS: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimedSample {
    /// Seconds since the stream epoch.
    pub t: f64,
    /// Frequency in Hz.
    pub f: f64,
    /// Voltage magnitude in per-unit; some monitors do not report it.
    pub v: Option<f64>,
}

impl TimedSample {
    pub fn new(t: f64, f: f64, v: Option<f64>) -> Self {
        Self { t, f, v }
    }
}

/// Samples from one monitor, strictly increasing in time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensorStream {
    monitor_id: String,
    samples: Vec<TimedSample>,
}

impl SensorStream {
    pub fn new(monitor_id: impl Into<String>, samples: Vec<TimedSample>) -> Result<Self> {
        for (index, s) in samples.iter().enumerate() {
            if !s.t.is_finite() {
                return Err(Error::NonFiniteTime { index });
            }
            if index > 0 && s.t <= samples[index - 1].t {
                return Err(Error::NonMonotonicTime { index });
            }
        }
        Ok(Self {
            monitor_id: monitor_id.into(),
            samples,
        })
    }

    pub fn monitor_id(&self) -> &str {
        &self.monitor_id
    }

    pub fn samples(&self) -> &[TimedSample] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// True when at least one sample carries a voltage reading.
    pub fn has_voltage(&self) -> bool {
        self.samples.iter().any(|s| s.v.is_some())
    }

    pub fn first_t(&self) -> Option<f64> {
        self.samples.first().map(|s| s.t)
    }

    pub fn last_t(&self) -> Option<f64> {
        self.samples.last().map(|s| s.t)
    }

    /// Appends samples that must continue the strictly increasing time axis.
    pub fn extend(&mut self, more: impl IntoIterator<Item = TimedSample>) -> Result<()> {
        for s in more {
            let index = self.samples.len();
            if !s.t.is_finite() {
                return Err(Error::NonFiniteTime { index });
            }
            if matches!(self.samples.last(), Some(prev) if s.t <= prev.t) {
                return Err(Error::NonMonotonicTime { index });
            }
            self.samples.push(s);
        }
        Ok(())
    }

    /// The contiguous run of samples falling inside `window`.
    pub fn select(&self, window: &Window) -> &[TimedSample] {
        let (lo, hi) = window.index_range(&self.samples);
        &self.samples[lo..hi]
    }

    /// Samples in the closed interval `[from, to]`.
    pub fn select_closed(&self, from: f64, to: f64) -> &[TimedSample] {
        let lo = self.samples.partition_point(|s| s.t < from - TIME_EPS);
        let hi = self.samples.partition_point(|s| s.t <= to + TIME_EPS);
        &self.samples[lo..hi.max(lo)]
    }

    /// Index of the first sample with `t >= at`.
    pub fn index_at_or_after(&self, at: f64) -> usize {
        self.samples.partition_point(|s| s.t < at - TIME_EPS)
    }

    /// Returns a copy with every timestamp shifted by `dt` seconds.
    pub fn shifted(&self, dt: f64) -> Self {
        Self {
            monitor_id: self.monitor_id.clone(),
            samples: self
                .samples
                .iter()
                .map(|s| TimedSample { t: s.t + dt, ..*s })
                .collect(),
        }
    }
}

/// Which end of a [`Window`] is closed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum Closed {
    /// `start <= t < start + length`
    #[default]
    Left,
    /// `start < t <= start + length`
    Right,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Window {
    pub start: f64,
    pub length: f64,
    #[serde(default)]
    pub closed: Closed,
}

impl Window {
    /// Half-open window `[start, start + length)`.
    pub fn new(start: f64, length: f64) -> Self {
        debug_assert!(length > 0.0, "window length must be positive");
        Self {
            start,
            length,
            closed: Closed::Left,
        }
    }

    /// Window `(start, start + length]`.
    pub fn right_closed(start: f64, length: f64) -> Self {
        Self {
            closed: Closed::Right,
            ..Self::new(start, length)
        }
    }

    pub fn end(&self) -> f64 {
        self.start + self.length
    }

    pub fn contains(&self, t: f64) -> bool {
        match self.closed {
            Closed::Left => t >= self.start - TIME_EPS && t < self.end() - TIME_EPS,
            Closed::Right => t > self.start + TIME_EPS && t <= self.end() + TIME_EPS,
        }
    }

    fn index_range(&self, samples: &[TimedSample]) -> (usize, usize) {
        let (lo, hi) = match self.closed {
            Closed::Left => (
                samples.partition_point(|s| s.t < self.start - TIME_EPS),
                samples.partition_point(|s| s.t < self.end() - TIME_EPS),
            ),
            Closed::Right => (
                samples.partition_point(|s| s.t <= self.start + TIME_EPS),
                samples.partition_point(|s| s.t <= self.end() + TIME_EPS),
            ),
        };
        (lo, hi.max(lo))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ramp(n: usize, rate: f64) -> SensorStream {
        let samples = (0..n)
            .map(|k| TimedSample::new(k as f64 / rate, 60.0, Some(1.0)))
            .collect();
        SensorStream::new("m", samples).unwrap()
    }

    #[test]
    fn rejects_duplicate_timestamp() {
        let s = vec![
            TimedSample::new(0.0, 60.0, None),
            TimedSample::new(0.1, 60.0, None),
            TimedSample::new(0.1, 60.0, None),
        ];
        assert_eq!(
            SensorStream::new("m", s).unwrap_err(),
            Error::NonMonotonicTime { index: 2 }
        );
    }

    #[test]
    fn half_open_selection_at_decimal_edges() {
        let s = ramp(50, 10.0);
        // [0, 1) at 10 samples/s is exactly ten samples despite 0.1 * k rounding.
        assert_eq!(s.select(&Window::new(0.0, 1.0)).len(), 10);
        assert_eq!(s.select(&Window::new(0.3, 0.3)).len(), 3);
        let right = s.select(&Window::right_closed(0.3, 0.3));
        assert_eq!(right.len(), 3);
        assert!((right[0].t - 0.4).abs() < 1e-12);
        assert!((right[2].t - 0.6).abs() < 1e-12);
    }

    #[test]
    fn window_outside_stream_is_empty() {
        let s = ramp(10, 10.0);
        assert!(s.select(&Window::new(5.0, 1.0)).is_empty());
        assert!(s.select(&Window::new(-5.0, 1.0)).is_empty());
    }

    #[test]
    fn extend_keeps_ordering() {
        let mut s = ramp(3, 10.0);
        assert!(s.extend([TimedSample::new(0.2, 60.0, None)]).is_err());
        s.extend([TimedSample::new(0.3, 60.0, None)]).unwrap();
        assert_eq!(s.len(), 4);
    }
}
