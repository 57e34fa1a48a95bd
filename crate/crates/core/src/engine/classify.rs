//! Streaming velocity/acceleration saccade classifier.
//!
//! Velocity and acceleration are central differences over a five-sample
//! window of the gaze position in degrees, so a sample is classified four
//! samples after it arrives. A saccade starts when speed exceeds the
//! velocity threshold while acceleration magnitude exceeds the acceleration
//! threshold, and ends when both are back below.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::surface::Fixation;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GazeSample {
    pub t_ms: f64,
    pub x_px: f64,
    pub y_px: f64,
    pub valid: bool,
}

impl GazeSample {
    pub fn new(t_ms: f64, x_px: f64, y_px: f64) -> Self {
        Self { t_ms, x_px, y_px, valid: true }
    }

    pub fn invalid(t_ms: f64) -> Self {
        Self { t_ms, x_px: 0.0, y_px: 0.0, valid: false }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum OculomotorEvent {
    FixationEnd { t_ms: f64, fixation: Fixation },
    SaccadeOnset { t_ms: f64 },
    SaccadeOffset { t_ms: f64 },
}

impl OculomotorEvent {
    pub fn t_ms(&self) -> f64 {
        match *self {
            OculomotorEvent::FixationEnd { t_ms, .. }
            | OculomotorEvent::SaccadeOnset { t_ms }
            | OculomotorEvent::SaccadeOffset { t_ms } => t_ms,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassifierConfig {
    pub deg_per_px: f64,
    pub velocity_deg_s: f64,
    pub acceleration_deg_s2: f64,
    /// Track-loss gaps up to this length are bridged; longer gaps pause the
    /// fixation clock.
    pub max_gap_ms: f64,
}

impl Default for ClassifierConfig {
    fn default() -> Self {
        Self { deg_per_px: 0.022, velocity_deg_s: 22.0, acceleration_deg_s2: 4000.0, max_gap_ms: 50.0 }
    }
}

#[derive(Debug, Clone, Copy)]
struct Point {
    t: f64,
    x: f64,
    y: f64,
}

#[derive(Debug, Clone)]
struct OpenFixation {
    start_ms: f64,
    paused_ms: f64,
    sum_x: f64,
    sum_y: f64,
    n: u64,
}

impl OpenFixation {
    fn new(start_ms: f64) -> Self {
        Self { start_ms, paused_ms: 0.0, sum_x: 0.0, sum_y: 0.0, n: 0 }
    }
}

const HALF: usize = 2;

#[derive(Debug, Clone)]
pub struct SaccadeClassifier {
    cfg: ClassifierConfig,
    last_t: Option<f64>,
    last_valid: Option<Point>,
    /// Positions (px) of the last `2 * HALF + 1 + 2 * HALF` valid samples.
    window: VecDeque<Point>,
    /// Speeds for window entries that have a full neighbourhood.
    speeds: VecDeque<(f64, f64)>,
    /// Trailing window entries not yet classified.
    unclassified: usize,
    in_saccade: bool,
    fixation: Option<OpenFixation>,
    fallback_px: (f64, f64),
}

impl SaccadeClassifier {
    /// A classifier whose first fixation starts at `start_ms`, falling back
    /// to `origin_px` as its position if no valid sample lands in it.
    pub fn new(cfg: ClassifierConfig, start_ms: f64, origin_px: (f64, f64)) -> Self {
        Self {
            cfg,
            last_t: None,
            last_valid: None,
            window: VecDeque::with_capacity(4 * HALF + 2),
            speeds: VecDeque::with_capacity(2 * HALF + 2),
            unclassified: 0,
            in_saccade: false,
            fixation: Some(OpenFixation::new(start_ms)),
            fallback_px: origin_px,
        }
    }

    pub fn in_saccade(&self) -> bool {
        self.in_saccade
    }

    /// Feed one sample, appending any events it completes to `out`.
    pub fn push(&mut self, s: GazeSample, out: &mut Vec<OculomotorEvent>) -> Result<()> {
        if !s.t_ms.is_finite() {
            return Err(Error::InvalidInput(format!("gaze timestamp {} not finite", s.t_ms)));
        }
        if let Some(last_ms) = self.last_t {
            if s.t_ms <= last_ms {
                return Err(Error::NonMonotonicTime { last_ms, now_ms: s.t_ms });
            }
        }
        self.last_t = Some(s.t_ms);
        if !s.valid {
            return Ok(());
        }
        if !(s.x_px.is_finite() && s.y_px.is_finite()) {
            return Err(Error::InvalidInput(format!("gaze position ({}, {}) not finite", s.x_px, s.y_px)));
        }
        let p = Point { t: s.t_ms, x: s.x_px, y: s.y_px };
        if let Some(prev) = self.last_valid {
            let gap = p.t - prev.t;
            if gap > self.cfg.max_gap_ms {
                self.flush();
                if self.in_saccade {
                    self.in_saccade = false;
                    out.push(OculomotorEvent::SaccadeOffset { t_ms: prev.t });
                    self.fixation = Some(OpenFixation::new(p.t));
                } else if let Some(f) = self.fixation.as_mut() {
                    f.paused_ms += gap;
                }
            }
        }
        self.last_valid = Some(p);
        self.window.push_back(p);
        self.unclassified += 1;
        self.step(out);
        Ok(())
    }

    fn speed_at(&self, i: usize) -> f64 {
        let (a, b) = (self.window[i - HALF], self.window[i + HALF]);
        let dist_px = (b.x - a.x).hypot(b.y - a.y);
        dist_px * self.cfg.deg_per_px / ((b.t - a.t) / 1000.0)
    }

    fn step(&mut self, out: &mut Vec<OculomotorEvent>) {
        let n = self.window.len();
        if n < 2 * HALF + 1 {
            return;
        }
        // Newest sample with a full position neighbourhood.
        let i = n - 1 - HALF;
        let v = self.speed_at(i);
        self.speeds.push_back((self.window[i].t, v));
        if self.speeds.len() < 2 * HALF + 1 {
            return;
        }
        let (t_before, v_before) = self.speeds[0];
        let (t_after, v_after) = self.speeds[2 * HALF];
        let (t_mid, v_mid) = self.speeds[HALF];
        let accel = (v_after - v_before) / ((t_after - t_before) / 1000.0);
        let sample = self.window[n - 1 - 2 * HALF];
        debug_assert_eq!(sample.t, t_mid);
        self.classify(sample, v_mid, accel.abs(), out);
        self.unclassified -= 1;
        self.speeds.pop_front();
        self.window.pop_front();
    }

    fn classify(&mut self, p: Point, v: f64, a: f64, out: &mut Vec<OculomotorEvent>) {
        let fast = v > self.cfg.velocity_deg_s && a > self.cfg.acceleration_deg_s2;
        let calm = v < self.cfg.velocity_deg_s && a < self.cfg.acceleration_deg_s2;
        if !self.in_saccade && fast {
            self.close_fixation(p.t, out);
            self.in_saccade = true;
            out.push(OculomotorEvent::SaccadeOnset { t_ms: p.t });
        } else if self.in_saccade && calm {
            self.in_saccade = false;
            out.push(OculomotorEvent::SaccadeOffset { t_ms: p.t });
            self.fixation = Some(OpenFixation::new(p.t));
            self.add_to_fixation(p);
        } else if !self.in_saccade {
            self.add_to_fixation(p);
        }
    }

    fn add_to_fixation(&mut self, p: Point) {
        if let Some(f) = self.fixation.as_mut() {
            f.sum_x += p.x;
            f.sum_y += p.y;
            f.n += 1;
            self.fallback_px = (p.x, p.y);
        }
    }

    fn close_fixation(&mut self, end_ms: f64, out: &mut Vec<OculomotorEvent>) {
        if let Some(f) = self.fixation.take() {
            let duration_ms = end_ms - f.start_ms - f.paused_ms;
            if duration_ms > 0.0 {
                let (x, y) = if f.n > 0 {
                    (f.sum_x / f.n as f64, f.sum_y / f.n as f64)
                } else {
                    self.fallback_px
                };
                out.push(OculomotorEvent::FixationEnd { t_ms: end_ms, fixation: Fixation::new(x, y, duration_ms) });
            }
        }
    }

    /// Samples that never got a full neighbourhood inherit the current
    /// state.
    fn flush(&mut self) {
        let start = self.window.len() - self.unclassified;
        if !self.in_saccade {
            let pending: Vec<Point> = self.window.iter().skip(start).copied().collect();
            for p in pending {
                self.add_to_fixation(p);
            }
        }
        self.window.clear();
        self.speeds.clear();
        self.unclassified = 0;
    }

    /// Close the stream at `end_ms`, emitting the open fixation if any.
    pub fn finish(mut self, end_ms: f64) -> Vec<OculomotorEvent> {
        let mut out = Vec::new();
        self.flush();
        if self.in_saccade {
            out.push(OculomotorEvent::SaccadeOffset { t_ms: end_ms });
        } else {
            self.close_fixation(end_ms, &mut out);
        }
        out
    }
}

/// Classify a complete gaze stream; the trailing open fixation is closed at
/// the last sample.
pub fn classify_oculomotor(stream: &[GazeSample], cfg: ClassifierConfig) -> Result<Vec<OculomotorEvent>> {
    let Some(first) = stream.first() else {
        return Ok(Vec::new());
    };
    let origin = stream.iter().find(|s| s.valid).map(|s| (s.x_px, s.y_px)).unwrap_or((0.0, 0.0));
    let mut c = SaccadeClassifier::new(cfg, first.t_ms, origin);
    let mut out = Vec::new();
    for s in stream {
        c.push(*s, &mut out)?;
    }
    let end = stream.last().map(|s| s.t_ms).unwrap_or(first.t_ms);
    out.extend(c.finish(end));
    Ok(out)
}
