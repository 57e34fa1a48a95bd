//! Probabilistic search satisfaction and the latching three-channel trigger.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ppc::{PerformanceCurve, SIGMA_FLOOR};
use crate::sdt;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SatisfactionConfig {
    /// Tolerance on the distance to asymptotic PC.
    pub epsilon: f64,
    /// The satisfaction probability must exceed this bar.
    pub eta: f64,
    pub sigma_floor: f64,
}

impl Default for SatisfactionConfig {
    fn default() -> Self {
        Self { epsilon: 0.02, eta: 0.025, sigma_floor: SIGMA_FLOOR }
    }
}

impl SatisfactionConfig {
    pub fn new(epsilon: f64, eta: f64, sigma_floor: f64) -> Result<Self> {
        let cfg = Self { epsilon, eta, sigma_floor };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon > 0.0 && self.eta > 0.0 && self.eta < 1.0 && self.sigma_floor > 0.0) {
            return Err(Error::InvalidInput(format!("invalid satisfaction config {self:?}")));
        }
        Ok(())
    }
}

/// `Pr[(pc_max - pc) < epsilon] = 1 - Phi((pc_max - pc - epsilon) / sigma)`.
pub fn satisfaction_probability(pc_max: f64, pc: f64, sigma: f64, epsilon: f64) -> f64 {
    sdt::normal_cdf((pc - pc_max + epsilon) / sigma)
}

/// Points scanned across the fitted domain before bisection.
pub const SCAN_POINTS: usize = 1024;
/// Relative width at which bisection stops.
pub const BISECTION_TOL: f64 = 1e-3;

fn satisfied<C: PerformanceCurve + ?Sized>(curve: &C, cfg: &SatisfactionConfig, x: f64) -> bool {
    let sigma = curve.sigma(x).max(cfg.sigma_floor);
    satisfaction_probability(curve.pc_max(), curve.pc(x), sigma, cfg.epsilon) > cfg.eta
}

/// Smallest argument at which the channel is satisfied: a scan of
/// [`SCAN_POINTS`] points over the fitted domain refined by bisection to
/// [`BISECTION_TOL`] relative width. The returned point is always on the
/// satisfied side.
pub fn channel_threshold<C: PerformanceCurve + ?Sized>(curve: &C, cfg: &SatisfactionConfig) -> Result<f64> {
    cfg.validate()?;
    let domain_max = curve.domain_max();
    if !(domain_max > 0.0 && domain_max.is_finite()) {
        return Err(Error::InvalidInput(format!("curve domain [0, {domain_max}] is empty")));
    }
    if satisfied(curve, cfg, 0.0) {
        return Ok(0.0);
    }
    let step = domain_max / (SCAN_POINTS - 1) as f64;
    let first = (1..SCAN_POINTS)
        .find(|&i| satisfied(curve, cfg, i as f64 * step))
        .ok_or(Error::Unattainable { domain_max })?;
    let mut lo = (first - 1) as f64 * step;
    let mut hi = if first == SCAN_POINTS - 1 { domain_max } else { first as f64 * step };
    while hi - lo > BISECTION_TOL * hi {
        let mid = 0.5 * (lo + hi);
        if satisfied(curve, cfg, mid) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(hi)
}

/// Per-setting threshold table.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChannelThresholds {
    pub t_star: f64,
    pub e_star: f64,
    pub d_star: f64,
}

impl ChannelThresholds {
    pub fn from_curves(
        time: &dyn PerformanceCurve,
        eye: &dyn PerformanceCurve,
        detect: &dyn PerformanceCurve,
        cfg: &SatisfactionConfig,
    ) -> Result<Self> {
        Ok(Self {
            t_star: channel_threshold(time, cfg)?,
            e_star: channel_threshold(eye, cfg)?,
            d_star: channel_threshold(detect, cfg)?,
        })
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct TriggerTimes {
    pub time: Option<f64>,
    pub eye_movements: Option<f64>,
    pub detectability: Option<f64>,
    pub general: Option<f64>,
}

/// Latching satisfaction flags for one trial.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct TriggerState {
    pub time_ok: bool,
    pub eyemvmt_ok: bool,
    pub detect_ok: bool,
    pub general_ok: bool,
    pub trigger_times: TriggerTimes,
    last_now_ms: Option<f64>,
}

impl TriggerState {
    pub fn new() -> Self {
        Self::default()
    }

    fn advance(&mut self, now_ms: f64) -> Result<()> {
        if !now_ms.is_finite() {
            return Err(Error::InvalidInput(format!("timestamp {now_ms} not finite")));
        }
        if let Some(last_ms) = self.last_now_ms {
            if now_ms < last_ms {
                return Err(Error::NonMonotonicTime { last_ms, now_ms });
            }
        }
        self.last_now_ms = Some(now_ms);
        Ok(())
    }

    fn settle(&mut self, now_ms: f64) {
        if !self.general_ok && self.time_ok && self.eyemvmt_ok && self.detect_ok {
            self.general_ok = true;
            let t = &self.trigger_times;
            // The last channel to fire is the one that fired now.
            let latest = [t.time, t.eye_movements, t.detectability]
                .into_iter()
                .flatten()
                .fold(f64::NEG_INFINITY, f64::max);
            debug_assert!(latest <= now_ms);
            self.trigger_times.general = Some(latest);
        }
    }

    pub fn update_time(&mut self, now_ms: f64, elapsed_ms: f64, thr: &ChannelThresholds) -> Result<()> {
        self.advance(now_ms)?;
        if !self.time_ok && elapsed_ms >= thr.t_star {
            self.time_ok = true;
            self.trigger_times.time = Some(now_ms);
        }
        self.settle(now_ms);
        Ok(())
    }

    pub fn update_eye_movements(&mut self, now_ms: f64, count: u32, thr: &ChannelThresholds) -> Result<()> {
        self.advance(now_ms)?;
        if !self.eyemvmt_ok && count as f64 >= thr.e_star {
            self.eyemvmt_ok = true;
            self.trigger_times.eye_movements = Some(now_ms);
        }
        self.settle(now_ms);
        Ok(())
    }

    pub fn update_detectability(&mut self, now_ms: f64, d_score: f64, thr: &ChannelThresholds) -> Result<()> {
        self.advance(now_ms)?;
        if !self.detect_ok && d_score >= thr.d_star {
            self.detect_ok = true;
            self.trigger_times.detectability = Some(now_ms);
        }
        self.settle(now_ms);
        Ok(())
    }
}

/// Evaluate all three channels at `now_ms`, treating `now_ms` as elapsed
/// search time.
pub fn update_trigger(
    state: TriggerState,
    now_ms: f64,
    eyemvmts: u32,
    d_score: f64,
    thr: &ChannelThresholds,
) -> Result<TriggerState> {
    let mut next = state;
    next.update_time(now_ms, now_ms, thr)?;
    next.update_eye_movements(now_ms, eyemvmts, thr)?;
    next.update_detectability(now_ms, d_score, thr)?;
    Ok(next)
}
