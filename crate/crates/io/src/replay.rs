//! Deterministic replay of `aaad-log/1` sessions through the engine.

use std::sync::Arc;
use std::time::{Duration, Instant};

use aaad_core::bundle::Model;
use aaad_core::engine::{EngineConfig, TrialEngine, TrialReport};
use aaad_core::surface::ClutterMap;
use aaad_core::{Error, Result};

use crate::log::{split_trials, LogRecord};

/// Replay pacing. Logical timestamps are never altered, only the wall-clock
/// spacing between inputs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Speed {
    /// Multiple of real time (`1.0` = as recorded).
    Factor(f64),
    AsFastAsPossible,
}

impl std::str::FromStr for Speed {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s == "max" {
            return Ok(Speed::AsFastAsPossible);
        }
        match s.parse::<f64>() {
            Ok(f) if f > 0.0 && f.is_finite() => Ok(Speed::Factor(f)),
            _ => Err(Error::InvalidInput(format!("speed must be a positive number or `max`, got {s:?}"))),
        }
    }
}

struct Pacer {
    speed: Speed,
    wall0: Instant,
    t0: Option<f64>,
}

impl Pacer {
    fn wait_until(&mut self, t_ms: f64) {
        let Speed::Factor(f) = self.speed else {
            return;
        };
        let t0 = *self.t0.get_or_insert(t_ms);
        let due = Duration::from_secs_f64(((t_ms - t0) / f).max(0.0) / 1000.0);
        let elapsed = self.wall0.elapsed();
        if due > elapsed + Duration::from_millis(1) {
            std::thread::sleep(due - elapsed);
        }
    }
}

/// Replay every trial in a session log; trials cut short by the end of the
/// log yield reports with `complete = false`.
pub fn replay(
    model: &Arc<Model>,
    records: &[LogRecord],
    speed: Speed,
    engine: EngineConfig,
    clutter: Option<Arc<ClutterMap>>,
) -> Result<Vec<TrialReport>> {
    let mut pacer = Pacer { speed, wall0: Instant::now(), t0: None };
    let mut reports = Vec::new();
    for trial in split_trials(records)? {
        let mut e = TrialEngine::new(model.clone(), trial.config, engine)?;
        if let Some(c) = &clutter {
            e = e.with_clutter(c.clone())?;
        }
        pacer.wait_until(e.config().start_ms);
        for input in trial.inputs {
            pacer.wait_until(input.t_ms());
            e.handle(input)?;
        }
        reports.push(e.report());
    }
    Ok(reports)
}
