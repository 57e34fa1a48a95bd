//! The `aaad-log/1` line-delimited session log.
//!
//! Line 1 is the header `{"schema":"aaad-log/1"}`; every further line is one
//! record `{"t_ms":..,"kind":..,...}`. Logs are both what a live session
//! captures and what replay consumes.

use aaad_core::engine::{GazeSample, GroundTruth, KeyCode, RatingStage, TrialConfig, TrialInput};
use aaad_core::{Error, Level, Result, Scene};
use serde::{Deserialize, Serialize};

pub const LOG_SCHEMA: &str = "aaad-log/1";

fn yes() -> bool {
    true
}

fn is_true(v: &bool) -> bool {
    *v
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LogEvent {
    Gaze {
        x_px: f64,
        y_px: f64,
        #[serde(default = "yes", skip_serializing_if = "is_true")]
        valid: bool,
    },
    Key {
        code: KeyCode,
    },
    Tick,
    TrialStart {
        trial_id: String,
        image_id: String,
        zoom: Level,
        clutter: Level,
        aid_visible: bool,
        #[serde(default)]
        person_present: bool,
        #[serde(default)]
        weapon_present: bool,
    },
    TrialEnd,
    Rating {
        stage: RatingStage,
        value: u8,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogRecord {
    pub t_ms: f64,
    #[serde(flatten)]
    pub event: LogEvent,
}

impl LogRecord {
    pub fn new(t_ms: f64, event: LogEvent) -> Self {
        Self { t_ms, event }
    }

    pub fn trial_start(cfg: &TrialConfig) -> Self {
        Self::new(
            cfg.start_ms,
            LogEvent::TrialStart {
                trial_id: cfg.trial_id.clone(),
                image_id: cfg.image_id.clone(),
                zoom: cfg.scene.zoom,
                clutter: cfg.scene.clutter,
                aid_visible: cfg.aid_visible,
                person_present: cfg.ground_truth.person_present,
                weapon_present: cfg.ground_truth.weapon_present,
            },
        )
    }

    /// The engine input this record feeds, if any.
    pub fn input(&self) -> Option<TrialInput> {
        let t_ms = self.t_ms;
        Some(match self.event {
            LogEvent::Gaze { x_px, y_px, valid } => TrialInput::Gaze(GazeSample { t_ms, x_px, y_px, valid }),
            LogEvent::Key { code } => TrialInput::Key { t_ms, code },
            LogEvent::Tick => TrialInput::Tick { t_ms },
            LogEvent::TrialEnd => TrialInput::TrialEnd { t_ms },
            LogEvent::Rating { stage, value } => TrialInput::Rating { t_ms, stage, value },
            LogEvent::TrialStart { .. } => return None,
        })
    }

    /// Inverse of [`LogRecord::input`].
    pub fn from_input(input: &TrialInput) -> Self {
        match *input {
            TrialInput::Gaze(s) => Self::new(s.t_ms, LogEvent::Gaze { x_px: s.x_px, y_px: s.y_px, valid: s.valid }),
            TrialInput::Key { t_ms, code } => Self::new(t_ms, LogEvent::Key { code }),
            TrialInput::Tick { t_ms } => Self::new(t_ms, LogEvent::Tick),
            TrialInput::TrialEnd { t_ms } => Self::new(t_ms, LogEvent::TrialEnd),
            TrialInput::Rating { t_ms, stage, value } => Self::new(t_ms, LogEvent::Rating { stage, value }),
        }
    }
}

#[derive(Serialize, Deserialize)]
struct Header {
    schema: String,
}

pub fn header_line() -> String {
    serde_json::to_string(&Header { schema: LOG_SCHEMA.into() }).expect("header serializes")
}

pub fn record_line(r: &LogRecord) -> String {
    serde_json::to_string(r).expect("log record serializes")
}

pub fn write_log(records: &[LogRecord]) -> String {
    let mut out = header_line();
    out.push('\n');
    for r in records {
        out.push_str(&record_line(r));
        out.push('\n');
    }
    out
}

pub fn parse_log(text: &str) -> Result<Vec<LogRecord>> {
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    let (_, first) = lines.next().ok_or_else(|| Error::Parse("empty log".into()))?;
    let header: Header =
        serde_json::from_str(first).map_err(|e| Error::Parse(format!("line 1: not an aaad-log header: {e}")))?;
    if header.schema != LOG_SCHEMA {
        return Err(Error::UnsupportedVersion { expected: LOG_SCHEMA, found: header.schema });
    }
    lines
        .map(|(i, l)| {
            let r: LogRecord = serde_json::from_str(l).map_err(|e| Error::Parse(format!("line {}: {e}", i + 1)))?;
            if !r.t_ms.is_finite() {
                return Err(Error::Parse(format!("line {}: t_ms not finite", i + 1)));
            }
            Ok(r)
        })
        .collect()
}

/// One trial's slice of a session log.
#[derive(Debug, Clone, PartialEq)]
pub struct LoggedTrial {
    pub config: TrialConfig,
    pub inputs: Vec<TrialInput>,
}

/// Split a session log at its `trial_start` records. Records before the
/// first trial start are rejected.
pub fn split_trials(records: &[LogRecord]) -> Result<Vec<LoggedTrial>> {
    let mut out: Vec<LoggedTrial> = Vec::new();
    for r in records {
        match &r.event {
            LogEvent::TrialStart { trial_id, image_id, zoom, clutter, aid_visible, person_present, weapon_present } => {
                out.push(LoggedTrial {
                    config: TrialConfig {
                        trial_id: trial_id.clone(),
                        image_id: image_id.clone(),
                        scene: Scene::new(*zoom, *clutter),
                        aid_visible: *aid_visible,
                        ground_truth: GroundTruth { person_present: *person_present, weapon_present: *weapon_present },
                        start_ms: r.t_ms,
                    },
                    inputs: Vec::new(),
                });
            }
            _ => {
                let input = r.input().expect("non-start records map to inputs");
                out.last_mut()
                    .ok_or_else(|| Error::Protocol(format!("{:?} record at {} ms before any trial_start", r.event, r.t_ms)))?
                    .inputs
                    .push(input);
            }
        }
    }
    Ok(out)
}
