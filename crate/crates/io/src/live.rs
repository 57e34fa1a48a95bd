//! The `aaad-live/1` session protocol, independent of any transport.
//!
//! Every message is one JSON text record carrying `"schema":"aaad-live/1"`
//! and a `"type"`. A [`LiveSession`] turns client messages into engine
//! inputs, synthesizes display ticks from the client's gaze clock and keeps
//! an `aaad-log/1` capture of everything it fed the engine, so a live
//! session replays to the same reports.

use std::collections::HashMap;
use std::sync::Arc;

use aaad_core::bundle::Model;
use aaad_core::engine::{
    AidState, EngineConfig, EngineOutput, GazeSample, GroundTruth, KeyCode, RatingStage, TrialConfig, TrialEngine,
    TrialInput, TrialReport, TICK_MS,
};
use aaad_core::export::encode_pgm16;
use aaad_core::surface::ClutterMap;
use aaad_core::{Error, Level, Result, Scene};
use base64::Engine as _;
use serde::{Deserialize, Serialize};

use crate::log::{write_log, LogRecord};

pub const LIVE_SCHEMA: &str = "aaad-live/1";

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ClientMessage {
    TrialStart {
        image_id: String,
        zoom: Level,
        clutter: Level,
        #[serde(default = "yes")]
        aid_visible: bool,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        trial_id: Option<String>,
        #[serde(default)]
        person_present: bool,
        #[serde(default)]
        weapon_present: bool,
        /// Client clock at the start; defaults to the last gaze time seen.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        t_ms: Option<f64>,
    },
    Gaze {
        t_ms: f64,
        x_px: f64,
        y_px: f64,
        #[serde(default = "yes")]
        valid: bool,
    },
    Key {
        code: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        t_ms: Option<f64>,
    },
    Rating {
        stage: RatingStage,
        value: u8,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        t_ms: Option<f64>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ServerMessage {
    State {
        state: AidState,
    },
    ExplorationMap {
        width: u32,
        height: u32,
        duration_ms: f64,
        /// Base64 of a binary 16-bit PGM.
        pgm16: String,
    },
    Prompt {
        stage: RatingStage,
    },
    TrialReport {
        report: Box<TrialReport>,
    },
    Error {
        message: String,
    },
}

#[derive(Serialize, Deserialize)]
struct Envelope<T> {
    schema: String,
    #[serde(flatten)]
    body: T,
}

pub fn encode_client(msg: &ClientMessage) -> String {
    serde_json::to_string(&Envelope { schema: LIVE_SCHEMA.into(), body: msg }).expect("client message serializes")
}

pub fn encode_server(msg: &ServerMessage) -> String {
    serde_json::to_string(&Envelope { schema: LIVE_SCHEMA.into(), body: msg }).expect("server message serializes")
}

fn check_schema(text: &str) -> Result<serde_json::Value> {
    let v: serde_json::Value = serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
    match v.get("schema").and_then(|s| s.as_str()) {
        Some(LIVE_SCHEMA) => Ok(v),
        Some(other) => Err(Error::UnsupportedVersion { expected: LIVE_SCHEMA, found: other.into() }),
        None => Err(Error::Parse("message has no schema field".into())),
    }
}

pub fn decode_client(text: &str) -> Result<ClientMessage> {
    let v = check_schema(text)?;
    let env: Envelope<ClientMessage> = serde_json::from_value(v).map_err(|e| Error::Parse(e.to_string()))?;
    Ok(env.body)
}

pub fn decode_server(text: &str) -> Result<ServerMessage> {
    let v = check_schema(text)?;
    let env: Envelope<ServerMessage> = serde_json::from_value(v).map_err(|e| Error::Parse(e.to_string()))?;
    Ok(env.body)
}

impl ServerMessage {
    pub fn from_output(out: EngineOutput) -> Result<Self> {
        Ok(match out {
            EngineOutput::State(state) => ServerMessage::State { state },
            EngineOutput::ExplorationMap { map, duration_ms } => {
                let g = *map.geometry();
                let (pgm, _) = encode_pgm16(&g, map.values())?;
                ServerMessage::ExplorationMap {
                    width: g.width_px,
                    height: g.height_px,
                    duration_ms,
                    pgm16: base64::engine::general_purpose::STANDARD.encode(pgm),
                }
            }
            EngineOutput::Prompt(stage) => ServerMessage::Prompt { stage },
            EngineOutput::Report(report) => ServerMessage::TrialReport { report },
        })
    }

    pub fn is_error(&self) -> bool {
        matches!(self, ServerMessage::Error { .. })
    }
}

#[derive(Clone)]
pub struct LiveOptions {
    pub engine: EngineConfig,
    /// Clutter maps by image id; images without one get a uniform map.
    pub clutter: HashMap<String, Arc<ClutterMap>>,
}

impl LiveOptions {
    pub fn for_model(model: &Model) -> Self {
        Self { engine: EngineConfig::for_model(model), clutter: HashMap::new() }
    }
}

struct Active {
    engine: TrialEngine,
    next_tick: u64,
}

/// One connection's worth of trials.
pub struct LiveSession {
    model: Arc<Model>,
    opts: LiveOptions,
    trial: Option<Active>,
    clock_ms: f64,
    trials_started: u64,
    log: Vec<LogRecord>,
    reports: Vec<TrialReport>,
}

impl LiveSession {
    pub fn new(model: Arc<Model>, opts: LiveOptions) -> Self {
        Self { model, opts, trial: None, clock_ms: 0.0, trials_started: 0, log: Vec::new(), reports: Vec::new() }
    }

    /// Handle one text record; failures become `error` messages and leave
    /// the session usable.
    pub fn handle_text(&mut self, text: &str) -> Vec<String> {
        let replies = decode_client(text).and_then(|m| self.handle(m));
        match replies {
            Ok(msgs) => msgs.iter().map(encode_server).collect(),
            Err(e) => vec![encode_server(&ServerMessage::Error { message: e.to_string() })],
        }
    }

    pub fn handle(&mut self, msg: ClientMessage) -> Result<Vec<ServerMessage>> {
        let outputs = match msg {
            ClientMessage::TrialStart { image_id, zoom, clutter, aid_visible, trial_id, person_present, weapon_present, t_ms } => {
                self.start(image_id, Scene::new(zoom, clutter), aid_visible, trial_id, GroundTruth { person_present, weapon_present }, t_ms)?
            }
            ClientMessage::Gaze { t_ms, x_px, y_px, valid } => {
                self.advance_clock(t_ms)?;
                self.feed_search(TrialInput::Gaze(GazeSample { t_ms, x_px, y_px, valid }))?
            }
            ClientMessage::Key { code, t_ms } => {
                let code: KeyCode = code.parse()?;
                let t_ms = self.resolve_time(t_ms)?;
                self.feed_search(TrialInput::Key { t_ms, code })?
            }
            ClientMessage::Rating { stage, value, t_ms } => {
                let t_ms = self.resolve_time(t_ms)?;
                let active = self.trial.as_mut().ok_or_else(|| Error::Protocol("rating outside a trial".into()))?;
                let input = TrialInput::Rating { t_ms, stage, value };
                let out = active.engine.handle(input)?;
                self.log.push(LogRecord::from_input(&input));
                out
            }
        };
        let mut msgs = Vec::with_capacity(outputs.len());
        for out in outputs {
            if let EngineOutput::Report(r) = &out {
                self.reports.push((**r).clone());
                self.trial = None;
            }
            msgs.push(ServerMessage::from_output(out)?);
        }
        Ok(msgs)
    }

    fn start(
        &mut self,
        image_id: String,
        scene: Scene,
        aid_visible: bool,
        trial_id: Option<String>,
        ground_truth: GroundTruth,
        t_ms: Option<f64>,
    ) -> Result<Vec<EngineOutput>> {
        if self.trial.is_some() {
            return Err(Error::Protocol("trial_start while a trial is in progress".into()));
        }
        let start_ms = self.resolve_time(t_ms)?;
        self.trials_started += 1;
        let cfg = TrialConfig {
            trial_id: trial_id.unwrap_or_else(|| format!("live-{}", self.trials_started)),
            image_id,
            scene,
            aid_visible,
            ground_truth,
            start_ms,
        };
        let mut engine = TrialEngine::new(self.model.clone(), cfg.clone(), self.opts.engine)?;
        if let Some(c) = self.opts.clutter.get(&cfg.image_id) {
            engine = engine.with_clutter(c.clone())?;
        }
        self.log.push(LogRecord::trial_start(&cfg));
        let out = engine.opening_outputs();
        self.trial = Some(Active { engine, next_tick: 1 });
        Ok(out)
    }

    fn resolve_time(&mut self, t_ms: Option<f64>) -> Result<f64> {
        match t_ms {
            Some(t) => {
                self.advance_clock(t)?;
                Ok(t)
            }
            None => Ok(self.clock_ms),
        }
    }

    fn advance_clock(&mut self, t_ms: f64) -> Result<()> {
        if !t_ms.is_finite() {
            return Err(Error::InvalidInput(format!("timestamp {t_ms} not finite")));
        }
        if t_ms < self.clock_ms {
            return Err(Error::NonMonotonicTime { last_ms: self.clock_ms, now_ms: t_ms });
        }
        self.clock_ms = t_ms;
        Ok(())
    }

    /// Feed a search-phase input preceded by every display tick due by its
    /// time. Gaze and keys outside the search phase are ignored.
    fn feed_search(&mut self, input: TrialInput) -> Result<Vec<EngineOutput>> {
        let Some(active) = self.trial.as_mut() else {
            return match input {
                TrialInput::Gaze(_) => Ok(Vec::new()),
                _ => Err(Error::Protocol("key outside a trial".into())),
            };
        };
        let mut out = Vec::new();
        let start = active.engine.config().start_ms;
        while active.engine.is_searching() && start + active.next_tick as f64 * TICK_MS <= input.t_ms() {
            let tick = TrialInput::Tick { t_ms: start + active.next_tick as f64 * TICK_MS };
            active.next_tick += 1;
            out.extend(active.engine.handle(tick)?);
            self.log.push(LogRecord::from_input(&tick));
        }
        if active.engine.is_searching() {
            out.extend(active.engine.handle(input)?);
            self.log.push(LogRecord::from_input(&input));
        }
        Ok(out)
    }

    /// End the current trial's search as if the trial clock ran out.
    pub fn end_trial(&mut self) -> Result<Vec<ServerMessage>> {
        let Some(active) = self.trial.as_mut() else {
            return Ok(Vec::new());
        };
        if !active.engine.is_searching() {
            return Ok(Vec::new());
        }
        let input = TrialInput::TrialEnd { t_ms: self.clock_ms };
        let out = active.engine.handle(input)?;
        self.log.push(LogRecord::from_input(&input));
        out.into_iter().map(ServerMessage::from_output).collect()
    }

    pub fn reports(&self) -> &[TrialReport] {
        &self.reports
    }

    pub fn log_records(&self) -> &[LogRecord] {
        &self.log
    }

    /// The session so far as an `aaad-log/1` document.
    pub fn log_text(&self) -> String {
        write_log(&self.log)
    }
}
