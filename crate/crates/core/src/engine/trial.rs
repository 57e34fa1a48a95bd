//! The per-trial event loop.
//!
//! Inputs arrive in one total order (gaze samples, key presses, display
//! ticks, ratings). The time channel is evaluated on ticks only, the
//! eye-movement channel on saccade events and the detectability channel on
//! fixation ends. Every update timestamp is the trial-relative time of the
//! input being processed, so replaying the same inputs reproduces the
//! report bit for bit.

use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::bundle::Model;
use crate::engine::classify::{ClassifierConfig, GazeSample, OculomotorEvent, SaccadeClassifier};
use crate::error::{Error, Result};
use crate::satisfaction::{ChannelThresholds, TriggerState, TriggerTimes};
use crate::setting::{Scene, Setting, Target};
use crate::surface::{exploration_map, ClutterMap, DScore, Fixation, SurfaceGrid};

/// Stimulus frame period (24 fps).
pub const TICK_MS: f64 = 1000.0 / 24.0;
pub const MAP_INTERLUDE_MS: f64 = 120.0;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub person_present: bool,
    pub weapon_present: bool,
}

impl GroundTruth {
    pub fn present(&self, target: Target) -> bool {
        match target {
            Target::Person => self.person_present,
            Target::Weapon => self.weapon_present,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialConfig {
    pub trial_id: String,
    pub image_id: String,
    pub scene: Scene,
    pub aid_visible: bool,
    pub ground_truth: GroundTruth,
    /// Session-clock time at which the trial (and fixation #0) starts.
    #[serde(default)]
    pub start_ms: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KeyCode {
    Right,
    Space,
}

impl KeyCode {
    pub fn as_str(self) -> &'static str {
        match self {
            KeyCode::Right => "right",
            KeyCode::Space => "space",
        }
    }
}

impl FromStr for KeyCode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "right" | "ArrowRight" => Ok(KeyCode::Right),
            "space" | " " | "Space" => Ok(KeyCode::Space),
            other => Err(Error::UnknownKey(other.to_string())),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RatingStage {
    Person,
    Weapon,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum TrialInput {
    Gaze(GazeSample),
    Key { t_ms: f64, code: KeyCode },
    Tick { t_ms: f64 },
    /// External end of the search phase (harness timeout or recorder
    /// marker); a no-op once the trial has already ended.
    TrialEnd { t_ms: f64 },
    Rating { t_ms: f64, stage: RatingStage, value: u8 },
}

impl TrialInput {
    pub fn t_ms(&self) -> f64 {
        match *self {
            TrialInput::Gaze(s) => s.t_ms,
            TrialInput::Key { t_ms, .. }
            | TrialInput::Tick { t_ms }
            | TrialInput::TrialEnd { t_ms }
            | TrialInput::Rating { t_ms, .. } => t_ms,
        }
    }

    fn kind(&self) -> &'static str {
        match self {
            TrialInput::Gaze(_) => "gaze",
            TrialInput::Key { .. } => "key",
            TrialInput::Tick { .. } => "tick",
            TrialInput::TrialEnd { .. } => "trial_end",
            TrialInput::Rating { .. } => "rating",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AidState {
    Explore,
    MoveOn,
}

#[derive(Debug, Clone, PartialEq)]
pub enum EngineOutput {
    State(AidState),
    ExplorationMap { map: ClutterMap, duration_ms: f64 },
    Prompt(RatingStage),
    Report(Box<TrialReport>),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum UserAction {
    /// Right arrow (or an external end) with no map requests.
    ForcedAdvance,
    /// One or more exploration maps, then a forced advance.
    MapRequestedThenAdvance { maps: u32 },
    /// Spacebar once search satisfaction had been reached.
    SatisfiedAdvance,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Responses {
    pub person_rating: u8,
    pub weapon_rating: u8,
    pub person_response_present: bool,
    pub weapon_response_present: bool,
}

impl Responses {
    pub fn new(person_rating: u8, weapon_rating: u8) -> Self {
        Self {
            person_rating,
            weapon_rating,
            person_response_present: person_rating >= 6,
            weapon_response_present: weapon_rating >= 6,
        }
    }

    pub fn response_present(&self, target: Target) -> bool {
        match target {
            Target::Person => self.person_response_present,
            Target::Weapon => self.weapon_response_present,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialReport {
    pub trial_id: String,
    pub image_id: String,
    pub scene: Scene,
    pub aid_visible: bool,
    pub ground_truth: GroundTruth,
    /// Search-phase length; up to the last input seen for incomplete trials.
    pub duration_ms: f64,
    pub n_eyemovements: u32,
    pub n_fixations: u32,
    pub final_d_score: f64,
    pub trigger_times: TriggerTimes,
    /// `duration_ms - trigger time` for each channel that fired.
    pub trigger_offsets: TriggerTimes,
    pub user_action: Option<UserAction>,
    pub maps_requested: u32,
    /// Search time spent behind the exploration map.
    pub paused_ms: f64,
    pub responses: Option<Responses>,
    pub complete: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EngineConfig {
    pub classifier: ClassifierConfig,
    pub map_interlude_ms: f64,
    /// Target class whose curves drive the trigger and the surfaces.
    pub drive_target: Target,
    /// Record a [`TraceEntry`] for every input.
    pub trace: bool,
}

impl EngineConfig {
    pub fn for_model(model: &Model) -> Self {
        Self {
            classifier: ClassifierConfig {
                deg_per_px: model.geometry.deg_per_px / model.decimation() as f64,
                ..ClassifierConfig::default()
            },
            map_interlude_ms: MAP_INTERLUDE_MS,
            drive_target: Target::Weapon,
            trace: false,
        }
    }
}

/// Channel values after one input.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceEntry {
    pub t_ms: f64,
    pub input: &'static str,
    pub fixation_ends: u32,
    pub saccade_events: u32,
    pub eye_movements: u32,
    pub d_score: f64,
    pub time_metric_ms: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Phase {
    Searching,
    Rating(RatingStage),
    Done,
}

#[derive(Debug, Clone, Copy)]
struct Interlude {
    start_rel: f64,
    until_rel: f64,
}

pub struct TrialEngine {
    model: Arc<Model>,
    cfg: TrialConfig,
    engine: EngineConfig,
    setting: Setting,
    thresholds: ChannelThresholds,
    clutter: Option<Arc<ClutterMap>>,
    classifier: SaccadeClassifier,
    trigger: TriggerState,
    phase: Phase,
    last_rel: f64,
    eye_movements: u32,
    d_score: DScore,
    fixations: Vec<Fixation>,
    composite: Option<(SurfaceGrid, usize)>,
    interlude: Option<Interlude>,
    paused_ms: f64,
    maps_requested: u32,
    move_on_announced: bool,
    end: Option<(f64, UserAction)>,
    person_rating: Option<u8>,
    report: Option<TrialReport>,
    events: Vec<OculomotorEvent>,
    trace: Vec<TraceEntry>,
}

impl TrialEngine {
    pub fn new(model: Arc<Model>, cfg: TrialConfig, engine: EngineConfig) -> Result<Self> {
        let setting = cfg.scene.with_target(engine.drive_target);
        let thresholds = model.setting(&setting)?.thresholds;
        Self::with_thresholds(model, cfg, engine, thresholds)
    }

    /// An engine with explicit thresholds instead of the model's table.
    pub fn with_thresholds(model: Arc<Model>, cfg: TrialConfig, engine: EngineConfig, thresholds: ChannelThresholds) -> Result<Self> {
        let setting = cfg.scene.with_target(engine.drive_target);
        model.family().get(&setting)?;
        let center = (model.geometry.width_px as f64 * model.decimation() as f64 / 2.0, model.geometry.height_px as f64 * model.decimation() as f64 / 2.0);
        let classifier = SaccadeClassifier::new(engine.classifier, 0.0, center);
        let d_score = DScore::zero(&model.geometry);
        Ok(Self {
            model,
            cfg,
            engine,
            setting,
            thresholds,
            clutter: None,
            classifier,
            trigger: TriggerState::new(),
            phase: Phase::Searching,
            last_rel: 0.0,
            eye_movements: 0,
            d_score,
            fixations: Vec::new(),
            composite: None,
            interlude: None,
            paused_ms: 0.0,
            maps_requested: 0,
            move_on_announced: false,
            end: None,
            person_rating: None,
            report: None,
            events: Vec::new(),
            trace: Vec::new(),
        })
    }

    /// Clutter map for the exploration map; uniform clutter otherwise.
    pub fn with_clutter(mut self, clutter: Arc<ClutterMap>) -> Result<Self> {
        if clutter.geometry() != &self.model.geometry {
            return Err(Error::GeometryMismatch {
                expected: self.model.geometry.describe(),
                found: clutter.geometry().describe(),
            });
        }
        self.clutter = Some(clutter);
        Ok(self)
    }

    /// Outputs due at trial start.
    pub fn opening_outputs(&self) -> Vec<EngineOutput> {
        if self.cfg.aid_visible {
            vec![EngineOutput::State(AidState::Explore)]
        } else {
            Vec::new()
        }
    }

    pub fn config(&self) -> &TrialConfig {
        &self.cfg
    }

    pub fn thresholds(&self) -> &ChannelThresholds {
        &self.thresholds
    }

    pub fn trigger(&self) -> &TriggerState {
        &self.trigger
    }

    pub fn d_score(&self) -> f64 {
        self.d_score.value()
    }

    pub fn eye_movements(&self) -> u32 {
        self.eye_movements
    }

    pub fn fixations(&self) -> &[Fixation] {
        &self.fixations
    }

    pub fn trace(&self) -> &[TraceEntry] {
        &self.trace
    }

    pub fn is_searching(&self) -> bool {
        self.phase == Phase::Searching
    }

    pub fn is_done(&self) -> bool {
        self.phase == Phase::Done
    }

    pub fn handle(&mut self, input: TrialInput) -> Result<Vec<EngineOutput>> {
        let rel = input.t_ms() - self.cfg.start_ms;
        if !rel.is_finite() {
            return Err(Error::InvalidInput(format!("timestamp {} not finite", input.t_ms())));
        }
        if rel < self.last_rel {
            return Err(Error::NonMonotonicTime { last_ms: self.last_rel, now_ms: rel });
        }
        let mut out = Vec::new();
        let fix_before = self.fixations.len();
        let mut saccade_events = 0;

        match input {
            TrialInput::Rating { stage, value, .. } => {
                self.last_rel = rel;
                self.rate(stage, value, &mut out)?;
            }
            TrialInput::TrialEnd { .. } => {
                self.last_rel = rel;
                if self.phase == Phase::Searching && !self.finish_interlude(rel, &mut out) {
                    let action = self.advance_action();
                    self.end_search(rel, action, &mut out);
                }
            }
            _ if self.phase != Phase::Searching => return Err(Error::TrialEnded),
            _ => {
                self.last_rel = rel;
                if self.finish_interlude(rel, &mut out) {
                    // The map closed onto a satisfied trial: this input lands
                    // after the end of search and is dropped.
                    return Ok(out);
                }
                match input {
                    TrialInput::Gaze(s) => saccade_events = self.gaze(s, rel)?,
                    TrialInput::Tick { .. } => {
                        let metric = self.time_metric(rel);
                        self.trigger.update_time(rel, metric, &self.thresholds)?;
                    }
                    TrialInput::Key { code, .. } => self.key(code, rel, &mut out)?,
                    _ => unreachable!(),
                }
                self.announce(&mut out);
            }
        }

        if self.engine.trace {
            self.trace.push(TraceEntry {
                t_ms: rel,
                input: input.kind(),
                fixation_ends: (self.fixations.len() - fix_before) as u32,
                saccade_events,
                eye_movements: self.eye_movements,
                d_score: self.d_score.value(),
                time_metric_ms: self.time_metric(rel),
            });
        }
        Ok(out)
    }

    fn gaze(&mut self, mut s: GazeSample, rel: f64) -> Result<u32> {
        s.t_ms = rel;
        let mut events = std::mem::take(&mut self.events);
        events.clear();
        self.classifier.push(s, &mut events)?;
        let mut saccade_events = 0;
        for e in &events {
            match *e {
                OculomotorEvent::FixationEnd { fixation, .. } => {
                    let (x, y) = self.model.to_grid(fixation.x_px, fixation.y_px);
                    let f = Fixation::new(x, y, fixation.duration_ms);
                    let curves = self.model.family().get(&self.setting)?;
                    self.d_score = self.d_score + self.model.renderer().score(&f, curves)?;
                    self.fixations.push(f);
                    self.trigger.update_detectability(rel, self.d_score.value(), &self.thresholds)?;
                }
                OculomotorEvent::SaccadeOnset { .. } => {
                    saccade_events += 1;
                    self.eye_movements += 1;
                    self.trigger.update_eye_movements(rel, self.eye_movements, &self.thresholds)?;
                }
                OculomotorEvent::SaccadeOffset { .. } => {
                    saccade_events += 1;
                    self.trigger.update_eye_movements(rel, self.eye_movements, &self.thresholds)?;
                }
            }
        }
        self.events = events;
        Ok(saccade_events)
    }

    fn key(&mut self, code: KeyCode, rel: f64, out: &mut Vec<EngineOutput>) -> Result<()> {
        match code {
            KeyCode::Right => {
                let action = self.advance_action();
                self.end_search(rel, action, out);
            }
            KeyCode::Space if !self.cfg.aid_visible => {}
            KeyCode::Space if self.trigger.general_ok => {
                self.end_search(rel, UserAction::SatisfiedAdvance, out);
            }
            KeyCode::Space => {
                if self.interlude.is_none() {
                    self.maps_requested += 1;
                    let map = self.exploration_map()?;
                    self.interlude = Some(Interlude { start_rel: rel, until_rel: rel + self.engine.map_interlude_ms });
                    out.push(EngineOutput::ExplorationMap { map, duration_ms: self.engine.map_interlude_ms });
                }
            }
        }
        Ok(())
    }

    fn advance_action(&self) -> UserAction {
        if self.maps_requested > 0 {
            UserAction::MapRequestedThenAdvance { maps: self.maps_requested }
        } else {
            UserAction::ForcedAdvance
        }
    }

    /// Close an elapsed map interlude. Returns true if that ended the trial.
    fn finish_interlude(&mut self, rel: f64, out: &mut Vec<EngineOutput>) -> bool {
        let Some(i) = self.interlude else {
            return false;
        };
        if rel < i.until_rel {
            return false;
        }
        self.interlude = None;
        self.paused_ms += i.until_rel - i.start_rel;
        if self.trigger.general_ok {
            self.end_search(i.until_rel, UserAction::SatisfiedAdvance, out);
            true
        } else {
            out.push(EngineOutput::State(AidState::Explore));
            false
        }
    }

    fn time_metric(&self, rel: f64) -> f64 {
        let open = self.interlude.map(|i| (rel.min(i.until_rel) - i.start_rel).max(0.0)).unwrap_or(0.0);
        rel - self.paused_ms - open
    }

    fn announce(&mut self, out: &mut Vec<EngineOutput>) {
        if self.trigger.general_ok && !self.move_on_announced && self.phase == Phase::Searching {
            self.move_on_announced = true;
            if self.cfg.aid_visible {
                out.push(EngineOutput::State(AidState::MoveOn));
            }
        }
    }

    fn end_search(&mut self, rel: f64, action: UserAction, out: &mut Vec<EngineOutput>) {
        if let Some(i) = self.interlude.take() {
            self.paused_ms += rel.min(i.until_rel) - i.start_rel;
        }
        self.end = Some((rel, action));
        self.phase = Phase::Rating(RatingStage::Person);
        out.push(EngineOutput::Prompt(RatingStage::Person));
    }

    fn rate(&mut self, stage: RatingStage, value: u8, out: &mut Vec<EngineOutput>) -> Result<()> {
        if !(1..=10).contains(&value) {
            return Err(Error::InvalidInput(format!("rating {value} outside 1..=10")));
        }
        match (self.phase, stage) {
            (Phase::Rating(RatingStage::Person), RatingStage::Person) => {
                self.person_rating = Some(value);
                self.phase = Phase::Rating(RatingStage::Weapon);
                out.push(EngineOutput::Prompt(RatingStage::Weapon));
            }
            (Phase::Rating(RatingStage::Weapon), RatingStage::Weapon) => {
                let person = self.person_rating.expect("person rating precedes weapon rating");
                self.phase = Phase::Done;
                let report = self.build_report(Some(Responses::new(person, value)));
                self.report = Some(report.clone());
                out.push(EngineOutput::Report(Box::new(report)));
            }
            (Phase::Done, _) => return Err(Error::TrialEnded),
            (phase, stage) => {
                return Err(Error::Protocol(format!("rating for {stage:?} not expected in {phase:?}")));
            }
        }
        Ok(())
    }

    /// Composite surface of all completed fixations, rendered on demand.
    pub fn composite_surface(&mut self) -> Result<&SurfaceGrid> {
        let curves = self.model.family().get(&self.setting)?;
        let (grid, done) = self.composite.get_or_insert_with(|| (SurfaceGrid::zeros(self.model.geometry), 0));
        for f in &self.fixations[*done..] {
            self.model.renderer().accumulate(grid, f, curves)?;
        }
        *done = self.fixations.len();
        Ok(grid)
    }

    pub fn exploration_map(&mut self) -> Result<ClutterMap> {
        let clutter = match &self.clutter {
            Some(c) => c.clone(),
            None => Arc::new(ClutterMap::uniform(self.model.geometry, 1.0)?),
        };
        let surface = self.composite_surface()?;
        exploration_map(&clutter, surface)
    }

    fn build_report(&self, responses: Option<Responses>) -> TrialReport {
        let (duration_ms, user_action) = match self.end {
            Some((t, a)) => (t, Some(a)),
            None => (self.last_rel, None),
        };
        let t = self.trigger.trigger_times;
        let offset = |x: Option<f64>| x.map(|x| duration_ms - x);
        TrialReport {
            trial_id: self.cfg.trial_id.clone(),
            image_id: self.cfg.image_id.clone(),
            scene: self.cfg.scene,
            aid_visible: self.cfg.aid_visible,
            ground_truth: self.cfg.ground_truth,
            duration_ms,
            n_eyemovements: self.eye_movements,
            n_fixations: self.fixations.len() as u32,
            final_d_score: self.d_score.value(),
            trigger_times: t,
            trigger_offsets: TriggerTimes {
                time: offset(t.time),
                eye_movements: offset(t.eye_movements),
                detectability: offset(t.detectability),
                general: offset(t.general),
            },
            user_action,
            maps_requested: self.maps_requested,
            paused_ms: self.paused_ms,
            responses,
            complete: responses.is_some(),
        }
    }

    /// The final report, or an incomplete one if the trial never reached
    /// both ratings.
    pub fn report(&self) -> TrialReport {
        self.report.clone().unwrap_or_else(|| self.build_report(None))
    }
}

/// Run a whole trial over an input stream.
pub fn run_trial(
    model: &Arc<Model>,
    cfg: &TrialConfig,
    engine: EngineConfig,
    inputs: impl IntoIterator<Item = TrialInput>,
) -> Result<TrialReport> {
    let mut e = TrialEngine::new(model.clone(), cfg.clone(), engine)?;
    for input in inputs {
        e.handle(input)?;
    }
    Ok(e.report())
}

/// Same computation with the aid hidden: Move-On is recorded, never shown,
/// and the spacebar does nothing.
pub fn shadow_mode(
    model: &Arc<Model>,
    cfg: &TrialConfig,
    engine: EngineConfig,
    inputs: impl IntoIterator<Item = TrialInput>,
) -> Result<TrialReport> {
    let cfg = TrialConfig { aid_visible: false, ..cfg.clone() };
    run_trial(model, &cfg, engine, inputs)
}
