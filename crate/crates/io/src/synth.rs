//! Synthetic observers: seeded gaze/key/rating streams generated in closed
//! loop with a shadow engine, and the Monte Carlo harness built on them.

use std::sync::Arc;

use aaad_core::bundle::Model;
use aaad_core::engine::{
    aggregate_session, EngineConfig, GroundTruth, KeyCode, RatingStage, SessionMetrics, TrialConfig, TrialEngine,
    TrialInput, TrialReport, GazeSample, TICK_MS,
};
use aaad_core::ppc::PerformanceCurve;
use aaad_core::surface::{exploration_map, ClutterMap, Fixation, SurfaceGrid};
use aaad_core::{Error, Result, Scene, Target};
use rand::distr::weighted::WeightedIndex;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, LogNormal, Normal};
use serde::{Deserialize, Serialize};

use crate::log::LogRecord;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SaccadePolicy {
    Uniform,
    ClutterWeighted,
    /// Fixate the argmax of the current exploration map.
    MapGreedy,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum StopPolicy {
    FixedTime { t_ms: f64 },
    /// Advance `delay_ms` after the general trigger, or at `cap_ms`.
    TriggerPlusReaction {
        delay_ms: f64,
        #[serde(default = "default_cap")]
        cap_ms: f64,
    },
}

fn default_cap() -> f64 {
    10_000.0
}

fn default_noise() -> f64 {
    0.005
}

fn default_min_amplitude() -> f64 {
    2.0
}

fn default_rating_delay() -> f64 {
    500.0
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SyntheticObserverParams {
    pub seed: u64,
    /// Log-space mean of the fixation duration in ms.
    pub fixation_mu: f64,
    pub fixation_sigma: f64,
    pub saccade_policy: SaccadePolicy,
    pub stop_policy: StopPolicy,
    /// Gaussian gaze noise, degrees.
    #[serde(default = "default_noise")]
    pub noise_deg: f64,
    #[serde(default = "default_min_amplitude")]
    pub min_amplitude_deg: f64,
    #[serde(default = "default_rating_delay")]
    pub rating_delay_ms: f64,
}

/// Shortest dwell generated, whatever the lognormal draw.
pub const MIN_FIXATION_MS: f64 = 60.0;

impl SyntheticObserverParams {
    pub fn new(seed: u64, saccade_policy: SaccadePolicy, stop_policy: StopPolicy) -> Self {
        Self {
            seed,
            fixation_mu: 250f64.ln(),
            fixation_sigma: 0.3,
            saccade_policy,
            stop_policy,
            noise_deg: default_noise(),
            min_amplitude_deg: default_min_amplitude(),
            rating_delay_ms: default_rating_delay(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidInput(m.to_string()));
        if !self.fixation_mu.is_finite() || !(self.fixation_sigma > 0.0 && self.fixation_sigma.is_finite()) {
            return bad("fixation duration distribution needs finite mu and sigma > 0");
        }
        if !(self.noise_deg >= 0.0 && self.noise_deg < 0.1) {
            return bad("noise_deg must lie in [0, 0.1)");
        }
        if !(self.min_amplitude_deg >= 0.5 && self.min_amplitude_deg.is_finite()) {
            return bad("min_amplitude_deg must be at least 0.5");
        }
        if !(self.rating_delay_ms > 0.0 && self.rating_delay_ms.is_finite()) {
            return bad("rating_delay_ms must be positive");
        }
        match self.stop_policy {
            StopPolicy::FixedTime { t_ms } if !(t_ms > 0.0 && t_ms.is_finite()) => bad("fixed_time needs t_ms > 0"),
            StopPolicy::TriggerPlusReaction { delay_ms, cap_ms }
                if !(delay_ms >= 0.0 && cap_ms > delay_ms && cap_ms.is_finite()) =>
            {
                bad("trigger_plus_reaction needs 0 <= delay_ms < cap_ms")
            }
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthesizedTrial {
    /// Log records starting with `trial_start`.
    pub records: Vec<LogRecord>,
    /// Report of the closed-loop engine that consumed the same inputs.
    pub report: TrialReport,
    /// Fixation targets in order, full-resolution pixels (the first is the
    /// central cross).
    pub targets: Vec<(f64, f64)>,
    /// Planned dwell of each completed fixation, aligned with `targets`.
    pub dwells_ms: Vec<f64>,
    /// Trial-relative time of the advance key.
    pub stop_ms: f64,
}

fn fnv1a(s: &str) -> u64 {
    s.bytes().fold(0xcbf2_9ce4_8422_2325, |h, b| (h ^ b as u64).wrapping_mul(0x0000_0100_0000_01b3))
}

/// Stream 0 drives gaze, stream 1 the rating draws. Neither depends on the
/// stop policy, so arms sharing a seed share their random numbers.
fn rngs(seed: u64, trial_id: &str) -> (ChaCha8Rng, ChaCha8Rng) {
    let base = seed ^ fnv1a(trial_id);
    let mut gaze = ChaCha8Rng::seed_from_u64(base);
    gaze.set_stream(0);
    let mut rating = ChaCha8Rng::seed_from_u64(base);
    rating.set_stream(1);
    (gaze, rating)
}

#[derive(Debug, Clone, Copy)]
enum Segment {
    Fixation { start: u64, until: u64, at: (f64, f64) },
    Saccade { start: u64, duration: u64, from: (f64, f64), to: (f64, f64) },
}

struct Planner<'a> {
    params: &'a SyntheticObserverParams,
    model: &'a Model,
    clutter: Option<&'a ClutterMap>,
    weights: Option<WeightedIndex<f64>>,
    planned: SurfaceGrid,
    width: f64,
    height: f64,
    deg_per_px: f64,
}

impl Planner<'_> {
    fn next_target(&mut self, rng: &mut ChaCha8Rng, from: (f64, f64), dwell_ms: f64, setting: &aaad_core::Setting) -> Result<(f64, f64)> {
        let d = self.model.decimation() as f64;
        match self.params.saccade_policy {
            SaccadePolicy::MapGreedy => {
                let (gx, gy) = self.model.to_grid(from.0, from.1);
                let curves = self.model.family().get(setting)?;
                self.model.renderer().accumulate(&mut self.planned, &Fixation::new(gx, gy, dwell_ms), curves)?;
                let uniform;
                let fc = match self.clutter {
                    Some(c) => c,
                    None => {
                        uniform = ClutterMap::uniform(self.model.geometry, 1.0)?;
                        &uniform
                    }
                };
                let (x, y) = exploration_map(fc, &self.planned)?.argmax();
                Ok((x as f64 * d, y as f64 * d))
            }
            SaccadePolicy::Uniform | SaccadePolicy::ClutterWeighted => {
                let min_px = self.params.min_amplitude_deg / self.deg_per_px;
                let mut candidate = from;
                for _ in 0..1000 {
                    candidate = match (&self.weights, self.clutter) {
                        (Some(w), Some(c)) => {
                            let i = w.sample(rng);
                            let gw = c.geometry().width_px as usize;
                            (((i % gw) as f64 + rng.random::<f64>()) * d, ((i / gw) as f64 + rng.random::<f64>()) * d)
                        }
                        _ => (rng.random_range(0.0..self.width), rng.random_range(0.0..self.height)),
                    };
                    candidate = (candidate.0.round().min(self.width - 1.0), candidate.1.round().min(self.height - 1.0));
                    if (candidate.0 - from.0).hypot(candidate.1 - from.1) >= min_px {
                        break;
                    }
                }
                Ok(candidate)
            }
        }
    }
}

/// Generate one trial's log. Pure in (params, trial, model, clutter).
pub fn synthesize(
    params: &SyntheticObserverParams,
    trial: &TrialConfig,
    model: &Arc<Model>,
    clutter: Option<&Arc<ClutterMap>>,
) -> Result<SynthesizedTrial> {
    params.validate()?;
    let engine_cfg = EngineConfig::for_model(model);
    let mut engine = TrialEngine::new(model.clone(), trial.clone(), engine_cfg)?;
    if let Some(c) = clutter {
        engine = engine.with_clutter(c.clone())?;
    }
    let setting = trial.scene.with_target(engine_cfg.drive_target);
    let (mut rng, mut rating_rng) = rngs(params.seed, &trial.trial_id);
    let u_person: f64 = rating_rng.random();
    let u_weapon: f64 = rating_rng.random();

    let geom = model.geometry;
    let d = model.decimation() as f64;
    let deg_per_px = engine_cfg.classifier.deg_per_px;
    let (width, height) = (geom.width_px as f64 * d, geom.height_px as f64 * d);
    let weights = match (params.saccade_policy, clutter) {
        (SaccadePolicy::ClutterWeighted, Some(c)) => {
            Some(WeightedIndex::new(c.values().iter().map(|v| v + 1e-6)).map_err(|e| Error::InvalidInput(e.to_string()))?)
        }
        _ => None,
    };
    let mut planner = Planner {
        params,
        model,
        clutter: clutter.map(|c| c.as_ref()),
        weights,
        planned: SurfaceGrid::zeros(geom),
        width,
        height,
        deg_per_px,
    };
    let dwell = LogNormal::new(params.fixation_mu, params.fixation_sigma).map_err(|e| Error::InvalidInput(e.to_string()))?;
    let noise = Normal::new(0.0, params.noise_deg / deg_per_px).map_err(|e| Error::InvalidInput(e.to_string()))?;
    let draw_dwell = |rng: &mut ChaCha8Rng| dwell.sample(rng).max(MIN_FIXATION_MS).round() as u64;

    let start = trial.start_ms;
    let mut records = vec![LogRecord::trial_start(trial)];
    let mut feed = |engine: &mut TrialEngine, input: TrialInput| -> Result<()> {
        engine.handle(input)?;
        records.push(LogRecord::from_input(&input));
        Ok(())
    };

    let center = ((width / 2.0).round(), (height / 2.0).round());
    let mut targets = vec![center];
    let mut dwells_ms = Vec::new();
    let mut seg = Segment::Fixation { start: 0, until: draw_dwell(&mut rng), at: center };
    let mut stop_at = match params.stop_policy {
        StopPolicy::FixedTime { t_ms } => Some(t_ms),
        StopPolicy::TriggerPlusReaction { .. } => None,
    };
    let mut next_tick = 1u64;
    let mut t = 0u64;
    let stop_ms = loop {
        let now = t as f64;
        if stop_at.is_none() {
            if let StopPolicy::TriggerPlusReaction { delay_ms, cap_ms } = params.stop_policy {
                if let Some(g) = engine.trigger().trigger_times.general {
                    stop_at = Some((g + delay_ms).min(cap_ms));
                } else if now >= cap_ms {
                    stop_at = Some(cap_ms);
                }
            }
        }
        let limit = stop_at.map_or(now, |s| s.min(now));
        while next_tick as f64 * TICK_MS <= limit {
            feed(&mut engine, TrialInput::Tick { t_ms: start + next_tick as f64 * TICK_MS })?;
            next_tick += 1;
        }
        if let Some(s) = stop_at {
            if now >= s {
                feed(&mut engine, TrialInput::Key { t_ms: start + s, code: KeyCode::Right })?;
                feed(&mut engine, TrialInput::TrialEnd { t_ms: start + s })?;
                break s;
            }
        }

        let pos = match seg {
            Segment::Fixation { at, .. } => at,
            Segment::Saccade { start: s0, duration, from, to } => {
                let tau = (t - s0) as f64 / duration as f64;
                let f = tau - (std::f64::consts::TAU * tau).sin() / std::f64::consts::TAU;
                (from.0 + (to.0 - from.0) * f, from.1 + (to.1 - from.1) * f)
            }
        };
        let sample = GazeSample::new(start + now, pos.0 + noise.sample(&mut rng), pos.1 + noise.sample(&mut rng));
        feed(&mut engine, TrialInput::Gaze(sample))?;

        seg = match seg {
            Segment::Fixation { start: s0, until, at } if t + 1 >= until => {
                let dwell = (until - s0) as f64;
                let to = planner.next_target(&mut rng, at, dwell, &setting)?;
                dwells_ms.push(dwell);
                targets.push(to);
                let amp_deg = (to.0 - at.0).hypot(to.1 - at.1) * deg_per_px;
                // Main-sequence duration.
                let duration = (2.2 * amp_deg + 21.0).round() as u64;
                Segment::Saccade { start: t + 1, duration, from: at, to }
            }
            Segment::Saccade { start: s0, duration, to, .. } if t + 1 >= s0 + duration => {
                Segment::Fixation { start: t + 1, until: t + 1 + draw_dwell(&mut rng), at: to }
            }
            s => s,
        };
        t += 1;
    };

    // Ratings: correctness ~ Bernoulli(PC of the time curve at the stop time).
    let pc = |target: Target| -> Result<f64> {
        let s = trial.scene.with_target(target);
        let resolved = model.setting(&s).or_else(|_| model.setting(&setting))?;
        Ok(resolved.model.time.pc(stop_ms))
    };
    let truth = trial.ground_truth;
    let person = (u_person < pc(Target::Person)?) == truth.person_present;
    let weapon = (u_weapon < pc(Target::Weapon)?) == truth.weapon_present;
    let mut rating = |present: bool| if present { 6 + rating_rng.random_range(0..5u8) } else { 1 + rating_rng.random_range(0..5u8) };
    let (pr, wr) = (rating(person), rating(weapon));
    let t_rating = start + stop_ms + params.rating_delay_ms;
    feed(&mut engine, TrialInput::Rating { t_ms: t_rating, stage: RatingStage::Person, value: pr })?;
    feed(&mut engine, TrialInput::Rating { t_ms: t_rating + params.rating_delay_ms, stage: RatingStage::Weapon, value: wr })?;

    Ok(SynthesizedTrial { records, report: engine.report(), targets, dwells_ms, stop_ms })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Arm {
    pub name: String,
    pub params: SyntheticObserverParams,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArmResult {
    pub name: String,
    pub trials: usize,
    pub mean_trial_time_s: f64,
    /// Mean of the person and weapon accuracies.
    pub accuracy: f64,
    pub metrics: SessionMetrics,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationReport {
    pub seed: u64,
    pub trials_per_arm: usize,
    pub arms: Vec<ArmResult>,
    pub slowest_arm: String,
    pub fastest_arm: String,
    /// Slowest arm's mean trial time over the fastest arm's.
    pub mean_time_ratio: f64,
}

/// Trial schedule shared by every arm: scenes cycle over those the model
/// can drive, ground truth is a seeded coin flip per target.
pub fn trial_schedule(model: &Model, trials: usize, seed: u64) -> Result<Vec<TrialConfig>> {
    let scenes: Vec<Scene> = Scene::all().filter(|s| model.setting(&s.with_target(Target::Weapon)).is_ok()).collect();
    if scenes.is_empty() {
        return Err(Error::InvalidInput("model has no usable weapon settings".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(2);
    Ok((0..trials)
        .map(|i| TrialConfig {
            trial_id: format!("sim-{i:05}"),
            image_id: format!("synthetic-{:02}", i % scenes.len()),
            scene: scenes[i % scenes.len()],
            aid_visible: false,
            ground_truth: GroundTruth { person_present: rng.random(), weapon_present: rng.random() },
            start_ms: 0.0,
        })
        .collect())
}

pub fn simulate(model: &Arc<Model>, arms: &[Arm], trials: usize, seed: u64) -> Result<SimulationReport> {
    if trials == 0 {
        return Err(Error::InvalidInput("trial count must be positive".into()));
    }
    if arms.is_empty() {
        return Err(Error::InvalidInput("no observer arms".into()));
    }
    let schedule = trial_schedule(model, trials, seed)?;
    let mut results = Vec::new();
    for arm in arms {
        let params = SyntheticObserverParams { seed, ..arm.params };
        let visible = matches!(params.stop_policy, StopPolicy::TriggerPlusReaction { .. });
        let reports = schedule
            .iter()
            .map(|cfg| {
                let cfg = TrialConfig { aid_visible: visible, ..cfg.clone() };
                synthesize(&params, &cfg, model, None).map(|s| s.report)
            })
            .collect::<Result<Vec<_>>>()?;
        let metrics = aggregate_session(&reports)?;
        results.push(ArmResult {
            name: arm.name.clone(),
            trials,
            mean_trial_time_s: metrics.mean_trial_time_s,
            accuracy: (metrics.person.accuracy + metrics.weapon.accuracy) / 2.0,
            metrics,
        });
    }
    let slow = results.iter().max_by(|a, b| a.mean_trial_time_s.total_cmp(&b.mean_trial_time_s)).expect("non-empty");
    let fast = results.iter().min_by(|a, b| a.mean_trial_time_s.total_cmp(&b.mean_trial_time_s)).expect("non-empty");
    Ok(SimulationReport {
        seed,
        trials_per_arm: trials,
        slowest_arm: slow.name.clone(),
        fastest_arm: fast.name.clone(),
        mean_time_ratio: slow.mean_trial_time_s / fast.mean_trial_time_s,
        arms: results,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::replay::{replay, Speed};
    use crate::tests_support::test_model;
    use aaad_core::engine::{classify_oculomotor, shadow_mode};
    use aaad_core::surface::{compose, single_fixation_surface};
    use aaad_core::Level;

    fn trial(id: &str, visible: bool) -> TrialConfig {
        TrialConfig {
            trial_id: id.into(),
            image_id: "img".into(),
            scene: Scene::new(Level::High, Level::Low),
            aid_visible: visible,
            ground_truth: GroundTruth { person_present: true, weapon_present: false },
            start_ms: 500.0,
        }
    }

    fn fixed(t_ms: f64) -> SyntheticObserverParams {
        SyntheticObserverParams::new(3, SaccadePolicy::Uniform, StopPolicy::FixedTime { t_ms })
    }

    #[test]
    fn synthesis_is_seeded() {
        let m = test_model();
        let a = synthesize(&fixed(1500.0), &trial("a", false), &m, None).unwrap();
        let b = synthesize(&fixed(1500.0), &trial("a", false), &m, None).unwrap();
        assert_eq!(a, b);
        let other = SyntheticObserverParams { seed: 4, ..fixed(1500.0) };
        let c = synthesize(&other, &trial("a", false), &m, None).unwrap();
        assert_ne!(a.records, c.records);
    }

    #[test]
    fn fixed_time_stops_on_time() {
        let m = test_model();
        let s = synthesize(&fixed(3000.0), &trial("f", false), &m, None).unwrap();
        assert_eq!(s.stop_ms, 3000.0);
        assert_eq!(s.report.duration_ms, 3000.0);
        assert!(s.report.complete);
    }

    #[test]
    fn trigger_plus_reaction_stops_after_the_shadow_trigger() {
        let m = test_model();
        let params = SyntheticObserverParams::new(
            5,
            SaccadePolicy::Uniform,
            StopPolicy::TriggerPlusReaction { delay_ms: 300.0, cap_ms: 10_000.0 },
        );
        let s = synthesize(&params, &trial("t", true), &m, None).unwrap();
        let inputs: Vec<TrialInput> = s.records.iter().filter_map(|r| r.input()).collect();
        let shadow = shadow_mode(&m, &trial("t", true), EngineConfig::for_model(&m), inputs).unwrap();
        let general = shadow.trigger_times.general.expect("trigger fires before the cap");
        assert!((s.stop_ms - (general + 300.0)).abs() < 1e-9);
        assert_eq!(shadow.duration_ms, s.stop_ms);
    }

    #[test]
    fn map_greedy_fixates_the_least_covered_pixel() {
        let m = test_model();
        let params = SyntheticObserverParams::new(9, SaccadePolicy::MapGreedy, StopPolicy::FixedTime { t_ms: 1200.0 });
        let s = synthesize(&params, &trial("g", false), &m, None).unwrap();
        assert!(s.dwells_ms.len() >= 3);
        let setting = Scene::new(Level::High, Level::Low).with_target(Target::Weapon);
        let d = m.decimation() as f64;
        let mut surfaces = Vec::new();
        for i in 0..3 {
            let (gx, gy) = m.to_grid(s.targets[i].0, s.targets[i].1);
            surfaces.push(single_fixation_surface(&Fixation::new(gx, gy, s.dwells_ms[i]), m.family(), &setting, &m.geometry).unwrap());
            let sum = compose(&m.geometry, &surfaces).unwrap();
            let values = sum.values();
            let w = m.geometry.width_px as usize;
            let best = (0..values.len()).fold(0, |b, j| if values[j] < values[b] { j } else { b });
            let expected = ((best % w) as f64 * d, (best / w) as f64 * d);
            assert_eq!(s.targets[i + 1], expected, "fixation {}", i + 1);
        }
    }

    #[test]
    fn generated_saccades_are_classified_as_saccades() {
        let m = test_model();
        let s = synthesize(&fixed(3000.0), &trial("s", false), &m, None).unwrap();
        let gaze: Vec<GazeSample> = s
            .records
            .iter()
            .filter_map(|r| match r.input() {
                Some(TrialInput::Gaze(g)) => Some(GazeSample { t_ms: g.t_ms - 500.0, ..g }),
                _ => None,
            })
            .collect();
        let cfg = EngineConfig::for_model(&m).classifier;
        let events = classify_oculomotor(&gaze, cfg).unwrap();
        let saccades = events.iter().filter(|e| matches!(e, aaad_core::engine::OculomotorEvent::SaccadeOnset { .. })).count();
        // Every completed saccade before the stop is detected, none invented.
        let completed = s.targets.len() - 1;
        assert!(saccades == completed || saccades + 1 == completed, "{saccades} detected for {completed} planned");
        assert_eq!(s.report.n_eyemovements as usize, saccades);
    }

    #[test]
    fn simulation_arms_share_their_schedule() {
        let m = test_model();
        let arms = [
            Arm { name: "fixed".into(), params: fixed(3000.0) },
            Arm {
                name: "trigger".into(),
                params: SyntheticObserverParams::new(
                    0,
                    SaccadePolicy::Uniform,
                    StopPolicy::TriggerPlusReaction { delay_ms: 300.0, cap_ms: 10_000.0 },
                ),
            },
        ];
        let r = simulate(&m, &arms, 12, 8).unwrap();
        assert_eq!(r.arms.len(), 2);
        assert_eq!(r.slowest_arm, "fixed");
        assert!(r.mean_time_ratio > 1.0);
        assert_eq!(simulate(&m, &arms, 12, 8).unwrap(), r);
        assert!(simulate(&m, &arms, 0, 8).is_err());
    }

    #[test]
    fn logs_replay_to_the_closed_loop_report() {
        let m = test_model();
        let s = synthesize(&fixed(2000.0), &trial("r", true), &m, None).unwrap();
        let reports = replay(&m, &s.records, Speed::AsFastAsPossible, EngineConfig::for_model(&m), None).unwrap();
        assert_eq!(reports, vec![s.report]);
    }
}
