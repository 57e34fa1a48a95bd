//! A parametric reference observer used to generate synthetic
//! psychometric datasets with known generating curves.

use aaad_core::bundle::BundleDocument;
use aaad_core::dataset::{fit_bundle, FitOptions, ForcedFixationRecord, PsychometricRecord, Table, TIME_CONDITIONS_MS};
use aaad_core::ppc::MetricKind;
use aaad_core::sdt::normal_cdf;
use aaad_core::{Level, Result, Setting, Target};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// Forced-fixation display durations.
pub const FORCED_FIXATION_MS: [f64; 5] = [100.0, 200.0, 400.0, 900.0, 1600.0];
pub const FORCED_ECCENTRICITIES_DEG: [f64; 5] = [1.0, 2.5, 5.0, 10.0, 15.0];

/// Generating parameters for one setting.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SettingTruth {
    pub setting: Setting,
    pub alpha: f64,
    pub lambda: f64,
    pub time_beta: f64,
    pub eye_beta: f64,
    pub pc_inf: f64,
    pub gamma: f64,
    /// Peak d' at 1 deg for long forced fixations.
    pub ecc_alpha: f64,
    pub ecc_beta: f64,
    /// Forced-fixation build-up time constant.
    pub ecc_tau_ms: f64,
}

impl SettingTruth {
    pub fn for_setting(setting: Setting) -> Self {
        let z = match setting.zoom {
            Level::High => 1.0,
            Level::Medium => 0.9,
            Level::Low => 0.8,
        };
        let k = match setting.clutter {
            Level::Low => 1.0,
            Level::Medium => 0.92,
            Level::High => 0.84,
        };
        let tf = match setting.target {
            Target::Person => 1.15,
            Target::Weapon => 1.0,
        };
        let alpha = 2.4 * z * k * tf;
        Self {
            setting,
            alpha,
            lambda: 0.9,
            time_beta: 0.0025,
            eye_beta: 0.45,
            pc_inf: 0.5 + 0.4 * z * k,
            gamma: 2.0,
            ecc_alpha: 2.0 * (0.8 + 0.2 * z * k) * tf,
            ecc_beta: -0.7,
            ecc_tau_ms: 250.0,
        }
    }

    pub fn time_dprime(&self, t_ms: f64) -> f64 {
        self.alpha * (1.0 - (-self.time_beta * t_ms).exp())
    }

    pub fn eye_dprime(&self, n: f64) -> f64 {
        self.alpha * (1.0 - (-self.eye_beta * n).exp())
    }

    pub fn detect_pc(&self, d: f64) -> f64 {
        self.pc_inf - (self.pc_inf - 0.5) * (-self.gamma * d).exp()
    }

    pub fn forced_dprime(&self, ecc_deg: f64, t_ms: f64) -> f64 {
        (1.0 - (-t_ms / self.ecc_tau_ms).exp()) * (self.ecc_alpha + self.ecc_beta * ecc_deg.max(1.0).ln())
    }
}

/// Trial counts per cell of the synthetic design.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Design {
    pub per_time_condition: usize,
    pub per_eye_count: usize,
    pub max_eye_count: u32,
    pub detectability_trials: usize,
    pub d_score_max: f64,
    pub per_forced_cell: usize,
}

impl Default for Design {
    fn default() -> Self {
        Self {
            per_time_condition: 200,
            per_eye_count: 150,
            max_eye_count: 12,
            detectability_trials: 2000,
            d_score_max: 4.0,
            per_forced_cell: 200,
        }
    }
}

fn respond(rng: &mut ChaCha8Rng, present: bool, d: f64, lambda: f64) -> bool {
    let p = if present { normal_cdf(d - lambda) } else { normal_cdf(-lambda) };
    rng.random::<f64>() < p
}

fn record(s: Setting, kind: MetricKind, v: f64, present: bool, response: bool) -> PsychometricRecord {
    PsychometricRecord {
        setting_zoom: s.zoom,
        setting_clutter: s.clutter,
        target: s.target,
        metric_kind: kind,
        metric_value: v,
        target_present: present,
        response_present: response,
    }
}

/// Balanced present/absent trials for every setting, drawn from `truths`.
pub fn generate_dataset(
    truths: &[SettingTruth],
    design: &Design,
    seed: u64,
) -> (Vec<PsychometricRecord>, Vec<ForcedFixationRecord>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut psy = Vec::new();
    let mut ff = Vec::new();
    for tr in truths {
        let s = tr.setting;
        for &t in &TIME_CONDITIONS_MS {
            for i in 0..design.per_time_condition {
                let present = i % 2 == 0;
                let r = respond(&mut rng, present, tr.time_dprime(t), tr.lambda);
                psy.push(record(s, MetricKind::TimeMs, t, present, r));
            }
        }
        for n in 1..=design.max_eye_count {
            for i in 0..design.per_eye_count {
                let present = i % 2 == 0;
                let r = respond(&mut rng, present, tr.eye_dprime(n as f64), tr.lambda);
                psy.push(record(s, MetricKind::EyeMovements, n as f64, present, r));
            }
        }
        for i in 0..design.detectability_trials {
            let present = i % 2 == 0;
            let d: f64 = rng.random_range(0.0..design.d_score_max);
            let correct = rng.random::<f64>() < tr.detect_pc(d);
            psy.push(record(s, MetricKind::DScore, (d * 1e4).round() / 1e4, present, if correct { present } else { !present }));
        }
        for &t in &FORCED_FIXATION_MS {
            for &e in &FORCED_ECCENTRICITIES_DEG {
                for i in 0..design.per_forced_cell {
                    let present = i % 2 == 0;
                    let response = respond(&mut rng, present, tr.forced_dprime(e, t), tr.lambda);
                    ff.push(ForcedFixationRecord {
                        setting_zoom: s.zoom,
                        setting_clutter: s.clutter,
                        target: s.target,
                        eccentricity_deg: e,
                        time_ms: t,
                        target_present: present,
                        response_present: response,
                    });
                }
            }
        }
    }
    (psy, ff)
}

pub fn all_truths() -> Vec<SettingTruth> {
    Setting::all().map(SettingTruth::for_setting).collect()
}

/// Seed of the dataset committed under `data/`.
pub const REFERENCE_SEED: u64 = 20_240_601;

/// Fit a bundle to a freshly generated reference dataset.
pub fn reference_bundle(seed: u64, opts: &FitOptions) -> Result<BundleDocument> {
    let (psy, ff) = generate_dataset(&all_truths(), &Design::default(), seed);
    fit_bundle(&Table::from_records(psy), &Table::from_records(ff), opts)
}
