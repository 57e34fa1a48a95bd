//! Session-level aggregation of trial reports.

use serde::{Deserialize, Serialize};

use crate::engine::trial::TrialReport;
use crate::error::{Error, Result};
use crate::setting::Target;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TargetRates {
    pub hit_rate: f64,
    pub miss_rate: f64,
    pub false_alarm_rate: f64,
    pub correct_rejection_rate: f64,
    pub accuracy: f64,
    pub n_present: u64,
    pub n_absent: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionMetrics {
    pub n_trials: usize,
    pub person: TargetRates,
    pub weapon: TargetRates,
    pub mean_trial_time_s: f64,
    /// Mean `duration - trigger time` over trials where the general trigger
    /// fired; `None` if it never did.
    pub mean_general_offset_ms: Option<f64>,
    pub mean_time_offset_ms: Option<f64>,
    pub mean_eye_movement_offset_ms: Option<f64>,
    pub mean_detectability_offset_ms: Option<f64>,
}

fn rates(reports: &[&TrialReport], target: Target) -> Result<TargetRates> {
    let (mut h, mut m, mut fa, mut cr) = (0u64, 0u64, 0u64, 0u64);
    for r in reports {
        let resp = r.responses.expect("only complete reports are aggregated");
        match (r.ground_truth.present(target), resp.response_present(target)) {
            (true, true) => h += 1,
            (true, false) => m += 1,
            (false, true) => fa += 1,
            (false, false) => cr += 1,
        }
    }
    let present = h + m;
    let absent = fa + cr;
    if present == 0 {
        return Err(Error::EmptyTrialClass(match target {
            Target::Person => "person present",
            Target::Weapon => "weapon present",
        }));
    }
    if absent == 0 {
        return Err(Error::EmptyTrialClass(match target {
            Target::Person => "person absent",
            Target::Weapon => "weapon absent",
        }));
    }
    Ok(TargetRates {
        hit_rate: h as f64 / present as f64,
        miss_rate: m as f64 / present as f64,
        false_alarm_rate: fa as f64 / absent as f64,
        correct_rejection_rate: cr as f64 / absent as f64,
        accuracy: (h + cr) as f64 / (present + absent) as f64,
        n_present: present,
        n_absent: absent,
    })
}

fn mean(xs: impl Iterator<Item = f64>) -> Option<f64> {
    let (s, n) = xs.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    (n > 0).then(|| s / n as f64)
}

/// Aggregate the complete reports of a session; incomplete ones are skipped.
pub fn aggregate_session(reports: &[TrialReport]) -> Result<SessionMetrics> {
    let done: Vec<&TrialReport> = reports.iter().filter(|r| r.complete && r.responses.is_some()).collect();
    if done.is_empty() {
        return Err(Error::InvalidInput("no complete trials".into()));
    }
    Ok(SessionMetrics {
        n_trials: done.len(),
        person: rates(&done, Target::Person)?,
        weapon: rates(&done, Target::Weapon)?,
        mean_trial_time_s: mean(done.iter().map(|r| r.duration_ms / 1000.0)).unwrap_or(0.0),
        mean_general_offset_ms: mean(done.iter().filter_map(|r| r.trigger_offsets.general)),
        mean_time_offset_ms: mean(done.iter().filter_map(|r| r.trigger_offsets.time)),
        mean_eye_movement_offset_ms: mean(done.iter().filter_map(|r| r.trigger_offsets.eye_movements)),
        mean_detectability_offset_ms: mean(done.iter().filter_map(|r| r.trigger_offsets.detectability)),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::trial::{GroundTruth, Responses};
    use crate::satisfaction::TriggerTimes;
    use crate::setting::{Level, Scene};

    fn report(person: bool, weapon: bool, pr: u8, wr: u8, duration_ms: f64, general: Option<f64>) -> TrialReport {
        TrialReport {
            trial_id: String::new(),
            image_id: String::new(),
            scene: Scene::new(Level::High, Level::High),
            aid_visible: true,
            ground_truth: GroundTruth { person_present: person, weapon_present: weapon },
            duration_ms,
            n_eyemovements: 0,
            n_fixations: 0,
            final_d_score: 0.0,
            trigger_times: TriggerTimes { general, ..TriggerTimes::default() },
            trigger_offsets: TriggerTimes { general: general.map(|g| duration_ms - g), ..TriggerTimes::default() },
            user_action: None,
            maps_requested: 0,
            paused_ms: 0.0,
            responses: Some(Responses::new(pr, wr)),
            complete: true,
        }
    }

    #[test]
    fn hit_rate_from_counts() {
        let mut rs: Vec<_> = (0..10).map(|i| report(true, i % 2 == 0, if i < 9 { 6 } else { 5 }, 1, 2000.0, None)).collect();
        rs.extend((0..10).map(|i| report(false, i % 2 == 0, 1, 1, 1000.0, None)));
        let m = aggregate_session(&rs).unwrap();
        assert_eq!(m.person.hit_rate, 0.9);
        assert!((m.person.hit_rate + m.person.miss_rate - 1.0).abs() < 1e-15);
        assert_eq!(m.person.correct_rejection_rate, 1.0);
        assert_eq!(m.person.false_alarm_rate, 0.0);
        assert_eq!(m.weapon.hit_rate, 0.0);
        assert_eq!(m.mean_trial_time_s, 1.5);
        assert_eq!(m.mean_general_offset_ms, None);
    }

    #[test]
    fn offsets_skip_unfired_trials() {
        let rs = vec![
            report(true, true, 6, 6, 2000.0, Some(1100.0)),
            report(false, false, 1, 1, 3000.0, None),
            report(true, false, 6, 1, 1500.0, Some(1000.0)),
            report(false, true, 1, 6, 1000.0, None),
        ];
        let m = aggregate_session(&rs).unwrap();
        assert_eq!(m.mean_general_offset_ms, Some((900.0 + 500.0) / 2.0));
    }

    #[test]
    fn empty_class_is_an_error() {
        let rs = vec![report(true, true, 6, 6, 1.0, None)];
        assert!(matches!(aggregate_session(&rs), Err(Error::EmptyTrialClass(_))));
        assert!(aggregate_session(&[]).is_err());
    }
}
