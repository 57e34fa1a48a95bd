//! Psychometric CSV ingestion and the fitting pipeline that turns trial
//! records into a `ppc-bundle/1` document.

use std::collections::BTreeMap;
use std::fmt;
use std::io::Read;

use serde::{Deserialize, Serialize};

use crate::bundle::{BundleDocument, SettingModel};
use crate::error::{Error, Result};
use crate::ppc::{
    build_pc_curve, fit_detectability_ppc, fit_exponential, fit_log_eccentricity, lambda_for_eyemvmt_ppc,
    lambda_for_time_ppc, BinnedPc, FitPoint, MetricKind, PcCurve,
};
use crate::satisfaction::SatisfactionConfig;
use crate::sdt::{self, ConfusionCounts};
use crate::setting::{Level, Setting, Target};
use crate::surface::{GridGeometry, TimeCurves};

/// Free-search display durations.
pub const TIME_CONDITIONS_MS: [f64; 5] = [200.0, 400.0, 800.0, 1800.0, 3200.0];

fn flag<'de, D: serde::Deserializer<'de>>(d: D) -> std::result::Result<bool, D::Error> {
    match u8::deserialize(d)? {
        0 => Ok(false),
        1 => Ok(true),
        v => Err(serde::de::Error::custom(format!("flag must be 0 or 1, got {v}"))),
    }
}

fn unflag<S: serde::Serializer>(v: &bool, s: S) -> std::result::Result<S::Ok, S::Error> {
    s.serialize_u8(*v as u8)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PsychometricRecord {
    pub setting_zoom: Level,
    pub setting_clutter: Level,
    pub target: Target,
    pub metric_kind: MetricKind,
    pub metric_value: f64,
    #[serde(deserialize_with = "flag", serialize_with = "unflag")]
    pub target_present: bool,
    #[serde(deserialize_with = "flag", serialize_with = "unflag")]
    pub response_present: bool,
}

impl PsychometricRecord {
    pub fn setting(&self) -> Setting {
        Setting { zoom: self.setting_zoom, clutter: self.setting_clutter, target: self.target }
    }
}

/// One forced-fixation trial: target at a fixed eccentricity, shown for a
/// fixed duration while the eyes stay put.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ForcedFixationRecord {
    pub setting_zoom: Level,
    pub setting_clutter: Level,
    pub target: Target,
    pub eccentricity_deg: f64,
    pub time_ms: f64,
    #[serde(deserialize_with = "flag", serialize_with = "unflag")]
    pub target_present: bool,
    #[serde(deserialize_with = "flag", serialize_with = "unflag")]
    pub response_present: bool,
}

impl ForcedFixationRecord {
    pub fn setting(&self) -> Setting {
        Setting { zoom: self.setting_zoom, clutter: self.setting_clutter, target: self.target }
    }
}

pub const PSYCHOMETRIC_HEADER: [&str; 7] =
    ["setting_zoom", "setting_clutter", "target", "metric_kind", "metric_value", "target_present", "response_present"];
pub const FORCED_FIXATION_HEADER: [&str; 7] =
    ["setting_zoom", "setting_clutter", "target", "eccentricity_deg", "time_ms", "target_present", "response_present"];

/// Records paired with their 1-based CSV line numbers (header = line 1).
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Table<R> {
    pub rows: Vec<(usize, R)>,
}

impl<R> Table<R> {
    pub fn from_records(records: Vec<R>) -> Self {
        Self { rows: records.into_iter().enumerate().map(|(i, r)| (i + 2, r)).collect() }
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }
}

fn read_table<R: for<'de> Deserialize<'de>>(input: impl Read, header: &[&str]) -> Result<Table<R>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(input);
    let found = rdr.headers().map_err(|e| Error::Parse(e.to_string()))?.clone();
    if found.is_empty() {
        return Err(Error::InvalidInput("empty file".into()));
    }
    if found.iter().ne(header.iter().copied()) {
        let missing: Vec<&str> = header.iter().copied().filter(|h| !found.iter().any(|f| f == *h)).collect();
        let detail = if missing.is_empty() {
            format!("found `{}`", found.iter().collect::<Vec<_>>().join(","))
        } else {
            format!("missing column(s) {}", missing.iter().map(|m| format!("`{m}`")).collect::<Vec<_>>().join(", "))
        };
        return Err(Error::Parse(format!("expected header `{}`: {detail}", header.join(","))));
    }
    let mut rows = Vec::new();
    for (i, rec) in rdr.deserialize::<R>().enumerate() {
        let line = i + 2;
        rows.push((line, rec.map_err(|e| Error::Parse(format!("line {line}: {e}")))?));
    }
    if rows.is_empty() {
        return Err(Error::InvalidInput("no data rows".into()));
    }
    Ok(Table { rows })
}

pub fn read_psychometric(input: impl Read) -> Result<Table<PsychometricRecord>> {
    let t: Table<PsychometricRecord> = read_table(input, &PSYCHOMETRIC_HEADER)?;
    for (line, r) in &t.rows {
        if !(r.metric_value >= 0.0 && r.metric_value.is_finite()) {
            return Err(Error::InvalidInput(format!("line {line}: metric_value {} must be finite and >= 0", r.metric_value)));
        }
        if r.metric_kind == MetricKind::TimeMs && !TIME_CONDITIONS_MS.contains(&r.metric_value) {
            return Err(Error::InvalidInput(format!("line {line}: {} ms is not a free-search time condition", r.metric_value)));
        }
    }
    Ok(t)
}

pub fn read_forced_fixation(input: impl Read) -> Result<Table<ForcedFixationRecord>> {
    let t: Table<ForcedFixationRecord> = read_table(input, &FORCED_FIXATION_HEADER)?;
    for (line, r) in &t.rows {
        if !(r.eccentricity_deg >= 0.0 && r.eccentricity_deg.is_finite()) || !(r.time_ms > 0.0 && r.time_ms.is_finite()) {
            return Err(Error::InvalidInput(format!("line {line}: eccentricity/time out of range")));
        }
    }
    Ok(t)
}

pub fn write_psychometric(records: &[PsychometricRecord]) -> String {
    write_table(records)
}

pub fn write_forced_fixation(records: &[ForcedFixationRecord]) -> String {
    write_table(records)
}

fn write_table<R: Serialize>(records: &[R]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in records {
        w.serialize(r).expect("in-memory csv write");
    }
    String::from_utf8(w.into_inner().expect("in-memory csv flush")).expect("csv is utf-8")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Channel {
    Time,
    EyeMovements,
    Detectability,
    Eccentricity,
}

/// A fit that could not be completed, with the CSV lines it drew on.
#[derive(Debug, Clone, PartialEq)]
pub struct FitFailure {
    pub setting: Setting,
    pub channel: Channel,
    pub lines: Vec<usize>,
    pub message: String,
}

impl fmt::Display for FitFailure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {:?}: {} (lines {})", self.setting, self.channel, self.message, compress_lines(&self.lines))
    }
}

pub fn describe_failures(fs: &[FitFailure]) -> String {
    fs.iter().map(|f| f.to_string()).collect::<Vec<_>>().join("; ")
}

fn compress_lines(lines: &[usize]) -> String {
    let mut sorted = lines.to_vec();
    sorted.sort_unstable();
    let mut out: Vec<String> = Vec::new();
    let mut i = 0;
    while i < sorted.len() {
        let mut j = i;
        while j + 1 < sorted.len() && sorted[j + 1] == sorted[j] + 1 {
            j += 1;
        }
        out.push(if i == j { sorted[i].to_string() } else { format!("{}-{}", sorted[i], sorted[j]) });
        i = j + 1;
    }
    if out.is_empty() {
        "none".into()
    } else {
        out.join(",")
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitOptions {
    pub bins: usize,
    pub sigma_floor: f64,
    pub geometry: GridGeometry,
    pub satisfaction: SatisfactionConfig,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            bins: 10,
            sigma_floor: crate::ppc::SIGMA_FLOOR,
            geometry: GridGeometry::default(),
            satisfaction: SatisfactionConfig::default(),
        }
    }
}

fn counts<'a>(rows: impl Iterator<Item = (bool, bool)> + 'a) -> ConfusionCounts {
    let mut c = ConfusionCounts::default();
    for (present, response) in rows {
        c.record(present, response);
    }
    c
}

fn binned(x: f64, c: &ConfusionCounts, floor: f64) -> BinnedPc {
    let n = c.total() as f64;
    let pc = (c.hits + c.correct_rejections) as f64 / n;
    BinnedPc { x, pc_mean: pc, pc_stderr: (pc * (1.0 - pc) / n).sqrt().max(floor) }
}

/// Group rows by a metric key; keys are exact for time conditions and
/// integer counts, so the `f64` bit pattern is a safe map key.
fn group(rows: &[&(usize, PsychometricRecord)], key: impl Fn(f64) -> f64) -> BTreeMap<u64, (f64, Vec<(usize, PsychometricRecord)>)> {
    let mut out: BTreeMap<u64, (f64, Vec<_>)> = BTreeMap::new();
    for (line, r) in rows.iter().map(|x| **x) {
        let k = key(r.metric_value);
        out.entry(k.to_bits()).or_insert_with(|| (k, Vec::new())).1.push((line, r));
    }
    out
}

fn fit_time(rows: &[&(usize, PsychometricRecord)], floor: f64) -> Result<PcCurve> {
    let all = counts(rows.iter().map(|(_, r)| (r.target_present, r.response_present)));
    let weights = all.prior_weights()?;
    let mut points = Vec::new();
    let mut fas = Vec::new();
    let mut bins = Vec::new();
    for (x, group) in group(rows, |v| v).into_values() {
        let c = counts(group.iter().map(|(_, r)| (r.target_present, r.response_present)));
        let (hr, far) = sdt::rates_from_counts(&c)?;
        let ind = sdt::dprime_lambda(hr, far)?;
        points.push(FitPoint::new(x, ind.d_prime, c.total() as f64));
        fas.push(far);
        bins.push(binned(x, &c, floor));
    }
    let dp = fit_exponential(&points)?;
    build_pc_curve(dp, lambda_for_time_ppc(&fas)?, weights, &bins, floor)
}

fn fit_eye_movements(rows: &[&(usize, PsychometricRecord)], floor: f64) -> Result<PcCurve> {
    let all = counts(rows.iter().map(|(_, r)| (r.target_present, r.response_present)));
    let weights = all.prior_weights()?;
    let mut points = Vec::new();
    let mut lambdas = Vec::new();
    let mut bins = Vec::new();
    for (x, group) in group(rows, f64::round).into_values() {
        let c = counts(group.iter().map(|(_, r)| (r.target_present, r.response_present)));
        if c.present() == 0 || c.absent() == 0 {
            // A count seen only with one trial class carries no d' estimate.
            continue;
        }
        let (hr, far) = sdt::rates_from_counts(&c)?;
        let ind = sdt::dprime_lambda(hr, far)?;
        let z = -ind.lambda;
        let se = (far * (1.0 - far) / c.absent() as f64).sqrt() / sdt::normal_pdf(z);
        points.push(FitPoint::new(x, ind.d_prime, c.total() as f64));
        lambdas.push((ind.lambda, se));
        bins.push(binned(x, &c, floor));
    }
    let dp = fit_exponential(&points)?;
    build_pc_curve(dp, lambda_for_eyemvmt_ppc(&lambdas)?, weights, &bins, floor)
}

fn fit_eccentricity(rows: &[&(usize, ForcedFixationRecord)]) -> Result<TimeCurves> {
    let mut by_time: BTreeMap<u64, BTreeMap<u64, ConfusionCounts>> = BTreeMap::new();
    for (_, r) in rows.iter().map(|x| **x) {
        by_time
            .entry(r.time_ms.to_bits())
            .or_default()
            .entry(r.eccentricity_deg.max(1.0).to_bits())
            .or_default()
            .record(r.target_present, r.response_present);
    }
    let mut curves = Vec::new();
    for (t, eccs) in by_time {
        let t = f64::from_bits(t);
        let mut points = Vec::new();
        for (e, c) in eccs {
            let (hr, far) = sdt::rates_from_counts(&c)?;
            points.push((f64::from_bits(e), sdt::dprime_lambda(hr, far)?.d_prime));
        }
        curves.push(fit_log_eccentricity(&points, t)?);
    }
    TimeCurves::new(curves)
}

/// Fit every setting present in the psychometric table. Any failure aborts
/// the whole bundle and lists every failing (setting, channel).
pub fn fit_bundle(
    data: &Table<PsychometricRecord>,
    forced: &Table<ForcedFixationRecord>,
    opts: &FitOptions,
) -> Result<BundleDocument> {
    if data.is_empty() {
        return Err(Error::InvalidInput("empty psychometric dataset".into()));
    }
    opts.satisfaction.validate()?;
    let mut by_setting: BTreeMap<Setting, Vec<&(usize, PsychometricRecord)>> = BTreeMap::new();
    for row in &data.rows {
        by_setting.entry(row.1.setting()).or_default().push(row);
    }
    let mut ff_by_setting: BTreeMap<Setting, Vec<&(usize, ForcedFixationRecord)>> = BTreeMap::new();
    for row in &forced.rows {
        ff_by_setting.entry(row.1.setting()).or_default().push(row);
    }

    let mut failures = Vec::new();
    let mut settings = Vec::new();
    for (setting, rows) in &by_setting {
        let of_kind = |k: MetricKind| rows.iter().copied().filter(|r| r.1.metric_kind == k).collect::<Vec<_>>();
        let mut fail = |channel, lines: Vec<usize>, e: Error| {
            failures.push(FitFailure { setting: *setting, channel, lines, message: e.to_string() });
        };
        let lines = |rs: &[&(usize, PsychometricRecord)]| rs.iter().map(|r| r.0).collect::<Vec<_>>();

        let time_rows = of_kind(MetricKind::TimeMs);
        let time = fit_time(&time_rows, opts.sigma_floor).map_err(|e| fail(Channel::Time, lines(&time_rows), e)).ok();
        let eye_rows = of_kind(MetricKind::EyeMovements);
        let eye = fit_eye_movements(&eye_rows, opts.sigma_floor)
            .map_err(|e| fail(Channel::EyeMovements, lines(&eye_rows), e))
            .ok();
        let d_rows = of_kind(MetricKind::DScore);
        let trials: Vec<(f64, bool)> =
            d_rows.iter().map(|(_, r)| (r.metric_value, r.target_present == r.response_present)).collect();
        let detect = fit_detectability_ppc(&trials, opts.bins)
            .and_then(|f| f.into_curve(opts.sigma_floor))
            .map_err(|e| fail(Channel::Detectability, lines(&d_rows), e))
            .ok();
        let ff_rows = ff_by_setting.get(setting).cloned().unwrap_or_default();
        let ecc = if ff_rows.is_empty() {
            fail(Channel::Eccentricity, Vec::new(), Error::InvalidInput("no forced-fixation rows".into()));
            None
        } else {
            fit_eccentricity(&ff_rows)
                .map_err(|e| fail(Channel::Eccentricity, ff_rows.iter().map(|r| r.0).collect(), e))
                .ok()
        };
        if let (Some(time), Some(eye_movements), Some(detectability), Some(eccentricity)) = (time, eye, detect, ecc) {
            settings.push(SettingModel { setting: *setting, time, eye_movements, detectability, eccentricity, thresholds: None });
        }
    }
    if !failures.is_empty() {
        return Err(Error::FitFailed(failures));
    }
    BundleDocument::new(opts.geometry, opts.satisfaction, settings).with_thresholds()
}
