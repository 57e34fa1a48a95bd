//! Detectability surfaces and the exploration map.
//!
//! A single-fixation surface revolves the forced-fixation eccentricity
//! curve around the fixation point; surfaces from successive fixations add
//! linearly and the composite score D' is their spatial mean.
//!
//! Surface values are stored in fixed point (`UNITS_PER_DPRIME` units per
//! d'), so composition is exact integer addition: order-independent and
//! exactly additive under the mean.

use std::collections::BTreeMap;
use std::ops::Add;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ppc::LogEccentricityCurve;
use crate::setting::Setting;

pub const UNITS_PER_DPRIME: f64 = (1u64 << 24) as f64;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridGeometry {
    pub width_px: u32,
    pub height_px: u32,
    /// Degrees of visual angle subtended by one pixel.
    pub deg_per_px: f64,
}

impl Default for GridGeometry {
    fn default() -> Self {
        Self { width_px: 1024, height_px: 760, deg_per_px: 0.022 }
    }
}

impl GridGeometry {
    pub fn new(width_px: u32, height_px: u32, deg_per_px: f64) -> Result<Self> {
        if width_px == 0 || height_px == 0 {
            return Err(Error::InvalidInput(format!("empty grid {width_px}x{height_px}")));
        }
        if !(deg_per_px > 0.0 && deg_per_px.is_finite()) {
            return Err(Error::InvalidInput(format!("deg_per_px {deg_per_px} must be positive")));
        }
        Ok(Self { width_px, height_px, deg_per_px })
    }

    /// Coarser grid covering the same visual field.
    pub fn decimated(&self, factor: u32) -> Result<Self> {
        if factor == 0 {
            return Err(Error::InvalidInput("decimation factor must be positive".into()));
        }
        Self::new(
            self.width_px.div_ceil(factor),
            self.height_px.div_ceil(factor),
            self.deg_per_px * factor as f64,
        )
    }

    pub fn pixels(&self) -> usize {
        self.width_px as usize * self.height_px as usize
    }

    pub fn contains(&self, x: f64, y: f64) -> bool {
        x >= 0.0 && y >= 0.0 && x <= (self.width_px - 1) as f64 && y <= (self.height_px - 1) as f64
    }

    fn check_same(&self, other: &GridGeometry) -> Result<()> {
        if self != other {
            return Err(Error::GeometryMismatch { expected: self.describe(), found: other.describe() });
        }
        Ok(())
    }

    pub fn describe(&self) -> String {
        format!("{}x{}@{}deg/px", self.width_px, self.height_px, self.deg_per_px)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Fixation {
    pub x_px: f64,
    pub y_px: f64,
    pub duration_ms: f64,
}

impl Fixation {
    pub fn new(x_px: f64, y_px: f64, duration_ms: f64) -> Self {
        Self { x_px, y_px, duration_ms }
    }

    /// Pixel the fixation is rendered at.
    fn pixel(&self, geom: &GridGeometry) -> (i64, i64) {
        let x = self.x_px.round().clamp(0.0, (geom.width_px - 1) as f64) as i64;
        let y = self.y_px.round().clamp(0.0, (geom.height_px - 1) as f64) as i64;
        (x, y)
    }
}

/// Eccentricity curves of one setting at increasing forced-fixation
/// durations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<LogEccentricityCurve>", into = "Vec<LogEccentricityCurve>")]
pub struct TimeCurves(Vec<LogEccentricityCurve>);

impl TryFrom<Vec<LogEccentricityCurve>> for TimeCurves {
    type Error = Error;

    fn try_from(curves: Vec<LogEccentricityCurve>) -> Result<Self> {
        TimeCurves::new(curves)
    }
}

impl From<TimeCurves> for Vec<LogEccentricityCurve> {
    fn from(t: TimeCurves) -> Self {
        t.0
    }
}

impl TimeCurves {
    pub fn new(curves: Vec<LogEccentricityCurve>) -> Result<Self> {
        if curves.is_empty() {
            return Err(Error::InvalidInput("no eccentricity curves".into()));
        }
        for c in &curves {
            if !(c.time_condition_ms > 0.0 && c.alpha_e.is_finite() && c.beta_e.is_finite()) {
                return Err(Error::InvalidInput(format!("invalid eccentricity curve {c:?}")));
            }
        }
        if curves.windows(2).any(|w| w[1].time_condition_ms <= w[0].time_condition_ms) {
            return Err(Error::InvalidInput("time conditions must be strictly increasing".into()));
        }
        Ok(Self(curves))
    }

    pub fn curves(&self) -> &[LogEccentricityCurve] {
        &self.0
    }

    /// Intercept and slope of the curve interpolated to `duration_ms`,
    /// linear in log-duration and clamped to the measured conditions.
    pub fn coefficients(&self, duration_ms: f64) -> (f64, f64) {
        let c = &self.0;
        let first = &c[0];
        let last = &c[c.len() - 1];
        if duration_ms <= first.time_condition_ms {
            return (first.alpha_e, first.beta_e);
        }
        if duration_ms >= last.time_condition_ms {
            return (last.alpha_e, last.beta_e);
        }
        let i = c.partition_point(|k| k.time_condition_ms <= duration_ms);
        let (lo, hi) = (&c[i - 1], &c[i]);
        if lo.time_condition_ms == duration_ms {
            return (lo.alpha_e, lo.beta_e);
        }
        let w = (duration_ms.ln() - lo.time_condition_ms.ln())
            / (hi.time_condition_ms.ln() - lo.time_condition_ms.ln());
        (
            lo.alpha_e + w * (hi.alpha_e - lo.alpha_e),
            lo.beta_e + w * (hi.beta_e - lo.beta_e),
        )
    }

    /// Interpolated d' at a duration and eccentricity, floored at zero.
    pub fn eval(&self, duration_ms: f64, ecc_deg: f64) -> f64 {
        let (a, b) = self.coefficients(duration_ms);
        (a + b * ecc_deg.max(1.0).ln()).max(0.0)
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct CurveFamily {
    curves: BTreeMap<Setting, TimeCurves>,
}

impl CurveFamily {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, setting: Setting, curves: TimeCurves) {
        self.curves.insert(setting, curves);
    }

    pub fn get(&self, setting: &Setting) -> Result<&TimeCurves> {
        self.curves.get(setting).ok_or(Error::UnknownSetting(*setting))
    }

    pub fn iter(&self) -> impl Iterator<Item = (&Setting, &TimeCurves)> {
        self.curves.iter()
    }
}

/// Exact sum of fixed-point surface values over a grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DScore {
    pub sum_units: u128,
    pub pixels: u64,
}

impl DScore {
    pub fn zero(geom: &GridGeometry) -> Self {
        Self { sum_units: 0, pixels: geom.pixels() as u64 }
    }

    pub fn value(&self) -> f64 {
        self.sum_units as f64 / UNITS_PER_DPRIME / self.pixels as f64
    }
}

impl Add for DScore {
    type Output = DScore;

    fn add(self, rhs: DScore) -> DScore {
        assert_eq!(self.pixels, rhs.pixels, "D' scores from different grids");
        DScore { sum_units: self.sum_units + rhs.sum_units, pixels: self.pixels }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SurfaceGrid {
    geometry: GridGeometry,
    units: Vec<u64>,
}

impl SurfaceGrid {
    pub fn zeros(geometry: GridGeometry) -> Self {
        Self { units: vec![0; geometry.pixels()], geometry }
    }

    pub fn from_values(geometry: GridGeometry, values: &[f64]) -> Result<Self> {
        if values.len() != geometry.pixels() {
            return Err(Error::InvalidInput(format!(
                "{} values for a {} grid",
                values.len(),
                geometry.describe()
            )));
        }
        if let Some(v) = values.iter().find(|v| !(v.is_finite() && **v >= 0.0)) {
            return Err(Error::InvalidInput(format!("surface value {v} must be finite and >= 0")));
        }
        Ok(Self { units: values.iter().map(|&v| quantize(v)).collect(), geometry })
    }

    pub fn geometry(&self) -> &GridGeometry {
        &self.geometry
    }

    pub fn get(&self, x: u32, y: u32) -> f64 {
        self.units[(y * self.geometry.width_px + x) as usize] as f64 / UNITS_PER_DPRIME
    }

    pub fn values(&self) -> Vec<f64> {
        self.units.iter().map(|&u| u as f64 / UNITS_PER_DPRIME).collect()
    }

    pub fn max(&self) -> f64 {
        self.units.iter().copied().max().unwrap_or(0) as f64 / UNITS_PER_DPRIME
    }

    pub fn score(&self) -> DScore {
        DScore {
            sum_units: self.units.iter().map(|&u| u as u128).sum(),
            pixels: self.units.len() as u64,
        }
    }

    pub fn add_assign(&mut self, other: &SurfaceGrid) -> Result<()> {
        self.geometry.check_same(&other.geometry)?;
        for (a, b) in self.units.iter_mut().zip(&other.units) {
            *a += *b;
        }
        Ok(())
    }
}

/// Round to the nearest unit; negative values saturate to zero in the cast.
#[inline]
fn quantize(v: f64) -> u64 {
    (v * UNITS_PER_DPRIME + 0.5) as u64
}

/// Precomputed clamped log-eccentricity for every pixel offset `(dx, dy)`
/// in one quadrant, shared by every fixation rendered on a grid. Rows are
/// read sequentially, which keeps the per-fixation pass memory-bound
/// rather than latency-bound.
#[derive(Debug, Clone)]
pub struct SurfaceRenderer {
    geometry: GridGeometry,
    log_ecc: Arc<Vec<f64>>,
}

impl SurfaceRenderer {
    pub fn new(geometry: GridGeometry) -> Self {
        let w = geometry.width_px as usize;
        let h = geometry.height_px as usize;
        let ln_dpp = geometry.deg_per_px.ln();
        let mut log_ecc = Vec::with_capacity(w * h);
        for dy in 0..h {
            for dx in 0..w {
                let r2 = dx * dx + dy * dy;
                log_ecc.push(if r2 == 0 { 0.0 } else { (0.5 * (r2 as f64).ln() + ln_dpp).max(0.0) });
            }
        }
        Self { geometry, log_ecc: Arc::new(log_ecc) }
    }

    pub fn geometry(&self) -> &GridGeometry {
        &self.geometry
    }

    fn check(&self, f: &Fixation) -> Result<()> {
        if !(f.duration_ms > 0.0 && f.duration_ms.is_finite()) {
            return Err(Error::InvalidInput(format!("fixation duration {} must be positive", f.duration_ms)));
        }
        if !self.geometry.contains(f.x_px, f.y_px) {
            return Err(Error::InvalidInput(format!(
                "fixation ({}, {}) outside {}",
                f.x_px,
                f.y_px,
                self.geometry.describe()
            )));
        }
        Ok(())
    }

    fn lut_row(&self, dy: usize) -> &[f64] {
        let w = self.geometry.width_px as usize;
        &self.log_ecc[dy * w..(dy + 1) * w]
    }

    /// Full single-fixation surface.
    pub fn render(&self, f: &Fixation, curves: &TimeCurves) -> Result<SurfaceGrid> {
        let mut out = SurfaceGrid::zeros(self.geometry);
        self.accumulate(&mut out, f, curves)?;
        Ok(out)
    }

    /// Add a single-fixation surface into `target`, returning its score.
    pub fn accumulate(&self, target: &mut SurfaceGrid, f: &Fixation, curves: &TimeCurves) -> Result<DScore> {
        self.check(f)?;
        self.geometry.check_same(&target.geometry)?;
        let (a, b) = curves.coefficients(f.duration_ms);
        let (fx, fy) = f.pixel(&self.geometry);
        let w = self.geometry.width_px as usize;
        let fx = fx as usize;
        let mut sum: u128 = 0;
        for (y, row) in target.units.chunks_exact_mut(w).enumerate() {
            let lut = self.lut_row((y as i64 - fy).unsigned_abs() as usize);
            let mut row_sum: u64 = 0;
            let (left, right) = row.split_at_mut(fx);
            for (cell, l) in right.iter_mut().zip(lut) {
                let u = quantize(a + b * l);
                *cell += u;
                row_sum += u;
            }
            for (cell, l) in left.iter_mut().rev().zip(&lut[1..]) {
                let u = quantize(a + b * l);
                *cell += u;
                row_sum += u;
            }
            sum += row_sum as u128;
        }
        Ok(DScore { sum_units: sum, pixels: self.geometry.pixels() as u64 })
    }

    /// Score of a single-fixation surface without materializing it. Rows and
    /// columns at equal distance from the fixation share their values.
    pub fn score(&self, f: &Fixation, curves: &TimeCurves) -> Result<DScore> {
        self.check(f)?;
        let (a, b) = curves.coefficients(f.duration_ms);
        let (fx, fy) = f.pixel(&self.geometry);
        let (w, h) = (self.geometry.width_px as i64, self.geometry.height_px as i64);
        let (left, right) = (fx, w - 1 - fx);
        let (up, down) = (fy, h - 1 - fy);
        let mult = |d: i64, lo: i64, hi: i64| -> u64 { if d == 0 { 1 } else { (d <= lo) as u64 + (d <= hi) as u64 } };

        let mut sum: u128 = 0;
        for dy in 0..=up.max(down) {
            let row_mult = mult(dy, up, down);
            let lut = self.lut_row(dy as usize);
            let mut row_sum: u64 = 0;
            for (dx, l) in lut[..=left.max(right) as usize].iter().enumerate() {
                let dx = dx as i64;
                let u = quantize(a + b * l);
                if u == 0 && b <= 0.0 && dx > 0 {
                    // Non-increasing profile: the rest of this row is zero.
                    break;
                }
                row_sum += u * mult(dx, left, right);
            }
            sum += row_sum as u128 * row_mult as u128;
        }
        Ok(DScore { sum_units: sum, pixels: self.geometry.pixels() as u64 })
    }
}

/// Single-fixation detectability surface for `setting`.
pub fn single_fixation_surface(
    f: &Fixation,
    family: &CurveFamily,
    setting: &Setting,
    geom: &GridGeometry,
) -> Result<SurfaceGrid> {
    let curves = family.get(setting)?;
    SurfaceRenderer::new(*geom).render(f, curves)
}

/// Pixel-wise (L1) sum of surfaces.
pub fn compose(geometry: &GridGeometry, surfaces: &[SurfaceGrid]) -> Result<SurfaceGrid> {
    let mut out = SurfaceGrid::zeros(*geometry);
    for s in surfaces {
        out.add_assign(s)?;
    }
    Ok(out)
}

/// Composite detectability score: spatial mean of the surface.
pub fn d_score(s: &SurfaceGrid) -> f64 {
    s.score().value()
}

/// Dense clutter field on [0, 1].
#[derive(Debug, Clone, PartialEq)]
pub struct ClutterMap {
    geometry: GridGeometry,
    values: Vec<f64>,
}

impl ClutterMap {
    pub fn new(geometry: GridGeometry, values: Vec<f64>) -> Result<Self> {
        if values.len() != geometry.pixels() {
            return Err(Error::InvalidInput(format!(
                "{} clutter values for a {} grid",
                values.len(),
                geometry.describe()
            )));
        }
        if let Some(v) = values.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::InvalidInput(format!("clutter value {v} outside [0, 1]")));
        }
        Ok(Self { geometry, values })
    }

    pub fn uniform(geometry: GridGeometry, value: f64) -> Result<Self> {
        Self::new(geometry, vec![value; geometry.pixels()])
    }

    pub fn geometry(&self) -> &GridGeometry {
        &self.geometry
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn get(&self, x: u32, y: u32) -> f64 {
        self.values[(y * self.geometry.width_px + x) as usize]
    }

    /// Index of the largest value, lowest index on ties.
    pub fn argmax(&self) -> (u32, u32) {
        let mut best = 0;
        for (i, &v) in self.values.iter().enumerate() {
            if v > self.values[best] {
                best = i;
            }
        }
        let w = self.geometry.width_px as usize;
        ((best % w) as u32, (best / w) as u32)
    }
}

/// `fc * (1 - s / max(s))`; an all-zero surface leaves the clutter map
/// unchanged.
pub fn exploration_map(fc: &ClutterMap, s: &SurfaceGrid) -> Result<ClutterMap> {
    fc.geometry.check_same(&s.geometry)?;
    let max = s.units.iter().copied().max().unwrap_or(0);
    let values = if max == 0 {
        fc.values.clone()
    } else {
        let max = max as f64;
        fc.values
            .iter()
            .zip(&s.units)
            .map(|(&c, &u)| c * (1.0 - u as f64 / max))
            .collect()
    };
    Ok(ClutterMap { geometry: fc.geometry, values })
}

/// Grayscale luminance raster.
#[derive(Debug, Clone, PartialEq)]
pub struct Luminance {
    pub width: u32,
    pub height: u32,
    pub values: Vec<f64>,
}

pub const CLUTTER_WINDOW: usize = 31;

/// Local-contrast clutter stand-in: standard deviation of luminance over a
/// `window x window` neighbourhood (clipped at the borders), min-max
/// normalized.
pub fn clutter_proxy(image: &Luminance, geometry: &GridGeometry, window: usize) -> Result<ClutterMap> {
    if image.width != geometry.width_px || image.height != geometry.height_px {
        return Err(Error::GeometryMismatch {
            expected: geometry.describe(),
            found: format!("{}x{} image", image.width, image.height),
        });
    }
    if image.values.len() != geometry.pixels() {
        return Err(Error::InvalidInput("image buffer size does not match its dimensions".into()));
    }
    if window == 0 {
        return Err(Error::InvalidInput("window must be positive".into()));
    }
    let (w, h) = (image.width as usize, image.height as usize);
    let stride = w + 1;
    let mut sum = vec![0.0f64; stride * (h + 1)];
    let mut sq = vec![0.0f64; stride * (h + 1)];
    for y in 0..h {
        let (mut rs, mut rq) = (0.0, 0.0);
        for x in 0..w {
            let v = image.values[y * w + x];
            rs += v;
            rq += v * v;
            sum[(y + 1) * stride + x + 1] = sum[y * stride + x + 1] + rs;
            sq[(y + 1) * stride + x + 1] = sq[y * stride + x + 1] + rq;
        }
    }
    let r = window / 2;
    let mut out = Vec::with_capacity(w * h);
    for y in 0..h {
        let (y0, y1) = (y.saturating_sub(r), (y + r + 1).min(h));
        for x in 0..w {
            let (x0, x1) = (x.saturating_sub(r), (x + r + 1).min(w));
            let n = ((y1 - y0) * (x1 - x0)) as f64;
            let area = |t: &[f64]| t[y1 * stride + x1] - t[y0 * stride + x1] - t[y1 * stride + x0] + t[y0 * stride + x0];
            let mean = area(&sum) / n;
            let var = (area(&sq) / n - mean * mean).max(0.0);
            out.push(var.sqrt());
        }
    }
    let lo = out.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = out.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if hi > lo {
        for v in &mut out {
            *v = (*v - lo) / (hi - lo);
        }
    } else {
        out.iter_mut().for_each(|v| *v = 0.0);
    }
    ClutterMap::new(*geometry, out)
}
