//! Perceptual performance curves (PPCs).
//!
//! Time and eye-movement curves are fitted in d' space with a saturating
//! exponential `d'(x) = alpha * (1 - exp(-beta * x))` and mapped to
//! proportion correct through the SDT mixture. The detectability curve is
//! regressed directly in PC space, pinned at chance for a zero score.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sdt::{self, DetectionIndices, PriorWeights};

/// Default floor on the PC standard deviation profile.
pub const SIGMA_FLOOR: f64 = 0.005;
/// Rate-constant search bracket, per unit of the curve argument.
pub const BETA_MIN: f64 = 1e-5;
pub const BETA_MAX: f64 = 10.0;
const BETA_GRID: usize = 241;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MetricKind {
    TimeMs,
    EyeMovements,
    DScore,
}

impl MetricKind {
    pub fn as_str(self) -> &'static str {
        match self {
            MetricKind::TimeMs => "time_ms",
            MetricKind::EyeMovements => "eye_movements",
            MetricKind::DScore => "d_score",
        }
    }
}

impl std::str::FromStr for MetricKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "time_ms" => Ok(MetricKind::TimeMs),
            "eye_movements" => Ok(MetricKind::EyeMovements),
            "d_score" => Ok(MetricKind::DScore),
            other => Err(Error::Parse(format!("unknown metric kind {other:?}"))),
        }
    }
}

/// One observation for a d'-space regression.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitPoint {
    pub x: f64,
    pub d_prime: f64,
    pub weight: f64,
}

impl FitPoint {
    pub fn new(x: f64, d_prime: f64, weight: f64) -> Self {
        Self { x, d_prime, weight }
    }
}

/// Saturating exponential `alpha * (1 - exp(-beta * x))`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExponentialPpc {
    pub alpha: f64,
    pub beta: f64,
    /// Rate constant pinned at the top of the search bracket: the data were
    /// already at asymptote at the smallest observed argument.
    #[serde(default)]
    pub saturated: bool,
    /// Largest argument seen during fitting; the curve's fitted domain is
    /// `[0, x_max]`.
    pub x_max: f64,
}

impl ExponentialPpc {
    pub fn new(alpha: f64, beta: f64, x_max: f64) -> Result<Self> {
        if !(alpha > 0.0 && beta > 0.0 && alpha.is_finite() && beta.is_finite()) {
            return Err(Error::InvalidInput(format!("alpha={alpha}, beta={beta} must be positive")));
        }
        if !(x_max > 0.0 && x_max.is_finite()) {
            return Err(Error::InvalidInput(format!("x_max={x_max} must be positive")));
        }
        Ok(Self { alpha, beta, saturated: false, x_max })
    }

    pub fn eval(&self, x: f64) -> f64 {
        self.alpha * -(-self.beta * x.max(0.0)).exp_m1()
    }
}

fn weighted_rss(points: &[FitPoint], alpha: f64, beta: f64) -> f64 {
    points
        .iter()
        .map(|p| {
            let r = p.d_prime - alpha * -(-beta * p.x).exp_m1();
            p.weight * r * r
        })
        .sum()
}

/// Optimal amplitude for a fixed rate constant, and the resulting residual.
fn profile(points: &[FitPoint], beta: f64) -> (f64, f64) {
    let (mut num, mut den) = (0.0, 0.0);
    for p in points {
        let g = -(-beta * p.x).exp_m1();
        num += p.weight * p.d_prime * g;
        den += p.weight * g * g;
    }
    let alpha = if den > 0.0 { num / den } else { 0.0 };
    (alpha, weighted_rss(points, alpha, beta))
}

fn validate_points(points: &[FitPoint]) -> Result<()> {
    if points.len() < 3 {
        return Err(Error::Degenerate(format!("need at least 3 points, got {}", points.len())));
    }
    for p in points {
        if !(p.x.is_finite() && p.x >= 0.0 && p.d_prime.is_finite()) {
            return Err(Error::Degenerate(format!("non-finite or negative point {p:?}")));
        }
        if !(p.weight > 0.0 && p.weight.is_finite()) {
            return Err(Error::InvalidInput(format!("weight {} must be positive", p.weight)));
        }
    }
    let mut xs: Vec<f64> = points.iter().map(|p| p.x).collect();
    xs.sort_by(f64::total_cmp);
    xs.dedup();
    if xs.len() < 3 {
        return Err(Error::Degenerate(format!("need 3 distinct x values, got {}", xs.len())));
    }
    Ok(())
}

/// Weighted mean d' per distinct x, in increasing x.
fn means_by_x(points: &[FitPoint]) -> Vec<(f64, f64)> {
    let mut sorted: Vec<FitPoint> = points.to_vec();
    sorted.sort_by(|a, b| a.x.total_cmp(&b.x));
    let mut out: Vec<(f64, f64, f64)> = Vec::new();
    for p in sorted {
        match out.last_mut() {
            Some((x, sum, w)) if *x == p.x => {
                *sum += p.weight * p.d_prime;
                *w += p.weight;
            }
            _ => out.push((p.x, p.weight * p.d_prime, p.weight)),
        }
    }
    out.into_iter().map(|(x, s, w)| (x, s / w)).collect()
}

/// Fit `alpha * (1 - exp(-beta * x))` by weighted least squares in d' space.
///
/// The amplitude is profiled out in closed form; the rate constant is found
/// by a log-spaced scan of `[BETA_MIN, BETA_MAX]`, a golden-section search
/// around the best grid cell and a damped Gauss-Newton polish. The result
/// never has a larger residual than any grid point.
pub fn fit_exponential(points: &[FitPoint]) -> Result<ExponentialPpc> {
    validate_points(points)?;
    let means = means_by_x(points);
    if means.iter().all(|&(_, d)| d <= 0.0) {
        return Err(Error::NoSaturatingTrend);
    }
    if means.windows(2).all(|w| w[1].1 < w[0].1) {
        return Err(Error::NoSaturatingTrend);
    }
    let x_max = means.last().map(|m| m.0).unwrap_or(0.0);

    let (lo, hi) = (BETA_MIN.ln(), BETA_MAX.ln());
    let grid: Vec<f64> = (0..BETA_GRID)
        .map(|i| (lo + (hi - lo) * i as f64 / (BETA_GRID - 1) as f64).exp())
        .collect();
    let mut best = 0;
    let mut best_rss = f64::INFINITY;
    for (i, &b) in grid.iter().enumerate() {
        let (_, rss) = profile(points, b);
        // `<=` keeps the largest rate among exact ties (flat objective once
        // every sample is at asymptote).
        if rss <= best_rss {
            best_rss = rss;
            best = i;
        }
    }
    let (alpha0, _) = profile(points, grid[best]);
    if alpha0 <= 0.0 {
        return Err(Error::NoSaturatingTrend);
    }
    if best == BETA_GRID - 1 {
        return Ok(ExponentialPpc { alpha: alpha0, beta: BETA_MAX, saturated: true, x_max });
    }

    // Golden section on ln(beta) inside the neighbouring grid cells.
    let mut a = grid[best.saturating_sub(1)].ln();
    let mut b = grid[best + 1].ln();
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let mut fc = profile(points, c.exp()).1;
    let mut fd = profile(points, d.exp()).1;
    for _ in 0..80 {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = profile(points, c.exp()).1;
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = profile(points, d.exp()).1;
        }
        if (b - a).abs() < 1e-13 {
            break;
        }
    }
    let mut beta = ((a + b) / 2.0).exp();
    let (mut alpha, mut rss) = profile(points, beta);
    if rss > best_rss {
        beta = grid[best];
        alpha = alpha0;
        rss = best_rss;
    }

    // Levenberg-damped Gauss-Newton on (alpha, beta).
    let mut mu = 1e-3;
    for _ in 0..100 {
        let (mut jtj, mut jtr) = ([[0.0; 2]; 2], [0.0; 2]);
        for p in points {
            let e = (-beta * p.x).exp();
            let g = 1.0 - e;
            let r = p.d_prime - alpha * g;
            let ja = g;
            let jb = alpha * p.x * e;
            jtj[0][0] += p.weight * ja * ja;
            jtj[0][1] += p.weight * ja * jb;
            jtj[1][1] += p.weight * jb * jb;
            jtr[0] += p.weight * ja * r;
            jtr[1] += p.weight * jb * r;
        }
        let mut improved = false;
        for _ in 0..20 {
            let a00 = jtj[0][0] * (1.0 + mu);
            let a11 = jtj[1][1] * (1.0 + mu);
            let det = a00 * a11 - jtj[0][1] * jtj[0][1];
            if !(det.abs() > 0.0) || !det.is_finite() {
                break;
            }
            let da = (a11 * jtr[0] - jtj[0][1] * jtr[1]) / det;
            let db = (a00 * jtr[1] - jtj[0][1] * jtr[0]) / det;
            let (na, nb) = (alpha + da, beta + db);
            if nb > 0.0 && na > 0.0 {
                let nr = weighted_rss(points, na, nb);
                if nr < rss {
                    let step = (da / alpha).abs().max((db / beta).abs());
                    alpha = na;
                    beta = nb;
                    rss = nr;
                    mu = (mu * 0.3).max(1e-12);
                    improved = step > 1e-15;
                    break;
                }
            }
            mu *= 10.0;
        }
        if !improved {
            break;
        }
    }
    Ok(ExponentialPpc { alpha, beta, saturated: false, x_max })
}

/// Criterion for the time curve: `-probit(mean false-alarm rate)`.
pub fn lambda_for_time_ppc(fa_rates: &[f64]) -> Result<f64> {
    if fa_rates.is_empty() {
        return Err(Error::InvalidInput("no false-alarm rates".into()));
    }
    let mean = fa_rates.iter().sum::<f64>() / fa_rates.len() as f64;
    for &r in fa_rates {
        if !(r > 0.0 && r < 1.0) {
            return Err(Error::ProbabilityDomain(r));
        }
    }
    Ok(-sdt::probit(mean)?)
}

/// Criterion for the eye-movement curve: average of per-count estimates
/// weighted by the inverse of their standard error.
pub fn lambda_for_eyemvmt_ppc(estimates: &[(f64, f64)]) -> Result<f64> {
    if estimates.is_empty() {
        return Err(Error::InvalidInput("no criterion estimates".into()));
    }
    let (mut num, mut den) = (0.0, 0.0);
    for &(lambda, se) in estimates {
        if !(se > 0.0 && se.is_finite()) {
            return Err(Error::InvalidInput(format!("standard error {se} must be positive")));
        }
        num += lambda / se;
        den += 1.0 / se;
    }
    Ok(num / den)
}

/// Binned empirical PC with its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BinnedPc {
    pub x: f64,
    pub pc_mean: f64,
    pub pc_stderr: f64,
}

/// Piecewise-linear standard deviation profile, clamped to its end knots
/// and floored.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SigmaProfile {
    pub knots: Vec<(f64, f64)>,
    pub floor: f64,
}

impl SigmaProfile {
    pub fn constant(sigma: f64) -> Self {
        Self { knots: vec![(0.0, sigma)], floor: sigma }
    }

    pub fn from_bins(bins: &[BinnedPc], floor: f64) -> Result<Self> {
        if !(floor > 0.0) {
            return Err(Error::InvalidInput(format!("sigma floor {floor} must be positive")));
        }
        for w in bins.windows(2) {
            if w[1].x < w[0].x {
                return Err(Error::InvalidInput("binned PC not sorted by x".into()));
            }
        }
        for b in bins {
            if !(b.pc_stderr > 0.0) {
                return Err(Error::InvalidInput(format!("bin stderr {} must be positive", b.pc_stderr)));
            }
        }
        Ok(Self { knots: bins.iter().map(|b| (b.x, b.pc_stderr)).collect(), floor })
    }

    pub fn eval(&self, x: f64) -> f64 {
        let raw = match self.knots.as_slice() {
            [] => self.floor,
            [only] => only.1,
            knots => {
                let first = knots[0];
                let last = knots[knots.len() - 1];
                if x <= first.0 {
                    first.1
                } else if x >= last.0 {
                    last.1
                } else {
                    let i = knots.partition_point(|k| k.0 <= x);
                    let (x0, s0) = knots[i - 1];
                    let (x1, s1) = knots[i];
                    if x1 == x0 {
                        s1
                    } else {
                        s0 + (s1 - s0) * (x - x0) / (x1 - x0)
                    }
                }
            }
        };
        raw.max(self.floor)
    }
}

/// A PC curve as consumed by the search-satisfaction model.
pub trait PerformanceCurve {
    fn pc(&self, x: f64) -> f64;
    fn sigma(&self, x: f64) -> f64;
    fn pc_max(&self) -> f64;
    /// Upper end of the fitted domain `[0, domain_max]`.
    fn domain_max(&self) -> f64;
}

/// Time or eye-movement PC curve built from a d'-space fit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PcCurve {
    pub dprime: ExponentialPpc,
    pub lambda: f64,
    pub weights: PriorWeights,
    pub sigma: SigmaProfile,
    pub pc_max: f64,
}

pub fn build_pc_curve(
    dprime: ExponentialPpc,
    lambda: f64,
    weights: PriorWeights,
    binned: &[BinnedPc],
    sigma_floor: f64,
) -> Result<PcCurve> {
    if !lambda.is_finite() {
        return Err(Error::InvalidInput(format!("criterion {lambda} not finite")));
    }
    let sigma = SigmaProfile::from_bins(binned, sigma_floor)?;
    let pc_max = sdt::pc_from_indices(DetectionIndices::new(dprime.alpha, lambda), weights);
    Ok(PcCurve { dprime, lambda, weights, sigma, pc_max })
}

impl PerformanceCurve for PcCurve {
    fn pc(&self, x: f64) -> f64 {
        sdt::pc_from_indices(DetectionIndices::new(self.dprime.eval(x), self.lambda), self.weights)
    }

    fn sigma(&self, x: f64) -> f64 {
        self.sigma.eval(x)
    }

    fn pc_max(&self) -> f64 {
        self.pc_max
    }

    fn domain_max(&self) -> f64 {
        self.dprime.x_max
    }
}

/// `PC(D') = pc_inf - (pc_inf - 0.5) * exp(-gamma * D')`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetectabilityPpc {
    pub pc_inf: f64,
    pub gamma: f64,
    /// `pc_inf` hit the extreme-rate cap.
    #[serde(default)]
    pub clamped: bool,
    /// Largest bin mean seen during fitting.
    pub d_max: f64,
}

impl DetectabilityPpc {
    pub fn eval(&self, d: f64) -> f64 {
        0.5 - (self.pc_inf - 0.5) * (-self.gamma * d.max(0.0)).exp_m1()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectabilityCurve {
    pub ppc: DetectabilityPpc,
    pub sigma: SigmaProfile,
}

impl PerformanceCurve for DetectabilityCurve {
    fn pc(&self, x: f64) -> f64 {
        self.ppc.eval(x)
    }

    fn sigma(&self, x: f64) -> f64 {
        self.sigma.eval(x)
    }

    fn pc_max(&self) -> f64 {
        self.ppc.pc_inf
    }

    fn domain_max(&self) -> f64 {
        self.ppc.d_max
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DetectabilityFit {
    pub ppc: DetectabilityPpc,
    pub bins: Vec<BinnedPc>,
}

impl DetectabilityFit {
    pub fn into_curve(self, sigma_floor: f64) -> Result<DetectabilityCurve> {
        Ok(DetectabilityCurve { sigma: SigmaProfile::from_bins(&self.bins, sigma_floor)?, ppc: self.ppc })
    }
}

/// Equal-count binned regression of trial correctness on the composite
/// detectability score.
pub fn fit_detectability_ppc(trials: &[(f64, bool)], bins: usize) -> Result<DetectabilityFit> {
    if bins == 0 {
        return Err(Error::InvalidInput("bin count must be positive".into()));
    }
    if trials.len() < 2 * bins {
        return Err(Error::InvalidInput(format!(
            "need at least {} trials for {bins} bins, got {}",
            2 * bins,
            trials.len()
        )));
    }
    if let Some(t) = trials.iter().find(|t| !(t.0 >= 0.0 && t.0.is_finite())) {
        return Err(Error::InvalidInput(format!("invalid d_score {}", t.0)));
    }
    let first = trials[0].0;
    if trials.iter().all(|t| t.0 == first) {
        return Err(Error::Degenerate("all d_scores identical".into()));
    }

    let mut sorted: Vec<(f64, bool)> = trials.to_vec();
    sorted.sort_by(|a, b| a.0.total_cmp(&b.0));
    let n = sorted.len();
    let mut out = Vec::with_capacity(bins);
    let mut min_count = usize::MAX;
    for b in 0..bins {
        let slice = &sorted[b * n / bins..(b + 1) * n / bins];
        let count = slice.len();
        min_count = min_count.min(count);
        let x = slice.iter().map(|t| t.0).sum::<f64>() / count as f64;
        let correct = slice.iter().filter(|t| t.1).count() as u64;
        let pc = sdt::corrected_rate(correct, count as u64)?;
        let stderr = (pc * (1.0 - pc) / count as f64).sqrt();
        out.push(BinnedPc { x, pc_mean: pc, pc_stderr: stderr });
    }

    let points: Vec<FitPoint> = out
        .iter()
        .map(|b| FitPoint::new(b.x, b.pc_mean - 0.5, 1.0 / (b.pc_stderr * b.pc_stderr)))
        .collect();
    let fit = fit_exponential(&points)?;
    let cap = 1.0 - 0.5 / min_count as f64;
    let mut pc_inf = 0.5 + fit.alpha;
    let clamped = pc_inf >= cap - 1e-12;
    if clamped {
        pc_inf = cap;
    }
    Ok(DetectabilityFit {
        ppc: DetectabilityPpc { pc_inf, gamma: fit.beta, clamped, d_max: fit.x_max },
        bins: out,
    })
}

/// `d'(e) = alpha_e + beta_e * ln(max(e, 1 deg))` measured at one forced
/// fixation duration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogEccentricityCurve {
    pub alpha_e: f64,
    pub beta_e: f64,
    pub time_condition_ms: f64,
}

impl LogEccentricityCurve {
    pub fn eval(&self, ecc_deg: f64) -> f64 {
        self.alpha_e + self.beta_e * ecc_deg.max(1.0).ln()
    }
}

/// Least-squares log-eccentricity fit.
pub fn fit_log_eccentricity(points: &[(f64, f64)], time_condition_ms: f64) -> Result<LogEccentricityCurve> {
    if let Some(p) = points.iter().find(|p| !(p.0 >= 1.0 && p.0.is_finite() && p.1.is_finite())) {
        return Err(Error::InvalidInput(format!("eccentricity point {p:?} must have e >= 1 deg")));
    }
    let mut es: Vec<f64> = points.iter().map(|p| p.0).collect();
    es.sort_by(f64::total_cmp);
    es.dedup();
    if es.len() < 2 {
        return Err(Error::Degenerate("need at least 2 distinct eccentricities".into()));
    }
    let n = points.len() as f64;
    let mx = points.iter().map(|p| p.0.ln()).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let (mut sxy, mut sxx) = (0.0, 0.0);
    for p in points {
        let dx = p.0.ln() - mx;
        sxy += dx * (p.1 - my);
        sxx += dx * dx;
    }
    let beta_e = sxy / sxx;
    Ok(LogEccentricityCurve { alpha_e: my - beta_e * mx, beta_e, time_condition_ms })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    const TIMES: [f64; 5] = [200.0, 400.0, 800.0, 1800.0, 3200.0];

    fn rel(a: f64, b: f64) -> f64 {
        ((a - b) / b).abs()
    }

    fn sample(alpha: f64, beta: f64, xs: &[f64]) -> Vec<FitPoint> {
        xs.iter().map(|&x| FitPoint::new(x, alpha * (1.0 - (-beta * x).exp()), 1.0)).collect()
    }

    #[test]
    fn exponential_noiseless_recovery() {
        let fit = fit_exponential(&sample(2.0, 0.001, &TIMES)).unwrap();
        assert!(rel(fit.alpha, 2.0) < 1e-6, "{fit:?}");
        assert!(rel(fit.beta, 0.001) < 1e-6, "{fit:?}");
        assert!(!fit.saturated);
        assert_eq!(fit.x_max, 3200.0);
    }

    #[test]
    fn exponential_all_zero_is_error() {
        let pts: Vec<_> = TIMES.iter().map(|&x| FitPoint::new(x, 0.0, 1.0)).collect();
        assert_eq!(fit_exponential(&pts), Err(Error::NoSaturatingTrend));
    }

    #[test]
    fn exponential_decreasing_is_error() {
        let pts: Vec<_> = TIMES.iter().enumerate().map(|(i, &x)| FitPoint::new(x, 3.0 - i as f64 * 0.5, 1.0)).collect();
        assert_eq!(fit_exponential(&pts), Err(Error::NoSaturatingTrend));
    }

    #[test]
    fn exponential_saturated() {
        let fit = fit_exponential(&sample(1.0, 1.0, &TIMES)).unwrap();
        assert!(rel(fit.alpha, 1.0) < 1e-9);
        assert!(fit.beta >= BETA_MAX);
        assert!(fit.saturated);
    }

    #[test]
    fn exponential_degenerate_x() {
        let pts = vec![FitPoint::new(200.0, 1.0, 1.0), FitPoint::new(200.0, 1.1, 1.0), FitPoint::new(400.0, 1.5, 1.0)];
        assert!(matches!(fit_exponential(&pts), Err(Error::Degenerate(_))));
        let mut pts = sample(2.0, 0.001, &TIMES);
        pts[0].weight = 0.0;
        assert!(matches!(fit_exponential(&pts), Err(Error::InvalidInput(_))));
    }

    #[test]
    fn exponential_beats_grid() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let pts: Vec<_> = TIMES
            .iter()
            .map(|&x| FitPoint::new(x, 1.5 * (1.0 - (-0.002 * x).exp()) + rng.random_range(-0.1..0.1), 1.0 + x / 1000.0))
            .collect();
        let fit = fit_exponential(&pts).unwrap();
        let rss = weighted_rss(&pts, fit.alpha, fit.beta);
        for i in 0..BETA_GRID {
            let b = (BETA_MIN.ln() + (BETA_MAX.ln() - BETA_MIN.ln()) * i as f64 / (BETA_GRID - 1) as f64).exp();
            assert!(rss <= profile(&pts, b).1 + 1e-15);
        }
    }

    #[test]
    fn time_lambda_examples() {
        assert!((lambda_for_time_ppc(&[0.1587; 5]).unwrap() - 1.0).abs() < 1e-3);
        assert_eq!(lambda_for_time_ppc(&[0.5]).unwrap(), 0.0);
        // mpmath: -probit(0.15)
        assert!((lambda_for_time_ppc(&[0.1, 0.2]).unwrap() - 1.036_433_389_493_789_6).abs() < 1e-12);
        assert!(lambda_for_time_ppc(&[]).is_err());
        assert!(lambda_for_time_ppc(&[0.0, 0.2]).is_err());
    }

    #[test]
    fn eyemvmt_lambda_examples() {
        assert!((lambda_for_eyemvmt_ppc(&[(1.0, 0.1), (1.0, 0.5)]).unwrap() - 1.0).abs() < 1e-15);
        assert!((lambda_for_eyemvmt_ppc(&[(0.0, 0.1), (1.0, 0.1)]).unwrap() - 0.5).abs() < 1e-15);
        assert!((lambda_for_eyemvmt_ppc(&[(0.0, 0.1), (1.0, 0.3)]).unwrap() - 0.25).abs() < 1e-12);
        assert!(lambda_for_eyemvmt_ppc(&[]).is_err());
        assert!(lambda_for_eyemvmt_ppc(&[(1.0, 0.0)]).is_err());
    }

    #[test]
    fn pc_curve_examples() {
        let dp = ExponentialPpc::new(2.0, 0.001, 3200.0).unwrap();
        let curve = build_pc_curve(dp, 1.0, PriorWeights::EQUAL, &[], SIGMA_FLOOR).unwrap();
        assert!((curve.pc_max - 0.841_344_746_068_542_9).abs() < 1e-12);
        assert!((curve.pc(0.0) - 0.5).abs() < 1e-15);
        assert_eq!(curve.sigma(0.0), SIGMA_FLOOR);
        assert_eq!(curve.sigma(1e6), SIGMA_FLOOR);
    }

    #[test]
    fn sigma_profile_interpolates_and_clamps() {
        let bins = [
            BinnedPc { x: 100.0, pc_mean: 0.6, pc_stderr: 0.04 },
            BinnedPc { x: 300.0, pc_mean: 0.7, pc_stderr: 0.02 },
            BinnedPc { x: 500.0, pc_mean: 0.8, pc_stderr: 0.001 },
        ];
        let s = SigmaProfile::from_bins(&bins, SIGMA_FLOOR).unwrap();
        assert_eq!(s.eval(0.0), 0.04);
        assert!((s.eval(200.0) - 0.03).abs() < 1e-15);
        assert_eq!(s.eval(900.0), SIGMA_FLOOR);
        let unsorted = [bins[1], bins[0]];
        assert!(SigmaProfile::from_bins(&unsorted, SIGMA_FLOOR).is_err());
    }

    fn detectability_trials(seed: u64, n: usize, pc_inf: f64, gamma: f64) -> Vec<(f64, bool)> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|_| {
                let d: f64 = rng.random_range(0.0..8.0);
                let pc = pc_inf - (pc_inf - 0.5) * (-gamma * d).exp();
                (d, rng.random::<f64>() < pc)
            })
            .collect()
    }

    #[test]
    fn detectability_noisy_recovery() {
        let fit = fit_detectability_ppc(&detectability_trials(11, 20_000, 0.95, 0.5), 10).unwrap();
        assert!((fit.ppc.pc_inf - 0.95).abs() < 0.02, "{:?}", fit.ppc);
        assert!(rel(fit.ppc.gamma, 0.5) < 0.15, "{:?}", fit.ppc);
        assert_eq!(fit.ppc.eval(0.0), 0.5);
        assert_eq!(fit.bins.len(), 10);
    }

    #[test]
    fn detectability_all_correct_is_clamped() {
        let trials: Vec<_> = (0..200).map(|i| (i as f64 * 0.05, true)).collect();
        let fit = fit_detectability_ppc(&trials, 10).unwrap();
        assert!(fit.ppc.clamped);
        assert_eq!(fit.ppc.pc_inf, 1.0 - 1.0 / 40.0);
    }

    #[test]
    fn detectability_degenerate() {
        let trials: Vec<_> = (0..100).map(|i| (0.0, i % 2 == 0)).collect();
        assert!(matches!(fit_detectability_ppc(&trials, 10), Err(Error::Degenerate(_))));
        assert!(fit_detectability_ppc(&trials[..15], 10).is_err());
    }

    #[test]
    fn log_eccentricity_examples() {
        let mut pts = vec![(1.0, 3.0)];
        pts.extend([4.0f64, 9.0, 15.0].iter().map(|&e| (e, 3.0 - e.ln())));
        let c = fit_log_eccentricity(&pts, 900.0).unwrap();
        assert!((c.alpha_e - 3.0).abs() < 1e-9);
        assert!((c.beta_e + 1.0).abs() < 1e-9);
        assert_eq!(c.eval(1.0), c.alpha_e);
        assert_eq!(c.eval(0.2), c.eval(1.0));
        assert!(matches!(fit_log_eccentricity(&[(4.0, 1.0), (4.0, 2.0)], 100.0), Err(Error::Degenerate(_))));
        assert!(fit_log_eccentricity(&[(0.5, 1.0), (4.0, 2.0)], 100.0).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn refit_is_idempotent(alpha in 0.5f64..4.0, beta in 3e-4f64..5e-3) {
            let fit = fit_exponential(&sample(alpha, beta, &TIMES)).unwrap();
            let refit = fit_exponential(&sample(fit.alpha, fit.beta, &TIMES)).unwrap();
            prop_assert!(rel(refit.alpha, fit.alpha) < 1e-6);
            prop_assert!(rel(refit.beta, fit.beta) < 1e-6);
        }

        #[test]
        fn pc_curve_monotone_and_bounded(
            alpha in 0.2f64..4.0,
            beta in 1e-4f64..1e-2,
            lambda in -1.0f64..2.0,
            m in 0.2f64..0.8,
            x1 in 0.0f64..5000.0,
            dx in 0.0f64..5000.0,
        ) {
            let dp = ExponentialPpc::new(alpha, beta, 3200.0).unwrap();
            let curve = build_pc_curve(dp, lambda, PriorWeights::new(m).unwrap(), &[], SIGMA_FLOOR).unwrap();
            prop_assert!(curve.pc(x1 + dx) >= curve.pc(x1));
            prop_assert!(curve.pc(x1 + dx) <= curve.pc_max);
        }

        #[test]
        fn weighted_lambda_bounded(est in proptest::collection::vec((-2.0f64..2.0, 0.01f64..1.0), 1..16)) {
            let l = lambda_for_eyemvmt_ppc(&est).unwrap();
            let lo = est.iter().map(|e| e.0).fold(f64::INFINITY, f64::min);
            let hi = est.iter().map(|e| e.0).fold(f64::NEG_INFINITY, f64::max);
            prop_assert!(l >= lo - 1e-12 && l <= hi + 1e-12);
        }
    }
}
