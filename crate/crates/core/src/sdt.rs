//! Equal-variance Gaussian signal detection primitives.
//!
//! `probit` is the inverse of the standard normal CDF and `normal_cdf` the
//! forward CDF. Sensitivity and criterion follow the usual convention
//! `d' = probit(HR) - probit(FAR)`, `lambda = -probit(FAR)`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const SQRT_2PI: f64 = 2.506_628_274_631_000_5;

/// Standard normal CDF.
pub fn normal_cdf(z: f64) -> f64 {
    0.5 * libm::erfc(-z / std::f64::consts::SQRT_2)
}

/// Standard normal density.
pub fn normal_pdf(z: f64) -> f64 {
    (-0.5 * z * z).exp() / SQRT_2PI
}

/// Inverse standard normal CDF.
///
/// Acklam's rational approximation (relative error about 1e-9) followed by
/// one Halley step against [`normal_cdf`].
pub fn probit(p: f64) -> Result<f64> {
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::ProbabilityDomain(p));
    }
    // Work in the lower tail so the correction sees the small probability
    // at full precision.
    if p > 0.5 {
        return Ok(-lower_tail_probit(1.0 - p));
    }
    Ok(lower_tail_probit(p))
}

fn lower_tail_probit(p: f64) -> f64 {
    const A: [f64; 6] = [
        -3.969_683_028_665_376e1,
        2.209_460_984_245_205e2,
        -2.759_285_104_469_687e2,
        1.383_577_518_672_69e2,
        -3.066_479_806_614_716e1,
        2.506_628_277_459_239,
    ];
    const B: [f64; 5] = [
        -5.447_609_879_822_406e1,
        1.615_858_368_580_409e2,
        -1.556_989_798_598_866e2,
        6.680_131_188_771_972e1,
        -1.328_068_155_288_572e1,
    ];
    const C: [f64; 6] = [
        -7.784_894_002_430_293e-3,
        -3.223_964_580_411_365e-1,
        -2.400_758_277_161_838,
        -2.549_732_539_343_734,
        4.374_664_141_464_968,
        2.938_163_982_698_783,
    ];
    const D: [f64; 4] = [
        7.784_695_709_041_462e-3,
        3.224_671_290_700_398e-1,
        2.445_134_137_142_996,
        3.754_408_661_907_416,
    ];
    const P_LOW: f64 = 0.024_25;

    let x = if p < P_LOW {
        let q = (-2.0 * p.ln()).sqrt();
        (((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    } else {
        let q = p - 0.5;
        let r = q * q;
        (((((A[0] * r + A[1]) * r + A[2]) * r + A[3]) * r + A[4]) * r + A[5]) * q
            / (((((B[0] * r + B[1]) * r + B[2]) * r + B[3]) * r + B[4]) * r + 1.0)
    };

    let e = normal_cdf(x) - p;
    let u = e * SQRT_2PI * (0.5 * x * x).exp();
    x - u / (1.0 + 0.5 * x * u)
}

/// Trial outcome counts for one target class and condition.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub hits: u64,
    pub misses: u64,
    pub false_alarms: u64,
    pub correct_rejections: u64,
}

impl ConfusionCounts {
    pub fn new(hits: u64, misses: u64, false_alarms: u64, correct_rejections: u64) -> Self {
        Self { hits, misses, false_alarms, correct_rejections }
    }

    pub fn present(&self) -> u64 {
        self.hits + self.misses
    }

    pub fn absent(&self) -> u64 {
        self.false_alarms + self.correct_rejections
    }

    pub fn total(&self) -> u64 {
        self.present() + self.absent()
    }

    /// Record one trial.
    pub fn record(&mut self, target_present: bool, response_present: bool) {
        match (target_present, response_present) {
            (true, true) => self.hits += 1,
            (true, false) => self.misses += 1,
            (false, true) => self.false_alarms += 1,
            (false, false) => self.correct_rejections += 1,
        }
    }

    /// Fraction of signal-present trials, i.e. the `m` mixture weight.
    pub fn prior_weights(&self) -> Result<PriorWeights> {
        if self.total() == 0 {
            return Err(Error::EmptyTrialClass("no trials"));
        }
        PriorWeights::new(self.present() as f64 / self.total() as f64)
    }
}

/// Rate for `k` successes in `n` trials with 0 and 1 replaced by
/// `1/(2n)` and `1 - 1/(2n)`.
pub fn corrected_rate(k: u64, n: u64) -> Result<f64> {
    if n == 0 {
        return Err(Error::EmptyTrialClass("zero trials"));
    }
    let half = 0.5 / n as f64;
    Ok(if k == 0 {
        half
    } else if k >= n {
        1.0 - half
    } else {
        k as f64 / n as f64
    })
}

/// (hit rate, false-alarm rate). A rate of 0 or 1 is replaced by `1/(2N)`
/// or `1 - 1/(2N)`, N being every trial in the condition.
pub fn rates_from_counts(c: &ConfusionCounts) -> Result<(f64, f64)> {
    if c.present() == 0 {
        return Err(Error::EmptyTrialClass("target-present"));
    }
    if c.absent() == 0 {
        return Err(Error::EmptyTrialClass("target-absent"));
    }
    let half = 0.5 / c.total() as f64;
    let rate = |k: u64, n: u64| {
        if k == 0 {
            half
        } else if k >= n {
            1.0 - half
        } else {
            k as f64 / n as f64
        }
    };
    Ok((rate(c.hits, c.present()), rate(c.false_alarms, c.absent())))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetectionIndices {
    pub d_prime: f64,
    pub lambda: f64,
}

impl DetectionIndices {
    pub fn new(d_prime: f64, lambda: f64) -> Self {
        Self { d_prime, lambda }
    }

    pub fn hit_rate(&self) -> f64 {
        normal_cdf(self.d_prime - self.lambda)
    }

    pub fn false_alarm_rate(&self) -> f64 {
        normal_cdf(-self.lambda)
    }
}

pub fn dprime_lambda(hit_rate: f64, fa_rate: f64) -> Result<DetectionIndices> {
    let z_hit = probit(hit_rate)?;
    let z_fa = probit(fa_rate)?;
    Ok(DetectionIndices { d_prime: z_hit - z_fa, lambda: -z_fa })
}

/// Mixture weights of signal-present (`m`) and signal-absent (`n`) trials.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawWeights", into = "RawWeights")]
pub struct PriorWeights {
    m: f64,
}

#[derive(Serialize, Deserialize)]
struct RawWeights {
    m: f64,
    n: f64,
}

impl TryFrom<RawWeights> for PriorWeights {
    type Error = Error;

    fn try_from(raw: RawWeights) -> Result<Self> {
        let w = PriorWeights::new(raw.m)?;
        if (w.n() - raw.n).abs() > 1e-12 {
            return Err(Error::InvalidInput(format!("weights m={} n={} do not sum to 1", raw.m, raw.n)));
        }
        Ok(w)
    }
}

impl From<PriorWeights> for RawWeights {
    fn from(w: PriorWeights) -> Self {
        RawWeights { m: w.m(), n: w.n() }
    }
}

impl PriorWeights {
    pub const EQUAL: PriorWeights = PriorWeights { m: 0.5 };

    pub fn new(m: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&m) {
            return Err(Error::InvalidInput(format!("prior weight m={m} outside [0, 1]")));
        }
        Ok(Self { m })
    }

    pub fn m(&self) -> f64 {
        self.m
    }

    pub fn n(&self) -> f64 {
        1.0 - self.m
    }
}

/// Proportion correct: `m * HR + n * (1 - FAR)`.
pub fn pc_from_indices(ind: DetectionIndices, w: PriorWeights) -> f64 {
    w.m() * ind.hit_rate() + w.n() * (1.0 - ind.false_alarm_rate())
}
