//! Monte Carlo summaries: exact binomial tail estimates, means, MGF checks
//! and the comparison of an estimate against a bound.

use std::fmt;

use serde::{Deserialize, Serialize};
use statrs::function::beta::beta_reg;

use crate::bounds::BoundValue;
use crate::error::{Error, Result};
use crate::rng::normal_quantile;

pub const DEFAULT_LEVEL: f64 = 0.99;

/// Exponents above this are excluded from MGF means to avoid overflow.
pub const MGF_EXPONENT_LIMIT: f64 = 700.0;

fn check_level(level: f64) -> Result<()> {
    if level > 0.0 && level < 1.0 {
        Ok(())
    } else {
        Err(Error::param("level", format!("must lie in (0, 1), got {level}")))
    }
}

/// Empirical probability of an event with a Clopper-Pearson interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TailEstimate {
    pub successes: u64,
    pub trials: u64,
    pub point: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub level: f64,
}

impl TailEstimate {
    pub fn from_counts(successes: u64, trials: u64, level: f64) -> Result<Self> {
        check_level(level)?;
        if trials == 0 {
            return Err(Error::param("trials", "must be at least 1"));
        }
        if successes > trials {
            return Err(Error::param("successes", "cannot exceed trials"));
        }
        let (ci_low, ci_high) = clopper_pearson(successes, trials, level);
        Ok(Self {
            successes,
            trials,
            point: successes as f64 / trials as f64,
            ci_low,
            ci_high,
            level,
        })
    }
}

/// Tail estimate from a stream of event indicators.
pub fn mc_tail(indicators: impl IntoIterator<Item = bool>, level: f64) -> Result<TailEstimate> {
    let (mut k, mut n) = (0u64, 0u64);
    for hit in indicators {
        n += 1;
        k += u64::from(hit);
    }
    TailEstimate::from_counts(k, n, level)
}

/// Smallest `p` in `[0, 1]` with `I_p(a, b) >= target`, by bisection.
fn beta_quantile(target: f64, a: f64, b: f64) -> f64 {
    let (mut lo, mut hi) = (0.0f64, 1.0f64);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if beta_reg(a, b, mid) < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Exact two-sided binomial interval for `k` successes in `n` trials.
pub fn clopper_pearson(k: u64, n: u64, level: f64) -> (f64, f64) {
    let half = 0.5 * (1.0 - level);
    let nf = n as f64;
    let low = if k == 0 {
        0.0
    } else if k == n {
        half.powf(1.0 / nf)
    } else {
        beta_quantile(half, k as f64, (n - k + 1) as f64)
    };
    let high = if k == n {
        1.0
    } else if k == 0 {
        1.0 - half.powf(1.0 / nf)
    } else {
        beta_quantile(1.0 - half, (k + 1) as f64, (n - k) as f64)
    };
    (low, high)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanEstimate {
    pub mean: f64,
    pub se: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub n: u64,
}

/// Sample mean with a normal-approximation interval. Diagnostics only.
pub fn mc_mean(values: impl IntoIterator<Item = f64>, level: f64) -> Result<MeanEstimate> {
    check_level(level)?;
    // Welford's update keeps the variance accurate for large means
    let (mut n, mut mean, mut m2) = (0u64, 0.0, 0.0);
    for v in values {
        if !v.is_finite() {
            return Err(Error::NonFinite {
                context: "mean estimate",
                step: n as usize,
            });
        }
        n += 1;
        let delta = v - mean;
        mean += delta / n as f64;
        m2 += delta * (v - mean);
    }
    if n < 2 {
        return Err(Error::param("trials", "a mean estimate needs at least 2 values"));
    }
    let se = (m2 / (n - 1) as f64 / n as f64).sqrt();
    let z = normal_quantile(0.5 + 0.5 * level);
    Ok(MeanEstimate {
        mean,
        se,
        ci_low: mean - z * se,
        ci_high: mean + z * se,
        n,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MgfCheck {
    pub estimate: MeanEstimate,
    pub pass: bool,
    pub excluded: u64,
}

/// Checks `E exp(Z) <= 1` from samples of the exponent `Z`.
pub fn mgf_check(exponents: impl IntoIterator<Item = f64>, level: f64) -> Result<MgfCheck> {
    let mut excluded = 0u64;
    let mut values = Vec::new();
    for (i, z) in exponents.into_iter().enumerate() {
        if z.is_nan() {
            return Err(Error::NonFinite {
                context: "mgf exponent",
                step: i,
            });
        }
        if z > MGF_EXPONENT_LIMIT {
            excluded += 1;
        } else {
            values.push(z.exp());
        }
    }
    let estimate = mc_mean(values, level)?;
    Ok(MgfCheck {
        estimate,
        pass: estimate.ci_low <= 1.0,
        excluded,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Dominated,
    Violation,
    Inconclusive,
}

impl fmt::Display for Status {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Status::Dominated => "dominated",
            Status::Violation => "violation",
            Status::Inconclusive => "inconclusive",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    pub bound: BoundValue,
    pub estimate: TailEstimate,
    pub status: Status,
}

/// A violation needs the whole interval above the bound; domination needs
/// the whole interval at or below it.
pub fn domination(bound: &BoundValue, est: &TailEstimate) -> Verdict {
    let status = if est.ci_low > bound.value {
        Status::Violation
    } else if est.ci_high <= bound.value {
        Status::Dominated
    } else {
        Status::Inconclusive
    };
    Verdict {
        bound: bound.clone(),
        estimate: *est,
        status,
    }
}

#[cfg(test)]
mod tests {
    use std::collections::HashMap;

    use super::*;
    use crate::bounds::gaussian_tail;
    use crate::rng::{derive_stream, normal_sf};

    #[test]
    fn zero_and_full_successes() {
        let n = 10_000;
        let e = TailEstimate::from_counts(0, n, 0.99).unwrap();
        assert_eq!((e.point, e.ci_low), (0.0, 0.0));
        assert!((e.ci_high - (1.0 - 0.005f64.powf(1e-4))).abs() < 1e-15);
        let f = TailEstimate::from_counts(n, n, 0.99).unwrap();
        assert_eq!((f.point, f.ci_high), (1.0, 1.0));
        assert!((f.ci_low - (1.0 - e.ci_high)).abs() < 1e-12);
    }

    #[test]
    fn interior_interval_brackets_point() {
        let e = mc_tail((0..100).map(|i| i % 2 == 0), 0.99).unwrap();
        assert_eq!(e.point, 0.5);
        assert!(e.ci_low < 0.5 && e.ci_high > 0.5);
        // symmetric around one half
        assert!((e.ci_low + e.ci_high - 1.0).abs() < 1e-12);
    }

    #[test]
    fn clopper_pearson_reference() {
        // scipy.stats.beta.ppf(0.005, 7, 94), beta.ppf(0.995, 8, 93)
        let (lo, hi) = clopper_pearson(7, 100, 0.99);
        assert!((lo - 0.020_789_930_329_624_312).abs() < 1e-9, "{lo}");
        assert!((hi - 0.162_802_855_584_422_8).abs() < 1e-9, "{hi}");
    }

    #[test]
    fn rejects_bad_inputs() {
        assert!(TailEstimate::from_counts(0, 0, 0.99).is_err());
        assert!(TailEstimate::from_counts(3, 2, 0.99).is_err());
        assert!(TailEstimate::from_counts(1, 2, 1.0).is_err());
        assert!(mc_mean([1.0], 0.99).is_err());
        assert!(mc_mean([1.0, f64::NAN], 0.99).is_err());
    }

    #[test]
    fn coverage_is_at_least_nominal() {
        let n = 200u64;
        let reps = 10_000u64;
        for (idx, p) in [0.01, 0.1, 0.5].into_iter().enumerate() {
            let mut cache: HashMap<u64, (f64, f64)> = HashMap::new();
            let mut covered = 0;
            for r in 0..reps {
                let mut s = derive_stream(1000 + idx as u64, r).stream();
                let k = (0..n).filter(|_| s.uniform() < p).count() as u64;
                let (lo, hi) = *cache.entry(k).or_insert_with(|| clopper_pearson(k, n, 0.99));
                if lo <= p && p <= hi {
                    covered += 1;
                }
            }
            let coverage = covered as f64 / reps as f64;
            assert!(coverage >= 0.99, "p={p}: coverage {coverage}");
        }
    }

    #[test]
    fn mean_examples() {
        let c = mc_mean(std::iter::repeat_n(2.5, 10), 0.99).unwrap();
        assert_eq!((c.mean, c.se), (2.5, 0.0));
        let mut s = derive_stream(3, 0).stream();
        let m = mc_mean((0..1_000_000).map(|_| s.normal()), 0.99).unwrap();
        assert!(m.mean.abs() < 4e-3);
        assert!((m.se - 1e-3).abs() < 1e-5);
    }

    #[test]
    fn mgf_examples() {
        let zero = mgf_check(std::iter::repeat_n(0.0, 100), 0.99).unwrap();
        assert_eq!(zero.estimate.mean, 1.0);
        assert!(zero.pass);
        // exact mean of exp(lambda Z sqrt(v) - lambda^2 v) is exp(-lambda^2 v / 2)
        let (lambda, v) = (0.5f64, 1.0f64 / 3.0);
        for sign in [1.0, -1.0] {
            let mut s = derive_stream(4, 0).stream();
            let check = mgf_check(
                (0..100_000).map(|_| sign * lambda * v.sqrt() * s.normal() - lambda * lambda * v),
                0.99,
            )
            .unwrap();
            let exact = (-lambda * lambda * v / 2.0).exp();
            assert!(check.pass && check.estimate.ci_high < 1.0);
            assert!((check.estimate.mean - exact).abs() < 4.0 * check.estimate.se);
        }
        let big = mgf_check([0.0, 0.0, 800.0], 0.99).unwrap();
        assert_eq!(big.excluded, 1);
        let fail = mgf_check((0..100).map(|i| 1.0 + (i % 2) as f64 * 1e-3), 0.99).unwrap();
        assert!(!fail.pass);
    }

    #[test]
    fn verdict_rules() {
        let truth = normal_sf(3f64.sqrt());
        assert!((truth - 0.0416).abs() < 1e-4);
        let bound = gaussian_tail(1.0, 1.0 / 6.0).unwrap();
        assert!((bound.value - (-3.0f64).exp()).abs() < 1e-15);
        let est = TailEstimate {
            successes: 41,
            trials: 1000,
            point: 0.041,
            ci_low: 0.036,
            ci_high: 0.047,
            level: 0.99,
        };
        assert_eq!(domination(&bound, &est).status, Status::Dominated);
        let wide = TailEstimate {
            ci_low: 0.1,
            ci_high: 0.9,
            ..est
        };
        let half = gaussian_tail(1.0, 1.0 / (2.0 * 2f64.ln())).unwrap();
        assert!((half.value - 0.5).abs() < 1e-15);
        assert_eq!(domination(&half, &wide).status, Status::Inconclusive);
        let high = TailEstimate { ci_low: 0.02, ..est };
        let tiny = gaussian_tail(1.0, 1.0 / (2.0 * 100f64.ln())).unwrap();
        assert_eq!(domination(&tiny, &high).status, Status::Violation);
    }

    #[test]
    fn order_does_not_matter() {
        let flags: Vec<bool> = (0..1000).map(|i| i % 7 == 0).collect();
        let mut rev = flags.clone();
        rev.reverse();
        assert_eq!(mc_tail(flags, 0.99).unwrap(), mc_tail(rev, 0.99).unwrap());
    }
}
