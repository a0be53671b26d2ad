//! Closed-form tail bounds and the special functions they are built from.
//!
//! Each bound documents the scale of its `R`. Rescaling between the
//! raw scale `P(S_T - E S_T >= R)` and the time-average scale
//! `P((S_T - E S_T) / T >= R)` happens in the experiments module only.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{require_nonnegative, require_positive, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    Gaussian,
    Bennett,
    BernsteinGamma,
    Azuma,
    Selfnorm,
    SelfnormCd,
    Composite,
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Family::Gaussian => "gaussian",
            Family::Bennett => "bennett",
            Family::BernsteinGamma => "bernstein_gamma",
            Family::Azuma => "azuma",
            Family::Selfnorm => "selfnorm",
            Family::SelfnormCd => "selfnorm_cd",
            Family::Composite => "composite",
        };
        f.write_str(s)
    }
}

/// A bound clamped to `(0, 1]`, with the unclamped value and every input.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundValue {
    pub value: f64,
    pub raw: f64,
    pub family: Family,
    pub params: BTreeMap<String, f64>,
}

impl BoundValue {
    pub(crate) fn new(raw: f64, family: Family, params: &[(&str, f64)]) -> Self {
        // exp underflow would give 0; keep the bound strictly positive
        let raw = raw.max(f64::MIN_POSITIVE);
        Self {
            value: raw.min(1.0),
            raw,
            family,
            params: params.iter().map(|&(k, v)| (k.to_string(), v)).collect(),
        }
    }

    pub(crate) fn with(mut self, key: &str, v: f64) -> Self {
        self.params.insert(key.to_string(), v);
        self
    }
}

/// `h(x) = (1 + x) ln(1 + x) - x` for `x >= -1`, with `h(-1) = 1`.
pub fn eval_h(x: f64) -> Result<f64> {
    if !(x >= -1.0) {
        return Err(Error::param("x", format!("h needs x >= -1, got {x}")));
    }
    if x == -1.0 {
        return Ok(1.0);
    }
    if x.abs() < 0.1 {
        // sum_{k>=2} (-1)^k x^k / (k (k - 1))
        let mut pow = x * x;
        let mut sum = 0.0;
        for k in 2..40 {
            let term = pow / (k * (k - 1)) as f64;
            sum += term;
            if term.abs() <= 1e-18 * sum.abs() {
                break;
            }
            pow *= -x;
        }
        return Ok(sum);
    }
    Ok((1.0 + x) * x.ln_1p() - x)
}

/// `h_1(x) = 1 + x - sqrt(1 + 2x)` for `x >= -1/2`.
pub fn eval_h1(x: f64) -> Result<f64> {
    if !(x >= -0.5) {
        return Err(Error::param("x", format!("h1 needs x >= -1/2, got {x}")));
    }
    // rationalized form avoids cancellation near 0
    Ok(x * x / (1.0 + x + (1.0 + 2.0 * x).sqrt()))
}

/// `phi_a(x) = (e^{ax} - 1 - ax) / a^2`, with `phi_0(x) = x^2 / 2`.
pub fn eval_phi_a(a: f64, x: f64) -> Result<f64> {
    require_nonnegative("a", a)?;
    if !x.is_finite() {
        return Err(Error::param("x", "must be finite"));
    }
    let y = a * x;
    if y.abs() < 1.0 {
        // x^2 sum_{k>=2} y^{k-2} / k!, exact at a = 0
        let mut term = 0.5;
        let mut sum = 0.0;
        for k in 2..40 {
            sum += term;
            term *= y / (k + 1) as f64;
            if term.abs() <= 1e-18 * sum.abs() {
                break;
            }
        }
        return Ok(x * x * sum);
    }
    Ok((y.exp_m1() - y) / (a * a))
}

/// `exp(-R^2 / (2 v))` for `P(S - E S >= R)` with variance proxy `v`.
pub fn gaussian_tail(r: f64, v: f64) -> Result<BoundValue> {
    require_positive("R", r)?;
    require_positive("v", v)?;
    Ok(BoundValue::new(
        (-r * r / (2.0 * v)).exp(),
        Family::Gaussian,
        &[("R", r), ("v", v)],
    ))
}

/// `exp(-(m / a^2) h(a R / m))` on the raw scale.
pub fn bennett_tail(r: f64, m: f64, a: f64) -> Result<BoundValue> {
    require_positive("R", r)?;
    require_positive("m", m)?;
    require_positive("a", a)?;
    let exponent = m / (a * a) * eval_h(a * r / m)?;
    Ok(BoundValue::new(
        (-exponent).exp(),
        Family::Bennett,
        &[("R", r), ("m", m), ("a", a)],
    ))
}

/// `exp(-(m / b^2) h_1(b R / m))` on the raw scale.
pub fn bernstein_gamma_tail(r: f64, m: f64, b: f64) -> Result<BoundValue> {
    require_positive("R", r)?;
    require_positive("m", m)?;
    require_positive("b", b)?;
    let exponent = m / (b * b) * eval_h1(b * r / m)?;
    Ok(BoundValue::new(
        (-exponent).exp(),
        Family::BernsteinGamma,
        &[("R", r), ("m", m), ("b", b)],
    ))
}

/// `exp(-R^2 / (8 a^2))` for a martingale with increments bounded by `C_t`
/// and `sum C_t^2 <= a^2`.
pub fn azuma_tail(r: f64, a2: f64) -> Result<BoundValue> {
    require_positive("R", r)?;
    require_positive("a2", a2)?;
    Ok(BoundValue::new(
        (-r * r / (8.0 * a2)).exp(),
        Family::Azuma,
        &[("R", r), ("a2", a2)],
    ))
}

/// Prefactor `min(2^{1/3}, (2/3)^{2/3} R^{-2/3})` of the self-normalized bound.
pub fn selfnorm_prefactor(r: f64) -> f64 {
    2f64.cbrt().min((2.0f64 / 3.0).powf(2.0 / 3.0) * r.powf(-2.0 / 3.0))
}

/// `min(2^{1/3}, (2/3)^{2/3} R^{-2/3}) e^{-R^2 / 2}`, where `R` is the
/// self-normalized deviation.
pub fn selfnorm_tail(r: f64) -> Result<BoundValue> {
    require_positive("R", r)?;
    Ok(BoundValue::new(
        selfnorm_prefactor(r) * (-0.5 * r * r).exp(),
        Family::Selfnorm,
        &[("R", r)],
    ))
}

/// `2^{1/3} (1 ∧ (CR + D) / (3R^2))^{1/3} exp(-R^2 / (3 (CR + D)))` on the raw
/// scale `P(|S - E S| >= R)`.
pub fn selfnorm_cd_tail(r: f64, c: f64, d: f64) -> Result<BoundValue> {
    require_positive("R", r)?;
    require_nonnegative("C", c)?;
    require_nonnegative("D", d)?;
    let scale = c * r + d;
    if scale <= 0.0 {
        return Err(Error::param("C", "C R + D must be positive"));
    }
    let raw = 2f64.cbrt() * (scale / (3.0 * r * r)).min(1.0).cbrt() * (-r * r / (3.0 * scale)).exp();
    Ok(BoundValue::new(
        raw,
        Family::SelfnormCd,
        &[("R", r), ("C", c), ("D", d)],
    ))
}

/// Variant for the side condition `H^0_T <= C |S_T| + D`: uses
/// `D' = D + C |E S_T| + E H^0_T + 2 rho^2`.
pub fn selfnorm_cstd_tail(r: f64, c: f64, d: f64, abs_mean_s: f64, mean_h0: f64, rho2: f64) -> Result<BoundValue> {
    require_nonnegative("abs_mean_S", abs_mean_s)?;
    require_nonnegative("mean_H0", mean_h0)?;
    require_nonnegative("rho2", rho2)?;
    let d_prime = d + c * abs_mean_s + mean_h0 + 2.0 * rho2;
    Ok(selfnorm_cd_tail(r, c, d_prime)?
        .with("D", d)
        .with("D_prime", d_prime)
        .with("rho2", rho2))
}

/// `exp(-(3 + alpha) R^2 T / (2 sigma^2))` for `P(S_T - E S_T >= R T^{2 + alpha/2})`
/// when `d<X>_u <= sigma^2 (T - u)^alpha du`.
pub fn poly_kernel_bound(r: f64, t: f64, sigma2: f64, alpha: f64) -> Result<BoundValue> {
    require_positive("R", r)?;
    require_positive("T", t)?;
    require_positive("sigma2", sigma2)?;
    if !(alpha > -3.0) || !alpha.is_finite() {
        return Err(Error::param("alpha", format!("must exceed -3, got {alpha}")));
    }
    Ok(BoundValue::new(
        (-(3.0 + alpha) * r * r * t / (2.0 * sigma2)).exp(),
        Family::Gaussian,
        &[("R", r), ("T", t), ("sigma2", sigma2), ("alpha", alpha)],
    ))
}

/// `exp(-R^2 T / 4)` for `P(S_T - E S_T >= R sqrt(T))` when `d<X>_u <= e^{-(T - u)} du`.
pub fn exp_kernel_bound(r: f64, t: f64) -> Result<BoundValue> {
    require_positive("R", r)?;
    require_positive("T", t)?;
    Ok(BoundValue::new(
        (-r * r * t / 4.0).exp(),
        Family::Gaussian,
        &[("R", r), ("T", t)],
    ))
}

/// `exp(-(1 - 2p) m_bar^2 R^2 T / (32 G^2))` for the time average of the
/// stochastic approximation iterates. Step-size admissibility is checked by
/// the caller.
pub fn polyak_bound(r: f64, t: f64, p: f64, m_bar: f64, g: f64) -> Result<BoundValue> {
    require_positive("R", r)?;
    require_positive("T", t)?;
    require_nonnegative("p", p)?;
    if p >= 0.5 {
        return Err(Error::param("p", format!("must be below 1/2, got {p}")));
    }
    require_positive("m_bar", m_bar)?;
    require_positive("G", g)?;
    Ok(BoundValue::new(
        (-(1.0 - 2.0 * p) * m_bar * m_bar * r * r * t / (32.0 * g * g)).exp(),
        Family::Azuma,
        &[("R", r), ("T", t), ("p", p), ("m_bar", m_bar), ("G", g)],
    ))
}

/// `exp(-kappa^2 R^2 T / (2 rho^2 |f|_Lip^2 (1 + C (1 - e^{-kappa T}) / T)))`
/// for the time average of a Lipschitz observable of a contractive SDE.
pub fn lipschitz_sde_bound(r: f64, t: f64, rho: f64, kappa: f64, c_t1: f64, lip: f64) -> Result<BoundValue> {
    require_positive("R", r)?;
    require_positive("T", t)?;
    require_positive("rho", rho)?;
    require_positive("kappa", kappa)?;
    require_nonnegative("C", c_t1)?;
    require_positive("lip", lip)?;
    let correction = 1.0 + c_t1 * -(-kappa * t).exp_m1() / t;
    let exponent = kappa * kappa * r * r * t / (2.0 * rho * rho * lip * lip * correction);
    Ok(BoundValue::new(
        (-exponent).exp(),
        Family::Gaussian,
        &[
            ("R", r),
            ("T", t),
            ("rho", rho),
            ("kappa", kappa),
            ("C", c_t1),
            ("lip", lip),
        ],
    ))
}

/// Threshold shift `rho |f|_Lip (1 - e^{-kappa T}) / (kappa T) W_1(mu_0, nu)`
/// when centering at the evolving law instead of the mean.
pub fn lipschitz_mu_shift(rho: f64, kappa: f64, lip: f64, t: f64, w1: f64) -> Result<f64> {
    require_positive("rho", rho)?;
    require_positive("kappa", kappa)?;
    require_positive("lip", lip)?;
    require_positive("T", t)?;
    require_nonnegative("W1", w1)?;
    Ok(rho * lip * -(-kappa * t).exp_m1() / (kappa * t) * w1)
}

/// Bound for the time average of `|X_t|^2` of a `d`-dimensional OU process
/// started at `x`, two-sided, time-average scale.
pub fn ou_squared_bound(r: f64, t: f64, kappa: f64, d: f64, x_norm2: f64) -> Result<BoundValue> {
    require_positive("R", r)?;
    require_positive("T", t)?;
    require_positive("kappa", kappa)?;
    require_positive("d", d)?;
    require_nonnegative("x_norm2", x_norm2)?;
    let dd = x_norm2 / (kappa * t) + d / kappa;
    let k2 = kappa * kappa;
    let raw =
        2f64.cbrt() * ((r + dd) / (3.0 * k2 * r * r * t)).min(1.0).cbrt() * (-k2 * r * r * t / (3.0 * (r + dd))).exp();
    Ok(BoundValue::new(
        raw,
        Family::Composite,
        &[
            ("R", r),
            ("T", t),
            ("kappa", kappa),
            ("d", d),
            ("x_norm2", x_norm2),
            ("D", dd),
        ],
    ))
}

/// `(1 - e^{-aT}) / a`, continuous through `a = 0` and valid for `a < 0`.
fn int_exp(a: f64, t: f64) -> f64 {
    let x = a * t;
    if x.abs() < 1e-5 {
        t * (1.0 - x / 2.0 + x * x / 6.0)
    } else {
        -(-x).exp_m1() / a
    }
}

/// `C_kappa(T) = int_0^T e^{-(kappa + C) u} du`.
pub fn c_kappa(kappa: f64, c: f64, t: f64) -> f64 {
    int_exp(kappa + c, t)
}

/// `D_{kappa,C}(T) = D int_0^T e^{-kappa u} int_0^u e^{-C (u - v)} dv du`.
pub fn d_kappa_c(kappa: f64, c: f64, d: f64, t: f64) -> Result<f64> {
    if (c * t).abs() > 1e-4 {
        return Ok(d * (int_exp(kappa, t) - int_exp(kappa + c, t)) / c);
    }
    // the difference quotient cancels for small C; the inner integral
    // (1 - e^{-Cu}) / C is smooth there, so integrate it directly
    let inner = |u: f64| (-kappa * u).exp() * int_exp(c, u);
    Ok(d * crate::functionals::integrate(inner, 0.0, t)?)
}

/// Bernstein-type bound for `P(|S_T - E S_T| >= R T)` with `S_T = int g^2(X)`
/// under the commutation constant `sigma`, contraction `kappa` and drift
/// condition `L g^2 <= -2 C g^2 + D^2`.
pub fn squared_lipschitz_bound(
    r: f64,
    t: f64,
    sigma: f64,
    kappa: f64,
    c: f64,
    d: f64,
    mean_st_over_t: f64,
) -> Result<BoundValue> {
    require_positive("R", r)?;
    require_positive("T", t)?;
    require_positive("sigma", sigma)?;
    require_nonnegative("kappa", kappa)?;
    require_nonnegative("D", d)?;
    require_nonnegative("mean_S_over_T", mean_st_over_t)?;
    if !c.is_finite() {
        return Err(Error::param("C", "must be finite"));
    }
    let ck = c_kappa(kappa, c, t);
    let dk = d_kappa_c(kappa, c, d, t)?;
    let denom = 24.0 * sigma * sigma * (ck * ck * r + 2.0 * ck * ck * mean_st_over_t + 2.0 * dk * dk);
    Ok(BoundValue::new(
        2f64.cbrt() * (-r * r * t / denom).exp(),
        Family::Composite,
        &[
            ("R", r),
            ("T", t),
            ("sigma", sigma),
            ("kappa", kappa),
            ("C", c),
            ("D", d),
            ("mean_S_over_T", mean_st_over_t),
            ("C_kappa", ck),
            ("D_kappa_C", dk),
        ],
    ))
}

/// The squared-Lipschitz bound specialised to `|X|^2` of an OU process from
/// the origin, using `C_kappa <= 1/(2 kappa)` and `D_{kappa,C} <= d / kappa^2`.
pub fn squared_lipschitz_ou_instance(r: f64, t: f64, kappa: f64, d: f64) -> Result<BoundValue> {
    require_positive("R", r)?;
    require_positive("T", t)?;
    require_positive("kappa", kappa)?;
    require_positive("d", d)?;
    let k2 = kappa * kappa;
    let raw = 2f64.cbrt() * (-k2 * r * r * t / (6.0 * (r + d / kappa + 8.0 * d * d / k2))).exp();
    Ok(BoundValue::new(
        raw,
        Family::Composite,
        &[("R", r), ("T", t), ("kappa", kappa), ("d", d)],
    ))
}

/// Bound for the time average of a 1-Lipschitz function of `Y` in the
/// degenerate OU-driven pair.
pub fn degenerate_bound(r: f64, t: f64, alpha: f64, beta: f64) -> Result<BoundValue> {
    require_positive("R", r)?;
    require_positive("T", t)?;
    require_positive("alpha", alpha)?;
    require_positive("beta", beta)?;
    if alpha == beta {
        return Err(Error::param("beta", "must differ from alpha"));
    }
    let lo = alpha.min(beta);
    let gap = (alpha - beta).abs();
    let f1 = -(-lo * t).exp_m1();
    let f2 = -(-gap * t).exp_m1();
    let exponent = r * r * t * lo * lo * gap * gap / (4.0 * f1 * f1 * f2 * f2);
    Ok(BoundValue::new(
        (-exponent).exp(),
        Family::Gaussian,
        &[("R", r), ("T", t), ("alpha", alpha), ("beta", beta)],
    ))
}

/// Large-deviation rates `(I, J)` for the time average of `|X|^2` of a
/// `d`-dimensional OU process: `I` is implied by the bound, `J` is the exact
/// rate.
pub fn ldp_rates(r: f64, d: f64, kappa: f64) -> Result<(f64, f64)> {
    require_positive("R", r)?;
    require_positive("d", d)?;
    require_positive("kappa", kappa)?;
    let num = (d - 2.0 * kappa * r).powi(2);
    Ok((num / (12.0 * (r + d / (2.0 * kappa))), num / (8.0 * r)))
}

/// Exponent `lambda (S - E S) - phi_a(|lambda|) H^a - lambda^2 rho^2 / 2`, whose
/// exponential has mean at most one.
pub fn mgf_envelope(lambda: f64, centered_s: f64, rho2: f64, a: f64, h_a: f64) -> Result<f64> {
    require_nonnegative("a", a)?;
    require_nonnegative("rho2", rho2)?;
    require_nonnegative("H_a", h_a)?;
    if lambda == 0.0 {
        return Ok(0.0);
    }
    Ok(lambda * centered_s - eval_phi_a(a, lambda.abs())? * h_a - 0.5 * lambda * lambda * rho2)
}

/// One named bound for the command line: its parameter names and evaluator.
pub struct NamedBound {
    pub name: &'static str,
    pub params: &'static [&'static str],
    pub summary: &'static str,
    eval: fn(&[f64]) -> Result<BoundValue>,
}

impl NamedBound {
    pub fn evaluate(&self, values: &BTreeMap<String, f64>) -> Result<BoundValue> {
        if let Some(extra) = values.keys().find(|k| !self.params.contains(&k.as_str())) {
            return Err(Error::param(
                extra.clone(),
                format!(
                    "not a parameter of `{}` (expects {})",
                    self.name,
                    self.params.join(", ")
                ),
            ));
        }
        let args = self
            .params
            .iter()
            .map(|p| {
                values
                    .get(*p)
                    .copied()
                    .ok_or_else(|| Error::param(*p, format!("required by `{}`", self.name)))
            })
            .collect::<Result<Vec<_>>>()?;
        (self.eval)(&args)
    }
}

pub const NAMED_BOUNDS: &[NamedBound] = &[
    NamedBound {
        name: "gaussian",
        params: &["R", "v"],
        summary: "exp(-R^2/(2v))",
        eval: |a| gaussian_tail(a[0], a[1]),
    },
    NamedBound {
        name: "bennett",
        params: &["R", "m", "a"],
        summary: "exp(-(m/a^2) h(aR/m))",
        eval: |a| bennett_tail(a[0], a[1], a[2]),
    },
    NamedBound {
        name: "bernstein_gamma",
        params: &["R", "m", "b"],
        summary: "exp(-(m/b^2) h1(bR/m))",
        eval: |a| bernstein_gamma_tail(a[0], a[1], a[2]),
    },
    NamedBound {
        name: "azuma",
        params: &["R", "a2"],
        summary: "exp(-R^2/(8 a2))",
        eval: |a| azuma_tail(a[0], a[1]),
    },
    NamedBound {
        name: "selfnorm",
        params: &["R"],
        summary: "min(2^(1/3), (2/3)^(2/3) R^(-2/3)) exp(-R^2/2)",
        eval: |a| selfnorm_tail(a[0]),
    },
    NamedBound {
        name: "selfnorm_cd",
        params: &["R", "C", "D"],
        summary: "2^(1/3) (1 ∧ (CR+D)/(3R^2))^(1/3) exp(-R^2/(3(CR+D)))",
        eval: |a| selfnorm_cd_tail(a[0], a[1], a[2]),
    },
    NamedBound {
        name: "selfnorm_cstd",
        params: &["R", "C", "D", "abs_mean_S", "mean_H0", "rho2"],
        summary: "selfnorm_cd with D' = D + C|E S| + E H0 + 2 rho2",
        eval: |a| selfnorm_cstd_tail(a[0], a[1], a[2], a[3], a[4], a[5]),
    },
    NamedBound {
        name: "poly_kernel",
        params: &["R", "T", "sigma2", "alpha"],
        summary: "exp(-(3+alpha) R^2 T/(2 sigma2))",
        eval: |a| poly_kernel_bound(a[0], a[1], a[2], a[3]),
    },
    NamedBound {
        name: "exp_kernel",
        params: &["R", "T"],
        summary: "exp(-R^2 T/4)",
        eval: |a| exp_kernel_bound(a[0], a[1]),
    },
    NamedBound {
        name: "polyak",
        params: &["R", "T", "p", "m_bar", "G"],
        summary: "exp(-(1-2p) m_bar^2 R^2 T/(32 G^2))",
        eval: |a| polyak_bound(a[0], a[1], a[2], a[3], a[4]),
    },
    NamedBound {
        name: "lipschitz_sde",
        params: &["R", "T", "rho", "kappa", "C", "lip"],
        summary: "exp(-kappa^2 R^2 T/(2 rho^2 lip^2 (1 + C(1-e^(-kappa T))/T)))",
        eval: |a| lipschitz_sde_bound(a[0], a[1], a[2], a[3], a[4], a[5]),
    },
    NamedBound {
        name: "ou_squared",
        params: &["R", "T", "kappa", "d", "x_norm2"],
        summary: "time average of |X|^2 for OU",
        eval: |a| ou_squared_bound(a[0], a[1], a[2], a[3], a[4]),
    },
    NamedBound {
        name: "squared_lipschitz",
        params: &["R", "T", "sigma", "kappa", "C", "D", "mean_S_over_T"],
        summary: "Bernstein-type bound for time averages of g^2",
        eval: |a| squared_lipschitz_bound(a[0], a[1], a[2], a[3], a[4], a[5], a[6]),
    },
    NamedBound {
        name: "degenerate",
        params: &["R", "T", "alpha", "beta"],
        summary: "1-Lipschitz functions of the degenerate pair",
        eval: |a| degenerate_bound(a[0], a[1], a[2], a[3]),
    },
];

pub fn find_bound(name: &str) -> Result<&'static NamedBound> {
    NAMED_BOUNDS
        .iter()
        .find(|b| b.name == name)
        .ok_or_else(|| Error::UnknownBound(name.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn rel(a: f64, b: f64) -> f64 {
        if b == 0.0 {
            a.abs()
        } else {
            ((a - b) / b).abs()
        }
    }

    include!("../tests/data/special_functions.rs");

    #[test]
    fn special_functions_match_reference_tables() {
        for (x, want) in H_TABLE {
            let got = eval_h(x).unwrap();
            assert!(rel(got, want) < 1e-12, "h({x}) = {got}, want {want}");
        }
        for (x, want) in H1_TABLE {
            let got = eval_h1(x).unwrap();
            assert!(rel(got, want) < 1e-12, "h1({x}) = {got}, want {want}");
        }
        for (a, x, want) in PHI_TABLE {
            let got = eval_phi_a(a, x).unwrap();
            assert!(rel(got, want) < 1e-12, "phi_{a}({x}) = {got}, want {want}");
        }
    }

    #[test]
    fn special_function_examples() {
        assert_eq!(eval_h(0.0).unwrap(), 0.0);
        assert!((eval_h(std::f64::consts::E - 1.0).unwrap() - 1.0).abs() < 1e-15);
        assert!((eval_h(1.0).unwrap() - 0.386_294_361_119_890_6).abs() < 1e-15);
        assert!(eval_h(-1.0 - 1e-12).is_err());
        assert_eq!(eval_h1(0.0).unwrap(), 0.0);
        assert_eq!(eval_h1(1.5).unwrap(), 0.5);
        assert_eq!(eval_h1(4.0).unwrap(), 2.0);
        assert!(eval_h1(-0.6).is_err());
        assert_eq!(eval_phi_a(0.0, 2.0).unwrap(), 2.0);
        assert!((eval_phi_a(1.0, 1.0).unwrap() - (std::f64::consts::E - 2.0)).abs() < 1e-15);
        assert!((eval_phi_a(1e-8, 3.0).unwrap() - 4.5).abs() < 1e-6);
        assert!(eval_phi_a(-1.0, 1.0).is_err());
    }

    #[test]
    fn h_dominates_bernstein_quadratic() {
        for i in 1..=1000 {
            let x = i as f64 * 0.1;
            assert!(eval_h(x).unwrap() >= x * x / (2.0 * (1.0 + x / 3.0)));
        }
    }

    #[test]
    fn bound_examples() {
        let g = gaussian_tail(1.0, 1.0).unwrap();
        assert!((g.value - (-0.5f64).exp()).abs() < 1e-15);
        assert_eq!(g.family, Family::Gaussian);
        assert!(gaussian_tail(0.0, 1.0).is_err());
        assert!(gaussian_tail(1.0, -1.0).is_err());
        assert!((gaussian_tail(1e-9, 1.0).unwrap().value - 1.0).abs() < 1e-15);

        // Poisson rescaling: R -> R T^2, m = T^3 / 3, a = T
        let t = 3.0;
        let r = 1.0;
        let b = bennett_tail(r * t * t, t.powi(3) / 3.0, t).unwrap();
        assert!((b.value - (-(t / 3.0) * eval_h(3.0 * r).unwrap()).exp()).abs() < 1e-15);
        assert!((b.value - (-(4.0 * 4f64.ln() - 3.0)).exp()).abs() < 1e-14);
        assert!((b.value - 0.0785).abs() < 1e-4);

        let bg = bernstein_gamma_tail(1.5, 1.0, 1.0).unwrap();
        assert!((bg.value - (-0.5f64).exp()).abs() < 1e-15);

        assert!((azuma_tail(2.0, 1.0).unwrap().value - (-0.5f64).exp()).abs() < 1e-15);
        assert!((selfnorm_tail(1.0).unwrap().value - 0.462_869_523_145_546_6).abs() < 1e-15);
        assert_eq!(selfnorm_tail(0.1).unwrap().value, 1.0);
        assert!(selfnorm_tail(0.0).is_err());

        assert!((poly_kernel_bound(1.0, 1.0, 1.0, 0.0).unwrap().value - (-1.5f64).exp()).abs() < 1e-15);
        assert!(poly_kernel_bound(1.0, 1.0, 1.0, -3.0).is_err());
        assert!(poly_kernel_bound(1.0, 1.0, 1.0, -3.0 + 1e-12).unwrap().value > 1.0 - 1e-11);

        assert!((polyak_bound(1.0, 32.0, 0.0, 1.0, 1.0).unwrap().value - (-1.0f64).exp()).abs() < 1e-15);
        assert!(polyak_bound(1.0, 32.0, 0.5, 1.0, 1.0).is_err());
        let one = polyak_bound(1.0, 32.0, 0.0, 1.0, 1.0).unwrap().raw.ln();
        let two = polyak_bound(1.0, 32.0, 0.0, 1.0, 2.0).unwrap().raw.ln();
        assert!((two / one - 0.25).abs() < 1e-15);

        let lip = lipschitz_sde_bound(1.0, 2.0, 1.0, 1.0, 0.0, 1.0).unwrap();
        assert!((lip.value - (-1.0f64).exp()).abs() < 1e-15);
        assert!(lipschitz_sde_bound(1.0, 2.0, 0.0, 1.0, 0.0, 1.0).is_err());

        let (i, j) = ldp_rates(1.0, 1.0, 1.0).unwrap();
        assert!((i - 1.0 / 18.0).abs() < 1e-15 && (j - 0.125).abs() < 1e-15);
        assert_eq!(ldp_rates(0.5, 1.0, 1.0).unwrap(), (0.0, 0.0));
        assert!(ldp_rates(0.0, 1.0, 1.0).is_err());
    }

    #[test]
    fn selfnorm_crossover() {
        let gap = |r: f64| 2f64.cbrt() - (2.0f64 / 3.0).powf(2.0 / 3.0) * r.powf(-2.0 / 3.0);
        let (mut lo, mut hi) = (0.01, 10.0);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if gap(mid) < 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        assert!((lo - 2f64.sqrt() / 3.0).abs() < 1e-12);
        assert!((selfnorm_prefactor(lo) - 2f64.cbrt()).abs() < 1e-10);
    }

    #[test]
    fn selfnorm_cd_cases() {
        // B^2 - t composite 4R + 3/4
        let v = selfnorm_cd_tail(2.0, 4.0, 0.75).unwrap();
        let s = 4.0 * 2.0 + 0.75;
        let want = 2f64.cbrt() * (s / 12.0f64).min(1.0).cbrt() * (-4.0 / (3.0 * s)).exp();
        assert!((v.raw - want).abs() < 1e-15);
        assert!(selfnorm_cd_tail(1.0, 0.0, 0.0).is_err());
        let cstd = selfnorm_cstd_tail(1.0, 1.0, 1.0, 0.5, 0.25, 0.125).unwrap();
        assert_eq!(cstd.params["D_prime"], 2.0);
        assert_eq!(cstd.raw, selfnorm_cd_tail(1.0, 1.0, 2.0).unwrap().raw);
    }

    #[test]
    fn small_parameter_limits() {
        for (r, m) in [(0.5, 1.0), (2.0, 3.0), (1.0, 0.2)] {
            let g = gaussian_tail(r, m).unwrap().value;
            assert!(rel(bennett_tail(r, m, 1e-6).unwrap().value, g) < 1e-4);
            assert!(rel(bernstein_gamma_tail(r, m, 1e-6).unwrap().value, g) < 1e-4);
            for a2 in [0.1, 1.0, 7.0] {
                assert_eq!(
                    azuma_tail(r, a2).unwrap().value,
                    gaussian_tail(r, 4.0 * a2).unwrap().value
                );
            }
        }
    }

    #[test]
    fn lipschitz_limits() {
        let base = lipschitz_sde_bound(0.1, 1e6, 1.0, 1.0, 0.0, 1.0).unwrap().raw;
        let with_c = lipschitz_sde_bound(0.1, 1e6, 1.0, 1.0, 5.0, 1.0).unwrap().raw;
        assert!(rel(with_c.ln(), base.ln()) < 1e-5);
        let shift = lipschitz_mu_shift(1.0, 1.0, 1.0, 10.0, 2.0).unwrap();
        assert!((shift - 2.0 * (1.0 - (-10.0f64).exp()) / 10.0).abs() < 1e-15);
    }

    #[test]
    fn ou_squared_cases() {
        let v = ou_squared_bound(1.0, 10.0, 1.0, 1.0, 0.0).unwrap();
        assert_eq!(v.params["D"], 1.0);
        assert!(ou_squared_bound(1e3, 100.0, 1.0, 1.0, 0.0).unwrap().value < 1e-300);
        assert!(ou_squared_bound(1.0, 0.0, 1.0, 1.0, 0.0).is_err());
        for r in [0.05, 0.2, 0.5, 1.0, 2.0, 5.0] {
            for t in [1.0, 5.0, 10.0, 50.0, 200.0] {
                let sharp = ou_squared_bound(r, t, 1.0, 1.0, 0.0).unwrap().raw;
                let loose = squared_lipschitz_ou_instance(r, t, 1.0, 1.0).unwrap().raw;
                assert!(sharp <= loose, "R={r} T={t}");
            }
        }
    }

    #[test]
    fn squared_lipschitz_constants() {
        let (kappa, t) = (0.7f64, 3.0f64);
        let want = (1.0 - (-2.0 * kappa * t).exp()) / (2.0 * kappa);
        assert!((c_kappa(kappa, kappa, t) - want).abs() < 1e-15);
        assert!((c_kappa(0.5, -0.5, t) - t).abs() < 1e-15);
        assert!((c_kappa(0.5, -0.5 + 1e-9, t) - t).abs() < 1e-8);
        for (kappa, c, d) in [
            (1.0, 1.0, 1.0),
            (0.5, 2.0, 0.3),
            (1.0, -0.5, 2.0),
            (1.0, 1e-6, 1.0),
            (0.0, 1.0, 1.0),
        ] {
            let closed = d_kappa_c(kappa, c, d, t).unwrap();
            let inner = |u: f64| (-kappa * u).exp() * (1.0 - (-c * u).exp()) / c;
            let numeric = d * quadrature::double_exponential::integrate(inner, 0.0, t, 1e-14).integral;
            assert!(
                (closed - numeric).abs() < 1e-10,
                "kappa={kappa} C={c}: {closed} vs {numeric}"
            );
        }
        assert!(
            squared_lipschitz_bound(1.0, 10.0, 1.0, 1.0, 1.0, 1.0, 0.5)
                .unwrap()
                .value
                <= 1.0
        );
    }

    #[test]
    fn degenerate_cases() {
        let a = degenerate_bound(0.3, 7.0, 2.0, 1.0).unwrap();
        let b = degenerate_bound(0.3, 7.0, 1.0, 2.0).unwrap();
        assert_eq!(a.value, b.value);
        assert!(degenerate_bound(1.0, 1.0, 1.0, 1.0).is_err());
        let t = 60.0;
        let v = degenerate_bound(1.0, t, 2.0, 1.0).unwrap().raw.ln();
        assert!(rel(v, -t / 4.0) < 1e-12);
    }

    #[test]
    fn mgf_envelope_cases() {
        assert_eq!(mgf_envelope(0.0, 3.0, 1.0, 1.0, 2.0).unwrap(), 0.0);
        let e = mgf_envelope(0.5, 1.0, 0.0, 0.0, 2.0).unwrap();
        assert!((e - (0.5 - 0.25)).abs() < 1e-15);
    }

    #[test]
    fn named_bounds_dispatch() {
        let b = find_bound("gaussian").unwrap();
        let args = BTreeMap::from([("R".to_string(), 1.0), ("v".to_string(), 1.0)]);
        assert!((b.evaluate(&args).unwrap().value - (-0.5f64).exp()).abs() < 1e-15);
        let missing = BTreeMap::from([("R".to_string(), 1.0)]);
        assert!(b.evaluate(&missing).is_err());
        let extra = BTreeMap::from([("R".to_string(), 1.0), ("v".to_string(), 1.0), ("q".to_string(), 1.0)]);
        assert!(b.evaluate(&extra).is_err());
        assert!(matches!(find_bound("nope"), Err(Error::UnknownBound(_))));
    }

    fn monotone_in_r(f: impl Fn(f64) -> BoundValue, r: f64, dr: f64) -> std::result::Result<(), TestCaseError> {
        let a = f(r);
        let b = f(r + dr);
        prop_assert!(a.value > 0.0 && a.value <= 1.0);
        prop_assert!(b.value <= a.value * (1.0 + 1e-12), "{} then {}", a.value, b.value);
        Ok(())
    }

    proptest! {
        #[test]
        fn bounds_are_probabilities_and_decrease_in_r(
            r in 1e-3f64..20.0,
            dr in 0.0f64..5.0,
            v in 1e-2f64..10.0,
            a in 1e-3f64..5.0,
            t in 0.5f64..100.0,
            k in 0.1f64..3.0,
            alpha in -2.9f64..4.0,
            p in 0.0f64..0.49,
        ) {
            monotone_in_r(|r| gaussian_tail(r, v).unwrap(), r, dr)?;
            monotone_in_r(|r| bennett_tail(r, v, a).unwrap(), r, dr)?;
            monotone_in_r(|r| bernstein_gamma_tail(r, v, a).unwrap(), r, dr)?;
            monotone_in_r(|r| azuma_tail(r, v).unwrap(), r, dr)?;
            monotone_in_r(|r| selfnorm_tail(r).unwrap(), r, dr)?;
            monotone_in_r(|r| selfnorm_cd_tail(r, a, v).unwrap(), r, dr)?;
            monotone_in_r(|r| poly_kernel_bound(r, t, v, alpha).unwrap(), r, dr)?;
            monotone_in_r(|r| exp_kernel_bound(r, t).unwrap(), r, dr)?;
            monotone_in_r(|r| polyak_bound(r, t, p, k, a + 1.0).unwrap(), r, dr)?;
            monotone_in_r(|r| lipschitz_sde_bound(r, t, v, k, a, 1.0).unwrap(), r, dr)?;
            monotone_in_r(|r| ou_squared_bound(r, t, k, 1.0, a).unwrap(), r, dr)?;
            monotone_in_r(|r| squared_lipschitz_bound(r, t, 1.0, k, k, 1.0, a).unwrap(), r, dr)?;
            monotone_in_r(|r| degenerate_bound(r, t, k, k + a).unwrap(), r, dr)?;
        }

        #[test]
        fn special_functions_nonnegative(x in -1.0f64..1e6, a in 0.0f64..5.0, y in -20.0f64..20.0) {
            prop_assert!(eval_h(x).unwrap() >= 0.0);
            prop_assert!(eval_h1(x.max(-0.5)).unwrap() >= 0.0);
            prop_assert!(eval_phi_a(a, y).unwrap() >= 0.0);
        }

        #[test]
        fn phi_continuous_at_zero(x in -50.0f64..50.0) {
            let limit = eval_phi_a(0.0, x).unwrap();
            prop_assert!(rel(eval_phi_a(1e-12, x).unwrap(), limit) < 1e-9);
        }

        #[test]
        fn exact_rate_dominates_implied_rate(logr in -6.0f64..6.0, d in 1.0f64..10.0, k in 0.1f64..5.0) {
            let (i, j) = ldp_rates(logr.exp(), d, k).unwrap();
            prop_assert!(j >= i);
        }
    }
}
