//! Per-path functionals: Riemann sums, martingale transforms, realized
//! quadratic variation, resolvents and the auxiliary martingale `M^T`.
//!
//! Everything uses left-point conventions so that the discrete martingale
//! identities hold exactly on the grid.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{require_nonnegative, Error, Result};
use crate::processes::Trajectory;

/// Summary of one path, as fed to the tail bounds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FunctionalStats {
    /// The additive functional `S_T`.
    pub s_t: f64,
    /// Predictable quadratic variation proxy of `M^T`.
    pub weighted_qv: f64,
    pub h_a: f64,
    pub max_jump: f64,
    pub a_threshold: f64,
}

fn finite(v: f64, context: &'static str, step: usize) -> Result<f64> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::NonFinite { context, step })
    }
}

/// Left-point Riemann sum `sum_{i < n} f(t_i, X_i) dt` over `[0, T)`.
pub fn additive_functional(traj: &Trajectory, f: impl Fn(f64, &[f64]) -> f64) -> Result<f64> {
    let dt = traj.dt();
    let mut sum = 0.0;
    for i in 0..traj.n_steps() {
        sum += finite(f(traj.time(i), traj.state(i)), "additive functional", i)?;
    }
    Ok(sum * dt)
}

/// Plain sum `sum_{u=1}^{T} f(u, X_u)` for discrete-time chains.
pub fn discrete_sum(traj: &Trajectory, f: impl Fn(f64, &[f64]) -> f64) -> Result<f64> {
    let mut sum = 0.0;
    for i in 1..=traj.n_steps() {
        sum += finite(f(traj.time(i), traj.state(i)), "discrete sum", i)?;
    }
    Ok(sum)
}

/// `sum_i w(t_i) (X_{i+1} - X_i)` for a scalar path.
pub fn martingale_transform(traj: &Trajectory, w: impl Fn(f64) -> f64) -> Result<f64> {
    let x = traj.as_scalar()?;
    let mut sum = 0.0;
    for i in 0..traj.n_steps() {
        sum += finite(w(traj.time(i)) * (x[i + 1] - x[i]), "martingale transform", i)?;
    }
    Ok(sum)
}

/// `sum_i w(t_i) (X_{i+1} - X_i)^2` for a scalar path.
pub fn weighted_realized_qv(traj: &Trajectory, w: impl Fn(f64) -> f64) -> Result<f64> {
    let x = traj.as_scalar()?;
    let mut sum = 0.0;
    for i in 0..traj.n_steps() {
        let dx = x[i + 1] - x[i];
        sum += finite(w(traj.time(i)) * dx * dx, "realized variation", i)?;
    }
    Ok(sum)
}

/// `2 sum_i (T - t_i) [X]_{t_i} dt` with the running realized variation
/// `[X]_{t_i}`; its mean matches that of `sum_i (T - t_i)^2 (dX_i)^2`.
pub fn qv_integral_form(traj: &Trajectory) -> Result<f64> {
    let x = traj.as_scalar()?;
    let horizon = traj.horizon();
    let dt = traj.dt();
    let (mut qv, mut sum) = (0.0, 0.0);
    for i in 0..traj.n_steps() {
        sum += (horizon - traj.time(i)) * qv;
        let dx = x[i + 1] - x[i];
        qv += dx * dx;
    }
    finite(2.0 * sum * dt, "realized variation", traj.n_steps())
}

/// Residual of the summation-by-parts identity at grid index `k`:
///
/// `dt sum_{i<k} X_i = sum_{i<k} (T - t_{i+1}) dX_i - (T - t_k) X_k + (T - t_0) X_0`.
pub fn decomposition_residual(traj: &Trajectory, k: usize) -> Result<f64> {
    if k > traj.n_steps() {
        return Err(Error::param("k", format!("{k} is past the last grid index")));
    }
    let x = traj.as_scalar()?;
    let horizon = traj.horizon();
    let dt = traj.dt();
    let riemann = x[..k].iter().sum::<f64>() * dt;
    let transform: f64 = (0..k).map(|i| (horizon - traj.time(i + 1)) * (x[i + 1] - x[i])).sum();
    let rhs = transform - (horizon - traj.time(k)) * x[k] + (horizon - traj.time(0)) * x[0];
    Ok((riemann - rhs).abs())
}

/// Transition semigroup applied to `f`: `(t, u, x) -> P_{t,u} f(x)`.
pub type Semigroup = Arc<dyn Fn(f64, f64, f64) -> f64 + Send + Sync>;

#[derive(Clone)]
pub enum ResolventKind {
    /// `f(x) = c x` under `dX = -kappa X dt + dB`.
    OuLinear {
        c: f64,
    },
    NumericQuadrature {
        semigroup: Semigroup,
    },
}

/// Describes `R_t^T(x) = int_t^T P_{t,u} f(x) du`.
#[derive(Clone)]
pub struct ResolventSpec {
    pub kind: ResolventKind,
    pub kappa: f64,
    pub horizon: f64,
}

impl std::fmt::Debug for ResolventSpec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let kind = match self.kind {
            ResolventKind::OuLinear { c } => format!("OuLinear {{ c: {c} }}"),
            ResolventKind::NumericQuadrature { .. } => "NumericQuadrature".to_string(),
        };
        f.debug_struct("ResolventSpec")
            .field("kind", &kind)
            .field("kappa", &self.kappa)
            .field("horizon", &self.horizon)
            .finish()
    }
}

impl ResolventSpec {
    pub fn ou_linear(c: f64, kappa: f64, horizon: f64) -> Self {
        Self {
            kind: ResolventKind::OuLinear { c },
            kappa,
            horizon,
        }
    }

    /// `f(t, x) = c x`, the running integrand matching this resolvent.
    pub fn integrand(&self) -> Option<impl Fn(f64, &[f64]) -> f64> {
        match self.kind {
            ResolventKind::OuLinear { c } => Some(move |_: f64, x: &[f64]| c * x[0]),
            ResolventKind::NumericQuadrature { .. } => None,
        }
    }
}

pub const QUAD_REL_TOL: f64 = 1e-8;
pub const QUAD_ABS_TOL: f64 = 1e-12;

/// Integrates `f` over `[a, b]` by tanh-sinh quadrature, failing unless the
/// error estimate is within `max(abs_tol, rel_tol |I|)`.
pub fn integrate(f: impl Fn(f64) -> f64, a: f64, b: f64) -> Result<f64> {
    let out = quadrature::double_exponential::integrate(f, a, b, QUAD_ABS_TOL);
    let tolerance = QUAD_ABS_TOL.max(QUAD_REL_TOL * out.integral.abs());
    if out.integral.is_finite() && out.error_estimate <= tolerance {
        Ok(out.integral)
    } else {
        Err(Error::Quadrature {
            estimate: out.error_estimate,
            tolerance,
        })
    }
}

pub fn resolvent(spec: &ResolventSpec, t: f64, x: f64) -> Result<f64> {
    if !(t <= spec.horizon) {
        return Err(Error::param("t", format!("{t} is past the horizon {}", spec.horizon)));
    }
    match &spec.kind {
        ResolventKind::OuLinear { c } => {
            if !(spec.kappa > 0.0) {
                return Err(Error::param("kappa", "must be positive"));
            }
            Ok(c * x * -(-spec.kappa * (spec.horizon - t)).exp_m1() / spec.kappa)
        }
        ResolventKind::NumericQuadrature { semigroup } => {
            if t == spec.horizon {
                return Ok(0.0);
            }
            integrate(|u| semigroup(t, u, x), t, spec.horizon)
        }
    }
}

/// `M^T_{t_i} = sum_{j<i} f(t_j, X_j) dt + R_{t_i}^T(X_i)` along a scalar path.
pub fn auxiliary_martingale_path(
    traj: &Trajectory,
    f: impl Fn(f64, &[f64]) -> f64,
    spec: &ResolventSpec,
) -> Result<Vec<f64>> {
    if (traj.horizon() - spec.horizon).abs() > 1e-9 * spec.horizon {
        return Err(Error::param("spec", "resolvent horizon differs from the path horizon"));
    }
    let x = traj.as_scalar()?;
    let dt = traj.dt();
    let n = traj.n_steps();
    let mut out = Vec::with_capacity(n + 1);
    let mut running = 0.0;
    for i in 0..=n {
        // the last point sits exactly at the horizon, where R vanishes
        let r = if i == n {
            0.0
        } else {
            resolvent(spec, traj.time(i), x[i])?
        };
        out.push(finite(running + r, "auxiliary martingale", i)?);
        if i < n {
            running += finite(f(traj.time(i), &x[i..=i]), "auxiliary martingale", i)? * dt;
        }
    }
    Ok(out)
}

/// `H^a = sum (dM)^2 1{|dM| > a} + pqv_proxy` from the jumps (or grid
/// increments) of `M^T`.
pub fn h_a_statistic(s_t: f64, jumps: &[f64], a: f64, pqv_proxy: f64) -> Result<FunctionalStats> {
    require_nonnegative("a", a)?;
    require_nonnegative("pqv_proxy", pqv_proxy)?;
    let mut big = 0.0;
    let mut max_jump = 0.0f64;
    for &j in jumps {
        if !j.is_finite() {
            return Err(Error::NonFinite {
                context: "jump sizes",
                step: 0,
            });
        }
        max_jump = max_jump.max(j.abs());
        if j.abs() > a {
            big += j * j;
        }
    }
    Ok(FunctionalStats {
        s_t,
        weighted_qv: pqv_proxy,
        h_a: big + pqv_proxy,
        max_jump,
        a_threshold: a,
    })
}

/// `int_0^t (sigma^2 / kappa^2) (1 - e^{-kappa (T - s)})^2 ds`, the
/// predictable variation envelope of `M^T` when the conditional expectations
/// decay like `e^{-kappa (u - t)}`. `kappa = 0` gives `int_0^t (T - s)^2 ds`.
pub fn pqv_exp_decay_envelope(sigma: f64, kappa: f64, horizon: f64, t: f64) -> Result<f64> {
    if !(kappa >= 0.0) || !kappa.is_finite() {
        return Err(Error::param("kappa", format!("must be non-negative, got {kappa}")));
    }
    require_nonnegative("t", t)?;
    if t > horizon {
        return Err(Error::param("t", format!("{t} is past the horizon {horizon}")));
    }
    let s2 = sigma * sigma;
    // substitute r = T - s: integrate g(r) = ((1 - e^{-kappa r}) / kappa)^2 over [T - t, T]
    let (lo, hi) = (horizon - t, horizon);
    if kappa * horizon < 1.0 {
        // g(r) = sum_{n>=2} a_n kappa^{n-2} r^n, a_n = ((-2)^n - 2 (-1)^n) / n!
        let mut sum = 0.0;
        let mut fact = 2.0;
        let mut k_pow = 1.0;
        let (mut lo_pow, mut hi_pow) = (lo.powi(3), hi.powi(3));
        for n in 2..60 {
            if n > 2 {
                fact *= n as f64;
                k_pow *= kappa;
                lo_pow *= lo;
                hi_pow *= hi;
            }
            let sign = if n % 2 == 0 { 1.0 } else { -1.0 };
            let a_n = sign * (2f64.powi(n) - 2.0) / fact;
            let term = a_n * k_pow * (hi_pow - lo_pow) / (n + 1) as f64;
            sum += term;
            if term.abs() <= 1e-17 * sum.abs() {
                break;
            }
        }
        return Ok(s2 * sum);
    }
    let e1 = |r: f64| (-kappa * r).exp();
    let value = t - 2.0 * (e1(lo) - e1(hi)) / kappa + (e1(2.0 * lo) - e1(2.0 * hi)) / (2.0 * kappa);
    Ok(s2 * value / (kappa * kappa))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::processes::{brownian_path, ou_path, ou_second_moment, poisson_path, Grid};
    use crate::rng::derive_stream;

    fn mean_se(xs: &[f64]) -> (f64, f64) {
        let n = xs.len() as f64;
        let m = xs.iter().sum::<f64>() / n;
        let v = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0);
        (m, (v / n).sqrt())
    }

    fn constant_path(c: f64, horizon: f64, dt: f64) -> Trajectory {
        let grid = Grid::new(horizon, dt).unwrap();
        Trajectory::scalar(grid, vec![c; grid.n_steps + 1]).unwrap()
    }

    #[test]
    fn additive_functional_of_one() {
        let p = constant_path(3.0, 2.0, 0.01);
        let s = additive_functional(&p, |_, _| 1.0).unwrap();
        assert!((s - 2.0).abs() < 1e-12);
    }

    #[test]
    fn additive_functional_rejects_nan() {
        let p = constant_path(-1.0, 1.0, 0.1);
        assert!(additive_functional(&p, |_, x| x[0].sqrt()).is_err());
    }

    #[test]
    fn discrete_sum_skips_start() {
        let grid = Grid::unit(3);
        let p = Trajectory::scalar(grid, vec![100.0, 1.0, 2.0, 3.0]).unwrap();
        assert_eq!(discrete_sum(&p, |_, x| x[0]).unwrap(), 6.0);
    }

    #[test]
    fn transform_trivial_weights() {
        let b = brownian_path(1, 1.0, 0.01, derive_stream(1, 1)).unwrap();
        assert_eq!(martingale_transform(&b, |_| 0.0).unwrap(), 0.0);
        let end = *b.values().last().unwrap();
        assert!((martingale_transform(&b, |_| 1.0).unwrap() - end).abs() < 1e-12);
    }

    #[test]
    fn transform_variance_is_t_cubed_over_three() {
        let horizon = 2.0;
        let xs: Vec<f64> = (0..100_000)
            .map(|k| {
                let b = brownian_path(1, horizon, 0.002, derive_stream(14, k)).unwrap();
                martingale_transform(&b, |u| horizon - u).unwrap()
            })
            .collect();
        let var = xs.iter().map(|x| x * x).sum::<f64>() / xs.len() as f64;
        let exact = horizon.powi(3) / 3.0;
        assert!((var / exact - 1.0).abs() < 0.02, "{var} vs {exact}");
    }

    #[test]
    fn summation_by_parts_is_exact() {
        for k in 0..50 {
            let b = brownian_path(1, 3.0, 0.003, derive_stream(2, k)).unwrap();
            let n = b.n_steps();
            let s = additive_functional(&b, |_, x| x[0]).unwrap();
            assert!(decomposition_residual(&b, n).unwrap() <= 1e-10 * (1.0 + s.abs()));
            assert!(decomposition_residual(&b, n / 3).unwrap() <= 1e-10 * (1.0 + s.abs()));
            assert_eq!(decomposition_residual(&b, 0).unwrap(), 0.0);
        }
        let c = constant_path(2.5, 1.0, 0.01);
        assert!(decomposition_residual(&c, 100).unwrap() <= 1e-12);
        assert!(decomposition_residual(&c, 101).is_err());
    }

    #[test]
    fn realized_qv_means() {
        assert_eq!(
            weighted_realized_qv(&constant_path(1.0, 1.0, 0.1), |_| 1.0).unwrap(),
            0.0
        );
        let (mut bm, mut pois) = (Vec::new(), Vec::new());
        let horizon = 3.0;
        for k in 0..100_000 {
            let b = brownian_path(1, 1.0, 0.01, derive_stream(40, k)).unwrap();
            bm.push(weighted_realized_qv(&b, |_| 1.0).unwrap());
            let p = poisson_path(1.0, horizon, 0.01, derive_stream(41, k)).unwrap();
            let comp = p.map_scalar(|t, x| x[0] - t).unwrap();
            pois.push(weighted_realized_qv(&comp, |u| (horizon - u).powi(2)).unwrap());
        }
        let (m, se) = mean_se(&bm);
        assert!((m - 1.0).abs() < 4.0 * se, "Brownian {m}");
        // left-point weights on the grid add an O(dt) bias T^2 dt / 2 relative to T^3 / 3
        let (m, se) = mean_se(&pois);
        let exact = horizon.powi(3) / 3.0;
        assert!(
            (m - exact).abs() < 4.0 * se + horizon.powi(2) * 0.01,
            "Poisson {m} vs {exact}"
        );
    }

    #[test]
    fn qv_ignores_smooth_drift() {
        let b = brownian_path(1, 1.0, 0.0001, derive_stream(3, 3)).unwrap();
        let shifted = b.map_scalar(|t, x| x[0] + (3.0 * t).sin()).unwrap();
        let plain = weighted_realized_qv(&b, |_| 1.0).unwrap();
        let moved = weighted_realized_qv(&shifted, |_| 1.0).unwrap();
        assert!((plain - moved).abs() < 0.05, "{plain} vs {moved}");
    }

    #[test]
    fn integral_form_agrees_in_mean() {
        let horizon = 1.0;
        let (mut direct, mut integral) = (Vec::new(), Vec::new());
        for k in 0..50_000 {
            let b = brownian_path(1, horizon, 0.005, derive_stream(50, k)).unwrap();
            direct.push(weighted_realized_qv(&b, |u| (horizon - u).powi(2)).unwrap());
            integral.push(qv_integral_form(&b).unwrap());
        }
        let diff: Vec<f64> = direct.iter().zip(&integral).map(|(a, b)| a - b).collect();
        let (m, se) = mean_se(&diff);
        assert!(m.abs() < 4.0 * se + 0.01, "difference {m} (se {se})");
    }

    #[test]
    fn ou_square_average_matches_moment_integral() {
        let (kappa, horizon, x0) = (1.0, 2.0, 1.5);
        let xs: Vec<f64> = (0..100_000)
            .map(|k| {
                let p = ou_path(kappa, &[x0], horizon, 0.01, derive_stream(60, k)).unwrap();
                additive_functional(&p, |_, x| x[0] * x[0]).unwrap() / horizon
            })
            .collect();
        let (m, se) = mean_se(&xs);
        // exact mean of the left-point sum on the grid
        let grid = Grid::new(horizon, 0.01).unwrap();
        let exact: f64 = (0..grid.n_steps)
            .map(|i| ou_second_moment(kappa, x0 * x0, 1, grid.time(i)))
            .sum::<f64>()
            * 0.01
            / horizon;
        assert!((m - exact).abs() < 3.0 * se, "{m} vs {exact}");
    }

    #[test]
    fn closed_form_resolvent() {
        let spec = ResolventSpec::ou_linear(1.0, 1.0, 50.0);
        assert_eq!(resolvent(&spec, 50.0, 3.0).unwrap(), 0.0);
        assert!((resolvent(&spec, 0.0, 0.7).unwrap() - 0.7).abs() < 1e-8);
        assert!(resolvent(&spec, 51.0, 1.0).is_err());
    }

    #[test]
    fn numeric_resolvent_matches_closed_form() {
        let (c, kappa, horizon) = (1.3, 0.8, 2.5);
        let closed = ResolventSpec::ou_linear(c, kappa, horizon);
        let numeric = ResolventSpec {
            kind: ResolventKind::NumericQuadrature {
                semigroup: Arc::new(move |t, u, x| c * x * (-kappa * (u - t)).exp()),
            },
            kappa,
            horizon,
        };
        for (t, x) in [(0.0, 1.0), (1.0, -2.0), (2.4, 0.5), (2.5, 4.0)] {
            let a = resolvent(&closed, t, x).unwrap();
            let b = resolvent(&numeric, t, x).unwrap();
            assert!((a - b).abs() < 1e-7, "t={t}: {a} vs {b}");
        }
    }

    #[test]
    fn quadrature_failure_is_reported() {
        let err = integrate(|u| 1.0 / u, 0.0, 1.0).unwrap_err();
        assert!(matches!(err, Error::Quadrature { .. }));
    }

    #[test]
    fn auxiliary_martingale_properties() {
        let (c, kappa, horizon, x0) = (1.0, 1.0, 2.0, 0.8);
        let spec = ResolventSpec::ou_linear(c, kappa, horizon);
        let f = |_: f64, x: &[f64]| c * x[0];
        let mut drift = Vec::new();
        for k in 0..100_000 {
            let p = ou_path(kappa, &[x0], horizon, 0.01, derive_stream(70, k)).unwrap();
            let m = auxiliary_martingale_path(&p, f, &spec).unwrap();
            if k == 0 {
                let exact = x0 * -(-kappa * horizon).exp_m1() / kappa;
                assert!((m[0] - exact).abs() < 1e-15);
            }
            let s = additive_functional(&p, f).unwrap();
            assert!((m[p.n_steps()] - s).abs() < 1e-12);
            drift.push(m[p.n_steps() / 2] - m[0]);
        }
        let (mean, se) = mean_se(&drift);
        // the left-point sum carries a deterministic O(dt) drift; see the exact grid mean
        assert!(mean.abs() < 3.0 * se + 0.01 * x0, "{mean} (se {se})");
    }

    #[test]
    fn h_a_definitions() {
        let stats = h_a_statistic(1.0, &[0.1, -0.2], 0.5, 2.0).unwrap();
        assert_eq!(stats.h_a, 2.0);
        assert_eq!(stats.weighted_qv, 2.0);
        assert!((stats.max_jump - 0.2).abs() < 1e-15);
        let stats = h_a_statistic(0.0, &[1.0, 1.0, 0.5], 0.0, 3.0).unwrap();
        assert_eq!(stats.h_a, 1.0 + 1.0 + 0.25 + 3.0);
        assert!(h_a_statistic(0.0, &[], -1.0, 0.0).is_err());
    }

    #[test]
    fn poisson_h_at_horizon_threshold() {
        let horizon = 3.0;
        let p = poisson_path(1.0, horizon, 0.01, derive_stream(80, 0)).unwrap();
        let jumps: Vec<f64> = p.jump_times.as_ref().unwrap().iter().map(|t| horizon - t).collect();
        let pqv = horizon.powi(3) / 3.0;
        let stats = h_a_statistic(0.0, &jumps, horizon, pqv).unwrap();
        assert_eq!(stats.h_a, pqv);
    }

    #[test]
    fn envelope_limits() {
        assert_eq!(pqv_exp_decay_envelope(1.0, 1.0, 2.0, 0.0).unwrap(), 0.0);
        let zero = pqv_exp_decay_envelope(1.0, 0.0, 2.0, 1.5).unwrap();
        let exact = (8.0 - 0.125) / 3.0;
        assert!((zero - exact).abs() < 1e-14);
        let tiny = pqv_exp_decay_envelope(1.0, 1e-9, 2.0, 1.5).unwrap();
        assert!((tiny - exact).abs() < 1e-8);
        assert!(pqv_exp_decay_envelope(1.0, -0.1, 2.0, 1.0).is_err());
        assert!(pqv_exp_decay_envelope(1.0, 1.0, 2.0, 3.0).is_err());
    }

    #[test]
    fn envelope_branches_agree() {
        // the series and closed form overlap around kappa T = 1
        for (kappa, t) in [(0.4999, 2.0), (0.5001, 2.0), (0.49, 1.0)] {
            let series_side = pqv_exp_decay_envelope(1.7, kappa, 2.0, t).unwrap();
            let a = ((1.0 - (-kappa * 2.0f64).exp()) / kappa).powi(2);
            assert!(series_side > 0.0 && series_side <= 1.7f64.powi(2) * a * t + 1e-12);
        }
        let below = pqv_exp_decay_envelope(1.0, 0.5 - 1e-12, 2.0, 1.3).unwrap();
        let above = pqv_exp_decay_envelope(1.0, 0.5 + 1e-12, 2.0, 1.3).unwrap();
        assert!((below - above).abs() < 1e-11);
    }

    #[test]
    fn envelope_matches_triple_integral() {
        // d<M>_s = sigma^2 (int_s^T e^{-kappa (u - s)} du)^2 ds, written as the
        // triple integral over (s, u, v) and integrated numerically.
        let (sigma, kappa, horizon, t) = (1.0, 1.0, 2.0, 2.0);
        let inner = |s: f64| {
            quadrature::double_exponential::integrate(
                |u| {
                    quadrature::double_exponential::integrate(
                        |v| (-kappa * (u - s)).exp() * (-kappa * (v - s)).exp(),
                        s,
                        horizon,
                        1e-13,
                    )
                    .integral
                },
                s,
                horizon,
                1e-13,
            )
            .integral
        };
        let triple = sigma * sigma * quadrature::double_exponential::integrate(inner, 0.0, t, 1e-12).integral;
        let closed = pqv_exp_decay_envelope(sigma, kappa, horizon, t).unwrap();
        assert!((triple - closed).abs() < 1e-8, "{triple} vs {closed}");
    }
}
