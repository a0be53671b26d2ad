//! Grid trajectories of the simulated processes.
//!
//! Linear processes (Brownian motion, Ornstein-Uhlenbeck, the degenerate
//! OU-driven pair) use exact Gaussian transitions, so their marginals on the
//! grid do not depend on `dt`. Euler-Maruyama is only used for general drifts.
//! Noise is consumed in time order, and within a step in coordinate order, so
//! two simulators fed the same [`Stream`] see identical increments.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{require_nonnegative, require_positive, Error, Result};
use crate::rng::{SeedContext, Stream};

/// Source of standard normal innovations.
pub trait NoiseSource {
    fn next_normal(&mut self) -> f64;
    fn next_uniform(&mut self) -> f64;
}

impl NoiseSource for Stream {
    #[inline]
    fn next_normal(&mut self) -> f64 {
        self.normal()
    }
    #[inline]
    fn next_uniform(&mut self) -> f64 {
        self.uniform()
    }
}

/// Noise that is identically zero (uniforms sit at the midpoint 1/2).
#[derive(Debug, Clone, Copy, Default)]
pub struct ZeroNoise;

impl NoiseSource for ZeroNoise {
    fn next_normal(&mut self) -> f64 {
        0.0
    }
    fn next_uniform(&mut self) -> f64 {
        0.5
    }
}

/// Uniform time grid `t0, t0 + dt, ..., t0 + n_steps * dt`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    pub t0: f64,
    pub dt: f64,
    pub n_steps: usize,
}

impl Grid {
    /// Grid on `[0, horizon]`. `dt` must divide `horizon` up to rounding.
    pub fn new(horizon: f64, dt: f64) -> Result<Self> {
        require_positive("T", horizon)?;
        require_positive("dt", dt)?;
        let steps = (horizon / dt).round();
        if steps < 1.0 || (steps * dt - horizon).abs() > 1e-9 * horizon {
            return Err(Error::param(
                "dt",
                format!("{dt} does not divide the horizon {horizon}"),
            ));
        }
        Ok(Self {
            t0: 0.0,
            dt,
            n_steps: steps as usize,
        })
    }

    /// Unit-step grid `0, 1, ..., n_steps` used by discrete-time chains.
    pub fn unit(n_steps: usize) -> Self {
        Self {
            t0: 0.0,
            dt: 1.0,
            n_steps,
        }
    }

    #[inline]
    pub fn time(&self, i: usize) -> f64 {
        self.t0 + i as f64 * self.dt
    }

    pub fn horizon(&self) -> f64 {
        self.time(self.n_steps)
    }

    fn matches(&self, other: &Grid) -> bool {
        self.n_steps == other.n_steps
            && (self.t0 - other.t0).abs() <= 1e-12 * (1.0 + self.t0.abs())
            && (self.dt - other.dt).abs() <= 1e-12 * self.dt
    }
}

/// Values of a `dim`-dimensional process on a uniform grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub grid: Grid,
    pub dim: usize,
    /// Row-major: the state at index `i` is `values[i * dim..(i + 1) * dim]`.
    values: Vec<f64>,
    /// Sorted event times of a counting process.
    pub jump_times: Option<Vec<f64>>,
}

impl Trajectory {
    pub fn new(grid: Grid, dim: usize, values: Vec<f64>, jump_times: Option<Vec<f64>>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::param("dim", "must be at least 1"));
        }
        if values.len() != (grid.n_steps + 1) * dim {
            return Err(Error::param(
                "values",
                format!("expected {} entries, got {}", (grid.n_steps + 1) * dim, values.len()),
            ));
        }
        if let Some(step) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                context: "trajectory",
                step: step / dim,
            });
        }
        if let Some(times) = &jump_times {
            let end = grid.horizon();
            let sorted = times.windows(2).all(|w| w[0] <= w[1]);
            let inside = times.iter().all(|&t| t >= grid.t0 && t <= end);
            if !sorted || !inside {
                return Err(Error::param("jump_times", "must be sorted and inside the grid window"));
            }
        }
        Ok(Self {
            grid,
            dim,
            values,
            jump_times,
        })
    }

    /// One-dimensional trajectory from a value sequence.
    pub fn scalar(grid: Grid, values: Vec<f64>) -> Result<Self> {
        Self::new(grid, 1, values, None)
    }

    pub fn n_steps(&self) -> usize {
        self.grid.n_steps
    }

    pub fn dt(&self) -> f64 {
        self.grid.dt
    }

    pub fn time(&self, i: usize) -> f64 {
        self.grid.time(i)
    }

    pub fn horizon(&self) -> f64 {
        self.grid.horizon()
    }

    #[inline]
    pub fn state(&self, i: usize) -> &[f64] {
        &self.values[i * self.dim..(i + 1) * self.dim]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// The value sequence of a one-dimensional trajectory.
    pub fn as_scalar(&self) -> Result<&[f64]> {
        if self.dim == 1 {
            Ok(&self.values)
        } else {
            Err(Error::param(
                "trajectory",
                format!("expected a scalar path, got dimension {}", self.dim),
            ))
        }
    }

    /// Applies `f(t, x)` at every grid point, giving a scalar trajectory.
    pub fn map_scalar(&self, mut f: impl FnMut(f64, &[f64]) -> f64) -> Result<Trajectory> {
        let values = (0..=self.n_steps()).map(|i| f(self.time(i), self.state(i))).collect();
        let mut out = Trajectory::scalar(self.grid, values)?;
        out.jump_times = self.jump_times.clone();
        Ok(out)
    }

    pub fn component(&self, k: usize) -> Result<Trajectory> {
        if k >= self.dim {
            return Err(Error::param("component", format!("{k} >= dimension {}", self.dim)));
        }
        self.map_scalar(|_, x| x[k])
    }
}

/// Two trajectories on the same grid, optionally driven by the same noise.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoupledPair {
    pub a: Trajectory,
    pub b: Trajectory,
    pub shared_noise: bool,
}

impl CoupledPair {
    pub fn new(a: Trajectory, b: Trajectory, shared_noise: bool) -> Result<Self> {
        if !a.grid.matches(&b.grid) || a.dim != b.dim {
            return Err(Error::param("pair", "trajectories do not share a grid"));
        }
        Ok(Self { a, b, shared_noise })
    }
}

fn check_state(name: &str, x: &[f64]) -> Result<()> {
    if x.is_empty() {
        return Err(Error::param(name, "dimension must be at least 1"));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::param(name, "must be finite"));
    }
    Ok(())
}

/// Standard `d`-dimensional Brownian motion started at 0.
pub fn brownian_path(d: usize, horizon: f64, dt: f64, ctx: SeedContext) -> Result<Trajectory> {
    let grid = Grid::new(horizon, dt)?;
    brownian_path_with(d, grid, &mut ctx.stream())
}

pub fn brownian_path_with(d: usize, grid: Grid, noise: &mut impl NoiseSource) -> Result<Trajectory> {
    if d == 0 {
        return Err(Error::param("d", "dimension must be at least 1"));
    }
    let sd = grid.dt.sqrt();
    let mut values = vec![0.0; (grid.n_steps + 1) * d];
    for i in 0..grid.n_steps {
        for k in 0..d {
            values[(i + 1) * d + k] = values[i * d + k] + sd * noise.next_normal();
        }
    }
    Trajectory::new(grid, d, values, None)
}

/// Ornstein-Uhlenbeck `dX = -kappa X dt + dB` started at `x0`, sampled with
/// the exact Gaussian transition.
pub fn ou_path(kappa: f64, x0: &[f64], horizon: f64, dt: f64, ctx: SeedContext) -> Result<Trajectory> {
    let grid = Grid::new(horizon, dt)?;
    ou_path_with(kappa, x0, grid, &mut ctx.stream())
}

pub fn ou_path_with(kappa: f64, x0: &[f64], grid: Grid, noise: &mut impl NoiseSource) -> Result<Trajectory> {
    require_positive("kappa", kappa)?;
    check_state("x0", x0)?;
    let d = x0.len();
    let decay = (-kappa * grid.dt).exp();
    let sd = (-(-2.0 * kappa * grid.dt).exp_m1() / (2.0 * kappa)).sqrt();
    let mut values = Vec::with_capacity((grid.n_steps + 1) * d);
    values.extend_from_slice(x0);
    for i in 0..grid.n_steps {
        for k in 0..d {
            let next = values[i * d + k] * decay + sd * noise.next_normal();
            values.push(next);
        }
    }
    Trajectory::new(grid, d, values, None)
}

/// Exact mean of `|X_t|^2` for the Ornstein-Uhlenbeck process above.
pub fn ou_second_moment(kappa: f64, x0_norm2: f64, d: usize, t: f64) -> f64 {
    x0_norm2 * (-2.0 * kappa * t).exp() + d as f64 * -(-2.0 * kappa * t).exp_m1() / (2.0 * kappa)
}

/// Drift `b(t, x)` writing into `out`.
pub type Drift<'a> = dyn Fn(f64, &[f64], &mut [f64]) + 'a;

/// Euler-Maruyama for `dX = b(t, X) dt + sigma dB` with a constant `d x d`
/// matrix `sigma` (row-major).
pub fn sde_euler_path(
    drift: &Drift<'_>,
    sigma: &[f64],
    x0: &[f64],
    horizon: f64,
    dt: f64,
    ctx: SeedContext,
) -> Result<Trajectory> {
    let grid = Grid::new(horizon, dt)?;
    sde_euler_path_with(drift, sigma, x0, grid, &mut ctx.stream())
}

pub fn sde_euler_path_with(
    drift: &Drift<'_>,
    sigma: &[f64],
    x0: &[f64],
    grid: Grid,
    noise: &mut impl NoiseSource,
) -> Result<Trajectory> {
    check_state("x0", x0)?;
    let d = x0.len();
    if sigma.len() != d * d {
        return Err(Error::param("sigma", format!("expected a {d}x{d} matrix")));
    }
    let sd = grid.dt.sqrt();
    let mut values = Vec::with_capacity((grid.n_steps + 1) * d);
    values.extend_from_slice(x0);
    let mut b = vec![0.0; d];
    let mut db = vec![0.0; d];
    for i in 0..grid.n_steps {
        let x = &values[i * d..(i + 1) * d];
        drift(grid.time(i), x, &mut b);
        if b.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                context: "drift",
                step: i,
            });
        }
        for v in db.iter_mut() {
            *v = sd * noise.next_normal();
        }
        for k in 0..d {
            let diffusion: f64 = (0..d).map(|j| sigma[k * d + j] * db[j]).sum();
            let next = values[i * d + k] + b[k] * grid.dt + diffusion;
            if !next.is_finite() {
                return Err(Error::NonFinite {
                    context: "euler state",
                    step: i + 1,
                });
            }
            values.push(next);
        }
    }
    Trajectory::new(grid, d, values, None)
}

/// Homogeneous Poisson counting process on `[0, T]` observed on a grid, with
/// its exact jump times.
pub fn poisson_path(rate: f64, horizon: f64, dt: f64, ctx: SeedContext) -> Result<Trajectory> {
    let grid = Grid::new(horizon, dt)?;
    poisson_path_with(rate, grid, &mut ctx.stream())
}

pub fn poisson_path_with(rate: f64, grid: Grid, stream: &mut Stream) -> Result<Trajectory> {
    require_positive("rate", rate)?;
    let end = grid.horizon();
    let mut jumps = Vec::new();
    let mut t = grid.t0 + stream.exponential(rate);
    while t <= end {
        jumps.push(t);
        t += stream.exponential(rate);
    }
    let mut values = Vec::with_capacity(grid.n_steps + 1);
    let mut count = 0usize;
    for i in 0..=grid.n_steps {
        let ti = grid.time(i);
        while count < jumps.len() && jumps[count] <= ti {
            count += 1;
        }
        values.push(count as f64);
    }
    Trajectory::new(grid, 1, values, Some(jumps))
}

/// The pair `dX = -alpha X dt + dB`, `dY = (-beta Y + X) dt` as a 2-d
/// trajectory `(X, Y)`. `X` uses the exact OU transition; `Y` integrates
/// `e^{beta s} X_s` by the trapezoid rule over each step.
pub fn degenerate_pair_path(
    alpha: f64,
    beta: f64,
    x: f64,
    y: f64,
    horizon: f64,
    dt: f64,
    ctx: SeedContext,
) -> Result<Trajectory> {
    let grid = Grid::new(horizon, dt)?;
    degenerate_pair_path_with(alpha, beta, x, y, grid, &mut ctx.stream())
}

pub fn degenerate_pair_path_with(
    alpha: f64,
    beta: f64,
    x: f64,
    y: f64,
    grid: Grid,
    noise: &mut impl NoiseSource,
) -> Result<Trajectory> {
    require_positive("alpha", alpha)?;
    require_positive("beta", beta)?;
    if alpha == beta {
        return Err(Error::param("beta", "must differ from alpha"));
    }
    check_state("x0", &[x, y])?;
    let x_decay = (-alpha * grid.dt).exp();
    let x_sd = (-(-2.0 * alpha * grid.dt).exp_m1() / (2.0 * alpha)).sqrt();
    let y_decay = (-beta * grid.dt).exp();
    let half = 0.5 * grid.dt;
    let mut values = Vec::with_capacity(2 * (grid.n_steps + 1));
    values.extend_from_slice(&[x, y]);
    let (mut xs, mut ys) = (x, y);
    for _ in 0..grid.n_steps {
        let x_next = xs * x_decay + x_sd * noise.next_normal();
        ys = ys * y_decay + half * (y_decay * xs + x_next);
        xs = x_next;
        values.extend_from_slice(&[xs, ys]);
    }
    Trajectory::new(grid, 2, values, None)
}

/// Sensitivity `dY_t / dx` of the degenerate pair, `(e^{-alpha t} - e^{-beta t}) / (beta - alpha)`.
pub fn degenerate_pair_sensitivity(alpha: f64, beta: f64, t: f64) -> f64 {
    ((-alpha * t).exp() - (-beta * t).exp()) / (beta - alpha)
}

/// Law of the i.i.d. noise `W_t` in the stochastic approximation recursion.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum NoiseLaw {
    Uniform {
        lo: f64,
        hi: f64,
    },
    /// Not compactly supported; rejected by [`polyak_run`].
    Gaussian {
        mean: f64,
        sd: f64,
    },
}

impl NoiseLaw {
    pub fn support(&self) -> Option<(f64, f64)> {
        match *self {
            NoiseLaw::Uniform { lo, hi } => Some((lo, hi)),
            NoiseLaw::Gaussian { .. } => None,
        }
    }

    pub fn mean(&self) -> f64 {
        match *self {
            NoiseLaw::Uniform { lo, hi } => 0.5 * (lo + hi),
            NoiseLaw::Gaussian { mean, .. } => mean,
        }
    }

    fn sample(&self, noise: &mut impl NoiseSource) -> f64 {
        match *self {
            NoiseLaw::Uniform { lo, hi } => lo + (hi - lo) * noise.next_uniform(),
            NoiseLaw::Gaussian { mean, sd } => mean + sd * noise.next_normal(),
        }
    }
}

pub type Objective = Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>;

/// Robbins-Monro recursion `X_t = X_{t-1} - alpha_t g(X_{t-1}, W_t)` with
/// `alpha_t = lambda t^{-p}`.
#[derive(Clone)]
pub struct PolyakConfig {
    pub lambda: f64,
    pub p: f64,
    pub g: Objective,
    pub w_law: NoiseLaw,
    pub x0: f64,
    /// Lower bound on `E m(W)` for `m(w) <= d/dx g(x, w)`.
    pub m_bar: f64,
    /// Upper bound on `E M(W)` for `d/dx g(x, w) <= M(w)`.
    pub big_m_bar: f64,
}

impl std::fmt::Debug for PolyakConfig {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("PolyakConfig")
            .field("lambda", &self.lambda)
            .field("p", &self.p)
            .field("w_law", &self.w_law)
            .field("x0", &self.x0)
            .field("m_bar", &self.m_bar)
            .field("big_m_bar", &self.big_m_bar)
            .finish_non_exhaustive()
    }
}

impl PolyakConfig {
    /// `g(x, w) = x - w` with `W ~ U[-1, 1]`, so `m = M = 1`.
    pub fn linear_uniform(lambda: f64, p: f64, x0: f64) -> Self {
        Self {
            lambda,
            p,
            g: Arc::new(|x, w| x - w),
            w_law: NoiseLaw::Uniform { lo: -1.0, hi: 1.0 },
            x0,
            m_bar: 1.0,
            big_m_bar: 1.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        require_positive("lambda", self.lambda)?;
        require_nonnegative("p", self.p)?;
        if self.p >= 0.5 {
            return Err(Error::param("p", format!("must be below 1/2, got {}", self.p)));
        }
        require_positive("m_bar", self.m_bar)?;
        require_positive("M_bar", self.big_m_bar)?;
        if self.m_bar > self.big_m_bar {
            return Err(Error::param("m_bar", "must not exceed M_bar"));
        }
        if !self.x0.is_finite() {
            return Err(Error::param("x0", "must be finite"));
        }
        if self.w_law.support().is_none() {
            return Err(Error::param("w_law", "noise law must have compact support"));
        }
        Ok(())
    }

    #[inline]
    pub fn step(&self, t: usize) -> f64 {
        self.lambda * (t as f64).powf(-self.p)
    }

    /// Largest admissible `lambda` for a bound at horizon `T`.
    pub fn admissible_lambda(&self, horizon: usize) -> f64 {
        let tp = (horizon as f64).powf(self.p);
        2.0 * self.m_bar / (self.big_m_bar * self.big_m_bar) * tp / (1.0 + tp)
    }

    pub fn check_admissible(&self, horizon: usize) -> Result<()> {
        self.validate()?;
        let limit = self.admissible_lambda(horizon);
        if self.lambda > limit {
            return Err(Error::param(
                "lambda",
                format!(
                    "{} exceeds the admissible step scale {limit} at T = {horizon}",
                    self.lambda
                ),
            ));
        }
        Ok(())
    }

    /// `prod_{u=s+1}^{t} (1 - 2 alpha_u m_bar + alpha_u^2 M_bar^2)`, the
    /// contraction factor of `E (X^x_t - X^y_t)^2 / (x - y)^2`.
    pub fn contraction_factor(&self, s: usize, t: usize) -> f64 {
        ((s + 1)..=t)
            .map(|u| {
                let a = self.step(u);
                1.0 - 2.0 * a * self.m_bar + a * a * self.big_m_bar * self.big_m_bar
            })
            .product()
    }

    /// Per-step contraction rate `kappa_T = alpha_T (m_bar - alpha_T M_bar^2 / 2)`.
    pub fn kappa_at(&self, horizon: usize) -> f64 {
        let a = self.step(horizon);
        a * (self.m_bar - 0.5 * a * self.big_m_bar * self.big_m_bar)
    }

    /// Deterministic envelope `R_t >= |X_t|` built by
    /// `R_{s+1} = R_s + alpha_{s+1} sup_{|x| <= R_s} g*(x)`.
    pub fn envelope(&self, horizon: usize, sup_g_star: impl Fn(f64) -> f64) -> Vec<f64> {
        let mut out = Vec::with_capacity(horizon + 1);
        let mut r = self.x0.abs();
        out.push(r);
        for t in 1..=horizon {
            r += self.step(t) * sup_g_star(r);
            out.push(r);
        }
        out
    }
}

/// Iterates of the recursion and, when a sup-oracle `g*` was given, the
/// predictable increment bounds `C_t = |alpha_t g*(X_{t-1})|` for `t = 1..=T`.
#[derive(Debug, Clone)]
pub struct PolyakRun {
    pub traj: Trajectory,
    pub increment_bounds: Option<Vec<f64>>,
    /// `max_t sup_w |g(X_t, w)|` over `t <= T` when `g*` was given.
    pub max_g_star: Option<f64>,
}

pub fn polyak_run(
    cfg: &PolyakConfig,
    horizon: usize,
    ctx: SeedContext,
    g_star: Option<&dyn Fn(f64) -> f64>,
) -> Result<PolyakRun> {
    polyak_run_with(cfg, horizon, &mut ctx.stream(), g_star)
}

pub fn polyak_run_with(
    cfg: &PolyakConfig,
    horizon: usize,
    noise: &mut impl NoiseSource,
    g_star: Option<&dyn Fn(f64) -> f64>,
) -> Result<PolyakRun> {
    cfg.validate()?;
    if horizon == 0 {
        return Err(Error::param("T", "must be at least 1"));
    }
    let mut values = Vec::with_capacity(horizon + 1);
    values.push(cfg.x0);
    let mut bounds = g_star.map(|_| Vec::with_capacity(horizon));
    let mut max_g = g_star.map(|gs| gs(cfg.x0).abs());
    let mut x = cfg.x0;
    for t in 1..=horizon {
        let a = cfg.step(t);
        let w = cfg.w_law.sample(noise);
        if let (Some(gs), Some(b)) = (g_star, bounds.as_mut()) {
            b.push((a * gs(x)).abs());
        }
        x -= a * (cfg.g)(x, w);
        if !x.is_finite() {
            return Err(Error::NonFinite {
                context: "stochastic approximation",
                step: t,
            });
        }
        if let (Some(gs), Some(m)) = (g_star, max_g.as_mut()) {
            *m = m.max(gs(x).abs());
        }
        values.push(x);
    }
    Ok(PolyakRun {
        traj: Trajectory::scalar(Grid::unit(horizon), values)?,
        increment_bounds: bounds,
        max_g_star: max_g,
    })
}

/// What to simulate in [`couple`]; the start point is supplied separately.
#[derive(Debug, Clone)]
pub enum PathSpec {
    Brownian {
        horizon: f64,
        dt: f64,
    },
    Ou {
        kappa: f64,
        horizon: f64,
        dt: f64,
    },
    DegeneratePair {
        alpha: f64,
        beta: f64,
        horizon: f64,
        dt: f64,
    },
    Polyak {
        cfg: PolyakConfig,
        horizon: usize,
    },
}

impl PathSpec {
    fn simulate(&self, x0: &[f64], ctx: SeedContext) -> Result<Trajectory> {
        match self {
            PathSpec::Brownian { horizon, dt } => {
                let path = brownian_path(x0.len(), *horizon, *dt, ctx)?;
                let d = x0.len();
                let shifted = path
                    .values()
                    .chunks(d)
                    .flat_map(|s| s.iter().zip(x0).map(|(v, o)| v + o))
                    .collect();
                Trajectory::new(path.grid, d, shifted, None)
            }
            PathSpec::Ou { kappa, horizon, dt } => ou_path(*kappa, x0, *horizon, *dt, ctx),
            PathSpec::DegeneratePair {
                alpha,
                beta,
                horizon,
                dt,
            } => {
                let [x, y] = x0 else {
                    return Err(Error::param("x0", "the degenerate pair needs (x, y)"));
                };
                degenerate_pair_path(*alpha, *beta, *x, *y, *horizon, *dt, ctx)
            }
            PathSpec::Polyak { cfg, horizon } => {
                let [x] = x0 else {
                    return Err(Error::param("x0", "the recursion is scalar"));
                };
                let cfg = PolyakConfig { x0: *x, ..cfg.clone() };
                Ok(polyak_run(&cfg, *horizon, ctx, None)?.traj)
            }
        }
    }
}

/// Synchronous coupling: both starts are driven by the same noise stream.
pub fn couple(spec: &PathSpec, x0_a: &[f64], x0_b: &[f64], ctx: SeedContext) -> Result<CoupledPair> {
    if x0_a.len() != x0_b.len() {
        return Err(Error::param("x0_b", "start points differ in dimension"));
    }
    let a = spec.simulate(x0_a, ctx)?;
    let b = spec.simulate(x0_b, ctx)?;
    CoupledPair::new(a, b, true)
}
