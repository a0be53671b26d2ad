//! The scenario table and one [`Scenario`] implementation per application.

use super::{default_level, Diagnostics, Normalization, Row, Scenario, ScenarioSpec, Trial};
use crate::bounds::{self, BoundValue, Family};
use crate::error::{Error, Result};
use crate::estimators::{domination, mc_mean, mgf_check, Status, TailEstimate};
use crate::functionals::{
    additive_functional, auxiliary_martingale_path, h_a_statistic, pqv_exp_decay_envelope, ResolventSpec,
};
use crate::processes::{
    brownian_path, couple, degenerate_pair_path, degenerate_pair_path_with, degenerate_pair_sensitivity, ou_path,
    ou_second_moment, poisson_path, polyak_run, polyak_run_with, Grid, PathSpec, PolyakConfig, Trajectory, ZeroNoise,
};
use crate::rng::{derive_stream, normal_cdf, normal_sf, SeedContext};

pub(crate) const DEFAULT_SEED: u64 = 42;

/// Stream id reserved for scenario-level auxiliary draws.
const AUX_STREAM: u64 = u64::MAX;

pub(crate) struct Defaults {
    pub name: &'static str,
    pub summary: &'static str,
    functional: &'static str,
    family: Family,
    normalization: Normalization,
    r_grid: &'static [f64],
    trials: u64,
    dt: f64,
    params: &'static [(&'static str, f64)],
}

impl Defaults {
    pub fn spec(&self) -> ScenarioSpec {
        ScenarioSpec {
            name: self.name.to_string(),
            params: self.params.iter().map(|&(k, v)| (k.to_string(), v)).collect(),
            functional: self.functional.to_string(),
            family: self.family,
            r_grid: self.r_grid.to_vec(),
            trials: self.trials,
            dt: self.dt,
            seed: DEFAULT_SEED,
            normalization: self.normalization,
            level: default_level(),
        }
    }
}

pub(crate) const DEFAULTS: &[Defaults] = &[
    Defaults {
        name: "brownian_avg",
        summary: "time integral of Brownian motion, Gaussian bound",
        functional: "int_0^T B_t dt",
        family: Family::Gaussian,
        normalization: Normalization::T2Avg,
        r_grid: &[0.5, 1.0, 1.5],
        trials: 100_000,
        dt: 1e-3,
        params: &[("T", 1.0), ("paper_constant", 0.0)],
    },
    Defaults {
        name: "poisson_avg",
        summary: "time integral of a Poisson process, Bennett bound",
        functional: "int_0^T N_t dt",
        family: Family::Bennett,
        normalization: Normalization::T2Avg,
        r_grid: &[0.2, 0.4],
        trials: 100_000,
        dt: 1e-2,
        params: &[("T", 3.0), ("rate", 1.0)],
    },
    Defaults {
        name: "bm_squared",
        summary: "time integral of B_t^2 - t, self-normalized bound",
        functional: "int_0^T (B_t^2 - t) dt",
        family: Family::SelfnormCd,
        normalization: Normalization::T2Avg,
        r_grid: &[0.5, 1.0, 2.0, 4.0],
        trials: 100_000,
        dt: 1e-3,
        params: &[("T", 1.0)],
    },
    Defaults {
        name: "ou_squared",
        summary: "time average of |X|^2 for Ornstein-Uhlenbeck, two-sided",
        functional: "int_0^T |X_t|^2 dt",
        family: Family::Composite,
        normalization: Normalization::TimeAvg,
        r_grid: &[0.5, 1.0],
        trials: 100_000,
        dt: 1e-2,
        params: &[("T", 10.0), ("d", 1.0), ("kappa", 1.0), ("x", 0.0)],
    },
    Defaults {
        name: "squared_lipschitz_ou",
        summary: "Bernstein-type bound for the square of a Lipschitz function, OU instance",
        functional: "int_0^T |X_t|^2 dt",
        family: Family::Composite,
        normalization: Normalization::TimeAvg,
        r_grid: &[0.5, 1.0],
        trials: 20_000,
        dt: 2e-2,
        params: &[("T", 50.0), ("d", 1.0), ("kappa", 1.0), ("sigma", 1.0), ("x", 0.0)],
    },
    Defaults {
        name: "degenerate_pair",
        summary: "Y-component of an OU-driven degenerate pair",
        functional: "int_0^T Y_t dt",
        family: Family::Gaussian,
        normalization: Normalization::TimeAvg,
        r_grid: &[0.5, 1.0],
        trials: 100_000,
        dt: 1e-2,
        params: &[
            ("T", 10.0),
            ("alpha", 2.0),
            ("beta", 1.0),
            ("x", 0.0),
            ("y", 0.0),
            ("h", 1e-3),
            ("t_sens", 1.0),
        ],
    },
    Defaults {
        name: "polyak_ruppert",
        summary: "averaged stochastic approximation iterates, g(x, w) = x - w",
        functional: "(1/T) sum_{t<T} X_t",
        family: Family::Azuma,
        normalization: Normalization::TimeAvg,
        r_grid: &[0.25, 0.5, 1.0],
        trials: 10_000,
        dt: 1.0,
        params: &[
            ("T", 1000.0),
            ("lambda", 0.5),
            ("p", 0.25),
            ("x0", 0.0),
            ("G", 2.0),
            ("gap", 1.0),
            ("gap_T", 30.0),
        ],
    },
    Defaults {
        name: "contractive_sde_lipschitz",
        summary: "Lipschitz observable of a contractive SDE (OU instance)",
        functional: "int_0^T X_t dt",
        family: Family::Gaussian,
        normalization: Normalization::TimeAvg,
        r_grid: &[0.25, 0.5],
        trials: 100_000,
        dt: 1e-2,
        params: &[
            ("T", 10.0),
            ("kappa", 1.0),
            ("rho", 1.0),
            ("x0", 1.0),
            ("C", 0.0),
            ("lip", 1.0),
        ],
    },
    Defaults {
        name: "discrete_chain",
        summary: "discrete-time chain (stochastic approximation), Azuma-type bound",
        functional: "sum_{u=1}^T X_u",
        family: Family::Azuma,
        normalization: Normalization::TimeAvg,
        r_grid: &[0.1, 0.25, 0.5],
        trials: 10_000,
        dt: 1.0,
        params: &[
            ("T", 1000.0),
            ("lambda", 0.5),
            ("p", 0.25),
            ("x0", 0.0),
            ("G", 2.0),
            ("a2", 0.0),
        ],
    },
    Defaults {
        name: "martingale_generic",
        summary: "time integral of a martingale with polynomial or exponential variation kernel",
        functional: "int_0^T X_t dt",
        family: Family::Gaussian,
        normalization: Normalization::TPow(2.5),
        r_grid: &[0.5, 1.0, 1.5],
        trials: 100_000,
        dt: 1e-3,
        params: &[
            ("T", 1.0),
            ("alpha", 1.0),
            ("sigma2", 1.0),
            ("exp_kernel", 0.0),
            ("joint", 0.0),
        ],
    },
    Defaults {
        name: "mart_mgf",
        summary: "exponential supermartingale check for the Brownian time integral",
        functional: "exp(lambda int_0^T B_t dt - lambda^2 T^3 / 3)",
        family: Family::Composite,
        normalization: Normalization::Raw,
        r_grid: &[-0.5, -0.25, 0.25, 0.5],
        trials: 100_000,
        dt: 1e-3,
        params: &[("T", 1.0)],
    },
    Defaults {
        name: "resolvent_mart",
        summary: "auxiliary martingale of a linear OU functional via its resolvent",
        functional: "int_0^T c X_t dt",
        family: Family::Gaussian,
        normalization: Normalization::TimeAvg,
        r_grid: &[0.25, 0.5, 1.0],
        trials: 20_000,
        dt: 1e-3,
        params: &[("T", 5.0), ("c", 1.0), ("kappa", 1.0), ("x0", 1.0)],
    },
];

pub(crate) fn build(spec: &ScenarioSpec) -> Result<Box<dyn Scenario>> {
    let s: Box<dyn Scenario> = match spec.name.as_str() {
        "brownian_avg" => Box::new(BrownianAvg::new(spec)?),
        "poisson_avg" => Box::new(PoissonAvg::new(spec)?),
        "bm_squared" => Box::new(BmSquared::new(spec)?),
        "ou_squared" => Box::new(OuSquared::new(spec, false)?),
        "squared_lipschitz_ou" => Box::new(OuSquared::new(spec, true)?),
        "degenerate_pair" => Box::new(DegeneratePair::new(spec)?),
        "polyak_ruppert" => Box::new(Polyak::new(spec, false)?),
        "discrete_chain" => Box::new(Polyak::new(spec, true)?),
        "contractive_sde_lipschitz" => Box::new(ContractiveSde::new(spec)?),
        "martingale_generic" => Box::new(MartingaleGeneric::new(spec)?),
        "mart_mgf" => Box::new(MartMgf::new(spec)?),
        "resolvent_mart" => Box::new(ResolventMart::new(spec)?),
        other => return Err(Error::UnknownScenario(other.to_string())),
    };
    Ok(s)
}

fn key(name: &str, r: f64) -> String {
    format!("{name}@R={r}")
}

fn flag(b: bool) -> f64 {
    if b {
        1.0
    } else {
        0.0
    }
}

fn extras(trials: &[Trial], k: usize) -> impl Iterator<Item = f64> + '_ {
    trials.iter().map(move |t| t.extra[k])
}

fn sample_var(xs: impl Iterator<Item = f64>) -> f64 {
    let xs: Vec<f64> = xs.collect();
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)
}

fn integer_param(spec: &ScenarioSpec, key: &str) -> Result<usize> {
    let v = spec.param(key)?;
    if v >= 1.0 && v.fract() == 0.0 && v < 1e9 {
        Ok(v as usize)
    } else {
        Err(Error::param(key, format!("must be a positive integer, got {v}")))
    }
}

/// Exact grid mean of a left-point Riemann sum of `g(t_i)`.
fn grid_sum(grid: Grid, g: impl Fn(f64) -> f64) -> f64 {
    (0..grid.n_steps).map(|i| g(grid.time(i))).sum::<f64>() * grid.dt
}

struct BrownianAvg {
    t: f64,
    dt: f64,
    grid: Grid,
    paper_constant: bool,
}

impl BrownianAvg {
    fn new(spec: &ScenarioSpec) -> Result<Self> {
        let t = spec.param("T")?;
        Ok(Self {
            t,
            dt: spec.dt,
            grid: Grid::new(t, spec.dt)?,
            paper_constant: spec.param("paper_constant")? != 0.0,
        })
    }

    /// Variance of `dt sum_{i<n} B_{t_i}`, which is `dt^3 sum_{k<n} k^2`.
    fn discrete_variance(&self) -> f64 {
        let n = self.grid.n_steps as f64;
        self.dt.powi(3) * (n - 1.0) * n * (2.0 * n - 1.0) / 6.0
    }
}

impl Scenario for BrownianAvg {
    fn trial(&self, ctx: SeedContext) -> Result<Trial> {
        let path = brownian_path(1, self.t, self.dt, ctx)?;
        let s = additive_functional(&path, |_, x| x[0])?;
        Ok(Trial::new(s / (self.t * self.t), true).with(vec![s]))
    }

    fn bound(&self, r: f64) -> Result<BoundValue> {
        let v = if self.paper_constant {
            self.t.powi(3) / 6.0
        } else {
            self.t.powi(3) / 3.0
        };
        bounds::gaussian_tail(r * self.t * self.t, v)
    }

    fn side_condition(&self) -> String {
        "none: the variation T^3/3 of the auxiliary martingale is deterministic".into()
    }

    fn notes(&self) -> Vec<String> {
        let mut notes = vec!["R is on the scale (1/T^2) int_0^T B_t dt".to_string()];
        if self.paper_constant {
            notes.push("paper_constant = 1: variance proxy T^3/6, i.e. exp(-3 R^2 T)".into());
        }
        notes
    }

    fn diagnostics(&self, trials: &[Trial], rows: &[Row]) -> Result<Diagnostics> {
        let var_cont = self.t.powi(3) / 3.0;
        let var_disc = self.discrete_variance();
        let var = sample_var(extras(trials, 0));
        let mut d = Diagnostics::new();
        d.insert("var_S".into(), var);
        d.insert("var_S_continuous".into(), var_cont);
        d.insert("var_S_discrete".into(), var_disc);
        d.insert("var_S_rel_error".into(), (var - var_cont).abs() / var_cont);
        let t2 = self.t * self.t;
        for row in rows {
            let cont = normal_sf(row.r * t2 / var_cont.sqrt());
            let disc = normal_sf(row.r * t2 / var_disc.sqrt());
            d.insert(key("oracle_tail", row.r), cont);
            d.insert(key("oracle_tail_discrete", row.r), disc);
            d.insert(
                key("oracle_in_ci", row.r),
                flag(row.ci_low <= cont && cont <= row.ci_high),
            );
            d.insert(
                key("oracle_discrete_in_ci", row.r),
                flag(row.ci_low <= disc && disc <= row.ci_high),
            );
        }
        Ok(d)
    }
}

struct PoissonAvg {
    t: f64,
    dt: f64,
    rate: f64,
}

impl PoissonAvg {
    fn new(spec: &ScenarioSpec) -> Result<Self> {
        let t = spec.param("T")?;
        Grid::new(t, spec.dt)?;
        Ok(Self {
            t,
            dt: spec.dt,
            rate: spec.param("rate")?,
        })
    }

    fn pqv(&self) -> f64 {
        self.rate * self.t.powi(3) / 3.0
    }
}

impl Scenario for PoissonAvg {
    fn trial(&self, ctx: SeedContext) -> Result<Trial> {
        let path = poisson_path(self.rate, self.t, self.dt, ctx)?;
        let jumps: Vec<f64> = path
            .jump_times
            .as_deref()
            .unwrap_or_default()
            .iter()
            .map(|tau| self.t - tau)
            .collect();
        // exact integral of the step function: each jump at tau adds T - tau
        let s: f64 = jumps.iter().sum();
        let stats = h_a_statistic(s, &jumps, self.t, self.pqv())?;
        let dev = (s - 0.5 * self.rate * self.t * self.t) / (self.t * self.t);
        Ok(Trial::new(dev, true).with(vec![s, stats.h_a]))
    }

    fn bound(&self, r: f64) -> Result<BoundValue> {
        bounds::bennett_tail(r * self.t * self.t, self.pqv(), self.t)
    }

    fn side_condition(&self) -> String {
        "none: variation rate T^3/3 is deterministic and jumps of M^T are at most T".into()
    }

    fn notes(&self) -> Vec<String> {
        vec!["int_0^T N_t dt is computed exactly from the jump times as sum (T - tau_k)".into()]
    }

    fn diagnostics(&self, trials: &[Trial], _rows: &[Row]) -> Result<Diagnostics> {
        let mean = mc_mean(extras(trials, 0), default_level())?;
        let mut d = Diagnostics::new();
        d.insert("mean_S".into(), mean.mean);
        d.insert("mean_S_se".into(), mean.se);
        d.insert("mean_S_exact".into(), 0.5 * self.rate * self.t * self.t);
        d.insert("var_S".into(), sample_var(extras(trials, 0)));
        d.insert("var_S_exact".into(), self.pqv());
        d.insert("mean_H_a".into(), mc_mean(extras(trials, 1), default_level())?.mean);
        Ok(d)
    }
}

struct BmSquared {
    t: f64,
    dt: f64,
}

impl BmSquared {
    fn new(spec: &ScenarioSpec) -> Result<Self> {
        let t = spec.param("T")?;
        Grid::new(t, spec.dt)?;
        Ok(Self { t, dt: spec.dt })
    }
}

impl Scenario for BmSquared {
    fn trial(&self, ctx: SeedContext) -> Result<Trial> {
        let path = brownian_path(1, self.t, self.dt, ctx)?;
        let t = self.t;
        let s = additive_functional(&path, |u, b| b[0] * b[0] - u)?;
        let pqv = 4.0 * additive_functional(&path, |u, b| (t - u).powi(2) * b[0] * b[0])?;
        let t4 = t.powi(4);
        let side = pqv + t4 / 3.0 <= 4.0 * t * t * s.abs() + 0.75 * t4;
        Ok(Trial::new(s / (t * t), true).with(vec![pqv, flag(side)]))
    }

    fn bound(&self, r: f64) -> Result<BoundValue> {
        let t2 = self.t * self.t;
        bounds::selfnorm_cd_tail(r * t2, 4.0 * t2, 0.75 * t2 * t2)
    }

    fn two_sided(&self) -> bool {
        true
    }

    fn side_condition(&self) -> String {
        "none in the event; the rate of <M^T>_T + E<M^T>_T <= 4T^2 |S| + (3/4)T^4 is reported".into()
    }

    fn diagnostics(&self, trials: &[Trial], _rows: &[Row]) -> Result<Diagnostics> {
        let mut d = Diagnostics::new();
        d.insert("mean_pqv".into(), mc_mean(extras(trials, 0), default_level())?.mean);
        d.insert("mean_pqv_exact".into(), self.t.powi(4) / 3.0);
        d.insert(
            "side_condition_rate".into(),
            mc_mean(extras(trials, 1), default_level())?.mean,
        );
        Ok(d)
    }
}

/// `|X|^2` of an OU process: either the dedicated bound or the generic
/// squared-Lipschitz one.
struct OuSquared {
    t: f64,
    dt: f64,
    kappa: f64,
    d: usize,
    sigma: f64,
    x0: Vec<f64>,
    mean_s: f64,
    lipschitz: bool,
}

impl OuSquared {
    fn new(spec: &ScenarioSpec, lipschitz: bool) -> Result<Self> {
        let t = spec.param("T")?;
        let kappa = spec.param("kappa")?;
        let d = integer_param(spec, "d")?;
        let mut x0 = vec![0.0; d];
        x0[0] = spec.param("x")?;
        let x2 = x0[0] * x0[0];
        let grid = Grid::new(t, spec.dt)?;
        Ok(Self {
            t,
            dt: spec.dt,
            kappa,
            d,
            sigma: if lipschitz { spec.param("sigma")? } else { 1.0 },
            x0,
            mean_s: grid_sum(grid, |u| ou_second_moment(kappa, x2, d, u)),
            lipschitz,
        })
    }

    fn x_norm2(&self) -> f64 {
        self.x0.iter().map(|v| v * v).sum()
    }
}

impl Scenario for OuSquared {
    fn trial(&self, ctx: SeedContext) -> Result<Trial> {
        let path = ou_path(self.kappa, &self.x0, self.t, self.dt, ctx)?;
        let s = additive_functional(&path, |_, x| x.iter().map(|v| v * v).sum())?;
        Ok(Trial::new((s - self.mean_s) / self.t, true).with(vec![s]))
    }

    fn bound(&self, r: f64) -> Result<BoundValue> {
        if self.lipschitz {
            // g = |x|: L g^2 = -2 kappa g^2 + d, so C = kappa and D = sqrt(d)
            bounds::squared_lipschitz_bound(
                r,
                self.t,
                self.sigma,
                self.kappa,
                self.kappa,
                (self.d as f64).sqrt(),
                self.mean_s / self.t,
            )
        } else {
            bounds::ou_squared_bound(r, self.t, self.kappa, self.d as f64, self.x_norm2())
        }
    }

    fn two_sided(&self) -> bool {
        true
    }

    fn side_condition(&self) -> String {
        "none: the event is |S_T - E S_T| >= R T".into()
    }

    fn notes(&self) -> Vec<String> {
        vec!["E S_T is the exact mean of the left-point sum on the grid".into()]
    }

    fn diagnostics(&self, trials: &[Trial], rows: &[Row]) -> Result<Diagnostics> {
        let mean = mc_mean(extras(trials, 0), default_level())?;
        let mut d = Diagnostics::new();
        d.insert("mean_S".into(), mean.mean);
        d.insert("mean_S_se".into(), mean.se);
        d.insert("mean_S_exact".into(), self.mean_s);
        if self.lipschitz && self.x_norm2() == 0.0 {
            for row in rows {
                let inst = bounds::squared_lipschitz_ou_instance(row.r, self.t, self.kappa, self.d as f64)?;
                d.insert(key("ou_instance_bound", row.r), inst.value);
            }
        }
        Ok(d)
    }
}

struct DegeneratePair {
    t: f64,
    dt: f64,
    alpha: f64,
    beta: f64,
    x: f64,
    y: f64,
    h: f64,
    t_sens: f64,
    mean_s: f64,
    seed: u64,
}

impl DegeneratePair {
    fn new(spec: &ScenarioSpec) -> Result<Self> {
        let t = spec.param("T")?;
        let (alpha, beta) = (spec.param("alpha")?, spec.param("beta")?);
        let (x, y) = (spec.param("x")?, spec.param("y")?);
        // the pair is linear, so the noise-free path is the mean path
        let grid = Grid::new(t, spec.dt)?;
        let mean_path = degenerate_pair_path_with(alpha, beta, x, y, grid, &mut ZeroNoise)?;
        let t_sens = spec.param("t_sens")?;
        if !(t_sens > 0.0 && t_sens <= t) {
            return Err(Error::param("t_sens", format!("must lie in (0, T], got {t_sens}")));
        }
        Ok(Self {
            t,
            dt: spec.dt,
            alpha,
            beta,
            x,
            y,
            h: spec.param("h")?,
            t_sens,
            mean_s: additive_functional(&mean_path, |_, s| s[1])?,
            seed: spec.seed,
        })
    }
}

impl Scenario for DegeneratePair {
    fn trial(&self, ctx: SeedContext) -> Result<Trial> {
        let path = degenerate_pair_path(self.alpha, self.beta, self.x, self.y, self.t, self.dt, ctx)?;
        let s = additive_functional(&path, |_, s| s[1])?;
        Ok(Trial::new((s - self.mean_s) / self.t, true))
    }

    fn bound(&self, r: f64) -> Result<BoundValue> {
        bounds::degenerate_bound(r, self.t, self.alpha, self.beta)
    }

    fn side_condition(&self) -> String {
        "none: f(x, y) = y is 1-Lipschitz and the gradient bound is deterministic".into()
    }

    fn diagnostics(&self, _trials: &[Trial], _rows: &[Row]) -> Result<Diagnostics> {
        let spec = PathSpec::DegeneratePair {
            alpha: self.alpha,
            beta: self.beta,
            horizon: self.t,
            dt: self.dt,
        };
        let pair = couple(
            &spec,
            &[self.x, self.y],
            &[self.x + self.h, self.y],
            derive_stream(self.seed, AUX_STREAM),
        )?;
        let i = (self.t_sens / self.dt).round() as usize;
        let quotient = (pair.b.state(i)[1] - pair.a.state(i)[1]) / self.h;
        let exact = degenerate_pair_sensitivity(self.alpha, self.beta, self.t_sens);
        let mut d = Diagnostics::new();
        d.insert("sensitivity".into(), quotient);
        d.insert("sensitivity_exact".into(), exact);
        d.insert("sensitivity_error".into(), (quotient - exact).abs());
        d.insert("mean_S_exact".into(), self.mean_s);
        Ok(d)
    }
}

/// Stochastic approximation with `g(x, w) = x - w`, `W ~ U[lo, hi]`: either
/// the averaged-iterate bound or the discrete-chain bound on the same chain.
struct Polyak {
    cfg: PolyakConfig,
    horizon: usize,
    g: f64,
    gap: f64,
    /// Horizon of the coupling check. At long horizons the two paths agree
    /// to rounding and the squared gap is numerically zero.
    gap_horizon: usize,
    /// Mean of the statistic (time average or sum), from the noise-free run.
    mean_stat: f64,
    kappa_t: f64,
    a2: f64,
    chain: bool,
}

impl Polyak {
    fn new(spec: &ScenarioSpec, chain: bool) -> Result<Self> {
        let horizon = integer_param(spec, "T")?;
        let cfg = PolyakConfig::linear_uniform(spec.param("lambda")?, spec.param("p")?, spec.param("x0")?);
        cfg.check_admissible(horizon)?;
        // g is affine in w, so the midpoint run is the mean run
        let mean_run = polyak_run_with(&cfg, horizon, &mut ZeroNoise, None)?;
        let m = mean_run.traj.values();
        let mean_stat = if chain {
            m[1..].iter().sum()
        } else {
            m[..horizon].iter().sum::<f64>() / horizon as f64
        };
        let g = spec.param("G")?;
        let kappa_t = cfg.kappa_at(horizon);
        let a2 = if chain {
            let given = spec.param("a2")?;
            if given > 0.0 {
                given
            } else {
                let sum_a2: f64 = (1..=horizon).map(|t| cfg.step(t).powi(2)).sum();
                g * g * sum_a2 / (kappa_t * kappa_t)
            }
        } else {
            0.0
        };
        Ok(Self {
            cfg,
            horizon,
            g,
            gap: if chain { 0.0 } else { spec.param("gap")? },
            gap_horizon: if chain {
                0
            } else {
                integer_param(spec, "gap_T")?.min(horizon)
            },
            mean_stat,
            kappa_t,
            a2,
            chain,
        })
    }

    fn g_star(&self) -> impl Fn(f64) -> f64 {
        let (lo, hi) = self.cfg.w_law.support().unwrap_or((0.0, 0.0));
        move |x: f64| (x - lo).abs().max((x - hi).abs())
    }
}

impl Scenario for Polyak {
    fn trial(&self, ctx: SeedContext) -> Result<Trial> {
        let g_star = self.g_star();
        let run = polyak_run(&self.cfg, self.horizon, ctx, Some(&g_star))?;
        let x = run.traj.values();
        let max_g = run.max_g_star.unwrap_or(f64::INFINITY);
        let t = self.horizon as f64;
        if self.chain {
            let s: f64 = x[1..].iter().sum();
            let c2: f64 = run
                .increment_bounds
                .unwrap_or_default()
                .iter()
                .map(|c| c * c)
                .sum::<f64>()
                / (self.kappa_t * self.kappa_t);
            return Ok(Trial::new((s - self.mean_stat) / t, c2 <= self.a2).with(vec![c2, max_g]));
        }
        let avg = x[..self.horizon].iter().sum::<f64>() / t;
        let spec = PathSpec::Polyak {
            cfg: self.cfg.clone(),
            horizon: self.gap_horizon,
        };
        let pair = couple(&spec, &[self.cfg.x0], &[self.cfg.x0 + self.gap], ctx)?;
        let gap2 = (pair.b.state(self.gap_horizon)[0] - pair.a.state(self.gap_horizon)[0]).powi(2);
        Ok(Trial::new(avg - self.mean_stat, max_g <= self.g).with(vec![gap2, max_g]))
    }

    fn bound(&self, r: f64) -> Result<BoundValue> {
        let t = self.horizon as f64;
        if self.chain {
            bounds::azuma_tail(r * t, self.a2)
        } else {
            bounds::polyak_bound(r, t, self.cfg.p, self.cfg.m_bar, self.g)
        }
    }

    fn side_condition(&self) -> String {
        if self.chain {
            "sum_t C_t^2 / kappa_T^2 <= a2 with C_t = alpha_t sup_w |g(X_{t-1}, w)|".into()
        } else {
            "max_{t<=T} sup_w |g(X_t, w)| <= G".into()
        }
    }

    fn notes(&self) -> Vec<String> {
        let mut notes = vec!["mean of the statistic from the noise-free recursion (g is affine in w)".to_string()];
        if !self.chain {
            notes.push("G = 2 holds pathwise: iterates stay in [-1, 1] while alpha_t <= 1".into());
        }
        notes
    }

    fn diagnostics(&self, trials: &[Trial], rows: &[Row]) -> Result<Diagnostics> {
        let mut d = Diagnostics::new();
        let n = trials.len() as f64;
        let side = trials.iter().filter(|t| t.side_ok).count() as f64 / n;
        d.insert("side_condition_rate".into(), side);
        d.insert("kappa_T".into(), self.kappa_t);
        d.insert("max_g_star".into(), extras(trials, 1).fold(0.0, f64::max));
        d.insert("admissible_lambda".into(), self.cfg.admissible_lambda(self.horizon));
        if self.chain {
            d.insert("a2".into(), self.a2);
            d.insert("mean_sum_c2".into(), mc_mean(extras(trials, 0), default_level())?.mean);
            return Ok(d);
        }
        let g_star = self.g_star();
        let envelope = self.cfg.envelope(self.horizon, |r| g_star(r).max(g_star(-r)));
        let g_env = envelope.iter().map(|&r| g_star(r).max(g_star(-r))).fold(0.0, f64::max);
        d.insert("G_envelope".into(), g_env);
        for row in rows {
            let b = bounds::polyak_bound(row.r, self.horizon as f64, self.cfg.p, self.cfg.m_bar, g_env)?;
            d.insert(key("bound_envelope_G", row.r), b.value);
        }
        let gap = mc_mean(extras(trials, 0), default_level())?;
        let factor = self.gap * self.gap * self.cfg.contraction_factor(0, self.gap_horizon);
        d.insert("coupled_gap_horizon".into(), self.gap_horizon as f64);
        d.insert("coupled_gap2_mean".into(), gap.mean);
        d.insert("coupled_gap2_se".into(), gap.se);
        d.insert("coupled_gap2_bound".into(), factor);
        d.insert(
            "coupled_gap2_ok".into(),
            flag(gap.mean <= factor * (1.0 + 1e-9) + 3.0 * gap.se),
        );
        Ok(d)
    }
}

struct ContractiveSde {
    t: f64,
    dt: f64,
    kappa: f64,
    rho: f64,
    x0: f64,
    c: f64,
    lip: f64,
    mean_s: f64,
    level: f64,
}

impl ContractiveSde {
    fn new(spec: &ScenarioSpec) -> Result<Self> {
        let t = spec.param("T")?;
        let kappa = spec.param("kappa")?;
        let x0 = spec.param("x0")?;
        let grid = Grid::new(t, spec.dt)?;
        Ok(Self {
            t,
            dt: spec.dt,
            kappa,
            rho: spec.param("rho")?,
            x0,
            c: spec.param("C")?,
            lip: spec.param("lip")?,
            mean_s: grid_sum(grid, |u| x0 * (-kappa * u).exp()),
            level: spec.level,
        })
    }

    /// `W_1(N(0, 1/(2 kappa)), delta_x) = E|Z - x|`, the folded-normal mean.
    fn w1_stationary(&self) -> f64 {
        let sd = (0.5 / self.kappa).sqrt();
        let x = self.x0.abs();
        sd * (2.0 / std::f64::consts::PI).sqrt() * (-x * x / (2.0 * sd * sd)).exp()
            + x * (1.0 - 2.0 * normal_cdf(-x / sd))
    }
}

impl Scenario for ContractiveSde {
    fn trial(&self, ctx: SeedContext) -> Result<Trial> {
        let path = ou_path(self.kappa, &[self.x0], self.t, self.dt, ctx)?;
        let s = additive_functional(&path, |_, x| x[0])?;
        Ok(Trial::new((s - self.mean_s) / self.t, true).with(vec![s / self.t]))
    }

    fn bound(&self, r: f64) -> Result<BoundValue> {
        bounds::lipschitz_sde_bound(r, self.t, self.rho, self.kappa, self.c, self.lip)
    }

    fn side_condition(&self) -> String {
        "none: constants (rho, kappa, C) are deterministic inputs".into()
    }

    fn notes(&self) -> Vec<String> {
        vec!["f = identity; the stationary-centered variant is reported in the diagnostics".into()]
    }

    fn diagnostics(&self, trials: &[Trial], rows: &[Row]) -> Result<Diagnostics> {
        let w1 = self.w1_stationary();
        let shift = bounds::lipschitz_mu_shift(self.rho, self.kappa, self.lip, self.t, w1)?;
        let mut d = Diagnostics::new();
        d.insert("W1_stationary".into(), w1);
        d.insert("mu_shift".into(), shift);
        for row in rows {
            // the stationary mean of f = identity is 0
            let hits = extras(trials, 0).filter(|&avg| avg >= row.r + shift).count() as u64;
            let est = TailEstimate::from_counts(hits, trials.len() as u64, self.level)?;
            let verdict = domination(&row.bound, &est);
            d.insert(key("mu_empirical", row.r), est.point);
            d.insert(key("mu_ci_high", row.r), est.ci_high);
            d.insert(key("mu_violation", row.r), flag(verdict.status == Status::Violation));
        }
        Ok(d)
    }
}

struct MartingaleGeneric {
    t: f64,
    grid: Grid,
    alpha: f64,
    sigma2: f64,
    exp_kernel: bool,
    joint: bool,
    /// Standard deviation of each grid increment of `X`.
    sd: Vec<f64>,
    /// Bound on `int (T - u)^2 d<X>_u`.
    pqv: f64,
    scale: f64,
}

impl MartingaleGeneric {
    fn new(spec: &ScenarioSpec) -> Result<Self> {
        let t = spec.param("T")?;
        let grid = Grid::new(t, spec.dt)?;
        let alpha = spec.param("alpha")?;
        let sigma2 = spec.param("sigma2")?;
        let exp_kernel = spec.param("exp_kernel")? != 0.0;
        if !exp_kernel && !(alpha > -1.0) {
            return Err(Error::param(
                "alpha",
                format!("must exceed -1 for a finite-variance kernel, got {alpha}"),
            ));
        }
        let var = |a: f64, b: f64| {
            let (ra, rb) = (t - a, t - b);
            if exp_kernel {
                (-rb).exp() - (-ra).exp()
            } else {
                sigma2 * (ra.powf(alpha + 1.0) - rb.max(0.0).powf(alpha + 1.0)) / (alpha + 1.0)
            }
        };
        let sd = (0..grid.n_steps)
            .map(|i| var(grid.time(i), grid.time(i + 1)).max(0.0).sqrt())
            .collect();
        let (pqv, scale) = if exp_kernel {
            (2.0, t.sqrt())
        } else {
            (sigma2 * t.powf(3.0 + alpha) / (3.0 + alpha), t.powf(2.0 + alpha / 2.0))
        };
        Ok(Self {
            t,
            grid,
            alpha,
            sigma2,
            exp_kernel,
            joint: spec.param("joint")? != 0.0,
            sd,
            pqv,
            scale,
        })
    }
}

impl Scenario for MartingaleGeneric {
    fn trial(&self, ctx: SeedContext) -> Result<Trial> {
        let mut stream = ctx.stream();
        let mut values = Vec::with_capacity(self.grid.n_steps + 1);
        values.push(0.0);
        let mut x = 0.0;
        for &sd in &self.sd {
            x += sd * stream.normal();
            values.push(x);
        }
        let path = Trajectory::scalar(self.grid, values)?;
        let s = additive_functional(&path, |_, x| x[0])?;
        let t = self.t;
        let v = path.as_scalar()?;
        let realized: f64 = (0..self.grid.n_steps)
            .map(|i| (t - self.grid.time(i)).powi(2) * (v[i + 1] - v[i]).powi(2))
            .sum();
        let side = realized <= self.pqv;
        Ok(Trial::new(s / self.scale, !self.joint || side).with(vec![flag(side), s]))
    }

    fn bound(&self, r: f64) -> Result<BoundValue> {
        if self.exp_kernel {
            bounds::exp_kernel_bound(r, self.t)
        } else {
            bounds::poly_kernel_bound(r, self.t, self.sigma2, self.alpha)
        }
    }

    fn side_condition(&self) -> String {
        let what = "realized sum (T - t_i)^2 (dX_i)^2 <= bound on int (T - u)^2 d<X>_u";
        if self.joint {
            what.into()
        } else {
            format!("none (the variation is deterministic); rate of {what} is reported")
        }
    }

    fn notes(&self) -> Vec<String> {
        if self.exp_kernel {
            vec!["X = int e^{-(T-u)/2} dB_u on the scale (1/sqrt T) int X dt".into()]
        } else {
            vec![format!(
                "X = int sigma (T-u)^(alpha/2) dB_u on the scale T^-(2 + alpha/2) int X dt"
            )]
        }
    }

    fn diagnostics(&self, trials: &[Trial], _rows: &[Row]) -> Result<Diagnostics> {
        let mut d = Diagnostics::new();
        d.insert(
            "side_condition_rate".into(),
            mc_mean(extras(trials, 0), default_level())?.mean,
        );
        d.insert("var_S".into(), sample_var(extras(trials, 1)));
        d.insert("pqv_bound".into(), self.pqv);
        Ok(d)
    }
}

impl MartingaleGeneric {
    fn normalization(&self) -> Normalization {
        if self.exp_kernel {
            Normalization::TPow(0.5)
        } else {
            Normalization::TPow(2.0 + self.alpha / 2.0)
        }
    }
}

/// Normalization a scenario actually uses, when it depends on parameters.
pub(crate) fn effective_normalization(spec: &ScenarioSpec) -> Result<Normalization> {
    if spec.name == "martingale_generic" {
        return Ok(MartingaleGeneric::new(spec)?.normalization());
    }
    Ok(spec.normalization)
}

struct MartMgf {
    t: f64,
    dt: f64,
    level: f64,
}

impl MartMgf {
    fn new(spec: &ScenarioSpec) -> Result<Self> {
        let t = spec.param("T")?;
        Grid::new(t, spec.dt)?;
        Ok(Self {
            t,
            dt: spec.dt,
            level: spec.level,
        })
    }

    fn penalty(&self, lambda: f64) -> f64 {
        lambda * lambda * self.t.powi(3) / 3.0
    }
}

impl Scenario for MartMgf {
    fn trial(&self, ctx: SeedContext) -> Result<Trial> {
        let path = brownian_path(1, self.t, self.dt, ctx)?;
        let s = additive_functional(&path, |_, x| x[0])?;
        Ok(Trial::new(s, true))
    }

    fn bound(&self, _lambda: f64) -> Result<BoundValue> {
        Ok(BoundValue::new(1.0, Family::Composite, &[]))
    }

    fn side_condition(&self) -> String {
        "none: R holds lambda; rows compare E exp(lambda S - lambda^2 T^3 / 3) with 1".into()
    }

    fn rows(&self, trials: &[Trial], grid: &[f64], _level: f64) -> Result<Vec<Row>> {
        let mut grid = grid.to_vec();
        grid.sort_by(f64::total_cmp);
        grid.into_iter()
            .map(|lambda| {
                let pen = self.penalty(lambda);
                let check = mgf_check(trials.iter().map(|t| lambda * t.dev - pen), self.level)?;
                let bound = BoundValue::new(1.0, Family::Composite, &[("lambda", lambda), ("penalty", pen)]);
                Ok(Row::mgf(lambda, trials.len() as u64, &check, bound))
            })
            .collect()
    }

    fn diagnostics(&self, _trials: &[Trial], rows: &[Row]) -> Result<Diagnostics> {
        let mut d = Diagnostics::new();
        for row in rows {
            let oracle = (-0.5 * self.penalty(row.r)).exp();
            d.insert(key("oracle_mean", row.r), oracle);
            d.insert(key("within_oracle_5pct", row.r), flag(row.empirical <= 1.05 * oracle));
        }
        Ok(d)
    }
}

struct ResolventMart {
    t: f64,
    dt: f64,
    c: f64,
    kappa: f64,
    x0: f64,
    resolvent: ResolventSpec,
    mean_s: f64,
}

impl ResolventMart {
    fn new(spec: &ScenarioSpec) -> Result<Self> {
        let t = spec.param("T")?;
        let (c, kappa, x0) = (spec.param("c")?, spec.param("kappa")?, spec.param("x0")?);
        let grid = Grid::new(t, spec.dt)?;
        if grid.n_steps % 2 != 0 {
            return Err(Error::param("dt", "T / dt must be even so that T/2 is a grid point"));
        }
        Ok(Self {
            t,
            dt: spec.dt,
            c,
            kappa,
            x0,
            resolvent: ResolventSpec::ou_linear(c, kappa, t),
            mean_s: grid_sum(grid, |u| c * x0 * (-kappa * u).exp()),
        })
    }

    fn pqv(&self) -> Result<f64> {
        pqv_exp_decay_envelope(self.c, self.kappa, self.t, self.t)
    }
}

impl Scenario for ResolventMart {
    fn trial(&self, ctx: SeedContext) -> Result<Trial> {
        let path = ou_path(self.kappa, &[self.x0], self.t, self.dt, ctx)?;
        let c = self.c;
        let f = |_: f64, x: &[f64]| c * x[0];
        let s = additive_functional(&path, f)?;
        let m = auxiliary_martingale_path(&path, f, &self.resolvent)?;
        let n = m.len() - 1;
        let extra = vec![m[0], m[n / 2] - m[0], (m[n] - s).abs()];
        Ok(Trial::new((s - self.mean_s) / self.t, true).with(extra))
    }

    fn bound(&self, r: f64) -> Result<BoundValue> {
        bounds::gaussian_tail(r * self.t, self.pqv()?)
    }

    fn side_condition(&self) -> String {
        "none: <M^T>_T is bounded by a deterministic envelope".into()
    }

    fn diagnostics(&self, trials: &[Trial], rows: &[Row]) -> Result<Diagnostics> {
        let m0_exact = self.c * self.x0 * -(-self.kappa * self.t).exp_m1() / self.kappa;
        let m0_err = extras(trials, 0).map(|m0| (m0 - m0_exact).abs()).fold(0.0, f64::max);
        let drift = mc_mean(extras(trials, 1), default_level())?;
        let mut d = Diagnostics::new();
        d.insert("M0_exact".into(), m0_exact);
        d.insert("M0_max_error".into(), m0_err);
        d.insert("M_half_drift_mean".into(), drift.mean);
        d.insert("M_half_drift_se".into(), drift.se);
        d.insert("MT_minus_S_max".into(), extras(trials, 2).fold(0.0, f64::max));
        d.insert("pqv_envelope".into(), self.pqv()?);
        d.insert("mean_S_exact".into(), self.mean_s);
        for row in rows {
            let k2 = self.kappa * self.kappa;
            let b = (-k2 * row.r * row.r * self.t / (2.0 * self.c * self.c)).exp();
            d.insert(key("sigmakappa_bound", row.r), b);
        }
        Ok(d)
    }
}
