//! Random-instance convergence study and 2-D grid evaluation.
//!
//! Instances are independent jobs. Each draws from its own ChaCha8 stream
//! seeded by [`instance_seed`], so a run is reproducible regardless of
//! scheduling, and results are folded in `instance_id` order.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bellman::bellman_error;
use crate::error::{Error, Result};
use crate::flow::{
    integrate_monitored, log_linear_fit, normalized_residuals, FlowConfig, FlowKind, FlowStatus,
    ResidualPoint,
};
use crate::lqr_core::{
    check_assumptions, closed_loop, in_sigma_set, in_stabilizing_set, kleinman,
    solve_value_lyapunov, Gain, SystemInstance, DEFAULT_KLEINMAN_TOL,
};
use crate::matlin::{self, Mat};

pub const INSTANCE_ATTEMPTS: usize = 1000;
pub const GAIN_ATTEMPTS: usize = 100_000;
pub const PROBLEM_ATTEMPTS: usize = 20;
/// Margin required of rejection-sampled initial gains.
pub const GAIN_MARGIN: f64 = 1e-6;
/// A flow counts as converged once `ρ` falls to this level.
pub const CONVERGED_RHO: f64 = 1e-6;
/// Default `ρ` at which benchmark flows are stopped. Near the optimum an
/// explicit integrator settles at its error tolerance, so without a stop a
/// flow can idle there until `t_max`.
pub const DEFAULT_HALT_RHO: f64 = 1e-7;

fn normal_matrix<R: Rng>(rows: usize, cols: usize, rng: &mut R) -> Mat {
    Mat::from_fn(rows, cols, |_, _| rng.sample(StandardNormal))
}

/// `A`, `B` with i.i.d. standard normal entries, `Q = q_scale·I`,
/// `R = r_scale·I`; redrawn until stabilizable and detectable.
pub fn random_instance<R: Rng>(
    n: usize,
    m: usize,
    q_scale: f64,
    r_scale: f64,
    rng: &mut R,
) -> Result<SystemInstance> {
    if n == 0 || m == 0 {
        return Err(Error::InvalidConfig("n and m must be positive".into()));
    }
    if !(q_scale > 0.0 && r_scale > 0.0) {
        return Err(Error::InvalidConfig("q_scale and r_scale must be positive".into()));
    }
    for _ in 0..INSTANCE_ATTEMPTS {
        let a = normal_matrix(n, n, rng);
        let b = normal_matrix(n, m, rng);
        let sys = SystemInstance::new(
            a,
            b,
            Mat::identity(n, n) * q_scale,
            Mat::identity(m, m) * r_scale,
        )?;
        if check_assumptions(&sys)?.holds() {
            return Ok(sys);
        }
    }
    Err(Error::GenerationFailure(INSTANCE_ATTEMPTS))
}

/// Rejection sampling of standard normal gains until `A − BK` has
/// abscissa below `−GAIN_MARGIN`.
pub fn sample_stabilizing_gain<R: Rng>(sys: &SystemInstance, rng: &mut R) -> Result<Gain> {
    for _ in 0..GAIN_ATTEMPTS {
        let k = Gain::new(normal_matrix(sys.m(), sys.n(), rng))?;
        let abscissa = matlin::spectral_abscissa(&closed_loop(sys, &k)?)?;
        if abscissa < -GAIN_MARGIN {
            return Ok(k);
        }
    }
    Err(Error::SamplingFailure(GAIN_ATTEMPTS))
}

/// Draws a system together with a rejection-sampled initial gain. A system
/// whose gain sampling hits its cap is discarded and redrawn, at most
/// `PROBLEM_ATTEMPTS` times. Returns the number of discarded systems.
pub fn draw_problem<R: Rng>(
    config: &BenchConfig,
    rng: &mut R,
) -> Result<(SystemInstance, Gain, usize)> {
    for redraws in 0..PROBLEM_ATTEMPTS {
        let sys = random_instance(config.n, config.m, config.q_scale, config.r_scale, rng)?;
        match sample_stabilizing_gain(&sys, rng) {
            Ok(k) => return Ok((sys, k, redraws)),
            Err(Error::SamplingFailure(_)) => continue,
            Err(e) => return Err(e),
        }
    }
    Err(Error::SamplingFailure(PROBLEM_ATTEMPTS * GAIN_ATTEMPTS))
}

/// SplitMix64 finalizer.
pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed of instance `id`: `splitmix64(master ^ splitmix64(id))`.
pub fn instance_seed(master: u64, id: u64) -> u64 {
    splitmix64(master ^ splitmix64(id))
}

pub fn instance_rng(master: u64, id: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(instance_seed(master, id))
}

fn default_time_grid() -> Vec<f64> {
    (0..=100).map(|i| i as f64 / 10.0).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BenchConfig {
    pub num_instances: usize,
    pub n: usize,
    pub m: usize,
    pub seed: u64,
    pub flows: Vec<FlowKind>,
    pub q_scale: f64,
    pub r_scale: f64,
    /// Sample times for the residual curves; must start at 0 and increase.
    pub time_grid: Vec<f64>,
    pub beta: f64,
    pub gamma: f64,
    pub rtol: f64,
    pub atol: f64,
    pub t_max: f64,
    pub grad_tol: f64,
    /// Flows stop once `ρ` falls to this level; 0 disables the check.
    pub halt_rho: f64,
}

impl Default for BenchConfig {
    fn default() -> Self {
        let flow = FlowConfig::default();
        BenchConfig {
            num_instances: 200,
            n: 2,
            m: 1,
            seed: 0,
            flows: FlowKind::ALL.to_vec(),
            q_scale: 1.0,
            r_scale: 1.0,
            time_grid: default_time_grid(),
            beta: flow.beta,
            gamma: flow.gamma,
            rtol: flow.rtol,
            atol: flow.atol,
            t_max: flow.t_max,
            grad_tol: flow.grad_tol,
            halt_rho: DEFAULT_HALT_RHO,
        }
    }
}

impl BenchConfig {
    pub fn validate(&self) -> Result<()> {
        if self.num_instances == 0 {
            return Err(Error::InvalidConfig("num_instances must be positive".into()));
        }
        if !(self.n >= self.m && self.m >= 1) {
            return Err(Error::InvalidConfig(format!(
                "need n >= m >= 1, got n={} m={}",
                self.n, self.m
            )));
        }
        if self.flows.is_empty() {
            return Err(Error::InvalidConfig("flows must not be empty".into()));
        }
        for (i, f) in self.flows.iter().enumerate() {
            if self.flows[..i].contains(f) {
                return Err(Error::InvalidConfig(format!("flow {f} listed twice")));
            }
        }
        if !(self.q_scale > 0.0 && self.r_scale > 0.0) {
            return Err(Error::InvalidConfig("q_scale and r_scale must be positive".into()));
        }
        match self.time_grid.first() {
            Some(&t0) if t0 == 0.0 => {}
            _ => return Err(Error::InvalidConfig("time_grid must start at 0".into())),
        }
        if !(self.halt_rho >= 0.0 && self.halt_rho < 1.0) {
            return Err(Error::InvalidConfig("halt_rho must lie in [0, 1)".into()));
        }
        if !self.time_grid.windows(2).all(|w| w[1] > w[0]) || !self.time_grid.iter().all(|t| t.is_finite()) {
            return Err(Error::InvalidConfig("time_grid must be strictly increasing".into()));
        }
        for kind in &self.flows {
            self.flow_config(*kind).validate()?;
        }
        Ok(())
    }

    pub fn flow_config(&self, kind: FlowKind) -> FlowConfig {
        FlowConfig {
            kind,
            beta: self.beta,
            gamma: self.gamma,
            rtol: self.rtol,
            atol: self.atol,
            t_max: self.t_max,
            grad_tol: self.grad_tol,
            ..FlowConfig::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlowOutcome {
    pub kind: FlowKind,
    pub status: Option<FlowStatus>,
    pub error: Option<String>,
    pub t_final: f64,
    pub rho_final: f64,
    /// First recorded time with `ρ ≤ CONVERGED_RHO`.
    pub t_converged: Option<f64>,
    pub accepted_steps: usize,
    pub rejected_steps: usize,
    pub max_abscissa: f64,
    pub max_relative_ascent: f64,
    /// `R²` of `ln ρ` against `t` over the middle 80% of samples.
    pub log_linear_r2: Option<f64>,
    pub log_linear_rate: Option<f64>,
    /// `ρ` interpolated onto the configured time grid (NaN where unavailable).
    pub rho_curve: Vec<f64>,
}

impl FlowOutcome {
    pub fn converged(&self) -> bool {
        self.t_converged.is_some()
    }

    fn failed(kind: FlowKind, error: String, grid_len: usize) -> Self {
        FlowOutcome {
            kind,
            status: None,
            error: Some(error),
            t_final: f64::NAN,
            rho_final: f64::NAN,
            t_converged: None,
            accepted_steps: 0,
            rejected_steps: 0,
            max_abscissa: f64::NAN,
            max_relative_ascent: f64::NAN,
            log_linear_r2: None,
            log_linear_rate: None,
            rho_curve: vec![f64::NAN; grid_len],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchRecord {
    pub instance_id: u64,
    pub seed: u64,
    /// Systems discarded because no stabilizing gain was sampled.
    pub redraws: usize,
    pub a: Vec<f64>,
    pub b: Vec<f64>,
    pub k0: Vec<f64>,
    pub k_star: Option<Vec<f64>>,
    pub error: Option<String>,
    pub flows: Vec<FlowOutcome>,
}

impl BenchRecord {
    pub fn flow(&self, kind: FlowKind) -> Option<&FlowOutcome> {
        self.flows.iter().find(|f| f.kind == kind)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlowSummary {
    pub kind: FlowKind,
    pub converged: usize,
    pub failed: usize,
    pub median_log10_rho: Vec<f64>,
    pub q1_log10_rho: Vec<f64>,
    pub q3_log10_rho: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchSummary {
    pub num_instances: usize,
    pub instance_failures: usize,
    pub time_grid: Vec<f64>,
    pub flows: Vec<FlowSummary>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchReport {
    pub records: Vec<BenchRecord>,
    pub summary: BenchSummary,
}

/// Piecewise-linear interpolation of `ln ρ` onto `grid`. Grid points past
/// the last sample hold the final value when `hold` is set, else NaN.
pub fn interpolate_log_residuals(points: &[ResidualPoint], grid: &[f64], hold: bool) -> Vec<f64> {
    let logs: Vec<(f64, f64)> = points
        .iter()
        .map(|p| (p.t, p.rho.max(f64::MIN_POSITIVE).ln()))
        .collect();
    let mut out = Vec::with_capacity(grid.len());
    let mut j = 0;
    for &t in grid {
        let Some(&(t_last, y_last)) = logs.last() else {
            out.push(f64::NAN);
            continue;
        };
        if t >= t_last {
            out.push(if hold || t == t_last { y_last.exp() } else { f64::NAN });
            continue;
        }
        if t <= logs[0].0 {
            out.push(logs[0].1.exp());
            continue;
        }
        while logs[j + 1].0 < t {
            j += 1;
        }
        let (t0, y0) = logs[j];
        let (t1, y1) = logs[j + 1];
        let w = (t - t0) / (t1 - t0);
        out.push((y0 + w * (y1 - y0)).exp());
    }
    out
}

fn run_flow(
    sys: &SystemInstance,
    k0: &Gain,
    k_star: &Gain,
    kind: FlowKind,
    config: &BenchConfig,
) -> FlowOutcome {
    let grid_len = config.time_grid.len();
    let d0 = (k0.as_mat() - k_star.as_mat()).norm();
    let halt = |_: f64, k: &Mat| (k - k_star.as_mat()).norm() <= config.halt_rho * d0;
    let traj = match integrate_monitored(sys, k0, &config.flow_config(kind), halt) {
        Ok(t) => t,
        Err(e) => return FlowOutcome::failed(kind, e.to_string(), grid_len),
    };
    let rho = match normalized_residuals(&traj, k_star) {
        Ok(r) => r,
        Err(e) => return FlowOutcome::failed(kind, e.to_string(), grid_len),
    };
    let fit = log_linear_fit(&rho, 0.1, 0.1);
    let last = rho.last().expect("non-empty");
    FlowOutcome {
        kind,
        status: Some(traj.status),
        error: None,
        t_final: last.t,
        rho_final: last.rho,
        t_converged: rho.iter().find(|p| p.rho <= CONVERGED_RHO).map(|p| p.t),
        accepted_steps: traj.accepted_steps,
        rejected_steps: traj.rejected_steps,
        max_abscissa: traj.max_abscissa(),
        max_relative_ascent: if traj.samples.len() > 1 {
            traj.max_relative_ascent()
        } else {
            0.0
        },
        log_linear_r2: fit.map(|f| f.r_squared),
        log_linear_rate: fit.map(|f| -f.slope),
        rho_curve: interpolate_log_residuals(
            &rho,
            &config.time_grid,
            matches!(traj.status, FlowStatus::ConvergedGradTol | FlowStatus::Halted),
        ),
    }
}

/// Draws instance `id`, solves it with the Kleinman oracle and runs every
/// configured flow from the same initial gain.
pub fn run_instance(config: &BenchConfig, id: u64) -> BenchRecord {
    let seed = instance_seed(config.seed, id);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut record = BenchRecord {
        instance_id: id,
        seed,
        redraws: 0,
        a: Vec::new(),
        b: Vec::new(),
        k0: Vec::new(),
        k_star: None,
        error: None,
        flows: Vec::new(),
    };
    let (sys, k0, redraws) = match draw_problem(config, &mut rng) {
        Ok(p) => p,
        Err(e) => {
            record.error = Some(e.to_string());
            return record;
        }
    };
    record.redraws = redraws;
    record.a = matlin::to_row_major(sys.a());
    record.b = matlin::to_row_major(sys.b());
    record.k0 = k0.to_row_major();
    let star = match kleinman(&sys, &k0, DEFAULT_KLEINMAN_TOL, 200) {
        Ok(s) => s,
        Err(e) => {
            record.error = Some(format!("oracle: {e}"));
            return record;
        }
    };
    record.k_star = Some(star.k_star.to_row_major());
    record.flows = config
        .flows
        .iter()
        .map(|&kind| run_flow(&sys, &k0, &star.k_star, kind, config))
        .collect();
    record
}

/// Linear-interpolation quantile of finite values (NaN when none).
pub fn quantile(values: &[f64], q: f64) -> f64 {
    let mut v: Vec<f64> = values.iter().copied().filter(|x| x.is_finite()).collect();
    if v.is_empty() {
        return f64::NAN;
    }
    v.sort_by(f64::total_cmp);
    let pos = q * (v.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    v[lo] + (pos - lo as f64) * (v[hi] - v[lo])
}

pub fn summarize(config: &BenchConfig, records: &[BenchRecord]) -> BenchSummary {
    let flows = config
        .flows
        .iter()
        .map(|&kind| {
            let outcomes: Vec<&FlowOutcome> =
                records.iter().filter_map(|r| r.flow(kind)).collect();
            let column = |i: usize| -> Vec<f64> {
                outcomes.iter().map(|o| o.rho_curve[i].log10()).collect()
            };
            let grid = 0..config.time_grid.len();
            FlowSummary {
                kind,
                converged: outcomes.iter().filter(|o| o.converged()).count(),
                failed: records.len()
                    - outcomes.iter().filter(|o| o.error.is_none()).count(),
                median_log10_rho: grid.clone().map(|i| quantile(&column(i), 0.5)).collect(),
                q1_log10_rho: grid.clone().map(|i| quantile(&column(i), 0.25)).collect(),
                q3_log10_rho: grid.map(|i| quantile(&column(i), 0.75)).collect(),
            }
        })
        .collect();
    BenchSummary {
        num_instances: records.len(),
        instance_failures: records.iter().filter(|r| r.error.is_some()).count(),
        time_grid: config.time_grid.clone(),
        flows,
    }
}

/// Runs every instance (in parallel) and aggregates in `instance_id` order.
/// Individual failures are recorded, never propagated.
pub fn run_benchmark(config: &BenchConfig) -> Result<BenchReport> {
    config.validate()?;
    let records: Vec<BenchRecord> = (0..config.num_instances as u64)
        .into_par_iter()
        .map(|id| run_instance(config, id))
        .collect();
    let summary = summarize(config, &records);
    Ok(BenchReport { records, summary })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GridObjective {
    Bellman,
    Lqr,
}

impl std::str::FromStr for GridObjective {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "bellman" => Ok(GridObjective::Bellman),
            "lqr" => Ok(GridObjective::Lqr),
            other => Err(Error::InvalidConfig(format!("unknown objective {other:?}"))),
        }
    }
}

/// `steps` evenly spaced points from `min` to `max` inclusive.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridAxis {
    pub min: f64,
    pub max: f64,
    pub steps: usize,
}

impl GridAxis {
    pub fn new(min: f64, max: f64, steps: usize) -> Result<Self> {
        if !(min.is_finite() && max.is_finite()) || steps == 0 || (steps > 1 && !(max > min)) {
            return Err(Error::InvalidConfig(format!(
                "invalid grid axis {min}:{max}:{steps}"
            )));
        }
        Ok(GridAxis { min, max, steps })
    }

    pub fn point(&self, i: usize) -> f64 {
        if self.steps == 1 {
            self.min
        } else {
            self.min + (self.max - self.min) * i as f64 / (self.steps - 1) as f64
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridCell {
    pub k1: f64,
    pub k2: f64,
    /// NaN where the value Lyapunov equation is singular.
    pub value: f64,
    pub stable: bool,
}

/// Evaluates the objective on a `k1 × k2` grid for a two-state,
/// single-input system. Cells are ordered with `k1` as the row index.
///
/// Both objectives are evaluated wherever the value Lyapunov operator is
/// invertible, so destabilizing cells carry finite values too; `stable`
/// marks the Hurwitz cells. The LQR value is `tr(P_K)`.
pub fn grid_eval(
    sys: &SystemInstance,
    k1: GridAxis,
    k2: GridAxis,
    objective: GridObjective,
) -> Result<Vec<GridCell>> {
    if sys.n() != 2 || sys.m() != 1 {
        return Err(Error::DimensionMismatch(format!(
            "grid evaluation needs n = 2, m = 1, got n = {}, m = {}",
            sys.n(),
            sys.m()
        )));
    }
    let mut cells = Vec::with_capacity(k1.steps * k2.steps);
    for i in 0..k1.steps {
        for j in 0..k2.steps {
            let (a, b) = (k1.point(i), k2.point(j));
            let gain = Gain::from_row_major(1, 2, &[a, b])?;
            let stable = in_stabilizing_set(sys, &gain)?;
            let value = if in_sigma_set(sys, &gain)? {
                match objective {
                    GridObjective::Bellman => bellman_error(sys, &gain).map(|e| e.e),
                    GridObjective::Lqr => solve_value_lyapunov(sys, &gain).map(|v| v.p.trace()),
                }
                .unwrap_or(f64::NAN)
            } else {
                f64::NAN
            };
            cells.push(GridCell {
                k1: a,
                k2: b,
                value,
                stable,
            });
        }
    }
    Ok(cells)
}
