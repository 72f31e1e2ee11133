//! Gradient flows over the stabilizing set, integrated with an embedded
//! Dormand–Prince 5(4) pair.
//!
//! A step is rejected and halved if any stage leaves the stabilizing set,
//! so every accepted sample is Hurwitz-stable with margin
//! [`Tolerances::stability_margin`](crate::matlin::Tolerances).

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::bellman::bellman_error_and_gradient;
use crate::cost_flow::lqr_cost_with_gradients;
use crate::error::{Error, Result};
use crate::lqr_core::{closed_loop, Gain, SystemInstance};
use crate::matlin::{self, Mat, TOL};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FlowKind {
    /// `K̇ = −β ∇e_K`
    Bellman,
    /// `K̇ = −∇f_K`
    Lqr,
    /// `K̇ = −∇f_K · Y_K^{−γ}`
    Natural,
}

impl FlowKind {
    pub const ALL: [FlowKind; 3] = [FlowKind::Bellman, FlowKind::Lqr, FlowKind::Natural];

    pub fn name(self) -> &'static str {
        match self {
            FlowKind::Bellman => "bellman",
            FlowKind::Lqr => "lqr",
            FlowKind::Natural => "natural",
        }
    }
}

impl fmt::Display for FlowKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for FlowKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "bellman" => Ok(FlowKind::Bellman),
            "lqr" => Ok(FlowKind::Lqr),
            "natural" => Ok(FlowKind::Natural),
            other => Err(Error::InvalidConfig(format!("unknown flow kind {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FlowConfig {
    pub kind: FlowKind,
    pub beta: f64,
    pub gamma: f64,
    pub rtol: f64,
    pub atol: f64,
    pub t_max: f64,
    pub grad_tol: f64,
    pub max_steps: usize,
    pub record_stride: usize,
}

impl Default for FlowConfig {
    fn default() -> Self {
        FlowConfig {
            kind: FlowKind::Bellman,
            beta: 1.0,
            gamma: 1.0,
            rtol: 1e-8,
            atol: 1e-10,
            t_max: 1e4,
            grad_tol: 1e-8,
            max_steps: 1_000_000,
            record_stride: 1,
        }
    }
}

impl FlowConfig {
    pub fn with_kind(kind: FlowKind) -> Self {
        FlowConfig {
            kind,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("beta", self.beta),
            ("gamma", self.gamma),
            ("rtol", self.rtol),
            ("atol", self.atol),
            ("t_max", self.t_max),
            ("grad_tol", self.grad_tol),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::InvalidConfig(format!(
                    "{name} must be positive and finite, got {v}"
                )));
            }
        }
        if self.max_steps == 0 || self.record_stride == 0 {
            return Err(Error::InvalidConfig(
                "max_steps and record_stride must be positive".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum FlowStatus {
    ConvergedGradTol,
    ReachedTMax,
    /// Too many consecutive rejections, a vanishing step, or the step budget ran out.
    StepFailure,
    /// Stopped by the caller's monitor (see [`integrate_monitored`]).
    Halted,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FlowSample {
    pub t: f64,
    pub k: Gain,
    /// `e_K` for the Bellman flow, `f_K = tr(P_K)` otherwise.
    pub objective: f64,
    /// Frobenius norm of the objective's plain gradient.
    pub grad_norm: f64,
    pub abscissa: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FlowTrajectory {
    pub samples: Vec<FlowSample>,
    pub status: FlowStatus,
    pub k_final: Gain,
    pub accepted_steps: usize,
    pub rejected_steps: usize,
}

impl FlowTrajectory {
    pub fn last(&self) -> &FlowSample {
        self.samples.last().expect("trajectory has at least the initial sample")
    }

    pub fn max_abscissa(&self) -> f64 {
        self.samples
            .iter()
            .map(|s| s.abscissa)
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// Largest increase of the objective between consecutive samples,
    /// relative to `1 + objective`. Non-positive for a descending run.
    pub fn max_relative_ascent(&self) -> f64 {
        self.samples
            .windows(2)
            .map(|w| (w[1].objective - w[0].objective) / (1.0 + w[0].objective.abs()))
            .fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn is_descending(&self, slack: f64) -> bool {
        self.samples.len() < 2 || self.max_relative_ascent() <= slack
    }
}

struct FieldEval {
    rhs: Mat,
    objective: f64,
    grad_norm: f64,
    abscissa: f64,
}

fn evaluate(sys: &SystemInstance, k: &Mat, config: &FlowConfig) -> Result<FieldEval> {
    let gain = Gain::new(k.clone())?;
    let ak = closed_loop(sys, &gain)?;
    let abscissa = matlin::spectral_abscissa(&ak)?;
    if !(abscissa < -TOL.stability_margin) {
        return Err(Error::NotStabilizing { abscissa });
    }
    let eval = match config.kind {
        FlowKind::Bellman => {
            let (ev, g) = bellman_error_and_gradient(sys, &gain)?;
            FieldEval {
                grad_norm: g.grad.norm(),
                rhs: g.grad * -config.beta,
                objective: ev.e,
                abscissa,
            }
        }
        FlowKind::Lqr | FlowKind::Natural => {
            let eye = Mat::identity(sys.n(), sys.n());
            let gamma = (config.kind == FlowKind::Natural).then_some(config.gamma);
            let (cost, grad, natural) = lqr_cost_with_gradients(sys, &gain, &eye, gamma)?;
            FieldEval {
                grad_norm: grad.norm(),
                rhs: -natural.unwrap_or(grad),
                objective: cost.f,
                abscissa,
            }
        }
    };
    if eval.rhs.iter().all(|x| x.is_finite()) && eval.objective.is_finite() {
        Ok(eval)
    } else {
        Err(Error::NonFinite("flow field"))
    }
}

/// Right-hand side `K̇` of the configured flow.
pub fn flow_rhs(sys: &SystemInstance, k: &Gain, config: &FlowConfig) -> Result<Mat> {
    Ok(evaluate(sys, k.as_mat(), config)?.rhs)
}

// Dormand–Prince 5(4) tableau; the field is autonomous so the nodes are not needed.
const A: [[f64; 6]; 7] = [
    [0.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
    [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
    [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
];
/// Fifth-order weights minus embedded fourth-order weights.
const E: [f64; 7] = [
    71.0 / 57600.0,
    0.0,
    -71.0 / 16695.0,
    71.0 / 1920.0,
    -17253.0 / 339200.0,
    22.0 / 525.0,
    -1.0 / 40.0,
];

const SAFETY: f64 = 0.9;
const MIN_FACTOR: f64 = 0.2;
const MAX_FACTOR: f64 = 5.0;
const MAX_CONSECUTIVE_REJECTIONS: usize = 40;

fn error_norm(err: &Mat, y0: &Mat, y1: &Mat, config: &FlowConfig) -> f64 {
    let sum: f64 = err
        .iter()
        .zip(y0.iter().zip(y1.iter()))
        .map(|(e, (a, b))| {
            let sc = config.atol + config.rtol * a.abs().max(b.abs());
            (e / sc).powi(2)
        })
        .sum();
    (sum / err.len() as f64).sqrt()
}

fn initial_step(sys: &SystemInstance, y0: &Mat, f0: &FieldEval, config: &FlowConfig) -> f64 {
    let scale = |y: &Mat, v: &Mat| {
        let s: f64 = y
            .iter()
            .zip(v.iter())
            .map(|(yi, vi)| (vi / (config.atol + config.rtol * yi.abs())).powi(2))
            .sum();
        (s / y.len() as f64).sqrt()
    };
    let d0 = scale(y0, y0);
    let d1 = scale(y0, &f0.rhs);
    let h0 = if d0 < 1e-5 || d1 < 1e-5 { 1e-6 } else { 0.01 * d0 / d1 };
    let y1 = y0 + &f0.rhs * h0;
    let h1 = match evaluate(sys, &y1, config) {
        Ok(f1) => {
            let d2 = scale(y0, &(&f1.rhs - &f0.rhs)) / h0;
            if d1.max(d2) <= 1e-15 {
                (h0 * 1e-3).max(1e-6)
            } else {
                (0.01 / d1.max(d2)).powf(1.0 / 5.0)
            }
        }
        Err(_) => h0,
    };
    (100.0 * h0).min(h1).min(config.t_max)
}

/// Integrates the configured flow from `k0` until the gradient norm drops
/// to `grad_tol` or `t_max` is reached.
///
/// A run that stalls (40 consecutive rejections) is returned with
/// [`FlowStatus::StepFailure`] and the samples accepted so far.
pub fn integrate(sys: &SystemInstance, k0: &Gain, config: &FlowConfig) -> Result<FlowTrajectory> {
    integrate_monitored(sys, k0, config, |_, _| false)
}

/// [`integrate`] with a monitor called on every accepted state `(t, K)`;
/// returning `true` ends the run with [`FlowStatus::Halted`].
pub fn integrate_monitored<F>(
    sys: &SystemInstance,
    k0: &Gain,
    config: &FlowConfig,
    mut halt: F,
) -> Result<FlowTrajectory>
where
    F: FnMut(f64, &Mat) -> bool,
{
    config.validate()?;
    let mut y = k0.as_mat().clone();
    if y.shape() != (sys.m(), sys.n()) {
        return Err(Error::DimensionMismatch(format!(
            "initial gain must be {}x{}",
            sys.m(),
            sys.n()
        )));
    }
    let mut f = evaluate(sys, &y, config)?;
    let mut t = 0.0;
    let mut samples = vec![FlowSample {
        t,
        k: k0.clone(),
        objective: f.objective,
        grad_norm: f.grad_norm,
        abscissa: f.abscissa,
    }];
    let mut accepted = 0usize;
    let mut rejected = 0usize;
    let mut consecutive = 0usize;
    let mut last_recorded = true;

    let finish = |samples: Vec<FlowSample>, y: Mat, status, accepted, rejected| FlowTrajectory {
        samples,
        status,
        k_final: Gain::new(y).expect("finite by construction"),
        accepted_steps: accepted,
        rejected_steps: rejected,
    };

    if f.grad_norm <= config.grad_tol {
        return Ok(finish(samples, y, FlowStatus::ConvergedGradTol, 0, 0));
    }

    let mut h = initial_step(sys, &y, &f, config);
    let mut stages: Vec<Mat> = Vec::with_capacity(7);
    let status = loop {
        if accepted + rejected >= config.max_steps {
            break FlowStatus::StepFailure;
        }
        if consecutive >= MAX_CONSECUTIVE_REJECTIONS {
            break FlowStatus::StepFailure;
        }
        h = h.min(config.t_max - t);
        if !(h > 0.0) || t + h == t {
            break FlowStatus::StepFailure;
        }

        stages.clear();
        stages.push(f.rhs.clone());
        let mut failed = false;
        let mut last_eval = None;
        for s in 1..7 {
            let mut ys = y.clone();
            for (j, kj) in stages.iter().enumerate() {
                if A[s][j] != 0.0 {
                    ys += kj * (h * A[s][j]);
                }
            }
            match evaluate(sys, &ys, config) {
                Ok(ev) => {
                    stages.push(ev.rhs.clone());
                    if s == 6 {
                        last_eval = Some((ys, ev));
                    }
                }
                Err(_) => {
                    failed = true;
                    break;
                }
            }
        }
        if failed {
            rejected += 1;
            consecutive += 1;
            h *= 0.5;
            continue;
        }
        let (y_new, f_new) = last_eval.expect("seven stages evaluated");
        let mut err = Mat::zeros(y.nrows(), y.ncols());
        for (e, kj) in E.iter().zip(stages.iter()) {
            if *e != 0.0 {
                err += kj * (h * e);
            }
        }
        let err_norm = error_norm(&err, &y, &y_new, config);
        if !err_norm.is_finite() {
            rejected += 1;
            consecutive += 1;
            h *= 0.5;
            continue;
        }
        if err_norm <= 1.0 {
            t += h;
            y = y_new;
            f = f_new;
            accepted += 1;
            let after_rejection = consecutive > 0;
            consecutive = 0;
            last_recorded = accepted % config.record_stride == 0;
            if last_recorded {
                samples.push(sample(t, &y, &f));
            }
            if f.grad_norm <= config.grad_tol {
                break FlowStatus::ConvergedGradTol;
            }
            if halt(t, &y) {
                break FlowStatus::Halted;
            }
            if t >= config.t_max {
                break FlowStatus::ReachedTMax;
            }
            let mut factor = if err_norm == 0.0 {
                MAX_FACTOR
            } else {
                (SAFETY * err_norm.powf(-0.2)).clamp(MIN_FACTOR, MAX_FACTOR)
            };
            if after_rejection {
                factor = factor.min(1.0);
            }
            h *= factor;
        } else {
            rejected += 1;
            consecutive += 1;
            h *= (SAFETY * err_norm.powf(-0.2)).clamp(MIN_FACTOR, 1.0);
        }
    };
    if !last_recorded {
        samples.push(sample(t, &y, &f));
    }
    Ok(finish(samples, y, status, accepted, rejected))
}

fn sample(t: f64, y: &Mat, f: &FieldEval) -> FlowSample {
    FlowSample {
        t,
        k: Gain::new(y.clone()).expect("finite by construction"),
        objective: f.objective,
        grad_norm: f.grad_norm,
        abscissa: f.abscissa,
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ResidualPoint {
    pub t: f64,
    pub rho: f64,
}

/// `ρ(t) = ‖K(t) − K*‖_F / ‖K(0) − K*‖_F` at every recorded sample.
pub fn normalized_residuals(traj: &FlowTrajectory, k_star: &Gain) -> Result<Vec<ResidualPoint>> {
    let first = traj.samples.first().ok_or(Error::DegenerateStart)?;
    let d0 = first.k.distance(k_star);
    if !(d0 > 0.0) {
        return Err(Error::DegenerateStart);
    }
    Ok(traj
        .samples
        .iter()
        .map(|s| ResidualPoint {
            t: s.t,
            rho: s.k.distance(k_star) / d0,
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinearFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
    pub points: usize,
}

/// Least-squares line through `(t, ln ρ)` after dropping the leading
/// `trim_front` and trailing `trim_back` fractions of the samples.
///
/// Returns `None` with fewer than three usable points or no spread in `t`.
pub fn log_linear_fit(
    residuals: &[ResidualPoint],
    trim_front: f64,
    trim_back: f64,
) -> Option<LinearFit> {
    let n = residuals.len();
    let lo = (trim_front * n as f64).floor() as usize;
    let hi = n.saturating_sub((trim_back * n as f64).floor() as usize);
    let pts: Vec<(f64, f64)> = residuals
        .get(lo..hi)?
        .iter()
        .filter(|p| p.rho > 0.0)
        .map(|p| (p.t, p.rho.ln()))
        .collect();
    if pts.len() < 3 {
        return None;
    }
    let m = pts.len() as f64;
    let mean_t = pts.iter().map(|p| p.0).sum::<f64>() / m;
    let mean_y = pts.iter().map(|p| p.1).sum::<f64>() / m;
    let stt: f64 = pts.iter().map(|p| (p.0 - mean_t).powi(2)).sum();
    let sty: f64 = pts.iter().map(|p| (p.0 - mean_t) * (p.1 - mean_y)).sum();
    let syy: f64 = pts.iter().map(|p| (p.1 - mean_y).powi(2)).sum();
    if !(stt > 0.0) {
        return None;
    }
    let slope = sty / stt;
    let intercept = mean_y - slope * mean_t;
    let r_squared = if syy > 0.0 { sty * sty / (stt * syy) } else { 1.0 };
    Some(LinearFit {
        slope,
        intercept,
        r_squared,
        points: pts.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::examples;
    use crate::lqr_core::{kleinman, DEFAULT_KLEINMAN_TOL};
    use crate::testutil::{random_stabilizing_pair, rng};
    use approx::assert_relative_eq;

    #[test]
    fn rhs_cases() {
        let sys = examples::scalar_example();
        let k = Gain::zeros(1, 1);
        let cfg = FlowConfig::default();
        assert_relative_eq!(flow_rhs(&sys, &k, &cfg).unwrap()[0], 1.5, epsilon = 1e-14);
        let doubled = FlowConfig { beta: 2.0, ..cfg.clone() };
        assert_eq!(
            flow_rhs(&sys, &k, &doubled).unwrap(),
            flow_rhs(&sys, &k, &cfg).unwrap() * 2.0
        );
        let two = examples::two_state_example();
        let star = kleinman(&two, &Gain::zeros(1, 2), DEFAULT_KLEINMAN_TOL, 50).unwrap();
        assert!(flow_rhs(&two, &star.k_star, &cfg).unwrap().norm() < 1e-9);
        assert_relative_eq!(
            flow_rhs(&sys, &k, &FlowConfig::with_kind(FlowKind::Lqr)).unwrap()[0],
            0.5,
            epsilon = 1e-15
        );
        assert_relative_eq!(
            flow_rhs(&sys, &k, &FlowConfig::with_kind(FlowKind::Natural)).unwrap()[0],
            1.0,
            epsilon = 1e-15
        );
    }

    #[test]
    fn scalar_flow_reaches_care_root() {
        let sys = examples::scalar_example();
        let traj = integrate(&sys, &Gain::zeros(1, 1), &FlowConfig::default()).unwrap();
        assert_eq!(traj.status, FlowStatus::ConvergedGradTol);
        assert!((traj.k_final.as_mat()[0] - (2f64.sqrt() - 1.0)).abs() < 1e-6);
        assert!(traj.samples.windows(2).all(|w| w[1].t > w[0].t));
    }

    #[test]
    fn start_at_optimum() {
        let sys = examples::two_state_example();
        let star = kleinman(&sys, &Gain::zeros(1, 2), DEFAULT_KLEINMAN_TOL, 50).unwrap();
        let traj = integrate(&sys, &star.k_star, &FlowConfig::default()).unwrap();
        assert_eq!(traj.status, FlowStatus::ConvergedGradTol);
        assert!(traj.accepted_steps <= 1);
    }

    #[test]
    fn all_kinds_agree_on_two_state_example() {
        let sys = examples::two_state_example();
        let k0 = Gain::zeros(1, 2);
        let star = kleinman(&sys, &k0, DEFAULT_KLEINMAN_TOL, 50).unwrap();
        let mut finals = Vec::new();
        for kind in FlowKind::ALL {
            let traj = integrate(&sys, &k0, &FlowConfig::with_kind(kind)).unwrap();
            assert_eq!(traj.status, FlowStatus::ConvergedGradTol, "{kind}");
            assert!(traj.k_final.distance(&star.k_star) < 1e-6, "{kind}");
            assert!(traj.max_abscissa() < 0.0);
            assert!(traj.is_descending(1e-10), "{kind}: {}", traj.max_relative_ascent());
            finals.push(traj.k_final);
        }
        for a in &finals {
            for b in &finals {
                assert!(a.distance(b) <= 1e-5);
            }
        }
    }

    #[test]
    fn rejects_unstable_start() {
        let sys = examples::two_state_example();
        let k = Gain::from_row_major(1, 2, &[0.0, -1.5]).unwrap();
        assert!(matches!(
            integrate(&sys, &k, &FlowConfig::default()),
            Err(Error::NotStabilizing { .. })
        ));
    }

    #[test]
    fn invalid_config() {
        let sys = examples::scalar_example();
        let cfg = FlowConfig { rtol: 0.0, ..Default::default() };
        assert!(matches!(
            integrate(&sys, &Gain::zeros(1, 1), &cfg),
            Err(Error::InvalidConfig(_))
        ));
    }

    #[test]
    fn t_max_stops_early() {
        let sys = examples::two_state_example();
        let cfg = FlowConfig { t_max: 0.05, ..Default::default() };
        let traj = integrate(&sys, &Gain::zeros(1, 2), &cfg).unwrap();
        assert_eq!(traj.status, FlowStatus::ReachedTMax);
        assert_relative_eq!(traj.last().t, 0.05, epsilon = 1e-15);
    }

    #[test]
    fn stride_thins_but_keeps_endpoint() {
        let sys = examples::two_state_example();
        let full = integrate(&sys, &Gain::zeros(1, 2), &FlowConfig::default()).unwrap();
        let cfg = FlowConfig { record_stride: 7, ..Default::default() };
        let thin = integrate(&sys, &Gain::zeros(1, 2), &cfg).unwrap();
        assert!(thin.samples.len() < full.samples.len());
        assert_eq!(thin.k_final, full.k_final);
        assert_eq!(thin.last().t, full.last().t);
    }

    #[test]
    fn residuals_and_fit() {
        let sys = examples::two_state_example();
        let k0 = Gain::zeros(1, 2);
        let star = kleinman(&sys, &k0, DEFAULT_KLEINMAN_TOL, 50).unwrap();
        let traj = integrate(&sys, &k0, &FlowConfig::default()).unwrap();
        let rho = normalized_residuals(&traj, &star.k_star).unwrap();
        assert_eq!(rho[0].rho, 1.0);
        assert!(rho.iter().all(|p| p.rho >= 0.0));
        assert!(rho.last().unwrap().rho <= 1e-6);
        let fit = log_linear_fit(&rho, 0.1, 0.0).unwrap();
        assert!(fit.slope < 0.0);
        assert!(fit.r_squared >= 0.95, "{fit:?}");
        assert_eq!(
            normalized_residuals(&traj, &traj.samples[0].k),
            Err(Error::DegenerateStart)
        );
    }

    #[test]
    fn fit_of_exact_exponential() {
        let pts: Vec<ResidualPoint> = (0..50)
            .map(|i| {
                let t = i as f64 * 0.3;
                ResidualPoint { t, rho: (-0.7 * t).exp() }
            })
            .collect();
        let fit = log_linear_fit(&pts, 0.1, 0.1).unwrap();
        assert_relative_eq!(fit.slope, -0.7, epsilon = 1e-12);
        assert_relative_eq!(fit.r_squared, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn bellman_descent_on_random_instances() {
        let mut rng = rng(31);
        for _ in 0..10 {
            let (sys, k0) = random_stabilizing_pair(&mut rng, 2..=3, 1..=2);
            let traj = integrate(&sys, &k0, &FlowConfig::default()).unwrap();
            // ill-conditioned draws can park at a gradient floor above grad_tol
            let at_optimum = traj.last().objective <= 1e-10;
            assert!(traj.status == FlowStatus::ConvergedGradTol || at_optimum);
            assert!(traj.max_abscissa() < -TOL.stability_margin);
            assert!(traj.is_descending(1e-10), "{}", traj.max_relative_ascent());
        }
    }

    #[test]
    fn monitor_halts_run() {
        let sys = examples::scalar_example();
        let k0 = Gain::zeros(1, 1);
        let traj = integrate_monitored(&sys, &k0, &FlowConfig::default(), |t, _| t >= 1.0).unwrap();
        assert_eq!(traj.status, FlowStatus::Halted);
        let n = traj.samples.len();
        assert!(traj.samples[n - 1].t >= 1.0 && traj.samples[n - 2].t < 1.0);
        assert_eq!(traj.samples[n - 1].k, traj.k_final);
    }

    #[test]
    fn tolerance_halving_is_consistent() {
        let mut rng = rng(77);
        for _ in 0..5 {
            let (sys, k0) = random_stabilizing_pair(&mut rng, 2..=3, 1..=2);
            let base = integrate(&sys, &k0, &FlowConfig::default()).unwrap();
            let tight = FlowConfig { rtol: 0.5e-8, atol: 0.5e-10, ..Default::default() };
            let fine = integrate(&sys, &k0, &tight).unwrap();
            assert!(base.k_final.distance(&fine.k_final) <= 1e-7);
        }
    }
}
