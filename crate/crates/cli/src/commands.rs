use std::fs;
use std::path::{Path, PathBuf};

use bellman_lqr::bellman::{bellman_error, bellman_gradient};
use bellman_lqr::bench::{
    grid_eval, instance_rng, run_benchmark, sample_stabilizing_gain, BenchConfig, BenchRecord,
    GridAxis, GridObjective,
};
use bellman_lqr::cost_flow::{lqr_cost, lqr_gradient};
use bellman_lqr::flow::{integrate, FlowConfig, FlowKind, FlowStatus, FlowTrajectory};
use bellman_lqr::lqr_core::{
    care_residual, closed_loop, in_sigma_set, in_stabilizing_set, kleinman, Gain, SystemInstance,
};
use bellman_lqr::matlin::{self, Mat};
use bellman_lqr::Error;
use clap::Args;
use serde::Serialize;

use crate::error::{CliError, EXIT_DOMAIN, EXIT_INPUT, EXIT_NUMERICAL};
use crate::format::{csv_row, float, to_json};
use crate::instance::{self, InstanceFile};

/// What a successful command prints, and the exit code to leave with.
pub struct Outcome {
    pub stdout: String,
    pub code: i32,
}

impl Outcome {
    fn ok(stdout: String) -> Self {
        Outcome { stdout, code: 0 }
    }
}

fn write_file(path: &Path, contents: &str) -> Result<(), CliError> {
    fs::write(path, contents).map_err(|e| CliError::io(format!("cannot write {}: {e}", path.display())))
}

/// `--k0` flag, then the instance's `k0`, then a seeded random draw.
fn initial_gain(
    flag: Option<&str>,
    file: &InstanceFile,
    sys: &SystemInstance,
    seed: u64,
) -> Result<(Gain, &'static str), CliError> {
    if let Some(text) = flag {
        return Ok((instance::parse_gain(text, sys)?, "flag"));
    }
    if let Some(k) = file.k0()? {
        return Ok((k, "instance"));
    }
    let k = sample_stabilizing_gain(sys, &mut instance_rng(seed, 0)).map_err(CliError::compute)?;
    Ok((k, "sampled"))
}

#[derive(Debug, Args)]
pub struct CareArgs {
    /// Instance JSON file
    pub instance: PathBuf,
    #[arg(long, default_value_t = 1e-10)]
    pub tol: f64,
    #[arg(long, default_value_t = 100)]
    pub max_iter: usize,
    /// Initial stabilizing gain, row-major comma-separated
    #[arg(long, allow_hyphen_values = true)]
    pub k0: Option<String>,
    /// Seed for sampling an initial gain when none is given
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Serialize)]
struct CareOutput {
    p_star: Vec<f64>,
    k_star: Vec<f64>,
    residual: f64,
    iterations: usize,
    k0: Vec<f64>,
    k0_source: &'static str,
}

pub fn care(args: &CareArgs) -> Result<Outcome, CliError> {
    if !(args.tol > 0.0) || args.max_iter == 0 {
        return Err(CliError::new(EXIT_INPUT, "InvalidConfig", "tol and max-iter must be positive"));
    }
    let (file, sys) = instance::load(&args.instance)?;
    let (k0, source) = initial_gain(args.k0.as_deref(), &file, &sys, args.seed)?;
    let res = kleinman(&sys, &k0, args.tol, args.max_iter).map_err(CliError::compute)?;
    Ok(Outcome::ok(to_json(&CareOutput {
        p_star: matlin::to_row_major(&res.p_star),
        k_star: res.k_star.to_row_major(),
        residual: care_residual(&sys, &res.p_star).norm(),
        iterations: res.iterations,
        k0: k0.to_row_major(),
        k0_source: source,
    })))
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    pub instance: PathBuf,
    /// Gain, row-major comma-separated (defaults to the instance's k0)
    #[arg(long, allow_hyphen_values = true)]
    pub k: Option<String>,
    #[arg(long, default_value = "bellman")]
    pub objective: GridObjective,
}

#[derive(Serialize)]
struct EvalOutput {
    objective: GridObjective,
    value: f64,
    grad: Option<Vec<f64>>,
    grad_reason: Option<&'static str>,
    #[serde(skip_serializing_if = "Option::is_none")]
    m_eigs: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    y_eigs: Option<Vec<f64>>,
    abscissa: f64,
    #[serde(rename = "in_K")]
    in_k: bool,
    #[serde(rename = "in_K_sigma")]
    in_k_sigma: bool,
}

pub fn eval(args: &EvalArgs) -> Result<Outcome, CliError> {
    let (file, sys) = instance::load(&args.instance)?;
    let k = match (&args.k, file.k0()?) {
        (Some(text), _) => instance::parse_gain(text, &sys)?,
        (None, Some(k)) => k,
        (None, None) => return Err(CliError::parse("no gain given: pass --k or set k0")),
    };
    let compute = CliError::compute;
    let abscissa = matlin::spectral_abscissa(&closed_loop(&sys, &k).map_err(compute)?).map_err(compute)?;
    let in_k = in_stabilizing_set(&sys, &k).map_err(compute)?;
    let in_k_sigma = in_sigma_set(&sys, &k).map_err(compute)?;
    let unstable_reason = (!in_k).then_some("gain is not stabilizing");
    let out = match args.objective {
        GridObjective::Bellman => {
            let ev = bellman_error(&sys, &k).map_err(compute)?;
            let grad = if in_k {
                Some(matlin::to_row_major(&bellman_gradient(&sys, &k).map_err(compute)?.grad))
            } else {
                None
            };
            EvalOutput {
                objective: args.objective,
                value: ev.e,
                grad,
                grad_reason: unstable_reason,
                m_eigs: Some(matlin::sym_eigenvalues(&ev.m_matrix).map_err(compute)?),
                y_eigs: None,
                abscissa,
                in_k,
                in_k_sigma,
            }
        }
        GridObjective::Lqr => {
            if !in_k {
                return Err(compute(Error::NotStabilizing { abscissa }));
            }
            let sigma0 = Mat::identity(sys.n(), sys.n());
            let cost = lqr_cost(&sys, &k, &sigma0).map_err(compute)?;
            let grad = lqr_gradient(&sys, &k, &sigma0).map_err(compute)?;
            EvalOutput {
                objective: args.objective,
                value: cost.f,
                grad: Some(matlin::to_row_major(&grad)),
                grad_reason: None,
                m_eigs: None,
                y_eigs: Some(matlin::sym_eigenvalues(&cost.y_matrix).map_err(compute)?),
                abscissa,
                in_k,
                in_k_sigma,
            }
        }
    };
    Ok(Outcome::ok(to_json(&out)))
}

#[derive(Debug, Args)]
pub struct FlowArgs {
    pub instance: PathBuf,
    #[arg(long, default_value = "bellman")]
    pub kind: FlowKind,
    #[arg(long)]
    pub beta: Option<f64>,
    #[arg(long)]
    pub gamma: Option<f64>,
    #[arg(long)]
    pub rtol: Option<f64>,
    #[arg(long)]
    pub atol: Option<f64>,
    #[arg(long)]
    pub tmax: Option<f64>,
    #[arg(long)]
    pub grad_tol: Option<f64>,
    #[arg(long)]
    pub max_steps: Option<usize>,
    #[arg(long)]
    pub record_stride: Option<usize>,
    /// Initial gain, row-major comma-separated
    #[arg(long, allow_hyphen_values = true)]
    pub k0: Option<String>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Trajectory CSV path
    #[arg(long)]
    pub out: PathBuf,
}

impl FlowArgs {
    fn config(&self) -> FlowConfig {
        let d = FlowConfig::default();
        FlowConfig {
            kind: self.kind,
            beta: self.beta.unwrap_or(d.beta),
            gamma: self.gamma.unwrap_or(d.gamma),
            rtol: self.rtol.unwrap_or(d.rtol),
            atol: self.atol.unwrap_or(d.atol),
            t_max: self.tmax.unwrap_or(d.t_max),
            grad_tol: self.grad_tol.unwrap_or(d.grad_tol),
            max_steps: self.max_steps.unwrap_or(d.max_steps),
            record_stride: self.record_stride.unwrap_or(d.record_stride),
        }
    }
}

#[derive(Serialize)]
struct FlowSummary {
    kind: FlowKind,
    status: FlowStatus,
    t: f64,
    k_final: Vec<f64>,
    objective: f64,
    grad_norm: f64,
    abscissa: f64,
    samples: usize,
    accepted_steps: usize,
    rejected_steps: usize,
}

fn gain_columns(m: usize, n: usize) -> Vec<String> {
    let sep = if m.max(n) >= 10 { "_" } else { "" };
    (1..=m)
        .flat_map(|i| (1..=n).map(move |j| format!("k_{i}{sep}{j}")))
        .collect()
}

pub fn trajectory_csv(traj: &FlowTrajectory, m: usize, n: usize) -> String {
    let mut out = String::from("t,");
    out += &gain_columns(m, n).join(",");
    out += ",objective,grad_norm,abscissa\n";
    for s in &traj.samples {
        let mut row = vec![s.t];
        row.extend(s.k.to_row_major());
        row.extend([s.objective, s.grad_norm, s.abscissa]);
        out += &csv_row(row);
        out.push('\n');
    }
    out
}

pub fn flow(args: &FlowArgs) -> Result<Outcome, CliError> {
    let config = args.config();
    config.validate().map_err(CliError::input)?;
    let (file, sys) = instance::load(&args.instance)?;
    let (k0, _) = initial_gain(args.k0.as_deref(), &file, &sys, args.seed)?;
    let traj = integrate(&sys, &k0, &config).map_err(CliError::compute)?;
    write_file(&args.out, &trajectory_csv(&traj, sys.m(), sys.n()))?;
    let last = traj.last();
    let summary = FlowSummary {
        kind: config.kind,
        status: traj.status,
        t: last.t,
        k_final: traj.k_final.to_row_major(),
        objective: last.objective,
        grad_norm: last.grad_norm,
        abscissa: last.abscissa,
        samples: traj.samples.len(),
        accepted_steps: traj.accepted_steps,
        rejected_steps: traj.rejected_steps,
    };
    let code = if traj.status == FlowStatus::StepFailure { EXIT_NUMERICAL } else { 0 };
    Ok(Outcome { stdout: to_json(&summary), code })
}

#[derive(Debug, Args)]
pub struct GridArgs {
    pub instance: PathBuf,
    #[arg(long, default_value = "bellman")]
    pub objective: GridObjective,
    /// `min:max:steps`
    #[arg(long, default_value = "-3:3:121", allow_hyphen_values = true)]
    pub k1: String,
    /// `min:max:steps`
    #[arg(long, default_value = "-3:3:121", allow_hyphen_values = true)]
    pub k2: String,
    #[arg(long)]
    pub out: PathBuf,
}

pub fn parse_axis(text: &str) -> Result<GridAxis, CliError> {
    let parts: Vec<&str> = text.split(':').collect();
    let bad = || CliError::parse(format!("axis must be min:max:steps, got {text:?}"));
    if parts.len() != 3 {
        return Err(bad());
    }
    let min = parts[0].trim().parse::<f64>().map_err(|_| bad())?;
    let max = parts[1].trim().parse::<f64>().map_err(|_| bad())?;
    let steps = parts[2].trim().parse::<usize>().map_err(|_| bad())?;
    GridAxis::new(min, max, steps).map_err(CliError::input)
}

#[derive(Serialize)]
struct GridSummary {
    cells: usize,
    finite_cells: usize,
    stable_cells: usize,
}

pub fn grid(args: &GridArgs) -> Result<Outcome, CliError> {
    let k1 = parse_axis(&args.k1)?;
    let k2 = parse_axis(&args.k2)?;
    let (_, sys) = instance::load(&args.instance)?;
    if sys.n() != 2 || sys.m() != 1 {
        return Err(CliError::new(
            EXIT_DOMAIN,
            "DimensionMismatch",
            format!("grid needs n = 2 and m = 1, got n = {}, m = {}", sys.n(), sys.m()),
        ));
    }
    let cells = grid_eval(&sys, k1, k2, args.objective).map_err(CliError::compute)?;
    let mut csv = String::from("k1,k2,value,stable\n");
    for c in &cells {
        csv += &format!(
            "{},{},{},{}\n",
            float(c.k1),
            float(c.k2),
            float(c.value),
            u8::from(c.stable)
        );
    }
    write_file(&args.out, &csv)?;
    Ok(Outcome::ok(to_json(&GridSummary {
        cells: cells.len(),
        finite_cells: cells.iter().filter(|c| c.value.is_finite()).count(),
        stable_cells: cells.iter().filter(|c| c.stable).count(),
    })))
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    /// BenchConfig JSON; defaults apply to absent fields
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Output directory
    #[arg(long)]
    pub out: PathBuf,
    /// Overrides the config's master seed
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Serialize)]
struct BenchSummaryFile<'a> {
    config: &'a BenchConfig,
    summary: &'a bellman_lqr::bench::BenchSummary,
    records: Vec<BenchRecord>,
}

#[derive(Serialize)]
struct BenchStdout {
    out: String,
    num_instances: usize,
    instance_failures: usize,
    converged: Vec<(FlowKind, usize)>,
}

pub fn residual_csv(record: &BenchRecord, time_grid: &[f64]) -> String {
    let mut csv = String::from("t");
    for kind in FlowKind::ALL {
        csv += &format!(",rho_{kind}");
    }
    csv.push('\n');
    for (i, &t) in time_grid.iter().enumerate() {
        let mut row = vec![t];
        for kind in FlowKind::ALL {
            row.push(record.flow(kind).map_or(f64::NAN, |o| o.rho_curve[i]));
        }
        csv += &csv_row(row);
        csv.push('\n');
    }
    csv
}

pub fn bench(args: &BenchArgs) -> Result<Outcome, CliError> {
    let mut config: BenchConfig = match &args.config {
        Some(path) => {
            let text = fs::read_to_string(path)
                .map_err(|e| CliError::io(format!("cannot read {}: {e}", path.display())))?;
            serde_json::from_str(&text).map_err(|e| CliError::parse(format!("{}: {e}", path.display())))?
        }
        None => BenchConfig::default(),
    };
    if let Some(seed) = args.seed {
        config.seed = seed;
    }
    config.validate().map_err(CliError::input)?;
    let report = run_benchmark(&config).map_err(CliError::compute)?;
    fs::create_dir_all(&args.out)
        .map_err(|e| CliError::io(format!("cannot create {}: {e}", args.out.display())))?;
    for record in &report.records {
        let path = args.out.join(format!("instance_{:04}.csv", record.instance_id));
        write_file(&path, &residual_csv(record, &config.time_grid))?;
    }
    let records = report
        .records
        .iter()
        .cloned()
        .map(|mut r| {
            for f in &mut r.flows {
                f.rho_curve.clear();
            }
            r
        })
        .collect();
    let file = BenchSummaryFile {
        config: &config,
        summary: &report.summary,
        records,
    };
    write_file(&args.out.join("summary.json"), &(to_json(&file) + "\n"))?;
    Ok(Outcome::ok(to_json(&BenchStdout {
        out: args.out.display().to_string(),
        num_instances: report.summary.num_instances,
        instance_failures: report.summary.instance_failures,
        converged: report.summary.flows.iter().map(|f| (f.kind, f.converged)).collect(),
    })))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn axis_parsing() {
        let a = parse_axis("-3:3:121").unwrap();
        assert_eq!((a.min, a.max, a.steps), (-3.0, 3.0, 121));
        assert!(parse_axis("-3:3").is_err());
        assert!(parse_axis("3:-3:5").is_err());
        assert!(parse_axis("0:1:0").is_err());
    }

    #[test]
    fn column_names() {
        assert_eq!(gain_columns(1, 2), ["k_11", "k_12"]);
        assert_eq!(gain_columns(2, 10)[9], "k_1_10");
    }
}
