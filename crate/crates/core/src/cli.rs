//! Command-line front end.
//!
//! Every command reads a JSON run configuration (`"schema": 1`) and writes
//! JSON reports and CSV trajectories into the output directory. Exit codes:
//! 0 success, 1 I/O, 2 configuration, 3 violated model assumption,
//! 4 infeasible target, 5 simulation divergence.

use std::fmt::Write as _;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::error::Error;
use crate::fmt::{format_sig, round_sig};
use crate::linalg;
use crate::model::{
    assign_equilibrium, builtin_pendulum, Equilibrium, LinearModel, MechanicalModel,
    PlanarManipulator,
};
use crate::saddleform::{linearize_closed_loop, Gains, Rpw, SaddleForm};
use crate::sim::{
    simulate_linear, simulate_nonlinear, transient_metrics, OutputMetrics, SimConfig,
    TransientMetrics, Trajectory, DEFAULT_BAND, DEFAULT_DT,
};
use crate::spectral::{SpectralReport, C64};
use crate::tuning::{self, TuningMode, TuningOptions, TuningResult, TuningTarget};

pub const SCHEMA_VERSION: u32 = 1;

pub const EXIT_OK: i32 = 0;
pub const EXIT_IO: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_ASSUMPTION: i32 = 3;
pub const EXIT_INFEASIBLE: i32 = 4;
pub const EXIT_DIVERGENCE: i32 = 5;

/// Simulated horizon when the config gives none, and for demos.
pub const DEFAULT_HORIZON: f64 = 10.0;

#[derive(Debug, Parser)]
#[command(name = "phtune", version, about = "PID passivity-based control gain tuning")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Spectral analysis of the configured gains.
    Analyze(RunArgs),
    /// Synthesize gains for the configured target.
    Tune(RunArgs),
    /// Simulate the closed loop and report transient metrics.
    Simulate(RunArgs),
    /// Check the configured gains against the configured target.
    Verify(RunArgs),
    /// Reproduce the built-in manipulator experiments (rt, e1, e2).
    Demo(DemoArgs),
}

#[derive(Debug, Args)]
pub struct RunArgs {
    #[arg(long)]
    pub config: PathBuf,
    /// Output directory (default: current directory).
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, default_value_t = 1)]
    pub jobs: usize,
}

#[derive(Debug, Args)]
pub struct DemoArgs {
    /// Experiments to run; all when omitted.
    pub names: Vec<String>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, default_value_t = 1)]
    pub jobs: usize,
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: io::Error },
    #[error("config: {0}")]
    Config(String),
    #[error("infeasible: {0}")]
    Infeasible(String),
    #[error(transparent)]
    Core(#[from] Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Io { .. } => EXIT_IO,
            CliError::Config(_) => EXIT_CONFIG,
            CliError::Infeasible(_) => EXIT_INFEASIBLE,
            CliError::Core(e) => match e {
                Error::InvalidParameter { .. } | Error::InvalidArgument(_) | Error::Shape(_) => {
                    EXIT_CONFIG
                }
                Error::Infeasible { .. } => EXIT_INFEASIBLE,
                Error::Divergence { .. } => EXIT_DIVERGENCE,
                _ => EXIT_ASSUMPTION,
            },
        }
    }
}

type CliResult<T> = std::result::Result<T, CliError>;

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> CliError + '_ {
    move |source| CliError::Io {
        path: path.to_path_buf(),
        source,
    }
}

// ---------------------------------------------------------------- config

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub schema: u32,
    /// Builtin name, builtin object with parameters, or `{"linear": {...}}`.
    pub model: Value,
    pub q_star: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gains: Option<GainsSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target: Option<TargetSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sim: Option<SimSpec>,
    #[serde(default)]
    pub outputs: OutputsSpec,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(untagged, expecting = "a matrix as nested row arrays, or {\"diag\": [...]}")]
pub enum MatrixSpec {
    Diag { diag: Vec<f64> },
    Full(Vec<Vec<f64>>),
}

impl MatrixSpec {
    pub fn from_matrix(a: &DMatrix<f64>) -> Self {
        MatrixSpec::Full(a.row_iter().map(|r| r.iter().copied().collect()).collect())
    }

    fn to_matrix(&self, field: &str, size: usize) -> CliResult<DMatrix<f64>> {
        let a = match self {
            MatrixSpec::Diag { diag } => linalg::diag(diag),
            MatrixSpec::Full(rows) => {
                let cols = rows.first().map_or(0, Vec::len);
                if rows.iter().any(|r| r.len() != cols) {
                    return Err(CliError::Config(format!("{field}: ragged rows")));
                }
                DMatrix::from_fn(rows.len(), cols, |i, j| rows[i][j])
            }
        };
        if a.shape() != (size, size) {
            return Err(CliError::Config(format!(
                "{field}: is {}x{}, expected {size}x{size}",
                a.nrows(),
                a.ncols()
            )));
        }
        Ok(a)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GainsSpec {
    pub kp: MatrixSpec,
    pub ki: MatrixSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kd: Option<MatrixSpec>,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "snake_case")]
pub enum ModeSpec {
    NoOvershoot,
    DampingBand,
    RiseTime,
    Combined,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TargetSpec {
    pub mode: ModeSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub zeta_lo: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub zeta_hi: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t_r_max: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub base_kp: Option<MatrixSpec>,
    /// `Ki` seed; falls back to `gains.ki`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ki: Option<MatrixSpec>,
    /// Fixed `Kd`; falls back to `gains.kd`, then zero.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kd: Option<MatrixSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_scale: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_ki_scale: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_rise_iters: Option<usize>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimSpec {
    /// Initial state `(q, p)`; zero when omitted.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub x0: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dt: Option<f64>,
    #[serde(rename = "T", alias = "t_end", default, skip_serializing_if = "Option::is_none")]
    pub t_end: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub band: Option<f64>,
    #[serde(default)]
    pub check_convergence: bool,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputsSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub report: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trajectory: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub metrics: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tuned_config: Option<String>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelObject {
    builtin: Option<String>,
    mass_kg: Option<f64>,
    length_m: Option<f64>,
    gravity: Option<f64>,
    viscous_damping: Option<f64>,
    a1: Option<f64>,
    a2: Option<f64>,
    b: Option<f64>,
    joint_damping: Option<[f64; 2]>,
    linear: Option<LinearSpec>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct LinearSpec {
    mass: MatrixSpec,
    stiffness: MatrixSpec,
    damping: MatrixSpec,
    /// `n x m` input matrix as nested rows.
    input: Vec<Vec<f64>>,
}

pub fn parse_config(text: &str) -> CliResult<RunConfig> {
    let cfg: RunConfig =
        serde_json::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
    if cfg.schema != SCHEMA_VERSION {
        return Err(CliError::Config(format!(
            "schema: unsupported version {}, expected {SCHEMA_VERSION}",
            cfg.schema
        )));
    }
    Ok(cfg)
}

pub fn load_config(path: &Path) -> CliResult<RunConfig> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    parse_config(&text).map_err(|e| match e {
        CliError::Config(msg) => CliError::Config(format!("{}: {msg}", path.display())),
        other => other,
    })
}

pub fn build_model(spec: &Value) -> CliResult<Box<dyn MechanicalModel>> {
    let obj: ModelObject = match spec {
        Value::String(name) => ModelObject {
            builtin: Some(name.clone()),
            mass_kg: None,
            length_m: None,
            gravity: None,
            viscous_damping: None,
            a1: None,
            a2: None,
            b: None,
            joint_damping: None,
            linear: None,
        },
        other => serde_json::from_value(other.clone())
            .map_err(|e| CliError::Config(format!("model: {e}")))?,
    };
    let pendulum_fields = [obj.mass_kg, obj.length_m, obj.gravity, obj.viscous_damping];
    let manip_fields = [obj.a1, obj.a2, obj.b];
    let stray = |what: &str| CliError::Config(format!("model: parameters do not apply to {what}"));
    match (obj.builtin.as_deref(), obj.linear) {
        (Some(_), Some(_)) => Err(CliError::Config(
            "model: give either `builtin` or `linear`, not both".into(),
        )),
        (None, None) => Err(CliError::Config("model: missing `builtin` or `linear`".into())),
        (None, Some(lin)) => {
            if pendulum_fields.iter().chain(&manip_fields).any(Option::is_some)
                || obj.joint_damping.is_some()
            {
                return Err(stray("a linear model"));
            }
            let n = match &lin.mass {
                MatrixSpec::Diag { diag } => diag.len(),
                MatrixSpec::Full(rows) => rows.len(),
            };
            let mass = lin.mass.to_matrix("model.linear.mass", n)?;
            let stiffness = lin.stiffness.to_matrix("model.linear.stiffness", n)?;
            let damping = lin.damping.to_matrix("model.linear.damping", n)?;
            let m = lin.input.first().map_or(0, Vec::len);
            if lin.input.len() != n || lin.input.iter().any(|r| r.len() != m) {
                return Err(CliError::Config(format!(
                    "model.linear.input: expected {n} rows of equal length"
                )));
            }
            let input = DMatrix::from_fn(n, m, |i, j| lin.input[i][j]);
            Ok(Box::new(LinearModel::new(mass, stiffness, damping, input)?))
        }
        (Some("manipulator2dof"), None) => {
            if pendulum_fields.iter().any(Option::is_some) {
                return Err(stray("manipulator2dof"));
            }
            let d = PlanarManipulator::default();
            Ok(Box::new(PlanarManipulator::new(
                obj.a1.unwrap_or(d.a1),
                obj.a2.unwrap_or(d.a2),
                obj.b.unwrap_or(d.b),
                obj.joint_damping.unwrap_or(d.joint_damping),
            )))
        }
        (Some("pendulum"), None) => {
            if manip_fields.iter().any(Option::is_some) || obj.joint_damping.is_some() {
                return Err(stray("pendulum"));
            }
            Ok(Box::new(builtin_pendulum(
                obj.mass_kg.unwrap_or(1.0),
                obj.length_m.unwrap_or(1.0),
                obj.gravity.unwrap_or(1.0),
                obj.viscous_damping.unwrap_or(0.0),
            )?))
        }
        (Some(other), None) => Err(CliError::Config(format!(
            "model.builtin: unknown model `{other}` (expected manipulator2dof or pendulum)"
        ))),
    }
}

/// A configuration resolved against its model.
pub struct Resolved {
    pub cfg: RunConfig,
    pub model: Box<dyn MechanicalModel>,
    pub q_star: DVector<f64>,
}

impl Resolved {
    pub fn new(cfg: RunConfig) -> CliResult<Self> {
        let model = build_model(&cfg.model)?;
        if cfg.q_star.len() != model.dof() {
            return Err(CliError::Config(format!(
                "q_star: has length {}, model has {} degrees of freedom",
                cfg.q_star.len(),
                model.dof()
            )));
        }
        let q_star = DVector::from_column_slice(&cfg.q_star);
        Ok(Self { cfg, model, q_star })
    }

    fn m(&self) -> usize {
        self.model.inputs()
    }

    pub fn gains(&self) -> CliResult<Gains> {
        let spec = self
            .cfg
            .gains
            .as_ref()
            .ok_or_else(|| CliError::Config("gains: required for this command".into()))?;
        let m = self.m();
        let kp = spec.kp.to_matrix("gains.kp", m)?;
        let ki = spec.ki.to_matrix("gains.ki", m)?;
        let kd = match &spec.kd {
            Some(kd) => kd.to_matrix("gains.kd", m)?,
            None => DMatrix::zeros(m, m),
        };
        Gains::new(kp, ki, kd).map_err(|e| CliError::Config(format!("gains: {e}")))
    }

    pub fn target(&self) -> CliResult<(TuningTarget, TuningOptions)> {
        let spec = self
            .cfg
            .target
            .as_ref()
            .ok_or_else(|| CliError::Config("target: required for this command".into()))?;
        let m = self.m();
        let gains = self.cfg.gains.as_ref();
        let opt_matrix = |field: &str, own: &Option<MatrixSpec>, fallback: Option<&MatrixSpec>| {
            own.as_ref()
                .or(fallback)
                .map(|s| s.to_matrix(field, m))
                .transpose()
        };
        let mode = match spec.mode {
            ModeSpec::NoOvershoot => TuningMode::NoOvershoot,
            ModeSpec::DampingBand => TuningMode::DampingBand,
            ModeSpec::RiseTime => TuningMode::RiseTime,
            ModeSpec::Combined => TuningMode::Combined,
        };
        let target = TuningTarget {
            mode,
            zeta_lo: spec.zeta_lo,
            zeta_hi: spec.zeta_hi,
            t_r_max: spec.t_r_max,
            base_kp: opt_matrix("target.base_kp", &spec.base_kp, None)?,
            base_ki: opt_matrix("target.ki", &spec.ki, gains.map(|g| &g.ki))?,
            base_kd: opt_matrix("target.kd", &spec.kd, gains.and_then(|g| g.kd.as_ref()))?,
        };
        target
            .validate()
            .map_err(|e| CliError::Config(format!("target: {e}")))?;
        let mut opts = TuningOptions::default();
        if let Some(s) = spec.max_scale {
            opts.max_scale = s;
        }
        if let Some(s) = spec.max_ki_scale {
            opts.max_ki_scale = s;
        }
        if let Some(k) = spec.max_rise_iters {
            opts.max_rise_iters = k;
        }
        Ok((target, opts))
    }

    pub fn sim_config(&self) -> CliResult<(DVector<f64>, SimConfig, f64)> {
        let spec = self
            .cfg
            .sim
            .as_ref()
            .ok_or_else(|| CliError::Config("sim: required for simulate".into()))?;
        let n = self.model.dof();
        let x0 = match &spec.x0 {
            Some(x) if x.len() != 2 * n => {
                return Err(CliError::Config(format!(
                    "sim.x0: has length {}, expected {}",
                    x.len(),
                    2 * n
                )))
            }
            Some(x) => DVector::from_column_slice(x),
            None => DVector::zeros(2 * n),
        };
        let mut cfg = SimConfig::new(
            spec.dt.unwrap_or(DEFAULT_DT),
            spec.t_end.unwrap_or(DEFAULT_HORIZON),
        );
        cfg.check_convergence = spec.check_convergence;
        Ok((x0, cfg, spec.band.unwrap_or(DEFAULT_BAND)))
    }
}

// ---------------------------------------------------------------- reports

fn num(x: f64) -> Value {
    if x.is_finite() {
        json!(round_sig(x))
    } else {
        Value::String(format_sig(x))
    }
}

fn nums(xs: impl IntoIterator<Item = f64>) -> Value {
    Value::Array(xs.into_iter().map(num).collect())
}

fn complex(z: C64) -> Value {
    json!({"re": num(z.re), "im": num(z.im)})
}

fn matrix(a: &DMatrix<f64>) -> Value {
    Value::Array(a.row_iter().map(|r| nums(r.iter().copied())).collect())
}

/// Full-precision matrix, for values that are fed back as inputs.
fn exact_matrix(a: &DMatrix<f64>) -> Value {
    json!(a.row_iter().map(|r| r.iter().copied().collect::<Vec<_>>()).collect::<Vec<_>>())
}

fn gains_json(g: &Gains) -> Value {
    json!({"kp": exact_matrix(g.kp()), "ki": exact_matrix(g.ki()), "kd": exact_matrix(g.kd())})
}

fn sym_block(a: &DMatrix<f64>) -> Value {
    json!({"matrix": matrix(a), "eigenvalues": nums(linalg::sym_eigenvalues(a))})
}

pub fn spectral_json(rpw: &Rpw, report: &SpectralReport) -> Value {
    let p_max = linalg::lambda_max(&rpw.p);
    let w_max = linalg::lambda_max(&rpw.w);
    let r_min = linalg::lambda_min(&rpw.r);
    let z = report.zeta;
    json!({
        "R": sym_block(&rpw.r),
        "P": sym_block(&rpw.p),
        "W": sym_block(&rpw.w),
        "eigenvalues": report.eigenvalues.iter().map(|&z| complex(z)).collect::<Vec<_>>(),
        "closed_loop_poles": report.eigenvalues.iter().map(|&z| complex(-z)).collect::<Vec<_>>(),
        "damping_ratios": nums(report.damping_ratios.iter().copied()),
        "marginal": report.marginal,
        "im_tol": num(report.im_tol),
        "scenario": report.scenario,
        "prop1": {
            "satisfied": report.prop1.satisfied,
            "margin": num(report.prop1.margin),
            "lambda_min_r_sq": num(r_min * r_min),
            "four_lambda_max_p_w": num(4.0 * p_max * w_max),
        },
        "zeta": {
            "zeta_min": num(z.zeta_min),
            "zeta_max": num(z.zeta_max),
            "sqrt_zeta_min": num(z.zeta_min.sqrt()),
            "sqrt_zeta_max": num(z.zeta_max.sqrt()),
        },
        "rise_time": {
            "re_lambda_u": num(report.rise_time.re_lambda_u),
            "t_ru": num(report.rise_time.t_ru),
            "fallback": report.rise_time.fallback,
        },
        "corollary1": {
            "complex_re_lo": num(report.corollary1.complex_re_lo),
            "complex_re_hi": num(report.corollary1.complex_re_hi),
            "real_lo": num(report.corollary1.real_lo),
            "real_hi": num(report.corollary1.real_hi),
            "real_lo_advisory": report.corollary1.real_lo_advisory,
        },
    })
}

fn header(command: &str, model: &dyn MechanicalModel, q_star: &DVector<f64>) -> Value {
    json!({
        "schema": SCHEMA_VERSION,
        "command": command,
        "model": model.name(),
        "q_star": q_star.iter().copied().collect::<Vec<_>>(),
    })
}

fn equilibrium_json(eq: &Equilibrium) -> Value {
    json!({"kappa": nums(eq.kappa.iter().copied()), "u_star": nums(eq.u_star.iter().copied())})
}

fn merge(mut base: Value, extra: Value) -> Value {
    if let (Value::Object(a), Value::Object(b)) = (&mut base, extra) {
        a.extend(b);
    }
    base
}

/// Report for fixed gains: header, gains, equilibrium and spectral analysis.
pub fn analysis_report(
    command: &str,
    model: &dyn MechanicalModel,
    gains: &Gains,
    eq: &Equilibrium,
) -> crate::Result<(Value, SpectralReport)> {
    let form = SaddleForm::build(model, gains, eq)?;
    let report = SpectralReport::from_form(&form)?;
    let body = json!({
        "gains": gains_json(gains),
        "equilibrium": equilibrium_json(eq),
        "analysis": spectral_json(&form.rpw, &report),
    });
    Ok((merge(header(command, model, &eq.q_star), body), report))
}

fn tuning_json(result: &TuningResult, target: &TuningTarget, reason: Option<&str>) -> Value {
    json!({
        "target": {
            "mode": format!("{:?}", target.mode),
            "zeta_lo": target.zeta_lo,
            "zeta_hi": target.zeta_hi,
            "t_r_max": target.t_r_max,
        },
        "feasible": result.feasible,
        "margin": num(result.margin),
        "iterations": result.iterations,
        "warnings": result.warnings,
        "infeasibility": reason,
        "search_trace": result
            .search_trace
            .iter()
            .map(|&(c, m)| json!([num(c), num(m)]))
            .collect::<Vec<_>>(),
    })
}

fn metrics_json(m: &TransientMetrics) -> Value {
    json!({
        "band": m.band,
        "outputs": m.outputs.iter().map(output_json).collect::<Vec<_>>(),
    })
}

fn output_json(o: &OutputMetrics) -> Value {
    json!({
        "applicable": o.applicable,
        "step": num(o.step),
        "rise_time": o.rise_time.map(num),
        "overshoot_pct": num(o.overshoot_pct),
        "peak_time": num(o.peak_time),
        "oscillation_count": o.oscillation_count,
        "steady_state_value": num(o.steady_state_value),
        "settled": o.settled,
    })
}

fn write_json(path: &Path, value: &Value) -> CliResult<()> {
    let text = serde_json::to_string_pretty(value).expect("serializable report");
    fs::write(path, text + "\n").map_err(io_err(path))
}

fn write_csv(path: &Path, traj: &Trajectory) -> CliResult<()> {
    let file = fs::File::create(path).map_err(io_err(path))?;
    traj.write_csv(io::BufWriter::new(file)).map_err(io_err(path))
}

fn output_path(out: &Path, configured: Option<&String>, default: &str) -> PathBuf {
    out.join(configured.map_or(default, String::as_str))
}

// ---------------------------------------------------------------- commands

/// Summary printed to stdout after a successful command.
pub type Summary = String;

pub fn run(cli: Cli) -> CliResult<Summary> {
    match cli.command {
        Command::Analyze(a) => cmd_analyze(&load_config(&a.config)?, &out_dir(&a.out)?),
        Command::Tune(a) => cmd_tune(&load_config(&a.config)?, &out_dir(&a.out)?),
        Command::Simulate(a) => cmd_simulate(&load_config(&a.config)?, &out_dir(&a.out)?),
        Command::Verify(a) => cmd_verify(&load_config(&a.config)?, &out_dir(&a.out)?),
        Command::Demo(a) => cmd_demo(&a.names, a.out.as_deref(), a.jobs),
    }
}

fn out_dir(out: &Option<PathBuf>) -> CliResult<PathBuf> {
    let dir = out.clone().unwrap_or_else(|| PathBuf::from("."));
    fs::create_dir_all(&dir).map_err(io_err(&dir))?;
    Ok(dir)
}

pub fn cmd_analyze(cfg: &RunConfig, out: &Path) -> CliResult<Summary> {
    let r = Resolved::new(cfg.clone())?;
    let gains = r.gains()?;
    let eq = assign_equilibrium(r.model.as_ref(), &r.q_star, gains.ki())?;
    let (value, report) = analysis_report("analyze", r.model.as_ref(), &gains, &eq)?;
    let path = output_path(out, cfg.outputs.report.as_ref(), "analyze_report.json");
    write_json(&path, &value)?;
    Ok(format!(
        "scenario {:?}, t_ru {} s, prop1 {} (margin {}); report {}",
        report.scenario,
        format_sig(report.rise_time.t_ru),
        if report.prop1.satisfied { "satisfied" } else { "not satisfied" },
        format_sig(report.prop1.margin),
        path.display()
    ))
}

pub fn cmd_tune(cfg: &RunConfig, out: &Path) -> CliResult<Summary> {
    let r = Resolved::new(cfg.clone())?;
    let (target, opts) = r.target()?;
    let (result, reason) = match tuning::tune(r.model.as_ref(), &r.q_star, &target, &opts) {
        Ok(res) => (res, None),
        Err(Error::Infeasible { reason, result }) => (*result, Some(reason)),
        Err(e) => return Err(e.into()),
    };
    let (value, _) = analysis_report("tune", r.model.as_ref(), &result.gains, &result.equilibrium)?;
    let value = merge(value, json!({"tuning": tuning_json(&result, &target, reason.as_deref())}));
    let path = output_path(out, cfg.outputs.report.as_ref(), "tune_report.json");
    write_json(&path, &value)?;

    let mut tuned = cfg.clone();
    tuned.gains = Some(GainsSpec {
        kp: MatrixSpec::from_matrix(result.gains.kp()),
        ki: MatrixSpec::from_matrix(result.gains.ki()),
        kd: Some(MatrixSpec::from_matrix(result.gains.kd())),
    });
    tuned.outputs = OutputsSpec::default();
    let tuned_path = output_path(out, cfg.outputs.tuned_config.as_ref(), "tuned_config.json");
    write_json(&tuned_path, &serde_json::to_value(&tuned).expect("serializable config"))?;

    match reason {
        Some(reason) => Err(CliError::Infeasible(format!("{reason}; report {}", path.display()))),
        None => {
            let mut s = format!(
                "feasible, margin {}, Kp diag {:?}; report {}, config {}",
                format_sig(result.margin),
                result.gains.kp().diagonal().iter().map(|&x| format_sig(x)).collect::<Vec<_>>(),
                path.display(),
                tuned_path.display()
            );
            for w in &result.warnings {
                let _ = write!(s, "\nwarning: {w}");
            }
            Ok(s)
        }
    }
}

pub fn cmd_verify(cfg: &RunConfig, out: &Path) -> CliResult<Summary> {
    let r = Resolved::new(cfg.clone())?;
    let gains = r.gains()?;
    let (target, _) = r.target()?;
    let eq = assign_equilibrium(r.model.as_ref(), &r.q_star, gains.ki())?;
    let result = tuning::verify_gains(r.model.as_ref(), &eq, &gains, &target)?;
    let (value, _) = analysis_report("verify", r.model.as_ref(), &gains, &eq)?;
    let value = merge(value, json!({"verification": tuning_json(&result, &target, None)}));
    let path = output_path(out, cfg.outputs.report.as_ref(), "verify_report.json");
    write_json(&path, &value)?;
    if result.feasible {
        Ok(format!("target met, margin {}; report {}", format_sig(result.margin), path.display()))
    } else {
        Err(CliError::Infeasible(format!(
            "target not met, margin {}; report {}",
            format_sig(result.margin),
            path.display()
        )))
    }
}

/// Outcome of one closed-loop simulation with its linearized companion.
pub struct SimOutcome {
    pub report: SpectralReport,
    pub trajectory: Trajectory,
    pub nonlinear: TransientMetrics,
    pub linearized: TransientMetrics,
    pub metrics: Value,
}

pub fn run_simulation(
    model: &dyn MechanicalModel,
    gains: &Gains,
    eq: &Equilibrium,
    x0: &DVector<f64>,
    cfg: &SimConfig,
    band: f64,
) -> crate::Result<SimOutcome> {
    let n = model.dof();
    let form = SaddleForm::build(model, gains, eq)?;
    let report = SpectralReport::from_form(&form)?;
    let trajectory = simulate_nonlinear(model, gains, eq, x0, cfg)?;
    let nonlinear = transient_metrics(&trajectory, &eq.q_star, band)?;

    let a = linearize_closed_loop(model, gains, eq)?;
    let mut offset = x0.clone();
    for i in 0..n {
        offset[i] -= eq.q_star[i];
    }
    let lin = simulate_linear(&a, &offset, cfg.dt, cfg.t_end)?;
    let linearized = transient_metrics(&lin, &DVector::zeros(n), band)?;

    let end = trajectory.q.last().expect("non-empty trajectory");
    let h0 = trajectory.hd[0];
    let max_rise = trajectory
        .hd
        .windows(2)
        .map(|w| w[1] - w[0])
        .fold(f64::NEG_INFINITY, f64::max);
    let metrics = merge(
        header("simulate", model, &eq.q_star),
        json!({
            "dt": cfg.dt,
            "T": cfg.t_end,
            "x0": x0.iter().copied().collect::<Vec<_>>(),
            "t_ru_nominal": num(report.rise_time.t_ru),
            "scenario": report.scenario,
            "nonlinear": merge(metrics_json(&nonlinear), json!({
                "final_q": nums(end.iter().copied()),
                "final_error": num((end - &eq.q_star).amax()),
                "hd_initial": num(h0),
                "hd_final": num(*trajectory.hd.last().expect("non-empty")),
                "hd_max_step_increase": num(max_rise),
                "refinement_error": trajectory.refinement_error.map(num),
            })),
            "linearized": metrics_json(&linearized),
        }),
    );
    Ok(SimOutcome {
        report,
        trajectory,
        nonlinear,
        linearized,
        metrics,
    })
}

pub fn cmd_simulate(cfg: &RunConfig, out: &Path) -> CliResult<Summary> {
    let r = Resolved::new(cfg.clone())?;
    let gains = r.gains()?;
    let (x0, sim_cfg, band) = r.sim_config()?;
    let eq = assign_equilibrium(r.model.as_ref(), &r.q_star, gains.ki())?;
    let outcome = run_simulation(r.model.as_ref(), &gains, &eq, &x0, &sim_cfg, band)?;
    let csv = output_path(out, cfg.outputs.trajectory.as_ref(), "trajectory.csv");
    write_csv(&csv, &outcome.trajectory)?;
    let metrics = output_path(out, cfg.outputs.metrics.as_ref(), "metrics.json");
    write_json(&metrics, &outcome.metrics)?;
    let rise: Vec<String> = outcome
        .nonlinear
        .outputs
        .iter()
        .map(|o| o.rise_time.map_or("-".into(), format_sig))
        .collect();
    Ok(format!(
        "nominal t_ru {} s, simulated rise times {:?}; trajectory {}, metrics {}",
        format_sig(outcome.report.rise_time.t_ru),
        rise,
        csv.display(),
        metrics.display()
    ))
}

// ---------------------------------------------------------------- demos

pub const DEMO_NAMES: [&str; 3] = ["rt", "e1", "e2"];

/// Gain sets for the built-in manipulator at `q⋆ = (0.6, 0.8)`.
pub fn demo_gains(name: &str) -> Option<Gains> {
    let g = match name {
        "rt" => Gains::diagonal(&[1.0, 0.5], &[50.0, 30.0], &[0.0, 0.0]),
        "e1" => Gains::diagonal(&[7.3972, 9.2], &[35.0, 20.0], &[0.0, 0.0]),
        "e2" => Gains::diagonal(&[3.9136, 4.1710], &[50.0, 45.0], &[0.08, 0.15]),
        _ => return None,
    };
    Some(g.expect("demo gains are valid"))
}

pub fn demo_config(name: &str) -> Option<RunConfig> {
    let g = demo_gains(name)?;
    Some(RunConfig {
        schema: SCHEMA_VERSION,
        model: Value::String("manipulator2dof".into()),
        q_star: vec![0.6, 0.8],
        gains: Some(GainsSpec {
            kp: MatrixSpec::Diag { diag: g.kp().diagonal().iter().copied().collect() },
            ki: MatrixSpec::Diag { diag: g.ki().diagonal().iter().copied().collect() },
            kd: Some(MatrixSpec::Diag { diag: g.kd().diagonal().iter().copied().collect() }),
        }),
        target: None,
        sim: Some(SimSpec {
            x0: None,
            dt: None,
            t_end: None,
            band: None,
            check_convergence: false,
        }),
        outputs: OutputsSpec::default(),
    })
}

struct DemoRow {
    name: String,
    report: SpectralReport,
    nonlinear: TransientMetrics,
    linearized: TransientMetrics,
}

fn run_demo(name: &str, out: Option<&Path>) -> CliResult<DemoRow> {
    let cfg = demo_config(name).expect("known demo");
    let r = Resolved::new(cfg)?;
    let gains = r.gains()?;
    let (x0, sim_cfg, band) = r.sim_config()?;
    let eq = assign_equilibrium(r.model.as_ref(), &r.q_star, gains.ki())?;
    let outcome = run_simulation(r.model.as_ref(), &gains, &eq, &x0, &sim_cfg, band)?;
    if let Some(dir) = out {
        let (report, _) = analysis_report("demo", r.model.as_ref(), &gains, &eq)?;
        write_json(&dir.join(format!("demo_{name}_report.json")), &report)?;
        write_json(&dir.join(format!("demo_{name}_metrics.json")), &outcome.metrics)?;
        write_csv(&dir.join(format!("demo_{name}_trajectory.csv")), &outcome.trajectory)?;
    }
    Ok(DemoRow {
        name: name.to_string(),
        report: outcome.report,
        nonlinear: outcome.nonlinear,
        linearized: outcome.linearized,
    })
}

fn fmt_opt(x: Option<f64>) -> String {
    x.map_or_else(|| "-".into(), |v| format!("{v:.3}"))
}

fn demo_table(rows: &[DemoRow]) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        "{:<4} {:>8} {:>8} {:>6} {:>17} {:>17} {:>15} {:>9}",
        "set", "nominal", "scenario", "prop1", "sim rise q1/q2", "lin rise q1/q2", "overshoot %", "osc"
    );
    for row in rows {
        let pair = |m: &TransientMetrics, f: &dyn Fn(&OutputMetrics) -> String| {
            m.outputs.iter().map(f).collect::<Vec<_>>().join("/")
        };
        let _ = writeln!(
            s,
            "{:<4} {:>8.3} {:>8} {:>6} {:>17} {:>17} {:>15} {:>9}",
            row.name.to_uppercase(),
            row.report.rise_time.t_ru,
            format!("{:?}", row.report.scenario),
            if row.report.prop1.satisfied { "yes" } else { "no" },
            pair(&row.nonlinear, &|o| fmt_opt(o.rise_time)),
            pair(&row.linearized, &|o| fmt_opt(o.rise_time)),
            pair(&row.nonlinear, &|o| format!("{:.2}", o.overshoot_pct)),
            pair(&row.nonlinear, &|o| o.oscillation_count.to_string()),
        );
    }
    s.pop();
    s
}

pub fn cmd_demo(names: &[String], out: Option<&Path>, jobs: usize) -> CliResult<Summary> {
    let names: Vec<String> = if names.is_empty() {
        DEMO_NAMES.iter().map(|s| s.to_string()).collect()
    } else {
        names.iter().map(|s| s.to_lowercase()).collect()
    };
    if let Some(bad) = names.iter().find(|n| !DEMO_NAMES.contains(&n.as_str())) {
        return Err(CliError::Config(format!(
            "demo: unknown experiment `{bad}` (expected one of rt, e1, e2)"
        )));
    }
    if let Some(dir) = out {
        fs::create_dir_all(dir).map_err(io_err(dir))?;
    }
    let jobs = jobs.clamp(1, names.len());
    let mut slots: Vec<Option<CliResult<DemoRow>>> = (0..names.len()).map(|_| None).collect();
    std::thread::scope(|scope| {
        let handles: Vec<_> = (0..jobs)
            .map(|worker| {
                let names = &names;
                scope.spawn(move || {
                    (worker..names.len())
                        .step_by(jobs)
                        .map(|i| (i, run_demo(&names[i], out)))
                        .collect::<Vec<_>>()
                })
            })
            .collect();
        for h in handles {
            for (i, res) in h.join().expect("demo worker panicked") {
                slots[i] = Some(res);
            }
        }
    });
    let rows = slots
        .into_iter()
        .map(|s| s.expect("every demo ran"))
        .collect::<CliResult<Vec<_>>>()?;
    Ok(demo_table(&rows))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn base() -> Value {
        json!({
            "schema": 1,
            "model": "manipulator2dof",
            "q_star": [0.6, 0.8],
            "gains": {"kp": {"diag": [7.3972, 9.2]}, "ki": [[35.0, 0.0], [0.0, 20.0]]},
        })
    }

    #[test]
    fn parses_minimal_config() {
        let cfg = parse_config(&base().to_string()).unwrap();
        let r = Resolved::new(cfg).unwrap();
        let g = r.gains().unwrap();
        assert_eq!(g.kp()[(1, 1)], 9.2);
        assert_eq!(g.kd(), &DMatrix::zeros(2, 2));
    }

    #[test]
    fn rejects_bad_configs() {
        let code = |v: Value| {
            let e = parse_config(&v.to_string()).and_then(Resolved::new).and_then(|r| r.gains());
            e.err().map(|e| e.exit_code())
        };
        let mut v = base();
        v["schema"] = json!(2);
        assert_eq!(code(v), Some(EXIT_CONFIG));
        let mut v = base();
        v["extra"] = json!(true);
        assert_eq!(code(v), Some(EXIT_CONFIG));
        let mut v = base();
        v["q_star"] = json!([0.6]);
        assert_eq!(code(v), Some(EXIT_CONFIG));
        let mut v = base();
        v["model"] = json!("triple_pendulum");
        assert_eq!(code(v), Some(EXIT_CONFIG));
        let mut v = base();
        v["model"] = json!({"builtin": "pendulum", "a1": 1.0});
        assert_eq!(code(v), Some(EXIT_CONFIG));
        let mut v = base();
        v["gains"]["kp"] = json!([[1.0, 2.0], [3.0]]);
        assert_eq!(code(v), Some(EXIT_CONFIG));
        let mut v = base();
        v["gains"]["kp"] = json!({"diag": [-1.0, 1.0]});
        assert_eq!(code(v), Some(EXIT_CONFIG));
        assert!(matches!(parse_config("{"), Err(CliError::Config(m)) if m.contains("line")));
    }

    #[test]
    fn inline_linear_model() {
        let v = json!({
            "schema": 1,
            "model": {"linear": {
                "mass": {"diag": [1.0, 1.0]},
                "stiffness": [[1.0, 0.0], [0.0, 1.0]],
                "damping": {"diag": [0.0, 0.0]},
                "input": [[1.0], [0.0]],
            }},
            "q_star": [0.0, 0.0],
        });
        let r = Resolved::new(parse_config(&v.to_string()).unwrap()).unwrap();
        assert_eq!((r.model.dof(), r.model.inputs()), (2, 1));
    }

    #[test]
    fn target_seeds_fall_back_to_gains() {
        let mut v = base();
        v["target"] = json!({"mode": "damping_band", "zeta_lo": 0.4, "zeta_hi": 0.8});
        let r = Resolved::new(parse_config(&v.to_string()).unwrap()).unwrap();
        let (t, _) = r.target().unwrap();
        assert_eq!(t.base_ki, Some(linalg::diag(&[35.0, 20.0])));
        assert_eq!(t.base_kd, None);
        v["target"] = json!({"mode": "damping_band", "zeta_lo": 0.4});
        let r = Resolved::new(parse_config(&v.to_string()).unwrap()).unwrap();
        assert_eq!(r.target().err().map(|e| e.exit_code()), Some(EXIT_CONFIG));
    }

    #[test]
    fn exit_code_mapping() {
        let core = |e: Error| CliError::Core(e).exit_code();
        assert_eq!(core(Error::Divergence { step: 3 }), EXIT_DIVERGENCE);
        assert_eq!(
            core(Error::AssumptionFailure { matrix: "P", eigenvalue: -1.0 }),
            EXIT_ASSUMPTION
        );
        assert_eq!(core(Error::Shape("x".into())), EXIT_CONFIG);
        assert_eq!(CliError::Infeasible("x".into()).exit_code(), EXIT_INFEASIBLE);
    }

    #[test]
    fn demo_configs_resolve() {
        for name in DEMO_NAMES {
            let r = Resolved::new(demo_config(name).unwrap()).unwrap();
            assert_eq!(r.gains().unwrap(), demo_gains(name).unwrap());
        }
        assert!(demo_config("e3").is_none());
    }

    #[test]
    fn numbers_are_rounded() {
        assert_eq!(num(1.0 / 3.0), json!(0.333333333333));
        assert_eq!(num(f64::INFINITY), json!("inf"));
    }
}
