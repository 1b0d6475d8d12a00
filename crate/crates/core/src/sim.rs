//! Closed-loop simulation and transient-response metrics.

use std::io::{self, Write};

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::fmt::format_sig;
use crate::model::{Equilibrium, MechanicalModel};
use crate::saddleform::Gains;

pub const DEFAULT_DT: f64 = 1e-3;

/// Default rise-time band (98% of the commanded step).
pub const DEFAULT_BAND: f64 = 0.98;

/// Sign changes of the tracking error inside this fraction of the step are ignored.
pub const OSCILLATION_DEADBAND: f64 = 1e-3;

/// Settling check: peak-to-peak over the final 10% of samples below this fraction of the step.
pub const SETTLE_FRACTION: f64 = 5e-3;

struct Evaluation {
    u: DVector<f64>,
    qdot: DVector<f64>,
    pdot: DVector<f64>,
}

fn evaluate(
    model: &dyn MechanicalModel,
    gains: &Gains,
    eq: &Equilibrium,
    q: &DVector<f64>,
    p: &DVector<f64>,
) -> Evaluation {
    let n = model.dof();
    let g = model.input_matrix();
    let mass = model.mass(q);
    let lu = mass.clone().lu();
    let qdot = lu.solve(p).unwrap_or_else(|| DVector::from_element(n, f64::NAN));

    // ∂H/∂q_i = ∂V/∂q_i - ½ q̇ᵀ (∂M/∂q_i) q̇
    let mut grad_h = model.potential_grad(q);
    for i in 0..n {
        grad_h[i] -= 0.5 * qdot.dot(&(model.mass_partial(q, i) * &qdot));
    }
    let drift = -grad_h - model.damping(q, p) * &qdot;

    // ẏ = Gᵀ(-M⁻¹ Ṁ q̇ + M⁻¹(drift + G u)); collect the part free of u.
    let mdot_qdot = model.mass_directional(q, &qdot) * &qdot;
    let free = lu
        .solve(&(&drift - mdot_qdot))
        .unwrap_or_else(|| DVector::from_element(n, f64::NAN));
    let ydot_free = g.transpose() * free;
    let y = g.transpose() * &qdot;

    let rhs = -(gains.kp() * &y)
        - gains.ki() * (g.transpose() * q + &eq.kappa)
        - gains.kd() * ydot_free;
    let m_inv_g = lu
        .solve(g)
        .unwrap_or_else(|| DMatrix::from_element(n, g.ncols(), f64::NAN));
    let psi = DMatrix::<f64>::identity(g.ncols(), g.ncols()) + gains.kd() * g.transpose() * m_inv_g;
    let u = psi
        .lu()
        .solve(&rhs)
        .unwrap_or_else(|| DVector::from_element(g.ncols(), f64::NAN));
    let pdot = drift + g * &u;
    Evaluation { u, qdot, pdot }
}

/// PID-PBC input `u = -Kp y - Ki(Gᵀq + κ) - Kd ẏ` with `ẏ` eliminated exactly
/// through `Ψ(q) = I + Kd Gᵀ M⁻¹(q) G`.
pub fn control_input(
    model: &dyn MechanicalModel,
    gains: &Gains,
    eq: &Equilibrium,
    q: &DVector<f64>,
    p: &DVector<f64>,
) -> DVector<f64> {
    evaluate(model, gains, eq, q, p).u
}

/// Closed-loop vector field `(q̇, ṗ)` at `x = (q, p)`.
pub fn closed_loop_field(
    model: &dyn MechanicalModel,
    gains: &Gains,
    eq: &Equilibrium,
    x: &DVector<f64>,
) -> DVector<f64> {
    let n = model.dof();
    let q = x.rows(0, n).into_owned();
    let p = x.rows(n, n).into_owned();
    let e = evaluate(model, gains, eq, &q, &p);
    let mut out = DVector::zeros(2 * n);
    out.rows_mut(0, n).copy_from(&e.qdot);
    out.rows_mut(n, n).copy_from(&e.pdot);
    out
}

/// Shaped energy `H + ½‖Gᵀq + κ‖²_Ki + ½‖y‖²_Kd`.
pub fn desired_hamiltonian(
    model: &dyn MechanicalModel,
    gains: &Gains,
    eq: &Equilibrium,
    q: &DVector<f64>,
    p: &DVector<f64>,
) -> f64 {
    let g = model.input_matrix();
    let qdot = model.mass(q).lu().solve(p).unwrap_or_else(|| p.clone());
    let e = g.transpose() * q + &eq.kappa;
    let y = g.transpose() * &qdot;
    0.5 * p.dot(&qdot)
        + model.potential(q)
        + 0.5 * e.dot(&(gains.ki() * &e))
        + 0.5 * y.dot(&(gains.kd() * &y))
}

/// Uniformly sampled state history.
///
/// Linear runs have no gains attached: their `u` entries are empty vectors
/// and `hd` is all zeros.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub t: Vec<f64>,
    pub q: Vec<DVector<f64>>,
    pub p: Vec<DVector<f64>>,
    pub u: Vec<DVector<f64>>,
    pub hd: Vec<f64>,
    /// Relative change of the final state when `dt` is halved, if requested.
    pub refinement_error: Option<f64>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }

    pub fn final_state(&self) -> DVector<f64> {
        let q = self.q.last().expect("non-empty trajectory");
        let p = self.p.last().expect("non-empty trajectory");
        DVector::from_iterator(q.len() + p.len(), q.iter().chain(p.iter()).copied())
    }

    /// Output `i` of `q` as a time series.
    pub fn q_series(&self, i: usize) -> Vec<f64> {
        self.q.iter().map(|q| q[i]).collect()
    }

    /// CSV with header `t,q1..qn,p1..pn,u1..um,Hd`.
    pub fn write_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        let n = self.q.first().map_or(0, |q| q.len());
        let m = self.u.first().map_or(0, |u| u.len());
        let mut header = vec!["t".to_string()];
        header.extend((1..=n).map(|i| format!("q{i}")));
        header.extend((1..=n).map(|i| format!("p{i}")));
        header.extend((1..=m).map(|i| format!("u{i}")));
        header.push("Hd".into());
        writeln!(out, "{}", header.join(","))?;
        for k in 0..self.len() {
            let row: Vec<String> = std::iter::once(self.t[k])
                .chain(self.q[k].iter().copied())
                .chain(self.p[k].iter().copied())
                .chain(self.u[k].iter().copied())
                .chain(std::iter::once(self.hd[k]))
                .map(format_sig)
                .collect();
            writeln!(out, "{}", row.join(","))?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimConfig {
    pub dt: f64,
    pub t_end: f64,
    /// Re-run at `dt/2` and record the relative final-state change.
    pub check_convergence: bool,
}

impl SimConfig {
    pub fn new(dt: f64, t_end: f64) -> Self {
        Self {
            dt,
            t_end,
            check_convergence: false,
        }
    }

    fn steps(&self) -> Result<usize> {
        if !(self.dt > 0.0) || !self.dt.is_finite() {
            return Err(Error::InvalidArgument(format!("dt must be positive, got {}", self.dt)));
        }
        if !(self.t_end >= self.dt) || !self.t_end.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "horizon {} must be at least dt = {}",
                self.t_end, self.dt
            )));
        }
        Ok((self.t_end / self.dt).round() as usize)
    }
}

fn split(x: &DVector<f64>, n: usize) -> (DVector<f64>, DVector<f64>) {
    (x.rows(0, n).into_owned(), x.rows(n, n).into_owned())
}

fn integrate_rk4(
    model: &dyn MechanicalModel,
    gains: &Gains,
    eq: &Equilibrium,
    x0: &DVector<f64>,
    dt: f64,
    steps: usize,
) -> Result<Trajectory> {
    let n = model.dof();
    let f = |x: &DVector<f64>| closed_loop_field(model, gains, eq, x);
    let mut traj = Trajectory {
        t: Vec::with_capacity(steps + 1),
        q: Vec::with_capacity(steps + 1),
        p: Vec::with_capacity(steps + 1),
        u: Vec::with_capacity(steps + 1),
        hd: Vec::with_capacity(steps + 1),
        refinement_error: None,
    };
    let mut x = x0.clone();
    for k in 0..=steps {
        let (q, p) = split(&x, n);
        let hd = desired_hamiltonian(model, gains, eq, &q, &p);
        let u = control_input(model, gains, eq, &q, &p);
        if x.iter().any(|v| !v.is_finite()) || !hd.is_finite() || u.iter().any(|v| !v.is_finite()) {
            return Err(Error::Divergence { step: k });
        }
        traj.t.push(k as f64 * dt);
        traj.q.push(q);
        traj.p.push(p);
        traj.u.push(u);
        traj.hd.push(hd);
        if k == steps {
            break;
        }
        let k1 = f(&x);
        let k2 = f(&(&x + &k1 * (0.5 * dt)));
        let k3 = f(&(&x + &k2 * (0.5 * dt)));
        let k4 = f(&(&x + &k3 * dt));
        x += (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (dt / 6.0);
    }
    Ok(traj)
}

/// Fixed-step RK4 integration of the nonlinear closed loop from `x0 = (q, p)`.
pub fn simulate_nonlinear(
    model: &dyn MechanicalModel,
    gains: &Gains,
    eq: &Equilibrium,
    x0: &DVector<f64>,
    cfg: &SimConfig,
) -> Result<Trajectory> {
    let n = model.dof();
    if x0.len() != 2 * n {
        return Err(Error::Shape(format!("x0 has length {}, expected {}", x0.len(), 2 * n)));
    }
    let steps = cfg.steps()?;
    let mut traj = integrate_rk4(model, gains, eq, x0, cfg.dt, steps)?;
    if cfg.check_convergence {
        let fine = integrate_rk4(model, gains, eq, x0, cfg.dt / 2.0, 2 * steps)?;
        let coarse_end = traj.final_state();
        let fine_end = fine.final_state();
        let scale = fine_end.norm().max(f64::MIN_POSITIVE);
        traj.refinement_error = Some((coarse_end - fine_end).norm() / scale);
    }
    Ok(traj)
}

/// Exact one-step propagator `exp(A dt)`.
pub fn step_map(a: &DMatrix<f64>, dt: f64) -> DMatrix<f64> {
    (a * dt).exp()
}

/// `ẋ = A x` stepped with the matrix exponential. States are offsets from
/// the equilibrium.
pub fn simulate_linear(
    a: &DMatrix<f64>,
    x0: &DVector<f64>,
    dt: f64,
    t_end: f64,
) -> Result<Trajectory> {
    let dim = a.nrows();
    if a.ncols() != dim || dim % 2 != 0 || x0.len() != dim {
        return Err(Error::Shape(format!(
            "A is {:?} and x0 has length {}; need a 2n x 2n matrix and 2n vector",
            a.shape(),
            x0.len()
        )));
    }
    let steps = SimConfig::new(dt, t_end).steps()?;
    let n = dim / 2;
    let phi = step_map(a, dt);
    let mut traj = Trajectory {
        t: Vec::with_capacity(steps + 1),
        q: Vec::with_capacity(steps + 1),
        p: Vec::with_capacity(steps + 1),
        u: Vec::with_capacity(steps + 1),
        hd: Vec::with_capacity(steps + 1),
        refinement_error: None,
    };
    let mut x = x0.clone();
    for k in 0..=steps {
        let (q, p) = split(&x, n);
        traj.t.push(k as f64 * dt);
        traj.q.push(q);
        traj.p.push(p);
        traj.u.push(DVector::zeros(0));
        traj.hd.push(0.0);
        x = &phi * x;
    }
    Ok(traj)
}

/// Transient figures for one output channel.
#[derive(Debug, Clone, PartialEq)]
pub struct OutputMetrics {
    /// `false` when the output starts at its target (zero step).
    pub applicable: bool,
    pub step: f64,
    /// First time the output covers `band` of the step; `None` if never.
    pub rise_time: Option<f64>,
    pub overshoot_pct: f64,
    /// Time of the largest excursion in the step direction.
    pub peak_time: f64,
    /// Sign changes of the tracking error after the first crossing.
    pub oscillation_count: usize,
    pub steady_state_value: f64,
    /// Final 10% of samples vary by less than 0.5% of the step.
    pub settled: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TransientMetrics {
    pub band: f64,
    pub outputs: Vec<OutputMetrics>,
}

pub fn transient_metrics(
    traj: &Trajectory,
    q_target: &DVector<f64>,
    band: f64,
) -> Result<TransientMetrics> {
    if !(band > 0.0 && band < 1.0) {
        return Err(Error::InvalidArgument(format!("band must be in (0, 1), got {band}")));
    }
    if traj.is_empty() {
        return Err(Error::InvalidArgument("empty trajectory".into()));
    }
    let n = traj.q[0].len();
    if q_target.len() != n {
        return Err(Error::Shape(format!(
            "target has length {}, trajectory outputs {n}",
            q_target.len()
        )));
    }
    let outputs = (0..n)
        .map(|i| output_metrics(&traj.t, &traj.q_series(i), q_target[i], band))
        .collect();
    Ok(TransientMetrics { band, outputs })
}

fn output_metrics(t: &[f64], y: &[f64], target: f64, band: f64) -> OutputMetrics {
    let y0 = y[0];
    let step = target - y0;
    let last = *y.last().expect("non-empty");
    if step == 0.0 {
        return OutputMetrics {
            applicable: false,
            step,
            rise_time: None,
            overshoot_pct: 0.0,
            peak_time: 0.0,
            oscillation_count: 0,
            steady_state_value: last,
            settled: true,
        };
    }
    let dir = step.signum();
    let mag = step.abs();

    let first = y.iter().position(|&v| (v - y0).abs() >= band * mag);
    let (peak_idx, peak_progress) = y
        .iter()
        .enumerate()
        .map(|(k, &v)| (k, (v - y0) * dir))
        .fold((0, f64::NEG_INFINITY), |acc, cur| if cur.1 > acc.1 { cur } else { acc });
    let overshoot_pct = ((peak_progress - mag).max(0.0) / mag) * 100.0;

    let mut oscillation_count = 0;
    if let Some(start) = first {
        let deadband = OSCILLATION_DEADBAND * mag;
        let mut sign = 0.0;
        for &v in &y[start..] {
            let e = v - target;
            if e.abs() <= deadband {
                continue;
            }
            let s = e.signum();
            if sign != 0.0 && s != sign {
                oscillation_count += 1;
            }
            sign = s;
        }
    }

    let tail_start = y.len() - (y.len() / 10).max(1);
    let tail = &y[tail_start..];
    let spread = tail.iter().copied().fold(f64::NEG_INFINITY, f64::max)
        - tail.iter().copied().fold(f64::INFINITY, f64::min);

    OutputMetrics {
        applicable: true,
        step,
        rise_time: first.map(|k| t[k]),
        overshoot_pct,
        peak_time: t[peak_idx],
        oscillation_count,
        steady_state_value: last,
        settled: spread < SETTLE_FRACTION * mag,
    }
}
