//! Gain synthesis for no-overshoot, damping-band and rise-time targets.
//!
//! Every search is one-dimensional: `Kp = c · base_Kp` (and, for rise-time
//! targets, `Ki = s · Ki_seed`). Both the no-overshoot margin and the two
//! damping-ratio bounds are non-decreasing in `c`, so bisection applies.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg;
use crate::model::{assign_equilibrium, Equilibrium, MechanicalModel};
use crate::saddleform::{Gains, SaddleForm};
use crate::spectral::SpectralReport;

/// Relative slack on a rise-time ceiling, so a bound that equals the
/// ceiling up to rounding counts as met.
pub const RISE_TIME_REL_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TuningMode {
    NoOvershoot,
    DampingBand,
    RiseTime,
    /// Rise-time ceiling plus a damping band when one is given, otherwise
    /// plus the no-overshoot condition.
    Combined,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TuningTarget {
    pub mode: TuningMode,
    pub zeta_lo: Option<f64>,
    pub zeta_hi: Option<f64>,
    pub t_r_max: Option<f64>,
    pub base_kp: Option<DMatrix<f64>>,
    pub base_ki: Option<DMatrix<f64>>,
    pub base_kd: Option<DMatrix<f64>>,
}

impl TuningTarget {
    pub fn new(mode: TuningMode) -> Self {
        Self {
            mode,
            zeta_lo: None,
            zeta_hi: None,
            t_r_max: None,
            base_kp: None,
            base_ki: None,
            base_kd: None,
        }
    }

    pub fn no_overshoot() -> Self {
        Self::new(TuningMode::NoOvershoot)
    }

    pub fn damping_band(zeta_lo: f64, zeta_hi: f64) -> Self {
        Self {
            zeta_lo: Some(zeta_lo),
            zeta_hi: Some(zeta_hi),
            ..Self::new(TuningMode::DampingBand)
        }
    }

    pub fn rise_time(t_r_max: f64) -> Self {
        Self {
            t_r_max: Some(t_r_max),
            ..Self::new(TuningMode::RiseTime)
        }
    }

    fn band(&self) -> Option<(f64, f64)> {
        self.zeta_lo.zip(self.zeta_hi)
    }

    pub fn validate(&self) -> Result<()> {
        if self.zeta_lo.is_some() != self.zeta_hi.is_some() {
            return Err(Error::InvalidArgument("zeta_lo and zeta_hi must be given together".into()));
        }
        if let Some((lo, hi)) = self.band() {
            check_band(lo, hi)?;
        }
        if let Some(t) = self.t_r_max {
            if !(t > 0.0) || !t.is_finite() {
                return Err(Error::InvalidParameter {
                    name: "t_r_max",
                    reason: format!("must be positive, got {t}"),
                });
            }
        }
        match self.mode {
            TuningMode::DampingBand if self.band().is_none() => Err(Error::InvalidArgument(
                "damping-band target needs zeta_lo and zeta_hi".into(),
            )),
            TuningMode::RiseTime | TuningMode::Combined if self.t_r_max.is_none() => Err(
                Error::InvalidArgument("rise-time target needs t_r_max".into()),
            ),
            _ => Ok(()),
        }
    }
}

fn check_band(lo: f64, hi: f64) -> Result<()> {
    if !(lo > 0.0 && lo < hi && hi <= 1.0) {
        return Err(Error::InvalidParameter {
            name: "zeta band",
            reason: format!("need 0 < zeta_lo < zeta_hi <= 1, got [{lo}, {hi}]"),
        });
    }
    Ok(())
}

/// Search limits.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TuningOptions {
    /// Relative bisection tolerance on the scale factor.
    pub rel_tol: f64,
    pub max_bisection_iters: usize,
    /// Largest `Kp` scale tried before declaring infeasibility.
    pub max_scale: f64,
    /// Smallest `Kp` scale; keeps `Kp` positive definite.
    pub min_scale: f64,
    /// Cap on `Ki` updates in rise-time tuning.
    pub max_rise_iters: usize,
    /// Largest `Ki` scale tried in rise-time tuning.
    pub max_ki_scale: f64,
}

impl Default for TuningOptions {
    fn default() -> Self {
        Self {
            rel_tol: 1e-6,
            max_bisection_iters: 100,
            max_scale: 1e6,
            min_scale: 1e-9,
            max_rise_iters: 50,
            max_ki_scale: 1e3,
        }
    }
}

#[derive(Debug, Clone)]
pub struct TuningResult {
    pub gains: Gains,
    /// Equilibrium recomputed for the final `Ki`.
    pub equilibrium: Equilibrium,
    pub report: SpectralReport,
    pub feasible: bool,
    /// Signed slack of the requested condition; non-negative iff feasible.
    pub margin: f64,
    /// `(candidate scale, margin)` for every evaluated candidate.
    pub search_trace: Vec<(f64, f64)>,
    /// `Ki` updates performed (rise-time tuning only).
    pub iterations: usize,
    pub warnings: Vec<String>,
}

/// `(R(c), P, W)` with `R(c) = D⋆ + c · G B Gᵀ`, the pieces that stay fixed
/// during a `Kp` search.
struct ScaledPencil {
    d_star: DMatrix<f64>,
    gbg: DMatrix<f64>,
    p_min: f64,
    p_max: f64,
    w_min: f64,
    w_max: f64,
}

impl ScaledPencil {
    fn new(
        model: &dyn MechanicalModel,
        q_star: &DVector<f64>,
        base_kp: &DMatrix<f64>,
        ki: &DMatrix<f64>,
        kd: &DMatrix<f64>,
    ) -> Result<Self> {
        let n = model.dof();
        let g = model.input_matrix();
        let p = model.potential_hess(q_star) + g * ki * g.transpose();
        let w = model.mass(q_star) + g * kd * g.transpose();
        linalg::require_pd(&linalg::symmetrize(&p), "P")?;
        linalg::require_pd(&linalg::symmetrize(&w), "W")?;
        let pe = linalg::sym_eigenvalues(&p);
        let we = linalg::sym_eigenvalues(&w);
        Ok(Self {
            d_star: model.damping(q_star, &DVector::zeros(n)),
            gbg: linalg::symmetrize(&(g * base_kp * g.transpose())),
            p_min: pe[0],
            p_max: pe[pe.len() - 1],
            w_min: we[0],
            w_max: we[we.len() - 1],
        })
    }

    fn r_extremes(&self, c: f64) -> (f64, f64) {
        let ev = linalg::sym_eigenvalues(&(&self.d_star + &self.gbg * c));
        (ev[0].max(0.0), ev[ev.len() - 1])
    }

    fn prop1_margin(&self, c: f64) -> f64 {
        let (rmin, _) = self.r_extremes(c);
        rmin * rmin - 4.0 * self.p_max * self.w_max
    }

    fn zeta(&self, c: f64) -> (f64, f64) {
        let (rmin, rmax) = self.r_extremes(c);
        (
            0.25 * rmin * rmin / (self.w_max * self.p_max),
            (0.25 * rmax * rmax / (self.w_min * self.p_min)).min(1.0),
        )
    }
}

/// Smallest `c` in `[lo, max]` with `pred(c)`, for a predicate that is false
/// below some threshold and true above it. `None` if `pred(max)` is false.
fn bisect_threshold(
    lo: f64,
    max: f64,
    opts: &TuningOptions,
    trace: &mut Vec<(f64, f64)>,
    eval: impl Fn(f64) -> f64,
) -> Option<f64> {
    let mut record = |c: f64| {
        let m = eval(c);
        trace.push((c, m));
        m >= 0.0
    };
    if record(lo) {
        return Some(lo);
    }
    let mut low = lo;
    let mut high = lo.max(1.0);
    while !record(high) {
        if high >= max {
            return None;
        }
        low = high;
        high = (high * 2.0).min(max);
    }
    for _ in 0..opts.max_bisection_iters {
        if high - low <= opts.rel_tol * high {
            break;
        }
        let mid = 0.5 * (low + high);
        if record(mid) {
            high = mid;
        } else {
            low = mid;
        }
    }
    Some(high)
}

fn is_identity(a: &DMatrix<f64>) -> bool {
    a.is_square() && *a == DMatrix::identity(a.nrows(), a.ncols())
}

fn finish(
    model: &dyn MechanicalModel,
    q_star: &DVector<f64>,
    gains: Gains,
    target: &TuningTarget,
    search_trace: Vec<(f64, f64)>,
    iterations: usize,
    warnings: Vec<String>,
) -> Result<TuningResult> {
    let equilibrium = assign_equilibrium(model, q_star, gains.ki())?;
    let form = SaddleForm::build(model, &gains, &equilibrium)?;
    let report = SpectralReport::from_form(&form)?;
    let margin = target_margin(&report, target);
    Ok(TuningResult {
        gains,
        equilibrium,
        report,
        feasible: margin >= 0.0,
        margin,
        search_trace,
        iterations,
        warnings,
    })
}

/// Signed slack of `target` on a report. Non-negative iff the target is met.
pub fn target_margin(report: &SpectralReport, target: &TuningTarget) -> f64 {
    let band = |lo: f64, hi: f64| {
        (report.zeta.zeta_min - lo * lo).min(hi * hi - report.zeta.zeta_max)
    };
    let rise = |t: f64| t * (1.0 + RISE_TIME_REL_TOL) - report.rise_time.t_ru;
    match target.mode {
        TuningMode::NoOvershoot => report.prop1.margin,
        TuningMode::DampingBand => target
            .band()
            .map_or(f64::NEG_INFINITY, |(lo, hi)| band(lo, hi)),
        TuningMode::RiseTime => target.t_r_max.map_or(f64::NEG_INFINITY, rise),
        TuningMode::Combined => {
            let r = target.t_r_max.map_or(f64::NEG_INFINITY, rise);
            let companion = match target.band() {
                Some((lo, hi)) => band(lo, hi),
                None => report.prop1.margin,
            };
            r.min(companion)
        }
    }
}

fn check_shapes(model: &dyn MechanicalModel, mats: &[(&str, &DMatrix<f64>)]) -> Result<()> {
    let m = model.inputs();
    for (name, mat) in mats {
        if mat.shape() != (m, m) {
            return Err(Error::Shape(format!("{name} is {:?}, expected {m}x{m}", mat.shape())));
        }
    }
    Ok(())
}

/// Smallest `c` with `4 λmax(P) λmax(W) ≤ λmin(R)²` for `Kp = c · base_kp`.
pub fn tune_no_overshoot(
    model: &dyn MechanicalModel,
    eq: &Equilibrium,
    ki: &DMatrix<f64>,
    kd: &DMatrix<f64>,
    base_kp: Option<&DMatrix<f64>>,
    opts: &TuningOptions,
) -> Result<TuningResult> {
    let m = model.inputs();
    let identity = DMatrix::identity(m, m);
    let base = base_kp.unwrap_or(&identity);
    check_shapes(model, &[("Ki", ki), ("Kd", kd), ("base_Kp", base)])?;
    let q_star = &eq.q_star;
    let target = TuningTarget::no_overshoot();
    let pencil = ScaledPencil::new(model, q_star, base, ki, kd)?;
    let d_min = linalg::lambda_min(&pencil.d_star);

    if m < model.dof() && d_min <= 1e-12 {
        let gains = Gains::new(base.clone(), ki.clone(), kd.clone())?;
        let result = finish(model, q_star, gains, &target, Vec::new(), 0, Vec::new())?;
        return Err(Error::Infeasible {
            reason: format!(
                "underactuated (m = {m} < n = {}): G Kp Gᵀ is singular, so λ_min(R) = λ_min(D⋆) = {d_min:e} \
                 for every Kp and the no-overshoot condition cannot be met without natural damping",
                model.dof()
            ),
            result: Box::new(result),
        });
    }

    let mut trace = Vec::new();
    let bisected = bisect_threshold(opts.min_scale, opts.max_scale, opts, &mut trace, |c| {
        pencil.prop1_margin(c)
    });
    let mut warnings = Vec::new();

    let Some(c_bisect) = bisected else {
        let gains = Gains::new(base * opts.max_scale, ki.clone(), kd.clone())?;
        let result = finish(model, q_star, gains, &target, trace, 0, warnings)?;
        return Err(Error::Infeasible {
            reason: format!(
                "no scale up to {:e} satisfies the no-overshoot condition (margin {:e})",
                opts.max_scale, result.margin
            ),
            result: Box::new(result),
        });
    };

    let mut c = c_bisect;
    if is_identity(model.input_matrix()) && is_identity(base) {
        let closed = (2.0 * (pencil.p_max * pencil.w_max).sqrt() - d_min).max(opts.min_scale);
        let closed = nudge_feasible(closed, |c| pencil.prop1_margin(c));
        if (closed - c_bisect).abs() > 10.0 * opts.rel_tol * c_bisect.max(1.0) {
            warnings.push(format!(
                "closed-form scale {closed} disagrees with bisection {c_bisect}"
            ));
        } else {
            c = closed;
        }
    }

    if kd.amax() > 0.0 {
        let rigid = ScaledPencil::new(model, q_star, base, ki, &DMatrix::zeros(m, m))?;
        let mut scratch = Vec::new();
        if let Some(c0) = bisect_threshold(opts.min_scale, opts.max_scale, opts, &mut scratch, |c| {
            rigid.prop1_margin(c)
        }) {
            if c > 1.1 * c0 {
                warnings.push(format!(
                    "Kd raises the required Kp scale from {c0:.6} to {c:.6} (+{:.1}%)",
                    100.0 * (c / c0 - 1.0)
                ));
            }
        }
    }

    let gains = Gains::new(base * c, ki.clone(), kd.clone())?;
    finish(model, q_star, gains, &target, trace, 0, warnings)
}

/// Bumps `c` upward by a few ulps-worth until `margin(c) ≥ 0`.
fn nudge_feasible(mut c: f64, margin: impl Fn(f64) -> f64) -> f64 {
    for _ in 0..64 {
        if margin(c) >= 0.0 {
            break;
        }
        c = c * (1.0 + 1e-12) + f64::MIN_POSITIVE;
    }
    c
}

/// Finds `c` with `ζ_lo² ≤ ζ_min(c)` and `ζ_max(c) ≤ ζ_hi²`, taking the
/// midpoint of the feasible interval.
#[allow(clippy::too_many_arguments)]
pub fn tune_damping_band(
    model: &dyn MechanicalModel,
    eq: &Equilibrium,
    zeta_lo: f64,
    zeta_hi: f64,
    ki: &DMatrix<f64>,
    kd: &DMatrix<f64>,
    base_kp: Option<&DMatrix<f64>>,
    opts: &TuningOptions,
) -> Result<TuningResult> {
    check_band(zeta_lo, zeta_hi)?;
    let m = model.inputs();
    let identity = DMatrix::identity(m, m);
    let base = base_kp.unwrap_or(&identity);
    check_shapes(model, &[("Ki", ki), ("Kd", kd), ("base_Kp", base)])?;
    let q_star = &eq.q_star;
    let target = TuningTarget::damping_band(zeta_lo, zeta_hi);
    let pencil = ScaledPencil::new(model, q_star, base, ki, kd)?;
    let (lo2, hi2) = (zeta_lo * zeta_lo, zeta_hi * zeta_hi);

    let mut trace = Vec::new();
    let c_lo = bisect_threshold(opts.min_scale, opts.max_scale, opts, &mut trace, |c| {
        pencil.zeta(c).0 - lo2
    });
    // Largest c with ζ_max(c) ≤ hi²: threshold of the complementary predicate.
    let c_hi = if pencil.zeta(opts.max_scale).1 <= hi2 {
        Some(f64::INFINITY)
    } else if pencil.zeta(opts.min_scale).1 > hi2 {
        None
    } else {
        let mut scratch = Vec::new();
        let above = bisect_threshold(opts.min_scale, opts.max_scale, opts, &mut scratch, |c| {
            pencil.zeta(c).1 - hi2
        })
        .expect("ζ_max exceeds the ceiling at max_scale");
        // Step back to the last point still under the ceiling.
        let mut c = above * (1.0 - opts.rel_tol);
        while c > opts.min_scale && pencil.zeta(c).1 > hi2 {
            c *= 1.0 - opts.rel_tol;
        }
        trace.extend(scratch);
        Some(c.max(opts.min_scale))
    };

    let chosen = match (c_lo, c_hi) {
        (Some(a), Some(b)) if a <= b => Some(if b.is_finite() { 0.5 * (a + b) } else { a }),
        _ => None,
    };

    match chosen {
        Some(c) => {
            let gains = Gains::new(base * c, ki.clone(), kd.clone())?;
            let result = finish(model, q_star, gains, &target, trace, 0, Vec::new())?;
            Ok(result)
        }
        None => {
            let best = match c_hi {
                Some(b) if b.is_finite() => b,
                Some(_) => opts.max_scale,
                None => opts.min_scale,
            };
            let gains = Gains::new(base * best, ki.clone(), kd.clone())?;
            let result = finish(model, q_star, gains, &target, trace, 0, Vec::new())?;
            let z = result.report.zeta;
            Err(Error::Infeasible {
                reason: format!(
                    "damping band [{zeta_lo}, {zeta_hi}] unreachable with the given Ki, Kd; \
                     best scale {best:e} achieves zeta in [{:.6}, {:.6}]",
                    z.zeta_min.sqrt(),
                    z.zeta_max.sqrt()
                ),
                result: Box::new(result),
            })
        }
    }
}

/// Rule that fixes `Kp` for each trial `Ki` during rise-time tuning.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Companion {
    NoOvershoot,
    DampingBand { zeta_lo: f64, zeta_hi: f64 },
}

/// Scales `Ki` up until the rise-time bound drops below `t_r_max`,
/// re-tuning `Kp` with the companion rule after every update.
#[allow(clippy::too_many_arguments)]
pub fn tune_rise_time(
    model: &dyn MechanicalModel,
    eq: &Equilibrium,
    t_r_max: f64,
    companion: Companion,
    ki_seed: &DMatrix<f64>,
    kd: &DMatrix<f64>,
    base_kp: Option<&DMatrix<f64>>,
    opts: &TuningOptions,
) -> Result<TuningResult> {
    if !(t_r_max > 0.0) || !t_r_max.is_finite() {
        return Err(Error::InvalidParameter {
            name: "t_r_max",
            reason: format!("must be positive, got {t_r_max}"),
        });
    }
    let target = match companion {
        Companion::NoOvershoot => TuningTarget {
            t_r_max: Some(t_r_max),
            ..TuningTarget::new(TuningMode::Combined)
        },
        Companion::DampingBand { zeta_lo, zeta_hi } => TuningTarget {
            t_r_max: Some(t_r_max),
            zeta_lo: Some(zeta_lo),
            zeta_hi: Some(zeta_hi),
            ..TuningTarget::new(TuningMode::Combined)
        },
    };
    let run_companion = |ki: &DMatrix<f64>| match companion {
        Companion::NoOvershoot => tune_no_overshoot(model, eq, ki, kd, base_kp, opts),
        Companion::DampingBand { zeta_lo, zeta_hi } => {
            tune_damping_band(model, eq, zeta_lo, zeta_hi, ki, kd, base_kp, opts)
        }
    };

    let mut scale = 1.0;
    let mut trace = Vec::new();
    let mut iterations = 0;
    loop {
        let ki = ki_seed * scale;
        let step = run_companion(&ki)?;
        let t_ru = step.report.rise_time.t_ru;
        let slack = t_r_max * (1.0 + RISE_TIME_REL_TOL) - t_ru;
        trace.push((scale, slack));
        if slack >= 0.0 {
            let mut warnings = step.warnings;
            if iterations > 0 {
                warnings.push(format!("Ki scaled by {scale:.6} to meet the rise-time ceiling"));
            }
            return finish(model, &eq.q_star, step.gains, &target, trace, iterations, warnings);
        }
        let at_cap = scale >= opts.max_ki_scale;
        if iterations >= opts.max_rise_iters || at_cap {
            let reason = format!(
                "rise-time bound {t_ru:.6} s still above {t_r_max} s after {iterations} Ki updates \
                 (Ki scale {scale:e}, cap {:e})",
                opts.max_ki_scale
            );
            let result = finish(model, &eq.q_star, step.gains, &target, trace, iterations, step.warnings)?;
            return Err(Error::Infeasible {
                reason,
                result: Box::new(result),
            });
        }
        // t_ru scales roughly like Ki^{-1/2} under either companion rule.
        let ratio = t_ru / t_r_max;
        scale = (scale * (ratio * ratio * 1.01).max(1.2)).min(opts.max_ki_scale);
        iterations += 1;
    }
}

/// Evaluates fixed gains against a target without changing them.
pub fn verify_gains(
    model: &dyn MechanicalModel,
    eq: &Equilibrium,
    gains: &Gains,
    target: &TuningTarget,
) -> Result<TuningResult> {
    target.validate()?;
    let form = SaddleForm::build(model, gains, eq)?;
    let report = SpectralReport::from_form(&form)?;
    let margin = target_margin(&report, target);
    Ok(TuningResult {
        gains: gains.clone(),
        equilibrium: eq.clone(),
        report,
        feasible: margin >= 0.0,
        margin,
        search_trace: Vec::new(),
        iterations: 0,
        warnings: Vec::new(),
    })
}

/// Dispatches a target to the matching search. Needs `target.base_ki`.
pub fn tune(
    model: &dyn MechanicalModel,
    q_star: &DVector<f64>,
    target: &TuningTarget,
    opts: &TuningOptions,
) -> Result<TuningResult> {
    target.validate()?;
    let m = model.inputs();
    let ki = target
        .base_ki
        .clone()
        .ok_or_else(|| Error::InvalidArgument("tuning needs a Ki seed (base_ki)".into()))?;
    let kd = target.base_kd.clone().unwrap_or_else(|| DMatrix::zeros(m, m));
    let base_kp = target.base_kp.as_ref();
    let eq = assign_equilibrium(model, q_star, &ki)?;
    match target.mode {
        TuningMode::NoOvershoot => tune_no_overshoot(model, &eq, &ki, &kd, base_kp, opts),
        TuningMode::DampingBand => {
            let (lo, hi) = target.band().expect("validated");
            tune_damping_band(model, &eq, lo, hi, &ki, &kd, base_kp, opts)
        }
        TuningMode::RiseTime | TuningMode::Combined => {
            let companion = match target.band() {
                Some((zeta_lo, zeta_hi)) if target.mode == TuningMode::Combined => {
                    Companion::DampingBand { zeta_lo, zeta_hi }
                }
                _ => Companion::NoOvershoot,
            };
            let t = target.t_r_max.expect("validated");
            tune_rise_time(model, &eq, t, companion, &ki, &kd, base_kp, opts)
        }
    }
}
