//! Linearized closed loop and its saddle-point form.
//!
//! Around `(q⋆, 0)` the PID-PBC closed loop linearizes to
//! `ẋ = Υ⁻¹ F Υ⁻ᵀ ∇²H_d x`. With
//!
//! ```text
//! R = D⋆ + G Kp Gᵀ      (damping injection)
//! P = ∇²V⋆ + G Ki Gᵀ    (stiffness)
//! W = M⋆ + G Kd Gᵀ      (inertia)
//! ```
//!
//! and Cholesky factors `φPᵀφP = P`, `φWᵀφW = W⁻¹`, the coordinates
//! `z = T x` turn the drift into `-N` with
//! `N = [[φW R φWᵀ, φW φPᵀ], [-φP φWᵀ, 0]]`.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg;
use crate::model::{Equilibrium, MechanicalModel};

/// PID-PBC gain triple. `Kp`, `Ki` symmetric positive definite, `Kd`
/// symmetric positive semi-definite, all `m×m`.
#[derive(Debug, Clone, PartialEq)]
pub struct Gains {
    kp: DMatrix<f64>,
    ki: DMatrix<f64>,
    kd: DMatrix<f64>,
}

impl Gains {
    pub fn new(kp: DMatrix<f64>, ki: DMatrix<f64>, kd: DMatrix<f64>) -> Result<Self> {
        let m = kp.nrows();
        for (name, mat) in [("Kp", &kp), ("Ki", &ki), ("Kd", &kd)] {
            if mat.shape() != (m, m) {
                return Err(Error::Shape(format!(
                    "{name} is {}x{}, expected {m}x{m}",
                    mat.nrows(),
                    mat.ncols()
                )));
            }
            if !linalg::is_symmetric(mat) {
                return Err(Error::InvalidParameter {
                    name,
                    reason: "must be symmetric".into(),
                });
            }
        }
        for (name, mat) in [("Kp", &kp), ("Ki", &ki)] {
            let lo = linalg::lambda_min(mat);
            if !(lo > 0.0) {
                return Err(Error::InvalidParameter {
                    name,
                    reason: format!("must be positive definite (lambda_min = {lo:e})"),
                });
            }
        }
        let lo = linalg::lambda_min(&kd);
        if lo < -1e-12 * kd.amax().max(1.0) {
            return Err(Error::InvalidParameter {
                name: "Kd",
                reason: format!("must be positive semi-definite (lambda_min = {lo:e})"),
            });
        }
        Ok(Self { kp, ki, kd })
    }

    /// Diagonal gains from per-channel values.
    pub fn diagonal(kp: &[f64], ki: &[f64], kd: &[f64]) -> Result<Self> {
        Self::new(linalg::diag(kp), linalg::diag(ki), linalg::diag(kd))
    }

    pub fn kp(&self) -> &DMatrix<f64> {
        &self.kp
    }

    pub fn ki(&self) -> &DMatrix<f64> {
        &self.ki
    }

    pub fn kd(&self) -> &DMatrix<f64> {
        &self.kd
    }

    pub fn inputs(&self) -> usize {
        self.kp.nrows()
    }

    fn check_against(&self, model: &dyn MechanicalModel) -> Result<()> {
        if self.inputs() != model.inputs() {
            return Err(Error::Shape(format!(
                "gains are {m}x{m} but the model has {} inputs",
                model.inputs(),
                m = self.inputs()
            )));
        }
        Ok(())
    }
}

/// The damping/stiffness/inertia triple of the linearized closed loop.
#[derive(Debug, Clone, PartialEq)]
pub struct Rpw {
    pub r: DMatrix<f64>,
    pub p: DMatrix<f64>,
    pub w: DMatrix<f64>,
}

impl Rpw {
    pub fn dim(&self) -> usize {
        self.r.nrows()
    }
}

pub fn build_rpw(model: &dyn MechanicalModel, gains: &Gains, eq: &Equilibrium) -> Result<Rpw> {
    gains.check_against(model)?;
    let n = model.dof();
    let g = model.input_matrix();
    let q = &eq.q_star;
    let d_star = model.damping(q, &DVector::zeros(n));
    let r = linalg::symmetrize(&(d_star + g * gains.kp() * g.transpose()));
    let p = linalg::symmetrize(&(model.potential_hess(q) + g * gains.ki() * g.transpose()));
    let w = linalg::symmetrize(&(model.mass(q) + g * gains.kd() * g.transpose()));
    linalg::require_pd(&p, "P")?;
    linalg::require_pd(&w, "W")?;
    Ok(Rpw { r, p, w })
}

/// `(φP, φW)` with `φPᵀφP = P` (upper-triangular Cholesky factor of `P`) and
/// `φWᵀφW = W⁻¹`. `φW = U⁻ᵀ` for the upper factor `W = UᵀU`, so `W⁻¹` is never
/// formed.
pub fn cholesky_factors(
    p: &DMatrix<f64>,
    w: &DMatrix<f64>,
) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    if p.shape() != w.shape() {
        return Err(Error::Shape(format!(
            "P is {:?} but W is {:?}",
            p.shape(),
            w.shape()
        )));
    }
    let phi_p = linalg::cholesky_upper(p)?;
    let u_w = linalg::cholesky_upper(w)?;
    let phi_w = linalg::upper_triangular_inverse(&u_w)?.transpose();
    Ok((phi_p, phi_w))
}

pub fn build_saddle_matrix(
    r: &DMatrix<f64>,
    phi_p: &DMatrix<f64>,
    phi_w: &DMatrix<f64>,
) -> Result<DMatrix<f64>> {
    let n = r.nrows();
    if r.shape() != (n, n) || phi_p.shape() != (n, n) || phi_w.shape() != (n, n) {
        return Err(Error::Shape(format!(
            "R {:?}, phiP {:?}, phiW {:?} must all be square and equal",
            r.shape(),
            phi_p.shape(),
            phi_w.shape()
        )));
    }
    let x = linalg::symmetrize(&(phi_w * r * phi_w.transpose()));
    let z = phi_p * phi_w.transpose();
    let mut saddle = DMatrix::zeros(2 * n, 2 * n);
    saddle.view_mut((0, 0), (n, n)).copy_from(&x);
    saddle.view_mut((0, n), (n, n)).copy_from(&z.transpose());
    saddle.view_mut((n, 0), (n, n)).copy_from(&(-z));
    Ok(saddle)
}

/// Everything derived from `(R, P, W)` on the way to the saddle matrix.
#[derive(Debug, Clone)]
pub struct SaddleForm {
    pub rpw: Rpw,
    pub phi_p: DMatrix<f64>,
    pub phi_w: DMatrix<f64>,
    pub n: DMatrix<f64>,
    /// Coordinate change `z = T x`; present when built from a model.
    pub t: Option<DMatrix<f64>>,
}

impl SaddleForm {
    pub fn from_rpw(rpw: Rpw) -> Result<Self> {
        let (phi_p, phi_w) = cholesky_factors(&rpw.p, &rpw.w)?;
        let n = build_saddle_matrix(&rpw.r, &phi_p, &phi_w)?;
        Ok(Self {
            rpw,
            phi_p,
            phi_w,
            n,
            t: None,
        })
    }

    pub fn build(model: &dyn MechanicalModel, gains: &Gains, eq: &Equilibrium) -> Result<Self> {
        let mut form = Self::from_rpw(build_rpw(model, gains, eq)?)?;
        let dim = model.dof();
        let m_star = model.mass(&eq.q_star);
        let m_inv = m_star
            .cholesky()
            .ok_or(Error::Singular("mass matrix at q_star"))?
            .inverse();
        // φW⁻ᵀ is the upper Cholesky factor of W.
        let u_w = linalg::cholesky_upper(&form.rpw.w)?;
        let mut t = DMatrix::zeros(2 * dim, 2 * dim);
        t.view_mut((0, dim), (dim, dim)).copy_from(&(u_w * m_inv));
        t.view_mut((dim, 0), (dim, dim)).copy_from(&form.phi_p);
        form.t = Some(t);
        Ok(form)
    }

    /// Upper-left block `X = φW R φWᵀ`.
    pub fn x_block(&self) -> DMatrix<f64> {
        let d = self.rpw.dim();
        self.n.view((0, 0), (d, d)).into_owned()
    }

    /// Coupling block `Z = φP φWᵀ`.
    pub fn z_block(&self) -> DMatrix<f64> {
        let d = self.rpw.dim();
        -self.n.view((d, 0), (d, d)).into_owned()
    }
}

/// Analytic `∇²H_d` at `(q⋆, 0)`: `blockdiag(P, M⋆⁻¹ W M⋆⁻¹)`.
pub fn hessian_hd(
    model: &dyn MechanicalModel,
    gains: &Gains,
    eq: &Equilibrium,
) -> Result<DMatrix<f64>> {
    gains.check_against(model)?;
    let g = model.input_matrix();
    let q = &eq.q_star;
    let p = model.potential_hess(q) + g * gains.ki() * g.transpose();
    let m_star = model.mass(q);
    let w = &m_star + g * gains.kd() * g.transpose();
    let m_inv = m_star
        .cholesky()
        .ok_or(Error::Singular("mass matrix at q_star"))?
        .inverse();
    let kinetic = linalg::symmetrize(&(&m_inv * w * &m_inv));
    Ok(linalg::block_diag(&linalg::symmetrize(&p), &kinetic))
}

/// `Υ⋆⁻¹ F⋆ Υ⋆⁻ᵀ ∇²H_d⋆` in coordinates `(q - q⋆, p)`.
pub fn linearize_closed_loop(
    model: &dyn MechanicalModel,
    gains: &Gains,
    eq: &Equilibrium,
) -> Result<DMatrix<f64>> {
    gains.check_against(model)?;
    let n = model.dof();
    let g = model.input_matrix();
    let q = &eq.q_star;
    let m_star = model.mass(q);
    let m_inv = m_star
        .clone()
        .try_inverse()
        .ok_or(Error::Singular("mass matrix at q_star"))?;

    // ∇_q y vanishes at p = 0, so Υ⋆ is block diagonal.
    let mut upsilon = DMatrix::<f64>::identity(2 * n, 2 * n);
    let lower = DMatrix::<f64>::identity(n, n) + g * gains.kd() * g.transpose() * &m_inv;
    upsilon.view_mut((n, n), (n, n)).copy_from(&lower);

    let r = model.damping(q, &DVector::zeros(n)) + g * gains.kp() * g.transpose();
    let mut f = DMatrix::<f64>::zeros(2 * n, 2 * n);
    f.view_mut((0, n), (n, n)).fill_with_identity();
    f.view_mut((n, 0), (n, n)).copy_from(&(-DMatrix::<f64>::identity(n, n)));
    f.view_mut((n, n), (n, n)).copy_from(&(-r));

    let ups_lu = upsilon.clone().lu();
    let ups_inv = ups_lu
        .try_inverse()
        .ok_or(Error::Singular("Upsilon at the equilibrium"))?;
    let hess = hessian_hd(model, gains, eq)?;
    Ok(&ups_inv * f * ups_inv.transpose() * hess)
}
