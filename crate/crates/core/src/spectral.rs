//! Spectral analysis of saddle-point matrices `N = [[X, Zᵀ], [-Z, 0]]`.
//!
//! `N` governs `ż = -N z`, so the closed-loop poles are `-λ(N)`. All
//! statements below are about `λ(N)`, which lies in the closed right
//! half-plane when `P` and `W` are positive definite.

use nalgebra::{Complex, DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;
use crate::saddleform::{Rpw, SaddleForm};

pub type C64 = Complex<f64>;

/// Relative factor for the default imaginary-part threshold.
pub const IM_TOL_REL: f64 = 1e-7;

/// Eigenvalues with modulus below this are marginal (no damping ratio).
pub const MARGINAL_EIG: f64 = 1e-12;

const SCHUR_EPS: f64 = 1e-15;
const SCHUR_MAX_ITER: usize = 10_000;

fn cmp_complex(a: &C64, b: &C64) -> std::cmp::Ordering {
    a.re.total_cmp(&b.re).then(a.im.total_cmp(&b.im))
}

/// All eigenvalues of a real square matrix, sorted by `(Re, Im)`.
pub fn eigen_saddle(n: &DMatrix<f64>) -> Result<Vec<C64>> {
    if !linalg::is_square(n) {
        return Err(Error::Shape(format!("eigenvalues need a square matrix, got {:?}", n.shape())));
    }
    if n.iter().any(|x| !x.is_finite()) {
        return Err(Error::InvalidArgument("matrix has non-finite entries".into()));
    }
    if n.nrows() == 0 {
        return Ok(Vec::new());
    }
    let schur = nalgebra::linalg::Schur::try_new(n.clone(), SCHUR_EPS, SCHUR_MAX_ITER)
        .ok_or(Error::Solver)?;
    let mut eigs: Vec<C64> = schur.complex_eigenvalues().iter().copied().collect();
    eigs.sort_by(cmp_complex);
    Ok(eigs)
}

/// An eigenvalue with a unit-norm eigenvector and its residual `‖Nv - λv‖`.
#[derive(Debug, Clone)]
pub struct EigenPair {
    pub value: C64,
    pub vector: DVector<C64>,
    pub residual: f64,
}

/// Eigenpairs of `n`; each vector is the right singular vector of `N - λI`
/// for its smallest singular value.
pub fn eigenpairs(n: &DMatrix<f64>) -> Result<Vec<EigenPair>> {
    let eigs = eigen_saddle(n)?;
    let dim = n.nrows();
    let nc: DMatrix<C64> = n.map(|x| C64::new(x, 0.0));
    eigs.into_iter()
        .map(|lambda| {
            let shifted = &nc - DMatrix::<C64>::identity(dim, dim) * lambda;
            let svd = shifted.svd(false, true);
            let v_t = svd.v_t.ok_or(Error::Solver)?;
            let k = svd
                .singular_values
                .iter()
                .enumerate()
                .min_by(|a, b| a.1.total_cmp(b.1))
                .map(|(i, _)| i)
                .ok_or(Error::Solver)?;
            let vector: DVector<C64> = v_t.row(k).adjoint();
            let residual = (&nc * &vector - &vector * lambda).norm();
            Ok(EigenPair {
                value: lambda,
                vector,
                residual,
            })
        })
        .collect()
}

/// Largest distance between two spectra after greedy nearest matching,
/// relative to `max(1, max |λ|)`. Infinite if the lengths differ.
pub fn max_spectrum_mismatch(a: &[C64], b: &[C64]) -> f64 {
    if a.len() != b.len() {
        return f64::INFINITY;
    }
    let scale = a.iter().chain(b).map(|z| z.norm()).fold(1.0, f64::max);
    let mut used = vec![false; b.len()];
    let mut worst = 0.0f64;
    for za in a {
        let (idx, dist) = b
            .iter()
            .enumerate()
            .filter(|(i, _)| !used[*i])
            .map(|(i, zb)| (i, (za - zb).norm()))
            .min_by(|x, y| x.1.total_cmp(&y.1))
            .expect("equal lengths");
        used[idx] = true;
        worst = worst.max(dist);
    }
    worst / scale
}

fn rayleigh(a: &DMatrix<f64>, v: &DVector<C64>) -> f64 {
    let ac = a.map(|x| C64::new(x, 0.0));
    (v.adjoint() * ac * v)[(0, 0)].re / v.norm_squared()
}

/// Coefficients `(v*Xv/v*v, v*ZᵀZv/v*v)` of the scalar quadratic
/// `λ² - a λ + b = 0` satisfied by the eigenvalue belonging to `v`.
pub fn quadratic_coefficients(
    x: &DMatrix<f64>,
    z: &DMatrix<f64>,
    v: &DVector<C64>,
) -> Result<(f64, f64)> {
    if v.norm() == 0.0 {
        return Err(Error::InvalidArgument("zero vector".into()));
    }
    if x.ncols() != v.len() || z.ncols() != v.len() {
        return Err(Error::Shape(format!(
            "X {:?}, Z {:?} incompatible with vector of length {}",
            x.shape(),
            z.shape(),
            v.len()
        )));
    }
    Ok((rayleigh(x, v), rayleigh(&(z.transpose() * z), v)))
}

/// `true` iff `(v*Xv/v*v)² ≥ 4 v*ZᵀZv/v*v`, i.e. the eigenvalue tied to `v`
/// is real.
pub fn theorem1_reality_test(x: &DMatrix<f64>, z: &DMatrix<f64>, v: &DVector<C64>) -> Result<bool> {
    let (a, b) = quadratic_coefficients(x, z, v)?;
    Ok(a * a >= 4.0 * b)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Corollary1Bounds {
    /// Band for `Re λ` of eigenvalues with non-zero imaginary part.
    pub complex_re_lo: f64,
    pub complex_re_hi: f64,
    /// Band for real eigenvalues.
    pub real_lo: f64,
    pub real_hi: f64,
    /// `real_lo` used a pseudo-inverse because `X` is singular.
    pub real_lo_advisory: bool,
}

pub fn corollary1_bounds(x: &DMatrix<f64>, z: &DMatrix<f64>) -> Result<Corollary1Bounds> {
    if !linalg::is_symmetric(x) {
        return Err(Error::InvalidArgument("X must be symmetric".into()));
    }
    if z.ncols() != x.nrows() {
        return Err(Error::Shape(format!("Z {:?} incompatible with X {:?}", z.shape(), x.shape())));
    }
    let ev = linalg::sym_eigenvalues(x);
    let (xmin, xmax) = (ev[0], ev[ev.len() - 1]);
    let singular = xmin <= 1e-12 * xmax.abs().max(f64::MIN_POSITIVE);
    let schur_min = if singular {
        let pinv = x
            .clone()
            .pseudo_inverse(1e-12 * xmax.abs().max(f64::MIN_POSITIVE))
            .map_err(|_| Error::Solver)?;
        linalg::lambda_min(&(z * pinv * z.transpose()))
    } else {
        let chol = x.clone().cholesky().ok_or(Error::Singular("X"))?;
        let sol = chol.solve(&z.transpose());
        linalg::lambda_min(&(z * sol))
    };
    Ok(Corollary1Bounds {
        complex_re_lo: 0.5 * xmin,
        complex_re_hi: 0.5 * xmax,
        real_lo: xmin.min(schur_min),
        real_hi: xmax,
        real_lo_advisory: singular,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Prop1Check {
    pub satisfied: bool,
    /// `λ_min(R)² - 4 λ_max(P) λ_max(W)`.
    pub margin: f64,
}

/// Sufficient condition for an all-real spectrum of `N` (no overshoot).
pub fn prop1_check(r: &DMatrix<f64>, p: &DMatrix<f64>, w: &DMatrix<f64>) -> Prop1Check {
    let rmin = linalg::lambda_min(r).max(0.0);
    let margin = rmin * rmin - 4.0 * linalg::lambda_max(p) * linalg::lambda_max(w);
    Prop1Check {
        satisfied: margin >= 0.0,
        margin,
    }
}

/// `|Re λ| / |λ|`.
pub fn damping_ratio(eig: C64) -> Result<f64> {
    let modulus = eig.norm();
    if modulus == 0.0 {
        return Err(Error::UndefinedRatio);
    }
    Ok((eig.re.abs() / modulus).min(1.0))
}

/// Bounds on the squared damping ratio of every complex eigenvalue of `N`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ZetaBounds {
    pub zeta_min: f64,
    pub zeta_max: f64,
}

pub fn zeta_bounds(r: &DMatrix<f64>, p: &DMatrix<f64>, w: &DMatrix<f64>) -> Result<ZetaBounds> {
    let pe = linalg::sym_eigenvalues(p);
    let we = linalg::sym_eigenvalues(w);
    let re = linalg::sym_eigenvalues(r);
    let (pmin, pmax) = (pe[0], pe[pe.len() - 1]);
    let (wmin, wmax) = (we[0], we[we.len() - 1]);
    if !(pmin > 0.0) {
        return Err(Error::InvalidArgument(format!("P is not positive definite ({pmin:e})")));
    }
    if !(wmin > 0.0) {
        return Err(Error::InvalidArgument(format!("W is not positive definite ({wmin:e})")));
    }
    let rmin = re[0].max(0.0);
    let rmax = re[re.len() - 1];
    Ok(ZetaBounds {
        zeta_min: (0.25 * rmin * rmin / (wmax * pmax)).max(0.0),
        zeta_max: (0.25 * rmax * rmax / (wmin * pmin)).min(1.0),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Scenario {
    /// Purely real spectrum.
    S1,
    /// Every eigenvalue has a non-zero imaginary part.
    S2,
    /// Mixed.
    S3,
}

/// `1e-7 · max |λ|`.
pub fn default_im_tol(eigs: &[C64]) -> f64 {
    IM_TOL_REL * eigs.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

pub fn classify_scenario(eigs: &[C64], im_tol: f64) -> Scenario {
    let complex = eigs.iter().filter(|z| z.im.abs() > im_tol).count();
    if complex == 0 {
        Scenario::S1
    } else if complex == eigs.len() {
        Scenario::S2
    } else {
        Scenario::S3
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RiseTimeBound {
    /// Lower bound on `Re λ(N)` over the spectrum (1/s).
    pub re_lambda_u: f64,
    /// `4 / re_lambda_u` (s).
    pub t_ru: f64,
    /// `λ_min(R⁻¹P)` was replaced by `λ_min(P)/λ_max(R)` because `R` is singular.
    pub fallback: bool,
}

/// Upper bound on the 98% rise time. `e^{-4} ≈ 0.0183`, hence the 4.
pub fn rise_time_bound(
    r: &DMatrix<f64>,
    p: &DMatrix<f64>,
    w: &DMatrix<f64>,
    scenario: Scenario,
) -> Result<RiseTimeBound> {
    let wr = linalg::generalized_eigenvalues(w, r)?[0];
    let needs_rp = scenario != Scenario::S2;
    let mut fallback = false;
    let rp = if needs_rp {
        let rmax = linalg::lambda_max(r);
        let rmin = linalg::lambda_min(r);
        if rmin <= 1e-12 * rmax.abs().max(f64::MIN_POSITIVE) {
            fallback = true;
            linalg::lambda_min(p) / rmax
        } else {
            linalg::generalized_eigenvalues(r, p)?[0]
        }
    } else {
        f64::INFINITY
    };
    let re_lambda_u = match scenario {
        Scenario::S1 => wr.min(rp),
        Scenario::S2 => 0.5 * wr,
        Scenario::S3 => (0.5 * wr).min(rp),
    };
    Ok(RiseTimeBound {
        re_lambda_u,
        t_ru: 4.0 / re_lambda_u,
        fallback,
    })
}

/// Complete spectral picture of one `(R, P, W)` triple.
#[derive(Debug, Clone)]
pub struct SpectralReport {
    /// Eigenvalues of `N`, sorted by `(Re, Im)`. Closed-loop poles are their negatives.
    pub eigenvalues: Vec<C64>,
    /// Damping ratios of the eigenvalues with `|Im| > im_tol`, in eigenvalue order.
    pub damping_ratios: Vec<f64>,
    /// Number of eigenvalues with `|λ| < 1e-12`.
    pub marginal: usize,
    pub im_tol: f64,
    pub scenario: Scenario,
    pub prop1: Prop1Check,
    pub zeta: ZetaBounds,
    pub rise_time: RiseTimeBound,
    pub corollary1: Corollary1Bounds,
}

impl SpectralReport {
    pub fn from_form(form: &SaddleForm) -> Result<Self> {
        let Rpw { r, p, w } = &form.rpw;
        let eigenvalues = eigen_saddle(&form.n)?;
        let im_tol = default_im_tol(&eigenvalues);
        let marginal = eigenvalues.iter().filter(|z| z.norm() < MARGINAL_EIG).count();
        let damping_ratios = eigenvalues
            .iter()
            .filter(|z| z.norm() >= MARGINAL_EIG && z.im.abs() > im_tol)
            .map(|&z| damping_ratio(z))
            .collect::<Result<Vec<_>>>()?;
        let scenario = classify_scenario(&eigenvalues, im_tol);
        Ok(Self {
            damping_ratios,
            marginal,
            im_tol,
            scenario,
            prop1: prop1_check(r, p, w),
            zeta: zeta_bounds(r, p, w)?,
            rise_time: rise_time_bound(r, p, w, scenario)?,
            corollary1: corollary1_bounds(&form.x_block(), &form.z_block())?,
            eigenvalues,
        })
    }

    pub fn from_rpw(rpw: Rpw) -> Result<Self> {
        Self::from_form(&SaddleForm::from_rpw(rpw)?)
    }
}
