//! Mechanical port-Hamiltonian plants.
//!
//! A plant is `q̇ = ∂H/∂p`, `ṗ = -∂H/∂q - D(q,p) ∂H/∂p + G u` with
//! `H(q,p) = ½ pᵀM⁻¹(q)p + V(q)` and a constant input matrix `G`. Models are
//! supplied as point evaluations with analytic derivatives.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};
use crate::linalg;

/// Default absolute tolerance (∞-norm) for membership in the assignable set.
pub const TOL_EQ: f64 = 1e-8;

/// Step used for finite-difference derivatives of the mass matrix.
pub const MASS_FD_STEP: f64 = 1e-6;

pub trait MechanicalModel: Send + Sync {
    /// Configuration dimension `n`.
    fn dof(&self) -> usize;

    /// Input dimension `m`.
    fn inputs(&self) -> usize {
        self.input_matrix().ncols()
    }

    fn mass(&self, q: &DVector<f64>) -> DMatrix<f64>;
    fn potential(&self, q: &DVector<f64>) -> f64;
    fn potential_grad(&self, q: &DVector<f64>) -> DVector<f64>;
    fn potential_hess(&self, q: &DVector<f64>) -> DMatrix<f64>;
    fn damping(&self, q: &DVector<f64>, p: &DVector<f64>) -> DMatrix<f64>;
    fn input_matrix(&self) -> &DMatrix<f64>;

    /// `∂M/∂q_i`. Central differences unless overridden.
    fn mass_partial(&self, q: &DVector<f64>, i: usize) -> DMatrix<f64> {
        let mut qp = q.clone();
        let mut qm = q.clone();
        qp[i] += MASS_FD_STEP;
        qm[i] -= MASS_FD_STEP;
        (self.mass(&qp) - self.mass(&qm)) / (2.0 * MASS_FD_STEP)
    }

    /// Directional derivative `Σ_i v_i ∂M/∂q_i`, i.e. `Ṁ` for `v = q̇`.
    fn mass_directional(&self, q: &DVector<f64>, v: &DVector<f64>) -> DMatrix<f64> {
        let n = self.dof();
        let mut out = DMatrix::zeros(n, n);
        for i in 0..n {
            if v[i] != 0.0 {
                out += self.mass_partial(q, i) * v[i];
            }
        }
        out
    }

    fn name(&self) -> &str {
        "custom"
    }
}

/// Hamiltonian `½ pᵀM⁻¹(q)p + V(q)`.
pub fn hamiltonian(model: &dyn MechanicalModel, q: &DVector<f64>, p: &DVector<f64>) -> f64 {
    let m = model.mass(q);
    let v = m.cholesky().map(|c| c.solve(p)).unwrap_or_else(|| p.clone());
    0.5 * p.dot(&v) + model.potential(q)
}

/// Two-link planar manipulator with cosine inertia coupling, no potential
/// energy, full actuation and constant viscous joint damping.
#[derive(Debug, Clone)]
pub struct PlanarManipulator {
    pub a1: f64,
    pub a2: f64,
    pub b: f64,
    pub joint_damping: [f64; 2],
    g: DMatrix<f64>,
}

impl PlanarManipulator {
    pub fn new(a1: f64, a2: f64, b: f64, joint_damping: [f64; 2]) -> Self {
        Self {
            a1,
            a2,
            b,
            joint_damping,
            g: DMatrix::identity(2, 2),
        }
    }
}

impl Default for PlanarManipulator {
    fn default() -> Self {
        Self::new(0.1476, 0.0725, 0.0858, [0.07, 0.03])
    }
}

impl MechanicalModel for PlanarManipulator {
    fn dof(&self) -> usize {
        2
    }

    fn mass(&self, q: &DVector<f64>) -> DMatrix<f64> {
        let c = q[1].cos();
        let off = self.a2 + self.b * c;
        DMatrix::from_row_slice(
            2,
            2,
            &[self.a1 + self.a2 + 2.0 * self.b * c, off, off, self.a2],
        )
    }

    fn potential(&self, _q: &DVector<f64>) -> f64 {
        0.0
    }

    fn potential_grad(&self, _q: &DVector<f64>) -> DVector<f64> {
        DVector::zeros(2)
    }

    fn potential_hess(&self, _q: &DVector<f64>) -> DMatrix<f64> {
        DMatrix::zeros(2, 2)
    }

    fn damping(&self, _q: &DVector<f64>, _p: &DVector<f64>) -> DMatrix<f64> {
        linalg::diag(&self.joint_damping)
    }

    fn input_matrix(&self) -> &DMatrix<f64> {
        &self.g
    }

    fn mass_partial(&self, q: &DVector<f64>, i: usize) -> DMatrix<f64> {
        if i == 0 {
            return DMatrix::zeros(2, 2);
        }
        let s = q[1].sin();
        DMatrix::from_row_slice(2, 2, &[-2.0 * self.b * s, -self.b * s, -self.b * s, 0.0])
    }

    fn name(&self) -> &str {
        "manipulator2dof"
    }
}

/// The 2-DoF planar manipulator used for the bundled demos.
pub fn builtin_manipulator() -> PlanarManipulator {
    PlanarManipulator::default()
}

/// Simple pendulum, `M = m l²`, `V = m g l (1 - cos q)`.
#[derive(Debug, Clone)]
pub struct Pendulum {
    pub mass_kg: f64,
    pub length_m: f64,
    pub gravity: f64,
    pub viscous_damping: f64,
    g: DMatrix<f64>,
}

impl MechanicalModel for Pendulum {
    fn dof(&self) -> usize {
        1
    }

    fn mass(&self, _q: &DVector<f64>) -> DMatrix<f64> {
        DMatrix::from_element(1, 1, self.mass_kg * self.length_m * self.length_m)
    }

    fn potential(&self, q: &DVector<f64>) -> f64 {
        self.mgl() * (1.0 - q[0].cos())
    }

    fn potential_grad(&self, q: &DVector<f64>) -> DVector<f64> {
        DVector::from_element(1, self.mgl() * q[0].sin())
    }

    fn potential_hess(&self, q: &DVector<f64>) -> DMatrix<f64> {
        DMatrix::from_element(1, 1, self.mgl() * q[0].cos())
    }

    fn damping(&self, _q: &DVector<f64>, _p: &DVector<f64>) -> DMatrix<f64> {
        DMatrix::from_element(1, 1, self.viscous_damping)
    }

    fn input_matrix(&self) -> &DMatrix<f64> {
        &self.g
    }

    fn mass_partial(&self, _q: &DVector<f64>, _i: usize) -> DMatrix<f64> {
        DMatrix::zeros(1, 1)
    }

    fn name(&self) -> &str {
        "pendulum"
    }
}

impl Pendulum {
    fn mgl(&self) -> f64 {
        self.mass_kg * self.gravity * self.length_m
    }
}

pub fn builtin_pendulum(
    mass_kg: f64,
    length_m: f64,
    gravity: f64,
    viscous_damping: f64,
) -> Result<Pendulum> {
    let positive = |name: &'static str, v: f64| {
        if v > 0.0 && v.is_finite() {
            Ok(())
        } else {
            Err(Error::InvalidParameter {
                name,
                reason: format!("must be positive, got {v}"),
            })
        }
    };
    positive("mass_kg", mass_kg)?;
    positive("length_m", length_m)?;
    positive("gravity", gravity)?;
    if !(viscous_damping >= 0.0) || !viscous_damping.is_finite() {
        return Err(Error::InvalidParameter {
            name: "viscous_damping",
            reason: format!("must be non-negative, got {viscous_damping}"),
        });
    }
    Ok(Pendulum {
        mass_kg,
        length_m,
        gravity,
        viscous_damping,
        g: DMatrix::identity(1, 1),
    })
}

/// Constant-coefficient plant: `M` constant, `V = ½ qᵀKq`, constant `D`.
///
/// This is what inline config models deserialize into.
#[derive(Debug, Clone)]
pub struct LinearModel {
    mass: DMatrix<f64>,
    stiffness: DMatrix<f64>,
    damping: DMatrix<f64>,
    input: DMatrix<f64>,
}

impl LinearModel {
    pub fn new(
        mass: DMatrix<f64>,
        stiffness: DMatrix<f64>,
        damping: DMatrix<f64>,
        input: DMatrix<f64>,
    ) -> Result<Self> {
        let n = mass.nrows();
        for (name, mat) in [("mass", &mass), ("stiffness", &stiffness), ("damping", &damping)] {
            if mat.shape() != (n, n) {
                return Err(Error::Shape(format!(
                    "{name} is {}x{}, expected {n}x{n}",
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
        if input.nrows() != n || input.ncols() == 0 || input.ncols() > n {
            return Err(Error::Shape(format!(
                "input matrix is {}x{}, expected {n}xm with 1 <= m <= {n}",
                input.nrows(),
                input.ncols()
            )));
        }
        if !(linalg::lambda_min(&mass) > 0.0) {
            return Err(Error::InvalidParameter {
                name: "mass",
                reason: "must be positive definite".into(),
            });
        }
        if linalg::lambda_min(&damping) < -1e-12 * damping.amax().max(1.0) {
            return Err(Error::InvalidParameter {
                name: "damping",
                reason: "must be positive semi-definite".into(),
            });
        }
        input_rank_check(&input)?;
        Ok(Self {
            mass,
            stiffness,
            damping,
            input,
        })
    }
}

impl MechanicalModel for LinearModel {
    fn dof(&self) -> usize {
        self.mass.nrows()
    }

    fn mass(&self, _q: &DVector<f64>) -> DMatrix<f64> {
        self.mass.clone()
    }

    fn potential(&self, q: &DVector<f64>) -> f64 {
        0.5 * q.dot(&(&self.stiffness * q))
    }

    fn potential_grad(&self, q: &DVector<f64>) -> DVector<f64> {
        &self.stiffness * q
    }

    fn potential_hess(&self, _q: &DVector<f64>) -> DMatrix<f64> {
        self.stiffness.clone()
    }

    fn damping(&self, _q: &DVector<f64>, _p: &DVector<f64>) -> DMatrix<f64> {
        self.damping.clone()
    }

    fn input_matrix(&self) -> &DMatrix<f64> {
        &self.input
    }

    fn mass_partial(&self, _q: &DVector<f64>, _i: usize) -> DMatrix<f64> {
        let n = self.dof();
        DMatrix::zeros(n, n)
    }

    fn name(&self) -> &str {
        "linear"
    }
}

/// Relative singular-value threshold below which `G` counts as rank deficient.
const RANK_TOL: f64 = 1e-10;

fn input_rank_check(g: &DMatrix<f64>) -> Result<()> {
    let m = g.ncols();
    let sv = g.clone().svd(false, false).singular_values;
    let smax = sv.max();
    let rank = sv.iter().filter(|&&s| s > RANK_TOL * smax.max(f64::MIN_POSITIVE)).count();
    if smax <= 0.0 || rank < m {
        return Err(Error::Rank { rank, expected: m });
    }
    Ok(())
}

/// Full-row-rank `(n-m)×n` matrix `G⊥` with `G⊥ G = 0`; empty when `m = n`.
///
/// Rows are orthonormal: they are the eigenvectors of `G Gᵀ` belonging to its
/// `n - m` zero eigenvalues.
pub fn left_annihilator(g: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let (n, m) = g.shape();
    if m > n {
        return Err(Error::Shape(format!("input matrix {n}x{m} has more columns than rows")));
    }
    input_rank_check(g)?;
    if m == n {
        return Ok(DMatrix::zeros(0, n));
    }
    let eig = SymmetricEigen::new(g * g.transpose());
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let mut out = DMatrix::zeros(n - m, n);
    for (row, &idx) in order.iter().take(n - m).enumerate() {
        out.row_mut(row).copy_from(&eig.eigenvectors.column(idx).transpose());
    }
    Ok(out)
}

/// A target configuration with its integral offset `κ` and holding input.
#[derive(Debug, Clone, PartialEq)]
pub struct Equilibrium {
    pub q_star: DVector<f64>,
    pub kappa: DVector<f64>,
    pub u_star: DVector<f64>,
}

pub fn assign_equilibrium(
    model: &dyn MechanicalModel,
    q_star: &DVector<f64>,
    ki: &DMatrix<f64>,
) -> Result<Equilibrium> {
    assign_equilibrium_with_tol(model, q_star, ki, TOL_EQ)
}

pub fn assign_equilibrium_with_tol(
    model: &dyn MechanicalModel,
    q_star: &DVector<f64>,
    ki: &DMatrix<f64>,
    tol_eq: f64,
) -> Result<Equilibrium> {
    let n = model.dof();
    let g = model.input_matrix();
    let m = g.ncols();
    if q_star.len() != n {
        return Err(Error::Shape(format!("q_star has length {}, expected {n}", q_star.len())));
    }
    if ki.shape() != (m, m) {
        return Err(Error::Shape(format!("Ki is {:?}, expected {m}x{m}", ki.shape())));
    }
    linalg::require_pd(ki, "Ki").map_err(|_| Error::InvalidParameter {
        name: "Ki",
        reason: "must be symmetric positive definite".into(),
    })?;

    let grad = model.potential_grad(q_star);
    let annihilator = left_annihilator(g)?;
    if annihilator.nrows() > 0 {
        let residual = linalg::inf_norm(&(&annihilator * &grad));
        if residual > tol_eq {
            return Err(Error::UnassignableEquilibrium { residual, tol: tol_eq });
        }
    }

    let u_star = g
        .clone()
        .svd(true, true)
        .solve(&grad, 1e-14)
        .map_err(|_| Error::Singular("input matrix least squares"))?;
    let ki_inv_u = ki
        .clone()
        .cholesky()
        .ok_or(Error::Singular("Ki"))?
        .solve(&u_star);
    let kappa = -(g.transpose() * q_star) - ki_inv_u;
    Ok(Equilibrium {
        q_star: q_star.clone(),
        kappa,
        u_star,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    fn v(xs: &[f64]) -> DVector<f64> {
        DVector::from_row_slice(xs)
    }

    #[test]
    fn manipulator_mass_at_zero() {
        let m = builtin_manipulator().mass(&v(&[0.0, 0.0]));
        let want = [[0.3917, 0.1583], [0.1583, 0.0725]];
        for i in 0..2 {
            for j in 0..2 {
                assert_relative_eq!(m[(i, j)], want[i][j], epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn manipulator_mass_at_q2() {
        let m = builtin_manipulator().mass(&v(&[0.0, 0.8]));
        assert_relative_eq!(m[(0, 0)], 0.339655, epsilon = 1e-6);
        assert_relative_eq!(m[(0, 1)], 0.132277, epsilon = 1e-6);
        assert_relative_eq!(m[(1, 0)], 0.132277, epsilon = 1e-6);
        assert_relative_eq!(m[(1, 1)], 0.0725, epsilon = 1e-12);
    }

    #[test]
    fn manipulator_has_no_potential() {
        let model = builtin_manipulator();
        assert_eq!(model.potential_grad(&v(&[0.6, 0.8])), v(&[0.0, 0.0]));
        assert_eq!(model.dof(), 2);
        assert_eq!(model.inputs(), 2);
        assert_eq!(model.damping(&v(&[0.0, 0.0]), &v(&[0.0, 0.0])), linalg::diag(&[0.07, 0.03]));
    }

    #[test]
    fn pendulum_values() {
        let p = builtin_pendulum(1.0, 1.0, 1.0, 0.0).unwrap();
        assert_eq!(p.potential_hess(&v(&[0.0]))[(0, 0)], 1.0);
        assert!(p.potential_grad(&v(&[PI]))[0].abs() < 1e-15);
        let p = builtin_pendulum(2.0, 0.5, 9.81, 0.1).unwrap();
        assert_eq!(p.mass(&v(&[1.234]))[(0, 0)], 0.5);
    }

    #[test]
    fn pendulum_rejects_bad_parameters() {
        assert!(matches!(
            builtin_pendulum(0.0, 1.0, 1.0, 0.0),
            Err(Error::InvalidParameter { name: "mass_kg", .. })
        ));
        assert!(matches!(
            builtin_pendulum(1.0, -1.0, 1.0, 0.0),
            Err(Error::InvalidParameter { name: "length_m", .. })
        ));
        assert!(builtin_pendulum(1.0, 1.0, 1.0, -0.1).is_err());
    }

    #[test]
    fn annihilator_cases() {
        assert_eq!(left_annihilator(&DMatrix::identity(2, 2)).unwrap().shape(), (0, 2));

        let a = left_annihilator(&DMatrix::from_column_slice(2, 1, &[1.0, 0.0])).unwrap();
        assert_eq!(a.shape(), (1, 2));
        assert!(a[(0, 0)].abs() < 1e-15);
        assert_relative_eq!(a[(0, 1)].abs(), 1.0, epsilon = 1e-15);

        let g = DMatrix::from_column_slice(2, 1, &[1.0, 1.0]);
        let a = left_annihilator(&g).unwrap();
        assert!((&a * &g).amax() < 1e-14);
        assert_relative_eq!(a[(0, 0)], -a[(0, 1)], epsilon = 1e-14);
    }

    #[test]
    fn annihilator_three_by_one() {
        let g = DMatrix::from_column_slice(3, 1, &[1.0, 2.0, -0.5]);
        let a = left_annihilator(&g).unwrap();
        assert_eq!(a.shape(), (2, 3));
        assert!((&a * &g).amax() < 1e-14);
        assert_eq!(a.clone().svd(false, false).rank(1e-10), 2);
    }

    #[test]
    fn annihilator_rejects_rank_deficient() {
        let g = DMatrix::from_row_slice(3, 2, &[1.0, 2.0, 2.0, 4.0, 0.0, 0.0]);
        assert!(matches!(left_annihilator(&g), Err(Error::Rank { rank: 1, expected: 2 })));
    }

    #[test]
    fn equilibrium_manipulator() {
        let model = builtin_manipulator();
        let eq = assign_equilibrium(&model, &v(&[0.6, 0.8]), &linalg::diag(&[35.0, 20.0])).unwrap();
        assert_relative_eq!(eq.kappa[0], -0.6, epsilon = 1e-15);
        assert_relative_eq!(eq.kappa[1], -0.8, epsilon = 1e-15);
        assert_eq!(eq.u_star, v(&[0.0, 0.0]));
    }

    #[test]
    fn equilibrium_pendulum() {
        let p = builtin_pendulum(1.0, 1.0, 1.0, 0.0).unwrap();
        let eq = assign_equilibrium(&p, &v(&[0.0]), &linalg::diag(&[3.0])).unwrap();
        assert_eq!(eq.kappa[0], 0.0);

        let eq = assign_equilibrium(&p, &v(&[PI / 4.0]), &linalg::diag(&[2.0])).unwrap();
        assert_relative_eq!(eq.u_star[0], (PI / 4.0).sin(), epsilon = 1e-14);
        assert_relative_eq!(eq.kappa[0], -PI / 4.0 - (PI / 4.0).sin() / 2.0, epsilon = 1e-14);
        assert_relative_eq!(eq.kappa[0], -1.1390, epsilon = 1e-4);
    }

    #[test]
    fn unassignable_equilibrium() {
        // Unactuated second coordinate with a spring: only q2 = 0 is assignable.
        let model = LinearModel::new(
            DMatrix::identity(2, 2),
            DMatrix::identity(2, 2),
            DMatrix::zeros(2, 2),
            DMatrix::from_column_slice(2, 1, &[1.0, 0.0]),
        )
        .unwrap();
        let ki = linalg::diag(&[1.0]);
        assert!(assign_equilibrium(&model, &v(&[0.3, 0.0]), &ki).is_ok());
        assert!(matches!(
            assign_equilibrium(&model, &v(&[0.3, 0.2]), &ki),
            Err(Error::UnassignableEquilibrium { .. })
        ));
    }

    #[test]
    fn equilibrium_requires_pd_ki() {
        let model = builtin_manipulator();
        let r = assign_equilibrium(&model, &v(&[0.6, 0.8]), &linalg::diag(&[1.0, 0.0]));
        assert!(matches!(r, Err(Error::InvalidParameter { name: "Ki", .. })));
    }

    fn check_model_derivatives(model: &dyn MechanicalModel, center: &DVector<f64>, seed: u64) {
        let n = model.dof();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let h = 1e-5;
        for _ in 0..100 {
            let q = center + DVector::from_fn(n, |_, _| rng.gen_range(-1.0..1.0));
            let p = DVector::from_fn(n, |_, _| rng.gen_range(-1.0..1.0));

            let mass = model.mass(&q);
            assert!(linalg::is_symmetric(&mass));
            assert!(linalg::lambda_min(&mass) > 0.0);
            let damp = model.damping(&q, &p);
            assert!(linalg::is_symmetric(&damp));
            assert!(linalg::lambda_min(&damp) >= -1e-12);

            let grad = model.potential_grad(&q);
            let hess = model.potential_hess(&q);
            for i in 0..n {
                let mut qp = q.clone();
                let mut qm = q.clone();
                qp[i] += h;
                qm[i] -= h;
                let fd = (model.potential(&qp) - model.potential(&qm)) / (2.0 * h);
                let scale = grad[i].abs().max(1e-3);
                assert!((fd - grad[i]).abs() / scale < 1e-5, "grad {i}: {fd} vs {}", grad[i]);
                let fd_col = (model.potential_grad(&qp) - model.potential_grad(&qm)) / (2.0 * h);
                for j in 0..n {
                    let scale = hess[(j, i)].abs().max(1e-3);
                    assert!((fd_col[j] - hess[(j, i)]).abs() / scale < 1e-5);
                }
                let dm_fd = (model.mass(&qp) - model.mass(&qm)) / (2.0 * h);
                assert!((dm_fd - model.mass_partial(&q, i)).amax() < 1e-8);
            }
        }
    }

    #[test]
    fn builtin_derivatives_match_finite_differences() {
        check_model_derivatives(&builtin_manipulator(), &v(&[0.6, 0.8]), 1);
        check_model_derivatives(&builtin_pendulum(1.3, 0.7, 9.81, 0.2).unwrap(), &v(&[0.4]), 2);
        let lin = LinearModel::new(
            linalg::diag(&[2.0, 1.0]),
            DMatrix::from_row_slice(2, 2, &[3.0, 1.0, 1.0, 2.0]),
            linalg::diag(&[0.1, 0.0]),
            DMatrix::from_column_slice(2, 1, &[1.0, 1.0]),
        )
        .unwrap();
        check_model_derivatives(&lin, &v(&[0.0, 0.0]), 3);
    }

    #[test]
    fn default_mass_partial_is_finite_difference() {
        struct NoAnalytic(PlanarManipulator);
        impl MechanicalModel for NoAnalytic {
            fn dof(&self) -> usize {
                2
            }
            fn mass(&self, q: &DVector<f64>) -> DMatrix<f64> {
                self.0.mass(q)
            }
            fn potential(&self, q: &DVector<f64>) -> f64 {
                self.0.potential(q)
            }
            fn potential_grad(&self, q: &DVector<f64>) -> DVector<f64> {
                self.0.potential_grad(q)
            }
            fn potential_hess(&self, q: &DVector<f64>) -> DMatrix<f64> {
                self.0.potential_hess(q)
            }
            fn damping(&self, q: &DVector<f64>, p: &DVector<f64>) -> DMatrix<f64> {
                self.0.damping(q, p)
            }
            fn input_matrix(&self) -> &DMatrix<f64> {
                self.0.input_matrix()
            }
        }
        let m = builtin_manipulator();
        let fd = NoAnalytic(m.clone());
        let q = v(&[0.1, 0.9]);
        let dir = v(&[0.3, -0.7]);
        assert!((fd.mass_directional(&q, &dir) - m.mass_directional(&q, &dir)).amax() < 1e-8);
    }

    #[test]
    fn linear_model_validation() {
        let bad_mass = LinearModel::new(
            linalg::diag(&[1.0, -1.0]),
            DMatrix::zeros(2, 2),
            DMatrix::zeros(2, 2),
            DMatrix::identity(2, 2),
        );
        assert!(bad_mass.is_err());
        let bad_g = LinearModel::new(
            DMatrix::identity(2, 2),
            DMatrix::zeros(2, 2),
            DMatrix::zeros(2, 2),
            DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]),
        );
        assert!(matches!(bad_g, Err(Error::Rank { .. })));
    }
}
