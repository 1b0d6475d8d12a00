//! Shared fixtures: random SPD triples and an eigenvalue oracle that does not
//! go through the library's Schur-based solver.
#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use nalgebra::Complex;
use phtune::model::{assign_equilibrium, builtin_manipulator, Equilibrium, LinearModel};
use phtune::saddleform::{Gains, Rpw};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type C64 = Complex<f64>;

pub const Q_STAR: [f64; 2] = [0.6, 0.8];

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn v(xs: &[f64]) -> DVector<f64> {
    DVector::from_row_slice(xs)
}

/// SPD matrix with eigenvalues drawn from `[lo, hi]` and a random basis.
pub fn random_spd(rng: &mut impl Rng, n: usize, lo: f64, hi: f64) -> DMatrix<f64> {
    let a = DMatrix::from_fn(n, n, |_, _| rng.gen_range(-1.0..1.0));
    let q = a.qr().q();
    let d = DMatrix::from_diagonal(&DVector::from_fn(n, |_, _| rng.gen_range(lo..hi)));
    let s = &q * d * q.transpose();
    (&s + s.transpose()) * 0.5
}

/// Random `(R, P, W)`. Every third triple has `R` rescaled so the
/// no-overshoot condition holds with some slack.
pub fn random_triple(rng: &mut impl Rng, n: usize, index: usize) -> Rpw {
    let mut r = random_spd(rng, n, 0.2, 8.0);
    let p = random_spd(rng, n, 0.2, 8.0);
    let w = random_spd(rng, n, 0.2, 4.0);
    if index % 3 == 0 {
        let need = 2.0 * (sym_max(&p) * sym_max(&w)).sqrt();
        r *= 1.05 * need / sym_min(&r);
    }
    Rpw { r, p, w }
}

/// `count` triples cycling through dimensions 1..=5.
pub fn triple_suite(seed: u64, count: usize) -> Vec<Rpw> {
    let mut rng = rng(seed);
    (0..count).map(|k| random_triple(&mut rng, 1 + k % 5, k)).collect()
}

pub fn sym_eigs(a: &DMatrix<f64>) -> Vec<f64> {
    let mut ev: Vec<f64> = a.clone().symmetric_eigen().eigenvalues.iter().copied().collect();
    ev.sort_by(f64::total_cmp);
    ev
}

pub fn sym_min(a: &DMatrix<f64>) -> f64 {
    sym_eigs(a)[0]
}

pub fn sym_max(a: &DMatrix<f64>) -> f64 {
    *sym_eigs(a).last().unwrap()
}

/// Characteristic polynomial coefficients `c[0..=n]` of `det(λI - A)`,
/// highest degree first, by Faddeev–LeVerrier.
pub fn char_poly(a: &DMatrix<f64>) -> Vec<f64> {
    let n = a.nrows();
    let mut c = vec![0.0; n + 1];
    c[0] = 1.0;
    let mut m = DMatrix::<f64>::zeros(n, n);
    for k in 1..=n {
        m = a * &m + DMatrix::identity(n, n) * c[k - 1];
        c[k] = -(a * &m).trace() / k as f64;
    }
    c
}

/// Polynomial roots by Aberth iteration, polished with Newton steps.
pub fn poly_roots(c: &[f64]) -> Vec<C64> {
    let n = c.len() - 1;
    if n == 0 {
        return Vec::new();
    }
    let eval = |z: C64| {
        let mut p = C64::new(c[0], 0.0);
        let mut dp = C64::new(0.0, 0.0);
        for &ck in &c[1..] {
            dp = dp * z + p;
            p = p * z + ck;
        }
        (p, dp)
    };
    let radius = 1.0 + c[1..].iter().map(|x| x.abs()).fold(0.0, f64::max);
    let mut z: Vec<C64> = (0..n)
        .map(|k| C64::from_polar(radius, 0.4 + 2.0 * std::f64::consts::PI * k as f64 / n as f64))
        .collect();
    for _ in 0..2000 {
        let mut moved = 0.0f64;
        for i in 0..n {
            let (p, dp) = eval(z[i]);
            if p.norm() == 0.0 {
                continue;
            }
            let ratio = p / dp;
            let repulsion: C64 = (0..n)
                .filter(|&j| j != i)
                .map(|j| C64::new(1.0, 0.0) / (z[i] - z[j]))
                .sum();
            let step = ratio / (C64::new(1.0, 0.0) - ratio * repulsion);
            z[i] -= step;
            moved = moved.max(step.norm() / z[i].norm().max(1.0));
        }
        if moved < 1e-15 {
            break;
        }
    }
    for zi in &mut z {
        for _ in 0..3 {
            let (p, dp) = eval(*zi);
            if dp.norm() > 0.0 {
                *zi -= p / dp;
            }
        }
    }
    z
}

/// Eigenvalues through the characteristic polynomial.
pub fn oracle_eigenvalues(a: &DMatrix<f64>) -> Vec<C64> {
    poly_roots(&char_poly(a))
}

/// Worst of: `σ_min(A - λI) / ‖A‖` over the claimed eigenvalues, and the
/// relative mismatch of `Σλ` against the trace and `Πλ` against the
/// determinant. Small values mean `eigs` is the spectrum of `a`.
pub fn backward_error(a: &DMatrix<f64>, eigs: &[C64]) -> f64 {
    let n = a.nrows();
    let norm = a.norm().max(f64::MIN_POSITIVE);
    let ac = a.map(|x| C64::new(x, 0.0));
    let mut worst = 0.0f64;
    for &l in eigs {
        let shifted = &ac - DMatrix::<C64>::identity(n, n) * l;
        let sv = shifted.singular_values();
        worst = worst.max(sv.min() / norm);
    }
    let sum: C64 = eigs.iter().sum();
    worst = worst.max((sum - a.trace()).norm() / (n as f64 * norm));
    let prod: C64 = eigs.iter().product();
    let det = a.determinant();
    let scale = eigs.iter().map(|z| z.norm()).product::<f64>().max(f64::MIN_POSITIVE);
    worst.max((prod - det).norm() / scale)
}

/// Largest distance after greedy nearest matching, relative to `max(1, |λ|)`.
pub fn spectrum_distance(a: &[C64], b: &[C64]) -> f64 {
    assert_eq!(a.len(), b.len());
    let scale = a.iter().chain(b).map(|z| z.norm()).fold(1.0, f64::max);
    let mut used = vec![false; b.len()];
    let mut worst = 0.0f64;
    for za in a {
        let (idx, d) = b
            .iter()
            .enumerate()
            .filter(|(i, _)| !used[*i])
            .map(|(i, zb)| (i, (za - zb).norm()))
            .min_by(|x, y| x.1.total_cmp(&y.1))
            .unwrap();
        used[idx] = true;
        worst = worst.max(d);
    }
    worst / scale
}

/// A fully actuated linear plant whose closed loop under the returned gains
/// has exactly the triple `(R, P, W)`: `G = I`, `Kp = R/2`, `Ki = P`,
/// `Kd = W/3`.
pub fn plant_for_triple(t: &Rpw) -> (LinearModel, Gains, Equilibrium) {
    let n = t.r.nrows();
    let model = LinearModel::new(
        &t.w * (2.0 / 3.0),
        DMatrix::zeros(n, n),
        &t.r * 0.5,
        DMatrix::identity(n, n),
    )
    .unwrap();
    let gains = Gains::new(&t.r * 0.5, t.p.clone(), &t.w * (1.0 / 3.0)).unwrap();
    let eq = assign_equilibrium(&model, &DVector::zeros(n), gains.ki()).unwrap();
    (model, gains, eq)
}

pub fn table_gains(name: &str) -> Gains {
    match name {
        "RT" => Gains::diagonal(&[1.0, 0.5], &[50.0, 30.0], &[0.0, 0.0]),
        "E1" => Gains::diagonal(&[7.3972, 9.2], &[35.0, 20.0], &[0.0, 0.0]),
        "E2" => Gains::diagonal(&[3.9136, 4.1710], &[50.0, 45.0], &[0.08, 0.15]),
        _ => panic!("unknown gain set {name}"),
    }
    .unwrap()
}

pub fn manipulator_eq(gains: &Gains) -> Equilibrium {
    assign_equilibrium(&builtin_manipulator(), &v(&Q_STAR), gains.ki()).unwrap()
}
