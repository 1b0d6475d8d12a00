mod common;

use common::*;
use phtune::model::builtin_manipulator;
use phtune::saddleform::{linearize_closed_loop, SaddleForm};
use phtune::spectral::{eigen_saddle, SpectralReport};
use proptest::prelude::*;

#[test]
fn char_poly_of_known_matrix() {
    let a = nalgebra::DMatrix::from_row_slice(2, 2, &[0.0, 1.0, -2.0, -3.0]);
    assert_eq!(char_poly(&a), vec![1.0, 3.0, 2.0]);
    let mut roots: Vec<f64> = oracle_eigenvalues(&a).iter().map(|z| z.re).collect();
    roots.sort_by(f64::total_cmp);
    assert!((roots[0] + 2.0).abs() < 1e-12 && (roots[1] + 1.0).abs() < 1e-12);
}

#[test]
fn schur_matches_polynomial_oracle_on_small_saddles() {
    // Dimensions 2 and 4 keep the characteristic polynomial well conditioned.
    let mut rng = rng(11);
    for k in 0..200 {
        let t = random_triple(&mut rng, 1 + k % 2, k);
        let form = SaddleForm::from_rpw(t).unwrap();
        let got = eigen_saddle(&form.n).unwrap();
        let want = oracle_eigenvalues(&form.n);
        assert!(spectrum_distance(&got, &want) < 1e-8, "triple {k}: {got:?} vs {want:?}");
    }
}

#[test]
fn table_spectra_match_oracle() {
    let model = builtin_manipulator();
    for name in ["RT", "E1", "E2"] {
        let g = table_gains(name);
        let eq = manipulator_eq(&g);
        let form = SaddleForm::build(&model, &g, &eq).unwrap();
        let got = eigen_saddle(&form.n).unwrap();
        assert!(spectrum_distance(&got, &oracle_eigenvalues(&form.n)) < 1e-8, "{name}");
        let a = linearize_closed_loop(&model, &g, &eq).unwrap();
        let neg: Vec<C64> = oracle_eigenvalues(&a).iter().map(|z| -z).collect();
        assert!(spectrum_distance(&got, &neg) < 1e-8, "{name}");
    }
}

#[test]
fn e1_eigenvalues() {
    let g = table_gains("E1");
    let form = SaddleForm::build(&builtin_manipulator(), &g, &manipulator_eq(&g)).unwrap();
    let mut re: Vec<f64> = oracle_eigenvalues(&form.n).iter().map(|z| z.re).collect();
    re.sort_by(f64::total_cmp);
    for (got, want) in re.iter().zip([2.20, 7.17, 12.58, 493.8]) {
        assert!((got - want).abs() / want < 5e-3, "{got} vs {want}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn spectral_report_is_consistent(seed in any::<u64>(), n in 1usize..=5) {
        let mut rng = rng(seed);
        let t = random_triple(&mut rng, n, seed as usize);
        let report = SpectralReport::from_rpw(t.clone()).unwrap();
        // Rise-time bound never exceeds what the slowest real part allows.
        let slowest = report.eigenvalues.iter().map(|z| z.re).fold(f64::INFINITY, f64::min);
        prop_assert!(report.rise_time.re_lambda_u <= slowest * (1.0 + 1e-9));
        // All eigenvalues in the open right half-plane.
        prop_assert!(slowest > 0.0);
        // Eigenvalues pass the backward-error oracle.
        let form = SaddleForm::from_rpw(t).unwrap();
        prop_assert!(backward_error(&form.n, &report.eigenvalues) < 1e-10);
    }
}
