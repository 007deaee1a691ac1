mod common;

use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use snse::spectral::{verify_b_estimates, Basis, SpectralField};

#[test]
fn nonlinear_matches_convolution_oracle() {
    for n in 1..=4 {
        let basis = Basis::new(n).unwrap();
        let d = basis.dim();
        let t = common::oracle_tensor(&basis);
        let mut rng = ChaCha8Rng::seed_from_u64(100 + n as u64);
        for _ in 0..25 {
            let u = SpectralField::random(&basis, &mut rng, 0.0);
            let fast = u.nonlinear_b();
            let slow = common::oracle_project(&t, d, u.coeffs(), u.coeffs());
            for (a, b) in fast.coeffs().iter().zip(&slow) {
                assert!((a - b).abs() <= 1e-9, "n={n}: {a} vs {b}");
            }
        }
    }
}

#[test]
fn bilinear_matches_convolution_oracle() {
    let basis = Basis::new(3).unwrap();
    let d = basis.dim();
    let t = common::oracle_tensor(&basis);
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for _ in 0..20 {
        let u = SpectralField::random(&basis, &mut rng, 0.5);
        let v = SpectralField::random(&basis, &mut rng, 0.5);
        let w = SpectralField::random(&basis, &mut rng, 0.5);
        let fast = u.bilinear_b(&v, &w).unwrap();
        let proj = common::oracle_project(&t, d, u.coeffs(), v.coeffs());
        let slow: f64 = proj.iter().zip(w.coeffs()).map(|(a, b)| a * b).sum();
        assert!((fast - slow).abs() <= 1e-9, "{fast} vs {slow}");
    }
}

#[test]
fn ladyzhenskaya_ratio_is_bounded_at_nmax_8() {
    let basis = Basis::new(8).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let r = verify_b_estimates(&basis, 1000, &mut rng).unwrap();
    println!("ratio8 = {} ratio9 = {}", r.max_ratio_ladyzhenskaya, r.max_ratio_h2);
    assert!(r.max_ratio_ladyzhenskaya <= 1.0);
    assert!(r.max_ratio_h2.is_finite() && r.max_ratio_h2 > 0.0);
}

fn field(basis: &std::sync::Arc<Basis>) -> impl Strategy<Value = SpectralField> {
    let b = basis.clone();
    prop::collection::vec(-2.0f64..2.0, basis.dim())
        .prop_map(move |c| SpectralField::from_coeffs(&b, c).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 64, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn b_is_antisymmetric_in_last_two(
        (u, v, w) in {
            let b = Basis::new(3).unwrap();
            (field(&b), field(&b), field(&b))
        }
    ) {
        let bvw = u.bilinear_b(&v, &w).unwrap();
        let bwv = u.bilinear_b(&w, &v).unwrap();
        let n = u.norms();
        let scale = n.h * v.norms().v * w.norms().v + 1.0;
        prop_assert!((bvw + bwv).abs() <= 1e-10 * scale);
        let bvv = u.bilinear_b(&v, &v).unwrap();
        prop_assert!(bvv.abs() <= 1e-10 * (n.h * v.norms().v.powi(2) + 1e-300));
    }

    #[test]
    fn energy_is_conserved(u in field(&Basis::new(4).unwrap())) {
        let bu = u.nonlinear_b();
        let h = u.norm_h();
        prop_assert!(bu.inner(&u).unwrap().abs() <= 1e-12 * (h * h * h).max(1e-300) * 10.0);
    }

    #[test]
    fn nonlinear_agrees_with_bilinear_diagonal(u in field(&Basis::new(2).unwrap())) {
        let a = u.nonlinear_b();
        let b = u.bilinear_project(&u).unwrap();
        for (x, y) in a.coeffs().iter().zip(b.coeffs()) {
            prop_assert!((x - y).abs() <= 1e-10 * (1.0 + x.abs()));
        }
    }
}
