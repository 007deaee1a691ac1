use std::sync::Arc;

use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use snse::hypothesis::{
    certify, check_h1_h2, check_h3i, check_h4_h5, generator_gap, generator_gap_panel, generator_l, generator_leps,
    h4_gap, martingale_diagnostic, CheckParams,
};
use snse::integrators::{simulate_brownian, BrownianNoise, DriftForce, SolverConfig};
use snse::levy::{build_h, BaseSigma, HFamily, JumpChannel, JumpKernel, LevyMeasure, ThetaFamily, ThetaKernel};
use snse::model::Model;
use snse::spectral::{Basis, SpectralField};
use snse::Error;

fn kernel(sigma: &BaseSigma, theta: ThetaFamily, fam: HFamily, nu: &LevyMeasure, eps: f64) -> JumpKernel {
    let h = build_h(fam, eps, nu).unwrap();
    let ch = JumpChannel::new(sigma.clone(), ThetaKernel::new(theta, eps), h, None).unwrap();
    JumpKernel::new(eps, vec![ch]).unwrap()
}

fn model(basis: &Arc<Basis>, sigma: BaseSigma, theta: ThetaFamily, fam: HFamily, nu: &LevyMeasure, grid: &[f64]) -> Model {
    let kernels = grid
        .iter()
        .map(|&e| kernel(&sigma, theta.clone(), fam, nu, e))
        .collect();
    let noise = BrownianNoise::new(vec![sigma]).unwrap();
    Model::new(basis.clone(), DriftForce::Linear { a: 0.5 }, noise, kernels).unwrap()
}

const GRID: [f64; 5] = [0.2, 0.1, 0.05, 0.02, 0.01];

fn quick() -> CheckParams {
    CheckParams { samples: 40, ..CheckParams::default() }
}

#[test]
fn identity_sigma_with_normalized_h_has_zero_gaps() {
    let basis = Basis::new(2).unwrap();
    let nu = LevyMeasure::stable(1.0).unwrap();
    let m = model(&basis, BaseSigma::Scaled { c: 1.0 }, ThetaFamily::One, HFamily::Annulus, &nu, &GRID);
    let x = SpectralField::random(&basis, &mut ChaCha8Rng::seed_from_u64(1), 1.0);
    for k in &m.kernels {
        assert_eq!(h4_gap(k, &x).unwrap(), 0.0);
        for pair in [(0, 0), (2, 5)] {
            assert_eq!(generator_gap(k, pair, &x).unwrap(), 0.0);
        }
    }
    let r = check_h4_h5(&m, &quick()).unwrap();
    assert!(r.rows.iter().filter(|r| r.hypothesis == "H4_gap").all(|r| r.value == 0.0));
    assert!(r.pass());
}

#[test]
fn zero_jump_coefficient_matches_zero_brownian_generator() {
    let basis = Basis::new(3).unwrap();
    let nu = LevyMeasure::stable(1.0).unwrap();
    let zero = BaseSigma::Constant { field: vec![0.0; basis.dim()] };
    let m = model(&basis, zero, ThetaFamily::Cosine, HFamily::Annulus, &nu, &[0.1]);
    let x = SpectralField::random(&basis, &mut ChaCha8Rng::seed_from_u64(4), 1.0);
    for pair in [(0, 0), (1, 3), (7, 2)] {
        let l = generator_l(&m, pair, &x).unwrap();
        let le = generator_leps(&m, &m.kernels[0], pair, &x).unwrap();
        assert_eq!(l, le);
    }
}

#[test]
fn generator_drift_matches_finite_difference_along_the_flow() {
    // with σ ≡ 0, L f(x) = d/ds f(x + s·b(x)) at s = 0, b the drift vector field
    let basis = Basis::new(3).unwrap();
    let nu = LevyMeasure::stable(1.0).unwrap();
    let zero = BaseSigma::Constant { field: vec![0.0; basis.dim()] };
    let m = model(&basis, zero, ThetaFamily::One, HFamily::Annulus, &nu, &[0.1]);
    let x = SpectralField::random(&basis, &mut ChaCha8Rng::seed_from_u64(8), 1.0);
    let b = x.nonlinear_b();
    let f = m.drift.apply(&x).unwrap();
    let drift: Vec<f64> = x
        .coeffs()
        .iter()
        .zip(basis.eigenvalues())
        .zip(b.coeffs().iter().zip(f.coeffs()))
        .map(|((u, l), (b, f))| -l * u - b + f)
        .collect();
    let d = 1e-5;
    for (k, j) in [(0, 0), (0, 4), (3, 9)] {
        let g = |s: f64| {
            let y: Vec<f64> = x.coeffs().iter().zip(&drift).map(|(u, v)| u + s * v).collect();
            y[k] * y[j]
        };
        let fd = (g(d) - g(-d)) / (2.0 * d);
        let l = generator_l(&m, (k, j), &x).unwrap();
        assert!((fd - l).abs() < 1e-7 * (1.0 + l.abs()), "({k},{j}): {fd} vs {l}");
    }
}

#[test]
fn jump_generator_matches_dense_grid_quadrature() {
    let basis = Basis::new(2).unwrap();
    let nu = LevyMeasure::stable(1.0).unwrap();
    let eps = 0.05;
    let sigma = BaseSigma::Saturating { c: 1.0 };
    let m = model(&basis, sigma.clone(), ThetaFamily::Cosine, HFamily::Annulus, &nu, &[eps]);
    let x = SpectralField::random(&basis, &mut ChaCha8Rng::seed_from_u64(12), 1.0).scaled(1.7);
    let r = x.norm_h();
    let h = build_h(HFamily::Annulus, eps, &nu).unwrap();
    let theta = ThetaKernel::new(ThetaFamily::Cosine, eps);
    // midpoint rule in t = ln z with 10⁶ nodes; ν_1(dz) = z⁻² dz = z⁻¹ dt per sign
    let n = 1_000_000;
    let (a, b) = (eps.ln(), 0.0);
    let step = (b - a) / n as f64;
    let mut phi2 = 0.0;
    for i in 0..n {
        let z = (a + (i as f64 + 0.5) * step).exp();
        let mut s = 0.0;
        for zz in [z, -z] {
            let th = theta.eval(zz);
            s += (th / (1.0 + th * r) * h.eval(zz)).powi(2);
        }
        phi2 += s / z;
    }
    phi2 *= step;
    let mut dir = vec![0.0; basis.dim()];
    sigma.direction_into(x.coeffs(), &mut dir);
    for (k, j) in [(0, 0), (1, 3)] {
        let brownian = (dir[k] * dir[j]) / (1.0 + r).powi(2);
        let oracle = generator_l(&m, (k, j), &x).unwrap() - brownian + dir[k] * dir[j] * phi2;
        let got = generator_leps(&m, &m.kernels[0], (k, j), &x).unwrap();
        assert!((got - oracle).abs() < 1e-8, "({k},{j}): {got} vs {oracle}");
    }
}

#[test]
fn closed_form_sup_jump_matches_brute_force() {
    let basis = Basis::new(2).unwrap();
    let nu = LevyMeasure::stable(1.0).unwrap();
    let radius = 1.5;
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let sphere: Vec<SpectralField> = (0..20)
        .map(|_| {
            let u = SpectralField::random(&basis, &mut rng, 1.0);
            u.scaled(radius / u.norm_h())
        })
        .collect();
    for sigma in [BaseSigma::Scaled { c: 0.3 }, BaseSigma::Saturating { c: 1.0 }] {
        for theta in [ThetaFamily::One, ThetaFamily::Cosine] {
            for fam in [HFamily::Annulus, HFamily::InnerLinear] {
                let m = model(&basis, sigma.clone(), theta.clone(), fam, &nu, &[0.2, 0.05]);
                let table = check_h3i(&m, radius).unwrap();
                for (e, closed) in table.epsilons.iter().zip(&table.sup_jump) {
                    let k = m.kernels.iter().find(|k| k.epsilon() == *e).unwrap();
                    let (lo, hi) = k.channels()[0].h().support();
                    let lo = if lo > 0.0 { lo } else { hi * 1e-6 };
                    let zs: Vec<f64> = (0..=20_000)
                        .map(|i| lo * (hi / lo).powf(i as f64 / 20_000.0))
                        .collect();
                    let mut best = 0.0f64;
                    for u in &sphere {
                        for &z in &zs {
                            for zz in [z, -z] {
                                let s = k.eval_sigma_eps(0, u, zz).unwrap();
                                best = best.max(s.norm_h());
                            }
                        }
                    }
                    let rel = (closed - best).abs() / best;
                    assert!(rel < 0.01, "{sigma:?} {theta:?} {fam:?} eps={e}: {closed} vs {best}");
                }
                assert!(table.pass());
            }
        }
    }
}

#[test]
fn outer_family_under_stable_measure_fails_sup_jump_check() {
    let basis = Basis::new(1).unwrap();
    let sigma = BaseSigma::Scaled { c: 1.0 };
    for alpha in [0.5, 1.0, 1.5] {
        let nu = LevyMeasure::stable(alpha).unwrap();
        let m = model(&basis, sigma.clone(), ThetaFamily::One, HFamily::OuterLinear, &nu, &GRID);
        let table = check_h3i(&m, 1.0).unwrap();
        for (e, s) in table.epsilons.iter().zip(&table.sup_jump) {
            let closed = ((2.0 - alpha) / (2.0 * (e.powf(alpha) - e * e))).sqrt();
            assert!((s - closed).abs() < 1e-8 * closed, "alpha={alpha} eps={e}: {s} vs {closed}");
        }
        assert!(!table.pass());
        let cert = certify(&m, &quick()).unwrap();
        assert!(cert.notes.iter().any(|n| n.contains("H.3(i) violated: s(ε) increasing")));
    }
    let pt = LevyMeasure::power_tail(0.5).unwrap();
    let m = model(&basis, sigma, ThetaFamily::One, HFamily::OuterLinear, &pt, &GRID);
    assert!(check_h3i(&m, 1.0).unwrap().pass());
}

#[test]
fn saturating_cosine_family_is_certified_and_report_is_deterministic() {
    let basis = Basis::new(2).unwrap();
    let nu = LevyMeasure::stable(1.0).unwrap();
    let m = model(&basis, BaseSigma::Saturating { c: 1.0 }, ThetaFamily::Cosine, HFamily::Annulus, &nu, &GRID);
    let params = quick();
    let cert = certify(&m, &params).unwrap();
    assert!(cert.pass(), "{:?}", cert.report().rows);
    assert!(cert.gap.strictly_decreasing && cert.gap.final_below_tol);
    assert_eq!(cert.gap.envelope_ok, Some(true));
    let mut a = Vec::new();
    cert.report().write_csv(&mut a).unwrap();
    let mut b = Vec::new();
    certify(&m, &params).unwrap().report().write_csv(&mut b).unwrap();
    assert_eq!(a, b);
    let text = String::from_utf8(a).unwrap();
    assert!(text.starts_with("hypothesis,epsilon,constant_or_gap,witness_id,pass\n"));
}

#[test]
fn growth_envelope_holds_on_many_random_points() {
    let basis = Basis::new(2).unwrap();
    let nu = LevyMeasure::stable(1.0).unwrap();
    let m = model(&basis, BaseSigma::Saturating { c: 1.0 }, ThetaFamily::Cosine, HFamily::InnerLinear, &nu, &GRID);
    let h12 = check_h1_h2(&m, &quick()).unwrap();
    let c = h12.max_value("H2_growth").unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(30);
    for i in 0..1000 {
        let x = SpectralField::random(&basis, &mut rng, 1.0).scaled(10f64.powf(i as f64 / 333.0 - 1.0));
        let scale = 1.0 + x.norm_h().powi(2);
        for k in &m.kernels {
            assert!(generator_gap(k, (0, 1), &x).unwrap() <= c * scale);
        }
    }
}

#[test]
fn lipschitz_constants_of_scaled_sigma() {
    // σ = c·u and F = a·u: every Lipschitz ratio equals a² + c² exactly when θ ≡ 1
    let basis = Basis::new(2).unwrap();
    let nu = LevyMeasure::stable(1.0).unwrap();
    let m = model(&basis, BaseSigma::Scaled { c: 0.3 }, ThetaFamily::One, HFamily::Annulus, &nu, &[0.1, 0.05]);
    let r = check_h1_h2(&m, &quick()).unwrap();
    let expect = 0.25 + 0.09;
    assert!((r.row("H1_lipschitz", None).unwrap().value - expect).abs() < 1e-12);
    assert!((r.row("H2_lipschitz", Some(0.05)).unwrap().value - expect).abs() < 1e-12);
    assert!(r.pass());
}

#[test]
fn panel_rejects_out_of_range_pairs() {
    let basis = Basis::new(1).unwrap();
    let nu = LevyMeasure::stable(1.0).unwrap();
    let m = model(&basis, BaseSigma::Scaled { c: 0.1 }, ThetaFamily::One, HFamily::Annulus, &nu, &[0.1]);
    let p = CheckParams { pairs: vec![(0, 8)], ..quick() };
    assert!(matches!(generator_gap_panel(&m, &p, None), Err(Error::ModeIndex { index: 8, dim: 8 })));
}

#[test]
fn martingale_diagnostic_needs_enough_paths_and_accepts_deterministic_paths() {
    let basis = Basis::new(2).unwrap();
    let h = SpectralField::random(&basis, &mut ChaCha8Rng::seed_from_u64(2), 1.0);
    let config = SolverConfig { horizon: 0.1, dt: 1e-3, record_stride: 10, tracked_modes: vec![0, 3], ..SolverConfig::default() };
    let noise = BrownianNoise::new(vec![BaseSigma::Scaled { c: 0.0 }]).unwrap();
    let path = simulate_brownian(&h, &config, &DriftForce::Zero, &noise, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
    let paths = vec![path; 100];
    assert!(matches!(
        martingale_diagnostic(&paths[..99], 0, 0.0),
        Err(Error::InsufficientPaths { needed: 100, got: 99 })
    ));
    let rep = martingale_diagnostic(&paths, 1, 1e-3).unwrap();
    assert!(rep.pass);
    assert_eq!(rep.se_at_max, 0.0);
    assert!(martingale_diagnostic(&paths, 2, 0.0).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 32, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn gap_is_symmetric_and_equals_generator_difference(seed in any::<u64>(), scale in 0.1f64..10.0, k in 0usize..8, j in 0usize..8) {
        let basis = Basis::new(1).unwrap();
        let nu = LevyMeasure::stable(1.0).unwrap();
        let m = model(&basis, BaseSigma::Saturating { c: 1.0 }, ThetaFamily::Cosine, HFamily::Annulus, &nu, &[0.1]);
        let x = SpectralField::random(&basis, &mut ChaCha8Rng::seed_from_u64(seed), 1.0);
        let x = x.scaled(scale / x.norm_h());
        let kern = &m.kernels[0];
        let g = generator_gap(kern, (k, j), &x).unwrap();
        prop_assert_eq!(g, generator_gap(kern, (j, k), &x).unwrap());
        let diff = generator_leps(&m, kern, (k, j), &x).unwrap() - generator_l(&m, (k, j), &x).unwrap();
        let size = generator_l(&m, (k, j), &x).unwrap().abs() + 1.0;
        prop_assert!((diff.abs() - g).abs() <= 1e-12 * size);
    }
}
