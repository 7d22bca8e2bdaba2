//! Property-based checks of the spectral layer and the solver.

use dynamo_forge::flow::{u_flow, w_flow, TimeFlow};
use dynamo_forge::rotation::SignedPermutation;
use dynamo_forge::solver::{Solver, SolverParams};
use dynamo_forge::spectral::{FourierField, WaveVector};
use num_complex::Complex64;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const N: usize = 3;

fn random_field(seed: u64, n: usize, radius: i32) -> FourierField {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut f = FourierField::zeros(n);
    for x in -radius..=radius {
        for y in -radius..=radius {
            for z in -radius..=radius {
                let k = WaveVector::new(x, y, z);
                if k.is_zero() {
                    continue;
                }
                let v = [0, 1, 2].map(|_| Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)));
                f.set(k, v).unwrap();
            }
        }
    }
    f
}

/// Real-valued, solenoidal, mean-zero field.
fn random_physical_field(seed: u64, n: usize, radius: i32) -> FourierField {
    let f = random_field(seed, n, radius);
    let mut g = FourierField::zeros(n);
    for (k, c) in f.iter() {
        let cm = f.coefficient(-k);
        let sym = [0, 1, 2].map(|a| (c[a] + cm[a].conj()) * 0.5);
        g.set(k, sym).unwrap();
    }
    g.solenoidal_project()
}

fn unit_y() -> impl Strategy<Value = [f64; 3]> {
    [0.0..1.0f64, 0.0..1.0f64, 0.0..1.0f64]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn parseval(seed in any::<u64>()) {
        let f = random_field(seed, N, N as i32);
        let grid = f.to_physical(2 * N + 1).unwrap();
        prop_assert!((grid.mean_square() - f.l2_norm_sq()).abs() < 1e-12 * f.l2_norm_sq());
        let back = FourierField::from_physical(&grid, N).unwrap();
        prop_assert!(back.distance(&f).unwrap() < 1e-12 * f.l2_norm());
    }

    #[test]
    fn projection_is_idempotent_and_solenoidal(seed in any::<u64>()) {
        let f = random_field(seed, N, N as i32);
        let p = f.solenoidal_project();
        prop_assert!(p.relative_divergence() < 1e-14);
        prop_assert_eq!(p.mean(), [Complex64::new(0.0, 0.0); 3]);
        prop_assert!(p.solenoidal_project().distance(&p).unwrap() < 1e-15 * p.l2_norm().max(1.0));
        prop_assert!(p.l2_norm() <= f.l2_norm() * (1.0 + 1e-15));
    }

    #[test]
    fn translations_form_a_group(seed in any::<u64>(), a in unit_y(), b in unit_y()) {
        let f = random_field(seed, N, 2);
        let ab = [a[0] + b[0], a[1] + b[1], a[2] + b[2]];
        let lhs = f.translate(a).translate(b);
        prop_assert!(lhs.distance(&f.translate(ab)).unwrap() < 1e-12 * f.l2_norm());
        prop_assert!((lhs.l2_norm() - f.l2_norm()).abs() < 1e-12 * f.l2_norm());
        let back = f.translate(a).translate([-a[0], -a[1], -a[2]]);
        prop_assert!(back.distance(&f).unwrap() < 1e-12 * f.l2_norm());
    }

    #[test]
    fn rotation_roundtrip(idx in 0usize..6) {
        let k = WaveVector::unit_modes()[idx];
        let p = SignedPermutation::to_ez(k).unwrap();
        prop_assert_eq!(p.apply_k(k), WaveVector::EZ);
        prop_assert_eq!(p.determinant(), 1);
        prop_assert_eq!(p.inverse().apply_k(WaveVector::EZ), k);
    }

    #[test]
    fn solve_is_linear(s0 in any::<u64>(), s1 in any::<u64>(), cr in -2.0..2.0f64, ci in -2.0..2.0f64) {
        let flow = w_flow(1.0);
        let solver = Solver::new(&flow, 1e-3, SolverParams::new(N, 1e-2)).unwrap();
        let b0 = random_field(s0, N, 1);
        let b1 = random_field(s1, N, 1);
        let c = Complex64::new(cr, ci);
        let lhs = solver.evolve(&b0.axpy(c, &b1).unwrap(), 0.0, 2.0).unwrap();
        let rhs = solver.evolve(&b0, 0.0, 2.0).unwrap().axpy(c, &solver.evolve(&b1, 0.0, 2.0).unwrap()).unwrap();
        prop_assert!(lhs.distance(&rhs).unwrap() < 1e-10 * rhs.l2_norm().max(1.0));
    }

    #[test]
    fn translation_covariance(seed in any::<u64>(), y in unit_y()) {
        let flow = w_flow(1.0);
        let moved = flow.translate(y);
        let p = SolverParams::new(N, 1e-2);
        let b0 = random_physical_field(seed, N, 1);
        let a = Solver::new(&moved, 1e-3, p).unwrap().evolve(&b0.translate(y), 0.0, 2.0).unwrap();
        let b = Solver::new(&flow, 1e-3, p).unwrap().evolve(&b0, 0.0, 2.0).unwrap().translate(y);
        prop_assert!(a.distance(&b).unwrap() < 1e-12 * b.l2_norm());
    }

    #[test]
    fn composition(seed in any::<u64>(), r in 0.1..1.9f64) {
        let flow = w_flow(1.0);
        let solver = Solver::new(&flow, 1e-3, SolverParams::new(N, 2e-3)).unwrap();
        let b0 = random_physical_field(seed, N, 1);
        let whole = solver.evolve(&b0, 0.0, 2.0).unwrap();
        let mid = solver.evolve(&b0, 0.0, r).unwrap();
        let split = solver.evolve(&mid, r, 2.0).unwrap();
        // different step grids on either side of r, and the envelope switch
        // points need not fall on step boundaries: agreement to solver accuracy
        let rel = whole.distance(&split).unwrap() / whole.l2_norm();
        prop_assert!(rel < 1e-5, "relative gap {rel:e}");
    }

    #[test]
    fn physical_fields_stay_real_and_solenoidal(seed in any::<u64>()) {
        let flow = u_flow(0.7);
        let b0 = random_physical_field(seed, N, 1);
        let b = Solver::new(&flow, 1e-3, SolverParams::new(N, 1e-2)).unwrap().evolve(&b0, 0.0, 1.0).unwrap();
        prop_assert!(b.reality_defect() < 1e-13 * b.l2_norm());
        prop_assert!(b.relative_divergence() < 1e-8);
        prop_assert_eq!(b.mean(), [Complex64::new(0.0, 0.0); 3]);
    }
}

#[test]
fn zero_flow_is_exact_heat() {
    let flow = TimeFlow::zero(0.0, 3.0);
    let b0 = random_physical_field(7, N, N as i32);
    for kappa in [1e-3, 1e-1] {
        let b = Solver::new(&flow, kappa, SolverParams::new(N, 1e-3)).unwrap().evolve(&b0, 0.0, 3.0).unwrap();
        for (k, c) in b0.iter() {
            let g = (-4.0 * std::f64::consts::PI.powi(2) * k.norm_sq() as f64 * kappa * 3.0).exp();
            let got = b.coefficient(k);
            for a in 0..3 {
                let want = c[a] * g;
                assert!((got[a] - want).norm() <= 1e-12 * want.norm().max(1e-300));
            }
        }
    }
}
