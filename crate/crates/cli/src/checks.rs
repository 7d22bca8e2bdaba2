//! The verification suite: each check measures one residual and compares
//! it with its allowed bound.

use std::f64::consts::{E, PI};

use anyhow::Result;
use dynamo_forge::bessel::{self, bessel_j, hansen_integral};
use dynamo_forge::diagnostics::unique_continuation_certificate;
use dynamo_forge::eigen::{self, eigen3, Mat3};
use dynamo_forge::flow::{u_flow, v_flow, w_flow, TimeFlow};
use dynamo_forge::operator::{averaged_matrix, matrix_element, selection_rule_residual, translation_identity_residual, AnalyticMatrixSet};
use dynamo_forge::solver::{Solver, SolverParams};
use dynamo_forge::spectral::{FourierField, WaveVector};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::config::RunConfig;
use crate::output::CheckResult;

/// Frozen reference values of `J₀(π/2)` and `J₁(π/2)`.
pub const J0_HALF_PI: f64 = 0.472_001_215_768_234_8;
pub const J1_HALF_PI: f64 = 0.566_824_088_905_873_9;

/// The three explicit shear-flow families.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Shear {
    U,
    V,
    W,
}

impl Shear {
    pub const ALL: [Shear; 3] = [Shear::U, Shear::V, Shear::W];

    pub fn name(self) -> &'static str {
        match self {
            Shear::U => "U",
            Shear::V => "V",
            Shear::W => "W",
        }
    }

    pub fn flow(self, lambda: f64) -> TimeFlow {
        match self {
            Shear::U => u_flow(lambda),
            Shear::V => v_flow(lambda),
            Shear::W => w_flow(lambda),
        }
    }

    pub fn closed_form(self, set: &AnalyticMatrixSet, lambda: f64) -> Mat3 {
        match self {
            Shear::U => set.u(lambda),
            Shear::V => set.v(lambda),
            Shear::W => set.w(lambda),
        }
    }
}

/// Closed-form matrices, optionally with a corrupted `α` for fault injection.
pub fn analytic_set(cfg: &RunConfig) -> AnalyticMatrixSet {
    match cfg.verify.corrupt_alpha {
        Some(a) => AnalyticMatrixSet::with_constants(a, bessel::beta()),
        None => AnalyticMatrixSet::new(),
    }
}

/// Frobenius distance between the numeric `𝒯̂(e_z, e_z)` of `shear(λ)` at
/// κ = 0 over the flow lifetime and its closed form.
pub fn matrix_deviation(shear: Shear, lambda: f64, set: &AnalyticMatrixSet, params: &SolverParams) -> Result<f64> {
    matrix_deviation_at(shear, lambda, 0.0, set, params)
}

fn matrix_deviation_at(shear: Shear, lambda: f64, kappa: f64, set: &AnalyticMatrixSet, params: &SolverParams) -> Result<f64> {
    let a = numeric_matrix(shear, lambda, kappa, params)?;
    Ok(eigen::frobenius(&eigen::sub(&a, &shear.closed_form(set, lambda))))
}

pub fn numeric_matrix(shear: Shear, lambda: f64, kappa: f64, params: &SolverParams) -> Result<Mat3> {
    let flow = shear.flow(lambda);
    let (s, t) = flow.lifetime();
    Ok(matrix_element(&flow, kappa, s, t, WaveVector::EZ, WaveVector::EZ, params)?.a)
}

pub fn bessel_fixtures() -> Result<CheckResult> {
    let z = PI / 2.0;
    let mut worst: f64 = 0.0;
    for (n, want) in [(0u32, J0_HALF_PI), (1, J1_HALF_PI)] {
        let series = bessel_j(n, z)?;
        let quad = hansen_integral(n as i32, z, 64);
        worst = worst.max((series - want).abs()).max((quad.re - want).abs()).max(quad.im.abs());
    }
    Ok(CheckResult::below(
        "bessel_fixtures",
        worst,
        1e-13,
        "power series and trapezoid quadrature against frozen J0, J1 at pi/2".into(),
    ))
}

pub fn matrix_check(shear: Shear, lambda: f64, cfg: &RunConfig) -> Result<CheckResult> {
    let params = SolverParams::new(cfg.verify.n, cfg.verify.dt);
    let d = matrix_deviation(shear, lambda, &analytic_set(cfg), &params)?;
    Ok(CheckResult::below(
        &format!("matrix_{}({lambda})", shear.name()),
        d,
        cfg.tolerances.matrix,
        format!("Frobenius error at N={}, dt={:e}", params.n, params.dt),
    ))
}

fn random_unit_lattice(rng: &mut ChaCha8Rng) -> WaveVector {
    loop {
        let k = WaveVector::new(rng.gen_range(-1..=1), rng.gen_range(-1..=1), rng.gen_range(-1..=1));
        if !k.is_zero() {
            return k;
        }
    }
}

/// Random `(y, k, j)` tuples against `W_1` at κ ∈ {0, 10⁻³}.
pub fn translation_identity(cfg: &RunConfig) -> Result<CheckResult> {
    let p = SolverParams::new(cfg.verify.identity_n, cfg.verify.identity_dt);
    let flow = w_flow(1.0);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut worst: f64 = 0.0;
    for _ in 0..cfg.verify.tuples {
        let y = [rng.gen::<f64>(), rng.gen::<f64>(), rng.gen::<f64>()];
        let k = random_unit_lattice(&mut rng);
        let j = random_unit_lattice(&mut rng);
        for kappa in [0.0, 1e-3] {
            worst = worst.max(translation_identity_residual(&flow, kappa, k, j, y, &p)?);
        }
    }
    Ok(CheckResult::below(
        "translation_identity",
        worst,
        cfg.tolerances.identity,
        format!("{} tuples, kappa in {{0, 1e-3}}, N={}", cfg.verify.tuples, p.n),
    ))
}

/// Grid average of translated `W_1` matrix elements against the diagonal
/// element, at the run resolution and translation grid.
pub fn averaged_cancellation(cfg: &RunConfig) -> Result<CheckResult> {
    let p = cfg.params();
    let m = cfg.grid();
    let flow = w_flow(1.0);
    let mut worst: f64 = 0.0;
    let mut warning = false;
    for kappa in [0.0, 1e-3] {
        let avg = averaged_matrix(&flow, kappa, WaveVector::EZ, m, &p)?;
        warning |= avg.aliasing_warning;
        let diag = matrix_element(&flow, kappa, 0.0, 2.0, WaveVector::EZ, WaveVector::EZ, &p)?;
        worst = worst.max(avg.matrix.distance(&diag.a));
    }
    let detail = if warning {
        format!("aliasing warning: M={m} < 2N+1={}", 2 * p.n + 1)
    } else {
        format!("M={m}, N={}", p.n)
    };
    Ok(CheckResult::below("averaged_matrix", worst, cfg.tolerances.identity, detail))
}

pub fn selection_rule(cfg: &RunConfig) -> Result<CheckResult> {
    let p = SolverParams::new(cfg.verify.identity_n, cfg.verify.identity_dt);
    let mut worst: f64 = 0.0;
    for &lam in &cfg.verify.lambdas {
        worst = worst.max(selection_rule_residual(lam, 2, &p)?);
    }
    Ok(CheckResult::below(
        "selection_rule",
        worst,
        cfg.tolerances.identity,
        format!("all |k|_inf <= 2, N={}", p.n),
    ))
}

/// `eigen3` of the closed-form `W_λ` against the explicit eigenvalues.
pub fn eigen_closed_forms(cfg: &RunConfig) -> Result<CheckResult> {
    let set = analytic_set(cfg);
    let mut worst: f64 = 0.0;
    for &lam in &cfg.verify.lambdas {
        let w = set.w(lam);
        let e = eigen3(&w);
        let want = set.w_eigenvalues(lam);
        for i in 0..3 {
            worst = worst.max((e.values[i] - Complex64::new(want[i], 0.0)).norm());
        }
        worst = worst.max(e.residual(&w));
    }
    Ok(CheckResult::below("eigen_closed_forms", worst, cfg.tolerances.eigen, String::new()))
}

/// Top eigenvalue of the closed-form `W_R` above `e`, simple spectrum with gap > 0.1.
pub fn control_spectrum(cfg: &RunConfig) -> Result<CheckResult> {
    let e = eigen3(&analytic_set(cfg).w(cfg.r));
    let top = e.values[0].norm();
    Ok(CheckResult {
        name: "control_spectrum".into(),
        passed: top > E && e.simple && e.gap > 0.1,
        measured: top,
        allowed: "> e, simple, gap > 0.1".into(),
        detail: format!("R={}, gap {:e}", cfg.r, e.gap),
    })
}

/// Real, solenoidal, mean-zero field with random coefficients on `|k|_∞ ≤ radius`.
pub fn random_physical_field(seed: u64, n: usize, radius: i32) -> Result<FourierField> {
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
                f.set(k, v)?;
            }
        }
    }
    let mut g = FourierField::zeros(n);
    for (k, c) in f.iter() {
        let cm = f.coefficient(-k);
        g.set(k, [0, 1, 2].map(|a| (c[a] + cm[a].conj()) * 0.5))?;
    }
    Ok(g.solenoidal_project())
}

/// Zero-flow runs against `e^{−4π²|k|²κt}` per mode, `t = 3`.
pub fn heat_exactness(cfg: &RunConfig) -> Result<CheckResult> {
    let n = cfg.verify.identity_n;
    let flow = TimeFlow::zero(0.0, 3.0);
    let b0 = random_physical_field(cfg.seed, n, n as i32)?;
    let mut worst: f64 = 0.0;
    for kappa in [1e-3, 1e-1] {
        let b = Solver::new(&flow, kappa, SolverParams::new(n, cfg.dt))?.evolve(&b0, 0.0, 3.0)?;
        for (k, c) in b0.iter() {
            let g = (-4.0 * PI * PI * k.norm_sq() as f64 * kappa * 3.0).exp();
            let got = b.coefficient(k);
            for a in 0..3 {
                let want = c[a] * g;
                if want.norm() > 0.0 {
                    worst = worst.max((got[a] - want).norm() / want.norm());
                } else {
                    worst = worst.max(got[a].norm());
                }
            }
        }
    }
    Ok(CheckResult::below(
        "heat_exactness",
        worst,
        cfg.tolerances.heat,
        "relative per-mode error, kappa in {1e-3, 1e-1}, t = 3".into(),
    ))
}

/// Energy and unique-continuation margins for `W_1` acting on `sin(2πx) e_z`.
pub fn energy_bounds(cfg: &RunConfig) -> Result<CheckResult> {
    let p = SolverParams::new(cfg.verify.identity_n, cfg.verify.identity_dt);
    let flow = w_flow(1.0);
    let b0 = FourierField::default_seed(p.n);
    let mut worst = f64::INFINITY;
    for kappa in [0.0, 1e-3] {
        let (_, trace) = Solver::new(&flow, kappa, p)?.solve(&b0, 0.0, 2.0)?;
        worst = worst.min(unique_continuation_certificate(&b0, &trace).worst());
    }
    let tol = cfg.tolerances.margin;
    Ok(CheckResult {
        name: "energy_and_unique_continuation_bounds".into(),
        passed: worst >= -tol,
        measured: worst,
        allowed: format!(">= -{tol:e}"),
        detail: "worst log-margin, kappa in {0, 1e-3}".into(),
    })
}

/// Deviations `‖A(dt) − A(dt/2)‖`, `‖A(dt/2) − A(dt/4)‖` and their ratio
/// for `W_λ` at the configured κ > 0.
pub fn self_convergence_ratio(kappa: f64, lambda: f64, n: usize, dt: f64) -> Result<(f64, f64, f64)> {
    let mats: Vec<Mat3> = [dt, dt / 2.0, dt / 4.0]
        .iter()
        .map(|&h| numeric_matrix(Shear::W, lambda, kappa, &SolverParams::new(n, h)))
        .collect::<Result<_>>()?;
    let e1 = eigen::frobenius(&eigen::sub(&mats[0], &mats[1]));
    let e2 = eigen::frobenius(&eigen::sub(&mats[1], &mats[2]));
    Ok((e1, e2, e1 / e2))
}

pub fn self_convergence(cfg: &RunConfig) -> Result<CheckResult> {
    let v = &cfg.verify;
    let (e1, e2, ratio) = self_convergence_ratio(v.convergence_kappa, v.convergence_lambda, v.convergence_n, v.convergence_dt)?;
    let (lo, hi) = (cfg.tolerances.convergence_low, cfg.tolerances.convergence_high);
    Ok(CheckResult {
        name: "self_convergence".into(),
        passed: (lo..=hi).contains(&ratio),
        measured: ratio,
        allowed: format!("in [{lo}, {hi}]"),
        detail: format!(
            "W({}) at kappa={:e}, N={}, dt={:e}: successive differences {e1:e}, {e2:e}",
            v.convergence_lambda, v.convergence_kappa, v.convergence_n, v.convergence_dt
        ),
    })
}

/// Runs every check in order, reporting each line through `progress`.
pub fn run_all(cfg: &RunConfig, mut progress: impl FnMut(&CheckResult)) -> Result<Vec<CheckResult>> {
    let mut out = Vec::new();
    let mut push = |c: CheckResult| {
        progress(&c);
        out.push(c);
    };
    push(bessel_fixtures()?);
    for shear in Shear::ALL {
        for &lam in &cfg.verify.lambdas {
            push(matrix_check(shear, lam, cfg)?);
        }
    }
    push(eigen_closed_forms(cfg)?);
    push(control_spectrum(cfg)?);
    push(translation_identity(cfg)?);
    push(averaged_cancellation(cfg)?);
    push(selection_rule(cfg)?);
    push(heat_exactness(cfg)?);
    push(energy_bounds(cfg)?);
    push(self_convergence(cfg)?);
    Ok(out)
}
