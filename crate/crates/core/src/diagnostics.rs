//! Energy and unique-continuation bounds evaluated along a solver trace.
//!
//! For solenoidal, mean-zero `b` the energy identity gives
//! `d/dt ‖b‖² ≥ −2κ‖∇b‖² − 2‖∇u‖_∞‖b‖²` and `d/dt ‖b‖² ≤ 2‖∇u‖_∞‖b‖²`,
//! and the projective ratio `ρ = ‖∇b‖²/‖b‖²` obeys
//! `dρ/dt ≤ (6‖∇u‖_∞ + ‖∇²u‖_∞/π) ρ`. The trace carries mode-sum bounds
//! `G ≥ ‖∇u‖_∞`, `H ≥ ‖∇²u‖_∞` with `2πG ≤ H` (every flow mode has
//! `|k| ≥ 1`), so `dρ/dt ≤ C H ρ` with `C = 4/π`.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::solver::SolverTrace;
use crate::spectral::FourierField;

/// Constant in the projective-ratio growth bound.
pub const UC_CONSTANT: f64 = 4.0 / PI;

/// Allowed negative margin. The bounds are attained exactly by heat-only
/// evolution of a single wavenumber shell, so margins there are zero up to
/// roundoff in the logarithms.
pub const MARGIN_TOL: f64 = 1e-12;

/// Signed log-margins of the bounds over a trace (`≥ 0` means the bound holds).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MarginReport {
    pub applicable: bool,
    pub note: Option<String>,
    pub kappa: f64,
    pub constant: f64,
    /// `‖∇b₀‖²/‖b₀‖²`.
    pub rho0: f64,
    /// `min_t [2∫G − log(‖b(t)‖²/‖b₀‖²)]`.
    pub upper_margin: f64,
    /// `min_t [log ‖b(t)‖² − log(lower bound)]`.
    pub lower_margin: f64,
    /// `min_t [log(ρ₀ e^{C∫H}) − log ρ(t)]`.
    pub ratio_margin: f64,
    pub samples: usize,
}

impl MarginReport {
    fn not_applicable(kappa: f64, note: &str) -> Self {
        MarginReport {
            applicable: false,
            note: Some(note.to_string()),
            kappa,
            constant: UC_CONSTANT,
            rho0: 0.0,
            upper_margin: 0.0,
            lower_margin: 0.0,
            ratio_margin: 0.0,
            samples: 0,
        }
    }

    /// Smallest of the three margins (`0` when not applicable).
    pub fn worst(&self) -> f64 {
        self.upper_margin.min(self.lower_margin).min(self.ratio_margin)
    }

    /// All margins above `−tol` (vacuously true when not applicable).
    pub fn holds(&self, tol: f64) -> bool {
        !self.applicable || self.worst() >= -tol
    }
}

fn log_add(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    let (hi, lo) = if a > b { (a, b) } else { (b, a) };
    hi + (lo - hi).exp().ln_1p()
}

fn margins(rho0: f64, trace: &SolverTrace) -> MarginReport {
    let kappa = trace.kappa;
    let l0 = trace.l2sq[0].ln();
    let (mut upper, mut lower, mut ratio) = (f64::INFINITY, f64::INFINITY, f64::INFINITY);
    // log ∫₀^t e^{C∫H}: left-endpoint sums underestimate the integral of this
    // nondecreasing integrand, which makes the checked lower bound stricter
    let mut log_int = f64::NEG_INFINITY;
    for i in 0..trace.len() {
        if i > 0 {
            let h = trace.times[i] - trace.times[i - 1];
            if h > 0.0 {
                log_int = log_add(log_int, h.ln() + UC_CONSTANT * trace.hess_integral[i - 1]);
            }
        }
        let li = trace.l2sq[i].ln();
        let gi = trace.grad_integral[i];
        upper = upper.min(2.0 * gi - (li - l0));
        let diffusive = if kappa > 0.0 && rho0 > 0.0 {
            (kappa * rho0).ln() + log_int
        } else {
            f64::NEG_INFINITY
        };
        let decay = 2.0 * (diffusive.exp() + gi);
        lower = lower.min(li - (l0 - decay));
        if rho0 > 0.0 {
            let r = (trace.h1sq[i] / trace.l2sq[i]).ln();
            ratio = ratio.min(rho0.ln() + UC_CONSTANT * trace.hess_integral[i] - r);
        } else {
            // ρ₀ = 0 only for b₀ = 0, excluded by the callers
            ratio = ratio.min(if trace.h1sq[i] == 0.0 { 0.0 } else { f64::NEG_INFINITY });
        }
    }
    let cap = |x: f64| x.min(f64::MAX);
    MarginReport {
        applicable: true,
        note: None,
        kappa,
        constant: UC_CONSTANT,
        rho0,
        upper_margin: cap(upper),
        lower_margin: cap(lower),
        ratio_margin: cap(ratio),
        samples: trace.len(),
    }
}

/// Energy upper bound and the diffusive lower bound along `trace`, with
/// `ρ₀` taken from the first sample.
pub fn energy_growth_check(trace: &SolverTrace) -> MarginReport {
    if trace.is_empty() {
        return MarginReport::not_applicable(trace.kappa, "empty trace");
    }
    if !(trace.l2sq[0] > 0.0) {
        return MarginReport::not_applicable(trace.kappa, "zero initial field");
    }
    margins(trace.h1sq[0] / trace.l2sq[0], trace)
}

/// Lower bound on `‖b(t)‖²` and the projective-ratio bound for the run that
/// produced `trace` from `b_before`.
pub fn unique_continuation_certificate(b_before: &FourierField, trace: &SolverTrace) -> MarginReport {
    let l2 = b_before.l2_norm_sq();
    if !(l2 > 0.0) {
        return MarginReport::not_applicable(trace.kappa, "zero initial field");
    }
    let h1 = b_before.h1_seminorm_sq();
    if !h1.is_finite() {
        return MarginReport::not_applicable(trace.kappa, "initial field has infinite H1 seminorm");
    }
    if trace.is_empty() {
        return MarginReport::not_applicable(trace.kappa, "empty trace");
    }
    margins(h1 / l2, trace)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::flow::{w_flow, TimeFlow};
    use crate::solver::{Solver, SolverParams};
    use crate::spectral::WaveVector;

    fn sin_x(n: usize) -> FourierField {
        FourierField::sin_mode(n, WaveVector::EX, [0.0, 0.0, 1.0]).unwrap()
    }

    #[test]
    fn heat_only_margins() {
        let flow = TimeFlow::zero(0.0, 2.0);
        let b0 = sin_x(4);
        let kappa = 1e-2;
        let (_, tr) = Solver::new(&flow, kappa, SolverParams::new(4, 1e-2)).unwrap().solve(&b0, 0.0, 2.0).unwrap();
        let r = energy_growth_check(&tr);
        assert!((r.rho0 - 4.0 * PI * PI).abs() < 1e-12);
        // heat decay of a single shell: ‖b‖² = e^{−8π²κt}‖b₀‖², bound e^{−2κρ₀t}: equal
        assert!(r.lower_margin.abs() < 1e-10, "{}", r.lower_margin);
        assert!(r.lower_margin >= -1e-12);
        assert!(r.upper_margin >= 0.0);
        assert!(r.ratio_margin.abs() < 1e-12);
    }

    #[test]
    fn w_flow_margins_nonnegative() {
        let flow = w_flow(1.0);
        let b0 = sin_x(8);
        for kappa in [0.0, 1e-3] {
            let (_, tr) = Solver::new(&flow, kappa, SolverParams::new(8, 2e-3))
                .unwrap()
                .solve(&b0, 0.0, 2.0)
                .unwrap();
            let r = unique_continuation_certificate(&b0, &tr);
            assert!(r.applicable);
            assert!(r.holds(MARGIN_TOL), "{r:?}");
            assert_eq!(r, energy_growth_check(&tr));
        }
    }

    #[test]
    fn zero_field_not_applicable() {
        let flow = TimeFlow::zero(0.0, 1.0);
        let b0 = FourierField::zeros(2);
        let (_, tr) = Solver::new(&flow, 0.0, SolverParams::new(2, 1e-2)).unwrap().solve(&b0, 0.0, 1.0).unwrap();
        assert!(!unique_continuation_certificate(&b0, &tr).applicable);
        assert!(!energy_growth_check(&tr).applicable);
        assert!(energy_growth_check(&tr).holds(0.0));
    }

    #[test]
    fn log_add_matches_direct() {
        let v = log_add(2f64.ln(), 3f64.ln());
        assert!((v - 5f64.ln()).abs() < 1e-15);
        assert_eq!(log_add(f64::NEG_INFINITY, 1.0), 1.0);
    }
}
