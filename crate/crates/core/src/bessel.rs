//! Bessel functions of the first kind, orders 0 and 1, for moderate real
//! arguments, plus the periodic quadratures used to cross-check them.

use std::f64::consts::PI;

use num_complex::Complex64;

use crate::error::{DynamoError, Result};

/// Largest argument accepted by [`bessel_j`].
pub const BESSEL_MAX_ARG: f64 = 10.0;

/// `J_n(z)` for `n ∈ {0, 1}` and `|z| ≤ 10` by the power series
/// `Σ_m (−1)^m (z/2)^{2m+n} / (m! (m+n)!)`, summed until the terms drop
/// below `1e−17` relative to the largest term.
pub fn bessel_j(n: u32, z: f64) -> Result<f64> {
    if n > 1 {
        return Err(DynamoError::InvalidInput(format!("bessel_j supports orders 0 and 1, got {n}")));
    }
    if !(z.abs() <= BESSEL_MAX_ARG) {
        return Err(DynamoError::InvalidInput(format!(
            "bessel_j argument {z} outside [-{BESSEL_MAX_ARG}, {BESSEL_MAX_ARG}]"
        )));
    }
    let h = z / 2.0;
    let h2 = h * h;
    // first term (z/2)^n / n!
    let mut term = if n == 0 { 1.0 } else { h };
    let mut sum = term;
    let mut biggest = term.abs();
    for m in 1..200u32 {
        term *= -h2 / (m as f64 * (m + n) as f64);
        sum += term;
        biggest = biggest.max(term.abs());
        if term.abs() < 1e-17 * biggest.max(1e-300) {
            break;
        }
    }
    Ok(sum)
}

/// `J_n(z) = (−1)^n ∫₀¹ e^{i z sin(2πx) + 2πi n x} dx` evaluated with the
/// `m`-point trapezoid rule, which is spectrally accurate for this periodic
/// integrand. Returns the full complex value so callers can check that the
/// imaginary part vanishes.
pub fn hansen_integral(n: i32, z: f64, m: usize) -> Complex64 {
    let sum: Complex64 = (0..m)
        .map(|j| {
            let x = j as f64 / m as f64;
            Complex64::from_polar(1.0, z * (2.0 * PI * x).sin() + 2.0 * PI * n as f64 * x)
        })
        .sum();
    let sign = if n.rem_euclid(2) == 0 { 1.0 } else { -1.0 };
    sum * (sign / m as f64)
}

/// `∫₀¹ cos(2πx) e^{−iπ sin(2πx) t} dx` by the `m`-point trapezoid rule.
/// It vanishes identically in `t` (the integrand is odd about `x = 1/4`).
pub fn cos_phase_integral(t: f64, m: usize) -> Complex64 {
    let sum: Complex64 = (0..m)
        .map(|j| {
            let x = j as f64 / m as f64;
            (2.0 * PI * x).cos() * Complex64::from_polar(1.0, -PI * (2.0 * PI * x).sin() * t)
        })
        .sum();
    sum / m as f64
}

/// `α = J₀(π/2)`.
pub fn alpha() -> f64 {
    bessel_j(0, PI / 2.0).expect("in range")
}

/// `β = 2π J₁(π/2)`.
pub fn beta() -> f64 {
    2.0 * PI * bessel_j(1, PI / 2.0).expect("in range")
}
