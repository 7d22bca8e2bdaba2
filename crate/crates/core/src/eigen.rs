//! Dense 3×3 complex linear algebra: eigen-decomposition with left
//! eigenvectors, plus the handful of matrix helpers the operator code needs.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::spectral::{c3_inner, c3_norm, C3, ZERO3};

pub type Mat3 = [[Complex64; 3]; 3];

const Z: Complex64 = Complex64::new(0.0, 0.0);
const ONE: Complex64 = Complex64::new(1.0, 0.0);

/// Gap below which eigenvalues count as repeated.
pub const SIMPLE_GAP_TOL: f64 = 1e-12;

pub fn identity() -> Mat3 {
    [[ONE, Z, Z], [Z, ONE, Z], [Z, Z, ONE]]
}

pub fn from_real(a: [[f64; 3]; 3]) -> Mat3 {
    a.map(|r| r.map(|v| Complex64::new(v, 0.0)))
}

pub fn matvec(a: &Mat3, v: &C3) -> C3 {
    [0, 1, 2].map(|i| a[i][0] * v[0] + a[i][1] * v[1] + a[i][2] * v[2])
}

pub fn matmul(a: &Mat3, b: &Mat3) -> Mat3 {
    [0, 1, 2].map(|i| [0, 1, 2].map(|j| (0..3).map(|k| a[i][k] * b[k][j]).sum()))
}

pub fn adjoint(a: &Mat3) -> Mat3 {
    [0, 1, 2].map(|i| [0, 1, 2].map(|j| a[j][i].conj()))
}

pub fn sub(a: &Mat3, b: &Mat3) -> Mat3 {
    [0, 1, 2].map(|i| [0, 1, 2].map(|j| a[i][j] - b[i][j]))
}

pub fn scale(a: &Mat3, s: Complex64) -> Mat3 {
    a.map(|r| r.map(|v| v * s))
}

pub fn frobenius(a: &Mat3) -> f64 {
    a.iter().flatten().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

pub fn trace(a: &Mat3) -> Complex64 {
    a[0][0] + a[1][1] + a[2][2]
}

pub fn determinant(a: &Mat3) -> Complex64 {
    a[0][0] * (a[1][1] * a[2][2] - a[1][2] * a[2][1]) - a[0][1] * (a[1][0] * a[2][2] - a[1][2] * a[2][0])
        + a[0][2] * (a[1][0] * a[2][1] - a[1][1] * a[2][0])
}

/// `max_{ij} |a_ij − conj a_ji|`.
pub fn hermitian_defect(a: &Mat3) -> f64 {
    let mut m: f64 = 0.0;
    for i in 0..3 {
        for j in 0..3 {
            m = m.max((a[i][j] - a[j][i].conj()).norm());
        }
    }
    m
}

/// Inverse via the adjugate; `None` when singular to working precision.
pub fn inverse(a: &Mat3) -> Option<Mat3> {
    let det = determinant(a);
    let scale = frobenius(a).powi(3);
    if det.norm() <= 1e-14 * scale.max(f64::MIN_POSITIVE) {
        return None;
    }
    let c = |i: usize, j: usize| {
        let (r0, r1) = ((i + 1) % 3, (i + 2) % 3);
        let (c0, c1) = ((j + 1) % 3, (j + 2) % 3);
        a[r0][c0] * a[r1][c1] - a[r0][c1] * a[r1][c0]
    };
    // inverse = adjugate / det, adjugate = cofactor transpose
    Some([0, 1, 2].map(|i| [0, 1, 2].map(|j| c(j, i) / det)))
}

fn cross(a: &C3, b: &C3) -> C3 {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

fn normalize(v: &C3) -> C3 {
    let n = c3_norm(v);
    v.map(|z| z / n)
}

/// Spectral data of a 3×3 matrix, eigenvalues in descending modulus.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EigenDecomposition {
    pub values: [Complex64; 3],
    /// Unit right eigenvectors `A ξ_i = λ_i ξ_i`.
    pub vectors: [C3; 3],
    /// Left eigenvectors with `η_i† ξ_j = δ_ij`.
    pub left: [C3; 3],
    /// `min_{i≠j} |λ_i − λ_j|`.
    pub gap: f64,
    /// All eigenvalues separated by more than [`SIMPLE_GAP_TOL`].
    pub simple: bool,
    pub hermitian: bool,
}

impl EigenDecomposition {
    /// `max_i ‖A ξ_i − λ_i ξ_i‖`.
    pub fn residual(&self, a: &Mat3) -> f64 {
        (0..3)
            .map(|i| {
                let av = matvec(a, &self.vectors[i]);
                c3_norm(&[0, 1, 2].map(|c| av[c] - self.values[i] * self.vectors[i][c]))
            })
            .fold(0.0, f64::max)
    }

    /// Coefficient of `v` along `ξ_i` in the eigenbasis: `η_i† v`.
    pub fn coordinate(&self, i: usize, v: &C3) -> Complex64 {
        c3_inner(&self.left[i], v)
    }

    /// `max_{i,j} |η_i† ξ_j − δ_ij|`.
    pub fn biorthogonality_defect(&self) -> f64 {
        let mut m: f64 = 0.0;
        for i in 0..3 {
            for j in 0..3 {
                let d = if i == j { 1.0 } else { 0.0 };
                m = m.max((c3_inner(&self.left[i], &self.vectors[j]) - d).norm());
            }
        }
        m
    }
}

/// Full eigen-decomposition. Hermitian input (defect ≤ 1e−12·‖A‖) takes the
/// trigonometric closed form for real spectra; everything else solves the
/// characteristic cubic by simultaneous (Durand–Kerner) iteration followed by
/// Newton polishing. Eigenvectors come from cross products of rows of
/// `A − λI`; repeated eigenvalues get an orthonormal basis of the null space.
pub fn eigen3(a: &Mat3) -> EigenDecomposition {
    let scale = frobenius(a).max(f64::MIN_POSITIVE);
    let hermitian = hermitian_defect(a) <= 1e-12 * scale;
    let mut values = if hermitian {
        hermitian_values(a).map(|v| Complex64::new(v, 0.0))
    } else {
        general_values(a)
    };
    values.sort_by(|x, y| y.norm().total_cmp(&x.norm()).then(y.re.total_cmp(&x.re)));
    let mut gap = f64::INFINITY;
    for i in 0..3 {
        for j in i + 1..3 {
            gap = gap.min((values[i] - values[j]).norm());
        }
    }
    let simple = gap > SIMPLE_GAP_TOL * scale.max(1.0);
    let vectors = right_vectors(a, &values, scale);
    let left = match inverse(&[0, 1, 2].map(|i| [0, 1, 2].map(|j| vectors[j][i]))) {
        // rows of X⁻¹ are η_i†
        Some(xi) => [0, 1, 2].map(|i| xi[i].map(|z| z.conj())),
        None => vectors,
    };
    EigenDecomposition {
        values,
        vectors,
        left,
        gap,
        simple,
        hermitian,
    }
}

fn char_coeffs(a: &Mat3) -> (Complex64, Complex64, Complex64) {
    let tr = trace(a);
    let c2 = a[0][0] * a[1][1] - a[0][1] * a[1][0] + a[0][0] * a[2][2] - a[0][2] * a[2][0] + a[1][1] * a[2][2]
        - a[1][2] * a[2][1];
    (tr, c2, determinant(a))
}

/// Roots of `λ³ − tr λ² + c2 λ − det`.
fn general_values(a: &Mat3) -> [Complex64; 3] {
    let (tr, c2, det) = char_coeffs(a);
    let p = |x: Complex64| ((x - tr) * x + c2) * x - det;
    let dp = |x: Complex64| (3.0 * x - 2.0 * tr) * x + c2;
    let r = 1.0 + tr.norm().max(c2.norm()).max(det.norm());
    let seed = Complex64::new(0.4, 0.9);
    let mut z = [seed * r, seed.powu(2) * r, seed.powu(3) * r];
    for _ in 0..500 {
        let mut moved: f64 = 0.0;
        for i in 0..3 {
            let mut den = ONE;
            for j in 0..3 {
                if j != i {
                    den *= z[i] - z[j];
                }
            }
            if den.norm() == 0.0 {
                continue;
            }
            let d = p(z[i]) / den;
            z[i] -= d;
            moved = moved.max(d.norm());
        }
        if moved <= 1e-16 * r {
            break;
        }
    }
    // a repeated root is only resolved to ~sqrt(eps); snap such clusters to
    // their mean, which is accurate, so they report as non-simple
    let cluster = 1e-7 * r;
    for i in 0..3 {
        for j in i + 1..3 {
            if (z[i] - z[j]).norm() < cluster {
                let m = (z[i] + z[j]) * 0.5;
                z[i] = m;
                z[j] = m;
                return polish_distinct(z, &p, &dp, cluster);
            }
        }
    }
    polish_distinct(z, &p, &dp, cluster)
}

fn polish_distinct(
    mut z: [Complex64; 3],
    p: &impl Fn(Complex64) -> Complex64,
    dp: &impl Fn(Complex64) -> Complex64,
    cluster: f64,
) -> [Complex64; 3] {
    let repeated = |z: &[Complex64; 3], i: usize| (0..3).any(|j| j != i && (z[i] - z[j]).norm() < cluster);
    for i in 0..3 {
        if repeated(&z, i) {
            continue;
        }
        let zi = &mut z[i];
        for _ in 0..3 {
            let d = dp(*zi);
            if d.norm() == 0.0 {
                break;
            }
            let step = p(*zi) / d;
            if !step.is_finite() {
                break;
            }
            *zi -= step;
        }
    }
    z
}

/// Real eigenvalues of a Hermitian matrix by the trigonometric formula.
fn hermitian_values(a: &Mat3) -> [f64; 3] {
    let p1 = a[0][1].norm_sqr() + a[0][2].norm_sqr() + a[1][2].norm_sqr();
    let d = [a[0][0].re, a[1][1].re, a[2][2].re];
    if p1 == 0.0 {
        return d;
    }
    let q = (d[0] + d[1] + d[2]) / 3.0;
    let p2 = (d[0] - q).powi(2) + (d[1] - q).powi(2) + (d[2] - q).powi(2) + 2.0 * p1;
    let p = (p2 / 6.0).sqrt();
    let b = scale(&sub(a, &scale(&identity(), Complex64::new(q, 0.0))), Complex64::new(1.0 / p, 0.0));
    let r = (determinant(&b).re / 2.0).clamp(-1.0, 1.0);
    let phi = r.acos() / 3.0;
    let e1 = q + 2.0 * p * phi.cos();
    let e3 = q + 2.0 * p * (phi + 2.0 * std::f64::consts::PI / 3.0).cos();
    let e2 = 3.0 * q - e1 - e3;
    // one Newton pass on the characteristic cubic tightens the small roots
    let (tr, c2, det) = char_coeffs(a);
    [e1, e2, e3].map(|x| {
        let xc = Complex64::new(x, 0.0);
        let pv = ((xc - tr) * xc + c2) * xc - det;
        let dv = (3.0 * xc - 2.0 * tr) * xc + c2;
        if dv.norm() > 0.0 {
            let y = x - (pv / dv).re;
            if y.is_finite() {
                return y;
            }
        }
        x
    })
}

fn right_vectors(a: &Mat3, values: &[Complex64; 3], scale: f64) -> [C3; 3] {
    let tol = SIMPLE_GAP_TOL * scale.max(1.0);
    [0, 1, 2].map(|i| {
        let group: Vec<usize> = (0..3).filter(|&j| (values[j] - values[i]).norm() <= tol).collect();
        let rank = group.iter().position(|&j| j == i).unwrap_or(0);
        let basis = null_space(&sub(a, &scale_id(values[i])), group.len(), scale);
        basis[rank.min(basis.len() - 1)]
    })
}

fn scale_id(l: Complex64) -> Mat3 {
    scale(&identity(), l)
}

/// Up to `dim` orthonormal vectors spanning (approximately) `ker m`.
fn null_space(m: &Mat3, dim: usize, scale: f64) -> Vec<C3> {
    let rows = [m[0], m[1], m[2]];
    let crosses = [cross(&rows[0], &rows[1]), cross(&rows[0], &rows[2]), cross(&rows[1], &rows[2])];
    let best = crosses
        .iter()
        .max_by(|x, y| c3_norm(x).total_cmp(&c3_norm(y)))
        .copied()
        .unwrap_or(ZERO3);
    let tol = 1e-10 * scale.max(1.0);
    if dim == 1 && c3_norm(&best) > tol * tol {
        return vec![normalize(&best)];
    }
    // rank ≤ 1: kernel is the bilinear complement of the dominant row
    let r = rows
        .iter()
        .max_by(|x, y| c3_norm(x).total_cmp(&c3_norm(y)))
        .copied()
        .unwrap_or(ZERO3);
    let e = [
        [ONE, Z, Z],
        [Z, ONE, Z],
        [Z, Z, ONE],
    ];
    let candidates: Vec<C3> = if c3_norm(&r) <= tol {
        e.to_vec()
    } else {
        let mut c: Vec<C3> = e.iter().map(|ei| cross(&r, ei)).collect();
        c.sort_by(|x, y| c3_norm(y).total_cmp(&c3_norm(x)));
        c
    };
    // Gram–Schmidt (Hermitian) on the candidates
    let mut basis: Vec<C3> = Vec::new();
    for v in candidates {
        let mut w = v;
        for b in &basis {
            let proj = c3_inner(b, &w);
            w = [0, 1, 2].map(|c| w[c] - proj * b[c]);
        }
        if c3_norm(&w) > 1e-8 * c3_norm(&v).max(f64::MIN_POSITIVE) {
            basis.push(normalize(&w));
        }
        if basis.len() == dim.max(1) {
            break;
        }
    }
    if basis.is_empty() {
        basis.push([ONE, Z, Z]);
    }
    basis
}
