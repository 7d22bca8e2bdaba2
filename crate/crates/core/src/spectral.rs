//! Truncated Fourier representation of C³-valued fields on the unit torus.
//!
//! Convention: `b(x) = Σ_k b̂(k) e^{2πi k·x}` with `x ∈ [0,1)³`. Coefficients
//! are stored densely over the cube `|k|_∞ ≤ N`, index-ordered with `kz`
//! fastest.

use std::f64::consts::PI;
use std::fmt;
use std::ops::{Add, Neg, Sub};

use num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{DynamoError, Result};

pub type C3 = [Complex64; 3];

pub const ZERO3: C3 = [Complex64::new(0.0, 0.0); 3];

/// Default divergence tolerance for solenoidal checks.
pub const TOL_DIV: f64 = 1e-10;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct WaveVector {
    pub kx: i32,
    pub ky: i32,
    pub kz: i32,
}

impl WaveVector {
    pub const ZERO: WaveVector = WaveVector::new(0, 0, 0);
    pub const EX: WaveVector = WaveVector::new(1, 0, 0);
    pub const EY: WaveVector = WaveVector::new(0, 1, 0);
    pub const EZ: WaveVector = WaveVector::new(0, 0, 1);

    pub const fn new(kx: i32, ky: i32, kz: i32) -> Self {
        Self { kx, ky, kz }
    }

    pub fn from_array(a: [i32; 3]) -> Self {
        Self::new(a[0], a[1], a[2])
    }

    pub fn to_array(self) -> [i32; 3] {
        [self.kx, self.ky, self.kz]
    }

    pub fn as_f64(self) -> [f64; 3] {
        [self.kx as f64, self.ky as f64, self.kz as f64]
    }

    pub fn linf(self) -> i32 {
        self.kx.abs().max(self.ky.abs()).max(self.kz.abs())
    }

    pub fn norm_sq(self) -> i64 {
        let [a, b, c] = self.to_array().map(i64::from);
        a * a + b * b + c * c
    }

    pub fn norm(self) -> f64 {
        (self.norm_sq() as f64).sqrt()
    }

    pub fn is_zero(self) -> bool {
        self == Self::ZERO
    }

    /// The six signed unit lattice vectors, in the fixed order
    /// `+x, -x, +y, -y, +z, -z`.
    pub fn unit_modes() -> [WaveVector; 6] {
        [
            Self::EX,
            -Self::EX,
            Self::EY,
            -Self::EY,
            Self::EZ,
            -Self::EZ,
        ]
    }

    /// Bilinear (non-conjugating) product `k · v`.
    pub fn dot_c3(self, v: &C3) -> Complex64 {
        v[0] * self.kx as f64 + v[1] * self.ky as f64 + v[2] * self.kz as f64
    }

    pub fn dot_f64(self, y: [f64; 3]) -> f64 {
        self.kx as f64 * y[0] + self.ky as f64 * y[1] + self.kz as f64 * y[2]
    }
}

impl Add for WaveVector {
    type Output = WaveVector;
    fn add(self, o: WaveVector) -> WaveVector {
        WaveVector::new(self.kx + o.kx, self.ky + o.ky, self.kz + o.kz)
    }
}

impl Sub for WaveVector {
    type Output = WaveVector;
    fn sub(self, o: WaveVector) -> WaveVector {
        WaveVector::new(self.kx - o.kx, self.ky - o.ky, self.kz - o.kz)
    }
}

impl Neg for WaveVector {
    type Output = WaveVector;
    fn neg(self) -> WaveVector {
        WaveVector::new(-self.kx, -self.ky, -self.kz)
    }
}

impl fmt::Display for WaveVector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({},{},{})", self.kx, self.ky, self.kz)
    }
}

// Small C³ helpers. Kept as free functions over arrays.

pub fn c3_norm_sq(v: &C3) -> f64 {
    v.iter().map(|z| z.norm_sqr()).sum()
}

pub fn c3_norm(v: &C3) -> f64 {
    c3_norm_sq(v).sqrt()
}

/// Hermitian inner product `a† b`.
pub fn c3_inner(a: &C3, b: &C3) -> Complex64 {
    a[0].conj() * b[0] + a[1].conj() * b[1] + a[2].conj() * b[2]
}

/// Bilinear product `a · b` (no conjugation).
pub fn c3_dot(a: &C3, b: &C3) -> Complex64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

pub fn c3_scale(v: &C3, s: Complex64) -> C3 {
    [v[0] * s, v[1] * s, v[2] * s]
}

pub fn c3_conj(v: &C3) -> C3 {
    [v[0].conj(), v[1].conj(), v[2].conj()]
}

pub fn c3_sub(a: &C3, b: &C3) -> C3 {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

pub fn c3_add(a: &C3, b: &C3) -> C3 {
    [a[0] + b[0], a[1] + b[1], a[2] + b[2]]
}

pub fn c3_real(v: [f64; 3]) -> C3 {
    v.map(|x| Complex64::new(x, 0.0))
}

/// Dense truncated Fourier field over `|k|_∞ ≤ N`.
#[derive(Clone, Debug, PartialEq)]
pub struct FourierField {
    n: usize,
    coeffs: Vec<C3>,
}

impl FourierField {
    pub fn zeros(n: usize) -> Self {
        let s = 2 * n + 1;
        Self {
            n,
            coeffs: vec![ZERO3; s * s * s],
        }
    }

    /// `v e^{2πi k·x}`.
    pub fn single_mode(n: usize, k: WaveVector, v: C3) -> Result<Self> {
        let mut f = Self::zeros(n);
        f.set(k, v)?;
        Ok(f)
    }

    /// The real field `sin(2π k·x) dir`.
    pub fn sin_mode(n: usize, k: WaveVector, dir: [f64; 3]) -> Result<Self> {
        let mut f = Self::zeros(n);
        let d = c3_real(dir);
        // sin θ = (e^{iθ} − e^{−iθ}) / 2i
        f.set(k, c3_scale(&d, Complex64::new(0.0, -0.5)))?;
        f.set(-k, c3_scale(&d, Complex64::new(0.0, 0.5)))?;
        Ok(f)
    }

    /// The default initial datum `sin(2πx) e_z`.
    pub fn default_seed(n: usize) -> Self {
        Self::sin_mode(n, WaveVector::EX, [0.0, 0.0, 1.0]).expect("N >= 1")
    }

    pub fn resolution(&self) -> usize {
        self.n
    }

    pub fn side(&self) -> usize {
        2 * self.n + 1
    }

    pub fn coeffs(&self) -> &[C3] {
        &self.coeffs
    }

    pub fn coeffs_mut(&mut self) -> &mut [C3] {
        &mut self.coeffs
    }

    pub fn index(&self, k: WaveVector) -> Option<usize> {
        let n = self.n as i32;
        if k.linf() > n {
            return None;
        }
        let s = self.side();
        let ix = (k.kx + n) as usize;
        let iy = (k.ky + n) as usize;
        let iz = (k.kz + n) as usize;
        Some((ix * s + iy) * s + iz)
    }

    pub fn wavevector(&self, idx: usize) -> WaveVector {
        let s = self.side();
        let n = self.n as i32;
        let iz = (idx % s) as i32;
        let iy = ((idx / s) % s) as i32;
        let ix = (idx / (s * s)) as i32;
        WaveVector::new(ix - n, iy - n, iz - n)
    }

    /// Stored coefficient, or zero outside the resolved cube.
    pub fn coefficient(&self, k: WaveVector) -> C3 {
        self.index(k).map_or(ZERO3, |i| self.coeffs[i])
    }

    pub fn set(&mut self, k: WaveVector, v: C3) -> Result<()> {
        let i = self
            .index(k)
            .ok_or(DynamoError::OutOfRange { k, n: self.n })?;
        self.coeffs[i] = v;
        Ok(())
    }

    pub fn iter(&self) -> impl Iterator<Item = (WaveVector, &C3)> + '_ {
        self.coeffs
            .iter()
            .enumerate()
            .map(move |(i, c)| (self.wavevector(i), c))
    }

    pub fn l2_norm_sq(&self) -> f64 {
        self.coeffs.iter().map(c3_norm_sq).sum()
    }

    pub fn l2_norm(&self) -> f64 {
        self.l2_norm_sq().sqrt()
    }

    /// `Σ 4π²|k|² |b̂(k)|²`.
    pub fn h1_seminorm_sq(&self) -> f64 {
        self.iter()
            .map(|(k, c)| 4.0 * PI * PI * k.norm_sq() as f64 * c3_norm_sq(c))
            .sum()
    }

    pub fn h1_seminorm(&self) -> f64 {
        self.h1_seminorm_sq().sqrt()
    }

    /// Leray projection onto divergence-free, mean-zero fields.
    pub fn solenoidal_project(&self) -> FourierField {
        let mut out = self.clone();
        out.project_in_place();
        out
    }

    pub fn project_in_place(&mut self) {
        let n = self.n;
        let s = self.side();
        let ni = n as i32;
        for (idx, c) in self.coeffs.iter_mut().enumerate() {
            let iz = (idx % s) as i32 - ni;
            let iy = ((idx / s) % s) as i32 - ni;
            let ix = (idx / (s * s)) as i32 - ni;
            let k = WaveVector::new(ix, iy, iz);
            *c = project_mode(k, c);
        }
    }

    /// `max_k |k·b̂(k)| / ‖b‖`, zero for the zero field.
    pub fn relative_divergence(&self) -> f64 {
        let norm = self.l2_norm();
        if norm == 0.0 {
            return 0.0;
        }
        self.iter()
            .map(|(k, c)| k.dot_c3(c).norm())
            .fold(0.0, f64::max)
            / norm
    }

    pub fn mean(&self) -> C3 {
        self.coefficient(WaveVector::ZERO)
    }

    /// `max_k |b̂(−k) − conj b̂(k)|`; zero for real-valued fields.
    pub fn reality_defect(&self) -> f64 {
        self.iter()
            .map(|(k, c)| c3_norm(&c3_sub(&self.coefficient(-k), &c3_conj(c))))
            .fold(0.0, f64::max)
    }

    /// `τ_y b (x) = b(x − y)`.
    pub fn translate(&self, y: [f64; 3]) -> FourierField {
        let mut out = self.clone();
        for (idx, c) in out.coeffs.iter_mut().enumerate() {
            let k = self.wavevector(idx);
            let ph = Complex64::from_polar(1.0, -2.0 * PI * k.dot_f64(y));
            *c = c3_scale(c, ph);
        }
        out
    }

    pub fn scale(&self, s: Complex64) -> FourierField {
        let mut out = self.clone();
        out.coeffs.iter_mut().for_each(|c| *c = c3_scale(c, s));
        out
    }

    pub fn scale_in_place(&mut self, s: f64) {
        for c in self.coeffs.iter_mut() {
            for z in c.iter_mut() {
                *z *= s;
            }
        }
    }

    /// `self + s · other`.
    pub fn axpy(&self, s: Complex64, other: &FourierField) -> Result<FourierField> {
        self.check_same(other)?;
        let mut out = self.clone();
        for (o, x) in out.coeffs.iter_mut().zip(&other.coeffs) {
            for a in 0..3 {
                o[a] += s * x[a];
            }
        }
        Ok(out)
    }

    /// `‖self − other‖_{L²}`.
    pub fn distance(&self, other: &FourierField) -> Result<f64> {
        self.check_same(other)?;
        Ok(self
            .coeffs
            .iter()
            .zip(&other.coeffs)
            .map(|(a, b)| c3_norm_sq(&c3_sub(a, b)))
            .sum::<f64>()
            .sqrt())
    }

    fn check_same(&self, other: &FourierField) -> Result<()> {
        if self.n != other.n {
            return Err(DynamoError::ResolutionMismatch {
                expected: self.n,
                got: other.n,
            });
        }
        Ok(())
    }

    /// Copy into resolution `n`, truncating or zero-padding.
    pub fn resample(&self, n: usize) -> FourierField {
        let mut out = FourierField::zeros(n);
        for (k, c) in self.iter() {
            if let Some(i) = out.index(k) {
                out.coeffs[i] = *c;
            }
        }
        out
    }

    /// Samples on the uniform `M³` grid `x = (i, j, l)/M`.
    pub fn to_physical(&self, m: usize) -> Result<PhysicalGrid> {
        if m < self.side() {
            return Err(DynamoError::Aliasing { m, n: self.n });
        }
        let mut comps = vec![vec![Complex64::new(0.0, 0.0); m * m * m]; 3];
        for (k, c) in self.iter() {
            let g = grid_index(k, m);
            for a in 0..3 {
                comps[a][g] = c[a];
            }
        }
        for comp in comps.iter_mut() {
            fft3(comp, m, true);
        }
        let values = (0..m * m * m)
            .map(|i| [comps[0][i], comps[1][i], comps[2][i]])
            .collect();
        Ok(PhysicalGrid { m, values })
    }

    pub fn from_physical(grid: &PhysicalGrid, n: usize) -> Result<FourierField> {
        let m = grid.m;
        if m < 2 * n + 1 {
            return Err(DynamoError::Aliasing { m, n });
        }
        let mut comps: Vec<Vec<Complex64>> = (0..3)
            .map(|a| grid.values.iter().map(|v| v[a]).collect())
            .collect();
        for comp in comps.iter_mut() {
            fft3(comp, m, false);
        }
        let norm = 1.0 / (m * m * m) as f64;
        let mut out = FourierField::zeros(n);
        for idx in 0..out.coeffs.len() {
            let k = out.wavevector(idx);
            let g = grid_index(k, m);
            out.coeffs[idx] = [comps[0][g] * norm, comps[1][g] * norm, comps[2][g] * norm];
        }
        Ok(out)
    }

    pub fn to_json(&self) -> FieldJson {
        let entries = self
            .iter()
            .filter(|(_, c)| c3_norm_sq(c) > 0.0)
            .map(|(k, c)| FieldEntry {
                k: k.to_array(),
                re: c.map(|z| z.re),
                im: c.map(|z| z.im),
            })
            .collect();
        FieldJson { n: self.n, entries }
    }

    pub fn from_json(j: &FieldJson) -> Result<FourierField> {
        let mut out = FourierField::zeros(j.n);
        for e in &j.entries {
            let v = [0, 1, 2].map(|a| Complex64::new(e.re[a], e.im[a]));
            out.set(WaveVector::from_array(e.k), v)?;
        }
        Ok(out)
    }
}

pub(crate) fn project_mode(k: WaveVector, c: &C3) -> C3 {
    if k.is_zero() {
        return ZERO3;
    }
    let kk = k.norm_sq() as f64;
    let kd = k.dot_c3(c) / kk;
    let kf = k.as_f64();
    [c[0] - kd * kf[0], c[1] - kd * kf[1], c[2] - kd * kf[2]]
}

/// JSON form: `{"N": n, "entries": [{"k": [kx,ky,kz], "re": [..3], "im": [..3]}]}`.
/// Only nonzero coefficients are listed.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FieldJson {
    #[serde(rename = "N")]
    pub n: usize,
    pub entries: Vec<FieldEntry>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FieldEntry {
    pub k: [i32; 3],
    pub re: [f64; 3],
    pub im: [f64; 3],
}

/// Uniform `M³` samples of a C³-valued field.
#[derive(Clone, Debug)]
pub struct PhysicalGrid {
    pub m: usize,
    pub values: Vec<C3>,
}

impl PhysicalGrid {
    pub fn point(&self, idx: usize) -> [f64; 3] {
        let m = self.m;
        let l = idx % m;
        let j = (idx / m) % m;
        let i = idx / (m * m);
        [i as f64 / m as f64, j as f64 / m as f64, l as f64 / m as f64]
    }

    /// `(1/M³) Σ |b(x)|²`.
    pub fn mean_square(&self) -> f64 {
        self.values.iter().map(c3_norm_sq).sum::<f64>() / self.values.len() as f64
    }

    pub fn max_imag(&self) -> f64 {
        self.values
            .iter()
            .flat_map(|v| v.iter().map(|z| z.im.abs()))
            .fold(0.0, f64::max)
    }
}

pub(crate) fn grid_index(k: WaveVector, m: usize) -> usize {
    let w = |c: i32| c.rem_euclid(m as i32) as usize;
    (w(k.kx) * m + w(k.ky)) * m + w(k.kz)
}

/// In-place 3-D DFT over an `m³` array with the last axis fastest.
/// `inverse = true` computes `Σ_k a_k e^{+2πi k·j/m}` (no normalisation).
pub fn fft3(data: &mut [Complex64], m: usize, inverse: bool) {
    let mut planner = FftPlanner::new();
    let fft = if inverse {
        planner.plan_fft_inverse(m)
    } else {
        planner.plan_fft_forward(m)
    };
    // last axis: contiguous rows
    for row in data.chunks_mut(m) {
        fft.process(row);
    }
    let mut line = vec![Complex64::new(0.0, 0.0); m];
    // middle axis
    for i in 0..m {
        for l in 0..m {
            for j in 0..m {
                line[j] = data[(i * m + j) * m + l];
            }
            fft.process(&mut line);
            for j in 0..m {
                data[(i * m + j) * m + l] = line[j];
            }
        }
    }
    // first axis
    for j in 0..m {
        for l in 0..m {
            for i in 0..m {
                line[i] = data[(i * m + j) * m + l];
            }
            fft.process(&mut line);
            for i in 0..m {
                data[(i * m + j) * m + l] = line[i];
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn coefficient_lookup_and_truncation() {
        let v = [c(0.0, 0.0), c(0.0, 0.0), c(0.0, -0.5)];
        let f = FourierField::single_mode(2, WaveVector::EX, v).unwrap();
        assert_eq!(f.coefficient(WaveVector::EX), v);
        assert_eq!(f.coefficient(WaveVector::new(3, 0, 0)), ZERO3);
    }

    #[test]
    fn sine_mode_coefficients() {
        let f = FourierField::default_seed(4);
        let neg = f.coefficient(-WaveVector::EX);
        assert!((neg[2] - c(0.0, 0.5)).norm() < 1e-15);
        assert!(neg[0].norm() == 0.0 && neg[1].norm() == 0.0);
        assert!((f.l2_norm() - 0.5f64.sqrt()).abs() < 1e-15);
        assert!((f.h1_seminorm() - 2.0 * PI / 2f64.sqrt()).abs() < 1e-13);
        assert_eq!(f.reality_defect(), 0.0);
    }

    #[test]
    fn projection_examples() {
        let mut f = FourierField::zeros(2);
        f.set(WaveVector::EX, c3_real([1.0, 0.0, 0.0])).unwrap();
        assert!(f.solenoidal_project().l2_norm() < 1e-15);

        let mut g = FourierField::zeros(2);
        g.set(WaveVector::new(1, 1, 0), c3_real([1.0, 0.0, 0.0]))
            .unwrap();
        let p = g.solenoidal_project();
        let got = p.coefficient(WaveVector::new(1, 1, 0));
        assert!((got[0] - c(0.5, 0.0)).norm() < 1e-15);
        assert!((got[1] - c(-0.5, 0.0)).norm() < 1e-15);
        assert!(got[2].norm() < 1e-15);

        let mut h = FourierField::zeros(1);
        h.set(WaveVector::ZERO, c3_real([1.0, 2.0, 3.0])).unwrap();
        assert_eq!(h.solenoidal_project().mean(), ZERO3);
    }

    #[test]
    fn solenoidal_field_is_fixed_point() {
        let f = FourierField::default_seed(3);
        assert_eq!(f.solenoidal_project(), f);
    }

    #[test]
    fn physical_single_mode() {
        let f = FourierField::single_mode(2, WaveVector::EX, c3_real([0.0, 0.0, 1.0])).unwrap();
        let g = f.to_physical(8).unwrap();
        for idx in 0..g.values.len() {
            let x = g.point(idx);
            let expect = Complex64::from_polar(1.0, 2.0 * PI * x[0]);
            assert!((g.values[idx][2] - expect).norm() < 1e-13);
            assert!(g.values[idx][0].norm() < 1e-13);
        }
        let back = FourierField::from_physical(&g, 2).unwrap();
        assert!(back.distance(&f).unwrap() < 1e-13);
    }

    #[test]
    fn zero_round_trip() {
        let f = FourierField::zeros(3);
        let g = f.to_physical(7).unwrap();
        assert!(g.values.iter().all(|v| c3_norm(v) == 0.0));
        assert_eq!(FourierField::from_physical(&g, 3).unwrap(), f);
    }

    #[test]
    fn aliasing_rejected() {
        let f = FourierField::zeros(4);
        assert!(matches!(
            f.to_physical(8),
            Err(DynamoError::Aliasing { m: 8, n: 4 })
        ));
    }

    #[test]
    fn json_round_trip() {
        let f = FourierField::default_seed(2);
        let s = serde_json::to_string(&f.to_json()).unwrap();
        assert!(s.starts_with("{\"N\":2,\"entries\":["));
        let back = FourierField::from_json(&serde_json::from_str(&s).unwrap()).unwrap();
        assert_eq!(back, f);
    }

    #[test]
    fn translate_by_half_negates_odd_modes() {
        let f = FourierField::default_seed(2);
        let g = f.translate([0.5, 0.0, 0.0]);
        let d = g.axpy(c(1.0, 0.0), &f).unwrap();
        assert!(d.l2_norm() < 1e-15);
    }
}
