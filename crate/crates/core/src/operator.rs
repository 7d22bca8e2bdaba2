//! Fourier matrix elements `𝒯̂(k, j)` of the solution operator, the
//! translation and averaging identities they satisfy, the closed-form Bessel
//! matrices of the shear flows, and selection of growth controls.

use std::f64::consts::{E, PI};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::bessel;
use crate::eigen::{self, eigen3, EigenDecomposition, Mat3};
use crate::error::{DynamoError, Result};
use crate::flow::{u_flow, v_flow, w_flow, TimeFlow};
use crate::par;
use crate::solver::{Solver, SolverParams};
use crate::spectral::{c3_norm, fft3, grid_index, FourierField, WaveVector, C3, ZERO3};

/// Relative projection below which a control is not trusted.
pub const PROJ_TOL: f64 = 1e-8;
/// Minimum eigenvalue separation for a usable control matrix.
pub const GAP_TOL: f64 = 1e-6;

/// Where a matrix element came from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub flow: String,
    pub kappa: f64,
    pub interval: [f64; 2],
    pub k: [i32; 3],
    pub j: [i32; 3],
}

/// A 3×3 block `𝒯̂^{u,κ}_{s,t}(k, j)`; entry `(r, c)` is component `r` of
/// `b̂(t, k)` for data `e_c e^{2πi j·x}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ControlMatrix {
    pub a: Mat3,
    pub provenance: Provenance,
}

impl ControlMatrix {
    pub fn distance(&self, other: &Mat3) -> f64 {
        eigen::frobenius(&eigen::sub(&self.a, other))
    }

    pub fn hermitian_defect(&self) -> f64 {
        eigen::hermitian_defect(&self.a)
    }

    pub fn eigen(&self) -> EigenDecomposition {
        eigen3(&self.a)
    }

    pub fn is_finite(&self) -> bool {
        self.a.iter().flatten().all(|z| z.is_finite())
    }
}

fn label(flow: &TimeFlow) -> String {
    flow.segments()
        .iter()
        .filter(|s| !s.is_idle())
        .map(|s| s.label.as_str())
        .collect::<Vec<_>>()
        .join("+")
}

fn no_projection(params: &SolverParams) -> SolverParams {
    // arbitrary v ∈ C³ need not be solenoidal; projecting would change the operator
    SolverParams {
        project_solenoidal: false,
        ..*params
    }
}

fn unit(c: usize) -> C3 {
    let mut v = ZERO3;
    v[c] = Complex64::new(1.0, 0.0);
    v
}

fn check_mode(k: WaveVector, n: usize) -> Result<()> {
    if k.linf() > n as i32 {
        Err(DynamoError::OutOfRange { k, n })
    } else {
        Ok(())
    }
}

/// `𝒯̂^{u,κ}_{s,t}(k, j)` from three column solves (run in parallel).
pub fn matrix_element(
    flow: &TimeFlow,
    kappa: f64,
    s: f64,
    t: f64,
    k: WaveVector,
    j: WaveVector,
    params: &SolverParams,
) -> Result<ControlMatrix> {
    check_mode(k, params.n)?;
    check_mode(j, params.n)?;
    let p = no_projection(params);
    let solver = Solver::new(flow, kappa, p)?;
    let data: Vec<FourierField> = (0..3)
        .map(|c| FourierField::single_mode(p.n, j, unit(c)))
        .collect::<Result<_>>()?;
    let cols = solver.evolve_many(&data, s, t)?;
    let mut a = [[Complex64::new(0.0, 0.0); 3]; 3];
    for (c, col) in cols.iter().enumerate() {
        let v = col.coefficient(k);
        for r in 0..3 {
            a[r][c] = v[r];
        }
    }
    Ok(ControlMatrix {
        a,
        provenance: Provenance {
            flow: label(flow),
            kappa,
            interval: [s, t],
            k: k.to_array(),
            j: j.to_array(),
        },
    })
}

/// The three rows of `𝒯̂(k, ·)` as fields over `j`: `rows[r](j)[c] = 𝒯̂(k, j)[r][c]`.
/// Computed with three transposed solves.
pub fn matrix_rows(
    flow: &TimeFlow,
    kappa: f64,
    s: f64,
    t: f64,
    k: WaveVector,
    params: &SolverParams,
) -> Result<[FourierField; 3]> {
    check_mode(k, params.n)?;
    let p = no_projection(params);
    let solver = Solver::new(flow, kappa, p)?;
    let finals: Vec<FourierField> = (0..3)
        .map(|r| FourierField::single_mode(p.n, k, unit(r)))
        .collect::<Result<_>>()?;
    let rows = solver.evolve_transpose_many(&finals, s, t)?;
    let mut it = rows.into_iter();
    Ok([it.next().unwrap(), it.next().unwrap(), it.next().unwrap()])
}

/// The functional `b ↦ ω·b̂(t, k)` pulled back to time `s`:
/// returns `r` with `ω·(𝒯b)(k) = Σ_j r(j)·b̂(j)` (bilinear dots).
pub fn costate(
    solver: &Solver<'_>,
    omega: &C3,
    k: WaveVector,
    s: f64,
    t: f64,
) -> Result<FourierField> {
    let fin = FourierField::single_mode(solver.params().n, k, *omega)?;
    solver.evolve_transpose(&fin, s, t)
}

/// `G(y_m) = Σ_j e^{2πi (j−k)·y_m} r(j)·b̂(j)` on the grid `y_m = m/M`,
/// i.e. the value of `ω·b̂(t,k)` after running the flow translated by `y_m`
/// on data `b`, where `r` is the costate of `ω` at `k`. Index layout matches
/// [`grid_point`].
pub fn translation_scan(r: &FourierField, b: &FourierField, k: WaveVector, m: usize) -> Vec<Complex64> {
    let mut g = vec![Complex64::new(0.0, 0.0); m * m * m];
    for ((j, rj), bj) in r.iter().zip(b.coeffs()) {
        let sj = rj[0] * bj[0] + rj[1] * bj[1] + rj[2] * bj[2];
        if sj != Complex64::new(0.0, 0.0) {
            g[grid_index(j - k, m)] += sj;
        }
    }
    fft3(&mut g, m, true);
    g
}

/// Grid point `y_m` for flat index `idx` of an `M³` translation grid.
pub fn grid_point(idx: usize, m: usize) -> [f64; 3] {
    let mf = m as f64;
    [
        (idx / (m * m)) as f64 / mf,
        ((idx / m) % m) as f64 / mf,
        (idx % m) as f64 / mf,
    ]
}

/// `‖𝒯̂^{τ_y u}(k,j) − e^{2πi(j−k)·y} 𝒯̂^u(k,j)‖_F` over the flow's lifetime.
pub fn translation_identity_residual(
    flow: &TimeFlow,
    kappa: f64,
    k: WaveVector,
    j: WaveVector,
    y: [f64; 3],
    params: &SolverParams,
) -> Result<f64> {
    let (s, t) = flow.lifetime();
    let base = matrix_element(flow, kappa, s, t, k, j, params)?;
    let moved = matrix_element(&flow.translate(y), kappa, s, t, k, j, params)?;
    let ph = Complex64::from_polar(1.0, 2.0 * PI * (j - k).dot_f64(y));
    Ok(moved.distance(&eigen::scale(&base.a, ph)))
}

/// Result of [`averaged_matrix`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AveragedMatrix {
    pub matrix: ControlMatrix,
    pub grid: usize,
    /// `M < 2N+1`: distinct modes can alias onto `k` and the average is not diagonal.
    pub aliasing_warning: bool,
}

/// Averaged `k`-coefficient of `𝒯^{τ_y u} b` over the uniform `M³` grid,
/// given the rows of `𝒯̂(k, ·)`; sums the grid literally.
pub fn averaged_row_action(rows: &[FourierField; 3], probe: &FourierField, k: WaveVector, m: usize) -> C3 {
    let norm = 1.0 / (m * m * m) as f64;
    [0, 1, 2].map(|r| translation_scan(&rows[r], probe, k, m).iter().sum::<Complex64>() * norm)
}

/// Deterministic distractor with mass on every resolved `j ≠ k`.
pub fn distractor(n: usize, k: WaveVector) -> FourierField {
    let mut f = FourierField::zeros(n);
    let idx: Vec<usize> = (0..f.coeffs().len()).collect();
    for i in idx {
        let j = f.wavevector(i);
        if j == k {
            continue;
        }
        let d = 1.0 / (1.0 + (j - k).norm_sq() as f64);
        let ph = 0.7 * j.kx as f64 - 1.3 * j.ky as f64 + 0.4 * j.kz as f64;
        f.coeffs_mut()[i] = [
            Complex64::from_polar(d, ph),
            Complex64::from_polar(0.5 * d, -ph),
            Complex64::new(0.0, d),
        ];
    }
    f
}

/// Translation-averaged diagonal block: column `c` is the grid average of
/// the `k`-coefficient for the probe `e_c e^{2πi k·x}` plus a distractor
/// carrying mass at every other resolved mode. With `M ≥ 2N+1` the
/// distractor cancels exactly and the result is `𝒯̂(k, k)`.
pub fn averaged_matrix(
    flow: &TimeFlow,
    kappa: f64,
    k: WaveVector,
    m: usize,
    params: &SolverParams,
) -> Result<AveragedMatrix> {
    let (s, t) = flow.lifetime();
    let rows = matrix_rows(flow, kappa, s, t, k, params)?;
    let d = distractor(params.n, k);
    let mut a = [[Complex64::new(0.0, 0.0); 3]; 3];
    for c in 0..3 {
        let mut probe = d.clone();
        probe.set(k, unit(c))?;
        let col = averaged_row_action(&rows, &probe, k, m);
        for r in 0..3 {
            a[r][c] = col[r];
        }
    }
    Ok(AveragedMatrix {
        matrix: ControlMatrix {
            a,
            provenance: Provenance {
                flow: format!("avg_M{m}({})", label(flow)),
                kappa,
                interval: [s, t],
                k: k.to_array(),
                j: k.to_array(),
            },
        },
        grid: m,
        aliasing_warning: m < 2 * params.n + 1,
    })
}

/// Largest entry of the off-target matrix elements that the translation
/// symmetries force to vanish: `𝒯̂^{V_λ}(e_z, k)` for `k` off the `y`-line
/// through `e_z`, and `𝒯̂^{U_λ}(k, e_z)` for `k` off the `x`-`z` plane
/// `k_y = 0`; all `|k|_∞ ≤ radius`.
pub fn selection_rule_residual(lambda: f64, radius: i32, params: &SolverParams) -> Result<f64> {
    let v = v_flow(lambda);
    let u = u_flow(lambda);
    let rows = matrix_rows(&v, 0.0, 0.0, 1.0, WaveVector::EZ, params)?;
    let p = no_projection(params);
    let us = Solver::new(&u, 0.0, p)?;
    let data: Vec<FourierField> = (0..3)
        .map(|c| FourierField::single_mode(p.n, WaveVector::EZ, unit(c)))
        .collect::<Result<_>>()?;
    let cols = us.evolve_many(&data, 0.0, 1.0)?;
    let mut worst: f64 = 0.0;
    for x in -radius..=radius {
        for y in -radius..=radius {
            for z in -radius..=radius {
                let k = WaveVector::new(x, y, z);
                let d = k - WaveVector::EZ;
                if d.kx != 0 || d.kz != 0 {
                    for r in &rows {
                        worst = worst.max(c3_norm(&r.coefficient(k)));
                    }
                }
                if d.ky != 0 {
                    for c in &cols {
                        worst = worst.max(c3_norm(&c.coefficient(k)));
                    }
                }
            }
        }
    }
    Ok(worst)
}

// ---------------------------------------------------------------------------
// Closed forms
// ---------------------------------------------------------------------------

/// `α = J₀(π/2)`, `β = 2πJ₁(π/2)` and the explicit shear-flow matrices.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AnalyticMatrixSet {
    pub alpha: f64,
    pub beta: f64,
}

impl Default for AnalyticMatrixSet {
    fn default() -> Self {
        Self::new()
    }
}

impl AnalyticMatrixSet {
    pub fn new() -> Self {
        Self {
            alpha: bessel::alpha(),
            beta: bessel::beta(),
        }
    }

    pub fn with_constants(alpha: f64, beta: f64) -> Self {
        Self { alpha, beta }
    }

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    /// `𝒯̂^{U_λ,0}_{0,1}(e_z, e_z)`.
    pub fn u(&self, lambda: f64) -> Mat3 {
        let (a, b) = (self.alpha, self.beta);
        let z = Self::c(0.0, 0.0);
        [
            [Self::c(a, 0.0), z, z],
            [Self::c(0.0, lambda * b), Self::c(a, 0.0), z],
            [z, z, Self::c(a, 0.0)],
        ]
    }

    /// `𝒯̂^{V_λ,0}_{0,1}(e_z, e_z)`.
    pub fn v(&self, lambda: f64) -> Mat3 {
        let (a, b) = (self.alpha, self.beta);
        let z = Self::c(0.0, 0.0);
        [
            [Self::c(a, 0.0), Self::c(0.0, lambda * b), z],
            [z, Self::c(a, 0.0), z],
            [z, z, Self::c(a, 0.0)],
        ]
    }

    /// `𝒯̂^{W_λ,0}_{0,2}(e_z, e_z)`.
    pub fn w(&self, lambda: f64) -> Mat3 {
        let (a, b) = (self.alpha, self.beta);
        let z = Self::c(0.0, 0.0);
        [
            [Self::c(a * a + lambda * lambda * b * b, 0.0), Self::c(0.0, -lambda * a * b), z],
            [Self::c(0.0, lambda * a * b), Self::c(a * a, 0.0), z],
            [z, z, Self::c(a * a, 0.0)],
        ]
    }

    /// Closed-form eigenvalues of [`AnalyticMatrixSet::w`] in descending order.
    pub fn w_eigenvalues(&self, lambda: f64) -> [f64; 3] {
        let (a, b) = (self.alpha, self.beta);
        let bl = b * lambda;
        let root = (bl * bl + 4.0 * a * a).sqrt();
        let base = 0.5 * bl * bl + a * a;
        let mut v = [base + 0.5 * bl.abs() * root, base - 0.5 * bl.abs() * root, a * a];
        v.sort_by(|x, y| y.total_cmp(x));
        v
    }

    /// Closed-form eigenvectors `(x_±, i, 0)` and `e_z` (unnormalised), in
    /// the order `λ_+, λ_−, α²`. Requires `λ ≠ 0`.
    pub fn w_eigenvectors(&self, lambda: f64) -> [C3; 3] {
        let (a, b) = (self.alpha, self.beta);
        let bl = b * lambda;
        let root = (bl * bl + 4.0 * a * a).sqrt();
        let xp = (bl * bl + bl.abs() * root) / (2.0 * a * b * lambda);
        let xm = (bl * bl - bl.abs() * root) / (2.0 * a * b * lambda);
        let i = Self::c(0.0, 1.0);
        let z = Self::c(0.0, 0.0);
        [
            [Self::c(xp, 0.0), i, z],
            [Self::c(xm, 0.0), i, z],
            [z, z, Self::c(1.0, 0.0)],
        ]
    }
}

// ---------------------------------------------------------------------------
// Controls
// ---------------------------------------------------------------------------

/// The two control matrices `A₁ = 𝒯̂^{W_R,κ}_{0,2}(e_z,e_z)`,
/// `A₂ = 𝒯̂^{W_{−R},κ}_{0,2}(e_z,e_z)` with their spectral data.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ControlPair {
    pub kappa: f64,
    pub r: f64,
    pub matrices: [ControlMatrix; 2],
    pub eigen: [EigenDecomposition; 2],
}

impl ControlPair {
    pub fn compute(kappa: f64, r: f64, params: &SolverParams) -> Result<ControlPair> {
        let flows = [w_flow(r), w_flow(-r)];
        let m: Vec<ControlMatrix> = flows
            .iter()
            .map(|f| matrix_element(f, kappa, 0.0, 2.0, WaveVector::EZ, WaveVector::EZ, params))
            .collect::<Result<_>>()?;
        let [m1, m2]: [ControlMatrix; 2] = m.try_into().expect("two controls");
        let e = [m1.eigen(), m2.eigen()];
        Ok(ControlPair {
            kappa,
            r,
            matrices: [m1, m2],
            eigen: e,
        })
    }

    /// Control flow for choice `1` (`W_R`) or `2` (`W_{−R}`).
    pub fn flow(&self, choice: usize) -> TimeFlow {
        if choice == 1 {
            w_flow(self.r)
        } else {
            w_flow(-self.r)
        }
    }

    pub fn min_gap(&self) -> f64 {
        self.eigen[0].gap.min(self.eigen[1].gap)
    }

    pub fn min_top_modulus(&self) -> f64 {
        self.eigen[0].values[0].norm().min(self.eigen[1].values[0].norm())
    }
}

/// Outcome of [`control_select`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ControlChoice {
    /// `1` for `W_R`, `2` for `W_{−R}`.
    pub choice: usize,
    /// Predicted per-application growth factor `|λ₁^κ|` of the chosen control.
    pub factor: f64,
    /// Relative projections of `v` on the growing eigendirections of `A₁`, `A₂`.
    pub projections: [f64; 2],
}

/// Relative weight of `v` on eigendirections with `|λ| > e`:
/// `Σ_{|λ_i|>e} |η_i† v| / ‖v‖`.
pub fn growing_projection(e: &EigenDecomposition, v: &C3) -> f64 {
    let nv = c3_norm(v);
    (0..3)
        .filter(|&i| e.values[i].norm() > E)
        .map(|i| e.coordinate(i, v).norm())
        .sum::<f64>()
        / nv
}

/// Chooses the control whose growing eigendirections carry more of `v`.
pub fn control_select(v: &C3, pair: &ControlPair, proj_tol: f64) -> Result<ControlChoice> {
    let nv = c3_norm(v);
    if nv == 0.0 {
        return Err(DynamoError::Precondition("control_select needs v != 0".into()));
    }
    if v[2].norm() > 1e-6 * nv {
        return Err(DynamoError::Precondition(format!(
            "controls are certified only for e_z·v = 0 (|v_z|/|v| = {:e})",
            v[2].norm() / nv
        )));
    }
    for (i, e) in pair.eigen.iter().enumerate() {
        if e.gap <= GAP_TOL {
            return Err(DynamoError::Precondition(format!(
                "control {} has eigenvalue gap {:e} below {GAP_TOL:e}",
                i + 1,
                e.gap
            )));
        }
    }
    let proj = [growing_projection(&pair.eigen[0], v), growing_projection(&pair.eigen[1], v)];
    let choice = if proj[0] >= proj[1] { 1 } else { 2 };
    if proj[choice - 1] <= proj_tol {
        return Err(DynamoError::ControlSelection {
            kappa: pair.kappa,
            proj1: proj[0],
            proj2: proj[1],
            tol: proj_tol,
        });
    }
    Ok(ControlChoice {
        choice,
        factor: pair.eigen[choice - 1].values[0].norm(),
        projections: proj,
    })
}

/// `min_{v ⊥ e_z, |v|=1} max(p₁(v), p₂(v))` over a `θ×ψ` grid of
/// `v = (cos θ, e^{iψ} sin θ, 0)`.
pub fn worst_case_margin(pair: &ControlPair, n_theta: usize, n_psi: usize) -> f64 {
    let rows = par::map_range(n_theta + 1, |a| {
        let th = 0.5 * PI * a as f64 / n_theta as f64;
        (0..n_psi)
            .map(|b| {
                let ps = 2.0 * PI * b as f64 / n_psi as f64;
                let v = [
                    Complex64::new(th.cos(), 0.0),
                    Complex64::from_polar(th.sin(), ps),
                    Complex64::new(0.0, 0.0),
                ];
                growing_projection(&pair.eigen[0], &v).max(growing_projection(&pair.eigen[1], &v))
            })
            .fold(f64::INFINITY, f64::min)
    });
    // `+ 0.0` turns a −0 (exact cancellation) into +0 for reporting
    rows.into_iter().fold(f64::INFINITY, f64::min) + 0.0
}

/// One row of [`kappa0_scan`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Kappa0Row {
    pub kappa: f64,
    pub gap: f64,
    pub lambda1: f64,
    pub margin: f64,
    pub pass: bool,
}

/// Table of [`Kappa0Row`]s plus the certified threshold.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Kappa0Scan {
    pub r: f64,
    pub rows: Vec<Kappa0Row>,
    /// Largest grid κ such that every row up to it passes (`None` if the first fails).
    pub kappa0_emp: Option<f64>,
    /// `max |Δmargin / Δκ|` between adjacent rows.
    pub lipschitz: f64,
}

impl Kappa0Scan {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("kappa,gap,lambda1,margin,pass\n");
        for r in &self.rows {
            s.push_str(&format!("{:e},{:e},{:e},{:e},{}\n", r.kappa, r.gap, r.lambda1, r.margin, r.pass));
        }
        s
    }
}

/// Certifies `|λ₁^κ| > e`, simple spectra and the span condition over a κ grid.
pub fn kappa0_scan(kappas: &[f64], r: f64, params: &SolverParams) -> Result<Kappa0Scan> {
    let mut ks = kappas.to_vec();
    ks.sort_by(f64::total_cmp);
    ks.dedup();
    let mut rows = Vec::with_capacity(ks.len());
    for &kappa in &ks {
        let pair = ControlPair::compute(kappa, r, params)?;
        let gap = pair.min_gap();
        let lambda1 = pair.min_top_modulus();
        let margin = worst_case_margin(&pair, 200, 400);
        rows.push(Kappa0Row {
            kappa,
            gap,
            lambda1,
            margin,
            pass: lambda1 > E && gap > GAP_TOL && margin > PROJ_TOL,
        });
    }
    let kappa0_emp = rows.iter().take_while(|r| r.pass).last().map(|r| r.kappa);
    let lipschitz = rows
        .windows(2)
        .map(|w| ((w[1].margin - w[0].margin) / (w[1].kappa - w[0].kappa)).abs())
        .fold(0.0, f64::max);
    Ok(Kappa0Scan {
        r,
        rows,
        kappa0_emp,
        lipschitz,
    })
}
