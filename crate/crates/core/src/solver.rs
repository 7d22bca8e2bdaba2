//! Fourier-space integrator for `∂_t b − κΔb + u·∇b − b·∇u = 0`.
//!
//! One step of size `h` is Strang-split: exact diffusion for `h/2`, a classical
//! RK4 step of the bilinear term, exact diffusion for `h/2`. Diffusion is kept
//! lazy (a per-run clock records how far the state has been diffused), so runs
//! through flow-free intervals are a single closed-form multiplication and
//! consecutive half-steps merge exactly.
//!
//! The bilinear term is an exact convolution against the flow's few modes.
//! Every work array tracks an inclusive support box so that fields with
//! localized spectra (all matrix-element columns, early schedule fields) only
//! pay for the occupied part of the cube.
//!
//! The same operation list can be executed backwards with every operator
//! transposed, giving the exact (bilinear) transpose of the discrete solution
//! map; this is what makes row-wise matrix elements and translation scans cheap.

use std::f64::consts::PI;
use std::fmt::Write as _;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{DynamoError, Result};
use crate::flow::{FlowSegment, TimeFlow};
use crate::par;
use crate::spectral::{project_mode, FourierField, WaveVector, C3, ZERO3};

/// Integration parameters.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolverParams {
    /// Requested step; each segment may use a smaller one (see [`SolverParams::effective_dt`]).
    pub dt: f64,
    /// Resolution `N`: coefficients live on `|k|_∞ ≤ N`.
    pub n: usize,
    /// Restrict the bilinear output to `|k|_∞ ≤ ⌊2N/3⌋`.
    pub dealias: bool,
    /// Leray-project after every step.
    pub project_solenoidal: bool,
}

impl SolverParams {
    pub fn new(n: usize, dt: f64) -> Self {
        Self {
            dt,
            n,
            dealias: false,
            project_solenoidal: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(DynamoError::InvalidInput(format!("dt must be positive, got {}", self.dt)));
        }
        if self.n == 0 {
            return Err(DynamoError::InvalidInput("resolution N must be at least 1".into()));
        }
        Ok(())
    }

    /// Stability cap `0.1 / max(1, sup‖u‖_∞ · N)` for one segment.
    pub fn dt_max(&self, seg: &FlowSegment) -> f64 {
        0.1 / (seg.sup_velocity() * self.n as f64).max(1.0)
    }

    pub fn effective_dt(&self, seg: &FlowSegment) -> f64 {
        self.dt.min(self.dt_max(seg))
    }

    fn dealias_limit(&self) -> i32 {
        if self.dealias {
            (2 * self.n / 3) as i32
        } else {
            self.n as i32
        }
    }
}

/// Samples recorded by [`Solver::solve`].
#[derive(Clone, Debug, Default, PartialEq)]
pub struct SolverTrace {
    pub kappa: f64,
    pub watch: Vec<WaveVector>,
    pub times: Vec<f64>,
    pub l2sq: Vec<f64>,
    pub h1sq: Vec<f64>,
    /// `watched[i][w]` is `b̂(times[i], watch[w])`.
    pub watched: Vec<Vec<C3>>,
    /// Instantaneous bounds on `‖∇u‖_∞` and `‖∇²u‖_∞` at each sample.
    pub grad_bound: Vec<f64>,
    pub hess_bound: Vec<f64>,
    /// `∫ ‖∇u‖_∞` and `∫ ‖∇²u‖_∞` from the run start to each sample.
    pub grad_integral: Vec<f64>,
    pub hess_integral: Vec<f64>,
}

impl SolverTrace {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// Appends a later trace, offsetting its integrals; a duplicated
    /// boundary sample is dropped.
    pub fn append(&mut self, other: &SolverTrace) {
        let g0 = self.grad_integral.last().copied().unwrap_or(0.0);
        let h0 = self.hess_integral.last().copied().unwrap_or(0.0);
        let last = self.times.last().copied().unwrap_or(f64::NEG_INFINITY);
        if self.watch.is_empty() {
            self.watch = other.watch.clone();
            self.kappa = other.kappa;
        }
        for i in 0..other.len() {
            if other.times[i] <= last {
                continue;
            }
            self.times.push(other.times[i]);
            self.l2sq.push(other.l2sq[i]);
            self.h1sq.push(other.h1sq[i]);
            self.watched.push(other.watched[i].clone());
            self.grad_bound.push(other.grad_bound[i]);
            self.hess_bound.push(other.hess_bound[i]);
            self.grad_integral.push(g0 + other.grad_integral[i]);
            self.hess_integral.push(h0 + other.hess_integral[i]);
        }
    }

    /// CSV with columns `t,l2sq,h1sq` then `re_*`/`im_*` for each watched
    /// wavevector and component.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("t,l2sq,h1sq");
        for k in &self.watch {
            for c in ["x", "y", "z"] {
                let _ = write!(s, ",re_{c}({},{},{}),im_{c}({},{},{})", k.kx, k.ky, k.kz, k.kx, k.ky, k.kz);
            }
        }
        s.push('\n');
        for i in 0..self.len() {
            let _ = write!(s, "{:e},{:e},{:e}", self.times[i], self.l2sq[i], self.h1sq[i]);
            for v in &self.watched[i] {
                for z in v {
                    let _ = write!(s, ",{:e},{:e}", z.re, z.im);
                }
            }
            s.push('\n');
        }
        s
    }
}

// ---------------------------------------------------------------------------
// Operation list
// ---------------------------------------------------------------------------

#[derive(Clone, Copy, Debug)]
enum Op {
    /// One Strang step on `[t0, t1]` with the modes of segment `seg`.
    Advect { seg: usize, t0: f64, t1: f64 },
    Project,
    /// Trace sample at `t`; `seg` supplies the instantaneous flow bounds.
    Mark { seg: Option<usize>, t: f64 },
    /// Bring the diffusion clock to `t`.
    Flush(f64),
}

fn idle_marks(ops: &mut Vec<Op>, a: f64, b: f64, dt: f64, seg: Option<usize>) {
    let m = ((b - a) / dt).ceil().clamp(1.0, 64.0) as usize;
    for j in 1..=m {
        let t = if j == m { b } else { a + (b - a) * j as f64 / m as f64 };
        ops.push(Op::Mark { seg, t });
    }
    ops.push(Op::Flush(b));
}

fn build_plan(flow: &TimeFlow, s: f64, t: f64, p: &SolverParams) -> Vec<Op> {
    let (fs, fe) = flow.lifetime();
    let mut ops = vec![Op::Mark {
        seg: flow.segments().iter().position(|g| g.start <= s && s <= g.end),
        t: s,
    }];
    if s < fs {
        let b = t.min(fs);
        if b > s {
            idle_marks(&mut ops, s, b, p.dt, None);
        }
    }
    for (i, seg) in flow.segments().iter().enumerate() {
        let a = seg.start.max(s);
        let b = seg.end.min(t);
        if b <= a {
            continue;
        }
        if seg.is_idle() {
            idle_marks(&mut ops, a, b, p.dt, Some(i));
            continue;
        }
        let n = ((b - a) / p.effective_dt(seg)).ceil().max(1.0) as usize;
        let at = |j: usize| if j == n { b } else { a + (b - a) * j as f64 / n as f64 };
        for j in 0..n {
            let (t0, t1) = (at(j), at(j + 1));
            ops.push(Op::Advect { seg: i, t0, t1 });
            if p.project_solenoidal {
                ops.push(Op::Project);
            }
            ops.push(Op::Mark { seg: Some(i), t: t1 });
        }
        ops.push(Op::Flush(b));
    }
    if t > fe {
        let a = s.max(fe);
        if t > a {
            idle_marks(&mut ops, a, t, p.dt, None);
        }
    }
    ops
}

// ---------------------------------------------------------------------------
// Support-tracked work arrays
// ---------------------------------------------------------------------------

/// Inclusive box `lo ≤ k ≤ hi` (componentwise); empty when any `lo > hi`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
struct Support {
    lo: [i32; 3],
    hi: [i32; 3],
}

impl Support {
    const EMPTY: Support = Support {
        lo: [1; 3],
        hi: [0; 3],
    };

    fn is_empty(&self) -> bool {
        (0..3).any(|a| self.lo[a] > self.hi[a])
    }

    fn of_field(f: &FourierField) -> Support {
        let mut s = Support {
            lo: [i32::MAX; 3],
            hi: [i32::MIN; 3],
        };
        for (k, c) in f.iter() {
            if c.iter().any(|z| *z != Complex64::new(0.0, 0.0)) {
                let a = k.to_array();
                for d in 0..3 {
                    s.lo[d] = s.lo[d].min(a[d]);
                    s.hi[d] = s.hi[d].max(a[d]);
                }
            }
        }
        if s.lo[0] > s.hi[0] {
            Support::EMPTY
        } else {
            s
        }
    }

    fn union(self, o: Support) -> Support {
        if self.is_empty() {
            return o;
        }
        if o.is_empty() {
            return self;
        }
        Support {
            lo: [0, 1, 2].map(|d| self.lo[d].min(o.lo[d])),
            hi: [0, 1, 2].map(|d| self.hi[d].max(o.hi[d])),
        }
    }

    fn clip(self, r: i32) -> Support {
        if self.is_empty() {
            return self;
        }
        let s = Support {
            lo: self.lo.map(|v| v.max(-r)),
            hi: self.hi.map(|v| v.min(r)),
        };
        if s.is_empty() {
            Support::EMPTY
        } else {
            s
        }
    }

    fn expand(self, lo: [i32; 3], hi: [i32; 3]) -> Support {
        if self.is_empty() {
            return self;
        }
        Support {
            lo: [0, 1, 2].map(|d| self.lo[d] + lo[d]),
            hi: [0, 1, 2].map(|d| self.hi[d] + hi[d]),
        }
    }
}

struct Buf {
    data: Vec<C3>,
    sup: Support,
}

#[derive(Clone, Copy)]
struct Layout {
    n: i32,
    s: usize,
}

impl Layout {
    fn idx(&self, x: i32, y: i32, z: i32) -> usize {
        let (n, s) = (self.n, self.s);
        (((x + n) as usize * s) + (y + n) as usize) * s + (z + n) as usize
    }

    /// Calls `f(start_index, wavevector_of_start, len)` for each z-row of `sup`.
    fn rows(&self, sup: Support, mut f: impl FnMut(usize, [i32; 3], usize)) {
        if sup.is_empty() {
            return;
        }
        let len = (sup.hi[2] - sup.lo[2] + 1) as usize;
        for x in sup.lo[0]..=sup.hi[0] {
            for y in sup.lo[1]..=sup.hi[1] {
                f(self.idx(x, y, sup.lo[2]), [x, y, sup.lo[2]], len);
            }
        }
    }
}

impl Buf {
    fn new(lay: Layout) -> Buf {
        Buf {
            data: vec![ZERO3; lay.s * lay.s * lay.s],
            sup: Support::EMPTY,
        }
    }

    fn clear(&mut self, lay: Layout) {
        let sup = self.sup;
        lay.rows(sup, |i, _, len| self.data[i..i + len].fill(ZERO3));
        self.sup = Support::EMPTY;
    }

    fn load(&mut self, lay: Layout, f: &FourierField) {
        self.clear(lay);
        self.data.copy_from_slice(f.coeffs());
        self.sup = Support::of_field(f);
    }

    /// `self = a·x + b·y`.
    fn set_lincomb(&mut self, lay: Layout, a: f64, x: &Buf, b: f64, y: &Buf) {
        self.clear(lay);
        let sup = x.sup.union(y.sup);
        lay.rows(sup, |i, _, len| {
            for j in i..i + len {
                let (u, v) = (&x.data[j], &y.data[j]);
                self.data[j] = [0, 1, 2].map(|c| u[c] * a + v[c] * b);
            }
        });
        self.sup = sup;
    }

    /// `self += b·y`.
    fn add_scaled(&mut self, lay: Layout, b: f64, y: &Buf) {
        lay.rows(y.sup, |i, _, len| {
            for j in i..i + len {
                let v = &y.data[j];
                for c in 0..3 {
                    self.data[j][c] += v[c] * b;
                }
            }
        });
        self.sup = self.sup.union(y.sup);
    }
}

/// A flow mode at one stage time with the factor `2πi` folded in.
type StageMode = (WaveVector, C3);

fn stage_modes(seg: &FlowSegment, t: f64) -> Vec<StageMode> {
    let tpi = Complex64::new(0.0, 2.0 * PI);
    seg.modes_at(t)
        .into_iter()
        .filter(|(_, a)| a.iter().any(|z| z.norm_sqr() > 0.0))
        .map(|(k, a)| (k, a.map(|z| z * tpi)))
        .collect()
}

fn mode_extent(modes: &[StageMode]) -> ([i32; 3], [i32; 3]) {
    let mut lo = [0; 3];
    let mut hi = [0; 3];
    for (q, _) in modes {
        let a = q.to_array();
        for d in 0..3 {
            lo[d] = lo[d].min(a[d]);
            hi[d] = hi[d].max(a[d]);
        }
    }
    (lo, hi)
}

/// `out = B x` (forward) or `out = Bᵀ x` (transpose) for the bilinear term
/// `(Bx)(k) = Σ_q 2πi[(x(p)·q) μ − (μ·p) x(p)]`, `p = k − q`.
///
/// Written as a gather over output x-slabs so slabs can be filled in parallel.
fn bilinear(out: &mut Buf, input: &Buf, modes: &[StageMode], lay: Layout, limit: i32, transpose: bool) {
    out.clear(lay);
    if input.sup.is_empty() || modes.is_empty() {
        return;
    }
    let (qlo, qhi) = mode_extent(modes);
    let (in_sup, out_sup) = if transpose {
        let i = input.sup.clip(limit);
        (i, i.expand(qhi.map(|v| -v), qlo.map(|v| -v)).clip(lay.n))
    } else {
        (input.sup, input.sup.expand(qlo, qhi).clip(limit))
    };
    if in_sup.is_empty() || out_sup.is_empty() {
        return;
    }
    out.sup = out_sup;
    // input coordinate = output coordinate + sgn·q
    let sgn = if transpose { 1 } else { -1 };
    let s = lay.s;
    let n = lay.n;
    let src = &input.data;
    par::for_each_chunk_mut(&mut out.data, s * s, |ix, slab| {
        let ox = ix as i32 - n;
        if ox < out_sup.lo[0] || ox > out_sup.hi[0] {
            return;
        }
        for &(q, a) in modes {
            let ix_in = ox + sgn * q.kx;
            if ix_in < in_sup.lo[0] || ix_in > in_sup.hi[0] {
                continue;
            }
            let qf = q.as_f64();
            for oy in out_sup.lo[1]..=out_sup.hi[1] {
                let iy_in = oy + sgn * q.ky;
                if iy_in < in_sup.lo[1] || iy_in > in_sup.hi[1] {
                    continue;
                }
                let z_lo = out_sup.lo[2].max(in_sup.lo[2] - sgn * q.kz);
                let z_hi = out_sup.hi[2].min(in_sup.hi[2] - sgn * q.kz);
                if z_lo > z_hi {
                    continue;
                }
                // p is the input wavevector in the forward map, the output one
                // in the transpose
                let (px, py) = if transpose { (ox, oy) } else { (ix_in, iy_in) };
                let a_pxy = a[0] * px as f64 + a[1] * py as f64;
                let in_base = lay.idx(ix_in, iy_in, z_lo + sgn * q.kz);
                let out_base = ((oy + n) as usize) * s + (z_lo + n) as usize;
                for (off, oz) in (z_lo..=z_hi).enumerate() {
                    let c = &src[in_base + off];
                    let pz = if transpose { oz } else { oz + sgn * q.kz };
                    let ap = a_pxy + a[2] * pz as f64;
                    let o = &mut slab[out_base + off];
                    if transpose {
                        let aw = a[0] * c[0] + a[1] * c[1] + a[2] * c[2];
                        for d in 0..3 {
                            o[d] += aw * qf[d] - ap * c[d];
                        }
                    } else {
                        let cq = c[0] * qf[0] + c[1] * qf[1] + c[2] * qf[2];
                        for d in 0..3 {
                            o[d] += cq * a[d] - ap * c[d];
                        }
                    }
                }
            }
        }
    });
}

// ---------------------------------------------------------------------------
// Executor
// ---------------------------------------------------------------------------

struct Exec<'a> {
    flow: &'a TimeFlow,
    kappa: f64,
    params: SolverParams,
    lay: Layout,
    x: Buf,
    acc: Buf,
    z: Buf,
    k: Buf,
    clock: f64,
    factors: Vec<f64>,
}

impl<'a> Exec<'a> {
    fn new(flow: &'a TimeFlow, kappa: f64, params: SolverParams) -> Self {
        let lay = Layout {
            n: params.n as i32,
            s: 2 * params.n + 1,
        };
        Self {
            flow,
            kappa,
            params,
            lay,
            x: Buf::new(lay),
            acc: Buf::new(lay),
            z: Buf::new(lay),
            k: Buf::new(lay),
            clock: 0.0,
            factors: vec![1.0; 3 * params.n * params.n + 1],
        }
    }

    /// Fills `factors[|k|²] = e^{−4π²κ|k|²τ}`; false when all factors are 1.
    fn fill_factors(&mut self, tau: f64) -> bool {
        if self.kappa == 0.0 || tau == 0.0 {
            return false;
        }
        let c = -4.0 * PI * PI * self.kappa * tau;
        for (m, f) in self.factors.iter_mut().enumerate() {
            *f = (c * m as f64).exp();
        }
        true
    }

    fn diffuse(&mut self, tau: f64) {
        if !self.fill_factors(tau) {
            return;
        }
        let lay = self.lay;
        let (x, f) = (&mut self.x, &self.factors);
        lay.rows(x.sup, |i, k0, len| {
            let base = (k0[0] * k0[0] + k0[1] * k0[1]) as usize;
            for (off, z) in (k0[2]..k0[2] + len as i32).enumerate() {
                let g = f[base + (z * z) as usize];
                for c in 0..3 {
                    x.data[i + off][c] *= g;
                }
            }
        });
    }

    fn sync_forward(&mut self, t: f64) {
        let tau = t - self.clock;
        self.diffuse(tau);
        self.clock = t;
    }

    fn sync_backward(&mut self, t: f64) {
        let tau = self.clock - t;
        self.diffuse(tau);
        self.clock = t;
    }

    fn project(&mut self) {
        let lay = self.lay;
        let x = &mut self.x;
        lay.rows(x.sup, |i, k0, len| {
            for (off, z) in (k0[2]..k0[2] + len as i32).enumerate() {
                let k = WaveVector::new(k0[0], k0[1], z);
                x.data[i + off] = project_mode(k, &x.data[i + off]);
            }
        });
    }

    fn stages(&self, seg: usize, t0: f64, t1: f64) -> Option<[Vec<StageMode>; 3]> {
        let s = &self.flow.segments()[seg];
        let m = [
            stage_modes(s, t0),
            stage_modes(s, 0.5 * (t0 + t1)),
            stage_modes(s, t1),
        ];
        (!m.iter().all(|v| v.is_empty())).then_some(m)
    }

    fn rk4(&mut self, m: &[Vec<StageMode>; 3], h: f64) {
        let lay = self.lay;
        let lim = self.params.dealias_limit();
        let Exec { x, acc, z, k, .. } = self;
        acc.set_lincomb(lay, 1.0, x, 0.0, x);
        bilinear(k, x, &m[0], lay, lim, false);
        acc.add_scaled(lay, h / 6.0, k);
        z.set_lincomb(lay, 1.0, x, h / 2.0, k);
        bilinear(k, z, &m[1], lay, lim, false);
        acc.add_scaled(lay, h / 3.0, k);
        z.set_lincomb(lay, 1.0, x, h / 2.0, k);
        bilinear(k, z, &m[1], lay, lim, false);
        acc.add_scaled(lay, h / 3.0, k);
        z.set_lincomb(lay, 1.0, x, h, k);
        bilinear(k, z, &m[2], lay, lim, false);
        acc.add_scaled(lay, h / 6.0, k);
        std::mem::swap(x, acc);
    }

    /// Exact transpose of [`Exec::rk4`].
    fn rk4_transpose(&mut self, m: &[Vec<StageMode>; 3], h: f64) {
        let lay = self.lay;
        let lim = self.params.dealias_limit();
        let Exec { x, acc, z, k, .. } = self;
        acc.set_lincomb(lay, 1.0, x, 0.0, x);
        z.set_lincomb(lay, h / 6.0, x, 0.0, x);
        bilinear(k, z, &m[2], lay, lim, true);
        acc.add_scaled(lay, 1.0, k);
        z.set_lincomb(lay, h / 3.0, x, h, k);
        bilinear(k, z, &m[1], lay, lim, true);
        acc.add_scaled(lay, 1.0, k);
        z.set_lincomb(lay, h / 3.0, x, h / 2.0, k);
        bilinear(k, z, &m[1], lay, lim, true);
        acc.add_scaled(lay, 1.0, k);
        z.set_lincomb(lay, h / 6.0, x, h / 2.0, k);
        bilinear(k, z, &m[0], lay, lim, true);
        acc.add_scaled(lay, 1.0, k);
        std::mem::swap(x, acc);
    }

    /// Norms and watched coefficients of the (virtually) diffused state.
    fn sample(&mut self, t: f64, watch: &[WaveVector]) -> (f64, f64, Vec<C3>) {
        let active = self.fill_factors(t - self.clock);
        let lay = self.lay;
        let f = &self.factors;
        let x = &self.x;
        let (mut l2, mut h1) = (0.0, 0.0);
        lay.rows(x.sup, |i, k0, len| {
            let base = (k0[0] * k0[0] + k0[1] * k0[1]) as usize;
            for (off, z) in (k0[2]..k0[2] + len as i32).enumerate() {
                let m = base + (z * z) as usize;
                let g = if active { f[m] } else { 1.0 };
                let e = x.data[i + off].iter().map(|c| c.norm_sqr()).sum::<f64>() * g * g;
                l2 += e;
                h1 += e * m as f64;
            }
        });
        let w = watch
            .iter()
            .map(|&k| {
                if k.linf() > lay.n {
                    return ZERO3;
                }
                let g = if active { f[k.norm_sq() as usize] } else { 1.0 };
                x.data[lay.idx(k.kx, k.ky, k.kz)].map(|c| c * g)
            })
            .collect();
        (l2, 4.0 * PI * PI * h1, w)
    }

    fn max_abs(&self) -> f64 {
        let mut m: f64 = 0.0;
        self.lay.rows(self.x.sup, |i, _, len| {
            for c in &self.x.data[i..i + len] {
                for z in c {
                    m = m.max(z.norm());
                }
            }
        });
        m
    }

    fn check_finite(&self, t: f64, step: usize) -> Result<()> {
        let m = self.max_abs();
        if m.is_finite() {
            Ok(())
        } else {
            Err(DynamoError::NonFinite { t, step, max_abs: m })
        }
    }

    fn run_forward(&mut self, ops: &[Op], s: f64, t: f64, trace: Option<&mut SolverTrace>) -> Result<()> {
        self.clock = s;
        let mut trace = trace;
        let (mut gi, mut hi) = (0.0, 0.0);
        let mut steps = 0;
        for op in ops {
            match *op {
                Op::Advect { seg, t0, t1 } => {
                    let h = t1 - t0;
                    let mid = t0 + 0.5 * h;
                    if let Some(m) = self.stages(seg, t0, t1) {
                        self.sync_forward(mid);
                        self.rk4(&m, h);
                        steps += 1;
                    }
                    if trace.is_some() {
                        let sg = &self.flow.segments()[seg];
                        let (b0, bm, b1) = (sg.bounds_at(t0), sg.bounds_at(mid), sg.bounds_at(t1));
                        gi += h / 6.0 * (b0.grad + 4.0 * bm.grad + b1.grad);
                        hi += h / 6.0 * (b0.hess + 4.0 * bm.hess + b1.hess);
                    }
                }
                Op::Project => self.project(),
                Op::Flush(tf) => self.sync_forward(tf),
                Op::Mark { seg, t: tm } => {
                    let Some(tr) = trace.as_deref_mut() else {
                        continue;
                    };
                    if tr.times.last().is_some_and(|&l| tm <= l) {
                        continue;
                    }
                    let (l2, h1, w) = self.sample(tm, &tr.watch.clone());
                    if !l2.is_finite() {
                        return Err(DynamoError::NonFinite {
                            t: tm,
                            step: steps,
                            max_abs: self.max_abs(),
                        });
                    }
                    let b = seg.map_or(Default::default(), |i| self.flow.segments()[i].bounds_at(tm));
                    tr.times.push(tm);
                    tr.l2sq.push(l2);
                    tr.h1sq.push(h1);
                    tr.watched.push(w);
                    tr.grad_bound.push(b.grad);
                    tr.hess_bound.push(b.hess);
                    tr.grad_integral.push(gi);
                    tr.hess_integral.push(hi);
                }
            }
        }
        self.sync_forward(t);
        self.check_finite(t, steps)
    }

    fn run_transpose(&mut self, ops: &[Op], s: f64, t: f64) -> Result<()> {
        self.clock = t;
        let mut steps = 0;
        for op in ops.iter().rev() {
            match *op {
                Op::Advect { seg, t0, t1 } => {
                    if let Some(m) = self.stages(seg, t0, t1) {
                        let h = t1 - t0;
                        self.sync_backward(t0 + 0.5 * h);
                        self.rk4_transpose(&m, h);
                        steps += 1;
                    }
                }
                Op::Project => self.project(),
                Op::Flush(tf) => self.sync_backward(tf),
                Op::Mark { .. } => {}
            }
        }
        self.sync_backward(s);
        self.check_finite(s, steps)
    }

    fn take(&self) -> FourierField {
        let mut f = FourierField::zeros(self.params.n);
        let lay = self.lay;
        let dst = f.coeffs_mut();
        lay.rows(self.x.sup, |i, _, len| {
            dst[i..i + len].copy_from_slice(&self.x.data[i..i + len]);
        });
        f
    }
}

// ---------------------------------------------------------------------------
// Public API
// ---------------------------------------------------------------------------

/// Solution operator `𝒯^{u,κ}_{s,t}` for one flow and diffusivity.
#[derive(Clone, Debug)]
pub struct Solver<'f> {
    flow: &'f TimeFlow,
    kappa: f64,
    params: SolverParams,
    watch: Vec<WaveVector>,
}

impl<'f> Solver<'f> {
    pub fn new(flow: &'f TimeFlow, kappa: f64, params: SolverParams) -> Result<Self> {
        params.validate()?;
        if !(kappa >= 0.0 && kappa.is_finite()) {
            return Err(DynamoError::InvalidInput(format!("kappa must be >= 0, got {kappa}")));
        }
        Ok(Self {
            flow,
            kappa,
            params,
            watch: WaveVector::unit_modes().to_vec(),
        })
    }

    pub fn with_watch(mut self, watch: Vec<WaveVector>) -> Self {
        self.watch = watch;
        self
    }

    pub fn params(&self) -> &SolverParams {
        &self.params
    }

    pub fn kappa(&self) -> f64 {
        self.kappa
    }

    fn check(&self, b: &FourierField, s: f64, t: f64) -> Result<()> {
        if b.resolution() != self.params.n {
            return Err(DynamoError::ResolutionMismatch {
                expected: self.params.n,
                got: b.resolution(),
            });
        }
        if !(s <= t) {
            return Err(DynamoError::InvalidInput(format!("interval [{s}, {t}] is reversed")));
        }
        Ok(())
    }

    /// `b(t)` together with a trace sampled at every step boundary.
    pub fn solve(&self, b0: &FourierField, s: f64, t: f64) -> Result<(FourierField, SolverTrace)> {
        self.check(b0, s, t)?;
        let ops = build_plan(self.flow, s, t, &self.params);
        let mut ex = Exec::new(self.flow, self.kappa, self.params);
        ex.x.load(ex.lay, b0);
        let mut trace = SolverTrace {
            kappa: self.kappa,
            watch: self.watch.clone(),
            ..Default::default()
        };
        ex.run_forward(&ops, s, t, Some(&mut trace))?;
        Ok((ex.take(), trace))
    }

    /// `b(t)` without recording a trace.
    pub fn evolve(&self, b0: &FourierField, s: f64, t: f64) -> Result<FourierField> {
        self.check(b0, s, t)?;
        let ops = build_plan(self.flow, s, t, &self.params);
        let mut ex = Exec::new(self.flow, self.kappa, self.params);
        ex.x.load(ex.lay, b0);
        ex.run_forward(&ops, s, t, None)?;
        Ok(ex.take())
    }

    /// Bilinear transpose of the discrete map: for all `b`,
    /// `Σ_k w(k)·(𝒯b)(k) = Σ_p (𝒯ᵀw)(p)·b(p)`.
    pub fn evolve_transpose(&self, w: &FourierField, s: f64, t: f64) -> Result<FourierField> {
        self.check(w, s, t)?;
        let ops = build_plan(self.flow, s, t, &self.params);
        let mut ex = Exec::new(self.flow, self.kappa, self.params);
        ex.x.load(ex.lay, w);
        ex.run_transpose(&ops, s, t)?;
        Ok(ex.take())
    }

    /// Evolves several fields independently (in parallel when enabled);
    /// results keep input order.
    pub fn evolve_many(&self, fields: &[FourierField], s: f64, t: f64) -> Result<Vec<FourierField>> {
        par::map(fields, |b| self.evolve(b, s, t)).into_iter().collect()
    }

    pub fn evolve_transpose_many(&self, fields: &[FourierField], s: f64, t: f64) -> Result<Vec<FourierField>> {
        par::map(fields, |w| self.evolve_transpose(w, s, t)).into_iter().collect()
    }

    /// Number of RK4 steps the plan for `[s, t]` will take.
    pub fn step_count(&self, s: f64, t: f64) -> usize {
        build_plan(self.flow, s, t, &self.params)
            .iter()
            .filter(|o| matches!(o, Op::Advect { .. }))
            .count()
    }
}

/// One Strang step of size `params.dt` from `t`.
pub fn step(b: &FourierField, flow: &TimeFlow, kappa: f64, t: f64, params: &SolverParams) -> Result<FourierField> {
    let solver = Solver::new(flow, kappa, *params)?;
    solver.check(b, t, t + params.dt)?;
    let seg = flow.segments().iter().position(|g| g.start <= t && t < g.end);
    let ops = match seg {
        Some(i) if !flow.segments()[i].is_idle() => vec![Op::Advect {
            seg: i,
            t0: t,
            t1: t + params.dt,
        }],
        _ => Vec::new(),
    };
    let mut ex = Exec::new(flow, kappa, *params);
    ex.x.load(ex.lay, b);
    ex.run_forward(&ops, t, t + params.dt, None)?;
    Ok(ex.take())
}

/// Convenience wrapper around [`Solver::solve`].
pub fn solve(
    b0: &FourierField,
    flow: &TimeFlow,
    kappa: f64,
    s: f64,
    t: f64,
    params: &SolverParams,
) -> Result<(FourierField, SolverTrace)> {
    Solver::new(flow, kappa, *params)?.solve(b0, s, t)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::flow::{u_flow, w_flow};
    use crate::spectral::{c3_dot, c3_real};

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn random_field(n: usize, seed: u64, radius: i32) -> FourierField {
        // small LCG keeps this test free of extra dependencies
        let mut state = seed.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        let mut next = || {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            ((state >> 11) as f64 / (1u64 << 53) as f64) - 0.5
        };
        let mut f = FourierField::zeros(n);
        for x in -radius..=radius {
            for y in -radius..=radius {
                for z in -radius..=radius {
                    let v = [0, 1, 2].map(|_| c(next(), next()));
                    f.set(WaveVector::new(x, y, z), v).unwrap();
                }
            }
        }
        f
    }

    #[test]
    fn zero_length_solve_is_identity() {
        let f = w_flow(1.0);
        let b = FourierField::default_seed(4);
        let (out, tr) = solve(&b, &f, 0.1, 0.3, 0.3, &SolverParams::new(4, 1e-2)).unwrap();
        assert_eq!(out, b);
        assert_eq!(tr.len(), 1);
    }

    #[test]
    fn heat_only_is_exact() {
        let flow = TimeFlow::zero(0.0, 3.0);
        let b = random_field(4, 7, 3);
        let kappa = 1e-2;
        let (out, _) = solve(&b, &flow, kappa, 0.0, 3.0, &SolverParams::new(4, 1e-3)).unwrap();
        for (k, v) in out.iter() {
            let g = (-4.0 * PI * PI * k.norm_sq() as f64 * kappa * 3.0).exp();
            let e = b.coefficient(k);
            for a in 0..3 {
                let want = e[a] * g;
                assert!((v[a] - want).norm() <= 1e-13 * want.norm().max(1e-300), "{k}");
            }
        }
    }

    #[test]
    fn kappa_zero_without_flow_is_identity() {
        let flow = TimeFlow::zero(0.0, 1.0);
        let b = random_field(3, 1, 3);
        let out = Solver::new(&flow, 0.0, SolverParams::new(3, 0.1)).unwrap().evolve(&b, 0.0, 1.0).unwrap();
        assert_eq!(out, b);
    }

    #[test]
    fn transpose_identity_holds() {
        let n = 4;
        let flow = w_flow(1.0).translate([0.1, 0.37, -0.2]);
        let solver = Solver::new(&flow, 1e-2, SolverParams::new(n, 2e-2)).unwrap();
        let b = random_field(n, 3, 2);
        let w = random_field(n, 4, 4);
        let tb = solver.evolve(&b, 0.2, 1.7).unwrap();
        let tw = solver.evolve_transpose(&w, 0.2, 1.7).unwrap();
        let lhs: Complex64 = w.coeffs().iter().zip(tb.coeffs()).map(|(a, b)| c3_dot(a, b)).sum();
        let rhs: Complex64 = tw.coeffs().iter().zip(b.coeffs()).map(|(a, b)| c3_dot(a, b)).sum();
        assert!((lhs - rhs).norm() < 1e-11 * lhs.norm().max(1.0), "{lhs} vs {rhs}");
    }

    #[test]
    fn transpose_identity_with_dealias_and_projection() {
        let n = 6;
        let flow = u_flow(1.0);
        let mut p = SolverParams::new(n, 2e-2);
        p.dealias = true;
        p.project_solenoidal = true;
        let solver = Solver::new(&flow, 0.0, p).unwrap();
        let b = random_field(n, 5, 3);
        let w = random_field(n, 6, 6);
        let tb = solver.evolve(&b, 0.0, 1.0).unwrap();
        let tw = solver.evolve_transpose(&w, 0.0, 1.0).unwrap();
        let lhs: Complex64 = w.coeffs().iter().zip(tb.coeffs()).map(|(a, b)| c3_dot(a, b)).sum();
        let rhs: Complex64 = tw.coeffs().iter().zip(b.coeffs()).map(|(a, b)| c3_dot(a, b)).sum();
        assert!((lhs - rhs).norm() < 1e-11 * lhs.norm().max(1.0));
    }

    #[test]
    fn mean_stays_zero_and_divergence_is_preserved() {
        let n = 8;
        let flow = w_flow(1.0);
        let b = FourierField::default_seed(n);
        let (out, _) = solve(&b, &flow, 1e-3, 0.0, 2.0, &SolverParams::new(n, 1e-3)).unwrap();
        assert_eq!(out.mean(), ZERO3);
        assert!(out.relative_divergence() < 1e-8);
        assert!(out.reality_defect() < 1e-12 * out.l2_norm());
    }

    #[test]
    fn single_step_matches_solve_over_one_step() {
        let n = 4;
        let flow = u_flow(1.0);
        let p = SolverParams::new(n, 1e-3);
        let b = FourierField::default_seed(n);
        let a = step(&b, &flow, 0.0, 0.2, &p).unwrap();
        let (c2, _) = solve(&b, &flow, 0.0, 0.2, 0.2 + 1e-3, &p).unwrap();
        assert!(a.distance(&c2).unwrap() < 1e-15);
    }

    #[test]
    fn dt_is_capped_by_flow_speed() {
        let flow = w_flow(1.0);
        let p = SolverParams::new(16, 1.0);
        let cap = p.dt_max(&flow.segments()[0]);
        assert!(cap < 1e-3 && cap > 5e-4, "{cap}");
        let solver = Solver::new(&flow, 0.0, p).unwrap();
        assert_eq!(solver.step_count(0.0, 2.0), (2.0 / cap).ceil() as usize);
    }

    #[test]
    fn trace_integrals_match_bump_mass() {
        // ∫₀¹ ‖∇U_1‖ bound = 2π(∫φ + ¼∫φ) = 2π·5/4
        let flow = u_flow(1.0);
        let (_, tr) = solve(&FourierField::default_seed(2), &flow, 0.0, 0.0, 1.0, &SolverParams::new(2, 1e-3)).unwrap();
        let gi = *tr.grad_integral.last().unwrap();
        assert!((gi - 2.0 * PI * 1.25).abs() < 1e-9, "{gi}");
        assert!(tr.times.windows(2).all(|w| w[0] < w[1]));
        let csv = tr.to_csv();
        assert!(csv.starts_with("t,l2sq,h1sq,re_x(1,0,0)"));
        assert_eq!(csv.lines().count(), tr.len() + 1);
    }

    #[test]
    fn first_order_transfer_matches_perturbation() {
        // One shear mode at small amplitude: the e_z-coefficient generated from
        // data at j is, to first order, ∫φ · 2πi[(c·q)μ − (μ·j)c] with ∫φ = 1.
        let n = 4;
        let j = WaveVector::new(2, 0, 0);
        let w = c3_real([0.0, 1.0, 1.0]);
        let eps = 1e-6;
        let t = crate::flow::transitive_flow(j, &w, eps, [0.0; 3]).unwrap();
        let b = FourierField::single_mode(n, j, w).unwrap();
        let out = Solver::new(&t.flow, 0.0, SolverParams::new(n, 1e-3)).unwrap().evolve(&b, 0.0, 1.0).unwrap();
        let q = WaveVector::EZ - j;
        let mu = t.mu.map(|z| z * eps);
        let cq = q.dot_c3(&w);
        let mp = j.dot_c3(&mu);
        let expect: C3 = [0, 1, 2].map(|a| c(0.0, 2.0 * PI) * (cq * mu[a] - mp * w[a]));
        let got = out.coefficient(WaveVector::EZ);
        for a in 0..3 {
            assert!((got[a] - expect[a]).norm() < 1e-9, "{a}: {} vs {}", got[a], expect[a]);
        }
    }
}
