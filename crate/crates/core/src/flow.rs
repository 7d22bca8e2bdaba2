//! Finite-mode, time-dependent, divergence-free velocity fields.
//!
//! A [`TimeFlow`] is a sequence of [`FlowSegment`]s with disjoint interiors.
//! Each segment carries a list of Fourier modes `μ e^{2πi k·x}` multiplied by
//! a scalar time envelope; real-valuedness comes from listing every mode
//! together with its conjugate partner `(−k, conj μ)`.

use std::f64::consts::PI;
use std::sync::OnceLock;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{DynamoError, Result};
use crate::rotation::SignedPermutation;
use crate::spectral::{c3_conj, c3_dot, c3_norm, c3_real, c3_scale, WaveVector, C3, ZERO3};

/// Length of the bump support `(0, 1/2)`.
pub const BUMP_WIDTH: f64 = 0.5;

/// The normalised mollifier `φ(t) = c·exp(−1/(t(1/2 − t)))` on `(0, 1/2)`.
#[derive(Clone, Copy, Debug)]
pub struct BumpProfile {
    norm: f64,
}

impl BumpProfile {
    /// Shared instance; the normalisation is computed once by quadrature.
    pub fn get() -> &'static BumpProfile {
        static BUMP: OnceLock<BumpProfile> = OnceLock::new();
        BUMP.get_or_init(|| BumpProfile {
            norm: 1.0 / raw_integral(8192),
        })
    }

    /// The constant `c` with `∫₀^{1/2} φ = 1`.
    pub fn normalization(&self) -> f64 {
        self.norm
    }

    pub fn eval(&self, t: f64) -> f64 {
        if t <= 0.0 || t >= BUMP_WIDTH {
            0.0
        } else {
            self.norm * (-1.0 / (t * (BUMP_WIDTH - t))).exp()
        }
    }

    /// Peak value `φ(1/4) = c·e^{−16}`.
    pub fn sup(&self) -> f64 {
        self.eval(0.25)
    }

    /// Trapezoid rule for `∫₀^{1/2} φ` with `n` panels.
    pub fn integral(&self, n: usize) -> f64 {
        self.norm * raw_integral(n)
    }
}

// The integrand and all its derivatives vanish at both ends, so the
// trapezoid rule converges faster than any power of the panel width.
fn raw_integral(n: usize) -> f64 {
    let h = BUMP_WIDTH / n as f64;
    (1..n)
        .map(|i| {
            let t = i as f64 * h;
            (-1.0 / (t * (BUMP_WIDTH - t))).exp()
        })
        .sum::<f64>()
        * h
}

/// Scalar time factor multiplying a mode.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Envelope {
    /// `φ(t − start)`.
    Bump { start: f64 },
    Constant { value: f64 },
}

impl Envelope {
    pub fn value(&self, t: f64) -> f64 {
        match *self {
            Envelope::Bump { start } => BumpProfile::get().eval(t - start),
            Envelope::Constant { value } => value,
        }
    }

    pub fn sup(&self) -> f64 {
        match *self {
            Envelope::Bump { .. } => BumpProfile::get().sup(),
            Envelope::Constant { value } => value.abs(),
        }
    }

    fn shifted(&self, dt: f64) -> Envelope {
        match *self {
            Envelope::Bump { start } => Envelope::Bump { start: start + dt },
            c => c,
        }
    }

    fn peak_time(&self) -> Option<f64> {
        match *self {
            Envelope::Bump { start } => Some(start + BUMP_WIDTH / 2.0),
            Envelope::Constant { .. } => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct FlowMode {
    pub k: WaveVector,
    pub amplitude: C3,
    pub envelope: Envelope,
}

impl FlowMode {
    /// The conjugate partner `(−k, conj μ)`.
    pub fn partner(&self) -> FlowMode {
        FlowMode {
            k: -self.k,
            amplitude: c3_conj(&self.amplitude),
            envelope: self.envelope,
        }
    }
}

/// Mode-sum bounds on `‖u‖_∞`, `‖∇u‖_∞`, `‖∇²u‖_∞` at one instant.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct SupBounds {
    pub u: f64,
    pub grad: f64,
    pub hess: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct FlowSegment {
    pub start: f64,
    pub end: f64,
    pub label: String,
    pub modes: Vec<FlowMode>,
}

impl FlowSegment {
    pub fn idle(start: f64, end: f64) -> Self {
        Self {
            start,
            end,
            label: "idle".into(),
            modes: Vec::new(),
        }
    }

    pub fn is_idle(&self) -> bool {
        self.modes.is_empty()
    }

    /// Active `(k, μ·envelope(t))` pairs at time `t`.
    pub fn modes_at(&self, t: f64) -> Vec<(WaveVector, C3)> {
        self.modes
            .iter()
            .filter_map(|m| {
                let e = m.envelope.value(t);
                (e != 0.0).then(|| (m.k, c3_scale(&m.amplitude, Complex64::new(e, 0.0))))
            })
            .collect()
    }

    pub fn bounds_at(&self, t: f64) -> SupBounds {
        let mut b = SupBounds::default();
        for m in &self.modes {
            let a = c3_norm(&m.amplitude) * m.envelope.value(t).abs();
            let kn = m.k.norm();
            b.u += a;
            b.grad += 2.0 * PI * kn * a;
            b.hess += 4.0 * PI * PI * kn * kn * a;
        }
        b
    }

    /// Upper estimate of `sup_t ‖u(t)‖_∞` from the mode sum, sampled on a
    /// fine grid that includes every bump peak.
    pub fn sup_velocity(&self) -> f64 {
        if self.modes.is_empty() {
            return 0.0;
        }
        let n = 2048;
        let len = self.end - self.start;
        let grid = (0..=n).map(|i| self.start + len * i as f64 / n as f64);
        let peaks = self.modes.iter().filter_map(|m| m.envelope.peak_time());
        grid.chain(peaks)
            .map(|t| self.bounds_at(t).u)
            .fold(0.0, f64::max)
    }

    fn shifted(&self, dt: f64) -> FlowSegment {
        FlowSegment {
            start: self.start + dt,
            end: self.end + dt,
            label: self.label.clone(),
            modes: self
                .modes
                .iter()
                .map(|m| FlowMode {
                    envelope: m.envelope.shifted(dt),
                    ..m.clone()
                })
                .collect(),
        }
    }
}

/// Piecewise-in-time finite-mode velocity field.
#[derive(Clone, Debug, PartialEq)]
pub struct TimeFlow {
    start: f64,
    end: f64,
    segments: Vec<FlowSegment>,
}

impl TimeFlow {
    /// Builds a flow on `[start, end]`; gaps between segments become idle
    /// segments, overlapping segments are rejected.
    pub fn new(start: f64, end: f64, mut segments: Vec<FlowSegment>) -> Result<Self> {
        if end < start {
            return Err(DynamoError::InvalidInput(format!(
                "flow lifetime [{start}, {end}] is reversed"
            )));
        }
        segments.sort_by(|a, b| a.start.total_cmp(&b.start));
        let mut filled = Vec::with_capacity(segments.len());
        let mut cursor = start;
        for seg in segments {
            if seg.end < seg.start || seg.start < start || seg.end > end {
                return Err(DynamoError::InvalidInput(format!(
                    "segment [{}, {}] outside lifetime [{start}, {end}]",
                    seg.start, seg.end
                )));
            }
            if seg.start < cursor {
                let prev: &FlowSegment = filled.last().expect("cursor moved");
                return Err(DynamoError::OverlappingSegments {
                    a0: prev.start,
                    a1: prev.end,
                    b0: seg.start,
                    b1: seg.end,
                });
            }
            if seg.start > cursor {
                filled.push(FlowSegment::idle(cursor, seg.start));
            }
            cursor = seg.end;
            filled.push(seg);
        }
        if cursor < end {
            filled.push(FlowSegment::idle(cursor, end));
        }
        Ok(Self {
            start,
            end,
            segments: filled,
        })
    }

    pub fn zero(start: f64, end: f64) -> Self {
        Self::new(start, end, Vec::new()).expect("valid interval")
    }

    pub fn single(seg: FlowSegment) -> Self {
        let (a, b) = (seg.start, seg.end);
        Self::new(a, b, vec![seg]).expect("single segment")
    }

    pub fn lifetime(&self) -> (f64, f64) {
        (self.start, self.end)
    }

    pub fn duration(&self) -> f64 {
        self.end - self.start
    }

    pub fn segments(&self) -> &[FlowSegment] {
        &self.segments
    }

    pub fn segment_at(&self, t: f64) -> Option<&FlowSegment> {
        self.segments
            .iter()
            .find(|s| s.start <= t && t < s.end)
            .or_else(|| self.segments.iter().rev().find(|s| t == s.end))
    }

    pub fn modes(&self) -> impl Iterator<Item = &FlowMode> {
        self.segments.iter().flat_map(|s| s.modes.iter())
    }

    /// Complex sum of the active modes at `(t, x)`; imaginary parts vanish
    /// for a properly paired flow.
    pub fn velocity_complex(&self, t: f64, x: [f64; 3]) -> C3 {
        let Some(seg) = self.segment_at(t) else {
            return ZERO3;
        };
        let mut u = ZERO3;
        for (k, a) in seg.modes_at(t) {
            let ph = Complex64::from_polar(1.0, 2.0 * PI * k.dot_f64(x));
            for c in 0..3 {
                u[c] += a[c] * ph;
            }
        }
        u
    }

    pub fn velocity(&self, t: f64, x: [f64; 3]) -> [f64; 3] {
        self.velocity_complex(t, x).map(|z| z.re)
    }

    /// `max |k·μ|` over all modes (the spectral divergence).
    pub fn max_divergence(&self) -> f64 {
        self.modes()
            .map(|m| m.k.dot_c3(&m.amplitude).norm())
            .fold(0.0, f64::max)
    }

    /// Largest mismatch between a mode and the conjugate of its partner.
    pub fn reality_defect(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for seg in &self.segments {
            for m in &seg.modes {
                let best = seg
                    .modes
                    .iter()
                    .filter(|p| p.k == -m.k && p.envelope == m.envelope)
                    .map(|p| c3_norm(&crate::spectral::c3_sub(&p.amplitude, &c3_conj(&m.amplitude))))
                    .fold(f64::INFINITY, f64::min);
                worst = worst.max(if best.is_finite() { best } else { c3_norm(&m.amplitude) });
            }
        }
        worst
    }

    pub fn bounds_at(&self, t: f64) -> SupBounds {
        self.segment_at(t).map_or(SupBounds::default(), |s| s.bounds_at(t))
    }

    /// Largest `|k|_∞` among the modes.
    pub fn max_wavenumber(&self) -> i32 {
        self.modes().map(|m| m.k.linf()).max().unwrap_or(0)
    }

    /// `τ_y u(t, x) = u(t, x − y)`: each amplitude picks up `e^{−2πi k·y}`.
    pub fn translate(&self, y: [f64; 3]) -> TimeFlow {
        self.map_modes(|m| FlowMode {
            amplitude: c3_scale(
                &m.amplitude,
                Complex64::from_polar(1.0, -2.0 * PI * m.k.dot_f64(y)),
            ),
            ..m.clone()
        })
    }

    /// `u'(x) = P u(Pᵀx)`.
    pub fn rotate(&self, p: &SignedPermutation) -> TimeFlow {
        self.map_modes(|m| FlowMode {
            k: p.apply_k(m.k),
            amplitude: p.apply_c3(&m.amplitude),
            envelope: m.envelope,
        })
    }

    pub fn shift(&self, dt: f64) -> TimeFlow {
        TimeFlow {
            start: self.start + dt,
            end: self.end + dt,
            segments: self.segments.iter().map(|s| s.shifted(dt)).collect(),
        }
    }

    pub fn with_label(mut self, label: &str) -> TimeFlow {
        for s in self.segments.iter_mut().filter(|s| !s.is_idle()) {
            s.label = label.to_string();
        }
        self
    }

    fn map_modes(&self, f: impl Fn(&FlowMode) -> FlowMode) -> TimeFlow {
        TimeFlow {
            start: self.start,
            end: self.end,
            segments: self
                .segments
                .iter()
                .map(|s| FlowSegment {
                    modes: s.modes.iter().map(&f).collect(),
                    ..s.clone()
                })
                .collect(),
        }
    }

    /// Places `other` at absolute time `at` (shifting it there); the gap
    /// `[self.end, at]` becomes idle. `at < self.end` is an overlap.
    pub fn append_at(&mut self, other: &TimeFlow, at: f64) -> Result<()> {
        if at < self.end {
            return Err(DynamoError::OverlappingSegments {
                a0: self.start,
                a1: self.end,
                b0: at,
                b1: at + other.duration(),
            });
        }
        if at > self.end {
            self.segments.push(FlowSegment::idle(self.end, at));
        }
        let moved = other.shift(at - other.start);
        self.segments.extend(moved.segments);
        self.end = moved.end;
        Ok(())
    }

    /// Time-shifted concatenation: each part starts where the previous ended.
    pub fn concat(parts: &[TimeFlow]) -> Result<TimeFlow> {
        let Some(first) = parts.first() else {
            return Err(DynamoError::InvalidInput("concat of no flows".into()));
        };
        let mut out = first.clone();
        for p in &parts[1..] {
            let at = out.end;
            out.append_at(p, at)?;
        }
        Ok(out)
    }

    pub fn to_json(&self) -> FlowJson {
        FlowJson {
            start: self.start,
            end: self.end,
            segments: self
                .segments
                .iter()
                .map(|s| SegmentJson {
                    start: s.start,
                    end: s.end,
                    label: s.label.clone(),
                    modes: s
                        .modes
                        .iter()
                        .map(|m| ModeJson {
                            k: m.k.to_array(),
                            re: m.amplitude.map(|z| z.re),
                            im: m.amplitude.map(|z| z.im),
                            envelope: m.envelope,
                        })
                        .collect(),
                })
                .collect(),
        }
    }

    pub fn from_json(j: &FlowJson) -> Result<TimeFlow> {
        let segments = j
            .segments
            .iter()
            .map(|s| FlowSegment {
                start: s.start,
                end: s.end,
                label: s.label.clone(),
                modes: s
                    .modes
                    .iter()
                    .map(|m| FlowMode {
                        k: WaveVector::from_array(m.k),
                        amplitude: [0, 1, 2].map(|a| Complex64::new(m.re[a], m.im[a])),
                        envelope: m.envelope,
                    })
                    .collect(),
            })
            .collect();
        TimeFlow::new(j.start, j.end, segments)
    }
}

/// JSON form of a [`TimeFlow`].
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct FlowJson {
    pub start: f64,
    pub end: f64,
    pub segments: Vec<SegmentJson>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SegmentJson {
    pub start: f64,
    pub end: f64,
    pub label: String,
    pub modes: Vec<ModeJson>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ModeJson {
    pub k: [i32; 3],
    pub re: [f64; 3],
    pub im: [f64; 3],
    pub envelope: Envelope,
}

// ---------------------------------------------------------------------------
// Flow library
// ---------------------------------------------------------------------------

/// `scale · cos(2π k·x) dir` as a conjugate pair.
fn cos_pair(k: WaveVector, dir: [f64; 3], scale: f64, env: Envelope) -> [FlowMode; 2] {
    let a = c3_scale(&c3_real(dir), Complex64::new(scale / 2.0, 0.0));
    let m = FlowMode {
        k,
        amplitude: a,
        envelope: env,
    };
    [m.clone(), m.partner()]
}

/// `scale · sin(2π k·x) dir` as a conjugate pair.
fn sin_pair(k: WaveVector, dir: [f64; 3], scale: f64, env: Envelope) -> [FlowMode; 2] {
    let a = c3_scale(&c3_real(dir), Complex64::new(0.0, -scale / 2.0));
    let m = FlowMode {
        k,
        amplitude: a,
        envelope: env,
    };
    [m.clone(), m.partner()]
}

fn shear_modes(lambda: f64, along: WaveVector, shear_dir: [f64; 3], t0: f64) -> Vec<FlowMode> {
    let mut modes = Vec::with_capacity(4);
    modes.extend(cos_pair(along, shear_dir, lambda, Envelope::Bump { start: t0 }));
    modes.extend(sin_pair(
        along,
        [0.0, 0.0, 1.0],
        0.25,
        Envelope::Bump { start: t0 + 0.5 },
    ));
    modes
}

/// `U_λ = λφ(t) cos(2πx) e_y + ¼ φ(t − ½) sin(2πx) e_z` on `[0, 1]`.
pub fn u_flow(lambda: f64) -> TimeFlow {
    TimeFlow::single(FlowSegment {
        start: 0.0,
        end: 1.0,
        label: format!("U({lambda})"),
        modes: shear_modes(lambda, WaveVector::EX, [0.0, 1.0, 0.0], 0.0),
    })
}

/// `V_λ = λφ(t) cos(2πy) e_x + ¼ φ(t − ½) sin(2πy) e_z` on `[0, 1]`.
pub fn v_flow(lambda: f64) -> TimeFlow {
    TimeFlow::single(FlowSegment {
        start: 0.0,
        end: 1.0,
        label: format!("V({lambda})"),
        modes: shear_modes(lambda, WaveVector::EY, [1.0, 0.0, 0.0], 0.0),
    })
}

/// `W_λ(t) = U_λ(t) + V_{−λ}(t − 1)` on `[0, 2]`.
pub fn w_flow(lambda: f64) -> TimeFlow {
    let mut modes = shear_modes(lambda, WaveVector::EX, [0.0, 1.0, 0.0], 0.0);
    modes.extend(shear_modes(-lambda, WaveVector::EY, [1.0, 0.0, 0.0], 1.0));
    TimeFlow::single(FlowSegment {
        start: 0.0,
        end: 2.0,
        label: format!("W({lambda})"),
        modes,
    })
}

/// Time-rescaled `U_λ` with constant envelopes: `2λ cos(2πx) e_y` on
/// `[0, ½)` then `½ sin(2πx) e_z` on `[½, 1]`.
pub fn piecewise_constant_u(lambda: f64) -> TimeFlow {
    let one = Envelope::Constant { value: 1.0 };
    let first = FlowSegment {
        start: 0.0,
        end: 0.5,
        label: format!("U~({lambda}) shear"),
        modes: cos_pair(WaveVector::EX, [0.0, 1.0, 0.0], 2.0 * lambda, one).to_vec(),
    };
    let second = FlowSegment {
        start: 0.5,
        end: 1.0,
        label: format!("U~({lambda}) twist"),
        modes: sin_pair(WaveVector::EX, [0.0, 0.0, 1.0], 0.5, one).to_vec(),
    };
    TimeFlow::new(0.0, 1.0, vec![first, second]).expect("adjacent segments")
}

/// Output of [`transitive_flow`].
#[derive(Clone, Debug)]
pub struct TransitiveFlow {
    pub flow: TimeFlow,
    pub mu: C3,
    pub v: C3,
    /// `(w·e_z)(v·μ)`: the first-order coupling up to a nonzero constant.
    pub predictor: Complex64,
}

/// `u^ε = ε φ(t) (μ e^{2πi (e_z − j)·x} + c.c.)` on `[0, 1]`, translated by `y`.
///
/// `v` is a unit vector with `w·v = e_z·v = 0` and
/// `μ = v − (v·d / |d|²) d`, `d = e_z − j`.
pub fn transitive_flow(j: WaveVector, w: &C3, eps: f64, y: [f64; 3]) -> Result<TransitiveFlow> {
    if j.is_zero() || j == WaveVector::EZ {
        return Err(DynamoError::Precondition(format!(
            "transitive source mode must differ from 0 and e_z, got {j}"
        )));
    }
    if c3_norm(w) == 0.0 {
        return Err(DynamoError::Precondition("transitive source coefficient is zero".into()));
    }
    let planar = (w[0].norm_sqr() + w[1].norm_sqr()).sqrt();
    let v: C3 = if planar > 1e-14 * c3_norm(w) {
        [w[1] / planar, -w[0] / planar, Complex64::new(0.0, 0.0)]
    } else {
        c3_real([1.0, 0.0, 0.0])
    };
    let d = WaveVector::EZ - j;
    let dd = d.norm_sq() as f64;
    let vd = d.dot_c3(&v) / dd;
    let df = d.as_f64();
    let mu: C3 = [0, 1, 2].map(|a| v[a] - vd * df[a]);
    if c3_norm(&mu) < 1e-14 {
        return Err(DynamoError::Contradiction(format!(
            "mu vanished for j={j}; requires (e_z - j)·w != 0 or (e_z - j)·e_z != 0"
        )));
    }
    let m = FlowMode {
        k: d,
        amplitude: c3_scale(&mu, Complex64::new(eps, 0.0)),
        envelope: Envelope::Bump { start: 0.0 },
    };
    let flow = TimeFlow::single(FlowSegment {
        start: 0.0,
        end: 1.0,
        label: format!("transitive(j={j}, eps={eps})"),
        modes: vec![m.clone(), m.partner()],
    })
    .translate(y);
    let predictor = w[2] * c3_dot(&v, &mu);
    Ok(TransitiveFlow {
        flow,
        mu,
        v,
        predictor,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn bump_support_and_normalisation() {
        let b = BumpProfile::get();
        assert_eq!(b.eval(0.0), 0.0);
        assert_eq!(b.eval(0.5), 0.0);
        assert_eq!(b.eval(-1.0), 0.0);
        assert!(b.eval(0.1) > 0.0);
        assert!((b.integral(20_000) - 1.0).abs() < 1e-10);
    }

    #[test]
    fn bump_normalisation_matches_quadrature_fixture() {
        // 1 / ∫₀^{1/2} exp(−1/(t(1/2−t))) dt from 30-digit adaptive quadrature.
        const C_FIXTURE: f64 = 83_748_827.949_664_598;
        let c = BumpProfile::get().normalization();
        assert!((c / C_FIXTURE - 1.0).abs() < 1e-12, "{c}");
        assert!((BumpProfile::get().sup() - 9.424_688_985_848_677).abs() < 1e-9);
    }

    #[test]
    fn u_flow_values() {
        let phi = BumpProfile::get();
        let u0 = u_flow(0.0);
        for &t in &[0.1, 0.2, 0.3, 0.45] {
            assert_eq!(u0.velocity(t, [0.3, 0.1, 0.7])[1], 0.0);
        }
        let u1 = u_flow(1.0);
        let v = u1.velocity(0.25, [0.0; 3]);
        assert!((v[1] - phi.eval(0.25)).abs() < 1e-12);
        assert!(v[0].abs() < 1e-15 && v[2].abs() < 1e-15);
    }

    #[test]
    fn piecewise_constant_values() {
        let lam = 1.5;
        let f = piecewise_constant_u(lam);
        let a = f.velocity(0.25, [0.0; 3]);
        assert!((a[1] - 2.0 * lam).abs() < 1e-14 && a[0] == 0.0 && a[2].abs() < 1e-15);
        let b = f.velocity(0.75, [0.25, 0.0, 0.0]);
        assert!((b[2] - 0.5).abs() < 1e-14 && b[1].abs() < 1e-15);
    }

    #[test]
    fn w_flow_is_divergence_free_and_real() {
        let w = w_flow(1.0);
        assert_eq!(w.max_divergence(), 0.0);
        assert_eq!(w.reality_defect(), 0.0);
        assert_eq!(w.lifetime(), (0.0, 2.0));
        // second half is V_{-1}: at t = 1.25 the shear is −φ cos(2πy) e_x
        let v = w.velocity(1.25, [0.0; 3]);
        assert!((v[0] + BumpProfile::get().eval(0.25)).abs() < 1e-12);
    }

    #[test]
    fn translate_group_property() {
        let w = w_flow(1.0);
        assert_eq!(w.translate([0.0; 3]), w);
        let y = [0.13, -0.42, 0.77];
        let back = w.translate(y).translate([-y[0], -y[1], -y[2]]);
        for (a, b) in back.modes().zip(w.modes()) {
            for i in 0..3 {
                assert!((a.amplitude[i] - b.amplitude[i]).norm() < 1e-15);
            }
        }
        let single = u_flow(1.0).translate([0.5, 0.0, 0.0]);
        for (a, b) in single.modes().zip(u_flow(1.0).modes()) {
            for i in 0..3 {
                assert!((a.amplitude[i] + b.amplitude[i]).norm() < 1e-15);
            }
        }
    }

    #[test]
    fn concat_places_flows_back_to_back() {
        let u = u_flow(1.0);
        let one = TimeFlow::concat(std::slice::from_ref(&u)).unwrap();
        assert_eq!(one, u);
        let two = TimeFlow::concat(&[u.clone(), u.clone()]).unwrap();
        assert_eq!(two.lifetime(), (0.0, 2.0));
        let v = two.velocity(1.25, [0.0; 3]);
        assert!((v[1] - BumpProfile::get().eval(0.25)).abs() < 1e-12);
        assert_eq!(two.velocity(1.0, [0.1, 0.2, 0.3]), [0.0; 3]);
    }

    #[test]
    fn overlapping_segments_rejected() {
        let a = FlowSegment::idle(0.0, 1.0);
        let b = FlowSegment::idle(0.5, 1.5);
        assert!(matches!(
            TimeFlow::new(0.0, 2.0, vec![a, b]),
            Err(DynamoError::OverlappingSegments { .. })
        ));
        let mut f = u_flow(1.0);
        assert!(f.append_at(&u_flow(1.0), 0.5).is_err());
        f.append_at(&u_flow(1.0), 3.0).unwrap();
        assert_eq!(f.lifetime(), (0.0, 4.0));
        assert!(f.segment_at(2.0).unwrap().is_idle());
    }

    #[test]
    fn transitive_example_from_planar_w() {
        let j = WaveVector::new(2, 0, 0);
        let w = c3_real([0.0, 1.0, 0.0]);
        let t = transitive_flow(j, &w, 0.1, [0.0; 3]).unwrap();
        assert!((t.v[0] - c(1.0, 0.0)).norm() < 1e-15);
        let expect = [0.2, 0.0, 0.4];
        for a in 0..3 {
            assert!((t.mu[a] - c(expect[a], 0.0)).norm() < 1e-15);
        }
        let d = WaveVector::EZ - j;
        assert!(d.dot_c3(&t.mu).norm() < 1e-15);
        assert!(t.flow.max_divergence() < 1e-15);
        assert_eq!(t.flow.reality_defect(), 0.0);
    }

    #[test]
    fn transitive_zero_eps_is_zero_flow() {
        let t = transitive_flow(WaveVector::new(2, 0, 0), &c3_real([0.0, 0.0, 1.0]), 0.0, [0.0; 3])
            .unwrap();
        for t_ in [0.1, 0.25, 0.4] {
            assert_eq!(t.flow.velocity(t_, [0.3, 0.2, 0.1]), [0.0; 3]);
        }
    }

    #[test]
    fn transitive_rejects_bad_sources() {
        let w = c3_real([0.0, 0.0, 1.0]);
        assert!(transitive_flow(WaveVector::ZERO, &w, 0.1, [0.0; 3]).is_err());
        assert!(transitive_flow(WaveVector::EZ, &w, 0.1, [0.0; 3]).is_err());
        assert!(transitive_flow(WaveVector::new(2, 0, 0), &ZERO3, 0.1, [0.0; 3]).is_err());
    }

    #[test]
    fn rotation_maps_modes_and_amplitudes() {
        let p = SignedPermutation::to_ez(WaveVector::EX).unwrap();
        let r = u_flow(1.0).rotate(&p);
        // U's wavevectors ±e_x land on ±e_z
        assert!(r.modes().all(|m| m.k == WaveVector::EZ || m.k == -WaveVector::EZ));
        assert_eq!(r.max_divergence(), 0.0);
    }

    #[test]
    fn json_round_trip_is_exact() {
        let f = w_flow(0.7).translate([0.1, 0.2, 0.3]);
        let s = serde_json::to_string(&f.to_json()).unwrap();
        let back = TimeFlow::from_json(&serde_json::from_str(&s).unwrap()).unwrap();
        assert_eq!(back, f);
    }

    #[test]
    fn sup_bounds_from_modes() {
        let w = w_flow(1.0);
        let seg = &w.segments()[0];
        let phi_max = BumpProfile::get().sup();
        assert!((seg.sup_velocity() - phi_max).abs() < 1e-9);
        let b = seg.bounds_at(0.25);
        assert!((b.grad - 2.0 * PI * phi_max).abs() < 1e-9);
        assert!((b.hess - 4.0 * PI * PI * phi_max).abs() < 1e-8);
    }
}
