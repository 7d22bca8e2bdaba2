//! Constructive growth schedule: idle, transitive and growth segments that
//! drive one shared flow while every per-κ field is advanced through it.
//!
//! Fields are carried as [`ScaledField`]s (unit-norm coefficients plus a log
//! scale) and renormalised at every segment boundary, so arbitrarily long
//! schedules never overflow. Segments are always solved one at a time on a
//! flow containing just that segment; [`replay`] does exactly the same, which
//! makes re-simulation of an exported flow reproducible.

use std::f64::consts::E;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::diagnostics::{unique_continuation_certificate, MarginReport};
use crate::error::{DynamoError, Result};
use crate::flow::{transitive_flow, w_flow, TimeFlow};
use crate::operator::{control_select, costate, grid_point, translation_scan, ControlPair, PROJ_TOL};
use crate::par;
use crate::rotation::SignedPermutation;
use crate::solver::{Solver, SolverParams};
use crate::spectral::{c3_conj, c3_inner, c3_norm, FieldJson, FourierField, WaveVector};

/// Default growth threshold on `max_{|k|=1} (1/t) log|b̂(t,k)|²`.
pub const RATE_THRESHOLD: f64 = 0.25;

/// Tunables shared by all segment builders.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ControllerConfig {
    pub params: SolverParams,
    /// Control amplitude `R` of `W_{±R}`.
    pub r: f64,
    /// Translation grid size `M` (per axis).
    pub grid: usize,
    pub threshold: f64,
    pub proj_tol: f64,
    /// A coefficient counts as present above `coeff_tol · ‖b‖`.
    pub coeff_tol: f64,
    /// Fields with `‖b‖ ≤ field_tol` are treated as zero.
    pub field_tol: f64,
    /// First transitive amplitude; the scan halves it `eps_steps − 1` times.
    pub eps0: f64,
    pub eps_steps: usize,
}

impl ControllerConfig {
    pub fn new(params: SolverParams) -> Self {
        Self {
            params,
            r: 1.0,
            grid: 2 * params.n + 1,
            threshold: RATE_THRESHOLD,
            proj_tol: PROJ_TOL,
            coeff_tol: 1e-12,
            field_tol: 1e-300,
            eps0: 0.5,
            eps_steps: 24,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.params.validate()?;
        let positive = [self.r, self.proj_tol, self.coeff_tol, self.field_tol, self.eps0];
        if positive.iter().any(|v| !(*v > 0.0 && v.is_finite())) || self.grid == 0 || self.eps_steps == 0 {
            return Err(DynamoError::InvalidInput(format!("invalid controller config {self:?}")));
        }
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// Scaled fields
// ---------------------------------------------------------------------------

/// `b = e^{log_scale} · field` with `field` kept at unit `L²` norm.
#[derive(Clone, Debug, PartialEq)]
pub struct ScaledField {
    pub field: FourierField,
    pub log_scale: f64,
}

/// Serialised [`ScaledField`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScaledFieldJson {
    pub log_scale: f64,
    pub field: FieldJson,
}

impl ScaledField {
    pub fn new(field: FourierField) -> Self {
        let mut s = Self { field, log_scale: 0.0 };
        s.renormalize();
        s
    }

    /// Moves the `L²` norm into `log_scale` (zero fields are left alone).
    pub fn renormalize(&mut self) {
        let n = self.field.l2_norm();
        if n > 0.0 && n.is_finite() {
            self.field.scale_in_place(1.0 / n);
            self.log_scale += n.ln();
        }
    }

    pub fn is_zero(&self, tol: f64) -> bool {
        !(self.field.l2_norm() > tol)
    }

    /// `log ‖b‖²`.
    pub fn log_l2sq(&self) -> f64 {
        2.0 * self.log_scale + self.field.l2_norm_sq().ln()
    }

    /// `log |b̂(k)|²` (`−∞` for an empty mode).
    pub fn log_coeff_sq(&self, k: WaveVector) -> f64 {
        let c = self.field.coefficient(k);
        2.0 * self.log_scale + (c[0].norm_sqr() + c[1].norm_sqr() + c[2].norm_sqr()).ln()
    }

    /// `(1/t) log |b̂(t,k)|²` for the six unit modes.
    pub fn unit_rates(&self, t: f64) -> [f64; 6] {
        WaveVector::unit_modes().map(|k| self.log_coeff_sq(k) / t)
    }

    pub fn max_rate(&self, t: f64) -> f64 {
        self.unit_rates(t).into_iter().fold(f64::NEG_INFINITY, f64::max)
    }

    /// Unit mode with the largest coefficient (earliest in
    /// [`WaveVector::unit_modes`] on ties).
    pub fn dominant_unit_mode(&self) -> (WaveVector, f64) {
        let mut best = (WaveVector::unit_modes()[0], -1.0);
        for k in WaveVector::unit_modes() {
            let a = c3_norm(&self.field.coefficient(k));
            if a > best.1 {
                best = (k, a);
            }
        }
        best
    }

    /// `‖a − b‖ / ‖a‖` of the represented fields.
    pub fn relative_distance(&self, other: &ScaledField) -> Result<f64> {
        let rel = Complex64::new((other.log_scale - self.log_scale).exp(), 0.0);
        let d = self.field.axpy(-rel, &other.field)?;
        Ok(d.l2_norm() / self.field.l2_norm())
    }

    pub fn to_json(&self) -> ScaledFieldJson {
        ScaledFieldJson {
            log_scale: self.log_scale,
            field: self.field.to_json(),
        }
    }

    pub fn from_json(j: &ScaledFieldJson) -> Result<Self> {
        Ok(Self {
            field: FourierField::from_json(&j.field)?,
            log_scale: j.log_scale,
        })
    }
}

// ---------------------------------------------------------------------------
// Schedule state
// ---------------------------------------------------------------------------

/// Kind of an emitted segment.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SegmentKind {
    Idle,
    Transitive,
    Growth,
}

/// One emitted segment with the per-κ unique-continuation margins.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SegmentRecord {
    pub kind: SegmentKind,
    pub start: f64,
    pub end: f64,
    pub label: String,
    pub certificates: Vec<MarginReport>,
}

/// Per-κ observables at a segment boundary.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeriesRow {
    pub t: f64,
    pub kappa_index: usize,
    pub log_l2sq: f64,
    /// `(1/t) log|b̂(t,k)|²` in [`WaveVector::unit_modes`] order.
    pub rates: [f64; 6],
    pub max_rate: f64,
}

/// Global clock, per-κ fields and everything emitted so far.
#[derive(Clone, Debug)]
pub struct ScheduleState {
    pub t: f64,
    pub kappas: Vec<f64>,
    pub fields: Vec<ScaledField>,
    pub flow_log: TimeFlow,
    pub segments: Vec<SegmentRecord>,
    pub series: Vec<SeriesRow>,
}

impl ScheduleState {
    pub fn new(b0: &FourierField, kappas: &[f64]) -> Result<Self> {
        if kappas.is_empty() {
            return Err(DynamoError::InvalidInput("at least one kappa is required".into()));
        }
        if let Some(k) = kappas.iter().find(|k| !(**k >= 0.0 && k.is_finite())) {
            return Err(DynamoError::InvalidInput(format!("kappa must be >= 0, got {k}")));
        }
        let f = ScaledField::new(b0.clone());
        Ok(Self {
            t: 0.0,
            kappas: kappas.to_vec(),
            fields: vec![f; kappas.len()],
            flow_log: TimeFlow::zero(0.0, 0.0),
            segments: Vec::new(),
            series: Vec::new(),
        })
    }

    /// Solves every field through `piece` (a single segment starting at
    /// `self.t`), renormalises, and logs the segment.
    fn advance(&mut self, piece: &TimeFlow, kind: SegmentKind, params: &SolverParams) -> Result<()> {
        let (a, b) = piece.lifetime();
        let kappas = &self.kappas;
        let fields = &self.fields;
        let out = par::map_range(fields.len(), |i| -> Result<(FourierField, MarginReport)> {
            let (f, tr) = Solver::new(piece, kappas[i], *params)?.solve(&fields[i].field, a, b)?;
            let cert = unique_continuation_certificate(&fields[i].field, &tr);
            Ok((f, cert))
        });
        let mut certs = Vec::with_capacity(out.len());
        for (i, r) in out.into_iter().enumerate() {
            let (f, c) = r?;
            self.fields[i].field = f;
            self.fields[i].renormalize();
            certs.push(c);
        }
        self.flow_log.append_at(piece, a)?;
        self.t = b;
        let label = piece.segments().first().map(|s| s.label.clone()).unwrap_or_default();
        self.segments.push(SegmentRecord {
            kind,
            start: a,
            end: b,
            label,
            certificates: certs,
        });
        for (i, f) in self.fields.iter().enumerate() {
            self.series.push(SeriesRow {
                t: b,
                kappa_index: i,
                log_l2sq: f.log_l2sq(),
                rates: f.unit_rates(b),
                max_rate: f.max_rate(b),
            });
        }
        Ok(())
    }

    /// Worst margin over every certificate emitted so far.
    pub fn worst_margin(&self) -> f64 {
        self.segments
            .iter()
            .flat_map(|s| s.certificates.iter())
            .filter(|c| c.applicable)
            .map(MarginReport::worst)
            .fold(f64::INFINITY, f64::min)
    }
}

/// Heat-only propagation of every field over `[t, t + duration]`.
pub fn idle_segment(state: &mut ScheduleState, duration: f64, params: &SolverParams) -> Result<()> {
    if !(duration > 0.0) {
        return Err(DynamoError::InvalidInput(format!("idle duration must be positive, got {duration}")));
    }
    let piece = TimeFlow::zero(state.t, state.t + duration);
    state.advance(&piece, SegmentKind::Idle, params)
}

// ---------------------------------------------------------------------------
// Transitive segments
// ---------------------------------------------------------------------------

/// What [`transitive_segment`] did.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TransitiveRecord {
    /// `false` when a unit mode already carried mass and nothing was emitted.
    pub emitted: bool,
    pub source: Option<[i32; 3]>,
    pub target: Option<[i32; 3]>,
    pub eps: Option<f64>,
    pub y: Option<[f64; 3]>,
    /// `|(w·e_z)(v·μ)|` in the rotated frame.
    pub predictor: Option<f64>,
    /// `|b̂(k*)| / ‖b‖` after the segment.
    pub achieved: f64,
    pub trials: usize,
}

/// Moves mass of the visited field onto a unit mode if none carries any.
pub fn transitive_segment(state: &mut ScheduleState, index: usize, cfg: &ControllerConfig) -> Result<TransitiveRecord> {
    let b = &state.fields[index];
    if b.is_zero(cfg.field_tol) {
        return Err(DynamoError::Precondition("transitive segment needs a nonzero field".into()));
    }
    let norm = b.field.l2_norm();
    let tol = cfg.coeff_tol * norm;
    let (_, present) = b.dominant_unit_mode();
    if present > tol {
        return Ok(TransitiveRecord {
            emitted: false,
            source: None,
            target: None,
            eps: None,
            y: None,
            predictor: None,
            achieved: present / norm,
            trials: 0,
        });
    }
    // source: largest coefficient, earliest index on ties
    let (mut j, mut best) = (WaveVector::ZERO, -1.0);
    for (k, c) in b.field.iter() {
        let a = c3_norm(c);
        if a > best {
            j = k;
            best = a;
        }
    }
    let w = b.field.coefficient(j);

    // candidate targets ordered by the first-order predictor
    let mut cands = Vec::new();
    for (pos, ks) in WaveVector::unit_modes().into_iter().enumerate() {
        let p = SignedPermutation::to_ez(ks).expect("unit mode");
        let jr = p.apply_k(j);
        let wr = p.apply_c3(&w);
        if let Ok(tf) = transitive_flow(jr, &wr, 1.0, [0.0; 3]) {
            cands.push((ks, p, jr, wr, tf.predictor.norm(), pos));
        }
    }
    cands.sort_by(|a, b| b.4.total_cmp(&a.4).then(a.5.cmp(&b.5)));

    let kappa = state.kappas[index];
    let m = cfg.grid;
    let mut trials = 0;
    let mut best_seen: f64 = 0.0;
    for (ks, p, jr, wr, pred, _) in &cands {
        let pinv = p.inverse();
        let mut eps = cfg.eps0;
        for _ in 0..cfg.eps_steps {
            trials += 1;
            let tf = transitive_flow(*jr, wr, eps, [0.0; 3])?;
            let piece = tf.flow.rotate(&pinv).shift(state.t);
            let solver = Solver::new(&piece, kappa, cfg.params)?;
            let (a, e) = piece.lifetime();
            let scans: Vec<Vec<Complex64>> = (0..3)
                .map(|c| {
                    let mut om = [Complex64::new(0.0, 0.0); 3];
                    om[c] = Complex64::new(1.0, 0.0);
                    let r = costate(&solver, &om, *ks, a, e)?;
                    Ok(translation_scan(&r, &state.fields[index].field, *ks, m))
                })
                .collect::<Result<_>>()?;
            let (mut bi, mut bv) = (0usize, -1.0);
            for idx in 0..m * m * m {
                let v = scans.iter().map(|g| g[idx].norm_sqr()).sum::<f64>().sqrt();
                if v > bv {
                    bi = idx;
                    bv = v;
                }
            }
            best_seen = best_seen.max(bv / norm);
            if bv > tol {
                let y = grid_point(bi, m);
                let moved = piece.translate(y);
                state.advance(&moved, SegmentKind::Transitive, &cfg.params)?;
                // acceptance by direct simulation
                let after = &state.fields[index];
                let achieved = c3_norm(&after.field.coefficient(*ks)) / after.field.l2_norm();
                if achieved <= cfg.coeff_tol {
                    return Err(DynamoError::Contradiction(format!(
                        "transitive scan predicted {:e} at {ks} but simulation gave {achieved:e}",
                        bv / norm
                    )));
                }
                return Ok(TransitiveRecord {
                    emitted: true,
                    source: Some(j.to_array()),
                    target: Some(ks.to_array()),
                    eps: Some(eps),
                    y: Some(y),
                    predictor: Some(*pred),
                    achieved,
                    trials,
                });
            }
            eps *= 0.5;
        }
    }
    Err(DynamoError::TransitiveExhausted {
        best: best_seen,
        tol: cfg.coeff_tol,
    })
}

// ---------------------------------------------------------------------------
// Growth segments
// ---------------------------------------------------------------------------

/// One 2-unit application of the translated control.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GrowthBlock {
    pub start: f64,
    pub y: [f64; 3],
    pub grid_index: usize,
    /// `|grid average| / |η†b̂(k*)|`: equals `|λ₁|` by exact cancellation.
    pub predicted: f64,
    /// `|grid maximum| / |η†b̂(k*)|` from the scan.
    pub realized: f64,
    /// The same factor measured on the simulated field.
    pub simulated: f64,
}

/// Why a growth segment stopped.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GrowthStatus {
    AlreadySatisfied,
    ThresholdReached,
    BudgetExhausted,
}

/// Record of a growth segment.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GrowthSegmentPlan {
    pub target: [i32; 3],
    /// `1` for `W_R`, `2` for `W_{−R}`.
    pub choice: usize,
    pub lambda1: f64,
    pub projections: [f64; 2],
    pub blocks: Vec<GrowthBlock>,
    pub status: GrowthStatus,
}

impl GrowthSegmentPlan {
    pub fn min_factor(&self) -> f64 {
        self.blocks.iter().map(|b| b.simulated).fold(f64::INFINITY, f64::min)
    }
}

/// Default threshold test: `max_{|k|=1} (1/t) log|b̂(t,k)|² ≥ threshold` (false at `t = 0`).
pub fn rate_threshold(threshold: f64) -> impl Fn(f64, &ScaledField) -> bool {
    move |t, b| t > 0.0 && b.max_rate(t) >= threshold
}

/// Applies greedily translated copies of the selected control to the
/// visited field (and, identically, to every other field) until
/// `threshold_fn` holds or the next block would end after `budget_end`.
pub fn growth_segment(
    state: &mut ScheduleState,
    index: usize,
    pair: &ControlPair,
    threshold_fn: &dyn Fn(f64, &ScaledField) -> bool,
    budget_end: f64,
    cfg: &ControllerConfig,
) -> Result<GrowthSegmentPlan> {
    let b = &state.fields[index];
    let (ks, present) = b.dominant_unit_mode();
    if !(present > cfg.coeff_tol * b.field.l2_norm()) {
        return Err(DynamoError::Precondition(format!(
            "growth needs mass on a unit mode (largest |b(k)|/|b| = {:e})",
            present / b.field.l2_norm()
        )));
    }
    let p = SignedPermutation::to_ez(ks).expect("unit mode");
    let pinv = p.inverse();
    let v = p.apply_c3(&b.field.coefficient(ks));
    let choice = control_select(&v, pair, cfg.proj_tol)?;
    let eig = &pair.eigen[choice.choice - 1];
    let eta = pinv.apply_c3(&eig.left[0]);
    let omega = c3_conj(&eta);
    let lambda1 = eig.values[0].norm();
    let base = w_flow(if choice.choice == 1 { pair.r } else { -pair.r }).rotate(&pinv);
    let kappa = state.kappas[index];
    let m = cfg.grid;
    let mut plan = GrowthSegmentPlan {
        target: ks.to_array(),
        choice: choice.choice,
        lambda1,
        projections: choice.projections,
        blocks: Vec::new(),
        status: GrowthStatus::AlreadySatisfied,
    };
    if threshold_fn(state.t, &state.fields[index]) {
        return Ok(plan);
    }
    let proj = |f: &ScaledField| c3_inner(&eta, &f.field.coefficient(ks));
    loop {
        if state.t + base.duration() > budget_end {
            plan.status = GrowthStatus::BudgetExhausted;
            return Ok(plan);
        }
        let piece = base.shift(state.t);
        let (a, e) = piece.lifetime();
        let solver = Solver::new(&piece, kappa, cfg.params)?;
        let r = costate(&solver, &omega, ks, a, e)?;
        let g = translation_scan(&r, &state.fields[index].field, ks, m);
        let before = proj(&state.fields[index]);
        let before_abs = before.norm();
        let mean: Complex64 = g.iter().sum::<Complex64>() / (m * m * m) as f64;
        let (mut bi, mut bv) = (0usize, -1.0);
        for (i, z) in g.iter().enumerate() {
            if z.norm() > bv {
                bi = i;
                bv = z.norm();
            }
        }
        let y = grid_point(bi, m);
        let old_scale = state.fields[index].log_scale;
        state.advance(&piece.translate(y), SegmentKind::Growth, &cfg.params)?;
        let after = &state.fields[index];
        let simulated = proj(after).norm() * (after.log_scale - old_scale).exp() / before_abs;
        plan.blocks.push(GrowthBlock {
            start: a,
            y,
            grid_index: bi,
            predicted: mean.norm() / before_abs,
            realized: bv / before_abs,
            simulated,
        });
        if threshold_fn(state.t, &state.fields[index]) {
            plan.status = GrowthStatus::ThresholdReached;
            return Ok(plan);
        }
    }
}

// ---------------------------------------------------------------------------
// Schedule
// ---------------------------------------------------------------------------

/// `1; 1,2; 1,2,3; …` (0-based), capped at the number of κ's.
pub fn visit_sequence(n_kappas: usize, len: usize) -> Vec<usize> {
    let mut out = Vec::with_capacity(len);
    let mut row = 1;
    while out.len() < len {
        for i in 0..row.min(n_kappas) {
            if out.len() == len {
                break;
            }
            out.push(i);
        }
        row += 1;
    }
    out
}

/// One visit of the schedule.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VisitRecord {
    pub n: usize,
    pub kappa_index: usize,
    pub start: f64,
    /// `t_n`: end of the visit.
    pub end: f64,
    pub transitive: TransitiveRecord,
    pub growth: GrowthSegmentPlan,
    pub threshold_held: bool,
    pub rate: f64,
}

/// How the schedule ended.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScheduleStatus {
    /// The horizon was reached after a completed visit.
    HorizonReached,
    /// A growth segment ran out of time before its threshold.
    BudgetExhausted,
}

/// Output of [`run_schedule`] and the single-κ growth run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GrowthReport {
    pub kappas: Vec<f64>,
    pub threshold: f64,
    pub horizon: f64,
    pub final_time: f64,
    pub status: ScheduleStatus,
    pub control_eigenvalues: Vec<[f64; 2]>,
    pub visits: Vec<VisitRecord>,
    /// Per κ: visit end times `t_n` at which its threshold held.
    pub crossings: Vec<Vec<f64>>,
    /// Per κ: `(1/T) log ‖b(T)‖²` at the final time.
    pub rate_proxy: Vec<f64>,
    pub series: Vec<SeriesRow>,
    pub segments: Vec<SegmentRecord>,
    pub worst_margin: f64,
    pub final_fields: Vec<ScaledFieldJson>,
}

impl GrowthReport {
    /// Series CSV: `t,kappa,log_l2sq,max_rate,rate(±e_x),…`.
    pub fn series_csv(&self) -> String {
        let mut s = String::from("t,kappa,log_l2sq,max_rate");
        for k in WaveVector::unit_modes() {
            s.push_str(&format!(",rate({},{},{})", k.kx, k.ky, k.kz));
        }
        s.push('\n');
        for r in &self.series {
            s.push_str(&format!("{:e},{:e},{:e},{:e}", r.t, self.kappas[r.kappa_index], r.log_l2sq, r.max_rate));
            for v in r.rates {
                s.push_str(&format!(",{v:e}"));
            }
            s.push('\n');
        }
        s
    }

    /// Crossing-table CSV: `kappa,crossing,t`.
    pub fn crossings_csv(&self) -> String {
        let mut s = String::from("kappa,crossing,t\n");
        for (i, ts) in self.crossings.iter().enumerate() {
            for (n, t) in ts.iter().enumerate() {
                s.push_str(&format!("{:e},{},{:e}\n", self.kappas[i], n + 1, t));
            }
        }
        s
    }
}

fn control_pairs(kappas: &[f64], cfg: &ControllerConfig) -> Result<Vec<ControlPair>> {
    kappas.iter().map(|&k| ControlPair::compute(k, cfg.r, &cfg.params)).collect()
}

fn finish(state: ScheduleState, cfg: &ControllerConfig, horizon: f64, status: ScheduleStatus, pairs: &[ControlPair], visits: Vec<VisitRecord>) -> (TimeFlow, GrowthReport) {
    let n = state.kappas.len();
    let mut crossings = vec![Vec::new(); n];
    for v in &visits {
        if v.threshold_held {
            crossings[v.kappa_index].push(v.end);
        }
    }
    let t = state.t;
    let report = GrowthReport {
        kappas: state.kappas.clone(),
        threshold: cfg.threshold,
        horizon,
        final_time: t,
        status,
        control_eigenvalues: pairs.iter().map(|p| [p.eigen[0].values[0].norm(), p.eigen[1].values[0].norm()]).collect(),
        visits,
        crossings,
        rate_proxy: state.fields.iter().map(|f| if t > 0.0 { f.log_l2sq() / t } else { 0.0 }).collect(),
        worst_margin: state.worst_margin(),
        series: state.series,
        segments: state.segments,
        final_fields: state.fields.iter().map(ScaledField::to_json).collect(),
    };
    (state.flow_log, report)
}

/// The multi-κ schedule: each visit idles for one unit, makes sure the
/// visited field has unit-mode mass, then grows it until its rate
/// threshold holds at the current global time. Stops at `horizon`.
pub fn run_schedule(b0: &FourierField, kappas: &[f64], horizon: f64, cfg: &ControllerConfig) -> Result<(TimeFlow, GrowthReport)> {
    cfg.validate()?;
    let mut state = ScheduleState::new(b0, kappas)?;
    if state.fields[0].is_zero(cfg.field_tol) {
        return Err(DynamoError::Precondition("initial field is zero".into()));
    }
    let pairs = control_pairs(kappas, cfg)?;
    let threshold = rate_threshold(cfg.threshold);
    let mut visits = Vec::new();
    let mut status = ScheduleStatus::HorizonReached;
    let mut n = 0;
    while state.t + 1.0 <= horizon {
        let idx = visit_sequence(kappas.len(), n + 1)[n];
        n += 1;
        let start = state.t;
        idle_segment(&mut state, 1.0, &cfg.params)?;
        let transitive = transitive_segment(&mut state, idx, cfg)?;
        let growth = growth_segment(&mut state, idx, &pairs[idx], &threshold, horizon, cfg)?;
        let rate = state.fields[idx].max_rate(state.t);
        let held = threshold(state.t, &state.fields[idx]);
        let exhausted = growth.status == GrowthStatus::BudgetExhausted;
        visits.push(VisitRecord {
            n,
            kappa_index: idx,
            start,
            end: state.t,
            transitive,
            growth,
            threshold_held: held,
            rate,
        });
        if exhausted {
            status = ScheduleStatus::BudgetExhausted;
            break;
        }
    }
    Ok(finish(state, cfg, horizon, status, &pairs, visits))
}

/// Single-κ growth from `b0` at `t = 0` until the threshold holds or
/// `budget` time units are used.
pub fn run_growth(b0: &FourierField, kappa: f64, budget: f64, cfg: &ControllerConfig) -> Result<(TimeFlow, GrowthReport)> {
    cfg.validate()?;
    let mut state = ScheduleState::new(b0, &[kappa])?;
    if state.fields[0].is_zero(cfg.field_tol) {
        return Err(DynamoError::Precondition("initial field is zero".into()));
    }
    let pairs = control_pairs(&[kappa], cfg)?;
    let transitive = transitive_segment(&mut state, 0, cfg)?;
    let threshold = rate_threshold(cfg.threshold);
    let growth = growth_segment(&mut state, 0, &pairs[0], &threshold, budget, cfg)?;
    let held = threshold(state.t, &state.fields[0]);
    let status = if growth.status == GrowthStatus::BudgetExhausted {
        ScheduleStatus::BudgetExhausted
    } else {
        ScheduleStatus::HorizonReached
    };
    let visits = vec![VisitRecord {
        n: 1,
        kappa_index: 0,
        start: 0.0,
        end: state.t,
        transitive,
        rate: if state.t > 0.0 { state.fields[0].max_rate(state.t) } else { f64::NEG_INFINITY },
        growth,
        threshold_held: held,
    }];
    Ok(finish(state, cfg, budget, status, &pairs, visits))
}

/// Re-simulates `flow` segment by segment from `b0` for each κ, with the
/// same per-segment solves and renormalisation as the controller.
pub fn replay(flow: &TimeFlow, b0: &FourierField, kappas: &[f64], params: &SolverParams) -> Result<Vec<ScaledField>> {
    let out = par::map_range(kappas.len(), |i| -> Result<ScaledField> {
        let mut f = ScaledField::new(b0.clone());
        for seg in flow.segments() {
            let piece = TimeFlow::single(seg.clone());
            f.field = Solver::new(&piece, kappas[i], *params)?.evolve(&f.field, seg.start, seg.end)?;
            f.renormalize();
        }
        Ok(f)
    });
    out.into_iter().collect()
}

/// `|λ₁|` above `e` for both controls.
pub fn controls_grow(pair: &ControlPair) -> bool {
    pair.min_top_modulus() > E
}
