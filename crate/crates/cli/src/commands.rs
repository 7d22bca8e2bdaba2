//! The five subcommands. Each writes its reports into an [`OutputDir`] and
//! returns an [`Outcome`]; runtime failures come back as errors.

use std::fs;
use std::path::Path;

use anyhow::{Context, Result};
use dynamo_forge::controller::{self, GrowthReport, ScaledField, ScaledFieldJson, ScheduleStatus};
use dynamo_forge::flow::{FlowJson, TimeFlow};
use dynamo_forge::operator::{kappa0_scan, Kappa0Row};
use dynamo_forge::spectral::{FieldJson, FourierField};
use serde::{Deserialize, Serialize};

use crate::checks;
use crate::config::{hex_digest, RunConfig};
use crate::output::{junit_xml, CheckResult, Manifest, OutputDir};
use crate::UsageError;

/// Result of a command that ran to completion: `ok == false` maps to exit code 1.
#[derive(Clone, Debug, PartialEq)]
pub struct Outcome {
    pub ok: bool,
    pub summary: String,
}

// ---------------------------------------------------------------------------
// Shared inputs
// ---------------------------------------------------------------------------

/// The initial field and, when read from a file, the hash of its bytes.
pub fn initial_field(cfg: &RunConfig) -> Result<(FourierField, Option<String>)> {
    match &cfg.initial_field {
        None => Ok((FourierField::default_seed(cfg.n), None)),
        Some(p) => {
            let bytes = fs::read(p).with_context(|| format!("reading initial field {}", p.display()))?;
            let j: FieldJson = serde_json::from_slice(&bytes).with_context(|| format!("parsing {}", p.display()))?;
            if j.n != cfg.n {
                return Err(UsageError(format!("initial field {} has N={}, config has N={}", p.display(), j.n, cfg.n)).into());
            }
            let f = FourierField::from_json(&j)?;
            Ok((f, Some(hex_digest(&bytes))))
        }
    }
}

/// The part of `certificate.json` the gate needs.
#[derive(Debug, Deserialize)]
struct CertificateView {
    r: f64,
    kappa0_emp: Option<f64>,
}

/// Certified threshold and a description of where it came from.
pub fn certified_kappa0(cfg: &RunConfig) -> Result<(Option<f64>, String)> {
    if let Some(p) = &cfg.certificate {
        let text = fs::read_to_string(p).with_context(|| format!("reading certificate {}", p.display()))?;
        let c: CertificateView = serde_json::from_str(&text).with_context(|| format!("parsing certificate {}", p.display()))?;
        if c.r != cfg.r {
            return Err(UsageError(format!(
                "certificate {} was computed for R={}, config has R={}",
                p.display(),
                c.r,
                cfg.r
            ))
            .into());
        }
        return Ok((c.kappa0_emp, format!("certificate {}", p.display())));
    }
    Ok((cfg.kappa0, "config value kappa0".into()))
}

/// Refuses diffusivities above the certified threshold unless overridden.
pub fn check_certified(cfg: &RunConfig, kappas: &[f64], allow_uncertified: bool) -> Result<()> {
    if allow_uncertified {
        return Ok(());
    }
    let (k0, source) = certified_kappa0(cfg)?;
    for &k in kappas {
        let fine = matches!(k0, Some(k0) if k <= k0);
        if !fine {
            let bound = k0.map_or("none".to_string(), |v| format!("{v:e}"));
            return Err(UsageError(format!(
                "kappa {k:e} exceeds the certified range: kappa0_emp = {bound} (from {source}); \
                 run scan-kappa0 or pass --allow-uncertified"
            ))
            .into());
        }
    }
    Ok(())
}

fn manifest(command: &str, cfg: &RunConfig, field_hash: Option<String>) -> Manifest {
    let mut m = Manifest::new(command, cfg);
    m.initial_field_hash = field_hash;
    m
}

/// Per-κ final fields, also the input format of `replay --compare`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct FinalFields {
    pub kappas: Vec<f64>,
    pub fields: Vec<ScaledFieldJson>,
}

#[derive(Serialize)]
struct WithManifest<'a, T: Serialize> {
    manifest: &'a Manifest,
    #[serde(flatten)]
    body: &'a T,
}

fn split_fields(mut report: GrowthReport) -> (GrowthReport, FinalFields) {
    let fields = std::mem::take(&mut report.final_fields);
    let ff = FinalFields {
        kappas: report.kappas.clone(),
        fields,
    };
    (report, ff)
}

// ---------------------------------------------------------------------------
// verify
// ---------------------------------------------------------------------------

#[derive(Serialize)]
struct VerifySummary<'a> {
    passed: bool,
    failures: Vec<&'a str>,
    checks: &'a [CheckResult],
}

/// Runs the verification suite; writes `verify.json` and `verify.junit.xml`.
pub fn verify(cfg: &RunConfig, out: &OutputDir, progress: impl FnMut(&CheckResult)) -> Result<Outcome> {
    let results = checks::run_all(cfg, progress)?;
    let failures: Vec<&str> = results.iter().filter(|c| !c.passed).map(|c| c.name.as_str()).collect();
    let m = manifest("verify", cfg, None);
    let summary = VerifySummary {
        passed: failures.is_empty(),
        failures: failures.clone(),
        checks: &results,
    };
    out.write_json("verify.json", &WithManifest { manifest: &m, body: &summary })?;
    out.write("verify.junit.xml", &junit_xml("dynamo-forge.verify", &results))?;
    Ok(Outcome {
        ok: failures.is_empty(),
        summary: if failures.is_empty() {
            format!("all {} checks passed", results.len())
        } else {
            format!("{} of {} checks failed: {}", failures.len(), results.len(), failures.join(", "))
        },
    })
}

// ---------------------------------------------------------------------------
// grow
// ---------------------------------------------------------------------------

#[derive(Serialize)]
struct GrowSummary<'a> {
    kappa: f64,
    budget: f64,
    status: ScheduleStatus,
    /// First time the threshold held, if it did.
    threshold_time: Option<f64>,
    final_rate: f64,
    lambda1: f64,
    /// Smallest simulated per-block factor on the eigen-projection.
    min_block_factor: Option<f64>,
    report: &'a GrowthReport,
}

/// Single-κ growth run from the initial field: `grow_series.csv`,
/// `grow.json`, `flow.json`, `final_fields.json`.
pub fn grow(cfg: &RunConfig, kappa: f64, allow_uncertified: bool, out: &OutputDir) -> Result<Outcome> {
    if !(kappa >= 0.0 && kappa.is_finite()) {
        return Err(UsageError(format!("kappa must be finite and >= 0, got {kappa}")).into());
    }
    check_certified(cfg, &[kappa], allow_uncertified)?;
    let (b0, field_hash) = initial_field(cfg)?;
    let (flow, report) = controller::run_growth(&b0, kappa, cfg.budget, &cfg.controller())?;
    let (report, finals) = split_fields(report);
    let visit = &report.visits[0];
    let threshold_time = visit.threshold_held.then_some(visit.end);
    let summary = GrowSummary {
        kappa,
        budget: cfg.budget,
        status: report.status,
        threshold_time,
        final_rate: visit.rate,
        lambda1: visit.growth.lambda1,
        min_block_factor: (!visit.growth.blocks.is_empty()).then(|| visit.growth.min_factor()),
        report: &report,
    };
    let m = manifest("grow", cfg, field_hash);
    out.write("grow_series.csv", &report.series_csv())?;
    out.write_json("grow.json", &WithManifest { manifest: &m, body: &summary })?;
    out.write_json("flow.json", &flow.to_json())?;
    out.write_json("final_fields.json", &WithManifest { manifest: &m, body: &finals })?;
    Ok(Outcome {
        ok: threshold_time.is_some(),
        summary: match threshold_time {
            Some(t) => format!(
                "kappa {kappa:e}: threshold {} reached at t = {t} (rate {:.6})",
                cfg.threshold, visit.rate
            ),
            None => format!(
                "kappa {kappa:e}: budget exhausted at t = {} before the threshold {} (rate {:.6})",
                report.final_time, cfg.threshold, visit.rate
            ),
        },
    })
}

// ---------------------------------------------------------------------------
// schedule
// ---------------------------------------------------------------------------

/// Replay comparison of per-κ final fields.
#[derive(Clone, Debug, Serialize)]
pub struct ReplayCheck {
    pub distances: Vec<f64>,
    pub max_distance: f64,
    pub tolerance: f64,
    pub passed: bool,
}

fn compare_fields(reference: &FinalFields, replayed: &[ScaledField], tol: f64) -> Result<ReplayCheck> {
    if reference.fields.len() != replayed.len() {
        return Err(UsageError(format!(
            "reference has {} fields, replay produced {}",
            reference.fields.len(),
            replayed.len()
        ))
        .into());
    }
    let mut distances = Vec::with_capacity(replayed.len());
    for (r, f) in reference.fields.iter().zip(replayed) {
        let r = ScaledField::from_json(r)?;
        distances.push(r.relative_distance(f)?);
    }
    let max_distance = distances.iter().copied().fold(0.0, f64::max);
    Ok(ReplayCheck {
        passed: max_distance < tol,
        distances,
        max_distance,
        tolerance: tol,
    })
}

#[derive(Serialize)]
struct ScheduleSummary<'a> {
    status: ScheduleStatus,
    crossing_counts: Vec<usize>,
    margins_hold: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    replay: Option<&'a ReplayCheck>,
    report: &'a GrowthReport,
}

/// Crossing table for the terminal.
pub fn crossing_table(report: &GrowthReport) -> String {
    let mut s = format!("{:>12}  {:>9}  {}\n", "kappa", "crossings", "times");
    for (i, ts) in report.crossings.iter().enumerate() {
        let times: Vec<String> = ts.iter().map(|t| format!("{t}")).collect();
        s.push_str(&format!("{:>12e}  {:>9}  {}\n", report.kappas[i], ts.len(), times.join(" ")));
    }
    s
}

/// Multi-κ schedule: `series.csv`, `crossings.csv`, `schedule.json`,
/// `flow.json`, `final_fields.json` and, with `replay_check`, the replay
/// comparison inside `schedule.json`.
pub fn schedule(cfg: &RunConfig, allow_uncertified: bool, replay_check: bool, out: &OutputDir) -> Result<(Outcome, GrowthReport)> {
    check_certified(cfg, &cfg.kappas, allow_uncertified)?;
    let (b0, field_hash) = initial_field(cfg)?;
    let (flow, report) = controller::run_schedule(&b0, &cfg.kappas, cfg.horizon, &cfg.controller())?;
    let (report, finals) = split_fields(report);
    let replay = if replay_check {
        let replayed = controller::replay(&flow, &b0, &cfg.kappas, &cfg.params())?;
        Some(compare_fields(&finals, &replayed, cfg.tolerances.replay)?)
    } else {
        None
    };
    let margins_hold = report.worst_margin >= -cfg.tolerances.margin;
    let summary = ScheduleSummary {
        status: report.status,
        crossing_counts: report.crossings.iter().map(Vec::len).collect(),
        margins_hold,
        replay: replay.as_ref(),
        report: &report,
    };
    let m = manifest("schedule", cfg, field_hash);
    out.write("series.csv", &report.series_csv())?;
    out.write("crossings.csv", &report.crossings_csv())?;
    out.write_json("schedule.json", &WithManifest { manifest: &m, body: &summary })?;
    out.write_json("flow.json", &flow.to_json())?;
    out.write_json("final_fields.json", &WithManifest { manifest: &m, body: &finals })?;

    let mut notes = Vec::new();
    let status = match report.status {
        ScheduleStatus::HorizonReached => "horizon reached",
        ScheduleStatus::BudgetExhausted => "budget exhausted",
    };
    notes.push(format!("{status} at t = {}", report.final_time));
    if !margins_hold {
        notes.push(format!("unique-continuation margin violated ({:e})", report.worst_margin));
    }
    if let Some(r) = &replay {
        notes.push(format!("replay max relative distance {:e} (tolerance {:e})", r.max_distance, r.tolerance));
    }
    let ok = report.status == ScheduleStatus::HorizonReached && margins_hold && replay.as_ref().map_or(true, |r| r.passed);
    Ok((
        Outcome {
            ok,
            summary: notes.join("; "),
        },
        report,
    ))
}

// ---------------------------------------------------------------------------
// scan-kappa0
// ---------------------------------------------------------------------------

/// Contents of `certificate.json`.
#[derive(Clone, Debug, Serialize)]
pub struct Certificate {
    pub r: f64,
    pub n: usize,
    pub dt: f64,
    pub kappa0_emp: Option<f64>,
    pub lipschitz: f64,
    pub rows: Vec<Kappa0Row>,
}

/// κ₀ scan over the configured grid: `kappa0_scan.csv` and `certificate.json`.
pub fn scan_kappa0(cfg: &RunConfig, out: &OutputDir) -> Result<(Outcome, Certificate)> {
    if cfg.kappa0_grid.is_empty() {
        return Err(UsageError("kappa0_grid must not be empty".into()).into());
    }
    let scan = kappa0_scan(&cfg.kappa0_grid, cfg.r, &cfg.params())?;
    let cert = Certificate {
        r: scan.r,
        n: cfg.n,
        dt: cfg.dt,
        kappa0_emp: scan.kappa0_emp,
        lipschitz: scan.lipschitz,
        rows: scan.rows.clone(),
    };
    let m = manifest("scan-kappa0", cfg, None);
    out.write("kappa0_scan.csv", &scan.to_csv())?;
    out.write_json("certificate.json", &WithManifest { manifest: &m, body: &cert })?;
    let failing = scan.rows.iter().filter(|r| !r.pass).count();
    Ok((
        Outcome {
            ok: true,
            summary: format!(
                "kappa0_emp = {} ({} of {} grid points fail)",
                scan.kappa0_emp.map_or("none".to_string(), |k| format!("{k:e}")),
                failing,
                scan.rows.len()
            ),
        },
        cert,
    ))
}

// ---------------------------------------------------------------------------
// replay
// ---------------------------------------------------------------------------

#[derive(Serialize)]
struct ReplaySummary<'a> {
    flow_hash: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    comparison: Option<&'a ReplayCheck>,
    #[serde(flatten)]
    fields: &'a FinalFields,
}

/// Re-simulates an exported flow at the configured κ's from the initial
/// field; with `compare`, checks the result against a `final_fields.json`.
pub fn replay(cfg: &RunConfig, flow_path: &Path, compare: Option<&Path>, out: &OutputDir) -> Result<Outcome> {
    let bytes = fs::read(flow_path).with_context(|| format!("reading flow {}", flow_path.display()))?;
    let fj: FlowJson = serde_json::from_slice(&bytes).with_context(|| format!("parsing flow {}", flow_path.display()))?;
    let flow = TimeFlow::from_json(&fj)?;
    let (b0, field_hash) = initial_field(cfg)?;
    let replayed = controller::replay(&flow, &b0, &cfg.kappas, &cfg.params())?;
    let fields = FinalFields {
        kappas: cfg.kappas.clone(),
        fields: replayed.iter().map(ScaledField::to_json).collect(),
    };
    let comparison = match compare {
        Some(p) => {
            let text = fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            let reference: FinalFields = serde_json::from_str(&text).with_context(|| format!("parsing {}", p.display()))?;
            if reference.kappas != cfg.kappas {
                return Err(UsageError(format!(
                    "{} holds kappas {:?}, config has {:?}",
                    p.display(),
                    reference.kappas,
                    cfg.kappas
                ))
                .into());
            }
            Some(compare_fields(&reference, &replayed, cfg.tolerances.replay)?)
        }
        None => None,
    };
    let m = manifest("replay", cfg, field_hash);
    let summary = ReplaySummary {
        flow_hash: hex_digest(&bytes),
        comparison: comparison.as_ref(),
        fields: &fields,
    };
    out.write_json("replay.json", &WithManifest { manifest: &m, body: &summary })?;
    Ok(match comparison {
        Some(c) => Outcome {
            ok: c.passed,
            summary: format!("max relative distance {:e} (tolerance {:e})", c.max_distance, c.tolerance),
        },
        None => Outcome {
            ok: true,
            summary: format!("replayed {} segments up to t = {}", flow.segments().len(), flow.lifetime().1),
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gate_names_the_threshold() {
        let cfg = RunConfig::default();
        check_certified(&cfg, &[0.0, 1e-2], false).unwrap();
        let err = check_certified(&cfg, &[0.05], false).unwrap_err();
        assert!(err.is::<UsageError>());
        assert!(err.to_string().contains("kappa0_emp = 1e-2"), "{err}");
        check_certified(&cfg, &[0.05], true).unwrap();
    }

    #[test]
    fn gate_reads_certificates() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("certificate.json");
        fs::write(&p, r#"{"r": 1.0, "kappa0_emp": 0.003, "rows": []}"#).unwrap();
        let mut cfg = RunConfig::default();
        cfg.certificate = Some(p.clone());
        check_certified(&cfg, &[0.003], false).unwrap();
        assert!(check_certified(&cfg, &[0.004], false).is_err());
        fs::write(&p, r#"{"r": 2.0, "kappa0_emp": 0.003}"#).unwrap();
        assert!(check_certified(&cfg, &[0.0], false).is_err());
        fs::write(&p, r#"{"r": 1.0, "kappa0_emp": null}"#).unwrap();
        assert!(check_certified(&cfg, &[0.0], false).unwrap_err().to_string().contains("none"));
    }

    #[test]
    fn initial_field_resolution_must_match() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("b0.json");
        fs::write(&p, serde_json::to_string(&FourierField::default_seed(4).to_json()).unwrap()).unwrap();
        let mut cfg = RunConfig::default();
        cfg.initial_field = Some(p);
        assert!(initial_field(&cfg).unwrap_err().is::<UsageError>());
        cfg.n = 4;
        let (f, h) = initial_field(&cfg).unwrap();
        assert_eq!(f, FourierField::default_seed(4));
        assert_eq!(h.unwrap().len(), 64);
    }
}
