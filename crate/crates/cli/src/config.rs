//! Run configuration: a JSON file with defaults for every field, overridden
//! by command-line flags.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use dynamo_forge::controller::ControllerConfig;
use dynamo_forge::solver::SolverParams;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::UsageError;

/// Numerical tolerances; every entry must be positive.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Tolerances {
    /// Frobenius error of numeric vs closed-form matrix elements.
    pub matrix: f64,
    /// Translation identity, averaged-matrix cancellation, selection-rule zeros.
    pub identity: f64,
    /// Eigenvalue closed forms.
    pub eigen: f64,
    /// Relative per-mode error of zero-flow runs against exact heat decay.
    pub heat: f64,
    /// Allowed negative log-margin of the energy and unique-continuation bounds.
    pub margin: f64,
    /// Relative distance between replayed and reported final fields.
    pub replay: f64,
    /// Minimum growing-eigendirection projection accepted by control selection.
    pub projection: f64,
    /// A unit-mode coefficient counts as present above `coefficient · ‖b‖`.
    pub coefficient: f64,
    /// Fields with `‖b‖` at or below this are treated as zero.
    pub field: f64,
    /// Slack on the per-block growth factor `≥ |λ₁| − block_factor`.
    pub block_factor: f64,
    /// Accepted band for the dt-halving error ratio of a second-order scheme.
    pub convergence_low: f64,
    pub convergence_high: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            matrix: 1e-5,
            identity: 1e-10,
            eigen: 1e-10,
            heat: 1e-12,
            margin: dynamo_forge::diagnostics::MARGIN_TOL,
            replay: 1e-8,
            projection: dynamo_forge::operator::PROJ_TOL,
            coefficient: 1e-12,
            field: 1e-300,
            block_factor: 1e-6,
            convergence_low: 3.5,
            convergence_high: 4.5,
        }
    }
}

impl Tolerances {
    fn entries(&self) -> [(&'static str, f64); 12] {
        [
            ("matrix", self.matrix),
            ("identity", self.identity),
            ("eigen", self.eigen),
            ("heat", self.heat),
            ("margin", self.margin),
            ("replay", self.replay),
            ("projection", self.projection),
            ("coefficient", self.coefficient),
            ("field", self.field),
            ("block_factor", self.block_factor),
            ("convergence_low", self.convergence_low),
            ("convergence_high", self.convergence_high),
        ]
    }
}

/// Settings of the `verify` suite.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct VerifyConfig {
    /// Resolution and step for the closed-form matrix comparisons.
    pub n: usize,
    pub dt: f64,
    pub lambdas: Vec<f64>,
    /// Resolution for the translation-identity and selection-rule checks.
    pub identity_n: usize,
    pub identity_dt: f64,
    /// Number of random `(y, k, j)` tuples for the translation identity.
    pub tuples: usize,
    /// Step-halving study: `W_λ` at this κ, resolution and starting step.
    pub convergence_kappa: f64,
    pub convergence_lambda: f64,
    pub convergence_n: usize,
    pub convergence_dt: f64,
    /// Fault injection: replaces `α` in the closed-form matrices.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub corrupt_alpha: Option<f64>,
}

impl Default for VerifyConfig {
    fn default() -> Self {
        Self {
            n: 32,
            dt: 2.5e-4,
            lambdas: vec![0.5, 1.0, 2.0],
            identity_n: 8,
            identity_dt: 2e-3,
            tuples: 20,
            convergence_kappa: 1e-2,
            convergence_lambda: 1.0,
            convergence_n: 16,
            convergence_dt: 6e-4,
            corrupt_alpha: None,
        }
    }
}

/// Everything a command needs. All fields have defaults, so `{}` is a
/// valid configuration file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    /// Fourier resolution `N`.
    pub n: usize,
    pub dt: f64,
    /// Translation grid size per axis; `2N + 1` when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub m: Option<usize>,
    /// Control amplitude `R`.
    pub r: f64,
    pub kappas: Vec<f64>,
    pub horizon: f64,
    /// Time budget of a single `grow` run.
    pub budget: f64,
    pub threshold: f64,
    /// Seed for the randomised checks of `verify`.
    pub seed: u64,
    /// Certified diffusivity threshold; superseded by `certificate`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub kappa0: Option<f64>,
    /// `certificate.json` written by `scan-kappa0`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub certificate: Option<PathBuf>,
    /// κ grid of `scan-kappa0`.
    pub kappa0_grid: Vec<f64>,
    /// Initial field as field JSON; `sin(2πx) e_z` when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub initial_field: Option<PathBuf>,
    pub tolerances: Tolerances,
    pub verify: VerifyConfig,
    /// Not part of the configuration hash.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub output: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            n: 16,
            dt: 1e-3,
            m: None,
            r: 1.0,
            kappas: vec![0.0, 1e-3, 1e-2],
            horizon: 300.0,
            budget: 60.0,
            threshold: dynamo_forge::controller::RATE_THRESHOLD,
            seed: 7,
            kappa0: Some(1e-2),
            certificate: None,
            kappa0_grid: vec![0.0, 1e-3, 2e-3, 3e-3, 5e-3, 7e-3, 1e-2, 1.2e-2, 1.5e-2, 2e-2],
            initial_field: None,
            tolerances: Tolerances::default(),
            verify: VerifyConfig::default(),
            output: None,
        }
    }
}

fn usage(msg: String) -> anyhow::Error {
    UsageError(msg).into()
}

impl RunConfig {
    /// Reads a configuration file; unknown keys are rejected.
    pub fn load(path: &Path) -> Result<RunConfig> {
        let text = fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        serde_json::from_str(&text).map_err(|e| usage(format!("config {}: {e}", path.display())))
    }

    pub fn grid(&self) -> usize {
        self.m.unwrap_or(2 * self.n + 1)
    }

    pub fn params(&self) -> SolverParams {
        SolverParams::new(self.n, self.dt)
    }

    pub fn controller(&self) -> ControllerConfig {
        let mut c = ControllerConfig::new(self.params());
        c.r = self.r;
        c.grid = self.grid();
        c.threshold = self.threshold;
        c.proj_tol = self.tolerances.projection;
        c.coeff_tol = self.tolerances.coefficient;
        c.field_tol = self.tolerances.field;
        c
    }

    /// Schema checks beyond what the deserializer enforces.
    pub fn validate(&self) -> Result<()> {
        let positive = |name: &str, v: f64| -> Result<()> {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(usage(format!("{name} must be positive and finite, got {v}")))
            }
        };
        if self.n == 0 || self.verify.n == 0 || self.verify.identity_n == 0 || self.verify.convergence_n == 0 {
            return Err(usage("resolutions must be at least 1".into()));
        }
        if self.grid() == 0 {
            return Err(usage("translation grid m must be at least 1".into()));
        }
        positive("dt", self.dt)?;
        positive("r", self.r)?;
        positive("horizon", self.horizon)?;
        positive("budget", self.budget)?;
        positive("threshold", self.threshold)?;
        positive("verify.dt", self.verify.dt)?;
        positive("verify.identity_dt", self.verify.identity_dt)?;
        positive("verify.convergence_dt", self.verify.convergence_dt)?;
        for (name, v) in self.tolerances.entries() {
            positive(&format!("tolerances.{name}"), v)?;
        }
        if self.tolerances.convergence_low >= self.tolerances.convergence_high {
            return Err(usage("tolerances.convergence_low must be below convergence_high".into()));
        }
        if self.kappas.is_empty() {
            return Err(usage("kappas must contain at least one diffusivity".into()));
        }
        for &k in self.kappas.iter().chain(&self.kappa0_grid).chain([&self.verify.convergence_kappa]) {
            if !(k >= 0.0 && k.is_finite()) {
                return Err(usage(format!("diffusivities must be finite and >= 0, got {k}")));
            }
        }
        if let Some(k0) = self.kappa0 {
            if !(k0 >= 0.0 && k0.is_finite()) {
                return Err(usage(format!("kappa0 must be finite and >= 0, got {k0}")));
            }
        }
        if self.verify.lambdas.is_empty() {
            return Err(usage("verify.lambdas must not be empty".into()));
        }
        Ok(())
    }

    /// Canonical JSON of the configuration without the output location.
    pub fn canonical_json(&self) -> String {
        let mut c = self.clone();
        c.output = None;
        serde_json::to_string(&c).expect("config serializes")
    }

    /// SHA-256 of [`RunConfig::canonical_json`], hex encoded.
    pub fn hash(&self) -> String {
        hex_digest(self.canonical_json().as_bytes())
    }
}

pub fn hex_digest(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}
