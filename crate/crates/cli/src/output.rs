//! Output directory handling, report manifests and JUnit XML.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::Serialize;

use crate::config::{RunConfig, Tolerances};
use crate::UsageError;

/// A directory that reports are written into. Refuses to reuse a
/// non-empty directory unless `force` is set.
#[derive(Clone, Debug)]
pub struct OutputDir {
    root: PathBuf,
}

impl OutputDir {
    pub fn prepare(root: &Path, force: bool) -> Result<OutputDir> {
        if root.exists() {
            if !root.is_dir() {
                return Err(UsageError(format!("output path {} exists and is not a directory", root.display())).into());
            }
            let occupied = fs::read_dir(root)
                .with_context(|| format!("listing {}", root.display()))?
                .next()
                .is_some();
            if occupied && !force {
                return Err(UsageError(format!(
                    "output directory {} is not empty; pass --force to overwrite",
                    root.display()
                ))
                .into());
            }
        } else {
            fs::create_dir_all(root).with_context(|| format!("creating {}", root.display()))?;
        }
        Ok(OutputDir { root: root.to_path_buf() })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.root.join(name)
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn write(&self, name: &str, contents: &str) -> Result<PathBuf> {
        let p = self.path(name);
        fs::write(&p, contents).with_context(|| format!("writing {}", p.display()))?;
        Ok(p)
    }

    pub fn write_json<T: Serialize>(&self, name: &str, value: &T) -> Result<PathBuf> {
        let mut s = serde_json::to_string_pretty(value)?;
        s.push('\n');
        self.write(name, &s)
    }
}

/// Provenance block embedded in every JSON report. It holds no timestamps
/// or host details, so identical inputs give identical bytes.
#[derive(Clone, Debug, Serialize)]
pub struct Manifest {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: String,
    pub config_hash: String,
    pub config: RunConfig,
    pub tolerances: Tolerances,
    /// Hash of the initial field, when the command uses one.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub initial_field_hash: Option<String>,
}

impl Manifest {
    pub fn new(command: &str, cfg: &RunConfig) -> Manifest {
        let mut config = cfg.clone();
        config.output = None;
        Manifest {
            tool: "dynamo-forge",
            version: env!("CARGO_PKG_VERSION"),
            command: command.to_string(),
            config_hash: cfg.hash(),
            tolerances: cfg.tolerances.clone(),
            config,
            initial_field_hash: None,
        }
    }
}

/// One named check with its measured value and the allowed bound.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CheckResult {
    pub name: String,
    pub passed: bool,
    pub measured: f64,
    pub allowed: String,
    pub detail: String,
}

impl CheckResult {
    /// Passes when `measured < bound`.
    pub fn below(name: &str, measured: f64, bound: f64, detail: String) -> CheckResult {
        CheckResult {
            name: name.to_string(),
            passed: measured < bound,
            measured,
            allowed: format!("< {bound:e}"),
            detail,
        }
    }

    pub fn line(&self) -> String {
        format!(
            "{} {}: measured {:e}, allowed {}{}",
            if self.passed { "PASS" } else { "FAIL" },
            self.name,
            self.measured,
            self.allowed,
            if self.detail.is_empty() { String::new() } else { format!(" ({})", self.detail) }
        )
    }
}

fn xml_escape(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        match c {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            '\'' => out.push_str("&apos;"),
            _ => out.push(c),
        }
    }
    out
}

/// JUnit-style XML: one `testcase` per check, failures carry the
/// measured-vs-allowed message.
pub fn junit_xml(suite: &str, checks: &[CheckResult]) -> String {
    let failures = checks.iter().filter(|c| !c.passed).count();
    let mut s = String::from("<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n");
    s.push_str(&format!(
        "<testsuite name=\"{}\" tests=\"{}\" failures=\"{}\">\n",
        xml_escape(suite),
        checks.len(),
        failures
    ));
    for c in checks {
        s.push_str(&format!("  <testcase classname=\"{}\" name=\"{}\"", xml_escape(suite), xml_escape(&c.name)));
        if c.passed {
            s.push_str("/>\n");
        } else {
            s.push_str(">\n");
            s.push_str(&format!(
                "    <failure message=\"measured {:e}, allowed {}\">{}</failure>\n",
                c.measured,
                xml_escape(&c.allowed),
                xml_escape(&c.detail)
            ));
            s.push_str("  </testcase>\n");
        }
    }
    s.push_str("</testsuite>\n");
    s
}
