//! Run results, artifact directories and manifests.
//!
//! An experiment produces a [`RunOutput`] entirely in memory. Writing it
//! goes through a sibling temporary directory that is renamed into place at
//! the end, so a failed run never leaves partial artifacts behind.

use crate::config::ExperimentConfig;
use crate::error::{CliError, Result};
use crate::plot::Figure;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use sha2::{Digest, Sha256};
use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

pub const MANIFEST: &str = "manifest.json";
pub const REPORT_JSON: &str = "report.json";
pub const REPORT_TXT: &str = "report.txt";
pub const CONFIG_JSON: &str = "config.json";

/// One acceptance check of a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    /// Observed value the check is about.
    pub observed: f64,
    /// Human-readable criterion, e.g. `"< 0.5"`.
    pub criterion: String,
}

/// Everything an experiment produced, before it is written to disk.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RunOutput {
    /// File name to contents (CSV and SVG).
    pub files: BTreeMap<String, String>,
    /// Key results, reported in `report.json`.
    pub summary: Map<String, Value>,
    pub checks: Vec<Check>,
}

impl RunOutput {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn file(&mut self, name: &str, contents: String) {
        self.files.insert(name.to_string(), contents);
    }

    /// Adds `stem.svg` together with the CSV `stem.csv` it was drawn from.
    pub fn plot(&mut self, stem: &str, csv: String, figure: &Figure) {
        self.file(&format!("{stem}.csv"), csv);
        self.file(&format!("{stem}.svg"), figure.to_svg());
    }

    pub fn set(&mut self, key: &str, value: impl Serialize) {
        let v = serde_json::to_value(value).unwrap_or(Value::Null);
        self.summary.insert(key.to_string(), v);
    }

    pub fn check(&mut self, name: &str, passed: bool, observed: f64, criterion: impl Into<String>) {
        self.checks.push(Check {
            name: name.to_string(),
            passed,
            observed,
            criterion: criterion.into(),
        });
    }

    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn check_named(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }
}

/// Machine-readable run report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub kind: String,
    pub seed: u64,
    pub config_sha256: String,
    pub verdict: String,
    pub checks: Vec<Check>,
    pub summary: Map<String, Value>,
}

/// Provenance record of an artifact directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub tool_version: String,
    pub core_version: String,
    pub schema_version: u32,
    pub kind: String,
    pub seed: u64,
    /// SHA-256 of `config.json`, the effective configuration.
    pub config_sha256: String,
    /// SHA-256 of every other artifact, by file name.
    pub files: BTreeMap<String, String>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    let digest = Sha256::digest(bytes);
    digest.iter().fold(String::with_capacity(64), |mut s, b| {
        let _ = write!(s, "{b:02x}");
        s
    })
}

/// Canonical JSON text of the effective configuration.
pub fn config_text(cfg: &ExperimentConfig) -> String {
    let mut s = serde_json::to_string_pretty(cfg).expect("configuration serializes");
    s.push('\n');
    s
}

pub fn make_report(cfg: &ExperimentConfig, out: &RunOutput) -> Report {
    Report {
        kind: cfg.experiment.kind().to_string(),
        seed: cfg.seed,
        config_sha256: sha256_hex(config_text(cfg).as_bytes()),
        verdict: if out.passed() { "PASS" } else { "FAIL" }.to_string(),
        checks: out.checks.clone(),
        summary: out.summary.clone(),
    }
}

/// Plain-text rendering of a report.
pub fn render_text(report: &Report) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "experiment: {}", report.kind);
    let _ = writeln!(s, "seed: {}", report.seed);
    let _ = writeln!(s, "config sha256: {}", report.config_sha256);
    let _ = writeln!(s, "verdict: {}", report.verdict);
    if !report.checks.is_empty() {
        let _ = writeln!(s, "\nchecks:");
        for c in &report.checks {
            let _ = writeln!(
                s,
                "  {} {}: observed {} (criterion {})",
                if c.passed { "PASS" } else { "FAIL" },
                c.name,
                fmt_num(c.observed),
                c.criterion
            );
        }
    }
    if let Some(Value::Array(rank)) = report.summary.get("ranking") {
        let _ = writeln!(s, "\ngroups ranked by total effect:");
        for (i, g) in rank.iter().enumerate() {
            let name = g.get("group").and_then(Value::as_str).unwrap_or("?");
            let t = g.get("t_total").and_then(Value::as_f64).unwrap_or(f64::NAN);
            let _ = writeln!(s, "  {}. {name}  T = {}", i + 1, fmt_num(t));
        }
    }
    let scalars: Vec<(&String, &Value)> = report
        .summary
        .iter()
        .filter(|(_, v)| v.is_number() || v.is_string() || v.is_boolean())
        .collect();
    if !scalars.is_empty() {
        let _ = writeln!(s, "\nsummary:");
        for (k, v) in scalars {
            let text = match v {
                Value::Number(n) => n.as_f64().map_or_else(|| n.to_string(), fmt_num),
                Value::String(t) => t.clone(),
                other => other.to_string(),
            };
            let _ = writeln!(s, "  {k}: {text}");
        }
    }
    s
}

fn fmt_num(v: f64) -> String {
    if v.fract() == 0.0 && v.abs() < 1e15 {
        format!("{v:.0}")
    } else if v == 0.0 || (1e-3..1e5).contains(&v.abs()) {
        format!("{v:.6}")
    } else {
        format!("{v:.6e}")
    }
}

fn write_file(dir: &Path, name: &str, contents: &[u8]) -> Result<()> {
    let path = dir.join(name);
    std::fs::write(&path, contents).map_err(|e| CliError::io(&path, e))
}

/// A directory may be replaced only if it is empty or holds a previous run.
fn check_replaceable(dir: &Path) -> Result<()> {
    if !dir.exists() {
        return Ok(());
    }
    if !dir.is_dir() {
        return Err(CliError::Artifact(format!(
            "{} exists and is not a directory",
            dir.display()
        )));
    }
    let mut entries = std::fs::read_dir(dir).map_err(|e| CliError::io(dir, e))?;
    if entries.next().is_none() || dir.join(MANIFEST).is_file() {
        Ok(())
    } else {
        Err(CliError::Artifact(format!(
            "refusing to overwrite {}: it is not empty and holds no {MANIFEST}",
            dir.display()
        )))
    }
}

/// Writes the artifacts of a run to `dir` atomically and returns its report.
pub fn write_artifacts(dir: &Path, cfg: &ExperimentConfig, out: &RunOutput) -> Result<Report> {
    check_replaceable(dir)?;
    let name = dir
        .file_name()
        .ok_or_else(|| CliError::Artifact(format!("invalid output directory {}", dir.display())))?
        .to_string_lossy()
        .to_string();
    let parent = match dir.parent() {
        Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
        _ => PathBuf::from("."),
    };
    std::fs::create_dir_all(&parent).map_err(|e| CliError::io(&parent, e))?;
    let tmp = parent.join(format!(".{name}.partial-{}", std::process::id()));
    if tmp.exists() {
        std::fs::remove_dir_all(&tmp).map_err(|e| CliError::io(&tmp, e))?;
    }
    std::fs::create_dir(&tmp).map_err(|e| CliError::io(&tmp, e))?;
    let result = populate(&tmp, cfg, out).and_then(|report| {
        if dir.exists() {
            std::fs::remove_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
        }
        std::fs::rename(&tmp, dir).map_err(|e| CliError::io(dir, e))?;
        Ok(report)
    });
    if result.is_err() && tmp.exists() {
        let _ = std::fs::remove_dir_all(&tmp);
    }
    result
}

fn populate(dir: &Path, cfg: &ExperimentConfig, out: &RunOutput) -> Result<Report> {
    let report = make_report(cfg, out);
    let mut files = BTreeMap::new();
    let mut put = |name: &str, bytes: &[u8]| -> Result<()> {
        write_file(dir, name, bytes)?;
        files.insert(name.to_string(), sha256_hex(bytes));
        Ok(())
    };
    for (name, contents) in &out.files {
        put(name, contents.as_bytes())?;
    }
    let report_json = to_json(&report);
    put(REPORT_JSON, report_json.as_bytes())?;
    put(REPORT_TXT, render_text(&report).as_bytes())?;
    let config = config_text(cfg);
    write_file(dir, CONFIG_JSON, config.as_bytes())?;
    let manifest = Manifest {
        tool: "mfugsa".into(),
        tool_version: env!("CARGO_PKG_VERSION").into(),
        core_version: mfugsa_core::VERSION.into(),
        schema_version: cfg.schema_version,
        kind: report.kind.clone(),
        seed: cfg.seed,
        config_sha256: sha256_hex(config.as_bytes()),
        files,
    };
    write_file(dir, MANIFEST, to_json(&manifest).as_bytes())?;
    Ok(report)
}

pub fn to_json(v: &impl Serialize) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("value serializes");
    s.push('\n');
    s
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    serde_json::from_str(&text)
        .map_err(|e| CliError::Artifact(format!("{} is malformed: {e}", path.display())))
}

/// Consolidated view of an artifact directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub manifest: Manifest,
    pub report: Report,
    /// Files whose hash no longer matches the manifest.
    pub modified_files: Vec<String>,
    pub missing_files: Vec<String>,
}

impl Summary {
    pub fn intact(&self) -> bool {
        self.modified_files.is_empty() && self.missing_files.is_empty()
    }

    pub fn to_text(&self) -> String {
        let mut s = render_text(&self.report);
        let _ = writeln!(
            s,
            "\nartifacts: {} files, {}",
            self.manifest.files.len(),
            if self.intact() {
                "all hashes match the manifest".to_string()
            } else {
                format!(
                    "modified: [{}], missing: [{}]",
                    self.modified_files.join(", "),
                    self.missing_files.join(", ")
                )
            }
        );
        s
    }
}

/// Reads and verifies an artifact directory.
pub fn summarize(dir: &Path) -> Result<Summary> {
    let mpath = dir.join(MANIFEST);
    if !mpath.is_file() {
        return Err(CliError::Artifact(format!(
            "{} has no {MANIFEST}",
            dir.display()
        )));
    }
    let manifest: Manifest = read_json(&mpath)?;
    let report: Report = read_json(&dir.join(REPORT_JSON))?;
    let mut modified = Vec::new();
    let mut missing = Vec::new();
    for (name, hash) in &manifest.files {
        match std::fs::read(dir.join(name)) {
            Ok(bytes) => {
                if &sha256_hex(&bytes) != hash {
                    modified.push(name.clone());
                }
            }
            Err(_) => missing.push(name.clone()),
        }
    }
    Ok(Summary {
        manifest,
        report,
        modified_files: modified,
        missing_files: missing,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::{Experiment, GsaGenericConfig, SCHEMA_VERSION};

    fn cfg() -> ExperimentConfig {
        ExperimentConfig {
            schema_version: SCHEMA_VERSION,
            seed: 5,
            output_dir: None,
            experiment: Experiment::GsaGeneric(GsaGenericConfig::default()),
        }
    }

    #[test]
    fn sha256_known_value() {
        assert_eq!(
            sha256_hex(b"abc"),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
    }

    #[test]
    fn write_and_summarize() {
        let root = tempfile::tempdir().unwrap();
        let dir = root.path().join("run");
        let mut out = RunOutput::new();
        out.file("a.csv", "x\n1\n".into());
        out.set("value", 1.5);
        out.check("ok", true, 1.5, "> 1");
        let report = write_artifacts(&dir, &cfg(), &out).unwrap();
        assert_eq!(report.verdict, "PASS");
        let s = summarize(&dir).unwrap();
        assert!(s.intact());
        assert!(s.to_text().contains("PASS ok"));
        std::fs::write(dir.join("a.csv"), "tampered").unwrap();
        assert_eq!(summarize(&dir).unwrap().modified_files, vec!["a.csv"]);
        // Rewriting a previous run directory is allowed.
        write_artifacts(&dir, &cfg(), &out).unwrap();
        assert!(summarize(&dir).unwrap().intact());
        // No temporary directories are left behind.
        let leftovers: Vec<_> = std::fs::read_dir(root.path())
            .unwrap()
            .map(|e| e.unwrap().file_name())
            .collect();
        assert_eq!(leftovers.len(), 1);
    }

    #[test]
    fn refuses_foreign_directories() {
        let root = tempfile::tempdir().unwrap();
        std::fs::write(root.path().join("precious.txt"), "keep").unwrap();
        let err = write_artifacts(root.path(), &cfg(), &RunOutput::new()).unwrap_err();
        assert!(matches!(err, CliError::Artifact(_)));
        assert!(root.path().join("precious.txt").exists());
        assert!(matches!(
            summarize(root.path()),
            Err(CliError::Artifact(_))
        ));
    }
}
