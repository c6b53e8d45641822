use std::collections::BTreeMap;
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::config::{Cmp, ExperimentConfig, LawSpec};
use super::run::{execute, resolve, Outcome, Table};
use crate::error::{Error, Result};
use crate::laws::TargetLaw;

pub const CONFIG_FILE: &str = "config.resolved.toml";
pub const SUMMARY_FILE: &str = "summary.json";
const HASH_PREFIX: &str = "# config_hash=";

/// One evaluated assertion.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckResult {
    pub stat: String,
    pub op: Cmp,
    pub value: f64,
    /// `None` when the run did not produce the statistic.
    pub observed: Option<f64>,
    pub pass: bool,
}

/// Contents of `summary.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub name: String,
    pub kind: String,
    pub seed: u64,
    pub config_hash: String,
    pub target_law: Option<TargetLaw>,
    pub runtime_secs: f64,
    pub stats: BTreeMap<String, f64>,
    pub checks: Vec<CheckResult>,
    pub pass: bool,
    pub files: Vec<String>,
}

/// Hex SHA-256 of the resolved config text.
pub fn config_hash(text: &str) -> String {
    hex::encode(Sha256::digest(text.as_bytes()))
}

fn evaluate(config: &ExperimentConfig, outcome: &Outcome) -> Vec<CheckResult> {
    config
        .assertions
        .iter()
        .map(|a| {
            let observed = outcome.stats.get(&a.stat).copied().filter(|v| v.is_finite());
            CheckResult {
                stat: a.stat.clone(),
                op: a.op,
                value: a.value,
                observed,
                pass: observed.is_some_and(|v| a.op.holds(v, a.value)),
            }
        })
        .collect()
}

fn write_table(dir: &Path, hash: &str, table: &Table) -> Result<()> {
    let mut file = fs::File::create(dir.join(&table.file))?;
    writeln!(file, "{HASH_PREFIX}{hash}")?;
    let mut w = csv::Writer::from_writer(file);
    w.write_record(&table.header)?;
    for row in &table.rows {
        w.write_record(row.iter().map(|v| v.to_string()))?;
    }
    w.flush()?;
    Ok(())
}

/// Resolves, executes and persists one experiment under `out_root/<name>/`.
pub fn run_experiment(config: &ExperimentConfig, out_root: &Path) -> Result<Summary> {
    config.validate()?;
    let start = Instant::now();
    let resolved = resolve(config)?;
    let outcome = execute(&resolved)?;
    let runtime_secs = start.elapsed().as_secs_f64();
    let text = resolved.to_toml()?;
    let hash = config_hash(&text);
    let dir = out_root.join(&config.name);
    fs::create_dir_all(&dir)?;
    fs::write(dir.join(CONFIG_FILE), &text)?;
    for t in &outcome.tables {
        write_table(&dir, &hash, t)?;
    }
    let checks = evaluate(&resolved, &outcome);
    let summary = Summary {
        name: config.name.clone(),
        kind: config.experiment.kind().into(),
        seed: config.seed,
        config_hash: hash,
        target_law: match resolved.law {
            Some(LawSpec::Explicit { law }) => Some(law),
            _ => None,
        },
        runtime_secs,
        stats: outcome.stats.into_iter().filter(|(_, v)| v.is_finite()).collect(),
        pass: checks.iter().all(|c| c.pass),
        checks,
        files: outcome.tables.iter().map(|t| t.file.clone()).collect(),
    };
    fs::write(dir.join(SUMMARY_FILE), serde_json::to_string_pretty(&summary)?)?;
    Ok(summary)
}

/// Reads a bundle and verifies every embedded config hash.
pub fn load_bundle(dir: &Path) -> Result<Summary> {
    let summary_path = dir.join(SUMMARY_FILE);
    let config_path = dir.join(CONFIG_FILE);
    for p in [&summary_path, &config_path] {
        if !p.is_file() {
            return Err(Error::MissingBundle(p.display().to_string()));
        }
    }
    let summary: Summary = serde_json::from_str(&fs::read_to_string(&summary_path)?)?;
    let found = config_hash(&fs::read_to_string(&config_path)?);
    if found != summary.config_hash {
        return Err(Error::HashMismatch {
            file: config_path.display().to_string(),
            expected: summary.config_hash,
            found,
        });
    }
    for f in &summary.files {
        let path = dir.join(f);
        let file = fs::File::open(&path).map_err(|_| Error::MissingBundle(path.display().to_string()))?;
        let mut first = String::new();
        BufReader::new(file).read_line(&mut first)?;
        let found = first.trim_end().strip_prefix(HASH_PREFIX).unwrap_or("").to_string();
        if found != summary.config_hash {
            return Err(Error::HashMismatch {
                file: path.display().to_string(),
                expected: summary.config_hash,
                found,
            });
        }
    }
    Ok(summary)
}

/// Bundles found at `dir` itself or one level below, sorted by path.
pub fn find_bundles(dir: &Path) -> Result<Vec<PathBuf>> {
    if !dir.is_dir() {
        return Err(Error::MissingBundle(dir.display().to_string()));
    }
    if dir.join(SUMMARY_FILE).exists() {
        return Ok(vec![dir.to_path_buf()]);
    }
    let mut out: Vec<PathBuf> = fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_dir() && (p.join(SUMMARY_FILE).exists() || p.join(CONFIG_FILE).exists()))
        .collect();
    out.sort();
    Ok(out)
}

/// One line of the consolidated table.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReportRow {
    pub experiment: String,
    pub kind: String,
    pub target_law: String,
    pub statistic: String,
    pub observed: String,
    pub tolerance: String,
    pub status: String,
    pub runtime_secs: String,
    pub seed: u64,
}

#[derive(Debug, Clone, Default)]
pub struct Report {
    pub rows: Vec<ReportRow>,
    pub all_pass: bool,
}

fn law_label(law: &Option<TargetLaw>) -> String {
    match law {
        None => "-".into(),
        Some(TargetLaw::Dirac0) => "Dirac0".into(),
        Some(TargetLaw::Gaussian { sigma2 }) => format!("N(0,{sigma2:.6})"),
        Some(TargetLaw::Stable { p, c, beta }) => format!("Stable({p},{c:.6},{beta})"),
    }
}

fn fmt_value(v: f64) -> String {
    if v != 0.0 && (v.abs() < 1e-3 || v.abs() >= 1e6) {
        format!("{v:.3e}")
    } else {
        format!("{v:.6}")
    }
}

impl Report {
    pub fn from_summaries(summaries: &[Summary]) -> Self {
        let mut rows = Vec::new();
        for s in summaries {
            let base = |statistic: String, observed: String, tolerance: String, status: &str| ReportRow {
                experiment: s.name.clone(),
                kind: s.kind.clone(),
                target_law: law_label(&s.target_law),
                statistic,
                observed,
                tolerance,
                status: status.into(),
                runtime_secs: format!("{:.1}", s.runtime_secs),
                seed: s.seed,
            };
            if s.checks.is_empty() {
                rows.push(base("-".into(), "-".into(), "-".into(), "PASS"));
            }
            for c in &s.checks {
                rows.push(base(
                    c.stat.clone(),
                    c.observed.map_or("missing".into(), fmt_value),
                    format!("{} {}", c.op.symbol(), c.value),
                    if c.pass { "PASS" } else { "FAIL" },
                ));
            }
        }
        Report {
            rows,
            all_pass: summaries.iter().all(|s| s.pass),
        }
    }

    pub const HEADER: [&'static str; 9] = [
        "experiment",
        "kind",
        "target_law",
        "statistic",
        "observed",
        "tolerance",
        "status",
        "runtime_s",
        "seed",
    ];

    fn cells(r: &ReportRow) -> [String; 9] {
        [
            r.experiment.clone(),
            r.kind.clone(),
            r.target_law.clone(),
            r.statistic.clone(),
            r.observed.clone(),
            r.tolerance.clone(),
            r.status.clone(),
            r.runtime_secs.clone(),
            r.seed.to_string(),
        ]
    }

    /// Aligned plain-text table.
    pub fn to_text(&self) -> String {
        let body: Vec<[String; 9]> = self.rows.iter().map(Self::cells).collect();
        let mut widths: Vec<usize> = Self::HEADER.iter().map(|h| h.len()).collect();
        for r in &body {
            for (w, c) in widths.iter_mut().zip(r) {
                *w = (*w).max(c.len());
            }
        }
        let line = |cells: Vec<&str>| {
            cells
                .iter()
                .zip(&widths)
                .map(|(c, w)| format!("{c:<w$}"))
                .collect::<Vec<_>>()
                .join("  ")
                .trim_end()
                .to_string()
        };
        let mut out = line(Self::HEADER.to_vec());
        out.push('\n');
        for r in &body {
            out.push_str(&line(r.iter().map(|s| s.as_str()).collect()));
            out.push('\n');
        }
        out
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(Self::HEADER)?;
        for r in &self.rows {
            w.write_record(Self::cells(r))?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Loads every bundle under `dir` and writes `report.csv` next to them.
pub fn report(dir: &Path) -> Result<Report> {
    let summaries = find_bundles(dir)?
        .iter()
        .map(|d| load_bundle(d))
        .collect::<Result<Vec<_>>>()?;
    let report = Report::from_summaries(&summaries);
    report.write_csv(fs::File::create(dir.join("report.csv"))?)?;
    Ok(report)
}
