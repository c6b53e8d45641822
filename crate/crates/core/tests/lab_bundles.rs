use std::fs;
use std::path::Path;

use asclt_lab::lab::{self, ExperimentConfig, Report, CONFIG_FILE, SUMMARY_FILE};
use asclt_lab::Error;

const ZERO: &str = r#"
name = "zero"
seed = 1
system = { type = "Doubling" }
observable = { kind = "Constant", value = 0.0 }
law = { source = "Explicit", law = { type = "Dirac0" } }
[experiment]
kind = "ASCLT"
params = { n = 2000, seeds = 3 }
[[assert]]
stat = "median_ks"
op = "le"
value = 0.0
"#;

const CLT: &str = r#"
name = "clt"
seed = 7
system = { type = "Doubling" }
observable = { kind = "FourierSum", terms = [[1, 1.0]] }
law = { source = "Explicit", law = { type = "Gaussian", sigma2 = 0.5 } }
[experiment]
kind = "ClassicalCLT"
params = { n = 256, replicas = 400 }
[[assert]]
stat = "ks"
op = "le"
value = 0.2
"#;

fn cfg(text: &str) -> ExperimentConfig {
    ExperimentConfig::from_toml(text).unwrap()
}

fn failing(text: &str, name: &str) -> ExperimentConfig {
    let mut c = cfg(text);
    c.name = name.into();
    c.assertions[0].value = -1.0;
    c
}

fn csv_files(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out: Vec<_> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|x| x == "csv"))
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), fs::read(&p).unwrap()))
        .collect();
    out.sort();
    out
}

#[test]
fn zero_observable_gives_zero_ks_and_passes() {
    let tmp = tempfile::tempdir().unwrap();
    let s = lab::run_experiment(&cfg(ZERO), tmp.path()).unwrap();
    assert_eq!(s.stats["median_ks"], 0.0);
    assert_eq!(s.stats["max_ks"], 0.0);
    assert!(s.pass);
    let report = lab::report(tmp.path()).unwrap();
    assert!(report.all_pass);
    assert_eq!(report.rows.len(), 1);
    assert_eq!(report.rows[0].status, "PASS");
}

#[test]
fn malformed_law_is_a_config_error_with_path() {
    let bad = ZERO.replace(r#"{ type = "Dirac0" }"#, r#"{ type = "Gaussian", sigma2 = true }"#);
    match ExperimentConfig::from_toml(&bad) {
        Err(Error::Config { path, .. }) => assert!(path.starts_with("law"), "{path}"),
        other => panic!("expected a config error, got {other:?}"),
    }
}

#[test]
fn report_on_empty_dir_is_header_only() {
    let tmp = tempfile::tempdir().unwrap();
    let report = lab::report(tmp.path()).unwrap();
    assert!(report.rows.is_empty());
    assert!(report.all_pass);
    let text = fs::read_to_string(tmp.path().join("report.csv")).unwrap();
    assert_eq!(text.trim_end(), Report::HEADER.join(","));
}

#[test]
fn report_on_missing_dir_errors() {
    let tmp = tempfile::tempdir().unwrap();
    assert!(matches!(lab::report(&tmp.path().join("nope")), Err(Error::MissingBundle(_))));
}

#[test]
fn mixed_bundles_fail_overall() {
    let tmp = tempfile::tempdir().unwrap();
    lab::run_experiment(&cfg(ZERO), tmp.path()).unwrap();
    let s = lab::run_experiment(&failing(CLT, "clt-fail"), tmp.path()).unwrap();
    assert!(!s.pass);
    let report = lab::report(tmp.path()).unwrap();
    assert!(!report.all_pass);
    let statuses: Vec<_> = report.rows.iter().map(|r| (r.experiment.as_str(), r.status.as_str())).collect();
    assert_eq!(statuses, [("clt-fail", "FAIL"), ("zero", "PASS")]);
}

#[test]
fn missing_statistic_fails_its_check() {
    let tmp = tempfile::tempdir().unwrap();
    let mut c = cfg(ZERO);
    c.assertions[0].stat = "median_ks_early".into();
    let s = lab::run_experiment(&c, tmp.path()).unwrap();
    assert_eq!(s.checks[0].observed, None);
    assert!(!s.pass);
}

#[test]
fn tampered_config_is_refused() {
    let tmp = tempfile::tempdir().unwrap();
    lab::run_experiment(&cfg(CLT), tmp.path()).unwrap();
    let dir = tmp.path().join("clt");
    let path = dir.join(CONFIG_FILE);
    let text = fs::read_to_string(&path).unwrap().replace("seed = 7", "seed = 8");
    fs::write(&path, text).unwrap();
    assert!(matches!(lab::load_bundle(&dir), Err(Error::HashMismatch { .. })));
    assert!(matches!(lab::report(tmp.path()), Err(Error::HashMismatch { .. })));
}

#[test]
fn tampered_table_is_refused() {
    let tmp = tempfile::tempdir().unwrap();
    lab::run_experiment(&cfg(CLT), tmp.path()).unwrap();
    let dir = tmp.path().join("clt");
    let (name, bytes) = csv_files(&dir).remove(0);
    let text = String::from_utf8(bytes).unwrap();
    let (_, rest) = text.split_once('\n').unwrap();
    fs::write(dir.join(name), format!("# config_hash=deadbeef\n{rest}")).unwrap();
    assert!(matches!(lab::load_bundle(&dir), Err(Error::HashMismatch { .. })));
}

#[test]
fn tables_embed_the_summary_hash() {
    let tmp = tempfile::tempdir().unwrap();
    let s = lab::run_experiment(&cfg(CLT), tmp.path()).unwrap();
    let dir = tmp.path().join("clt");
    assert!(dir.join(SUMMARY_FILE).is_file());
    let files = csv_files(&dir);
    assert!(!files.is_empty());
    for (_, bytes) in files {
        let text = String::from_utf8(bytes).unwrap();
        assert_eq!(text.lines().next().unwrap(), format!("# config_hash={}", s.config_hash));
    }
}

#[test]
fn identical_config_gives_identical_tables() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    for text in [CLT, ZERO] {
        let c = cfg(text);
        let sa = lab::run_experiment(&c, a.path()).unwrap();
        let sb = lab::run_experiment(&c, b.path()).unwrap();
        assert_eq!(sa.config_hash, sb.config_hash);
        assert_eq!(sa.stats, sb.stats);
        assert_eq!(csv_files(&a.path().join(&c.name)), csv_files(&b.path().join(&c.name)));
    }
}

#[test]
fn resolved_config_reproduces_the_run() {
    let tmp = tempfile::tempdir().unwrap();
    let first = lab::run_experiment(&cfg(CLT), tmp.path()).unwrap();
    let resolved = ExperimentConfig::from_file(&tmp.path().join("clt").join(CONFIG_FILE)).unwrap();
    let again = tempfile::tempdir().unwrap();
    let second = lab::run_experiment(&resolved, again.path()).unwrap();
    assert_eq!(first.stats, second.stats);
    assert_eq!(first.config_hash, second.config_hash);
}
