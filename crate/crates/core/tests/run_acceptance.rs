//! Runs the shipped preset(s) for each of the thirteen acceptance criteria
//! and prints one PASS/FAIL line per criterion. Long-running by design.

use asclt_lab::lab::{self, Summary};

/// Wall-clock budget per criterion, in seconds.
const BUDGET: [(u32, f64); 13] = [
    (1, 120.0),
    (2, 600.0),
    (3, 900.0),
    (4, 300.0),
    (5, 60.0),
    (6, 900.0),
    (7, 1800.0),
    (8, 120.0),
    (9, 180.0),
    (10, 60.0),
    (11, 600.0),
    (12, 600.0),
    (13, 300.0),
];

fn detail(s: &Summary) -> String {
    s.checks
        .iter()
        .map(|c| {
            let obs = c.observed.map_or("missing".to_string(), |v| format!("{v:.4e}"));
            let mark = if c.pass { "ok" } else { "FAIL" };
            format!("{} {} {} {:e} [{mark}]", c.stat, obs, c.op.symbol(), c.value)
        })
        .collect::<Vec<_>>()
        .join("; ")
}

#[test]
fn acceptance_criteria() {
    let out = tempfile::tempdir().unwrap();
    let mut failed = Vec::new();
    for (criterion, budget) in BUDGET {
        let presets = lab::presets_for_criterion(criterion);
        assert!(!presets.is_empty(), "no preset for criterion {criterion}");
        let mut pass = true;
        let mut runtime = 0.0;
        let mut lines = Vec::new();
        for p in presets {
            let s = lab::run_experiment(&p.config().unwrap(), out.path()).unwrap();
            pass &= s.pass;
            runtime += s.runtime_secs;
            lines.push(format!("    {}: {}", p.name, detail(&s)));
        }
        let in_budget = runtime <= budget;
        let ok = pass && in_budget;
        println!(
            "criterion {criterion:>2}: {} ({runtime:.1}s of {budget:.0}s budget)",
            if ok { "PASS" } else { "FAIL" }
        );
        for l in lines {
            println!("{l}");
        }
        if !ok {
            failed.push(criterion);
        }
    }
    let report = lab::report(out.path()).unwrap();
    print!("{}", report.to_text());
    assert!(failed.is_empty(), "failing criteria: {failed:?}");
}
