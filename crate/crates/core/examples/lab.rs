//! Runs a small experiment through the config-driven lab and reads the
//! bundle back.

use asclt_lab::lab::{report, run_experiment, ExperimentConfig};

const CONFIG: &str = r#"
name = "demo-clt"
seed = 42
system = { type = "Doubling" }
observable = { kind = "FourierSum", terms = [[1, 1.0]] }
law = { source = "Explicit", law = { type = "Gaussian", sigma2 = 0.5 } }

[experiment]
kind = "ClassicalCLT"
params = { n = 4096, replicas = 4000 }

[[assert]]
stat = "ks"
op = "le"
value = 0.05
"#;

fn main() -> asclt_lab::Result<()> {
    let out = std::env::temp_dir().join("asclt-lab-demo");
    let config = ExperimentConfig::from_toml(CONFIG)?;
    let summary = run_experiment(&config, &out)?;
    println!("{} -> {}", summary.name, out.join(&summary.name).display());
    print!("{}", report(&out)?.to_text());
    Ok(())
}
