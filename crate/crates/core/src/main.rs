use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use asclt_lab::lab::{self, ExperimentConfig, Report};
use asclt_lab::Result;

#[derive(Parser)]
#[command(name = "asclt-lab", version, about = "Almost-sure limit theorem laboratory")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a config file, every `*.toml` in a directory, or a preset by name.
    Run {
        config: String,
        /// Worker threads (default: all cores).
        #[arg(long, env = "ASCLT_LAB_THREADS")]
        threads: Option<usize>,
        /// Root directory for result bundles.
        #[arg(long, default_value = "results")]
        out: PathBuf,
    },
    /// Consolidated table of the bundles in a directory.
    Report { dir: PathBuf },
    /// List the shipped presets, or write them out as TOML files.
    Presets {
        #[arg(long)]
        write: Option<PathBuf>,
    },
}

fn configs_from(arg: &str) -> Result<Vec<ExperimentConfig>> {
    let path = Path::new(arg);
    if path.is_dir() {
        let mut files: Vec<PathBuf> = std::fs::read_dir(path)?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "toml"))
            .collect();
        files.sort();
        return files.iter().map(|f| ExperimentConfig::from_file(f)).collect();
    }
    if !path.exists() {
        if let Some(p) = lab::preset(arg) {
            return Ok(vec![p.config()?]);
        }
    }
    Ok(vec![ExperimentConfig::from_file(path)?])
}

fn run(config: &str, threads: Option<usize>, out: &Path) -> Result<bool> {
    if let Some(n) = threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| asclt_lab::Error::InvalidParameter(e.to_string()))?;
    }
    let configs = configs_from(config)?;
    let mut summaries = Vec::with_capacity(configs.len());
    for c in &configs {
        eprintln!("running {} ({})", c.name, c.experiment.kind());
        let s = lab::run_experiment(c, out)?;
        eprintln!("  {} in {:.1}s", if s.pass { "PASS" } else { "FAIL" }, s.runtime_secs);
        summaries.push(s);
    }
    let report = Report::from_summaries(&summaries);
    print!("{}", report.to_text());
    Ok(report.all_pass)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run {
            config,
            threads,
            out,
        } => run(&config, threads, &out),
        Command::Report { dir } => lab::report(&dir).map(|r| {
            print!("{}", r.to_text());
            r.all_pass
        }),
        Command::Presets { write } => match write {
            Some(dir) => lab::write_presets(&dir).map(|_| true),
            None => {
                for p in lab::PRESETS {
                    println!("{:<28} {}", p.name, p.description());
                }
                Ok(true)
            }
        },
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
