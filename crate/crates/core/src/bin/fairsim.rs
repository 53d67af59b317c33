use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};
use fairfactory::scenario::{compare, write_violations, Artifacts, AuditChecks, Scenario};

#[derive(Parser)]
#[command(name = "fairsim", about = "Simulate and audit fair-ordering BFT protocols")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one scenario and write its artifacts.
    Run {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Sweep node counts in both pipeline modes and write comparison.csv.
    Compare {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long, value_delimiter = ',', default_value = "4,7,10,20")]
        nodes: Vec<usize>,
        #[arg(long, default_value_t = 3)]
        reps: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Re-audit a run directory. Without flags, the checks for the scenario's rule run.
    Audit {
        #[arg(long)]
        artifacts: PathBuf,
        /// Check γ-batch fairness at this γ.
        #[arg(long)]
        gamma: Option<f64>,
        /// Check that no f-robust median order was reversed.
        #[arg(long)]
        median: bool,
        /// Where to write the violations; defaults to stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn run(cli: Cli) -> Result<bool> {
    match cli.command {
        Command::Run { scenario, out } => {
            let s = Scenario::load(&scenario).with_context(|| format!("loading {}", scenario.display()))?;
            if let Some(w) = s.fault_bound_warning() {
                eprintln!("warning: {w}");
            }
            let result = s.run()?;
            result.write_artifacts(&out)?;
            let sum = result.summary();
            println!(
                "committed {}/{} messages in {} rounds, mean latency {:.1} ms, {} violations",
                sum.committed,
                sum.sent,
                sum.rounds_committed,
                sum.mean_latency_us.unwrap_or(f64::NAN) / 1e3,
                result.violations.len()
            );
            Ok(true)
        }
        Command::Compare { scenario, nodes, reps, out } => {
            let s = Scenario::load(&scenario).with_context(|| format!("loading {}", scenario.display()))?;
            std::fs::create_dir_all(&out)?;
            let cmp = compare(&s, &nodes, reps)?;
            cmp.write_csv(&out.join("comparison.csv"))?;
            for r in &cmp.reductions {
                println!(
                    "n={:<3} mean latency reduction {:5.1}%  throughput delta {:4.1}%",
                    r.nodes,
                    r.mean * 100.0,
                    r.throughput_delta * 100.0
                );
            }
            Ok(true)
        }
        Command::Audit { artifacts, gamma, median, out } => {
            let a = Artifacts::load(&artifacts).with_context(|| format!("loading {}", artifacts.display()))?;
            let checks = if gamma.is_some() || median {
                AuditChecks { gamma, median }
            } else {
                AuditChecks::for_rule(&a.scenario.rule)
            };
            let violations = a.audit(&checks);
            match out {
                Some(path) => write_violations(&path, &violations)?,
                None => {
                    for v in &violations {
                        println!("{},{},{},{}", v.kind.name(), v.pair.0.to_hex(), v.pair.1.to_hex(), v.evidence);
                    }
                }
            }
            eprintln!("{} violations", violations.len());
            Ok(violations.is_empty())
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
