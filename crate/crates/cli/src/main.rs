use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Parser, Subcommand};
use eqf_core::classify::{classify_invariance, decompose, reduce_group_affine_extension, Sampling};
use eqf_core::sim::{run_prepared, write_outputs, RunReport, RunStatus, Scenario};
use eqf_core::systems::{build_system, registry, SystemParams};
use eqf_core::Error;
use rayon::prelude::*;
use serde::Serialize;
use serde_json::json;

#[derive(Parser)]
#[command(
    name = "eqf",
    version,
    about = "Equivariant systems toolkit: classification, input extension and filter simulation"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct SamplingArgs {
    #[arg(long, default_value_t = 50)]
    samples: usize,
    #[arg(long, default_value_t = 1e-8)]
    tol: f64,
    #[arg(long, default_value_t = 42)]
    seed: u64,
}

impl SamplingArgs {
    fn sampling(&self) -> Sampling {
        Sampling::new(self.samples, self.tol, self.seed)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario and write records.csv and report.json.
    Sim {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Monte Carlo runs; run i uses seed + i.
        #[arg(long, default_value_t = 1)]
        runs: u64,
    },
    /// Classify the invariance of a registry system.
    Classify {
        #[arg(long)]
        system: String,
        #[arg(long)]
        alpha: Option<f64>,
        #[arg(long)]
        n: Option<usize>,
        #[command(flatten)]
        sampling: SamplingArgs,
    },
    /// Reduce the equivariant input extension of a group-affine system.
    Extend {
        #[arg(long)]
        system: String,
        #[arg(long)]
        alpha: Option<f64>,
        #[arg(long)]
        n: Option<usize>,
        #[command(flatten)]
        sampling: SamplingArgs,
    },
    /// List the built-in systems.
    ListSystems,
}

fn exit_code(err: &anyhow::Error) -> u8 {
    match err.downcast_ref::<Error>() {
        Some(
            Error::NotInvariant { .. }
            | Error::NotGroupAffine { .. }
            | Error::MissingInputAction(_)
            | Error::MissingAnalyticDerivative(_)
            | Error::RankInstability { .. }
            | Error::VerificationFailed(_),
        ) => 3,
        Some(
            Error::NotInAlgebra { .. }
            | Error::NotInGroup { .. }
            | Error::CutLocus { .. }
            | Error::ProjectionFailed(_)
            | Error::NumericBlowup(_),
        ) => 2,
        _ => 1,
    }
}

fn print_json<T: Serialize>(value: &T) -> anyhow::Result<()> {
    println!("{}", serde_json::to_string_pretty(value)?);
    Ok(())
}

fn sim(scenario: &Path, out: &Path, runs: u64) -> anyhow::Result<u8> {
    anyhow::ensure!(runs >= 1, "--runs must be at least 1");
    let base = Scenario::load(scenario).with_context(|| format!("cannot load scenario {}", scenario.display()))?;
    let prepared = base.prepare().context("invalid scenario")?;
    let n = prepared.spec.algebra_dim();

    if runs == 1 {
        let report = run_prepared(&prepared)?;
        write_outputs(&report, n, out)?;
        log::info!(
            "{}: rmse_tail {:.6} final_err {:.3e} in {:.3} s",
            report.system,
            report.rmse_tail,
            report.final_err,
            report.wall_time
        );
        return Ok(status_code(&report));
    }

    let reports: Vec<RunReport> = (0..runs)
        .into_par_iter()
        .map(|i| -> anyhow::Result<RunReport> {
            let seed = base.seed.wrapping_add(i);
            let mut prep = prepared.clone();
            prep.scenario = base.with_seed(seed);
            let report = run_prepared(&prep)?;
            write_outputs(&report, n, out.join(format!("run_{i:03}")))?;
            log::debug!("run {i} (seed {seed}): rmse_tail {:.6}", report.rmse_tail);
            Ok(report)
        })
        .collect::<anyhow::Result<_>>()?;

    let rmse: Vec<f64> = reports.iter().map(|r| r.rmse_tail).collect();
    let mean = rmse.iter().sum::<f64>() / rmse.len() as f64;
    let summary = json!({
        "runs": runs,
        "base_seed": base.seed,
        "rmse_tail_mean": mean,
        "rmse_tail_max": rmse.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
        "failed": reports.iter().filter(|r| r.status != RunStatus::Completed).count(),
        "reports": reports,
    });
    std::fs::write(out.join("summary.json"), serde_json::to_string_pretty(&summary)? + "\n")?;
    Ok(reports.iter().map(status_code).max().unwrap_or(0))
}

fn status_code(report: &RunReport) -> u8 {
    match report.status {
        RunStatus::Completed => 0,
        RunStatus::Failed { .. } => 2,
    }
}

fn dispatch(cli: Cli) -> anyhow::Result<u8> {
    match cli.command {
        Command::Sim { scenario, out, runs } => sim(&scenario, &out, runs),
        Command::Classify {
            system,
            alpha,
            n,
            sampling,
        } => {
            let sys = build_system(&system, &SystemParams { alpha, n })?;
            let s = sampling.sampling();
            let invariance = classify_invariance(&sys, &s)?;
            let decomposition = match decompose(&sys, &s) {
                Ok(d) => json!(d.summary()),
                Err(Error::NotInvariant { .. }) => serde_json::Value::Null,
                Err(e) => return Err(e.into()),
            };
            print_json(&json!({ "invariance": invariance, "decomposition": decomposition }))?;
            Ok(0)
        }
        Command::Extend {
            system,
            alpha,
            n,
            sampling,
        } => {
            let sys = build_system(&system, &SystemParams { alpha, n })?;
            let s = sampling.sampling();
            let reduction = reduce_group_affine_extension(&sys, &s)?;
            print_json(&reduction.summary(&s))?;
            Ok(0)
        }
        Command::ListSystems => {
            let entries: Vec<_> = registry()
                .iter()
                .map(|e| {
                    json!({
                        "id": e.id,
                        "group": e.group,
                        "doc": e.doc,
                        "expected": e.expected,
                        "equivariant": e.equivariant,
                    })
                })
                .collect();
            print_json(&entries)?;
            Ok(0)
        }
    }
}

fn init_logging() {
    let level = match std::env::var("EQF_LOG").as_deref() {
        Ok("info") => log::LevelFilter::Info,
        Ok("debug") => log::LevelFilter::Debug,
        _ => log::LevelFilter::Off,
    };
    env_logger::Builder::new()
        .filter_level(level)
        .target(env_logger::Target::Stderr)
        .init();
}

fn main() -> ExitCode {
    init_logging();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match dispatch(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
