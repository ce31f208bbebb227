use std::fs;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use log::{error, info, warn};
use qnetsec_core::engine;
use qnetsec_core::monitor::CertScope;
use qnetsec_core::report::{aggregate, build_report, diff_reports, DiffError, RenderedRun};
use qnetsec_core::scenario::{Scenario, ScenarioError};
use rayon::prelude::*;
use serde_json::Value;

const EXIT_INVALID: u8 = 2;
const EXIT_CONTRADICTION: u8 = 3;

#[derive(Parser)]
#[command(name = "qnetsec", version, about = "Attack simulator for quantum repeater networks")]
struct Cli {
    /// error, warn, info, debug or trace
    #[arg(long, global = true, default_value = "warn")]
    log_level: log::LevelFilter,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Scope {
    Link,
    E2e,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario and write events.csv and report.json.
    Run {
        #[arg(long)]
        scenario: PathBuf,
        /// Overrides the seed in the scenario file.
        #[arg(long, conflicts_with = "seeds")]
        seed: Option<u64>,
        /// Seed sweep: `a..b` (inclusive) or a comma list.
        #[arg(long)]
        seeds: Option<String>,
        #[arg(long)]
        out: PathBuf,
        /// Honest-run report.json to compare availability against.
        #[arg(long)]
        baseline: Option<PathBuf>,
        #[arg(long, value_enum)]
        cert_scope: Option<Scope>,
    },
    /// Ledger and throughput deltas from report A to report B.
    Diff {
        a: PathBuf,
        b: PathBuf,
        /// Compare reports of different scenarios.
        #[arg(long)]
        force: bool,
    },
    /// Check a scenario against every structural rule.
    Validate {
        #[arg(long)]
        scenario: PathBuf,
    },
    /// Print the normalized scenario document.
    Dump {
        #[arg(long)]
        scenario: PathBuf,
    },
}

/// Failure carrying its exit code.
struct Exit(u8, anyhow::Error);

impl<E: Into<anyhow::Error>> From<E> for Exit {
    fn from(e: E) -> Self {
        Exit(1, e.into())
    }
}

fn invalid(e: impl Into<anyhow::Error>) -> Exit {
    Exit(EXIT_INVALID, e.into())
}

fn parse_seeds(text: &str) -> Result<Vec<u64>> {
    if let Some((a, b)) = text.split_once("..") {
        let b = b.strip_prefix('=').unwrap_or(b);
        let (a, b): (u64, u64) = (a.trim().parse()?, b.trim().parse()?);
        if a > b {
            bail!("empty seed range {text}");
        }
        return Ok((a..=b).collect());
    }
    let seeds = text.split(',').map(|s| s.trim().parse::<u64>()).collect::<Result<Vec<_>, _>>()?;
    if seeds.is_empty() {
        bail!("no seeds given");
    }
    Ok(seeds)
}

fn load(path: &Path) -> Result<Scenario, Exit> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display())).map_err(invalid)?;
    Scenario::from_json(&text).map_err(|e| {
        if let ScenarioError::Invalid(v) = &e {
            for x in &v.violations {
                eprintln!("{}: {}: {}", x.rule, x.subject, x.message);
            }
        }
        let rules = e.rules().join(", ");
        Exit(EXIT_INVALID, anyhow::Error::new(e).context(format!("invalid scenario [{rules}]")))
    })
}

fn read_json(path: &Path) -> Result<Value, Exit> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display())).map_err(invalid)?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display())).map_err(invalid)
}

fn simulate(sc: &Scenario, seed: u64) -> Result<RenderedRun, Exit> {
    let start = Instant::now();
    let out = catch_unwind(AssertUnwindSafe(|| engine::run(sc, seed)))
        .map_err(|_| Exit(EXIT_CONTRADICTION, anyhow::anyhow!("engine invariant violated on seed {seed}")))?;
    let rendered = build_report(sc, out, start.elapsed().as_secs_f64());
    let problems = rendered.report.contradictions();
    if !problems.is_empty() {
        for p in &problems {
            error!("seed {seed}: {p}");
        }
        return Err(Exit(EXIT_CONTRADICTION, anyhow::anyhow!("runtime contradiction on seed {seed}")));
    }
    let a = &rendered.report.cia_ledger.availability;
    info!("seed {seed}: {} delivered at {:.1} Hz, {} events", a.delivered_pairs, a.delivered_rate_hz, rendered.report.event_count);
    Ok(rendered)
}

fn write_run(dir: &Path, run: &RenderedRun) -> Result<(), Exit> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    fs::write(dir.join("events.csv"), &run.events_csv)?;
    fs::write(dir.join("report.json"), run.report.to_json())?;
    Ok(())
}

fn cmd_run(
    scenario: &Path,
    seed: Option<u64>,
    seeds: Option<&str>,
    out: &Path,
    baseline: Option<&Path>,
    scope: Option<Scope>,
) -> Result<(), Exit> {
    let mut sc = load(scenario)?;
    if let Some(s) = scope {
        sc = sc.with_cert_scope(match s {
            Scope::Link => CertScope::Link,
            Scope::E2e => CertScope::E2e,
        });
    }
    let baseline = baseline.map(read_json).transpose()?;
    let sweep = seeds.map(parse_seeds).transpose().map_err(invalid)?;
    let seed_list = sweep.clone().unwrap_or_else(|| vec![seed.unwrap_or(sc.seed)]);
    let mut runs = seed_list.par_iter().map(|s| simulate(&sc, *s)).collect::<Result<Vec<_>, Exit>>()?;
    if let Some(b) = &baseline {
        for r in &mut runs {
            r.report.set_baseline(b).map_err(|e| invalid(anyhow::anyhow!(e)))?;
        }
    }
    match sweep {
        None => write_run(out, &runs[0])?,
        Some(_) => {
            for r in &runs {
                write_run(&out.join(format!("seed-{}", r.report.seed)), r)?;
            }
            let reports: Vec<_> = runs.into_iter().map(|r| r.report).collect();
            let agg = serde_json::to_string_pretty(&aggregate(&reports))? + "\n";
            fs::write(out.join("aggregate.json"), agg)?;
        }
    }
    Ok(())
}

fn cmd_diff(a: &Path, b: &Path, force: bool) -> Result<(), Exit> {
    let (ra, rb) = (read_json(a)?, read_json(b)?);
    match diff_reports(&ra, &rb, force) {
        Ok(d) => {
            if !d.same_scenario {
                warn!("comparing reports of different scenarios");
            }
            println!("{}", serde_json::to_string_pretty(&d)?);
            Ok(())
        }
        Err(e @ DiffError::FingerprintMismatch { .. }) | Err(e @ DiffError::NotAReport(_)) => Err(invalid(e)),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    env_logger::Builder::new().filter_level(cli.log_level).format_timestamp(None).init();
    let result = match &cli.command {
        Command::Run { scenario, seed, seeds, out, baseline, cert_scope } => {
            cmd_run(scenario, *seed, seeds.as_deref(), out, baseline.as_deref(), *cert_scope)
        }
        Command::Diff { a, b, force } => cmd_diff(a, b, *force),
        Command::Validate { scenario } => load(scenario).map(|sc| println!("ok {}", sc.fingerprint())),
        Command::Dump { scenario } => load(scenario).map(|sc| println!("{}", sc.normalized_json())),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Exit(code, e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(code)
        }
    }
}
