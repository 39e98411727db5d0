use std::io;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use fogsched::experiment::{run_experiment, summarize_cdf, write_csv, ExperimentOutcome};
use fogsched::scenario::{load_scenario, ScenarioFile};
use fogsched::{DurationFamily, PolicyKind};

#[derive(Parser)]
#[command(
    name = "fogsched",
    version,
    about = "Fog offloading policies: simulation and exact evaluation"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario and emit one CSV row per (network, policy, h, distribution).
    Simulate(Box<SimulateArgs>),
    /// Print a scenario (file or preset) as normalized JSON.
    Show {
        #[arg(long)]
        scenario: PathBuf,
    },
}

#[derive(clap::Args)]
struct SimulateArgs {
    /// Scenario file, or one of the presets fig1, fig2, fig3.
    #[arg(long)]
    scenario: PathBuf,
    /// pier, ptr, plpc or all; may be repeated or comma separated.
    #[arg(long, value_delimiter = ',')]
    policy: Vec<String>,
    /// Scaling values, e.g. `--h 1,2,3`.
    #[arg(long, value_delimiter = ',')]
    h: Vec<u32>,
    /// exp, det or pareto:SHAPE; may be repeated or comma separated.
    #[arg(long, value_delimiter = ',')]
    dist: Vec<DurationFamily>,
    #[arg(long)]
    replications: Option<usize>,
    #[arg(long)]
    max_replications: Option<usize>,
    #[arg(long)]
    horizon: Option<f64>,
    #[arg(long)]
    warmup: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    /// Also compute exact and optimal ratios where the state space allows.
    #[arg(long)]
    oracle: bool,
    /// Number of random networks, for scenarios with a `random` block.
    #[arg(long)]
    count: Option<usize>,
    #[arg(long)]
    workers: Option<usize>,
    /// CSV destination; standard output when absent.
    #[arg(long)]
    output: Option<PathBuf>,
}

fn parse_policies(names: &[String]) -> Result<Vec<PolicyKind>, String> {
    let mut out = Vec::new();
    for n in names {
        let kinds = if n.eq_ignore_ascii_case("all") {
            PolicyKind::ALL.to_vec()
        } else {
            vec![n.parse::<PolicyKind>().map_err(|e| e.to_string())?]
        };
        for k in kinds {
            if !out.contains(&k) {
                out.push(k);
            }
        }
    }
    Ok(out)
}

fn apply_overrides(s: &mut ScenarioFile, a: SimulateArgs) -> Result<(), String> {
    let exp = &mut s.experiment;
    if !a.policy.is_empty() {
        exp.policies = parse_policies(&a.policy)?;
    }
    if !a.h.is_empty() {
        exp.h = a.h;
    }
    if !a.dist.is_empty() {
        exp.distributions = a.dist;
    }
    if let Some(n) = a.replications {
        exp.replications = n;
        exp.max_replications = exp.max_replications.max(n);
    }
    if let Some(n) = a.max_replications {
        exp.max_replications = n;
    }
    if a.horizon.is_some() {
        exp.horizon = a.horizon;
        if a.warmup.is_none() {
            exp.warmup = None;
        }
    }
    if a.warmup.is_some() {
        exp.warmup = a.warmup;
    }
    if let Some(seed) = a.seed {
        exp.seed = seed;
    }
    exp.oracle |= a.oracle;
    if a.workers.is_some() {
        exp.workers = a.workers;
    }
    exp.output = a.output;
    if let Some(count) = a.count {
        match &mut s.random {
            Some(r) => r.count = count,
            None => return Err("--count needs a scenario with a `random` block".into()),
        }
    }
    Ok(())
}

fn report(outcome: &ExperimentOutcome) {
    let rows = &outcome.rows;
    eprintln!(
        "{} cells, {} missed the CI criterion, {} failed",
        rows.len(),
        outcome.ci_failures(),
        outcome.errors()
    );
    for r in rows.iter().filter(|r| !r.error.is_empty()) {
        eprintln!(
            "  {} {} h={} {}: {}",
            r.scenario, r.policy, r.h, r.distribution, r.error
        );
    }
    for other in [PolicyKind::Ptr, PolicyKind::Plpc] {
        let pairs = outcome.ratio_pairs(other);
        if !pairs.is_empty() {
            let s = summarize_cdf(&pairs);
            eprintln!(
                "pier beats {other} in {:.1}% of {} pairs",
                100.0 * s.win_fraction,
                pairs.len()
            );
        }
    }
}

fn simulate(args: SimulateArgs) -> Result<ExitCode, String> {
    let mut scenario = load_scenario(&args.scenario).map_err(|e| e.to_string())?;
    apply_overrides(&mut scenario, args)?;
    let outcome = run_experiment(&scenario).map_err(|e| e.to_string())?;
    if scenario.experiment.output.is_none() {
        write_csv(&outcome.rows, io::stdout().lock()).map_err(|e| e.to_string())?;
    }
    report(&outcome);
    Ok(ExitCode::from(outcome.exit_code() as u8))
}

fn main() -> ExitCode {
    // Usage errors exit with 1; status 2 is reserved for CI failures.
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    let result = match cli.command {
        Command::Simulate(args) => simulate(*args),
        Command::Show { scenario } => load_scenario(&scenario)
            .map(|s| {
                println!("{}", s.to_json());
                ExitCode::SUCCESS
            })
            .map_err(|e| e.to_string()),
    };
    result.unwrap_or_else(|e| {
        eprintln!("error: {e}");
        ExitCode::from(1)
    })
}
