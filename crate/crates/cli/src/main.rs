use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};
use kdrrf::bench::{generate_scenario, run_benchmark, scenario_suite, BenchConfig, GenConfig};
use kdrrf::execution::{run_trial, write_trajectory_jsonl, EpisodeResult, NoiseModel};
use kdrrf::planner::{strategy_names, ParamSet};
use kdrrf::render::{render_state, render_trajectory, write_svg};
use kdrrf::Scenario;

#[derive(Parser)]
#[command(name = "kdrrf", version, about = "Forest-based kinodynamic rearrangement planning")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a single episode.
    Plan(PlanArgs),
    /// Run a batch of seeded trials and report statistics.
    Bench(BenchArgs),
    /// Generate a random scenario file.
    Gen(GenArgs),
    /// Render a scenario or an episode to SVG.
    Render(RenderArgs),
}

#[derive(Args)]
struct Source {
    /// Scenario file; generated from --task and --seed when absent.
    #[arg(long)]
    scenario: Option<PathBuf>,
    #[arg(long, default_value = "sorting_regions")]
    task: String,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    paper_scale: bool,
}

impl Source {
    fn gen_config(&self) -> GenConfig {
        if self.paper_scale {
            GenConfig::paper(&self.task)
        } else {
            GenConfig::desk(&self.task)
        }
    }

    fn load(&self) -> anyhow::Result<Scenario> {
        match &self.scenario {
            Some(p) => Scenario::load(p).with_context(|| format!("loading {}", p.display())),
            None => Ok(generate_scenario(&self.task, &self.gen_config(), self.seed)?),
        }
    }
}

#[derive(Args)]
struct PlanArgs {
    #[command(flatten)]
    source: Source,
    #[arg(long, default_value = "kdrrf")]
    planner: String,
    /// Seconds; defaults to the scenario's execution budget.
    #[arg(long)]
    budget: Option<f64>,
    /// Positional observation noise in meters; defaults to the scenario's.
    #[arg(long)]
    noise: Option<f64>,
    /// Trajectory output, one JSON object per executed control.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Full episode result as JSON.
    #[arg(long)]
    result: Option<PathBuf>,
    #[arg(long)]
    svg: Option<PathBuf>,
}

#[derive(Args)]
struct BenchArgs {
    #[arg(long, default_value = "sorting_regions")]
    task: String,
    /// Planner to run; repeat for several. Defaults to all.
    #[arg(long)]
    planner: Vec<String>,
    #[arg(long, default_value_t = 50)]
    trials: usize,
    /// First scenario seed; trial i uses seed + i.
    #[arg(long, default_value_t = 1000)]
    seed: u64,
    #[arg(long)]
    budget: Option<f64>,
    #[arg(long, default_value_t = 0.0)]
    noise: f64,
    #[arg(long, default_value_t = 1)]
    jobs: usize,
    #[arg(long, default_value = "task_oriented")]
    root_sampling: String,
    /// Report JSON.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    paper_scale: bool,
}

#[derive(Args)]
struct GenArgs {
    #[arg(long, default_value = "sorting_regions")]
    task: String,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    noise: Option<f64>,
    #[arg(long)]
    paper_scale: bool,
    /// Written to stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct RenderArgs {
    #[command(flatten)]
    source: Source,
    /// Episode result JSON from `plan --result`.
    #[arg(long)]
    episode: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

/// Failure classes mapped to exit codes.
enum Failure {
    Usage(anyhow::Error),
    Infrastructure(anyhow::Error),
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure::Usage(e)
    }
}

fn write_out(path: Option<&Path>, text: &str) -> anyhow::Result<()> {
    match path {
        Some(p) => std::fs::write(p, text).with_context(|| format!("writing {}", p.display())),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn check_planner(name: &str) -> anyhow::Result<()> {
    if !strategy_names().contains(&name) {
        bail!("unknown planner `{name}`; expected one of {:?}", strategy_names());
    }
    Ok(())
}

fn plan(args: PlanArgs) -> Result<(), Failure> {
    check_planner(&args.planner)?;
    let mut s = args.source.load()?;
    if let Some(n) = args.noise {
        s.noise_sigma = n;
    }
    let budget = args.budget.unwrap_or(s.params.execution.budget);
    let params = s.params.planner.clone().with_algorithm(&args.planner);
    params.validate().map_err(anyhow::Error::from)?;
    let noise = NoiseModel::for_scenario(&s, 0);
    let result = run_trial(&s, &params, &noise, budget, 0).map_err(|e| Failure::Infrastructure(e.into()))?;
    if let Some(p) = &args.out {
        let mut w = BufWriter::new(File::create(p).with_context(|| format!("creating {}", p.display()))?);
        write_trajectory_jsonl(&result, &mut w)
            .and_then(|_| w.flush())
            .map_err(|e| Failure::Infrastructure(e.into()))?;
    }
    if let Some(p) = &args.result {
        let json = serde_json::to_string(&result).map_err(|e| Failure::Infrastructure(e.into()))?;
        write_out(Some(p), &json)?;
    }
    if let Some(p) = &args.svg {
        write_svg(p, &render_trajectory(&s, &result)).with_context(|| format!("writing {}", p.display()))?;
    }
    println!(
        "{}",
        serde_json::json!({
            "success": result.success,
            "failure": result.failure,
            "time": result.wall_time,
            "planning_time": result.planning_time,
            "actions": result.num_rearranging_actions,
            "segments": result.num_segments,
            "replanning_cycles": result.replanning_cycles,
        })
    );
    Ok(())
}

fn bench(args: BenchArgs) -> Result<(), Failure> {
    let planners: Vec<String> = if args.planner.is_empty() {
        strategy_names().iter().map(|s| s.to_string()).collect()
    } else {
        args.planner.clone()
    };
    for p in &planners {
        check_planner(p)?;
    }
    if args.trials == 0 {
        return Err(anyhow::anyhow!("--trials must be positive").into());
    }
    let gen = if args.paper_scale {
        GenConfig::paper(&args.task)
    } else {
        GenConfig::desk(&args.task)
    };
    let suite = scenario_suite(&args.task, &gen, args.trials, args.seed).map_err(anyhow::Error::from)?;
    let params = ParamSet {
        root_sampling: args.root_sampling.clone(),
        ..ParamSet::default()
    };
    params.validate().map_err(anyhow::Error::from)?;
    let cfg = BenchConfig {
        trials: args.trials,
        budget: args.budget.unwrap_or(gen.budget),
        noise_sigma: args.noise,
        jobs: args.jobs.max(1),
        params,
    };
    let names: Vec<&str> = planners.iter().map(String::as_str).collect();
    let report = run_benchmark(&suite, &names, &cfg);
    print!("{}", report.table());
    if let Some(p) = &args.out {
        write_out(Some(p), &report.to_json())?;
    }
    let broken: Vec<String> = report
        .rows
        .iter()
        .flat_map(|r| r.records.iter().filter(|t| t.reason.as_deref().is_some_and(is_error)))
        .map(|t| format!("trial {}: {}", t.trial, t.reason.as_deref().unwrap_or_default()))
        .collect();
    if !broken.is_empty() {
        return Err(Failure::Infrastructure(anyhow::anyhow!(broken.join("; "))));
    }
    Ok(())
}

/// Planning failures are outcomes; anything else is a broken trial.
fn is_error(reason: &str) -> bool {
    !matches!(reason, "BudgetExhausted" | "TransitFailures")
}

fn gen(args: GenArgs) -> Result<(), Failure> {
    let cfg = GenConfig {
        noise_sigma: args.noise.unwrap_or(0.0),
        ..if args.paper_scale {
            GenConfig::paper(&args.task)
        } else {
            GenConfig::desk(&args.task)
        }
    };
    let s = generate_scenario(&args.task, &cfg, args.seed).map_err(anyhow::Error::from)?;
    write_out(args.out.as_deref(), &(s.to_json() + "\n"))?;
    Ok(())
}

fn render(args: RenderArgs) -> Result<(), Failure> {
    let s = args.source.load()?;
    let svg = match &args.episode {
        Some(p) => {
            let text = std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            let result: EpisodeResult = serde_json::from_str(&text).context("parsing episode result")?;
            render_trajectory(&s, &result)
        }
        None => render_state(&s, &s.initial_state),
    };
    write_svg(&args.out, &svg).with_context(|| format!("writing {}", args.out.display()))?;
    Ok(())
}

fn main() -> ExitCode {
    env_logger::init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let outcome = match cli.command {
        Command::Plan(a) => plan(a),
        Command::Bench(a) => bench(a),
        Command::Gen(a) => gen(a),
        Command::Render(a) => render(a),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
        Err(Failure::Infrastructure(e)) => {
            log::error!("{e:#}");
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
