//! `ikseed`: reachability maps, IK seed generation, solving and evaluation
//! as reproducible batch commands.
//!
//! Exit codes: 0 on success, 1 on domain failure (infeasible scenario,
//! unsolved IK), 2 on usage/config errors.

mod manifest;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context};
use clap::{Args, Parser, Subcommand};

use ikseed_core::eval::{evaluate_with_budget, fitness_vs_success, EvalReport, PerturbationSpec, SeedSet, SolverBudget};
use ikseed_core::ik::{solve, IkRequest, Tolerances};
use ikseed_core::reachability::{build_map, BuildOptions, GridParams};
use ikseed_core::scenario::Scenario;
use ikseed_core::seed::{evolve, goal_states, SeedResult};
use ikseed_core::Error as CoreError;

use manifest::RunManifest;

const DEG: f64 = std::f64::consts::PI / 180.0;

#[derive(Parser)]
#[command(name = "ikseed", version, about = "IK seed generation and evaluation toolkit")]
struct Cli {
    /// Cap on worker threads (falls back to IKSEED_THREADS, then all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build a reachability map for one arm of a robot model.
    BuildMap(BuildMapArgs),
    /// Run the GA seed generator on a scenario.
    GenSeed(GenSeedArgs),
    /// Solve a single IK request from a seed.
    Solve(SolveArgs),
    /// Evaluate seed sets by perturbed-target success ratios.
    Evaluate(EvaluateArgs),
}

#[derive(Args)]
struct BuildMapArgs {
    /// Robot model file.
    #[arg(long)]
    model: PathBuf,
    /// Arm id (a key of the model's `frames`).
    #[arg(long)]
    arm: String,
    /// Sampling interval for every non-wrist arm joint (radians/meters).
    #[arg(long, default_value_t = 2.0 * DEG)]
    interval: f64,
    /// Per-joint interval override, `name=value` (repeatable).
    #[arg(long = "interval-joint", value_name = "NAME=VALUE")]
    interval_joint: Vec<String>,
    /// Voxel cell extent (meters).
    #[arg(long, default_value_t = 0.05)]
    cell_size: f64,
    /// Voxel cell stride (meters); stride < size overlaps cells.
    #[arg(long, default_value_t = 0.025)]
    cell_stride: f64,
    /// Keep at most this many best-spread samples per cell.
    #[arg(long)]
    prune: Option<usize>,
    /// Output map file.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct GenSeedArgs {
    /// Scenario file.
    #[arg(long)]
    scenario: PathBuf,
    /// Output directory (created if missing).
    #[arg(long)]
    out: PathBuf,
    /// Override the scenario's GA rng seed.
    #[arg(long)]
    rng_seed: Option<u64>,
    /// Also write the best-known seed set as of this generation
    /// (repeatable).
    #[arg(long = "snapshot", value_name = "GENERATION")]
    snapshots: Vec<usize>,
}

#[derive(Args)]
struct SolveArgs {
    /// Robot model file.
    #[arg(long)]
    model: PathBuf,
    /// Frame to drive to the target.
    #[arg(long)]
    frame: String,
    /// Comma-separated joint names the solver may move.
    #[arg(long, value_delimiter = ',')]
    active: Vec<String>,
    /// Seed joint values, comma-separated, one per movable joint.
    #[arg(long, value_delimiter = ',', conflicts_with = "seed_file")]
    seed: Option<Vec<f64>>,
    /// Seed-set file written by gen-seed.
    #[arg(long)]
    seed_file: Option<PathBuf>,
    /// Goal label inside --seed-file (defaults to its first goal).
    #[arg(long)]
    goal: Option<String>,
    /// Target position `x,y,z` (meters).
    #[arg(long, value_delimiter = ',')]
    target_pos: Vec<f64>,
    /// Target orientation quaternion `w,x,y,z`.
    #[arg(long, value_delimiter = ',')]
    target_quat: Vec<f64>,
    #[arg(long, default_value_t = 1e-4)]
    pos_tol: f64,
    #[arg(long, default_value_t = 1e-3)]
    ori_tol: f64,
    #[arg(long, default_value_t = 200)]
    max_iterations: usize,
    #[arg(long, default_value_t = 1e-3)]
    damping: f64,
    #[arg(long, default_value_t = 1.0)]
    orientation_weight: f64,
}

#[derive(Args)]
struct EvaluateArgs {
    /// Scenario file.
    #[arg(long)]
    scenario: PathBuf,
    /// Seed-set files (comma-separated or repeated).
    #[arg(long, value_delimiter = ',', required = true)]
    seeds: Vec<PathBuf>,
    #[arg(long, default_value_t = 100)]
    trials: usize,
    /// ± position perturbation per axis (meters).
    #[arg(long, default_value_t = 0.07)]
    pos_range: f64,
    /// ± orientation perturbation per RPY axis (radians).
    #[arg(long, default_value_t = 5.0 * DEG)]
    ori_range: f64,
    #[arg(long, default_value_t = 0)]
    rng_seed: u64,
    /// Extra perturbation stream id.
    #[arg(long, default_value_t = 0)]
    rng_stream: u64,
    /// Online-solver iteration budget per IK call.
    #[arg(long, default_value_t = 200)]
    max_iterations: usize,
    /// Output directory (created if missing).
    #[arg(long)]
    out: PathBuf,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let threads = cli.threads.or_else(|| {
        std::env::var("IKSEED_THREADS")
            .ok()
            .and_then(|v| v.parse().ok())
    });
    let run = || match &cli.command {
        Command::BuildMap(args) => cmd_build_map(args),
        Command::GenSeed(args) => cmd_gen_seed(args),
        Command::Solve(args) => cmd_solve(args),
        Command::Evaluate(args) => cmd_evaluate(args),
    };
    let result = match threads {
        Some(n) if n > 0 => {
            match rayon::ThreadPoolBuilder::new().num_threads(n).build() {
                Ok(pool) => pool.install(run),
                Err(e) => Err(anyhow!("failed to build thread pool: {e}")),
            }
        }
        _ => run(),
    };
    match result {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err:#}");
            // Domain failures exit 1, config/usage problems exit 2.
            let domain = err.downcast_ref::<CoreError>().is_some_and(|e| {
                matches!(e, CoreError::Infeasible(_) | CoreError::MapChainMismatch)
            });
            if domain {
                ExitCode::from(1)
            } else {
                ExitCode::from(2)
            }
        }
    }
}

fn load_model(path: &Path) -> anyhow::Result<ikseed_core::KinematicChain> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("reading model `{}`", path.display()))?;
    Ok(ikseed_core::load_chain(&text)?)
}

fn cmd_build_map(args: &BuildMapArgs) -> anyhow::Result<ExitCode> {
    let chain = load_model(&args.model)?;
    let info = chain.arm(&args.arm)?;
    let mut intervals = vec![args.interval; info.non_wrist_movable.len()];
    for spec in &args.interval_joint {
        let (name, value) = spec
            .split_once('=')
            .ok_or_else(|| anyhow!("--interval-joint expects NAME=VALUE, got `{spec}`"))?;
        let value: f64 = value.parse().context("interval value")?;
        let pos = info
            .non_wrist_movable
            .iter()
            .position(|&m| chain.movable_joint(m).name == name)
            .ok_or_else(|| anyhow!("`{name}` is not a sampled joint of arm `{}`", args.arm))?;
        intervals[pos] = value;
    }
    let options = BuildOptions {
        grid: GridParams {
            cell_size: args.cell_size,
            cell_stride: args.cell_stride,
        },
        prune_per_cell: args.prune,
    };
    let map = build_map(&chain, &args.arm, &intervals, &options)?;
    if let Some(dir) = args.out.parent() {
        if !dir.as_os_str().is_empty() {
            std::fs::create_dir_all(dir)?;
        }
    }
    map.save(&args.out)?;
    println!(
        "built map for arm `{}`: {} samples in {} cells -> {}",
        args.arm,
        map.sample_count(),
        map.cell_count(),
        args.out.display()
    );

    let mut manifest = RunManifest::new(
        "build-map",
        serde_json::json!({
            "model": args.model.display().to_string(),
            "arm": args.arm,
            "intervals": intervals,
            "cell_size": args.cell_size,
            "cell_stride": args.cell_stride,
            "prune": args.prune,
            "out": args.out.display().to_string(),
            "samples": map.sample_count(),
        }),
    );
    manifest.add_input(&args.model)?;
    manifest.write(&manifest_path(&args.out))?;
    Ok(ExitCode::SUCCESS)
}

fn manifest_path(out: &Path) -> PathBuf {
    let mut name = out.file_name().unwrap_or_default().to_os_string();
    name.push(".manifest.json");
    out.with_file_name(name)
}

fn seed_set_for(
    scenario: &Scenario,
    label: &str,
    generation: usize,
    fitness: f64,
    gene: &[f64],
) -> anyhow::Result<SeedSet> {
    let goals = goal_states(scenario, gene)?;
    Ok(SeedSet {
        label: label.to_string(),
        fitness,
        generation: Some(generation),
        goals: goals
            .iter()
            .map(|g| ikseed_core::eval::SeedGoal {
                label: g.label.clone(),
                via_index: g.via_index,
                state: g.state.clone(),
            })
            .collect(),
    })
}

fn write_json(path: &Path, value: &impl serde::Serialize) -> anyhow::Result<()> {
    std::fs::write(path, serde_json::to_string_pretty(value)? + "\n")?;
    Ok(())
}

fn cmd_gen_seed(args: &GenSeedArgs) -> anyhow::Result<ExitCode> {
    let scenario = Scenario::load(&args.scenario)?;
    std::fs::create_dir_all(&args.out)?;
    let result: SeedResult = evolve(&scenario, args.rng_seed)?;

    write_json(&args.out.join("result.json"), &result)?;

    let mut csv = String::from("generation,best_fitness\n");
    for (i, f) in result.history.iter().enumerate() {
        csv.push_str(&format!("{},{}\n", i + 1, f));
    }
    std::fs::write(args.out.join("fitness_history.csv"), csv)?;

    let best_gen = result
        .improvements
        .last()
        .map(|i| i.generation)
        .unwrap_or(result.generations);
    let best = seed_set_for(&scenario, "best", best_gen, result.best_fitness, &result.best_gene)?;
    write_json(&args.out.join("seed_best.json"), &best)?;

    for &gen in &args.snapshots {
        let imp = result
            .improvement_at(gen)
            .ok_or_else(|| anyhow!("no solution recorded up to generation {gen}"))?;
        let set = seed_set_for(&scenario, &format!("gen{gen}"), gen, imp.fitness, &imp.gene)?;
        write_json(&args.out.join(format!("seed_gen{gen}.json")), &set)?;
    }

    println!(
        "seed generation done: best fitness {:.6e} at generation {} ({} generations run)",
        result.best_fitness, best_gen, result.generations
    );

    let mut manifest = RunManifest::new(
        "gen-seed",
        serde_json::json!({
            "scenario": args.scenario.display().to_string(),
            "out": args.out.display().to_string(),
            "snapshots": args.snapshots,
            "generations": result.generations,
            "best_fitness": result.best_fitness,
        }),
    );
    manifest.add_input(&args.scenario)?;
    manifest.add_seed("ga", args.rng_seed.unwrap_or(scenario.ga.rng_seed));
    manifest.write(&args.out.join("manifest.json"))?;
    Ok(ExitCode::SUCCESS)
}

fn cmd_solve(args: &SolveArgs) -> anyhow::Result<ExitCode> {
    let chain = load_model(&args.model)?;
    if args.target_pos.len() != 3 {
        bail!("--target-pos expects x,y,z");
    }
    if args.target_quat.len() != 4 {
        bail!("--target-quat expects w,x,y,z");
    }
    let target = ikseed_core::Pose::from_translation_quaternion(
        [args.target_pos[0], args.target_pos[1], args.target_pos[2]],
        [
            args.target_quat[0],
            args.target_quat[1],
            args.target_quat[2],
            args.target_quat[3],
        ],
    )?;
    let seed: Vec<f64> = match (&args.seed, &args.seed_file) {
        (Some(values), None) => values.clone(),
        (None, Some(path)) => {
            let set: SeedSet = serde_json::from_str(&std::fs::read_to_string(path)?)
                .context("parsing seed-set file")?;
            let goal = match &args.goal {
                Some(label) => set
                    .goals
                    .iter()
                    .find(|g| &g.label == label)
                    .ok_or_else(|| anyhow!("no goal labeled `{label}` in seed file"))?,
                None => set
                    .goals
                    .first()
                    .ok_or_else(|| anyhow!("seed file has no goals"))?,
            };
            goal.state.clone()
        }
        _ => bail!("provide exactly one of --seed or --seed-file"),
    };
    let active: Vec<usize> = args
        .active
        .iter()
        .map(|name| {
            chain
                .movable_index(name)
                .ok_or_else(|| anyhow!("unknown joint `{name}`"))
        })
        .collect::<anyhow::Result<_>>()?;

    let mut request = IkRequest::new(&chain, active, seed, &args.frame, target);
    request.tolerances = Tolerances {
        position: args.pos_tol,
        orientation: args.ori_tol,
    };
    request.max_iterations = args.max_iterations;
    request.damping = args.damping;
    request.orientation_weight = args.orientation_weight;
    let outcome = solve(&request)?;

    let mut manifest = RunManifest::new(
        "solve",
        serde_json::json!({
            "model": args.model.display().to_string(),
            "frame": args.frame,
            "active": args.active,
            "target_pos": args.target_pos,
            "target_quat": args.target_quat,
            "pos_tol": args.pos_tol,
            "ori_tol": args.ori_tol,
            "max_iterations": args.max_iterations,
        }),
    );
    manifest.add_input(&args.model)?;
    println!(
        "{}",
        serde_json::to_string_pretty(&serde_json::json!({
            "outcome": outcome,
            "manifest": manifest,
        }))?
    );
    if outcome.is_success() {
        Ok(ExitCode::SUCCESS)
    } else {
        Ok(ExitCode::from(1))
    }
}

/// Table rows: one per step, then whole-trajectory and totals.
fn report_csv(reports: &[EvalReport]) -> String {
    let mut out = String::from("step");
    for r in reports {
        out.push_str(&format!(
            ",{label} successes,{label} attempts,{label} ratio",
            label = r.label
        ));
    }
    out.push('\n');
    let n_steps = reports.first().map(|r| r.steps.len()).unwrap_or(0);
    for k in 0..n_steps {
        out.push_str(&k.to_string());
        for r in reports {
            let s = &r.steps[k];
            out.push_str(&format!(",{},{},{}", s.successes, s.attempts, s.ratio()));
        }
        out.push('\n');
    }
    out.push_str("whole_trajectory");
    for r in reports {
        out.push_str(&format!(
            ",{},{},{}",
            r.whole_trajectory_successes,
            r.trials,
            r.whole_trajectory_ratio()
        ));
    }
    out.push('\n');
    out.push_str("total");
    for r in reports {
        out.push_str(&format!(
            ",{},{},{}",
            r.total_successes,
            r.total_attempts,
            r.total_ratio()
        ));
    }
    out.push('\n');
    out
}

fn cmd_evaluate(args: &EvaluateArgs) -> anyhow::Result<ExitCode> {
    let scenario = Scenario::load(&args.scenario)?;
    let mut seed_sets = Vec::new();
    for path in &args.seeds {
        let set: SeedSet = serde_json::from_str(
            &std::fs::read_to_string(path)
                .with_context(|| format!("reading seed file `{}`", path.display()))?,
        )
        .with_context(|| format!("parsing seed file `{}`", path.display()))?;
        seed_sets.push(set);
    }
    let spec = PerturbationSpec {
        position_range: args.pos_range,
        orientation_range: args.ori_range,
        rng_stream: args.rng_stream,
    };
    let budget = SolverBudget {
        max_iterations: args.max_iterations,
        ..SolverBudget::default()
    };
    let reports = evaluate_with_budget(&scenario, &seed_sets, &spec, args.trials, args.rng_seed, budget)?;
    std::fs::create_dir_all(&args.out)?;

    std::fs::write(args.out.join("report.csv"), report_csv(&reports))?;

    let trend = if reports.len() >= 2 {
        Some(fitness_vs_success(&reports)?)
    } else {
        None
    };
    let enriched: Vec<serde_json::Value> = reports
        .iter()
        .map(|r| {
            serde_json::json!({
                "label": r.label,
                "fitness": r.fitness,
                "trials": r.trials,
                "steps": r.steps,
                "whole_trajectory_successes": r.whole_trajectory_successes,
                "whole_trajectory_ratio": r.whole_trajectory_ratio(),
                "total_successes": r.total_successes,
                "total_attempts": r.total_attempts,
                "total_ratio": r.total_ratio(),
                "total_ci95": r.total_ci(),
            })
        })
        .collect();
    write_json(
        &args.out.join("report.json"),
        &serde_json::json!({
            "trials": args.trials,
            "perturbation": spec,
            "reports": enriched,
            "trend": trend,
        }),
    )?;

    for r in &reports {
        println!(
            "{}: total {}/{} ({:.2}%), whole trajectory {}/{}",
            r.label,
            r.total_successes,
            r.total_attempts,
            100.0 * r.total_ratio(),
            r.whole_trajectory_successes,
            r.trials
        );
    }

    let mut manifest = RunManifest::new(
        "evaluate",
        serde_json::json!({
            "scenario": args.scenario.display().to_string(),
            "seeds": args.seeds.iter().map(|p| p.display().to_string()).collect::<Vec<_>>(),
            "trials": args.trials,
            "pos_range": args.pos_range,
            "ori_range": args.ori_range,
            "max_iterations": args.max_iterations,
            "out": args.out.display().to_string(),
        }),
    );
    manifest.add_input(&args.scenario)?;
    for path in &args.seeds {
        manifest.add_input(path)?;
    }
    manifest.add_seed("perturbation", args.rng_seed);
    manifest.write(&args.out.join("manifest.json"))?;
    Ok(ExitCode::SUCCESS)
}
