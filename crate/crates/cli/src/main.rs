use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};
use skillbo_core::harness::{
    build_tree, default_configuration, load_results, prepare, replay, run_learning, HarnessError, RunResult,
    ScenarioConfig,
};
use skillbo_core::skills::SkillRegistry;
use skillbo_core::space::ParamValue;

#[derive(Parser)]
#[command(
    name = "skillbo",
    version,
    about = "Plan, learn and replay parameterized robot skills"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Plan a scenario and write domain.pddl, problem.pddl and plan.toml.
    Plan {
        scenario: PathBuf,
        /// Print the assembled behavior tree.
        #[arg(long)]
        show_bt: bool,
        /// Output directory.
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
    /// Learn skill parameters with multi-objective Bayesian optimization.
    Learn(LearnArgs),
    /// Show or export the Pareto fronts of a results file.
    Pareto {
        results: PathBuf,
        /// Print every front (default).
        #[arg(long)]
        list: bool,
        /// Write the fronts as CSV to a file (`-` for stdout).
        #[arg(long, value_name = "FILE")]
        export: Option<PathBuf>,
    },
    /// Re-execute a stored trial.
    Replay {
        results: PathBuf,
        #[arg(long)]
        trial: usize,
        /// World seeds; defaults to the trial's own.
        #[arg(long, value_delimiter = ',', num_args = 1..)]
        seeds: Option<Vec<u64>>,
        /// Write the episode trace as CSV.
        #[arg(long, value_name = "FILE")]
        record: Option<PathBuf>,
        /// Scenario file, if not the one recorded in the results.
        #[arg(long)]
        scenario: Option<PathBuf>,
    },
}

#[derive(Args)]
struct LearnArgs {
    scenario: PathBuf,
    #[arg(long)]
    iterations: Option<usize>,
    #[arg(long)]
    repeats: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads for world evaluation.
    #[arg(long)]
    jobs: Option<usize>,
    /// Results file; defaults to `<scenario>.results.jsonl`.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, short)]
    quiet: bool,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 3 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            let code = e
                .downcast_ref::<HarnessError>()
                .map(HarnessError::exit_code)
                .unwrap_or(1);
            ExitCode::from(code as u8)
        }
    }
}

fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::Plan { scenario, show_bt, out } => plan(&scenario, show_bt, &out),
        Command::Learn(args) => learn(args),
        Command::Pareto { results, list, export } => pareto(&results, list, export.as_deref()),
        Command::Replay {
            results,
            trial,
            seeds,
            record,
            scenario,
        } => replay_trial(&results, trial, seeds, record.as_deref(), scenario.as_deref()),
    }
}

fn plan(scenario: &Path, show_bt: bool, out: &Path) -> anyhow::Result<()> {
    let cfg = ScenarioConfig::load(scenario)?;
    let prepared = prepare(&cfg)?;
    std::fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    std::fs::write(out.join("domain.pddl"), prepared.domain.to_string())?;
    std::fs::write(out.join("problem.pddl"), prepared.problem.to_string())?;
    std::fs::write(out.join("plan.toml"), prepared.plan_toml(&cfg.model.name))?;
    println!("plan ({} steps):", prepared.calls.len());
    for (i, c) in prepared.calls.iter().enumerate() {
        println!("  {}. {c}", i + 1);
    }
    println!("learnable parameters: {}", prepared.space.len());
    for p in &prepared.space.params {
        println!("  {}", p.name);
    }
    if show_bt {
        let registry = SkillRegistry::builtin();
        let config = default_configuration(&cfg, &prepared);
        let tree = build_tree(&cfg, &prepared, &registry, &config)?;
        print!("{}", tree.dump());
    }
    Ok(())
}

fn learn(args: LearnArgs) -> anyhow::Result<()> {
    let mut cfg = ScenarioConfig::load(&args.scenario)?;
    if let Some(n) = args.iterations {
        cfg.learning.iterations = n;
    }
    if let Some(k) = args.repeats {
        cfg.learning.repeats = k;
    }
    if let Some(s) = args.seed {
        cfg.learning.seed = s;
    }
    if let Some(j) = args.jobs {
        cfg.learning.jobs = j;
    }
    cfg.validate()?;
    let out = args.out.unwrap_or_else(|| {
        let stem = args.scenario.file_stem().and_then(|s| s.to_str()).unwrap_or("run");
        PathBuf::from(format!("{stem}.results.jsonl"))
    });
    let registry = SkillRegistry::builtin();
    let quiet = args.quiet;
    let run = run_learning(&cfg, &registry, &out, &mut |p| {
        if !quiet {
            println!(
                "repeat {} iteration {:>4} trial {:>5} success {:>5.1}%",
                p.repeat,
                p.iteration,
                p.trial,
                100.0 * p.success_rate
            );
        }
    })?;
    for (repeat, front) in run.front_trials() {
        println!("repeat {repeat}: Pareto front of {} trials", front.len());
    }
    println!("results: {}", out.display());
    Ok(())
}

fn format_config(values: &[ParamValue]) -> String {
    let cells: Vec<String> = values
        .iter()
        .map(|v| match v {
            ParamValue::Real(x) => format!("{x:.6}"),
            ParamValue::Integer(i) => i.to_string(),
            ParamValue::Label(s) => s.clone(),
        })
        .collect();
    cells.join(" ")
}

fn pareto(results: &Path, _list: bool, export: Option<&Path>) -> anyhow::Result<()> {
    let run = load_results(results)?;
    match export {
        Some(path) => {
            let mut w: Box<dyn Write> = if path.as_os_str() == "-" {
                Box::new(std::io::stdout())
            } else {
                Box::new(std::fs::File::create(path).with_context(|| format!("creating {}", path.display()))?)
            };
            export_csv(&run, &mut w)?;
        }
        None => list(&run),
    }
    Ok(())
}

fn list(run: &RunResult) {
    let names: Vec<&str> = run.objectives.iter().map(|o| o.name.as_str()).collect();
    println!("scenario {} ({} trials)", run.scenario, run.trials.len());
    for (repeat, front) in run.front_trials() {
        println!("repeat {repeat}: {} Pareto-optimal trials", front.len());
        println!(
            "  {:>6} {:>5}  {}  success  parameters",
            "trial",
            "iter",
            names.join(" ")
        );
        for t in front {
            let objectives: Vec<String> = t.objectives.iter().map(|v| format!("{v:.3}")).collect();
            let rate = run.success_rate(t.id).unwrap_or(0.0);
            println!(
                "  {:>6} {:>5}  {}  {:>6.1}%  {}",
                t.id,
                t.iteration,
                objectives.join(" "),
                100.0 * rate,
                format_config(&t.config)
            );
        }
    }
}

fn export_csv(run: &RunResult, w: &mut dyn Write) -> std::io::Result<()> {
    let mut header = vec![
        "repeat".to_string(),
        "trial".into(),
        "iteration".into(),
        "success_rate".into(),
    ];
    header.extend(run.objectives.iter().map(|o| o.name.clone()));
    header.extend(run.parameters.iter().cloned());
    writeln!(w, "{}", header.join(","))?;
    for (repeat, front) in run.front_trials() {
        for t in front {
            let mut row = vec![
                repeat.to_string(),
                t.id.to_string(),
                t.iteration.to_string(),
                format!("{}", run.success_rate(t.id).unwrap_or(0.0)),
            ];
            row.extend(t.objectives.iter().map(|v| format!("{v}")));
            row.extend(t.config.iter().map(|v| match v {
                ParamValue::Real(x) => format!("{x}"),
                ParamValue::Integer(i) => i.to_string(),
                ParamValue::Label(s) => s.clone(),
            }));
            writeln!(w, "{}", row.join(","))?;
        }
    }
    Ok(())
}

fn replay_trial(
    results: &Path,
    trial: usize,
    seeds: Option<Vec<u64>>,
    record: Option<&Path>,
    scenario: Option<&Path>,
) -> anyhow::Result<()> {
    let run = load_results(results)?;
    let source = match scenario {
        Some(p) => p.to_path_buf(),
        None => PathBuf::from(
            run.source
                .clone()
                .ok_or_else(|| HarnessError::Config("results name no scenario file; pass --scenario".into()))?,
        ),
    };
    let cfg = ScenarioConfig::load(&source)?;
    let registry = SkillRegistry::builtin();
    let episodes = replay(&cfg, &registry, &run, trial, seeds.as_deref())?;
    let mut successes = 0;
    for e in &episodes {
        let ok = e.outcome.succeeded();
        successes += ok as usize;
        let objectives: Vec<String> = e.outcome.objectives.values.iter().map(|v| format!("{v:.3}")).collect();
        let note = e
            .outcome
            .trace
            .aborted
            .as_deref()
            .map(|m| format!(" (aborted: {m})"))
            .unwrap_or_default();
        println!(
            "seed {:>20}  {:<8} objectives {}{note}",
            e.seed,
            if ok { "success" } else { "failure" },
            objectives.join(" ")
        );
    }
    println!(
        "trial {trial}: {successes}/{} successful ({:.1}%)",
        episodes.len(),
        100.0 * successes as f64 / episodes.len().max(1) as f64
    );
    if let Some(path) = record {
        for (i, e) in episodes.iter().enumerate() {
            let target = if episodes.len() == 1 {
                path.to_path_buf()
            } else {
                numbered(path, i)
            };
            let file = std::fs::File::create(&target).with_context(|| format!("creating {}", target.display()))?;
            e.outcome.trace.write_csv(std::io::BufWriter::new(file))?;
            println!("trace written to {}", target.display());
        }
    }
    Ok(())
}

/// `out.csv` -> `out-3.csv`.
fn numbered(path: &Path, i: usize) -> PathBuf {
    let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("trace");
    let name = match path.extension().and_then(|e| e.to_str()) {
        Some(ext) => format!("{stem}-{i}.{ext}"),
        None => format!("{stem}-{i}"),
    };
    path.with_file_name(name)
}
