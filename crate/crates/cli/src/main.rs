use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use mspro::experiment::{
    build_investment_consumption, reward_scale, rows_to_csv, run_with_policy, summarize, summary_to_csv, sweep,
    tree_for, ExperimentConfig, Market, Model, SweepParam,
};
use mspro::multistage::{
    check_time_consistency, evaluate_policy_worst_case, solve_counterexample_with_step, EvalMode, Policy,
};
use mspro::tree::{generate_synthetic, ScenarioTree};

#[derive(Parser)]
#[command(name = "mspro", version, about = "Multistage preference-robust investment and consumption")]
struct Cli {
    /// TOML file with experiment settings; flags override it.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Fill the `ms` column with wall-clock times.
    #[arg(long, global = true)]
    timing: bool,
    /// More log output (repeat for more).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic scenario tree.
    GenTree {
        #[arg(long, value_delimiter = ',')]
        branching: Option<Vec<usize>>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Solve one model for every seed.
    Solve {
        #[command(flatten)]
        run: RunArgs,
        /// Write the policy of the first seed here.
        #[arg(long)]
        policy_out: Option<PathBuf>,
    },
    /// Solve for a list of values of one parameter.
    Sweep {
        #[arg(long, value_parser = parse_param)]
        param: SweepParam,
        #[arg(long, value_delimiter = ',', required = true)]
        values: Vec<f64>,
        #[command(flatten)]
        run: RunArgs,
        /// Mean and standard deviation per value.
        #[arg(long)]
        summary: Option<PathBuf>,
    },
    /// Print the two-stage time-inconsistency example; exits with 1 on mismatch.
    Counterexample {
        #[arg(long, default_value_t = 1e-3)]
        step: f64,
    },
    /// Worst-case value of a stored policy on the investment model.
    Eval {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long)]
        policy: PathBuf,
        #[arg(long, value_enum, default_value_t = Mode::Nested)]
        mode: Mode,
        /// Also re-solve every subtree and report discrepancies.
        #[arg(long)]
        consistency: bool,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    Nested,
    SequenceGlobal,
}

#[derive(Args, Default)]
struct RunArgs {
    #[arg(long)]
    tree: Option<PathBuf>,
    #[arg(long, value_parser = parse_model)]
    model: Option<Model>,
    #[arg(long)]
    radius: Option<f64>,
    #[arg(long)]
    breakpoints: Option<usize>,
    #[arg(long)]
    questions: Option<usize>,
    #[arg(long, value_delimiter = ',')]
    branching: Option<Vec<usize>>,
    #[arg(long, value_delimiter = ',')]
    seeds: Option<Vec<u64>>,
    #[arg(long)]
    tree_seed: Option<u64>,
    #[arg(long)]
    reward_scale: Option<f64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

fn parse_model(s: &str) -> Result<Model, String> {
    s.parse().map_err(|e: mspro::Error| e.to_string())
}

fn parse_param(s: &str) -> Result<SweepParam, String> {
    s.parse().map_err(|e: mspro::Error| e.to_string())
}

type CliResult<T> = Result<T, Box<dyn std::error::Error>>;

fn base_config(cli: &Cli) -> CliResult<ExperimentConfig> {
    let mut cfg = match &cli.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::default(),
    };
    cfg.timing |= cli.timing;
    Ok(cfg)
}

fn apply(cfg: &mut ExperimentConfig, run: &RunArgs) -> CliResult<()> {
    if let Some(t) = &run.tree {
        cfg.tree = Some(t.clone());
    }
    if let Some(m) = run.model {
        cfg.model = m;
    }
    if let Some(r) = run.radius {
        cfg.radius = r;
    }
    if let Some(n) = run.breakpoints {
        cfg.breakpoints = n;
    }
    if let Some(k) = run.questions {
        cfg.questions = k;
    }
    if let Some(b) = &run.branching {
        cfg.branching = b.clone();
        cfg.horizon = None;
    }
    if let Some(s) = &run.seeds {
        cfg.seeds = s.clone();
    }
    if run.tree_seed.is_some() {
        cfg.tree_seed = run.tree_seed;
    }
    if run.reward_scale.is_some() {
        cfg.reward_scale = run.reward_scale;
    }
    if let Some(o) = &run.out {
        cfg.output = Some(o.clone());
    }
    cfg.validate()?;
    Ok(())
}

fn emit(text: &str, path: Option<&Path>) -> CliResult<()> {
    match path {
        Some(p) => std::fs::write(p, text).map_err(|e| format!("{}: {e}", p.display()).into()),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn note_scale(cfg: &ExperimentConfig, tree: &ScenarioTree) -> CliResult<()> {
    match cfg.reward_scale {
        Some(c) => eprintln!("note: rewards divided by C = {c} (given)"),
        None => {
            let market = Market::locate(tree, cfg)?;
            let c = reward_scale(tree, &market, cfg.initial_wealth);
            eprintln!("note: rewards divided by C = {c} (computed from the wealth bounds of the tree)");
        }
    }
    Ok(())
}

fn run(cli: &Cli) -> CliResult<ExitCode> {
    match &cli.command {
        Command::GenTree { branching, seed, out } => {
            let mut cfg = base_config(cli)?;
            if let Some(b) = branching {
                cfg.branching = b.clone();
            }
            let tree = generate_synthetic(&cfg.branching, &cfg.synthetic, *seed)?;
            emit(&tree.to_json(), out.as_deref())?;
        }
        Command::Solve { run, policy_out } => {
            let mut cfg = base_config(cli)?;
            apply(&mut cfg, run)?;
            note_scale(&cfg, &tree_for(&cfg, cfg.seeds[0])?)?;
            let mut rows = Vec::new();
            for (i, &seed) in cfg.seeds.iter().enumerate() {
                let (mut row, policy) = run_with_policy(&cfg, seed)?;
                row.run_id = i;
                if i == 0 {
                    if let Some(p) = policy_out {
                        let tree = tree_for(&cfg, seed)?;
                        emit(&policy.to_csv(&tree), Some(p))?;
                    }
                }
                rows.push(row);
            }
            emit(&rows_to_csv(&rows), cfg.output.as_deref())?;
        }
        Command::Sweep { param, values, run, summary } => {
            let mut cfg = base_config(cli)?;
            apply(&mut cfg, run)?;
            let rows = sweep(&cfg, *param, values)?;
            emit(&rows_to_csv(&rows), cfg.output.as_deref())?;
            if let Some(p) = summary {
                emit(&summary_to_csv(&summarize(&rows, *param, values)), Some(p))?;
            }
        }
        Command::Counterexample { step } => {
            let report = solve_counterexample_with_step(*step)?;
            print!("{report}");
            if !report.all_pass() {
                eprintln!("counterexample values do not match");
                return Ok(ExitCode::from(1));
            }
        }
        Command::Eval { run, policy, mode, consistency } => {
            let mut cfg = base_config(cli)?;
            apply(&mut cfg, run)?;
            let tree = tree_for(&cfg, cfg.seeds[0])?;
            let problem = build_investment_consumption(&tree, &cfg)?;
            let text = std::fs::read_to_string(policy).map_err(|e| format!("{}: {e}", policy.display()))?;
            let decisions = Policy::decisions_from_csv(&text, tree.len())?;
            let mode = match mode {
                Mode::Nested => EvalMode::Nested,
                Mode::SequenceGlobal => EvalMode::SequenceGlobal,
            };
            let value = evaluate_policy_worst_case(&problem, &decisions, mode)?;
            println!("value,{value}");
            if *consistency {
                let policy = Policy { decisions, value, per_node: Default::default(), lp_objective: None };
                let report = check_time_consistency(&problem, &policy, 1e-6)?;
                println!("node,stage,subtree_optimal,policy_value,discrepancy");
                for e in &report.entries {
                    println!("{},{},{},{},{}", e.node, e.stage, e.subtree_optimal, e.policy_value, e.discrepancy);
                }
                println!("max_discrepancy,{}", report.max_discrepancy);
                println!("consistent,{}", report.is_consistent());
            }
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(&cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
