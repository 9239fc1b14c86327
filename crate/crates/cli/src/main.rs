use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use mapforge::binder::{format_space_size, resolve, DecisionSpace, Resolved};
use mapforge::dsl::{self, Diagnostic};
use mapforge::feedback::{classify, enhance, render, FeedbackLevel, Outcome, RuleSet};
use mapforge::machine::MachineModel;
use mapforge::search::aggregate::aggregate;
use mapforge::search::strategy::by_name;
use mapforge::search::trajectory::{to_csv, to_svg};
use mapforge::search::{run, RunSpec, Trajectory};
use mapforge::sim::config::{parse_costs, parse_machine};
use mapforge::sim::{load_app, load_costs, load_machine, simulate, AppDescriptor, ConfigError, CostParams, SimResult};

const BUNDLED_MACHINE: &str = include_str!("../../../corpus/config/p100-cluster.machine");
const BUNDLED_COSTS: &str = include_str!("../../../corpus/config/default.costs");

const OK: u8 = 0;
const USER_ERROR: u8 = 1;
const IO_ERROR: u8 = 2;
const EXEC_ERROR: u8 = 3;

#[derive(Parser)]
#[command(name = "mapforge", version, about = "Check, simulate and search task mappers")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Parse and validate a mapper.
    Check { mapper: PathBuf },
    /// Run a mapper on an application in the cost simulator.
    Simulate {
        #[arg(long)]
        app: PathBuf,
        #[arg(long)]
        mapper: PathBuf,
        #[command(flatten)]
        env: EnvArgs,
        /// system, system+explain or system+explain+suggest
        #[arg(long, default_value = "system")]
        feedback_level: String,
    },
    /// Search for a mapper.
    Optimize {
        #[arg(long)]
        app: PathBuf,
        #[command(flatten)]
        env: EnvArgs,
        /// random, hillclimb, exhaustive or external
        #[arg(long, default_value = "hillclimb")]
        strategy: String,
        #[arg(long, default_value_t = 10)]
        iters: usize,
        #[arg(long, default_value_t = 5)]
        seeds: u64,
        /// system, system+explain or system+explain+suggest
        #[arg(long, default_value = "system+explain+suggest")]
        level: String,
        /// Trajectory CSV; standard output when absent.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Mapper whose score normalizes the results.
        #[arg(long)]
        baseline: Option<PathBuf>,
        /// Chart of mean normalized best score per iteration.
        #[arg(long)]
        svg: Option<PathBuf>,
        /// Write the best mapper found here.
        #[arg(long)]
        best: Option<PathBuf>,
        /// Write every rendered feedback message here, per seed and iteration.
        #[arg(long)]
        feedback_out: Option<PathBuf>,
        /// Seeds run in parallel.
        #[arg(long, default_value_t = 1)]
        jobs: usize,
        /// Endpoint of the external optimizer; defaults to $MAPFORGE_ADAPTER.
        #[arg(long)]
        adapter_url: Option<String>,
    },
    /// Print the size of an application's search space.
    Space {
        #[arg(long)]
        app: PathBuf,
        #[arg(long)]
        machine: Option<PathBuf>,
        /// Also list every dimension.
        #[arg(long)]
        dims: bool,
    },
}

#[derive(Args)]
struct EnvArgs {
    /// Defaults to the bundled two-node P100 cluster.
    #[arg(long)]
    machine: Option<PathBuf>,
    /// Defaults to the bundled cost parameters.
    #[arg(long)]
    costs: Option<PathBuf>,
    /// Defaults to the bundled feedback rules.
    #[arg(long)]
    rules: Option<PathBuf>,
}

/// A failure with its exit code.
struct Fail(u8, String);

impl From<ConfigError> for Fail {
    fn from(e: ConfigError) -> Self {
        Fail(if e.io { IO_ERROR } else { USER_ERROR }, e.to_string())
    }
}

type CmdResult = Result<u8, Fail>;

fn read(path: &Path) -> Result<String, Fail> {
    std::fs::read_to_string(path).map_err(|e| Fail(IO_ERROR, format!("{}: {e}", path.display())))
}

fn bundled(what: &str, problems: Vec<String>) -> Fail {
    Fail(
        USER_ERROR,
        format!("bundled {what} is invalid: {}", problems.join("; ")),
    )
}

fn machine(path: Option<&Path>) -> Result<MachineModel, Fail> {
    match path {
        Some(p) => Ok(load_machine(p)?),
        None => parse_machine(BUNDLED_MACHINE).map_err(|p| bundled("machine", p)),
    }
}

fn costs(path: Option<&Path>) -> Result<CostParams, Fail> {
    match path {
        Some(p) => Ok(load_costs(p)?),
        None => parse_costs(BUNDLED_COSTS).map_err(|p| bundled("costs", p)),
    }
}

fn rules(path: Option<&Path>) -> Result<RuleSet, Fail> {
    match path {
        Some(p) => Ok(RuleSet::load(p)?),
        None => Ok(RuleSet::bundled()),
    }
}

fn level(s: &str) -> Result<FeedbackLevel, Fail> {
    s.parse().map_err(|e| Fail(USER_ERROR, e))
}

fn diagnostics(file: &Path, diags: &[Diagnostic]) -> String {
    let name = file.display().to_string();
    diags.iter().map(|d| d.render(&name)).collect::<Vec<_>>().join("\n")
}

fn cmd_check(mapper: &Path) -> CmdResult {
    let source = read(mapper)?;
    let name = mapper.display().to_string();
    let program = match dsl::parse(&source) {
        Ok(p) => p,
        Err(diags) => return Err(Fail(USER_ERROR, diagnostics(mapper, &diags))),
    };
    let diags = dsl::validate(&program);
    for d in diags.iter().filter(|d| !d.is_error()) {
        eprintln!("{}", d.render(&name));
    }
    let errors: Vec<Diagnostic> = diags.into_iter().filter(Diagnostic::is_error).collect();
    if errors.is_empty() {
        println!("{name}: ok ({} statements)", program.statements.len());
        Ok(OK)
    } else {
        Err(Fail(USER_ERROR, diagnostics(mapper, &errors)))
    }
}

/// Loads, checks and binds a mapper for `app`.
fn bind(mapper: &Path, app: &AppDescriptor, machine: &MachineModel) -> Result<Resolved, Fail> {
    let source = read(mapper)?;
    let program = dsl::check(&source).map_err(|d| Fail(USER_ERROR, diagnostics(mapper, &d)))?;
    resolve(&program, app, machine).map_err(|d| Fail(USER_ERROR, diagnostics(mapper, &d)))
}

fn key_values(r: &SimResult) -> Vec<String> {
    let mut lines = vec![
        "status=ok".to_string(),
        format!("wall_time={}", r.wall_time),
        format!("throughput={}", r.throughput),
        format!("gflops={}", r.gflops()),
        format!("total_flops={}", r.total_flops),
        format!("comm_time={}", r.comm_time),
        format!("inter_node_bytes={}", r.inter_node_bytes),
        format!("intra_node_bytes={}", r.intra_node_bytes),
    ];
    for (task, secs) in &r.compute_time {
        lines.push(format!("compute_time.{task}={secs}"));
    }
    for ((node, mem), bytes) in &r.peak_memory {
        lines.push(format!("peak_memory.{node}.{mem}={bytes}"));
    }
    lines
}

fn cmd_simulate(app: &Path, mapper: &Path, env: &EnvArgs, feedback_level: &str) -> CmdResult {
    let level = level(feedback_level)?;
    let app = load_app(app)?;
    let machine = machine(env.machine.as_deref())?;
    let costs = costs(env.costs.as_deref())?;
    let rules = rules(env.rules.as_deref())?;
    let resolved = bind(mapper, &app, &machine)?;
    println!("app: {}", app.name);
    println!("machine: {}", machine.name);
    println!("mapper: {}", mapper.display());
    match simulate(&app, &resolved.table, &resolved.library, &machine, &costs) {
        Ok(r) => {
            println!("{}", render(&enhance(&classify(Outcome::Ran(&r)), &rules, level)));
            for line in key_values(&r) {
                println!("{line}");
            }
            Ok(OK)
        }
        Err(e) => {
            println!("{}", render(&enhance(&classify(Outcome::Failed(&e)), &rules, level)));
            println!("status=execution_error");
            println!("error={e}");
            Ok(EXEC_ERROR)
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn cmd_optimize(
    app_path: &Path,
    env: &EnvArgs,
    strategy: &str,
    iters: usize,
    seeds: u64,
    level_name: &str,
    out: Option<&Path>,
    baseline: Option<&Path>,
    svg: Option<&Path>,
    best_out: Option<&Path>,
    feedback_out: Option<&Path>,
    jobs: usize,
    adapter_url: Option<String>,
) -> CmdResult {
    if iters == 0 || seeds == 0 {
        return Err(Fail(USER_ERROR, "--iters and --seeds must be positive".into()));
    }
    let level = level(level_name)?;
    let endpoint = adapter_url.or_else(|| std::env::var("MAPFORGE_ADAPTER").ok().filter(|s| !s.is_empty()));
    by_name(strategy, 0, endpoint.as_deref()).map_err(|e| Fail(USER_ERROR, e))?;
    let app = load_app(app_path)?;
    let machine = machine(env.machine.as_deref())?;
    let costs = costs(env.costs.as_deref())?;
    let rules = rules(env.rules.as_deref())?;
    let space = DecisionSpace::new(&app, &machine).map_err(|e| Fail(USER_ERROR, e))?;

    let baseline_score = match baseline {
        None => None,
        Some(path) => {
            let resolved = bind(path, &app, &machine)?;
            match simulate(&app, &resolved.table, &resolved.library, &machine, &costs) {
                Ok(r) => Some(r.throughput),
                Err(e) => {
                    return Err(Fail(
                        EXEC_ERROR,
                        format!("baseline mapper {} failed: {e}", path.display()),
                    ))
                }
            }
        }
    };

    let spec = RunSpec {
        app: &app,
        machine: &machine,
        costs: &costs,
        space: &space,
        budget: iters,
        level,
        rules: &rules,
    };
    let seed_list: Vec<u64> = (0..seeds).collect();
    let one = |seed: u64| -> Trajectory {
        let mut s = by_name(strategy, seed, endpoint.as_deref()).expect("checked above");
        run(&spec, s.as_mut(), seed)
    };
    let trajectories: Vec<Trajectory> = if jobs <= 1 {
        seed_list.iter().map(|&s| one(s)).collect()
    } else {
        let chunk = seed_list.len().div_ceil(jobs);
        std::thread::scope(|scope| {
            let handles: Vec<_> = seed_list
                .chunks(chunk)
                .map(|c| scope.spawn(move || c.iter().map(|&s| one(s)).collect::<Vec<_>>()))
                .collect();
            handles
                .into_iter()
                .flat_map(|h| h.join().expect("seed thread panicked"))
                .collect()
        })
    };

    let csv = to_csv(&trajectories, baseline_score);
    match out {
        Some(p) => std::fs::write(p, &csv).map_err(|e| Fail(IO_ERROR, format!("{}: {e}", p.display())))?,
        None => print!("{csv}"),
    }
    if let Some(p) = feedback_out {
        let mut text = String::new();
        for t in &trajectories {
            for r in &t.records {
                text.push_str(&format!(
                    "seed={} iteration={}\n{}\n\n",
                    t.seed, r.iteration, r.rendered
                ));
            }
        }
        std::fs::write(p, text).map_err(|e| Fail(IO_ERROR, format!("{}: {e}", p.display())))?;
    }
    let report = |line: String| {
        if out.is_some() {
            println!("{line}");
        } else {
            eprintln!("{line}");
        }
    };
    report(format!(
        "{} on {}: {} seeds x {} iterations, space {}",
        strategy,
        app.name,
        seeds,
        iters,
        format_space_size(&space.size())
    ));
    let summary = baseline_score.map(|b| aggregate(&trajectories, b).map_err(|e| Fail(USER_ERROR, e)));
    let summary = summary.transpose()?;
    if let Some(b) = baseline_score {
        report(format!("baseline throughput {b}"));
    }
    if let Some(s) = &summary {
        if let Some(last) = s.rows.last() {
            report(format!(
                "mean normalized best after {} iterations: {:.4}",
                last.iteration, last.mean_normalized
            ));
        }
    }
    let best = trajectories.iter().filter_map(|t| t.best().map(|r| (t.seed, r))).fold(
        None::<(u64, &mapforge::search::IterationRecord)>,
        |acc, (seed, r)| match acc {
            Some((_, b)) if b.score >= r.score => acc,
            _ => Some((seed, r)),
        },
    );
    match best {
        Some((seed, r)) => {
            let score = r.score.expect("best has a score");
            let norm = baseline_score
                .map(|b| format!(" (normalized {:.4})", score / b))
                .unwrap_or_default();
            report(format!(
                "best: seed {seed} iteration {} score {score}{norm}",
                r.iteration
            ));
            if let Some(p) = best_out {
                std::fs::write(p, r.candidate.program())
                    .map_err(|e| Fail(IO_ERROR, format!("{}: {e}", p.display())))?;
            }
        }
        None => report("best: no candidate ran successfully".to_string()),
    }
    if let Some(p) = svg {
        let rows = match &summary {
            Some(s) => s.rows.clone(),
            None => {
                // without a baseline, normalize by the best score found
                let b = best.and_then(|(_, r)| r.score).unwrap_or(1.0);
                aggregate(&trajectories, b).map_err(|e| Fail(USER_ERROR, e))?.rows
            }
        };
        let title = format!("{} / {} ({})", app.name, strategy, level);
        std::fs::write(p, to_svg(&rows, &title)).map_err(|e| Fail(IO_ERROR, format!("{}: {e}", p.display())))?;
    }
    Ok(OK)
}

fn cmd_space(app: &Path, machine_path: Option<&Path>, dims: bool) -> CmdResult {
    let app = load_app(app)?;
    let machine = machine(machine_path)?;
    let space = DecisionSpace::new(&app, &machine).map_err(|e| Fail(USER_ERROR, e))?;
    println!("{}", format_space_size(&space.size()));
    if dims {
        for d in &space.dims {
            println!("{} [{}]: {}", d.id, d.domain.len(), d.domain.join(" | "));
        }
    }
    Ok(OK)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { USER_ERROR } else { OK });
        }
    };
    let result = match &cli.command {
        Cmd::Check { mapper } => cmd_check(mapper),
        Cmd::Simulate {
            app,
            mapper,
            env,
            feedback_level,
        } => cmd_simulate(app, mapper, env, feedback_level),
        Cmd::Optimize {
            app,
            env,
            strategy,
            iters,
            seeds,
            level,
            out,
            baseline,
            svg,
            best,
            feedback_out,
            jobs,
            adapter_url,
        } => cmd_optimize(
            app,
            env,
            strategy,
            *iters,
            *seeds,
            level,
            out.as_deref(),
            baseline.as_deref(),
            svg.as_deref(),
            best.as_deref(),
            feedback_out.as_deref(),
            *jobs,
            adapter_url.clone(),
        ),
        Cmd::Space { app, machine, dims } => cmd_space(app, machine.as_deref(), *dims),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(Fail(code, msg)) => {
            eprintln!("{msg}");
            ExitCode::from(code)
        }
    }
}
