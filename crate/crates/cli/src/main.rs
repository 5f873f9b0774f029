use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use dache::chaos::{estimate_lyapunov, ChaosError, LyapunovParams};
use dache::geometry::{place_obstacles, Arena};
use dache::orchestrator::{write_event_log, Epoch, MapMode, OrchestratorError, SimulationConfig};
use dache::par::{trial_rng, Execution};
use dache::query::{execute_oracle, QueryPlan};
use dache::stats::random_ball;
use dache::table::Database;
use dache_cli::experiments::{run_suite, Suite, SuiteOptions};
use dache_cli::input::{load_database, load_lyapunov_config, load_simulation_config};
use dache_cli::manifest::Run;
use dache_cli::sql;
use serde_json::json;

#[derive(Parser)]
#[command(name = "dache", version, about = "Encrypted shards on chaotic billiards: simulate, query, validate")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Global {
    /// Overrides the seed in the config file.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads for independent trials (default: all cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// JSON config file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true, default_value = "out")]
    out_dir: PathBuf,
}

#[derive(Args)]
struct TableArgs {
    /// Table CSV; pair each with a --schema. Defaults to the bundled sample `t`.
    #[arg(long = "table")]
    tables: Vec<PathBuf>,
    #[arg(long = "schema")]
    schemas: Vec<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    AtObstacle,
    Onfly,
}

impl From<ModeArg> for MapMode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::AtObstacle => MapMode::AtObstacle,
            ModeArg::Onfly => MapMode::OnTheFly,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Run epochs to convergence and log every collision.
    Simulate {
        #[command(flatten)]
        tables: TableArgs,
        #[arg(long, default_value_t = 1)]
        epochs: u64,
        #[arg(long, value_enum)]
        mode: Option<ModeArg>,
    },
    /// Run one query through an epoch.
    Query {
        /// SQL text, or a path to a plan JSON file.
        plan: String,
        #[command(flatten)]
        tables: TableArgs,
        #[arg(long, value_enum)]
        mode: Option<ModeArg>,
        /// Simulated query arrival time.
        #[arg(long)]
        arrival: Option<f64>,
        /// Also run the unsharded oracle and report equality.
        #[arg(long)]
        oracle: bool,
    },
    /// Run a validation suite.
    Validate {
        #[arg(value_enum)]
        suite: Suite,
        #[arg(long)]
        trials: Option<usize>,
        #[arg(long)]
        seeds: Option<usize>,
        #[arg(long)]
        horizon: Option<f64>,
        /// Matched pairs for all-collide.
        #[arg(long)]
        pairs: Option<u32>,
    },
    /// Estimate the largest Lyapunov exponent of one trajectory.
    Lyapunov,
}

enum Failure {
    Input(String),
    Runtime(String),
    Timeout(String),
    Failed(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Input(_) => 2,
            Failure::Runtime(_) => 3,
            Failure::Timeout(_) => 4,
            Failure::Failed(_) => 5,
        }
    }

    fn message(&self) -> &str {
        match self {
            Failure::Input(m) | Failure::Runtime(m) | Failure::Timeout(m) | Failure::Failed(m) => m,
        }
    }
}

fn input<E: std::fmt::Display>(e: E) -> Failure {
    Failure::Input(e.to_string())
}

fn runtime<E: std::fmt::Display>(e: E) -> Failure {
    Failure::Runtime(e.to_string())
}

fn orchestrator(e: OrchestratorError) -> Failure {
    match e {
        OrchestratorError::Config(_) | OrchestratorError::Query(_) => input(e),
        OrchestratorError::ConvergenceTimeout { .. } => Failure::Timeout(e.to_string()),
        other => runtime(other),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(j) = cli.global.jobs {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(j.max(1)).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(3);
        }
    }
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message());
            ExitCode::from(f.code())
        }
    }
}

fn run(cli: Cli) -> Result<(), Failure> {
    let g = &cli.global;
    match cli.command {
        Command::Simulate { tables, epochs, mode } => {
            let cfg = simulation_config(g, mode, None)?;
            let (db, names) = load_database(&tables.tables, &tables.schemas).map_err(input)?;
            simulate(g, &cfg, &db, &names[0], epochs)
        }
        Command::Query { plan, tables, mode, arrival, oracle } => {
            let cfg = simulation_config(g, mode, arrival)?;
            let (db, _) = load_database(&tables.tables, &tables.schemas).map_err(input)?;
            let plan = load_plan(&plan)?;
            query(g, &cfg, &db, &plan, oracle)
        }
        Command::Validate { suite, trials, seeds, horizon, pairs } => {
            let d = SuiteOptions::default();
            let opts = SuiteOptions {
                seed: g.seed.unwrap_or(d.seed),
                trials: trials.unwrap_or(d.trials),
                seeds: seeds.unwrap_or(d.seeds),
                horizon,
                pairs: pairs.unwrap_or(d.pairs),
            };
            validate(g, suite, &opts)
        }
        Command::Lyapunov => lyapunov(g),
    }
}

fn simulation_config(g: &Global, mode: Option<ModeArg>, arrival: Option<f64>) -> Result<SimulationConfig, Failure> {
    let mut cfg = load_simulation_config(g.config.as_deref()).map_err(input)?;
    if let Some(s) = g.seed {
        cfg.seed = s;
    }
    if let Some(m) = mode {
        cfg.map_mode = m.into();
    }
    if let Some(a) = arrival {
        cfg.query_arrival = a;
    }
    cfg.validate().map_err(input)?;
    Ok(cfg)
}

fn load_plan(text: &str) -> Result<QueryPlan, Failure> {
    let path = Path::new(text);
    if text.ends_with(".json") {
        let body = std::fs::read_to_string(path).map_err(|e| input(format!("{}: {e}", path.display())))?;
        return serde_json::from_str(&body).map_err(|e| input(format!("{}: {e}", path.display())));
    }
    sql::parse(text).map_err(input)
}

fn start(g: &Global, command: &str, seed: u64, config: serde_json::Value) -> Result<Run, Failure> {
    Run::start(&g.out_dir, command, seed, config).map_err(|e| runtime(format!("{}: {e}", g.out_dir.display())))
}

fn json_bytes<T: serde::Serialize>(v: &T) -> Vec<u8> {
    let mut s = serde_json::to_string_pretty(v).expect("serializable");
    s.push('\n');
    s.into_bytes()
}

fn io(e: std::io::Error) -> Failure {
    runtime(e)
}

fn epoch_section(epoch: &Epoch, convergence_time: f64, deadline: f64) -> serde_json::Value {
    json!({
        "epoch": epoch.id(),
        "events": epoch.event_log().len(),
        "convergence_time": convergence_time,
        "deadline": deadline,
        "delivered": epoch.delivered(),
        "key_ring_sizes": epoch.registry().key_ring_sizes(),
        "obstacles": epoch.snapshot().obstacles,
    })
}

fn simulate(g: &Global, cfg: &SimulationConfig, db: &Database, probe: &str, epochs: u64) -> Result<(), Failure> {
    let plan = QueryPlan::count_all(probe);
    let mut run = start(g, "simulate", cfg.seed, json!(cfg))?;
    let mut events = Vec::new();
    let mut epoch = dache::orchestrator::setup_epoch(cfg, db, 0).map_err(orchestrator)?;
    for k in 0..epochs {
        if k > 0 {
            epoch = epoch.next_epoch(db).map_err(orchestrator)?;
        }
        let q = epoch.run_query(&plan, cfg.query_arrival).map_err(orchestrator)?;
        events.extend_from_slice(epoch.event_log());
        run.epochs.push(epoch_section(&epoch, q.convergence_time, q.deadline));
        eprintln!("epoch {}: converged after {:.4} ({} events)", epoch.id(), q.convergence_time, epoch.event_log().len());
    }
    let mut csv = Vec::new();
    write_event_log(&events, &mut csv).map_err(io)?;
    run.write("events.csv", &csv).map_err(io)?;
    run.write("epochs.json", &json_bytes(&run.epochs.clone())).map_err(io)?;
    run.finish().map_err(io)?;
    Ok(())
}

fn query(g: &Global, cfg: &SimulationConfig, db: &Database, plan: &QueryPlan, oracle: bool) -> Result<(), Failure> {
    let mut run = start(g, "query", cfg.seed, json!({"simulation": cfg, "plan": plan}))?;
    let mut epoch = dache::orchestrator::setup_epoch(cfg, db, 0).map_err(orchestrator)?;
    let outcome = epoch.run_query(plan, cfg.query_arrival);
    let mut csv = Vec::new();
    write_event_log(epoch.event_log(), &mut csv).map_err(io)?;
    run.write("events.csv", &csv).map_err(io)?;
    let q = match outcome {
        Ok(q) => q,
        Err(e @ OrchestratorError::ConvergenceTimeout { .. }) => {
            if let OrchestratorError::ConvergenceTimeout { deadline, delivered, undelivered } = &e {
                let report = json!({"deadline": deadline, "delivered": delivered, "undelivered": undelivered});
                run.write("timeout.json", &json_bytes(&report)).map_err(io)?;
            }
            run.finish().map_err(io)?;
            return Err(orchestrator(e));
        }
        Err(e) => return Err(orchestrator(e)),
    };
    let oracle_equal = if oracle {
        let want = execute_oracle(plan, db).map_err(input)?;
        Some(want.same_answer(&q.result))
    } else {
        None
    };
    let body = json!({
        "result": q.result,
        "arrival": q.arrival,
        "convergence_time": q.convergence_time,
        "deadline": q.deadline,
        "oracle_equal": oracle_equal,
    });
    run.write("result.json", &json_bytes(&body)).map_err(io)?;
    run.epochs.push(epoch_section(&epoch, q.convergence_time, q.deadline));
    run.finish().map_err(io)?;
    println!("{}", serde_json::to_string(&q.result.rows).expect("rows serialize"));
    match oracle_equal {
        Some(true) => println!("oracle: equal"),
        Some(false) => return Err(Failure::Runtime("result differs from the unsharded oracle".into())),
        None => {}
    }
    Ok(())
}

fn validate(g: &Global, suite: Suite, opts: &SuiteOptions) -> Result<(), Failure> {
    let mut run = start(g, &format!("validate {}", suite.name()), opts.seed, json!(opts))?;
    let report = run_suite(suite, opts, Execution::Parallel).map_err(runtime)?;
    for c in &report.checks {
        println!(
            "{} {}: measured {:.6}, predicted {:.6} ({})",
            if c.passed { "PASS" } else { "FAIL" },
            c.name,
            c.measured,
            c.predicted,
            c.tolerance
        );
    }
    for n in &report.notes {
        println!("note: {n}");
    }
    run.write(&format!("{}.json", suite.name()), &json_bytes(&report)).map_err(io)?;
    run.write(&format!("{}.csv", suite.name()), report.frame.to_csv().as_bytes()).map_err(io)?;
    run.finish().map_err(io)?;
    if report.passed() {
        Ok(())
    } else {
        let failed = report.checks.iter().filter(|c| !c.passed).count();
        Err(Failure::Failed(format!("{failed} of {} checks failed", report.checks.len())))
    }
}

fn lyapunov(g: &Global) -> Result<(), Failure> {
    let mut cfg = load_lyapunov_config(g.config.as_deref()).map_err(input)?;
    if let Some(s) = g.seed {
        cfg.seed = s;
    }
    let mut run = start(g, "lyapunov", cfg.seed, json!(cfg))?;
    let mut rng = trial_rng(cfg.seed, 0);
    let arena = if cfg.obstacles == 0 {
        Arena::new(cfg.arena)
    } else {
        place_obstacles(cfg.arena, cfg.obstacles, cfg.obstacle_radius, &mut rng)
    }
    .map_err(input)?;
    let ball = random_ball(&arena, 0, cfg.speed, &mut rng);
    let est = estimate_lyapunov(&arena, &ball, LyapunovParams::default(), cfg.horizon, &mut rng).map_err(|e| match e {
        ChaosError::InvalidParameter(_) => input(e),
        other => runtime(other),
    })?;
    println!("lambda_hat {:.6} over {} windows", est.lambda_hat, est.per_window_rates.len());
    run.write("lyapunov.json", &json_bytes(&est)).map_err(io)?;
    run.finish().map_err(io)?;
    Ok(())
}
