//! `synthsel` command line.
//!
//! Exit codes: 0 solved or completed, 1 unsolved, 2 usage, input or
//! configuration error.

use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};

use synthsel::backend::{HttpBackend, HttpConfig, RecordingBackend, ReplayBackend};
use synthsel::clock::SystemClock;
use synthsel::config::{BackendKind, RunConfig, SelectorMode};
use synthsel::orchestrator::{
    run_many, solve_query, write_cumulative_csv, write_summary_csv, LiveDeployer, MultiReport, QueryEntry, RunHooks,
    RunReport, SelectorState, Skipped, Summary,
};
use synthsel::smt::{ExternalVerifier, LayeredVerifier, SmtCommand};
use synthsel::store::{load_few_shot, load_store};
use synthsel_core::bandit::{RewardKind, SolverId};
use synthsel_core::enumerator::CegisConfig;
use synthsel_core::llm::ChatBackend;
use synthsel_core::verify::{InternalVerifier, SearchConfig};

const EXIT_SOLVED: u8 = 0;
const EXIT_UNSOLVED: u8 = 1;
const EXIT_USAGE: u8 = 2;

#[derive(Parser)]
#[command(name = "synthsel", version, about = "Learned solver selection for SyGuS queries")]
struct Cli {
    /// JSON configuration file; flags override it.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(flatten)]
    flags: Flags,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Args, Default)]
struct Flags {
    #[arg(long, global = true, value_enum)]
    selector: Option<SelectorMode>,
    /// Solver for `--selector fixed-solver`: `enumerator` or `<model>:p<1-6>`.
    #[arg(long, global = true)]
    fixed_solver: Option<SolverId>,
    /// `time`, `cost` or `binary`.
    #[arg(long, global = true)]
    reward: Option<RewardKind>,
    /// Total time budget T in seconds.
    #[arg(long, global = true)]
    time_budget: Option<f64>,
    /// Total token-cost budget C.
    #[arg(long, global = true)]
    cost_budget: Option<f64>,
    /// Neighbours used for ranking.
    #[arg(long, global = true)]
    k: Option<usize>,
    /// Tail probability for the time allocation.
    #[arg(long, global = true)]
    delta1: Option<f64>,
    /// Tail probability for the cost allocation.
    #[arg(long, global = true)]
    delta2: Option<f64>,
    /// JSON-lines record store.
    #[arg(long, global = true)]
    state: Option<PathBuf>,
    /// Replay fixture file.
    #[arg(long, global = true)]
    fixtures: Option<PathBuf>,
    #[arg(long, global = true, value_enum)]
    backend: Option<BackendKind>,
    /// External SMT solver command line, e.g. `cvc5 --lang=smt2 --produce-models`.
    #[arg(long, global = true)]
    smt_cmd: Option<String>,
    /// Seed for corpus shuffling and sampling.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Repeat the corpus with seeds `seed`, `seed+1`, ...
    #[arg(long, global = true)]
    runs: Option<usize>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Cmd {
    /// Solve one query file; prints the solution or UNSOLVED.
    Solve { path: PathBuf },
    /// Run a corpus directory of `.sl` files and write reports.
    Run { corpus: PathBuf },
    /// Recompute a report's summary under another reward kind.
    Rescore {
        report: PathBuf,
        #[arg(long = "as", value_name = "KIND")]
        kind: Option<RewardKind>,
    },
    /// Like `run` (or `solve` for a file) against the live endpoints,
    /// appending every answer to the fixture file.
    Record { path: PathBuf },
}

fn usage(msg: impl std::fmt::Display) -> ExitCode {
    eprintln!("error: {}", msg);
    ExitCode::from(EXIT_USAGE)
}

fn merge(mut c: RunConfig, f: Flags) -> RunConfig {
    macro_rules! set {
        ($($field:ident),*) => { $( if let Some(v) = f.$field { c.$field = v; } )* };
    }
    set!(selector, fixed_solver, reward, time_budget, cost_budget, k, delta1, delta2, backend, seed, runs);
    if f.state.is_some() {
        c.state = f.state;
    }
    if f.fixtures.is_some() {
        c.fixtures = f.fixtures;
    }
    if f.smt_cmd.is_some() {
        c.smt_cmd = f.smt_cmd;
    }
    if f.out.is_some() {
        c.out = f.out;
    }
    c
}

fn backends(config: &RunConfig) -> Result<HashMap<String, Box<dyn ChatBackend>>, String> {
    let mut out: HashMap<String, Box<dyn ChatBackend>> = HashMap::new();
    if config.models.is_empty() {
        return Ok(out);
    }
    let replay = match config.backend {
        BackendKind::Replay => {
            let path = config.fixtures.as_deref().ok_or("the replay backend needs --fixtures")?;
            Some(ReplayBackend::open(path).map_err(|e| e.to_string())?)
        }
        _ => None,
    };
    for m in &config.models {
        let b: Box<dyn ChatBackend> = match (&replay, config.backend) {
            (Some(r), _) => Box::new(r.clone()),
            (None, kind) => {
                let endpoint = m.endpoint.clone().ok_or_else(|| format!("model {} has no endpoint", m.name))?;
                let http = HttpBackend::new(HttpConfig {
                    endpoint,
                    api_key_env: m.api_key_env.clone(),
                    temperature: m.temperature,
                    request_timeout: config.time_budget,
                });
                if kind == BackendKind::Record {
                    let path = config.fixtures.clone().ok_or("recording needs --fixtures")?;
                    Box::new(RecordingBackend { inner: http, path })
                } else {
                    Box::new(http)
                }
            }
        };
        out.insert(m.name.clone(), b);
    }
    Ok(out)
}

fn initial_state(config: &RunConfig) -> Result<SelectorState, String> {
    let mut state = match &config.state {
        Some(p) => SelectorState::new(
            load_store(p).map_err(|e| e.to_string())?,
            load_few_shot(p).map_err(|e| e.to_string())?,
            config.seed,
        ),
        None => SelectorState::empty(config.seed),
    };
    state.persist = config.state.clone();
    Ok(state)
}

fn discover(dir: &Path, out: &mut Vec<PathBuf>) -> std::io::Result<()> {
    for e in fs::read_dir(dir)? {
        let p = e?.path();
        if p.is_dir() {
            discover(&p, out)?;
        } else if p.extension().is_some_and(|x| x == "sl") {
            out.push(p);
        }
    }
    Ok(())
}

fn load_corpus(dir: &Path) -> Result<(Vec<QueryEntry>, Vec<Skipped>), String> {
    let mut paths = Vec::new();
    discover(dir, &mut paths).map_err(|e| format!("{}: {}", dir.display(), e))?;
    paths.sort();
    let mut entries = Vec::new();
    let mut skipped = Vec::new();
    for p in paths {
        let id = p.strip_prefix(dir).unwrap_or(&p).display().to_string();
        let parsed = fs::read_to_string(&p)
            .map_err(|e| e.to_string())
            .and_then(|t| QueryEntry::parse(&id, &t).map_err(|e| e.to_string()));
        match parsed {
            Ok(e) => entries.push(e),
            Err(error) => {
                log::warn!("skipping {}: {}", p.display(), error);
                skipped.push(Skipped { path: p.display().to_string(), error });
            }
        }
    }
    Ok((entries, skipped))
}

fn write_outputs(out: &Path, multi: &MultiReport, reward: RewardKind) -> Result<(), String> {
    let io = |e: std::io::Error| format!("{}: {}", out.display(), e);
    fs::create_dir_all(out).map_err(io)?;
    let json = if multi.runs.len() == 1 {
        serde_json::to_string_pretty(&multi.runs[0])
    } else {
        serde_json::to_string_pretty(multi)
    }
    .expect("reports serialize");
    fs::write(out.join("report.json"), json).map_err(io)?;
    let mut rows: Vec<Summary> = multi.runs.iter().map(|r| r.summarize(reward)).collect();
    if rows.len() > 1 {
        let label = rows[0].label.clone();
        for (r, run) in rows.iter_mut().zip(&multi.runs) {
            r.label = format!("{} seed {}", label, run.seed);
        }
        let n = rows.len() as f64;
        let mean = |f: fn(&Summary) -> f64| rows.iter().map(f).sum::<f64>() / n;
        let std = |f: fn(&Summary) -> f64| {
            let m = mean(f);
            (rows.iter().map(|r| (f(r) - m).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
        };
        let fields: [fn(&Summary) -> f64; 7] = [
            |s| s.percent_solved,
            |s| s.solved as f64,
            |s| s.par2,
            |s| s.total_reward_cost,
            |s| s.total_reward_time,
            |s| s.avg_time,
            |s| s.avg_cost,
        ];
        let agg = |name: &str, g: &dyn Fn(fn(&Summary) -> f64) -> f64| {
            let v: Vec<f64> = fields.iter().map(|f| g(*f)).collect();
            Summary {
                label: format!("{} {}", label, name),
                reward,
                queries: rows[0].queries,
                solved: v[1].round() as usize,
                percent_solved: v[0],
                par2: v[2],
                total_reward: 0.0,
                total_reward_time: v[4],
                total_reward_cost: v[3],
                avg_time: v[5],
                avg_cost: v[6],
            }
        };
        let (m, s) = (agg("mean", &mean), agg("std", &std));
        rows.push(m);
        rows.push(s);
        println!(
            "{}: solved {:.2} ± {:.2} of {}, Par-2 {:.1} ± {:.1}",
            label, multi.mean_solved, multi.std_solved, rows[0].queries, multi.mean_par2, multi.std_par2
        );
    }
    let f = fs::File::create(out.join("summary.csv")).map_err(io)?;
    write_summary_csv(f, &rows).map_err(|e| e.to_string())?;
    let f = fs::File::create(out.join("cumulative_par2.csv")).map_err(io)?;
    write_cumulative_csv(f, &multi.runs[0].cumulative_par2()).map_err(|e| e.to_string())?;
    Ok(())
}

fn live_deployer<'a>(config: &RunConfig, clock: &'a SystemClock) -> Result<LiveDeployer<'a>, String> {
    let external = match &config.smt_cmd {
        Some(c) => Some(ExternalVerifier::new(SmtCommand::parse(c).map_err(|e| e.to_string())?)),
        None => None,
    };
    let internal = InternalVerifier::new(SearchConfig { grid_bound: config.grid_bound, ..SearchConfig::default() });
    Ok(LiveDeployer {
        clock,
        verifier: Box::new(LayeredVerifier::new(internal, external)),
        backends: backends(config)?,
        cegis: CegisConfig::default(),
        strict_replay: config.strict_replay,
    })
}

fn cmd_solve(path: &Path, config: &RunConfig) -> ExitCode {
    let text = match fs::read_to_string(path) {
        Ok(t) => t,
        Err(e) => return usage(format!("{}: {}", path.display(), e)),
    };
    let entry = match QueryEntry::parse(&path.display().to_string(), &text) {
        Ok(e) => e,
        Err(e) => return usage(format!("{}: {}", path.display(), e)),
    };
    let clock = SystemClock::new();
    let (mut state, mut deployer) = match initial_state(config).and_then(|s| Ok((s, live_deployer(config, &clock)?))) {
        Ok(x) => x,
        Err(e) => return usage(e),
    };
    match solve_query(0, &entry, config, &mut state, &mut deployer) {
        Ok(r) => {
            for o in &r.outcomes {
                log::info!("{}: solved={} time={:.3}s cost={} {}", o.solver, o.solved, o.time, o.cost, o.note.as_deref().unwrap_or(""));
            }
            match r.outcomes.iter().find(|o| o.solved).and_then(|o| o.candidate.clone()) {
                Some(c) => {
                    println!("{}", c);
                    ExitCode::from(EXIT_SOLVED)
                }
                None => {
                    println!("UNSOLVED");
                    ExitCode::from(EXIT_UNSOLVED)
                }
            }
        }
        Err(e) => usage(e),
    }
}

fn cmd_run(corpus: &Path, config: &RunConfig) -> ExitCode {
    let (entries, skipped) = match load_corpus(corpus) {
        Ok(x) => x,
        Err(e) => return usage(e),
    };
    if entries.is_empty() {
        return usage(format!("no readable .sl files under {}", corpus.display()));
    }
    let clock = SystemClock::new();
    let (state, mut deployer) = match initial_state(config).and_then(|s| Ok((s, live_deployer(config, &clock)?))) {
        Ok(x) => x,
        Err(e) => return usage(e),
    };
    let out = config.out.clone().unwrap_or_else(|| PathBuf::from("out"));
    if let Err(e) = fs::create_dir_all(&out) {
        return usage(format!("{}: {}", out.display(), e));
    }
    let events = out.join("events.jsonl");
    let _ = fs::remove_file(&events);
    let interrupt = Arc::new(AtomicBool::new(false));
    {
        let flag = interrupt.clone();
        if let Err(e) = ctrlc::set_handler(move || flag.store(true, Ordering::Relaxed)) {
            log::warn!("cannot install the interrupt handler: {}", e);
        }
    }
    let hooks = RunHooks { events: Some(events), interrupt: Some(&interrupt) };
    let mut multi = match run_many(&entries, config, &state, &mut deployer, config.seed, config.runs, &hooks) {
        Ok(m) => m,
        Err(e) => return usage(e),
    };
    for r in multi.runs.iter_mut() {
        r.skipped = skipped.clone();
    }
    if let Err(e) = write_outputs(&out, &multi, config.reward) {
        return usage(e);
    }
    let s = &multi.runs[0].summary;
    println!(
        "{}: {}/{} solved ({:.1}%), Par-2 {:.1}; reports in {}",
        s.label,
        s.solved,
        s.queries,
        s.percent_solved,
        s.par2,
        out.display()
    );
    if multi.runs.iter().any(|r| r.interrupted) {
        eprintln!("interrupted; reports cover the queries processed so far");
    }
    ExitCode::from(EXIT_SOLVED)
}

fn cmd_rescore(path: &Path, kind: RewardKind, out: Option<&Path>) -> ExitCode {
    let text = match fs::read_to_string(path) {
        Ok(t) => t,
        Err(e) => return usage(format!("{}: {}", path.display(), e)),
    };
    let reports: Vec<RunReport> = if let Ok(r) = serde_json::from_str::<RunReport>(&text) {
        vec![r]
    } else {
        match serde_json::from_str::<MultiReport>(&text) {
            Ok(m) => m.runs,
            Err(e) => return usage(format!("{}: not a run report: {}", path.display(), e)),
        }
    };
    let rows: Vec<Summary> = reports.iter().map(|r| r.summarize(kind)).collect();
    let res = match out {
        Some(dir) => fs::create_dir_all(dir)
            .map_err(|e| e.to_string())
            .and_then(|_| fs::File::create(dir.join("rescored.csv")).map_err(|e| e.to_string()))
            .and_then(|f| write_summary_csv(f, &rows).map_err(|e| e.to_string())),
        None => write_summary_csv(std::io::stdout(), &rows).map_err(|e| e.to_string()),
    };
    match res {
        Ok(()) => ExitCode::from(EXIT_SOLVED),
        Err(e) => usage(e),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EXIT_USAGE } else { EXIT_SOLVED });
        }
    };
    let base = match &cli.config {
        Some(p) => match RunConfig::from_file(p) {
            Ok(c) => c,
            Err(e) => return usage(e),
        },
        None => RunConfig::default(),
    };
    let mut config = merge(base, cli.flags);
    if let Cmd::Record { .. } = cli.cmd {
        config.backend = BackendKind::Record;
    }
    if let Err(e) = config.validate() {
        return usage(e);
    }
    match &cli.cmd {
        Cmd::Solve { path } => cmd_solve(path, &config),
        Cmd::Run { corpus } => cmd_run(corpus, &config),
        Cmd::Record { path } if path.is_dir() => cmd_run(path, &config),
        Cmd::Record { path } => cmd_solve(path, &config),
        Cmd::Rescore { report, kind } => cmd_rescore(report, kind.unwrap_or(config.reward), config.out.as_deref()),
    }
}
