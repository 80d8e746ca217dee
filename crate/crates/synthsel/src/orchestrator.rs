//! The selection pipeline: featurize, rank, allocate, deploy in order until
//! a solver succeeds, then learn from the success. Also corpus runs, Par-2
//! and the virtual best solver.

use std::collections::HashMap;
use std::path::PathBuf;
use std::sync::atomic::{AtomicBool, Ordering};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use synthsel_core::bandit::{
    rank_double, rank_single, split_portfolio, BanditStore, DoubleStore, RewardKind, Rewards, SolveRecord, SolverId,
    ENUMERATOR_COST,
};
use synthsel_core::budget::{build_schedule, linear_schedule, SolverSchedule};
use synthsel_core::enumerator::{cegis_solve, CegisConfig, CegisOutcome};
use synthsel_core::featurize::{featurize, FeatureVector};
use synthsel_core::llm::{solve_with_llm, ChatBackend, Clock, FewShotExample, Slice, StopReason};
use synthsel_core::query::{parse_query, QueryError, SynthQuery};
use synthsel_core::verify::Verifier;

use crate::clock::Until;
use crate::config::{RunConfig, SelectorMode};
use crate::store::{append_jsonl, few_shot_path, StoreError};

/// A parsed corpus member.
#[derive(Clone, Debug)]
pub struct QueryEntry {
    pub id: String,
    pub text: String,
    pub query: SynthQuery,
    pub features: FeatureVector,
}

impl QueryEntry {
    pub fn parse(id: &str, text: &str) -> Result<Self, QueryError> {
        let query = parse_query(text)?;
        let features = featurize(&query);
        Ok(QueryEntry { id: id.to_string(), text: text.to_string(), query, features })
    }
}

/// What a deployer reports for one solver run.
#[derive(Clone, Debug, PartialEq)]
pub struct Attempt {
    pub solved: bool,
    /// `define-fun` text of the accepted candidate.
    pub candidate: Option<String>,
    pub time: f64,
    pub cost: f64,
    /// Which verifier accepted or rejected the last candidate.
    pub verdict: Option<String>,
    pub note: Option<String>,
}

impl Attempt {
    pub fn failed(time: f64, cost: f64, note: impl Into<String>) -> Self {
        Attempt { solved: false, candidate: None, time, cost, verdict: None, note: Some(note.into()) }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum RunError {
    #[error("replay fixture missing for {solver} on {query}: {detail}")]
    ReplayGap { query: String, solver: String, detail: String },
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error("the corpus is empty")]
    EmptyCorpus,
}

/// Runs one solver within a slice.
pub trait Deployer {
    fn deploy(
        &mut self,
        entry: &QueryEntry,
        solver: &SolverId,
        slice: Slice,
        few_shot: &[FewShotExample],
    ) -> Result<Attempt, RunError>;
}

/// The enumerator and LLM-prompt pairs, checked by a real verifier.
pub struct LiveDeployer<'a> {
    pub clock: &'a dyn Clock,
    pub verifier: Box<dyn Verifier + 'a>,
    pub backends: HashMap<String, Box<dyn ChatBackend + 'a>>,
    pub cegis: CegisConfig,
    pub strict_replay: bool,
}

impl Deployer for LiveDeployer<'_> {
    fn deploy(
        &mut self,
        entry: &QueryEntry,
        solver: &SolverId,
        slice: Slice,
        few_shot: &[FewShotExample],
    ) -> Result<Attempt, RunError> {
        let start = self.clock.now();
        match solver {
            SolverId::Enumerator => {
                let grammar = match entry.query.search_grammar() {
                    Ok(g) => g,
                    Err(e) => return Ok(Attempt::failed(0.0, ENUMERATOR_COST, format!("no search grammar: {}", e))),
                };
                let deadline = Until { clock: self.clock, end: start + slice.time };
                let (out, _) = cegis_solve(&entry.query, &grammar, &self.cegis, &deadline, self.verifier.as_mut());
                let time = self.clock.now() - start;
                let by = Some(self.verifier.name().to_string());
                Ok(match out {
                    CegisOutcome::Solved { candidate, .. } => Attempt {
                        solved: true,
                        candidate: Some(candidate.to_define_fun()),
                        time,
                        cost: ENUMERATOR_COST,
                        verdict: by,
                        note: None,
                    },
                    CegisOutcome::Exhausted => Attempt::failed(time, ENUMERATOR_COST, "grammar exhausted"),
                    CegisOutcome::Timeout => Attempt::failed(time, ENUMERATOR_COST, "timeout"),
                    CegisOutcome::Unknown(why) => Attempt { verdict: by, ..Attempt::failed(time, ENUMERATOR_COST, why) },
                })
            }
            SolverId::Llm { model, .. } => {
                let Some(backend) = self.backends.get_mut(model) else {
                    return Ok(Attempt::failed(0.0, 0.0, format!("no backend for model {}", model)));
                };
                let out = match solve_with_llm(
                    &entry.query,
                    solver,
                    slice,
                    few_shot,
                    backend.as_mut(),
                    self.verifier.as_mut(),
                    self.clock,
                ) {
                    Ok(o) => o,
                    Err(e) => return Ok(Attempt::failed(0.0, 0.0, e.to_string())),
                };
                if out.stop == StopReason::ReplayGap && self.strict_replay {
                    return Err(RunError::ReplayGap {
                        query: entry.id.clone(),
                        solver: solver.to_string(),
                        detail: out.error.unwrap_or_default(),
                    });
                }
                let note = match (&out.error, out.stop) {
                    (Some(e), _) => Some(e.clone()),
                    (None, StopReason::Solved) => None,
                    (None, s) => Some(format!("{} after {} attempts", s, out.attempts)),
                };
                Ok(Attempt {
                    solved: out.solved,
                    candidate: out.candidate.map(|c| c.to_define_fun()),
                    time: out.elapsed,
                    cost: out.cost,
                    verdict: out.verdict.as_ref().map(|_| self.verifier.name().to_string()),
                    note,
                })
            }
        }
    }
}

/// Known outcome of one solver on one query.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    pub solved: bool,
    /// Time to solve, or time spent before giving up.
    pub time: f64,
    pub cost: f64,
}

/// Outcomes of every solver on every query.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OutcomeMatrix {
    pub solvers: Vec<SolverId>,
    /// Query id and one cell per solver, in `solvers` order.
    pub rows: Vec<(String, Vec<Cell>)>,
}

#[derive(Debug, PartialEq, thiserror::Error)]
pub enum MatrixError {
    #[error("row {row} has {found} cells for {expected} solvers")]
    Incomplete { row: String, expected: usize, found: usize },
}

impl OutcomeMatrix {
    pub fn check(&self) -> Result<(), MatrixError> {
        for (id, cells) in &self.rows {
            if cells.len() != self.solvers.len() {
                return Err(MatrixError::Incomplete { row: id.clone(), expected: self.solvers.len(), found: cells.len() });
            }
        }
        Ok(())
    }
}

/// Replays an [`OutcomeMatrix`]: a cell solves only if it fits its slice.
pub struct MatrixDeployer {
    matrix: OutcomeMatrix,
    rows: HashMap<String, usize>,
}

impl MatrixDeployer {
    pub fn new(matrix: OutcomeMatrix) -> Result<Self, MatrixError> {
        matrix.check()?;
        let rows = matrix.rows.iter().enumerate().map(|(i, (id, _))| (id.clone(), i)).collect();
        Ok(MatrixDeployer { matrix, rows })
    }
}

impl Deployer for MatrixDeployer {
    fn deploy(&mut self, entry: &QueryEntry, solver: &SolverId, slice: Slice, _: &[FewShotExample]) -> Result<Attempt, RunError> {
        let col = self.matrix.solvers.iter().position(|s| s == solver);
        let (Some(&row), Some(col)) = (self.rows.get(&entry.id), col) else {
            return Ok(Attempt::failed(0.0, 0.0, "not in the outcome matrix"));
        };
        let c = self.matrix.rows[row].1[col];
        let enumerator = solver.is_enumerator();
        let cost = if enumerator { ENUMERATOR_COST } else { c.cost.min(slice.cost) };
        let fits = c.time <= slice.time && (enumerator || c.cost <= slice.cost);
        Ok(if c.solved && fits {
            Attempt {
                solved: true,
                candidate: None,
                time: c.time,
                cost: if enumerator { ENUMERATOR_COST } else { c.cost },
                verdict: Some("matrix".into()),
                note: None,
            }
        } else if c.solved {
            Attempt::failed(c.time.min(slice.time), cost, "over its slice")
        } else {
            Attempt::failed(c.time.min(slice.time), cost, "unsolved")
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DeploymentOutcome {
    pub solver: SolverId,
    pub allocated_time: f64,
    pub allocated_cost: f64,
    pub solved: bool,
    pub candidate: Option<String>,
    pub time: f64,
    pub cost: f64,
    pub rewards: Rewards,
    pub verdict: Option<String>,
    pub note: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QueryRecord {
    /// Position in the shuffled order, from 0.
    pub index: usize,
    pub id: String,
    pub schedule: SolverSchedule<SolverId>,
    pub outcomes: Vec<DeploymentOutcome>,
    pub winner: Option<SolverId>,
    pub solved: bool,
    /// Sum over deployed solvers.
    pub time: f64,
    pub cost: f64,
    /// Rewards of the winning outcome; zero when unsolved.
    pub rewards: Rewards,
}

/// Learning state carried across queries.
#[derive(Clone, Debug)]
pub struct SelectorState {
    pub store: BanditStore<SolverId>,
    pub double: DoubleStore,
    pub few_shot: Vec<FewShotExample>,
    pub rng: ChaCha8Rng,
    /// State file to append successes to.
    pub persist: Option<PathBuf>,
}

impl SelectorState {
    pub fn new(store: BanditStore<SolverId>, few_shot: Vec<FewShotExample>, seed: u64) -> Self {
        let double = DoubleStore::from_records(store.records()).expect("store records are validated");
        SelectorState { store, double, few_shot, rng: ChaCha8Rng::seed_from_u64(seed), persist: None }
    }

    pub fn empty(seed: u64) -> Self {
        Self::new(BanditStore::new(), Vec::new(), seed)
    }

    fn learn(&mut self, rec: SolveRecord<SolverId>, example: FewShotExample) -> Result<(), RunError> {
        if !self.store.record_outcome(rec.clone(), true).unwrap_or(false) {
            log::warn!("dropping invalid record for {}", rec.solver);
            return Ok(());
        }
        self.double.record_outcome(&rec, true).expect("validated above");
        if let Some(p) = &self.persist {
            append_jsonl(p, &rec)?;
            append_jsonl(&few_shot_path(p), &example)?;
        }
        self.few_shot.push(example);
        Ok(())
    }
}

/// Ranking and slices for `entry` under the configured selector.
pub fn plan(entry: &QueryEntry, config: &RunConfig, state: &mut SelectorState) -> SolverSchedule<SolverId> {
    let portfolio = config.portfolio();
    let f = &entry.features;
    let ranking = match config.selector {
        SelectorMode::Single | SelectorMode::LinearSingle => {
            rank_single(&state.store, f, config.k, &portfolio, &mut state.rng).order()
        }
        SelectorMode::Double | SelectorMode::LinearDouble => {
            let (arms, prompts) = split_portfolio(&portfolio);
            rank_double(&state.double, f, config.k, &arms, &prompts, &mut state.rng)
        }
        SelectorMode::FixedSolver => vec![config.fixed_solver.clone()],
    };
    match config.selector {
        SelectorMode::Single | SelectorMode::Double => build_schedule(&ranking, &state.store, f, &config.budget()),
        _ => linear_schedule(&ranking, config.time_budget, config.cost_budget),
    }
}

/// Deploys the schedule for one query until a solver succeeds, and learns
/// from the success.
pub fn solve_query(
    index: usize,
    entry: &QueryEntry,
    config: &RunConfig,
    state: &mut SelectorState,
    deployer: &mut dyn Deployer,
) -> Result<QueryRecord, RunError> {
    let schedule = plan(entry, config, state);
    let mut outcomes = Vec::new();
    for a in &schedule.entries {
        if a.time <= 0.0 {
            continue;
        }
        let slice = Slice { time: a.time, cost: a.cost };
        let att = deployer.deploy(entry, &a.solver, slice, &state.few_shot)?;
        if att.time > a.time + config.grace {
            log::warn!("{} overran its {:.2} s slice on {} ({:.2} s)", a.solver, a.time, entry.id, att.time);
        }
        let rewards = Rewards::compute(att.time, att.cost, config.time_budget, config.cost_budget, att.solved);
        outcomes.push(DeploymentOutcome {
            solver: a.solver.clone(),
            allocated_time: a.time,
            allocated_cost: a.cost,
            solved: att.solved,
            candidate: att.candidate,
            time: att.time,
            cost: att.cost,
            rewards,
            verdict: att.verdict,
            note: att.note,
        });
        if att.solved {
            break;
        }
    }
    let won = outcomes.last().filter(|o| o.solved).cloned();
    if let Some(w) = &won {
        let rec = SolveRecord {
            features: entry.features.clone(),
            solver: w.solver.clone(),
            reward: w.rewards.get(config.reward),
            time: w.time,
            cost: w.cost,
        };
        let example = FewShotExample {
            logic: entry.query.logic.0.clone(),
            query: entry.text.clone(),
            solution: w.candidate.clone().unwrap_or_default(),
        };
        state.learn(rec, example)?;
    }
    Ok(QueryRecord {
        index,
        id: entry.id.clone(),
        schedule,
        time: outcomes.iter().map(|o| o.time).sum(),
        cost: outcomes.iter().map(|o| o.cost).sum(),
        outcomes,
        winner: won.as_ref().map(|w| w.solver.clone()),
        solved: won.is_some(),
        rewards: won.map(|w| w.rewards).unwrap_or_default(),
    })
}

/// Σ over queries of the time spent if solved, else `2 * T`.
pub fn par2(items: impl IntoIterator<Item = (bool, f64)>, time_budget: f64) -> f64 {
    items.into_iter().map(|(solved, t)| if solved { t } else { 2.0 * time_budget }).sum()
}

/// Aggregate columns of a run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub label: String,
    pub reward: RewardKind,
    pub queries: usize,
    pub solved: usize,
    pub percent_solved: f64,
    pub par2: f64,
    /// Total reward of the summary's reward kind.
    pub total_reward: f64,
    pub total_reward_time: f64,
    pub total_reward_cost: f64,
    pub avg_time: f64,
    pub avg_cost: f64,
}

/// Per-query (solved, time, cost, rewards) to summary.
pub fn aggregate(label: &str, kind: RewardKind, time_budget: f64, items: &[(bool, f64, f64, Rewards)]) -> Summary {
    let n = items.len();
    let solved = items.iter().filter(|i| i.0).count();
    let mean = |f: &dyn Fn(&(bool, f64, f64, Rewards)) -> f64| {
        if n == 0 {
            0.0
        } else {
            items.iter().map(f).sum::<f64>() / n as f64
        }
    };
    Summary {
        label: label.to_string(),
        reward: kind,
        queries: n,
        solved,
        percent_solved: if n == 0 { 0.0 } else { 100.0 * solved as f64 / n as f64 },
        par2: par2(items.iter().map(|i| (i.0, i.1)), time_budget),
        total_reward: items.iter().map(|i| i.3.get(kind)).sum(),
        total_reward_time: items.iter().map(|i| i.3.time).sum(),
        total_reward_cost: items.iter().map(|i| i.3.cost).sum(),
        avg_time: mean(&|i| i.1),
        avg_cost: mean(&|i| i.2),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Skipped {
    pub path: String,
    pub error: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub label: String,
    pub seed: u64,
    pub time_budget: f64,
    pub cost_budget: f64,
    pub records: Vec<QueryRecord>,
    #[serde(default)]
    pub skipped: Vec<Skipped>,
    /// Stopped early; `records` holds the queries processed so far.
    #[serde(default)]
    pub interrupted: bool,
    pub summary: Summary,
}

impl RunReport {
    pub fn summarize(&self, kind: RewardKind) -> Summary {
        let items: Vec<_> = self.records.iter().map(|r| (r.solved, r.time, r.cost, r.rewards)).collect();
        aggregate(&self.label, kind, self.time_budget, &items)
    }

    /// The report with its summary recomputed under `kind`.
    pub fn rescore(&self, kind: RewardKind) -> RunReport {
        RunReport { summary: self.summarize(kind), ..self.clone() }
    }

    /// Running Par-2 after each query.
    pub fn cumulative_par2(&self) -> Vec<(usize, f64)> {
        let mut acc = 0.0;
        self.records
            .iter()
            .enumerate()
            .map(|(i, r)| {
                acc += par2([(r.solved, r.time)], self.time_budget);
                (i + 1, acc)
            })
            .collect()
    }
}

pub fn selector_label(config: &RunConfig) -> String {
    match config.selector {
        SelectorMode::FixedSolver => config.fixed_solver.to_string(),
        s => format!("{}-{}", serde_json::to_value(s).unwrap().as_str().unwrap_or("?"), config.reward),
    }
}

/// Side channels of a corpus run.
#[derive(Default)]
pub struct RunHooks<'a> {
    /// JSON-lines file receiving one [`Event`] per processed query.
    pub events: Option<PathBuf>,
    /// Checked between queries; set to stop with a partial report.
    pub interrupt: Option<&'a AtomicBool>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Event {
    pub seed: u64,
    #[serde(flatten)]
    pub record: QueryRecord,
}

/// Processes `entries` once, in an order shuffled by `seed`, learning
/// online from each success.
pub fn run_corpus(
    entries: &[QueryEntry],
    config: &RunConfig,
    state: &mut SelectorState,
    deployer: &mut dyn Deployer,
    seed: u64,
    hooks: &RunHooks,
) -> Result<RunReport, RunError> {
    if entries.is_empty() {
        return Err(RunError::EmptyCorpus);
    }
    let mut order: Vec<&QueryEntry> = entries.iter().collect();
    order.sort_by(|a, b| a.id.cmp(&b.id));
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut records = Vec::with_capacity(order.len());
    let mut interrupted = false;
    for (i, e) in order.into_iter().enumerate() {
        if hooks.interrupt.is_some_and(|f| f.load(Ordering::Relaxed)) {
            interrupted = true;
            break;
        }
        let r = solve_query(i, e, config, state, deployer)?;
        if let Some(p) = &hooks.events {
            append_jsonl(p, &Event { seed, record: r.clone() })?;
        }
        log::info!(
            "[{}] {} {}",
            i + 1,
            e.id,
            r.winner.as_ref().map_or("unsolved".to_string(), |w| format!("solved by {}", w))
        );
        records.push(r);
    }
    let mut report = RunReport {
        label: selector_label(config),
        seed,
        time_budget: config.time_budget,
        cost_budget: config.cost_budget,
        records,
        skipped: Vec::new(),
        interrupted,
        summary: aggregate("", config.reward, config.time_budget, &[]),
    };
    report.summary = report.summarize(config.reward);
    Ok(report)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MultiReport {
    pub runs: Vec<RunReport>,
    pub mean_solved: f64,
    pub std_solved: f64,
    pub mean_par2: f64,
    pub std_par2: f64,
}

fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    if xs.is_empty() {
        return (0.0, 0.0);
    }
    let m = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (m, 0.0);
    }
    let var = xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (n - 1.0);
    (m, var.sqrt())
}

/// `runs` independent runs from copies of `initial`, with seeds
/// `seed, seed + 1, ...`.
pub fn run_many(
    entries: &[QueryEntry],
    config: &RunConfig,
    initial: &SelectorState,
    deployer: &mut dyn Deployer,
    seed: u64,
    runs: usize,
    hooks: &RunHooks,
) -> Result<MultiReport, RunError> {
    let mut reports = Vec::with_capacity(runs);
    for i in 0..runs as u64 {
        let s = seed.wrapping_add(i);
        let mut state = initial.clone();
        state.rng = ChaCha8Rng::seed_from_u64(s);
        if i > 0 {
            // only the first run extends the persisted state
            state.persist = None;
        }
        let r = run_corpus(entries, config, &mut state, deployer, s, hooks)?;
        let stop = r.interrupted;
        reports.push(r);
        if stop {
            break;
        }
    }
    let solved: Vec<f64> = reports.iter().map(|r| r.summary.solved as f64).collect();
    let p2: Vec<f64> = reports.iter().map(|r| r.summary.par2).collect();
    let (mean_solved, std_solved) = mean_std(&solved);
    let (mean_par2, std_par2) = mean_std(&p2);
    Ok(MultiReport { runs: reports, mean_solved, std_solved, mean_par2, std_par2 })
}

fn cell_items(m: &OutcomeMatrix, pick: impl Fn(&[Cell]) -> Cell, t: f64, c: f64) -> Vec<(bool, f64, f64, Rewards)> {
    m.rows
        .iter()
        .map(|(_, cells)| {
            let x = pick(cells);
            (x.solved, x.time, x.cost, Rewards::compute(x.time, x.cost, t, c, x.solved))
        })
        .collect()
}

/// The solver with the highest `kind` reward on each query (ties: least
/// time, then first column), aggregated.
pub fn virtual_best(
    m: &OutcomeMatrix,
    kind: RewardKind,
    time_budget: f64,
    cost_budget: f64,
) -> Result<Summary, MatrixError> {
    m.check()?;
    let reward = |x: &Cell| Rewards::compute(x.time, x.cost, time_budget, cost_budget, x.solved).get(kind);
    let pick = |cells: &[Cell]| {
        let mut best = cells[0];
        for x in &cells[1..] {
            let (a, b) = (reward(x), reward(&best));
            if a > b || (a == b && x.solved && (!best.solved || x.time < best.time)) {
                best = *x;
            }
        }
        best
    };
    if m.solvers.is_empty() {
        return Ok(aggregate("virtual best", kind, time_budget, &[]));
    }
    Ok(aggregate("virtual best", kind, time_budget, &cell_items(m, pick, time_budget, cost_budget)))
}

/// One column of the matrix run alone with the whole budget.
pub fn single_solver(
    m: &OutcomeMatrix,
    solver: &SolverId,
    kind: RewardKind,
    time_budget: f64,
    cost_budget: f64,
) -> Option<Summary> {
    let col = m.solvers.iter().position(|s| s == solver)?;
    let items = cell_items(m, |cells| cells[col], time_budget, cost_budget);
    Some(aggregate(&solver.to_string(), kind, time_budget, &items))
}

pub const CSV_HEADER: [&str; 8] =
    ["selector", "percent_solved", "solved", "par2", "reward_cost", "reward_time", "avg_time", "avg_cost"];

pub fn write_summary_csv<W: std::io::Write>(w: W, rows: &[Summary]) -> csv::Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(CSV_HEADER)?;
    for s in rows {
        out.write_record([
            s.label.clone(),
            format!("{:.2}", s.percent_solved),
            s.solved.to_string(),
            format!("{:.3}", s.par2),
            format!("{:.6}", s.total_reward_cost),
            format!("{:.6}", s.total_reward_time),
            format!("{:.4}", s.avg_time),
            format!("{:.2}", s.avg_cost),
        ])?;
    }
    out.flush()?;
    Ok(())
}

pub fn write_cumulative_csv<W: std::io::Write>(w: W, points: &[(usize, f64)]) -> csv::Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["query", "cumulative_par2"])?;
    for (i, p) in points {
        out.write_record([i.to_string(), format!("{:.3}", p)])?;
    }
    out.flush()?;
    Ok(())
}
