//! Contextual k-nearest-neighbour bandit over solvers, with rewards and a
//! two-layer (model, then prompt) variant.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::featurize::{distance, FeatureVector};

/// Token cost charged for an enumerator run.
pub const ENUMERATOR_COST: f64 = 0.4;

/// Number of prompt styles per model.
pub const PROMPT_STYLES: u8 = 6;

/// A solver: the enumerator, or one LLM paired with one prompt style.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum SolverId {
    Enumerator,
    Llm { model: String, style: u8 },
}

#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
pub enum SolverIdError {
    #[error("prompt style {0} is outside 1..=6")]
    Style(u8),
    #[error("cannot parse solver id `{0}` (expected `enumerator` or `<model>:p<1-6>`)")]
    Syntax(String),
}

impl SolverId {
    pub fn llm(model: &str, style: u8) -> Result<Self, SolverIdError> {
        if !(1..=PROMPT_STYLES).contains(&style) {
            return Err(SolverIdError::Style(style));
        }
        Ok(SolverId::Llm { model: model.to_string(), style })
    }

    pub fn is_enumerator(&self) -> bool {
        matches!(self, SolverId::Enumerator)
    }

    pub fn model_arm(&self) -> ModelArm {
        match self {
            SolverId::Enumerator => ModelArm::Enumerator,
            SolverId::Llm { model, .. } => ModelArm::Llm(model.clone()),
        }
    }

    /// Every style of every model, followed by the enumerator.
    pub fn portfolio(models: &[String], styles: &[u8]) -> Vec<SolverId> {
        let mut out: Vec<SolverId> = models
            .iter()
            .flat_map(|m| styles.iter().map(move |s| SolverId::Llm { model: m.clone(), style: *s }))
            .collect();
        out.push(SolverId::Enumerator);
        out
    }
}

impl fmt::Display for SolverId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SolverId::Enumerator => f.write_str("enumerator"),
            SolverId::Llm { model, style } => write!(f, "{}:p{}", model, style),
        }
    }
}

impl FromStr for SolverId {
    type Err = SolverIdError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s == "enumerator" {
            return Ok(SolverId::Enumerator);
        }
        let (model, style) = s.rsplit_once(':').ok_or_else(|| SolverIdError::Syntax(s.to_string()))?;
        let style: u8 = style
            .strip_prefix('p')
            .and_then(|d| d.parse().ok())
            .ok_or_else(|| SolverIdError::Syntax(s.to_string()))?;
        if model.is_empty() {
            return Err(SolverIdError::Syntax(s.to_string()));
        }
        SolverId::llm(model, style)
    }
}

impl TryFrom<String> for SolverId {
    type Error = SolverIdError;

    fn try_from(s: String) -> Result<Self, Self::Error> {
        s.parse()
    }
}

impl From<SolverId> for String {
    fn from(s: SolverId) -> String {
        s.to_string()
    }
}

/// First-layer arm of the double bandit.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum ModelArm {
    Enumerator,
    Llm(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RewardKind {
    Time,
    Cost,
    Binary,
}

impl FromStr for RewardKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "time" => Ok(RewardKind::Time),
            "cost" => Ok(RewardKind::Cost),
            "binary" => Ok(RewardKind::Binary),
            _ => Err(format!("unknown reward kind `{}` (expected time, cost or binary)", s)),
        }
    }
}

impl fmt::Display for RewardKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            RewardKind::Time => "time",
            RewardKind::Cost => "cost",
            RewardKind::Binary => "binary",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, thiserror::Error)]
pub enum RewardError {
    #[error("negative usage {0}")]
    Negative(f64),
    #[error("usage {used} exceeds budget {budget}")]
    OverBudget { used: f64, budget: f64 },
    #[error("budget must be positive, got {0}")]
    Budget(f64),
}

fn decay(used: f64, budget: f64, solved: bool) -> Result<f64, RewardError> {
    if !(budget > 0.0) {
        return Err(RewardError::Budget(budget));
    }
    if used < 0.0 {
        return Err(RewardError::Negative(used));
    }
    if used > budget {
        return Err(RewardError::OverBudget { used, budget });
    }
    if !solved {
        return Ok(0.0);
    }
    let x = 1.0 - used / budget;
    Ok(x * x * x * x)
}

/// `(1 - t/T)^4` when solved, else 0.
pub fn reward_time(t: f64, budget: f64, solved: bool) -> Result<f64, RewardError> {
    decay(t, budget, solved)
}

/// `(1 - c/C)^4` when solved, else 0.
pub fn reward_cost(c: f64, budget: f64, solved: bool) -> Result<f64, RewardError> {
    decay(c, budget, solved)
}

pub fn reward_binary(solved: bool) -> f64 {
    if solved {
        1.0
    } else {
        0.0
    }
}

/// All three rewards of one outcome.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Rewards {
    pub time: f64,
    pub cost: f64,
    pub binary: f64,
}

impl Rewards {
    /// Usage is clamped into `[0, budget]` first.
    pub fn compute(t: f64, c: f64, time_budget: f64, cost_budget: f64, solved: bool) -> Rewards {
        let clamp = |v: f64, b: f64| v.max(0.0).min(b);
        Rewards {
            time: reward_time(clamp(t, time_budget), time_budget, solved).unwrap_or(0.0),
            cost: reward_cost(clamp(c, cost_budget), cost_budget, solved).unwrap_or(0.0),
            binary: reward_binary(solved),
        }
    }

    pub fn get(&self, kind: RewardKind) -> f64 {
        match kind {
            RewardKind::Time => self.time,
            RewardKind::Cost => self.cost,
            RewardKind::Binary => self.binary,
        }
    }
}

/// `input + 3 * output` for LLM solvers, a constant for the enumerator.
pub fn estimate_cost(input_tokens: u64, output_tokens: u64, solver: &SolverId) -> f64 {
    match solver {
        SolverId::Enumerator => ENUMERATOR_COST,
        SolverId::Llm { .. } => input_tokens as f64 + 3.0 * output_tokens as f64,
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolveRecord<A> {
    pub features: FeatureVector,
    pub solver: A,
    pub reward: f64,
    pub time: f64,
    pub cost: f64,
}

#[derive(Clone, Debug, PartialEq, thiserror::Error)]
pub enum RecordError {
    #[error("reward {0} is outside [0, 1]")]
    Reward(f64),
    #[error("negative or non-finite usage (time {0}, cost {1})")]
    Usage(f64, f64),
}

impl<A> SolveRecord<A> {
    pub fn validate(&self) -> Result<(), RecordError> {
        if !(0.0..=1.0).contains(&self.reward) {
            return Err(RecordError::Reward(self.reward));
        }
        if !(self.time >= 0.0 && self.cost >= 0.0 && self.time.is_finite() && self.cost.is_finite()) {
            return Err(RecordError::Usage(self.time, self.cost));
        }
        Ok(())
    }

    pub fn map_solver<B>(&self, f: impl FnOnce(&A) -> B) -> SolveRecord<B> {
        SolveRecord { features: self.features.clone(), solver: f(&self.solver), reward: self.reward, time: self.time, cost: self.cost }
    }
}

/// Append-only store of successful solves.
#[derive(Clone, Debug, PartialEq)]
pub struct BanditStore<A> {
    records: Vec<SolveRecord<A>>,
}

impl<A> Default for BanditStore<A> {
    fn default() -> Self {
        BanditStore { records: Vec::new() }
    }
}

impl<A: Clone + PartialEq> BanditStore<A> {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_records(records: Vec<SolveRecord<A>>) -> Self {
        BanditStore { records }
    }

    pub fn records(&self) -> &[SolveRecord<A>] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Appends `rec` if `solved`; returns whether the store changed.
    pub fn record_outcome(&mut self, rec: SolveRecord<A>, solved: bool) -> Result<bool, RecordError> {
        rec.validate()?;
        if !solved {
            return Ok(false);
        }
        self.records.push(rec);
        Ok(true)
    }

    /// Indices of the `k` records nearest to `features` among those
    /// accepted by `keep`, nearest first; distance ties keep insertion order.
    pub fn nearest(&self, features: &FeatureVector, k: usize, keep: impl Fn(&A) -> bool) -> Vec<usize> {
        let mut cand: Vec<(f64, usize)> = self
            .records
            .iter()
            .enumerate()
            .filter(|(_, r)| keep(&r.solver))
            .map(|(i, r)| (distance(&r.features, features).unwrap_or(f64::INFINITY), i))
            .collect();
        cand.sort_by(|a, b| a.0.total_cmp(&b.0));
        cand.truncate(k);
        cand.into_iter().map(|(_, i)| i).collect()
    }

    /// Summed rewards of the `k` nearest records among `solvers`, in order
    /// of first appearance in `solvers`. Solvers without a neighbour are absent.
    pub fn scores(&self, features: &FeatureVector, k: usize, solvers: &[A]) -> Vec<(A, f64)> {
        let mut sums: Vec<Option<f64>> = alloc::vec![None; solvers.len()];
        for i in self.nearest(features, k, |s| solvers.contains(s)) {
            let r = &self.records[i];
            let j = solvers.iter().position(|s| *s == r.solver).unwrap();
            *sums[j].get_or_insert(0.0) += r.reward;
        }
        solvers
            .iter()
            .zip(sums)
            .filter_map(|(s, v)| v.map(|v| (s.clone(), v)))
            .collect()
    }
}

/// A ranking: scored solvers (descending) followed by the shuffled rest.
#[derive(Clone, Debug, PartialEq)]
pub struct Ranking<A> {
    pub scored: Vec<(A, f64)>,
    pub unscored: Vec<A>,
}

impl<A: Clone> Ranking<A> {
    pub fn order(&self) -> Vec<A> {
        self.scored.iter().map(|(s, _)| s.clone()).chain(self.unscored.iter().cloned()).collect()
    }
}

/// Single-layer k-NN ranking of `solvers` for `features`.
pub fn rank_single<A: Clone + PartialEq, R: Rng + ?Sized>(
    store: &BanditStore<A>,
    features: &FeatureVector,
    k: usize,
    solvers: &[A],
    rng: &mut R,
) -> Ranking<A> {
    let mut scored = store.scores(features, k.max(1), solvers);
    scored.shuffle(rng);
    scored.sort_by(|a, b| b.1.total_cmp(&a.1));
    let mut unscored: Vec<A> = solvers.iter().filter(|s| !scored.iter().any(|(p, _)| p == *s)).cloned().collect();
    unscored.shuffle(rng);
    Ranking { scored, unscored }
}

/// Stores of the two-layer bandit: one over models, one per model over
/// prompt styles.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct DoubleStore {
    pub models: BanditStore<ModelArm>,
    pub prompts: BTreeMap<String, BanditStore<u8>>,
}

impl DoubleStore {
    pub fn new() -> Self {
        Self::default()
    }

    /// Splits a solver-level record across the two layers.
    pub fn record_outcome(&mut self, rec: &SolveRecord<SolverId>, solved: bool) -> Result<bool, RecordError> {
        let changed = self.models.record_outcome(rec.map_solver(SolverId::model_arm), solved)?;
        if let (true, SolverId::Llm { model, style }) = (changed, &rec.solver) {
            self.prompts.entry(model.clone()).or_default().record_outcome(rec.map_solver(|_| *style), true)?;
        }
        Ok(changed)
    }

    pub fn from_records<'a>(records: impl IntoIterator<Item = &'a SolveRecord<SolverId>>) -> Result<Self, RecordError> {
        let mut s = DoubleStore::new();
        for r in records {
            s.record_outcome(r, true)?;
        }
        Ok(s)
    }
}

/// Two-layer ranking: models first, then each LLM's styles from its own
/// prompt store, flattened into solver order.
pub fn rank_double<R: Rng + ?Sized>(
    store: &DoubleStore,
    features: &FeatureVector,
    k: usize,
    models: &[ModelArm],
    prompts: &BTreeMap<String, Vec<u8>>,
    rng: &mut R,
) -> Vec<SolverId> {
    let empty = BanditStore::new();
    let mut out = Vec::new();
    for arm in rank_single(&store.models, features, k, models, rng).order() {
        match arm {
            ModelArm::Enumerator => out.push(SolverId::Enumerator),
            ModelArm::Llm(model) => {
                let styles = prompts.get(&model).map(Vec::as_slice).unwrap_or(&[]);
                let ps = store.prompts.get(&model).unwrap_or(&empty);
                for style in rank_single(ps, features, k, styles, rng).order() {
                    out.push(SolverId::Llm { model: model.clone(), style });
                }
            }
        }
    }
    out
}

/// Splits a solver portfolio into the double bandit's arms.
pub fn split_portfolio(solvers: &[SolverId]) -> (Vec<ModelArm>, BTreeMap<String, Vec<u8>>) {
    let mut arms: Vec<ModelArm> = Vec::new();
    let mut prompts: BTreeMap<String, Vec<u8>> = BTreeMap::new();
    for s in solvers {
        let arm = s.model_arm();
        if !arms.contains(&arm) {
            arms.push(arm);
        }
        if let SolverId::Llm { model, style } = s {
            prompts.entry(model.clone()).or_default().push(*style);
        }
    }
    (arms, prompts)
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn fv(x: &[f64]) -> FeatureVector {
        FeatureVector(x.to_vec())
    }

    fn rec<A>(x: &[f64], solver: A, reward: f64) -> SolveRecord<A> {
        SolveRecord { features: fv(x), solver, reward, time: 1.0, cost: 1.0 }
    }

    #[test]
    fn reward_values() {
        assert_eq!(reward_time(0.0, 100.0, true), Ok(1.0));
        assert_eq!(reward_time(100.0, 100.0, true), Ok(0.0));
        assert_eq!(reward_time(50.0, 100.0, true), Ok(0.0625));
        assert_eq!(reward_cost(25000.0, 100000.0, true), Ok(0.31640625));
        assert_eq!(reward_cost(10.0, 100000.0, false), Ok(0.0));
        assert!(reward_time(101.0, 100.0, true).is_err());
        assert!(reward_cost(-1.0, 100.0, true).is_err());
        assert_eq!(reward_binary(true), 1.0);
        assert_eq!(reward_binary(false), 0.0);
    }

    #[test]
    fn cost_estimates() {
        let llm = SolverId::llm("m", 1).unwrap();
        assert_eq!(estimate_cost(100, 50, &llm), 250.0);
        assert_eq!(estimate_cost(0, 0, &llm), 0.0);
        assert_eq!(estimate_cost(999, 999, &SolverId::Enumerator), 0.4);
    }

    #[test]
    fn solver_id_text() {
        let s = SolverId::llm("meta/llama:3", 4).unwrap();
        assert_eq!(s.to_string(), "meta/llama:3:p4");
        assert_eq!("meta/llama:3:p4".parse::<SolverId>().unwrap(), s);
        assert_eq!("enumerator".parse::<SolverId>().unwrap(), SolverId::Enumerator);
        assert!("m:p7".parse::<SolverId>().is_err());
        assert!(SolverId::llm("m", 0).is_err());
    }

    #[test]
    fn record_only_successes() {
        let mut s = BanditStore::new();
        assert_eq!(s.record_outcome(rec(&[0.0], 1u8, 0.0), false), Ok(false));
        assert!(s.is_empty());
        s.record_outcome(rec(&[0.0], 1u8, 1.0), true).unwrap();
        s.record_outcome(rec(&[0.0], 2u8, 1.0), true).unwrap();
        assert_eq!(s.records().iter().map(|r| r.solver).collect::<Vec<_>>(), [1, 2]);
        assert!(s.record_outcome(rec(&[0.0], 3u8, 1.5), true).is_err());
    }

    #[test]
    fn summed_scores_rank() {
        let store = BanditStore::from_records(vec![
            rec(&[0.0], "s1", 0.9),
            rec(&[0.1], "s1", 0.8),
            rec(&[0.0], "s2", 1.0),
            rec(&[9.0], "s2", 1.0),
        ]);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let r = rank_single(&store, &fv(&[0.0]), 3, &["s1", "s2", "s3"], &mut rng);
        assert_eq!(r.order(), ["s1", "s2", "s3"]);
        assert!((r.scored[0].1 - 1.7).abs() < 1e-12);
    }

    #[test]
    fn k_boundary_prefers_older() {
        let store = BanditStore::from_records(vec![rec(&[1.0], "a", 0.5), rec(&[1.0], "b", 0.5)]);
        assert_eq!(store.nearest(&fv(&[0.0]), 1, |_| true), [0]);
    }

    #[test]
    fn cold_start_is_a_permutation() {
        let store: BanditStore<u8> = BanditStore::new();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut order = rank_single(&store, &fv(&[0.0]), 15, &[1, 2, 3, 4, 5], &mut rng).order();
        order.sort();
        assert_eq!(order, [1, 2, 3, 4, 5]);
    }

    #[test]
    fn double_layer_isolation() {
        let a = |s| SolverId::llm("A", s).unwrap();
        let b = |s| SolverId::llm("B", s).unwrap();
        let mut store = DoubleStore::new();
        for r in [rec(&[0.0], a(4), 1.0), rec(&[0.0], a(4), 1.0), rec(&[0.0], a(2), 0.5), rec(&[0.0], b(1), 0.7), rec(&[5.0], SolverId::Enumerator, 1.0)] {
            store.record_outcome(&r, true).unwrap();
        }
        assert!(!store.prompts["B"].records().iter().any(|r| r.solver == 4));
        let portfolio = SolverId::portfolio(&["A".to_string(), "B".to_string()], &[1, 2, 3, 4, 5, 6]);
        let (arms, prompts) = split_portfolio(&portfolio);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let order = rank_double(&store, &fv(&[0.0]), 3, &arms, &prompts, &mut rng);
        assert_eq!(order[0], a(4));
        assert_eq!(order.len(), portfolio.len());
    }
}
