//! Time and token budget allocation from exponential fits of past usage.

use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::bandit::BanditStore;
use crate::featurize::FeatureVector;

/// Samples below this are raised to it before fitting.
pub const MIN_SAMPLE: f64 = 1e-3;

pub const DEFAULT_DELTA: f64 = 0.05;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExponentialFit {
    pub rate: f64,
    pub samples: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, thiserror::Error)]
pub enum FitError {
    #[error("no samples to fit")]
    Empty,
    #[error("sample {0} is not positive and finite")]
    NonPositive(f64),
}

/// Maximum-likelihood rate `n / sum(u)`.
pub fn fit_exponential(samples: &[f64]) -> Result<ExponentialFit, FitError> {
    if samples.is_empty() {
        return Err(FitError::Empty);
    }
    let mut sum = 0.0;
    for &u in samples {
        if !(u > 0.0 && u.is_finite()) {
            return Err(FitError::NonPositive(u));
        }
        sum += u;
    }
    Ok(ExponentialFit { rate: samples.len() as f64 / sum, samples: samples.len() })
}

/// Smallest allocation `a` with `P(a < v < budget) <= delta` under `fit`:
/// `a = -ln(delta + exp(-rate * budget)) / rate`, clamped into `[0, budget]`.
pub fn allocate_one(fit: &ExponentialFit, budget: f64, delta: f64) -> f64 {
    let l = fit.rate;
    let a = -libm::log(delta + libm::exp(-l * budget)) / l;
    a.max(0.0).min(budget)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Dimension {
    Cost,
    Time,
}

fn samples_for<A: Clone + PartialEq>(
    store: &BanditStore<A>,
    solver: &A,
    features: &FeatureVector,
    k: usize,
    dim: Dimension,
) -> Vec<f64> {
    store
        .nearest(features, k, |s| s == solver)
        .into_iter()
        .map(|i| {
            let r = &store.records()[i];
            match dim {
                Dimension::Cost => r.cost,
                Dimension::Time => r.time,
            }
            .max(MIN_SAMPLE)
        })
        .collect()
}

/// Greedy walk over `ranking`: each solver gets its tail-bound allocation
/// (or, without samples, an even share among the remaining sample-less
/// solvers), capped by what is left; leftovers go to the last solver.
pub fn allocate_sequence<A: Clone + PartialEq>(
    ranking: &[A],
    store: &BanditStore<A>,
    features: &FeatureVector,
    k: usize,
    budget: f64,
    delta: f64,
    dim: Dimension,
) -> Vec<f64> {
    let samples: Vec<Vec<f64>> = ranking.iter().map(|s| samples_for(store, s, features, k.max(1), dim)).collect();
    let mut out = alloc::vec![0.0; ranking.len()];
    let mut remaining = budget;
    for i in 0..ranking.len() {
        if remaining <= 0.0 {
            break;
        }
        let want = match fit_exponential(&samples[i]) {
            Ok(fit) => allocate_one(&fit, budget, delta),
            Err(_) => {
                let sampleless = samples[i..].iter().filter(|s| s.is_empty()).count();
                remaining / sampleless as f64
            }
        };
        let a = want.min(remaining);
        out[i] = a;
        remaining -= a;
    }
    if remaining > 0.0 {
        if let Some(last) = out.last_mut() {
            *last += remaining;
        }
    }
    out
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Allocation<A> {
    pub solver: A,
    pub time: f64,
    pub cost: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolverSchedule<A> {
    pub entries: Vec<Allocation<A>>,
}

impl<A> SolverSchedule<A> {
    pub fn total_time(&self) -> f64 {
        self.entries.iter().map(|e| e.time).sum()
    }

    pub fn total_cost(&self) -> f64 {
        self.entries.iter().map(|e| e.cost).sum()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BudgetConfig {
    pub time: f64,
    pub cost: f64,
    pub k: usize,
    /// Tail bound for time allocations.
    pub delta_time: f64,
    /// Tail bound for cost allocations.
    pub delta_cost: f64,
}

impl Default for BudgetConfig {
    fn default() -> Self {
        BudgetConfig { time: 100.0, cost: 100_000.0, k: 15, delta_time: DEFAULT_DELTA, delta_cost: DEFAULT_DELTA }
    }
}

/// Cost walk over the whole ranking, then a time walk over only the
/// solvers that received tokens; zero-cost solvers get zero time.
pub fn build_schedule<A: Clone + PartialEq>(
    ranking: &[A],
    store: &BanditStore<A>,
    features: &FeatureVector,
    config: &BudgetConfig,
) -> SolverSchedule<A> {
    let costs = allocate_sequence(ranking, store, features, config.k, config.cost, config.delta_cost, Dimension::Cost);
    let funded: Vec<A> = ranking.iter().zip(&costs).filter(|(_, c)| **c > 0.0).map(|(s, _)| s.clone()).collect();
    let times = allocate_sequence(&funded, store, features, config.k, config.time, config.delta_time, Dimension::Time);
    let mut t = times.into_iter();
    let entries = ranking
        .iter()
        .zip(costs)
        .map(|(s, cost)| Allocation { solver: s.clone(), cost, time: if cost > 0.0 { t.next().unwrap() } else { 0.0 } })
        .collect();
    SolverSchedule { entries }
}

/// Equal split of both budgets.
pub fn linear_schedule<A: Clone>(ranking: &[A], time: f64, cost: f64) -> SolverSchedule<A> {
    let n = ranking.len().max(1) as f64;
    SolverSchedule {
        entries: ranking.iter().map(|s| Allocation { solver: s.clone(), time: time / n, cost: cost / n }).collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bandit::SolveRecord;
    use alloc::vec;

    fn fv() -> FeatureVector {
        FeatureVector(vec![0.0])
    }

    fn store(recs: &[(&'static str, f64, f64)]) -> BanditStore<&'static str> {
        BanditStore::from_records(
            recs.iter().map(|(s, t, c)| SolveRecord { features: fv(), solver: *s, reward: 1.0, time: *t, cost: *c }).collect(),
        )
    }

    #[test]
    fn fits() {
        assert_eq!(fit_exponential(&[2.0, 2.0, 2.0]).unwrap().rate, 0.5);
        assert_eq!(fit_exponential(&[10.0]).unwrap().rate, 0.1);
        assert_eq!(fit_exponential(&[]), Err(FitError::Empty));
        assert_eq!(fit_exponential(&[1.0, 0.0]), Err(FitError::NonPositive(0.0)));
    }

    #[test]
    fn closed_form() {
        let fit = ExponentialFit { rate: 0.01, samples: 1 };
        let a = allocate_one(&fit, 1000.0, 0.05);
        let expected = -libm::log(0.05 + libm::exp(-10.0)) / 0.01;
        assert!((a - expected).abs() < 1e-9);
        assert!((a - 299.5).abs() < 0.1);
        assert!(allocate_one(&fit, 1000.0, 1.0 - 1e-12) < 1e-6);
        let cheap = ExponentialFit { rate: 1e6, samples: 1 };
        assert!(allocate_one(&cheap, 1000.0, 0.05) < 1e-4);
    }

    #[test]
    fn single_solver_takes_everything() {
        let s = store(&[("a", 1.0, 1.0)]);
        assert_eq!(allocate_sequence(&["a"], &s, &fv(), 15, 100.0, 0.05, Dimension::Cost), [100.0]);
    }

    #[test]
    fn greedy_exhaustion() {
        // each solver wants exactly half of B = 100: bisect the rate
        let want = 50.0;
        let u = {
            let (mut lo, mut hi) = (1e-6f64, 10.0f64);
            for _ in 0..200 {
                let mid = (lo + hi) / 2.0;
                let a = -libm::log(0.05 + libm::exp(-100.0 * mid)) / mid;
                if a > want {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            1.0 / lo
        };
        let s = store(&[("a", u, u), ("b", u, u), ("c", u, u)]);
        let out = allocate_sequence(&["a", "b", "c"], &s, &fv(), 15, 100.0, 0.05, Dimension::Cost);
        assert!((out[0] - 50.0).abs() < 1e-6 && (out[1] - 50.0).abs() < 1e-6);
        assert!(out[2].abs() < 1e-6);
    }

    #[test]
    fn coupling_and_cold_start() {
        let empty: BanditStore<&str> = BanditStore::new();
        let sched = build_schedule(&["a", "b", "c", "d"], &empty, &fv(), &BudgetConfig::default());
        for e in &sched.entries {
            assert!((e.cost - 25_000.0).abs() < 1e-6 && (e.time - 25.0).abs() < 1e-9);
        }
        let only = build_schedule(&["enumerator"], &empty, &fv(), &BudgetConfig::default());
        assert_eq!((only.entries[0].time, only.entries[0].cost), (100.0, 100_000.0));
        // "a" almost never finishes within C, so the tail bound holds at zero.
        let s = store(&[("a", 1.0, 1e9)]);
        let sched = build_schedule(&["a", "b"], &s, &fv(), &BudgetConfig::default());
        assert_eq!((sched.entries[0].cost, sched.entries[0].time), (0.0, 0.0));
        assert_eq!((sched.entries[1].cost, sched.entries[1].time), (100_000.0, 100.0));
        // "a" is cheap but its cost grabs exactly what it wants; "b" is starved.
        let s = store(&[("a", 1.0, 100.0), ("b", 1.0, 1e4)]);
        let sched = build_schedule(&["b", "a"], &s, &fv(), &BudgetConfig { cost: 1000.0, ..BudgetConfig::default() });
        assert!(sched.entries[0].cost > 0.0);
        assert!((sched.total_cost() - 1000.0).abs() < 1e-9);
    }

    #[test]
    fn linear_split() {
        let s = linear_schedule(&[1, 2, 3, 4], 100.0, 100_000.0);
        assert!(s.entries.iter().all(|e| e.time == 25.0 && e.cost == 25_000.0));
    }
}
