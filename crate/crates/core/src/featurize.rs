//! Fixed-width syntactic feature vectors for synthesis queries.

use alloc::vec::Vec;
use core::fmt;

use serde::{Deserialize, Serialize};

use crate::query::{LogicKind, QueryOrigin, SynthQuery};
use crate::term::{Op, Term};

/// Keywords counted in the constraint terms, in vector order.
pub const KEYWORDS: [&str; 22] = [
    "+", "-", "*", "div", "mod", "ite", "and", "or", "not", "=", ">=", "<=", ">", "<", "=>", "bvadd", "bvsub",
    "bvand", "bvor", "bvnot", "bvxor", "bvult",
];

/// Logic categories of the one-hot block, in vector order.
pub const LOGIC_CLASSES: [LogicClass; 6] = [
    LogicClass::Bv,
    LogicClass::Lia,
    LogicClass::Nia,
    LogicClass::Pbe,
    LogicClass::Inv,
    LogicClass::General,
];

pub const LENGTH_INDEX: usize = KEYWORDS.len();
pub const CONSTANTS_INDEX: usize = LENGTH_INDEX + 1;
pub const LOGIC_INDEX: usize = CONSTANTS_INDEX + 3;
pub const DIMENSION: usize = LOGIC_INDEX + LOGIC_CLASSES.len();

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum LogicClass {
    Bv,
    Lia,
    Nia,
    Pbe,
    Inv,
    General,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct FeatureConfig {
    /// Divide keyword and constant counts by the source token count.
    pub normalize_by_length: bool,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct FeatureVector(pub Vec<f64>);

#[derive(Clone, Copy, Debug, PartialEq, Eq, thiserror::Error)]
#[error("feature vectors have different dimensions ({0} and {1})")]
pub struct DimensionMismatch(pub usize, pub usize);

impl FeatureVector {
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn keyword(&self, kw: &str) -> Option<f64> {
        KEYWORDS.iter().position(|k| *k == kw).map(|i| self.0[i])
    }

    pub fn logic_class(&self) -> Option<LogicClass> {
        self.0
            .get(LOGIC_INDEX..LOGIC_INDEX + LOGIC_CLASSES.len())?
            .iter()
            .position(|v| *v == 1.0)
            .map(|i| LOGIC_CLASSES[i])
    }
}

impl fmt::Display for FeatureVector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("[")?;
        for (i, v) in self.0.iter().enumerate() {
            if i > 0 {
                f.write_str(", ")?;
            }
            write!(f, "{}", v)?;
        }
        f.write_str("]")
    }
}

/// Euclidean distance.
pub fn distance(a: &FeatureVector, b: &FeatureVector) -> Result<f64, DimensionMismatch> {
    if a.len() != b.len() {
        return Err(DimensionMismatch(a.len(), b.len()));
    }
    let sum: f64 = a.0.iter().zip(&b.0).map(|(x, y)| (x - y) * (x - y)).sum();
    Ok(libm::sqrt(sum))
}

fn is_literal(t: &Term) -> bool {
    matches!(t, Term::Int(_) | Term::Bool(_) | Term::BitVec { .. })
}

fn is_ground_example(t: &Term, f: &str) -> bool {
    let ground_call = |c: &Term| matches!(c, Term::Call(n, args) if n == f && args.iter().all(is_literal));
    match t {
        Term::App(Op::Eq, args) if args.len() == 2 => {
            (ground_call(&args[0]) && is_literal(&args[1])) || (is_literal(&args[0]) && ground_call(&args[1]))
        }
        _ => false,
    }
}

pub fn classify(query: &SynthQuery) -> LogicClass {
    let f = &query.function.name;
    if !query.constraints.is_empty() && query.constraints.iter().all(|c| is_ground_example(c, f)) {
        return LogicClass::Pbe;
    }
    if query.origin == QueryOrigin::Invariant {
        return LogicClass::Inv;
    }
    match query.logic.kind() {
        LogicKind::Bv => LogicClass::Bv,
        LogicKind::Lia => LogicClass::Lia,
        LogicKind::Nia => LogicClass::Nia,
        LogicKind::Other => LogicClass::General,
    }
}

pub fn featurize(query: &SynthQuery) -> FeatureVector {
    featurize_with(query, &FeatureConfig::default())
}

pub fn featurize_with(query: &SynthQuery, config: &FeatureConfig) -> FeatureVector {
    let mut v = alloc::vec![0.0; DIMENSION];
    for c in &query.constraints {
        c.visit(&mut |t| {
            let kw = match t {
                Term::App(op, _) => op.name(),
                Term::Ite(..) => "ite",
                Term::Int(_) => {
                    v[CONSTANTS_INDEX] += 1.0;
                    return;
                }
                Term::Bool(_) => {
                    v[CONSTANTS_INDEX + 1] += 1.0;
                    return;
                }
                Term::BitVec { .. } => {
                    v[CONSTANTS_INDEX + 2] += 1.0;
                    return;
                }
                _ => return,
            };
            if let Some(i) = KEYWORDS.iter().position(|k| *k == kw) {
                v[i] += 1.0;
            }
        });
    }
    let len = query.source_tokens as f64;
    if config.normalize_by_length && len > 0.0 {
        for x in &mut v[..LENGTH_INDEX] {
            *x /= len;
        }
        for x in &mut v[CONSTANTS_INDEX..LOGIC_INDEX] {
            *x /= len;
        }
    }
    v[LENGTH_INDEX] = len;
    let class = classify(query);
    let slot = LOGIC_CLASSES.iter().position(|c| *c == class).unwrap();
    v[LOGIC_INDEX + slot] = 1.0;
    FeatureVector(v)
}
