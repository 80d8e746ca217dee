//! Candidate checking: bounded internal search for a falsifying input, and
//! the text side of an external SMT check (script emission, output parsing).

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::deadline::Deadline;
use crate::eval::{evaluate, Assignment, Compiled, Scalar};
use crate::query::{substituted_constraints, Candidate, SynthQuery};
use crate::sexpr::{parse_all, Atom, SExpr};
use crate::term::{Sort, Term};
use crate::value::{bv_mask, Int, Value};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Confidence {
    /// The whole input space was covered, or an SMT solver proved it.
    Proven,
    /// No falsifying input within the searched region.
    Bounded,
}

#[derive(Clone, Debug, PartialEq)]
pub enum Verdict {
    Valid(Confidence),
    /// `violated` indexes the first falsified constraint.
    Counterexample { assignment: Assignment, violated: usize },
    Unknown(String),
}

impl Verdict {
    pub fn is_valid(&self) -> bool {
        matches!(self, Verdict::Valid(_))
    }
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Verdict::Valid(Confidence::Proven) => f.write_str("valid"),
            Verdict::Valid(Confidence::Bounded) => f.write_str("valid (bounded)"),
            Verdict::Counterexample { assignment, .. } => write!(f, "counterexample {}", format_assignment(assignment)),
            Verdict::Unknown(why) => write!(f, "unknown ({})", why),
        }
    }
}

/// `v0 = 0, v1 = (- 3)`.
pub fn format_assignment(a: &Assignment) -> String {
    let parts: Vec<String> = a.iter().map(|(k, v)| format!("{} = {}", k, v.to_smtlib())).collect();
    parts.join(", ")
}

/// Decides whether a candidate satisfies a query.
pub trait Verifier {
    fn verify(&mut self, query: &SynthQuery, cand: &Candidate, deadline: &dyn Deadline) -> Verdict;

    /// Short label recorded as the verdict's provenance.
    fn name(&self) -> &str;
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SearchConfig {
    /// Grid half-width B: integers in `[-B, B]`.
    pub grid_bound: i64,
    /// The grid is only searched for at most this many variables.
    pub grid_max_vars: usize,
    pub samples: usize,
    /// Half of the random samples are drawn from `[-wide_range, wide_range]`.
    pub wide_range: i64,
    pub seed: u64,
}

impl Default for SearchConfig {
    fn default() -> Self {
        SearchConfig { grid_bound: 32, grid_max_vars: 3, samples: 10_000, wide_range: 1_000_000, seed: 0x5eed }
    }
}

/// `0, 1, -1, 2, -2, ...` within `[-bound, bound]`.
fn int_grid(bound: i64) -> Vec<Value> {
    let mut out = alloc::vec![Value::int(0)];
    for i in 1..=bound {
        out.push(Value::int(i));
        out.push(Value::int(-i));
    }
    out
}

/// Small bitvector widths are enumerated fully.
const FULL_BV_WIDTH: u32 = 6;

fn domain(sort: Sort, bound: i64) -> (Vec<Value>, bool) {
    match sort {
        Sort::Bool => (alloc::vec![Value::Bool(false), Value::Bool(true)], true),
        Sort::Int => (int_grid(bound), false),
        Sort::BitVec(w) if w <= FULL_BV_WIDTH => ((0..1u64 << w).map(|b| Value::bv(b, w)).collect(), true),
        Sort::BitVec(w) => {
            let m = bv_mask(w);
            let mut out = alloc::vec![Value::bv(0, w)];
            for i in 1..=bound.max(0) as u64 {
                out.push(Value::bv(i, w));
                out.push(Value::bv(m.wrapping_sub(i - 1) & m, w));
            }
            (out, false)
        }
    }
}

fn random_value(sort: Sort, rng: &mut ChaCha8Rng, cfg: &SearchConfig) -> Value {
    let wide = rng.gen_bool(0.5);
    match sort {
        Sort::Bool => Value::Bool(rng.gen()),
        Sort::Int => {
            let r = if wide { cfg.wide_range } else { cfg.grid_bound };
            Value::int(rng.gen_range(-r..=r))
        }
        Sort::BitVec(w) => {
            let bits: u64 = if wide { rng.gen() } else { rng.gen_range(0..=cfg.grid_bound.max(0) as u64) };
            Value::bv(bits, w)
        }
    }
}

/// Default value of a sort, used for variables an SMT model leaves out.
pub fn zero_of(sort: Sort) -> Value {
    match sort {
        Sort::Int => Value::Int(Int::zero()),
        Sort::Bool => Value::Bool(false),
        Sort::BitVec(w) => Value::bv(0, w),
    }
}

struct Checker {
    names: Vec<String>,
    constraints: Vec<Compiled>,
    scalars: Vec<Scalar>,
    saw_undefined: bool,
}

impl Checker {
    /// Index of the first constraint that evaluates to false at `point`.
    fn falsified(&mut self, point: &[Value]) -> Option<usize> {
        self.scalars.clear();
        let fast = point.iter().map(Scalar::from_value).all(|s| match s {
            Some(s) => {
                self.scalars.push(s);
                true
            }
            None => false,
        });
        for (i, c) in self.constraints.iter().enumerate() {
            let v = match fast.then(|| c.eval_scalar(&self.scalars)).flatten() {
                Some(s) => Ok(s.to_value()),
                None => c.eval(point),
            };
            match v {
                Ok(Value::Bool(true)) => {}
                Ok(Value::Bool(false)) => return Some(i),
                _ => self.saw_undefined = true,
            }
        }
        None
    }

    fn assignment(&self, point: &[Value]) -> Assignment {
        self.names.iter().cloned().zip(point.iter().cloned()).collect()
    }
}

/// Searches for an input falsifying `φ(cand)`: an exhaustive grid over the
/// universal variables when there are few of them, then seeded random
/// samples. Any counterexample returned has been re-checked by evaluation.
pub fn check_candidate_internal(
    query: &SynthQuery,
    cand: &Candidate,
    cfg: &SearchConfig,
    deadline: &dyn Deadline,
) -> Verdict {
    if !query.logic.is_internal() {
        return Verdict::Unknown(format!("logic {} is not supported by the internal checker", query.logic));
    }
    let substituted = match substituted_constraints(query, cand) {
        Ok(c) => c,
        Err(e) => return Verdict::Unknown(e.to_string()),
    };
    if substituted.is_empty() {
        return Verdict::Valid(Confidence::Proven);
    }
    let names: Vec<String> = query.variables.iter().map(|(n, _)| n.clone()).collect();
    let sorts: Vec<Sort> = query.variables.iter().map(|(_, s)| *s).collect();
    let compiled = match substituted.iter().map(|t| Compiled::new(t, &names)).collect::<Result<Vec<_>, _>>() {
        Ok(c) => c,
        Err(e) => return Verdict::Unknown(e.to_string()),
    };
    let mut checker = Checker { names, constraints: compiled, scalars: Vec::new(), saw_undefined: false };
    let found = |checker: &Checker, point: &[Value], violated: usize| {
        let assignment = checker.assignment(point);
        // re-check through the reference evaluator before reporting
        match evaluate(&query.constraints[violated], &assignment, Some(cand)) {
            Ok(Value::Bool(false)) => Some(Verdict::Counterexample { assignment, violated }),
            _ => None,
        }
    };

    let n = sorts.len();
    let mut exhaustive = n == 0;
    if n <= cfg.grid_max_vars {
        let domains: Vec<(Vec<Value>, bool)> = sorts.iter().map(|s| domain(*s, cfg.grid_bound)).collect();
        exhaustive = domains.iter().all(|(_, full)| *full);
        // shells of growing magnitude: index i of a domain lies in shell (i + 1) / 2
        let shell_of = |i: usize| i.div_ceil(2);
        let top = domains.iter().map(|(d, _)| shell_of(d.len() - 1)).max().unwrap_or(0);
        let mut steps = 0u64;
        for shell in 0..=top {
            let lim: Vec<usize> = domains.iter().map(|(d, _)| d.len().min(2 * shell + 1)).collect();
            let mut idx = alloc::vec![0usize; n];
            let mut point: Vec<Value> = domains.iter().map(|(d, _)| d[0].clone()).collect();
            'odometer: loop {
                if n == 0 || idx.iter().any(|&i| shell_of(i) == shell) {
                    if steps & 1023 == 0 && deadline.expired() {
                        return Verdict::Unknown("deadline reached during grid search".to_string());
                    }
                    steps += 1;
                    if let Some(v) = checker.falsified(&point) {
                        if let Some(verdict) = found(&checker, &point, v) {
                            return verdict;
                        }
                    }
                }
                // last variable fastest
                let mut i = n;
                loop {
                    if i == 0 {
                        break 'odometer;
                    }
                    i -= 1;
                    idx[i] += 1;
                    if idx[i] < lim[i] {
                        point[i] = domains[i].0[idx[i]].clone();
                        break;
                    }
                    idx[i] = 0;
                    point[i] = domains[i].0[0].clone();
                }
            }
        }
    }
    if !exhaustive {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let mut point: Vec<Value> = sorts.iter().map(|s| zero_of(*s)).collect();
        for s in 0..cfg.samples {
            if s & 255 == 0 && deadline.expired() {
                return Verdict::Unknown("deadline reached during random search".to_string());
            }
            for (slot, sort) in point.iter_mut().zip(&sorts) {
                *slot = random_value(*sort, &mut rng, cfg);
            }
            if let Some(v) = checker.falsified(&point) {
                if let Some(verdict) = found(&checker, &point, v) {
                    return verdict;
                }
            }
        }
    }
    if exhaustive && !checker.saw_undefined {
        Verdict::Valid(Confidence::Proven)
    } else {
        Verdict::Valid(Confidence::Bounded)
    }
}

/// The bounded internal checker as a [`Verifier`].
#[derive(Clone, Debug, Default)]
pub struct InternalVerifier {
    pub config: SearchConfig,
}

impl InternalVerifier {
    pub fn new(config: SearchConfig) -> Self {
        InternalVerifier { config }
    }
}

impl Verifier for InternalVerifier {
    fn verify(&mut self, query: &SynthQuery, cand: &Candidate, deadline: &dyn Deadline) -> Verdict {
        check_candidate_internal(query, cand, &self.config, deadline)
    }

    fn name(&self) -> &str {
        "internal"
    }
}

/// SMT-LIB2 script asserting `¬φ(f)` with the universal variables as
/// constants and `f` defined by the candidate.
pub fn emit_smtlib(query: &SynthQuery, cand: &Candidate) -> String {
    let mut out = String::new();
    out.push_str(&format!("(set-logic {})\n", query.logic));
    for (n, s) in &query.variables {
        out.push_str(&format!("(declare-const {} {})\n", n, s));
    }
    out.push_str(&cand.to_define_fun());
    out.push('\n');
    let conj = Term::and_all(query.constraints.clone());
    out.push_str(&format!("(assert (not {}))\n", conj));
    out.push_str("(check-sat)\n(get-model)\n");
    out
}

#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
pub enum ModelError {
    #[error("solver output is empty")]
    Empty,
    #[error("unexpected solver answer `{0}`")]
    Answer(String),
    #[error("malformed model: {0}")]
    Malformed(String),
}

/// First answer line of a solver run.
#[derive(Clone, Debug, PartialEq)]
pub enum SolverAnswer {
    Sat(Assignment),
    Unsat,
    Unknown,
}

fn read_value(e: &SExpr, sort: Sort) -> Option<Value> {
    match (e, sort) {
        (SExpr::Atom(Atom::Numeral(n), _), Sort::Int) => Int::parse_decimal(n).map(Value::Int),
        (SExpr::Atom(Atom::Symbol(s), _), Sort::Bool) => match s.as_str() {
            "true" => Some(Value::Bool(true)),
            "false" => Some(Value::Bool(false)),
            _ => None,
        },
        (SExpr::Atom(Atom::Binary(d), _), Sort::BitVec(w)) => u64::from_str_radix(d, 2).ok().map(|b| Value::bv(b, w)),
        (SExpr::Atom(Atom::Hex(d), _), Sort::BitVec(w)) => u64::from_str_radix(d, 16).ok().map(|b| Value::bv(b, w)),
        (SExpr::List(items, _), _) => match items.as_slice() {
            [SExpr::Atom(Atom::Symbol(m), _), inner] if m == "-" && sort == Sort::Int => {
                read_value(inner, sort).and_then(|v| v.as_int().map(|i| Value::Int(i.neg())))
            }
            [SExpr::Atom(Atom::Symbol(u), _), SExpr::Atom(Atom::Symbol(bv), _), SExpr::Atom(Atom::Numeral(_), _)]
                if u == "_" && bv.starts_with("bv") =>
            {
                let Sort::BitVec(w) = sort else { return None };
                bv[2..].parse::<u64>().ok().map(|b| Value::bv(b, w))
            }
            _ => None,
        },
        _ => None,
    }
}

/// Reads `sat`/`unsat`/`unknown` followed, for `sat`, by a model of
/// `define-fun` entries. Variables missing from the model default to zero.
pub fn parse_solver_output(text: &str, variables: &[(String, Sort)]) -> Result<SolverAnswer, ModelError> {
    let exprs = parse_all(text).map_err(|e| ModelError::Malformed(e.to_string()))?;
    let (first, rest) = exprs.split_first().ok_or(ModelError::Empty)?;
    match first.as_symbol() {
        Some("unsat") => return Ok(SolverAnswer::Unsat),
        Some("unknown") | Some("timeout") => return Ok(SolverAnswer::Unknown),
        Some("sat") => {}
        _ => return Err(ModelError::Answer(first.to_string())),
    }
    let mut a: Assignment = variables.iter().map(|(n, s)| (n.clone(), zero_of(*s))).collect();
    let Some(model) = rest.first() else {
        return Ok(SolverAnswer::Sat(a));
    };
    let mut entries = model.as_list().ok_or_else(|| ModelError::Malformed(model.to_string()))?;
    if entries.first().and_then(SExpr::as_symbol) == Some("model") {
        entries = &entries[1..];
    }
    for d in entries {
        match d.as_list() {
            Some([h, name, params, _sort, value]) if h.as_symbol() == Some("define-fun") => {
                if params.as_list().is_none_or(|p| !p.is_empty()) {
                    continue;
                }
                let name = name.as_symbol().ok_or_else(|| ModelError::Malformed(d.to_string()))?;
                if let Some((_, sort)) = variables.iter().find(|(n, _)| n == name) {
                    let v = read_value(value, *sort).ok_or_else(|| ModelError::Malformed(d.to_string()))?;
                    a.insert(name.to_string(), v);
                }
            }
            _ => return Err(ModelError::Malformed(d.to_string())),
        }
    }
    Ok(SolverAnswer::Sat(a))
}

/// Maps a solver answer to a verdict, re-checking any model by evaluation.
pub fn verdict_from_answer(query: &SynthQuery, cand: &Candidate, answer: SolverAnswer) -> Verdict {
    match answer {
        SolverAnswer::Unsat => Verdict::Valid(Confidence::Proven),
        SolverAnswer::Unknown => Verdict::Unknown("solver returned unknown".to_string()),
        SolverAnswer::Sat(assignment) => {
            for (i, c) in query.constraints.iter().enumerate() {
                if let Ok(Value::Bool(false)) = evaluate(c, &assignment, Some(cand)) {
                    return Verdict::Counterexample { assignment, violated: i };
                }
            }
            Verdict::Unknown("solver model does not falsify any constraint".to_string())
        }
    }
}
