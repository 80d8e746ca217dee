//! Concrete SMT-LIB semantics for LIA, BV and Bool.

use alloc::boxed::Box;
use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;

use crate::query::Candidate;
use crate::term::{Op, Term};
use crate::value::{bv_mask, Int, Value};

/// Variable name to value.
pub type Assignment = BTreeMap<String, Value>;

#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
pub enum EvalError {
    #[error("unbound variable `{0}`")]
    Unbound(String),
    #[error("sort mismatch applying `{0}`")]
    SortMismatch(&'static str),
    #[error("call to uninterpreted function `{0}`")]
    Uninterpreted(String),
}

fn ints(args: &[Value]) -> Option<Vec<&Int>> {
    args.iter().map(Value::as_int).collect()
}

fn bools(args: &[Value]) -> Option<Vec<bool>> {
    args.iter().map(Value::as_bool).collect()
}

fn bvs(args: &[Value]) -> Option<(Vec<u64>, u32)> {
    let mut width = None;
    let mut out = Vec::with_capacity(args.len());
    for a in args {
        match a {
            Value::BitVec { bits, width: w } => {
                if *width.get_or_insert(*w) != *w {
                    return None;
                }
                out.push(*bits);
            }
            _ => return None,
        }
    }
    Some((out, width?))
}

fn chain<T>(xs: &[T], rel: impl Fn(&T, &T) -> bool) -> bool {
    xs.windows(2).all(|w| rel(&w[0], &w[1]))
}

/// Applies a built-in operator to already-evaluated arguments.
/// Division by zero yields [`Value::Undefined`]; `Undefined` arguments propagate.
pub fn apply(op: Op, args: &[Value]) -> Result<Value, EvalError> {
    if args.contains(&Value::Undefined) {
        return Ok(Value::Undefined);
    }
    let bad = || EvalError::SortMismatch(op.name());
    let v = match op {
        Op::Not => Value::Bool(!bools(args).ok_or_else(bad)?[0]),
        Op::And => Value::Bool(bools(args).ok_or_else(bad)?.iter().all(|b| *b)),
        Op::Or => Value::Bool(bools(args).ok_or_else(bad)?.iter().any(|b| *b)),
        Op::Xor => Value::Bool(bools(args).ok_or_else(bad)?.iter().fold(false, |a, b| a ^ b)),
        Op::Implies => {
            // right associative
            let bs = bools(args).ok_or_else(bad)?;
            let mut acc = *bs.last().unwrap();
            for b in bs[..bs.len() - 1].iter().rev() {
                acc = !b || acc;
            }
            Value::Bool(acc)
        }
        Op::Eq => Value::Bool(chain(args, |a, b| a == b)),
        Op::Distinct => {
            let mut ok = true;
            for i in 0..args.len() {
                for j in i + 1..args.len() {
                    ok &= args[i] != args[j];
                }
            }
            Value::Bool(ok)
        }
        Op::Add => {
            let xs = ints(args).ok_or_else(bad)?;
            Value::Int(xs.iter().skip(1).fold(xs[0].clone(), |a, b| a.add(b)))
        }
        Op::Sub => {
            let xs = ints(args).ok_or_else(bad)?;
            if xs.len() == 1 {
                Value::Int(xs[0].neg())
            } else {
                Value::Int(xs.iter().skip(1).fold(xs[0].clone(), |a, b| a.sub(b)))
            }
        }
        Op::Mul => {
            let xs = ints(args).ok_or_else(bad)?;
            Value::Int(xs.iter().skip(1).fold(xs[0].clone(), |a, b| a.mul(b)))
        }
        Op::Div => {
            let xs = ints(args).ok_or_else(bad)?;
            let mut acc = xs[0].clone();
            for d in &xs[1..] {
                match acc.div_euclid(d) {
                    Some(q) => acc = q,
                    None => return Ok(Value::Undefined),
                }
            }
            Value::Int(acc)
        }
        Op::Mod => {
            let xs = ints(args).ok_or_else(bad)?;
            match xs[0].rem_euclid(xs[1]) {
                Some(r) => Value::Int(r),
                None => Value::Undefined,
            }
        }
        Op::Abs => Value::Int(ints(args).ok_or_else(bad)?[0].abs()),
        Op::Le => Value::Bool(chain(&ints(args).ok_or_else(bad)?, |a, b| a <= b)),
        Op::Lt => Value::Bool(chain(&ints(args).ok_or_else(bad)?, |a, b| a < b)),
        Op::Ge => Value::Bool(chain(&ints(args).ok_or_else(bad)?, |a, b| a >= b)),
        Op::Gt => Value::Bool(chain(&ints(args).ok_or_else(bad)?, |a, b| a > b)),
        _ => {
            let (xs, w) = bvs(args).ok_or_else(bad)?;
            let m = bv_mask(w);
            let fold = |f: fn(u64, u64) -> u64| xs.iter().skip(1).fold(xs[0], |a, b| f(a, *b)) & m;
            match op {
                Op::BvAdd => Value::bv(fold(u64::wrapping_add), w),
                Op::BvSub => Value::bv(fold(u64::wrapping_sub), w),
                Op::BvMul => Value::bv(fold(u64::wrapping_mul), w),
                Op::BvAnd => Value::bv(fold(|a, b| a & b), w),
                Op::BvOr => Value::bv(fold(|a, b| a | b), w),
                Op::BvXor => Value::bv(fold(|a, b| a ^ b), w),
                Op::BvNot => Value::bv(!xs[0], w),
                Op::BvNeg => Value::bv(xs[0].wrapping_neg(), w),
                Op::BvShl => Value::bv(if xs[1] >= w as u64 { 0 } else { xs[0] << xs[1] }, w),
                Op::BvLshr => Value::bv(if xs[1] >= w as u64 { 0 } else { xs[0] >> xs[1] }, w),
                // SMT-LIB total semantics for unsigned division by zero
                Op::BvUdiv => Value::bv(if xs[1] == 0 { m } else { xs[0] / xs[1] }, w),
                Op::BvUrem => Value::bv(if xs[1] == 0 { xs[0] } else { xs[0] % xs[1] }, w),
                Op::BvUlt => Value::Bool(xs[0] < xs[1]),
                Op::BvUle => Value::Bool(xs[0] <= xs[1]),
                Op::BvUgt => Value::Bool(xs[0] > xs[1]),
                Op::BvUge => Value::Bool(xs[0] >= xs[1]),
                _ => unreachable!("non-bitvector operator {:?}", op),
            }
        }
    };
    Ok(v)
}

/// Evaluates `term` under `env`. Calls to the synthesized function are
/// interpreted by `fun` when given.
pub fn evaluate(term: &Term, env: &Assignment, fun: Option<&Candidate>) -> Result<Value, EvalError> {
    match term {
        Term::Int(i) => Ok(Value::Int(i.clone())),
        Term::Bool(b) => Ok(Value::Bool(*b)),
        Term::BitVec { bits, width } => Ok(Value::bv(*bits, *width)),
        Term::Var(v) => env.get(v).cloned().ok_or_else(|| EvalError::Unbound(v.clone())),
        Term::App(op, args) => {
            let vals = args
                .iter()
                .map(|a| evaluate(a, env, fun))
                .collect::<Result<Vec<_>, _>>()?;
            apply(*op, &vals)
        }
        Term::Ite(c, t, e) => match evaluate(c, env, fun)? {
            Value::Bool(true) => evaluate(t, env, fun),
            Value::Bool(false) => evaluate(e, env, fun),
            Value::Undefined => Ok(Value::Undefined),
            _ => Err(EvalError::SortMismatch("ite")),
        },
        Term::Call(name, args) => {
            let cand = fun
                .filter(|c| c.name == *name)
                .ok_or_else(|| EvalError::Uninterpreted(name.clone()))?;
            let mut inner = Assignment::new();
            for ((p, _), a) in cand.params.iter().zip(args) {
                inner.insert(p.clone(), evaluate(a, env, fun)?);
            }
            evaluate(&cand.body, &inner, None)
        }
    }
}

/// A term with variables resolved to slot indices, for evaluating the same
/// formula at many points.
#[derive(Clone, Debug)]
pub enum Compiled {
    Const(Value),
    Slot(usize),
    App(Op, Vec<Compiled>),
    Ite(Box<Compiled>, Box<Compiled>, Box<Compiled>),
}

impl Compiled {
    /// Compiles a call-free term; `slots` gives the variable order.
    pub fn new(term: &Term, slots: &[String]) -> Result<Compiled, EvalError> {
        Ok(match term {
            Term::Int(_) | Term::Bool(_) | Term::BitVec { .. } => {
                Compiled::Const(evaluate(term, &Assignment::new(), None)?)
            }
            Term::Var(v) => Compiled::Slot(
                slots
                    .iter()
                    .position(|s| s == v)
                    .ok_or_else(|| EvalError::Unbound(v.clone()))?,
            ),
            Term::App(op, args) => Compiled::App(
                *op,
                args.iter().map(|a| Compiled::new(a, slots)).collect::<Result<_, _>>()?,
            ),
            Term::Ite(c, t, e) => Compiled::Ite(
                Box::new(Compiled::new(c, slots)?),
                Box::new(Compiled::new(t, slots)?),
                Box::new(Compiled::new(e, slots)?),
            ),
            Term::Call(name, _) => return Err(EvalError::Uninterpreted(name.clone())),
        })
    }

    pub fn eval(&self, point: &[Value]) -> Result<Value, EvalError> {
        match self {
            Compiled::Const(v) => Ok(v.clone()),
            Compiled::Slot(i) => Ok(point[*i].clone()),
            Compiled::App(op, args) => {
                let vals = args.iter().map(|a| a.eval(point)).collect::<Result<Vec<_>, _>>()?;
                apply(*op, &vals)
            }
            Compiled::Ite(c, t, e) => match c.eval(point)? {
                Value::Bool(true) => t.eval(point),
                Value::Bool(false) => e.eval(point),
                Value::Undefined => Ok(Value::Undefined),
                _ => Err(EvalError::SortMismatch("ite")),
            },
        }
    }
}

/// Copyable value for the allocation-free evaluation path.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Scalar {
    Int(i64),
    Bool(bool),
    BitVec(u64, u32),
    Undefined,
}

impl Scalar {
    /// `None` for integers outside `i64`.
    pub fn from_value(v: &Value) -> Option<Scalar> {
        Some(match v {
            Value::Int(i) => Scalar::Int(i.as_i64()?),
            Value::Bool(b) => Scalar::Bool(*b),
            Value::BitVec { bits, width } => Scalar::BitVec(*bits, *width),
            Value::Undefined => Scalar::Undefined,
        })
    }

    pub fn to_value(self) -> Value {
        match self {
            Scalar::Int(i) => Value::int(i),
            Scalar::Bool(b) => Value::Bool(b),
            Scalar::BitVec(bits, width) => Value::bv(bits, width),
            Scalar::Undefined => Value::Undefined,
        }
    }
}

fn fold_ints(args: &[Compiled], point: &[Scalar], f: impl Fn(i64, i64) -> Option<i64>) -> Option<Scalar> {
    let mut acc: Option<i64> = None;
    let mut undefined = false;
    for a in args {
        match a.eval_scalar(point)? {
            Scalar::Int(v) => acc = Some(match acc { None => v, Some(x) => f(x, v)? }),
            Scalar::Undefined => undefined = true,
            _ => return None,
        }
    }
    Some(if undefined { Scalar::Undefined } else { Scalar::Int(acc?) })
}

fn chain_ints(args: &[Compiled], point: &[Scalar], rel: impl Fn(i64, i64) -> bool) -> Option<Scalar> {
    let mut prev: Option<i64> = None;
    let mut ok = true;
    let mut undefined = false;
    for a in args {
        match a.eval_scalar(point)? {
            Scalar::Int(v) => {
                if let Some(p) = prev {
                    ok &= rel(p, v);
                }
                prev = Some(v);
            }
            Scalar::Undefined => undefined = true,
            _ => return None,
        }
    }
    Some(if undefined { Scalar::Undefined } else { Scalar::Bool(ok) })
}

fn fold_bools(args: &[Compiled], point: &[Scalar], init: bool, f: impl Fn(bool, bool) -> bool) -> Option<Scalar> {
    let mut acc = init;
    let mut undefined = false;
    for a in args {
        match a.eval_scalar(point)? {
            Scalar::Bool(b) => acc = f(acc, b),
            Scalar::Undefined => undefined = true,
            _ => return None,
        }
    }
    Some(if undefined { Scalar::Undefined } else { Scalar::Bool(acc) })
}

impl Compiled {
    /// Evaluation over [`Scalar`]s. Returns `None` when the fast path does
    /// not apply (integer overflow, unusual operators); callers then fall
    /// back to [`Compiled::eval`], which has identical semantics.
    pub fn eval_scalar(&self, point: &[Scalar]) -> Option<Scalar> {
        match self {
            Compiled::Const(v) => Scalar::from_value(v),
            Compiled::Slot(i) => Some(point[*i]),
            Compiled::Ite(c, t, e) => match c.eval_scalar(point)? {
                Scalar::Bool(true) => t.eval_scalar(point),
                Scalar::Bool(false) => e.eval_scalar(point),
                Scalar::Undefined => Some(Scalar::Undefined),
                _ => None,
            },
            Compiled::App(op, args) => match op {
                Op::Add => fold_ints(args, point, i64::checked_add),
                Op::Sub if args.len() == 1 => match args[0].eval_scalar(point)? {
                    Scalar::Int(v) => v.checked_neg().map(Scalar::Int),
                    Scalar::Undefined => Some(Scalar::Undefined),
                    _ => None,
                },
                Op::Sub => fold_ints(args, point, i64::checked_sub),
                Op::Mul => fold_ints(args, point, i64::checked_mul),
                Op::Ge => chain_ints(args, point, |a, b| a >= b),
                Op::Le => chain_ints(args, point, |a, b| a <= b),
                Op::Gt => chain_ints(args, point, |a, b| a > b),
                Op::Lt => chain_ints(args, point, |a, b| a < b),
                Op::And => fold_bools(args, point, true, |a, b| a && b),
                Op::Or => fold_bools(args, point, false, |a, b| a || b),
                Op::Not => match args[0].eval_scalar(point)? {
                    Scalar::Bool(b) => Some(Scalar::Bool(!b)),
                    Scalar::Undefined => Some(Scalar::Undefined),
                    _ => None,
                },
                Op::Implies if args.len() == 2 => {
                    let (a, b) = (args[0].eval_scalar(point)?, args[1].eval_scalar(point)?);
                    match (a, b) {
                        (Scalar::Bool(a), Scalar::Bool(b)) => Some(Scalar::Bool(!a || b)),
                        (Scalar::Undefined, _) | (_, Scalar::Undefined) => Some(Scalar::Undefined),
                        _ => None,
                    }
                }
                Op::Eq if args.len() == 2 => {
                    let (a, b) = (args[0].eval_scalar(point)?, args[1].eval_scalar(point)?);
                    if a == Scalar::Undefined || b == Scalar::Undefined {
                        Some(Scalar::Undefined)
                    } else {
                        Some(Scalar::Bool(a == b))
                    }
                }
                _ => {
                    let mut vals: Vec<Value> = Vec::with_capacity(args.len());
                    for a in args {
                        vals.push(a.eval_scalar(point)?.to_value());
                    }
                    Scalar::from_value(&apply(*op, &vals).ok()?)
                }
            },
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sexpr::parse_one;
    use alloc::vec;

    fn env(pairs: &[(&str, i64)]) -> Assignment {
        pairs.iter().map(|(k, v)| (String::from(*k), Value::int(*v))).collect()
    }

    fn term(text: &str, vars: &[&str]) -> Term {
        let e = parse_one(text).unwrap();
        crate::query::read_free_term(&e, &vars.iter().map(|v| (String::from(*v), crate::term::Sort::Int)).collect::<Vec<_>>())
            .unwrap()
    }

    #[test]
    fn max_semantics() {
        let t = term("(ite (>= v0 v1) v0 v1)", &["v0", "v1"]);
        assert_eq!(evaluate(&t, &env(&[("v0", 3), ("v1", 5)]), None), Ok(Value::int(5)));
    }

    #[test]
    fn addition() {
        let t = term("(+ v0 1)", &["v0"]);
        assert_eq!(evaluate(&t, &env(&[("v0", 41)]), None), Ok(Value::int(42)));
    }

    #[test]
    fn division_by_zero_is_undefined() {
        let t = term("(div v0 0)", &["v0"]);
        assert_eq!(evaluate(&t, &env(&[("v0", 4)]), None), Ok(Value::Undefined));
        let t = term("(>= (mod v0 0) 0)", &["v0"]);
        assert_eq!(evaluate(&t, &env(&[("v0", 4)]), None), Ok(Value::Undefined));
    }

    #[test]
    fn unbound_variable_is_an_error() {
        let t = term("(+ v0 v1)", &["v0", "v1"]);
        assert_eq!(
            evaluate(&t, &env(&[("v0", 1)]), None),
            Err(EvalError::Unbound(String::from("v1")))
        );
    }

    #[test]
    fn chained_comparisons_and_implication() {
        assert_eq!(apply(Op::Le, &[Value::int(1), Value::int(2), Value::int(2)]), Ok(Value::Bool(true)));
        assert_eq!(apply(Op::Lt, &[Value::int(1), Value::int(2), Value::int(2)]), Ok(Value::Bool(false)));
        let (t, f) = (Value::Bool(true), Value::Bool(false));
        assert_eq!(apply(Op::Implies, &[t.clone(), f.clone()]), Ok(f.clone()));
        assert_eq!(apply(Op::Implies, &[f.clone(), t.clone(), f.clone()]), Ok(t));
    }

    #[test]
    fn bitvector_wraps() {
        let r = apply(Op::BvAdd, &[Value::bv(0xff, 8), Value::bv(1, 8)]).unwrap();
        assert_eq!(r, Value::bv(0, 8));
        assert_eq!(apply(Op::BvNot, &[Value::bv(0, 4)]).unwrap(), Value::bv(0xf, 4));
        assert!(apply(Op::BvAdd, &[Value::bv(1, 8), Value::bv(1, 4)]).is_err());
    }

    #[test]
    fn scalar_path_agrees() {
        let vars = ["a", "b"];
        let slots: Vec<String> = vars.iter().map(|v| String::from(*v)).collect();
        for text in [
            "(ite (>= a b) (+ a 1) (* b b))",
            "(and (=> (< a b) (not (= a b))) (or (<= a 0) (> b 0)))",
            "(- (div a b) (mod a 3) (- a))",
            "(+ a 9223372036854775807)",
        ] {
            let c = Compiled::new(&term(text, &vars), &slots).unwrap();
            for (x, y) in [(0, 0), (3, -2), (-7, 5), (i64::MAX, 1)] {
                let slow = c.eval(&[Value::int(x), Value::int(y)]).unwrap();
                if let Some(fast) = c.eval_scalar(&[Scalar::Int(x), Scalar::Int(y)]) {
                    assert_eq!(fast.to_value(), slow, "{} at ({}, {})", text, x, y);
                }
            }
        }
    }

    #[test]
    fn compiled_matches_tree_evaluation() {
        let t = term("(ite (> (* v0 2) v1) (- v0 v1) (mod v1 3))", &["v0", "v1"]);
        let slots = vec![String::from("v0"), String::from("v1")];
        let c = Compiled::new(&t, &slots).unwrap();
        for a in -4..4 {
            for b in -4..4 {
                let e = env(&[("v0", a), ("v1", b)]);
                assert_eq!(c.eval(&[Value::int(a), Value::int(b)]), evaluate(&t, &e, None));
            }
        }
    }
}
