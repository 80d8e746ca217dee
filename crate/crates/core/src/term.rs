//! Quantifier-free terms over LIA, BV and Bool.

use alloc::boxed::Box;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use serde::{Deserialize, Serialize};

use crate::value::{bv_literal, Int, Value};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Sort {
    Int,
    Bool,
    BitVec(u32),
}

impl fmt::Display for Sort {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Sort::Int => f.write_str("Int"),
            Sort::Bool => f.write_str("Bool"),
            Sort::BitVec(w) => write!(f, "(_ BitVec {})", w),
        }
    }
}

/// Built-in operator symbols. `ite` is a separate [`Term`] variant.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Op {
    Not,
    And,
    Or,
    Xor,
    Implies,
    Eq,
    Distinct,
    Add,
    /// Binary subtraction, or negation with a single argument.
    Sub,
    Mul,
    Div,
    Mod,
    Abs,
    Le,
    Lt,
    Ge,
    Gt,
    BvAdd,
    BvSub,
    BvMul,
    BvAnd,
    BvOr,
    BvXor,
    BvNot,
    BvNeg,
    BvShl,
    BvLshr,
    BvUdiv,
    BvUrem,
    BvUlt,
    BvUle,
    BvUgt,
    BvUge,
}

/// Minimum and maximum argument counts (`None` = unbounded).
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Arity {
    pub min: usize,
    pub max: Option<usize>,
}

impl Arity {
    const fn exactly(n: usize) -> Self {
        Arity {
            min: n,
            max: Some(n),
        }
    }

    const fn at_least(n: usize) -> Self {
        Arity { min: n, max: None }
    }

    pub fn admits(&self, n: usize) -> bool {
        n >= self.min && self.max.is_none_or(|m| n <= m)
    }
}

impl fmt::Display for Arity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.max {
            Some(m) if m == self.min => write!(f, "{}", m),
            Some(m) => write!(f, "{}..{}", self.min, m),
            None => write!(f, "at least {}", self.min),
        }
    }
}

const ALL_OPS: [Op; 33] = [
    Op::Not,
    Op::And,
    Op::Or,
    Op::Xor,
    Op::Implies,
    Op::Eq,
    Op::Distinct,
    Op::Add,
    Op::Sub,
    Op::Mul,
    Op::Div,
    Op::Mod,
    Op::Abs,
    Op::Le,
    Op::Lt,
    Op::Ge,
    Op::Gt,
    Op::BvAdd,
    Op::BvSub,
    Op::BvMul,
    Op::BvAnd,
    Op::BvOr,
    Op::BvXor,
    Op::BvNot,
    Op::BvNeg,
    Op::BvShl,
    Op::BvLshr,
    Op::BvUdiv,
    Op::BvUrem,
    Op::BvUlt,
    Op::BvUle,
    Op::BvUgt,
    Op::BvUge,
];

impl Op {
    pub fn all() -> &'static [Op] {
        &ALL_OPS
    }

    pub fn name(self) -> &'static str {
        match self {
            Op::Not => "not",
            Op::And => "and",
            Op::Or => "or",
            Op::Xor => "xor",
            Op::Implies => "=>",
            Op::Eq => "=",
            Op::Distinct => "distinct",
            Op::Add => "+",
            Op::Sub => "-",
            Op::Mul => "*",
            Op::Div => "div",
            Op::Mod => "mod",
            Op::Abs => "abs",
            Op::Le => "<=",
            Op::Lt => "<",
            Op::Ge => ">=",
            Op::Gt => ">",
            Op::BvAdd => "bvadd",
            Op::BvSub => "bvsub",
            Op::BvMul => "bvmul",
            Op::BvAnd => "bvand",
            Op::BvOr => "bvor",
            Op::BvXor => "bvxor",
            Op::BvNot => "bvnot",
            Op::BvNeg => "bvneg",
            Op::BvShl => "bvshl",
            Op::BvLshr => "bvlshr",
            Op::BvUdiv => "bvudiv",
            Op::BvUrem => "bvurem",
            Op::BvUlt => "bvult",
            Op::BvUle => "bvule",
            Op::BvUgt => "bvugt",
            Op::BvUge => "bvuge",
        }
    }

    pub fn from_name(name: &str) -> Option<Op> {
        ALL_OPS.iter().copied().find(|op| op.name() == name)
    }

    pub fn arity(self) -> Arity {
        match self {
            Op::Not | Op::Abs | Op::BvNot | Op::BvNeg => Arity::exactly(1),
            Op::Sub => Arity::at_least(1),
            Op::Mod
            | Op::BvSub
            | Op::BvShl
            | Op::BvLshr
            | Op::BvUdiv
            | Op::BvUrem
            | Op::BvUlt
            | Op::BvUle
            | Op::BvUgt
            | Op::BvUge => Arity::exactly(2),
            _ => Arity::at_least(2),
        }
    }

    /// Result sort given argument sorts, or a description of the mismatch.
    pub fn result_sort(self, args: &[Sort]) -> Result<Sort, String> {
        let all = |s: Sort| args.iter().all(|a| *a == s);
        let same_bv = || match args.first() {
            Some(Sort::BitVec(w)) if all(Sort::BitVec(*w)) => Some(Sort::BitVec(*w)),
            _ => None,
        };
        let expect = |ok: bool, res: Sort, want: &str| {
            if ok {
                Ok(res)
            } else {
                Err(format!("`{}` expects {} arguments", self.name(), want))
            }
        };
        match self {
            Op::Not | Op::And | Op::Or | Op::Xor | Op::Implies => {
                expect(all(Sort::Bool), Sort::Bool, "Bool")
            }
            Op::Eq | Op::Distinct => expect(
                args.first().is_none_or(|s| all(*s)),
                Sort::Bool,
                "same-sorted",
            ),
            Op::Add | Op::Sub | Op::Mul | Op::Div | Op::Mod | Op::Abs => {
                expect(all(Sort::Int), Sort::Int, "Int")
            }
            Op::Le | Op::Lt | Op::Ge | Op::Gt => expect(all(Sort::Int), Sort::Bool, "Int"),
            Op::BvUlt | Op::BvUle | Op::BvUgt | Op::BvUge => {
                expect(same_bv().is_some(), Sort::Bool, "same-width bitvector")
            }
            _ => match same_bv() {
                Some(s) => Ok(s),
                None => Err(format!(
                    "`{}` expects same-width bitvector arguments",
                    self.name()
                )),
            },
        }
    }
}

impl fmt::Display for Op {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Expression tree. `Call` is an application of the function being synthesized.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum Term {
    Int(Int),
    Bool(bool),
    BitVec { bits: u64, width: u32 },
    Var(String),
    App(Op, Vec<Term>),
    Ite(Box<Term>, Box<Term>, Box<Term>),
    Call(String, Vec<Term>),
}

impl Term {
    pub fn var(name: &str) -> Term {
        Term::Var(String::from(name))
    }

    pub fn int(v: i64) -> Term {
        Term::Int(Int::Small(v))
    }

    pub fn app(op: Op, args: Vec<Term>) -> Term {
        Term::App(op, args)
    }

    pub fn ite(c: Term, t: Term, e: Term) -> Term {
        Term::Ite(Box::new(c), Box::new(t), Box::new(e))
    }

    pub fn from_value(v: &Value) -> Option<Term> {
        match v {
            Value::Int(i) => Some(Term::Int(i.clone())),
            Value::Bool(b) => Some(Term::Bool(*b)),
            Value::BitVec { bits, width } => Some(Term::BitVec {
                bits: *bits,
                width: *width,
            }),
            Value::Undefined => None,
        }
    }

    /// Conjunction, simplified for zero and one conjuncts.
    pub fn and_all(mut terms: Vec<Term>) -> Term {
        match terms.len() {
            0 => Term::Bool(true),
            1 => terms.pop().unwrap(),
            _ => Term::App(Op::And, terms),
        }
    }

    /// Direct children, in argument order.
    pub fn children(&self) -> Vec<&Term> {
        match self {
            Term::App(_, args) | Term::Call(_, args) => args.iter().collect(),
            Term::Ite(c, t, e) => alloc::vec![c.as_ref(), t.as_ref(), e.as_ref()],
            _ => Vec::new(),
        }
    }

    /// Pre-order visit of every subterm.
    pub fn visit<'a>(&'a self, f: &mut impl FnMut(&'a Term)) {
        f(self);
        for c in self.children() {
            c.visit(f);
        }
    }

    pub fn size(&self) -> usize {
        let mut n = 0;
        self.visit(&mut |_| n += 1);
        n
    }

    pub fn contains_call(&self, name: &str) -> bool {
        let mut found = false;
        self.visit(&mut |t| {
            if let Term::Call(n, _) = t {
                if n == name {
                    found = true;
                }
            }
        });
        found
    }

    /// Sort of the term given the sorts of its free variables and of the
    /// called function (if any).
    pub fn sort(
        &self,
        var_sort: &dyn Fn(&str) -> Option<Sort>,
        call_sort: &dyn Fn(&str) -> Option<Sort>,
    ) -> Result<Sort, String> {
        match self {
            Term::Int(_) => Ok(Sort::Int),
            Term::Bool(_) => Ok(Sort::Bool),
            Term::BitVec { width, .. } => Ok(Sort::BitVec(*width)),
            Term::Var(v) => var_sort(v).ok_or_else(|| format!("undeclared symbol `{}`", v)),
            Term::App(op, args) => {
                if !op.arity().admits(args.len()) {
                    return Err(format!(
                        "`{}` takes {} arguments, got {}",
                        op.name(),
                        op.arity(),
                        args.len()
                    ));
                }
                let sorts = args
                    .iter()
                    .map(|a| a.sort(var_sort, call_sort))
                    .collect::<Result<Vec<_>, _>>()?;
                op.result_sort(&sorts)
            }
            Term::Ite(c, t, e) => {
                if c.sort(var_sort, call_sort)? != Sort::Bool {
                    return Err(String::from("`ite` condition must be Bool"));
                }
                let (ts, es) = (t.sort(var_sort, call_sort)?, e.sort(var_sort, call_sort)?);
                if ts != es {
                    return Err(format!("`ite` branches differ in sort: {} vs {}", ts, es));
                }
                Ok(ts)
            }
            Term::Call(name, args) => {
                for a in args {
                    a.sort(var_sort, call_sort)?;
                }
                call_sort(name).ok_or_else(|| format!("undeclared function `{}`", name))
            }
        }
    }
}

impl fmt::Display for Term {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Term::Int(i) if i.is_negative() => write!(f, "(- {})", i.abs()),
            Term::Int(i) => write!(f, "{}", i),
            Term::Bool(b) => write!(f, "{}", b),
            Term::BitVec { bits, width } => f.write_str(&bv_literal(*bits, *width)),
            Term::Var(v) => f.write_str(v),
            Term::App(op, args) => {
                write!(f, "({}", op.name())?;
                for a in args {
                    write!(f, " {}", a)?;
                }
                f.write_str(")")
            }
            Term::Ite(c, t, e) => write!(f, "(ite {} {} {})", c, t, e),
            Term::Call(name, args) => {
                write!(f, "({}", name)?;
                for a in args {
                    write!(f, " {}", a)?;
                }
                f.write_str(")")
            }
        }
    }
}
