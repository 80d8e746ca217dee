//! Canonical symbolic forms for partial programs evaluated at one point.
//!
//! Pending holes stay symbolic, everything else is folded to constants.
//! Integer terms are kept as polynomials over holes and opaque atoms, so
//! `(+ v0 (- v1 h))` and `(- (+ v0 v1) h)` meet in the same form when `v0`
//! and `v1` are known. Equal forms denote equal functions of the holes
//! provided no subterm can be undefined.

use alloc::boxed::Box;
use alloc::vec::Vec;

use hashbrown::HashMap;

use crate::eval::{Compiled, Scalar};
use crate::term::Op;

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Sym {
    Const(Scalar),
    Hole(u16),
    /// Sum of `coefficient * product(atoms)`, sorted, without zero terms.
    Poly(Vec<(Vec<Sym>, i64)>),
    /// `p >= 0` for a polynomial `p`.
    GeZero(Box<Sym>),
    /// `p = 0` for a polynomial `p` with positive leading coefficient.
    EqZero(Box<Sym>),
    App(Op, Vec<Sym>),
    Ite(Box<Sym>, Box<Sym>, Box<Sym>),
}

type Poly = Vec<(Vec<Sym>, i64)>;

fn constant(p: &Poly) -> Option<i64> {
    match p.as_slice() {
        [] => Some(0),
        [(atoms, c)] if atoms.is_empty() => Some(*c),
        _ => None,
    }
}

fn poly_of(s: Sym) -> Poly {
    match s {
        Sym::Poly(p) => p,
        Sym::Const(Scalar::Int(0)) => Vec::new(),
        Sym::Const(Scalar::Int(c)) => alloc::vec![(Vec::new(), c)],
        atom => alloc::vec![(alloc::vec![atom], 1)],
    }
}

fn from_poly(p: Poly) -> Sym {
    match constant(&p) {
        Some(c) => Sym::Const(Scalar::Int(c)),
        None => Sym::Poly(p),
    }
}

fn normalize(mut terms: Vec<(Vec<Sym>, i64)>) -> Option<Poly> {
    terms.sort_by(|a, b| a.0.cmp(&b.0));
    let mut out: Poly = Vec::with_capacity(terms.len());
    for (m, c) in terms {
        match out.last_mut() {
            Some((lm, lc)) if *lm == m => *lc = lc.checked_add(c)?,
            _ => out.push((m, c)),
        }
    }
    out.retain(|(_, c)| *c != 0);
    Some(out)
}

fn add(a: Poly, b: Poly, sign: i64) -> Option<Poly> {
    let mut terms = a;
    for (m, c) in b {
        terms.push((m, c.checked_mul(sign)?));
    }
    normalize(terms)
}

fn mul(a: &Poly, b: &Poly) -> Option<Poly> {
    let mut terms = Vec::with_capacity(a.len() * b.len());
    for (ma, ca) in a {
        for (mb, cb) in b {
            let mut m: Vec<Sym> = ma.iter().chain(mb).cloned().collect();
            m.sort();
            terms.push((m, ca.checked_mul(*cb)?));
        }
    }
    normalize(terms)
}

/// Builds canonical forms; caches the constant-folding evaluators.
#[derive(Default)]
pub struct Builder {
    folders: HashMap<(Op, usize), Compiled>,
}

impl Builder {
    pub fn new() -> Self {
        Self::default()
    }

    fn fold(&mut self, op: Op, args: &[Scalar]) -> Option<Scalar> {
        let c = self
            .folders
            .entry((op, args.len()))
            .or_insert_with(|| Compiled::App(op, (0..args.len()).map(Compiled::Slot).collect()));
        c.eval_scalar(args)
    }

    /// Evaluates `c` with its slots bound to `slots`; `None` when a
    /// coefficient or literal does not fit in `i64`.
    pub fn eval(&mut self, c: &Compiled, slots: &[Sym]) -> Option<Sym> {
        Some(match c {
            Compiled::Const(v) => Sym::Const(Scalar::from_value(v)?),
            Compiled::Slot(i) => slots[*i].clone(),
            Compiled::Ite(cond, t, e) => match self.eval(cond, slots)? {
                Sym::Const(Scalar::Bool(true)) => self.eval(t, slots)?,
                Sym::Const(Scalar::Bool(false)) => self.eval(e, slots)?,
                cond => {
                    let (t, e) = (self.eval(t, slots)?, self.eval(e, slots)?);
                    if t == e {
                        t
                    } else {
                        Sym::Ite(Box::new(cond), Box::new(t), Box::new(e))
                    }
                }
            },
            Compiled::App(op, args) => {
                let args = args.iter().map(|a| self.eval(a, slots)).collect::<Option<Vec<Sym>>>()?;
                self.apply(*op, args)?
            }
        })
    }

    fn is_int(s: &Sym) -> bool {
        matches!(s, Sym::Poly(_) | Sym::Const(Scalar::Int(_)))
    }

    pub fn apply(&mut self, op: Op, args: Vec<Sym>) -> Option<Sym> {
        let consts: Option<Vec<Scalar>> = args
            .iter()
            .map(|a| match a {
                Sym::Const(s) => Some(*s),
                _ => None,
            })
            .collect();
        if let Some(cs) = consts {
            return Some(match self.fold(op, &cs) {
                Some(v) => Sym::Const(v),
                None => Sym::App(op, args),
            });
        }
        let ints = args.iter().all(Self::is_int);
        Some(match op {
            Op::Add | Op::Sub | Op::Mul if ints => {
                let mut it = args.into_iter().map(poly_of);
                let first = it.next().unwrap_or_default();
                let r = match op {
                    Op::Sub if it.len() == 0 => add(Vec::new(), first, -1),
                    Op::Add => it.try_fold(first, |acc, p| add(acc, p, 1)),
                    Op::Sub => it.try_fold(first, |acc, p| add(acc, p, -1)),
                    _ => it.try_fold(first, |acc, p| mul(&acc, &p)),
                };
                from_poly(r?)
            }
            Op::Ge | Op::Le | Op::Gt | Op::Lt if ints && args.len() == 2 => {
                let mut it = args.into_iter().map(poly_of);
                let (a, b) = (it.next().unwrap(), it.next().unwrap());
                let diff = match op {
                    Op::Ge => add(a, b, -1),
                    Op::Le => add(b, a, -1),
                    Op::Gt => add(a, b, -1).and_then(|d| add(d, alloc::vec![(Vec::new(), 1)], -1)),
                    _ => add(b, a, -1).and_then(|d| add(d, alloc::vec![(Vec::new(), 1)], -1)),
                };
                let d = diff?;
                match constant(&d) {
                    Some(c) => Sym::Const(Scalar::Bool(c >= 0)),
                    None => Sym::GeZero(Box::new(Sym::Poly(d))),
                }
            }
            Op::Eq if ints && args.len() == 2 => {
                let mut it = args.into_iter().map(poly_of);
                let (a, b) = (it.next().unwrap(), it.next().unwrap());
                let d = add(a, b, -1)?;
                match constant(&d) {
                    Some(c) => Sym::Const(Scalar::Bool(c == 0)),
                    None => {
                        let lead = d.last().map(|(_, c)| *c).unwrap_or(1);
                        let d = if lead < 0 { add(Vec::new(), d, -1)? } else { d };
                        Sym::EqZero(Box::new(Sym::Poly(d)))
                    }
                }
            }
            Op::Eq if args.len() == 2 && args[0] == args[1] => Sym::Const(Scalar::Bool(true)),
            Op::And | Op::Or => {
                let unit = op == Op::And;
                let mut kept = Vec::with_capacity(args.len());
                for a in args {
                    match a {
                        Sym::Const(Scalar::Bool(b)) if b == unit => {}
                        Sym::Const(Scalar::Bool(_)) => return Some(Sym::Const(Scalar::Bool(!unit))),
                        a => kept.push(a),
                    }
                }
                match kept.len() {
                    0 => Sym::Const(Scalar::Bool(unit)),
                    1 => kept.pop().unwrap(),
                    _ => Sym::App(op, kept),
                }
            }
            Op::Not => match args.into_iter().next() {
                Some(Sym::App(Op::Not, mut inner)) if inner.len() == 1 => inner.pop().unwrap(),
                Some(a) => Sym::App(Op::Not, alloc::vec![a]),
                None => return None,
            },
            Op::Implies if args.len() == 2 => match (&args[0], &args[1]) {
                (Sym::Const(Scalar::Bool(false)), _) | (_, Sym::Const(Scalar::Bool(true))) => {
                    Sym::Const(Scalar::Bool(true))
                }
                (Sym::Const(Scalar::Bool(true)), _) => args.into_iter().nth(1).unwrap(),
                _ => Sym::App(op, args),
            },
            _ => Sym::App(op, args),
        })
    }
}

/// 64-bit FNV-1a with a caller-chosen basis.
pub struct Fnv(pub u64);

impl core::hash::Hasher for Fnv {
    fn finish(&self) -> u64 {
        self.0
    }

    fn write(&mut self, bytes: &[u8]) {
        for b in bytes {
            self.0 ^= *b as u64;
            self.0 = self.0.wrapping_mul(0x100_0000_01b3);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::string::String;

    fn compile(text: &str, slots: &[&str]) -> Compiled {
        let e = crate::sexpr::parse_one(text).unwrap();
        let vars: Vec<(String, crate::term::Sort)> =
            slots.iter().map(|v| (String::from(*v), crate::term::Sort::Int)).collect();
        let t = crate::query::read_free_term(&e, &vars).unwrap();
        let names: Vec<String> = slots.iter().map(|s| String::from(*s)).collect();
        Compiled::new(&t, &names).unwrap()
    }

    fn int(i: i64) -> Sym {
        Sym::Const(Scalar::Int(i))
    }

    fn hole(k: u16) -> Sym {
        Sym::Poly(alloc::vec![(alloc::vec![Sym::Hole(k)], 1)])
    }

    #[test]
    fn linear_contexts_meet() {
        let mut b = Builder::new();
        let a = b.eval(&compile("(+ x (- y h))", &["x", "y", "h"]), &[int(2), int(3), hole(0)]);
        let c = b.eval(&compile("(- (+ x y) h)", &["x", "y", "h"]), &[int(2), int(3), hole(0)]);
        let d = b.eval(&compile("(- 5 (* 1 h))", &["h"]), &[hole(0)]);
        assert!(a.is_some());
        assert_eq!(a, c);
        assert_eq!(a, d);
        let e = b.eval(&compile("(- 4 h)", &["h"]), &[hole(0)]);
        assert_ne!(a, e);
    }

    #[test]
    fn folding() {
        let mut b = Builder::new();
        let mut one = |text: &str| b.eval(&compile(text, &["h"]), &[hole(0)]).unwrap();
        assert_eq!(one("(* 0 h)"), int(0));
        assert_eq!(one("(- h h)"), int(0));
        assert_eq!(one("(ite (>= 0 1) h 7)"), int(7));
        assert_eq!(one("(>= 1 h)"), one("(<= (+ h 0) 1)"));
        assert_eq!(one("(= h 2)"), one("(= (- 4 2) h)"));
        assert_eq!(one("(and (>= 1 0) (>= h 0))"), one("(>= h 0)"));
        assert_ne!(one("(>= h 0)"), one("(> h 0)"));
    }

    #[test]
    fn overflow_is_reported() {
        let mut b = Builder::new();
        assert_eq!(b.eval(&compile("(* h 9223372036854775807 2)", &["h"]), &[hole(0)]), None);
    }
}
