//! SyGuS-IF synthesis queries: parsing, printing, candidates, and substitution.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use serde::{Deserialize, Serialize};

use crate::grammar::{default_grammar, Grammar, GrammarBuilder, GrammarError, GrammarFamily, Head, Pattern};
use crate::sexpr::{parse_counting, Atom, Pos, SExpr, SyntaxError};
use crate::term::{Op, Sort, Term};
use crate::value::{Int, Value};

/// The `set-logic` tag, kept verbatim.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Logic(pub String);

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LogicKind {
    Lia,
    Nia,
    Bv,
    Other,
}

impl Logic {
    pub fn new(tag: &str) -> Self {
        Logic(tag.to_string())
    }

    pub fn kind(&self) -> LogicKind {
        let tag = self.0.strip_prefix("QF_").unwrap_or(&self.0);
        match tag {
            "LIA" => LogicKind::Lia,
            "NIA" => LogicKind::Nia,
            "BV" => LogicKind::Bv,
            _ => LogicKind::Other,
        }
    }

    /// Whether the internal evaluator and default grammar cover this logic.
    pub fn is_internal(&self) -> bool {
        self.kind() != LogicKind::Other
    }
}

impl fmt::Display for Logic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// Signature of the function to synthesize.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct SynthFun {
    pub name: String,
    pub params: Vec<(String, Sort)>,
    pub ret: Sort,
}

impl SynthFun {
    fn param_list(&self) -> String {
        let ps: Vec<String> = self.params.iter().map(|(n, s)| format!("({} {})", n, s)).collect();
        format!("({})", ps.join(" "))
    }

    /// `(synth-fun f ((x Int) ...) Int)` without a grammar.
    pub fn declaration(&self) -> String {
        format!("(synth-fun {} {} {})", self.name, self.param_list(), self.ret)
    }
}

/// How the constraints were written in the source.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum QueryOrigin {
    #[default]
    Plain,
    /// Desugared from `inv-constraint`.
    Invariant,
}

/// A parsed single-function synthesis problem.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SynthQuery {
    pub logic: Logic,
    pub function: SynthFun,
    pub grammar: Option<Grammar>,
    pub variables: Vec<(String, Sort)>,
    pub constraints: Vec<Term>,
    pub origin: QueryOrigin,
    /// Lexical token count of the source text.
    pub source_tokens: usize,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum QueryErrorKind {
    Syntax(String),
    UnsupportedCommand(String),
    UnsupportedSort(String),
    UndeclaredSymbol(String),
    SortMismatch(String),
    Arity { op: String, expected: String, found: usize },
    MultipleSynthFun,
    MissingSynthFun,
    Grammar(GrammarError),
}

#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
pub struct QueryError {
    pub kind: QueryErrorKind,
    pub pos: Option<Pos>,
}

impl QueryError {
    fn at(pos: Pos, kind: QueryErrorKind) -> Self {
        QueryError { kind, pos: Some(pos) }
    }
}

impl fmt::Display for QueryError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if let Some(p) = self.pos {
            write!(f, "{}: ", p)?;
        }
        match &self.kind {
            QueryErrorKind::Syntax(m) => write!(f, "syntax error: {}", m),
            QueryErrorKind::UnsupportedCommand(c) => write!(f, "unsupported command `{}`", c),
            QueryErrorKind::UnsupportedSort(s) => write!(f, "unsupported sort `{}`", s),
            QueryErrorKind::UndeclaredSymbol(s) => write!(f, "undeclared symbol `{}`", s),
            QueryErrorKind::SortMismatch(m) => write!(f, "sort mismatch: {}", m),
            QueryErrorKind::Arity { op, expected, found } => {
                write!(f, "`{}` takes {} arguments, got {}", op, expected, found)
            }
            QueryErrorKind::MultipleSynthFun => f.write_str("only one synth-fun per query is supported"),
            QueryErrorKind::MissingSynthFun => f.write_str("query declares no synth-fun"),
            QueryErrorKind::Grammar(g) => write!(f, "grammar error: {}", g),
        }
    }
}

impl From<SyntaxError> for QueryError {
    fn from(e: SyntaxError) -> Self {
        QueryError::at(e.pos, QueryErrorKind::Syntax(e.message))
    }
}

fn syntax(pos: Pos, msg: impl Into<String>) -> QueryError {
    QueryError::at(pos, QueryErrorKind::Syntax(msg.into()))
}

fn read_sort(e: &SExpr) -> Result<Sort, QueryError> {
    match e {
        SExpr::Atom(Atom::Symbol(s), _) if s == "Int" => Ok(Sort::Int),
        SExpr::Atom(Atom::Symbol(s), _) if s == "Bool" => Ok(Sort::Bool),
        SExpr::List(items, pos) => match items.as_slice() {
            [SExpr::Atom(Atom::Symbol(u), _), SExpr::Atom(Atom::Symbol(bv), _), SExpr::Atom(Atom::Numeral(w), _)]
                if u == "_" && bv == "BitVec" =>
            {
                match w.parse::<u32>() {
                    Ok(w) if (1..=64).contains(&w) => Ok(Sort::BitVec(w)),
                    _ => Err(QueryError::at(*pos, QueryErrorKind::UnsupportedSort(e.to_string()))),
                }
            }
            _ => Err(QueryError::at(*pos, QueryErrorKind::UnsupportedSort(e.to_string()))),
        },
        other => Err(QueryError::at(other.pos(), QueryErrorKind::UnsupportedSort(other.to_string()))),
    }
}

fn read_params(e: &SExpr) -> Result<Vec<(String, Sort)>, QueryError> {
    let items = e.as_list().ok_or_else(|| syntax(e.pos(), "expected a parameter list"))?;
    items
        .iter()
        .map(|p| match p.as_list() {
            Some([name, sort]) => {
                let n = name.as_symbol().ok_or_else(|| syntax(name.pos(), "expected a parameter name"))?;
                Ok((n.to_string(), read_sort(sort)?))
            }
            _ => Err(syntax(p.pos(), "expected `(name sort)`")),
        })
        .collect()
}

/// A `define-fun` macro, expanded at every use.
#[derive(Clone, Debug)]
struct Macro {
    params: Vec<(String, Sort)>,
    ret: Sort,
    body: Term,
}

/// Replaces free variables according to `map` (no binders exist in [`Term`]).
pub fn substitute_vars(term: &Term, map: &BTreeMap<&str, &Term>) -> Term {
    match term {
        Term::Var(v) => map.get(v.as_str()).map(|t| (*t).clone()).unwrap_or_else(|| term.clone()),
        Term::App(op, args) => Term::App(*op, args.iter().map(|a| substitute_vars(a, map)).collect()),
        Term::Ite(c, t, e) => Term::ite(substitute_vars(c, map), substitute_vars(t, map), substitute_vars(e, map)),
        Term::Call(f, args) => Term::Call(f.clone(), args.iter().map(|a| substitute_vars(a, map)).collect()),
        _ => term.clone(),
    }
}

struct Scope<'a> {
    vars: &'a [(String, Sort)],
    locals: Vec<(String, Term, Sort)>,
    fun: Option<&'a SynthFun>,
    macros: &'a BTreeMap<String, Macro>,
}

impl<'a> Scope<'a> {
    fn lookup(&self, name: &str) -> Option<(Term, Sort)> {
        if let Some((_, t, s)) = self.locals.iter().rev().find(|(n, _, _)| n == name) {
            return Some((t.clone(), *s));
        }
        if let Some((_, s)) = self.vars.iter().find(|(n, _)| n == name) {
            return Some((Term::Var(name.to_string()), *s));
        }
        None
    }

    fn read(&mut self, e: &SExpr) -> Result<(Term, Sort), QueryError> {
        let pos = e.pos();
        match e {
            SExpr::Atom(Atom::Numeral(n), _) => {
                let v = Int::parse_decimal(n).ok_or_else(|| syntax(pos, "bad numeral"))?;
                Ok((Term::Int(v), Sort::Int))
            }
            SExpr::Atom(Atom::Binary(d), _) | SExpr::Atom(Atom::Hex(d), _) => {
                let (radix, per) = if matches!(e, SExpr::Atom(Atom::Binary(_), _)) { (2, 1) } else { (16, 4) };
                let width = d.len() as u32 * per;
                if width > 64 {
                    return Err(QueryError::at(pos, QueryErrorKind::UnsupportedSort(format!("(_ BitVec {})", width))));
                }
                let bits = u64::from_str_radix(d, radix).map_err(|_| syntax(pos, "bad bitvector literal"))?;
                Ok((Term::BitVec { bits, width }, Sort::BitVec(width)))
            }
            SExpr::Atom(Atom::Symbol(s), _) => match s.as_str() {
                "true" => Ok((Term::Bool(true), Sort::Bool)),
                "false" => Ok((Term::Bool(false), Sort::Bool)),
                _ => {
                    if let Some(found) = self.lookup(s) {
                        return Ok(found);
                    }
                    if let Some(m) = self.macros.get(s) {
                        if m.params.is_empty() {
                            return Ok((m.body.clone(), m.ret));
                        }
                    }
                    Err(QueryError::at(pos, QueryErrorKind::UndeclaredSymbol(s.clone())))
                }
            },
            SExpr::Atom(..) => Err(syntax(pos, format!("unexpected `{}` in term", e))),
            SExpr::List(items, _) => {
                let head = items.first().ok_or_else(|| syntax(pos, "empty application"))?;
                let args = &items[1..];
                match head {
                    SExpr::List(..) => Err(syntax(head.pos(), "expected an operator symbol")),
                    SExpr::Atom(Atom::Symbol(h), _) => self.read_app(h, args, pos),
                    _ => Err(syntax(head.pos(), "expected an operator symbol")),
                }
            }
        }
    }

    fn arity_err(pos: Pos, op: &str, expected: String, found: usize) -> QueryError {
        QueryError::at(pos, QueryErrorKind::Arity { op: op.to_string(), expected, found })
    }

    fn read_app(&mut self, h: &str, args: &[SExpr], pos: Pos) -> Result<(Term, Sort), QueryError> {
        match h {
            "ite" => {
                if args.len() != 3 {
                    return Err(Self::arity_err(pos, "ite", "3".to_string(), args.len()));
                }
                let (c, cs) = self.read(&args[0])?;
                let (t, ts) = self.read(&args[1])?;
                let (e, es) = self.read(&args[2])?;
                if cs != Sort::Bool {
                    return Err(QueryError::at(args[0].pos(), QueryErrorKind::SortMismatch("`ite` condition must be Bool".to_string())));
                }
                if ts != es {
                    return Err(QueryError::at(pos, QueryErrorKind::SortMismatch(format!("`ite` branches are {} and {}", ts, es))));
                }
                Ok((Term::ite(c, t, e), ts))
            }
            "let" => {
                if args.len() != 2 {
                    return Err(Self::arity_err(pos, "let", "2".to_string(), args.len()));
                }
                let binds = args[0].as_list().ok_or_else(|| syntax(args[0].pos(), "expected let bindings"))?;
                let mut new = Vec::new();
                for b in binds {
                    match b.as_list() {
                        Some([name, value]) => {
                            let n = name.as_symbol().ok_or_else(|| syntax(name.pos(), "expected a binder name"))?;
                            let (t, s) = self.read(value)?;
                            new.push((n.to_string(), t, s));
                        }
                        _ => return Err(syntax(b.pos(), "expected `(name term)`")),
                    }
                }
                let depth = self.locals.len();
                self.locals.extend(new);
                let body = self.read(&args[1]);
                self.locals.truncate(depth);
                body
            }
            "_" => match args {
                [SExpr::Atom(Atom::Symbol(bv), p), SExpr::Atom(Atom::Numeral(w), _)] if bv.starts_with("bv") => {
                    let value = Int::parse_decimal(&bv[2..]).ok_or_else(|| syntax(*p, "bad bitvector literal"))?;
                    let width: u32 = w.parse().map_err(|_| syntax(*p, "bad width"))?;
                    if !(1..=64).contains(&width) {
                        return Err(QueryError::at(pos, QueryErrorKind::UnsupportedSort(format!("(_ BitVec {})", width))));
                    }
                    let bits = value.as_i64().ok_or_else(|| syntax(*p, "bitvector literal too large"))? as u64;
                    Ok((Term::BitVec { bits: bits & crate::value::bv_mask(width), width }, Sort::BitVec(width)))
                }
                _ => Err(syntax(pos, "unsupported indexed identifier")),
            },
            "-" if args.len() == 1 && matches!(args[0], SExpr::Atom(Atom::Numeral(_), _)) => {
                let (t, _) = self.read(&args[0])?;
                match t {
                    Term::Int(i) => Ok((Term::Int(i.neg()), Sort::Int)),
                    _ => unreachable!(),
                }
            }
            _ => {
                if let Some(op) = Op::from_name(h) {
                    if !op.arity().admits(args.len()) {
                        return Err(Self::arity_err(pos, h, op.arity().to_string(), args.len()));
                    }
                    let mut terms = Vec::with_capacity(args.len());
                    let mut sorts = Vec::with_capacity(args.len());
                    for a in args {
                        let (t, s) = self.read(a)?;
                        terms.push(t);
                        sorts.push(s);
                    }
                    let sort = op
                        .result_sort(&sorts)
                        .map_err(|m| QueryError::at(pos, QueryErrorKind::SortMismatch(m)))?;
                    return Ok((Term::App(op, terms), sort));
                }
                if let Some(f) = self.fun.filter(|f| f.name == h) {
                    if f.params.len() != args.len() {
                        return Err(Self::arity_err(pos, h, f.params.len().to_string(), args.len()));
                    }
                    let mut terms = Vec::with_capacity(args.len());
                    for (a, (pn, ps)) in args.iter().zip(&f.params) {
                        let (t, s) = self.read(a)?;
                        if s != *ps {
                            return Err(QueryError::at(a.pos(), QueryErrorKind::SortMismatch(format!("argument for `{}` has sort {}, expected {}", pn, s, ps))));
                        }
                        terms.push(t);
                    }
                    return Ok((Term::Call(h.to_string(), terms), f.ret));
                }
                if let Some(m) = self.macros.get(h).cloned() {
                    if m.params.len() != args.len() {
                        return Err(Self::arity_err(pos, h, m.params.len().to_string(), args.len()));
                    }
                    let mut terms = Vec::with_capacity(args.len());
                    for (a, (pn, ps)) in args.iter().zip(&m.params) {
                        let (t, s) = self.read(a)?;
                        if s != *ps {
                            return Err(QueryError::at(a.pos(), QueryErrorKind::SortMismatch(format!("argument for `{}` has sort {}, expected {}", pn, s, ps))));
                        }
                        terms.push(t);
                    }
                    let map: BTreeMap<&str, &Term> = m.params.iter().map(|(n, _)| n.as_str()).zip(terms.iter()).collect();
                    return Ok((substitute_vars(&m.body, &map), m.ret));
                }
                Err(QueryError::at(pos, QueryErrorKind::UndeclaredSymbol(h.to_string())))
            }
        }
    }
}

/// Reads a call-free term over the given variables.
pub fn read_free_term(e: &SExpr, vars: &[(String, Sort)]) -> Result<Term, QueryError> {
    let macros = BTreeMap::new();
    let mut scope = Scope { vars, locals: Vec::new(), fun: None, macros: &macros };
    Ok(scope.read(e)?.0)
}

struct PendingGrammar {
    decls: Vec<(String, Sort, Pos)>,
    rules: Vec<(String, Vec<SExpr>, Pos)>,
}

fn read_grammar_spec(items: &[SExpr], pos: Pos) -> Result<PendingGrammar, QueryError> {
    let rule = |r: &SExpr| -> Result<(String, Sort, Vec<SExpr>, Pos), QueryError> {
        match r.as_list() {
            Some([n, s, alts]) => {
                let name = n.as_symbol().ok_or_else(|| syntax(n.pos(), "expected a nonterminal name"))?;
                let alts = alts.as_list().ok_or_else(|| syntax(alts.pos(), "expected a rule list"))?;
                Ok((name.to_string(), read_sort(s)?, alts.to_vec(), r.pos()))
            }
            _ => Err(syntax(r.pos(), "expected `(nonterminal sort (rules...))`")),
        }
    };
    match items {
        // v2: ((N S) ...) ((N S (rules)) ...)
        [decls, rules] => {
            let decls = decls
                .as_list()
                .ok_or_else(|| syntax(decls.pos(), "expected nonterminal declarations"))?
                .iter()
                .map(|d| match d.as_list() {
                    Some([n, s]) => Ok((
                        n.as_symbol().ok_or_else(|| syntax(n.pos(), "expected a nonterminal name"))?.to_string(),
                        read_sort(s)?,
                        d.pos(),
                    )),
                    _ => Err(syntax(d.pos(), "expected `(nonterminal sort)`")),
                })
                .collect::<Result<Vec<_>, _>>()?;
            let rules = rules
                .as_list()
                .ok_or_else(|| syntax(rules.pos(), "expected grouped rule list"))?
                .iter()
                .map(|r| rule(r).map(|(n, _, alts, p)| (n, alts, p)))
                .collect::<Result<Vec<_>, _>>()?;
            Ok(PendingGrammar { decls, rules })
        }
        // v1: ((N S (rules)) ...)
        [rules] => {
            let mut decls = Vec::new();
            let mut out = Vec::new();
            for r in rules.as_list().ok_or_else(|| syntax(rules.pos(), "expected grouped rule list"))? {
                let (n, s, alts, p) = rule(r)?;
                decls.push((n.clone(), s, p));
                out.push((n, alts, p));
            }
            Ok(PendingGrammar { decls, rules: out })
        }
        _ => Err(syntax(pos, "malformed grammar")),
    }
}

fn build_user_grammar(
    pending: &PendingGrammar,
    fun: &SynthFun,
    literals: &[Value],
) -> Result<Grammar, QueryError> {
    let gerr = |pos: Pos, e: GrammarError| QueryError::at(pos, QueryErrorKind::Grammar(e));
    let mut b = GrammarBuilder::new();
    for (n, s, p) in &pending.decls {
        b.nonterminal(n, *s).map_err(|e| gerr(*p, e))?;
    }
    let var_sorts = |name: &str| fun.params.iter().find(|(n, _)| n == name).map(|(_, s)| *s);
    for (n, alts, p) in &pending.rules {
        let lhs = b
            .nonterminal_id(n)
            .ok_or_else(|| QueryError::at(*p, QueryErrorKind::UndeclaredSymbol(n.clone())))?;
        let sort = b.nonterminal_sort(lhs);
        for alt in alts {
            match alt.as_list() {
                Some([SExpr::Atom(Atom::Symbol(k), _), s]) if k == "Constant" => {
                    let s = read_sort(s)?;
                    let mut pool: Vec<Value> = match s {
                        Sort::Int => vec![Value::int(0), Value::int(1)],
                        Sort::Bool => vec![Value::Bool(false), Value::Bool(true)],
                        Sort::BitVec(w) => vec![Value::bv(0, w), Value::bv(1, w)],
                    };
                    for l in literals {
                        let ls = match l {
                            Value::Int(_) => Sort::Int,
                            Value::Bool(_) => Sort::Bool,
                            Value::BitVec { width, .. } => Sort::BitVec(*width),
                            Value::Undefined => continue,
                        };
                        if ls == s && !pool.contains(l) {
                            pool.push(l.clone());
                        }
                    }
                    for v in pool {
                        let t = Term::from_value(&v).unwrap();
                        b.production(lhs, Pattern::Leaf(t), &var_sorts).map_err(|e| gerr(alt.pos(), e))?;
                    }
                }
                Some([SExpr::Atom(Atom::Symbol(k), _), s]) if k == "Variable" => {
                    let s = read_sort(s)?;
                    for (pn, ps) in &fun.params {
                        if *ps == s {
                            b.var(lhs, pn, s);
                        }
                    }
                }
                _ => {
                    let pat = read_pattern(alt, &b, fun)?;
                    b.production(lhs, pat, &var_sorts).map_err(|e| gerr(alt.pos(), e))?;
                }
            }
        }
        let _ = sort;
    }
    b.build().map_err(|e| gerr(pending.decls[0].2, e))
}

fn read_pattern(e: &SExpr, b: &GrammarBuilder, fun: &SynthFun) -> Result<Pattern, QueryError> {
    let pos = e.pos();
    match e {
        SExpr::Atom(Atom::Symbol(s), _) => {
            if let Some(id) = b.nonterminal_id(s) {
                return Ok(Pattern::Hole(id));
            }
            if fun.params.iter().any(|(n, _)| n == s) {
                return Ok(Pattern::Leaf(Term::Var(s.clone())));
            }
            match s.as_str() {
                "true" => Ok(Pattern::Leaf(Term::Bool(true))),
                "false" => Ok(Pattern::Leaf(Term::Bool(false))),
                _ => Err(QueryError::at(pos, QueryErrorKind::UndeclaredSymbol(s.clone()))),
            }
        }
        SExpr::Atom(..) => {
            let t = read_free_term(e, &[])?;
            Ok(Pattern::Leaf(t))
        }
        SExpr::List(items, _) => {
            let head = items.first().and_then(SExpr::as_symbol).ok_or_else(|| syntax(pos, "expected an operator"))?;
            if head == "-" && items.len() == 2 && matches!(items[1], SExpr::Atom(Atom::Numeral(_), _)) {
                return Ok(Pattern::Leaf(read_free_term(e, &[])?));
            }
            if head == "_" {
                return Ok(Pattern::Leaf(read_free_term(e, &[])?));
            }
            let h = if head == "ite" {
                Head::Ite
            } else {
                Head::Op(Op::from_name(head).ok_or_else(|| QueryError::at(pos, QueryErrorKind::UndeclaredSymbol(head.to_string())))?)
            };
            let kids = items[1..].iter().map(|c| read_pattern(c, b, fun)).collect::<Result<Vec<_>, _>>()?;
            Ok(Pattern::Node(h, kids))
        }
    }
}

/// Literal values occurring in `terms`, in first-occurrence order.
pub fn collect_literals(terms: &[Term]) -> Vec<Value> {
    let mut out: Vec<Value> = Vec::new();
    for t in terms {
        t.visit(&mut |s| {
            let v = match s {
                Term::Int(i) => Value::Int(i.clone()),
                Term::Bool(b) => Value::Bool(*b),
                Term::BitVec { bits, width } => Value::bv(*bits, *width),
                _ => return,
            };
            if !out.contains(&v) {
                out.push(v);
            }
        });
    }
    out
}

const ORIGIN_KEY: &str = "origin";
const ORIGIN_INV: &str = "inv-constraint";

/// Parses SyGuS-IF text. Supported commands: `set-logic`, `declare-var`,
/// `declare-primed-var`, `define-fun` (expanded as a macro), `synth-fun` and
/// `synth-inv` (with or without grammar), `constraint`, `inv-constraint`
/// (desugared), `check-synth`; `set-info`/`set-option` are ignored.
pub fn parse_query(text: &str) -> Result<SynthQuery, QueryError> {
    let (commands, source_tokens) = parse_counting(text)?;
    let mut logic = None;
    let mut fun: Option<(SynthFun, Option<(PendingGrammar, Pos)>)> = None;
    let mut variables: Vec<(String, Sort)> = Vec::new();
    let mut macros: BTreeMap<String, Macro> = BTreeMap::new();
    let mut constraints = Vec::new();
    let mut origin = QueryOrigin::Plain;

    let declare = |variables: &mut Vec<(String, Sort)>, name: &str, sort: Sort, pos: Pos| -> Result<(), QueryError> {
        match variables.iter().find(|(n, _)| n == name) {
            Some((_, s)) if *s != sort => Err(QueryError::at(pos, QueryErrorKind::SortMismatch(format!("`{}` redeclared with sort {}", name, sort)))),
            Some(_) => Ok(()),
            None => {
                variables.push((name.to_string(), sort));
                Ok(())
            }
        }
    };

    for cmd in &commands {
        let pos = cmd.pos();
        let items = cmd.as_list().ok_or_else(|| syntax(pos, "expected a command"))?;
        let head = cmd.head().ok_or_else(|| syntax(pos, "expected a command name"))?;
        let args = &items[1..];
        match head {
            "set-logic" => match args {
                [l] => logic = Some(Logic::new(l.as_symbol().ok_or_else(|| syntax(l.pos(), "expected a logic name"))?)),
                _ => return Err(syntax(pos, "set-logic takes one argument")),
            },
            "set-info" => {
                if let [SExpr::Atom(Atom::Keyword(k), _), SExpr::Atom(Atom::Str(v), _)] = args {
                    if k == ORIGIN_KEY && v == ORIGIN_INV {
                        origin = QueryOrigin::Invariant;
                    }
                }
            }
            "set-option" | "set-feature" => {}
            "declare-var" | "declare-primed-var" => match args {
                [n, s] => {
                    let name = n.as_symbol().ok_or_else(|| syntax(n.pos(), "expected a variable name"))?;
                    let sort = read_sort(s)?;
                    declare(&mut variables, name, sort, pos)?;
                    if head == "declare-primed-var" {
                        declare(&mut variables, &format!("{}!", name), sort, pos)?;
                    }
                }
                _ => return Err(syntax(pos, format!("{} takes a name and a sort", head))),
            },
            "define-fun" => match args {
                [n, ps, s, body] => {
                    let name = n.as_symbol().ok_or_else(|| syntax(n.pos(), "expected a function name"))?;
                    let params = read_params(ps)?;
                    let ret = read_sort(s)?;
                    let mut scope = Scope { vars: &params, locals: Vec::new(), fun: None, macros: &macros };
                    let (t, bs) = scope.read(body)?;
                    if bs != ret {
                        return Err(QueryError::at(body.pos(), QueryErrorKind::SortMismatch(format!("body of `{}` has sort {}, expected {}", name, bs, ret))));
                    }
                    macros.insert(name.to_string(), Macro { params, ret, body: t });
                }
                _ => return Err(syntax(pos, "define-fun takes a name, parameters, a sort and a body")),
            },
            "synth-fun" | "synth-inv" => {
                if fun.is_some() {
                    return Err(QueryError::at(pos, QueryErrorKind::MultipleSynthFun));
                }
                let (sig, rest) = if head == "synth-fun" {
                    match args {
                        [n, ps, s, rest @ ..] => {
                            let name = n.as_symbol().ok_or_else(|| syntax(n.pos(), "expected a function name"))?;
                            (SynthFun { name: name.to_string(), params: read_params(ps)?, ret: read_sort(s)? }, rest)
                        }
                        _ => return Err(syntax(pos, "synth-fun takes a name, parameters and a sort")),
                    }
                } else {
                    match args {
                        [n, ps, rest @ ..] => {
                            let name = n.as_symbol().ok_or_else(|| syntax(n.pos(), "expected a function name"))?;
                            (SynthFun { name: name.to_string(), params: read_params(ps)?, ret: Sort::Bool }, rest)
                        }
                        _ => return Err(syntax(pos, "synth-inv takes a name and parameters")),
                    }
                };
                let grammar = if rest.is_empty() { None } else { Some((read_grammar_spec(rest, pos)?, pos)) };
                fun = Some((sig, grammar));
            }
            "constraint" => {
                let [c] = args else {
                    return Err(syntax(pos, "constraint takes one term"));
                };
                let f = fun.as_ref().map(|(f, _)| f);
                let mut scope = Scope { vars: &variables, locals: Vec::new(), fun: f, macros: &macros };
                let (t, s) = scope.read(c)?;
                if s != Sort::Bool {
                    return Err(QueryError::at(c.pos(), QueryErrorKind::SortMismatch(format!("constraint has sort {}, expected Bool", s))));
                }
                constraints.push(t);
            }
            "inv-constraint" => {
                let [inv, pre, trans, post] = args else {
                    return Err(syntax(pos, "inv-constraint takes four symbols"));
                };
                let (f, _) = fun.as_ref().ok_or_else(|| QueryError::at(pos, QueryErrorKind::MissingSynthFun))?;
                let name_of = |e: &SExpr| e.as_symbol().map(str::to_string).ok_or_else(|| syntax(e.pos(), "expected a symbol"));
                if name_of(inv)? != f.name {
                    return Err(QueryError::at(inv.pos(), QueryErrorKind::UndeclaredSymbol(name_of(inv)?)));
                }
                let get = |e: &SExpr| -> Result<Macro, QueryError> {
                    let n = name_of(e)?;
                    macros.get(&n).cloned().ok_or_else(|| QueryError::at(e.pos(), QueryErrorKind::UndeclaredSymbol(n)))
                };
                let (pre_m, trans_m, post_m) = (get(pre)?, get(trans)?, get(post)?);
                for (n, s) in &f.params {
                    declare(&mut variables, n, *s, pos)?;
                    declare(&mut variables, &format!("{}!", n), *s, pos)?;
                }
                let cur: Vec<Term> = f.params.iter().map(|(n, _)| Term::Var(n.clone())).collect();
                let next: Vec<Term> = f.params.iter().map(|(n, _)| Term::Var(format!("{}!", n))).collect();
                let expand = |m: &Macro, args: Vec<Term>, at: Pos| -> Result<Term, QueryError> {
                    if m.params.len() != args.len() {
                        return Err(Scope::arity_err(at, "inv-constraint macro", m.params.len().to_string(), args.len()));
                    }
                    let map: BTreeMap<&str, &Term> = m.params.iter().map(|(n, _)| n.as_str()).zip(args.iter()).collect();
                    Ok(substitute_vars(&m.body, &map))
                };
                let inv_cur = Term::Call(f.name.clone(), cur.clone());
                let inv_next = Term::Call(f.name.clone(), next.clone());
                let both: Vec<Term> = cur.iter().chain(next.iter()).cloned().collect();
                constraints.push(Term::app(Op::Implies, vec![expand(&pre_m, cur.clone(), pre.pos())?, inv_cur.clone()]));
                constraints.push(Term::app(
                    Op::Implies,
                    vec![Term::app(Op::And, vec![inv_cur.clone(), expand(&trans_m, both, trans.pos())?]), inv_next],
                ));
                constraints.push(Term::app(Op::Implies, vec![inv_cur, expand(&post_m, cur, post.pos())?]));
                origin = QueryOrigin::Invariant;
            }
            "check-synth" => break,
            other => return Err(QueryError::at(pos, QueryErrorKind::UnsupportedCommand(other.to_string()))),
        }
    }

    let (function, pending) = fun.ok_or(QueryError { kind: QueryErrorKind::MissingSynthFun, pos: None })?;
    let grammar = match pending {
        Some((g, _)) => Some(build_user_grammar(&g, &function, &collect_literals(&constraints))?),
        None => None,
    };
    Ok(SynthQuery {
        logic: logic.unwrap_or_else(|| Logic::new("ALL")),
        function,
        grammar,
        variables,
        constraints,
        origin,
        source_tokens,
    })
}

impl SynthQuery {
    /// The user grammar if present, else the full-logic default grammar.
    pub fn search_grammar(&self) -> Result<Grammar, GrammarError> {
        match &self.grammar {
            Some(g) => Ok(g.clone()),
            None => self.default_grammar(),
        }
    }

    /// Full-logic grammar with literal pool `{0, 1}` plus constraint literals.
    pub fn default_grammar(&self) -> Result<Grammar, GrammarError> {
        let family = match self.logic.kind() {
            LogicKind::Lia | LogicKind::Nia => GrammarFamily::Integer,
            LogicKind::Bv => GrammarFamily::BitVec,
            LogicKind::Other => return Err(GrammarError::UnsupportedLogic(self.logic.0.clone())),
        };
        default_grammar(family, &self.function.params, self.function.ret, &collect_literals(&self.constraints))
    }

    fn var_sort(&self, name: &str) -> Option<Sort> {
        self.variables.iter().find(|(n, _)| n == name).map(|(_, s)| *s)
    }

    /// Re-checks that all constraints are Bool and reference declared symbols.
    pub fn check(&self) -> Result<(), String> {
        let f = &self.function;
        for c in &self.constraints {
            let s = c.sort(&|v| self.var_sort(v), &|n| (n == f.name).then_some(f.ret))?;
            if s != Sort::Bool {
                return Err(format!("constraint `{}` is not Bool", c));
            }
        }
        Ok(())
    }
}

impl fmt::Display for SynthQuery {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.origin == QueryOrigin::Invariant {
            writeln!(f, "(set-info :{} \"{}\")", ORIGIN_KEY, ORIGIN_INV)?;
        }
        writeln!(f, "(set-logic {})", self.logic)?;
        let fun = &self.function;
        match &self.grammar {
            Some(g) => writeln!(f, "(synth-fun {} {} {} {})", fun.name, fun.param_list(), fun.ret, g)?,
            None => writeln!(f, "{}", fun.declaration())?,
        }
        for (n, s) in &self.variables {
            writeln!(f, "(declare-var {} {})", n, s)?;
        }
        for c in &self.constraints {
            writeln!(f, "(constraint {})", c)?;
        }
        writeln!(f, "(check-synth)")
    }
}

/// A proposed body for the synthesized function.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Candidate {
    pub name: String,
    pub params: Vec<(String, Sort)>,
    pub ret: Sort,
    pub body: Term,
}

#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
pub enum CandidateError {
    #[error("body is ill-formed: {0}")]
    IllFormed(String),
    #[error("body has sort {found}, expected {expected}")]
    WrongSort { found: Sort, expected: Sort },
    #[error("candidate signature does not match `{0}`")]
    SignatureMismatch(String),
    #[error("not a define-fun: {0}")]
    NotADefinition(String),
    #[error(transparent)]
    Parse(#[from] QueryError),
}

impl Candidate {
    /// Validates that `body` is well-sorted, uses only the parameters, and
    /// has sort `ret`.
    pub fn new(name: &str, params: Vec<(String, Sort)>, ret: Sort, body: Term) -> Result<Self, CandidateError> {
        let sort = body
            .sort(&|v| params.iter().find(|(n, _)| n == v).map(|(_, s)| *s), &|_| None)
            .map_err(CandidateError::IllFormed)?;
        if sort != ret {
            return Err(CandidateError::WrongSort { found: sort, expected: ret });
        }
        Ok(Candidate { name: name.to_string(), params, ret, body })
    }

    /// Builds a candidate for `fun` with the given body.
    pub fn for_function(fun: &SynthFun, body: Term) -> Result<Self, CandidateError> {
        Candidate::new(&fun.name, fun.params.clone(), fun.ret, body)
    }

    pub fn matches(&self, fun: &SynthFun) -> bool {
        self.name == fun.name
            && self.ret == fun.ret
            && self.params.len() == fun.params.len()
            && self.params.iter().zip(&fun.params).all(|((_, a), (_, b))| a == b)
    }

    /// `body` with parameters replaced by `args`.
    pub fn apply(&self, args: &[Term]) -> Term {
        let map: BTreeMap<&str, &Term> = self.params.iter().map(|(n, _)| n.as_str()).zip(args.iter()).collect();
        substitute_vars(&self.body, &map)
    }

    /// `(define-fun f ((x Int) ...) Int body)`.
    pub fn to_define_fun(&self) -> String {
        let ps: Vec<String> = self.params.iter().map(|(n, s)| format!("({} {})", n, s)).collect();
        format!("(define-fun {} ({}) {} {})", self.name, ps.join(" "), self.ret, self.body)
    }

    /// Parses a `define-fun` S-expression.
    pub fn from_define_fun(e: &SExpr) -> Result<Self, CandidateError> {
        match e.as_list() {
            Some([h, n, ps, s, body]) if h.as_symbol() == Some("define-fun") => {
                let name = n.as_symbol().ok_or_else(|| CandidateError::NotADefinition(n.to_string()))?;
                let params = read_params(ps)?;
                let ret = read_sort(s)?;
                let b = read_free_term(body, &params)?;
                Candidate::new(name, params, ret, b)
            }
            _ => Err(CandidateError::NotADefinition(e.to_string())),
        }
    }
}

impl fmt::Display for Candidate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_define_fun())
    }
}

/// `print_define_fun` as a free function.
pub fn print_define_fun(cand: &Candidate) -> String {
    cand.to_define_fun()
}

fn substitute_calls(term: &Term, cand: &Candidate) -> Term {
    match term {
        Term::Call(name, args) if *name == cand.name => {
            let args: Vec<Term> = args.iter().map(|a| substitute_calls(a, cand)).collect();
            cand.apply(&args)
        }
        Term::Call(name, args) => Term::Call(name.clone(), args.iter().map(|a| substitute_calls(a, cand)).collect()),
        Term::App(op, args) => Term::App(*op, args.iter().map(|a| substitute_calls(a, cand)).collect()),
        Term::Ite(c, t, e) => Term::ite(substitute_calls(c, cand), substitute_calls(t, cand), substitute_calls(e, cand)),
        _ => term.clone(),
    }
}

/// φ(f): the conjunction of the constraints with every application of the
/// synthesized function replaced by the candidate body, innermost first.
pub fn substitute_solution(query: &SynthQuery, cand: &Candidate) -> Result<Term, CandidateError> {
    if !cand.matches(&query.function) {
        return Err(CandidateError::SignatureMismatch(query.function.name.clone()));
    }
    Ok(Term::and_all(query.constraints.iter().map(|c| substitute_calls(c, cand)).collect()))
}

/// Each constraint with the candidate substituted, in order.
pub fn substituted_constraints(query: &SynthQuery, cand: &Candidate) -> Result<Vec<Term>, CandidateError> {
    if !cand.matches(&query.function) {
        return Err(CandidateError::SignatureMismatch(query.function.name.clone()));
    }
    Ok(query.constraints.iter().map(|c| substitute_calls(c, cand)).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sexpr::parse_one;

    pub(crate) const FIGURE1: &str = "(set-logic LIA)
(synth-fun f ((v0 Int) (v1 Int) (v2 Int)) Int)
(declare-var v0 Int)
(declare-var v1 Int)
(declare-var v2 Int)
(constraint (>= (f v0 v1 v2) v0))
(constraint (>= (f v0 v1 v2) v1))
(constraint (>= (f v0 v1 v2) v2))
(constraint (or (= v0 (f v0 v1 v2)) (or (= v1 (f v0 v1 v2)) (= v2 (f v0 v1 v2)))))
(check-synth)
";

    fn body(q: &SynthQuery, text: &str) -> Candidate {
        let t = read_free_term(&parse_one(text).unwrap(), &q.function.params).unwrap();
        Candidate::for_function(&q.function, t).unwrap()
    }

    #[test]
    fn parses_figure1() {
        let q = parse_query(FIGURE1).unwrap();
        assert_eq!(q.logic.kind(), LogicKind::Lia);
        assert_eq!(q.function.name, "f");
        assert_eq!(q.function.params.len(), 3);
        assert_eq!(q.variables.len(), 3);
        assert_eq!(q.constraints.len(), 4);
    }

    #[test]
    fn empty_constraints() {
        let q = parse_query("(set-logic LIA)(synth-fun f ((x Int)) Int)(declare-var x Int)(check-synth)").unwrap();
        assert!(q.constraints.is_empty());
        assert!(q.source_tokens > 0);
    }

    #[test]
    fn arity_error_is_reported_with_position() {
        let err = parse_query("(set-logic LIA)\n(synth-fun f ((x Int)) Int)\n(declare-var v0 Int)\n(constraint (>= v0))").unwrap_err();
        assert!(matches!(&err.kind, QueryErrorKind::Arity { op, .. } if op == ">="), "{:?}", err);
        assert_eq!(err.pos.unwrap().line, 4);
    }

    #[test]
    fn error_kinds() {
        let unsupported = parse_query("(set-logic LIA)(declare-datatype X ())").unwrap_err();
        assert!(matches!(unsupported.kind, QueryErrorKind::UnsupportedCommand(_)));
        let undeclared = parse_query("(set-logic LIA)(synth-fun f ((x Int)) Int)(constraint (= (f y) 0))").unwrap_err();
        assert!(matches!(undeclared.kind, QueryErrorKind::UndeclaredSymbol(ref s) if s == "y"));
        let mismatch = parse_query("(set-logic LIA)(synth-fun f ((x Int)) Int)(constraint (f 1))").unwrap_err();
        assert!(matches!(mismatch.kind, QueryErrorKind::SortMismatch(_)));
        let two = parse_query("(set-logic LIA)(synth-fun f ((x Int)) Int)(synth-fun g ((x Int)) Int)").unwrap_err();
        assert_eq!(two.kind, QueryErrorKind::MultipleSynthFun);
        let syn = parse_query("(set-logic LIA)(synth-fun f ((x Int)) Int").unwrap_err();
        assert!(matches!(syn.kind, QueryErrorKind::Syntax(_)));
    }

    #[test]
    fn projection_substitution() {
        let q = parse_query(FIGURE1).unwrap();
        let phi = substitute_solution(&q, &body(&q, "v0")).unwrap();
        assert_eq!(
            phi.to_string(),
            "(and (>= v0 v0) (>= v0 v1) (>= v0 v2) (or (= v0 v0) (or (= v1 v0) (= v2 v0))))"
        );
    }

    #[test]
    fn nested_calls_substitute_innermost_first() {
        let q = parse_query(
            "(set-logic LIA)(synth-fun f ((a Int) (b Int) (c Int)) Int)(declare-var v0 Int)(declare-var v1 Int)(declare-var v2 Int)
             (constraint (>= (f (f v0 v0 v0) v1 v2) v0))",
        )
        .unwrap();
        let phi = substitute_solution(&q, &body(&q, "a")).unwrap();
        assert_eq!(phi.to_string(), "(>= v0 v0)");
    }

    #[test]
    fn call_free_constraints_are_unchanged() {
        let q = parse_query("(set-logic LIA)(synth-fun f ((x Int)) Int)(declare-var y Int)(constraint (>= y y))").unwrap();
        let phi = substitute_solution(&q, &body(&q, "(+ x 1)")).unwrap();
        assert_eq!(phi, q.constraints[0]);
    }

    #[test]
    fn signature_mismatch() {
        let q = parse_query(FIGURE1).unwrap();
        let c = Candidate::new("f", vec![("v0".to_string(), Sort::Int)], Sort::Int, Term::var("v0")).unwrap();
        assert!(matches!(substitute_solution(&q, &c), Err(CandidateError::SignatureMismatch(_))));
    }

    #[test]
    fn define_fun_printing() {
        let q = parse_query(FIGURE1).unwrap();
        assert_eq!(body(&q, "v0").to_define_fun(), "(define-fun f ((v0 Int) (v1 Int) (v2 Int)) Int v0)");
        let c = Candidate::from_define_fun(&parse_one("(define-fun f ((v0 Int) (v1 Int)) Int (ite (>= v0 v1) v0 v1))").unwrap()).unwrap();
        let printed = c.to_define_fun();
        assert_eq!(printed, "(define-fun f ((v0 Int) (v1 Int)) Int (ite (>= v0 v1) v0 v1))");
        assert_eq!(Candidate::from_define_fun(&parse_one(&printed).unwrap()).unwrap(), c);
    }

    #[test]
    fn unknown_operator_is_not_a_candidate() {
        let e = parse_one("(define-fun f ((x Int)) Int (frobnicate x))").unwrap();
        assert!(Candidate::from_define_fun(&e).is_err());
    }

    #[test]
    fn user_grammar_round_trips() {
        let src = "(set-logic LIA)
(synth-fun f ((x Int) (y Int)) Int ((S Int) (C Bool)) ((S Int (x y (Constant Int) (+ S S) (ite C S S))) (C Bool ((<= S S)))))
(declare-var x Int)(declare-var y Int)
(constraint (= (f x y) (+ x 5)))
(check-synth)";
        let q = parse_query(src).unwrap();
        let g = q.grammar.as_ref().unwrap();
        assert!(g.to_sygus().contains("5"));
        let again = parse_query(&q.to_string()).unwrap();
        assert_eq!(again.grammar, q.grammar);
        assert_eq!(again.constraints, q.constraints);
    }

    #[test]
    fn v1_grammar_and_let() {
        let src = "(set-logic LIA)
(synth-fun f ((x Int)) Int ((Start Int (x 0 (+ Start Start)))))
(declare-var x Int)
(constraint (let ((y (+ x 1))) (= (f y) (+ y y))))";
        let q = parse_query(src).unwrap();
        assert_eq!(q.grammar.as_ref().unwrap().nonterminals()[0].name, "Start");
        assert_eq!(q.constraints[0].to_string(), "(= (f (+ x 1)) (+ (+ x 1) (+ x 1)))");
    }

    #[test]
    fn inv_constraint_is_desugared() {
        let src = "(set-logic LIA)
(synth-inv inv ((x Int)))
(define-fun pre ((x Int)) Bool (= x 0))
(define-fun trans ((x Int) (x! Int)) Bool (= x! (+ x 1)))
(define-fun post ((x Int)) Bool (>= x 0))
(inv-constraint inv pre trans post)
(check-synth)";
        let q = parse_query(src).unwrap();
        assert_eq!(q.origin, QueryOrigin::Invariant);
        assert_eq!(q.function.ret, Sort::Bool);
        assert_eq!(q.constraints.len(), 3);
        assert_eq!(q.constraints[1].to_string(), "(=> (and (inv x) (= x! (+ x 1))) (inv x!))");
        let again = parse_query(&q.to_string()).unwrap();
        assert_eq!(again.origin, QueryOrigin::Invariant);
        assert_eq!(again.constraints, q.constraints);
    }

    #[test]
    fn negative_literals_fold() {
        let q = parse_query("(set-logic LIA)(synth-fun f ((x Int)) Int)(declare-var x Int)(constraint (= (f x) (- 3)))").unwrap();
        assert_eq!(collect_literals(&q.constraints), [Value::int(-3)]);
        assert_eq!(q.constraints[0].to_string(), "(= (f x) (- 3))");
    }
}
