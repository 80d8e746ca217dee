//! Context-free grammars `(V, Σ, R, S)` over term syntax.
//!
//! A production's right-hand side is a sequence over nonterminals and
//! terminal tokens (`(`, `)`, operator heads, variables, literals). Each
//! production also keeps the equivalent [`Pattern`] tree so derivations can be
//! turned into terms and evaluated without re-parsing.

use alloc::collections::BTreeSet;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use crate::term::{Op, Sort, Term};
use crate::value::{bv_literal, Int, Value};

pub type NtId = usize;
pub type TerminalId = usize;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct NonTerminal {
    pub name: String,
    pub sort: Sort,
}

/// Terminal symbols of Σ.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum Terminal {
    Open,
    Close,
    Op(Op),
    Ite,
    Var { name: String, sort: Sort },
    Lit(Value),
}

impl Terminal {
    pub fn text(&self) -> String {
        match self {
            Terminal::Open => "(".to_string(),
            Terminal::Close => ")".to_string(),
            Terminal::Op(op) => op.name().to_string(),
            Terminal::Ite => "ite".to_string(),
            Terminal::Var { name, .. } => name.clone(),
            Terminal::Lit(v) => v.to_smtlib(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum GSym {
    T(TerminalId),
    N(NtId),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Head {
    Op(Op),
    Ite,
}

/// Term template with nonterminal holes.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum Pattern {
    Hole(NtId),
    /// A variable or literal.
    Leaf(Term),
    Node(Head, Vec<Pattern>),
}

impl Pattern {
    /// Nonterminals of the holes, left to right.
    pub fn holes(&self) -> Vec<NtId> {
        let mut out = Vec::new();
        self.collect_holes(&mut out);
        out
    }

    fn collect_holes(&self, out: &mut Vec<NtId>) {
        match self {
            Pattern::Hole(n) => out.push(*n),
            Pattern::Leaf(_) => {}
            Pattern::Node(_, ch) => ch.iter().for_each(|c| c.collect_holes(out)),
        }
    }

    /// Fills holes left to right from `fill`.
    pub fn instantiate(&self, fill: &mut impl Iterator<Item = Term>) -> Term {
        match self {
            Pattern::Hole(_) => fill.next().expect("hole count matches fill"),
            Pattern::Leaf(t) => t.clone(),
            Pattern::Node(Head::Op(op), ch) => {
                Term::App(*op, ch.iter().map(|c| c.instantiate(fill)).collect())
            }
            Pattern::Node(Head::Ite, ch) => {
                let mut it = ch.iter().map(|c| c.instantiate(fill));
                let (c, t, e) = (it.next().unwrap(), it.next().unwrap(), it.next().unwrap());
                Term::ite(c, t, e)
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Production {
    pub lhs: NtId,
    pub rhs: Vec<GSym>,
}

#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
pub enum GrammarError {
    #[error("grammar has no nonterminals")]
    Empty,
    #[error("nonterminal `{0}` has no productions")]
    NoProductions(String),
    #[error("nonterminal `{0}` cannot derive a terminal string")]
    DeadNonTerminal(String),
    #[error("nonterminal name `{0}` collides with a terminal symbol")]
    NameCollision(String),
    #[error("duplicate nonterminal `{0}`")]
    DuplicateNonTerminal(String),
    #[error("production for `{nt}` is ill-sorted: {detail}")]
    IllSorted { nt: String, detail: String },
    #[error("logic `{0}` has no built-in grammar")]
    UnsupportedLogic(String),
}

/// A validated context-free grammar.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Grammar {
    nonterminals: Vec<NonTerminal>,
    terminals: Vec<Terminal>,
    productions: Vec<Production>,
    patterns: Vec<Pattern>,
    holes: Vec<Vec<NtId>>,
    by_lhs: Vec<Vec<usize>>,
    start: NtId,
}

impl Grammar {
    pub fn nonterminals(&self) -> &[NonTerminal] {
        &self.nonterminals
    }

    pub fn terminals(&self) -> &[Terminal] {
        &self.terminals
    }

    pub fn productions(&self) -> &[Production] {
        &self.productions
    }

    pub fn start(&self) -> NtId {
        self.start
    }

    pub fn production(&self, id: usize) -> &Production {
        &self.productions[id]
    }

    pub fn pattern(&self, id: usize) -> &Pattern {
        &self.patterns[id]
    }

    /// Nonterminals occurring in production `id`, left to right.
    pub fn holes(&self, id: usize) -> &[NtId] {
        &self.holes[id]
    }

    /// Production ids whose left-hand side is `nt`.
    pub fn productions_of(&self, nt: NtId) -> &[usize] {
        &self.by_lhs[nt]
    }

    pub fn nonterminal_id(&self, name: &str) -> Option<NtId> {
        self.nonterminals.iter().position(|n| n.name == name)
    }

    pub fn symbol_text(&self, s: GSym) -> String {
        match s {
            GSym::T(t) => self.terminals[t].text(),
            GSym::N(n) => self.nonterminals[n].name.clone(),
        }
    }

    /// Renders a sentential form with S-expression spacing.
    pub fn render(&self, form: &[GSym]) -> String {
        let mut out = String::new();
        let mut prev_open = true;
        for &s in form {
            let text = self.symbol_text(s);
            let is_close = matches!(s, GSym::T(t) if self.terminals[t] == Terminal::Close);
            if !prev_open && !is_close {
                out.push(' ');
            }
            prev_open = matches!(s, GSym::T(t) if self.terminals[t] == Terminal::Open);
            out.push_str(&text);
        }
        out
    }

    /// Builds the term of a complete leftmost derivation given as production
    /// ids. Returns `None` if the derivation is not complete.
    pub fn derivation_term(&self, derivation: &[usize]) -> Option<Term> {
        self.derivation_term_from(self.start, derivation)
    }

    /// Like [`Grammar::derivation_term`] for a derivation rooted at `nt`.
    pub fn derivation_term_from(&self, nt: NtId, derivation: &[usize]) -> Option<Term> {
        let mut pos = 0;
        let t = self.build_term(nt, derivation, &mut pos)?;
        (pos == derivation.len()).then_some(t)
    }

    fn build_term(&self, nt: NtId, derivation: &[usize], pos: &mut usize) -> Option<Term> {
        let p = *derivation.get(*pos)?;
        if self.productions[p].lhs != nt {
            return None;
        }
        *pos += 1;
        let mut kids = Vec::with_capacity(self.holes[p].len());
        for &h in &self.holes[p] {
            kids.push(self.build_term(h, derivation, pos)?);
        }
        Some(self.patterns[p].instantiate(&mut kids.into_iter()))
    }

    /// The `((N S (rules...)) ...)` grouped rule list in SyGuS-IF v2 syntax,
    /// preceded by the `((N S) ...)` declarations.
    pub fn to_sygus(&self) -> String {
        let decls: Vec<String> = self
            .nonterminals
            .iter()
            .map(|n| format!("({} {})", n.name, n.sort))
            .collect();
        let rules: Vec<String> = self
            .nonterminals
            .iter()
            .enumerate()
            .map(|(i, n)| {
                let alts: Vec<String> = self.by_lhs[i]
                    .iter()
                    .map(|&p| self.render(&self.productions[p].rhs))
                    .collect();
                format!("({} {} ({}))", n.name, n.sort, alts.join(" "))
            })
            .collect();
        format!("({}) ({})", decls.join(" "), rules.join(" "))
    }
}

impl fmt::Display for Grammar {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_sygus())
    }
}

/// Incremental grammar construction; validation happens in [`GrammarBuilder::build`].
#[derive(Clone, Debug, Default)]
pub struct GrammarBuilder {
    nonterminals: Vec<NonTerminal>,
    terminals: Vec<Terminal>,
    productions: Vec<Production>,
    patterns: Vec<Pattern>,
}

impl GrammarBuilder {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn nonterminal(&mut self, name: &str, sort: Sort) -> Result<NtId, GrammarError> {
        if self.nonterminals.iter().any(|n| n.name == name) {
            return Err(GrammarError::DuplicateNonTerminal(name.to_string()));
        }
        self.nonterminals.push(NonTerminal {
            name: name.to_string(),
            sort,
        });
        Ok(self.nonterminals.len() - 1)
    }

    pub fn nonterminal_id(&self, name: &str) -> Option<NtId> {
        self.nonterminals.iter().position(|n| n.name == name)
    }

    pub fn nonterminal_sort(&self, id: NtId) -> Sort {
        self.nonterminals[id].sort
    }

    fn intern(&mut self, t: Terminal) -> TerminalId {
        if let Some(i) = self.terminals.iter().position(|x| *x == t) {
            return i;
        }
        self.terminals.push(t);
        self.terminals.len() - 1
    }

    fn flatten(&mut self, p: &Pattern, out: &mut Vec<GSym>) -> Result<(), String> {
        match p {
            Pattern::Hole(n) => out.push(GSym::N(*n)),
            Pattern::Leaf(t) => {
                let term = match t {
                    Term::Var(name) => {
                        return Err(format!("variable `{}` needs a sort; use GrammarBuilder::var", name))
                    }
                    Term::Int(i) => Terminal::Lit(Value::Int(i.clone())),
                    Term::Bool(b) => Terminal::Lit(Value::Bool(*b)),
                    Term::BitVec { bits, width } => Terminal::Lit(Value::bv(*bits, *width)),
                    other => return Err(format!("`{}` is not a leaf", other)),
                };
                out.push(GSym::T(self.intern(term)));
            }
            Pattern::Node(head, ch) => {
                out.push(GSym::T(self.intern(Terminal::Open)));
                let h = match head {
                    Head::Op(op) => Terminal::Op(*op),
                    Head::Ite => Terminal::Ite,
                };
                out.push(GSym::T(self.intern(h)));
                for c in ch {
                    self.flatten(c, out)?;
                }
                out.push(GSym::T(self.intern(Terminal::Close)));
            }
        }
        Ok(())
    }

    /// Adds a production whose body is a variable of the given sort.
    pub fn var(&mut self, lhs: NtId, name: &str, sort: Sort) {
        let t = self.intern(Terminal::Var {
            name: name.to_string(),
            sort,
        });
        self.productions.push(Production {
            lhs,
            rhs: vec![GSym::T(t)],
        });
        self.patterns.push(Pattern::Leaf(Term::var(name)));
    }

    /// Adds a production whose body is `pattern`. Variables inside the
    /// pattern are looked up in `var_sorts`.
    pub fn production(
        &mut self,
        lhs: NtId,
        pattern: Pattern,
        var_sorts: &dyn Fn(&str) -> Option<Sort>,
    ) -> Result<(), GrammarError> {
        let mut rhs = Vec::new();
        self.flatten_with_vars(&pattern, &mut rhs, var_sorts)
            .map_err(|detail| GrammarError::IllSorted {
                nt: self.nonterminals[lhs].name.clone(),
                detail,
            })?;
        self.productions.push(Production { lhs, rhs });
        self.patterns.push(pattern);
        Ok(())
    }

    fn flatten_with_vars(
        &mut self,
        p: &Pattern,
        out: &mut Vec<GSym>,
        var_sorts: &dyn Fn(&str) -> Option<Sort>,
    ) -> Result<(), String> {
        match p {
            Pattern::Leaf(Term::Var(name)) => {
                let sort = var_sorts(name).ok_or_else(|| format!("undeclared symbol `{}`", name))?;
                let t = self.intern(Terminal::Var {
                    name: name.clone(),
                    sort,
                });
                out.push(GSym::T(t));
                Ok(())
            }
            Pattern::Node(head, ch) => {
                out.push(GSym::T(self.intern(Terminal::Open)));
                let h = match head {
                    Head::Op(op) => Terminal::Op(*op),
                    Head::Ite => Terminal::Ite,
                };
                out.push(GSym::T(self.intern(h)));
                for c in ch {
                    self.flatten_with_vars(c, out, var_sorts)?;
                }
                out.push(GSym::T(self.intern(Terminal::Close)));
                Ok(())
            }
            other => self.flatten(other, out),
        }
    }

    fn pattern_sort(&self, p: &Pattern, var_sorts: &dyn Fn(&str) -> Option<Sort>) -> Result<Sort, String> {
        match p {
            Pattern::Hole(n) => Ok(self.nonterminals[*n].sort),
            Pattern::Leaf(t) => t.sort(var_sorts, &|_| None),
            Pattern::Node(Head::Ite, ch) => {
                if ch.len() != 3 {
                    return Err(format!("`ite` takes 3 arguments, got {}", ch.len()));
                }
                if self.pattern_sort(&ch[0], var_sorts)? != Sort::Bool {
                    return Err("`ite` condition must be Bool".to_string());
                }
                let (a, b) = (self.pattern_sort(&ch[1], var_sorts)?, self.pattern_sort(&ch[2], var_sorts)?);
                if a != b {
                    return Err("`ite` branches differ in sort".to_string());
                }
                Ok(a)
            }
            Pattern::Node(Head::Op(op), ch) => {
                if !op.arity().admits(ch.len()) {
                    return Err(format!("`{}` takes {} arguments, got {}", op, op.arity(), ch.len()));
                }
                let sorts = ch
                    .iter()
                    .map(|c| self.pattern_sort(c, var_sorts))
                    .collect::<Result<Vec<_>, _>>()?;
                op.result_sort(&sorts)
            }
        }
    }

    /// Validates and freezes the grammar. The start symbol is nonterminal 0.
    pub fn build(self) -> Result<Grammar, GrammarError> {
        if self.nonterminals.is_empty() {
            return Err(GrammarError::Empty);
        }
        let term_texts: BTreeSet<String> = self.terminals.iter().map(Terminal::text).collect();
        for n in &self.nonterminals {
            if term_texts.contains(&n.name) || Op::from_name(&n.name).is_some() || n.name == "ite" {
                return Err(GrammarError::NameCollision(n.name.clone()));
            }
        }
        let var_sorts = |name: &str| {
            self.terminals.iter().find_map(|t| match t {
                Terminal::Var { name: n, sort } if n == name => Some(*sort),
                _ => None,
            })
        };
        let mut by_lhs = vec![Vec::new(); self.nonterminals.len()];
        for (i, p) in self.productions.iter().enumerate() {
            let nt = &self.nonterminals[p.lhs];
            let sort = self
                .pattern_sort(&self.patterns[i], &var_sorts)
                .map_err(|detail| GrammarError::IllSorted {
                    nt: nt.name.clone(),
                    detail: detail.clone(),
                })?;
            if sort != nt.sort {
                return Err(GrammarError::IllSorted {
                    nt: nt.name.clone(),
                    detail: format!("body has sort {}, expected {}", sort, nt.sort),
                });
            }
            by_lhs[p.lhs].push(i);
        }
        for (i, n) in self.nonterminals.iter().enumerate() {
            if by_lhs[i].is_empty() {
                return Err(GrammarError::NoProductions(n.name.clone()));
            }
        }
        let holes: Vec<Vec<NtId>> = self.patterns.iter().map(Pattern::holes).collect();
        // productive-nonterminal fixpoint
        let mut productive = vec![false; self.nonterminals.len()];
        loop {
            let mut changed = false;
            for (i, p) in self.productions.iter().enumerate() {
                if !productive[p.lhs] && holes[i].iter().all(|&h| productive[h]) {
                    productive[p.lhs] = true;
                    changed = true;
                }
            }
            if !changed {
                break;
            }
        }
        if let Some(i) = productive.iter().position(|p| !p) {
            return Err(GrammarError::DeadNonTerminal(self.nonterminals[i].name.clone()));
        }
        Ok(Grammar {
            nonterminals: self.nonterminals,
            terminals: self.terminals,
            productions: self.productions,
            patterns: self.patterns,
            holes,
            by_lhs,
            start: 0,
        })
    }
}

/// Built-in operator families.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GrammarFamily {
    /// Linear/nonlinear integer arithmetic.
    Integer,
    /// Bitvectors of a single width.
    BitVec,
}

fn fresh_name(base: &str, taken: &[&str]) -> String {
    let mut name = base.to_string();
    while taken.contains(&name.as_str()) {
        name.push('_');
    }
    name
}

fn node(op: Op, ch: Vec<Pattern>) -> Pattern {
    Pattern::Node(Head::Op(op), ch)
}

/// Full-logic grammar for a function with the given parameters and return
/// sort. `extra_literals` is added to the `{0, 1}` literal pool (values of
/// other sorts are ignored).
pub fn default_grammar(
    family: GrammarFamily,
    params: &[(String, Sort)],
    ret: Sort,
    extra_literals: &[Value],
) -> Result<Grammar, GrammarError> {
    let taken: Vec<&str> = params.iter().map(|(n, _)| n.as_str()).collect();
    let var_sorts = |name: &str| params.iter().find(|(n, _)| n == name).map(|(_, s)| *s);
    let mut b = GrammarBuilder::new();
    match family {
        GrammarFamily::Integer => {
            let (int_name, bool_name) = (fresh_name("I", &taken), fresh_name("B", &taken));
            let (i, bo) = if ret == Sort::Bool {
                let bo = b.nonterminal(&bool_name, Sort::Bool)?;
                (b.nonterminal(&int_name, Sort::Int)?, bo)
            } else if ret == Sort::Int {
                let i = b.nonterminal(&int_name, Sort::Int)?;
                (i, b.nonterminal(&bool_name, Sort::Bool)?)
            } else {
                return Err(GrammarError::UnsupportedLogic(format!("integer grammar returning {}", ret)));
            };
            for (name, sort) in params {
                match sort {
                    Sort::Int => b.var(i, name, Sort::Int),
                    Sort::Bool => b.var(bo, name, Sort::Bool),
                    Sort::BitVec(_) => {}
                }
            }
            let mut pool: Vec<Int> = vec![Int::Small(0), Int::Small(1)];
            let mut extra: Vec<Int> = extra_literals
                .iter()
                .filter_map(|v| v.as_int().cloned())
                .filter(|v| !pool.contains(v))
                .collect();
            extra.sort();
            extra.dedup();
            pool.extend(extra);
            for lit in pool {
                b.production(i, Pattern::Leaf(Term::Int(lit)), &var_sorts)?;
            }
            let (hi, hb) = (Pattern::Hole(i), Pattern::Hole(bo));
            for op in [Op::Add, Op::Sub, Op::Mul] {
                b.production(i, node(op, vec![hi.clone(), hi.clone()]), &var_sorts)?;
            }
            b.production(i, Pattern::Node(Head::Ite, vec![hb.clone(), hi.clone(), hi.clone()]), &var_sorts)?;
            for op in [Op::Ge, Op::Le, Op::Eq] {
                b.production(bo, node(op, vec![hi.clone(), hi.clone()]), &var_sorts)?;
            }
            for op in [Op::And, Op::Or] {
                b.production(bo, node(op, vec![hb.clone(), hb.clone()]), &var_sorts)?;
            }
            b.production(bo, node(Op::Not, vec![hb]), &var_sorts)?;
        }
        GrammarFamily::BitVec => {
            let width = match ret {
                Sort::BitVec(w) => Some(w),
                Sort::Bool => params.iter().find_map(|(_, s)| match s {
                    Sort::BitVec(w) => Some(*w),
                    _ => None,
                }),
                Sort::Int => {
                    return Err(GrammarError::UnsupportedLogic("bitvector grammar returning Int".to_string()))
                }
            };
            let (bv_name, bool_name) = (fresh_name("V", &taken), fresh_name("B", &taken));
            let mut v = None;
            let bo;
            if ret == Sort::Bool {
                bo = b.nonterminal(&bool_name, Sort::Bool)?;
                if let Some(w) = width {
                    v = Some(b.nonterminal(&bv_name, Sort::BitVec(w))?);
                }
            } else {
                v = Some(b.nonterminal(&bv_name, ret)?);
                bo = b.nonterminal(&bool_name, Sort::Bool)?;
            }
            let mut bool_leaves = 0;
            for (name, sort) in params {
                match (sort, v, width) {
                    (Sort::BitVec(w), Some(vid), Some(width)) if *w == width => b.var(vid, name, *sort),
                    (Sort::Bool, _, _) => {
                        b.var(bo, name, Sort::Bool);
                        bool_leaves += 1;
                    }
                    _ => {}
                }
            }
            if let (Some(vid), Some(w)) = (v, width) {
                let mut pool: Vec<u64> = vec![0, 1];
                for lit in extra_literals {
                    if let Value::BitVec { bits, width: lw } = lit {
                        if *lw == w && !pool.contains(bits) {
                            pool.push(*bits);
                        }
                    }
                }
                for bits in pool {
                    b.production(vid, Pattern::Leaf(Term::BitVec { bits: bits & crate::value::bv_mask(w), width: w }), &var_sorts)?;
                }
                let hv = Pattern::Hole(vid);
                for op in [Op::BvAdd, Op::BvSub, Op::BvAnd, Op::BvOr, Op::BvXor] {
                    b.production(vid, node(op, vec![hv.clone(), hv.clone()]), &var_sorts)?;
                }
                b.production(vid, node(Op::BvNot, vec![hv.clone()]), &var_sorts)?;
                b.production(
                    vid,
                    Pattern::Node(Head::Ite, vec![Pattern::Hole(bo), hv.clone(), hv.clone()]),
                    &var_sorts,
                )?;
                for op in [Op::Eq, Op::BvUlt] {
                    b.production(bo, node(op, vec![hv.clone(), hv.clone()]), &var_sorts)?;
                }
            } else if bool_leaves == 0 {
                for lit in [false, true] {
                    b.production(bo, Pattern::Leaf(Term::Bool(lit)), &var_sorts)?;
                }
            }
            let hb = Pattern::Hole(bo);
            for op in [Op::And, Op::Or] {
                b.production(bo, node(op, vec![hb.clone(), hb.clone()]), &var_sorts)?;
            }
            b.production(bo, node(Op::Not, vec![hb]), &var_sorts)?;
        }
    }
    b.build()
}

/// Renders a literal the way it appears as a grammar terminal.
pub fn literal_text(v: &Value) -> String {
    match v {
        Value::BitVec { bits, width } => bv_literal(*bits, *width),
        other => other.to_smtlib(),
    }
}
