//! CEGIS with an A* synthesis phase over a grammar.
//!
//! A search state is a leftmost derivation. Expanding the leftmost
//! nonterminal `N` costs `|productions(N)| * c`; the heuristic sums the
//! minimal completion cost of every pending nonterminal. Completed
//! subterms are evaluated on the current examples, and a subterm that agrees
//! with an earlier one of the same nonterminal on every example is dropped.

use alloc::collections::BinaryHeap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::cmp::{Ordering, Reverse};

use hashbrown::{HashMap, HashSet};
use serde::{Deserialize, Serialize};

use crate::deadline::Deadline;
use crate::eval::{evaluate, Assignment, Compiled, Scalar};
use crate::grammar::{GSym, Grammar, Head, NtId, Pattern};
use crate::query::{Candidate, SynthQuery};
use crate::symbolic::{Builder, Fnv, Sym};
use crate::term::{Op, Sort, Term};
use crate::value::Value;
use crate::verify::{zero_of, Verdict, Verifier};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnumConfig {
    /// Edge cost per available production.
    pub cost_constant: f64,
    /// Drop completed subterms that agree with an earlier one on all examples.
    pub equivalence_pruning: bool,
    /// Skip partial programs whose open frames denote the same function of
    /// the pending holes as an already expanded one.
    pub context_dedupe: bool,
    /// Maximum number of sentential-form hashes remembered.
    pub seen_cap: usize,
    /// The search gives up (as a timeout) after creating this many states.
    pub max_states: usize,
}

impl Default for EnumConfig {
    fn default() -> Self {
        EnumConfig { cost_constant: 1.0, equivalence_pruning: true, context_dedupe: false, seen_cap: 1 << 22, max_states: 20_000_000 }
    }
}

/// Cost of any edge expanding `nt`.
pub fn edge_cost(grammar: &Grammar, nt: NtId, config: &EnumConfig) -> f64 {
    grammar.productions_of(nt).len() as f64 * config.cost_constant
}

/// Least fixpoint of `mc(N) = min over N -> α of edge(N) + Σ mc(M in α)`.
pub fn min_completion_costs(grammar: &Grammar, config: &EnumConfig) -> Vec<f64> {
    let n = grammar.nonterminals().len();
    let mut mc = alloc::vec![f64::INFINITY; n];
    loop {
        let mut changed = false;
        for (p, prod) in grammar.productions().iter().enumerate() {
            let c = edge_cost(grammar, prod.lhs, config) + grammar.holes(p).iter().map(|h| mc[*h]).sum::<f64>();
            if c < mc[prod.lhs] {
                mc[prod.lhs] = c;
                changed = true;
            }
        }
        if !changed {
            return mc;
        }
    }
}

/// Sum of minimal completion costs over the nonterminals of `form`.
pub fn heuristic(form: &[GSym], mc: &[f64]) -> f64 {
    form.iter()
        .map(|s| match s {
            GSym::N(n) => mc[*n],
            GSym::T(_) => 0.0,
        })
        .sum()
}

/// A sentential form with its path cost and heuristic estimate.
#[derive(Clone, Debug, PartialEq)]
pub struct PartialProgram {
    pub form: Vec<GSym>,
    pub cost: f64,
    pub estimate: f64,
}

impl PartialProgram {
    pub fn start(grammar: &Grammar, mc: &[f64]) -> Self {
        let form = alloc::vec![GSym::N(grammar.start())];
        let estimate = heuristic(&form, mc);
        PartialProgram { form, cost: 0.0, estimate }
    }

    pub fn is_complete(&self) -> bool {
        self.form.iter().all(|s| matches!(s, GSym::T(_)))
    }

    /// Successors by rewriting the leftmost nonterminal, one per production.
    pub fn expand(&self, grammar: &Grammar, mc: &[f64], config: &EnumConfig) -> Vec<(usize, PartialProgram)> {
        let Some(i) = self.form.iter().position(|s| matches!(s, GSym::N(_))) else {
            return Vec::new();
        };
        let GSym::N(nt) = self.form[i] else { unreachable!() };
        let edge = edge_cost(grammar, nt, config);
        grammar
            .productions_of(nt)
            .iter()
            .map(|&p| {
                let mut form = self.form[..i].to_vec();
                form.extend_from_slice(&grammar.production(p).rhs);
                form.extend_from_slice(&self.form[i + 1..]);
                let estimate = heuristic(&form, mc);
                (p, PartialProgram { form, cost: self.cost + edge, estimate })
            })
            .collect()
    }
}

/// The sentential form reached by a leftmost derivation.
pub fn sentential_form(grammar: &Grammar, derivation: &[usize]) -> Vec<GSym> {
    let mut form = alloc::vec![GSym::N(grammar.start())];
    for &p in derivation {
        if let Some(i) = form.iter().position(|s| matches!(s, GSym::N(_))) {
            form.splice(i..i + 1, grammar.production(p).rhs.iter().copied());
        }
    }
    form
}

/// Input assignments over the query's universal variables.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct CounterexampleSet {
    vars: Vec<(String, Sort)>,
    points: Vec<Assignment>,
}

impl CounterexampleSet {
    pub fn new(vars: &[(String, Sort)]) -> Self {
        CounterexampleSet { vars: vars.to_vec(), points: Vec::new() }
    }

    /// The set holding only the all-zeros assignment.
    pub fn zeros(vars: &[(String, Sort)]) -> Self {
        let mut s = Self::new(vars);
        s.push(Assignment::new());
        s
    }

    /// Restricts `a` to the universal variables (missing ones become zero)
    /// and adds it; returns false if it was already present.
    pub fn push(&mut self, a: Assignment) -> bool {
        let full: Assignment = self
            .vars
            .iter()
            .map(|(n, s)| (n.clone(), a.get(n).cloned().unwrap_or_else(|| zero_of(*s))))
            .collect();
        if self.points.contains(&full) {
            return false;
        }
        self.points.push(full);
        true
    }

    pub fn points(&self) -> &[Assignment] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// The constraints instantiated at every example, with each call of the
/// synthesized function replaced by a read of its output at one input tuple.
struct PointSpec {
    inputs: Vec<Vec<Scalar>>,
    checks: Vec<Compiled>,
    /// Finite sets of allowed outputs per input, where the constraints pin
    /// the output to one of a few literals.
    targets: Vec<Option<Vec<Scalar>>>,
}

/// Per-example allowed values of a subterm (`None` = unconstrained), or
/// `None` overall when nothing is known.
type Target = Option<Vec<Option<Vec<Scalar>>>>;

fn split_and<'t>(t: &'t Term, out: &mut Vec<&'t Term>) {
    match t {
        Term::App(Op::And, args) => args.iter().for_each(|a| split_and(a, out)),
        _ => out.push(t),
    }
}

fn slot_of(t: &Term) -> Option<usize> {
    match t {
        Term::Var(v) => v.strip_prefix('#')?.parse().ok(),
        _ => None,
    }
}

fn slots_of(t: &Term) -> Vec<usize> {
    let mut out = Vec::new();
    t.visit(&mut |s| {
        if let Some(k) = slot_of(s) {
            if !out.contains(&k) {
                out.push(k);
            }
        }
    });
    out
}

fn literal(t: &Term) -> Option<Scalar> {
    match t {
        Term::Int(_) | Term::Bool(_) | Term::BitVec { .. } => Scalar::from_value(&evaluate(t, &Assignment::new(), None).ok()?),
        _ => None,
    }
}

/// `(or (= #k c1) (= c2 #k) ...)` as `(k, [c1, c2, ...])`.
fn eq_disjunction(t: &Term) -> Option<(usize, Vec<Scalar>)> {
    match t {
        Term::App(Op::Or, args) => {
            let mut slot = None;
            let mut vals = Vec::new();
            for a in args {
                let (k, vs) = eq_disjunction(a)?;
                if slot.is_some_and(|s| s != k) {
                    return None;
                }
                slot = Some(k);
                vals.extend(vs);
            }
            Some((slot?, vals))
        }
        Term::App(Op::Eq, args) if args.len() == 2 => {
            let (k, c) = match (slot_of(&args[0]), slot_of(&args[1])) {
                (Some(k), None) => (k, literal(&args[1])?),
                (None, Some(k)) => (k, literal(&args[0])?),
                _ => return None,
            };
            Some((k, alloc::vec![c]))
        }
        _ => None,
    }
}

fn finite_targets(lifted: &[Term], slots: &[String]) -> Vec<Option<Vec<Scalar>>> {
    let mut clauses = Vec::new();
    for t in lifted {
        split_and(t, &mut clauses);
    }
    let mut targets: Vec<Option<Vec<Scalar>>> = alloc::vec![None; slots.len()];
    for c in &clauses {
        if let Some((k, mut vals)) = eq_disjunction(c) {
            if let Some(prev) = &targets[k] {
                vals.retain(|v| prev.contains(v));
            }
            vals.dedup();
            targets[k] = Some(vals);
        }
    }
    for c in &clauses {
        let on = slots_of(c);
        let [k] = on[..] else { continue };
        let Some(vals) = targets[k].as_mut() else { continue };
        let Ok(compiled) = Compiled::new(c, slots) else { continue };
        let mut point = alloc::vec![Scalar::Undefined; slots.len()];
        vals.retain(|v| {
            point[k] = *v;
            compiled.eval_scalar(&point) != Some(Scalar::Bool(false))
        });
    }
    targets
}

/// Values `x` such that `op(args with x at hole)` lands in `want`.
fn invert(op: Op, hole: usize, others: &[Scalar], want: &[Scalar]) -> Option<Vec<Scalar>> {
    let int = |s: &Scalar| match s {
        Scalar::Int(i) => Some(*i),
        _ => None,
    };
    let ints = |f: &dyn Fn(i64) -> Option<i64>| -> Option<Vec<Scalar>> {
        want.iter().map(|w| int(w).and_then(f).map(Scalar::Int)).collect()
    };
    let has = |b: bool| want.contains(&Scalar::Bool(b));
    match (op, hole, others) {
        (Op::Add, 1, [a]) => ints(&|w| w.checked_sub(int(a)?)),
        (Op::Sub, 1, [a]) => ints(&|w| int(a)?.checked_sub(w)),
        (Op::Sub, 0, []) => ints(&|w| w.checked_neg()),
        (Op::Mul, 1, [a]) => match int(a)? {
            0 if want.contains(&Scalar::Int(0)) => None,
            0 => Some(Vec::new()),
            a => Some(want.iter().filter_map(int).filter(|w| w % a == 0).map(|w| Scalar::Int(w / a)).collect()),
        },
        (Op::Eq, 1, [a]) if want == [Scalar::Bool(true)] => Some(alloc::vec![*a]),
        (Op::And, 1, [Scalar::Bool(false)]) => (!has(false)).then(Vec::new),
        (Op::Or, 1, [Scalar::Bool(true)]) => (!has(true)).then(Vec::new),
        (Op::And, 1, [Scalar::Bool(true)]) | (Op::Or, 1, [Scalar::Bool(false)]) => Some(want.to_vec()),
        (Op::Not, 0, []) => Some(want.iter().map(|w| if let Scalar::Bool(b) = w { Scalar::Bool(!b) } else { *w }).collect()),
        _ => None,
    }
}

fn misses(target: &Target, v: &[Scalar]) -> bool {
    let Some(t) = target else { return false };
    t.iter().zip(v).any(|(t, x)| t.as_ref().is_some_and(|t| !t.contains(x)))
}

enum Spec {
    Points(PointSpec),
    /// Nested calls: evaluate whole constraints per example.
    Direct(Vec<Assignment>),
}

fn lift(term: &Term, example: &Assignment, fun: &str, inputs: &mut Vec<Vec<Value>>) -> Option<Term> {
    Some(match term {
        Term::Var(v) => Term::from_value(example.get(v)?)?,
        Term::Call(name, args) if name == fun => {
            let mut tuple = Vec::with_capacity(args.len());
            for a in args {
                if a.contains_call(fun) {
                    return None;
                }
                tuple.push(evaluate(a, example, None).ok()?);
            }
            let k = match inputs.iter().position(|t| *t == tuple) {
                Some(k) => k,
                None => {
                    inputs.push(tuple);
                    inputs.len() - 1
                }
            };
            Term::Var(format!("#{}", k))
        }
        Term::Call(..) => return None,
        Term::App(op, args) => {
            Term::App(*op, args.iter().map(|a| lift(a, example, fun, inputs)).collect::<Option<Vec<_>>>()?)
        }
        Term::Ite(c, t, e) => Term::ite(lift(c, example, fun, inputs)?, lift(t, example, fun, inputs)?, lift(e, example, fun, inputs)?),
        other => other.clone(),
    })
}

impl Spec {
    fn new(query: &SynthQuery, examples: &CounterexampleSet) -> Spec {
        let direct = || Spec::Direct(examples.points().to_vec());
        let mut inputs: Vec<Vec<Value>> = Vec::new();
        let mut lifted = Vec::new();
        for e in examples.points() {
            for c in &query.constraints {
                match lift(c, e, &query.function.name, &mut inputs) {
                    Some(t) => lifted.push(t),
                    None => return direct(),
                }
            }
        }
        let slots: Vec<String> = (0..inputs.len()).map(|k| format!("#{}", k)).collect();
        let Ok(checks) = lifted.iter().map(|t| Compiled::new(t, &slots)).collect::<Result<Vec<_>, _>>() else {
            return direct();
        };
        let Some(inputs) = inputs.iter().map(|t| t.iter().map(Scalar::from_value).collect::<Option<Vec<_>>>()).collect()
        else {
            return direct();
        };
        let targets = finite_targets(&lifted, &slots);
        Spec::Points(PointSpec { inputs, checks, targets })
    }

    fn consistent_outputs(&self, outputs: &[Scalar]) -> bool {
        let Spec::Points(ps) = self else { return false };
        let values: Vec<Value> = outputs.iter().map(|s| s.to_value()).collect();
        ps.checks.iter().all(|c| match c.eval_scalar(outputs) {
            Some(s) => s == Scalar::Bool(true),
            None => c.eval(&values) == Ok(Value::Bool(true)),
        })
    }

    fn consistent_candidate(&self, query: &SynthQuery, cand: &Candidate) -> bool {
        let Spec::Direct(examples) = self else { return false };
        examples
            .iter()
            .all(|e| query.constraints.iter().all(|c| evaluate(c, e, Some(cand)) == Ok(Value::Bool(true))))
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SearchStats {
    pub popped: u64,
    pub pushed: u64,
    pub pruned: u64,
    pub duplicates: u64,
}

#[derive(Clone, Debug, PartialEq)]
pub enum SearchOutcome {
    Found(Candidate),
    Exhausted,
    Timeout,
}

#[derive(Clone, Copy)]
struct Node {
    parent: u32,
    prod: u32,
}

const ROOT: u32 = u32::MAX;

#[derive(Clone, Copy, PartialEq)]
struct Entry {
    prio: f64,
    seq: u64,
    cost: f64,
    node: u32,
    complete: bool,
    /// The target bonus has already been added to `prio`.
    boosted: bool,
}

impl Eq for Entry {}

impl Ord for Entry {
    fn cmp(&self, other: &Self) -> Ordering {
        self.prio.total_cmp(&other.prio).then(self.seq.cmp(&other.seq))
    }
}

impl PartialOrd for Entry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

fn pattern_is_partial(p: &Pattern) -> bool {
    match p {
        Pattern::Node(head, args) => {
            matches!(head, Head::Op(Op::Div | Op::Mod | Op::BvUdiv | Op::BvUrem)) || args.iter().any(pattern_is_partial)
        }
        _ => false,
    }
}

/// A production awaiting its children during derivation replay.
struct Frame {
    prod: usize,
    start: usize,
    children: Vec<Option<Vec<Scalar>>>,
    /// Examples at which this subterm's value can affect the program output.
    mask: Vec<bool>,
    target: Target,
}

fn fnv(form: &[GSym]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for s in form {
        let (tag, v) = match s {
            GSym::T(t) => (0u64, *t as u64),
            GSym::N(n) => (1u64, *n as u64),
        };
        for b in (tag << 63 | v).to_le_bytes() {
            h ^= b as u64;
            h = h.wrapping_mul(0x100_0000_01b3);
        }
    }
    h
}

struct Search<'a> {
    grammar: &'a Grammar,
    query: &'a SynthQuery,
    config: &'a EnumConfig,
    spec: Spec,
    mc: Vec<f64>,
    /// Cheapest completion of each nonterminal through a production with holes.
    min_nonleaf: Vec<f64>,
    /// Productions considered, with duplicates of an earlier rule removed.
    canonical: Vec<Vec<usize>>,
    /// Each production's pattern compiled over `params ++ holes`.
    patterns: Vec<Option<Compiled>>,
    leaf_vectors: Vec<Option<Vec<Scalar>>>,
    /// Productions of the form `(ite _ _ _)` with three holes.
    ite: Vec<bool>,
    /// Operator of productions whose arguments are all holes.
    direct_op: Vec<Option<Op>>,
    root_target: Target,
    classes: HashMap<(NtId, Vec<Option<Scalar>>), Vec<u32>>,
    /// Open-frame stacks already expanded, by the hash of their symbolic
    /// form at every example. Only used when no production can be undefined.
    contexts: Option<HashSet<u128>>,
    builder: Builder,
    param_syms: Vec<Vec<Sym>>,
    nodes: Vec<Node>,
    seen: HashSet<u64>,
    stats: SearchStats,
    scratch: Vec<Scalar>,
}

impl<'a> Search<'a> {
    fn new(grammar: &'a Grammar, query: &'a SynthQuery, examples: &CounterexampleSet, config: &'a EnumConfig) -> Self {
        let spec = Spec::new(query, examples);
        let params: Vec<String> = query.function.params.iter().map(|(n, _)| n.clone()).collect();
        let patterns: Vec<Option<Compiled>> = (0..grammar.productions().len())
            .map(|p| {
                let holes = grammar.holes(p).len();
                let mut fill = (0..holes).map(|h| Term::Var(format!("#h{}", h)));
                let t = grammar.pattern(p).instantiate(&mut fill);
                let slots: Vec<String> = params.iter().cloned().chain((0..holes).map(|h| format!("#h{}", h))).collect();
                Compiled::new(&t, &slots).ok()
            })
            .collect();
        let canonical = (0..grammar.nonterminals().len())
            .map(|nt| {
                let mut kept: Vec<usize> = Vec::new();
                for &p in grammar.productions_of(nt) {
                    if !kept.iter().any(|&q| grammar.production(q).rhs == grammar.production(p).rhs) {
                        kept.push(p);
                    }
                }
                kept
            })
            .collect();
        let ite = (0..grammar.productions().len())
            .map(|p| match grammar.pattern(p) {
                Pattern::Node(Head::Ite, args) => args.iter().all(|a| matches!(a, Pattern::Hole(_))),
                _ => false,
            })
            .collect();
        let direct_op = (0..grammar.productions().len())
            .map(|p| match grammar.pattern(p) {
                Pattern::Node(Head::Op(op), args) if args.iter().all(|a| matches!(a, Pattern::Hole(_))) => Some(*op),
                _ => None,
            })
            .collect();
        let root_target = match &spec {
            Spec::Points(ps) if ps.targets.iter().any(Option::is_some) => Some(ps.targets.clone()),
            _ => None,
        };
        let total = |p: usize| !pattern_is_partial(grammar.pattern(p));
        let contexts = (config.context_dedupe
            && matches!(spec, Spec::Points(_))
            && (0..grammar.productions().len()).all(total))
        .then(HashSet::new);
        let param_syms = match &spec {
            Spec::Points(ps) => ps.inputs.iter().map(|i| i.iter().map(|v| Sym::Const(*v)).collect()).collect(),
            Spec::Direct(_) => Vec::new(),
        };
        let mc = min_completion_costs(grammar, config);
        let mut min_nonleaf = alloc::vec![f64::INFINITY; grammar.nonterminals().len()];
        for (p, prod) in grammar.productions().iter().enumerate() {
            let holes = grammar.holes(p);
            if !holes.is_empty() {
                let c = edge_cost(grammar, prod.lhs, config) + holes.iter().map(|h| mc[*h]).sum::<f64>();
                min_nonleaf[prod.lhs] = min_nonleaf[prod.lhs].min(c);
            }
        }
        let mut s = Search {
            grammar,
            contexts,
            builder: Builder::new(),
            param_syms,
            ite,
            direct_op,
            root_target,
            query,
            config,
            spec,
            mc: mc.clone(),
            min_nonleaf,
            canonical,
            patterns,
            leaf_vectors: Vec::new(),
            classes: HashMap::new(),
            nodes: Vec::new(),
            seen: HashSet::new(),
            stats: SearchStats::default(),
            scratch: Vec::new(),
        };
        s.leaf_vectors = (0..grammar.productions().len())
            .map(|p| if grammar.holes(p).is_empty() { s.vector(p, &[]) } else { None })
            .collect();
        s
    }

    /// Output vector of production `p` at every example input, given its
    /// children's vectors.
    fn vector(&mut self, p: usize, children: &[Option<Vec<Scalar>>]) -> Option<Vec<Scalar>> {
        let Spec::Points(ps) = &self.spec else { return None };
        let compiled = self.patterns[p].as_ref()?;
        let kids: Vec<&Vec<Scalar>> = children.iter().map(|c| c.as_ref()).collect::<Option<Vec<_>>>()?;
        let mut out = Vec::with_capacity(ps.inputs.len());
        for (j, input) in ps.inputs.iter().enumerate() {
            self.scratch.clear();
            self.scratch.extend_from_slice(input);
            self.scratch.extend(kids.iter().map(|k| k[j]));
            out.push(compiled.eval_scalar(&self.scratch)?);
        }
        Some(out)
    }

    fn points(&self) -> usize {
        match &self.spec {
            Spec::Points(ps) => ps.inputs.len(),
            Spec::Direct(_) => 0,
        }
    }

    /// Mask of the next child of `frame`, or of the root.
    fn child_mask(&self, frame: Option<&Frame>) -> Vec<bool> {
        let Some(frame) = frame else { return alloc::vec![true; self.points()] };
        let hole = frame.children.len();
        if self.ite[frame.prod] && hole > 0 {
            if let Some(cond) = &frame.children[0] {
                let want = Scalar::Bool(hole == 1);
                return frame.mask.iter().zip(cond).map(|(m, c)| *m && *c == want).collect();
            }
        }
        frame.mask.clone()
    }

    /// Extra cost owed by a hole of `nt` whose target no leaf meets: any
    /// completion then uses a production with holes.
    fn target_bonus(&self, nt: NtId, target: &Target) -> f64 {
        let Some(t) = target else { return 0.0 };
        let meets = |v: &Vec<Scalar>| t.iter().zip(v).all(|(t, x)| t.as_ref().is_none_or(|t| t.contains(x)));
        let leaf_ok = self.canonical[nt].iter().any(|&p| {
            self.grammar.holes(p).is_empty() && self.leaf_vectors[p].as_ref().is_none_or(&meets)
        });
        if leaf_ok {
            0.0
        } else {
            (self.min_nonleaf[nt] - self.mc[nt]).max(0.0)
        }
    }

    /// Target of the next child of `frame`, or of the root.
    fn child_target(&self, frame: Option<&Frame>) -> Target {
        let Some(frame) = frame else { return self.root_target.clone() };
        let t = frame.target.as_ref()?;
        let hole = frame.children.len();
        if self.ite[frame.prod] {
            let cond = frame.children.first()?.as_ref()?;
            if hole == 0 {
                return None;
            }
            let want = Scalar::Bool(hole == 1);
            return Some(t.iter().zip(cond).map(|(t, c)| if *c == want { t.clone() } else { None }).collect());
        }
        let op = self.direct_op[frame.prod]?;
        if hole + 1 != self.grammar.holes(frame.prod).len() {
            return None;
        }
        let kids: Vec<&Vec<Scalar>> = frame.children.iter().map(|c| c.as_ref()).collect::<Option<_>>()?;
        let mut others = Vec::with_capacity(kids.len());
        let out: Vec<Option<Vec<Scalar>>> = t
            .iter()
            .enumerate()
            .map(|(j, want)| {
                let want = want.as_ref()?;
                others.clear();
                others.extend(kids.iter().map(|k| k[j]));
                invert(op, hole, &others, want)
            })
            .collect();
        out.iter().any(Option::is_some).then_some(out)
    }

    /// Hash of the pending nonterminals and of the stack's symbolic form at
    /// every example, with pending holes as unknowns.
    fn context_key(&mut self, stack: &[Frame]) -> Option<u128> {
        use core::hash::{Hash, Hasher};
        let mut h1 = Fnv(0xcbf2_9ce4_8422_2325);
        let mut h2 = Fnv(0x8422_2325_cbf2_9ce4);
        for f in stack {
            for nt in &self.grammar.holes(f.prod)[f.children.len()..] {
                nt.hash(&mut h1);
                nt.hash(&mut h2);
            }
        }
        for j in 0..self.param_syms.len() {
            let mut next = 0u16;
            let mut carry: Option<Sym> = None;
            for f in stack.iter().rev() {
                let holes = self.grammar.holes(f.prod);
                let mut slots = self.param_syms[j].clone();
                let base = slots.len();
                for c in &f.children {
                    slots.push(Sym::Const(c.as_ref()?[j]));
                }
                if let Some(c) = carry.take() {
                    slots.push(c);
                }
                while slots.len() - base < holes.len() {
                    let nt = holes[slots.len() - base];
                    slots.push(match self.grammar.nonterminals()[nt].sort {
                        Sort::Int => Sym::Poly(alloc::vec![(alloc::vec![Sym::Hole(next)], 1)]),
                        _ => Sym::Hole(next),
                    });
                    next += 1;
                }
                carry = Some(self.builder.eval(self.patterns[f.prod].as_ref()?, &slots)?);
            }
            let c = carry?;
            c.hash(&mut h1);
            c.hash(&mut h2);
        }
        Some((h1.finish() as u128) << 64 | h2.finish() as u128)
    }

    fn derivation(&self, mut node: u32) -> Vec<usize> {
        let mut d = Vec::new();
        while node != ROOT {
            let n = self.nodes[node as usize];
            d.push(n.prod as usize);
            node = n.parent;
        }
        d.reverse();
        d
    }

    /// Replays `derivation`, returning the open frames (bottom first).
    fn replay(&mut self, derivation: &[usize]) -> Vec<Frame> {
        let mut stack: Vec<Frame> = Vec::new();
        for (i, &p) in derivation.iter().enumerate() {
            let mask = self.child_mask(stack.last());
            let target = self.child_target(stack.last());
            stack.push(Frame { prod: p, start: i, children: Vec::new(), mask, target });
            while let Some(top) = stack.last() {
                if top.children.len() < self.grammar.holes(top.prod).len() {
                    break;
                }
                let top = stack.pop().unwrap();
                let v = if top.children.is_empty() {
                    self.leaf_vectors[top.prod].clone()
                } else {
                    self.vector(top.prod, &top.children)
                };
                match stack.last_mut() {
                    Some(parent) => parent.children.push(v),
                    None => return Vec::new(),
                }
            }
        }
        stack
    }

    fn next_nonterminal(&self, stack: &[Frame], derivation_len: usize) -> Option<NtId> {
        match stack.last() {
            Some(top) => Some(self.grammar.holes(top.prod)[top.children.len()]),
            None if derivation_len == 0 => Some(self.grammar.start()),
            None => None,
        }
    }

    /// Completes a leaf `p` against `stack`: returns the start symbol's
    /// output vector if the program becomes complete, and whether the
    /// child survives pruning.
    fn complete_leaf(
        &mut self,
        stack: &[Frame],
        derivation: &[usize],
        p: usize,
        target: &Target,
    ) -> (bool, Option<Option<Vec<Scalar>>>) {
        let lhs = self.grammar.production(p).lhs;
        let mut completed: Vec<(NtId, Vec<Option<Scalar>>, usize)> = Vec::new();
        let mut carry = self.leaf_vectors[p].clone();
        let mut carry_nt = lhs;
        let mut carry_start = derivation.len();
        let mut carry_mask = self.child_mask(stack.last());
        let mut level = stack.len();
        let pruning = self.config.equivalence_pruning;
        let mut finished = None;
        let mut carry_target = target;
        loop {
            if let Some(v) = &carry {
                if misses(carry_target, v) {
                    self.stats.pruned += 1;
                    return (false, None);
                }
                if pruning {
                    let key = v.iter().zip(&carry_mask).map(|(x, m)| m.then_some(*x)).collect();
                    completed.push((carry_nt, key, carry_start));
                }
            }
            if level == 0 {
                finished = Some(carry);
                break;
            }
            let frame = &stack[level - 1];
            let need = self.grammar.holes(frame.prod).len();
            if frame.children.len() + 1 < need {
                break;
            }
            let mut kids: Vec<Option<Vec<Scalar>>> = frame.children.clone();
            kids.push(carry);
            let prod = frame.prod;
            carry_start = frame.start;
            carry_nt = self.grammar.production(prod).lhs;
            carry_mask = frame.mask.clone();
            carry_target = &frame.target;
            carry = self.vector(prod, &kids);
            level -= 1;
        }
        if pruning {
            let slice = |start: usize| -> Vec<u32> {
                derivation[start..].iter().map(|&x| x as u32).chain(core::iter::once(p as u32)).collect()
            };
            for (nt, v, start) in &completed {
                if let Some(rep) = self.classes.get(&(*nt, v.clone())) {
                    if *rep != slice(*start) {
                        self.stats.pruned += 1;
                        return (false, None);
                    }
                }
            }
            for (nt, v, start) in completed {
                let s = slice(start);
                self.classes.entry((nt, v)).or_insert(s);
            }
        }
        (true, finished)
    }

    fn candidate(&self, derivation: &[usize]) -> Option<Candidate> {
        let body = self.grammar.derivation_term(derivation)?;
        Candidate::for_function(&self.query.function, body).ok()
    }

    fn run(&mut self, deadline: &dyn Deadline) -> SearchOutcome {
        let mut heap: BinaryHeap<Reverse<Entry>> = BinaryHeap::new();
        let mut seq = 0u64;
        let start_g = self.mc[self.grammar.start()];
        heap.push(Reverse(Entry { prio: start_g, seq, cost: 0.0, node: ROOT, complete: false, boosted: false }));
        let mut last_prio = 0.0f64;
        while let Some(Reverse(e)) = heap.pop() {
            if deadline.expired() {
                return SearchOutcome::Timeout;
            }
            self.stats.popped += 1;
            debug_assert!(e.prio + 1e-9 >= last_prio, "A* pops must be monotone");
            last_prio = e.prio;
            let derivation = if e.node == ROOT { Vec::new() } else { self.derivation(e.node) };
            if e.complete {
                match self.candidate(&derivation) {
                    Some(c) => return SearchOutcome::Found(c),
                    None => continue,
                }
            }
            let stack = self.replay(&derivation);
            let Some(nt) = self.next_nonterminal(&stack, derivation.len()) else { continue };
            let target = self.child_target(stack.last());
            if target.as_ref().is_some_and(|t| t.iter().any(|x| x.as_ref().is_some_and(Vec::is_empty))) {
                self.stats.pruned += 1;
                continue;
            }
            if !e.boosted {
                let bonus = self.target_bonus(nt, &target);
                if bonus > 0.0 {
                    seq += 1;
                    heap.push(Reverse(Entry { prio: e.prio + bonus, seq, boosted: true, ..e }));
                    continue;
                }
            }
            if self.config.seen_cap > 0 {
                let h = fnv(&sentential_form(self.grammar, &derivation));
                if self.seen.contains(&h) {
                    self.stats.duplicates += 1;
                    continue;
                }
                if self.seen.len() < self.config.seen_cap {
                    self.seen.insert(h);
                }
            }
            if !stack.is_empty() && self.contexts.is_some() {
                if let Some(key) = self.context_key(&stack) {
                    if !self.contexts.as_mut().unwrap().insert(key) {
                        self.stats.duplicates += 1;
                        continue;
                    }
                }
            }
            let edge = edge_cost(self.grammar, nt, self.config);
            let g = e.prio - e.cost;
            for i in 0..self.canonical[nt].len() {
                let p = self.canonical[nt][i];
                let holes = self.grammar.holes(p);
                let cost = e.cost + edge;
                let g2 = g - self.mc[nt] + holes.iter().map(|h| self.mc[*h]).sum::<f64>();
                let mut complete = false;
                if holes.is_empty() {
                    let (keep, finished) = self.complete_leaf(&stack, &derivation, p, &target);
                    if !keep {
                        continue;
                    }
                    if let Some(outputs) = finished {
                        let ok = match (&self.spec, outputs) {
                            (Spec::Points(_), Some(out)) => self.spec.consistent_outputs(&out),
                            _ => {
                                let mut d = derivation.clone();
                                d.push(p);
                                match self.candidate(&d) {
                                    Some(c) => match &self.spec {
                                        Spec::Direct(_) => self.spec.consistent_candidate(self.query, &c),
                                        Spec::Points(ps) => {
                                            // outputs overflowed the fast path
                                            let values: Vec<Value> = ps
                                                .inputs
                                                .iter()
                                                .map(|inp| {
                                                    let env: Assignment = self
                                                        .query
                                                        .function
                                                        .params
                                                        .iter()
                                                        .map(|(n, _)| n.clone())
                                                        .zip(inp.iter().map(|s| s.to_value()))
                                                        .collect();
                                                    evaluate(&c.body, &env, None).unwrap_or(Value::Undefined)
                                                })
                                                .collect();
                                            ps.checks.iter().all(|ch| ch.eval(&values) == Ok(Value::Bool(true)))
                                        }
                                    },
                                    None => false,
                                }
                            }
                        };
                        if !ok {
                            continue;
                        }
                        complete = true;
                    }
                }
                if self.nodes.len() >= self.config.max_states {
                    log::warn!("A* state limit {} reached", self.config.max_states);
                    return SearchOutcome::Timeout;
                }
                self.nodes.push(Node { parent: e.node, prod: p as u32 });
                seq += 1;
                self.stats.pushed += 1;
                heap.push(Reverse(Entry {
                    prio: cost + g2.max(0.0),
                    seq,
                    cost,
                    node: (self.nodes.len() - 1) as u32,
                    complete,
                    boosted: false,
                }));
            }
        }
        SearchOutcome::Exhausted
    }
}

/// A* search for a program consistent with `examples`. Returns the first
/// dequeued complete program that satisfies every constraint on every
/// example.
pub fn astar_synthesize(
    grammar: &Grammar,
    examples: &CounterexampleSet,
    query: &SynthQuery,
    config: &EnumConfig,
    deadline: &dyn Deadline,
) -> (SearchOutcome, SearchStats) {
    if deadline.expired() {
        return (SearchOutcome::Timeout, SearchStats::default());
    }
    let mut search = Search::new(grammar, query, examples, config);
    let out = search.run(deadline);
    (out, search.stats)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CegisConfig {
    pub search: EnumConfig,
    pub max_iterations: usize,
}

impl Default for CegisConfig {
    fn default() -> Self {
        CegisConfig { search: EnumConfig::default(), max_iterations: 10_000 }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum CegisOutcome {
    Solved { candidate: Candidate, verdict: Verdict },
    /// The grammar has no program consistent with the examples.
    Exhausted,
    Timeout,
    /// The verifier could not decide, or made no progress.
    Unknown(String),
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct CegisTrace {
    /// Each rejected candidate with the counterexample that refuted it.
    pub refuted: Vec<(Candidate, Assignment)>,
    pub search: SearchStats,
}

/// CEGIS loop starting from the all-zeros example.
pub fn cegis_solve(
    query: &SynthQuery,
    grammar: &Grammar,
    config: &CegisConfig,
    deadline: &dyn Deadline,
    verifier: &mut dyn Verifier,
) -> (CegisOutcome, CegisTrace) {
    let mut examples = CounterexampleSet::zeros(&query.variables);
    let mut trace = CegisTrace::default();
    for _ in 0..config.max_iterations {
        let (out, stats) = astar_synthesize(grammar, &examples, query, &config.search, deadline);
        trace.search.popped += stats.popped;
        trace.search.pushed += stats.pushed;
        trace.search.pruned += stats.pruned;
        trace.search.duplicates += stats.duplicates;
        let cand = match out {
            SearchOutcome::Found(c) => c,
            SearchOutcome::Exhausted => return (CegisOutcome::Exhausted, trace),
            SearchOutcome::Timeout => return (CegisOutcome::Timeout, trace),
        };
        log::debug!("cegis candidate {} after {} examples", cand.body, examples.len());
        match verifier.verify(query, &cand, deadline) {
            Verdict::Counterexample { assignment, .. } => {
                if !examples.push(assignment.clone()) {
                    return (CegisOutcome::Unknown("verifier repeated a counterexample".to_string()), trace);
                }
                trace.refuted.push((cand, assignment));
            }
            Verdict::Unknown(why) => {
                if deadline.expired() {
                    return (CegisOutcome::Timeout, trace);
                }
                return (CegisOutcome::Unknown(why), trace);
            }
            verdict => return (CegisOutcome::Solved { candidate: cand, verdict }, trace),
        }
    }
    (CegisOutcome::Unknown("iteration limit reached".to_string()), trace)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::deadline::{NoDeadline, PollBudget};
    use crate::query::parse_query;
    use crate::verify::{check_candidate_internal, InternalVerifier, SearchConfig};

    const MAX2: &str = "(set-logic LIA)
(synth-fun f ((v0 Int) (v1 Int)) Int)
(declare-var v0 Int)
(declare-var v1 Int)
(constraint (>= (f v0 v1) v0))
(constraint (>= (f v0 v1) v1))
(constraint (or (= v0 (f v0 v1)) (= v1 (f v0 v1))))
(check-synth)";

    fn ints(pairs: &[(&str, i64)]) -> Assignment {
        pairs.iter().map(|(k, v)| (k.to_string(), Value::int(*v))).collect()
    }

    #[test]
    fn edge_costs_and_heuristic() {
        let q = parse_query(MAX2).unwrap();
        let g = q.default_grammar().unwrap();
        let cfg = EnumConfig::default();
        assert_eq!(edge_cost(&g, 0, &cfg), 8.0);
        assert_eq!(edge_cost(&g, 1, &cfg), 6.0);
        let mc = min_completion_costs(&g, &cfg);
        assert_eq!(mc, [8.0, 22.0]);
        assert_eq!(heuristic(&PartialProgram::start(&g, &mc).form, &mc), 8.0);
    }

    #[test]
    fn empty_examples_return_cheapest_program() {
        let q = parse_query(MAX2).unwrap();
        let g = q.default_grammar().unwrap();
        let ex = CounterexampleSet::new(&q.variables);
        let (out, _) = astar_synthesize(&g, &ex, &q, &EnumConfig::default(), &NoDeadline);
        assert_eq!(out, SearchOutcome::Found(Candidate::for_function(&q.function, Term::var("v0")).unwrap()));
    }

    #[test]
    fn consistent_with_examples() {
        let q = parse_query(MAX2).unwrap();
        let g = q.default_grammar().unwrap();
        let mut ex = CounterexampleSet::new(&q.variables);
        for (a, b) in [(0, 1), (1, 0), (2, 2)] {
            ex.push(ints(&[("v0", a), ("v1", b)]));
        }
        let (out, _) = astar_synthesize(&g, &ex, &q, &EnumConfig::default(), &NoDeadline);
        let SearchOutcome::Found(c) = out else { panic!("{:?}", out) };
        for e in ex.points() {
            for con in &q.constraints {
                assert_eq!(evaluate(con, e, Some(&c)), Ok(Value::Bool(true)));
            }
        }
    }

    #[test]
    fn zero_deadline_times_out() {
        let q = parse_query(MAX2).unwrap();
        let g = q.default_grammar().unwrap();
        let ex = CounterexampleSet::zeros(&q.variables);
        let (out, _) = astar_synthesize(&g, &ex, &q, &EnumConfig::default(), &PollBudget::new(0));
        assert_eq!(out, SearchOutcome::Timeout);
    }

    #[test]
    fn cegis_max2() {
        let q = parse_query(MAX2).unwrap();
        let g = q.default_grammar().unwrap();
        let mut v = InternalVerifier::default();
        let (out, trace) = cegis_solve(&q, &g, &CegisConfig::default(), &NoDeadline, &mut v);
        let CegisOutcome::Solved { candidate, .. } = out else { panic!("{:?}", out) };
        assert!(check_candidate_internal(&q, &candidate, &SearchConfig::default(), &NoDeadline).is_valid());
        for (c, cex) in &trace.refuted {
            let falsified = q.constraints.iter().any(|con| evaluate(con, cex, Some(c)) == Ok(Value::Bool(false)));
            assert!(falsified);
        }
    }

    #[test]
    fn empty_spec_needs_no_iterations() {
        let q = parse_query("(set-logic LIA)(synth-fun f ((x Int)) Int)(declare-var x Int)").unwrap();
        let g = q.default_grammar().unwrap();
        let (out, trace) = cegis_solve(&q, &g, &CegisConfig::default(), &NoDeadline, &mut InternalVerifier::default());
        assert!(matches!(out, CegisOutcome::Solved { .. }));
        assert!(trace.refuted.is_empty());
    }

    #[test]
    fn finite_grammar_is_exhausted_not_wrong() {
        let q = parse_query(
            "(set-logic LIA)(synth-fun f ((x Int)) Int ((S Int (0))))(declare-var x Int)(constraint (= (f x) 1))",
        )
        .unwrap();
        let g = q.grammar.clone().unwrap();
        let (out, _) = cegis_solve(&q, &g, &CegisConfig::default(), &NoDeadline, &mut InternalVerifier::default());
        assert_eq!(out, CegisOutcome::Exhausted);
    }

    #[test]
    fn nested_calls_use_direct_evaluation() {
        let q = parse_query(
            "(set-logic LIA)(synth-fun f ((x Int)) Int)(declare-var x Int)(constraint (= (f (f x)) (+ x 2)))",
        )
        .unwrap();
        let g = q.default_grammar().unwrap();
        let (out, _) = cegis_solve(&q, &g, &CegisConfig::default(), &NoDeadline, &mut InternalVerifier::default());
        let CegisOutcome::Solved { candidate, .. } = out else { panic!("{:?}", out) };
        assert_eq!(candidate.body.to_string(), "(+ x 1)");
    }
}
