//! LLM solvers: prompt styles, constraint rendering, answer extraction,
//! token accounting and the repair loop.
//!
//! Transport is behind [`ChatBackend`]; time is behind [`Clock`]. Both
//! live in the `synthsel` crate.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;

use serde::{Deserialize, Serialize};

use crate::bandit::{estimate_cost, SolverId};
use crate::query::{Candidate, CandidateError, SynthQuery};
use crate::sexpr::{find_form, parse_one, SExpr};
use crate::term::{Op, Term};
use crate::verify::{format_assignment, Verdict, Verifier};

/// Maximum number of assistant answers per deployment, both Lisp stages
/// included.
pub const MAX_ATTEMPTS: usize = 16;

/// Number of few-shot examples and of translation examples.
pub const FEW_SHOT: usize = 3;

pub const ROLE_SENTENCE: &str = "You are a good program synthesizer";

pub const EMOTIONAL_STIMULI: &str = "You are excited to help, and you are ready to provide \
the best answer possible. You understand that if you \
fail to provide the best answer, your client will be \
extremely upset. Please don't fail me.";

/// Opening of the first Lisp prompt; `{name}` is the function name.
const LISP_HEAD: &str = "Solve the following function '{name}' with Lisp.
Only return one function, do not use recursion or
iterations. Do not return any text that isn't code.
Minimise token use.It's important you keep the
variables and function names the same as the original
function. The following is the problem that you are
meant to solve: ";

pub const LISP_TRANSLATION_PROMPT: &str = "Please convert the Lisp function you generated into SMT-LIB format. Follow these guidelines:
1. Start the function with `(define-fun`.
2. Provide only the function definition, starting with `(define-fun`.
3. Ensure the SMT-LIB function contains exactly one function definition.
4. Avoid using iterations, bitvec, or int notations inside the body.
5. Check the function description in the first message to ensure variable and function names are consistent.
6. Use the assigned values from the Lisp code during translation.
7. Do not introduce any new variables that do not exist in the Lisp function.
8. Pay attention to types. If there are bit-vector terms, ensure they are of the same width.
Rules for SMT-LIB: +, -, *, ite, >, =, <, >=, <=, and, or, not, true, false.";

/// Instruction for styles that ask for SMT-LIB directly.
const DIRECT_HEAD: &str = "Solve the following SyGuS problem. Answer with a single SMT-LIB function \
definition `(define-fun ...)` for the function to synthesize.";

/// Built-in Lisp to SMT-LIB translations shown with the second Lisp prompt.
pub const TRANSLATION_EXAMPLES: [(&str, &str); FEW_SHOT] = [
    (
        "(defun max2 (x y) (if (>= x y) x y))",
        "(define-fun max2 ((x Int) (y Int)) Int (ite (>= x y) x y))",
    ),
    (
        "(defun lin (a b) (+ (* 2 a) (- b 1)))",
        "(define-fun lin ((a Int) (b Int)) Int (+ (* 2 a) (- b 1)))",
    ),
    (
        "(defun inside (x) (and (> x 0) (not (= x 10))))",
        "(define-fun inside ((x Int)) Bool (and (> x 0) (not (= x 10))))",
    ),
];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PromptStyle {
    pub index: u8,
    pub natural_language: bool,
    pub higher_resource_pl: bool,
    pub roles: bool,
    pub emotional_stimuli: bool,
    pub few_shot: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, thiserror::Error)]
#[error("prompt style {0} is outside 1..=6")]
pub struct BadStyle(pub u8);

impl PromptStyle {
    pub fn new(index: u8) -> Result<Self, BadStyle> {
        // natural language, higher-resource PL, roles, emotional stimuli, few-shot
        let (nl, pl, roles, emo, few) = match index {
            1 => (true, true, false, false, false),
            2 => (true, true, false, false, true),
            3 => (false, true, false, false, false),
            4 => (false, false, false, false, false),
            5 => (false, true, true, false, false),
            6 => (true, true, true, true, false),
            _ => return Err(BadStyle(index)),
        };
        Ok(PromptStyle {
            index,
            natural_language: nl,
            higher_resource_pl: pl,
            roles,
            emotional_stimuli: emo,
            few_shot: few,
        })
    }

    pub fn all() -> Vec<PromptStyle> {
        (1..=6).map(|i| PromptStyle::new(i).unwrap()).collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    System,
    User,
    Assistant,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Message {
    pub role: Role,
    pub content: String,
}

impl Message {
    pub fn user(content: impl Into<String>) -> Self {
        Message { role: Role::User, content: content.into() }
    }

    pub fn assistant(content: impl Into<String>) -> Self {
        Message { role: Role::Assistant, content: content.into() }
    }
}

/// Whitespace-delimited chunks plus parentheses. `"(+ 1 2)"` counts 5.
pub fn count_tokens(text: &str) -> u64 {
    let chunks = text.split_whitespace().count() as u64;
    let parens = text.bytes().filter(|b| *b == b'(' || *b == b')').count() as u64;
    chunks + parens
}

/// A conversation with its token bill. A user message is charged the whole
/// request it completed (history included), an assistant message its own
/// length, unless the provider reported usage.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ChatTranscript {
    pub messages: Vec<(Message, u64)>,
    pub input_tokens: u64,
    pub output_tokens: u64,
    /// Free-form events, e.g. an empty few-shot pool.
    pub notes: Vec<String>,
}

impl ChatTranscript {
    pub fn messages(&self) -> Vec<Message> {
        self.messages.iter().map(|(m, _)| m.clone()).collect()
    }

    pub fn answers(&self) -> usize {
        self.messages.iter().filter(|(m, _)| m.role == Role::Assistant).count()
    }

    fn push(&mut self, m: Message, tokens: u64) {
        match m.role {
            Role::Assistant => self.output_tokens += tokens,
            _ => self.input_tokens += tokens,
        }
        self.messages.push((m, tokens));
    }

    /// Tokens a request made of the current messages plus `next` would bill.
    pub fn request_tokens(&self, next: &Message) -> u64 {
        self.messages.iter().map(|(m, _)| count_tokens(&m.content)).sum::<u64>() + count_tokens(&next.content)
    }
}

/// A previously solved problem used as a few-shot example.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FewShotExample {
    pub logic: String,
    pub query: String,
    pub solution: String,
}

/// The most recent `FEW_SHOT` examples with the same logic, topped up with
/// the most recent others. `pool` is oldest first.
pub fn select_few_shot<'a>(pool: &'a [FewShotExample], logic: &str) -> Vec<&'a FewShotExample> {
    let mut out: Vec<&FewShotExample> = pool.iter().rev().filter(|e| e.logic == logic).take(FEW_SHOT).collect();
    for e in pool.iter().rev() {
        if out.len() == FEW_SHOT {
            break;
        }
        if e.logic != logic {
            out.push(e);
        }
    }
    out
}

fn phrase(op: Op) -> Option<&'static str> {
    Some(match op {
        Op::Ge => "is greater than or equal to",
        Op::Le => "is less than or equal to",
        Op::Gt => "is greater than",
        Op::Lt => "is less than",
        Op::Eq => "is equal to",
        Op::Distinct => "is different from",
        Op::And => "and",
        Op::Or => "or",
        Op::Xor => "exclusive or",
        Op::Add => "plus",
        Op::Sub => "minus",
        Op::Mul => "times",
        Op::Div => "divided by",
        Op::Mod => "modulo",
        _ => return None,
    })
}

fn is_compound(t: &Term) -> bool {
    match t {
        Term::App(op, args) => !(*op == Op::Sub && args.len() == 1) && phrase(*op).is_some() || *op == Op::Implies,
        Term::Ite(..) => true,
        _ => false,
    }
}

fn nl_operand(t: &Term, parent: Op) -> String {
    let s = nl_term(t);
    let connective = matches!(parent, Op::And | Op::Or | Op::Not | Op::Implies | Op::Xor);
    let relation = |op: &Op| matches!(op, Op::Ge | Op::Le | Op::Gt | Op::Lt | Op::Eq | Op::Distinct);
    match t {
        Term::App(op, _) if *op == parent && matches!(op, Op::And | Op::Or | Op::Add | Op::Mul) => s,
        Term::App(op, _) if connective && relation(op) => s,
        _ if is_compound(t) => format!("({})", s),
        _ => s,
    }
}

/// English rendering of one term.
pub fn nl_term(t: &Term) -> String {
    match t {
        Term::Var(v) => v.clone(),
        Term::Call(f, args) => {
            let args: Vec<String> = args.iter().map(nl_term).collect();
            format!("{}({})", f, args.join(", "))
        }
        Term::Ite(c, a, b) => format!("if {} then {}, otherwise {}", nl_term(c), nl_term(a), nl_term(b)),
        Term::App(Op::Not, args) if args.len() == 1 => format!("it is not the case that {}", nl_operand(&args[0], Op::Not)),
        Term::App(Op::Implies, args) if args.len() == 2 => {
            format!("if {} then {}", nl_operand(&args[0], Op::Implies), nl_operand(&args[1], Op::Implies))
        }
        Term::App(Op::Sub, args) if args.len() == 1 => format!("negative {}", nl_operand(&args[0], Op::Sub)),
        Term::App(Op::Abs, args) if args.len() == 1 => format!("the absolute value of {}", nl_operand(&args[0], Op::Abs)),
        Term::App(op, args) if args.len() >= 2 => match phrase(*op) {
            Some(p) => {
                let parts: Vec<String> = args.iter().map(|a| nl_operand(a, *op)).collect();
                parts.join(&format!(" {} ", p))
            }
            None => t.to_string(),
        },
        _ => t.to_string(),
    }
}

/// Constraints as numbered English sentences.
pub fn translate_constraints_nl(query: &SynthQuery) -> String {
    if query.constraints.is_empty() {
        return "There are no constraints.".to_string();
    }
    let lines: Vec<String> =
        query.constraints.iter().enumerate().map(|(i, c)| format!("{}. {}.", i + 1, nl_term(c))).collect();
    lines.join("\n")
}

fn english_list(items: &[String]) -> String {
    match items {
        [] => "nothing".to_string(),
        [one] => one.clone(),
        [init @ .., last] => format!("{}, and {}", init.join(", "), last),
    }
}

fn raw_constraints(query: &SynthQuery) -> String {
    if query.constraints.is_empty() {
        return "There are no constraints.".to_string();
    }
    let lines: Vec<String> = query.constraints.iter().map(|c| format!("(constraint {})", c)).collect();
    lines.join("\n")
}

fn constraints_for(query: &SynthQuery, style: &PromptStyle) -> String {
    if style.natural_language {
        translate_constraints_nl(query)
    } else {
        raw_constraints(query)
    }
}

/// The raw problem: declarations and constraints in SyGuS syntax.
pub fn query_text(query: &SynthQuery) -> String {
    let mut out = format!("(set-logic {})\n{}\n", query.logic, query.function.declaration());
    for (v, s) in &query.variables {
        out.push_str(&format!("(declare-var {} {})\n", v, s));
    }
    for c in &query.constraints {
        out.push_str(&format!("(constraint {})\n", c));
    }
    out.push_str("(check-synth)");
    out
}

fn lisp_prompt(query: &SynthQuery, style: &PromptStyle) -> String {
    let f = &query.function;
    let params: Vec<String> = f.params.iter().map(|(n, _)| n.clone()).collect();
    let sorts: Vec<String> = f.params.iter().map(|(_, s)| s.to_string()).collect();
    let vars: Vec<String> = query.variables.iter().map(|(n, _)| n.clone()).collect();
    let var_sorts: Vec<String> = query.variables.iter().map(|(_, s)| s.to_string()).collect();
    let mut out = LISP_HEAD.replace("{name}", &f.name);
    out.push_str(&format!(
        "\n\nYou need to synthesise: {}. The function is called \"{}\" and takes arguments {}. These arguments are {}.\n",
        f.declaration(),
        f.name,
        english_list(&params),
        english_list(&sorts)
    ));
    out.push_str(&format!(
        "Write only one Lisp-like method \"defun {}\" that never violates the SMT-LIB constraints.\n",
        f.name
    ));
    out.push_str("No built-in functions in code.\n");
    out.push_str(&format!(
        "Universally quantified variables: {}. The type of universally quantified variables are {}.\n",
        english_list(&vars),
        english_list(&var_sorts)
    ));
    out.push_str("The function must follow the constraints: \n");
    out.push_str(&constraints_for(query, style));
    out
}

fn direct_prompt(query: &SynthQuery, style: &PromptStyle) -> String {
    if style.natural_language {
        format!(
            "{}\n\nYou need to synthesise: {}.\nThe function must follow the constraints: \n{}",
            DIRECT_HEAD,
            query.function.declaration(),
            translate_constraints_nl(query)
        )
    } else {
        format!("{}\n\n{}", DIRECT_HEAD, query_text(query))
    }
}

fn few_shot_block(examples: &[&FewShotExample]) -> String {
    let mut out = format!("Here are {} examples of solved problems.\n", examples.len());
    for (i, e) in examples.iter().enumerate() {
        out.push_str(&format!("\nExample {}:\n{}\nSolution:\n{}\n", i + 1, e.query, e.solution));
    }
    out
}

fn decorate(style: &PromptStyle, body: String) -> String {
    let mut out = String::new();
    if style.roles {
        out.push_str(ROLE_SENTENCE);
        out.push_str(".\n\n");
    }
    out.push_str(&body);
    if style.emotional_stimuli {
        out.push_str("\n\n");
        out.push_str(EMOTIONAL_STIMULI);
    }
    out
}

/// The opening message sequence for `style`.
pub fn render_prompt(query: &SynthQuery, style: &PromptStyle, pool: &[FewShotExample]) -> Vec<Message> {
    let mut body = String::new();
    if style.few_shot {
        let chosen = select_few_shot(pool, &query.logic.0);
        body.push_str(&few_shot_block(&chosen));
        body.push('\n');
    }
    body.push_str(&if style.higher_resource_pl { lisp_prompt(query, style) } else { direct_prompt(query, style) });
    alloc::vec![Message::user(decorate(style, body))]
}

/// Second Lisp prompt, asking for the SMT-LIB translation.
pub fn render_translation_prompt(style: &PromptStyle) -> Message {
    let mut body = LISP_TRANSLATION_PROMPT.to_string();
    if style.few_shot {
        body.push_str(&format!("\n\nHere are {} examples of previous translations.\n", FEW_SHOT));
        for (i, (lisp, smt)) in TRANSLATION_EXAMPLES.iter().enumerate() {
            body.push_str(&format!("\nExample {}:\nLisp: {}\nSMT-LIB: {}\n", i + 1, lisp, smt));
        }
    }
    Message::user(decorate(style, body))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Expecting {
    Lisp,
    Smtlib,
}

#[derive(Clone, Debug, PartialEq)]
pub enum Extracted {
    /// The `(defun ...)` form, unparsed beyond S-expression structure.
    Lisp(SExpr),
    Smtlib(Candidate),
}

#[derive(Clone, Debug, PartialEq, thiserror::Error)]
pub enum ExtractionError {
    #[error("no balanced `({0}` form in the answer")]
    NoForm(&'static str),
    #[error("malformed definition: {0}")]
    Syntax(String),
    #[error(transparent)]
    Candidate(#[from] CandidateError),
}

/// Finds and parses the first `(define-fun ...)` or `(defun ...)` form.
pub fn extract_candidate(text: &str, expecting: Expecting) -> Result<Extracted, ExtractionError> {
    let head = match expecting {
        Expecting::Lisp => "defun",
        Expecting::Smtlib => "define-fun",
    };
    let (s, e) = find_form(text, head).ok_or(ExtractionError::NoForm(head))?;
    if find_form(&text[e..], head).is_some() {
        log::info!("answer holds more than one `{}`; taking the first", head);
    }
    let form = parse_one(&text[s..e]).map_err(|err| ExtractionError::Syntax(err.to_string()))?;
    Ok(match expecting {
        Expecting::Lisp => Extracted::Lisp(form),
        Expecting::Smtlib => Extracted::Smtlib(Candidate::from_define_fun(&form)?),
    })
}

/// Feedback after a counterexample.
pub fn counterexample_feedback(query: &SynthQuery, verdict: &Verdict) -> Option<String> {
    match verdict {
        Verdict::Counterexample { assignment, violated } => {
            let c = query.constraints.get(*violated).map(|c| c.to_string()).unwrap_or_default();
            Some(format!(
                "Your previous answer was incorrect. On inputs {}, constraint {} is violated.",
                format_assignment(assignment),
                c
            ))
        }
        _ => None,
    }
}

fn extraction_feedback(expecting: Expecting) -> String {
    match expecting {
        Expecting::Lisp => "Your previous answer did not contain a Lisp function starting with `(defun`. \
Please answer with exactly one `(defun` definition."
            .to_string(),
        Expecting::Smtlib => "Your previous answer did not contain a valid SMT-LIB function starting with \
`(define-fun`. Please answer with exactly one `(define-fun` definition."
            .to_string(),
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ChatReply {
    pub text: String,
    /// Provider-reported (input, output) token counts.
    pub usage: Option<(u64, u64)>,
}

#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
pub enum BackendError {
    #[error("transport failure: {0}")]
    Transport(String),
    #[error("no recorded answer for request {0}")]
    ReplayMiss(String),
    #[error("request timed out")]
    Timeout,
}

/// A chat-completion endpoint.
pub trait ChatBackend {
    /// Sends the whole conversation. `timeout` is in seconds;
    /// `max_output_tokens` caps the answer length.
    fn complete(
        &mut self,
        model: &str,
        messages: &[Message],
        timeout: f64,
        max_output_tokens: u64,
    ) -> Result<ChatReply, BackendError>;
}

/// Monotone seconds.
pub trait Clock {
    fn now(&self) -> f64;
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    Solved,
    Attempts,
    Deadline,
    Budget,
    Backend,
    ReplayGap,
}

impl fmt::Display for StopReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            StopReason::Solved => "solved",
            StopReason::Attempts => "attempts exhausted",
            StopReason::Deadline => "deadline",
            StopReason::Budget => "cost budget exhausted",
            StopReason::Backend => "backend failure",
            StopReason::ReplayGap => "replay gap",
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LlmOutcome {
    pub solved: bool,
    pub candidate: Option<Candidate>,
    pub verdict: Option<Verdict>,
    pub elapsed: f64,
    pub cost: f64,
    pub attempts: usize,
    pub stop: StopReason,
    /// Backend error text when `stop` is `Backend` or `ReplayGap`.
    pub error: Option<String>,
    pub transcript: ChatTranscript,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, thiserror::Error)]
pub enum LlmSolveError {
    #[error("solver is not an LLM-prompt pair")]
    NotLlm,
    #[error(transparent)]
    Style(#[from] BadStyle),
}

/// Time and cost slice of one deployment.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Slice {
    pub time: f64,
    pub cost: f64,
}

/// Runs the repair loop for one LLM-prompt pair.
#[allow(clippy::too_many_arguments)]
pub fn solve_with_llm(
    query: &SynthQuery,
    solver: &SolverId,
    slice: Slice,
    pool: &[FewShotExample],
    backend: &mut dyn ChatBackend,
    verifier: &mut dyn Verifier,
    clock: &dyn Clock,
) -> Result<LlmOutcome, LlmSolveError> {
    let (model, style) = match solver {
        SolverId::Llm { model, style } => (model.as_str(), PromptStyle::new(*style)?),
        SolverId::Enumerator => return Err(LlmSolveError::NotLlm),
    };
    let start = clock.now();
    let end = start + slice.time;
    let mut tr = ChatTranscript::default();
    if style.few_shot && select_few_shot(pool, &query.logic.0).len() < FEW_SHOT {
        let n = select_few_shot(pool, &query.logic.0).len();
        tr.notes.push(format!("few-shot pool holds {} of {} examples", n, FEW_SHOT));
    }
    let mut pending: Vec<Message> = render_prompt(query, &style, pool);
    let mut expecting = if style.higher_resource_pl { Expecting::Lisp } else { Expecting::Smtlib };
    let mut last: Option<(Candidate, Verdict)> = None;
    let mut error = None;

    let cost_of = |tr: &ChatTranscript| estimate_cost(tr.input_tokens, tr.output_tokens, solver);
    let stop = loop {
        if tr.answers() >= MAX_ATTEMPTS {
            break StopReason::Attempts;
        }
        let now = clock.now();
        if now >= end {
            break StopReason::Deadline;
        }
        // every pending prompt is a single user message
        let msg = pending.remove(0);
        let input = tr.request_tokens(&msg);
        let spent = cost_of(&tr);
        if spent + input as f64 > slice.cost {
            break StopReason::Budget;
        }
        let max_out = libm::floor((slice.cost - spent - input as f64) / 3.0).max(0.0) as u64;
        let mut convo = tr.messages();
        convo.push(msg.clone());
        let reply = match backend.complete(model, &convo, end - now, max_out) {
            Ok(r) => r,
            Err(BackendError::Timeout) => break StopReason::Deadline,
            Err(e @ BackendError::ReplayMiss(_)) => {
                error = Some(e.to_string());
                break StopReason::ReplayGap;
            }
            Err(e) => {
                error = Some(e.to_string());
                break StopReason::Backend;
            }
        };
        let (in_tok, out_tok) = reply.usage.unwrap_or((input, count_tokens(&reply.text)));
        tr.push(msg, in_tok);
        if out_tok > max_out {
            // the provider stops at the cap and bills it
            tr.push(Message::assistant(reply.text), max_out);
            break StopReason::Budget;
        }
        tr.push(Message::assistant(reply.text.clone()), out_tok);
        if clock.now() >= end {
            break StopReason::Deadline;
        }
        match (expecting, extract_candidate(&reply.text, expecting)) {
            (Expecting::Lisp, Ok(_)) => {
                pending.push(render_translation_prompt(&style));
                expecting = Expecting::Smtlib;
            }
            (Expecting::Smtlib, Ok(Extracted::Smtlib(cand))) => {
                if !cand.matches(&query.function) {
                    pending.push(Message::user(format!(
                        "Your previous answer defines the wrong function. Please define `{}` with the signature {}.",
                        query.function.name,
                        query.function.declaration()
                    )));
                    continue;
                }
                let deadline = || clock.now() >= end;
                let verdict = verifier.verify(query, &cand, &deadline);
                if verdict.is_valid() {
                    last = Some((cand, verdict));
                    break StopReason::Solved;
                }
                let fb = counterexample_feedback(query, &verdict)
                    .unwrap_or_else(|| format!("Your previous answer could not be verified: {}.", verdict));
                pending.push(Message::user(fb));
                last = Some((cand, verdict));
            }
            (_, Ok(_)) => unreachable!("extraction returns the requested kind"),
            (exp, Err(ExtractionError::NoForm(_))) => pending.push(Message::user(extraction_feedback(exp))),
            (_, Err(e)) => pending.push(Message::user(format!("Your previous answer could not be parsed: {}.", e))),
        }
    };
    let solved = stop == StopReason::Solved;
    let (candidate, verdict) = match last {
        Some((c, v)) => (Some(c), Some(v)),
        None => (None, None),
    };
    Ok(LlmOutcome {
        solved,
        candidate: if solved { candidate } else { None },
        verdict,
        elapsed: clock.now() - start,
        cost: cost_of(&tr),
        attempts: tr.answers(),
        stop,
        error,
        transcript: tr,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::query::parse_query;

    const MAX3: &str = "(set-logic LIA)
(synth-fun f ((v0 Int) (v1 Int) (v2 Int)) Int)
(declare-var v0 Int)(declare-var v1 Int)(declare-var v2 Int)
(constraint (>= (f v0 v1 v2) v0))(constraint (>= (f v0 v1 v2) v1))(constraint (>= (f v0 v1 v2) v2))
(constraint (or (= v0 (f v0 v1 v2)) (or (= v1 (f v0 v1 v2)) (= v2 (f v0 v1 v2)))))
(check-synth)";

    #[test]
    fn token_counts() {
        assert_eq!(count_tokens("(+ 1 2)"), 5);
        assert_eq!(count_tokens(""), 0);
        assert_eq!(count_tokens("  hello world "), 2);
    }

    #[test]
    fn nl_rendering() {
        let q = parse_query(MAX3).unwrap();
        let text = translate_constraints_nl(&q);
        assert!(text.starts_with("1. f(v0, v1, v2) is greater than or equal to v0."));
        let fourth = text.lines().nth(3).unwrap();
        assert_eq!(fourth.matches(" or ").count(), 2);
        assert_eq!(fourth.matches("is equal to").count(), 3);
        let empty = parse_query("(set-logic LIA)(synth-fun g () Int)").unwrap();
        assert_eq!(translate_constraints_nl(&empty), "There are no constraints.");
    }

    #[test]
    fn nested_operands_are_bracketed() {
        let q = parse_query(
            "(set-logic LIA)(synth-fun g ((x Int)) Int)(declare-var x Int)
             (constraint (=> (and (> x 0) (< x 5)) (= (g x) (+ x (* 2 x)))))",
        )
        .unwrap();
        assert_eq!(
            translate_constraints_nl(&q),
            "1. if (x is greater than 0 and x is less than 5) then g(x) is equal to (x plus (2 times x))."
        );
    }

    #[test]
    fn extraction() {
        let r = extract_candidate("here you go: (define-fun f ((v0 Int)) Int v0) hope it helps", Expecting::Smtlib);
        match r {
            Ok(Extracted::Smtlib(c)) => assert_eq!(c.body, Term::var("v0")),
            other => panic!("{:?}", other),
        }
        assert_eq!(
            extract_candidate("I cannot do that.", Expecting::Smtlib),
            Err(ExtractionError::NoForm("define-fun"))
        );
        let two = "(define-fun f ((x Int)) Int 1) (define-fun f ((x Int)) Int 2)";
        match extract_candidate(two, Expecting::Smtlib) {
            Ok(Extracted::Smtlib(c)) => assert_eq!(c.body, Term::int(1)),
            other => panic!("{:?}", other),
        }
        assert!(matches!(extract_candidate("```lisp\n(defun f (x) x)\n```", Expecting::Lisp), Ok(Extracted::Lisp(_))));
    }

    #[test]
    fn few_shot_prefers_same_logic() {
        let ex = |l: &str, i: usize| FewShotExample { logic: l.to_string(), query: format!("q{}", i), solution: String::new() };
        let pool = alloc::vec![ex("LIA", 0), ex("BV", 1), ex("LIA", 2), ex("BV", 3), ex("BV", 4)];
        let picked: Vec<&str> = select_few_shot(&pool, "LIA").iter().map(|e| e.query.as_str()).collect();
        assert_eq!(picked, ["q2", "q0", "q4"]);
        assert!(select_few_shot(&[], "LIA").is_empty());
    }

    #[test]
    fn style_table() {
        let flags: Vec<(bool, bool, bool, bool, bool)> = PromptStyle::all()
            .iter()
            .map(|s| (s.natural_language, s.higher_resource_pl, s.roles, s.emotional_stimuli, s.few_shot))
            .collect();
        assert_eq!(flags[3], (false, false, false, false, false));
        assert_eq!(flags[5], (true, true, true, true, false));
        assert_eq!(PromptStyle::new(7), Err(BadStyle(7)));
    }
}
