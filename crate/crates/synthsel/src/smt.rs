//! External SMT solver as a verifier, and the internal-then-external stack.

use std::io::{Read, Write};
use std::process::{Command, Stdio};
use std::thread;
use std::time::Duration;

use wait_timeout::ChildExt;

use synthsel_core::deadline::Deadline;
use synthsel_core::query::{Candidate, SynthQuery};
use synthsel_core::verify::{
    emit_smtlib, parse_solver_output, verdict_from_answer, Confidence, InternalVerifier, Verdict, Verifier,
};

pub const DEFAULT_SMT_CMD: &str = "cvc5 --lang=smt2 --produce-models";

#[derive(Debug, thiserror::Error)]
pub enum SmtError {
    #[error("empty solver command")]
    EmptyCommand,
    #[error("cannot start `{0}`: {1}")]
    Spawn(String, std::io::Error),
    #[error("solver io: {0}")]
    Io(#[from] std::io::Error),
    #[error("solver killed at the deadline")]
    Killed,
}

/// A solver invocation reading SMT-LIB2 on stdin.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SmtCommand {
    pub program: String,
    pub args: Vec<String>,
}

impl SmtCommand {
    /// Splits on whitespace; no quoting.
    pub fn parse(line: &str) -> Result<Self, SmtError> {
        let mut parts = line.split_whitespace().map(str::to_string);
        let program = parts.next().ok_or(SmtError::EmptyCommand)?;
        Ok(SmtCommand { program, args: parts.collect() })
    }

    /// Runs the solver on `script`, killing it once `deadline` expires.
    pub fn run(&self, script: &str, deadline: &dyn Deadline, poll: Duration) -> Result<String, SmtError> {
        let mut child = Command::new(&self.program)
            .args(&self.args)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::null())
            .spawn()
            .map_err(|e| SmtError::Spawn(self.program.clone(), e))?;
        let mut stdout = child.stdout.take().expect("piped stdout");
        let reader = thread::spawn(move || {
            let mut s = String::new();
            stdout.read_to_string(&mut s).map(|_| s)
        });
        if let Some(mut stdin) = child.stdin.take() {
            // a solver that exits early closes the pipe; its output still counts
            let _ = stdin.write_all(script.as_bytes());
        }
        loop {
            if child.wait_timeout(poll)?.is_some() {
                break;
            }
            if deadline.expired() {
                let _ = child.kill();
                let _ = child.wait();
                return Err(SmtError::Killed);
            }
        }
        Ok(reader.join().map_err(|_| std::io::Error::other("reader panicked"))??)
    }
}

/// Checks `∃x. ¬φ(f)` with an external solver.
pub struct ExternalVerifier {
    pub command: SmtCommand,
    pub poll: Duration,
}

impl ExternalVerifier {
    pub fn new(command: SmtCommand) -> Self {
        ExternalVerifier { command, poll: Duration::from_millis(20) }
    }
}

impl Verifier for ExternalVerifier {
    fn verify(&mut self, query: &SynthQuery, cand: &Candidate, deadline: &dyn Deadline) -> Verdict {
        let script = emit_smtlib(query, cand);
        match self.command.run(&script, deadline, self.poll) {
            Ok(out) => match parse_solver_output(&out, &query.variables) {
                Ok(answer) => verdict_from_answer(query, cand, answer),
                Err(e) => Verdict::Unknown(e.to_string()),
            },
            Err(e) => Verdict::Unknown(e.to_string()),
        }
    }

    fn name(&self) -> &str {
        "smt"
    }
}

/// Internal search first; a bounded or undecided result goes to the
/// external solver when one is configured.
pub struct LayeredVerifier {
    pub internal: InternalVerifier,
    pub external: Option<ExternalVerifier>,
    last: &'static str,
}

impl LayeredVerifier {
    pub fn new(internal: InternalVerifier, external: Option<ExternalVerifier>) -> Self {
        LayeredVerifier { internal, external, last: "internal" }
    }
}

impl Verifier for LayeredVerifier {
    fn verify(&mut self, query: &SynthQuery, cand: &Candidate, deadline: &dyn Deadline) -> Verdict {
        self.last = "internal";
        let v = self.internal.verify(query, cand, deadline);
        match (&v, self.external.as_mut()) {
            (Verdict::Counterexample { .. } | Verdict::Valid(Confidence::Proven), _) | (_, None) => v,
            (_, Some(ext)) => {
                self.last = "smt";
                ext.verify(query, cand, deadline)
            }
        }
    }

    fn name(&self) -> &str {
        self.last
    }
}
