use std::fs;
use std::os::unix::fs::PermissionsExt;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use synthsel::smt::{ExternalVerifier, LayeredVerifier, SmtCommand, SmtError};
use synthsel_core::deadline::{NoDeadline, PollBudget};
use synthsel_core::query::{parse_query, read_free_term, Candidate, SynthQuery};
use synthsel_core::sexpr::parse_one;
use synthsel_core::value::Value;
use synthsel_core::verify::{Confidence, InternalVerifier, SearchConfig, Verdict, Verifier};

const MAX3: &str = "(set-logic LIA)
(synth-fun f ((v0 Int) (v1 Int) (v2 Int)) Int)
(declare-var v0 Int)
(declare-var v1 Int)
(declare-var v2 Int)
(constraint (>= (f v0 v1 v2) v0))
(constraint (>= (f v0 v1 v2) v1))
(constraint (>= (f v0 v1 v2) v2))
(constraint (or (= v0 (f v0 v1 v2)) (or (= v1 (f v0 v1 v2)) (= v2 (f v0 v1 v2)))))
(check-synth)";

fn cand(q: &SynthQuery, body: &str) -> Candidate {
    let t = read_free_term(&parse_one(body).unwrap(), &q.function.params).unwrap();
    Candidate::for_function(&q.function, t).unwrap()
}

fn script(dir: &Path, name: &str, body: &str) -> PathBuf {
    let p = dir.join(name);
    fs::write(&p, format!("#!/bin/sh\n{}\n", body)).unwrap();
    fs::set_permissions(&p, fs::Permissions::from_mode(0o755)).unwrap();
    p
}

fn external(path: &Path) -> ExternalVerifier {
    ExternalVerifier::new(SmtCommand::parse(path.to_str().unwrap()).unwrap())
}

#[test]
fn unsat_is_proven_and_script_is_piped() {
    let dir = tempfile::tempdir().unwrap();
    let seen = dir.path().join("seen.smt2");
    let s = script(dir.path(), "solver", &format!("cat > {}\necho unsat", seen.display()));
    let q = parse_query(MAX3).unwrap();
    let v = external(&s).verify(&q, &cand(&q, "(ite (>= v0 v1) (ite (>= v0 v2) v0 v2) (ite (>= v1 v2) v1 v2))"), &NoDeadline);
    assert_eq!(v, Verdict::Valid(Confidence::Proven));
    let sent = fs::read_to_string(seen).unwrap();
    assert_eq!(sent.matches("(declare-const").count(), 3);
    assert!(sent.contains("(check-sat)"));
}

#[test]
fn sat_model_becomes_counterexample() {
    let dir = tempfile::tempdir().unwrap();
    let s = script(
        dir.path(),
        "solver",
        "cat > /dev/null\necho sat\necho '((define-fun v0 () Int 0) (define-fun v1 () Int (- 2)) (define-fun v2 () Int 7))'",
    );
    let q = parse_query(MAX3).unwrap();
    match external(&s).verify(&q, &cand(&q, "v0"), &NoDeadline) {
        Verdict::Counterexample { assignment, violated } => {
            assert_eq!(assignment["v2"], Value::int(7));
            assert_eq!(assignment["v1"], Value::int(-2));
            assert_eq!(violated, 2);
        }
        other => panic!("{:?}", other),
    }
}

#[test]
fn garbage_and_missing_solvers_are_unknown() {
    let dir = tempfile::tempdir().unwrap();
    let s = script(dir.path(), "solver", "cat > /dev/null\necho '(error \"no'");
    let q = parse_query(MAX3).unwrap();
    assert!(matches!(external(&s).verify(&q, &cand(&q, "v0"), &NoDeadline), Verdict::Unknown(_)));
    let mut missing = external(&dir.path().join("nope"));
    assert!(matches!(missing.verify(&q, &cand(&q, "v0"), &NoDeadline), Verdict::Unknown(_)));
}

#[test]
fn slow_solver_is_killed() {
    let dir = tempfile::tempdir().unwrap();
    let s = script(dir.path(), "solver", "sleep 30\necho unsat");
    let cmd = SmtCommand::parse(s.to_str().unwrap()).unwrap();
    let t = Instant::now();
    let r = cmd.run("(check-sat)", &PollBudget::new(3), Duration::from_millis(10));
    assert!(matches!(r, Err(SmtError::Killed)));
    assert!(t.elapsed() < Duration::from_secs(5));
    assert!(matches!(SmtCommand::parse("   "), Err(SmtError::EmptyCommand)));
}

#[test]
fn layered_verifier_escalates_bounded_results_only() {
    let dir = tempfile::tempdir().unwrap();
    let calls = dir.path().join("calls");
    let s = script(dir.path(), "solver", &format!("cat > /dev/null\necho x >> {}\necho unsat", calls.display()));
    let q = parse_query(MAX3).unwrap();
    let mut v = LayeredVerifier::new(InternalVerifier::new(SearchConfig::default()), Some(external(&s)));
    assert!(matches!(v.verify(&q, &cand(&q, "v0"), &NoDeadline), Verdict::Counterexample { .. }));
    assert_eq!(v.name(), "internal");
    assert!(!calls.exists());
    let good = cand(&q, "(ite (>= v0 v1) (ite (>= v0 v2) v0 v2) (ite (>= v1 v2) v1 v2))");
    assert_eq!(v.verify(&q, &good, &NoDeadline), Verdict::Valid(Confidence::Proven));
    assert_eq!(v.name(), "smt");
    assert_eq!(fs::read_to_string(&calls).unwrap().lines().count(), 1);

    let mut alone = LayeredVerifier::new(InternalVerifier::new(SearchConfig::default()), None);
    assert_eq!(alone.verify(&q, &good, &NoDeadline), Verdict::Valid(Confidence::Bounded));
}
