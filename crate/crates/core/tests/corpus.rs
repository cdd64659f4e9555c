//! The example corpus: expected verdicts, values and runtime typing.

#[path = "shared/checks.rs"]
mod checks;

use checks::load;
use reachck_core::eval::eval_program;
use reachck_core::syntax::Term;

#[test]
fn positive_programs_typecheck() {
    checks::positive_corpus().unwrap();
}

#[test]
fn negative_programs_fail_with_expected_kind() {
    checks::negative_corpus().unwrap();
}

#[test]
fn corpus_preserves_types_for_200_steps() {
    checks::corpus_preservation().unwrap();
}

#[test]
fn program_values() {
    for (name, v) in [
        ("factorial.rt", 120),
        ("par_ok.rt", 1),
        ("newctx_ok.rt", 2),
        ("mkref_escape_ok.rt", 1),
        ("escape_local_ok.rt", 1),
        ("nested_escape_ok.rt", 3),
        ("par_nested_ok.rt", 10),
    ] {
        assert_eq!(eval_program(&load(name), 100_000).term, Term::nat(v), "{name}");
    }
}
