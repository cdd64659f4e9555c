//! One PASS or FAIL line per acceptance criterion. Run with `--nocapture`
//! to see the report.

#[path = "../../core/tests/shared/checks.rs"]
mod checks;
#[path = "shared/golden.rs"]
mod golden;
#[path = "../../core/tests/shared/lemma_props.rs"]
mod lemma_props;

type Check = Result<String, String>;
type Criterion = (&'static str, fn() -> Check);

fn all(parts: Vec<Check>) -> Check {
    let mut ok = Vec::new();
    let mut bad = Vec::new();
    for p in parts {
        match p {
            Ok(s) => ok.push(s),
            Err(e) => bad.push(e),
        }
    }
    if bad.is_empty() {
        Ok(ok.join("; "))
    } else {
        Err(bad.join("\n"))
    }
}

fn lemmas() -> Check {
    all(lemma_props::ALL
        .iter()
        .map(|(name, prop)| {
            prop(lemma_props::CASES)
                .map(|_| name.to_string())
                .map_err(|e| format!("{name}: {e}"))
        })
        .collect())
    .map(|_| {
        format!(
            "{} properties, {} cases each",
            lemma_props::ALL.len(),
            lemma_props::CASES
        )
    })
}

#[test]
fn acceptance() {
    let criteria: Vec<Criterion> = vec![
        ("1 positive corpus accepted", checks::positive_corpus),
        ("2 negative corpus rejected with exact kinds", checks::negative_corpus),
        ("3 qualifier lemmas", lemmas),
        ("4 progress and preservation", || {
            all(vec![
                checks::corpus_preservation(),
                checks::generated_preservation(checks::PROGRAMS),
            ])
        }),
        ("5 separation and parallel checks", || {
            all(vec![
                checks::nested_references(),
                checks::generated_pairs(checks::PAIRS),
            ])
        }),
        ("6 factorial exact, loop exhausts fuel", || {
            all(vec![checks::factorial_exact(), checks::loop_exhausts_budget()])
        }),
        ("7 CLI exit codes and golden output", || {
            all(vec![golden::exit_codes(), golden::compare(false)])
        }),
    ];
    let mut failed = Vec::new();
    for (name, check) in criteria {
        match check() {
            Ok(detail) => println!("PASS {name}: {detail}"),
            Err(e) => {
                println!("FAIL {name}");
                failed.push(format!("{name}:\n{e}"));
            }
        }
    }
    assert!(failed.is_empty(), "{}", failed.join("\n\n"));
}
