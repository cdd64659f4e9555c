//! Qualifier-algebra lemmas, 1024 random environments each.

#[path = "shared/lemma_props.rs"]
mod lemma_props;

#[test]
fn all_lemmas_hold() {
    let mut bad = Vec::new();
    for (name, prop) in lemma_props::ALL {
        if let Err(e) = prop(lemma_props::CASES) {
            bad.push(format!("{name}: {e}"));
        }
    }
    assert!(bad.is_empty(), "{}", bad.join("\n"));
}
