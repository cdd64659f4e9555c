//! CLI output and exit codes against checked-in golden files. Set
//! `UPDATE_GOLDEN=1` to rewrite them.

#[path = "shared/golden.rs"]
mod golden;

use golden::reachck;

#[test]
fn cli_matches_golden_files() {
    golden::compare(std::env::var_os("UPDATE_GOLDEN").is_some()).unwrap();
}

#[test]
fn exit_codes_follow_the_contract() {
    golden::exit_codes().unwrap();
    assert_eq!(
        reachck(&["run", "--preserve", "--fuel", "10000", "corpus/factorial.rt"]),
        ("120\n".into(), 0)
    );
}

#[test]
fn json_diagnostics_have_the_documented_fields() {
    let (out, _) = reachck(&["--json", "check", "corpus/update_alias_err.rt"]);
    let v: serde_json::Value = serde_json::from_str(&out).unwrap();
    let d = &v.as_array().unwrap()[0];
    assert_eq!(d["severity"], "error");
    assert_eq!(d["kind"], "SeparationViolation");
    for k in ["startLine", "startCol", "endLine", "endCol"] {
        assert!(d["span"][k].as_u64().unwrap() >= 1);
    }
    assert!(d["message"].is_string());
}

#[test]
fn graph_is_deterministic() {
    assert_eq!(
        reachck(&["graph", "corpus/cell_ok.rt"]),
        reachck(&["graph", "corpus/cell_ok.rt"])
    );
}
