//! Golden-file comparison of the CLI, shared by the golden suite and the
//! acceptance report.

#![allow(dead_code)]

use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;

pub fn root() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..")
}

fn corpus() -> Vec<String> {
    let mut names: Vec<String> = fs::read_dir(root().join("corpus"))
        .unwrap()
        .filter_map(|e| e.ok())
        .map(|e| e.file_name().to_string_lossy().into_owned())
        .filter(|n| n.ends_with(".rt"))
        .collect();
    names.sort();
    names
}

/// Run the binary from the workspace root; returns stdout and exit code.
pub fn reachck(args: &[&str]) -> (String, i32) {
    let out = Command::new(env!("CARGO_BIN_EXE_reachck"))
        .args(args)
        .current_dir(root())
        .output()
        .expect("binary runs");
    (String::from_utf8(out.stdout).unwrap(), out.status.code().unwrap_or(-1))
}

/// Every invocation covered by the goldens: file name and arguments.
fn cases() -> Vec<(String, Vec<String>)> {
    let mut cs = Vec::new();
    for name in corpus() {
        let stem = name.trim_end_matches(".rt").to_string();
        let path = format!("corpus/{name}");
        cs.push((
            format!("{stem}.check.json"),
            vec!["--json".into(), "check".into(), path.clone()],
        ));
        cs.push((format!("{stem}.dot"), vec!["graph".into(), path.clone()]));
        cs.push((
            format!("{stem}.run.json"),
            vec!["--json".into(), "run".into(), "--fuel".into(), "10000".into(), path],
        ));
    }
    cs
}

/// Compare every case byte for byte, or rewrite the files when `update`.
/// Golden contents are the exit code on the first line, then stdout.
pub fn compare(update: bool) -> Result<String, String> {
    let dir = root().join("corpus/golden");
    let cases = cases();
    let mut bad = Vec::new();
    for (file, args) in &cases {
        let args: Vec<&str> = args.iter().map(String::as_str).collect();
        let (out, code) = reachck(&args);
        let got = format!("exit {code}\n{out}");
        let path = dir.join(file);
        if update {
            fs::create_dir_all(&dir).unwrap();
            fs::write(&path, &got).unwrap();
            continue;
        }
        match fs::read_to_string(&path) {
            Ok(want) if want == got => {}
            Ok(want) => bad.push(format!("{file}: differs\n--- want\n{want}\n--- got\n{got}")),
            Err(e) => bad.push(format!("{file}: {e}")),
        }
    }
    if bad.is_empty() {
        Ok(format!("{} golden files match", cases.len()))
    } else {
        Err(bad.join("\n"))
    }
}

pub fn exit_codes() -> Result<String, String> {
    let expect: &[(&[&str], i32)] = &[
        (&["check", "corpus/landin_ok.rt"], 0),
        (&["check", "corpus/landin_noncyclic_err.rt"], 1),
        (&["check", "corpus/parse_err.rt"], 2),
        (&["run", "--fuel", "100", "corpus/loop.rt"], 4),
        (&["check", "corpus/missing.rt"], 10),
        (&["check", "--all", "corpus"], 2),
    ];
    let bad: Vec<String> = expect
        .iter()
        .filter_map(|(args, want)| {
            let (_, got) = reachck(args);
            (got != *want).then(|| format!("{}: exit {got}, expected {want}", args.join(" ")))
        })
        .collect();
    if bad.is_empty() {
        Ok(format!("{} exit codes", expect.len()))
    } else {
        Err(bad.join("\n"))
    }
}
