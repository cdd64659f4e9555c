use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use reachck_core::diag::{Diagnostic, LineSpan, Severity};
use reachck_core::env::{Store, StoreTyping};
use reachck_core::eval::{Machine, Status};
use reachck_core::gen::{gen_disjoint_pair, gen_well_typed};
use reachck_core::graph::Graph;
use reachck_core::meta::{parallel_check, progress_preservation, separation_check, Checked, TypedMachine, Violation};
use reachck_core::parse::parse_program;
use reachck_core::syntax::{Qual, Term};
use reachck_core::typeck::typecheck_program;

const OK: u8 = 0;
const TYPE_ERROR: u8 = 1;
const PARSE_ERROR: u8 = 2;
const ORACLE_FAILURE: u8 = 3;
const OUT_OF_FUEL: u8 = 4;
const IO_ERROR: u8 = 10;

#[derive(Parser)]
#[command(
    name = "reachck",
    version,
    about = "Type checker and interpreter for reachability types with cyclic references"
)]
struct Cli {
    /// Print diagnostics as a JSON array.
    #[arg(long, global = true)]
    json: bool,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Type-check a program.
    Check {
        /// Check every .rt file in the directory.
        #[arg(long)]
        all: bool,
        path: PathBuf,
    },
    /// Type-check and evaluate a program.
    Run {
        #[arg(long, default_value_t = 100_000)]
        fuel: usize,
        /// Log the rule applied at each step.
        #[arg(long)]
        trace: bool,
        /// Re-type the term after every step.
        #[arg(long)]
        preserve: bool,
        path: PathBuf,
    },
    /// Print the reachability graph of a program's bindings as DOT.
    Graph { path: PathBuf },
    /// Run the soundness oracles on generated programs.
    Fuzz {
        #[arg(long, default_value_t = 100)]
        count: u64,
        #[arg(long, default_value_t = 8)]
        size: usize,
        #[arg(long, default_value_t = 200)]
        fuel: usize,
    },
}

/// Diagnostics and text produced by a command, with its exit code.
struct Report {
    code: u8,
    diags: Vec<Diagnostic>,
    out: Vec<String>,
}

impl Report {
    fn new() -> Self {
        Report {
            code: OK,
            diags: Vec::new(),
            out: Vec::new(),
        }
    }

    fn fail(&mut self, code: u8, d: Diagnostic) {
        self.code = self.code.max(code);
        self.diags.push(d);
    }

    fn emit(self, json: bool, path: &str) -> ExitCode {
        if json {
            println!("{}", serde_json::to_string_pretty(&self.diags).expect("serializable"));
        } else {
            for line in &self.out {
                println!("{line}");
            }
            for d in &self.diags {
                if d.severity != Severity::Info {
                    eprintln!("{}", d.render(d.file.as_deref().unwrap_or(path)));
                }
            }
        }
        ExitCode::from(self.code)
    }
}

fn io_error(r: &mut Report, path: &Path, e: std::io::Error) {
    let d = Diagnostic::error("IoError", LineSpan::whole(""), format!("{}: {e}", path.display()));
    r.fail(IO_ERROR, d);
}

/// Parse and type-check; on failure the report carries the diagnostic.
fn load(path: &Path, r: &mut Report) -> Option<(String, Term)> {
    let src = match fs::read_to_string(path) {
        Ok(s) => s,
        Err(e) => {
            io_error(r, path, e);
            return None;
        }
    };
    let t = match parse_program(&src) {
        Ok(t) => t,
        Err(e) => {
            r.fail(PARSE_ERROR, Diagnostic::from_parse(&src, &e));
            return None;
        }
    };
    match typecheck_program(&t) {
        Ok(q) => {
            r.out.push(format!("{}: {q}", path.display()));
            Some((src, t))
        }
        Err(e) => {
            r.fail(TYPE_ERROR, Diagnostic::from_type(&src, &e));
            None
        }
    }
}

fn cmd_check(path: &Path, all: bool) -> Report {
    let mut r = Report::new();
    if !all {
        load(path, &mut r);
        return r;
    }
    let entries = match fs::read_dir(path) {
        Ok(es) => es,
        Err(e) => {
            io_error(&mut r, path, e);
            return r;
        }
    };
    let mut files: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "rt"))
        .collect();
    files.sort();
    for f in files {
        let mut one = Report::new();
        load(&f, &mut one);
        r.code = r.code.max(one.code);
        r.out.extend(one.out);
        r.diags.extend(one.diags.into_iter().map(|mut d| {
            d.file = Some(f.display().to_string());
            d
        }));
    }
    r
}

fn violation_kind(v: &Violation) -> &'static str {
    match v {
        Violation::IllTyped(_) => "IllTyped",
        Violation::Progress { .. } => "ProgressFailure",
        Violation::Preservation { .. } => "PreservationFailure",
        Violation::Store { .. } => "StoreFailure",
    }
}

fn cmd_run(path: &Path, fuel: usize, trace: bool, preserve: bool) -> Report {
    let mut r = Report::new();
    let Some((src, t)) = load(path, &mut r) else {
        return r;
    };
    r.out.clear();
    let whole = LineSpan::whole(&src);
    let mut log = Vec::new();
    let (value, steps, status) = if preserve {
        let mut tm = TypedMachine::new(StoreTyping::new(), Store::new(), Qual::empty(), 0);
        let mut cur = t.strip_spans();
        let status = loop {
            if tm.steps == fuel {
                break if cur.is_value() {
                    Status::Value
                } else {
                    Status::OutOfFuel
                };
            }
            match tm.step(&cur) {
                Ok(Checked::Value(_)) => break Status::Value,
                Ok(Checked::Stepped(next, _, info)) => {
                    if trace {
                        log.push(trace_line(tm.steps, &info));
                    }
                    cur = next;
                }
                Err(v) => {
                    r.out = log;
                    r.fail(
                        ORACLE_FAILURE,
                        Diagnostic::error(violation_kind(&v), whole, v.to_string()),
                    );
                    return r;
                }
            }
        };
        (cur, tm.steps, status)
    } else {
        let mut m = Machine::new(Store::new());
        m.run(&t, fuel, &mut |n, info, _| {
            if trace {
                log.push(trace_line(n, info));
            }
        })
    };
    r.out = log;
    match status {
        Status::Value => {
            r.out.push(value.to_string());
            r.diags
                .push(Diagnostic::new(Severity::Info, "Value", whole, value.to_string()));
        }
        Status::OutOfFuel => r.fail(
            OUT_OF_FUEL,
            Diagnostic::new(
                Severity::Warning,
                "OutOfFuel",
                whole,
                format!("no value after {steps} steps"),
            ),
        ),
        Status::Stuck(why) => r.fail(
            ORACLE_FAILURE,
            Diagnostic::error("ProgressFailure", whole, format!("stuck after {steps} steps: {why}")),
        ),
    }
    r
}

fn trace_line(n: usize, info: &reachck_core::eval::StepInfo) -> String {
    let mut s = format!("step {n}: {}", info.rule);
    if let Some(l) = info.alloc {
        s.push_str(&format!(" alloc #{l}"));
    }
    if let Some(l) = info.write {
        s.push_str(&format!(" write #{l}"));
    }
    s
}

fn cmd_graph(path: &Path) -> Report {
    let mut r = Report::new();
    let Some((src, t)) = load(path, &mut r) else {
        return r;
    };
    r.out.clear();
    match Graph::of_program(&t) {
        Ok(g) => r.out.push(g.to_dot().trim_end().to_string()),
        Err(e) => r.fail(TYPE_ERROR, Diagnostic::from_type(&src, &e)),
    }
    r
}

fn cmd_fuzz(count: u64, size: usize, fuel: usize) -> Report {
    let mut r = Report::new();
    let seed = match std::env::var("REACHCK_SEED") {
        Ok(s) => match s.parse::<u64>() {
            Ok(n) => n,
            Err(_) => {
                let d = Diagnostic::error(
                    "IoError",
                    LineSpan::whole(""),
                    format!("REACHCK_SEED is not a number: {s}"),
                );
                r.fail(IO_ERROR, d);
                return r;
            }
        },
        Err(_) => 0,
    };
    let mut failures = 0;
    for i in 0..count {
        let s = seed.wrapping_add(i);
        let t = gen_well_typed(s, size);
        let mut fail = |what: &str, msg: String| {
            failures += 1;
            let d = Diagnostic::error(what, LineSpan::whole(""), format!("seed {s}: {msg}"));
            r.fail(ORACLE_FAILURE, d);
        };
        if let Err(v) = progress_preservation(&t, fuel) {
            fail(violation_kind(&v), format!("{v}\n  program: {t}"));
        }
        let p = gen_disjoint_pair(s, size / 2);
        if let Err(e) = separation_check(&p.t1, &p.t2, &p.sigma, &p.store, fuel) {
            fail("SeparationFailure", e);
        }
        if let Err(e) = parallel_check(&p.t1, &p.t2, &p.sigma, &p.store, &p.phi1, &p.phi2, fuel) {
            fail("ParallelFailure", e);
        }
    }
    r.out.push(format!(
        "{count} programs and pairs from seed {seed}: {failures} failures"
    ));
    r
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (report, path) = match &cli.cmd {
        Cmd::Check { all, path } => (cmd_check(path, *all), path.display().to_string()),
        Cmd::Run {
            fuel,
            trace,
            preserve,
            path,
        } => (cmd_run(path, *fuel, *trace, *preserve), path.display().to_string()),
        Cmd::Graph { path } => (cmd_graph(path), path.display().to_string()),
        Cmd::Fuzz { count, size, fuel } => (cmd_fuzz(*count, *size, *fuel), String::new()),
    };
    report.emit(cli.json, &path)
}
