//! Batch driver: `check`, `run`, and `test` over `.silica` programs.
//!
//! Exit codes: 0 ok, 1 diagnostics, 2 IO/manifest problems, 3 internal
//! (machine faults or verification/audit failures).

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde::Deserialize;

use silica::interp::{evaluate, EvalOutcome};
use silica::meta::{Verdict, Verifier};
use silica::{check_declarations, parse_program, CheckedProgram, Diagnostic, StuckKind, Value};

#[derive(Parser)]
#[command(name = "silica", about = "Typestate calculus batch driver", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Parse and typecheck a program.
    Check { file: PathBuf },
    /// Typecheck, then evaluate the main expression.
    Run {
        file: PathBuf,
        /// Step budget.
        #[arg(long, default_value_t = 100_000)]
        fuel: u64,
        /// Print one STEP line per machine step.
        #[arg(long)]
        trace: bool,
        /// Re-derive the soundness invariants after every step.
        #[arg(long)]
        verify: bool,
    },
    /// Run every case of a conformance corpus.
    Test { dir: PathBuf },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::Check { file } => cmd_check(&file),
        Command::Run { file, fuel, trace, verify } => cmd_run(&file, fuel, trace, verify),
        Command::Test { dir } => cmd_test(&dir),
    }
}

fn color_enabled() -> bool {
    std::env::var("SILICA_COLOR").map(|v| v == "1").unwrap_or(false)
}

fn paint(s: &str, code: &str) -> String {
    if color_enabled() {
        format!("\x1b[{code}m{s}\x1b[0m")
    } else {
        s.to_string()
    }
}

fn read_source(file: &Path) -> Result<String, ExitCode> {
    std::fs::read_to_string(file).map_err(|e| {
        eprintln!("ERR IO001 {}:0:0 rule=io {}", file.display(), e);
        ExitCode::from(2)
    })
}

fn print_diags(file: &Path, diags: &[Diagnostic]) {
    let name = file.display().to_string();
    for d in diags {
        println!("{}", d.machine_line(&name));
    }
}

fn load_checked(file: &Path) -> Result<CheckedProgram, ExitCode> {
    let source = read_source(file)?;
    let program = match parse_program(&source) {
        Ok(p) => p,
        Err(ds) => {
            print_diags(file, &ds);
            return Err(ExitCode::from(1));
        }
    };
    match check_declarations(&program) {
        Ok(c) => Ok(c),
        Err(ds) => {
            print_diags(file, &ds);
            Err(ExitCode::from(1))
        }
    }
}

fn cmd_check(file: &Path) -> ExitCode {
    match load_checked(file) {
        Ok(_) => {
            println!("{} {}", paint("OK", "32"), file.display());
            ExitCode::SUCCESS
        }
        Err(code) => code,
    }
}

fn finished_line(v: Value, config: &silica::RuntimeConfig) -> String {
    match v {
        Value::Unit => "FINISHED unit".to_string(),
        Value::Obj(o) => match config.heap.get(&o) {
            Some(h) => format!("FINISHED object {o} {}.{}", h.contract, h.state),
            None => format!("FINISHED object {o}"),
        },
    }
}

fn stuck_line(k: &StuckKind) -> String {
    format!("STUCK {}", k.label())
}

fn cmd_run(file: &Path, fuel: u64, trace: bool, verify: bool) -> ExitCode {
    let checked = match load_checked(file) {
        Ok(c) => c,
        Err(code) => return code,
    };
    if verify {
        let report = Verifier::new(&checked).run(fuel);
        if trace {
            for t in &report.trace {
                println!("STEP {} {} {}", t.step, t.rule, t.summary);
            }
        }
        let mut failed = false;
        for v in &report.verdicts {
            match &v.verdict {
                Verdict::Pass => {
                    println!("VERIFY step={} rule={} verdict=pass", v.step, v.rule)
                }
                Verdict::Ver001(m) => {
                    failed = true;
                    println!("VERIFY step={} rule={} verdict=VER001", v.step, v.rule);
                    eprintln!("  {}", paint(m, "31"));
                }
                Verdict::Ver002(m) => {
                    failed = true;
                    println!("VERIFY step={} rule={} verdict=VER002", v.step, v.rule);
                    eprintln!("  {}", paint(m, "31"));
                }
            }
        }
        if let Err((code, msg)) = &report.audit {
            failed = true;
            eprintln!("{} {}", paint(code, "31"), msg);
        }
        match &report.outcome {
            EvalOutcome::Finished(v) => println!("{}", finished_line(*v, &report.final_config)),
            EvalOutcome::Stuck(k) => println!("{}", stuck_line(k)),
            EvalOutcome::FuelExhausted => println!("FUEL"),
        }
        if failed {
            return ExitCode::from(3);
        }
        ExitCode::SUCCESS
    } else {
        let report = match evaluate(&checked, fuel, trace) {
            Ok(r) => r,
            Err(d) => {
                println!("{}", d.machine_line(&file.display().to_string()));
                return ExitCode::from(3);
            }
        };
        if let Some(entries) = &report.trace {
            for t in entries {
                println!("STEP {} {} {}", t.step, t.rule, t.summary);
            }
        }
        match &report.outcome {
            EvalOutcome::Finished(v) => println!("{}", finished_line(*v, &report.final_config)),
            EvalOutcome::Stuck(k) => println!("{}", stuck_line(k)),
            EvalOutcome::FuelExhausted => println!("FUEL"),
        }
        ExitCode::SUCCESS
    }
}

// ---------------------------------------------------------------------------
// Corpus testing
// ---------------------------------------------------------------------------

#[derive(Debug, Deserialize)]
struct Manifest {
    #[serde(rename = "case")]
    cases: Vec<CaseSpec>,
}

#[derive(Debug, Deserialize)]
struct CaseSpec {
    name: String,
    file: String,
    expect: String,
    #[serde(default)]
    codes: Vec<String>,
    #[serde(default)]
    outcome: Option<String>,
    #[serde(default)]
    kind: Option<String>,
    #[serde(default)]
    fuel: Option<u64>,
}

enum CaseResult {
    Pass,
    Fail(String),
}

pub const DEFAULT_CASE_FUEL: u64 = 10_000;

fn run_case(dir: &Path, case: &CaseSpec) -> Result<CaseResult, String> {
    let path = dir.join(&case.file);
    let source =
        std::fs::read_to_string(&path).map_err(|e| format!("IO001 {}: {e}", path.display()))?;
    let parsed = parse_program(&source);
    let checked = match parsed {
        Ok(p) => check_declarations(&p),
        Err(ds) => Err(ds),
    };
    match case.expect.as_str() {
        "accept" => match checked {
            Ok(_) => Ok(CaseResult::Pass),
            Err(ds) => Ok(CaseResult::Fail(format!(
                "expected accept, got {}",
                ds.first().map(|d| d.to_string()).unwrap_or_default()
            ))),
        },
        "reject" => match checked {
            Ok(_) => Ok(CaseResult::Fail("expected rejection, program checked".into())),
            Err(ds) => {
                let mut got: Vec<String> = ds.iter().map(|d| d.code.to_string()).collect();
                got.sort();
                got.dedup();
                let mut want = case.codes.clone();
                want.sort();
                if got == want {
                    Ok(CaseResult::Pass)
                } else {
                    Ok(CaseResult::Fail(format!(
                        "expected codes {want:?}, got {got:?}"
                    )))
                }
            }
        },
        "eval" | "stuck" => {
            let checked = match checked {
                Ok(c) => c,
                Err(ds) => {
                    return Ok(CaseResult::Fail(format!(
                        "program rejected: {}",
                        ds.first().map(|d| d.to_string()).unwrap_or_default()
                    )))
                }
            };
            let fuel = case.fuel.unwrap_or(DEFAULT_CASE_FUEL);
            let report = Verifier::new(&checked).run(fuel);
            if !report.all_pass() {
                let detail = report
                    .verdicts
                    .iter()
                    .find(|v| v.verdict != Verdict::Pass)
                    .map(|v| format!("step {} rule {} {}", v.step, v.rule, v.verdict.code()))
                    .or_else(|| report.audit.as_ref().err().map(|(c, m)| format!("{c}: {m}")))
                    .unwrap_or_default();
                return Ok(CaseResult::Fail(format!("verification failed: {detail}")));
            }
            match (case.expect.as_str(), &report.outcome) {
                ("eval", EvalOutcome::Finished(v)) => {
                    let got = match v {
                        Value::Unit => "unit".to_string(),
                        Value::Obj(o) => match report.final_config.heap.get(o) {
                            Some(h) => format!("object {}.{}", h.contract, h.state),
                            None => "object".to_string(),
                        },
                    };
                    match &case.outcome {
                        Some(want) if want != &got => Ok(CaseResult::Fail(format!(
                            "expected outcome `{want}`, got `{got}`"
                        ))),
                        _ => Ok(CaseResult::Pass),
                    }
                }
                ("eval", other) => {
                    Ok(CaseResult::Fail(format!("expected FINISHED, got {other:?}")))
                }
                ("stuck", EvalOutcome::Stuck(k)) => {
                    let want = case.kind.clone().unwrap_or_default();
                    if k.label() == want {
                        Ok(CaseResult::Pass)
                    } else {
                        Ok(CaseResult::Fail(format!(
                            "expected stuck kind `{want}`, got `{}`",
                            k.label()
                        )))
                    }
                }
                ("stuck", other) => {
                    Ok(CaseResult::Fail(format!("expected STUCK, got {other:?}")))
                }
                _ => unreachable!(),
            }
        }
        other => Err(format!("MAN001 unknown expectation `{other}`")),
    }
}

fn cmd_test(dir: &Path) -> ExitCode {
    let manifest_path = dir.join("manifest.toml");
    let text = match std::fs::read_to_string(&manifest_path) {
        Ok(t) => t,
        Err(e) => {
            eprintln!("ERR IO001 {}:0:0 rule=io {}", manifest_path.display(), e);
            return ExitCode::from(2);
        }
    };
    let manifest: Manifest = match toml::from_str(&text) {
        Ok(m) => m,
        Err(e) => {
            eprintln!("ERR MAN001 {}:0:0 rule=manifest {}", manifest_path.display(), e);
            return ExitCode::from(2);
        }
    };
    // Validate expectations before running anything.
    for c in &manifest.cases {
        let ok = matches!(c.expect.as_str(), "accept" | "reject" | "eval" | "stuck");
        if !ok {
            eprintln!(
                "ERR MAN001 {}:0:0 rule=manifest case `{}` has unknown expectation `{}`",
                manifest_path.display(),
                c.name,
                c.expect
            );
            return ExitCode::from(2);
        }
        if c.expect == "stuck" {
            let k = c.kind.as_deref().unwrap_or("");
            if !matches!(k, "bad-transition" | "reentrancy" | "nested-state-check") {
                eprintln!(
                    "ERR MAN001 {}:0:0 rule=manifest case `{}` names unknown stuck kind `{k}`",
                    manifest_path.display(),
                    c.name
                );
                return ExitCode::from(2);
            }
        }
    }

    let mut failures = 0usize;
    let width = manifest.cases.iter().map(|c| c.name.len()).max().unwrap_or(4);
    for c in &manifest.cases {
        match run_case(dir, c) {
            Ok(CaseResult::Pass) => {
                println!("{:width$}  {}", c.name, paint("PASS", "32"), width = width);
            }
            Ok(CaseResult::Fail(msg)) => {
                failures += 1;
                println!("{:width$}  {}  {msg}", c.name, paint("FAIL", "31"), width = width);
            }
            Err(msg) => {
                eprintln!("ERR {msg}");
                return ExitCode::from(2);
            }
        }
    }
    println!("{} case(s), {} failure(s)", manifest.cases.len(), failures);
    if failures == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(1)
    }
}
