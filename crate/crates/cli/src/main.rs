//! `qlam`: check, run and inspect programs of the calculus.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::json;

use qlam::props::{run_properties, GenBudget, Property, PropConfig};
use qlam::rewrite::{Engine, Trace};
use qlam::semantics::denote_closed;
use qlam::surface::{self, print, print_number, SourceFile};
use qlam::typecheck::infer_closed;
use qlam::typesys::subtype;

#[derive(Parser)]
#[command(name = "qlam", version, about = "A typed quantum lambda-calculus with measurement")]
struct Cli {
    #[command(flatten)]
    cfg: RunConfig,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Args, Clone)]
struct RunConfig {
    /// Seed for sampled runs and term generation.
    #[arg(long, global = true, env = "QLAM_SEED", default_value_t = 0)]
    seed: u64,
    /// Maximum number of reduction steps per branch.
    #[arg(long, global = true, default_value_t = 10_000, value_parser = clap::value_parser!(u64).range(1..))]
    fuel: u64,
    /// Tolerance for comparing amplitudes.
    #[arg(long, global = true, default_value_t = 1e-10, value_parser = positive_f64)]
    epsilon: f64,
    #[arg(long, global = true, value_enum, default_value_t = Format::Text)]
    format: Format,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Text,
    Json,
}

#[derive(Subcommand)]
enum Cmd {
    /// Infer the type of the main term; compare with `-- expect:` if present.
    Check { file: PathBuf },
    /// Sample one execution.
    Run {
        file: PathBuf,
        /// Print every rewrite step.
        #[arg(long)]
        trace: bool,
    },
    /// Same as `run --trace`.
    Trace { file: PathBuf },
    /// Enumerate every measurement branch.
    Dist {
        file: PathBuf,
        /// List branches before merging equal results.
        #[arg(long)]
        branches: bool,
    },
    /// Print the vector denotation of the main term.
    Denote { file: PathBuf },
    /// Check the metatheory on random well-typed terms.
    Properties {
        #[arg(long, default_value_t = 4)]
        depth: usize,
        #[arg(long, default_value_t = 3, value_parser = clap::value_parser!(u64).range(1..=8))]
        qubits: u64,
        #[arg(long, default_value_t = 500)]
        count: usize,
    },
}

fn positive_f64(s: &str) -> Result<f64, String> {
    match s.parse::<f64>() {
        Ok(x) if x > 0.0 && x.is_finite() => Ok(x),
        Ok(_) => Err("must be a positive number".into()),
        Err(e) => Err(e.to_string()),
    }
}

/// A failure reported to the user, with the exit code it maps to.
struct Failure {
    code: u8,
    kind: &'static str,
    message: String,
}

impl Failure {
    fn input(kind: &'static str, message: impl Into<String>) -> Failure {
        Failure {
            code: 2,
            kind,
            message: message.into(),
        }
    }
}

type Outcome = Result<Output, Failure>;

/// What a command prints: JSON value plus its text rendering, and whether
/// every requested check passed.
struct Output {
    json: serde_json::Value,
    text: String,
    ok: bool,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let fmt = cli.cfg.format;
    match dispatch(&cli) {
        Ok(out) => {
            match fmt {
                Format::Json => println!("{}", out.json),
                Format::Text => print!("{}", out.text),
            }
            if out.ok {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(1)
            }
        }
        Err(f) => {
            match fmt {
                Format::Json => println!("{}", json!({"error": {"kind": f.kind, "message": f.message}})),
                Format::Text => eprintln!("error: {}", f.message),
            }
            ExitCode::from(f.code)
        }
    }
}

fn dispatch(cli: &Cli) -> Outcome {
    let cfg = &cli.cfg;
    let engine = Engine::new(cfg.epsilon);
    let fuel = cfg.fuel as usize;
    match &cli.cmd {
        Cmd::Check { file } => check(&load(file)?),
        Cmd::Run { file, trace } => run(&load(file)?, &engine, cfg.seed, fuel, *trace),
        Cmd::Trace { file } => run(&load(file)?, &engine, cfg.seed, fuel, true),
        Cmd::Dist { file, branches } => dist(&load(file)?, &engine, fuel, *branches),
        Cmd::Denote { file } => denote(&load(file)?, cfg.epsilon),
        Cmd::Properties {
            depth,
            qubits,
            count,
        } => {
            let budget = GenBudget::new(*depth, *qubits as usize, *count);
            let pcfg = PropConfig {
                seed: cfg.seed,
                eps: cfg.epsilon.max(1e-9),
                ..PropConfig::default()
            };
            properties(budget, &engine, &pcfg)
        }
    }
}

fn load(path: &Path) -> Result<SourceFile, Failure> {
    let src = std::fs::read_to_string(path)
        .map_err(|e| Failure::input("io", format!("{}: {e}", path.display())))?;
    surface::parse(&src).map_err(|e| Failure::input("parse", format!("{}:{e}", path.display())))
}

fn typed(file: &SourceFile) -> Result<qlam::Type, Failure> {
    infer_closed(&file.main).map_err(|e| Failure::input("type", e.to_string()))
}

fn check(file: &SourceFile) -> Outcome {
    let ty = typed(file)?;
    let (ok, expect) = match &file.expect {
        Some(e) => (subtype(&ty, e) && subtype(e, &ty), Some(e.to_string())),
        None => (true, None),
    };
    let mut text = format!("{ty}\n");
    if let Some(e) = &expect {
        if !ok {
            text.push_str(&format!("mismatch: expected {e}\n"));
        }
    }
    Ok(Output {
        json: json!({"type": ty.to_string(), "expect": expect, "ok": ok}),
        text,
        ok,
    })
}

fn runtime(e: impl std::fmt::Display) -> Failure {
    Failure::input("runtime", e.to_string())
}

#[derive(Serialize)]
struct TraceLine {
    rule: String,
    p: f64,
    before: String,
    after: String,
}

fn trace_json(t: &Trace) -> Vec<TraceLine> {
    t.steps
        .iter()
        .map(|s| TraceLine {
            rule: s.rule.to_string(),
            p: s.p,
            before: print(&s.before),
            after: print(&s.after),
        })
        .collect()
}

fn run(file: &SourceFile, engine: &Engine, seed: u64, fuel: usize, show_trace: bool) -> Outcome {
    typed(file)?;
    let (result, trace) = engine.sample(&file.main, seed, fuel).map_err(runtime)?;
    let mut text = String::new();
    let mut json = json!({"term": print(&result)});
    if show_trace {
        text.push_str(&trace.to_string());
        json["trace"] = serde_json::to_value(trace_json(&trace)).expect("serializable");
    }
    text.push_str(&format!("{}\n", print(&result)));
    Ok(Output { json, text, ok: true })
}

#[derive(Serialize)]
struct DistEntry {
    p: f64,
    term: String,
}

fn dist(file: &SourceFile, engine: &Engine, fuel: usize, branches: bool) -> Outcome {
    typed(file)?;
    let d = engine.run_distribution(&file.main, fuel).map_err(runtime)?;
    let entries: Vec<DistEntry> = if branches {
        d.branches
            .iter()
            .map(|b| DistEntry {
                p: b.p,
                term: print(&b.term),
            })
            .collect()
    } else {
        d.merged
            .iter()
            .map(|(p, t)| DistEntry { p: *p, term: print(t) })
            .collect()
    };
    let text = entries
        .iter()
        .map(|e| format!("{}\t{}\n", print_number(e.p), e.term))
        .collect();
    Ok(Output {
        json: serde_json::to_value(&entries).expect("serializable"),
        text,
        ok: true,
    })
}

fn denote(file: &SourceFile, eps: f64) -> Outcome {
    typed(file)?;
    let set = denote_closed(&file.main, eps).map_err(runtime)?;
    let vectors: Vec<Vec<[f64; 2]>> = set
        .iter()
        .map(|v| v.amplitudes().iter().map(|a| [a.re, a.im]).collect())
        .collect();
    let text = set.iter().map(|v| format!("{v:?}\n")).collect();
    Ok(Output {
        json: json!(vectors),
        text,
        ok: true,
    })
}

fn properties(budget: GenBudget, engine: &Engine, cfg: &PropConfig) -> Outcome {
    let report = run_properties(budget, engine, cfg);
    let checked: serde_json::Map<String, serde_json::Value> = Property::ALL
        .iter()
        .zip(report.checked)
        .map(|(p, n)| (p.name().to_string(), json!(n)))
        .collect();
    let violations: Vec<_> = report
        .violations
        .iter()
        .map(|v| {
            json!({
                "property": v.property.name(),
                "term": print(&v.original),
                "shrunk": print(&v.shrunk),
                "detail": v.detail,
            })
        })
        .collect();
    let mut ok = report.passed();
    let mut text = report.to_string();
    if report.generated < budget.count {
        ok = false;
        text.push_str(&format!("only {} of {} terms could be generated\n", report.generated, budget.count));
    }
    Ok(Output {
        json: json!({
            "generated": report.generated,
            "attempts": report.attempts,
            "states": report.states,
            "checked": checked,
            "violations": violations,
            "passed": ok,
        }),
        text,
        ok,
    })
}
