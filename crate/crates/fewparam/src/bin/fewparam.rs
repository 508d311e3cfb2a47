use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use serde_json::json;

use fewparam::config::{RunConfig, Settings, TheoremKind};
use fewparam::json::{self, report_doc};
use fewparam::run::{self, Built, GadgetReport, SizeGuardExceeded};
use fewparam::summary::{write_csv, SummaryRow};
use fewparam::Pool;
use fewparam_core::targets::{builtin, TargetOptions, BUILTIN_IDS};

/// Build and certify ReLU approximants with few intrinsic parameters.
#[derive(Parser)]
#[command(name = "fewparam", version)]
struct Cli {
    /// JSON run configuration; flags override its fields.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Worker threads (default: all available cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Lift the d n <= 16 size guard.
    #[arg(long, global = true)]
    force: bool,
    /// Record wall-clock times in reports.
    #[arg(long, global = true)]
    timing: bool,
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build an approximant and write it as JSON.
    Build {
        #[command(flatten)]
        what: TargetArgs,
        /// Approximant document path.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Fixed-substructure document path (intrinsic values removed).
        #[arg(long)]
        fixed_out: Option<PathBuf>,
    },
    /// Measure an approximant against its error bound.
    Certify {
        #[command(flatten)]
        what: TargetArgs,
        /// Approximant document written by `build`.
        #[arg(long)]
        input: Option<PathBuf>,
        /// Range of n, e.g. `n=1..4`.
        #[arg(long)]
        sweep: Option<String>,
        /// exact, float or both.
        #[arg(long)]
        eval_mode: Option<String>,
        /// Points per cell per axis for sup measurements.
        #[arg(long)]
        grid_per_cell: Option<u64>,
        /// Equispaced points per axis for sup measurements (2^k + 1).
        #[arg(long)]
        grid_points: Option<u64>,
        /// Points per cell per axis for the L^p quadrature.
        #[arg(long)]
        lp_per_cell: Option<u64>,
        /// Monte-Carlo samples for the L^p estimate.
        #[arg(long)]
        mc_samples: Option<usize>,
        #[arg(long)]
        csv: Option<PathBuf>,
        /// Full JSON report path.
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Check a single gadget exhaustively.
    Gadget {
        #[command(subcommand)]
        which: Gadget,
    },
    /// List builtin targets.
    Targets {
        #[arg(long, default_value_t = 1)]
        d: usize,
    },
}

#[derive(Subcommand)]
enum Gadget {
    /// Base-4 digit extractor over every J-digit word.
    BitExtractor {
        #[arg(long = "J", short = 'J')]
        j: u64,
    },
    /// Pack m-bit words and unpack them with the staircase network.
    Pack {
        #[arg(long)]
        m: u32,
        #[arg(long)]
        n: u32,
    },
    /// Median-of-three network.
    Mid,
}

#[derive(Args, Default)]
struct TargetArgs {
    /// lp, linf or three-param.
    #[arg(long)]
    theorem: Option<String>,
    #[arg(long)]
    target: Option<String>,
    #[arg(long)]
    d: Option<usize>,
    #[arg(long)]
    n: Option<u32>,
    #[arg(long)]
    p: Option<u32>,
    #[arg(long)]
    eps: Option<f64>,
    /// Value of the `constant` target.
    #[arg(long)]
    constant: Option<f64>,
    /// Hidden units of the `random-cpwl` target.
    #[arg(long)]
    pieces: Option<usize>,
    /// Unpack coefficients outside the network past the staircase cap.
    #[arg(long)]
    allow_semantic: bool,
}

impl TargetArgs {
    fn config(&self) -> RunConfig {
        RunConfig {
            theorem: self.theorem.clone(),
            target: self.target.clone(),
            d: self.d,
            n: self.n,
            p: self.p,
            eps: self.eps,
            constant: self.constant,
            pieces: self.pieces,
            allow_semantic: self.allow_semantic.then_some(true),
            ..RunConfig::default()
        }
    }
}

#[derive(Serialize)]
struct FailureSummary {
    status: &'static str,
    command: String,
    kind: String,
    message: String,
    #[serde(skip_serializing_if = "serde_json::Value::is_null")]
    details: serde_json::Value,
}

enum Outcome {
    Pass,
    Fail,
}

fn print_json<T: Serialize>(v: &T) -> anyhow::Result<()> {
    let mut out = std::io::stdout().lock();
    serde_json::to_writer_pretty(&mut out, v)?;
    writeln!(out)?;
    Ok(())
}

fn write_file(path: &PathBuf, text: &str) -> anyhow::Result<()> {
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn settings(cli: &Cli, flags: RunConfig) -> anyhow::Result<Settings> {
    let base = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    let global = RunConfig {
        threads: cli.threads,
        force: cli.force.then_some(true),
        timing: cli.timing.then_some(true),
        seed: cli.seed,
        ..RunConfig::default()
    };
    Settings::resolve(&base.overlay(flags).overlay(global))
}

fn build_summary(b: &Built, out: Option<&PathBuf>) -> serde_json::Value {
    let a = b.approx.audit();
    json!({
        "status": if b.approx.parts.iter().all(|p| p.within_budget()) { "pass" } else { "fail" },
        "theorem": b.approx.theorem.name(),
        "target": b.target.id,
        "d": b.approx.d,
        "n": b.approx.n,
        "delta": b.approx.delta.to_string(),
        "intrinsic_params": a.intrinsic_params,
        "total_params": a.total_params,
        "nonzero_params": a.nonzero_params,
        "width": a.width,
        "depth": a.depth,
        "parts": b.approx.parts.iter().map(|p| json!({
            "name": p.name,
            "nonzero_params": p.audit.nonzero_params,
            "total_params": p.audit.total_params,
            "budget": p.budget,
            "within_budget": p.within_budget(),
        })).collect::<Vec<_>>(),
        "notes": b.approx.notes,
        "out": out.map(|p| p.display().to_string()),
    })
}

fn cmd_build(cli: &Cli, what: &TargetArgs, out: Option<&PathBuf>, fixed_out: Option<&PathBuf>) -> anyhow::Result<Outcome> {
    let s = settings(cli, what.config())?;
    let b = run::build(&s, None)?;
    if let Some(p) = out {
        write_file(p, &json::to_json(&b.approx, &b.target_doc))?;
    }
    if let Some(p) = fixed_out {
        write_file(p, &json::fixed_json(&b.approx))?;
    }
    let summary = build_summary(&b, out);
    print_json(&summary)?;
    Ok(if summary["status"] == "pass" { Outcome::Pass } else { Outcome::Fail })
}

struct CertifyFlags<'a> {
    input: Option<&'a PathBuf>,
    csv: Option<&'a PathBuf>,
    report: Option<&'a PathBuf>,
}

fn cmd_certify(cli: &Cli, flags: RunConfig, files: CertifyFlags) -> anyhow::Result<Outcome> {
    let s = settings(cli, flags)?;
    let pool = Pool::new(s.threads)?;
    let mut reports = Vec::new();
    if let Some(path) = files.input {
        anyhow::ensure!(s.sweep.is_none(), "--sweep cannot be combined with --input");
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let (approx, target_doc) = json::from_json(&text)?;
        let target = builtin(&target_doc.id, target_doc.d, &target_doc.options())?;
        let s = Settings { d: approx.d, ..s };
        reports.extend(run::certify_built(&Built { approx, target, target_doc }, &s, &pool)?);
    } else {
        let ns: Vec<Option<u32>> = match &s.sweep {
            Some(ns) => {
                anyhow::ensure!(s.theorem != TheoremKind::ThreeParam, "three-param chooses n from eps; --sweep does not apply");
                ns.iter().map(|&n| Some(n)).collect()
            }
            None => vec![None],
        };
        for n in ns {
            let b = run::build(&s, n)?;
            reports.extend(run::certify_built(&b, &s, &pool)?);
        }
    }
    let rows: Vec<SummaryRow> = run::rows(&reports);
    if let Some(p) = files.csv {
        let f = std::fs::File::create(p).with_context(|| format!("creating {}", p.display()))?;
        write_csv(f, &rows)?;
    }
    if let Some(p) = files.report {
        let docs: Vec<_> = reports.iter().map(report_doc).collect();
        write_file(p, &(serde_json::to_string_pretty(&docs)? + "\n"))?;
    }
    let pass = reports.iter().all(|r| r.pass);
    let failed: Vec<_> = reports
        .iter()
        .filter(|r| !r.pass)
        .map(|r| json!({ "n": r.n, "eval_mode": r.mode.name(), "checks": r.checks.iter().filter(|c| !c.pass).map(|c| json!({"name": c.name, "measured": c.measured, "bound": c.bound})).collect::<Vec<_>>() }))
        .collect();
    print_json(&json!({ "status": if pass { "pass" } else { "fail" }, "rows": rows, "failures": failed }))?;
    Ok(if pass { Outcome::Pass } else { Outcome::Fail })
}

fn cmd_gadget(cli: &Cli, which: &Gadget) -> anyhow::Result<Outcome> {
    let s = settings(cli, RunConfig::default())?;
    let rep: GadgetReport = match which {
        Gadget::BitExtractor { j } => run::gadget_bit_extractor(*j, s.force, &Pool::new(s.threads)?)?,
        Gadget::Pack { m, n } => run::gadget_pack(*m, *n, s.seed)?,
        Gadget::Mid => run::gadget_mid(s.seed)?,
    };
    print_json(&json!({ "status": if rep.pass { "pass" } else { "fail" }, "report": rep }))?;
    Ok(if rep.pass { Outcome::Pass } else { Outcome::Fail })
}

fn cmd_targets(d: usize) -> anyhow::Result<Outcome> {
    let list = BUILTIN_IDS
        .iter()
        .map(|id| builtin(id, d, &TargetOptions::default()).map(|f| json!({ "id": id, "description": f.describe() })))
        .collect::<Result<Vec<_>, _>>()?;
    print_json(&json!({ "status": "pass", "targets": list }))?;
    Ok(Outcome::Pass)
}

fn command_name(c: &Command) -> &'static str {
    match c {
        Command::Build { .. } => "build",
        Command::Certify { .. } => "certify",
        Command::Gadget { .. } => "gadget",
        Command::Targets { .. } => "targets",
    }
}

fn dispatch(cli: &Cli) -> anyhow::Result<Outcome> {
    match &cli.command {
        Command::Build { what, out, fixed_out } => cmd_build(cli, what, out.as_ref(), fixed_out.as_ref()),
        Command::Certify { what, input, sweep, eval_mode, grid_per_cell, grid_points, lp_per_cell, mc_samples, csv, report } => {
            let flags = RunConfig {
                sweep: sweep.clone(),
                eval_mode: eval_mode.clone(),
                grid_per_cell: *grid_per_cell,
                grid_points: *grid_points,
                lp_per_cell: *lp_per_cell,
                mc_samples: *mc_samples,
                ..what.config()
            };
            cmd_certify(cli, flags, CertifyFlags { input: input.as_ref(), csv: csv.as_ref(), report: report.as_ref() })
        }
        Command::Gadget { which } => cmd_gadget(cli, which),
        Command::Targets { d } => cmd_targets(*d),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(&cli) {
        Ok(Outcome::Pass) => ExitCode::SUCCESS,
        Ok(Outcome::Fail) => ExitCode::from(1),
        Err(e) => {
            let (kind, details) = match e.downcast_ref::<SizeGuardExceeded>() {
                Some(g) => ("size-guard", serde_json::to_value(g).unwrap_or_default()),
                None => ("error", serde_json::Value::Null),
            };
            let summary = FailureSummary { status: "fail", command: command_name(&cli.command).into(), kind: kind.into(), message: format!("{e:#}"), details };
            eprintln!("{}", serde_json::to_string(&summary).unwrap_or_else(|_| format!("{e:#}")));
            ExitCode::from(2)
        }
    }
}
