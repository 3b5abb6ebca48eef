use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use bfppc_cli::commands::{list, parse_auto, run_audit, synth, AuditCheck, AuditOptions};
use bfppc_cli::run::{run_scenario, RunFlags};
use bfppc_cli::scenario::{bundled, load_scenario, parse_scenario, Scenario};
use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(name = "bfppc", version, about = "Barrier-function-free prescribed-performance control runner")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate scenarios and write trace.csv, report.json and SVG figures.
    Run(RunArgs),
    /// Run one numerical audit and print its JSON report.
    Audit(AuditArgs),
    /// Design gains for a scenario (as if `auto` were set) and print them.
    Synth {
        scenario: PathBuf,
    },
    /// List the bundled scenarios.
    List,
}

#[derive(Args)]
struct SimFlags {
    /// Integration step, overriding the scenario.
    #[arg(long)]
    step: Option<f64>,
    /// Final time, overriding the scenario.
    #[arg(long = "t-end")]
    t_end: Option<f64>,
    /// Run even when the feasibility conditions fail.
    #[arg(long)]
    force: bool,
    /// Record every k-th step.
    #[arg(long)]
    stride: Option<usize>,
    /// Output root (default: $BFPPC_OUT, else ./out).
    #[arg(long)]
    out: Option<PathBuf>,
}

impl SimFlags {
    fn flags(&self, dry: bool) -> RunFlags {
        RunFlags {
            step: self.step,
            t_end: self.t_end,
            force: self.force,
            stride: self.stride,
            out_root: self.out.clone(),
            dry,
        }
    }
}

#[derive(Args)]
struct RunArgs {
    /// Scenario files or bundled names.
    scenarios: Vec<PathBuf>,
    /// Run every bundled scenario in parallel.
    #[arg(long)]
    all: bool,
    #[command(flatten)]
    sim: SimFlags,
}

#[derive(Args)]
struct AuditArgs {
    #[arg(long, value_enum)]
    check: AuditCheck,
    /// Scenario file or bundled name.
    #[arg(long)]
    scenario: Option<PathBuf>,
    /// Only this stage or channel (1-based).
    #[arg(long)]
    stage: Option<usize>,
    /// Constant bound to test instead of the scenario's.
    #[arg(long)]
    h: Option<f64>,
    #[arg(long, default_value_t = 1.0)]
    m: f64,
    #[arg(long, default_value_t = 0.5)]
    eps: f64,
    #[arg(long, default_value_t = 100_000)]
    points: usize,
    /// Envelope value for the singularity demo (default: delta0).
    #[arg(long)]
    rho: Option<f64>,
    #[command(flatten)]
    sim: SimFlags,
}

fn run_one(sc: &Scenario, flags: &RunFlags) -> Result<bool> {
    let out = run_scenario(sc, flags)?;
    let r = &out.report;
    let worst = r
        .stats
        .channels
        .iter()
        .map(|c| format!("max|e{}|={:.4e}/p={:.4e}", c.channel, c.max_abs_e, c.radius))
        .collect::<Vec<_>>()
        .join(" ");
    println!(
        "{} {}: {} t={:.4} {}{}",
        if r.pass { "PASS" } else { "FAIL" },
        r.scenario,
        if r.complete { "complete" } else { "diverged" },
        r.stats.t_last,
        worst,
        out.dir.map(|d| format!(" -> {}", d.display())).unwrap_or_default(),
    );
    if let Some(t) = r.divergence_time {
        println!("  divergence at t={t}: {}", r.divergence_message.as_deref().unwrap_or(""));
    }
    for a in r.audits.iter().filter(|a| !a.pass) {
        println!("  failed audit {}: residual {:.4e}", a.check, a.worst_residual);
    }
    Ok(r.pass)
}

fn cmd_run(args: &RunArgs) -> Result<bool> {
    let flags = args.sim.flags(false);
    let scenarios: Vec<Scenario> = if args.all {
        if !args.scenarios.is_empty() {
            bail!("--all takes no scenario arguments");
        }
        bundled().into_iter().map(|(_, t)| parse_scenario(t)).collect::<Result<_>>()?
    } else {
        if args.scenarios.is_empty() {
            bail!("give a scenario file or --all");
        }
        args.scenarios.iter().map(|p| load_scenario(p)).collect::<Result<_>>()?
    };
    for sc in &scenarios {
        for w in &sc.warnings {
            eprintln!("warning: {}: {w}", sc.name());
        }
    }
    let results: Vec<Result<bool>> = std::thread::scope(|s| {
        let handles: Vec<_> = scenarios.iter().map(|sc| s.spawn(|| run_one(sc, &flags))).collect();
        handles.into_iter().map(|h| h.join().expect("run thread panicked")).collect()
    });
    let mut pass = true;
    for (sc, r) in scenarios.iter().zip(results) {
        match r {
            Ok(p) => pass &= p,
            Err(e) => {
                eprintln!("error: {}: {e:#}", sc.name());
                pass = false;
            }
        }
    }
    Ok(pass)
}

fn cmd_audit(args: &AuditArgs) -> Result<bool> {
    let sc = args.scenario.as_deref().map(load_scenario).transpose()?;
    let opts = AuditOptions {
        stage: args.stage,
        h: args.h,
        m: args.m,
        eps: args.eps,
        points: args.points,
        rho: args.rho,
        run: args.sim.flags(true),
    };
    let out = run_audit(args.check, sc.as_ref(), &opts)?;
    println!("{}", serde_json::to_string_pretty(&out.to_json())?);
    Ok(out.pass())
}

fn cmd_synth(path: &PathBuf) -> Result<bool> {
    let text = match bundled().into_iter().find(|(n, _)| Some(*n) == path.to_str()) {
        Some((_, t)) if !path.exists() => t.to_string(),
        _ => std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?,
    };
    let sc = parse_auto(&text).with_context(|| format!("loading {}", path.display()))?;
    let v = synth(&sc)?;
    println!("{}", serde_json::to_string_pretty(&v)?);
    Ok(sc.feasibility().pass())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Run(a) => cmd_run(a),
        Command::Audit(a) => cmd_audit(a),
        Command::Synth { scenario } => cmd_synth(scenario),
        Command::List => {
            list().iter().for_each(|l| println!("{l}"));
            Ok(true)
        }
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
