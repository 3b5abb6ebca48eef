//! Run orchestration: simulate, persist, audit, summarize.

use std::fs;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{bail, Context, Result};
use bfppc::audit::{tanh_bound_check, verify_envelope, AuditReport};
use bfppc::engine::{simulate, trace_stats, ControlHold, SimOptions, SimTrace, TraceStats};
use bfppc::tracker::TANH_SLACK;
use bfppc::TraceRow;
use serde_json::json;

use crate::csv::{round_row, write_trace};
use crate::plots::write_figures;
use crate::report::{RunReport, REPORT_VERSION};
use crate::scenario::{Format, LoopSetup, Scenario};

/// Grid size of the tanh check attached to tracking runs.
pub const TANH_POINTS: usize = 100_000;

/// Command-line overrides of the scenario's simulation section.
#[derive(Debug, Clone, Default)]
pub struct RunFlags {
    pub step: Option<f64>,
    pub t_end: Option<f64>,
    pub force: bool,
    pub stride: Option<usize>,
    /// Output root; the scenario's directory name is appended.
    pub out_root: Option<PathBuf>,
    /// Skip writing files (report is still returned).
    pub dry: bool,
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub report: RunReport,
    pub dir: Option<PathBuf>,
    pub trace: SimTrace,
    /// Recorded rows as they read back from the CSV.
    pub rows: Vec<TraceRow>,
}

pub fn effective_options(sc: &Scenario, flags: &RunFlags) -> SimOptions {
    let mut o = sc.options;
    if let Some(h) = flags.step {
        o.step = h;
    }
    if let Some(t) = flags.t_end {
        o.t_end = t;
    }
    if let Some(s) = flags.stride {
        o.record_stride = s.max(1);
    }
    o.force |= flags.force;
    o
}

/// Statistics of rows that already carry CSV precision.
pub fn stats_of(sc: &Scenario, rows: &[TraceRow], radii: &[f64]) -> TraceStats {
    trace_stats(rows, radii, |r| sc.output(r.t, r.x[0]))
}

/// Containment and output-form checks, plus the schedule and tanh checks
/// of tracking runs.
pub fn run_audits(sc: &Scenario, trace: &SimTrace, rows: &[TraceRow]) -> Result<Vec<AuditReport>> {
    let env = verify_envelope(rows, &trace.radii, |r| sc.output(r.t, r.x[0]));
    let mut audits = env.channels;
    audits.push(env.output_form);
    for (i, (&m, &p)) in trace.every_step_max_error.iter().zip(&trace.radii).enumerate() {
        audits.push(AuditReport {
            check: format!("every_step_e{}", i + 1),
            domain: format!("all {} integration steps", (trace.rows.last().map_or(0.0, |r| r.t) / trace.step).round()),
            samples: 0,
            worst_residual: p - m,
            worst_location: vec![],
            pass: m <= p,
            note: Some("residual = p_i - max_k |e_i(t_k)| over every step".into()),
        });
    }
    if let LoopSetup::Tracking(t) = &sc.setup {
        let k = t.config.stage_count();
        let sigma_ok = rows.windows(2).all(|w| w[0].sigma <= w[1].sigma) && rows.iter().all(|r| r.sigma <= k);
        audits.push(AuditReport {
            check: "switch_schedule".into(),
            domain: format!("{} trace samples, K = {k}", rows.len()),
            samples: rows.len(),
            worst_residual: (k as f64) - rows.iter().map(|r| r.sigma).max().unwrap_or(0) as f64,
            worst_location: vec![],
            pass: sigma_ok,
            note: Some("sigma nondecreasing and at most K".into()),
        });
        for (i, (g, &eps)) in t.config.gains(k).iter().zip(t.config.eps()).enumerate() {
            if g.m > 0.0 {
                let mut r = tanh_bound_check(g.m, eps, TANH_POINTS, TANH_SLACK)?.report;
                r.check = format!("tanh_bound_channel{}", i + 1);
                audits.push(r);
            }
        }
    }
    Ok(audits)
}

fn gains_json(sc: &Scenario) -> serde_json::Value {
    match &sc.setup {
        LoopSetup::Regulation(r) => json!(r.config.stages()),
        LoopSetup::Tracking(t) => json!(t.config.params().stages),
    }
}

/// Runs a scenario end to end. Infeasible parameters are refused unless
/// forced; divergence is reported, not raised.
pub fn run_scenario(sc: &Scenario, flags: &RunFlags) -> Result<RunOutcome> {
    let opts = effective_options(sc, flags);
    let feasibility = sc.feasibility();
    if !feasibility.pass() && !opts.force {
        bail!(
            "scenario {}: controller parameters fail the feasibility conditions; rerun with --force",
            sc.name()
        );
    }
    let started = Instant::now();
    let trace = simulate(&sc.plant, &sc.controller(), &opts)?;
    let runtime = started.elapsed().as_secs_f64();
    let rows: Vec<TraceRow> = trace.rows.iter().map(round_row).collect();
    let stats = stats_of(sc, &rows, &trace.radii);
    let audits = run_audits(sc, &trace, &rows)?;

    let mut warnings = sc.warnings.clone();
    if opts.hold == ControlHold::SampleAndHold {
        warnings.push(format!(
            "control is sample-and-hold on the {:e} s grid; containment is checked on that discrete loop",
            opts.step
        ));
    }
    let complete = trace.is_complete();
    let pass = complete && audits.iter().all(|a| a.pass) && (feasibility.pass() || opts.force);
    let mut report = RunReport {
        version: REPORT_VERSION,
        scenario: sc.name().to_string(),
        kind: match sc.setup {
            LoopSetup::Regulation(_) => "regulation".into(),
            LoopSetup::Tracking(_) => "tracking".into(),
        },
        order: trace.order,
        step: opts.step,
        t_end: opts.t_end,
        record_stride: opts.record_stride,
        control_update: match opts.hold {
            ControlHold::SampleAndHold => "sample_and_hold".into(),
            ControlHold::Continuous => "continuous".into(),
        },
        forced: opts.force,
        runtime_seconds: runtime,
        complete,
        divergence_time: trace.divergence.as_ref().map(|d| d.time),
        divergence_message: trace.divergence.as_ref().map(|d| d.message.clone()),
        radii: trace.radii.clone(),
        mismatch: match &sc.setup {
            LoopSetup::Regulation(r) => Some(r.config.mismatch().to_vec()),
            LoopSetup::Tracking(_) => None,
        },
        gains: gains_json(sc),
        feasibility: serde_json::to_value(&feasibility)?,
        feasible: feasibility.pass(),
        stats,
        every_step_max_error: trace.every_step_max_error.clone(),
        audits,
        warnings,
        artifacts: vec![],
        pass,
    };

    let dir = if flags.dry {
        None
    } else {
        let dir = crate::scenario::output_root(flags.out_root.as_deref()).join(sc.output_dir_name());
        fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
        write_artifacts(sc, &trace, &rows, &mut report, &dir)?;
        Some(dir)
    };
    Ok(RunOutcome {
        report,
        dir,
        trace,
        rows,
    })
}

fn write_artifacts(sc: &Scenario, trace: &SimTrace, rows: &[TraceRow], report: &mut RunReport, dir: &Path) -> Result<()> {
    let formats = &sc.file.output.formats;
    if formats.contains(&Format::Csv) {
        let path = dir.join("trace.csv");
        let f = fs::File::create(&path).with_context(|| format!("creating {}", path.display()))?;
        write_trace(BufWriter::new(f), trace.order, &trace.rows)?;
        report.artifacts.push("trace.csv".into());
    }
    if formats.contains(&Format::Svg) {
        let reference = match &sc.setup {
            LoopSetup::Tracking(t) => Some(t.config.reference().clone()),
            LoopSetup::Regulation(_) => None,
        };
        let yd = reference.map(|r| move |t: f64| r.value(t).unwrap_or(f64::NAN));
        let quantized = matches!(sc.setup, LoopSetup::Regulation(_));
        let files = write_figures(
            dir,
            rows,
            &trace.radii,
            |r| sc.output(r.t, r.x[0]),
            yd.as_ref().map(|f| f as &dyn Fn(f64) -> f64),
            quantized,
        )?;
        for f in files {
            report.artifacts.push(f.file_name().unwrap().to_string_lossy().into_owned());
        }
    }
    if formats.contains(&Format::Json) {
        report.artifacts.push("report.json".into());
        let path = dir.join("report.json");
        fs::write(&path, serde_json::to_string_pretty(report)?).with_context(|| format!("writing {}", path.display()))?;
    }
    Ok(())
}
