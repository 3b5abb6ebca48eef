//! `audit`, `synth` and `list`.

use anyhow::{bail, ensure, Result};
use bfppc::audit::{
    audit_majorization, audit_regulation_bounds, audit_tracking_bounds, check_w_function, singularity_demo,
    tanh_bound_check, verify_envelope, AuditReport, Grid, DEFAULT_GRID_BUDGET,
};
use bfppc::regulator::RegulationBoundArgs;
use bfppc::tracker::{TrackingBoundArgs, TrackingContext, TANH_SLACK};
use clap::ValueEnum;
use serde_json::{json, Value};

use crate::run::{run_scenario, RunFlags};
use crate::scenario::{bundled, parse_scenario, LoopSetup, Scenario, EXAMPLE1_JSON};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum AuditCheck {
    /// W-function property of the stage bounds.
    W,
    /// Constant stage bounds against the bound functions.
    Majorize,
    /// `M|e| - M e tanh(M e / eps) <= 0.3 eps` on a dense grid.
    Tanh,
    /// Trajectory stays inside the prescribed envelope.
    Envelope,
    /// Barrier law singular at a quantized state where this one is finite.
    PpcDemo,
}

#[derive(Debug, Clone)]
pub struct AuditOptions {
    pub stage: Option<usize>,
    /// Replaces the scenario's constant bound for `--check majorize`.
    pub h: Option<f64>,
    pub m: f64,
    pub eps: f64,
    pub points: usize,
    pub rho: Option<f64>,
    pub run: RunFlags,
}

impl Default for AuditOptions {
    fn default() -> Self {
        Self {
            stage: None,
            h: None,
            m: 1.0,
            eps: 0.5,
            points: 100_000,
            rho: None,
            run: RunFlags {
                dry: true,
                ..Default::default()
            },
        }
    }
}

#[derive(Debug, Clone)]
pub struct AuditOutcome {
    pub reports: Vec<AuditReport>,
    /// Check-specific detail printed alongside the reports.
    pub detail: Value,
}

impl AuditOutcome {
    pub fn pass(&self) -> bool {
        !self.reports.is_empty() && self.reports.iter().all(|r| r.pass)
    }

    pub fn to_json(&self) -> Value {
        json!({ "pass": self.pass(), "reports": self.reports, "detail": self.detail })
    }
}

fn stages(order: usize, pick: Option<usize>) -> Result<Vec<usize>> {
    match pick {
        Some(i) => {
            ensure!((1..=order).contains(&i), "stage {i} outside 1..={order}");
            Ok(vec![i])
        }
        None => Ok((1..=order).collect()),
    }
}

/// The two illustrative W-functions `z1^2 + z1 + z1 z2` and `z2 z1^2 + e^z2`.
fn illustrative_w_examples() -> Result<Vec<AuditReport>> {
    let grid = Grid::uniform(&[(0.0, 3.0), (0.0, 3.0)], 41);
    let mut a = check_w_function(|z| Ok(z[0] * z[0] + z[0] + z[0] * z[1]), &grid)?;
    a.check = "w_function_z1^2+z1+z1*z2".into();
    let mut b = check_w_function(|z| Ok(z[1] * z[0] * z[0] + z[1].exp()), &grid)?;
    b.check = "w_function_z2*z1^2+exp(z2)".into();
    Ok(vec![a, b])
}

fn audit_w(sc: &Scenario) -> Result<Vec<AuditReport>> {
    match &sc.setup {
        LoopSetup::Regulation(r) => match &r.bounds {
            Some(b) => Ok(audit_regulation_bounds(b, &r.config, r.delta0)?),
            None => bail!("scenario {} has no stage bound functions to audit", sc.name()),
        },
        LoopSetup::Tracking(t) => Ok(audit_tracking_bounds(&t.bounds, &t.config, &t.worst, sc.plant.gain_floor())?),
    }
}

fn audit_majorize(sc: &Scenario, opts: &AuditOptions) -> Result<(Vec<AuditReport>, Value)> {
    let mut reports = vec![];
    let mut targets = vec![];
    match &sc.setup {
        LoopSetup::Regulation(r) => {
            let Some(bounds) = &r.bounds else {
                bail!("scenario {} has no stage bound functions to audit", sc.name());
            };
            let cfg = &r.config;
            let n = cfg.order();
            let pb = cfg.performance().bounds();
            for i in stages(n, opts.stage)? {
                let h = opts.h.unwrap_or(cfg.stages()[i - 1].h);
                let upper = RegulationBoundArgs::worst_case(
                    pb.rho_max,
                    pb.rho_dot_max,
                    &cfg.radii()[..i],
                    &cfg.params().q_x0,
                    r.delta0,
                )
                .flatten();
                let grid = Grid::exact(&upper, DEFAULT_GRID_BUDGET);
                let earlier = &cfg.stages()[..i - 1];
                let m = audit_majorization(
                    |_| Ok(h),
                    |z| bounds[i - 1].eval(&RegulationBoundArgs::from_flat(z, i, n), earlier),
                    &grid,
                )?;
                let mut rep = m.report;
                rep.check = format!("majorize_H{i}");
                targets.push(json!({ "stage": i, "H": h, "max_H0": m.max_target }));
                reports.push(rep);
            }
        }
        LoopSetup::Tracking(t) => {
            let cfg = &t.config;
            let n = cfg.order();
            let gains = cfg.gains(cfg.stage_count());
            for i in stages(n, opts.stage)? {
                let f = opts.h.unwrap_or(cfg.f_star()[i - 1]);
                let grid = Grid::exact(&t.worst.args(i, cfg.radii()).flatten(), DEFAULT_GRID_BUDGET);
                let ctx = TrackingContext {
                    earlier: &gains[..i - 1],
                    eps: cfg.eps(),
                    gain_floor: sc.plant.gain_floor(),
                };
                let m = audit_majorization(
                    |_| Ok(f),
                    |z| t.bounds[i - 1].eval(&TrackingBoundArgs::from_flat(z, i, n), &ctx),
                    &grid,
                )?;
                let mut rep = m.report;
                rep.check = format!("majorize_F{i}");
                targets.push(json!({ "channel": i, "F_star": f, "max_F0": m.max_target }));
                reports.push(rep);
            }
        }
    }
    Ok((reports, Value::Array(targets)))
}

fn audit_ppc_demo(sc: Option<&Scenario>, opts: &AuditOptions) -> Result<(Vec<AuditReport>, Value)> {
    let owned;
    let sc = match sc {
        Some(s) => s,
        None => {
            owned = parse_scenario(EXAMPLE1_JSON)?;
            &owned
        }
    };
    let LoopSetup::Regulation(r) = &sc.setup else {
        bail!("ppc-demo needs a regulation scenario");
    };
    let rho = opts.rho.unwrap_or(r.delta0);
    let demo = singularity_demo(&r.config, &r.quantizer, sc.plant.x0(), rho, 1.0, opts.points)?;
    let report = AuditReport {
        check: "ppc_singularity_demo".into(),
        domain: format!("|x1 - rho x1(0)| < rho = {rho}, {} samples", opts.points),
        samples: opts.points,
        worst_residual: demo.e_quantized.map_or(f64::NAN, |e| e.abs() - rho),
        worst_location: demo.x1.into_iter().collect(),
        pass: demo.pass,
        note: Some("residual = |quantized error| - rho; >= 0 means the barrier law is singular there".into()),
    };
    Ok((vec![report], serde_json::to_value(&demo)?))
}

/// Runs one audit. Checks that need a scenario fall back to the bundled
/// examples where that makes sense.
pub fn run_audit(check: AuditCheck, sc: Option<&Scenario>, opts: &AuditOptions) -> Result<AuditOutcome> {
    let (reports, detail) = match check {
        AuditCheck::W => match sc {
            Some(s) => (audit_w(s)?, Value::Null),
            None => (illustrative_w_examples()?, Value::Null),
        },
        AuditCheck::Majorize => match sc {
            Some(s) => audit_majorize(s, opts)?,
            None => bail!("--check majorize needs a scenario"),
        },
        AuditCheck::Tanh => {
            let t = tanh_bound_check(opts.m, opts.eps, opts.points, TANH_SLACK)?;
            let d = json!({ "m": opts.m, "eps": opts.eps, "observed_max": t.observed_max });
            (vec![t.report], d)
        }
        AuditCheck::Envelope => {
            let Some(s) = sc else { bail!("--check envelope needs a scenario") };
            let out = run_scenario(s, &opts.run)?;
            let env = verify_envelope(&out.rows, &out.trace.radii, |r| s.output(r.t, r.x[0]));
            let mut reports = env.channels;
            reports.push(env.output_form);
            let d = json!({ "complete": out.report.complete, "divergence_time": out.report.divergence_time });
            if !out.report.complete {
                reports.push(AuditReport {
                    check: "complete".into(),
                    domain: format!("t in [0, {}]", out.report.t_end),
                    samples: out.rows.len(),
                    worst_residual: out.report.divergence_time.unwrap_or(0.0) - out.report.t_end,
                    worst_location: vec![],
                    pass: false,
                    note: out.report.divergence_message.clone(),
                });
            }
            (reports, d)
        }
        AuditCheck::PpcDemo => audit_ppc_demo(sc, opts)?,
    };
    Ok(AuditOutcome { reports, detail })
}

/// Designed gains and feasibility of a scenario, after forcing `auto`.
pub fn synth(sc: &Scenario) -> Result<Value> {
    let feas = sc.feasibility();
    Ok(match &sc.setup {
        LoopSetup::Regulation(r) => {
            let p = r.config.params();
            json!({
                "scenario": sc.name(),
                "kind": "regulation",
                "synthesized": r.synthesized,
                "stages": r.config.stages(),
                "H_star": p.h_star,
                "radii": r.config.radii(),
                "mismatch": r.config.mismatch(),
                "delta0": r.delta0,
                "stiffness": r.config.stiffness(),
                "feasibility": feas,
                "feasible": feas.pass(),
            })
        }
        LoopSetup::Tracking(t) => json!({
            "scenario": sc.name(),
            "kind": "tracking",
            "synthesized": t.synthesized,
            "stages": t.config.params().stages,
            "thresholds": t.config.params().thresholds,
            "F_star": t.config.f_star(),
            "radii": t.config.radii(),
            "feasibility": feas,
            "feasible": feas.pass(),
        }),
    })
}

/// Sets `controller.auto = true` in scenario text before parsing.
pub fn parse_auto(text: &str) -> Result<Scenario> {
    let mut v: Value = serde_json::from_str(text)?;
    match v.pointer_mut("/controller/auto") {
        Some(a) => *a = Value::Bool(true),
        None => {
            if let Some(c) = v.get_mut("controller").and_then(Value::as_object_mut) {
                c.insert("auto".into(), Value::Bool(true));
            }
        }
    }
    parse_scenario(&v.to_string())
}

/// One line per bundled scenario.
pub fn list() -> Vec<String> {
    bundled()
        .into_iter()
        .map(|(name, text)| match parse_scenario(text) {
            Ok(s) => {
                let kind = match s.setup {
                    LoopSetup::Regulation(_) => "regulation",
                    LoopSetup::Tracking(_) => "tracking",
                };
                format!("{name:<10} {kind:<10} n={} t_end={}", s.plant.order(), s.options.t_end)
            }
            Err(e) => format!("{name:<10} invalid: {e:#}"),
        })
        .collect()
}
