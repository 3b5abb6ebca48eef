//! Fixed-step closed-loop simulation.
//!
//! The control is sample-and-hold: measured (and, for regulation, quantized)
//! once per grid time and held constant across the RK4 stages of the step.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::plant::PlantModel;
use crate::quantizer::Quantizer;
use crate::regulator::{ControlOutput, RegulationControllerConfig};
use crate::tracker::TrackingControllerConfig;

pub const DEFAULT_STEP: f64 = 1e-4;
pub const DEFAULT_DIVERGENCE_THRESHOLD: f64 = 1e9;

/// Classical four-stage Runge-Kutta with reusable stage buffers.
#[derive(Debug, Clone)]
pub struct Rk4 {
    k1: Vec<f64>,
    k2: Vec<f64>,
    k3: Vec<f64>,
    k4: Vec<f64>,
    tmp: Vec<f64>,
}

impl Rk4 {
    pub fn new(n: usize) -> Self {
        Self {
            k1: vec![0.0; n],
            k2: vec![0.0; n],
            k3: vec![0.0; n],
            k4: vec![0.0; n],
            tmp: vec![0.0; n],
        }
    }

    /// Advances `x` from `t` to `t + h` in place.
    pub fn step<F>(&mut self, mut deriv: F, t: f64, h: f64, x: &mut [f64]) -> Result<()>
    where
        F: FnMut(f64, &[f64], &mut [f64]) -> Result<()>,
    {
        if !(h > 0.0 && h.is_finite()) {
            return Err(Error::invalid(format!("step must be positive, got {h}")));
        }
        let n = x.len();
        if self.k1.len() != n {
            *self = Rk4::new(n);
        }
        let half = 0.5 * h;
        deriv(t, x, &mut self.k1)?;
        for i in 0..n {
            self.tmp[i] = x[i] + half * self.k1[i];
        }
        check(&self.tmp, t)?;
        deriv(t + half, &self.tmp, &mut self.k2)?;
        for i in 0..n {
            self.tmp[i] = x[i] + half * self.k2[i];
        }
        check(&self.tmp, t)?;
        deriv(t + half, &self.tmp, &mut self.k3)?;
        for i in 0..n {
            self.tmp[i] = x[i] + h * self.k3[i];
        }
        check(&self.tmp, t)?;
        deriv(t + h, &self.tmp, &mut self.k4)?;
        for i in 0..n {
            x[i] += h / 6.0 * (self.k1[i] + 2.0 * self.k2[i] + 2.0 * self.k3[i] + self.k4[i]);
        }
        check(x, t)
    }
}

fn check(x: &[f64], t: f64) -> Result<()> {
    match x.iter().find(|v| !v.is_finite()) {
        Some(v) => Err(Error::Divergence {
            time: Some(t),
            message: format!("non-finite intermediate state {v}"),
        }),
        None => Ok(()),
    }
}

/// One RK4 step of `dx/dt = deriv(t, x)`.
pub fn rk4_step<F>(deriv: F, x: &[f64], t: f64, h: f64) -> Result<Vec<f64>>
where
    F: FnMut(f64, &[f64], &mut [f64]) -> Result<()>,
{
    let mut out = x.to_vec();
    Rk4::new(x.len()).step(deriv, t, h, &mut out)?;
    Ok(out)
}

/// The controller side of a closed loop.
#[derive(Debug, Clone)]
pub enum Controller {
    /// Quantized-state regulation; the quantizer is cloned per run so that
    /// hysteresis memory is never shared.
    Regulation {
        config: RegulationControllerConfig,
        quantizer: Quantizer,
    },
    Tracking { config: TrackingControllerConfig },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum LoopKind {
    Regulation,
    Tracking,
}

impl Controller {
    pub fn kind(&self) -> LoopKind {
        match self {
            Controller::Regulation { .. } => LoopKind::Regulation,
            Controller::Tracking { .. } => LoopKind::Tracking,
        }
    }

    pub fn order(&self) -> usize {
        match self {
            Controller::Regulation { config, .. } => config.order(),
            Controller::Tracking { config } => config.order(),
        }
    }

    /// Guaranteed error radii: `p_i` or the final-stage `p_{i,K}`.
    pub fn radii(&self) -> Vec<f64> {
        match self {
            Controller::Regulation { config, .. } => config.radii().to_vec(),
            Controller::Tracking { config } => config.radii().to_vec(),
        }
    }

    pub fn is_feasible(&self) -> bool {
        match self {
            Controller::Regulation { config, .. } => config.feasibility().pass,
            Controller::Tracking { config } => config.feasibility().pass,
        }
    }
}

/// Step keeping `step * stiffness <= STIFF_STEP_PRODUCT`, capped at `max_step`.
pub fn stiffness_step(stiffness: f64, max_step: f64) -> f64 {
    if stiffness > 0.0 {
        (STIFF_STEP_PRODUCT / stiffness).min(max_step)
    } else {
        max_step
    }
}

pub const STIFF_STEP_PRODUCT: f64 = 0.25;

/// How the control enters the integrator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ControlHold {
    /// Computed at each grid instant and held over the step.
    #[default]
    SampleAndHold,
    /// Re-evaluated at every RK4 stage with the step's switch index.
    /// Only for the unquantized tracking loop, whose law is smooth.
    Continuous,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SimOptions {
    pub step: f64,
    pub hold: ControlHold,
    pub t_end: f64,
    /// Run even when the feasibility conditions fail.
    pub force: bool,
    /// Record every `record_stride`-th grid point (the final one always).
    pub record_stride: usize,
    pub divergence_threshold: f64,
}

impl Default for SimOptions {
    fn default() -> Self {
        Self {
            step: DEFAULT_STEP,
            hold: ControlHold::SampleAndHold,
            t_end: 10.0,
            force: false,
            record_stride: 1,
            divergence_threshold: DEFAULT_DIVERGENCE_THRESHOLD,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraceRow {
    pub t: f64,
    pub x: Vec<f64>,
    pub qx: Vec<f64>,
    pub e: Vec<f64>,
    pub eq: Vec<f64>,
    pub alpha: Vec<f64>,
    pub u: f64,
    pub sigma: usize,
    pub rho: f64,
    pub env_lo: f64,
    pub env_hi: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TraceEvent {
    LevelChange {
        t: f64,
        channel: usize,
        from: f64,
        to: f64,
    },
    Switch {
        t: f64,
        from: usize,
        to: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DivergenceMarker {
    pub time: f64,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimTrace {
    pub kind: LoopKind,
    pub order: usize,
    pub step: f64,
    pub record_stride: usize,
    pub radii: Vec<f64>,
    pub rows: Vec<TraceRow>,
    pub events: Vec<TraceEvent>,
    /// Set when the run stopped early; rows up to that time are kept.
    pub divergence: Option<DivergenceMarker>,
    /// Per-channel max `|e_i|` over every integration step, recorded or not.
    pub every_step_max_error: Vec<f64>,
}

impl SimTrace {
    pub fn is_complete(&self) -> bool {
        self.divergence.is_none()
    }
}

/// Runs the closed loop from the plant's initial state.
pub fn simulate(plant: &PlantModel, controller: &Controller, opts: &SimOptions) -> Result<SimTrace> {
    if !(opts.step > 0.0 && opts.step.is_finite()) {
        return Err(Error::invalid(format!("step must be positive, got {}", opts.step)));
    }
    if !(opts.t_end > 0.0 && opts.t_end.is_finite()) {
        return Err(Error::invalid(format!("t_end must be positive, got {}", opts.t_end)));
    }
    let n = plant.order();
    if controller.order() != n {
        return Err(Error::invalid(format!(
            "controller order {} does not match plant order {n}",
            controller.order()
        )));
    }
    if !opts.force && !controller.is_feasible() {
        return Err(Error::Infeasible(
            "feasibility conditions fail; rerun with force to simulate anyway".into(),
        ));
    }
    if opts.hold == ControlHold::Continuous && controller.kind() == LoopKind::Regulation {
        return Err(Error::invalid(
            "continuous control evaluation is only defined for the unquantized tracking loop",
        ));
    }
    let stride = opts.record_stride.max(1);
    let steps = (opts.t_end / opts.step).round() as usize;
    let mut trace = SimTrace {
        kind: controller.kind(),
        order: n,
        step: opts.step,
        record_stride: stride,
        radii: controller.radii(),
        rows: Vec::with_capacity(steps / stride + 2),
        events: Vec::new(),
        divergence: None,
        every_step_max_error: vec![0.0; n],
    };

    let mut x = plant.x0().to_vec();
    let mut rk = Rk4::new(n);
    let mut qx = vec![0.0; n];
    let mut prev_qx: Option<Vec<f64>> = None;
    let mut ctrl = ControlOutput::with_order(n);
    let mut diag = ControlOutput::with_order(n);
    let mut stage_ctrl = ControlOutput::with_order(n);
    let mut quantizer = match controller {
        Controller::Regulation { quantizer, .. } => Some(quantizer.clone()),
        Controller::Tracking { .. } => None,
    };
    let mut schedule = match controller {
        Controller::Tracking { config } => Some(config.schedule()),
        Controller::Regulation { .. } => None,
    };

    for k in 0..=steps {
        let t = k as f64 * opts.step;
        let sigma;
        let (rho, env_lo, env_hi);
        match controller {
            Controller::Regulation { config, .. } => {
                let q = quantizer.as_mut().expect("regulation loop owns a quantizer");
                if let Err(err) = q.quantize_into(&x, &mut qx) {
                    trace.divergence = Some(DivergenceMarker {
                        time: t,
                        message: err.to_string(),
                    });
                    break;
                }
                rho = config.performance().rho(t)?;
                config.evaluate_into(&qx, &config.params().q_x0, rho, &mut ctrl)?;
                config.evaluate_into(&x, plant.x0(), rho, &mut diag)?;
                (env_lo, env_hi) = config.output_envelope(plant.x0()[0], t)?;
                sigma = 1;
            }
            Controller::Tracking { config } => {
                let sched = schedule.as_mut().expect("tracking loop owns a schedule");
                let before = sched.sigma();
                config.control_into(before, &x, t, &mut ctrl)?;
                if sched.switch_update(&ctrl.errors) {
                    trace.events.push(TraceEvent::Switch {
                        t,
                        from: before,
                        to: sched.sigma(),
                    });
                    config.control_into(sched.sigma(), &x, t, &mut ctrl)?;
                }
                sigma = sched.sigma();
                qx.copy_from_slice(&x);
                diag.clone_from(&ctrl);
                rho = config.performance(0).rho(t)?;
                (env_lo, env_hi) = config.output_envelope(t)?;
            }
        }

        if let Some(prev) = &prev_qx {
            for (i, (&a, &b)) in prev.iter().zip(&qx).enumerate() {
                if a != b && trace.kind == LoopKind::Regulation {
                    trace.events.push(TraceEvent::LevelChange {
                        t,
                        channel: i + 1,
                        from: a,
                        to: b,
                    });
                }
            }
        }
        match &mut prev_qx {
            Some(p) => p.copy_from_slice(&qx),
            None => prev_qx = Some(qx.clone()),
        }
        for (m, e) in trace.every_step_max_error.iter_mut().zip(&diag.errors) {
            *m = m.max(e.abs());
        }

        if k % stride == 0 || k == steps {
            trace.rows.push(TraceRow {
                t,
                x: x.clone(),
                qx: qx.clone(),
                e: diag.errors.clone(),
                eq: ctrl.errors.clone(),
                alpha: ctrl.alpha.clone(),
                u: ctrl.u,
                sigma,
                rho,
                env_lo,
                env_hi,
            });
        }
        if k == steps {
            break;
        }

        let step = match (controller, opts.hold) {
            (Controller::Tracking { config }, ControlHold::Continuous) => {
                let stage = sigma;
                let inner = &mut stage_ctrl;
                rk.step(
                    |tt, xx, out| {
                        config.control_into(stage, xx, tt, inner)?;
                        plant.eval_derivative_into(xx, inner.u, tt, out)
                    },
                    t,
                    opts.step,
                    &mut x,
                )
            }
            _ => {
                let u = ctrl.u;
                rk.step(|tt, xx, out| plant.eval_derivative_into(xx, u, tt, out), t, opts.step, &mut x)
            }
        };
        let blown = x.iter().any(|v| v.abs() > opts.divergence_threshold);
        match step {
            Err(Error::Divergence { time, message }) => {
                trace.divergence = Some(DivergenceMarker {
                    time: time.unwrap_or(t),
                    message,
                });
                break;
            }
            Err(e) => return Err(e),
            Ok(()) if blown => {
                trace.divergence = Some(DivergenceMarker {
                    time: t + opts.step,
                    message: format!("state left the box |x| <= {:e}", opts.divergence_threshold),
                });
                break;
            }
            Ok(()) => {}
        }
    }
    Ok(trace)
}

// ---------------------------------------------------------------------------
// statistics

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelStats {
    pub channel: usize,
    pub max_abs_e: f64,
    pub max_abs_eq: f64,
    pub radius: f64,
    pub violations: usize,
    pub first_violation_time: Option<f64>,
    pub level_switches: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceStats {
    pub samples: usize,
    pub t_last: f64,
    pub channels: Vec<ChannelStats>,
    pub sigma_switches: usize,
    pub sigma_max: usize,
    pub sigma_monotone: bool,
    pub max_abs_u: f64,
    /// Samples where the output left `[env_lo, env_hi]`.
    pub envelope_violations: usize,
}

/// Summary over the recorded rows only, so that a trace reloaded from its
/// CSV export reproduces it exactly.
pub fn trace_stats(rows: &[TraceRow], radii: &[f64], output_offset: impl Fn(&TraceRow) -> f64) -> TraceStats {
    let n = radii.len();
    let mut channels: Vec<ChannelStats> = (0..n)
        .map(|i| ChannelStats {
            channel: i + 1,
            max_abs_e: 0.0,
            max_abs_eq: 0.0,
            radius: radii[i],
            violations: 0,
            first_violation_time: None,
            level_switches: 0,
        })
        .collect();
    let mut sigma_switches = 0;
    let mut sigma_max = 0;
    let mut sigma_monotone = true;
    let mut max_abs_u: f64 = 0.0;
    let mut envelope_violations = 0;
    for (k, r) in rows.iter().enumerate() {
        for (i, c) in channels.iter_mut().enumerate() {
            let e = r.e[i].abs();
            c.max_abs_e = c.max_abs_e.max(e);
            c.max_abs_eq = c.max_abs_eq.max(r.eq[i].abs());
            if e > c.radius {
                c.violations += 1;
                c.first_violation_time.get_or_insert(r.t);
            }
            if k > 0 && rows[k - 1].qx[i] != r.qx[i] {
                c.level_switches += 1;
            }
        }
        if k > 0 {
            let prev = rows[k - 1].sigma;
            if r.sigma != prev {
                sigma_switches += 1;
            }
            if r.sigma < prev {
                sigma_monotone = false;
            }
        }
        sigma_max = sigma_max.max(r.sigma);
        max_abs_u = max_abs_u.max(r.u.abs());
        let y = output_offset(r);
        if !(r.env_lo <= y && y <= r.env_hi) {
            envelope_violations += 1;
        }
    }
    TraceStats {
        samples: rows.len(),
        t_last: rows.last().map_or(0.0, |r| r.t),
        channels,
        sigma_switches,
        sigma_max,
        sigma_monotone,
        max_abs_u,
        envelope_violations,
    }
}
