//! Output tracking for strict-feedback plants with a switched gain schedule.
//!
//! ```text
//! e_1 = x_1 - y_d(t) - rho_1(t) (x_1(0) - y_d(0))
//! e_i = x_i - alpha_{i-1} - rho_i(t) x_i(0)
//! alpha_i = -k_i e_i - M_i tanh(M_i e_i / eps_i) - c_i e_i^N_i,   u = alpha_n
//! ```
//!
//! No derivative of a virtual control is ever evaluated by the controller;
//! derivatives only appear inside the offline bound constants `F_i*`.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::plant::expr::Expression;
use crate::plant::{ChannelFn, PlantModel};
use crate::regulator::{ControlOutput, SYNTHESIS_MARGIN};
use crate::signals::{PerformanceFunction, ReferenceBounds, ReferenceSignal};

/// Constant in the tanh inequality `M|e| - M e tanh(M e / eps) <= 0.3 eps`.
pub const TANH_SLACK: f64 = 0.3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChannelGains {
    pub k: f64,
    #[serde(rename = "M")]
    pub m: f64,
    pub c: f64,
    #[serde(rename = "N")]
    pub power: u32,
}

impl ChannelGains {
    pub fn law(&self, e: f64, eps: f64) -> f64 {
        -self.k * e - self.m * (self.m * e / eps).tanh() - self.c * e.powi(self.power as i32)
    }

    /// Upper bound of `|law(e)|` over `|e| <= e_abs`.
    pub fn law_bound(&self, e_abs: f64, eps: f64) -> f64 {
        self.k * e_abs + self.m * (self.m * e_abs / eps).tanh() + self.c * e_abs.powi(self.power as i32)
    }

    /// Upper bound of `|law'(e)|` over `|e| <= e_abs`.
    pub fn slope_bound(&self, e_abs: f64, eps: f64) -> f64 {
        self.k
            + self.m * self.m / eps
            + self.power as f64 * self.c * e_abs.powi(self.power as i32 - 1)
    }

    /// Left side `k p + M + c p^N` of the invariance condition.
    pub fn capacity(&self, radius: f64) -> f64 {
        self.k * radius + self.m + self.c * radius.powi(self.power as i32)
    }
}

/// Residual `k p + M + c p^N - F* - 0.3 eps / p`.
pub fn tracking_residual(g: &ChannelGains, radius: f64, eps: f64, f_star: f64) -> f64 {
    g.capacity(radius) - f_star - TANH_SLACK * eps / radius
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrackingParams {
    /// `stages[m][i]`: gains of channel `i` in schedule stage `m` (0-based).
    pub stages: Vec<Vec<ChannelGains>>,
    /// `thresholds[m][i]` = `p_{i, m+1}`.
    pub thresholds: Vec<Vec<f64>>,
    pub eps: Vec<f64>,
    /// Bound constants of the final stage.
    pub f_star: Vec<f64>,
    pub performance: Vec<PerformanceFunction>,
    pub reference: ReferenceSignal,
    pub x0: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrackingControllerConfig {
    params: TrackingParams,
}

impl TrackingControllerConfig {
    pub fn new(params: TrackingParams) -> Result<Self> {
        let n = params.x0.len();
        let k = params.stages.len();
        if n == 0 {
            return Err(Error::invalid("controller order must be at least 1"));
        }
        if k == 0 || params.thresholds.len() != k {
            return Err(Error::invalid(format!(
                "schedule has {} gain stages and {} threshold stages",
                k,
                params.thresholds.len()
            )));
        }
        for (name, len) in [
            ("eps", params.eps.len()),
            ("F_star", params.f_star.len()),
            ("performance", params.performance.len()),
        ] {
            if len != n {
                return Err(Error::invalid(format!("{name} has {len} entries, expected {n}")));
            }
        }
        for (m, (gains, radii)) in params.stages.iter().zip(&params.thresholds).enumerate() {
            if gains.len() != n || radii.len() != n {
                return Err(Error::invalid(format!("stage {} does not cover {n} channels", m + 1)));
            }
            for (i, g) in gains.iter().enumerate() {
                if g.power < 3 || g.power % 2 == 0 {
                    return Err(Error::invalid(format!(
                        "stage {}, channel {}: N must be odd and at least 3, got {}",
                        m + 1,
                        i + 1,
                        g.power
                    )));
                }
                if ![g.k, g.m, g.c].iter().all(|v| v.is_finite() && *v >= 0.0) {
                    return Err(Error::invalid(format!(
                        "stage {}, channel {}: k, M and c must be finite and nonnegative",
                        m + 1,
                        i + 1
                    )));
                }
            }
            if radii.iter().any(|&p| !(p > 0.0 && p.is_finite())) {
                return Err(Error::invalid("thresholds must be positive"));
            }
        }
        for i in 0..n {
            for m in 1..k {
                if params.thresholds[m][i] <= params.thresholds[m - 1][i] {
                    return Err(Error::invalid(format!(
                        "thresholds of channel {} must increase with the stage index",
                        i + 1
                    )));
                }
            }
        }
        if params.eps.iter().any(|&e| !(e > 0.0 && e.is_finite())) {
            return Err(Error::invalid("eps entries must be positive"));
        }
        if params.f_star.iter().any(|&f| !(f >= 0.0)) {
            return Err(Error::invalid("F_star entries must be nonnegative"));
        }
        if params.x0.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("initial state must be finite"));
        }
        Ok(Self { params })
    }

    pub fn order(&self) -> usize {
        self.params.x0.len()
    }

    /// Number of schedule stages `K`.
    pub fn stage_count(&self) -> usize {
        self.params.stages.len()
    }

    pub fn params(&self) -> &TrackingParams {
        &self.params
    }

    /// Gains in force at switch index `sigma` (1-based).
    pub fn gains(&self, sigma: usize) -> &[ChannelGains] {
        &self.params.stages[sigma.clamp(1, self.stage_count()) - 1]
    }

    pub fn thresholds(&self, sigma: usize) -> &[f64] {
        &self.params.thresholds[sigma.clamp(1, self.stage_count()) - 1]
    }

    /// Final-stage radii `p_{i,K}`, the guaranteed envelope.
    pub fn radii(&self) -> &[f64] {
        self.thresholds(self.stage_count())
    }

    pub fn eps(&self) -> &[f64] {
        &self.params.eps
    }

    pub fn f_star(&self) -> &[f64] {
        &self.params.f_star
    }

    pub fn reference(&self) -> &ReferenceSignal {
        &self.params.reference
    }

    pub fn performance(&self, channel: usize) -> &PerformanceFunction {
        &self.params.performance[channel]
    }

    pub fn x0(&self) -> &[f64] {
        &self.params.x0
    }

    /// Signed initial tracking error `x_1(0) - y_d(0)`.
    pub fn initial_offset(&self) -> Result<f64> {
        Ok(self.params.x0[0] - self.params.reference.value(0.0)?)
    }

    pub fn schedule(&self) -> SwitchSchedule {
        SwitchSchedule::new(self.params.thresholds.clone())
    }

    /// Final-stage control.
    pub fn tracking_control(&self, x: &[f64], t: f64) -> Result<ControlOutput> {
        let mut out = ControlOutput::with_order(self.order());
        self.control_into(self.stage_count(), x, t, &mut out)?;
        Ok(out)
    }

    pub fn control_into(&self, sigma: usize, x: &[f64], t: f64, out: &mut ControlOutput) -> Result<()> {
        let n = self.order();
        if x.len() != n {
            return Err(Error::invalid(format!(
                "state has {} components, controller order is {n}",
                x.len()
            )));
        }
        if let Some(&bad) = x.iter().find(|v| !v.is_finite()) {
            return Err(Error::Domain {
                what: "tracking_control",
                value: bad,
            });
        }
        let gains = self.gains(sigma);
        let p = &self.params;
        let mut prev = p.reference.value(t)? + p.performance[0].rho(t)? * self.initial_offset()?;
        for i in 0..n {
            let e = if i == 0 {
                x[0] - prev
            } else {
                x[i] - prev - p.performance[i].rho(t)? * p.x0[i]
            };
            let a = gains[i].law(e, p.eps[i]);
            out.errors[i] = e;
            if i + 1 < n {
                out.alpha[i] = a;
            } else {
                out.u = a;
            }
            prev = a;
        }
        Ok(())
    }

    /// Bounds on `x_1 - y_d`: `rho_1*(t) -/+ p_{1,K}`.
    pub fn output_envelope(&self, t: f64) -> Result<(f64, f64)> {
        let centre = self.params.performance[0].rho(t)? * self.initial_offset()?;
        let half = self.radii()[0];
        Ok((centre - half, centre + half))
    }

    pub fn feasibility(&self) -> TrackingFeasibilityReport {
        let kk = self.stage_count();
        let gains = self.gains(kk);
        let radii = self.radii();
        let channels: Vec<_> = (0..self.order())
            .map(|i| {
                let residual =
                    tracking_residual(&gains[i], radii[i], self.params.eps[i], self.params.f_star[i]);
                TrackingCheck {
                    channel: i + 1,
                    capacity: gains[i].capacity(radii[i]),
                    demand: self.params.f_star[i] + TANH_SLACK * self.params.eps[i] / radii[i],
                    residual,
                    satisfied: residual >= 0.0,
                }
            })
            .collect();
        let pass = channels.iter().all(|c| c.satisfied);
        TrackingFeasibilityReport { channels, pass }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrackingCheck {
    pub channel: usize,
    pub capacity: f64,
    pub demand: f64,
    pub residual: f64,
    pub satisfied: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrackingFeasibilityReport {
    pub channels: Vec<TrackingCheck>,
    pub pass: bool,
}

/// Mutable switch index for one run.
#[derive(Debug, Clone, PartialEq)]
pub struct SwitchSchedule {
    thresholds: Vec<Vec<f64>>,
    sigma: usize,
}

impl SwitchSchedule {
    pub fn new(thresholds: Vec<Vec<f64>>) -> Self {
        Self {
            thresholds,
            sigma: 1,
        }
    }

    pub fn with_sigma(mut self, sigma: usize) -> Self {
        self.sigma = sigma.clamp(1, self.stage_count());
        self
    }

    pub fn sigma(&self) -> usize {
        self.sigma
    }

    pub fn stage_count(&self) -> usize {
        self.thresholds.len()
    }

    /// Advances `sigma` by one when any `|e_i|` exceeds its current
    /// threshold. Never decrements and saturates at `K`. Returns whether a
    /// switch happened.
    pub fn switch_update(&mut self, e: &[f64]) -> bool {
        if self.sigma >= self.stage_count() {
            return false;
        }
        let p = &self.thresholds[self.sigma - 1];
        if e.iter().zip(p).any(|(ei, pi)| ei.abs() > *pi) {
            self.sigma += 1;
            true
        } else {
            false
        }
    }
}

// ---------------------------------------------------------------------------
// bound functions

/// Arguments of `F_i^0`, in positional order:
/// `rho_1..rho_i, |rho_dot_1|..|rho_dot_i|, |e_1|..|e_{i+1}|, |y_d|, |y_d'|,
/// a0, |x_2(0)|..|x_{i+1}(0)|`, where the error and initial-state lists stop
/// at index `n`.
#[derive(Debug, Clone, PartialEq)]
pub struct TrackingBoundArgs {
    pub rho: Vec<f64>,
    pub rho_dot: Vec<f64>,
    pub errors: Vec<f64>,
    pub y: f64,
    pub y_dot: f64,
    pub a0: f64,
    pub x0_tail: Vec<f64>,
}

impl TrackingBoundArgs {
    pub fn channel(&self) -> usize {
        self.rho.len()
    }

    pub fn arity(channel: usize, order: usize) -> usize {
        let ne = (channel + 1).min(order);
        2 * channel + ne + 3 + (ne - 1)
    }

    pub fn flatten(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(Self::arity(self.channel(), self.errors.len()));
        v.extend_from_slice(&self.rho);
        v.extend_from_slice(&self.rho_dot);
        v.extend_from_slice(&self.errors);
        v.extend([self.y, self.y_dot, self.a0]);
        v.extend_from_slice(&self.x0_tail);
        v
    }

    pub fn from_flat(flat: &[f64], channel: usize, order: usize) -> Self {
        debug_assert_eq!(flat.len(), Self::arity(channel, order));
        let ne = (channel + 1).min(order);
        let mut at = 0;
        let mut take = |len: usize| {
            let s = flat[at..at + len].to_vec();
            at += len;
            s
        };
        let rho = take(channel);
        let rho_dot = take(channel);
        let errors = take(ne);
        let tail3 = take(3);
        let x0_tail = take(ne - 1);
        Self {
            rho,
            rho_dot,
            errors,
            y: tail3[0],
            y_dot: tail3[1],
            a0: tail3[2],
            x0_tail,
        }
    }

    pub fn zeros(channel: usize, order: usize) -> Self {
        Self::from_flat(&vec![0.0; Self::arity(channel, order)], channel, order)
    }
}

/// Everything a bound evaluator may need besides its arguments.
#[derive(Debug, Clone, Copy)]
pub struct TrackingContext<'a> {
    /// Final-stage gains of channels `1..i-1`.
    pub earlier: &'a [ChannelGains],
    pub eps: &'a [f64],
    pub gain_floor: f64,
}

pub trait TrackingBound: Send + Sync + fmt::Debug {
    fn eval(&self, args: &TrackingBoundArgs, ctx: &TrackingContext<'_>) -> Result<f64>;
}

/// Generic bound from state majorants that are nondecreasing in `|x_j|`.
///
/// With `X_1 = |e_1| + |y_d| + rho_1 a0` and
/// `X_j = |e_j| + |alpha_{j-1}| + rho_j |x_j(0)|`, the derivative bounds
/// `|e_j'| <= D_j` and `|alpha_j'| <= A_j = slope_j D_j` give
///
/// ```text
/// F_i^0 = (f_i*(X) + g_i*(X)(|e_{i+1}| + |x_{i+1}(0)|) + A_{i-1}
///          + |rho_dot_i| |x_i(0)|) / g_m
/// ```
///
/// where `A_0 = |y_d'|` and `|x_1(0)|` stands for `a0`.
#[derive(Debug, Clone)]
pub struct StandardTrackingBound {
    pub channel: usize,
    pub f_star: Vec<ChannelFn>,
    pub g_star: Vec<ChannelFn>,
    pub order: usize,
}

impl StandardTrackingBound {
    fn majorants(&self, j: usize, xs: &[f64]) -> Result<(f64, f64)> {
        Ok((
            self.f_star[j].eval(&xs[..=j], 0.0, self.order)?,
            self.g_star[j].eval(&xs[..=j], 0.0, self.order)?,
        ))
    }
}

impl TrackingBound for StandardTrackingBound {
    fn eval(&self, a: &TrackingBoundArgs, ctx: &TrackingContext<'_>) -> Result<f64> {
        let i = a.channel();
        let n = self.order;
        let x0 = |j: usize| if j == 0 { a.a0 } else { a.x0_tail[j - 1] };
        // X_1..X_i
        let mut xs = Vec::with_capacity(i);
        for j in 0..i {
            let v = if j == 0 {
                a.errors[0] + a.y + a.rho[0] * a.a0
            } else {
                a.errors[j] + ctx.earlier[j - 1].law_bound(a.errors[j - 1], ctx.eps[j - 1]) + a.rho[j] * x0(j)
            };
            xs.push(v);
        }
        // A_{i-1} through the chain of derivative bounds
        let mut a_prev = a.y_dot;
        for j in 0..i - 1 {
            let (f, g) = self.majorants(j, &xs)?;
            let d = f + g * xs[j + 1] + a_prev + a.rho_dot[j] * x0(j);
            a_prev = ctx.earlier[j].slope_bound(a.errors[j], ctx.eps[j]) * d;
        }
        let (f, g) = self.majorants(i - 1, &xs)?;
        let coupling = if i < n { g * (a.errors[i] + x0(i)) } else { 0.0 };
        Ok((f + coupling + a_prev + a.rho_dot[i - 1] * x0(i - 1)) / ctx.gain_floor)
    }
}

/// Bound given as an expression over the positional arguments
/// (`rho1.., rho_dot1.., e1.., yd, yd_dot, a0, x0_2..`) plus `g_m` and the
/// final-stage gains `k{j}, M{j}, c{j}, N{j}, eps{j}` of earlier channels.
#[derive(Debug, Clone)]
pub struct ExprTrackingBound {
    expr: Expression,
    channel: usize,
}

impl ExprTrackingBound {
    pub fn variable_names(channel: usize, order: usize) -> Vec<String> {
        let ne = (channel + 1).min(order);
        let mut v: Vec<String> = (1..=channel).map(|j| format!("rho{j}")).collect();
        v.extend((1..=channel).map(|j| format!("rho_dot{j}")));
        v.extend((1..=ne).map(|j| format!("e{j}")));
        v.extend(["yd".into(), "yd_dot".into(), "a0".into()]);
        v.extend((2..=ne).map(|j| format!("x0_{j}")));
        v.push("g_m".into());
        for j in 1..channel {
            v.extend([
                format!("k{j}"),
                format!("M{j}"),
                format!("c{j}"),
                format!("N{j}"),
                format!("eps{j}"),
            ]);
        }
        v
    }

    pub fn parse(text: &str, channel: usize, order: usize) -> Result<Self> {
        let expr = Expression::parse(text, &Self::variable_names(channel, order))?;
        Ok(Self { expr, channel })
    }
}

impl TrackingBound for ExprTrackingBound {
    fn eval(&self, a: &TrackingBoundArgs, ctx: &TrackingContext<'_>) -> Result<f64> {
        let mut v = a.flatten();
        v.push(ctx.gain_floor);
        for (j, g) in ctx.earlier.iter().take(self.channel - 1).enumerate() {
            v.extend([g.k, g.m, g.c, g.power as f64, ctx.eps[j]]);
        }
        Ok(self.expr.eval(&v)?)
    }
}

/// Constant bound `F_i^0 = F_i*`.
#[derive(Debug, Clone, Copy)]
pub struct ConstTrackingBound(pub f64);

impl TrackingBound for ConstTrackingBound {
    fn eval(&self, _: &TrackingBoundArgs, _: &TrackingContext<'_>) -> Result<f64> {
        Ok(self.0)
    }
}

pub fn standard_tracking_bounds(plant: &PlantModel) -> Result<Vec<Arc<dyn TrackingBound>>> {
    let n = plant.order();
    let mut f_star = Vec::with_capacity(n);
    let mut g_star = Vec::with_capacity(n);
    for (i, ch) in plant.channels().iter().enumerate() {
        f_star.push(
            ch.f_star
                .clone()
                .ok_or_else(|| Error::MissingBound(format!("f_star for channel {}", i + 1)))?,
        );
        g_star.push(
            ch.g_star
                .clone()
                .ok_or_else(|| Error::MissingBound(format!("g_star for channel {}", i + 1)))?,
        );
    }
    Ok((1..=n)
        .map(|channel| {
            Arc::new(StandardTrackingBound {
                channel,
                f_star: f_star.clone(),
                g_star: g_star.clone(),
                order: n,
            }) as Arc<dyn TrackingBound>
        })
        .collect())
}

/// Constants of the worst-case argument list.
#[derive(Debug, Clone, PartialEq)]
pub struct TrackingWorstCase {
    pub rho_max: Vec<f64>,
    /// Common bound on every `|rho_dot_i|`.
    pub rho_dot_max: f64,
    pub reference: ReferenceBounds,
    pub a0: f64,
    pub x0_abs: Vec<f64>,
}

impl TrackingWorstCase {
    pub fn from_signals(
        performance: &[PerformanceFunction],
        reference: ReferenceBounds,
        a0: f64,
        x0: &[f64],
    ) -> Self {
        let b: Vec<_> = performance.iter().map(|p| p.bounds()).collect();
        Self {
            rho_max: b.iter().map(|b| b.rho_max).collect(),
            rho_dot_max: b.iter().map(|b| b.rho_dot_max).fold(0.0, f64::max),
            reference,
            a0: a0.abs(),
            x0_abs: x0.iter().map(|v| v.abs()).collect(),
        }
    }

    pub fn args(&self, channel: usize, radii: &[f64]) -> TrackingBoundArgs {
        let n = radii.len();
        let ne = (channel + 1).min(n);
        TrackingBoundArgs {
            rho: self.rho_max[..channel].to_vec(),
            rho_dot: vec![self.rho_dot_max; channel],
            errors: radii[..ne].to_vec(),
            y: self.reference.y0,
            y_dot: self.reference.y1,
            a0: self.a0,
            x0_tail: self.x0_abs[1..ne].to_vec(),
        }
    }
}

fn eval_f_star(
    bound: &dyn TrackingBound,
    channel: usize,
    worst: &TrackingWorstCase,
    radii: &[f64],
    ctx: &TrackingContext<'_>,
) -> Result<f64> {
    let v = bound.eval(&worst.args(channel, radii), ctx)?;
    if !v.is_finite() {
        return Err(Error::Divergence {
            time: None,
            message: format!("F_{channel}* evaluated to {v}"),
        });
    }
    if v < 0.0 {
        return Err(Error::Synthesis(format!(
            "F_{channel}^0 is negative ({v}) at the worst-case arguments; the bound is malformed"
        )));
    }
    Ok(v)
}

/// Evaluates every `F_i^0` at the worst case with fixed final-stage gains.
pub fn f_star_from_bounds(
    bounds: &[Arc<dyn TrackingBound>],
    worst: &TrackingWorstCase,
    radii: &[f64],
    gains: &[ChannelGains],
    eps: &[f64],
    gain_floor: f64,
) -> Result<Vec<f64>> {
    let n = radii.len();
    if bounds.len() != n {
        return Err(Error::MissingBound(format!(
            "{} bound evaluators for {n} channels",
            bounds.len()
        )));
    }
    (0..n)
        .map(|i| {
            let ctx = TrackingContext {
                earlier: &gains[..i],
                eps,
                gain_floor,
            };
            eval_f_star(bounds[i].as_ref(), i + 1, worst, radii, &ctx)
        })
        .collect()
}

/// Which gain absorbs a shortfall in the invariance condition.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum GainFill {
    K,
    M,
    C,
}

impl std::str::FromStr for GainFill {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "k" => Ok(GainFill::K),
            "M" | "m" => Ok(GainFill::M),
            "c" => Ok(GainFill::C),
            _ => Err(Error::invalid(format!("unknown gain fill {s:?}; expected k, M or c"))),
        }
    }
}

/// Channel by channel: evaluates `F_i*` with the already completed gains of
/// earlier channels, then raises the `fill` gain of channel `i` until
/// `k p + M + c p^N` reaches [`SYNTHESIS_MARGIN`] times the demand. Gains
/// that already satisfy the condition are left alone.
pub fn synthesize_final_stage(
    seed: &[ChannelGains],
    fill: &[GainFill],
    bounds: &[Arc<dyn TrackingBound>],
    worst: &TrackingWorstCase,
    radii: &[f64],
    eps: &[f64],
    gain_floor: f64,
) -> Result<(Vec<ChannelGains>, Vec<f64>)> {
    let n = radii.len();
    if seed.len() != n || fill.len() != n || bounds.len() != n || eps.len() != n {
        return Err(Error::invalid("final-stage synthesis inputs disagree in length"));
    }
    let mut gains: Vec<ChannelGains> = Vec::with_capacity(n);
    let mut f_star = Vec::with_capacity(n);
    for i in 0..n {
        let ctx = TrackingContext {
            earlier: &gains,
            eps,
            gain_floor,
        };
        let f = eval_f_star(bounds[i].as_ref(), i + 1, worst, radii, &ctx)?;
        let p = radii[i];
        let mut g = seed[i];
        let demand = f + TANH_SLACK * eps[i] / p;
        if g.capacity(p) < demand {
            let target = SYNTHESIS_MARGIN * demand;
            let pn = p.powi(g.power as i32);
            match fill[i] {
                GainFill::K => g.k = (target - g.m - g.c * pn) / p,
                GainFill::M => g.m = target - g.k * p - g.c * pn,
                GainFill::C => g.c = (target - g.k * p - g.m) / pn,
            }
        }
        if ![g.k, g.m, g.c].iter().all(|v| v.is_finite()) {
            return Err(Error::Divergence {
                time: None,
                message: format!("gain fill for channel {} is not finite", i + 1),
            });
        }
        gains.push(g);
        f_star.push(f);
    }
    Ok((gains, f_star))
}

/// Inputs for building a complete tracking controller.
#[derive(Debug, Clone)]
pub struct TrackingDesign {
    /// Gains per schedule stage; the last stage seeds the synthesis.
    pub stages: Vec<Vec<ChannelGains>>,
    pub thresholds: Vec<Vec<f64>>,
    pub eps: Vec<f64>,
    /// Gain raised per channel when the final stage is synthesized.
    pub fill: Vec<GainFill>,
    pub bounds: Vec<Arc<dyn TrackingBound>>,
    /// Replaces the computed bound on `|rho_dot_i|` in the worst case.
    pub rho_dot_bound: Option<f64>,
}

impl TrackingDesign {
    /// Worst-case argument constants, honouring `rho_dot_bound`.
    pub fn worst_case(
        &self,
        plant: &PlantModel,
        reference: &ReferenceSignal,
        performance: &[PerformanceFunction],
        horizon: f64,
    ) -> Result<TrackingWorstCase> {
        let x0 = plant.x0();
        let a0 = x0[0] - reference.value(0.0)?;
        let mut worst = TrackingWorstCase::from_signals(performance, reference.bounds(horizon)?, a0, x0);
        if let Some(r) = self.rho_dot_bound {
            worst.rho_dot_max = r;
        }
        Ok(worst)
    }
}

/// Evaluates the bound constants at the final-stage radii and, if
/// `synthesize` is set, fills the final-stage gains first.
pub fn synthesize_tracking(
    design: &TrackingDesign,
    plant: &PlantModel,
    reference: ReferenceSignal,
    performance: Vec<PerformanceFunction>,
    horizon: f64,
    synthesize: bool,
) -> Result<TrackingControllerConfig> {
    let n = plant.order();
    if design.stages.is_empty() || design.thresholds.len() != design.stages.len() {
        return Err(Error::invalid("schedule stages and thresholds disagree"));
    }
    if performance.len() != n {
        return Err(Error::invalid(format!(
            "{} performance functions for {n} channels",
            performance.len()
        )));
    }
    let x0 = plant.x0().to_vec();
    let worst = design.worst_case(plant, &reference, &performance, horizon)?;
    let radii = design.thresholds.last().unwrap().clone();
    if radii.len() != n || design.eps.len() != n {
        return Err(Error::invalid("radii and eps must cover every channel"));
    }
    let seed = design.stages.last().unwrap();
    let (final_gains, f_star) = if synthesize {
        synthesize_final_stage(
            seed,
            &design.fill,
            &design.bounds,
            &worst,
            &radii,
            &design.eps,
            plant.gain_floor(),
        )?
    } else {
        let f = f_star_from_bounds(&design.bounds, &worst, &radii, seed, &design.eps, plant.gain_floor())?;
        (seed.clone(), f)
    };
    let mut stages = design.stages.clone();
    *stages.last_mut().unwrap() = final_gains;
    TrackingControllerConfig::new(TrackingParams {
        stages,
        thresholds: design.thresholds.clone(),
        eps: design.eps.clone(),
        f_star,
        performance,
        reference,
        x0,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn stage1() -> ChannelGains {
        ChannelGains {
            k: 2.0,
            m: 6.0,
            c: 0.1,
            power: 3,
        }
    }

    #[test]
    fn virtual_control_hand_value() {
        let g = stage1();
        let expected = -0.08 - 6.0 * 0.48f64.tanh() - 0.1 * 0.04f64.powi(3);
        assert_relative_eq!(g.law(0.04, 0.5), expected, epsilon = 1e-15);
        // tanh(0.48) = 0.446244, so the sum is -2.757468
        assert_relative_eq!(g.law(0.04, 0.5), -2.757468, epsilon = 1e-6);
        assert_eq!(g.law(-0.04, 0.5), -g.law(0.04, 0.5));
    }

    #[test]
    fn residual_examples() {
        let g = ChannelGains {
            k: 2.0,
            m: 6.0,
            c: 0.1,
            power: 3,
        };
        assert_relative_eq!(tracking_residual(&g, 0.05, 0.5, 3.0), 0.1000125, epsilon = 1e-12);
        assert_relative_eq!(tracking_residual(&g, 0.05, 0.5, 4.0), -0.8999875, epsilon = 1e-12);
        let g2 = ChannelGains { m: 7.0, ..g };
        assert!(tracking_residual(&g2, 0.05, 0.5, 4.0) >= 0.0);
    }

    #[test]
    fn switch_rule() {
        let mut s = SwitchSchedule::new(vec![vec![0.04, 1.0], vec![0.05, 2.0]]);
        assert!(!s.switch_update(&[0.03, 0.5]));
        assert_eq!(s.sigma(), 1);
        assert!(s.switch_update(&[0.05, 0.5]));
        assert_eq!(s.sigma(), 2);
        assert!(!s.switch_update(&[10.0, 10.0]));
        assert_eq!(s.sigma(), 2);
        assert!(!s.switch_update(&[0.0, 0.0]));
        assert_eq!(s.sigma(), 2);
    }

    #[test]
    fn flat_roundtrip_and_arity() {
        // the documented argument counts: 8 for channel 1, 10 for channel 2
        assert_eq!(TrackingBoundArgs::arity(1, 2), 8);
        assert_eq!(TrackingBoundArgs::arity(2, 2), 10);
        let flat: Vec<f64> = (0..10).map(f64::from).collect();
        let a = TrackingBoundArgs::from_flat(&flat, 2, 2);
        assert_eq!(a.errors, vec![4.0, 5.0]);
        assert_eq!(a.x0_tail, vec![9.0]);
        assert_eq!(a.flatten(), flat);
        assert_eq!(ExprTrackingBound::variable_names(2, 2).len(), 10 + 1 + 5);
    }

    fn zero_plant_bounds(n: usize) -> StandardTrackingBound {
        StandardTrackingBound {
            channel: 1,
            f_star: vec![ChannelFn::Const(0.0); n],
            g_star: vec![ChannelFn::Const(1.0); n],
            order: n,
        }
    }

    #[test]
    fn zero_plant_reduces_to_coupling() {
        let b = zero_plant_bounds(2);
        let worst = TrackingWorstCase {
            rho_max: vec![1.0, 1.0],
            rho_dot_max: 0.5,
            reference: ReferenceBounds { y0: 0.0, y1: 0.0 },
            a0: 0.0,
            x0_abs: vec![0.0, 0.0],
        };
        for gm in [1.0, 2.0] {
            let ctx = TrackingContext {
                earlier: &[],
                eps: &[0.5, 0.5],
                gain_floor: gm,
            };
            let f = b.eval(&worst.args(1, &[0.05, 2.0]), &ctx).unwrap();
            assert_relative_eq!(f, 2.0 / gm, epsilon = 1e-15);
        }
    }

    #[test]
    fn final_stage_fill_meets_condition() {
        let n = 2;
        let bounds: Vec<Arc<dyn TrackingBound>> = vec![
            Arc::new(ConstTrackingBound(10.0)),
            Arc::new(ConstTrackingBound(100.0)),
        ];
        let worst = TrackingWorstCase {
            rho_max: vec![1.0; n],
            rho_dot_max: 0.5,
            reference: ReferenceBounds { y0: 1.0, y1: 1.0 },
            a0: 0.5,
            x0_abs: vec![0.5, 0.0],
        };
        let seed = vec![stage1(), ChannelGains { power: 5, ..stage1() }];
        let (gains, f) = synthesize_final_stage(
            &seed,
            &[GainFill::M, GainFill::C],
            &bounds,
            &worst,
            &[0.05, 2.0],
            &[0.5, 0.5],
            1.0,
        )
        .unwrap();
        assert_eq!(f, vec![10.0, 100.0]);
        for i in 0..n {
            assert!(tracking_residual(&gains[i], [0.05, 2.0][i], 0.5, f[i]) > 0.0);
        }
        assert_eq!(gains[0].c, 0.1);
        assert_eq!(gains[1].m, 6.0);
    }
}
