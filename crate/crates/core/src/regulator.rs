//! Regulation under state quantization.
//!
//! The controller only sees quantized states. With `rho(t)` the performance
//! function and `x^q(0)` the quantized initial state, it forms
//!
//! ```text
//! e^q_1 = q(x_1) - rho(t) x^q_1(0)
//! e^q_i = q(x_i) - alpha^q_{i-1} - rho(t) x^q_i(0)
//! alpha^q_i = -gamma_i H_i e^q_i - c_i (e^q_i)^N_i,     u = alpha^q_n
//! ```
//!
//! `H_i` is a constant: the worst case of its bound function over the
//! invariant box `|e_i| <= p_i`. The radii follow
//! `p_1 = delta_M + eps_1`, `p_i = delta_{i-1} + delta_M + eps_i`,
//! `delta_1 = gamma_1 H_1 delta_M + c0`,
//! `delta_i = gamma_i H_i (delta_M + delta_{i-1}) + c0`.

use std::fmt;
use std::sync::Arc;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::plant::expr::Expression;
use crate::plant::{ChannelFn, PlantModel};
use crate::signals::PerformanceFunction;

/// Slack applied to the feedback-gain lower bounds during synthesis.
pub const SYNTHESIS_MARGIN: f64 = 1.05;

/// Feedback gain used when the lower bound is already nonpositive.
pub const MIN_GAMMA: f64 = 1e-3;

/// Gains of one recursion stage.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StageGains {
    pub gamma: f64,
    pub c: f64,
    /// Odd power `N_i >= 3`.
    #[serde(rename = "N")]
    pub power: u32,
    /// Constant bound value `H_i`.
    #[serde(rename = "H")]
    pub h: f64,
}

impl StageGains {
    pub fn law(&self, e: f64) -> f64 {
        -self.gamma * self.h * e - self.c * e.powi(self.power as i32)
    }

    /// Upper bound of `|law(e)|` for `|e| <= e_abs`; nondecreasing in `e_abs`.
    pub fn law_bound(&self, e_abs: f64) -> f64 {
        self.gamma * self.h * e_abs + self.c * e_abs.powi(self.power as i32)
    }

    /// Upper bound of `|law'(e)|` for `|e| <= e_abs`.
    pub fn slope_bound(&self, e_abs: f64) -> f64 {
        self.gamma * self.h + self.power as f64 * self.c * e_abs.powi(self.power as i32 - 1)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegulationParams {
    pub stages: Vec<StageGains>,
    pub eps: Vec<f64>,
    pub c0: f64,
    pub delta_m: f64,
    /// Quantized initial state `x^q(0)`.
    pub q_x0: Vec<f64>,
    /// `H_i^0(0, ..., 0)`, the denominators of the gain lower bounds.
    pub h_star: Vec<f64>,
    pub performance: PerformanceFunction,
}

/// Errors, virtual controls (`n - 1` of them) and the input.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ControlOutput {
    pub errors: Vec<f64>,
    pub alpha: Vec<f64>,
    pub u: f64,
}

impl ControlOutput {
    pub fn with_order(n: usize) -> Self {
        Self {
            errors: vec![0.0; n],
            alpha: vec![0.0; n.saturating_sub(1)],
            u: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegulationControllerConfig {
    params: RegulationParams,
    radii: Vec<f64>,
    mismatch: Vec<f64>,
}

impl RegulationControllerConfig {
    /// Validates the structure and runs the radius recursion. Gains are not
    /// required to be feasible; see [`Self::feasibility`].
    pub fn new(params: RegulationParams) -> Result<Self> {
        let n = params.stages.len();
        if n == 0 {
            return Err(Error::invalid("controller order must be at least 1"));
        }
        for (name, len) in [
            ("eps", params.eps.len()),
            ("q_x0", params.q_x0.len()),
            ("H_star", params.h_star.len()),
        ] {
            if len != n {
                return Err(Error::invalid(format!("{name} has {len} entries, expected {n}")));
            }
        }
        for (i, s) in params.stages.iter().enumerate() {
            check_power(s.power, i)?;
            if !(s.gamma >= 0.0 && s.c >= 0.0 && s.h >= 0.0)
                || !(s.gamma.is_finite() && s.c.is_finite() && s.h.is_finite())
            {
                return Err(Error::invalid(format!(
                    "stage {}: gamma, c and H must be finite and nonnegative",
                    i + 1
                )));
            }
        }
        if params.eps.iter().any(|&e| !(e > 0.0 && e.is_finite())) {
            return Err(Error::invalid("eps entries must be positive"));
        }
        if !(params.c0 > 0.0 && params.c0.is_finite()) {
            return Err(Error::invalid("c0 must be positive"));
        }
        if !(params.delta_m > 0.0 && params.delta_m.is_finite()) {
            return Err(Error::invalid("delta_M must be positive"));
        }
        if params.h_star.iter().any(|&h| !(h > 0.0 && h.is_finite())) {
            return Err(Error::invalid("H_star entries must be positive"));
        }
        let (radii, mismatch) = radius_recursion(&params);
        Ok(Self {
            params,
            radii,
            mismatch,
        })
    }

    pub fn order(&self) -> usize {
        self.params.stages.len()
    }

    pub fn params(&self) -> &RegulationParams {
        &self.params
    }

    pub fn stages(&self) -> &[StageGains] {
        &self.params.stages
    }

    /// Envelope radii `p_i`.
    pub fn radii(&self) -> &[f64] {
        &self.radii
    }

    /// Control mismatch radii `delta_i`.
    pub fn mismatch(&self) -> &[f64] {
        &self.mismatch
    }

    pub fn performance(&self) -> &PerformanceFunction {
        &self.params.performance
    }

    /// The controller: consumes quantized states only.
    pub fn regulation_control(&self, q_x: &[f64], t: f64) -> Result<ControlOutput> {
        let mut out = ControlOutput::with_order(self.order());
        let rho = self.params.performance.rho(t)?;
        self.evaluate_into(q_x, &self.params.q_x0, rho, &mut out)?;
        Ok(out)
    }

    /// The same recursion on arbitrary measurements and initial-state
    /// offsets. With true states and the true `x(0)` this yields the
    /// diagnostic errors `e_i` and virtual controls `alpha_i`.
    pub fn evaluate_into(
        &self,
        measured: &[f64],
        x0: &[f64],
        rho: f64,
        out: &mut ControlOutput,
    ) -> Result<()> {
        let n = self.order();
        if measured.len() != n {
            return Err(Error::invalid(format!(
                "measurement has {} components, controller order is {n}",
                measured.len()
            )));
        }
        if let Some(&bad) = measured.iter().find(|v| !v.is_finite()) {
            return Err(Error::Domain {
                what: "regulation_control",
                value: bad,
            });
        }
        let mut prev = 0.0;
        for i in 0..n {
            let e = measured[i] - prev - rho * x0[i];
            let a = self.params.stages[i].law(e);
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

    /// Output bounds `rho(t) x_1(0) -/+ (delta_M + eps_1)`.
    pub fn output_envelope(&self, x1_0: f64, t: f64) -> Result<(f64, f64)> {
        let centre = self.params.performance.rho(t)? * x1_0;
        let half = self.params.delta_m + self.params.eps[0];
        Ok((centre - half, centre + half))
    }

    pub fn feasibility(&self) -> FeasibilityReport {
        check_regulation_feasibility(self)
    }

    /// Largest control-law slope over the envelope of quantized errors,
    /// `max_i gamma_i H_i + N_i c_i (p_i + delta_M + delta_{i-1})^(N_i - 1)`.
    /// Sample-and-hold stays faithful when `step * stiffness` is small.
    pub fn stiffness(&self) -> f64 {
        let p = &self.params;
        (0..self.order())
            .map(|i| {
                let spread = p.delta_m + if i == 0 { 0.0 } else { self.mismatch[i - 1] };
                p.stages[i].slope_bound(self.radii[i] + spread)
            })
            .fold(0.0, f64::max)
    }
}

fn check_power(power: u32, i: usize) -> Result<()> {
    if power < 3 || power.is_multiple_of(2) {
        return Err(Error::invalid(format!(
            "stage {}: N must be odd and at least 3, got {power}",
            i + 1
        )));
    }
    Ok(())
}

fn radius_recursion(params: &RegulationParams) -> (Vec<f64>, Vec<f64>) {
    let n = params.stages.len();
    let mut radii = Vec::with_capacity(n);
    let mut mismatch = Vec::with_capacity(n);
    let mut prev_delta = 0.0;
    for i in 0..n {
        let s = &params.stages[i];
        radii.push(prev_delta + params.delta_m + params.eps[i]);
        let delta = s.gamma * s.h * (params.delta_m + prev_delta) + params.c0;
        mismatch.push(delta);
        prev_delta = delta;
    }
    (radii, mismatch)
}

// ---------------------------------------------------------------------------
// feasibility

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum InequalityKind {
    /// `0 < c_i <= limit`; satisfied iff residual `limit - c_i >= 0`.
    PowerGainUpper,
    /// `gamma_i > limit`; satisfied iff residual `gamma_i - limit > 0`.
    FeedbackGainLower,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InequalityCheck {
    pub stage: usize,
    /// Row of the four-row condition block (1: c_1, 2: c_i, 3: gamma_i for
    /// i < n, 4: gamma_n).
    pub line: u8,
    pub kind: InequalityKind,
    pub value: f64,
    pub limit: f64,
    pub residual: f64,
    pub satisfied: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FeasibilityReport {
    pub checks: Vec<InequalityCheck>,
    pub pass: bool,
}

impl FeasibilityReport {
    pub fn failures(&self) -> impl Iterator<Item = &InequalityCheck> {
        self.checks.iter().filter(|c| !c.satisfied)
    }
}

/// Largest admissible `c_i` given the stage radius and incoming mismatch.
pub fn power_gain_limit(power: u32, radius: f64, mismatch_in: f64, c0: f64) -> f64 {
    let m = power as i32 - 1;
    c0 / (power as f64 * mismatch_in * (radius.powi(m) + (radius + mismatch_in).powi(m)))
}

/// Smallest admissible `gamma_i` (strict) for a given bound value.
pub fn feedback_gain_limit(h: f64, slack: f64, c: f64, power: u32, radius: f64, eps: f64) -> f64 {
    (h + slack - c * radius.powi(power as i32)) / (eps * h)
}

pub fn check_regulation_feasibility(cfg: &RegulationControllerConfig) -> FeasibilityReport {
    let p = &cfg.params;
    let n = cfg.order();
    let mut checks = Vec::with_capacity(2 * n);
    for i in 0..n {
        let s = &p.stages[i];
        let incoming = p.delta_m + if i == 0 { 0.0 } else { cfg.mismatch[i - 1] };
        let limit = power_gain_limit(s.power, cfg.radii[i], incoming, p.c0);
        let residual = limit - s.c;
        checks.push(InequalityCheck {
            stage: i + 1,
            line: if i == 0 { 1 } else { 2 },
            kind: InequalityKind::PowerGainUpper,
            value: s.c,
            limit,
            residual,
            satisfied: s.c > 0.0 && residual >= 0.0,
        });
    }
    for i in 0..n {
        let s = &p.stages[i];
        let slack = if i + 1 < n {
            p.eps[i + 1] + p.delta_m + p.c0
        } else {
            p.c0
        };
        let limit = feedback_gain_limit(p.h_star[i], slack, s.c, s.power, cfg.radii[i], p.eps[i]);
        let residual = s.gamma - limit;
        checks.push(InequalityCheck {
            stage: i + 1,
            line: if i + 1 < n { 3 } else { 4 },
            kind: InequalityKind::FeedbackGainLower,
            value: s.gamma,
            limit,
            residual,
            satisfied: s.gamma > 0.0 && residual > 0.0,
        });
    }
    let pass = checks.iter().all(|c| c.satisfied);
    FeasibilityReport { checks, pass }
}

// ---------------------------------------------------------------------------
// bound functions

/// Arguments of the stage-`i` bound function:
/// `(rho, |rho_dot|, |e_1|..|e_i|, |x^q_1(0)|..|x^q_{i+1}(0)|, delta0)`
/// with the initial-state list capped at `n` entries.
#[derive(Debug, Clone, PartialEq)]
pub struct RegulationBoundArgs {
    pub rho: f64,
    pub rho_dot: f64,
    pub errors: Vec<f64>,
    pub q_x0: Vec<f64>,
    pub delta0: f64,
}

impl RegulationBoundArgs {
    pub fn stage(&self) -> usize {
        self.errors.len()
    }

    /// Number of flattened arguments for stage `i` of an order-`n` loop.
    pub fn arity(stage: usize, order: usize) -> usize {
        3 + stage + (stage + 1).min(order)
    }

    pub fn flatten(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(3 + self.errors.len() + self.q_x0.len());
        v.push(self.rho);
        v.push(self.rho_dot);
        v.extend_from_slice(&self.errors);
        v.extend_from_slice(&self.q_x0);
        v.push(self.delta0);
        v
    }

    pub fn from_flat(flat: &[f64], stage: usize, order: usize) -> Self {
        let nq = (stage + 1).min(order);
        debug_assert_eq!(flat.len(), Self::arity(stage, order));
        Self {
            rho: flat[0],
            rho_dot: flat[1],
            errors: flat[2..2 + stage].to_vec(),
            q_x0: flat[2 + stage..2 + stage + nq].to_vec(),
            delta0: flat[2 + stage + nq],
        }
    }

    /// Worst case over the invariant box.
    pub fn worst_case(
        rho_max: f64,
        rho_dot_max: f64,
        radii: &[f64],
        q_x0: &[f64],
        delta0: f64,
    ) -> Self {
        let stage = radii.len();
        let nq = (stage + 1).min(q_x0.len());
        Self {
            rho: rho_max,
            rho_dot: rho_dot_max,
            errors: radii.to_vec(),
            q_x0: q_x0[..nq].iter().map(|v| v.abs()).collect(),
            delta0,
        }
    }

    pub fn zeros(stage: usize, order: usize) -> Self {
        Self::from_flat(&vec![0.0; Self::arity(stage, order)], stage, order)
    }
}

/// A W-function bounding the stage-`i` uncertainty on the invariant box.
///
/// `earlier` carries the already fixed gains of stages `1..i`, which enter
/// through the virtual controls and their time derivatives.
pub trait RegulationBound: Send + Sync + fmt::Debug {
    fn eval(&self, args: &RegulationBoundArgs, earlier: &[StageGains]) -> Result<f64>;
}

/// Generic bound built from a state majorant `f_i*` that is nondecreasing
/// in every `|x_j|`:
///
/// ```text
/// f_i*(X_1..X_i) + slope_{i-1}(|e_{i-1}|) (H_{i-1} + |alpha_{i-1}| + |e_i|)
///     + |rho_dot| (|x^q_i(0)| + d0) + rho (|x^q_{i+1}(0)| + d0) + floor
/// ```
///
/// with `X_1 = |e_1| + rho (|x^q_1(0)| + d0)` and
/// `X_j = |e_j| + |alpha_{j-1}| + rho (|x^q_j(0)| + d0)`.
#[derive(Debug, Clone)]
pub struct StandardRegulationBound {
    pub majorant: ChannelFn,
    pub order: usize,
    /// Constant added so that `H_i^0(0, .., 0) > 0`.
    pub floor: f64,
}

impl RegulationBound for StandardRegulationBound {
    fn eval(&self, a: &RegulationBoundArgs, earlier: &[StageGains]) -> Result<f64> {
        let i = a.stage();
        debug_assert!(earlier.len() + 1 >= i);
        let d0 = a.delta0;
        let mut xs = Vec::with_capacity(i);
        for j in 0..i {
            let offset = a.rho * (a.q_x0[j] + d0);
            let carried = if j == 0 {
                0.0
            } else {
                earlier[j - 1].law_bound(a.errors[j - 1])
            };
            xs.push(a.errors[j] + carried + offset);
        }
        let mut h = self.majorant.eval(&xs, 0.0, self.order)?;
        if i >= 2 {
            let g = &earlier[i - 2];
            let e_prev = a.errors[i - 2];
            h += g.slope_bound(e_prev) * (g.h + g.law_bound(e_prev) + a.errors[i - 1]);
        }
        h += a.rho_dot * (a.q_x0[i - 1] + d0);
        if i < self.order {
            h += a.rho * (a.q_x0[i] + d0);
        }
        Ok(h + self.floor)
    }
}

/// Bound given as an expression over `rho, rho_dot, e1..ei, q1..q{i+1},
/// delta0` and the earlier gains `gamma{j}, c{j}, H{j}, N{j}` (`j < i`).
#[derive(Debug, Clone)]
pub struct ExprRegulationBound {
    expr: Expression,
    stage: usize,
}

impl ExprRegulationBound {
    pub fn variable_names(stage: usize, order: usize) -> Vec<String> {
        let mut v = vec!["rho".to_string(), "rho_dot".to_string()];
        v.extend((1..=stage).map(|j| format!("e{j}")));
        v.extend((1..=(stage + 1).min(order)).map(|j| format!("q{j}")));
        v.push("delta0".into());
        for j in 1..stage {
            v.extend([
                format!("gamma{j}"),
                format!("c{j}"),
                format!("H{j}"),
                format!("N{j}"),
            ]);
        }
        v
    }

    pub fn parse(text: &str, stage: usize, order: usize) -> Result<Self> {
        let expr = Expression::parse(text, &Self::variable_names(stage, order))?;
        Ok(Self { expr, stage })
    }
}

impl RegulationBound for ExprRegulationBound {
    fn eval(&self, a: &RegulationBoundArgs, earlier: &[StageGains]) -> Result<f64> {
        let mut v = a.flatten();
        for g in earlier.iter().take(self.stage - 1) {
            v.extend([g.gamma, g.c, g.h, g.power as f64]);
        }
        Ok(self.expr.eval(&v)?)
    }
}

/// Standard bounds for every channel of a plant that carries majorants.
pub fn standard_bounds(plant: &PlantModel, floor: f64) -> Result<Vec<Arc<dyn RegulationBound>>> {
    plant
        .channels()
        .iter()
        .enumerate()
        .map(|(i, ch)| {
            let majorant = ch
                .f_star
                .clone()
                .ok_or_else(|| Error::MissingBound(format!("f_star for channel {}", i + 1)))?;
            Ok(Arc::new(StandardRegulationBound {
                majorant,
                order: plant.order(),
                floor,
            }) as Arc<dyn RegulationBound>)
        })
        .collect()
}

// ---------------------------------------------------------------------------
// synthesis

#[derive(Debug, Clone)]
pub struct RegulationDesign {
    pub eps: Vec<f64>,
    pub c0: f64,
    pub powers: Vec<u32>,
    pub bounds: Vec<Arc<dyn RegulationBound>>,
}

/// Forward recursion `p_1 -> H_1 -> c_1, gamma_1 -> delta_1 -> p_2 -> ...`.
///
/// Each `H_i` is its bound at the worst case over the box. `c_i` is set to
/// its upper limit and `gamma_i` to [`SYNTHESIS_MARGIN`] times the larger of
/// the lower limits computed with `H_i^0(0..0)` and with `H_i` itself.
pub fn synthesize_regulation(
    design: &RegulationDesign,
    delta0: f64,
    performance: PerformanceFunction,
    q_x0: &[f64],
) -> Result<RegulationControllerConfig> {
    let n = design.bounds.len();
    if n == 0 || design.eps.len() != n || design.powers.len() != n || q_x0.len() != n {
        return Err(Error::invalid(format!(
            "design sizes disagree: {} bounds, {} eps, {} powers, {} initial states",
            n,
            design.eps.len(),
            design.powers.len(),
            q_x0.len()
        )));
    }
    if !(design.c0 > 0.0) || design.eps.iter().any(|&e| !(e > 0.0)) {
        return Err(Error::invalid("c0 and eps must be positive"));
    }
    if !(delta0 > 0.0 && delta0.is_finite()) {
        return Err(Error::invalid("quantization bound must be positive"));
    }
    for (i, &p) in design.powers.iter().enumerate() {
        check_power(p, i)?;
    }
    let pb = performance.bounds();
    let delta_m = (1.0 + pb.rho_max) * delta0;
    let c0 = design.c0;

    let mut stages: Vec<StageGains> = Vec::with_capacity(n);
    let mut h_star = Vec::with_capacity(n);
    let mut radii: Vec<f64> = Vec::with_capacity(n);
    let mut prev_delta = 0.0;
    for i in 0..n {
        let eps = design.eps[i];
        let power = design.powers[i];
        let radius = prev_delta + delta_m + eps;
        radii.push(radius);

        let worst = RegulationBoundArgs::worst_case(pb.rho_max, pb.rho_dot_max, &radii, q_x0, delta0);
        let h = design.bounds[i].eval(&worst, &stages)?;
        let hs = design.bounds[i].eval(&RegulationBoundArgs::zeros(i + 1, n), &stages)?;
        finite(h, i, "H")?;
        finite(hs, i, "H_star")?;
        if hs <= 0.0 {
            return Err(Error::Synthesis(format!(
                "stage {}: H_star = {hs} must be positive; enlarge the bound function",
                i + 1
            )));
        }

        let incoming = delta_m + prev_delta;
        let c = power_gain_limit(power, radius, incoming, c0);
        finite(c, i, "c")?;
        let slack = if i + 1 < n {
            design.eps[i + 1] + delta_m + c0
        } else {
            c0
        };
        let lower = feedback_gain_limit(hs, slack, c, power, radius, eps)
            .max(feedback_gain_limit(h, slack, c, power, radius, eps));
        let gamma = if lower > 0.0 {
            SYNTHESIS_MARGIN * lower
        } else {
            MIN_GAMMA
        };
        finite(gamma, i, "gamma")?;

        let delta = gamma * h * incoming + c0;
        finite(delta, i, "delta")?;
        stages.push(StageGains { gamma, c, power, h });
        h_star.push(hs);
        prev_delta = delta;
    }

    let cfg = RegulationControllerConfig::new(RegulationParams {
        stages,
        eps: design.eps.clone(),
        c0,
        delta_m,
        q_x0: q_x0.to_vec(),
        h_star,
        performance,
    })?;
    debug_assert!(cfg
        .radii()
        .iter()
        .zip(&radii)
        .all(|(a, b)| (a - b).abs() <= 1e-12 * b.abs().max(1.0)));
    Ok(cfg)
}

fn finite(v: f64, stage: usize, what: &str) -> Result<()> {
    if v.is_finite() {
        Ok(())
    } else {
        Err(Error::Divergence {
            time: None,
            message: format!("synthesis recursion produced {what} = {v} at stage {}", stage + 1),
        })
    }
}

/// `H_i^0(0, .., 0)` for every stage, given the gains of all stages.
pub fn h_star_values(bounds: &[Arc<dyn RegulationBound>], stages: &[StageGains]) -> Result<Vec<f64>> {
    let n = bounds.len();
    (0..n)
        .map(|i| {
            let v = bounds[i].eval(&RegulationBoundArgs::zeros(i + 1, n), &stages[..i])?;
            finite(v, i, "H_star")?;
            Ok(v)
        })
        .collect()
}

/// Builds a configuration from fixed gains, deriving `delta_M` and `H_star`.
pub fn assemble_regulation(
    design: &RegulationDesign,
    stages: Vec<StageGains>,
    delta0: f64,
    performance: PerformanceFunction,
    q_x0: &[f64],
) -> Result<RegulationControllerConfig> {
    if stages.len() != design.bounds.len() {
        return Err(Error::invalid(format!(
            "{} stages for {} bound evaluators",
            stages.len(),
            design.bounds.len()
        )));
    }
    let h_star = h_star_values(&design.bounds, &stages)?;
    if let Some(i) = h_star.iter().position(|&h| h <= 0.0) {
        return Err(Error::Synthesis(format!(
            "stage {}: H_star = {} must be positive",
            i + 1,
            h_star[i]
        )));
    }
    RegulationControllerConfig::new(RegulationParams {
        stages,
        eps: design.eps.clone(),
        c0: design.c0,
        delta_m: (1.0 + performance.bounds().rho_max) * delta0,
        q_x0: q_x0.to_vec(),
        h_star,
        performance,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    /// Stock example-1 constants with c0 = eps_2 = 0.5 so that
    /// p_2 = 2 + delta_M + 1.
    fn example1_config() -> RegulationControllerConfig {
        RegulationControllerConfig::new(RegulationParams {
            stages: vec![
                StageGains {
                    gamma: 4.0,
                    c: 0.1,
                    power: 3,
                    h: 5.0,
                },
                StageGains {
                    gamma: 0.4,
                    c: 1.5,
                    power: 3,
                    h: 10.0,
                },
            ],
            eps: vec![0.05, 0.5],
            c0: 0.5,
            delta_m: 0.1,
            q_x0: vec![1.0, 0.0],
            h_star: vec![1.0, 1.0],
            performance: PerformanceFunction::cosine(1.0).unwrap(),
        })
        .unwrap()
    }

    #[test]
    fn control_at_start_is_zero() {
        let cfg = example1_config();
        let out = cfg.regulation_control(&[1.0, 0.0], 0.0).unwrap();
        assert_eq!(out.errors, vec![0.0, 0.0]);
        assert_eq!(out.u, 0.0);
    }

    #[test]
    fn hand_evaluated_control() {
        let cfg = example1_config();
        // rho(0) = 1
        let out = cfg.regulation_control(&[1.1, 0.0], 0.0).unwrap();
        assert_relative_eq!(out.errors[0], 0.1, epsilon = 1e-12);
        assert_relative_eq!(out.alpha[0], -2.0001, epsilon = 1e-12);
        let out = cfg.regulation_control(&[1.1, -2.0], 0.0).unwrap();
        assert_relative_eq!(out.errors[1], 1e-4, epsilon = 1e-12);
        assert_relative_eq!(out.u, -4.0e-4 - 1.5e-12, epsilon = 1e-12);
    }

    #[test]
    fn radii_follow_recursion() {
        let cfg = example1_config();
        assert_relative_eq!(cfg.radii()[0], 0.15, epsilon = 1e-15);
        assert_relative_eq!(cfg.mismatch()[0], 2.5, epsilon = 1e-15);
        assert_relative_eq!(cfg.radii()[1], 3.1, epsilon = 1e-15);
    }

    #[test]
    fn power_gain_limit_example() {
        // c0 / (3 * 0.1 * (0.15^2 + 0.25^2)) = c0 / 0.0255
        assert_relative_eq!(power_gain_limit(3, 0.15, 0.1, 1.0), 1.0 / 0.0255, epsilon = 1e-12);
    }

    #[test]
    fn envelope_examples() {
        let cfg = example1_config();
        let (lo, hi) = cfg.output_envelope(1.0, 0.0).unwrap();
        assert_relative_eq!(lo, 0.85, epsilon = 1e-15);
        assert_relative_eq!(hi, 1.15, epsilon = 1e-15);
        let (lo, hi) = cfg.output_envelope(1.0, 4.0).unwrap();
        assert_relative_eq!(lo, -0.15, epsilon = 1e-15);
        assert_relative_eq!(hi, 0.15, epsilon = 1e-15);
    }

    #[test]
    fn stock_constants_are_not_feasible() {
        // c_2 = 1.5 exceeds its limit by orders of magnitude
        let report = example1_config().feasibility();
        assert!(!report.pass);
        assert!(report.failures().any(|c| c.stage == 2 && c.line == 2));
    }

    #[test]
    fn zero_gamma_fails_third_line() {
        let mut p = example1_config().params().clone();
        p.stages[0].gamma = 0.0;
        let cfg = RegulationControllerConfig::new(p).unwrap();
        let report = cfg.feasibility();
        let line3 = report.checks.iter().find(|c| c.line == 3).unwrap();
        assert!(!line3.satisfied && line3.residual < 0.0);
    }

    #[test]
    fn rejects_even_power() {
        let mut p = example1_config().params().clone();
        p.stages[0].power = 2;
        assert!(RegulationControllerConfig::new(p).is_err());
    }

    #[test]
    fn bound_args_flatten_roundtrip() {
        let a = RegulationBoundArgs {
            rho: 0.5,
            rho_dot: 0.1,
            errors: vec![0.2, 0.3],
            q_x0: vec![1.0, 2.0],
            delta0: 0.05,
        };
        let flat = a.flatten();
        assert_eq!(flat.len(), RegulationBoundArgs::arity(2, 2));
        assert_eq!(RegulationBoundArgs::from_flat(&flat, 2, 2), a);
    }

    #[test]
    fn expression_bound_sees_earlier_gains() {
        let b = ExprRegulationBound::parse("gamma1*H1*e1 + q2 + N1", 2, 2).unwrap();
        let a = RegulationBoundArgs {
            rho: 1.0,
            rho_dot: 0.5,
            errors: vec![0.1, 0.2],
            q_x0: vec![1.0, 3.0],
            delta0: 0.05,
        };
        let g = StageGains {
            gamma: 2.0,
            c: 0.0,
            power: 3,
            h: 5.0,
        };
        assert_relative_eq!(b.eval(&a, &[g]).unwrap(), 1.0 + 3.0 + 3.0);
        assert!(ExprRegulationBound::parse("gamma2", 2, 2).is_err());
    }
}
