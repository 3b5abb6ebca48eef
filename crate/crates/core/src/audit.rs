//! Sampling audits of the side conditions: W-function monotonicity,
//! majorization, the tanh inequality, envelope containment, and the
//! contrast with a logarithmic barrier controller.
//!
//! Every grid check is a sampling audit, not a proof.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::engine::TraceRow;
use crate::error::{Error, Result};
use crate::plant::PlantModel;
use crate::quantizer::Quantizer;
use crate::regulator::{ControlOutput, RegulationBound, RegulationBoundArgs, RegulationControllerConfig};
use crate::tracker::{TrackingBound, TrackingBoundArgs, TrackingContext, TrackingControllerConfig, TrackingWorstCase};
use std::sync::Arc;

pub const DEFAULT_AXIS_POINTS: usize = 21;
/// Total grid size above which the per-axis resolution is reduced.
pub const DEFAULT_GRID_BUDGET: usize = 200_000;
/// Relative tolerance on finite-difference partials.
pub const W_SLOPE_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditReport {
    pub check: String,
    pub domain: String,
    pub samples: usize,
    /// Worst value of the checked quantity (its sign convention is stated
    /// in `note`).
    pub worst_residual: f64,
    pub worst_location: Vec<f64>,
    pub pass: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

/// Cartesian sampling grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    pub axes: Vec<Vec<f64>>,
}

impl Grid {
    pub fn uniform(ranges: &[(f64, f64)], points: usize) -> Self {
        let points = points.max(2);
        Self {
            axes: ranges
                .iter()
                .map(|&(lo, hi)| {
                    (0..points)
                        .map(|k| lo + (hi - lo) * k as f64 / (points - 1) as f64)
                        .collect()
                })
                .collect(),
        }
    }

    /// Axes `[0, upper_j]` with as many points per axis as the budget
    /// allows, capped at [`DEFAULT_AXIS_POINTS`]. Zero upper limits are
    /// widened to 1 so every argument is exercised.
    pub fn clipped(upper: &[f64], budget: usize) -> Self {
        let k = upper.len().max(1) as f64;
        let mut points = DEFAULT_AXIS_POINTS;
        while points > 3 && (points as f64).powf(k) > budget as f64 {
            points -= 1;
        }
        let ranges: Vec<_> = upper
            .iter()
            .map(|&u| (0.0, if u > 0.0 { u } else { 1.0 }))
            .collect();
        Self::uniform(&ranges, points)
    }

    /// Exactly the box `[0, upper_j]`: zero limits become single-point axes
    /// and the budget is spread over the rest.
    pub fn exact(upper: &[f64], budget: usize) -> Self {
        let k = upper.iter().filter(|&&u| u > 0.0).count().max(1) as f64;
        let mut points = DEFAULT_AXIS_POINTS;
        while points > 3 && (points as f64).powf(k) > budget as f64 {
            points -= 1;
        }
        Self {
            axes: upper
                .iter()
                .map(|&u| {
                    if u > 0.0 {
                        (0..points).map(|j| u * j as f64 / (points - 1) as f64).collect()
                    } else {
                        vec![0.0]
                    }
                })
                .collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.axes.iter().map(Vec::len).product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn describe(&self) -> String {
        let parts: Vec<String> = self
            .axes
            .iter()
            .map(|a| {
                format!(
                    "[{}, {}]x{}",
                    a.first().copied().unwrap_or(0.0),
                    a.last().copied().unwrap_or(0.0),
                    a.len()
                )
            })
            .collect();
        parts.join(" * ")
    }

    fn point(&self, idx: &[usize], out: &mut [f64]) {
        for (j, &i) in idx.iter().enumerate() {
            out[j] = self.axes[j][i];
        }
    }

    /// Visits every multi-index in row-major order.
    fn for_each(&self, mut visit: impl FnMut(&[usize]) -> Result<()>) -> Result<()> {
        let k = self.axes.len();
        if self.is_empty() {
            return Ok(());
        }
        let mut idx = vec![0usize; k];
        loop {
            visit(&idx)?;
            let mut j = k;
            loop {
                if j == 0 {
                    return Ok(());
                }
                j -= 1;
                idx[j] += 1;
                if idx[j] < self.axes[j].len() {
                    break;
                }
                idx[j] = 0;
            }
        }
    }
}

/// Monotonicity and positivity of `f` on the grid.
///
/// At every grid point the partial in each direction is estimated by the
/// central difference between its grid neighbours (one-sided at the
/// faces) and must be at least `-1e-9 max(1, |f|)`. `f` must be positive
/// where every argument is positive and nonnegative on the coordinate
/// faces; zeros there are counted and `F(0, .., 0)` is reported in the note.
pub fn check_w_function<F>(f: F, grid: &Grid) -> Result<AuditReport>
where
    F: Fn(&[f64]) -> Result<f64>,
{
    let k = grid.axes.len();
    let dims: Vec<usize> = grid.axes.iter().map(Vec::len).collect();
    let mut values = Vec::with_capacity(grid.len());
    let mut z = vec![0.0; k];
    grid.for_each(|idx| {
        grid.point(idx, &mut z);
        let v = f(&z)?;
        if !v.is_finite() {
            return Err(Error::Domain {
                what: "W-function value",
                value: v,
            });
        }
        values.push(v);
        Ok(())
    })?;
    let strides: Vec<usize> = (0..k).map(|j| dims[j + 1..].iter().product()).collect();

    let mut worst_slope = f64::INFINITY;
    let mut worst_slope_at = vec![];
    let mut min_value = f64::INFINITY;
    let mut min_value_at = vec![];
    let mut slope_ok = true;
    let mut corner = None;
    let mut negative_face = false;
    let mut face_zeros = 0usize;
    let mut flat = 0usize;
    grid.for_each(|idx| {
        let v = values[flat];
        grid.point(idx, &mut z);
        if z.iter().all(|&c| c == 0.0) {
            corner = Some(v);
        } else if z.contains(&0.0) {
            if v < 0.0 {
                negative_face = true;
            } else if v == 0.0 {
                face_zeros += 1;
            }
        } else if v < min_value {
            min_value = v;
            min_value_at = z.clone();
        }
        for j in 0..k {
            if dims[j] < 2 {
                continue;
            }
            let lo = idx[j].saturating_sub(1);
            let hi = (idx[j] + 1).min(dims[j] - 1);
            let vlo = values[flat - (idx[j] - lo) * strides[j]];
            let vhi = values[flat + (hi - idx[j]) * strides[j]];
            let slope = (vhi - vlo) / (grid.axes[j][hi] - grid.axes[j][lo]);
            let tol = W_SLOPE_TOLERANCE * v.abs().max(1.0);
            if slope < worst_slope {
                worst_slope = slope;
                worst_slope_at = z.clone();
            }
            if slope < -tol {
                slope_ok = false;
            }
        }
        flat += 1;
        Ok(())
    })?;
    let positive = min_value > 0.0 && !negative_face;
    let mut note = format!(
        "worst partial derivative (must be >= -{W_SLOPE_TOLERANCE:e} max(1,|F|)); minimum value with all arguments positive {min_value:.6e}"
    );
    if face_zeros > 0 {
        note.push_str(&format!("; F = 0 at {face_zeros} points of the coordinate faces"));
    }
    if !min_value_at.is_empty() && !positive {
        note.push_str(&format!(" at {min_value_at:?}"));
    }
    if let Some(c) = corner {
        note.push_str(&format!("; F(0,...,0) = {c:.6e} reported separately"));
    }
    Ok(AuditReport {
        check: "w_function".into(),
        domain: grid.describe(),
        samples: values.len(),
        worst_residual: worst_slope,
        worst_location: worst_slope_at,
        pass: slope_ok && positive,
        note: Some(note),
    })
}

/// `lhs >= rhs` at every grid point. The residual is `min(lhs - rhs)`.
pub fn audit_majorization<L, R>(lhs: L, rhs: R, grid: &Grid) -> Result<MajorizationReport>
where
    L: Fn(&[f64]) -> Result<f64>,
    R: Fn(&[f64]) -> Result<f64>,
{
    let mut z = vec![0.0; grid.axes.len()];
    let mut worst = f64::INFINITY;
    let mut worst_at = vec![];
    let mut max_target = f64::NEG_INFINITY;
    let mut n = 0;
    grid.for_each(|idx| {
        grid.point(idx, &mut z);
        let target = rhs(&z)?;
        let r = lhs(&z)? - target;
        if r < worst {
            worst = r;
            worst_at = z.clone();
        }
        max_target = max_target.max(target);
        n += 1;
        Ok(())
    })?;
    Ok(MajorizationReport {
        report: AuditReport {
            check: "majorization".into(),
            domain: grid.describe(),
            samples: n,
            worst_residual: worst,
            worst_location: worst_at,
            pass: worst >= 0.0,
            note: Some("residual = bound - target, must be >= 0".into()),
        },
        max_target,
    })
}

/// W-function audit of every stage bound `H_i^0` over the box from zero
/// to its worst-case arguments.
pub fn audit_regulation_bounds(
    bounds: &[Arc<dyn RegulationBound>],
    config: &RegulationControllerConfig,
    delta0: f64,
) -> Result<Vec<AuditReport>> {
    let n = config.order();
    let pb = config.performance().bounds();
    let stages = config.stages();
    (0..n)
        .map(|i| {
            let upper = RegulationBoundArgs::worst_case(
                pb.rho_max,
                pb.rho_dot_max,
                &config.radii()[..=i],
                &config.params().q_x0,
                delta0,
            )
            .flatten();
            let grid = Grid::clipped(&upper, DEFAULT_GRID_BUDGET);
            let mut r = check_w_function(
                |z| bounds[i].eval(&RegulationBoundArgs::from_flat(z, i + 1, n), &stages[..i]),
                &grid,
            )?;
            r.check = format!("w_function_H{}", i + 1);
            Ok(r)
        })
        .collect()
}

/// W-function audit of every channel bound `F_i^0` with the final-stage
/// gains, over the box from zero to its worst-case arguments.
pub fn audit_tracking_bounds(
    bounds: &[Arc<dyn TrackingBound>],
    config: &TrackingControllerConfig,
    worst: &TrackingWorstCase,
    gain_floor: f64,
) -> Result<Vec<AuditReport>> {
    let n = config.order();
    let gains = config.gains(config.stage_count());
    (0..n)
        .map(|i| {
            let upper = worst.args(i + 1, config.radii()).flatten();
            let grid = Grid::clipped(&upper, DEFAULT_GRID_BUDGET);
            let ctx = TrackingContext {
                earlier: &gains[..i],
                eps: config.eps(),
                gain_floor,
            };
            let mut r = check_w_function(
                |z| bounds[i].eval(&TrackingBoundArgs::from_flat(z, i + 1, n), &ctx),
                &grid,
            )?;
            r.check = format!("w_function_F{}", i + 1);
            Ok(r)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MajorizationReport {
    #[serde(flatten)]
    pub report: AuditReport,
    /// Grid maximum of the target function.
    pub max_target: f64,
}

/// `M|e| - M e tanh(M e / eps) <= coef * eps` on `points` samples of
/// `[-span, span]`, `span = 10 eps / M`.
pub fn tanh_bound_check(m: f64, eps: f64, points: usize, coef: f64) -> Result<TanhReport> {
    if !(m > 0.0 && eps > 0.0) {
        return Err(Error::invalid("tanh check needs M > 0 and eps > 0"));
    }
    let span = 10.0 * eps / m;
    let points = points.max(3);
    let mut worst = f64::NEG_INFINITY;
    let mut at = 0.0;
    for k in 0..points {
        let e = -span + 2.0 * span * k as f64 / (points - 1) as f64;
        let v = m * e.abs() - m * e * (m * e / eps).tanh();
        if v > worst {
            worst = v;
            at = e;
        }
    }
    Ok(TanhReport {
        report: AuditReport {
            check: "tanh_bound".into(),
            domain: format!("e in [{:.6e}, {:.6e}] x{points}, M = {m}, eps = {eps}", -span, span),
            samples: points,
            worst_residual: coef * eps - worst,
            worst_location: vec![at],
            pass: worst <= coef * eps,
            note: Some(format!("residual = {coef} eps - max, must be >= 0")),
        },
        observed_max: worst,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TanhReport {
    #[serde(flatten)]
    pub report: AuditReport,
    pub observed_max: f64,
}

/// Per-channel containment `|e_i| <= p_i`, plus the output-form bound
/// recomputed independently from `output(row)` against `[env_lo, env_hi]`.
pub fn verify_envelope<O>(rows: &[TraceRow], radii: &[f64], output: O) -> EnvelopeReport
where
    O: Fn(&TraceRow) -> f64,
{
    let channels: Vec<AuditReport> = radii
        .iter()
        .enumerate()
        .map(|(i, &p)| {
            let mut worst = f64::INFINITY;
            let mut at = vec![];
            let mut first = None;
            for r in rows {
                let res = p - r.e[i].abs();
                if res < worst {
                    worst = res;
                    at = vec![r.t, r.e[i]];
                }
                if res < 0.0 && first.is_none() {
                    first = Some(r.t);
                }
            }
            AuditReport {
                check: format!("envelope_e{}", i + 1),
                domain: format!("{} trace samples, p = {p}", rows.len()),
                samples: rows.len(),
                worst_residual: worst,
                worst_location: at,
                pass: first.is_none(),
                note: first.map(|t| format!("first violation at t = {t}")),
            }
        })
        .collect();
    let mut worst = f64::INFINITY;
    let mut at = vec![];
    let mut first = None;
    for r in rows {
        let y = output(r);
        let res = (y - r.env_lo).min(r.env_hi - y);
        if res < worst {
            worst = res;
            at = vec![r.t, y];
        }
        if res < 0.0 && first.is_none() {
            first = Some(r.t);
        }
    }
    let output_form = AuditReport {
        check: "output_envelope".into(),
        domain: format!("{} trace samples", rows.len()),
        samples: rows.len(),
        worst_residual: worst,
        worst_location: at,
        pass: first.is_none(),
        note: first.map(|t| format!("first violation at t = {t}")),
    };
    let pass = channels.iter().all(|c| c.pass) && output_form.pass;
    EnvelopeReport {
        channels,
        output_form,
        pass,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EnvelopeReport {
    pub channels: Vec<AuditReport>,
    pub output_form: AuditReport,
    pub pass: bool,
}

/// Value of the logarithmic barrier law, or the marker for its singular set.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "kind", content = "value", rename_all = "snake_case")]
pub enum PpcValue {
    Finite(f64),
    Singular,
}

impl PpcValue {
    pub fn is_singular(&self) -> bool {
        matches!(self, PpcValue::Singular)
    }
}

/// `-k ln((1 + e/rho) / (1 - e/rho))`, singular when `|e/rho| >= 1`.
pub fn ppc_reference_control(k: f64, rho: f64, e: f64) -> PpcValue {
    let r = e / rho;
    if !(r.abs() < 1.0) {
        return PpcValue::Singular;
    }
    PpcValue::Finite(-k * ((1.0 + r) / (1.0 - r)).ln())
}

/// Fifth-order odd polynomial approximation of the barrier law.
pub fn ppc_taylor(k: f64, r: f64) -> f64 {
    2.0 * k * (-r - r.powi(3) / 3.0 - r.powi(5) / 5.0)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SingularityDemo {
    pub rho: f64,
    pub samples: usize,
    /// A reachable point: true error inside the barrier, quantized error
    /// on or beyond it.
    pub x1: Option<f64>,
    pub e_true: Option<f64>,
    pub e_quantized: Option<f64>,
    pub ppc_true: Option<PpcValue>,
    pub ppc_quantized: Option<PpcValue>,
    /// Regulation input at the same quantized state.
    pub bfppc_u: Option<f64>,
    /// Every swept quantized state gave a finite regulation input.
    pub bfppc_always_finite: bool,
    pub pass: bool,
}

/// Sweeps `x_1` densely so that the true error `x_1 - rho x_1(0)` stays
/// strictly inside the barrier `|e| < rho`, quantizes, and looks for a
/// quantized error `q(x_1) - rho x^q_1(0)` on or past the barrier while the
/// regulation controller stays finite.
pub fn singularity_demo(
    config: &RegulationControllerConfig,
    quantizer: &Quantizer,
    x0: &[f64],
    rho: f64,
    k: f64,
    samples: usize,
) -> Result<SingularityDemo> {
    let n = config.order();
    let q_x0 = &config.params().q_x0;
    let mut out = ControlOutput::with_order(n);
    let mut demo = SingularityDemo {
        rho,
        samples,
        x1: None,
        e_true: None,
        e_quantized: None,
        ppc_true: None,
        ppc_quantized: None,
        bfppc_u: None,
        bfppc_always_finite: true,
        pass: false,
    };
    let mut state = x0.to_vec();
    let mut qs = vec![0.0; n];
    for s in 0..samples {
        // open interval (-rho, rho) for the true error
        let e = rho * (-1.0 + 2.0 * (s as f64 + 0.5) / samples as f64);
        state[0] = e + rho * x0[0];
        for i in 0..n {
            qs[i] = quantizer.quantize(state[i])?;
        }
        config.evaluate_into(&qs, q_x0, rho, &mut out)?;
        if !out.u.is_finite() || out.alpha.iter().any(|a| !a.is_finite()) {
            demo.bfppc_always_finite = false;
        }
        let eq = out.errors[0];
        let ppc_q = ppc_reference_control(k, rho, eq);
        if demo.x1.is_none() && ppc_q.is_singular() {
            demo.x1 = Some(state[0]);
            demo.e_true = Some(e);
            demo.e_quantized = Some(eq);
            demo.ppc_true = Some(ppc_reference_control(k, rho, e));
            demo.ppc_quantized = Some(ppc_q);
            demo.bfppc_u = Some(out.u);
        }
    }
    demo.pass = demo.bfppc_always_finite
        && demo.ppc_quantized.is_some_and(|v| v.is_singular())
        && demo.ppc_true.is_some_and(|v| !v.is_singular())
        && demo.bfppc_u.is_some_and(f64::is_finite);
    Ok(demo)
}

/// Samples `|f_i| <= f_i*` and `g_m <= g_i <= g_i*` uniformly on the box
/// `[-half_width, half_width]^n`.
pub fn audit_plant_majorants(plant: &PlantModel, half_width: f64, samples: usize, seed: u64) -> Result<AuditReport> {
    let ranges = vec![(-half_width, half_width); plant.order()];
    let mut r = audit_plant_majorants_in(plant, &ranges, samples, seed)?;
    r.domain = format!(
        "{samples} uniform samples of [-{half_width}, {half_width}]^{}, seed {seed}",
        plant.order()
    );
    Ok(r)
}

/// As [`audit_plant_majorants`] on an arbitrary axis-aligned box.
pub fn audit_plant_majorants_in(
    plant: &PlantModel,
    ranges: &[(f64, f64)],
    samples: usize,
    seed: u64,
) -> Result<AuditReport> {
    let n = plant.order();
    if ranges.len() != n {
        return Err(Error::invalid(format!("{} ranges for order {n}", ranges.len())));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut x = vec![0.0; n];
    let mut worst = f64::INFINITY;
    let mut at = vec![];
    for _ in 0..samples {
        for (v, &(lo, hi)) in x.iter_mut().zip(ranges) {
            *v = rng.gen_range(lo..=hi);
        }
        for i in 0..n {
            let f = plant.f(i, &x, 0.0)?;
            let g = plant.g(i, &x, 0.0)?;
            let fs = plant
                .f_star(i, &x, 0.0)
                .ok_or_else(|| Error::MissingBound(format!("f_star for channel {}", i + 1)))??;
            let gs = plant
                .g_star(i, &x, 0.0)
                .ok_or_else(|| Error::MissingBound(format!("g_star for channel {}", i + 1)))??;
            let r = (fs - f.abs()).min(g - plant.gain_floor()).min(gs - g);
            if r < worst {
                worst = r;
                at = x.clone();
            }
        }
    }
    Ok(AuditReport {
        check: "plant_majorants".into(),
        domain: format!("{samples} uniform samples of {ranges:?}, seed {seed}"),
        samples,
        worst_residual: worst,
        worst_location: at,
        pass: worst >= 0.0,
        note: Some("residual = min(f* - |f|, g - g_m, g* - g), must be >= 0".into()),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn w_function_examples() {
        let grid = Grid::uniform(&[(0.0, 2.0), (0.0, 2.0)], 21);
        let ok = check_w_function(|z| Ok(z[0] * z[0] + z[0] * z[1]), &grid).unwrap();
        assert!(ok.pass, "{ok:?}");
        let bad = check_w_function(|z| Ok(z[0] - z[1] + 10.0), &grid).unwrap();
        assert!(!bad.pass);
        assert_relative_eq!(bad.worst_residual, -1.0, epsilon = 1e-12);
        let second = check_w_function(|z| Ok(z[1] * z[0] * z[0] + z[1].exp()), &grid).unwrap();
        assert!(second.pass);
    }

    #[test]
    fn zero_function_is_not_positive() {
        let grid = Grid::uniform(&[(0.0, 1.0)], 5);
        assert!(!check_w_function(|_| Ok(0.0), &grid).unwrap().pass);
    }

    #[test]
    fn clipped_grid_respects_budget() {
        let g = Grid::clipped(&[1.0; 10], DEFAULT_GRID_BUDGET);
        assert!(g.len() <= DEFAULT_GRID_BUDGET);
        assert_eq!(g.axes[0].len(), 3);
        let g = Grid::clipped(&[1.0, 0.0], DEFAULT_GRID_BUDGET);
        assert_eq!(g.axes[1].last(), Some(&1.0));
        assert_eq!(g.axes[0].len(), 21);
    }

    #[test]
    fn majorization_residual() {
        let grid = Grid::uniform(&[(0.0, 1.0)], 101);
        let rhs = |z: &[f64]| Ok((0.15 + 1.1 * z[0]).powi(2) + 1.0 + 0.55 + 0.1);
        let pass = audit_majorization(|_| Ok(5.0), rhs, &grid).unwrap();
        assert!(pass.report.pass);
        assert_relative_eq!(pass.max_target, 3.2125, epsilon = 1e-12);
        let fail = audit_majorization(|_| Ok(3.0), rhs, &grid).unwrap();
        assert!(!fail.report.pass);
        assert_eq!(fail.report.worst_location, vec![1.0]);
        let same = audit_majorization(rhs, rhs, &grid).unwrap();
        assert!(same.report.pass);
        assert_eq!(same.report.worst_residual, 0.0);
    }

    #[test]
    fn tanh_examples() {
        let r = tanh_bound_check(1.0, 1.0, 100_001, 0.3).unwrap();
        assert!(r.report.pass);
        assert!((r.observed_max - 0.2785).abs() < 1e-3);
        let r = tanh_bound_check(6.0, 0.5, 100_001, 0.3).unwrap();
        assert!(r.report.pass);
        assert!((r.observed_max - 0.2785 * 0.5).abs() < 1e-3);
        assert!(!tanh_bound_check(1.0, 1.0, 100_001, 0.2).unwrap().report.pass);
    }

    #[test]
    fn ppc_examples() {
        assert_eq!(ppc_reference_control(1.0, 1.0, 0.0), PpcValue::Finite(0.0));
        match ppc_reference_control(1.0, 1.0, 0.5) {
            PpcValue::Finite(v) => assert_relative_eq!(v, -(3.0f64).ln(), epsilon = 1e-15),
            PpcValue::Singular => panic!("finite expected"),
        }
        assert!(ppc_reference_control(1.0, 1.0, 1.0).is_singular());
        assert!(ppc_reference_control(1.0, 1.0, -3.0).is_singular());
    }
}
