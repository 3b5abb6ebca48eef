//! Strict-feedback plants
//!
//! `dx_i/dt = f_i(x_1..x_i) + g_i(x_1..x_i) * x_{i+1}` for `i < n` and
//! `dx_n/dt = f_n(x) + g_n(x) * u`, with known majorants
//! `|f_i| <= f_i*` and `g_m <= g_i <= g_i*`.

pub mod builtin;
pub mod expr;

use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};
use expr::Expression;

pub use builtin::{builtin_scenario, BuiltinScenario, BUILTIN_NAMES};

/// Native evaluator: receives the leading states `x_1..x_i` and time.
pub type NativeFn = Arc<dyn Fn(&[f64], f64) -> f64 + Send + Sync>;

/// One term `coef * prod_j x_j^powers[j]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Monomial {
    pub coef: f64,
    pub powers: Vec<u32>,
}

/// A multivariate polynomial in the leading states.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Polynomial {
    pub terms: Vec<Monomial>,
}

impl Polynomial {
    pub fn new(terms: Vec<Monomial>) -> Self {
        Self { terms }
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        self.terms
            .iter()
            .map(|m| {
                m.powers
                    .iter()
                    .zip(x)
                    .fold(m.coef, |acc, (&p, &xi)| acc * xi.powi(p as i32))
            })
            .sum()
    }

    /// Same monomials with absolute coefficients, so that
    /// `|p(x)| <= p.majorant().eval(|x|)` and the result is nondecreasing
    /// in every `|x_j|`.
    pub fn majorant(&self) -> Polynomial {
        Polynomial {
            terms: self
                .terms
                .iter()
                .map(|m| Monomial {
                    coef: m.coef.abs(),
                    powers: m.powers.clone(),
                })
                .collect(),
        }
    }

    /// Highest state index (1-based) with a nonzero power.
    pub fn depth(&self) -> usize {
        self.terms
            .iter()
            .filter_map(|m| m.powers.iter().rposition(|&p| p > 0).map(|i| i + 1))
            .max()
            .unwrap_or(0)
    }
}

/// Evaluator for one of `f_i`, `g_i`, `f_i*`, `g_i*`.
#[derive(Clone)]
pub enum ChannelFn {
    Const(f64),
    Poly(Polynomial),
    Native(NativeFn),
    /// Expression over `x1..xn, t` (variable `n` is `t`).
    Expr(Expression),
}

impl fmt::Debug for ChannelFn {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ChannelFn::Const(c) => write!(f, "Const({c})"),
            ChannelFn::Poly(p) => write!(f, "Poly({p:?})"),
            ChannelFn::Native(_) => f.write_str("Native(..)"),
            ChannelFn::Expr(e) => write!(f, "Expr({e})"),
        }
    }
}

impl ChannelFn {
    pub fn native(f: impl Fn(&[f64], f64) -> f64 + Send + Sync + 'static) -> Self {
        ChannelFn::Native(Arc::new(f))
    }

    /// Evaluates on the leading states `x` (length `i`) of an order-`n` plant.
    pub fn eval(&self, x: &[f64], t: f64, order: usize) -> Result<f64> {
        Ok(match self {
            ChannelFn::Const(c) => *c,
            ChannelFn::Poly(p) => p.eval(x),
            ChannelFn::Native(f) => f(x, t),
            ChannelFn::Expr(e) => {
                let mut buf = [0.0f64; 17];
                if order < buf.len() {
                    buf[..x.len()].copy_from_slice(x);
                    buf[order] = t;
                    e.eval(&buf[..=order])?
                } else {
                    let mut v = vec![0.0; order + 1];
                    v[..x.len()].copy_from_slice(x);
                    v[order] = t;
                    e.eval(&v)?
                }
            }
        })
    }

    /// Variable names for an order-`n` plant expression: `x1..xn, t`.
    pub fn variable_names(order: usize) -> Vec<String> {
        (1..=order)
            .map(|i| format!("x{i}"))
            .chain(std::iter::once("t".to_string()))
            .collect()
    }

    /// Parses a channel expression and enforces that it only references
    /// `x1..x{channel}` and `t`.
    pub fn parse(text: &str, order: usize, channel: usize) -> Result<Self> {
        let e = Expression::parse(text, &Self::variable_names(order))?;
        if let Some(&bad) = e
            .used_variables()
            .iter()
            .find(|&&v| v >= channel && v < order)
        {
            return Err(Error::invalid(format!(
                "channel {channel} expression {text:?} depends on x{}; strict-feedback form allows x1..x{channel}",
                bad + 1
            )));
        }
        Ok(ChannelFn::Expr(e))
    }
}

#[derive(Debug, Clone)]
pub struct PlantChannel {
    pub f: ChannelFn,
    pub g: ChannelFn,
    pub f_star: Option<ChannelFn>,
    pub g_star: Option<ChannelFn>,
}

impl PlantChannel {
    /// Channel with unit input gain, as in the quantized regulation setting.
    pub fn unit_gain(f: ChannelFn, f_star: Option<ChannelFn>) -> Self {
        Self {
            f,
            g: ChannelFn::Const(1.0),
            f_star,
            g_star: Some(ChannelFn::Const(1.0)),
        }
    }
}

/// An order-`n` strict-feedback plant. Immutable once built.
#[derive(Debug, Clone)]
pub struct PlantModel {
    channels: Vec<PlantChannel>,
    gain_floor: f64,
    x0: Vec<f64>,
}

impl PlantModel {
    pub fn new(channels: Vec<PlantChannel>, gain_floor: f64, x0: Vec<f64>) -> Result<Self> {
        if channels.is_empty() {
            return Err(Error::invalid("plant order must be at least 1"));
        }
        if x0.len() != channels.len() {
            return Err(Error::invalid(format!(
                "initial state has {} components, plant order is {}",
                x0.len(),
                channels.len()
            )));
        }
        if !(gain_floor > 0.0 && gain_floor.is_finite()) {
            return Err(Error::invalid(format!("g_m must be positive, got {gain_floor}")));
        }
        if x0.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("initial state must be finite"));
        }
        Ok(Self {
            channels,
            gain_floor,
            x0,
        })
    }

    pub fn order(&self) -> usize {
        self.channels.len()
    }

    pub fn channels(&self) -> &[PlantChannel] {
        &self.channels
    }

    /// Lower input-gain bound `g_m`.
    pub fn gain_floor(&self) -> f64 {
        self.gain_floor
    }

    pub fn x0(&self) -> &[f64] {
        &self.x0
    }

    pub fn with_x0(mut self, x0: Vec<f64>) -> Result<Self> {
        if x0.len() != self.order() {
            return Err(Error::invalid("initial state dimension mismatch"));
        }
        self.x0 = x0;
        Ok(self)
    }

    pub fn f(&self, i: usize, x: &[f64], t: f64) -> Result<f64> {
        self.channels[i].f.eval(&x[..=i], t, self.order())
    }

    pub fn g(&self, i: usize, x: &[f64], t: f64) -> Result<f64> {
        self.channels[i].g.eval(&x[..=i], t, self.order())
    }

    pub fn f_star(&self, i: usize, x: &[f64], t: f64) -> Option<Result<f64>> {
        self.channels[i]
            .f_star
            .as_ref()
            .map(|m| m.eval(&x[..=i], t, self.order()))
    }

    pub fn g_star(&self, i: usize, x: &[f64], t: f64) -> Option<Result<f64>> {
        self.channels[i]
            .g_star
            .as_ref()
            .map(|m| m.eval(&x[..=i], t, self.order()))
    }

    /// Writes `dx/dt` for input `u` into `out`.
    pub fn eval_derivative_into(&self, x: &[f64], u: f64, t: f64, out: &mut [f64]) -> Result<()> {
        let n = self.order();
        if x.len() != n || out.len() != n {
            return Err(Error::invalid(format!(
                "state has {} components, plant order is {n}",
                x.len()
            )));
        }
        if let Some(bad) = x.iter().find(|v| !v.is_finite()) {
            return Err(Error::Divergence {
                time: Some(t),
                message: format!("non-finite state component {bad}"),
            });
        }
        for i in 0..n {
            let drive = if i + 1 < n { x[i + 1] } else { u };
            let v = self.f(i, x, t)? + self.g(i, x, t)? * drive;
            if !v.is_finite() {
                return Err(Error::Divergence {
                    time: Some(t),
                    message: format!("non-finite derivative in channel {}", i + 1),
                });
            }
            out[i] = v;
        }
        Ok(())
    }

    pub fn eval_derivative(&self, x: &[f64], u: f64, t: f64) -> Result<Vec<f64>> {
        let mut out = vec![0.0; x.len()];
        self.eval_derivative_into(x, u, t, &mut out)?;
        Ok(out)
    }
}
