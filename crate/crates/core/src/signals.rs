//! Performance functions `rho(t)` and reference trajectories `y_d(t)`.

use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::plant::expr::Expression;

/// A nonincreasing envelope shape with `rho(0) = 1`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PerformanceFunction {
    /// `(1 + cos(t / ts)) / 2` until `t = pi * ts`, zero afterwards.
    CosineTaper { ts: f64 },
    /// `(1 - floor) * exp(-rate * t) + floor`.
    Exponential { rate: f64, floor: f64 },
}

/// Supremum of `rho` and of `|d rho / dt|` over `t >= 0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PerformanceBounds {
    pub rho_max: f64,
    pub rho_dot_max: f64,
}

impl PerformanceFunction {
    pub fn cosine(ts: f64) -> Result<Self> {
        if !(ts.is_finite() && ts > 0.0) {
            return Err(Error::invalid(format!("t_s must be positive, got {ts}")));
        }
        Ok(PerformanceFunction::CosineTaper { ts })
    }

    pub fn exponential(rate: f64, floor: f64) -> Result<Self> {
        if !(rate.is_finite() && rate > 0.0) {
            return Err(Error::invalid(format!("rho0 must be positive, got {rate}")));
        }
        if !(floor > 0.0 && floor < 1.0) {
            return Err(Error::invalid(format!("rho1 must lie in (0, 1), got {floor}")));
        }
        Ok(PerformanceFunction::Exponential { rate, floor })
    }

    fn check_time(t: f64) -> Result<()> {
        if t >= 0.0 && t.is_finite() {
            Ok(())
        } else {
            Err(Error::Domain {
                what: "performance function time",
                value: t,
            })
        }
    }

    pub fn rho(&self, t: f64) -> Result<f64> {
        Self::check_time(t)?;
        Ok(match *self {
            PerformanceFunction::CosineTaper { ts } => {
                if t < PI * ts {
                    0.5 * (1.0 + (t / ts).cos())
                } else {
                    0.0
                }
            }
            PerformanceFunction::Exponential { rate, floor } => {
                (1.0 - floor) * (-rate * t).exp() + floor
            }
        })
    }

    pub fn rho_dot(&self, t: f64) -> Result<f64> {
        Self::check_time(t)?;
        Ok(match *self {
            PerformanceFunction::CosineTaper { ts } => {
                if t < PI * ts {
                    -(t / ts).sin() / (2.0 * ts)
                } else {
                    0.0
                }
            }
            PerformanceFunction::Exponential { rate, floor } => {
                -rate * (1.0 - floor) * (-rate * t).exp()
            }
        })
    }

    pub fn bounds(&self) -> PerformanceBounds {
        match *self {
            PerformanceFunction::CosineTaper { ts } => PerformanceBounds {
                rho_max: 1.0,
                rho_dot_max: 1.0 / (2.0 * ts),
            },
            PerformanceFunction::Exponential { rate, floor } => PerformanceBounds {
                rho_max: 1.0,
                rho_dot_max: rate * (1.0 - floor),
            },
        }
    }
}

/// Known bounds `|y_d| <= y0`, `|dy_d/dt| <= y1`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReferenceBounds {
    pub y0: f64,
    pub y1: f64,
}

/// Grid resolution and safety factor used to bound expression references.
const REFERENCE_GRID: usize = 20_001;
const REFERENCE_MARGIN: f64 = 1.05;

#[derive(Debug, Clone, PartialEq)]
pub enum ReferenceSignal {
    Constant(f64),
    Sine { amplitude: f64, omega: f64 },
    /// `value` is an expression in `t`; `rate` is its symbolic derivative.
    Expr { value: Expression, rate: Expression },
}

impl ReferenceSignal {
    pub fn sine(amplitude: f64, omega: f64) -> Self {
        ReferenceSignal::Sine { amplitude, omega }
    }

    pub fn parse(text: &str) -> Result<Self> {
        let value = Expression::parse(text, &["t"])?;
        let rate = value.derivative(0);
        Ok(ReferenceSignal::Expr { value, rate })
    }

    pub fn value(&self, t: f64) -> Result<f64> {
        Ok(match self {
            ReferenceSignal::Constant(c) => *c,
            ReferenceSignal::Sine { amplitude, omega } => amplitude * (omega * t).sin(),
            ReferenceSignal::Expr { value, .. } => value.eval(&[t])?,
        })
    }

    pub fn rate(&self, t: f64) -> Result<f64> {
        Ok(match self {
            ReferenceSignal::Constant(_) => 0.0,
            ReferenceSignal::Sine { amplitude, omega } => amplitude * omega * (omega * t).cos(),
            ReferenceSignal::Expr { rate, .. } => rate.eval(&[t])?,
        })
    }

    /// Analytic bounds for the built-in shapes; for expressions, the grid
    /// maximum over `[0, horizon]` inflated by 5%.
    pub fn bounds(&self, horizon: f64) -> Result<ReferenceBounds> {
        Ok(match self {
            ReferenceSignal::Constant(c) => ReferenceBounds { y0: c.abs(), y1: 0.0 },
            ReferenceSignal::Sine { amplitude, omega } => ReferenceBounds {
                y0: amplitude.abs(),
                y1: (amplitude * omega).abs(),
            },
            ReferenceSignal::Expr { .. } => {
                let (mut y0, mut y1) = (0.0f64, 0.0f64);
                for k in 0..REFERENCE_GRID {
                    let t = horizon * k as f64 / (REFERENCE_GRID - 1) as f64;
                    y0 = y0.max(self.value(t)?.abs());
                    y1 = y1.max(self.rate(t)?.abs());
                }
                ReferenceBounds {
                    y0: REFERENCE_MARGIN * y0,
                    y1: REFERENCE_MARGIN * y1,
                }
            }
        })
    }
}
