//! State quantizers with a uniform error bound `|q(x) - x| <= delta0`.
//!
//! The uniform kind maps to the nearest integer multiple of the interval
//! length `l0`, ties broken away from zero, so it is odd-symmetric and has
//! a dead zone `[-l0/2, l0/2)` around the origin. The hysteresis and
//! logarithmic-uniform kinds only honour the bound contract; their exact
//! level maps are not normative.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

/// Smallest logarithmic level is `l0 * 2^-LOG_LEVELS`; anything below maps to zero.
const LOG_LEVELS: i32 = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QuantizerKind {
    Uniform,
    HysteresisUniform,
    LogarithmicUniform,
}

impl fmt::Display for QuantizerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            QuantizerKind::Uniform => "uniform",
            QuantizerKind::HysteresisUniform => "hysteresis-uniform",
            QuantizerKind::LogarithmicUniform => "logarithmic-uniform",
        })
    }
}

impl FromStr for QuantizerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "uniform" => Ok(QuantizerKind::Uniform),
            "hysteresis-uniform" | "hysteresis" => Ok(QuantizerKind::HysteresisUniform),
            "logarithmic-uniform" | "logarithmic" => Ok(QuantizerKind::LogarithmicUniform),
            other => Err(Error::invalid(format!("unknown quantizer kind {other:?}"))),
        }
    }
}

/// A quantizer model. The hysteresis kind keeps one remembered level per
/// state channel, so an instance belongs to a single simulation run.
#[derive(Debug, Clone, PartialEq)]
pub struct Quantizer {
    kind: QuantizerKind,
    interval: f64,
    bound: f64,
    memory: Vec<Option<f64>>,
}

impl Quantizer {
    /// Builds a quantizer; `bound` defaults to `interval / 2`.
    pub fn new(kind: QuantizerKind, interval: f64, bound: Option<f64>) -> Result<Self> {
        if !(interval.is_finite() && interval > 0.0) {
            return Err(Error::invalid(format!(
                "quantization interval must be positive, got {interval}"
            )));
        }
        let bound = bound.unwrap_or(interval / 2.0);
        if !(bound.is_finite() && bound >= interval / 2.0) {
            return Err(Error::invalid(format!(
                "quantization bound {bound} must be at least half the interval {interval}"
            )));
        }
        Ok(Self {
            kind,
            interval,
            bound,
            memory: Vec::new(),
        })
    }

    pub fn uniform(interval: f64) -> Result<Self> {
        Self::new(QuantizerKind::Uniform, interval, None)
    }

    pub fn kind(&self) -> QuantizerKind {
        self.kind
    }

    /// Interval length `l0`.
    pub fn interval(&self) -> f64 {
        self.interval
    }

    /// Error bound `delta0`.
    pub fn bound(&self) -> f64 {
        self.bound
    }

    /// Memoryless map. For the hysteresis kind this is the underlying
    /// uniform map (what the quantizer emits on a channel with no history).
    pub fn quantize(&self, x: f64) -> Result<f64> {
        if !x.is_finite() {
            return Err(Error::Domain {
                what: "quantize",
                value: x,
            });
        }
        Ok(match self.kind {
            QuantizerKind::Uniform | QuantizerKind::HysteresisUniform => self.nearest_level(x),
            QuantizerKind::LogarithmicUniform => self.log_uniform_level(x),
        })
    }

    /// Quantizes one channel, updating the hysteresis memory when applicable.
    pub fn quantize_channel(&mut self, channel: usize, x: f64) -> Result<f64> {
        let fresh = self.quantize(x)?;
        if self.kind != QuantizerKind::HysteresisUniform {
            return Ok(fresh);
        }
        if self.memory.len() <= channel {
            self.memory.resize(channel + 1, None);
        }
        let level = match self.memory[channel] {
            Some(prev) if (x - prev).abs() <= self.bound => prev,
            _ => fresh,
        };
        self.memory[channel] = Some(level);
        Ok(level)
    }

    /// Channel-wise quantization of a state vector into `out`.
    pub fn quantize_into(&mut self, x: &[f64], out: &mut [f64]) -> Result<()> {
        debug_assert_eq!(x.len(), out.len());
        for (i, (&xi, o)) in x.iter().zip(out.iter_mut()).enumerate() {
            *o = self.quantize_channel(i, xi)?;
        }
        Ok(())
    }

    pub fn quantize_state(&mut self, x: &[f64]) -> Result<Vec<f64>> {
        let mut out = vec![0.0; x.len()];
        self.quantize_into(x, &mut out)?;
        Ok(out)
    }

    /// Forgets all hysteresis memory.
    pub fn reset(&mut self) {
        self.memory.clear();
    }

    fn nearest_level(&self, x: f64) -> f64 {
        // f64::round breaks ties away from zero.
        let level = self.interval * (x / self.interval).round();
        // avoid emitting -0.0 from the dead zone
        if level == 0.0 {
            0.0
        } else {
            level
        }
    }

    fn log_uniform_level(&self, x: f64) -> f64 {
        let mag = x.abs();
        if mag >= self.interval / 2.0 {
            return self.nearest_level(x);
        }
        let floor = self.interval * 2f64.powi(-LOG_LEVELS);
        if mag < floor / 2.0 {
            return 0.0;
        }
        let exponent = (mag / self.interval).log2().round().clamp(-LOG_LEVELS as f64, -1.0);
        x.signum() * self.interval * exponent.exp2()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn q01() -> Quantizer {
        Quantizer::uniform(0.1).unwrap()
    }

    #[test]
    fn uniform_examples() {
        let q = q01();
        assert_eq!(q.quantize(0.0).unwrap(), 0.0);
        assert_relative_eq!(q.quantize(0.07).unwrap(), 0.1, epsilon = 1e-15);
        assert_relative_eq!(q.quantize(-0.25).unwrap(), -0.3, epsilon = 1e-15);
        assert_eq!(q.quantize(0.04).unwrap(), 0.0);
    }

    #[test]
    fn state_examples() {
        let mut q = q01();
        assert_eq!(q.quantize_state(&[1.0, 0.0]).unwrap(), vec![1.0, 0.0]);
        let v = q.quantize_state(&[1.04, -0.07]).unwrap();
        assert_relative_eq!(v[0], 1.0, epsilon = 1e-15);
        assert_relative_eq!(v[1], -0.1, epsilon = 1e-15);
        assert_eq!(q.quantize_state(&[0.0, 0.0]).unwrap(), vec![0.0, 0.0]);
    }

    #[test]
    fn rejects_non_finite() {
        let q = q01();
        assert!(matches!(q.quantize(f64::NAN), Err(Error::Domain { .. })));
        assert!(q.quantize(f64::INFINITY).is_err());
        let mut q = q;
        assert!(q.quantize_state(&[0.0, f64::NEG_INFINITY]).is_err());
    }

    #[test]
    fn rejects_bad_parameters() {
        assert!(Quantizer::uniform(0.0).is_err());
        assert!(Quantizer::uniform(-1.0).is_err());
        assert!(Quantizer::new(QuantizerKind::Uniform, 0.1, Some(0.04)).is_err());
        assert!(Quantizer::new(QuantizerKind::Uniform, 0.1, Some(0.08)).is_ok());
    }

    #[test]
    fn dead_zone_is_positive_zero() {
        let q = q01();
        assert!(q.quantize(-0.01).unwrap().is_sign_positive());
    }

    #[test]
    fn hysteresis_holds_level_inside_bound() {
        let mut q = Quantizer::new(QuantizerKind::HysteresisUniform, 0.1, Some(0.08)).unwrap();
        assert_relative_eq!(q.quantize_channel(0, 0.12).unwrap(), 0.1);
        // uniform map would switch to 0.2 here, hysteresis keeps 0.1
        assert_relative_eq!(q.quantize_channel(0, 0.17).unwrap(), 0.1);
        // beyond the bound it must move
        assert_relative_eq!(q.quantize_channel(0, 0.19).unwrap(), 0.2, epsilon = 1e-15);
        // channels are independent
        assert_relative_eq!(q.quantize_channel(1, 0.17).unwrap(), 0.2, epsilon = 1e-15);
        q.reset();
        assert_relative_eq!(q.quantize_channel(0, 0.17).unwrap(), 0.2, epsilon = 1e-15);
    }

    #[test]
    fn logarithmic_is_finer_near_zero() {
        let q = Quantizer::new(QuantizerKind::LogarithmicUniform, 0.1, None).unwrap();
        assert_relative_eq!(q.quantize(0.024).unwrap(), 0.025);
        assert_relative_eq!(q.quantize(-0.024).unwrap(), -0.025);
        assert_relative_eq!(q.quantize(0.27).unwrap(), 0.3, epsilon = 1e-15);
        assert_eq!(q.quantize(1e-6).unwrap(), 0.0);
    }

    #[test]
    fn kind_parses() {
        assert_eq!("uniform".parse::<QuantizerKind>().unwrap(), QuantizerKind::Uniform);
        assert_eq!(
            "hysteresis-uniform".parse::<QuantizerKind>().unwrap(),
            QuantizerKind::HysteresisUniform
        );
        assert!("mu-law".parse::<QuantizerKind>().is_err());
    }
}
