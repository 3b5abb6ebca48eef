//! The two bundled example systems with their stock constants.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use super::{ChannelFn, PlantChannel, PlantModel};
use crate::error::{Error, Result};
use crate::quantizer::Quantizer;
use crate::regulator::{RegulationBound, RegulationBoundArgs, RegulationDesign, StageGains};
use crate::signals::{PerformanceFunction, ReferenceSignal};
use crate::tracker::{standard_tracking_bounds, ChannelGains, GainFill, TrackingDesign};

pub const BUILTIN_NAMES: [&str; 2] = ["example1", "example2"];

/// A built-in scenario: plant plus the inputs needed to build its controller.
#[derive(Debug, Clone)]
pub enum BuiltinScenario {
    Regulation(RegulationSetup),
    Tracking(TrackingSetup),
}

impl BuiltinScenario {
    pub fn plant(&self) -> &PlantModel {
        match self {
            BuiltinScenario::Regulation(s) => &s.plant,
            BuiltinScenario::Tracking(s) => &s.plant,
        }
    }
}

#[derive(Debug, Clone)]
pub struct RegulationSetup {
    pub plant: PlantModel,
    pub quantizer: Quantizer,
    pub performance: PerformanceFunction,
    pub design: RegulationDesign,
    /// Stock `gamma_i, c_i, N_i, H_i`.
    pub nominal_gains: Vec<StageGains>,
}

#[derive(Debug, Clone)]
pub struct TrackingSetup {
    pub plant: PlantModel,
    pub reference: ReferenceSignal,
    pub performance: Vec<PerformanceFunction>,
    pub design: TrackingDesign,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BuiltinName {
    Example1,
    Example2,
}

impl FromStr for BuiltinName {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "example1" => Ok(BuiltinName::Example1),
            "example2" => Ok(BuiltinName::Example2),
            _ => Err(Error::UnknownScenario(s.to_string())),
        }
    }
}

impl fmt::Display for BuiltinName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            BuiltinName::Example1 => "example1",
            BuiltinName::Example2 => "example2",
        })
    }
}

pub fn builtin_scenario(name: &str) -> Result<BuiltinScenario> {
    Ok(match name.parse::<BuiltinName>()? {
        BuiltinName::Example1 => BuiltinScenario::Regulation(example1()?),
        BuiltinName::Example2 => BuiltinScenario::Tracking(example2()?),
    })
}

// ---------------------------------------------------------------------------
// example 1: quantized regulation

pub fn example1_plant() -> Result<PlantModel> {
    PlantModel::new(
        vec![
            PlantChannel::unit_gain(
                ChannelFn::native(|x, _| x[0] * x[0] - x[0].sin()),
                Some(ChannelFn::native(|x, _| x[0] * x[0] + 1.0)),
            ),
            PlantChannel::unit_gain(
                ChannelFn::native(|x, _| x[0] * x[1] * x[1]),
                Some(ChannelFn::native(|x, _| x[0].abs() * x[1] * x[1])),
            ),
        ],
        1.0,
        vec![1.0, 0.0],
    )
}

/// Shift `|x^q_i(0)| + 2 delta0` bounding `|x_i(0)|`-type offsets.
fn shift(q: f64, d0: f64) -> f64 {
    q + 2.0 * d0
}

/// `(|e_1| + rho (|q_1| + 2d0))^2 + 1 + |rho_dot| (|q_1| + 2d0) + |q_2| + 2d0`.
#[derive(Debug, Clone, Copy)]
pub struct Example1StageOne;

impl RegulationBound for Example1StageOne {
    fn eval(&self, a: &RegulationBoundArgs, _: &[StageGains]) -> Result<f64> {
        let s1 = shift(a.q_x0[0], a.delta0);
        let s2 = shift(a.q_x0[1], a.delta0);
        let x1 = a.errors[0] + a.rho * s1;
        Ok(x1 * x1 + 1.0 + a.rho_dot * s1 + s2)
    }
}

/// `|alpha_1'| (H_1 + |alpha_1| + |e_2|) + |rho_dot| (|q_2| + 2d0)
///  + (|e_1| + rho (|q_1| + 2d0)) (|e_2| + |alpha_1| + rho (|q_2| + 2d0))^2`
/// with `|alpha_1|`, `|alpha_1'|` bounded through the stage-1 gains.
#[derive(Debug, Clone, Copy)]
pub struct Example1StageTwo;

impl RegulationBound for Example1StageTwo {
    fn eval(&self, a: &RegulationBoundArgs, earlier: &[StageGains]) -> Result<f64> {
        let g = earlier
            .first()
            .ok_or_else(|| Error::MissingBound("stage-1 gains for the stage-2 bound".into()))?;
        let s1 = shift(a.q_x0[0], a.delta0);
        let s2 = shift(a.q_x0[1], a.delta0);
        let (e1, e2) = (a.errors[0], a.errors[1]);
        let alpha = g.law_bound(e1);
        let alpha_dot = g.slope_bound(e1) * (g.h + alpha + e2);
        let x2 = e2 + alpha + a.rho * s2;
        Ok(alpha_dot + a.rho_dot * s2 + (e1 + a.rho * s1) * x2 * x2)
    }
}

pub fn example1() -> Result<RegulationSetup> {
    let quantizer = Quantizer::uniform(0.1)?;
    let nominal_gains = vec![
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
    ];
    Ok(RegulationSetup {
        plant: example1_plant()?,
        quantizer,
        performance: PerformanceFunction::cosine(1.0)?,
        design: RegulationDesign {
            eps: vec![0.05, 0.5],
            c0: 0.5,
            powers: vec![3, 3],
            bounds: vec![
                Arc::new(Example1StageOne) as Arc<dyn RegulationBound>,
                Arc::new(Example1StageTwo),
            ],
        },
        nominal_gains,
    })
}

// ---------------------------------------------------------------------------
// example 2: tracking with a two-stage schedule

pub fn example2_plant() -> Result<PlantModel> {
    PlantModel::new(
        vec![
            PlantChannel {
                f: ChannelFn::native(|x, _| x[0] + x[0] * (-0.5 * x[0]).exp()),
                g: ChannelFn::native(|x, _| 1.0 + (x[0] * x[0]).sin()),
                f_star: Some(ChannelFn::native(|x, _| {
                    let a = x[0].abs();
                    a + a * (0.5 * a).exp()
                })),
                g_star: Some(ChannelFn::Const(2.0)),
            },
            PlantChannel {
                f: ChannelFn::native(|x, _| x[0] * x[1].sin() + x[0] * x[1] * x[1]),
                g: ChannelFn::native(|x, _| 3.0 + x[0].cos()),
                f_star: Some(ChannelFn::native(|x, _| {
                    let a = x[0].abs();
                    a + a * x[1] * x[1]
                })),
                g_star: Some(ChannelFn::Const(4.0)),
            },
        ],
        1.0,
        vec![0.5, 0.0],
    )
}

/// Bound on every `|rho_dot_i|` used in the stock worst-case argument
/// lists (the cosine taper itself only needs 0.5).
pub const EXAMPLE2_RHO_DOT_BOUND: f64 = 1.0;

pub fn example2() -> Result<TrackingSetup> {
    let plant = example2_plant()?;
    let bounds = standard_tracking_bounds(&plant)?;
    let stage1 = vec![
        ChannelGains {
            k: 2.0,
            m: 6.0,
            c: 0.1,
            power: 3,
        },
        ChannelGains {
            k: 1.0,
            m: 0.1,
            c: 2.0,
            power: 3,
        },
    ];
    // Final stage: k and N as given, M and c carried over from stage 1
    // and raised by synthesis where needed.
    let stage2 = vec![
        ChannelGains {
            k: 2.0,
            power: 3,
            ..stage1[0]
        },
        ChannelGains {
            k: 2.0,
            power: 5,
            ..stage1[1]
        },
    ];
    let cosine = PerformanceFunction::cosine(1.0)?;
    Ok(TrackingSetup {
        plant,
        reference: ReferenceSignal::sine(1.0, 1.0),
        performance: vec![cosine, cosine],
        design: TrackingDesign {
            stages: vec![stage1, stage2],
            thresholds: vec![vec![0.04, 1.0], vec![0.05, 2.0]],
            eps: vec![0.5, 0.5],
            fill: vec![GainFill::M, GainFill::C],
            bounds,
            rho_dot_bound: Some(EXAMPLE2_RHO_DOT_BOUND),
        },
    })
}
