//! Seeded random regulation scenarios for property suites.
//!
//! Plants are second order with unit input gains and polynomial drifts
//! whose absolute-coefficient majorants are exact.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::engine::{stiffness_step, Controller, SimOptions, DEFAULT_STEP};
use crate::error::Result;
use crate::plant::{ChannelFn, Monomial, PlantChannel, PlantModel, Polynomial};
use crate::quantizer::Quantizer;
use crate::regulator::{standard_bounds, synthesize_regulation, RegulationControllerConfig, RegulationDesign};
use crate::signals::PerformanceFunction;

/// Floor added to the standard bounds so `H_i*` stays positive.
pub const RANDOM_BOUND_FLOOR: f64 = 0.1;

#[derive(Debug, Clone)]
pub struct RandomRegulation {
    pub seed: u64,
    pub plant: PlantModel,
    pub drifts: Vec<Polynomial>,
    pub quantizer: Quantizer,
    pub performance: PerformanceFunction,
    pub design: RegulationDesign,
}

fn random_poly(rng: &mut ChaCha8Rng, depth: usize, order: usize) -> Polynomial {
    let terms = (0..rng.gen_range(1..=3))
        .map(|_| {
            let mut powers = vec![0u32; order];
            for p in powers.iter_mut().take(depth) {
                *p = rng.gen_range(0..=2);
            }
            if powers.iter().all(|&p| p == 0) {
                powers[0] = 1;
            }
            Monomial {
                coef: rng.gen_range(-1.0..1.0),
                powers,
            }
        })
        .collect();
    Polynomial::new(terms)
}

impl RandomRegulation {
    /// Draws `f_1(x_1)`, `f_2(x_1, x_2)` with up to three monomials of
    /// degree at most 2 per state, `x(0)` in `[-1, 1]^2` and
    /// `l_0` in `[0.01, 0.2]`.
    pub fn generate(seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let interval = rng.gen_range(0.01..=0.2);
        let drifts = vec![random_poly(&mut rng, 1, 2), random_poly(&mut rng, 2, 2)];
        let x0 = vec![rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)];
        let channels = drifts
            .iter()
            .map(|f| {
                PlantChannel::unit_gain(ChannelFn::Poly(f.clone()), Some(ChannelFn::Poly(f.majorant())))
            })
            .collect();
        let plant = PlantModel::new(channels, 1.0, x0)?;
        let design = RegulationDesign {
            eps: vec![0.1, 0.5],
            c0: 0.5,
            powers: vec![3, 3],
            bounds: standard_bounds(&plant, RANDOM_BOUND_FLOOR)?,
        };
        Ok(Self {
            seed,
            plant,
            drifts,
            quantizer: Quantizer::uniform(interval)?,
            performance: PerformanceFunction::cosine(1.0)?,
            design,
        })
    }

    pub fn delta0(&self) -> f64 {
        self.quantizer.bound()
    }

    pub fn synthesize(&self) -> Result<RegulationControllerConfig> {
        let q0 = self.quantizer.clone().quantize_state(self.plant.x0())?;
        synthesize_regulation(&self.design, self.delta0(), self.performance, &q0)
    }

    pub fn controller(&self, config: RegulationControllerConfig) -> Controller {
        Controller::Regulation {
            config,
            quantizer: self.quantizer.clone(),
        }
    }

    /// Options with the step scaled to the synthesized gains.
    pub fn options(config: &RegulationControllerConfig, t_end: f64) -> SimOptions {
        SimOptions {
            step: stiffness_step(config.stiffness(), DEFAULT_STEP),
            t_end,
            record_stride: 1000,
            ..Default::default()
        }
    }
}
