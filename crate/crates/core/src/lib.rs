//! Barrier-function-free prescribed performance control.
//!
//! Controllers for uncertain strict-feedback plants, with and without state
//! quantization, whose gains come from worst-case bounds on an invariant
//! box instead of barrier terms. The crate covers parameter synthesis,
//! fixed-step closed-loop simulation and sampling audits of the side
//! conditions.

pub mod audit;
pub mod engine;
pub mod error;
pub mod plant;
pub mod quantizer;
pub mod random;
pub mod regulator;
pub mod signals;
pub mod tracker;

pub use engine::{simulate, Controller, SimOptions, SimTrace, TraceRow};
pub use error::{Error, Result};
pub use plant::expr::Expression;
pub use plant::{builtin_scenario, BuiltinScenario, ChannelFn, PlantChannel, PlantModel};
pub use quantizer::{Quantizer, QuantizerKind};
pub use regulator::{RegulationControllerConfig, RegulationParams, StageGains};
pub use signals::{PerformanceFunction, ReferenceSignal};
pub use tracker::{ChannelGains, SwitchSchedule, TrackingControllerConfig};
