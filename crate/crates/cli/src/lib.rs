//! Scenario files, runs, reports and plots for the `bfppc` binary.

pub mod commands;
pub mod csv;
pub mod plots;
pub mod report;
pub mod run;
pub mod scenario;

pub use commands::{run_audit, AuditCheck, AuditOptions};
pub use run::{run_scenario, RunFlags, RunOutcome};
pub use scenario::{load_scenario, parse_scenario, Scenario};
