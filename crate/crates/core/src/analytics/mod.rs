//! Experiments and reports built on top of the simulator.

mod calibrate;
mod characterize;
mod latency;
mod lifetime;
mod report;

pub use calibrate::{calibrate, fit_wear, Calibration, CalibrationAnchors};
pub use characterize::{characterize, shallow_sweep, CharacterizeConfig, Characterization, PecOccupancy, ShallowSweepPoint};
pub use latency::{percentile_rank, LatencyStats, LatencySummary};
pub use lifetime::{
    allowed_deficits, ept_for_requirement, lifetime_experiment, stratified_hardness, LifetimeConfig, LifetimeCurve,
};
pub use report::{add_latency_tables, lifetime_csv, LatencyRow, Report, PERCENTILE_TABLES};
