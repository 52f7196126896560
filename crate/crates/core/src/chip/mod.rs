//! Flash chip model: geometry, timing, erase requirement, fail bits and wear.

mod model;
mod params;
mod profile;
mod rber;

pub use model::{BlockState, ChipModel, PulseEffect};
pub use params::{ChipParams, FailBitParams, Geometry, StressParams, TimingParams};
pub use profile::{AnchorRow, QuantileCurve};
pub use rber::RberParams;
