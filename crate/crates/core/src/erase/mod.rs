//! Erase schemes and the tables they consult.

mod ept;
mod outcome;
mod schemes;
mod sef;

pub use ept::{EraseTimingTable, Mode, BUCKETS, ROWS};
pub use outcome::{EraseOutcome, LoopRecord};
pub use schemes::{
    erase_aero, erase_baseline, erase_dpes, erase_iispe, erase_m_ispe, estimate_from_quanta, handle_misprediction,
    multi_plane_erase, program_latency, EraseEngine, IispeHistory, MIspeResult, Mispredictor, MultiPlaneOutcome,
    Scheme,
};
pub use sef::SefBitmap;
