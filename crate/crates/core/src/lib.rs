//! Trace-driven SSD simulator built around adaptive block erasure.
//!
//! The crate is split into the behavioral NAND model ([`chip`]), the erase
//! schemes that drive it ([`erase`]), a page-mapped FTL ([`ftl`]), a
//! discrete-event datapath simulator ([`sim`]), trace handling
//! ([`workload`]) and the experiment/report layer ([`analytics`]).

pub mod analytics;
pub mod chip;
pub mod cli;
pub mod config;
pub mod erase;
pub mod error;
pub mod ftl;
pub mod rng;
pub mod sim;
pub mod units;
pub mod workload;

pub use error::{Error, Result};
