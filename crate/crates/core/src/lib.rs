//! Deterministic discrete-event simulator of one LLM serving node that
//! multiplexes many LoRA adapters over a shared base model.
//!
//! The crate is `no_std` (with `alloc`): file formats, the command line and
//! parallel sweeps live in the companion `lorasim` crate.

#![no_std]

extern crate alloc;

pub mod cache;
pub mod config;
pub mod cost;
pub mod engine;
pub mod metrics;
pub mod model;
pub mod scheduler;
pub mod time;
pub mod workload;

pub use config::{validate_config, FieldError, SimConfig};
pub use engine::{run, SimError, SimOutput};
pub use time::{SimDuration, SimTime};

/// Generate the configured synthetic workload and simulate it.
pub fn simulate(cfg: &SimConfig) -> Result<SimOutput, SimError> {
    let catalog = cfg.catalog();
    let requests = workload::generate_arrivals(&cfg.workload, &catalog);
    run(cfg, &catalog, &requests)
}
