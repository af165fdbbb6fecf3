//! Analytic and Monte Carlo models of cache-enabled cognitive D2D cellular
//! networks: spatial statistics, slotted multiserver queues at BSs, priority
//! queues at D2D transmitters, and a slot-level network simulator.

// `!(x > 0.0)` is how NaN gets rejected throughout.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod error;
pub mod geometry;
pub mod model;
pub mod mqueue;
pub mod numeric;
pub mod pmf;
pub mod priority;
pub mod sim;

pub use error::{Error, Result};
pub use model::ScenarioConfig;
pub use pmf::DiscretePmf;
