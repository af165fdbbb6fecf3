//! Slot-level Monte Carlo simulation of the full network.

mod engine;
mod metrics;
mod realization;
mod steady;

pub use engine::{
    run_slots, D2dTransmission, QueueEntry, ServiceRecord, SimOptions, SlotRun, Trace,
};
pub use metrics::{aggregate_replications, ClassMetrics, MetricsReport, NodeClass, NodeSummary};
pub use realization::{
    build_realization, build_replication, classify_request, stream_rng, Association,
    NetworkRealization, Route, SensingNeighbours, Stream, SENSE_CUTOFF,
};
pub use steady::{steady_classifier, Steadiness, TrendAccumulator, MAX_FINAL_LENGTH, MAX_SLOPE};

use rayon::prelude::*;

use crate::error::Result;
use crate::model::ScenarioConfig;

/// Runs `options.replications` independent replications of `cfg` and pools
/// them. Replication `r` draws from streams of `cfg.seed` reserved for `r`,
/// so configurations that differ only in `alpha` or the request rate see
/// common random numbers.
pub fn run_replications(cfg: &ScenarioConfig, options: &SimOptions) -> Result<MetricsReport> {
    options.check()?;
    let reports = (0..options.replications as u64)
        .into_par_iter()
        .map(|r| {
            let realization = build_replication(cfg, cfg.seed, r)?;
            Ok(run_slots(&realization, options)?.report)
        })
        .collect::<Result<Vec<_>>>()?;
    aggregate_replications(&reports)
}
