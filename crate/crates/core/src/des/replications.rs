use rayon::prelude::*;

use super::engine::{SimParams, Simulator};
use super::stats::{fnv1a, summarize, Metrics, SimEstimate, FNV_OFFSET};
use super::SimError;

/// One replication: run to the horizon on the configured stream.
pub fn simulate(params: &SimParams) -> Result<SimEstimate, SimError> {
    Ok(Simulator::new(params.clone())?.finish())
}

/// Parameters of replication `index`: same master seed, stream `index`.
pub fn derive_params(params: &SimParams, index: usize) -> SimParams {
    SimParams { stream: index as u64, ..params.clone() }
}

/// Independent replications reduced in index order, so the result does not
/// depend on `parallel`. With one replication the single run's batch-means
/// estimate is returned unchanged.
pub fn run_replications(params: &SimParams, replications: usize, parallel: bool) -> Result<SimEstimate, SimError> {
    if replications == 0 {
        return Err(SimError::Config("at least one replication is required".into()));
    }
    params.validate()?;
    let run = |i: usize| simulate(&derive_params(params, i));
    let runs: Vec<SimEstimate> = if parallel {
        (0..replications).into_par_iter().map(run).collect::<Result<_, _>>()?
    } else {
        (0..replications).map(run).collect::<Result<_, _>>()?
    };
    if replications == 1 {
        return Ok(runs.into_iter().next().expect("one run"));
    }
    let rows: Vec<Metrics> = runs.iter().map(|r| r.mean).collect();
    let (mean, se) = summarize(&rows);
    let trace_hash = runs.iter().fold(FNV_OFFSET, |h, r| fnv1a(h, r.trace_hash));
    Ok(SimEstimate { horizon: params.horizon, burn_in: params.burn_in, replications, mean, se, trace_hash })
}
