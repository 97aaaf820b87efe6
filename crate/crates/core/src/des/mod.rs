//! Event-driven simulation of the `N`-server queue with abandonment under
//! head-of-line service.
//!
//! Events are arrivals, abandonments, service completions and the end of a
//! server's rest period. Time integrals of piecewise-constant quantities
//! (busy servers, queue length, utilization cost, compensator) accumulate
//! exactly between events; the estimation window `(burn_in, horizon]` is cut
//! into equal batches for batch-means standard errors.

mod engine;
mod replications;
mod state;
mod stats;

pub use engine::{SimParams, Simulator};
pub use replications::{derive_params, run_replications, simulate};
pub use state::{hazard_abandonment_integrand, hl_waiting_time, snapshot_measures, Counters, Measures, SystemState};
pub use stats::{Metrics, SimEstimate};

use thiserror::Error;

use crate::fluid_control::FluidControlError;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error(transparent)]
    FluidControl(#[from] FluidControlError),
}

/// Server-side control policy.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PolicySpec {
    /// Admit each arrival independently with probability `p`, then serve the
    /// admitted queue without idling.
    ThinnedNonIdling { p: f64 },
    /// Admit everyone and never idle while customers wait.
    NonIdling,
    /// Admit everyone; after each completion the server rests for a fixed time.
    RestAfterCompletion { rest_duration: f64 },
}

impl PolicySpec {
    pub fn admission_probability(&self) -> f64 {
        match self {
            PolicySpec::ThinnedNonIdling { p } => *p,
            _ => 1.0,
        }
    }

    pub fn rest_duration(&self) -> f64 {
        match self {
            PolicySpec::RestAfterCompletion { rest_duration } => *rest_duration,
            _ => 0.0,
        }
    }

    pub fn is_non_idling(&self) -> bool {
        !matches!(self, PolicySpec::RestAfterCompletion { .. })
    }

    pub fn label(&self) -> &'static str {
        match self {
            PolicySpec::ThinnedNonIdling { .. } => "pistar",
            PolicySpec::NonIdling => "nonidle",
            PolicySpec::RestAfterCompletion { .. } => "rest",
        }
    }

    pub fn validate(&self) -> Result<(), SimError> {
        match self {
            PolicySpec::ThinnedNonIdling { p } if !(*p > 0.0 && *p <= 1.0) => {
                Err(SimError::Config(format!("admission probability p = {p} outside (0, 1]")))
            }
            PolicySpec::RestAfterCompletion { rest_duration }
                if !(*rest_duration >= 0.0 && rest_duration.is_finite()) =>
            {
                Err(SimError::Config(format!("rest duration {rest_duration} must be finite and >= 0")))
            }
            _ => Ok(()),
        }
    }

    /// Rest after each completion that brings the long-run busy fraction to `b`
    /// when the queue never empties: `(1 − b)/(bμ)`.
    pub fn rest_for_busy_fraction(b: f64, mu: f64) -> Self {
        PolicySpec::RestAfterCompletion { rest_duration: (1.0 - b) / (b * mu) }
    }
}
