//! Fluid control, many-server simulation and fluid-model integration for the
//! GI/GI/N+GI queue with abandonment, utilization and holding costs.
//!
//! - [`distributions`]: the primitive interarrival, service and patience laws.
//! - [`fluid_control`]: optimal busy fraction `b*`, admission probability `p*`
//!   and the fluid cost lower bound.
//! - [`des`]: event-driven simulation of the `N`-server system under thinned
//!   non-idling, plain non-idling and rest-after-completion policies.
//! - [`fluid_model`]: age-structured integration of the measure-valued fluid model.
//! - [`harness`]: configuration, the Erlang-A oracle, sweeps over `N` and CSV output.

// negated float comparisons such as `!(x > 0.0)` are deliberate: they also reject NaN
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod des;
pub mod distributions;
pub mod fluid_control;
pub mod fluid_model;
pub mod harness;
pub mod optimize;
pub mod quadrature;
