use crate::distributions::Distribution;

/// Event counts since time zero.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Counters {
    pub arrivals: u64,
    pub admitted: u64,
    pub rejected: u64,
    pub abandoned: u64,
    pub departed: u64,
    pub entered_service: u64,
}

/// Owned snapshot of the simulated system.
///
/// `queue` holds arrival times of queued customers, oldest first.
/// `in_service` holds `(arrival, service start)` pairs. `potential_waits`
/// holds the elapsed time since arrival of every admitted customer whose
/// patience has not run out, whether queued, in service or departed; it is
/// `None` when the simulator was not asked to track it.
#[derive(Debug, Clone, PartialEq)]
pub struct SystemState {
    pub clock: f64,
    pub alpha: f64,
    pub queue: Vec<f64>,
    pub in_service: Vec<(f64, f64)>,
    pub potential_waits: Option<Vec<f64>>,
    pub counters: Counters,
    pub busy: usize,
    pub idle: usize,
    pub resting: usize,
    pub servers: usize,
}

impl SystemState {
    pub fn queue_len(&self) -> usize {
        self.queue.len()
    }

    /// Customers in the system, `B + Q`.
    pub fn in_system(&self) -> usize {
        self.busy + self.queue.len()
    }
}

/// Waiting time of the head-of-line customer; zero for an empty queue.
pub fn hl_waiting_time(state: &SystemState) -> f64 {
    state.queue.first().map_or(0.0, |&a| state.clock - a)
}

/// `Σ h^r(wait)` over queued customers: the instantaneous abandonment
/// intensity. Every queued customer is a potential-wait atom no older than the
/// head-of-line customer and vice versa, so the sum runs over the queue.
pub fn hazard_abandonment_integrand(state: &SystemState, patience: &Distribution) -> f64 {
    state.queue.iter().map(|&a| patience.hazard(state.clock - a).unwrap_or(f64::INFINITY)).sum()
}

/// Unscaled measure-valued state: service ages, potential waits, time since
/// the last arrival and the head count.
#[derive(Debug, Clone, PartialEq)]
pub struct Measures {
    pub nu: Vec<f64>,
    pub eta: Vec<f64>,
    pub alpha: f64,
    pub x: usize,
}

pub fn snapshot_measures(state: &SystemState) -> Measures {
    let nu = state.in_service.iter().map(|&(_, start)| state.clock - start).collect();
    let eta = match &state.potential_waits {
        Some(w) => w.clone(),
        None => state.queue.iter().map(|&a| state.clock - a).collect(),
    };
    Measures { nu, eta, alpha: state.alpha, x: state.in_system() }
}
