use std::cmp::{Ordering, Reverse};
use std::collections::{BinaryHeap, VecDeque};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::state::{Counters, SystemState};
use super::stats::{fnv1a, summarize, Metrics, SimEstimate, FNV_OFFSET};
use super::{PolicySpec, SimError};
use crate::distributions::Distribution;
use crate::fluid_control::{invariant_queue_length_extended, CostModel};

/// Inputs of one simulation run.
///
/// `interarrival` is the per-server law with mean `1/λ`; the `N`-server
/// system sees its draws divided by `N`, i.e. arrival rate `Nλ`.
#[derive(Debug, Clone)]
pub struct SimParams {
    pub servers: usize,
    pub interarrival: Distribution,
    pub service: Distribution,
    pub patience: Distribution,
    pub policy: PolicySpec,
    pub cost: CostModel,
    pub horizon: f64,
    pub burn_in: f64,
    pub seed: u64,
    /// RNG stream; replications use their index.
    pub stream: u64,
    /// Batches for batch-means standard errors.
    pub batches: usize,
    pub track_potential_waits: bool,
}

impl SimParams {
    /// Fluid arrival rate `λ`.
    pub fn lambda(&self) -> f64 {
        1.0 / self.interarrival.mean()
    }

    pub fn mu(&self) -> f64 {
        1.0 / self.service.mean()
    }

    pub fn validate(&self) -> Result<(), SimError> {
        if self.servers == 0 {
            return Err(SimError::Config("at least one server is required".into()));
        }
        if !(self.burn_in >= 0.0 && self.burn_in.is_finite()) {
            return Err(SimError::Config(format!("burn-in {} must be finite and >= 0", self.burn_in)));
        }
        if !(self.horizon >= self.burn_in && self.horizon.is_finite()) {
            return Err(SimError::Config(format!(
                "horizon {} must be finite and >= burn-in {}",
                self.horizon, self.burn_in
            )));
        }
        if self.batches == 0 {
            return Err(SimError::Config("batch count must be positive".into()));
        }
        self.policy.validate()?;
        self.cost.validate()?;
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum EventKind {
    Arrival,
    Abandon(u64),
    Completion(usize),
    RestEnd(usize),
}

impl EventKind {
    fn tag(&self) -> u64 {
        match *self {
            EventKind::Arrival => 0,
            EventKind::Abandon(id) => 1 | (id << 2),
            EventKind::Completion(s) => 2 | ((s as u64) << 2),
            EventKind::RestEnd(s) => 3 | ((s as u64) << 2),
        }
    }
}

#[derive(Debug, Clone, Copy)]
struct Event {
    time: f64,
    seq: u64,
    kind: EventKind,
}

impl PartialEq for Event {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for Event {}
impl PartialOrd for Event {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Event {
    // reversed: the max-heap pops the earliest event, ties in scheduling order
    fn cmp(&self, other: &Self) -> Ordering {
        other.time.total_cmp(&self.time).then(other.seq.cmp(&self.seq))
    }
}

#[derive(Debug, Clone, Copy)]
struct Waiting {
    arrival: f64,
    deadline: f64,
    live: bool,
}

#[derive(Debug, Clone, Copy)]
enum Server {
    Idle,
    Busy { arrival: f64, start: f64 },
    Resting,
}

#[derive(Debug, Clone, Copy, Default)]
struct BatchSums {
    busy: f64,
    queue: f64,
    utilization: f64,
    compensator: f64,
    hazard: f64,
    rejected: u64,
    abandoned: u64,
}

/// Single-replication event loop.
pub struct Simulator {
    params: SimParams,
    rng: ChaCha8Rng,
    clock: f64,
    seq: u64,
    events: BinaryHeap<Event>,
    queue: VecDeque<Waiting>,
    head_id: u64,
    queued: usize,
    servers: Vec<Server>,
    free: BinaryHeap<Reverse<usize>>,
    busy: usize,
    resting: usize,
    last_arrival: Option<f64>,
    // admitted customers in arrival order, dropped from the front once expired
    potential: VecDeque<(f64, f64)>,
    counters: Counters,
    utilization_table: Vec<f64>,
    compensator_table: Vec<f64>,
    batch_width: f64,
    batches: Vec<BatchSums>,
    hazard_total: f64,
    trace: u64,
    finished: bool,
}

impl Simulator {
    pub fn new(params: SimParams) -> Result<Self, SimError> {
        params.validate()?;
        let n = params.servers;
        let lambda = params.lambda();
        let mu = params.mu();
        let p = params.policy.admission_probability();
        let utilization_table = (0..=n).map(|k| params.cost.g(k as f64 / n as f64)).collect();
        let compensator_table = if params.cost.c > 0.0 && p < 1.0 {
            (0..=n)
                .map(|k| {
                    let b = k as f64 / n as f64;
                    let full = invariant_queue_length_extended(b, 1.0, lambda, mu, &params.patience)?;
                    let thinned = invariant_queue_length_extended(b, p, lambda, mu, &params.patience)?;
                    Ok((params.cost.c * (full - thinned)).max(0.0))
                })
                .collect::<Result<Vec<f64>, SimError>>()?
        } else {
            vec![0.0; n + 1]
        };
        let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
        rng.set_stream(params.stream);
        let window = params.horizon - params.burn_in;
        let batch_count = params.batches;
        let mut sim = Simulator {
            rng,
            clock: 0.0,
            seq: 0,
            events: BinaryHeap::new(),
            queue: VecDeque::new(),
            head_id: 0,
            queued: 0,
            servers: vec![Server::Idle; n],
            free: (0..n).map(Reverse).collect(),
            busy: 0,
            resting: 0,
            last_arrival: None,
            potential: VecDeque::new(),
            counters: Counters::default(),
            utilization_table,
            compensator_table,
            batch_width: window / batch_count as f64,
            batches: vec![BatchSums::default(); batch_count],
            hazard_total: 0.0,
            trace: FNV_OFFSET,
            finished: false,
            params,
        };
        let first = sim.next_interarrival();
        sim.schedule(first, EventKind::Arrival);
        Ok(sim)
    }

    pub fn params(&self) -> &SimParams {
        &self.params
    }

    pub fn clock(&self) -> f64 {
        self.clock
    }

    pub fn busy(&self) -> usize {
        self.busy
    }

    pub fn queue_len(&self) -> usize {
        self.queued
    }

    pub fn idle(&self) -> usize {
        self.params.servers - self.busy - self.resting
    }

    pub fn resting(&self) -> usize {
        self.resting
    }

    pub fn counters(&self) -> Counters {
        self.counters
    }

    pub fn trace_hash(&self) -> u64 {
        self.trace
    }

    /// Time of the next pending event.
    pub fn next_event_time(&self) -> Option<f64> {
        self.events.peek().map(|e| e.time)
    }

    fn next_interarrival(&mut self) -> f64 {
        self.params.interarrival.sample(&mut self.rng) / self.params.servers as f64
    }

    fn schedule(&mut self, at: f64, kind: EventKind) {
        self.seq += 1;
        self.events.push(Event { time: at, seq: self.seq, kind });
    }

    fn window_start(&self) -> f64 {
        self.params.burn_in
    }

    fn batch_of(&self, t: f64) -> Option<usize> {
        let (lo, hi) = (self.params.burn_in, self.params.horizon);
        if !(t > lo && t <= hi) || self.batch_width <= 0.0 {
            return None;
        }
        Some((((t - lo) / self.batch_width) as usize).min(self.batches.len() - 1))
    }

    fn batch_end(&self, k: usize) -> f64 {
        if k + 1 == self.batches.len() {
            self.params.horizon
        } else {
            self.params.burn_in + (k + 1) as f64 * self.batch_width
        }
    }

    /// Integrates the piecewise-constant rates from the clock to `to`.
    fn advance(&mut self, to: f64) {
        let lo = self.clock.max(self.window_start());
        let hi = to.min(self.params.horizon);
        if hi > lo && self.batch_width > 0.0 {
            let busy = self.busy as f64;
            let queue = self.queued as f64;
            let util = self.utilization_table[self.busy];
            let comp = self.compensator_table[self.busy];
            let mut cur = lo;
            let mut k = (((lo - self.params.burn_in) / self.batch_width) as usize).min(self.batches.len() - 1);
            while cur < hi {
                let end = self.batch_end(k).min(hi);
                let dt = end - cur;
                let b = &mut self.batches[k];
                b.busy += busy * dt;
                b.queue += queue * dt;
                b.utilization += util * dt;
                b.compensator += comp * dt;
                cur = end;
                k += 1;
                if k == self.batches.len() {
                    break;
                }
            }
        }
        self.clock = self.clock.max(to);
    }

    /// Books `H(exit − arrival)` for a customer leaving the queue at `exit`,
    /// and the in-window part batch by batch.
    fn book_hazard(&mut self, arrival: f64, exit: f64) {
        let patience = &self.params.patience;
        self.hazard_total += patience.cumulative_hazard(exit - arrival);
        let lo = arrival.max(self.params.burn_in);
        let hi = exit.min(self.params.horizon);
        if !(hi > lo) || self.batch_width <= 0.0 {
            return;
        }
        let mut cur = lo;
        let mut h_cur = patience.cumulative_hazard(cur - arrival);
        let mut k = (((lo - self.params.burn_in) / self.batch_width) as usize).min(self.batches.len() - 1);
        while cur < hi {
            let end = self.batch_end(k).min(hi);
            let h_end = patience.cumulative_hazard(end - arrival);
            self.batches[k].hazard += h_end - h_cur;
            cur = end;
            h_cur = h_end;
            k += 1;
            if k == self.batches.len() {
                break;
            }
        }
    }

    fn trim_queue_front(&mut self) {
        while let Some(w) = self.queue.front() {
            if w.live {
                break;
            }
            self.queue.pop_front();
            self.head_id += 1;
        }
    }

    fn start_service(&mut self, arrival: f64) {
        let server = self.free.pop().expect("caller checked for a free server").0;
        let start = self.clock;
        let duration = self.params.service.sample(&mut self.rng);
        self.servers[server] = Server::Busy { arrival, start };
        self.busy += 1;
        self.counters.entered_service += 1;
        self.schedule(start + duration, EventKind::Completion(server));
    }

    /// Moves head-of-line customers into service while servers are free.
    fn dispatch(&mut self) {
        while self.queued > 0 && !self.free.is_empty() {
            let w = self.queue.pop_front().expect("queued count matches live entries");
            self.head_id += 1;
            self.queued -= 1;
            self.book_hazard(w.arrival, self.clock);
            self.start_service(w.arrival);
            self.trim_queue_front();
        }
    }

    fn on_arrival(&mut self) {
        let now = self.clock;
        let gap = self.next_interarrival();
        self.schedule(now + gap, EventKind::Arrival);
        self.last_arrival = Some(now);
        self.counters.arrivals += 1;
        let p = self.params.policy.admission_probability();
        let admitted = p >= 1.0 || self.rng.random::<f64>() < p;
        if !admitted {
            self.counters.rejected += 1;
            if let Some(k) = self.batch_of(now) {
                self.batches[k].rejected += 1;
            }
            return;
        }
        self.counters.admitted += 1;
        let deadline = now + self.params.patience.sample(&mut self.rng);
        if self.params.track_potential_waits {
            while self.potential.front().is_some_and(|&(_, d)| d <= now) {
                self.potential.pop_front();
            }
            self.potential.push_back((now, deadline));
        }
        if self.queued == 0 && !self.free.is_empty() {
            self.start_service(now);
            return;
        }
        let id = self.head_id + self.queue.len() as u64;
        self.queue.push_back(Waiting { arrival: now, deadline, live: true });
        self.queued += 1;
        self.schedule(deadline, EventKind::Abandon(id));
    }

    fn on_abandon(&mut self, id: u64) {
        if id < self.head_id {
            return;
        }
        let idx = (id - self.head_id) as usize;
        let Some(w) = self.queue.get_mut(idx) else { return };
        if !w.live {
            return;
        }
        w.live = false;
        let (arrival, deadline) = (w.arrival, w.deadline);
        self.queued -= 1;
        self.counters.abandoned += 1;
        if let Some(k) = self.batch_of(self.clock) {
            self.batches[k].abandoned += 1;
        }
        self.book_hazard(arrival, deadline);
        self.trim_queue_front();
    }

    fn on_completion(&mut self, server: usize) {
        self.busy -= 1;
        self.counters.departed += 1;
        let rest = self.params.policy.rest_duration();
        if rest > 0.0 {
            self.servers[server] = Server::Resting;
            self.resting += 1;
            let end = self.clock + rest;
            self.schedule(end, EventKind::RestEnd(server));
        } else {
            self.servers[server] = Server::Idle;
            self.free.push(Reverse(server));
            self.dispatch();
        }
    }

    fn on_rest_end(&mut self, server: usize) {
        self.resting -= 1;
        self.servers[server] = Server::Idle;
        self.free.push(Reverse(server));
        self.dispatch();
    }

    /// Processes the next event; returns its time.
    pub fn step(&mut self) -> f64 {
        let ev = self.events.pop().expect("the arrival stream never runs dry");
        self.advance(ev.time);
        self.trace = fnv1a(fnv1a(self.trace, ev.time.to_bits()), ev.kind.tag());
        match ev.kind {
            EventKind::Arrival => self.on_arrival(),
            EventKind::Abandon(id) => self.on_abandon(id),
            EventKind::Completion(s) => self.on_completion(s),
            EventKind::RestEnd(s) => self.on_rest_end(s),
        }
        ev.time
    }

    /// Processes every event at or before `t`, then moves the clock to `t`.
    pub fn run_until(&mut self, t: f64) {
        while self.events.peek().is_some_and(|e| e.time <= t) {
            self.step();
        }
        self.advance(t);
    }

    pub fn state(&self) -> SystemState {
        let queue = self.queue.iter().filter(|w| w.live).map(|w| w.arrival).collect();
        let in_service = self
            .servers
            .iter()
            .filter_map(|s| match *s {
                Server::Busy { arrival, start } => Some((arrival, start)),
                _ => None,
            })
            .collect();
        let potential_waits = self
            .params
            .track_potential_waits
            .then(|| self.potential.iter().filter(|&&(_, d)| d > self.clock).map(|&(a, _)| self.clock - a).collect());
        SystemState {
            clock: self.clock,
            alpha: self.clock - self.last_arrival.unwrap_or(0.0),
            queue,
            in_service,
            potential_waits,
            counters: self.counters,
            busy: self.busy,
            idle: self.idle(),
            resting: self.resting,
            servers: self.params.servers,
        }
    }

    /// Runs to the horizon and reduces the window integrals to an estimate
    /// with batch-means standard errors.
    pub fn finish(mut self) -> SimEstimate {
        let horizon = self.params.horizon;
        if !self.finished {
            self.run_until(horizon);
            // customers still waiting contribute their hazard up to the horizon
            let waiting: Vec<f64> = self.queue.iter().filter(|w| w.live).map(|w| w.arrival).collect();
            for a in waiting {
                self.book_hazard(a, horizon);
            }
            self.finished = true;
        }
        let n = self.params.servers as f64;
        let a = self.params.cost.a;
        let c = self.params.cost.c;
        let residual = self.counters.abandoned as f64 - self.hazard_total;
        let mut est = SimEstimate {
            horizon,
            burn_in: self.params.burn_in,
            replications: 1,
            mean: Metrics { martingale_residual: residual, ..Default::default() },
            se: Metrics::default(),
            trace_hash: self.trace,
        };
        if self.batch_width <= 0.0 {
            return est;
        }
        let w = self.batch_width;
        let rows: Vec<Metrics> = self
            .batches
            .iter()
            .enumerate()
            .map(|(k, s)| {
                let width = self.batch_end(k) - (self.params.burn_in + k as f64 * w);
                let scale = n * width;
                let mut m = Metrics {
                    rejection: a * s.rejected as f64 / scale,
                    abandonment: a * s.abandoned as f64 / scale,
                    holding: c * s.queue / scale,
                    compensator: s.compensator / width,
                    utilization: s.utilization / width,
                    total: 0.0,
                    busy_frac: s.busy / scale,
                    q_frac: s.queue / scale,
                    abandonment_rate: s.abandoned as f64 / scale,
                    hazard_abandonment_rate: s.hazard / scale,
                    martingale_residual: residual,
                };
                m.total = m.component_sum();
                m
            })
            .collect();
        (est.mean, est.se) = summarize(&rows);
        est
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::distributions::Role;
    use crate::fluid_control::UtilizationCost;

    pub(crate) fn mm1m(horizon: f64) -> SimParams {
        SimParams {
            servers: 1,
            interarrival: Distribution::exponential(1.0, Role::Interarrival).unwrap(),
            service: Distribution::exponential(1.0, Role::Service).unwrap(),
            patience: Distribution::exponential(1.0, Role::Patience).unwrap(),
            policy: PolicySpec::NonIdling,
            cost: CostModel::new(1.0, 0.0, UtilizationCost::Power { coeff: 1.0, exponent: 2.0 }).unwrap(),
            horizon,
            burn_in: 50.0,
            seed: 7,
            stream: 0,
            batches: 20,
            track_potential_waits: true,
        }
    }

    #[test]
    fn single_server_erlang_a_busy_and_abandonment() {
        let est = Simulator::new(mm1m(1e6)).unwrap().finish();
        let busy = 1.0 - (-1.0f64).exp();
        assert!((est.mean.busy_frac - busy).abs() < 3.0 * est.se.busy_frac, "{:?}", est);
        assert!((est.mean.abandonment_rate - (-1.0f64).exp()).abs() < 3.0 * est.se.abandonment_rate);
        assert_eq!(est.mean.total, est.mean.component_sum());
    }

    #[test]
    fn zero_window_is_all_zero() {
        let mut p = mm1m(5.0);
        p.burn_in = 5.0;
        let est = Simulator::new(p).unwrap().finish();
        assert_eq!(est.mean.total, 0.0);
        assert_eq!(est.mean.busy_frac, 0.0);
        assert_eq!(est.se.total, 0.0);
    }

    #[test]
    fn invalid_inputs_are_config_errors() {
        let mut p = mm1m(10.0);
        p.policy = PolicySpec::ThinnedNonIdling { p: 0.0 };
        assert!(matches!(Simulator::new(p), Err(SimError::Config(_))));
        let mut p = mm1m(10.0);
        p.policy = PolicySpec::RestAfterCompletion { rest_duration: -1.0 };
        assert!(matches!(Simulator::new(p), Err(SimError::Config(_))));
        let mut p = mm1m(10.0);
        p.horizon = 1.0;
        assert!(matches!(Simulator::new(p), Err(SimError::Config(_))));
    }

    #[test]
    fn flow_balance_and_non_idling_at_every_event() {
        let mut p = mm1m(200.0);
        p.servers = 5;
        let mut sim = Simulator::new(p).unwrap();
        while sim.next_event_time().unwrap() <= 200.0 {
            sim.step();
            let c = sim.counters();
            let in_system = (sim.queue_len() + sim.busy()) as u64;
            assert_eq!(c.admitted, in_system + c.abandoned + c.departed);
            assert!(!(sim.idle() > 0 && sim.queue_len() > 0));
        }
    }

    #[test]
    fn same_seed_same_trace() {
        let a = Simulator::new(mm1m(500.0)).unwrap().finish();
        let b = Simulator::new(mm1m(500.0)).unwrap().finish();
        assert_eq!(a.trace_hash, b.trace_hash);
        let mut p = mm1m(500.0);
        p.seed = 8;
        assert_ne!(Simulator::new(p).unwrap().finish().trace_hash, a.trace_hash);
    }
}
