/// Fluid-scaled long-run averages over the estimation window.
///
/// Cost components and rates are per server and per unit time, so they are
/// directly comparable with the fluid objective.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Metrics {
    pub rejection: f64,
    pub abandonment: f64,
    pub holding: f64,
    pub compensator: f64,
    pub utilization: f64,
    pub total: f64,
    pub busy_frac: f64,
    pub q_frac: f64,
    /// Abandonments per server per unit time.
    pub abandonment_rate: f64,
    /// Integral of the queued customers' patience hazards, per server per unit time.
    pub hazard_abandonment_rate: f64,
    /// `R(T) − ∫₀ᵀ Σ_queued h^r(wait) dt` over the whole run, unscaled.
    pub martingale_residual: f64,
}

pub(crate) const METRIC_COUNT: usize = 11;

impl Metrics {
    pub(crate) fn to_array(self) -> [f64; METRIC_COUNT] {
        [
            self.rejection,
            self.abandonment,
            self.holding,
            self.compensator,
            self.utilization,
            self.total,
            self.busy_frac,
            self.q_frac,
            self.abandonment_rate,
            self.hazard_abandonment_rate,
            self.martingale_residual,
        ]
    }

    pub(crate) fn from_array(v: [f64; METRIC_COUNT]) -> Self {
        Metrics {
            rejection: v[0],
            abandonment: v[1],
            holding: v[2],
            compensator: v[3],
            utilization: v[4],
            total: v[5],
            busy_frac: v[6],
            q_frac: v[7],
            abandonment_rate: v[8],
            hazard_abandonment_rate: v[9],
            martingale_residual: v[10],
        }
    }

    pub fn component_sum(&self) -> f64 {
        self.rejection + self.abandonment + self.holding + self.compensator + self.utilization
    }
}

/// Point estimates with standard errors.
///
/// A single run reports batch-means standard errors; an aggregate over
/// replications reports the across-replication standard error of the mean.
/// `mean.total` is always the sum of the mean components.
#[derive(Debug, Clone, PartialEq)]
pub struct SimEstimate {
    pub horizon: f64,
    pub burn_in: f64,
    pub replications: usize,
    pub mean: Metrics,
    pub se: Metrics,
    /// FNV-1a hash of the event trace; folded in replication order for aggregates.
    pub trace_hash: u64,
}

/// Mean and standard error of the mean of equally weighted observations.
pub(crate) fn mean_and_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len();
    if n == 0 {
        return (0.0, 0.0);
    }
    let mean = xs.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1) as f64;
    (mean, (var / n as f64).sqrt())
}

/// Column-wise mean and standard error over rows of metrics.
pub(crate) fn summarize(rows: &[Metrics]) -> (Metrics, Metrics) {
    let arrays: Vec<[f64; METRIC_COUNT]> = rows.iter().map(|m| m.to_array()).collect();
    let mut mean = [0.0; METRIC_COUNT];
    let mut se = [0.0; METRIC_COUNT];
    let mut column = Vec::with_capacity(rows.len());
    for j in 0..METRIC_COUNT {
        column.clear();
        column.extend(arrays.iter().map(|a| a[j]));
        (mean[j], se[j]) = mean_and_se(&column);
    }
    let mut mean = Metrics::from_array(mean);
    mean.total = mean.component_sum();
    (mean, Metrics::from_array(se))
}

pub(crate) const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

pub(crate) fn fnv1a(hash: u64, word: u64) -> u64 {
    word.to_le_bytes().iter().fold(hash, |h, &b| (h ^ b as u64).wrapping_mul(FNV_PRIME))
}
