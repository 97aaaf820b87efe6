use super::HarnessError;
use crate::distributions::Distribution;
use crate::fluid_control::{invariant_queue_length_extended, CostBreakdown, CostModel};

/// Largest state the truncation may grow to.
pub const MAX_STATES: usize = 1_000_000;
/// Bound on the neglected tail mass and first moment.
pub const TAIL_TOLERANCE: f64 = 1e-12;

/// Stationary law of the `M/M/N+M` head count and its moments.
///
/// `e_busy` and `e_queue` are expected counts (not fractions); rates are per
/// unit time for the whole system.
#[derive(Debug, Clone, PartialEq)]
pub struct OracleResult {
    pub servers: usize,
    pub admitted_rate: f64,
    pub probabilities: Vec<f64>,
    pub e_busy: f64,
    pub e_queue: f64,
    pub abandonment_rate: f64,
    pub throughput: f64,
}

/// Birth–death solution `π_{k+1} = π_k Λ / r(k+1)` with
/// `r(k) = min(k, N)μ + (k − N)⁺θ`.
///
/// Weights follow the ratio recursion in linear space, rescaled whenever they
/// grow large, so each detailed-balance step carries only one rounding; log
/// weights would lose `ulp(log w)` per step once they reach the thousands.
/// The state space grows until the remaining terms decrease geometrically
/// and bound the tail below [`TAIL_TOLERANCE`]; `k_max` is an initial size.
pub fn erlang_a_oracle(
    servers: usize,
    admitted_rate: f64,
    mu: f64,
    theta: f64,
    k_max: usize,
) -> Result<OracleResult, HarnessError> {
    if servers == 0 || !(admitted_rate > 0.0 && mu > 0.0 && theta >= 0.0) || !admitted_rate.is_finite() {
        return Err(HarnessError::Runtime(format!(
            "oracle needs N >= 1 and positive rates (N = {servers}, rate = {admitted_rate}, mu = {mu}, theta = {theta})"
        )));
    }
    let n = servers;
    let rate = |k: usize| (k.min(n) as f64) * mu + (k.saturating_sub(n) as f64) * theta;
    let mut w = vec![1.0f64];
    let mut peak = 1.0f64;
    let mut k = 0usize;
    loop {
        let next = w[k] * admitted_rate / rate(k + 1);
        w.push(next);
        k += 1;
        peak = peak.max(next);
        if peak > RESCALE {
            w.iter_mut().for_each(|x| *x /= RESCALE);
            peak /= RESCALE;
        }
        if k >= k_max.max(n) {
            // terms beyond k shrink at least by the ratio ρ = Λ/r(k+1), so the
            // neglected first moment is at most w_k ρ/(1−ρ)·(k + 1/(1−ρ))
            let ratio = admitted_rate / rate(k + 1);
            if ratio < 1.0 {
                let tail = w[k] / peak * ratio / (1.0 - ratio) * (k as f64 + 1.0 / (1.0 - ratio));
                if tail < TAIL_TOLERANCE {
                    break;
                }
            }
        }
        if k >= MAX_STATES {
            return Err(HarnessError::Truncation { states: MAX_STATES });
        }
    }
    let norm = compensated_sum(w.iter().copied());
    let probabilities: Vec<f64> = w.iter().map(|x| x / norm).collect();
    let e_busy = compensated_sum(probabilities.iter().enumerate().map(|(k, p)| k.min(n) as f64 * p));
    let e_queue = compensated_sum(probabilities.iter().enumerate().map(|(k, p)| k.saturating_sub(n) as f64 * p));
    Ok(OracleResult {
        servers,
        admitted_rate,
        probabilities,
        e_busy,
        e_queue,
        abandonment_rate: theta * e_queue,
        throughput: mu * e_busy,
    })
}

/// Weights are divided by this once the largest exceeds it.
const RESCALE: f64 = 1e200;

/// Neumaier summation.
fn compensated_sum(xs: impl Iterator<Item = f64>) -> f64 {
    let (mut sum, mut carry) = (0.0f64, 0.0f64);
    for x in xs {
        let t = sum + x;
        carry += if sum.abs() >= x.abs() { (sum - t) + x } else { (x - t) + sum };
        sum = t;
    }
    sum + carry
}

/// Exact long-run cost of the thinned non-idling policy, per server, with
/// fluid arrival rate `lambda` and admission probability `p`.
pub fn oracle_cost(
    oracle: &OracleResult,
    lambda: f64,
    p: f64,
    mu: f64,
    patience: &Distribution,
    cost: &CostModel,
) -> Result<CostBreakdown, HarnessError> {
    let n = oracle.servers as f64;
    let mut utilization = 0.0;
    let mut compensator = 0.0;
    for (k, prob) in oracle.probabilities.iter().enumerate() {
        let b = k.min(oracle.servers) as f64 / n;
        utilization += prob * cost.g(b);
        if cost.c > 0.0 && p < 1.0 {
            let full = invariant_queue_length_extended(b, 1.0, lambda, mu, patience)?;
            let thinned = invariant_queue_length_extended(b, p, lambda, mu, patience)?;
            compensator += prob * (cost.c * (full - thinned)).max(0.0);
        }
    }
    Ok(CostBreakdown {
        rejection: cost.a * (1.0 - p) * lambda,
        abandonment: cost.a * oracle.abandonment_rate / n,
        holding: cost.c * oracle.e_queue / n,
        compensator,
        utilization,
    })
}
