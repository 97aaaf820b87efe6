//! Fluid control problems for the many-server queue with abandonment.
//!
//! Without holding cost the fluid problem is
//!
//! ```text
//! min_{b ∈ [0, min{1, λ/μ}]}  a(λ − bμ) + g_U(b)
//! ```
//!
//! and with holding cost `c > 0` the term `c·q(b, 1)` is added, where
//!
//! ```text
//! q(b, p) = pλ ∫₀^{(G^r)⁻¹(1 − bμ/(pλ))} (1 − G^r(x)) dx
//! ```
//!
//! is the invariant fluid queue length when arrivals are thinned to `pλ` and
//! the servers are busy a fraction `b` of the time. The admission probability
//! that realizes the optimal busy fraction under a non-idling discipline is
//! `p* = b*μ/λ`.

use thiserror::Error;

use crate::distributions::{Distribution, DistributionError};
use crate::optimize;

/// Bracket width at which the golden-section search stops.
pub const B_TOLERANCE: f64 = 1e-10;
/// Smallest admission probability reported; `b* = 0` would otherwise give `p* = 0`.
pub const MIN_ADMISSION: f64 = 1e-9;
/// Grid size used when the objective is not known to be convex.
pub const SCAN_POINTS: usize = 10_000;
const PROBE_POINTS: usize = 1_000;
const DOMAIN_SLACK: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FluidControlError {
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("invalid cost: {0}")]
    InvalidCost(String),
    #[error("busy fraction {b} outside [0, {limit}]")]
    Domain { b: f64, limit: f64 },
    #[error("assumption violated: {0}")]
    AssumptionViolated(String),
    #[error(transparent)]
    Distribution(#[from] DistributionError),
}

/// Server-utilization cost `g_U` on `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub enum UtilizationCost {
    /// `κ b^γ` with `κ > 0`, `γ ≥ 1`.
    Power { coeff: f64, exponent: f64 },
    /// `κ b²`.
    Quadratic { coeff: f64 },
    /// Linear interpolation of `(b, g)` breakpoints spanning `[0, 1]`.
    PiecewiseLinear { breakpoints: Vec<(f64, f64)> },
}

impl UtilizationCost {
    pub fn eval(&self, b: f64) -> f64 {
        match self {
            UtilizationCost::Power { coeff, exponent } => coeff * b.max(0.0).powf(*exponent),
            UtilizationCost::Quadratic { coeff } => coeff * b * b,
            UtilizationCost::PiecewiseLinear { breakpoints } => {
                let i = segment_index(breakpoints, b);
                let (x0, y0) = breakpoints[i];
                let (x1, y1) = breakpoints[i + 1];
                y0 + (y1 - y0) * (b - x0) / (x1 - x0)
            }
        }
    }

    /// Right derivative `g_U'(b+)`.
    pub fn right_derivative(&self, b: f64) -> f64 {
        match self {
            UtilizationCost::Power { coeff, exponent } => {
                if *exponent == 1.0 {
                    *coeff
                } else {
                    coeff * exponent * b.max(0.0).powf(exponent - 1.0)
                }
            }
            UtilizationCost::Quadratic { coeff } => 2.0 * coeff * b,
            UtilizationCost::PiecewiseLinear { breakpoints } => {
                let i = segment_index(breakpoints, b);
                let (x0, y0) = breakpoints[i];
                let (x1, y1) = breakpoints[i + 1];
                (y1 - y0) / (x1 - x0)
            }
        }
    }

    /// Parameter checks, then probes `g(0) ≥ 0`, strictly positive first
    /// differences and second differences `≥ −1e−12` on a 10³-point grid.
    pub fn validate(&self) -> Result<(), FluidControlError> {
        let bad = |m: String| Err(FluidControlError::InvalidCost(m));
        match self {
            UtilizationCost::Power { coeff, exponent } => {
                if !(coeff.is_finite() && *coeff > 0.0) || !(exponent.is_finite() && *exponent >= 1.0) {
                    return bad(format!("power cost needs coeff > 0 and exponent >= 1 (got {coeff}, {exponent})"));
                }
            }
            UtilizationCost::Quadratic { coeff } => {
                if !(coeff.is_finite() && *coeff > 0.0) {
                    return bad(format!("quadratic cost needs coeff > 0 (got {coeff})"));
                }
            }
            UtilizationCost::PiecewiseLinear { breakpoints } => {
                if breakpoints.len() < 2 {
                    return bad("piecewise-linear cost needs at least two breakpoints".into());
                }
                if breakpoints[0].0 != 0.0 || breakpoints[breakpoints.len() - 1].0 != 1.0 {
                    return bad("piecewise-linear breakpoints must start at b = 0 and end at b = 1".into());
                }
                if breakpoints.windows(2).any(|w| !(w[1].0 > w[0].0)) {
                    return bad("piecewise-linear breakpoints must be strictly increasing in b".into());
                }
                if breakpoints.iter().any(|(x, y)| !x.is_finite() || !y.is_finite()) {
                    return bad("piecewise-linear breakpoints must be finite".into());
                }
            }
        }
        if self.eval(0.0) < 0.0 {
            return bad(format!("g_U(0) = {} is negative", self.eval(0.0)));
        }
        let h = 1.0 / PROBE_POINTS as f64;
        let vals: Vec<f64> = (0..=PROBE_POINTS).map(|i| self.eval(i as f64 * h)).collect();
        for (i, w) in vals.windows(2).enumerate() {
            if !(w[1] - w[0] > 0.0) {
                return bad(format!("g_U is not strictly increasing near b = {}", i as f64 * h));
            }
        }
        for (i, w) in vals.windows(3).enumerate() {
            if w[2] - 2.0 * w[1] + w[0] < -1e-12 {
                return bad(format!("g_U is not convex near b = {}", (i + 1) as f64 * h));
            }
        }
        Ok(())
    }
}

fn segment_index(bp: &[(f64, f64)], b: f64) -> usize {
    // right-continuous: a breakpoint belongs to the segment on its right
    let pos = bp.partition_point(|&(x, _)| x <= b);
    pos.saturating_sub(1).min(bp.len() - 2)
}

/// Cost parameters: `a` per abandonment or rejection, `c` per customer per
/// unit time in queue, and the utilization cost `g_U`.
#[derive(Debug, Clone, PartialEq)]
pub struct CostModel {
    pub a: f64,
    pub c: f64,
    pub utilization: UtilizationCost,
}

impl CostModel {
    pub fn new(a: f64, c: f64, utilization: UtilizationCost) -> Result<Self, FluidControlError> {
        let cost = CostModel { a, c, utilization };
        cost.validate()?;
        Ok(cost)
    }

    pub fn validate(&self) -> Result<(), FluidControlError> {
        if !(self.a.is_finite() && self.a > 0.0) {
            return Err(FluidControlError::InvalidCost(format!("a = {} must be > 0", self.a)));
        }
        if !(self.c.is_finite() && self.c >= 0.0) {
            return Err(FluidControlError::InvalidCost(format!("c = {} must be >= 0", self.c)));
        }
        self.utilization.validate()
    }

    pub fn g(&self, b: f64) -> f64 {
        self.utilization.eval(b)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Regime {
    NonIdlingOptimal,
    IdlingOptimal,
}

impl Regime {
    pub fn as_str(&self) -> &'static str {
        match self {
            Regime::NonIdlingOptimal => "non_idling_optimal",
            Regime::IdlingOptimal => "idling_optimal",
        }
    }
}

/// Solution of a fluid control problem.
#[derive(Debug, Clone, PartialEq)]
pub struct FluidDesign {
    pub lambda: f64,
    pub mu: f64,
    pub b_star: f64,
    pub p_star: f64,
    pub fluid_cost: f64,
    pub regime: Regime,
    /// `q(b*, 1)`, reported by the holding-cost solver.
    pub q_at_optimum: Option<f64>,
    /// `b* = 0`, so `p*` was clamped to [`MIN_ADMISSION`]: reject (nearly) everyone.
    pub degenerate_all_reject: bool,
    /// False when the objective was minimized by grid scan without a convexity guarantee.
    pub uniqueness_guaranteed: bool,
}

fn check_rates(lambda: f64, mu: f64) -> Result<(), FluidControlError> {
    if !(lambda.is_finite() && lambda > 0.0 && mu.is_finite() && mu > 0.0) {
        return Err(FluidControlError::InvalidInput(format!(
            "rates must be positive and finite (lambda = {lambda}, mu = {mu})"
        )));
    }
    Ok(())
}

/// Largest feasible busy fraction `min{1, pλ/μ}`.
pub fn busy_limit(lambda: f64, mu: f64, p: f64) -> f64 {
    (p * lambda / mu).min(1.0)
}

fn finish_design(
    lambda: f64,
    mu: f64,
    b_star: f64,
    fluid_cost: f64,
    q_at_optimum: Option<f64>,
    uniqueness_guaranteed: bool,
) -> FluidDesign {
    let limit = busy_limit(lambda, mu, 1.0);
    let raw_p = b_star * mu / lambda;
    let degenerate = raw_p < MIN_ADMISSION;
    let regime = if (limit - b_star).abs() <= 1e-9 { Regime::NonIdlingOptimal } else { Regime::IdlingOptimal };
    FluidDesign {
        lambda,
        mu,
        b_star,
        p_star: raw_p.clamp(MIN_ADMISSION, 1.0),
        fluid_cost,
        regime,
        q_at_optimum,
        degenerate_all_reject: degenerate,
        uniqueness_guaranteed,
    }
}

/// Minimizes `a(λ − bμ) + g_U(b)` over `[0, min{1, λ/μ}]`.
///
/// Golden-section search followed by a derivative bisection, which keeps
/// resolving `b*` after function values have flattened out at `√ε`.
pub fn solve_fluid(lambda: f64, mu: f64, cost: &CostModel) -> Result<FluidDesign, FluidControlError> {
    check_rates(lambda, mu)?;
    cost.validate()?;
    if cost.c != 0.0 {
        return Err(FluidControlError::InvalidCost(format!(
            "holding cost c = {} needs the holding-cost solver",
            cost.c
        )));
    }
    let limit = busy_limit(lambda, mu, 1.0);
    let objective = |b: f64| cost.a * (lambda - b * mu) + cost.g(b);
    let slope = |b: f64| -cost.a * mu + cost.utilization.right_derivative(b);
    let coarse = optimize::golden_section(objective, 0.0, limit, B_TOLERANCE);
    let b_star = optimize::polish_with_derivative(slope, coarse.x, 0.0, limit, 1e-6).unwrap_or(coarse.x);
    Ok(finish_design(lambda, mu, b_star, objective(b_star), None, true))
}

/// `q(b, p)`: invariant fluid queue length with arrivals thinned to `pλ`.
pub fn invariant_queue_length(
    b: f64,
    p: f64,
    lambda: f64,
    mu: f64,
    patience: &Distribution,
) -> Result<f64, FluidControlError> {
    check_rates(lambda, mu)?;
    if !(p > 0.0 && p <= 1.0) {
        return Err(FluidControlError::InvalidInput(format!("admission probability {p} outside (0, 1]")));
    }
    let limit = busy_limit(lambda, mu, p);
    if !(b >= 0.0) || b > limit + DOMAIN_SLACK {
        return Err(FluidControlError::Domain { b, limit });
    }
    let admitted = p * lambda;
    let served_share = b * mu / admitted;
    if served_share >= 1.0 {
        return Ok(0.0);
    }
    if b == 0.0 {
        return Ok(admitted * patience.mean());
    }
    // (G^r)^{-1}(1 − bμ/(pλ)), inverted on the survival side for tail accuracy
    let upper = patience.inverse_survival(served_share);
    Ok(admitted * patience.survival_integral(upper))
}

/// `q(b, p)` continued by zero past the feasible range `b > min{1, pλ/μ}`:
/// the thinned queue cannot hold mass when servers outpace admitted arrivals.
pub fn invariant_queue_length_extended(
    b: f64,
    p: f64,
    lambda: f64,
    mu: f64,
    patience: &Distribution,
) -> Result<f64, FluidControlError> {
    if b >= p * lambda / mu {
        return Ok(0.0);
    }
    invariant_queue_length(b, p, lambda, mu, patience)
}

/// Fluid-scaled holding cost compensator `C̃(b, p) = c·(q(b, 1) − q(b, p))`.
pub fn holding_compensator(
    b: f64,
    p: f64,
    lambda: f64,
    mu: f64,
    patience: &Distribution,
    c: f64,
) -> Result<f64, FluidControlError> {
    let thinned = invariant_queue_length(b, p, lambda, mu, patience)?;
    if c == 0.0 || p == 1.0 {
        return Ok(0.0);
    }
    let full = invariant_queue_length(b, 1.0, lambda, mu, patience)?;
    Ok((c * (full - thinned)).max(0.0))
}

/// `d/db q(b, 1) = −μ / h^r((G^r)⁻¹(1 − bμ/λ))` for `b ∈ (0, min{1, λ/μ}]`.
fn queue_length_slope(b: f64, lambda: f64, mu: f64, patience: &Distribution) -> f64 {
    if b <= 0.0 {
        return f64::NAN;
    }
    let x = patience.inverse_survival((b * mu / lambda).min(1.0));
    match patience.hazard(x) {
        Ok(h) if h > 0.0 => -mu / h,
        _ => f64::NAN,
    }
}

/// Minimizes `c·q(b, 1) + a(λ − bμ) + g_U(b)` over `[0, min{1, λ/μ}]`.
///
/// With `assume_dfr` the patience hazard must be non-increasing, the
/// objective is then convex and golden-section search applies. Otherwise a
/// [`SCAN_POINTS`] grid scan locates the leftmost best point before local
/// refinement and the design is flagged as not guaranteed unique.
pub fn solve_fluid_hc(
    lambda: f64,
    mu: f64,
    patience: &Distribution,
    cost: &CostModel,
    assume_dfr: bool,
) -> Result<FluidDesign, FluidControlError> {
    check_rates(lambda, mu)?;
    cost.validate()?;
    if assume_dfr {
        patience.check_nonincreasing_hazard().map_err(|e| FluidControlError::AssumptionViolated(e.to_string()))?;
    }
    let limit = busy_limit(lambda, mu, 1.0);
    let holding = |b: f64| -> f64 {
        if cost.c == 0.0 {
            0.0
        } else {
            // b stays inside [0, limit] here, so the domain check cannot fail
            cost.c * invariant_queue_length(b.min(limit), 1.0, lambda, mu, patience).unwrap_or(f64::NAN)
        }
    };
    let objective = |b: f64| holding(b) + cost.a * (lambda - b * mu) + cost.g(b);
    let slope = |b: f64| {
        let hold = if cost.c == 0.0 { 0.0 } else { cost.c * queue_length_slope(b, lambda, mu, patience) };
        hold - cost.a * mu + cost.utilization.right_derivative(b)
    };
    let (coarse, window) = if assume_dfr {
        (optimize::golden_section(objective, 0.0, limit, B_TOLERANCE), 1e-6)
    } else {
        let step = limit / (SCAN_POINTS - 1) as f64;
        (optimize::grid_then_golden(objective, 0.0, limit, SCAN_POINTS, B_TOLERANCE), step)
    };
    let mut b_star = coarse.x;
    if let Some(polished) = optimize::polish_with_derivative(slope, coarse.x, 0.0, limit, window) {
        if objective(polished) <= coarse.value + 1e-12 * coarse.value.abs().max(1.0) {
            b_star = polished;
        }
    }
    let q = invariant_queue_length(b_star, 1.0, lambda, mu, patience)?;
    Ok(finish_design(lambda, mu, b_star, objective(b_star), Some(q), assume_dfr || cost.c == 0.0))
}

/// Components of the enlarged-class fluid objective at an invariant state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CostBreakdown {
    pub rejection: f64,
    pub abandonment: f64,
    pub holding: f64,
    pub compensator: f64,
    pub utilization: f64,
}

impl CostBreakdown {
    pub fn total(&self) -> f64 {
        self.rejection + self.abandonment + self.holding + self.compensator + self.utilization
    }
}

/// Splits the objective at `(b, p)` into rejection `a(1−p)λ`, abandonment
/// `a(pλ − bμ)`, holding `c·q(b, p)`, compensator `C̃(b, p)` and `g_U(b)`.
pub fn cost_breakdown_at(
    b: f64,
    p: f64,
    lambda: f64,
    mu: f64,
    patience: &Distribution,
    cost: &CostModel,
) -> Result<CostBreakdown, FluidControlError> {
    let q = invariant_queue_length(b, p, lambda, mu, patience)?;
    Ok(CostBreakdown {
        rejection: cost.a * (1.0 - p) * lambda,
        abandonment: cost.a * (p * lambda - b * mu),
        holding: cost.c * q,
        compensator: holding_compensator(b, p, lambda, mu, patience, cost.c)?,
        utilization: cost.g(b),
    })
}

pub fn fluid_cost_breakdown(
    design: &FluidDesign,
    patience: &Distribution,
    cost: &CostModel,
) -> Result<CostBreakdown, FluidControlError> {
    let b = design.b_star.min(busy_limit(design.lambda, design.mu, design.p_star));
    cost_breakdown_at(b, design.p_star, design.lambda, design.mu, patience, cost)
}
