//! Primitive laws of the many-server model: interarrival, service and patience.
//!
//! Every family on the menu is absolutely continuous on `[0, ∞)` (or on a
//! bounded interval for [`Family::UniformShifted`]) and exposes the functionals
//! the fluid formulas need: cdf, survival, density, hazard, cumulative hazard,
//! quantiles, mean, the survival integral `∫₀ᵘ (1 − G(x)) dx`, and sampling.
//!
//! | family | survival `1 − G(x)` | hazard shape |
//! |---|---|---|
//! | `Exponential(r)` | `e^{−rx}` | constant |
//! | `Erlang(k, r)` | `e^{−rx} Σ_{n<k} (rx)ⁿ/n!` | increasing (k ≥ 2) |
//! | `HyperExponential(w, r)` | `Σ wᵢ e^{−rᵢx}` | decreasing |
//! | `LogNormal(m, s)` | `½ erfc((ln x − m)/(s√2))` | hump |
//! | `UniformShifted(lo, hi)` | `(hi − x)/(hi − lo)` | unbounded at `hi` |
//! | `Weibull(k, λ)` | `e^{−(x/λ)^k}` | monotone in `k` |

use rand::Rng;
use rand_distr::StandardNormal;
use statrs::function::erf::{erfc, erfc_inv};
use statrs::function::gamma::gamma;
use std::f64::consts::SQRT_2;
use thiserror::Error;

use crate::quadrature;

/// Hazard values above this are treated as unbounded when validating patience laws.
pub const HAZARD_BOUND: f64 = 1e6;
/// Number of probe points used by the numerical hazard checks.
pub const PROBE_POINTS: usize = 10_000;
/// Tail level up to which the numerical hazard checks probe the support.
pub const PROBE_TAIL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DistributionError {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("patience law has unbounded hazard: {0}")]
    UnboundedHazard(String),
    #[error("evaluation point {x} lies past the right edge of the support")]
    PastSupportEdge { x: f64 },
    #[error("assumption violated: {0}")]
    AssumptionViolated(String),
}

/// Which primitive a law plays in the model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Role {
    Interarrival,
    Service,
    Patience,
}

impl Role {
    pub fn as_str(&self) -> &'static str {
        match self {
            Role::Interarrival => "interarrival",
            Role::Service => "service",
            Role::Patience => "patience",
        }
    }
}

/// Parametric family with its parameters.
#[derive(Debug, Clone, PartialEq)]
pub enum Family {
    Exponential { rate: f64 },
    Erlang { shape: u32, rate: f64 },
    HyperExponential { weights: Vec<f64>, rates: Vec<f64> },
    LogNormal { mu: f64, sigma: f64 },
    UniformShifted { lo: f64, hi: f64 },
    Weibull { shape: f64, scale: f64 },
}

impl Family {
    pub fn name(&self) -> &'static str {
        match self {
            Family::Exponential { .. } => "exponential",
            Family::Erlang { .. } => "erlang",
            Family::HyperExponential { .. } => "hyperexponential",
            Family::LogNormal { .. } => "lognormal",
            Family::UniformShifted { .. } => "uniform_shifted",
            Family::Weibull { .. } => "weibull",
        }
    }

    fn validate(&self) -> Result<(), DistributionError> {
        let bad = |msg: String| Err(DistributionError::InvalidParameter(msg));
        let pos = |v: f64| v.is_finite() && v > 0.0;
        match self {
            Family::Exponential { rate } if !pos(*rate) => bad(format!("exponential rate {rate} must be > 0")),
            Family::Erlang { shape, rate } => {
                if *shape == 0 {
                    bad("erlang shape must be a positive integer".into())
                } else if !pos(*rate) {
                    bad(format!("erlang rate {rate} must be > 0"))
                } else {
                    Ok(())
                }
            }
            Family::HyperExponential { weights, rates } => {
                if weights.is_empty() || weights.len() != rates.len() {
                    return bad("hyperexponential needs equally many (nonzero count) weights and rates".into());
                }
                if weights.iter().any(|w| !(w.is_finite() && *w > 0.0)) {
                    return bad("hyperexponential weights must be > 0".into());
                }
                if rates.iter().any(|r| !pos(*r)) {
                    return bad("hyperexponential rates must be > 0".into());
                }
                let total: f64 = weights.iter().sum();
                if (total - 1.0).abs() > 1e-9 {
                    return bad(format!("hyperexponential weights sum to {total}, expected 1"));
                }
                Ok(())
            }
            Family::LogNormal { mu, sigma } => {
                if !mu.is_finite() || !pos(*sigma) {
                    bad(format!("lognormal needs finite mu and sigma > 0 (got {mu}, {sigma})"))
                } else {
                    Ok(())
                }
            }
            Family::UniformShifted { lo, hi } => {
                if !(lo.is_finite() && hi.is_finite() && *lo >= 0.0 && hi > lo) {
                    bad(format!("uniform_shifted needs 0 <= lo < hi (got {lo}, {hi})"))
                } else {
                    Ok(())
                }
            }
            Family::Weibull { shape, scale } => {
                if !pos(*shape) || !pos(*scale) {
                    bad(format!("weibull shape and scale must be > 0 (got {shape}, {scale})"))
                } else {
                    Ok(())
                }
            }
            _ => Ok(()),
        }
    }
}

/// A validated law together with the role it plays.
///
/// Immutable after construction; share freely across threads.
#[derive(Debug, Clone, PartialEq)]
pub struct Distribution {
    family: Family,
    role: Role,
}

impl Distribution {
    /// Validates parameters and, for patience laws, that the hazard is bounded.
    pub fn new(family: Family, role: Role) -> Result<Self, DistributionError> {
        family.validate()?;
        let dist = Distribution { family, role };
        if role == Role::Patience {
            dist.check_bounded_hazard()?;
        }
        Ok(dist)
    }

    pub fn exponential(rate: f64, role: Role) -> Result<Self, DistributionError> {
        Self::new(Family::Exponential { rate }, role)
    }

    pub fn family(&self) -> &Family {
        &self.family
    }

    pub fn role(&self) -> Role {
        self.role
    }

    pub fn mean(&self) -> f64 {
        match &self.family {
            Family::Exponential { rate } => 1.0 / rate,
            Family::Erlang { shape, rate } => *shape as f64 / rate,
            Family::HyperExponential { weights, rates } => weights.iter().zip(rates).map(|(w, r)| w / r).sum(),
            Family::LogNormal { mu, sigma } => (mu + 0.5 * sigma * sigma).exp(),
            Family::UniformShifted { lo, hi } => 0.5 * (lo + hi),
            Family::Weibull { shape, scale } => scale * gamma(1.0 + 1.0 / shape),
        }
    }

    /// Reciprocal of the mean (μ for service, θ for patience).
    pub fn rate(&self) -> f64 {
        1.0 / self.mean()
    }

    /// Right edge of the support; `f64::INFINITY` when unbounded.
    pub fn right_edge(&self) -> f64 {
        match &self.family {
            Family::UniformShifted { hi, .. } => *hi,
            _ => f64::INFINITY,
        }
    }

    pub fn survival(&self, x: f64) -> f64 {
        if x <= 0.0 {
            return 1.0;
        }
        match &self.family {
            Family::Exponential { rate } => (-rate * x).exp(),
            Family::Erlang { shape, rate } => {
                let rx = rate * x;
                (-rx).exp() * erlang_partial_sum(*shape, rx)
            }
            Family::HyperExponential { weights, rates } => {
                weights.iter().zip(rates).map(|(w, r)| w * (-r * x).exp()).sum()
            }
            Family::LogNormal { mu, sigma } => 0.5 * erfc((x.ln() - mu) / (sigma * SQRT_2)),
            Family::UniformShifted { lo, hi } => {
                if x <= *lo {
                    1.0
                } else if x >= *hi {
                    0.0
                } else {
                    (hi - x) / (hi - lo)
                }
            }
            Family::Weibull { shape, scale } => (-(x / scale).powf(*shape)).exp(),
        }
    }

    pub fn cdf(&self, x: f64) -> f64 {
        if x <= 0.0 {
            return 0.0;
        }
        match &self.family {
            Family::Exponential { rate } => -(-rate * x).exp_m1(),
            Family::Erlang { shape, rate } => {
                let rx = rate * x;
                if rx < *shape as f64 {
                    erlang_lower_tail(*shape, rx)
                } else {
                    1.0 - self.survival(x)
                }
            }
            Family::HyperExponential { weights, rates } => {
                weights.iter().zip(rates).map(|(w, r)| -w * (-r * x).exp_m1()).sum()
            }
            Family::LogNormal { mu, sigma } => 0.5 * erfc(-(x.ln() - mu) / (sigma * SQRT_2)),
            Family::UniformShifted { .. } => 1.0 - self.survival(x),
            Family::Weibull { shape, scale } => -(-(x / scale).powf(*shape)).exp_m1(),
        }
    }

    pub fn pdf(&self, x: f64) -> f64 {
        if x < 0.0 {
            return 0.0;
        }
        match &self.family {
            Family::Exponential { rate } => rate * (-rate * x).exp(),
            Family::Erlang { shape, rate } => {
                let k = *shape as f64;
                if x == 0.0 {
                    return if *shape == 1 { *rate } else { 0.0 };
                }
                (k * rate.ln() + (k - 1.0) * x.ln() - rate * x - ln_factorial(shape - 1)).exp()
            }
            Family::HyperExponential { weights, rates } => {
                weights.iter().zip(rates).map(|(w, r)| w * r * (-r * x).exp()).sum()
            }
            Family::LogNormal { mu, sigma } => {
                if x == 0.0 {
                    return 0.0;
                }
                let z = (x.ln() - mu) / sigma;
                (-0.5 * z * z).exp() / (x * sigma * (2.0 * std::f64::consts::PI).sqrt())
            }
            Family::UniformShifted { lo, hi } => {
                if x >= *lo && x < *hi {
                    1.0 / (hi - lo)
                } else {
                    0.0
                }
            }
            Family::Weibull { shape, scale } => {
                let z = x / scale;
                shape / scale * z.powf(shape - 1.0) * (-z.powf(*shape)).exp()
            }
        }
    }

    /// `h(x) = g(x) / (1 − G(x))`.
    ///
    /// Closed-form ratios are used where the survival may underflow, so the
    /// light-tailed families never report `PastSupportEdge` on `[0, ∞)`.
    pub fn hazard(&self, x: f64) -> Result<f64, DistributionError> {
        let x = x.max(0.0);
        match &self.family {
            Family::Exponential { rate } => Ok(*rate),
            Family::Erlang { shape, rate } => {
                let rx = rate * x;
                let k = *shape as f64;
                if x == 0.0 {
                    return Ok(if *shape == 1 { *rate } else { 0.0 });
                }
                // r (rx)^{k-1}/(k-1)! / Σ_{n<k} (rx)^n/n!
                let top = ((k - 1.0) * rx.ln() - ln_factorial(shape - 1)).exp();
                Ok(rate * top / erlang_partial_sum(*shape, rx))
            }
            Family::HyperExponential { weights, rates } => {
                let rmin = rates.iter().cloned().fold(f64::INFINITY, f64::min);
                let (mut num, mut den) = (0.0, 0.0);
                for (w, r) in weights.iter().zip(rates) {
                    let e = w * (-(r - rmin) * x).exp();
                    num += r * e;
                    den += e;
                }
                Ok(num / den)
            }
            Family::Weibull { shape, scale } => Ok(shape / scale * (x / scale).powf(shape - 1.0)),
            Family::UniformShifted { lo, hi } => {
                if x >= *hi {
                    Err(DistributionError::PastSupportEdge { x })
                } else if x < *lo {
                    Ok(0.0)
                } else {
                    Ok(1.0 / (hi - x))
                }
            }
            Family::LogNormal { .. } => {
                let s = self.survival(x);
                if s <= 0.0 {
                    Err(DistributionError::PastSupportEdge { x })
                } else {
                    Ok(self.pdf(x) / s)
                }
            }
        }
    }

    /// `−ln(1 − G(x))`, the integrated hazard on `[0, x]`.
    pub fn cumulative_hazard(&self, x: f64) -> f64 {
        if x <= 0.0 {
            return 0.0;
        }
        match &self.family {
            Family::Exponential { rate } => rate * x,
            Family::Erlang { shape, rate } => {
                let rx = rate * x;
                rx - erlang_partial_sum(*shape, rx).ln()
            }
            Family::HyperExponential { weights, rates } => {
                let rmin = rates.iter().cloned().fold(f64::INFINITY, f64::min);
                let s: f64 = weights.iter().zip(rates).map(|(w, r)| w * (-(r - rmin) * x).exp()).sum();
                rmin * x - s.ln()
            }
            Family::Weibull { shape, scale } => (x / scale).powf(*shape),
            _ => -self.survival(x).ln(),
        }
    }

    /// Generalized inverse `inf{x ≥ 0 : G(x) ≥ u}`; `inverse_cdf(1)` is the
    /// right edge of the support (`+∞` for unbounded laws).
    pub fn inverse_cdf(&self, u: f64) -> f64 {
        if u <= 0.0 {
            return 0.0;
        }
        if u >= 1.0 {
            return self.right_edge();
        }
        match &self.family {
            Family::Exponential { rate } => -(-u).ln_1p() / rate,
            Family::Weibull { shape, scale } => scale * (-(-u).ln_1p()).powf(1.0 / shape),
            Family::UniformShifted { lo, hi } => lo + u * (hi - lo),
            Family::LogNormal { mu, sigma } => {
                let x = (mu - sigma * SQRT_2 * erfc_inv(2.0 * u)).exp();
                self.newton_refine(x, |x| self.cdf(x) - u)
            }
            _ => {
                if u > 0.5 {
                    self.inverse_survival(1.0 - u)
                } else {
                    bisect_increasing(|x| self.cdf(x), u, self.mean())
                }
            }
        }
    }

    /// The `x` with `1 − G(x) = s`; more accurate than `inverse_cdf(1 − s)`
    /// for small `s`. `inverse_survival(0)` is the right edge.
    pub fn inverse_survival(&self, s: f64) -> f64 {
        if s >= 1.0 {
            return 0.0;
        }
        if s <= 0.0 {
            return self.right_edge();
        }
        match &self.family {
            Family::Exponential { rate } => -s.ln() / rate,
            Family::Weibull { shape, scale } => scale * (-s.ln()).powf(1.0 / shape),
            Family::UniformShifted { lo, hi } => hi - s * (hi - lo),
            Family::LogNormal { mu, sigma } => {
                let x = (mu + sigma * SQRT_2 * erfc_inv(2.0 * s)).exp();
                self.newton_refine(x, |x| s - self.survival(x))
            }
            _ => {
                if s < 0.5 {
                    // cumulative hazard is increasing; target −ln s keeps precision in the tail
                    bisect_increasing(|x| self.cumulative_hazard(x), -s.ln(), self.mean())
                } else {
                    bisect_increasing(|x| self.cdf(x), 1.0 - s, self.mean())
                }
            }
        }
    }

    /// A few Newton steps on `residual` (whose derivative is the density),
    /// used to sharpen approximate closed-form quantiles.
    fn newton_refine(&self, mut x: f64, residual: impl Fn(f64) -> f64) -> f64 {
        for _ in 0..3 {
            let g = self.pdf(x);
            if !(g > 0.0) {
                break;
            }
            let next = x - residual(x) / g;
            if !(next > 0.0 && next.is_finite()) {
                break;
            }
            x = next;
        }
        x
    }

    /// `∫₀^upper (1 − G(x)) dx`. An infinite `upper` returns the mean.
    pub fn survival_integral(&self, upper: f64) -> f64 {
        if upper <= 0.0 {
            return 0.0;
        }
        if upper.is_infinite() || upper >= self.right_edge() {
            return self.mean();
        }
        let f = |x: f64| self.survival(x);
        let tol = quadrature::Tolerance { rel: 1e-10, abs: 1e-14 };
        match &self.family {
            Family::UniformShifted { lo, .. } if upper > *lo => *lo + quadrature::integrate(f, *lo, upper, tol).value,
            _ => quadrature::integrate(f, 0.0, upper, tol).value,
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match &self.family {
            Family::Exponential { rate } => -open_unit(rng).ln() / rate,
            Family::Erlang { shape, rate } => {
                let mut acc = 0.0;
                for _ in 0..*shape {
                    acc -= open_unit(rng).ln();
                }
                acc / rate
            }
            Family::HyperExponential { weights, rates } => {
                let u: f64 = rng.random();
                let mut cum = 0.0;
                let mut idx = weights.len() - 1;
                for (i, w) in weights.iter().enumerate() {
                    cum += w;
                    if u < cum {
                        idx = i;
                        break;
                    }
                }
                -open_unit(rng).ln() / rates[idx]
            }
            Family::LogNormal { mu, sigma } => {
                let z: f64 = rng.sample(StandardNormal);
                (mu + sigma * z).exp()
            }
            Family::UniformShifted { lo, hi } => lo + rng.random::<f64>() * (hi - lo),
            Family::Weibull { shape, scale } => scale * (-open_unit(rng).ln()).powf(1.0 / shape),
        }
    }

    /// Probe grid used by the numerical hazard checks: `PROBE_POINTS` points
    /// on `[0, G⁻¹(1 − PROBE_TAIL)]`, kept strictly inside the support.
    fn probe_grid(&self) -> Vec<f64> {
        let top = self.inverse_survival(PROBE_TAIL);
        (0..PROBE_POINTS).map(|i| top * i as f64 / (PROBE_POINTS - 1) as f64).collect()
    }

    /// Rejects laws whose hazard is unbounded, analytically where the family
    /// settles it and otherwise by probing the hazard against [`HAZARD_BOUND`].
    pub fn check_bounded_hazard(&self) -> Result<(), DistributionError> {
        match &self.family {
            Family::UniformShifted { hi, .. } => {
                return Err(DistributionError::UnboundedHazard(format!(
                    "uniform_shifted hazard diverges at the right edge {hi}"
                )))
            }
            Family::Weibull { shape, .. } if *shape != 1.0 => {
                return Err(DistributionError::UnboundedHazard(format!(
                    "weibull hazard with shape {shape} is unbounded"
                )))
            }
            _ => {}
        }
        for x in self.probe_grid() {
            let h = self.hazard(x)?;
            if !(h <= HAZARD_BOUND) {
                return Err(DistributionError::UnboundedHazard(format!(
                    "hazard {h:e} at x = {x} exceeds {HAZARD_BOUND:e}"
                )));
            }
        }
        Ok(())
    }

    /// Checks the hazard is non-increasing (decreasing failure rate) by probing.
    pub fn check_nonincreasing_hazard(&self) -> Result<(), DistributionError> {
        let grid = self.probe_grid();
        let mut prev = self.hazard(grid[0])?;
        for &x in &grid[1..] {
            let h = self.hazard(x)?;
            if h - prev > 1e-9 {
                return Err(DistributionError::AssumptionViolated(format!(
                    "{} hazard increases from {prev} to {h} near x = {x}",
                    self.family.name()
                )));
            }
            prev = h;
        }
        Ok(())
    }
}

/// Uniform on `(0, 1]`, so its log is finite.
fn open_unit<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    1.0 - rng.random::<f64>()
}

/// `Σ_{n<k} zⁿ/n!`
fn erlang_partial_sum(k: u32, z: f64) -> f64 {
    let mut term = 1.0;
    let mut sum = 1.0;
    for n in 1..k {
        term *= z / n as f64;
        sum += term;
    }
    sum
}

/// `P(Poisson(z) ≥ k)`, summed directly for precision when `z < k`.
fn erlang_lower_tail(k: u32, z: f64) -> f64 {
    let mut term = (k as f64 * z.ln() - z - ln_factorial(k)).exp();
    let mut sum = 0.0;
    let mut n = k as f64;
    while term > sum * 1e-17 || sum == 0.0 {
        sum += term;
        n += 1.0;
        term *= z / n;
        if term == 0.0 {
            break;
        }
    }
    sum
}

fn ln_factorial(n: u32) -> f64 {
    (2..=n).map(|i| (i as f64).ln()).sum()
}

/// Solves `f(x) = target` for an increasing `f` on `[0, ∞)`, to machine precision.
fn bisect_increasing(f: impl Fn(f64) -> f64, target: f64, scale: f64) -> f64 {
    let mut lo = 0.0;
    let mut hi = scale.max(f64::MIN_POSITIVE);
    while f(hi) < target {
        lo = hi;
        hi *= 2.0;
        if !hi.is_finite() {
            return f64::INFINITY;
        }
    }
    for _ in 0..2000 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if f(mid) < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    hi
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn menu() -> Vec<Distribution> {
        let fams = vec![
            Family::Exponential { rate: 1.3 },
            Family::Erlang { shape: 3, rate: 2.0 },
            Family::HyperExponential { weights: vec![0.3, 0.7], rates: vec![0.5, 4.0] },
            Family::LogNormal { mu: -0.2, sigma: 0.6 },
            Family::UniformShifted { lo: 0.5, hi: 2.5 },
            Family::Weibull { shape: 1.7, scale: 1.1 },
        ];
        fams.into_iter().map(|f| Distribution::new(f, Role::Service).unwrap()).collect()
    }

    #[test]
    fn cdf_examples() {
        let e = Distribution::exponential(1.0, Role::Service).unwrap();
        assert_eq!(e.cdf(0.0), 0.0);
        assert!((e.cdf(2f64.ln()) - 0.5).abs() < 1e-15);
        let er = Distribution::new(Family::Erlang { shape: 2, rate: 2.0 }, Role::Service).unwrap();
        let closed = 1.0 - 3.0 * (-2.0f64).exp();
        assert!((er.cdf(1.0) - closed).abs() < 1e-14);
        // cross-check against a plain Simpson integral of the density
        let n = 20_000;
        let h = 1.0 / n as f64;
        let simpson: f64 = (0..n)
            .map(|i| {
                let a = i as f64 * h;
                h / 6.0 * (er.pdf(a) + 4.0 * er.pdf(a + 0.5 * h) + er.pdf(a + h))
            })
            .sum();
        assert!((simpson - closed).abs() < 1e-12);
        assert!((closed - 0.59399).abs() < 1e-5);
    }

    #[test]
    fn hazard_examples() {
        let e = Distribution::exponential(0.7, Role::Patience).unwrap();
        for x in [0.0, 1.0, 50.0, 1e4] {
            assert_eq!(e.hazard(x).unwrap(), 0.7);
        }
        let er = Distribution::new(Family::Erlang { shape: 2, rate: 1.0 }, Role::Service).unwrap();
        assert!((er.hazard(1.0).unwrap() - 0.5).abs() < 1e-15);
        let hx = Distribution::new(
            Family::HyperExponential { weights: vec![0.5, 0.5], rates: vec![1.0, 3.0] },
            Role::Patience,
        )
        .unwrap();
        assert!((hx.hazard(0.0).unwrap() - 2.0).abs() < 1e-15);
    }

    #[test]
    fn hazard_past_edge_errors() {
        let u = Distribution::new(Family::UniformShifted { lo: 0.0, hi: 1.0 }, Role::Service).unwrap();
        assert_eq!(u.hazard(1.0), Err(DistributionError::PastSupportEdge { x: 1.0 }));
        let ln = Distribution::new(Family::LogNormal { mu: 0.0, sigma: 0.1 }, Role::Service).unwrap();
        assert!(matches!(ln.hazard(1e6), Err(DistributionError::PastSupportEdge { .. })));
    }

    #[test]
    fn inverse_cdf_examples() {
        let e = Distribution::exponential(1.0, Role::Patience).unwrap();
        assert_eq!(e.inverse_cdf(0.0), 0.0);
        assert_eq!(e.inverse_cdf(1.0), f64::INFINITY);
        let er = Distribution::new(Family::Erlang { shape: 2, rate: 2.0 }, Role::Service).unwrap();
        let u = 1.0 - 3.0 * (-2.0f64).exp();
        assert!((er.inverse_cdf(u) - 1.0).abs() < 1e-12);
        assert!((er.inverse_cdf(0.59399) - 1.0).abs() < 1e-4);
        let unif = Distribution::new(Family::UniformShifted { lo: 1.0, hi: 3.0 }, Role::Service).unwrap();
        assert_eq!(unif.inverse_cdf(1.0), 3.0);
    }

    #[test]
    fn inverse_cdf_roundtrip_tolerance() {
        for d in menu() {
            for i in 1..200 {
                let u = i as f64 / 200.0;
                let x = d.inverse_cdf(u);
                assert!((d.cdf(x) - u).abs() < 1e-12, "{:?} u={u} got {}", d.family(), d.cdf(x));
            }
        }
    }

    #[test]
    fn survival_integral_examples() {
        let e = Distribution::exponential(2.5, Role::Patience).unwrap();
        assert_eq!(e.survival_integral(f64::INFINITY), 0.4);
        assert_eq!(e.survival_integral(0.0), 0.0);
        let e1 = Distribution::exponential(1.0, Role::Patience).unwrap();
        let closed = 1.0 - (-(2f64.ln())).exp();
        assert!((e1.survival_integral(2f64.ln()) - 0.5).abs() < 1e-12);
        assert!((closed - 0.5).abs() < 1e-15);
    }

    #[test]
    fn survival_integral_matches_mean_for_every_family() {
        for d in menu() {
            let far = d.inverse_survival(1e-16).min(d.right_edge());
            let num = d.survival_integral(far * 0.999_999_999);
            assert!((num - d.mean()).abs() <= 1e-8 * d.mean(), "{:?}: {num} vs {}", d.family(), d.mean());
            assert_eq!(d.survival_integral(f64::INFINITY), d.mean());
        }
    }

    #[test]
    fn sampling_is_reproducible_and_unbiased() {
        let cases = vec![
            (Family::Exponential { rate: 1.0 }, 1.0, 1.0),
            (Family::Erlang { shape: 2, rate: 2.0 }, 1.0, 0.5),
            (Family::LogNormal { mu: 0.0, sigma: 0.5 }, 0.125f64.exp(), (0.25f64.exp() - 1.0) * 0.25f64.exp()),
        ];
        for (fam, mean, var) in cases {
            let d = Distribution::new(fam, Role::Service).unwrap();
            let n = 1_000_000;
            let mut rng = ChaCha8Rng::seed_from_u64(11);
            let draws: Vec<f64> = (0..n).map(|_| d.sample(&mut rng)).collect();
            let mut again = ChaCha8Rng::seed_from_u64(11);
            assert!(draws.iter().take(100).all(|&x| x == d.sample(&mut again)));
            let m = draws.iter().sum::<f64>() / n as f64;
            let se = (var / n as f64).sqrt();
            assert!((m - mean).abs() < 3.0 * se, "{:?}: {m} vs {mean}", d.family());
        }
    }

    #[test]
    fn patience_role_rejects_unbounded_hazard() {
        let unif = Distribution::new(Family::UniformShifted { lo: 0.0, hi: 1.0 }, Role::Patience);
        assert!(matches!(unif, Err(DistributionError::UnboundedHazard(_))));
        let w = Distribution::new(Family::Weibull { shape: 2.0, scale: 1.0 }, Role::Patience);
        assert!(matches!(w, Err(DistributionError::UnboundedHazard(_))));
        let w = Distribution::new(Family::Weibull { shape: 0.5, scale: 1.0 }, Role::Patience);
        assert!(matches!(w, Err(DistributionError::UnboundedHazard(_))));
        assert!(Distribution::new(Family::Weibull { shape: 1.0, scale: 1.0 }, Role::Patience).is_ok());
        assert!(Distribution::new(Family::Erlang { shape: 3, rate: 1.0 }, Role::Patience).is_ok());
        assert!(Distribution::new(Family::LogNormal { mu: 0.0, sigma: 1.0 }, Role::Patience).is_ok());
    }

    #[test]
    fn nonincreasing_hazard_probe() {
        let ok = [
            Family::Exponential { rate: 2.0 },
            Family::HyperExponential { weights: vec![0.2, 0.8], rates: vec![0.3, 5.0] },
        ];
        for f in ok {
            Distribution::new(f, Role::Patience).unwrap().check_nonincreasing_hazard().unwrap();
        }
        let erl = Distribution::new(Family::Erlang { shape: 2, rate: 1.0 }, Role::Patience).unwrap();
        assert!(matches!(erl.check_nonincreasing_hazard(), Err(DistributionError::AssumptionViolated(_))));
    }

    #[test]
    fn invalid_parameters() {
        assert!(Distribution::exponential(0.0, Role::Service).is_err());
        assert!(Distribution::new(Family::Erlang { shape: 0, rate: 1.0 }, Role::Service).is_err());
        assert!(Distribution::new(
            Family::HyperExponential { weights: vec![0.5, 0.4], rates: vec![1.0, 2.0] },
            Role::Service
        )
        .is_err());
        assert!(Distribution::new(Family::UniformShifted { lo: 2.0, hi: 1.0 }, Role::Service).is_err());
    }
}
