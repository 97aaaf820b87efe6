//! Age-structured integration of the measure-valued fluid model.
//!
//! `ν` (service ages) and `η` (potential waits) live on uniform age grids of
//! spacing `Δ` and are stored as cell masses. One step of length `Δ` moves
//! every cell one cell older, thinning it by the ratio of survival integrals
//! of the two cells, so ageing follows the characteristics exactly. Fresh
//! arrivals `λΔ` enter `η` at age zero; entries into service `dK` enter `ν`
//! at age zero. Abandonment is the `η` loss inside the queued ages `[0, χ]`;
//! departures are the `ν` loss. The queue mass `Q` is tracked directly and
//! `χ` is its quantile in `η`.

use thiserror::Error;

use crate::distributions::{Distribution, DistributionError};
use crate::fluid_control::{invariant_queue_length, CostModel, FluidControlError};

/// Surviving mass allowed to leave the far end of a grid in one step.
pub const OVERFLOW_TOLERANCE: f64 = 1e-8;
/// Grids extend to this survival level of each law.
pub const GRID_TAIL: f64 = 1e-8;
/// Default `Δ` is the shorter of the mean service and mean patience over this.
pub const DEFAULT_RESOLUTION: f64 = 200.0;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FluidModelError {
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("grid overflow at t = {t}: {mass:e} surviving mass left the {grid} grid in one step")]
    GridOverflow { t: f64, mass: f64, grid: &'static str },
    #[error(transparent)]
    FluidControl(#[from] FluidControlError),
    #[error(transparent)]
    Distribution(#[from] DistributionError),
}

/// Entry-into-service rule.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FluidPolicy {
    /// Fill all idle capacity from the queue.
    NonIdling,
    /// Admit into service only while `B < b`.
    BusyCap(f64),
}

/// Fluid state at time `t`. `nu` and `eta` hold the mass of each age cell
/// `[jΔ, (j+1)Δ)`; `r`, `d`, `k`, `e` are cumulative since the start.
#[derive(Debug, Clone, PartialEq)]
pub struct FluidState {
    pub t: f64,
    pub dx: f64,
    pub nu: Vec<f64>,
    pub eta: Vec<f64>,
    pub x: f64,
    pub r: f64,
    pub d: f64,
    pub k: f64,
    pub e: f64,
    pub b: f64,
    pub q: f64,
    pub chi: f64,
    pub idle: f64,
}

impl FluidState {
    pub fn eta_mass(&self) -> f64 {
        self.eta.iter().sum()
    }

    /// Density of `ν` on cell `j`.
    pub fn nu_density(&self, j: usize) -> f64 {
        self.nu[j] / self.dx
    }

    pub fn eta_density(&self, j: usize) -> f64 {
        self.eta[j] / self.dx
    }

    fn refresh(&mut self) {
        self.b = self.nu.iter().sum();
        self.x = self.b + self.q;
        self.idle = 1.0 - self.b;
        self.chi = chi_quantile(self);
    }
}

/// `inf{x ≥ 0 : η[0, x] ≥ Q}` with mass spread uniformly inside each cell;
/// zero when `Q = 0`.
pub fn chi_quantile(state: &FluidState) -> f64 {
    if state.q <= 0.0 {
        return 0.0;
    }
    let mut cum = 0.0;
    for (j, &m) in state.eta.iter().enumerate() {
        if m > 0.0 && cum + m >= state.q {
            let frac = ((state.q - cum) / m).clamp(0.0, 1.0);
            return (j as f64 + frac) * state.dx;
        }
        cum += m;
    }
    state.eta.len() as f64 * state.dx
}

fn simpson_cell<F: Fn(f64) -> f64>(f: &F, a: f64, dx: f64) -> f64 {
    dx / 6.0 * (f(a) + 4.0 * f(a + 0.5 * dx) + f(a + dx))
}

/// Cell survival integrals `∫_{jΔ}^{(j+1)Δ} S` and the shift ratios between
/// neighbouring cells. The last ratio is what would leave the grid.
fn survival_cells(law: &Distribution, dx: f64, cells: usize) -> (Vec<f64>, Vec<f64>) {
    let s = |x: f64| law.survival(x);
    let ints: Vec<f64> = (0..=cells).map(|j| simpson_cell(&s, j as f64 * dx, dx)).collect();
    let ratios = (0..cells).map(|j| if ints[j] > 0.0 { (ints[j + 1] / ints[j]).min(1.0) } else { 0.0 }).collect();
    (ints, ratios)
}

fn grid_cells(law: &Distribution, dx: f64) -> usize {
    let edge = law.inverse_survival(GRID_TAIL).min(law.right_edge());
    (edge / dx).ceil() as usize + 1
}

/// Largest violation of the fluid-model identities seen along a trajectory.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Residuals {
    /// `|X − X(0) − E + R + D|`.
    pub mass_balance: f64,
    /// Largest decrease of `K` in one step.
    pub k_decrease: f64,
    /// `(B − 1)⁺` and `(−B)⁺`.
    pub busy_bound: f64,
    /// Violation of `B ≤ X ≤ B + ⟨1, η⟩`.
    pub x_bracket: f64,
    /// `|K − (B + D − B(0))|`.
    pub k_identity: f64,
    /// `|I − (1 − X)⁺|`; only tracked under the non-idling policy.
    pub non_idling: f64,
}

impl Residuals {
    pub fn max(&self) -> f64 {
        [self.mass_balance, self.k_decrease, self.busy_bound, self.x_bracket, self.k_identity, self.non_idling]
            .into_iter()
            .fold(0.0, f64::max)
    }

    fn merge(&mut self, other: &Residuals) {
        self.mass_balance = self.mass_balance.max(other.mass_balance);
        self.k_decrease = self.k_decrease.max(other.k_decrease);
        self.busy_bound = self.busy_bound.max(other.busy_bound);
        self.x_bracket = self.x_bracket.max(other.x_bracket);
        self.k_identity = self.k_identity.max(other.k_identity);
        self.non_idling = self.non_idling.max(other.non_idling);
    }
}

/// One recorded point of a trajectory.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sample {
    pub t: f64,
    pub x: f64,
    pub b: f64,
    pub q: f64,
    pub chi: f64,
    pub r: f64,
    pub d: f64,
    pub k: f64,
    pub idle: f64,
    /// Largest residual at this point.
    pub residual: f64,
}

/// Accumulated costs over the horizon (not rates).
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct FluidCosts {
    pub utilization: f64,
    pub abandonment: f64,
    pub holding: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub samples: Vec<Sample>,
    pub costs: FluidCosts,
    pub residuals: Residuals,
    pub last: FluidState,
}

/// Discretized fluid model for fixed service and patience laws.
#[derive(Debug, Clone)]
pub struct FluidModel {
    service: Distribution,
    patience: Distribution,
    dx: f64,
    nu_ints: Vec<f64>,
    nu_ratio: Vec<f64>,
    eta_ints: Vec<f64>,
    eta_ratio: Vec<f64>,
}

impl FluidModel {
    pub fn new(service: &Distribution, patience: &Distribution, dx: f64) -> Result<Self, FluidModelError> {
        if !(dx > 0.0 && dx.is_finite()) {
            return Err(FluidModelError::InvalidInput(format!("grid spacing {dx} must be positive")));
        }
        let (nu_ints, nu_ratio) = survival_cells(service, dx, grid_cells(service, dx));
        let (eta_ints, eta_ratio) = survival_cells(patience, dx, grid_cells(patience, dx));
        Ok(FluidModel {
            service: service.clone(),
            patience: patience.clone(),
            dx,
            nu_ints,
            nu_ratio,
            eta_ints,
            eta_ratio,
        })
    }

    /// `min(1/μ, 1/θ)/200` with `θ` the reciprocal mean patience.
    pub fn default_dx(service: &Distribution, patience: &Distribution) -> f64 {
        service.mean().min(patience.mean()) / DEFAULT_RESOLUTION
    }

    pub fn dx(&self) -> f64 {
        self.dx
    }

    pub fn service(&self) -> &Distribution {
        &self.service
    }

    pub fn patience(&self) -> &Distribution {
        &self.patience
    }

    pub fn nu_cells(&self) -> usize {
        self.nu_ratio.len()
    }

    pub fn eta_cells(&self) -> usize {
        self.eta_ratio.len()
    }

    pub fn empty_state(&self) -> FluidState {
        self.state_from_masses(vec![0.0; self.nu_cells()], vec![0.0; self.eta_cells()], 0.0)
            .expect("the empty state is valid")
    }

    /// Builds a state from cell masses and a queue mass `q ≤ ⟨1, η⟩`.
    pub fn state_from_masses(&self, nu: Vec<f64>, eta: Vec<f64>, q: f64) -> Result<FluidState, FluidModelError> {
        if nu.len() != self.nu_cells() || eta.len() != self.eta_cells() {
            return Err(FluidModelError::InvalidInput(format!(
                "expected {} service cells and {} patience cells, got {} and {}",
                self.nu_cells(),
                self.eta_cells(),
                nu.len(),
                eta.len()
            )));
        }
        if nu.iter().chain(&eta).any(|m| !(*m >= 0.0)) || !(q >= 0.0) {
            return Err(FluidModelError::InvalidInput("masses must be nonnegative".into()));
        }
        let eta_total: f64 = eta.iter().sum();
        if q > eta_total * (1.0 + 1e-12) + 1e-15 {
            return Err(FluidModelError::InvalidInput(format!(
                "queue mass {q} exceeds potential-wait mass {eta_total}"
            )));
        }
        let mut s = FluidState {
            t: 0.0,
            dx: self.dx,
            nu,
            eta,
            x: 0.0,
            r: 0.0,
            d: 0.0,
            k: 0.0,
            e: 0.0,
            b: 0.0,
            q,
            chi: 0.0,
            idle: 1.0,
        };
        s.refresh();
        if s.b > 1.0 + 1e-12 {
            return Err(FluidModelError::InvalidInput(format!("busy mass {} exceeds 1", s.b)));
        }
        Ok(s)
    }

    /// Builds a state from densities, integrated over each cell by Simpson's rule.
    pub fn state_from_densities<F, G>(
        &self,
        nu_density: F,
        eta_density: G,
        q: f64,
    ) -> Result<FluidState, FluidModelError>
    where
        F: Fn(f64) -> f64,
        G: Fn(f64) -> f64,
    {
        let dx = self.dx;
        let nu = (0..self.nu_cells()).map(|j| simpson_cell(&nu_density, j as f64 * dx, dx)).collect();
        let eta = (0..self.eta_cells()).map(|j| simpson_cell(&eta_density, j as f64 * dx, dx)).collect();
        self.state_from_masses(nu, eta, q)
    }

    /// Invariant state for busy fraction `b` and admission probability `p`:
    /// `ν` density `bμ(1 − G^s)`, `η` density `pλ(1 − G^r)` on all ages,
    /// queue mass `q(b, p)`.
    pub fn invariant_state(&self, b: f64, p: f64, lambda: f64) -> Result<FluidState, FluidModelError> {
        let mu = 1.0 / self.service.mean();
        let q = invariant_queue_length(b, p, lambda, mu, &self.patience)?;
        let nu: Vec<f64> = self.nu_ints[..self.nu_cells()].iter().map(|s| b * mu * s).collect();
        let eta: Vec<f64> = self.eta_ints[..self.eta_cells()].iter().map(|s| p * lambda * s).collect();
        self.state_from_masses(nu, eta, q)
    }

    /// Advances `state` by one grid spacing.
    pub fn step(&self, state: &mut FluidState, arrival_rate: f64, policy: FluidPolicy) -> Result<(), FluidModelError> {
        let dx = self.dx;
        let chi_old = state.chi;

        // age η; the loss below the old χ is abandonment
        let eta_last = state.eta.len() - 1;
        let overflow = state.eta[eta_last] * self.eta_ratio[eta_last];
        let crossing = (chi_old / dx).floor() as usize;
        let frac = chi_old / dx - crossing as f64;
        let mut d_r = 0.0;
        let mut carry = 0.0;
        for j in 0..state.eta.len() {
            let m = state.eta[j];
            let kept = m * self.eta_ratio[j];
            if state.q > 0.0 {
                let lost = m - kept;
                if j < crossing {
                    d_r += lost;
                } else if j == crossing {
                    d_r += frac * lost;
                }
            }
            state.eta[j] = carry;
            carry = kept;
        }
        if overflow > OVERFLOW_TOLERANCE {
            return Err(FluidModelError::GridOverflow { t: state.t, mass: overflow, grid: "patience" });
        }
        if state.q > 0.0 && crossing > eta_last {
            d_r += overflow;
        }
        let d_r = d_r.min(state.q);

        // age ν; the loss is departures, including anything pushed off the grid
        let nu_last = state.nu.len() - 1;
        let overflow = state.nu[nu_last] * self.nu_ratio[nu_last];
        if overflow > OVERFLOW_TOLERANCE {
            return Err(FluidModelError::GridOverflow { t: state.t, mass: overflow, grid: "service" });
        }
        let mut d_d = 0.0;
        let mut carry = 0.0;
        for j in 0..state.nu.len() {
            let m = state.nu[j];
            let kept = if j == nu_last { 0.0 } else { m * self.nu_ratio[j] };
            d_d += m - kept;
            state.nu[j] = carry;
            carry = kept;
        }
        let b_aged = (state.b - d_d).max(0.0);

        // arrivals
        let d_e = arrival_rate * dx;
        state.eta[0] += d_e;
        let q = (state.q - d_r).max(0.0) + d_e;

        // entries into service from the head of the queue
        let room = match policy {
            FluidPolicy::NonIdling => 1.0 - b_aged,
            FluidPolicy::BusyCap(cap) => cap - b_aged,
        };
        let d_k = room.max(0.0).min(q);
        state.nu[0] = d_k;

        state.q = q - d_k;
        state.r += d_r;
        state.d += d_d;
        state.e += d_e;
        state.k += d_k;
        state.t += dx;
        state.refresh();
        Ok(())
    }

    /// Steps `round(horizon/Δ)` times, recording every state and the largest
    /// residuals of the fluid-model identities.
    pub fn integrate(
        &self,
        initial: &FluidState,
        horizon: f64,
        arrival_rate: f64,
        policy: FluidPolicy,
        cost: Option<&CostModel>,
    ) -> Result<Trajectory, FluidModelError> {
        if !(horizon >= 0.0 && horizon.is_finite()) {
            return Err(FluidModelError::InvalidInput(format!("horizon {horizon} must be finite and >= 0")));
        }
        if !(arrival_rate >= 0.0 && arrival_rate.is_finite()) {
            return Err(FluidModelError::InvalidInput(format!("arrival rate {arrival_rate} must be >= 0")));
        }
        if let FluidPolicy::BusyCap(cap) = policy {
            if !(0.0..=1.0).contains(&cap) {
                return Err(FluidModelError::InvalidInput(format!("busy cap {cap} outside [0, 1]")));
            }
        }
        let steps = (horizon / self.dx).round() as usize;
        let (x0, b0, r0, d0, e0, k0) = (initial.x, initial.b, initial.r, initial.d, initial.e, initial.k);
        let non_idling = policy == FluidPolicy::NonIdling;
        let check = |s: &FluidState, prev_k: f64| -> Residuals {
            let eta_mass = s.eta_mass();
            Residuals {
                mass_balance: (s.x - x0 - (s.e - e0) + (s.r - r0) + (s.d - d0)).abs(),
                k_decrease: (prev_k - s.k).max(0.0),
                busy_bound: (s.b - 1.0).max(-s.b).max(0.0),
                x_bracket: (s.b - s.x).max(s.x - s.b - eta_mass).max(0.0),
                k_identity: ((s.k - k0) - (s.b + (s.d - d0) - b0)).abs(),
                non_idling: if non_idling { (s.idle - (1.0 - s.x).max(0.0)).abs() } else { 0.0 },
            }
        };
        let sample = |s: &FluidState, res: f64| Sample {
            t: s.t,
            x: s.x,
            b: s.b,
            q: s.q,
            chi: s.chi,
            r: s.r,
            d: s.d,
            k: s.k,
            idle: s.idle,
            residual: res,
        };
        let mut state = initial.clone();
        let mut residuals = check(&state, state.k);
        let mut samples = Vec::with_capacity(steps + 1);
        samples.push(sample(&state, residuals.max()));
        let mut costs = FluidCosts::default();
        for _ in 0..steps {
            let prev_k = state.k;
            let prev_r = state.r;
            self.step(&mut state, arrival_rate, policy)?;
            if let Some(c) = cost {
                costs.utilization += c.g(state.b) * self.dx;
                costs.abandonment += c.a * (state.r - prev_r);
                costs.holding += c.c * state.q * self.dx;
            }
            let res = check(&state, prev_k);
            residuals.merge(&res);
            samples.push(sample(&state, res.max()));
        }
        Ok(Trajectory { samples, costs, residuals, last: state })
    }
}
