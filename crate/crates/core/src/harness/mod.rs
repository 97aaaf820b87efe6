//! Configuration, the Erlang-A oracle, sweeps over `N` and CSV output.

mod config;
mod oracle;

pub use config::{
    ConfigFile, CostRecord, DistributionRecord, ExperimentConfig, FluidRecord, PolicyRecord, SimulationRecord,
    UtilizationRecord, SCHEMA_VERSION,
};
pub use oracle::{erlang_a_oracle, oracle_cost, OracleResult, MAX_STATES, TAIL_TOLERANCE};

use std::io::Write;

use thiserror::Error;

use crate::des::{run_replications, PolicySpec, SimError, SimEstimate, SimParams};
use crate::fluid_control::{self, FluidControlError, FluidDesign};
use crate::fluid_model::{FluidModel, FluidModelError, FluidPolicy, Trajectory};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("{}", config_message(field, line, message))]
    Config { field: String, line: Option<usize>, message: String },
    #[error("oracle state space exceeded {states} states before the tail bound was met")]
    Truncation { states: usize },
    #[error(transparent)]
    FluidControl(#[from] FluidControlError),
    #[error(transparent)]
    Simulation(#[from] SimError),
    #[error(transparent)]
    FluidModel(#[from] FluidModelError),
    #[error("{0}")]
    Runtime(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

fn config_message(field: &str, line: &Option<usize>, message: &str) -> String {
    let mut out = String::from("config error");
    if let Some(l) = line {
        out.push_str(&format!(" at line {l}"));
    }
    if !field.is_empty() {
        out.push_str(&format!(" in `{field}`"));
    }
    out.push_str(": ");
    out.push_str(message);
    out
}

impl HarnessError {
    /// Process exit code: 2 for configuration problems, 3 otherwise.
    pub fn exit_code(&self) -> u8 {
        match self {
            HarnessError::Config { .. } => 2,
            HarnessError::Simulation(SimError::Config(_)) => 2,
            _ => 3,
        }
    }
}

/// `%.12g`: 12 significant digits, trailing zeros dropped, exponent form
/// outside `[1e-4, 1e12)`.
pub fn format_float(x: f64) -> String {
    if x == 0.0 {
        return "0".into();
    }
    if x.is_nan() {
        return "nan".into();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    let sci = format!("{:.11e}", x);
    let (mantissa, exp) = sci.split_once('e').expect("exponent present");
    let exp: i32 = exp.parse().expect("integer exponent");
    if !(-4..12).contains(&exp) {
        let m = strip_zeros(mantissa);
        let sign = if exp < 0 { '-' } else { '+' };
        return format!("{m}e{sign}{:02}", exp.abs());
    }
    let decimals = (11 - exp).max(0) as usize;
    strip_zeros(&format!("{:.*}", decimals, x)).to_string()
}

fn strip_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

/// Fluid design for the config: the holding-cost solver when `c > 0` or the
/// decreasing-hazard assumption is requested, the closed problem otherwise.
pub fn solve_design(cfg: &ExperimentConfig) -> Result<FluidDesign, HarnessError> {
    let mu = cfg.mu();
    if cfg.cost.c > 0.0 || cfg.assume_dfr {
        Ok(fluid_control::solve_fluid_hc(cfg.lambda, mu, &cfg.patience, &cfg.cost, cfg.assume_dfr)?)
    } else {
        Ok(fluid_control::solve_fluid(cfg.lambda, mu, &cfg.cost)?)
    }
}

/// Maps a config policy to a simulator policy using the design's `b*`, `p*`.
pub fn resolve_policy(policy: &PolicyRecord, design: &FluidDesign) -> Result<PolicySpec, HarnessError> {
    let spec = match *policy {
        PolicyRecord::Pistar => PolicySpec::ThinnedNonIdling { p: design.p_star },
        PolicyRecord::Nonidle => PolicySpec::NonIdling,
        PolicyRecord::Thinned { p } => PolicySpec::ThinnedNonIdling { p },
        PolicyRecord::Rest { rest_duration: Some(r) } => PolicySpec::RestAfterCompletion { rest_duration: r },
        PolicyRecord::Rest { rest_duration: None } => {
            if design.b_star <= 0.0 {
                return Err(HarnessError::Runtime("rest heuristic needs b* > 0".into()));
            }
            PolicySpec::rest_for_busy_fraction(design.b_star, design.mu)
        }
    };
    spec.validate()?;
    Ok(spec)
}

pub fn sim_params(cfg: &ExperimentConfig, n: usize, policy: PolicySpec) -> SimParams {
    SimParams {
        servers: n,
        interarrival: cfg.interarrival.clone(),
        service: cfg.service.clone(),
        patience: cfg.patience.clone(),
        policy,
        cost: cfg.cost.clone(),
        horizon: cfg.horizon,
        burn_in: cfg.burn_in,
        seed: cfg.seed,
        stream: 0,
        batches: cfg.batches,
        track_potential_waits: false,
    }
}

/// One `(N, policy)` cell of a sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub n: usize,
    pub policy: &'static str,
    pub p: f64,
    pub estimate: SimEstimate,
    pub fluid_cost: f64,
    /// `C^N − C*`.
    pub gap: f64,
}

pub const SIMULATE_COLUMNS: [&str; 14] = [
    "n",
    "policy",
    "p",
    "rep_count",
    "cost_total",
    "cost_se",
    "rejection",
    "abandonment",
    "holding",
    "compensator",
    "utilization",
    "busy_frac",
    "q_frac",
    "hazard_abandonment_rate",
];

/// Runs every `(N, policy)` pair in key order.
pub fn convergence_sweep(cfg: &ExperimentConfig, parallel: bool) -> Result<(FluidDesign, Vec<SweepRow>), HarnessError> {
    let design = solve_design(cfg)?;
    let mut rows = Vec::new();
    for &n in &cfg.n_values {
        for policy in &cfg.policies {
            rows.push(run_cell(cfg, &design, n, policy, parallel)?);
        }
    }
    Ok((design, rows))
}

pub fn run_cell(
    cfg: &ExperimentConfig,
    design: &FluidDesign,
    n: usize,
    policy: &PolicyRecord,
    parallel: bool,
) -> Result<SweepRow, HarnessError> {
    let spec = resolve_policy(policy, design)?;
    let params = sim_params(cfg, n, spec);
    let estimate = run_replications(&params, cfg.replications, parallel)?;
    Ok(SweepRow {
        n,
        policy: policy.label(),
        p: spec.admission_probability(),
        gap: estimate.mean.total - design.fluid_cost,
        fluid_cost: design.fluid_cost,
        estimate,
    })
}

fn row_fields(row: &SweepRow) -> Vec<String> {
    let m = &row.estimate.mean;
    let mut out =
        vec![row.n.to_string(), row.policy.to_string(), format_float(row.p), row.estimate.replications.to_string()];
    out.extend(
        [
            m.total,
            row.estimate.se.total,
            m.rejection,
            m.abandonment,
            m.holding,
            m.compensator,
            m.utilization,
            m.busy_frac,
            m.q_frac,
            m.hazard_abandonment_rate,
        ]
        .map(format_float),
    );
    out
}

pub fn write_simulation_csv<W: Write>(out: W, rows: &[SweepRow]) -> Result<(), HarnessError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(SIMULATE_COLUMNS)?;
    for row in rows {
        w.write_record(row_fields(row))?;
    }
    w.flush()?;
    Ok(())
}

/// Simulation columns followed by the fluid cost and the gap to it.
pub fn write_sweep_csv<W: Write>(out: W, design: &FluidDesign, rows: &[SweepRow]) -> Result<(), HarnessError> {
    let mut w = csv::Writer::from_writer(out);
    let mut header: Vec<&str> = SIMULATE_COLUMNS.to_vec();
    header.extend(["b_star", "p_star", "fluid_cost", "gap"]);
    w.write_record(&header)?;
    for row in rows {
        let mut fields = row_fields(row);
        fields.extend([design.b_star, design.p_star, row.fluid_cost, row.gap].map(format_float));
        w.write_record(fields)?;
    }
    w.flush()?;
    Ok(())
}

pub const DESIGN_COLUMNS: [&str; 9] =
    ["b_star", "p_star", "fluid_cost", "regime", "rejection", "abandonment", "holding", "compensator", "utilization"];

pub fn write_design_csv<W: Write>(out: W, cfg: &ExperimentConfig, design: &FluidDesign) -> Result<(), HarnessError> {
    let parts = fluid_control::fluid_cost_breakdown(design, &cfg.patience, &cfg.cost)?;
    let mut w = csv::Writer::from_writer(out);
    w.write_record(DESIGN_COLUMNS)?;
    let mut fields = vec![
        format_float(design.b_star),
        format_float(design.p_star),
        format_float(design.fluid_cost),
        design.regime.as_str().to_string(),
    ];
    fields.extend(
        [parts.rejection, parts.abandonment, parts.holding, parts.compensator, parts.utilization].map(format_float),
    );
    w.write_record(fields)?;
    w.flush()?;
    Ok(())
}

/// Human-readable breakdown of the fluid design.
pub fn design_table(cfg: &ExperimentConfig, design: &FluidDesign) -> Result<String, HarnessError> {
    let parts = fluid_control::fluid_cost_breakdown(design, &cfg.patience, &cfg.cost)?;
    let mut s = String::new();
    let line = |s: &mut String, k: &str, v: String| s.push_str(&format!("{k:<14}{v:>20}\n"));
    line(&mut s, "b_star", format_float(design.b_star));
    line(&mut s, "p_star", format_float(design.p_star));
    line(&mut s, "regime", design.regime.as_str().to_string());
    line(&mut s, "rejection", format_float(parts.rejection));
    line(&mut s, "abandonment", format_float(parts.abandonment));
    line(&mut s, "holding", format_float(parts.holding));
    line(&mut s, "compensator", format_float(parts.compensator));
    line(&mut s, "utilization", format_float(parts.utilization));
    line(&mut s, "fluid_cost", format_float(design.fluid_cost));
    if design.degenerate_all_reject {
        s.push_str("note: b* = 0, admission clamped to its minimum\n");
    }
    if !design.uniqueness_guaranteed {
        s.push_str("note: objective not known to be convex; minimizer found by grid scan\n");
    }
    Ok(s)
}

pub const FLUID_COLUMNS: [&str; 10] = ["t", "X", "B", "Q", "chi", "R", "D", "K", "I", "residual"];

/// Arrival rate and entry rule of the fluid analogue of a policy: thinning to
/// `p*λ` for `pistar`, a busy cap at `b*` for `rest`.
pub fn fluid_policy(policy: &PolicyRecord, cfg: &ExperimentConfig, design: &FluidDesign) -> (f64, FluidPolicy) {
    match *policy {
        PolicyRecord::Pistar => (design.p_star * cfg.lambda, FluidPolicy::NonIdling),
        PolicyRecord::Nonidle => (cfg.lambda, FluidPolicy::NonIdling),
        PolicyRecord::Thinned { p } => (p * cfg.lambda, FluidPolicy::NonIdling),
        PolicyRecord::Rest { .. } => (cfg.lambda, FluidPolicy::BusyCap(design.b_star)),
    }
}

/// Integrates the fluid model from an empty start under `policy`.
pub fn integrate_fluid(
    cfg: &ExperimentConfig,
    design: &FluidDesign,
    policy: &PolicyRecord,
    horizon: f64,
    dx: f64,
) -> Result<Trajectory, HarnessError> {
    let model = FluidModel::new(&cfg.service, &cfg.patience, dx)?;
    let (rate, rule) = fluid_policy(policy, cfg, design);
    Ok(model.integrate(&model.empty_state(), horizon, rate, rule, Some(&cfg.cost))?)
}

pub fn write_trajectory_csv<W: Write>(out: W, traj: &Trajectory) -> Result<(), HarnessError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(FLUID_COLUMNS)?;
    for s in &traj.samples {
        w.write_record([s.t, s.x, s.b, s.q, s.chi, s.r, s.d, s.k, s.idle, s.residual].map(format_float))?;
    }
    w.flush()?;
    Ok(())
}

pub const ORACLE_COLUMNS: [&str; 14] = [
    "n",
    "admitted_rate",
    "e_busy",
    "e_queue",
    "abandonment_rate",
    "throughput",
    "busy_frac",
    "q_frac",
    "rejection",
    "abandonment",
    "holding",
    "compensator",
    "utilization",
    "cost_total",
];

/// Exact `M/M/N+M` figures for the config at admission probability `p`.
pub fn oracle_for(
    cfg: &ExperimentConfig,
    n: usize,
    p: f64,
) -> Result<(OracleResult, crate::fluid_control::CostBreakdown), HarnessError> {
    use crate::distributions::Family;
    let (Family::Exponential { rate: mu }, Family::Exponential { rate: theta }) =
        (cfg.service.family(), cfg.patience.family())
    else {
        return Err(HarnessError::Config {
            field: "service".into(),
            line: None,
            message: "the oracle needs exponential service and patience".into(),
        });
    };
    if !matches!(cfg.interarrival.family(), Family::Exponential { .. }) {
        return Err(HarnessError::Config {
            field: "interarrival".into(),
            line: None,
            message: "the oracle needs Poisson arrivals".into(),
        });
    }
    let o = erlang_a_oracle(n, p * cfg.lambda * n as f64, *mu, *theta, 4 * n + 64)?;
    let c = oracle_cost(&o, cfg.lambda, p, *mu, &cfg.patience, &cfg.cost)?;
    Ok((o, c))
}

pub fn write_oracle_csv<W: Write>(
    out: W,
    rows: &[(OracleResult, crate::fluid_control::CostBreakdown)],
) -> Result<(), HarnessError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(ORACLE_COLUMNS)?;
    for (o, c) in rows {
        let n = o.servers as f64;
        let mut fields = vec![o.servers.to_string()];
        fields.extend(
            [
                o.admitted_rate,
                o.e_busy,
                o.e_queue,
                o.abandonment_rate,
                o.throughput,
                o.e_busy / n,
                o.e_queue / n,
                c.rejection,
                c.abandonment,
                c.holding,
                c.compensator,
                c.utilization,
                c.total(),
            ]
            .map(format_float),
        );
        w.write_record(fields)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn twelve_significant_digits() {
        assert_eq!(format_float(0.1), "0.1");
        assert_eq!(format_float(1.75), "1.75");
        assert_eq!(format_float(1.0 / 3.0), "0.333333333333");
        assert_eq!(format_float(2.0 / 3.0 * 1e5), "66666.6666667");
        assert_eq!(format_float(1e-7), "1e-07");
        assert_eq!(format_float(-1.2345678901234e-5), "-1.23456789012e-05");
        assert_eq!(format_float(1e12), "1e+12");
        assert_eq!(format_float(250.0), "250");
        assert_eq!(format_float(0.0), "0");
    }
}
