use std::path::Path;

use serde::{Deserialize, Serialize};

use super::HarnessError;
use crate::distributions::{Distribution, Family, Role};
use crate::fluid_control::{CostModel, UtilizationCost};

pub const SCHEMA_VERSION: u32 = 1;
const DEFAULT_BATCHES: usize = 20;

/// A law as written in the config file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case", deny_unknown_fields)]
pub enum DistributionRecord {
    Exponential { rate: f64 },
    Erlang { shape: u32, rate: f64 },
    HyperExponential { weights: Vec<f64>, rates: Vec<f64> },
    LogNormal { mu: f64, sigma: f64 },
    UniformShifted { lo: f64, hi: f64 },
    Weibull { shape: f64, scale: f64 },
}

impl DistributionRecord {
    fn family(&self) -> Family {
        match self.clone() {
            DistributionRecord::Exponential { rate } => Family::Exponential { rate },
            DistributionRecord::Erlang { shape, rate } => Family::Erlang { shape, rate },
            DistributionRecord::HyperExponential { weights, rates } => Family::HyperExponential { weights, rates },
            DistributionRecord::LogNormal { mu, sigma } => Family::LogNormal { mu, sigma },
            DistributionRecord::UniformShifted { lo, hi } => Family::UniformShifted { lo, hi },
            DistributionRecord::Weibull { shape, scale } => Family::Weibull { shape, scale },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum UtilizationRecord {
    Power { coeff: f64, exponent: f64 },
    Quadratic { coeff: f64 },
    PiecewiseLinear { breakpoints: Vec<(f64, f64)> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CostRecord {
    pub a: f64,
    #[serde(default)]
    pub c: f64,
    pub utilization: UtilizationRecord,
}

/// Policy as written in the config; `pistar` and `rest` are resolved against
/// the fluid design.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum PolicyRecord {
    Pistar,
    Nonidle,
    Thinned {
        p: f64,
    },
    Rest {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        rest_duration: Option<f64>,
    },
}

impl PolicyRecord {
    pub fn label(&self) -> &'static str {
        match self {
            PolicyRecord::Pistar => "pistar",
            PolicyRecord::Nonidle => "nonidle",
            PolicyRecord::Thinned { .. } => "thinned",
            PolicyRecord::Rest { .. } => "rest",
        }
    }

    pub fn from_label(label: &str) -> Option<Self> {
        match label {
            "pistar" => Some(PolicyRecord::Pistar),
            "nonidle" => Some(PolicyRecord::Nonidle),
            "rest" => Some(PolicyRecord::Rest { rest_duration: None }),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulationRecord {
    pub n_values: Vec<usize>,
    pub horizon: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub burn_in: Option<f64>,
    pub replications: usize,
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub batches: Option<usize>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FluidRecord {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dx: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub horizon: Option<f64>,
}

/// The config file as parsed, before validation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub schema_version: u32,
    pub lambda: f64,
    #[serde(default)]
    pub assume_dfr: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub interarrival: Option<DistributionRecord>,
    pub service: DistributionRecord,
    pub patience: DistributionRecord,
    pub cost: CostRecord,
    pub policies: Vec<PolicyRecord>,
    pub simulation: SimulationRecord,
    #[serde(default)]
    pub fluid: FluidRecord,
}

/// Validated experiment description.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub file: ConfigFile,
    /// Fluid arrival rate; the `N`-server system sees `Nλ`.
    pub lambda: f64,
    pub interarrival: Distribution,
    pub service: Distribution,
    pub patience: Distribution,
    pub cost: CostModel,
    pub assume_dfr: bool,
    pub policies: Vec<PolicyRecord>,
    pub n_values: Vec<usize>,
    pub horizon: f64,
    pub burn_in: f64,
    pub replications: usize,
    pub seed: u64,
    pub batches: usize,
    pub dx: f64,
    pub fluid_horizon: f64,
}

/// 1-based line of `key` inside `[table]` (or at top level for an empty
/// table), for pointing diagnostics at the source.
fn locate(src: &str, table: &str, key: &str) -> Option<usize> {
    let mut current = String::new();
    for (i, raw) in src.lines().enumerate() {
        let line = raw.trim();
        if line.starts_with('[') {
            current = line.trim_matches(|c| c == '[' || c == ']').trim().to_string();
            if key.is_empty() && current == table {
                return Some(i + 1);
            }
            continue;
        }
        if current == table && !key.is_empty() {
            let name = line.split('=').next().unwrap_or("").trim();
            if name == key {
                return Some(i + 1);
            }
        }
    }
    None
}

fn field_error(src: &str, table: &str, key: &str, message: impl Into<String>) -> HarnessError {
    let field = match (table.is_empty(), key.is_empty()) {
        (true, _) => key.to_string(),
        (false, true) => table.to_string(),
        (false, false) => format!("{table}.{key}"),
    };
    let line = locate(src, table, key).or_else(|| locate(src, table, ""));
    HarnessError::Config { field, line, message: message.into() }
}

fn build_distribution(
    src: &str,
    table: &str,
    rec: &DistributionRecord,
    role: Role,
) -> Result<Distribution, HarnessError> {
    Distribution::new(rec.family(), role).map_err(|e| field_error(src, table, "", e.to_string()))
}

impl ExperimentConfig {
    pub fn from_toml(src: &str) -> Result<Self, HarnessError> {
        let file: ConfigFile = toml::from_str(src).map_err(|e| {
            let line = e.span().map(|s| src[..s.start.min(src.len())].matches('\n').count() + 1);
            HarnessError::Config { field: String::new(), line, message: e.message().to_string() }
        })?;
        Self::from_file(file, src)
    }

    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        let src = std::fs::read_to_string(path).map_err(|e| HarnessError::Config {
            field: String::new(),
            line: None,
            message: format!("cannot read {}: {e}", path.display()),
        })?;
        Self::from_toml(&src)
    }

    /// Serializes the underlying file record.
    pub fn to_toml(&self) -> String {
        toml::to_string(&self.file).expect("config records always serialize")
    }

    fn from_file(file: ConfigFile, src: &str) -> Result<Self, HarnessError> {
        if file.schema_version != SCHEMA_VERSION {
            return Err(field_error(
                src,
                "",
                "schema_version",
                format!("unsupported schema version {} (expected {SCHEMA_VERSION})", file.schema_version),
            ));
        }
        let lambda = file.lambda;
        if !(lambda > 0.0 && lambda.is_finite()) {
            return Err(field_error(src, "", "lambda", format!("arrival rate {lambda} must be positive")));
        }
        let interarrival = match &file.interarrival {
            Some(rec) => {
                let d = build_distribution(src, "interarrival", rec, Role::Interarrival)?;
                if ((d.mean() * lambda) - 1.0).abs() > 1e-9 {
                    return Err(field_error(
                        src,
                        "interarrival",
                        "",
                        format!("mean {} does not equal 1/lambda = {}", d.mean(), 1.0 / lambda),
                    ));
                }
                d
            }
            None => Distribution::exponential(lambda, Role::Interarrival).expect("lambda checked positive"),
        };
        let service = build_distribution(src, "service", &file.service, Role::Service)?;
        let patience = build_distribution(src, "patience", &file.patience, Role::Patience)?;
        let utilization = match &file.cost.utilization {
            UtilizationRecord::Power { coeff, exponent } => {
                UtilizationCost::Power { coeff: *coeff, exponent: *exponent }
            }
            UtilizationRecord::Quadratic { coeff } => UtilizationCost::Quadratic { coeff: *coeff },
            UtilizationRecord::PiecewiseLinear { breakpoints } => {
                UtilizationCost::PiecewiseLinear { breakpoints: breakpoints.clone() }
            }
        };
        let cost = CostModel::new(file.cost.a, file.cost.c, utilization)
            .map_err(|e| field_error(src, "cost", "", e.to_string()))?;
        if file.policies.is_empty() {
            return Err(field_error(src, "", "policies", "at least one policy is required"));
        }
        for pol in &file.policies {
            match *pol {
                PolicyRecord::Thinned { p } if !(p > 0.0 && p <= 1.0) => {
                    return Err(field_error(src, "policies", "p", format!("admission probability {p} outside (0, 1]")));
                }
                PolicyRecord::Rest { rest_duration: Some(r) } if !(r >= 0.0 && r.is_finite()) => {
                    return Err(field_error(
                        src,
                        "policies",
                        "rest_duration",
                        format!("rest duration {r} must be >= 0"),
                    ));
                }
                _ => {}
            }
        }
        let sim = &file.simulation;
        if sim.n_values.is_empty() || sim.n_values.contains(&0) || sim.n_values.windows(2).any(|w| w[0] >= w[1]) {
            return Err(field_error(src, "simulation", "n_values", "must be nonempty, positive and increasing"));
        }
        let mu = 1.0 / service.mean();
        let burn_in = sim.burn_in.unwrap_or((50.0 / mu).max(50.0 / lambda));
        if !(burn_in >= 0.0 && burn_in.is_finite()) {
            return Err(field_error(src, "simulation", "burn_in", format!("burn-in {burn_in} must be >= 0")));
        }
        if !(sim.horizon > burn_in && sim.horizon.is_finite()) {
            return Err(field_error(
                src,
                "simulation",
                "horizon",
                format!("horizon {} must exceed burn-in {burn_in}", sim.horizon),
            ));
        }
        if sim.replications == 0 {
            return Err(field_error(src, "simulation", "replications", "must be at least 1"));
        }
        let batches = sim.batches.unwrap_or(DEFAULT_BATCHES);
        if batches == 0 {
            return Err(field_error(src, "simulation", "batches", "must be at least 1"));
        }
        let dx = file.fluid.dx.unwrap_or_else(|| crate::fluid_model::FluidModel::default_dx(&service, &patience));
        if !(dx > 0.0 && dx.is_finite()) {
            return Err(field_error(src, "fluid", "dx", format!("grid spacing {dx} must be positive")));
        }
        let fluid_horizon = file.fluid.horizon.unwrap_or(20.0 / mu);
        if !(fluid_horizon >= 0.0 && fluid_horizon.is_finite()) {
            return Err(field_error(src, "fluid", "horizon", format!("horizon {fluid_horizon} must be >= 0")));
        }
        Ok(ExperimentConfig {
            lambda,
            interarrival,
            service,
            patience,
            cost,
            assume_dfr: file.assume_dfr,
            policies: file.policies.clone(),
            n_values: sim.n_values.clone(),
            horizon: sim.horizon,
            burn_in,
            replications: sim.replications,
            seed: sim.seed,
            batches,
            dx,
            fluid_horizon,
            file,
        })
    }

    pub fn mu(&self) -> f64 {
        1.0 / self.service.mean()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
schema_version = 1
lambda = 2.0

[service]
family = "exponential"
rate = 1.0

[patience]
family = "exponential"
rate = 1.0

[cost]
a = 1.0

[cost.utilization]
kind = "power"
coeff = 1.0
exponent = 2.0

[[policies]]
kind = "pistar"

[simulation]
n_values = [10]
horizon = 200.0
replications = 2
seed = 1
"#;

    #[test]
    fn minimal_config_defaults() {
        let cfg = ExperimentConfig::from_toml(MINIMAL).unwrap();
        assert_eq!(cfg.burn_in, 50.0);
        assert_eq!(cfg.batches, 20);
        assert!((cfg.dx - 1.0 / 200.0).abs() < 1e-15);
        assert_eq!(cfg.interarrival.mean(), 0.5);
    }

    #[test]
    fn unknown_key_is_rejected_with_line() {
        let src = MINIMAL.replace("rate = 1.0\n\n[patience]", "rate = 1.0\nspeed = 3\n\n[patience]");
        match ExperimentConfig::from_toml(&src) {
            Err(HarnessError::Config { line: Some(l), message, .. }) => {
                assert_eq!(src.lines().nth(l - 1).unwrap().trim(), "[service]", "{message}");
                assert!(message.contains("speed"), "{message}");
            }
            other => panic!("expected a config error, got {other:?}"),
        }
    }

    #[test]
    fn zero_admission_is_a_config_error() {
        let src = MINIMAL.replace("kind = \"pistar\"", "kind = \"thinned\"\np = 0.0");
        match ExperimentConfig::from_toml(&src) {
            Err(HarnessError::Config { field, line, .. }) => {
                assert_eq!(field, "policies.p");
                assert!(line.is_some());
            }
            other => panic!("expected a config error, got {other:?}"),
        }
    }

    #[test]
    fn bad_parameter_points_at_table() {
        let src = MINIMAL.replacen("rate = 1.0", "rate = -1.0", 1);
        match ExperimentConfig::from_toml(&src) {
            Err(HarnessError::Config { field, line: Some(l), .. }) => {
                assert_eq!(field, "service");
                assert_eq!(src.lines().nth(l - 1).unwrap().trim(), "[service]");
            }
            other => panic!("expected a config error, got {other:?}"),
        }
    }

    #[test]
    fn round_trip() {
        let cfg = ExperimentConfig::from_toml(MINIMAL).unwrap();
        let again = ExperimentConfig::from_toml(&cfg.to_toml()).unwrap();
        assert_eq!(cfg, again);
    }
}
