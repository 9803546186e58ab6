//! Domain types shared by the solvers, the twins and the network manager.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{ensure_len, Error, Result};
use crate::sim::ScenarioConfig;

/// Default bound on `requested - allocated` for every resource.
pub const DEFAULT_MAX_DEVIATION: f64 = 10.0;

/// Default weight of the quadratic slack penalty.
pub const DEFAULT_SLACK_PENALTY: f64 = 1e3;

fn check_nonnegative(values: &[f64], what: &str) -> Result<()> {
    for (i, v) in values.iter().enumerate() {
        if !v.is_finite() || *v < 0.0 {
            return Err(Error::invalid(format!(
                "{what}[{i}] = {v} must be finite and nonnegative"
            )));
        }
    }
    Ok(())
}

/// Requested computation budget per resource, in PGA iterations per tick.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RequirementVector(Vec<f64>);

impl RequirementVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        check_nonnegative(&values, "requirement")?;
        Ok(Self(values))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn total(&self) -> f64 {
        self.0.iter().sum()
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

/// Granted computation budget per resource.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AllocationVector(Vec<f64>);

impl AllocationVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        check_nonnegative(&values, "allocation")?;
        Ok(Self(values))
    }

    /// Solver outputs can carry `-0.0` or sub-ulp negatives after a
    /// projection; those are snapped to zero.
    pub(crate) fn from_solver(mut values: Vec<f64>) -> Result<Self> {
        for v in &mut values {
            if *v < 0.0 && *v > -1e-12 {
                *v = 0.0;
            }
        }
        Self::new(values)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn total(&self) -> f64 {
        self.0.iter().sum()
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

/// Hard capacity plus the soft, slack-relaxed bounds reported by the twins.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AllocationConstraints {
    pub capacity_b: f64,
    /// Minimum acceptable allocation `k_l` per resource (soft).
    pub lower_bounds: Vec<f64>,
    /// Requested allocation `k'` per resource.
    pub requested: Vec<f64>,
    /// Bound on `k' - a` per resource (soft).
    pub max_deviation: Vec<f64>,
    pub slack_penalty_rho: f64,
}

impl AllocationConstraints {
    /// Constraints with the default deviation bound and slack penalty.
    pub fn new(capacity_b: f64, lower_bounds: Vec<f64>, requested: Vec<f64>) -> Result<Self> {
        let n = requested.len();
        let c = Self {
            capacity_b,
            lower_bounds,
            requested,
            max_deviation: vec![DEFAULT_MAX_DEVIATION; n],
            slack_penalty_rho: DEFAULT_SLACK_PENALTY,
        };
        c.validate().map_err(|d| Error::invalid(d.join("; ")))?;
        Ok(c)
    }

    pub fn with_penalty(mut self, rho: f64) -> Self {
        self.slack_penalty_rho = rho;
        self
    }

    pub fn with_max_deviation(mut self, max_deviation: Vec<f64>) -> Self {
        self.max_deviation = max_deviation;
        self
    }

    pub fn len(&self) -> usize {
        self.requested.len()
    }

    pub fn is_empty(&self) -> bool {
        self.requested.is_empty()
    }

    /// Effective soft floor per resource: both the minimum acceptable level and
    /// the deviation bound are of the form `a_i >= s_i`, so a single slack per
    /// resource covers the tighter of the two.
    pub fn soft_floor(&self) -> Vec<f64> {
        self.lower_bounds
            .iter()
            .zip(&self.requested)
            .zip(&self.max_deviation)
            .map(|((&lo, &req), &dev)| lo.max(req - dev))
            .collect()
    }

    /// One diagnostic per violated invariant.
    pub fn validate(&self) -> std::result::Result<(), Vec<String>> {
        let mut diags = Vec::new();
        let n = self.requested.len();
        if !(self.capacity_b > 0.0) || !self.capacity_b.is_finite() {
            diags.push("capacity must be positive".to_string());
        }
        if self.lower_bounds.len() != n {
            diags.push(format!(
                "lower_bounds has {} entries, expected {n}",
                self.lower_bounds.len()
            ));
        }
        if self.max_deviation.len() != n {
            diags.push(format!(
                "max_deviation has {} entries, expected {n}",
                self.max_deviation.len()
            ));
        }
        for (i, (&lo, &req)) in self.lower_bounds.iter().zip(&self.requested).enumerate() {
            if !(lo >= 0.0) {
                diags.push(format!("resource {i}: lower bound {lo} is negative"));
            }
            if lo > req {
                diags.push(format!(
                    "resource {i}: lower bound {lo} exceeds requested level {req}"
                ));
            }
        }
        for (i, &d) in self.max_deviation.iter().enumerate() {
            if !(d >= 0.0) {
                diags.push(format!("resource {i}: max deviation {d} is negative"));
            }
        }
        if !(self.slack_penalty_rho >= 0.0) || !self.slack_penalty_rho.is_finite() {
            diags.push("slack penalty must be a nonnegative finite number".to_string());
        }
        if diags.is_empty() {
            Ok(())
        } else {
            Err(diags)
        }
    }
}

/// Linear network dynamics `xi_{t+1} = A xi_t + B a_t`.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkDynamics {
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
}

impl NetworkDynamics {
    pub fn new(a: DMatrix<f64>, b: DMatrix<f64>) -> Result<Self> {
        let n = a.nrows();
        if !a.is_square() {
            return Err(Error::invalid("A must be square"));
        }
        ensure_len(n, b.nrows())?;
        ensure_len(n, b.ncols())?;
        Ok(Self { a, b })
    }

    /// `A = 0`, `B = I`: the state is the allocation applied at the previous tick.
    pub fn memoryless(n: usize) -> Self {
        Self {
            a: DMatrix::zeros(n, n),
            b: DMatrix::identity(n, n),
        }
    }

    pub fn dim(&self) -> usize {
        self.a.nrows()
    }

    pub fn step(&self, xi: &DVector<f64>, a: &DVector<f64>) -> DVector<f64> {
        &self.a * xi + &self.b * a
    }
}

/// Current effective allocation state of the network.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkState {
    pub xi: Vec<f64>,
}

impl NetworkState {
    pub fn new(xi: Vec<f64>) -> Result<Self> {
        if xi.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("network state must be finite"));
        }
        Ok(Self { xi })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Residual {
    /// Signed `r_i - a_i`; negative entries mark over-allocation.
    pub per_resource: Vec<f64>,
    pub inf_norm: f64,
}

pub fn compute_residual(r: &RequirementVector, a: &AllocationVector) -> Result<Residual> {
    ensure_len(r.len(), a.len())?;
    let per_resource: Vec<f64> = r
        .as_slice()
        .iter()
        .zip(a.as_slice())
        .map(|(ri, ai)| ri - ai)
        .collect();
    let inf_norm = per_resource.iter().fold(0.0_f64, |m, d| m.max(d.abs()));
    Ok(Residual {
        per_resource,
        inf_norm,
    })
}

/// A scenario that passed validation, with any non-fatal findings.
#[derive(Debug, Clone, PartialEq)]
pub struct ValidatedScenario {
    pub config: ScenarioConfig,
    pub warnings: Vec<String>,
}

/// Checks every scenario invariant. Errors come back as one diagnostic per
/// violation. A worst-case lower-bound sum above capacity is only a warning
/// because the slack variables allow the soft floors to be violated.
pub fn validate_scenario(config: ScenarioConfig) -> std::result::Result<ValidatedScenario, Vec<String>> {
    let mut errors = Vec::new();
    let mut warnings = Vec::new();
    let c = &config;

    if c.n_resources == 0 {
        errors.push("n_resources must be positive".to_string());
    }
    if c.n_ticks == 0 {
        errors.push("n_ticks must be positive".to_string());
    }
    if c.stationary_prefix > c.n_ticks {
        errors.push(format!(
            "stationary_prefix {} exceeds n_ticks {}",
            c.stationary_prefix, c.n_ticks
        ));
    }
    let [r_min, r_max] = c.requirement_range;
    if r_min > r_max {
        errors.push(format!("requirement_range [{r_min}, {r_max}] is empty"));
    }
    if r_min == 0 {
        errors.push("requirement_range must start at 1 or above".to_string());
    }
    let [i_min, i_max] = c.initial_requirement_range;
    if i_min > i_max {
        errors.push(format!("initial_requirement_range [{i_min}, {i_max}] is empty"));
    }
    if i_min < r_min || i_max > r_max {
        errors.push(format!(
            "initial_requirement_range [{i_min}, {i_max}] lies outside requirement_range [{r_min}, {r_max}]"
        ));
    }
    if let Some(b) = c.capacity_b {
        if !(b > 0.0) || !b.is_finite() {
            errors.push("capacity must be positive".to_string());
        }
    }
    if let Some(eps) = c.epsilon_per_step {
        if !(eps > 0.0) || !eps.is_finite() {
            errors.push("epsilon_per_step must be positive".to_string());
        }
    }
    if !(c.rho > 0.0) || !c.rho.is_finite() {
        errors.push("rho must be positive".to_string());
    }

    if errors.is_empty() {
        // Largest possible sum of soft floors at tick 0.
        let worst_floor = (i_max.saturating_sub(c.gap)).max(1) as f64;
        let floor_sum = worst_floor * c.n_resources as f64;
        let capacity = c
            .capacity_b
            .unwrap_or((i_min as f64) * c.n_resources as f64);
        if floor_sum > capacity {
            warnings.push(format!(
                "lower bounds may sum to {floor_sum}, above capacity {capacity}; slack will absorb the excess"
            ));
        }
        Ok(ValidatedScenario { config, warnings })
    } else {
        Err(errors)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rv(v: &[f64]) -> RequirementVector {
        RequirementVector::new(v.to_vec()).unwrap()
    }

    fn av(v: &[f64]) -> AllocationVector {
        AllocationVector::new(v.to_vec()).unwrap()
    }

    #[test]
    fn residual_identity() {
        let res = compute_residual(&rv(&[5.0, 7.0]), &av(&[5.0, 7.0])).unwrap();
        assert_eq!(res.inf_norm, 0.0);
    }

    #[test]
    fn residual_is_signed() {
        let res = compute_residual(&rv(&[10.0, 20.0]), &av(&[8.0, 25.0])).unwrap();
        assert_eq!(res.per_resource, vec![2.0, -5.0]);
        assert_eq!(res.inf_norm, 5.0);
    }

    #[test]
    fn residual_length_mismatch() {
        let err = compute_residual(&rv(&[1.0]), &av(&[1.0, 2.0])).unwrap_err();
        assert_eq!(err, Error::DimensionMismatch { expected: 1, found: 2 });
    }

    #[test]
    fn negative_requirement_rejected() {
        assert!(RequirementVector::new(vec![1.0, -1.0]).is_err());
        assert!(AllocationVector::new(vec![f64::NAN]).is_err());
    }

    #[test]
    fn default_scenario_is_valid() {
        let v = validate_scenario(ScenarioConfig::default()).unwrap();
        assert_eq!(v.config.n_resources, 20);
        assert_eq!(v.config.n_ticks, 100);
    }

    #[test]
    fn zero_capacity_rejected() {
        let cfg = ScenarioConfig {
            capacity_b: Some(0.0),
            ..ScenarioConfig::default()
        };
        let errs = validate_scenario(cfg).unwrap_err();
        assert!(errs.iter().any(|e| e == "capacity must be positive"));
    }

    #[test]
    fn every_violation_reported() {
        let cfg = ScenarioConfig {
            n_resources: 0,
            stationary_prefix: 500,
            requirement_range: [30, 5],
            ..ScenarioConfig::default()
        };
        let errs = validate_scenario(cfg).unwrap_err();
        assert!(errs.len() >= 3, "{errs:?}");
    }

    #[test]
    fn tight_capacity_is_only_a_warning() {
        let cfg = ScenarioConfig {
            capacity_b: Some(50.0),
            ..ScenarioConfig::default()
        };
        let v = validate_scenario(cfg).unwrap();
        assert_eq!(v.warnings.len(), 1);
    }

    #[test]
    fn validation_is_idempotent() {
        let once = validate_scenario(ScenarioConfig::default()).unwrap();
        let twice = validate_scenario(once.config.clone()).unwrap();
        assert_eq!(once, twice);
    }

    #[test]
    fn lower_above_requested_names_resource() {
        let c = AllocationConstraints {
            capacity_b: 10.0,
            lower_bounds: vec![1.0, 6.0],
            requested: vec![2.0, 5.0],
            max_deviation: vec![10.0; 2],
            slack_penalty_rho: 1e3,
        };
        let errs = c.validate().unwrap_err();
        assert_eq!(errs.len(), 1);
        assert!(errs[0].contains("resource 1"), "{errs:?}");
    }

    #[test]
    fn constraints_capacity_must_be_positive() {
        let err = AllocationConstraints::new(0.0, vec![0.0], vec![1.0]).unwrap_err();
        assert!(err.to_string().contains("capacity must be positive"));
    }

    #[test]
    fn soft_floor_takes_tighter_bound() {
        let c = AllocationConstraints::new(100.0, vec![1.0, 10.0], vec![25.0, 15.0]).unwrap();
        assert_eq!(c.soft_floor(), vec![15.0, 10.0]);
    }

    #[test]
    fn memoryless_dynamics_returns_input() {
        let d = NetworkDynamics::memoryless(2);
        let next = d.step(&DVector::from_vec(vec![3.0, 4.0]), &DVector::from_vec(vec![1.0, 2.0]));
        assert_eq!(next.as_slice(), &[1.0, 2.0]);
    }

    #[test]
    fn dynamics_shape_checked() {
        assert!(NetworkDynamics::new(DMatrix::zeros(2, 2), DMatrix::zeros(3, 3)).is_err());
    }
}
