//! Discrete-time plant-floor simulation.
//!
//! Each tick runs the same loop: drift the requirements, let every twin size
//! its task and report `(k', k_l)`, ask the network manager for an allocation,
//! let every twin run its granted iterations, then record the metrics. Twin
//! work fans out over the rayon pool; the manager call sits between two
//! barriers. Results depend only on `(config, policy, seed)`.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::alloc_core::{
    compute_residual, validate_scenario, AllocationConstraints, AllocationVector, NetworkDynamics, NetworkState,
    RequirementVector,
};
use crate::error::{Error, Result};
use crate::manager::{
    allocate_equal, allocate_event, allocate_online, allocate_static, estimate_event_horizon, should_trigger,
    EventHistory, PolicyKind,
};
use crate::rng::{stream, StreamId};
use crate::twin::{DigitalTwin, RegretTracker, TaskProfile};

/// Prediction horizon of the receding-horizon policy.
pub const ONLINE_HORIZON: usize = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    pub n_resources: usize,
    pub n_ticks: usize,
    /// Requirements stay at their nominal level for ticks `0..stationary_prefix`.
    pub stationary_prefix: usize,
    /// Total budget per tick; defaults to the sum of the initial requirements.
    pub capacity_b: Option<f64>,
    /// Requirements move by a uniform integer in `[-d, d]` per tick.
    pub requirement_step_bound: u32,
    pub requirement_range: [u32; 2],
    pub initial_requirement_range: [u32; 2],
    /// Each requirement stays within this distance of its nominal level.
    pub drift_band: u32,
    /// `k' - k_l`, also used as the maximum allowable deviation.
    pub gap: u32,
    /// Per-step regret budget; defaults to a tenth of the twins' tolerance.
    pub epsilon_per_step: Option<f64>,
    pub rho: f64,
    pub master_seed: u64,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            n_resources: 20,
            n_ticks: 100,
            stationary_prefix: 10,
            capacity_b: None,
            requirement_step_bound: 3,
            requirement_range: [5, 30],
            initial_requirement_range: [10, 20],
            drift_band: 10,
            gap: 10,
            epsilon_per_step: None,
            rho: 1e3,
            master_seed: 0,
        }
    }
}

impl ScenarioConfig {
    pub fn from_toml(text: &str) -> std::result::Result<Self, String> {
        toml::from_str(text).map_err(|e| e.to_string())
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("scenario config serializes")
    }

    pub fn epsilon(&self, profile: &TaskProfile) -> f64 {
        self.epsilon_per_step.unwrap_or(0.1 * profile.tolerance_delta)
    }
}

/// Per-tick series and summary statistics of one run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimResult {
    pub policy: PolicyKind,
    pub seed: u64,
    pub capacity_b: f64,
    pub stationary_prefix: usize,
    pub residual_inf_series: Vec<f64>,
    pub mean_residual_after_prefix: f64,
    /// Ticks at which the allocation was recomputed after the initial one.
    pub reallocation_ticks: Vec<usize>,
    /// `regret_series[tick][resource]`: cumulative regret after the tick.
    pub regret_series: Vec<Vec<f64>>,
    /// `requirement_series[tick][resource]`: the reported `k'`.
    pub requirement_series: Vec<Vec<f64>>,
    pub allocation_series: Vec<Vec<f64>>,
}

impl SimResult {
    pub fn n_ticks(&self) -> usize {
        self.residual_inf_series.len()
    }

    pub fn mean_regret(&self, tick: usize) -> f64 {
        let r = &self.regret_series[tick];
        r.iter().sum::<f64>() / r.len() as f64
    }

    /// Largest absolute regret over all resources at `tick`.
    pub fn max_regret(&self, tick: usize) -> f64 {
        self.regret_series[tick].iter().fold(0.0, |m, r| m.max(r.abs()))
    }

    /// Reallocations up to and including `tick`.
    pub fn reallocations_through(&self, tick: usize) -> usize {
        self.reallocation_ticks.partition_point(|&t| t <= tick)
    }

    /// Whether the requested total fits within capacity at `tick`.
    pub fn demand_fits(&self, tick: usize) -> bool {
        self.requirement_series[tick].iter().sum::<f64>() <= self.capacity_b
    }
}

fn mean_after_prefix(series: &[f64], prefix: usize) -> f64 {
    let tail = series.get(prefix + 1..).unwrap_or(&[]);
    if tail.is_empty() {
        0.0
    } else {
        tail.iter().sum::<f64>() / tail.len() as f64
    }
}

/// Moves each requirement by a bounded random integer once the stationary
/// prefix is over, keeping it within the drift band around its nominal level
/// and within the global range.
pub fn evolve_requirements(
    current: &RequirementVector,
    nominal: &RequirementVector,
    tick: usize,
    config: &ScenarioConfig,
    streams: &mut [ChaCha8Rng],
) -> Result<RequirementVector> {
    if tick < config.stationary_prefix {
        return Ok(current.clone());
    }
    crate::error::ensure_len(current.len(), streams.len())?;
    crate::error::ensure_len(current.len(), nominal.len())?;
    let d = i64::from(config.requirement_step_bound);
    let [r_min, r_max] = config.requirement_range.map(f64::from);
    let band = f64::from(config.drift_band);
    let next = current
        .as_slice()
        .iter()
        .zip(nominal.as_slice())
        .zip(streams.iter_mut())
        .map(|((&r, &base), rng)| {
            let step = rng.gen_range(-d..=d) as f64;
            let lo = r_min.max(base - band);
            let hi = r_max.min(base + band);
            (r + step).clamp(lo, hi)
        })
        .collect();
    RequirementVector::new(next)
}

/// Scenario state shared by every policy: the initial requirements and the
/// random streams they evolve with.
struct Plant {
    nominal: RequirementVector,
    requirement_streams: Vec<ChaCha8Rng>,
    twins: Vec<DigitalTwin>,
    capacity_b: f64,
}

impl Plant {
    fn new(config: &ScenarioConfig, seed: u64) -> Result<Self> {
        let n = config.n_resources;
        let [lo, hi] = config.initial_requirement_range;
        let mut scenario = stream(seed, StreamId::Scenario);
        let nominal: Vec<f64> = (0..n).map(|_| f64::from(scenario.gen_range(lo..=hi))).collect();
        let nominal = RequirementVector::new(nominal)?;
        let capacity_b = config.capacity_b.unwrap_or_else(|| nominal.total());
        let twins = (0..n)
            .map(|i| DigitalTwin::new(i, TaskProfile::default(), config.gap, stream(seed, StreamId::Twin(i))))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            nominal,
            requirement_streams: (0..n).map(|i| stream(seed, StreamId::Requirement(i))).collect(),
            twins,
            capacity_b,
        })
    }
}

/// Runs one policy over the whole scenario.
pub fn run_scenario(config: &ScenarioConfig, policy: PolicyKind, seed: u64) -> Result<SimResult> {
    let config = validate_scenario(config.clone())
        .map_err(|diags| Error::invalid(diags.join("; ")))?
        .config;
    let n = config.n_resources;
    let mut plant = Plant::new(&config, seed)?;
    let profile = TaskProfile::default();
    let epsilon = config.epsilon(&profile);
    let dynamics = NetworkDynamics::memoryless(n);
    let capacity = plant.capacity_b;

    let mut trackers = vec![RegretTracker::new(epsilon)?; n];
    let mut history = EventHistory::default();
    history.record(0)?;
    let mut requirements = plant.nominal.clone();
    let mut allocation: Option<AllocationVector> = None;
    let mut last_event = 0;

    let mut result = SimResult {
        policy,
        seed,
        capacity_b: capacity,
        stationary_prefix: config.stationary_prefix,
        residual_inf_series: Vec::with_capacity(config.n_ticks),
        mean_residual_after_prefix: 0.0,
        reallocation_ticks: Vec::new(),
        regret_series: Vec::with_capacity(config.n_ticks),
        requirement_series: Vec::with_capacity(config.n_ticks),
        allocation_series: Vec::with_capacity(config.n_ticks),
    };

    for tick in 0..config.n_ticks {
        let step = |e: Error| e.at_tick(tick);
        requirements =
            evolve_requirements(&requirements, &plant.nominal, tick, &config, &mut plant.requirement_streams)
                .map_err(step)?;

        // Twins size their tasks and report requirements.
        let reports = plant
            .twins
            .par_iter_mut()
            .zip(requirements.as_slice().par_iter())
            .map(|(twin, &demand)| {
                twin.begin_tick(tick, demand as u32)?;
                twin.compute_requirement()
            })
            .collect::<Result<Vec<_>>>()
            .map_err(step)?;
        let k_prime = RequirementVector::new(reports.iter().map(|r| f64::from(r.k_prime)).collect()).map_err(step)?;
        let constraints = AllocationConstraints::new(
            capacity,
            reports.iter().map(|r| f64::from(r.k_lower)).collect(),
            k_prime.as_slice().to_vec(),
        )
        .map_err(step)?
        .with_max_deviation(vec![f64::from(config.gap); n])
        .with_penalty(config.rho);

        let static_solve = |c: &AllocationConstraints| -> Result<AllocationVector> {
            Ok(allocate_static(&plant.nominal, c)?.allocation)
        };
        let state = NetworkState::new(
            allocation
                .as_ref()
                .map_or_else(|| vec![0.0; n], |a| a.as_slice().to_vec()),
        )
        .map_err(step)?;

        let next = match (policy, allocation.take()) {
            (PolicyKind::Equal, None) => allocate_equal(n, capacity).map_err(step)?,
            (PolicyKind::Static | PolicyKind::EventTriggered, None) => static_solve(&constraints).map_err(step)?,
            (PolicyKind::Equal | PolicyKind::Static, Some(a)) => a,
            (PolicyKind::EventTriggered, Some(a)) => {
                if should_trigger(&trackers, tick - last_event, history.max_reallocation_period) {
                    let horizon = estimate_event_horizon(&history);
                    let forecast = persistence_forecast(&plant.twins, horizon).map_err(step)?;
                    let sol = allocate_event(&state, &forecast, &dynamics, &constraints, horizon).map_err(step)?;
                    history.record(tick).map_err(step)?;
                    result.reallocation_ticks.push(tick);
                    last_event = tick;
                    trackers.iter_mut().for_each(|t| t.reset(tick));
                    sol.allocation
                } else {
                    a
                }
            }
            (PolicyKind::OnlineDynamic, previous) => {
                // Tick 0 starts from the static baseline as the network state.
                let state = match previous {
                    Some(_) => state,
                    None => NetworkState::new(static_solve(&constraints).map_err(step)?.into_inner()).map_err(step)?,
                };
                let forecast = persistence_forecast(&plant.twins, ONLINE_HORIZON).map_err(step)?;
                let sol = allocate_online(&state, &forecast, &dynamics, &constraints, ONLINE_HORIZON).map_err(step)?;
                if tick > 0 {
                    result.reallocation_ticks.push(tick);
                }
                last_event = tick;
                trackers.iter_mut().for_each(|t| t.reset(tick));
                sol.allocation
            }
        };

        // Twins run their granted iterations.
        let samples = plant
            .twins
            .par_iter_mut()
            .zip(next.as_slice().par_iter())
            .map(|(twin, &grant)| twin.step_control(grant).map(|out| out.sample))
            .collect::<Result<Vec<_>>>()
            .map_err(step)?;
        for (tracker, sample) in trackers.iter_mut().zip(&samples) {
            *tracker = tracker.update(sample).map_err(step)?;
        }

        let residual = compute_residual(&k_prime, &next).map_err(step)?;
        result.residual_inf_series.push(residual.inf_norm);
        result.regret_series.push(trackers.iter().map(|t| t.cumulative_regret).collect());
        result.requirement_series.push(k_prime.into_inner());
        result.allocation_series.push(next.as_slice().to_vec());
        allocation = Some(next);
    }

    result.mean_residual_after_prefix = mean_after_prefix(&result.residual_inf_series, config.stationary_prefix);
    Ok(result)
}

/// Stacks the twins' persistence forecasts into one requirement vector per step.
fn persistence_forecast(twins: &[DigitalTwin], horizon: usize) -> Result<Vec<RequirementVector>> {
    let per_twin = twins
        .iter()
        .map(|t| t.forecast_requirements(horizon))
        .collect::<Result<Vec<_>>>()?;
    (0..=horizon)
        .map(|step| RequirementVector::new(per_twin.iter().map(|f| f[step]).collect()))
        .collect()
}

/// Runs all four policies on the same requirement trajectory.
pub fn compare_policies(config: &ScenarioConfig, seed: u64) -> Result<Vec<SimResult>> {
    PolicyKind::ALL
        .par_iter()
        .map(|&p| run_scenario(config, p, seed))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn prefix_leaves_requirements_unchanged() {
        let cfg = ScenarioConfig::default();
        let r = RequirementVector::new(vec![12.0; 4]).unwrap();
        let mut streams: Vec<_> = (0..4).map(|i| stream(1, StreamId::Requirement(i))).collect();
        let out = evolve_requirements(&r, &r, 5, &cfg, &mut streams).unwrap();
        assert_eq!(out, r);
    }

    #[test]
    fn drift_clamps_at_range() {
        let cfg = ScenarioConfig {
            drift_band: 100,
            ..ScenarioConfig::default()
        };
        let r = RequirementVector::new(vec![30.0; 8]).unwrap();
        let mut streams: Vec<_> = (0..8).map(|i| stream(3, StreamId::Requirement(i))).collect();
        for tick in 10..60 {
            let out = evolve_requirements(&r, &r, tick, &cfg, &mut streams).unwrap();
            assert!(out.as_slice().iter().all(|&v| (27.0..=30.0).contains(&v)));
        }
    }

    #[test]
    fn drift_stays_in_band() {
        let cfg = ScenarioConfig::default();
        let nominal = RequirementVector::new(vec![12.0, 18.0]).unwrap();
        let mut r = nominal.clone();
        let mut streams: Vec<_> = (0..2).map(|i| stream(9, StreamId::Requirement(i))).collect();
        for tick in 10..500 {
            r = evolve_requirements(&r, &nominal, tick, &cfg, &mut streams).unwrap();
            assert!((5.0..=22.0).contains(&r.as_slice()[0]));
            assert!((8.0..=28.0).contains(&r.as_slice()[1]));
        }
    }

    #[test]
    fn equal_policy_symmetric_case_has_zero_residual() {
        let cfg = ScenarioConfig {
            n_resources: 2,
            n_ticks: 12,
            stationary_prefix: 12,
            initial_requirement_range: [15, 15],
            ..ScenarioConfig::default()
        };
        let res = run_scenario(&cfg, PolicyKind::Equal, 4).unwrap();
        assert_eq!(res.residual_inf_series, vec![0.0; 12]);
        assert_eq!(res.capacity_b, 30.0);
    }

    #[test]
    fn series_lengths_match_ticks() {
        let cfg = ScenarioConfig {
            n_resources: 5,
            n_ticks: 30,
            ..ScenarioConfig::default()
        };
        for policy in PolicyKind::ALL {
            let res = run_scenario(&cfg, policy, 1).unwrap();
            assert_eq!(res.n_ticks(), 30);
            assert_eq!(res.regret_series.len(), 30);
            assert_eq!(res.allocation_series.len(), 30);
        }
    }

    #[test]
    fn invalid_config_is_rejected() {
        let cfg = ScenarioConfig {
            n_ticks: 0,
            ..ScenarioConfig::default()
        };
        assert!(run_scenario(&cfg, PolicyKind::Equal, 0).is_err());
    }

    #[test]
    fn toml_round_trip_and_unknown_keys() {
        let cfg = ScenarioConfig::default();
        assert_eq!(ScenarioConfig::from_toml(&cfg.to_toml()).unwrap(), cfg);
        let partial = ScenarioConfig::from_toml("n_ticks = 40\ncapacity_b = 250.0\n").unwrap();
        assert_eq!(partial.n_ticks, 40);
        assert_eq!(partial.capacity_b, Some(250.0));
        assert_eq!(partial.n_resources, 20);
        assert!(ScenarioConfig::from_toml("n_tick = 40\n").is_err());
    }

    #[test]
    fn mean_skips_prefix_ticks() {
        let s = [100.0, 100.0, 1.0, 3.0];
        assert_eq!(mean_after_prefix(&s, 1), 2.0);
        assert_eq!(mean_after_prefix(&s, 10), 0.0);
    }
}
