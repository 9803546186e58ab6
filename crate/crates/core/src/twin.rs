//! Digital twin of one physical resource.
//!
//! Each tick the twin receives the plant-floor workload for its resource,
//! expressed as an iteration demand, and sizes a quadratic tracking task to
//! match: the task workspace is scaled so that the certified PGA iteration
//! count for the twin's tolerance equals the demand. The twin then reports
//! `(k', k_l)`, runs as many iterations as the network manager grants, and
//! compares the outcome against the counterfactual run with `k'` iterations.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::projection::{
    iterations_for_delta, pga_solve, BoxSet, FeasibleSet, PgaConfig, Quadratic, SmoothConvexProblem,
    SmoothObjective,
};

/// Shape of the per-tick control task shared by every twin.
///
/// The workspace is a box whose half-widths are proportional to `extent`.
/// Most of its diameter lies along the slowly converging axis, so that the
/// iteration count actually matters for the outcome.
#[derive(Debug, Clone, PartialEq)]
pub struct TaskProfile {
    /// Diagonal curvature of the tracking cost; the largest entry is `L`.
    pub curvature: Vec<f64>,
    /// Relative half-width of the workspace along each axis.
    pub extent: Vec<f64>,
    /// Tolerance `delta` of the convergence ball.
    pub tolerance_delta: f64,
}

impl Default for TaskProfile {
    fn default() -> Self {
        Self {
            curvature: vec![1.0, 0.065],
            extent: vec![0.1, 1.0],
            tolerance_delta: 1.0,
        }
    }
}

impl TaskProfile {
    pub fn dim(&self) -> usize {
        self.curvature.len()
    }

    pub fn smoothness(&self) -> f64 {
        self.curvature.iter().cloned().fold(0.0, f64::max)
    }

    /// `alpha = 1/L`.
    pub fn step_alpha(&self) -> f64 {
        1.0 / self.smoothness()
    }

    /// Per-axis half-widths of the workspace whose diameter certifies
    /// `demand` iterations. The half-iteration offset keeps the ceiling away
    /// from integer boundaries.
    pub fn half_widths_for(&self, demand: u32) -> Vec<f64> {
        let demand = f64::from(demand.max(1));
        let diameter_sq = 2.0 * self.step_alpha() * self.tolerance_delta * (demand - 0.5);
        let norm_sq: f64 = self.extent.iter().map(|e| e * e).sum();
        let scale = (diameter_sq / (4.0 * norm_sq)).sqrt();
        self.extent.iter().map(|e| e * scale).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Requirement {
    pub k_prime: u32,
    pub k_lower: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PerformanceSample {
    pub tick: usize,
    /// Suboptimality after the granted iterations (lower is better).
    pub achieved: f64,
    /// Suboptimality after the requested `k'` iterations from the same start.
    pub requested_baseline: f64,
}

impl PerformanceSample {
    pub fn regret_increment(&self) -> f64 {
        self.achieved - self.requested_baseline
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ControlOutput {
    pub action_u: Vec<f64>,
    pub iterations_granted: usize,
    pub sample: PerformanceSample,
}

/// Cumulative regret since the last reallocation event.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegretTracker {
    pub last_event_tick_tau: usize,
    pub cumulative_regret: f64,
    pub threshold_epsilon_per_step: f64,
}

impl RegretTracker {
    pub fn new(threshold_epsilon_per_step: f64) -> Result<Self> {
        if !(threshold_epsilon_per_step > 0.0) || !threshold_epsilon_per_step.is_finite() {
            return Err(Error::invalid("regret threshold must be positive"));
        }
        Ok(Self {
            last_event_tick_tau: 0,
            cumulative_regret: 0.0,
            threshold_epsilon_per_step,
        })
    }

    pub fn update(mut self, sample: &PerformanceSample) -> Result<Self> {
        if sample.tick < self.last_event_tick_tau {
            return Err(Error::invalid(format!(
                "sample at tick {} predates the last event at tick {}",
                sample.tick, self.last_event_tick_tau
            )));
        }
        self.cumulative_regret += sample.regret_increment();
        Ok(self)
    }

    /// Threshold after `elapsed` steps past the event: `epsilon * (elapsed + 1)`.
    pub fn threshold(&self, elapsed: usize) -> f64 {
        self.threshold_epsilon_per_step * (elapsed as f64 + 1.0)
    }

    /// `|R| <= epsilon(tau + T)`.
    pub fn is_satisfied(&self, elapsed: usize) -> bool {
        self.cumulative_regret.abs() <= self.threshold(elapsed)
    }

    pub fn reset(&mut self, tau: usize) {
        self.last_event_tick_tau = tau;
        self.cumulative_regret = 0.0;
    }
}

pub fn update_regret(tracker: RegretTracker, sample: &PerformanceSample) -> Result<RegretTracker> {
    tracker.update(sample)
}

pub fn check_satisfaction(tracker: &RegretTracker, elapsed: usize) -> bool {
    tracker.is_satisfied(elapsed)
}

/// The task a twin has to solve during one tick.
#[derive(Debug, Clone)]
struct TickTask {
    tick: usize,
    objective: Quadratic,
    workspace: BoxSet,
    start: Vec<f64>,
    optimum_value: f64,
}

#[derive(Debug, Clone)]
pub struct DigitalTwin {
    resource_id: usize,
    profile: TaskProfile,
    requirement_gap: u32,
    rng: ChaCha8Rng,
    task: Option<TickTask>,
    performance_history: Vec<PerformanceSample>,
}

impl DigitalTwin {
    pub fn new(resource_id: usize, profile: TaskProfile, requirement_gap: u32, rng: ChaCha8Rng) -> Result<Self> {
        if profile.curvature.is_empty() || profile.curvature.iter().any(|c| !(*c > 0.0)) {
            return Err(Error::invalid("task curvature must be positive"));
        }
        if profile.extent.len() != profile.dim() || profile.extent.iter().any(|e| !(*e > 0.0)) {
            return Err(Error::invalid("task extent must be positive along every axis"));
        }
        if !(profile.tolerance_delta > 0.0) {
            return Err(Error::invalid("task tolerance must be positive"));
        }
        Ok(Self {
            resource_id,
            profile,
            requirement_gap,
            rng,
            task: None,
            performance_history: Vec::new(),
        })
    }

    pub fn resource_id(&self) -> usize {
        self.resource_id
    }

    pub fn profile(&self) -> &TaskProfile {
        &self.profile
    }

    pub fn performance_history(&self) -> &[PerformanceSample] {
        &self.performance_history
    }

    /// Pulls the tick's workload: resizes the workspace for `demand`
    /// iterations and draws a fresh tracking target in its upper half. The
    /// twin starts each tick from the lower corner of the workspace.
    pub fn begin_tick(&mut self, tick: usize, demand: u32) -> Result<()> {
        let widths = self.profile.half_widths_for(demand);
        let lower: Vec<f64> = widths.iter().map(|w| -w).collect();
        let workspace = BoxSet::new(lower.clone(), widths.clone())?;
        let target: Vec<f64> = widths.iter().map(|&w| self.rng.gen_range(0.0..=w)).collect();
        let objective = Quadratic::weighted_tracking(&self.profile.curvature, &target)?;
        let optimum_value = objective.value(&target);
        self.task = Some(TickTask {
            tick,
            objective,
            workspace,
            start: lower,
            optimum_value,
        });
        Ok(())
    }

    fn task(&self) -> Result<&TickTask> {
        self.task
            .as_ref()
            .ok_or_else(|| Error::invalid(format!("twin {} has no task for this tick", self.resource_id)))
    }

    /// Certified iteration count for the current task, and the minimum
    /// acceptable level `max(k' - gap, 1)`.
    pub fn compute_requirement(&self) -> Result<Requirement> {
        let task = self.task()?;
        let k = iterations_for_delta(
            task.workspace.diameter(),
            self.profile.step_alpha(),
            self.profile.tolerance_delta,
        )?;
        let k_prime = u32::try_from(k).map_err(|_| Error::invalid("iteration requirement overflows"))?;
        Ok(Requirement {
            k_prime,
            k_lower: k_prime.saturating_sub(self.requirement_gap).max(1),
        })
    }

    /// Persistence forecast: the current `k'` for each of the `horizon + 1` steps.
    pub fn forecast_requirements(&self, horizon: usize) -> Result<Vec<f64>> {
        if horizon == 0 {
            return Err(Error::invalid("forecast horizon must be at least 1"));
        }
        let k = self.compute_requirement()?.k_prime;
        Ok(vec![f64::from(k); horizon + 1])
    }

    fn run(&self, task: &TickTask, iterations: usize) -> Result<Vec<f64>> {
        let problem = SmoothConvexProblem::new(&task.objective, FeasibleSet::Box(task.workspace.clone()));
        let config = PgaConfig::fixed_budget(self.profile.step_alpha(), iterations, self.profile.tolerance_delta);
        Ok(pga_solve(&problem, &task.start, &config)?.x)
    }

    /// Runs `floor(granted)` iterations (at least one) and the `k'` baseline.
    pub fn step_control(&mut self, granted: f64) -> Result<ControlOutput> {
        if !granted.is_finite() || granted < 0.0 {
            return Err(Error::invalid(format!("granted budget {granted} must be finite and nonnegative")));
        }
        let task = self.task()?;
        let k_prime = self.compute_requirement()?.k_prime as usize;
        let iterations = (granted.floor() as usize).max(1);

        let x_f = self.run(task, iterations)?;
        let achieved = task.objective.value(&x_f) - task.optimum_value;
        let requested_baseline = if iterations == k_prime {
            achieved
        } else {
            let x_req = self.run(task, k_prime)?;
            task.objective.value(&x_req) - task.optimum_value
        };
        let sample = PerformanceSample {
            tick: task.tick,
            achieved,
            requested_baseline,
        };
        self.performance_history.push(sample);
        Ok(ControlOutput {
            // sigma is the identity on the final iterate.
            action_u: x_f,
            iterations_granted: iterations,
            sample,
        })
    }

    /// Whether `u` lies in the current task's workspace.
    pub fn is_feasible_action(&self, u: &[f64]) -> bool {
        self.task.as_ref().is_some_and(|t| t.workspace.contains(u))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    fn twin(profile: TaskProfile) -> DigitalTwin {
        DigitalTwin::new(0, profile, 10, ChaCha8Rng::seed_from_u64(7)).unwrap()
    }

    #[test]
    fn requirement_tracks_demand() {
        let mut t = twin(TaskProfile::default());
        for demand in [1, 5, 8, 17, 20, 30, 77] {
            t.begin_tick(0, demand).unwrap();
            let req = t.compute_requirement().unwrap();
            assert_eq!(req.k_prime, demand);
            assert_eq!(req.k_lower, demand.saturating_sub(10).max(1));
        }
    }

    #[test]
    fn lower_level_floored_at_one() {
        let mut t = twin(TaskProfile::default());
        t.begin_tick(0, 8).unwrap();
        assert_eq!(t.compute_requirement().unwrap(), Requirement { k_prime: 8, k_lower: 1 });
    }

    #[test]
    fn granting_requested_budget_has_zero_regret() {
        let mut t = twin(TaskProfile::default());
        t.begin_tick(3, 20).unwrap();
        let out = t.step_control(20.0).unwrap();
        assert_eq!(out.sample.achieved, out.sample.requested_baseline);
        assert_eq!(out.sample.tick, 3);
    }

    #[test]
    fn over_allocation_gives_negative_increment() {
        let mut t = twin(TaskProfile::default());
        t.begin_tick(0, 12).unwrap();
        let out = t.step_control(20.0).unwrap();
        assert!(out.sample.regret_increment() < 0.0, "{:?}", out.sample);
    }

    #[test]
    fn under_allocation_gives_positive_increment() {
        let mut t = twin(TaskProfile::default());
        t.begin_tick(0, 20).unwrap();
        let out = t.step_control(9.7).unwrap();
        assert_eq!(out.iterations_granted, 9);
        assert!(out.sample.regret_increment() > 0.0);
    }

    #[test]
    fn at_least_one_iteration() {
        let mut t = twin(TaskProfile::default());
        t.begin_tick(0, 20).unwrap();
        assert_eq!(t.step_control(0.2).unwrap().iterations_granted, 1);
    }

    #[test]
    fn one_step_exact_solve() {
        // f = 0.5 (x - 3)^2 on [0, 10] from x0 = 0 with alpha = 1.
        let f = Quadratic::weighted_tracking(&[1.0], &[3.0]).unwrap();
        let p = SmoothConvexProblem::new(&f, FeasibleSet::Box(BoxSet::uniform(1, 0.0, 10.0).unwrap()));
        let out = pga_solve(&p, &[0.0], &PgaConfig::fixed_budget(1.0, 1, 1.0)).unwrap();
        assert_eq!(out.x, vec![3.0]);
        assert_eq!(f.value(&out.x), 0.0);
    }

    #[test]
    fn action_is_feasible_and_suboptimality_nonnegative() {
        let mut t = twin(TaskProfile::default());
        for tick in 0..20 {
            t.begin_tick(tick, 5 + tick as u32).unwrap();
            let out = t.step_control(7.0).unwrap();
            assert!(t.is_feasible_action(&out.action_u));
            assert!(out.sample.achieved >= -1e-9);
            assert!(out.sample.requested_baseline >= -1e-9);
        }
        assert_eq!(t.performance_history().len(), 20);
    }

    #[test]
    fn invalid_grant_rejected() {
        let mut t = twin(TaskProfile::default());
        t.begin_tick(0, 10).unwrap();
        assert!(t.step_control(f64::NAN).is_err());
        assert!(t.step_control(-1.0).is_err());
    }

    #[test]
    fn step_before_task_is_an_error() {
        let t = twin(TaskProfile::default());
        assert!(t.compute_requirement().is_err());
    }

    #[test]
    fn forecast_is_persistent() {
        let mut t = twin(TaskProfile::default());
        t.begin_tick(0, 20).unwrap();
        assert_eq!(t.forecast_requirements(1).unwrap(), vec![20.0, 20.0]);
        assert_eq!(t.forecast_requirements(5).unwrap(), vec![20.0; 6]);
        assert!(t.forecast_requirements(0).is_err());
    }

    fn sample(tick: usize, inc: f64) -> PerformanceSample {
        PerformanceSample {
            tick,
            achieved: 1.0 + inc,
            requested_baseline: 1.0,
        }
    }

    #[test]
    fn regret_sums_increments() {
        let mut r = RegretTracker::new(0.1).unwrap();
        for (t, inc) in [1.0, -0.5, 0.5].into_iter().enumerate() {
            r = update_regret(r, &sample(t, inc)).unwrap();
        }
        assert!((r.cumulative_regret - 1.0).abs() < 1e-15);
    }

    #[test]
    fn regret_zero_increments() {
        let mut r = RegretTracker::new(0.1).unwrap();
        for t in 0..10 {
            r = r.update(&sample(t, 0.0)).unwrap();
        }
        assert_eq!(r.cumulative_regret, 0.0);
    }

    #[test]
    fn regret_restarts_after_event() {
        let mut r = RegretTracker::new(0.1).unwrap();
        r = r.update(&sample(0, 2.0)).unwrap();
        r.reset(5);
        assert!(r.update(&sample(4, 1.0)).is_err());
        r = r.update(&sample(5, 0.25)).unwrap();
        assert_eq!(r.cumulative_regret, 0.25);
        assert_eq!(r.last_event_tick_tau, 5);
    }

    #[test]
    fn satisfaction_boundaries() {
        let mut r = RegretTracker::new(1.0).unwrap();
        assert!(check_satisfaction(&r, 0));
        r.cumulative_regret = -5.0;
        assert!(!check_satisfaction(&r, 2));
        r.cumulative_regret = 3.0;
        assert!(check_satisfaction(&r, 2));
    }
}
