//! Allocation policies of the network manager.
//!
//! The receding-horizon and event-triggered problems share one objective
//! family: quadratic tracking of the forecast by the predicted network state,
//! plus a quadratic penalty on the slack needed to meet the soft per-resource
//! floors. The slack is eliminated in closed form (it equals the positive part
//! of the floor violation), which leaves a smooth problem over a product of
//! capped simplices that [`pga_solve`] handles directly.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::alloc_core::{AllocationConstraints, AllocationVector, NetworkDynamics, NetworkState, RequirementVector};
use crate::error::{ensure_len, Error, Result};
use crate::projection::{
    pga_solve, project_capped_simplex, CappedSimplexSet, FeasibleSet, PgaConfig, SmoothConvexProblem,
    SmoothObjective,
};
use crate::twin::RegretTracker;

/// Iteration cap for the allocation solves; the stall rule normally stops far earlier.
pub const ALLOCATION_MAX_ITERATIONS: usize = 500_000;

const ALLOCATION_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PolicyKind {
    Equal,
    Static,
    #[serde(rename = "event")]
    EventTriggered,
    #[serde(rename = "online")]
    OnlineDynamic,
}

impl PolicyKind {
    pub const ALL: [PolicyKind; 4] = [
        PolicyKind::Equal,
        PolicyKind::Static,
        PolicyKind::EventTriggered,
        PolicyKind::OnlineDynamic,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            PolicyKind::Equal => "equal",
            PolicyKind::Static => "static",
            PolicyKind::EventTriggered => "event",
            PolicyKind::OnlineDynamic => "online",
        }
    }
}

impl fmt::Display for PolicyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for PolicyKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "equal" => Ok(PolicyKind::Equal),
            "static" => Ok(PolicyKind::Static),
            "event" => Ok(PolicyKind::EventTriggered),
            "online" => Ok(PolicyKind::OnlineDynamic),
            other => Err(Error::invalid(format!(
                "unknown policy '{other}' (expected equal, static, event or online)"
            ))),
        }
    }
}

/// Past reallocation times and the parameters of the event-horizon estimate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventHistory {
    event_ticks: Vec<usize>,
    pub window_m: usize,
    pub default_horizon: usize,
    pub max_reallocation_period: usize,
}

impl Default for EventHistory {
    fn default() -> Self {
        Self {
            event_ticks: Vec::new(),
            window_m: 5,
            default_horizon: 10,
            max_reallocation_period: 25,
        }
    }
}

impl EventHistory {
    pub fn new(window_m: usize, default_horizon: usize, max_reallocation_period: usize) -> Result<Self> {
        if window_m == 0 || default_horizon == 0 || max_reallocation_period == 0 {
            return Err(Error::invalid("event history parameters must be positive"));
        }
        Ok(Self {
            event_ticks: Vec::new(),
            window_m,
            default_horizon,
            max_reallocation_period,
        })
    }

    pub fn from_ticks(ticks: Vec<usize>, window_m: usize) -> Result<Self> {
        let mut h = Self {
            window_m,
            ..Self::default()
        };
        for t in ticks {
            h.record(t)?;
        }
        Ok(h)
    }

    pub fn record(&mut self, tick: usize) -> Result<()> {
        if let Some(&last) = self.event_ticks.last() {
            if tick <= last {
                return Err(Error::invalid(format!(
                    "event at tick {tick} does not follow the last event at tick {last}"
                )));
            }
        }
        self.event_ticks.push(tick);
        Ok(())
    }

    pub fn event_ticks(&self) -> &[usize] {
        &self.event_ticks
    }

    pub fn last_event(&self) -> Option<usize> {
        self.event_ticks.last().copied()
    }
}

/// `floor(1/m * sum of the last m-1 inter-event intervals)`, at least one.
/// The window shrinks to the available history; with fewer than two events
/// the default horizon is returned.
pub fn estimate_event_horizon(history: &EventHistory) -> usize {
    let ticks = history.event_ticks();
    if ticks.len() < 2 {
        return history.default_horizon;
    }
    let m = history.window_m.min(ticks.len()).max(2);
    let recent = &ticks[ticks.len() - m..];
    let span: usize = recent.windows(2).map(|w| w[1] - w[0]).sum();
    (span / m).max(1)
}

/// Max-regret trigger: fires when any tracker leaves its regret band, or when
/// the maximum reallocation period has elapsed.
pub fn should_trigger(trackers: &[RegretTracker], ticks_since_event: usize, max_reallocation_period: usize) -> bool {
    if ticks_since_event >= max_reallocation_period {
        return true;
    }
    // Trackers hold samples tau..t-1, i.e. T = ticks_since_event - 1.
    let elapsed = ticks_since_event.saturating_sub(1);
    trackers.iter().any(|t| !t.is_satisfied(elapsed))
}

#[derive(Debug, Clone, PartialEq)]
pub struct AllocationSolution {
    pub allocation: AllocationVector,
    pub slack_gamma: Vec<f64>,
    pub objective_value: f64,
}

pub fn allocate_equal(n: usize, capacity_b: f64) -> Result<AllocationVector> {
    if n == 0 {
        return Err(Error::invalid("at least one resource is required"));
    }
    if !(capacity_b > 0.0) || !capacity_b.is_finite() {
        return Err(Error::invalid("capacity must be positive"));
    }
    AllocationVector::new(vec![capacity_b / n as f64; n])
}

/// Least-squares fit of the expected requirements over `{a >= 0, sum(a) <= b}`,
/// which is exactly the Euclidean projection of `expected_r`.
pub fn allocate_static(expected_r: &RequirementVector, constraints: &AllocationConstraints) -> Result<AllocationSolution> {
    ensure_len(constraints.len(), expected_r.len())?;
    let set = CappedSimplexSet::nonnegative(expected_r.len(), constraints.capacity_b)?;
    let a = project_capped_simplex(expected_r.as_slice(), &set)?;
    let objective_value = a
        .iter()
        .zip(expected_r.as_slice())
        .map(|(x, r)| (x - r).powi(2))
        .sum();
    Ok(AllocationSolution {
        allocation: AllocationVector::from_solver(a)?,
        slack_gamma: vec![0.0; expected_r.len()],
        objective_value,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Schedule {
    /// One allocation per step, `a_0 .. a_{N-1}`.
    PerStep,
    /// A single allocation held for the whole horizon.
    Held,
}

/// Tracking-plus-slack objective over a prediction horizon.
struct HorizonObjective {
    dynamics: NetworkDynamics,
    memoryless: bool,
    xi0: DVector<f64>,
    /// `r_0 .. r_N`.
    targets: Vec<DVector<f64>>,
    floor: Vec<f64>,
    rho: f64,
    steps: usize,
    schedule: Schedule,
    smoothness: f64,
}

impl HorizonObjective {
    fn new(
        state: &NetworkState,
        forecast: &[RequirementVector],
        dynamics: &NetworkDynamics,
        constraints: &AllocationConstraints,
        steps: usize,
        schedule: Schedule,
    ) -> Result<Self> {
        let n = constraints.len();
        if steps == 0 {
            return Err(Error::invalid("horizon must be at least 1"));
        }
        constraints.validate().map_err(|d| Error::invalid(d.join("; ")))?;
        ensure_len(n, state.xi.len())?;
        ensure_len(n, dynamics.dim())?;
        if forecast.len() < steps + 1 {
            return Err(Error::invalid(format!(
                "forecast has {} steps, horizon {steps} needs {}",
                forecast.len(),
                steps + 1
            )));
        }
        for r in &forecast[..=steps] {
            ensure_len(n, r.len())?;
            if r.as_slice().iter().any(|v| !v.is_finite()) {
                return Err(Error::invalid("forecast must be finite"));
            }
        }
        let memoryless = dynamics.a.iter().all(|v| *v == 0.0) && dynamics.b == DMatrix::identity(n, n);
        let targets = forecast[..=steps]
            .iter()
            .map(|r| DVector::from_column_slice(r.as_slice()))
            .collect();
        let mut obj = Self {
            dynamics: dynamics.clone(),
            memoryless,
            xi0: DVector::from_column_slice(&state.xi),
            targets,
            floor: constraints.soft_floor(),
            rho: constraints.slack_penalty_rho,
            steps,
            schedule,
            smoothness: 0.0,
        };
        obj.smoothness = 2.0 * obj.sensitivity_norm_sq() + 2.0 * obj.rho;
        Ok(obj)
    }

    fn n(&self) -> usize {
        self.floor.len()
    }

    fn decision_blocks(&self) -> usize {
        match self.schedule {
            Schedule::PerStep => self.steps,
            Schedule::Held => 1,
        }
    }

    /// Upper bound on `||M||_2^2` for the linear map from decisions to
    /// predicted states, via `||M||_2^2 <= ||M||_1 ||M||_inf`.
    fn sensitivity_norm_sq(&self) -> f64 {
        let n = self.n();
        let rows = self.steps * n;
        let cols = self.decision_blocks() * n;
        let mut m = DMatrix::<f64>::zeros(rows, cols);
        let a = &self.dynamics.a;
        let b = &self.dynamics.b;
        match self.schedule {
            Schedule::PerStep => {
                // Block (t, s) = A^(t-s) B for s <= t.
                for s in 0..self.steps {
                    let mut block = b.clone();
                    for t in s..self.steps {
                        m.view_mut((t * n, s * n), (n, n)).copy_from(&block);
                        block = a * &block;
                    }
                }
            }
            Schedule::Held => {
                // Block t = sum_{j <= t} A^j B.
                let mut power = b.clone();
                let mut acc = DMatrix::<f64>::zeros(n, n);
                for t in 0..self.steps {
                    acc += &power;
                    m.view_mut((t * n, 0), (n, n)).copy_from(&acc);
                    power = a * &power;
                }
            }
        }
        let norm1 = (0..cols)
            .map(|j| m.column(j).iter().map(|v| v.abs()).sum::<f64>())
            .fold(0.0, f64::max);
        let norm_inf = (0..rows)
            .map(|i| m.row(i).iter().map(|v| v.abs()).sum::<f64>())
            .fold(0.0, f64::max);
        norm1 * norm_inf
    }

    fn block<'x>(&self, x: &'x [f64], t: usize) -> &'x [f64] {
        let n = self.n();
        match self.schedule {
            Schedule::PerStep => &x[t * n..(t + 1) * n],
            Schedule::Held => &x[..n],
        }
    }

    fn advance(&self, xi: &DVector<f64>, a: &[f64]) -> DVector<f64> {
        if self.memoryless {
            DVector::from_column_slice(a)
        } else {
            self.dynamics.step(xi, &DVector::from_column_slice(a))
        }
    }

    fn states(&self, x: &[f64]) -> Vec<DVector<f64>> {
        let mut xi = Vec::with_capacity(self.steps + 1);
        xi.push(self.xi0.clone());
        for t in 0..self.steps {
            let next = self.advance(&xi[t], self.block(x, t));
            xi.push(next);
        }
        xi
    }

    fn penalty(&self, a: &[f64]) -> f64 {
        a.iter()
            .zip(&self.floor)
            .map(|(ai, s)| (s - ai).max(0.0).powi(2))
            .sum::<f64>()
            * self.rho
    }

    fn slack(&self, a: &[f64]) -> Vec<f64> {
        a.iter().zip(&self.floor).map(|(ai, s)| (s - ai).max(0.0)).collect()
    }
}

impl SmoothObjective for HorizonObjective {
    fn value(&self, x: &[f64]) -> f64 {
        let tracking: f64 = self
            .states(x)
            .iter()
            .zip(&self.targets)
            .map(|(xi, r)| (xi - r).norm_squared())
            .sum();
        let slack: f64 = (0..self.decision_blocks()).map(|t| self.penalty(self.block(x, t))).sum();
        tracking + slack
    }

    fn gradient(&self, x: &[f64], out: &mut [f64]) {
        let n = self.n();
        let xi = self.states(x);
        out.fill(0.0);
        // Adjoint sweep: lambda_t = dJ/dxi_t.
        let mut lambda = 2.0 * (&xi[self.steps] - &self.targets[self.steps]);
        for t in (0..self.steps).rev() {
            let dst = match self.schedule {
                Schedule::PerStep => &mut out[t * n..(t + 1) * n],
                Schedule::Held => &mut out[..n],
            };
            if self.memoryless {
                for (o, l) in dst.iter_mut().zip(lambda.iter()) {
                    *o += l;
                }
                lambda = 2.0 * (&xi[t] - &self.targets[t]);
            } else {
                let g = self.dynamics.b.tr_mul(&lambda);
                for (o, l) in dst.iter_mut().zip(g.iter()) {
                    *o += l;
                }
                lambda = 2.0 * (&xi[t] - &self.targets[t]) + self.dynamics.a.tr_mul(&lambda);
            }
        }
        for blk in 0..self.decision_blocks() {
            let range = blk * n..(blk + 1) * n;
            for (i, o) in range.clone().zip(&mut out[range]) {
                let s = self.floor[i - blk * n];
                *o -= 2.0 * self.rho * (s - x[i]).max(0.0);
            }
        }
    }

    fn smoothness(&self) -> f64 {
        self.smoothness
    }
}

struct HorizonPlan {
    blocks: Vec<Vec<f64>>,
    objective_value: f64,
    slack_first: Vec<f64>,
}

fn solve_horizon(
    state: &NetworkState,
    forecast: &[RequirementVector],
    dynamics: &NetworkDynamics,
    constraints: &AllocationConstraints,
    steps: usize,
    schedule: Schedule,
) -> Result<HorizonPlan> {
    let objective = HorizonObjective::new(state, forecast, dynamics, constraints, steps, schedule)?;
    let n = objective.n();
    let blocks = objective.decision_blocks();
    let block_set = CappedSimplexSet::nonnegative(n, constraints.capacity_b)?;
    let set = if blocks == 1 {
        FeasibleSet::CappedSimplex(block_set)
    } else {
        FeasibleSet::CappedSimplexProduct {
            block: block_set,
            blocks,
        }
    };
    // Start from the forecast clamped to nonnegative values; a_t drives xi_{t+1}.
    let x0: Vec<f64> = (0..blocks)
        .flat_map(|t| forecast[t + 1].as_slice().iter().map(|v| v.max(0.0)))
        .collect();
    let alpha = 1.0 / objective.smoothness();
    let config = PgaConfig::certified(alpha, ALLOCATION_MAX_ITERATIONS, ALLOCATION_TOLERANCE);
    let problem = SmoothConvexProblem::new(&objective, set);
    let out = pga_solve(&problem, &x0, &config)?;
    let objective_value = out.final_objective();
    let slack_first = objective.slack(&out.x[..n]);
    Ok(HorizonPlan {
        blocks: out.x.chunks(n).map(<[f64]>::to_vec).collect(),
        objective_value,
        slack_first,
    })
}

/// Receding-horizon allocation: solves the `N`-step problem and returns the
/// first-step decision.
pub fn allocate_online(
    state: &NetworkState,
    forecast: &[RequirementVector],
    dynamics: &NetworkDynamics,
    constraints: &AllocationConstraints,
    horizon_n: usize,
) -> Result<AllocationSolution> {
    let plan = solve_horizon(state, forecast, dynamics, constraints, horizon_n, Schedule::PerStep)?;
    let first = plan.blocks.into_iter().next().expect("horizon has at least one block");
    Ok(AllocationSolution {
        allocation: AllocationVector::from_solver(first)?,
        slack_gamma: plan.slack_first,
        objective_value: plan.objective_value,
    })
}

/// Solves the `N`-step problem once and returns the whole allocation plan,
/// to be applied open loop until the end of the horizon.
pub fn allocate_horizon(
    state: &NetworkState,
    forecast: &[RequirementVector],
    dynamics: &NetworkDynamics,
    constraints: &AllocationConstraints,
    horizon_n: usize,
) -> Result<Vec<AllocationVector>> {
    let plan = solve_horizon(state, forecast, dynamics, constraints, horizon_n, Schedule::PerStep)?;
    plan.blocks.into_iter().map(AllocationVector::from_solver).collect()
}

/// Event allocation: one allocation held fixed over an `N_e`-step horizon.
pub fn allocate_event(
    state: &NetworkState,
    forecast: &[RequirementVector],
    dynamics: &NetworkDynamics,
    constraints: &AllocationConstraints,
    horizon_ne: usize,
) -> Result<AllocationSolution> {
    let plan = solve_horizon(state, forecast, dynamics, constraints, horizon_ne, Schedule::Held)?;
    let first = plan.blocks.into_iter().next().expect("one held block");
    Ok(AllocationSolution {
        allocation: AllocationVector::from_solver(first)?,
        slack_gamma: plan.slack_first,
        objective_value: plan.objective_value,
    })
}
