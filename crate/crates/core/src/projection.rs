//! Euclidean projections and the constant-step projected gradient iteration.
//!
//! Every optimization in the crate goes through [`pga_solve`]: the twins
//! solve their control tasks with it, and the network manager solves the
//! allocation problems with it.

use nalgebra::{DMatrix, DVector};

use crate::error::{ensure_len, Error, Result};

/// Successive-iterate change below which the iteration is considered stalled.
pub const STALL_TOLERANCE: f64 = 1e-10;

/// Axis-aligned box `lower <= x <= upper`.
#[derive(Debug, Clone, PartialEq)]
pub struct BoxSet {
    lower: Vec<f64>,
    upper: Vec<f64>,
}

impl BoxSet {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        ensure_len(lower.len(), upper.len())?;
        for (i, (l, u)) in lower.iter().zip(&upper).enumerate() {
            if !(l <= u) {
                return Err(Error::invalid(format!("box coordinate {i}: lower {l} > upper {u}")));
            }
        }
        Ok(Self { lower, upper })
    }

    /// The cube `[lo, hi]^dim`.
    pub fn uniform(dim: usize, lo: f64, hi: f64) -> Result<Self> {
        Self::new(vec![lo; dim], vec![hi; dim])
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn diameter(&self) -> f64 {
        self.lower
            .iter()
            .zip(&self.upper)
            .map(|(l, u)| (u - l).powi(2))
            .sum::<f64>()
            .sqrt()
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.len() == self.dim()
            && x
                .iter()
                .zip(self.lower.iter().zip(&self.upper))
                .all(|(v, (l, u))| l <= v && v <= u)
    }

    fn project_into(&self, x: &mut [f64]) {
        for ((v, l), u) in x.iter_mut().zip(&self.lower).zip(&self.upper) {
            *v = v.clamp(*l, *u);
        }
    }
}

pub fn project_box(x: &[f64], set: &BoxSet) -> Result<Vec<f64>> {
    ensure_len(set.dim(), x.len())?;
    let mut y = x.to_vec();
    set.project_into(&mut y);
    Ok(y)
}

/// `{ y : y >= lower, sum(y) <= capacity }`.
#[derive(Debug, Clone, PartialEq)]
pub struct CappedSimplexSet {
    lower: Vec<f64>,
    capacity: f64,
}

impl CappedSimplexSet {
    pub fn new(lower: Vec<f64>, capacity: f64) -> Result<Self> {
        if lower.iter().any(|l| !(l.is_finite() && *l >= 0.0)) {
            return Err(Error::invalid("capped simplex lower bounds must be finite and nonnegative"));
        }
        if !(capacity > 0.0) || !capacity.is_finite() {
            return Err(Error::invalid("capacity must be positive"));
        }
        let lower_sum: f64 = lower.iter().sum();
        if lower_sum > capacity {
            return Err(Error::Infeasible {
                lower_sum,
                capacity,
            });
        }
        Ok(Self { lower, capacity })
    }

    /// Nonnegative allocations within `capacity`.
    pub fn nonnegative(dim: usize, capacity: f64) -> Result<Self> {
        Self::new(vec![0.0; dim], capacity)
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn capacity(&self) -> f64 {
        self.capacity
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    /// Distance between two vertices of the shifted simplex.
    pub fn diameter(&self) -> f64 {
        let budget = self.capacity - self.lower.iter().sum::<f64>();
        if self.dim() <= 1 {
            budget
        } else {
            budget * std::f64::consts::SQRT_2
        }
    }

    pub fn contains(&self, x: &[f64], tol: f64) -> bool {
        x.len() == self.dim()
            && x.iter().zip(&self.lower).all(|(v, l)| v >= l)
            && x.iter().sum::<f64>() <= self.capacity + tol
    }

    fn project_into(&self, x: &mut [f64]) {
        let clamped_sum: f64 = x.iter().zip(&self.lower).map(|(v, l)| v.max(*l)).sum();
        if clamped_sum <= self.capacity {
            for (v, l) in x.iter_mut().zip(&self.lower) {
                *v = v.max(*l);
            }
            return;
        }
        // Sum constraint is active: find theta with sum(max(z - theta, 0)) = budget
        // over the shifted coordinates z = x - lower.
        let budget = self.capacity - self.lower.iter().sum::<f64>();
        let mut shifted: Vec<f64> = x.iter().zip(&self.lower).map(|(v, l)| v - l).collect();
        shifted.sort_unstable_by(|a, b| b.total_cmp(a));
        let mut cumulative = 0.0;
        let mut theta = 0.0;
        for (j, &u) in shifted.iter().enumerate() {
            cumulative += u;
            let t = (cumulative - budget) / (j + 1) as f64;
            let next_below = shifted.get(j + 1).map_or(true, |&next| next <= t);
            if next_below {
                theta = t;
                break;
            }
        }
        for (v, l) in x.iter_mut().zip(&self.lower) {
            *v = l + (*v - l - theta).max(0.0);
        }
    }
}

pub fn project_capped_simplex(x: &[f64], set: &CappedSimplexSet) -> Result<Vec<f64>> {
    ensure_len(set.dim(), x.len())?;
    let mut y = x.to_vec();
    set.project_into(&mut y);
    Ok(y)
}

/// Feasible sets the iteration knows how to project onto.
#[derive(Debug, Clone, PartialEq)]
pub enum FeasibleSet {
    Box(BoxSet),
    CappedSimplex(CappedSimplexSet),
    /// `blocks` stacked copies of the same capped simplex, one per horizon step.
    CappedSimplexProduct { block: CappedSimplexSet, blocks: usize },
}

impl FeasibleSet {
    pub fn dim(&self) -> usize {
        match self {
            FeasibleSet::Box(b) => b.dim(),
            FeasibleSet::CappedSimplex(s) => s.dim(),
            FeasibleSet::CappedSimplexProduct { block, blocks } => block.dim() * blocks,
        }
    }

    pub fn diameter(&self) -> f64 {
        match self {
            FeasibleSet::Box(b) => b.diameter(),
            FeasibleSet::CappedSimplex(s) => s.diameter(),
            FeasibleSet::CappedSimplexProduct { block, blocks } => {
                block.diameter() * (*blocks as f64).sqrt()
            }
        }
    }

    pub fn project_into(&self, x: &mut [f64]) {
        match self {
            FeasibleSet::Box(b) => b.project_into(x),
            FeasibleSet::CappedSimplex(s) => s.project_into(x),
            FeasibleSet::CappedSimplexProduct { block, .. } => {
                for chunk in x.chunks_mut(block.dim()) {
                    block.project_into(chunk);
                }
            }
        }
    }

    pub fn project(&self, x: &[f64]) -> Result<Vec<f64>> {
        ensure_len(self.dim(), x.len())?;
        let mut y = x.to_vec();
        self.project_into(&mut y);
        Ok(y)
    }
}

/// A differentiable objective with a Lipschitz-continuous gradient.
pub trait SmoothObjective {
    fn value(&self, x: &[f64]) -> f64;
    fn gradient(&self, x: &[f64], out: &mut [f64]);
    /// Lipschitz constant of the gradient.
    fn smoothness(&self) -> f64;
}

/// `f(x) = 0.5 x'Hx + q'x + c`.
#[derive(Debug, Clone, PartialEq)]
pub struct Quadratic {
    hessian: DMatrix<f64>,
    linear: DVector<f64>,
    constant: f64,
    smoothness: f64,
}

impl Quadratic {
    /// `hessian` must be symmetric positive semidefinite.
    pub fn new(hessian: DMatrix<f64>, linear: DVector<f64>, constant: f64) -> Result<Self> {
        if !hessian.is_square() {
            return Err(Error::invalid("hessian must be square"));
        }
        ensure_len(hessian.nrows(), linear.len())?;
        let asym = (&hessian - hessian.transpose()).amax();
        if asym > 1e-9 * hessian.amax().max(1.0) {
            return Err(Error::invalid("hessian must be symmetric"));
        }
        let eig = hessian.clone().symmetric_eigenvalues();
        let min = eig.min();
        let max = eig.max();
        if min < -1e-9 * max.abs().max(1.0) {
            return Err(Error::invalid(format!("hessian is not positive semidefinite (eigenvalue {min})")));
        }
        Ok(Self {
            hessian,
            linear,
            constant,
            smoothness: max.max(f64::MIN_POSITIVE),
        })
    }

    /// `0.5 * sum_j w_j (x_j - c_j)^2`.
    pub fn weighted_tracking(weights: &[f64], target: &[f64]) -> Result<Self> {
        ensure_len(weights.len(), target.len())?;
        let h = DMatrix::from_diagonal(&DVector::from_column_slice(weights));
        let linear = DVector::from_iterator(
            target.len(),
            weights.iter().zip(target).map(|(w, c)| -w * c),
        );
        let constant = 0.5 * weights.iter().zip(target).map(|(w, c)| w * c * c).sum::<f64>();
        Self::new(h, linear, constant)
    }

    pub fn hessian(&self) -> &DMatrix<f64> {
        &self.hessian
    }

    pub fn linear(&self) -> &DVector<f64> {
        &self.linear
    }

    pub fn dim(&self) -> usize {
        self.linear.len()
    }
}

impl SmoothObjective for Quadratic {
    fn value(&self, x: &[f64]) -> f64 {
        let x = DVector::from_column_slice(x);
        0.5 * x.dot(&(&self.hessian * &x)) + self.linear.dot(&x) + self.constant
    }

    fn gradient(&self, x: &[f64], out: &mut [f64]) {
        let x = DVector::from_column_slice(x);
        let g = &self.hessian * &x + &self.linear;
        out.copy_from_slice(g.as_slice());
    }

    fn smoothness(&self) -> f64 {
        self.smoothness
    }
}

/// An L-smooth convex objective restricted to a feasible set.
pub struct SmoothConvexProblem<'a> {
    pub objective: &'a dyn SmoothObjective,
    pub set: FeasibleSet,
}

impl<'a> SmoothConvexProblem<'a> {
    pub fn new(objective: &'a dyn SmoothObjective, set: FeasibleSet) -> Self {
        Self { objective, set }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stopping {
    /// First of: the certified iteration count for `tolerance_delta`, a stalled
    /// iterate, or `max_iterations`.
    Certified,
    /// Exactly `max_iterations` steps.
    FixedBudget,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PgaConfig {
    pub step_alpha: f64,
    pub max_iterations: usize,
    pub tolerance_delta: f64,
    pub stopping: Stopping,
}

impl PgaConfig {
    pub fn certified(step_alpha: f64, max_iterations: usize, tolerance_delta: f64) -> Self {
        Self {
            step_alpha,
            max_iterations,
            tolerance_delta,
            stopping: Stopping::Certified,
        }
    }

    pub fn fixed_budget(step_alpha: f64, iterations: usize, tolerance_delta: f64) -> Self {
        Self {
            step_alpha,
            max_iterations: iterations,
            tolerance_delta,
            stopping: Stopping::FixedBudget,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PgaOutcome {
    pub x: Vec<f64>,
    pub iterations: usize,
    /// Objective at the projected starting point followed by one entry per step.
    pub objective_trace: Vec<f64>,
}

impl PgaOutcome {
    pub fn final_objective(&self) -> f64 {
        *self.objective_trace.last().expect("trace holds the starting point")
    }
}

/// `ceil(D^2 / (2 alpha delta))`, at least one.
pub fn iterations_for_delta(distance_bound: f64, alpha: f64, delta: f64) -> Result<usize> {
    if !(alpha > 0.0) || !alpha.is_finite() {
        return Err(Error::invalid(format!("step size must be positive, got {alpha}")));
    }
    if !(delta > 0.0) || !delta.is_finite() {
        return Err(Error::invalid(format!("tolerance must be positive, got {delta}")));
    }
    if !(distance_bound >= 0.0) {
        return Err(Error::invalid(format!("distance bound must be nonnegative, got {distance_bound}")));
    }
    let k = (distance_bound * distance_bound / (2.0 * alpha * delta)).ceil();
    // `as` saturates for bounds beyond usize.
    Ok((k as usize).max(1))
}

/// Constant-step projected gradient: `x_{k+1} = P(x_k - alpha grad f(x_k))`.
pub fn pga_solve(problem: &SmoothConvexProblem<'_>, x0: &[f64], config: &PgaConfig) -> Result<PgaOutcome> {
    let n = problem.set.dim();
    ensure_len(n, x0.len())?;
    if x0.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite { iteration: 0 });
    }
    let alpha = config.step_alpha;
    let smooth = problem.objective.smoothness();
    if !(alpha > 0.0) || alpha > (1.0 / smooth) * (1.0 + 1e-12) {
        return Err(Error::invalid(format!(
            "step size {alpha} must lie in (0, 1/L] with L = {smooth}"
        )));
    }
    if config.max_iterations == 0 {
        return Err(Error::invalid("max_iterations must be positive"));
    }

    let limit = match config.stopping {
        Stopping::FixedBudget => config.max_iterations,
        Stopping::Certified => {
            let certified = iterations_for_delta(problem.set.diameter(), alpha, config.tolerance_delta)?;
            certified.min(config.max_iterations)
        }
    };

    let mut x = x0.to_vec();
    problem.set.project_into(&mut x);
    let mut trace = Vec::with_capacity(limit.min(4096) + 1);
    trace.push(problem.objective.value(&x));

    let mut grad = vec![0.0; n];
    let mut next = vec![0.0; n];
    let mut iterations = 0;
    while iterations < limit {
        problem.objective.gradient(&x, &mut grad);
        if grad.iter().any(|g| !g.is_finite()) {
            return Err(Error::NonFinite { iteration: iterations });
        }
        for ((nx, xi), gi) in next.iter_mut().zip(&x).zip(&grad) {
            *nx = xi - alpha * gi;
        }
        problem.set.project_into(&mut next);
        let change = next
            .iter()
            .zip(&x)
            .map(|(a, b)| (a - b).powi(2))
            .sum::<f64>()
            .sqrt();
        std::mem::swap(&mut x, &mut next);
        iterations += 1;
        trace.push(problem.objective.value(&x));
        if config.stopping == Stopping::Certified && change < STALL_TOLERANCE {
            break;
        }
    }

    Ok(PgaOutcome {
        x,
        iterations,
        objective_trace: trace,
    })
}
