//! Controller-aware network resource allocation for a digital-twin driven
//! plant floor.
//!
//! Digital twins size per-resource computation requirements from their
//! control tasks; a central network manager splits a shared budget among
//! them with one of four policies (equal split, static least squares,
//! regret-triggered reallocation, receding-horizon reallocation). The
//! [`sim`] module runs the closed loop and collects the residual and regret
//! series that the [`cli`] turns into CSV, a manifest and an SVG chart.

pub mod alloc_core;
pub mod cli;
pub mod error;
pub mod manager;
pub mod projection;
pub mod rng;
pub mod sim;
pub mod twin;

pub use alloc_core::{
    compute_residual, validate_scenario, AllocationConstraints, AllocationVector, NetworkDynamics, NetworkState,
    RequirementVector, Residual, ValidatedScenario,
};
pub use error::{Error, Result};
pub use manager::{
    allocate_equal, allocate_event, allocate_horizon, allocate_online, allocate_static, estimate_event_horizon,
    should_trigger, AllocationSolution, EventHistory, PolicyKind,
};
pub use projection::{
    iterations_for_delta, pga_solve, project_box, project_capped_simplex, BoxSet, CappedSimplexSet, FeasibleSet,
    PgaConfig, PgaOutcome, Quadratic, SmoothConvexProblem, SmoothObjective, Stopping,
};
pub use sim::{compare_policies, evolve_requirements, run_scenario, ScenarioConfig, SimResult};
pub use twin::{
    check_satisfaction, update_regret, ControlOutput, DigitalTwin, PerformanceSample, RegretTracker, Requirement,
    TaskProfile,
};
