//! Discrete-time control-barrier-function safety filters for double-integrator
//! teams, and the inverse problem: recovering hidden obstacle parameters from the
//! filtered actions of another agent.
//!
//! The crate is organised bottom-up:
//!
//! * [`dynamics`]: double-integrator stepping and the constraint-relevant projection.
//! * [`constraints`]: quadratic barriers, the discrete CBF residual and formation bounds.
//! * [`safety_filter`]: the minimally invasive filter (a tiny non-convex QCQP).
//! * [`inference`]: closed-form inversion, the regularized Newton solver, the
//!   rejection pipeline and the Input-Matching baseline.
//! * [`coordinator`]: the round-robin demonstrator/learner protocol.
//! * [`robust`]: bounded-velocity moving obstacles and multi-team helpers.
//! * [`harness`]: scenarios, Monte Carlo metrics, sweeps, traces and configuration.

pub mod constraints;
pub mod coordinator;
pub mod dynamics;
mod error;
pub mod harness;
pub mod inference;
pub mod robust;
pub mod safety_filter;

pub use error::{Error, Result};

/// Column vector used for positions, velocities and controls.
pub type Vector = nalgebra::DVector<f64>;
/// Dense matrix used for shape and control matrices.
pub type Matrix = nalgebra::DMatrix<f64>;

pub use constraints::{CbfParams, ConstraintForm, FormationConstraint, QuadraticBarrier, VelocityBound};
pub use coordinator::{BeliefSet, PlannerConfig, Provenance, RoundRobinWorld};
pub use dynamics::{AgentState, DynamicsParams, JointState};
pub use inference::{InferenceConfig, InferenceResult, Observation, Verdict};
pub use robust::MovingObstacle;
pub use safety_filter::{ActiveSet, FilterProblem, FilterSolution};

/// Builds a [`Vector`] from a slice.
pub fn vector(values: &[f64]) -> Vector {
    Vector::from_column_slice(values)
}
