//! Double-integrator dynamics.
//!
//! Every agent carries a position and a velocity of the same dimension `d`.
//! Positions are the constraint-relevant state, so the control enters the
//! next constraint-relevant state through `B_s = ½Δt²·I`.

use serde::{Deserialize, Serialize};

use crate::error::check_dim;
use crate::{Error, Matrix, Result, Vector};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentState {
    pub position: Vector,
    pub velocity: Vector,
}

impl AgentState {
    pub fn new(position: Vector, velocity: Vector) -> Result<Self> {
        check_dim(position.len(), velocity.len())?;
        if position.iter().chain(velocity.iter()).any(|x| !x.is_finite()) {
            return Err(Error::InvalidParameter("agent state must be finite".into()));
        }
        Ok(Self { position, velocity })
    }

    /// An agent at rest at `position`.
    pub fn at_rest(position: Vector) -> Self {
        let velocity = Vector::zeros(position.len());
        Self { position, velocity }
    }

    pub fn dim(&self) -> usize {
        self.position.len()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JointState {
    pub agents: Vec<AgentState>,
    pub time_index: usize,
}

impl JointState {
    pub fn new(agents: Vec<AgentState>) -> Result<Self> {
        let first = agents
            .first()
            .ok_or_else(|| Error::InvalidParameter("joint state needs at least one agent".into()))?;
        let d = first.dim();
        for a in &agents {
            check_dim(d, a.dim())?;
        }
        Ok(Self { agents, time_index: 0 })
    }

    pub fn len(&self) -> usize {
        self.agents.len()
    }

    pub fn is_empty(&self) -> bool {
        self.agents.is_empty()
    }

    pub fn positions(&self) -> Vec<Vector> {
        self.agents.iter().map(|a| a.position.clone()).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DynamicsParams {
    pub dt: f64,
    pub dim: usize,
}

impl Default for DynamicsParams {
    fn default() -> Self {
        Self { dt: 0.1, dim: 2 }
    }
}

impl DynamicsParams {
    pub fn new(dt: f64, dim: usize) -> Result<Self> {
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::InvalidParameter(format!("dt must be positive, got {dt}")));
        }
        if dim == 0 {
            return Err(Error::InvalidParameter("dimension must be positive".into()));
        }
        Ok(Self { dt, dim })
    }

    /// Scalar gain of the control in the next position, ½Δt².
    pub fn control_gain(&self) -> f64 {
        0.5 * self.dt * self.dt
    }
}

/// Advances one agent by one step:
/// `p' = p + Δt·v + ½Δt²·u`, `v' = v + Δt·u`.
pub fn step(state: &AgentState, u: &Vector, params: &DynamicsParams) -> Result<AgentState> {
    check_dim(state.dim(), u.len())?;
    let dt = params.dt;
    let position = &state.position + &state.velocity * dt + u * params.control_gain();
    let velocity = &state.velocity + u * dt;
    Ok(AgentState { position, velocity })
}

/// The constraint-relevant state: the position block.
pub fn constraint_relevant_state(state: &AgentState) -> Vector {
    state.position.clone()
}

/// `B_s`, the map from control to next constraint-relevant state.
pub fn control_matrix(params: &DynamicsParams) -> Matrix {
    Matrix::identity(params.dim, params.dim) * params.control_gain()
}

/// Next position under control `u` without building an [`AgentState`].
pub fn next_position(position: &Vector, velocity: &Vector, u: &Vector, params: &DynamicsParams) -> Vector {
    position + velocity * params.dt + u * params.control_gain()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::vector;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn dp(dt: f64) -> DynamicsParams {
        DynamicsParams::new(dt, 2).unwrap()
    }

    #[test]
    fn zero_input_drift() {
        let s = AgentState::new(vector(&[0.0, 0.0]), vector(&[1.0, 0.0])).unwrap();
        let n = step(&s, &vector(&[0.0, 0.0]), &dp(0.1)).unwrap();
        assert_abs_diff_eq!(n.position, vector(&[0.1, 0.0]), epsilon = 1e-15);
        assert_abs_diff_eq!(n.velocity, vector(&[1.0, 0.0]), epsilon = 1e-15);
    }

    #[test]
    fn unit_push_from_rest() {
        let s = AgentState::at_rest(vector(&[0.0, 0.0]));
        let n = step(&s, &vector(&[1.0, 0.0]), &dp(0.1)).unwrap();
        assert_abs_diff_eq!(n.position, vector(&[0.005, 0.0]), epsilon = 1e-15);
        assert_abs_diff_eq!(n.velocity, vector(&[0.1, 0.0]), epsilon = 1e-15);
    }

    #[test]
    fn mixed_step() {
        let s = AgentState::new(vector(&[1.0, 1.0]), vector(&[-1.0, 0.0])).unwrap();
        let n = step(&s, &vector(&[0.0, 2.0]), &dp(0.2)).unwrap();
        assert_abs_diff_eq!(n.position, vector(&[0.8, 1.04]), epsilon = 1e-12);
        assert_abs_diff_eq!(n.velocity, vector(&[-1.0, 0.4]), epsilon = 1e-12);
    }

    #[test]
    fn dimension_mismatch_is_reported() {
        let s = AgentState::at_rest(vector(&[0.0, 0.0]));
        let err = step(&s, &vector(&[1.0, 0.0, 0.0]), &dp(0.1)).unwrap_err();
        assert_eq!(err, Error::DimensionMismatch { expected: 2, found: 3 });
        assert!(AgentState::new(vector(&[0.0]), vector(&[0.0, 1.0])).is_err());
        assert!(DynamicsParams::new(0.0, 2).is_err());
    }

    #[test]
    fn projection_keeps_position() {
        for (p, v) in [([3.0, 4.0], [9.0, 9.0]), ([0.0, 0.0], [1.0, 1.0]), ([-2.0, 5.0], [0.0, 0.0])] {
            let s = AgentState::new(vector(&p), vector(&v)).unwrap();
            assert_eq!(constraint_relevant_state(&s), vector(&p));
        }
    }

    #[test]
    fn control_matrix_values() {
        for (dt, gain) in [(0.1, 0.005), (1.0, 0.5), (0.2, 0.02)] {
            let b = control_matrix(&dp(dt));
            assert_abs_diff_eq!(b, Matrix::identity(2, 2) * gain, epsilon = 1e-15);
        }
    }

    proptest! {
        #[test]
        fn control_affinity(
            p in prop::array::uniform3(-10.0..10.0f64),
            v in prop::array::uniform3(-5.0..5.0f64),
            u1 in prop::array::uniform3(-20.0..20.0f64),
            u2 in prop::array::uniform3(-20.0..20.0f64),
            dt in 0.01..1.0f64,
        ) {
            let params = DynamicsParams::new(dt, 3).unwrap();
            let s = AgentState::new(vector(&p), vector(&v)).unwrap();
            let (u1, u2) = (vector(&u1), vector(&u2));
            let a = step(&s, &u1, &params).unwrap();
            let b = step(&s, &u2, &params).unwrap();
            let predicted = control_matrix(&params) * (&u1 - &u2);
            prop_assert!(((a.position - b.position) - predicted).amax() < 1e-12);
        }
    }
}
