use serde::{Deserialize, Serialize};

use crate::constraints::{CbfParams, ConstraintForm, FormationConstraint, VelocityBound};
use crate::dynamics::{DynamicsParams, JointState};
use crate::inference::InferenceConfig;
use crate::{Error, Matrix, Result, Vector};

/// Which inverse method learners run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MethodKind {
    Kkt,
    InputMatching,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlannerConfig {
    pub horizon: usize,
    pub goal_weight: f64,
    pub velocity_weight: f64,
    pub effort_weight: f64,
    /// Goals farther than this are pulled in along the line to the agent.
    pub lookahead: f64,
    pub formation: Vec<FormationConstraint>,
    pub cbf: CbfParams,
    pub form: ConstraintForm,
    pub dynamics: DynamicsParams,
    /// True obstacle radius.
    pub r: f64,
    pub vel_bound: Option<VelocityBound>,
    pub method: MethodKind,
    pub match_tol: f64,
}

impl PlannerConfig {
    pub fn new(formation: Vec<FormationConstraint>, cbf: CbfParams, dynamics: DynamicsParams, r: f64) -> Self {
        Self {
            horizon: 20,
            goal_weight: 1.0,
            velocity_weight: 1.0,
            effort_weight: 0.05,
            lookahead: 1.5,
            formation,
            cbf,
            form: ConstraintForm::Cbf,
            dynamics,
            r,
            vel_bound: None,
            method: MethodKind::Kkt,
            match_tol: 0.25 * r,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.horizon == 0 {
            return Err(Error::InvalidParameter("horizon must be at least 1".into()));
        }
        for (name, w) in [
            ("goal_weight", self.goal_weight),
            ("velocity_weight", self.velocity_weight),
            ("effort_weight", self.effort_weight),
        ] {
            if !(w >= 0.0 && w.is_finite()) {
                return Err(Error::InvalidParameter(format!("{name} must be nonnegative, got {w}")));
            }
        }
        if !(self.effort_weight > 0.0 || self.velocity_weight > 0.0 || self.goal_weight > 0.0) {
            return Err(Error::InvalidParameter("at least one planner weight must be positive".into()));
        }
        if !(self.r > 0.0 && self.lookahead > 0.0 && self.match_tol > 0.0) {
            return Err(Error::InvalidParameter("r, lookahead and match_tol must be positive".into()));
        }
        Ok(())
    }

    /// Radius the demonstrator enforces around the obstacles it knows.
    pub fn demo_radius(&self) -> f64 {
        match self.form {
            ConstraintForm::Cbf => self.formation.iter().map(|fc| demo_radius(self.r, fc)).fold(self.r, f64::max),
            ConstraintForm::Circle => self.r,
        }
    }

    /// What a learner assumes about the demonstrator's filter.
    pub fn inference_config(&self) -> Result<InferenceConfig> {
        let mut cfg = InferenceConfig::circle(self.cbf, self.dynamics.dim, self.demo_radius())?;
        cfg.form = self.form;
        cfg.match_tol = self.match_tol;
        Ok(cfg)
    }
}

/// `r + d + ε`: a teammate within the formation band of a demonstrator that
/// clears this radius stays at least `r` from the obstacle.
pub fn demo_radius(r: f64, fc: &FormationConstraint) -> f64 {
    r + fc.dist + fc.slack
}

/// First-step feedback gain `[k_p, k_v]` of the finite-horizon per-axis LQR.
fn lqr_gain(cfg: &PlannerConfig) -> (f64, f64) {
    let dt = cfg.dynamics.dt;
    let a = Matrix::from_row_slice(2, 2, &[1.0, dt, 0.0, 1.0]);
    let b = Matrix::from_column_slice(2, 1, &[0.5 * dt * dt, dt]);
    let q = Matrix::from_diagonal(&Vector::from_column_slice(&[cfg.goal_weight, cfg.velocity_weight]));
    let mut p = q.clone();
    let mut k = Matrix::zeros(1, 2);
    for _ in 0..cfg.horizon {
        let s = cfg.effort_weight + (b.transpose() * &p * &b)[(0, 0)];
        k = b.transpose() * &p * &a / s;
        p = &q + a.transpose() * &p * (&a - &b * &k);
    }
    (k[(0, 0)], k[(0, 1)])
}

/// Unconstrained goal-tracking control for every agent.
pub fn nominal_plan(joint: &JointState, goals: &[Vector], cfg: &PlannerConfig) -> Vec<Vector> {
    let (kp, kv) = lqr_gain(cfg);
    joint
        .agents
        .iter()
        .zip(goals)
        .map(|(agent, goal)| {
            let mut err = &agent.position - goal;
            let n = err.norm();
            if n > cfg.lookahead {
                err *= cfg.lookahead / n;
            }
            -(err * kp + &agent.velocity * kv)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::AgentState;
    use crate::vector;

    fn config() -> PlannerConfig {
        PlannerConfig::new(vec![], CbfParams::default(), DynamicsParams::default(), 1.0)
    }

    fn single(p: &[f64], v: &[f64]) -> JointState {
        JointState::new(vec![AgentState::new(vector(p), vector(v)).unwrap()]).unwrap()
    }

    #[test]
    fn at_goal_is_still() {
        let u = nominal_plan(&single(&[1.0, 2.0], &[0.0, 0.0]), &[vector(&[1.0, 2.0])], &config());
        assert_eq!(u[0], vector(&[0.0, 0.0]));
    }

    #[test]
    fn displacement_gives_axis_aligned_push() {
        let u = nominal_plan(&single(&[0.0, 0.0], &[0.0, 0.0]), &[vector(&[1.0, 0.0])], &config());
        assert!(u[0][0] > 0.0);
        assert_eq!(u[0][1], 0.0);
    }

    #[test]
    fn heavier_goal_weight_approaches_one_step_minimizer() {
        let joint = single(&[0.0, 0.0], &[0.3, -0.2]);
        let goal = vector(&[0.8, 0.5]);
        let dt = 0.1;
        let one_step = (&goal - &joint.agents[0].position - &joint.agents[0].velocity * dt) / (0.5 * dt * dt);
        let mut cfg = config();
        let base = nominal_plan(&joint, &[goal.clone()], &cfg)[0].clone();
        cfg.goal_weight *= 2.0;
        let heavy = nominal_plan(&joint, &[goal], &cfg)[0].clone();
        assert!((heavy - &one_step).norm() < (base - &one_step).norm());
    }

    #[test]
    fn demo_radius_examples() {
        let fc = |d, e| FormationConstraint::new(0, 1, d, e).unwrap();
        assert!((demo_radius(1.0, &fc(0.5, 0.1)) - 1.6).abs() < 1e-15);
        assert!((demo_radius(1.0, &fc(1e-12, 1e-13)) - 1.0).abs() < 1e-9);
        assert!((demo_radius(0.4, &fc(1.0, 0.2)) - 1.6).abs() < 1e-15);
    }

    #[test]
    fn cruise_speed_is_moderate() {
        let cfg = config();
        let mut joint = single(&[0.0, 0.0], &[0.0, 0.0]);
        let goal = vector(&[8.0, 0.0]);
        let mut top: f64 = 0.0;
        for _ in 0..300 {
            let u = nominal_plan(&joint, &[goal.clone()], &cfg);
            let next = crate::dynamics::step(&joint.agents[0], &u[0], &cfg.dynamics).unwrap();
            top = top.max(next.velocity.norm());
            joint.agents[0] = next;
        }
        assert!((joint.agents[0].position.clone() - goal).norm() < 0.05);
        assert!(top < 2.0, "top speed {top}");
    }
}
