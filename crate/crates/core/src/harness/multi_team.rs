//! Two teams crossing diagonally, each treating the other's center as a
//! bounded-velocity obstacle.
//!
//! Every agent keeps `r_safe = threshold + (d + ε)/2` from the other team's
//! center. A two-agent team's center is the midpoint of its agents, at most
//! `(d + ε)/2` from each of them, so the centers stay `threshold` apart. The
//! filter uses the inflated `r_safe + Δt·v_max` and a speed bound `v_max`, which
//! caps how far the other center can move during one step.

use serde::{Deserialize, Serialize};

use crate::constraints::{CbfParams, FormationConstraint, VelocityBound};
use crate::coordinator::{BeliefSet, MultiTeamWorld, PlannerConfig, RoundRobinWorld};
use crate::dynamics::{AgentState, DynamicsParams, JointState};
use crate::robust::TeamObstacleConfig;
use crate::{vector, Error, Result, Vector};

use super::config::{MultiTeamParams, ScenarioParams};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MultiTeamReport {
    /// Center distance before the first step and after every step.
    pub distances: Vec<f64>,
    pub min_distance: f64,
    pub threshold: f64,
    pub r_safe: f64,
    pub r_robust: f64,
    pub halted: bool,
    pub steps: usize,
    pub arrived: bool,
}

impl MultiTeamReport {
    pub fn passed(&self) -> bool {
        !self.halted && self.min_distance >= self.threshold
    }
}

fn team(
    start: Vector,
    goal: Vector,
    p: &MultiTeamParams,
    base: &ScenarioParams,
) -> Result<RoundRobinWorld> {
    let n = p.agents_per_team;
    if n != 2 {
        return Err(Error::Config("the crossing scenario uses two-agent teams".into()));
    }
    let heading = (&goal - &start).normalize();
    let normal = vector(&[-heading[1], heading[0]]) * (p.dist / 2.0);
    let starts = [&start + &normal, &start - &normal];
    let goals = vec![&goal + &normal, &goal - &normal];
    let joint = JointState::new(starts.iter().cloned().map(AgentState::at_rest).collect())?;
    let fc = FormationConstraint::new(0, 1, p.dist, p.slack)?;
    let mut cfg = PlannerConfig::new(vec![fc], CbfParams::new(base.gamma)?, DynamicsParams::new(base.dt, 2)?, base.r);
    cfg.horizon = base.horizon;
    cfg.goal_weight = base.goal_weight;
    cfg.velocity_weight = base.velocity_weight;
    cfg.effort_weight = base.effort_weight;
    cfg.lookahead = base.lookahead;
    cfg.vel_bound = Some(VelocityBound::new(p.v_max)?);
    RoundRobinWorld::new(joint, vec![BeliefSet::new(base.match_tol()); 2], goals, cfg)
}

pub fn run_crossing(p: &MultiTeamParams, base: &ScenarioParams) -> Result<MultiTeamReport> {
    let [w, h] = base.arena;
    let a = team(vector(&[0.1 * w, 0.1 * h]), vector(&[0.9 * w, 0.9 * h]), p, base)?;
    let b = team(vector(&[0.1 * w, 0.9 * h]), vector(&[0.9 * w, 0.1 * h]), p, base)?;
    let r_safe = p.threshold + (p.dist + p.slack) / 2.0;
    let mut world = MultiTeamWorld::new(vec![a, b], TeamObstacleConfig { v_max: p.v_max, r_safe })?;
    let r_robust = world.robust_radius(base.dt);
    let distances = world.run(p.t_e)?;
    let arrived = world.teams.iter().all(|t| {
        t.joint.agents.iter().zip(&t.goals).all(|(ag, g)| (&ag.position - g).norm() < 0.1)
    });
    Ok(MultiTeamReport {
        min_distance: distances.iter().copied().fold(f64::INFINITY, f64::min),
        distances,
        threshold: p.threshold,
        r_safe,
        r_robust,
        halted: world.teams.iter().any(|t| t.halted().is_some()),
        steps: world.teams[0].log.len(),
        arrived,
    })
}
