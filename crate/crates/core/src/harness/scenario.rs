//! Randomized team scenarios.
//!
//! The team starts near the left edge in a formation facing its goal, which is
//! the start reflected through the arena center. Obstacles are drawn uniformly
//! in the arena and kept when they sit near the straight start-to-goal path, far
//! enough from every start and goal, and apart from each other. Each obstacle is
//! known privately to one randomly chosen agent.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::constraints::{CbfParams, ConstraintForm, FormationConstraint, QuadraticBarrier};
use crate::coordinator::{demo_radius, BeliefSet, MethodKind, PlannerConfig, Provenance, RoundRobinWorld};
use crate::dynamics::{AgentState, DynamicsParams, JointState};
use crate::{vector, Error, Result, Vector};

use super::config::ScenarioParams;

const MAX_DRAWS: usize = 10_000;
const RESTART_AFTER: usize = 500;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSpec {
    pub seed: u64,
    pub params: ScenarioParams,
    pub starts: Vec<Vector>,
    pub goals: Vec<Vector>,
    pub obstacles: Vec<QuadraticBarrier>,
    /// For each obstacle, the agents that hold it privately.
    pub knowledge: Vec<Vec<usize>>,
    pub formation: Vec<FormationConstraint>,
}

impl ScenarioSpec {
    pub fn n_agents(&self) -> usize {
        self.starts.len()
    }

    pub fn with_method(mut self, form: ConstraintForm, method: MethodKind) -> Self {
        self.params.form = form;
        self.params.method = method;
        self
    }

    pub fn planner_config(&self) -> Result<PlannerConfig> {
        let p = &self.params;
        let mut cfg = PlannerConfig::new(
            self.formation.clone(),
            CbfParams::new(p.gamma)?,
            DynamicsParams::new(p.dt, 2)?,
            p.r,
        );
        cfg.horizon = p.horizon;
        cfg.goal_weight = p.goal_weight;
        cfg.velocity_weight = p.velocity_weight;
        cfg.effort_weight = p.effort_weight;
        cfg.lookahead = p.lookahead;
        cfg.form = p.form;
        cfg.method = p.method;
        cfg.match_tol = p.match_tol();
        Ok(cfg)
    }

    /// Fresh world with every agent at rest at its start.
    pub fn build_world(&self) -> Result<RoundRobinWorld> {
        let joint = JointState::new(self.starts.iter().cloned().map(AgentState::at_rest).collect())?;
        let mut beliefs = vec![BeliefSet::new(self.params.match_tol()); self.n_agents()];
        for (ob, holders) in self.obstacles.iter().zip(&self.knowledge) {
            for &a in holders {
                beliefs[a].insert(ob.clone(), Provenance::Private);
            }
        }
        RoundRobinWorld::new(joint, beliefs, self.goals.clone(), self.planner_config()?)
    }

    /// Whether every agent is at its goal and nearly at rest.
    pub fn arrived(&self, world: &RoundRobinWorld) -> bool {
        let tol = self.params.goal_tol;
        world
            .joint
            .agents
            .iter()
            .zip(&self.goals)
            .all(|(a, g)| (&a.position - g).norm() < tol && a.velocity.norm() < tol)
    }
}

/// Formation offsets around the team center: a line across the direction of
/// travel for two agents, a regular polygon otherwise.
fn formation_offsets(n: usize, dist: f64, heading: &Vector) -> Vec<Vector> {
    let normal = vector(&[-heading[1], heading[0]]);
    if n == 1 {
        return vec![Vector::zeros(2)];
    }
    if n == 2 {
        return vec![&normal * (dist / 2.0), &normal * (-dist / 2.0)];
    }
    let radius = dist / (2.0 * (std::f64::consts::PI / n as f64).sin());
    let base = normal[1].atan2(normal[0]);
    (0..n)
        .map(|k| {
            let a = base + std::f64::consts::TAU * k as f64 / n as f64;
            vector(&[radius * a.cos(), radius * a.sin()])
        })
        .collect()
}

fn distance_to_segment(p: &Vector, a: &Vector, b: &Vector) -> f64 {
    let ab = b - a;
    let t = ((p - a).dot(&ab) / ab.norm_squared()).clamp(0.0, 1.0);
    (p - (a + ab * t)).norm()
}

/// Radius the demonstrator will enforce for these formation pairs.
fn inflated_radius(params: &ScenarioParams, formation: &[FormationConstraint]) -> f64 {
    match params.form {
        ConstraintForm::Cbf => formation.iter().map(|fc| demo_radius(params.r, fc)).fold(params.r, f64::max),
        ConstraintForm::Circle => params.r,
    }
}

/// Deterministic scenario for `seed`.
pub fn generate_scenario(seed: u64, params: &ScenarioParams) -> Result<ScenarioSpec> {
    params.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let [w, h] = params.arena;
    let start_center = vector(&[0.1 * w, rng.gen_range(0.3 * h..0.7 * h)]);
    let goal_center = vector(&[w, h]) - &start_center;
    let heading = (&goal_center - &start_center).normalize();
    let offsets = formation_offsets(params.n_agents, params.dist, &heading);
    let starts: Vec<Vector> = offsets.iter().map(|o| &start_center + o).collect();
    let goals: Vec<Vector> = offsets.iter().map(|o| &goal_center + o).collect();

    let mut formation = Vec::new();
    for i in 0..params.n_agents {
        for j in i + 1..params.n_agents {
            let d = (&starts[i] - &starts[j]).norm();
            formation.push(FormationConstraint::new(i, j, d, params.slack)?);
        }
    }

    let keep_out = if params.certificate {
        inflated_radius(params, &formation).max(params.r) + params.clearance
    } else {
        params.r + params.clearance
    };
    let mut obstacles: Vec<QuadraticBarrier> = Vec::new();
    let mut draws = 0;
    let mut since_last = 0;
    while obstacles.len() < params.n_obstacles {
        draws += 1;
        since_last += 1;
        if draws > MAX_DRAWS {
            return Err(Error::Placement { attempts: MAX_DRAWS });
        }
        if since_last > RESTART_AFTER {
            // Earlier picks may have boxed the rest in; start the set over.
            obstacles.clear();
            since_last = 0;
        }
        let c = vector(&[rng.gen_range(0.0..w), rng.gen_range(0.0..h)]);
        let clear = starts.iter().chain(&goals).all(|p| (p - &c).norm() >= keep_out);
        let near_path = distance_to_segment(&c, &start_center, &goal_center) <= params.path_band;
        let apart = obstacles.iter().all(|o| (&o.theta - &c).norm() >= params.separation * params.r);
        if clear && near_path && apart {
            since_last = 0;
            obstacles.push(QuadraticBarrier::circle(c, params.r)?);
        }
    }
    let knowledge = (0..obstacles.len()).map(|_| vec![rng.gen_range(0..params.n_agents)]).collect();
    Ok(ScenarioSpec { seed, params: params.clone(), starts, goals, obstacles, knowledge, formation })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::constraints::formation_values;

    #[test]
    fn deterministic_per_seed() {
        let p = ScenarioParams::default();
        assert_eq!(generate_scenario(5, &p).unwrap(), generate_scenario(5, &p).unwrap());
        assert_ne!(generate_scenario(5, &p).unwrap(), generate_scenario(6, &p).unwrap());
    }

    #[test]
    fn no_obstacles_is_valid() {
        let p = ScenarioParams { n_obstacles: 0, ..Default::default() };
        let spec = generate_scenario(1, &p).unwrap();
        assert!(spec.obstacles.is_empty());
        assert!(spec.build_world().is_ok());
    }

    #[test]
    fn invariant_audit() {
        for certificate in [false, true] {
            let p = ScenarioParams { certificate, n_obstacles: if certificate { 2 } else { 3 }, ..Default::default() };
            for seed in 0..100 {
                let spec = generate_scenario(seed, &p).unwrap();
                let keep = if certificate { 1.0 + 1.8 + p.clearance } else { p.r + p.clearance };
                for ob in &spec.obstacles {
                    for s in spec.starts.iter().chain(&spec.goals) {
                        assert!((s - &ob.theta).norm() >= keep - 1e-9);
                    }
                }
                for fc in &spec.formation {
                    let (lo, hi) = formation_values(&spec.starts[fc.i], &spec.starts[fc.j], fc);
                    assert!(lo >= 0.0 && hi >= 0.0);
                }
                assert!(spec.knowledge.iter().all(|k| k.len() == 1 && k[0] < p.n_agents));
            }
        }
    }

    #[test]
    fn polygon_formations() {
        for n in [3, 4] {
            let p = ScenarioParams { n_agents: n, dist: 1.0, n_obstacles: 0, ..Default::default() };
            let spec = generate_scenario(0, &p).unwrap();
            assert_eq!(spec.formation.len(), n * (n - 1) / 2);
            let side = (&spec.starts[0] - &spec.starts[1]).norm();
            assert!((side - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn impossible_placement_errors() {
        let p = ScenarioParams { n_obstacles: 40, ..Default::default() };
        assert_eq!(generate_scenario(0, &p), Err(Error::Placement { attempts: MAX_DRAWS }));
    }
}
