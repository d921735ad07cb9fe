//! One team running the demonstrator/learner protocol.
//!
//! At step `t` agent `t mod N` demonstrates: it filters against the nearest
//! obstacle in its full belief set at the inflated radius. Everyone else learns:
//! they filter against public and inferred obstacles only, and first try to
//! explain the demonstrator's deviation from the previous step.

use serde::{Deserialize, Serialize};

use crate::constraints::{q_norm_sq, QuadraticBarrier};
use crate::dynamics::{next_position, step, JointState};
use crate::inference::{rejection_pipeline, InferenceConfig, InferenceMethod, Observation, Verdict};
use crate::robust::MovingObstacle;
use crate::safety_filter::{solve, ActiveSet, FilterProblem, FilterSolution};
use crate::{Error, Result, Vector};

use super::{nominal_plan, BeliefSet, PlannerConfig, Provenance};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Demonstrator,
    Learner,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InferenceRecord {
    pub source_agent: usize,
    pub verdict: Verdict,
    pub theta_hat: Option<Vector>,
    pub iterations: usize,
    pub final_residual: f64,
    /// Whether the estimate was new to the learner's belief set.
    pub added: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentStepRecord {
    pub agent: usize,
    pub role: Role,
    pub position: Vector,
    pub velocity: Vector,
    pub u_nom: Vector,
    pub u_safe: Vector,
    pub active_set: ActiveSet,
    pub lambda: f64,
    pub nu: f64,
    /// Center of the obstacle the filter was given, if any.
    pub obstacle: Option<Vector>,
    pub inference: Option<InferenceRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub t: usize,
    pub demonstrator: usize,
    pub agents: Vec<AgentStepRecord>,
    pub failure: Option<String>,
}

/// The demonstrator's last filtered step, as learners will see it.
#[derive(Debug, Clone, PartialEq)]
struct PendingObservation {
    demonstrator: usize,
    time: usize,
    obs: Observation,
    active: ActiveSet,
    moving_centers: Vec<Vector>,
}

#[derive(Debug, Clone)]
pub struct RoundRobinWorld {
    pub joint: JointState,
    pub beliefs: Vec<BeliefSet>,
    pub goals: Vec<Vector>,
    pub config: PlannerConfig,
    /// Bounded-velocity obstacles every agent can see, e.g. another team.
    pub moving: Vec<MovingObstacle>,
    pub log: Vec<StepRecord>,
    initial: JointState,
    inference_cfg: InferenceConfig,
    pending: Option<PendingObservation>,
    halted: Option<String>,
}

impl RoundRobinWorld {
    pub fn new(joint: JointState, beliefs: Vec<BeliefSet>, goals: Vec<Vector>, config: PlannerConfig) -> Result<Self> {
        config.validate()?;
        let n = joint.len();
        if n == 0 || beliefs.len() != n || goals.len() != n {
            return Err(Error::InvalidParameter(format!(
                "world needs matching agents, beliefs and goals ({n}, {}, {})",
                beliefs.len(),
                goals.len()
            )));
        }
        for fc in &config.formation {
            if fc.i >= n || fc.j >= n {
                return Err(Error::InvalidParameter(format!("formation pair ({}, {}) out of range", fc.i, fc.j)));
            }
        }
        let inference_cfg = config.inference_config()?;
        Ok(Self {
            initial: joint.clone(),
            joint,
            beliefs,
            goals,
            config,
            moving: Vec::new(),
            log: Vec::new(),
            inference_cfg,
            pending: None,
            halted: None,
        })
    }

    pub fn n_agents(&self) -> usize {
        self.joint.len()
    }

    pub fn time(&self) -> usize {
        self.joint.time_index
    }

    pub fn demonstrator_at(&self, t: usize) -> usize {
        t % self.n_agents()
    }

    pub fn initial_state(&self) -> &JointState {
        &self.initial
    }

    pub fn halted(&self) -> Option<&str> {
        self.halted.as_deref()
    }

    /// Positions at every time index so far, initial state included.
    pub fn trajectory(&self) -> Vec<Vec<Vector>> {
        let mut out: Vec<Vec<Vector>> =
            self.log.iter().map(|rec| rec.agents.iter().map(|a| a.position.clone()).collect()).collect();
        if self.log.last().is_none_or(|rec| rec.failure.is_none()) {
            out.push(self.joint.positions());
        }
        out
    }

    /// Runs the learners' inference on the previous demonstration.
    fn infer(&mut self, t: usize) -> Vec<Option<InferenceRecord>> {
        let n = self.n_agents();
        let mut records = vec![None; n];
        let Some(p) = self.pending.take() else { return records };
        if p.obs.u_safe == p.obs.u_nom {
            return records;
        }
        for (j, record) in records.iter_mut().enumerate() {
            if j == p.demonstrator {
                continue;
            }
            let mut known = self.beliefs[j].clone();
            for c in &p.moving_centers {
                known.insert(QuadraticBarrier::circle(c.clone(), self.config.r).expect("radius"), Provenance::Public);
            }
            let method = match self.config.method {
                crate::coordinator::MethodKind::Kkt => InferenceMethod::Kkt,
                crate::coordinator::MethodKind::InputMatching => {
                    InferenceMethod::InputMatching { theta0: self.joint.agents[j].position.clone() }
                }
            };
            let res = rejection_pipeline(&p.obs, &known, &p.active, &self.inference_cfg, &method);
            let mut added = false;
            if let Some(theta) = &res.theta_hat {
                let barrier = QuadraticBarrier::circle(theta.clone(), self.config.r).expect("radius");
                added = self.beliefs[j].insert(barrier, Provenance::Inferred { source_agent: p.demonstrator, time: p.time });
            }
            log::debug!("t={t} learner {j}: {}", res.verdict.as_str());
            *record = Some(InferenceRecord {
                source_agent: p.demonstrator,
                verdict: res.verdict,
                theta_hat: res.theta_hat,
                iterations: res.iterations,
                final_residual: res.final_residual,
                added,
            });
        }
        records
    }

    fn nearest(&self, s: &Vector, statics: impl Iterator<Item = QuadraticBarrier>) -> Result<Option<QuadraticBarrier>> {
        let mut best: Option<(f64, QuadraticBarrier)> = None;
        let dt = self.config.dynamics.dt;
        let moving = self.moving.iter().map(|m| m.robust_barrier(dt)).collect::<Result<Vec<_>>>()?;
        for b in statics.chain(moving) {
            let gap = q_norm_sq(&(s - &b.theta), &b.q).sqrt() - b.r;
            if best.as_ref().is_none_or(|(g, _)| gap < *g) {
                best = Some((gap, b));
            }
        }
        Ok(best.map(|(_, b)| b))
    }

    fn filter_problem(&self, i: usize, u_nom: &Vector, barrier: Option<QuadraticBarrier>, partner_next: &[Vector]) -> FilterProblem {
        let a = &self.joint.agents[i];
        let mut problem = FilterProblem::new(a.position.clone(), a.velocity.clone(), u_nom.clone(), self.config.cbf, self.config.dynamics)
            .with_form(self.config.form);
        if let Some(b) = barrier {
            problem = problem.with_barrier(b);
        }
        for fc in &self.config.formation {
            if let Some(p) = fc.partner_of(i) {
                problem = problem.with_formation(*fc, partner_next[p].clone());
            }
        }
        if let Some(vb) = self.config.vel_bound {
            problem = problem.with_velocity_bound(vb);
        }
        problem
    }

    /// Advances the world by one step. A filter failure halts the world and is
    /// recorded in the log rather than returned.
    pub fn step(&mut self) -> Result<&StepRecord> {
        if let Some(reason) = &self.halted {
            return Err(Error::Config(format!("world halted: {reason}")));
        }
        let t = self.time();
        let n = self.n_agents();
        let k = self.demonstrator_at(t);
        let inferences = self.infer(t);
        let u_nom = nominal_plan(&self.joint, &self.goals, &self.config);
        let dynamics = self.config.dynamics;

        let mut next: Vec<Vector> = self
            .joint
            .agents
            .iter()
            .zip(&u_nom)
            .map(|(a, u)| next_position(&a.position, &a.velocity, u, &dynamics))
            .collect();
        let mut solutions: Vec<Option<(FilterProblem, FilterSolution)>> = vec![None; n];
        let mut failure = None;

        let order = (0..n).filter(|&j| j != k).chain(std::iter::once(k));
        for i in order {
            let s = &self.joint.agents[i].position;
            let barrier = if i == k {
                let r_demo = self.config.demo_radius();
                let statics = self.beliefs[i].entries().iter().map(|e| e.barrier.with_radius(r_demo).expect("radius"));
                self.nearest(s, statics)?
            } else {
                let statics = self.beliefs[i]
                    .entries()
                    .iter()
                    .filter(|e| !matches!(e.provenance, Provenance::Private))
                    .map(|e| e.barrier.clone());
                self.nearest(s, statics)?
            };
            let problem = self.filter_problem(i, &u_nom[i], barrier, &next);
            match solve(&problem) {
                Ok(sol) => {
                    next[i] = problem.next_position(&sol.u_safe);
                    solutions[i] = Some((problem, sol));
                }
                Err(e) => {
                    failure = Some(format!("agent {i}: {e}"));
                    break;
                }
            }
        }

        let agents = (0..n)
            .map(|i| {
                let a = &self.joint.agents[i];
                let (u_safe, active_set, lambda, nu, obstacle) = match &solutions[i] {
                    Some((p, sol)) => (
                        sol.u_safe.clone(),
                        sol.active_set,
                        sol.lambda_obs,
                        sol.nu_form,
                        p.barrier.as_ref().map(|b| b.theta.clone()),
                    ),
                    None => (u_nom[i].clone(), ActiveSet::default(), 0.0, 0.0, None),
                };
                AgentStepRecord {
                    agent: i,
                    role: if i == k { Role::Demonstrator } else { Role::Learner },
                    position: a.position.clone(),
                    velocity: a.velocity.clone(),
                    u_nom: u_nom[i].clone(),
                    u_safe,
                    active_set,
                    lambda,
                    nu,
                    obstacle,
                    inference: inferences[i].clone(),
                }
            })
            .collect();

        if failure.is_none() {
            let (problem, sol) = solutions[k].as_ref().expect("demonstrator solved");
            self.pending = Some(PendingObservation {
                demonstrator: k,
                time: t,
                obs: Observation::from_filter(problem, sol),
                active: sol.active_set,
                moving_centers: self.moving.iter().map(|m| m.center.clone()).collect(),
            });
            for (agent, (_, sol)) in self.joint.agents.iter_mut().zip(solutions.iter().flatten()) {
                *agent = step(agent, &sol.u_safe, &dynamics)?;
            }
            self.joint.time_index += 1;
        } else {
            self.halted = failure.clone();
        }
        self.log.push(StepRecord { t, demonstrator: k, agents, failure });
        Ok(self.log.last().expect("just pushed"))
    }

    /// Steps until `t_e` steps have run or the world halts.
    pub fn run(&mut self, t_e: usize) -> Result<()> {
        while self.time() < t_e && self.halted.is_none() {
            self.step()?;
        }
        Ok(())
    }
}

/// Functional form of [`RoundRobinWorld::step`].
pub fn round_robin_step(mut world: RoundRobinWorld) -> Result<RoundRobinWorld> {
    world.step()?;
    Ok(world)
}
