use serde::{Deserialize, Serialize};

use crate::constraints::{formation_values, ConstraintForm, QuadraticBarrier};

use super::RoundRobinWorld;

/// Premises and outcome of the decentralized safety guarantee for one rollout.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CertificateReport {
    /// The demonstrator radius covers `r + d + ε` for every formation pair.
    pub inflation_ok: bool,
    /// Every pair starts inside its formation band.
    pub initial_formation_ok: bool,
    /// Every agent starts outside the demonstrator radius by at least one step of travel.
    pub initial_clearance_ok: bool,
    /// `min ‖s − θ‖ − r` over agents, time steps and true obstacles; `+∞` without obstacles.
    pub min_margin: f64,
    pub halted: bool,
}

impl CertificateReport {
    pub fn premises_hold(&self) -> bool {
        self.inflation_ok && self.initial_formation_ok && self.initial_clearance_ok
    }

    pub fn passed(&self) -> bool {
        self.premises_hold() && !self.halted && self.min_margin >= 0.0
    }
}

/// Checks a completed rollout against the true obstacles.
pub fn check_safety_certificate(world: &RoundRobinWorld, true_obstacles: &[QuadraticBarrier]) -> CertificateReport {
    let cfg = &world.config;
    let r_demo = cfg.demo_radius();
    let inflation_ok = cfg.form == ConstraintForm::Cbf
        && cfg.formation.iter().all(|fc| r_demo + 1e-12 >= cfg.r + fc.dist + fc.slack);

    let init = world.initial_state();
    let initial_formation_ok = cfg.formation.iter().all(|fc| {
        let (lo, hi) = formation_values(&init.agents[fc.i].position, &init.agents[fc.j].position, fc);
        lo >= 0.0 && hi >= 0.0
    });
    let dt = cfg.dynamics.dt;
    let initial_clearance_ok = init.agents.iter().all(|a| {
        true_obstacles
            .iter()
            .all(|ob| (&a.position - &ob.theta).norm() >= r_demo + a.velocity.norm() * dt)
    });

    let mut min_margin = f64::INFINITY;
    for positions in world.trajectory() {
        for s in &positions {
            for ob in true_obstacles {
                min_margin = min_margin.min((s - &ob.theta).norm() - ob.r);
            }
        }
    }
    CertificateReport {
        inflation_ok,
        initial_formation_ok,
        initial_clearance_ok,
        min_margin,
        halted: world.halted().is_some(),
    }
}
