use crate::robust::{robust_radius, team_as_obstacle, TeamObstacleConfig};
use crate::{Error, Result, Vector};

use super::RoundRobinWorld;

/// Several teams stepping in lockstep, each seeing the others' centers as
/// bounded-velocity obstacles.
#[derive(Debug, Clone)]
pub struct MultiTeamWorld {
    pub teams: Vec<RoundRobinWorld>,
    pub obstacle_cfg: TeamObstacleConfig,
}

impl MultiTeamWorld {
    pub fn new(teams: Vec<RoundRobinWorld>, obstacle_cfg: TeamObstacleConfig) -> Result<Self> {
        if teams.len() < 2 {
            return Err(Error::InvalidParameter("need at least two teams".into()));
        }
        Ok(Self { teams, obstacle_cfg })
    }

    /// Radius each agent keeps from another team's center.
    pub fn robust_radius(&self, dt: f64) -> f64 {
        robust_radius(self.obstacle_cfg.r_safe, dt, self.obstacle_cfg.v_max)
    }

    pub fn centers(&self) -> Vec<Vector> {
        self.teams
            .iter()
            .map(|w| {
                let n = w.n_agents() as f64;
                w.joint.agents.iter().fold(Vector::zeros(w.joint.agents[0].dim()), |acc, a| acc + &a.position) / n
            })
            .collect()
    }

    /// Smallest distance between any two team centers right now.
    pub fn min_center_distance(&self) -> f64 {
        let c = self.centers();
        let mut best = f64::INFINITY;
        for a in 0..c.len() {
            for b in a + 1..c.len() {
                best = best.min((&c[a] - &c[b]).norm());
            }
        }
        best
    }

    pub fn step(&mut self) -> Result<()> {
        let snapshot: Vec<_> = self.teams.iter().map(|w| w.joint.agents.clone()).collect();
        for (i, team) in self.teams.iter_mut().enumerate() {
            team.moving = snapshot
                .iter()
                .enumerate()
                .filter(|(j, _)| *j != i)
                .map(|(_, agents)| team_as_obstacle(agents, &self.obstacle_cfg))
                .collect::<Result<_>>()?;
        }
        for team in &mut self.teams {
            team.step()?;
        }
        Ok(())
    }

    /// Runs `t_e` steps or until a team halts; returns the center distance after each step,
    /// starting with the initial one.
    pub fn run(&mut self, t_e: usize) -> Result<Vec<f64>> {
        let mut distances = vec![self.min_center_distance()];
        for _ in 0..t_e {
            if self.teams.iter().any(|w| w.halted().is_some()) {
                break;
            }
            self.step()?;
            distances.push(self.min_center_distance());
        }
        Ok(distances)
    }
}
